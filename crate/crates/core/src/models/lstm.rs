use super::{dot, sigmoid, Backward, LstmConfig, ParamSet};
use crate::embeddings::{EmbeddingMatrix, PAD};

/// Gate order: input, forget, output, candidate.
pub(super) const GATES: [&str; 4] = ["i", "f", "o", "g"];

struct Step {
    row: usize,
    gates: [Vec<f64>; 4],
    c: Vec<f64>,
    h: Vec<f64>,
}

/// `a += x^T W` for `W` of shape `[x.len(), a.len()]`.
fn accumulate(a: &mut [f64], x: &[f64], w: &[f64]) {
    let n = a.len();
    for (j, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (av, wv) in a.iter_mut().zip(&w[j * n..(j + 1) * n]) {
            *av += xv * wv;
        }
    }
}

/// Unidirectional single-layer LSTM over the non-PAD positions; the final
/// hidden state feeds a dense sigmoid unit. Backward is full BPTT.
pub(super) fn run(
    cfg: &LstmConfig,
    params: &ParamSet,
    seq: &[usize],
    emb: &EmbeddingMatrix,
    backward: Option<Backward<'_>>,
) -> f64 {
    let hs = cfg.hidden;
    let d = emb.dim();
    let w: Vec<&[f64]> = GATES.iter().map(|g| params.get(&format!("w_{g}"))).collect();
    let u: Vec<&[f64]> = GATES.iter().map(|g| params.get(&format!("u_{g}"))).collect();
    let b: Vec<&[f64]> = GATES.iter().map(|g| params.get(&format!("b_{g}"))).collect();

    let mut h = vec![0.0; hs];
    let mut c = vec![0.0; hs];
    let mut steps: Vec<Step> = Vec::new();
    for &row in seq.iter().filter(|&&r| r != PAD) {
        let x = emb.row(row);
        let mut gates: [Vec<f64>; 4] = Default::default();
        for k in 0..4 {
            let mut a = b[k].to_vec();
            accumulate(&mut a, x, w[k]);
            accumulate(&mut a, &h, u[k]);
            if k == 3 {
                a.iter_mut().for_each(|v| *v = v.tanh());
            } else {
                a.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            gates[k] = a;
        }
        let [ig, fg, og, gg] = &gates;
        for n in 0..hs {
            c[n] = fg[n] * c[n] + ig[n] * gg[n];
            h[n] = og[n] * c[n].tanh();
        }
        if backward.is_some() {
            steps.push(Step { row, gates, c: c.clone(), h: h.clone() });
        }
    }
    let dense_w = params.get("dense.weight");
    let p = sigmoid(dot(dense_w, &h) + params.get("dense.bias")[0]);

    let Some(Backward { target, scale, grads }) = backward else {
        return p;
    };
    let dz = scale * (p - target);
    for (g, hv) in grads.params.get_mut("dense.weight").iter_mut().zip(&h) {
        *g += dz * hv;
    }
    grads.params.get_mut("dense.bias")[0] += dz;

    let track = grads.embeddings.is_some();
    let mut dh: Vec<f64> = dense_w.iter().map(|wv| dz * wv).collect();
    let mut dc = vec![0.0; hs];
    let zero = vec![0.0; hs];
    let mut da: [Vec<f64>; 4] = Default::default();
    for t in (0..steps.len()).rev() {
        let st = &steps[t];
        let (c_prev, h_prev) = if t == 0 { (&zero, &zero) } else { (&steps[t - 1].c, &steps[t - 1].h) };
        let [ig, fg, og, gg] = &st.gates;
        for d in &mut da {
            *d = vec![0.0; hs];
        }
        for n in 0..hs {
            let tc = st.c[n].tanh();
            let d_o = dh[n] * tc;
            dc[n] += dh[n] * og[n] * (1.0 - tc * tc);
            let d_i = dc[n] * gg[n];
            let d_g = dc[n] * ig[n];
            let d_f = dc[n] * c_prev[n];
            da[0][n] = d_i * ig[n] * (1.0 - ig[n]);
            da[1][n] = d_f * fg[n] * (1.0 - fg[n]);
            da[2][n] = d_o * og[n] * (1.0 - og[n]);
            da[3][n] = d_g * (1.0 - gg[n] * gg[n]);
            dc[n] *= fg[n];
        }
        let x = emb.row(st.row);
        let mut dh_prev = vec![0.0; hs];
        let mut dx = vec![0.0; if track { d } else { 0 }];
        for (k, gate) in GATES.iter().enumerate() {
            let gw = grads.params.get_mut(&format!("w_{gate}"));
            for j in 0..d {
                if x[j] == 0.0 {
                    continue;
                }
                for n in 0..hs {
                    gw[j * hs + n] += x[j] * da[k][n];
                }
            }
            let gu = grads.params.get_mut(&format!("u_{gate}"));
            for m in 0..hs {
                if h_prev[m] == 0.0 {
                    continue;
                }
                for n in 0..hs {
                    gu[m * hs + n] += h_prev[m] * da[k][n];
                }
            }
            for (gb, a) in grads.params.get_mut(&format!("b_{gate}")).iter_mut().zip(&da[k]) {
                *gb += a;
            }
            for m in 0..hs {
                dh_prev[m] += dot(&u[k][m * hs..(m + 1) * hs], &da[k]);
            }
            if track {
                for j in 0..d {
                    dx[j] += dot(&w[k][j * hs..(j + 1) * hs], &da[k]);
                }
            }
        }
        if track {
            grads.add_input(st.row, &dx, 1.0);
        }
        dh = dh_prev;
    }
    p
}

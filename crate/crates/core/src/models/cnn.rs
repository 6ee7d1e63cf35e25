use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{dot, sigmoid, Backward, CnnConfig, ParamSet};
use crate::embeddings::EmbeddingMatrix;

#[cfg(test)]
pub(super) fn feature_map_lengths(widths: &[usize], len: usize) -> Vec<usize> {
    widths.iter().map(|&h| len + 1 - h).collect()
}

/// Valid convolution per width, ReLU, max-over-time pooling, inverted
/// dropout on the pooled vector in train mode, dense layer, sigmoid.
///
/// Weight layout for width `h`: `[offset][input coord][filter]`.
pub(super) fn run(
    cfg: &CnnConfig,
    params: &ParamSet,
    seq: &[usize],
    emb: &EmbeddingMatrix,
    dropout_rng: Option<&mut ChaCha8Rng>,
    backward: Option<Backward<'_>>,
) -> f64 {
    let d = emb.dim();
    let nf = cfg.filters;
    let len = seq.len();
    let rows: Vec<&[f64]> = seq.iter().map(|&i| emb.row(i)).collect();

    // pooled value and argmax position per (width, filter)
    let mut pooled = vec![0.0; cfg.widths.len() * nf];
    let mut argmax = vec![0usize; pooled.len()];
    let mut acc = vec![0.0; nf];
    for (wi, &h) in cfg.widths.iter().enumerate() {
        let w = params.get(&format!("conv{h}.weight"));
        let b = params.get(&format!("conv{h}.bias"));
        let out = &mut pooled[wi * nf..(wi + 1) * nf];
        let arg = &mut argmax[wi * nf..(wi + 1) * nf];
        out.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
        for t in 0..=(len - h) {
            acc.copy_from_slice(b);
            for (i, row) in rows[t..t + h].iter().enumerate() {
                for (j, &x) in row.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    let wr = &w[(i * d + j) * nf..(i * d + j + 1) * nf];
                    for (a, &wv) in acc.iter_mut().zip(wr) {
                        *a += x * wv;
                    }
                }
            }
            for f in 0..nf {
                let r = acc[f].max(0.0);
                if r > out[f] {
                    out[f] = r;
                    arg[f] = t;
                }
            }
        }
    }

    let mask: Option<Vec<f64>> = match dropout_rng {
        Some(rng) if cfg.dropout > 0.0 => {
            let keep = 1.0 - cfg.dropout;
            Some((0..pooled.len()).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect())
        }
        _ => None,
    };
    let features: Vec<f64> = match &mask {
        Some(m) => pooled.iter().zip(m).map(|(p, m)| p * m).collect(),
        None => pooled.clone(),
    };
    let dense_w = params.get("dense.weight");
    let z = dot(dense_w, &features) + params.get("dense.bias")[0];
    let p = sigmoid(z);

    let Some(Backward { target, scale, grads }) = backward else {
        return p;
    };
    let dz = scale * (p - target);
    for (g, f) in grads.params.get_mut("dense.weight").iter_mut().zip(&features) {
        *g += dz * f;
    }
    grads.params.get_mut("dense.bias")[0] += dz;

    let track = grads.embeddings.is_some();
    let mut dx = vec![vec![0.0; d]; if track { len } else { 0 }];
    for (wi, &h) in cfg.widths.iter().enumerate() {
        let wname = format!("conv{h}.weight");
        let bname = format!("conv{h}.bias");
        let w = params.get(&wname).to_vec();
        for f in 0..nf {
            let k = wi * nf + f;
            // ReLU gradient is zero unless the winning activation is positive
            if pooled[k] <= 0.0 {
                continue;
            }
            let m = mask.as_ref().map_or(1.0, |m| m[k]);
            let da = dz * dense_w[k] * m;
            if da == 0.0 {
                continue;
            }
            let t = argmax[k];
            grads.params.get_mut(&bname)[f] += da;
            let gw = grads.params.get_mut(&wname);
            for i in 0..h {
                let row = rows[t + i];
                for j in 0..d {
                    gw[(i * d + j) * nf + f] += da * row[j];
                }
                if track {
                    for j in 0..d {
                        dx[t + i][j] += da * w[(i * d + j) * nf + f];
                    }
                }
            }
        }
    }
    if track {
        for (t, g) in dx.iter().enumerate() {
            grads.add_input(seq[t], g, 1.0);
        }
    }
    p
}

use super::{dot, sigmoid, Backward, FastTextConfig, ParamSet};
use crate::embeddings::{EmbeddingMatrix, PAD};

/// Stable bucket for a token-index bigram.
pub(super) fn bigram_bucket(a: usize, b: usize, buckets: usize) -> usize {
    // splitmix64 finalizer over the packed pair
    let mut z = (a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (b as u64);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z % buckets as u64) as usize
}

/// Mean of the non-PAD token vectors (and hashed bigram vectors when
/// enabled), then a linear unit and sigmoid. No tokens gives a zero mean.
pub(super) fn run(
    cfg: &FastTextConfig,
    params: &ParamSet,
    seq: &[usize],
    emb: &EmbeddingMatrix,
    backward: Option<Backward<'_>>,
) -> f64 {
    let d = emb.dim();
    let tokens: Vec<usize> = seq.iter().copied().filter(|&r| r != PAD).collect();
    let bigrams: Vec<usize> = match cfg.bigram_buckets {
        Some(nb) => tokens.windows(2).map(|p| bigram_bucket(p[0], p[1], nb)).collect(),
        None => Vec::new(),
    };
    let count = tokens.len() + bigrams.len();
    let mut mean = vec![0.0; d];
    if count > 0 {
        for &t in &tokens {
            for (m, v) in mean.iter_mut().zip(emb.row(t)) {
                *m += v;
            }
        }
        if !bigrams.is_empty() {
            let table = params.get("bigram.embedding");
            for &bk in &bigrams {
                for (m, v) in mean.iter_mut().zip(&table[bk * d..(bk + 1) * d]) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
    }
    let w = params.get("linear.weight");
    let p = sigmoid(dot(w, &mean) + params.get("linear.bias")[0]);

    let Some(Backward { target, scale, grads }) = backward else {
        return p;
    };
    let dz = scale * (p - target);
    for (g, m) in grads.params.get_mut("linear.weight").iter_mut().zip(&mean) {
        *g += dz * m;
    }
    grads.params.get_mut("linear.bias")[0] += dz;
    if count == 0 {
        return p;
    }
    let dmean: Vec<f64> = w.iter().map(|wv| dz * wv / count as f64).collect();
    if !bigrams.is_empty() {
        let gt = grads.params.get_mut("bigram.embedding");
        for &bk in &bigrams {
            for (g, dm) in gt[bk * d..(bk + 1) * d].iter_mut().zip(&dmean) {
                *g += dm;
            }
        }
    }
    for &t in &tokens {
        grads.add_input(t, &dmean, 1.0);
    }
    p
}

#![no_main]
use libfuzzer_sys::fuzz_target;
use poltweet::embeddings::EmbeddingMatrix;
use poltweet::models::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(ck) = Checkpoint::from_slice(data) else { return };
    let model = ck.model();
    let emb = match ck.fine_tuned_embeddings() {
        Some(m) => m,
        None if ck.vocabulary_size.saturating_mul(ck.embedding_dim) <= 1 << 20 => {
            EmbeddingMatrix::zeros(ck.vocabulary_size, ck.embedding_dim)
        }
        None => return,
    };
    if emb.rows() < 2 {
        return;
    }
    let seq = vec![1usize; ck.architecture.min_len().clamp(1, 64)];
    if let Ok(p) = model.predict(&seq, &emb) {
        assert!(p.probability.is_nan() || (0.0..=1.0).contains(&p.probability));
    }
});

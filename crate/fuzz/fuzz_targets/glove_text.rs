#![no_main]
use libfuzzer_sys::fuzz_target;
use poltweet::embeddings::load_glove_text;

fuzz_target!(|data: &[u8]| {
    if let Ok(e) = load_glove_text(data, None) {
        assert_eq!(e.vocab.len(), e.matrix.rows());
    }
});

#![no_main]
use libfuzzer_sys::fuzz_target;
use poltweet::corpus::{normalize, Stopwords};
use std::sync::OnceLock;

fuzz_target!(|data: &[u8]| {
    static SW: OnceLock<Stopwords> = OnceLock::new();
    let sw = SW.get_or_init(Stopwords::bundled);
    let Ok(s) = std::str::from_utf8(data) else { return };
    let once = normalize(s, sw);
    for t in &once {
        assert!(t.chars().count() >= 2);
        assert!(!sw.contains(t));
        assert!(!t.chars().any(char::is_whitespace));
    }
    assert_eq!(normalize(&once.join(" "), sw), once);
});

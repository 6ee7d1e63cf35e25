#![no_main]
use libfuzzer_sys::fuzz_target;
use poltweet::btm::BtmModel;

fuzz_target!(|data: &[u8]| {
    let Ok(m) = BtmModel::from_slice(data) else { return };
    for z in 0..m.k {
        let _ = m.top_words(z, 5);
    }
    let m_size = m.vocabulary.len();
    let doc: Vec<usize> = (0..m_size.min(4)).collect();
    let theta = m.infer_document(&doc);
    assert_eq!(theta.len(), m.k);
});

#![no_main]
use libfuzzer_sys::fuzz_target;
use poltweet::corpus::read_deputies;

fuzz_target!(|data: &[u8]| {
    if let Ok((deputies, _errors)) = read_deputies(data) {
        for (id, d) in &deputies {
            assert_eq!(id, &d.id);
        }
    }
});

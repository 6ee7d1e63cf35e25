#![no_main]
use libfuzzer_sys::fuzz_target;
use poltweet::corpus::read_tweets;

fuzz_target!(|data: &[u8]| {
    let Ok((tweets, errors)) = read_tweets(data) else { return };
    // every non-blank line is accounted for exactly once
    let lines =
        data.split(|&b| b == b'\n').filter(|l| std::str::from_utf8(l).map_or(true, |s| !s.trim().is_empty())).count();
    assert_eq!(tweets.len() + errors.len(), lines);
});

#![no_main]

use gridstate::noise::{parse_jsonl, write_jsonl};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ms) = parse_jsonl(text) {
        let again = parse_jsonl(&write_jsonl(&ms)).expect("written measurements parse");
        assert_eq!(ms, again);
    }
});

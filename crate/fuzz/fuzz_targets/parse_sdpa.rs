#![no_main]

use gridstate::sdp::{export_sdpa, parse_sdpa};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sdp) = parse_sdpa(text) {
        let again = parse_sdpa(&export_sdpa(&sdp)).expect("exported problem parses");
        assert_eq!(sdp.c, again.c);
        assert_eq!(sdp.block_sizes, again.block_sizes);
        assert_eq!(sdp.mats, again.mats);
    }
});

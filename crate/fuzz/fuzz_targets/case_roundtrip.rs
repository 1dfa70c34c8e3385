#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(net) = gridstate::parse_case(text) else { return };
    let back = gridstate::parse_case(&gridstate::emit_case(&net)).expect("emitted case parses");
    assert!(net.approx_eq(&back, 1e-9));
});

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(net) = gridstate::parse_case(text) {
            // Anything that parses must also assemble.
            let y = gridstate::build_bus_admittance(&net);
            assert_eq!(y.nrows(), net.n_buses());
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // an accepted topology must survive its own serializer
        if let Ok((topo, _)) = twinline::ingest::parse_topology(text) {
            let again = twinline::ingest::parse_topology(&topo.to_toml_string()).expect("round trip");
            assert_eq!(again.0, topo);
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use stagewise::harness::{parse_metadata, ExperimentConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(pairs) = parse_metadata(line) {
        let _ = ExperimentConfig::from_pairs(&pairs);
    }
});

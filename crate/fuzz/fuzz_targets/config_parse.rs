#![no_main]

use libfuzzer_sys::fuzz_target;
use stagewise::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::parse(text) {
        // The echo must parse back to the same config.
        let again = ExperimentConfig::from_pairs(&cfg.to_pairs()).expect("echo reparses");
        assert_eq!(again.to_pairs(), cfg.to_pairs());
    }
});

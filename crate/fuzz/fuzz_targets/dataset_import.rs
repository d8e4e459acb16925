#![no_main]

use libfuzzer_sys::fuzz_target;
use stagewise::spheredata::Dataset;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ds) = Dataset::from_text(text) {
        let again = Dataset::from_text(&ds.to_text()).expect("export reimports");
        assert_eq!(again.n(), ds.n());
        assert_eq!(again.d(), ds.d());
    }
});

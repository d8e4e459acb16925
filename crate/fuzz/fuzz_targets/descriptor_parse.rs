#![no_main]

use libfuzzer_sys::fuzz_target;
use stagewise::spheredata::TargetFunction;
use stagewise::Activation;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(a) = text.parse::<Activation>() {
        let _ = a.eval(0.5);
        let back: Activation = a.to_string().parse().expect("display reparses");
        assert_eq!(back.to_string(), a.to_string());
    }
    if let Ok(t) = text.parse::<TargetFunction>() {
        let _ = t.to_string().parse::<TargetFunction>().expect("display reparses");
    }
});

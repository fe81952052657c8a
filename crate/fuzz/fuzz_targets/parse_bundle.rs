#![no_main]
use heatctl_core::bundle::Bundle;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(bundle) = Bundle::from_toml_str(text) {
        bundle.validate().expect("accepted bundle must validate");
        let again = Bundle::from_toml_str(&bundle.to_toml_string()).expect("re-serialized bundle parses");
        assert_eq!(again, bundle);
        let _ = bundle.observer_gain();
        let _ = bundle.witness();
    }
});

#![no_main]
use heatctl_core::config::RunConfig;
use libfuzzer_sys::fuzz_target;

// Anything the parser accepts must validate, re-serialize to itself and hash
// the same way twice.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::from_toml_str(text) {
        cfg.validate().expect("accepted config must validate");
        cfg.domain().expect("accepted config has a domain");
        let again = RunConfig::from_toml_str(&cfg.to_toml_string()).expect("re-serialized config parses");
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }
});

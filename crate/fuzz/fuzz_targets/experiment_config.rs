#![no_main]

use homeflex::harness::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml(text) {
        let _ = cfg.check();
        if let Ok(written) = cfg.to_toml() {
            let again = ExperimentConfig::from_toml(&written).expect("written config parses");
            assert_eq!(again.to_toml().unwrap(), written);
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use nica_cli::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let violations = cfg.violations();
        if violations.is_empty() {
            let _ = cfg.methods();
            let _ = cfg.hash();
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use nica_cli::Fixtures;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(f) = Fixtures::from_json(text) {
        let _ = f.to_json();
        for key in f.metrics.keys() {
            let _ = f.metric(key);
        }
    }
});

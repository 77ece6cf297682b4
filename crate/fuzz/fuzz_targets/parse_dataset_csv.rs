#![no_main]

use libfuzzer_sys::fuzz_target;
use nica::datagen::io::{read_csv, write_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = read_csv(data) {
        let mut out = Vec::new();
        write_csv(&ds, &mut out).expect("parsed datasets serialize");
        let again = read_csv(out.as_slice()).expect("written datasets parse");
        assert_eq!(again.x, ds.x);
    }
});

#![no_main]
use libfuzzer_sys::fuzz_target;

use csgs::Dataset;

fuzz_target!(|data: &[u8]| {
    for header in [false, true] {
        if let Ok(d) = Dataset::read_csv(data, header) {
            let mut out = Vec::new();
            d.write_csv(&mut out).expect("writing a parsed dataset");
            let back = Dataset::read_csv(out.as_slice(), true).expect("re-reading written CSV");
            assert_eq!(back.num_rows(), d.num_rows());
        }
    }
});

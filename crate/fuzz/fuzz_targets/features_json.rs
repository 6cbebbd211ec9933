#![no_main]
use libfuzzer_sys::fuzz_target;

use csgs::io::features_from_json;

fuzz_target!(|input: &str| {
    let _ = features_from_json(input);
});

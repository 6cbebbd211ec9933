#![no_main]
use libfuzzer_sys::fuzz_target;

use csgs::io::{structure_from_json, structure_to_json};

fuzz_target!(|input: &str| {
    if let Ok(s) = structure_from_json(input) {
        let text = structure_to_json(&s).unwrap();
        assert_eq!(structure_from_json(&text).unwrap(), s);
    }
});

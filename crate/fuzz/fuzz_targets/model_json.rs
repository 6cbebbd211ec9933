#![no_main]
use libfuzzer_sys::fuzz_target;

use csgs::io::{model_from_json, model_to_json};

fuzz_target!(|input: &str| {
    if let Ok(m) = model_from_json(input) {
        let back = model_from_json(&model_to_json(&m).unwrap()).unwrap();
        assert_eq!(back.features(), m.features());
    }
});

#![no_main]
use libfuzzer_sys::fuzz_target;

use csgs_cli::sweep::Sweep;

fuzz_target!(|input: &str| {
    if let Ok(s) = Sweep::parse(input) {
        let _ = s.cells();
    }
});

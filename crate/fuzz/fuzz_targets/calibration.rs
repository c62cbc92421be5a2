#![no_main]

use libfuzzer_sys::fuzz_target;
use sketchbench::calibration::Calibration;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = Calibration::parse(text) {
            assert!(c.universality_factor > 0.0 && c.lowdist_terms > 0);
        }
    }
});

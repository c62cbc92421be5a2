#![no_main]

use libfuzzer_sys::fuzz_target;
use sketchbench::sketch::{sketch_from_parts, SketchSidecar};

// Input is `<coordinate mtx>\0<sidecar json>`.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (mtx, car) = text.split_once('\0').unwrap_or((text, ""));
    let _ = SketchSidecar::parse(car);
    if let Ok(s) = sketch_from_parts(mtx, car) {
        assert!(s.matrix().validate().is_ok());
    }
});

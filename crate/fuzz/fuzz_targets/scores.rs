#![no_main]

use libfuzzer_sys::fuzz_target;
use sketchbench::leverage::{decode_scores, ScoresMeta};

// First line is the metadata JSON, the rest is the little-endian payload.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == b'\n').unwrap_or(data.len());
    let Ok(head) = std::str::from_utf8(&data[..split]) else { return };
    let Ok(meta) = ScoresMeta::parse(head) else { return };
    let payload = data.get(split + 1..).unwrap_or(&[]);
    if let Ok(set) = decode_scores(payload, &meta) {
        assert_eq!(set.len(), meta.n);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use sketchbench::linalg::mtx::{parse_matrix_market, write_array, write_coordinate, MtxMatrix};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(m) = parse_matrix_market(text) else { return };
    // Whatever parses must survive a write and a second parse unchanged.
    let again = match &m {
        MtxMatrix::Dense(d) => write_array(d),
        MtxMatrix::Sparse(s) => write_coordinate(s),
    };
    let back = parse_matrix_market(&again).expect("re-parse of written text");
    assert_eq!(back.shape(), m.shape());
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use prqr_core::data_model::{parse_schema, validate_schema};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cols) = parse_schema(text) {
        validate_schema(&cols).expect("parse_schema validates");
    }
});

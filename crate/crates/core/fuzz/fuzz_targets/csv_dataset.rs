#![no_main]

use libfuzzer_sys::fuzz_target;
use prqr_core::data_model::parse_schema;
use prqr_core::ingest::{read_csv, LoadOptions};

fuzz_target!(|data: &[u8]| {
    // Schema inference path.
    if let Ok(ds) = read_csv(data, None, LoadOptions::default()) {
        assert!(ds.timestamps().windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(ds.target().len(), ds.len());
    }
    let _ = read_csv(
        data,
        None,
        LoadOptions {
            encode_categorical: false,
        },
    );

    // Explicit schema taken from the first line, CSV from the rest.
    if let Some(split) = data.iter().position(|&b| b == 0) {
        if let Ok(text) = std::str::from_utf8(&data[..split]) {
            if let Ok(schema) = parse_schema(text) {
                let _ = read_csv(&data[split + 1..], Some(&schema), LoadOptions::default());
            }
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use prqr_core::ridge::{decode_state, encode_state};

fuzz_target!(|data: &[u8]| {
    if let Ok(state) = decode_state(data) {
        // Anything accepted must re-encode to the same bytes.
        assert_eq!(encode_state(&state), data);
        let x = vec![0.0; state.width()];
        let _ = state.predict(&x);
    }
});

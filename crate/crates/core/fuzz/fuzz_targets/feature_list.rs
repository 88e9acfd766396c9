#![no_main]

use libfuzzer_sys::fuzz_target;
use prqr_core::feature_select::{parse_feature_list, FeatureVariant};
use prqr_core::QuantizerMode;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for name in parse_feature_list(text) {
        assert!(!name.is_empty());
    }
    if let Ok(v) = text.parse::<FeatureVariant>() {
        assert_eq!(v.to_string().parse::<FeatureVariant>().unwrap(), v);
    }
    if let Ok(m) = text.parse::<QuantizerMode>() {
        assert_eq!(m.to_string().parse::<QuantizerMode>().unwrap(), m);
    }
});

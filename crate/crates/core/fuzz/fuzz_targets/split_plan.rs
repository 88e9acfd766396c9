#![no_main]

use libfuzzer_sys::fuzz_target;
use prqr_core::temporal::read_split_plan;

fuzz_target!(|data: &[u8]| {
    if let Ok(plan) = read_split_plan(data) {
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).unwrap();
        assert_eq!(read_split_plan(buf.as_slice()).unwrap(), plan);
        assert_eq!(plan.roles().len(), plan.len());
    }
});

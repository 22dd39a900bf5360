#![no_main]

use libfuzzer_sys::fuzz_target;
use reject_svm::io::read_data;

fuzz_target!(|data: &[u8]| {
    for require_labels in [false, true] {
        if let Ok(ds) = read_data(data, require_labels) {
            assert!(!ds.x.is_empty());
            assert!(ds.x.iter().all(|row| row.len() == ds.dim() && row.iter().all(|v| v.is_finite())));
            if let Some(y) = &ds.y {
                assert_eq!(y.len(), ds.x.len());
                assert!(y.iter().all(|&v| v == 1.0 || v == -1.0));
            }
        }
    }
});

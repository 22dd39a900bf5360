#![no_main]

use libfuzzer_sys::fuzz_target;
use reject_svm::io::{model_from_str, model_to_string};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = model_from_str(text) {
        // anything accepted must survive a second round trip unchanged
        let once = model_to_string(&model);
        let again = model_to_string(&model_from_str(&once).expect("writer output must parse"));
        assert_eq!(once, again);
    }
});

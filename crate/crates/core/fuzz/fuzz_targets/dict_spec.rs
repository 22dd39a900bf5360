#![no_main]

use libfuzzer_sys::fuzz_target;
use reject_svm::io::parse_dict_spec;

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = std::str::from_utf8(data) else { return };
    if let Ok(template) = parse_dict_spec(spec) {
        // resolve against a tiny sample; huge lattices are rejected by size
        let rows = vec![vec![0.0, 1.0], vec![1.0, -1.0]];
        let _ = template.resolve(&rows);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use reject_svm::io::read_distribution;

fuzz_target!(|data: &[u8]| {
    if let Ok(dist) = read_distribution(data) {
        let total: f64 = dist.atoms().iter().map(|a| a.p).sum();
        assert!((total - 1.0).abs() <= 1e-9);
        assert!(dist.atoms().iter().all(|a| (0.0..=1.0).contains(&a.eta)));
    }
});

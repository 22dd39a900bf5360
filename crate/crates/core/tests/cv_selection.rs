use reject_svm::dictionary::Dictionary;
use reject_svm::losses::CostParams;
use reject_svm::sim::gen_two_gaussian;
use reject_svm::train::{cross_validate, fit_coefficients, log_grid};

/// Expected reject loss at margin `f` given the conditional probability.
fn conditional_ell(f: f64, eta: f64, d: f64, tau: f64) -> f64 {
    if f > tau {
        1.0 - eta
    } else if f < -tau {
        eta
    } else {
        d
    }
}

#[test]
fn cv_choice_is_close_to_the_best_grid_weight() {
    let cp = CostParams::new(0.25, 0.5).unwrap();
    let m = 200;
    let dict = Dictionary::linear(m).unwrap();
    let grid = log_grid(1e-3, 1.0, 13);
    let test = gen_two_gaussian(10_000, m, 99).unwrap();
    for seed in [1, 2] {
        let train = gen_two_gaussian(50, m, seed).unwrap();
        let phi = dict.evaluate(&train.x, Some(&train.y)).unwrap();
        let cv = cross_validate(&phi, &cp, &grid, 10, seed).unwrap();
        let risks: Vec<f64> = grid
            .iter()
            .map(|&r| {
                let lambda = fit_coefficients(&phi, &cp, r).unwrap().lambda;
                let margins = dict.combine(&test.x, &lambda).unwrap();
                margins
                    .iter()
                    .zip(&test.eta)
                    .map(|(&f, &eta)| conditional_ell(f, eta, cp.d(), cp.tau()))
                    .sum::<f64>()
                    / margins.len() as f64
            })
            .collect();
        let best = risks.iter().copied().fold(f64::INFINITY, f64::min);
        let chosen = risks[grid.iter().position(|&r| r == cv.best_r).unwrap()];
        assert!(chosen <= 1.1 * best, "seed {seed}: cv risk {chosen} vs best {best} ({risks:?})");
    }
}

mod common;

use std::fs::File;

use common::rng;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use reject_svm::dictionary::{DictSpec, Dictionary};
use reject_svm::io::read_distribution;
use reject_svm::losses::{population_risk, Atom, CostParams, DiscreteDistribution, LossKind};
use reject_svm::theory::{
    check_excess_domination, check_weighted_norm_bound, check_regularization_path, complexity_estimate, default_t_grid, gram_psi,
    kappa_estimate, random_functions, random_lambdas, KappaSearch, NormBoundReport, TheoryContext,
};
use reject_svm::train::{fit_population, log_grid};

fn fixture(name: &str) -> DiscreteDistribution {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    read_distribution(File::open(path).unwrap()).unwrap()
}

fn random_dist(rng: &mut impl Rng, atoms: usize, dim: usize) -> DiscreteDistribution {
    let weights: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut atoms: Vec<Atom> = weights
        .iter()
        .map(|w| Atom {
            x: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            p: w / total,
            eta: rng.random_range(0.0..=1.0),
        })
        .collect();
    // absorb rounding so the masses sum to one
    let sum: f64 = atoms.iter().map(|a| a.p).sum();
    atoms[0].p += 1.0 - sum;
    DiscreteDistribution::new(atoms).unwrap()
}

#[test]
fn population_risk_matches_sampling() {
    let mut rng = rng(21);
    let dist = random_dist(&mut rng, 5, 2);
    let dict = Dictionary::new(DictSpec::Custom {
        centers: vec![vec![0.0, 0.0], vec![1.0, -1.0], vec![-1.0, 1.0]],
        beta: 0.5,
    })
    .unwrap();
    let lambda = [0.8, -1.3, 0.6];
    let cp = CostParams::new(0.2, 0.45).unwrap();
    let values = dict.combine(&dist.points(), &lambda).unwrap();
    let cum: Vec<f64> = dist
        .atoms()
        .iter()
        .scan(0.0, |s, a| {
            *s += a.p;
            Some(*s)
        })
        .collect();
    for loss in [LossKind::Hinge, LossKind::Reject] {
        let exact = population_risk(&dist, &dict, &lambda, loss, &cp).unwrap();
        let draws = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let u: f64 = rng.random();
            let k = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
            let y = if rng.random_bool(dist.atoms()[k].eta) { 1.0 } else { -1.0 };
            let v = loss.eval(y * values[k], &cp).unwrap();
            s += v;
            s2 += v * v;
        }
        let mean = s / draws as f64;
        let se = ((s2 / draws as f64 - mean * mean) / draws as f64).sqrt();
        assert!((mean - exact).abs() <= 3.0 * se, "{loss:?}: sampled {mean} +- {se}, exact {exact}");
    }
}

#[test]
fn psi_matches_double_loop() {
    let mut rng = rng(22);
    let dist = random_dist(&mut rng, 7, 3);
    let centers: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let dict = Dictionary::new(DictSpec::Custom { centers: centers.clone(), beta: 1.5 }).unwrap();
    let psi = gram_psi(&dist, &dict).unwrap();
    let f = |j: usize, x: &[f64]| {
        let d2: f64 = x.iter().zip(&centers[j]).map(|(a, b)| (a - b) * (a - b)).sum();
        (-1.5 * d2).exp()
    };
    for i in 0..3 {
        for j in 0..3 {
            let mut total = 0.0;
            for atom in dist.atoms() {
                let omega = atom.eta * (1.0 - atom.eta);
                total += 4.0 * atom.p * omega * f(i, &atom.x) * f(j, &atom.x);
            }
            assert!((psi[i][j] - total).abs() < 1e-14, "({i}, {j})");
        }
    }
}

/// Exact minimum of `(p11 + 2 p12 t + p22 t^2) / 4` over `t` in `[-c, c]`.
fn two_by_two_kappa(psi: [[f64; 2]; 2], c: f64) -> f64 {
    let q = |t: f64| (psi[0][0] + 2.0 * psi[0][1] * t + psi[1][1] * t * t) / 4.0;
    let mut best = q(-c).min(q(c));
    if psi[1][1] > 0.0 {
        let t = -psi[0][1] / psi[1][1];
        if t.abs() <= c {
            best = best.min(q(t));
        }
    }
    best
}

#[test]
fn kappa_matches_two_by_two_oracle() {
    let mut rng = rng(23);
    let normal = Normal::new(0.0, 1.0).unwrap();
    for case in 0..20 {
        let g: Vec<f64> = (0..4).map(|_| normal.sample(&mut rng)).collect();
        let psi = [
            [g[0] * g[0] + g[1] * g[1], g[0] * g[2] + g[1] * g[3]],
            [g[0] * g[2] + g[1] * g[3], g[2] * g[2] + g[3] * g[3]],
        ];
        let c = [1.0, 1.5, 3.0][case % 3];
        let exact = two_by_two_kappa(psi, c);
        let rows = vec![psi[0].to_vec(), psi[1].to_vec()];
        let est = kappa_estimate(&rows, &[1.0, 0.0], c, &KappaSearch { seed: case as u64, ..KappaSearch::default() }).unwrap();
        assert!(est.kappa_sq_upper >= exact - 1e-12, "case {case}: below the infimum");
        assert!(est.kappa_sq_upper <= exact + 1e-6 * (1.0 + exact), "case {case}: {} vs {exact}", est.kappa_sq_upper);
    }
}

#[test]
fn kappa_is_nonincreasing_in_the_cone_constant() {
    let mut rng = rng(24);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let m = 6;
    for _ in 0..5 {
        let g: Vec<Vec<f64>> = (0..m).map(|_| (0..m).map(|_| normal.sample(&mut rng)).collect()).collect();
        let psi: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| (0..m).map(|k| g[k][i] * g[k][j]).sum()).collect())
            .collect();
        let theta = [1.0, -0.5, 0.0, 0.0, 0.0, 0.0];
        let mut previous: Option<(f64, Vec<f64>)> = None;
        for c in [1.0, 1.5, 2.0, 4.0] {
            let warm = previous.iter().map(|(_, cert)| cert.clone()).collect();
            let est = kappa_estimate(&psi, &theta, c, &KappaSearch { warm_starts: warm, ..KappaSearch::default() }).unwrap();
            if let Some((last, _)) = &previous {
                assert!(est.kappa_sq_upper <= *last + 1e-12, "c = {c}: {} after {last}", est.kappa_sq_upper);
            }
            previous = Some((est.kappa_sq_upper, est.certificate));
        }
    }
}

#[test]
fn uniform_eta_has_unit_exponent() {
    let k = 1000;
    let atoms: Vec<(Vec<f64>, f64)> = (0..k).map(|i| (vec![i as f64], (i as f64 + 0.5) / k as f64)).collect();
    let dist = DiscreteDistribution::uniform(atoms).unwrap();
    match complexity_estimate(&dist, 0.25, &default_t_grid()).unwrap() {
        reject_svm::theory::Complexity::Finite { alpha, .. } => assert!((alpha - 1.0).abs() < 0.1, "{alpha}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn norm_bound_holds_on_shipped_fixtures() {
    for (name, d) in [("margin_1d.csv", 0.25), ("margin_2d.csv", 0.25), ("margin_1d.csv", 0.5), ("margin_2d.csv", 0.5)] {
        let dist = fixture(name);
        let dim = dist.dim();
        let ctx = TheoryContext::new(
            dist,
            Dictionary::new(DictSpec::ConstantLinear { dim }).unwrap(),
            CostParams::with_default_tau(d).unwrap(),
        )
        .unwrap();
        let cx = complexity_estimate(&ctx.dist, d, &default_t_grid()).unwrap();
        match check_weighted_norm_bound(&ctx, cx, &random_lambdas(dim + 1, 250, 3.0, 5)).unwrap() {
            NormBoundReport::Checked { cases, violations, .. } => {
                assert_eq!(cases, 250);
                assert!(violations.is_empty(), "{name}, d = {d}: {violations:?}");
            }
            NormBoundReport::Skipped { gap } => panic!("{name}, d = {d}: skipped with gap {gap}"),
        }
    }
}

#[test]
fn excess_risk_domination_on_random_laws() {
    let mut rng = rng(25);
    for case in 0..500 {
        let atoms = rng.random_range(1..=6);
        let dist = random_dist(&mut rng, atoms, 1);
        let d = rng.random_range(0.02..=0.5);
        let tau = rng.random_range(d..=1.0 - d);
        let ctx = TheoryContext::new(dist, Dictionary::linear(1).unwrap(), CostParams::new(d, tau).unwrap()).unwrap();
        let functions = random_functions(atoms, 10, case);
        let rep = check_excess_domination(&ctx, &functions).unwrap();
        assert_eq!(rep.violations, 0, "case {case}: slack {} at {:?}", rep.min_slack, rep.witness);
    }
}

#[test]
fn path_stays_in_support_cone() {
    // lambda(0) = (0, 1): the constant coefficient is off the support
    let dist = fixture("plateau.csv");
    let cp = CostParams::with_default_tau(0.25).unwrap();
    let dict = Dictionary::new(DictSpec::ConstantLinear { dim: 1 }).unwrap();
    let lambda0 = fit_population(&dist, &dict, &cp, 0.0).unwrap().lambda;
    assert!(lambda0[0].abs() < 1e-9 && (lambda0[1] - 1.0).abs() < 1e-9, "{lambda0:?}");
    let ctx = TheoryContext::new(dist.clone(), dict.clone(), cp).unwrap();
    let grid = log_grid(1e-4, 1.0, 20);
    let rep = check_regularization_path(&ctx, &grid).unwrap();
    for (r, point) in grid.iter().zip(&rep.path) {
        let lambda = fit_population(&dist, &dict, &cp, *r).unwrap().lambda;
        let off = lambda[0].abs();
        let on = (lambda[1] - lambda0[1]).abs();
        assert!(off <= on + 1e-7, "r = {r}: off {off}, on {on}");
        assert!(lambda[0].abs() + lambda[1].abs() <= 1.0 + 1e-7);
        assert!((point.off_support - off).abs() < 1e-9 && (point.on_support - on).abs() < 1e-9);
    }
}

#[test]
fn path_checks_on_asymmetric_fixture() {
    let dist = fixture("path_1d.csv");
    for d in [0.25, 0.4] {
        let ctx = TheoryContext::new(
            dist.clone(),
            Dictionary::new(DictSpec::ConstantLinear { dim: 1 }).unwrap(),
            CostParams::with_default_tau(d).unwrap(),
        )
        .unwrap();
        let rep = check_regularization_path(&ctx, &log_grid(1e-4, 1.0, 20)).unwrap();
        assert!(rep.path.iter().all(|p| p.norm_ok && p.cone_ok), "{rep:?}");
        assert!(rep.convergence_ok);
        let norms: Vec<f64> = rep.path.iter().map(|p| p.l1_norm).collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-7), "{norms:?}");
    }
}

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use treesense::baselines::{
    haar2d_forward, haar2d_inverse, lambda_max, lasso, lasso_reconstruct, model_cosamp, pca_fit, pca_reconstruct, wavelet_sense, CosampOptions,
    LassoOptions, RandomProjectionEnsemble,
};
use treesense::dictlearn::TrainingSet;
use treesense::linalg::random_orthonormal;
use treesense::sensing::SensingConfig;
use treesense::tree::{is_tree_sparse, make_tree, random_tree_sparse};
use treesense::Dictionary;

fn lasso_objective(a: &DMatrix<f64>, y: &DVector<f64>, x: &[f64], lambda: f64) -> f64 {
    let r = a * DVector::from_column_slice(x) - y;
    0.5 * r.norm_squared() + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

/// Cyclic coordinate minimization where each one-dimensional problem is
/// solved by scanning progressively finer grids.
fn grid_lasso(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Vec<f64> {
    let p = a.ncols();
    let mut x = vec![0.0; p];
    for _sweep in 0..500 {
        let before = x.clone();
        for j in 0..p {
            let mut centre = x[j];
            let mut h = 1e-2;
            for _level in 0..4 {
                let mut best = (f64::INFINITY, centre);
                for s in -300..=300 {
                    let v = centre + s as f64 * h;
                    x[j] = v;
                    let f = lasso_objective(a, y, &x, lambda);
                    if f < best.0 {
                        best = (f, v);
                    }
                }
                centre = best.1;
                h /= 100.0;
            }
            x[j] = centre;
        }
        let moved = x.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if moved < 1e-9 {
            break;
        }
    }
    x
}

#[test]
fn lasso_matches_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _case in 0..3 {
        let a = DMatrix::from_fn(8, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let truth = [1.2, 0.0, -0.7, 0.0, 0.3];
        let y = &a * DVector::from_column_slice(&truth) + DVector::from_fn(8, |_, _| 0.05 * rng.sample::<f64, _>(StandardNormal));
        let opts = LassoOptions {
            max_iters: 20_000,
            tol: 1e-13,
        };
        let fit = lasso(&a, y.as_slice(), 0.1, &opts).unwrap();
        let oracle = grid_lasso(&a, &y, 0.1);
        for (got, want) in fit.coeffs.iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-3, "{:?} vs {:?}", fit.coeffs, oracle);
        }
        assert!(lasso_objective(&a, &y, &fit.coeffs, 0.1) <= lasso_objective(&a, &y, &oracle, 0.1) + 1e-9);
    }
}

#[test]
fn lasso_examples() {
    let tree = make_tree(2, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dict = Dictionary::new(random_orthonormal(20, 15, &mut rng), tree).unwrap();
    let e = RandomProjectionEnsemble::new(25, 20, 25.0, 4).unwrap();
    let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.4).sin()).collect();
    let y = e.measure(&x, 0.0, &mut rng).unwrap();
    let eff = e.in_dictionary(&dict).unwrap();
    let rec = lasso_reconstruct(&e, &dict, &y, lambda_max(&eff, &y), &LassoOptions::default()).unwrap();
    assert!(rec.fit.coeffs.iter().all(|&c| c == 0.0));
    assert!(rec.fit.objectives.windows(2).all(|w| w[1] <= w[0]));
    assert!(lasso_reconstruct(&e, &dict, &y[..3], 0.1, &LassoOptions::default()).is_err());
}

#[test]
fn cosamp_planted_recovery_rate() {
    let tree = make_tree(2, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let trials = 40;
    let mut recovered = 0;
    for t in 0..trials {
        let k = 5 + t % 6;
        let a = random_tree_sparse(&tree, k, 1.0, 2.0, &mut rng).unwrap();
        let e = RandomProjectionEnsemble::new(4 * k, tree.len(), 4.0 * k as f64, 1000 + t as u64).unwrap();
        let y = e.measure(a.values(), 0.0, &mut rng).unwrap();
        let fit = model_cosamp(e.matrix(), &y, k, &tree, &CosampOptions { max_iters: 20, tol: 1e-12 }).unwrap();
        assert!(fit.iterations <= 20);
        assert!(is_tree_sparse(fit.coeffs.values(), &tree, 0.0));
        if fit.residual_norm < 1e-6 {
            recovered += 1;
        }
    }
    eprintln!("model CoSaMP recovered {recovered}/{trials}");
    assert!(recovered * 10 >= trials * 7, "recovered {recovered}/{trials}");
}

fn training(seed: u64) -> TrainingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::from_fn(16, 40, |i, _| (1.0 + 0.3 * i as f64) * rng.sample::<f64, _>(StandardNormal));
    TrainingSet::from_columns(raw).unwrap()
}

#[test]
fn pca_noise_energy_matches_prediction() {
    let x = training(1);
    let (r, budget, sigma) = (4usize, 10.0, 0.7);
    let model = pca_fit(&x, r).unwrap();
    let signal = x.original_column(3);
    let clean = pca_reconstruct(&model, &signal, budget, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let trials = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let errs: Vec<f64> = (0..trials)
        .map(|_| {
            let noisy = pca_reconstruct(&model, &signal, budget, sigma, &mut rng).unwrap();
            assert!((noisy.energy_spent - budget).abs() <= 1e-9 * budget);
            noisy.signal.iter().zip(&clean.signal).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .collect();
    let n = trials as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let expected = r as f64 * sigma * sigma * (r as f64 / budget);
    assert!((mean - expected).abs() <= 3.0 * (var / n).sqrt(), "{mean} vs {expected}");
}

#[test]
fn energy_is_spent_fairly() {
    let budget = 37.5;
    for m in [1, 5, 16] {
        let e = RandomProjectionEnsemble::new(m, 16, budget, m as u64).unwrap();
        assert!((e.energy() - budget).abs() <= 1e-9 * budget);
        for row in e.matrix().row_iter() {
            assert!((row.norm() - (budget / m as f64).sqrt()).abs() <= 1e-12 * budget.sqrt());
        }
    }
    let x = training(2);
    let model = pca_fit(&x, 6).unwrap();
    let rec = pca_reconstruct(&model, &x.original_column(0), budget, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(rec.measurements, 6);
    assert!((rec.energy_spent - budget).abs() <= 1e-9 * budget);

    let side = 16;
    let img: Vec<f64> = (0..side * side).map(|i| ((i % 7) as f64 * 0.3).cos()).collect();
    for tau in [0.0, 0.5] {
        let cfg = SensingConfig::new((budget / 40.0).sqrt(), tau).with_budget(budget);
        let ws = wavelet_sense(&img, side, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(ws.outcome.log().energy_spent() <= budget * (1.0 + 1e-9));
    }
}

#[test]
fn wavelet_examples() {
    let side = 32;
    let flat = vec![0.25; side * side];
    let cfg = SensingConfig::new(1.0, 0.5).with_noise(0.0);
    let ws = wavelet_sense(&flat, side, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(ws.outcome.log().m(), 4);
    assert!(ws.image.iter().all(|v| (v - 0.25).abs() < 1e-12));
    assert!(wavelet_sense(&[0.0; 36], 6, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn haar_round_trip_and_energy(log_side in 0u32..=6, seed in any::<u64>()) {
        let side = 1usize << log_side;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..side * side).map(|_| rng.random::<f64>()).collect();
        let c = haar2d_forward(&x, side).unwrap();
        let back = haar2d_inverse(&c, side).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ec: f64 = c.iter().map(|v| v * v).sum();
        prop_assert!((ex - ec).abs() < 1e-10 * ex.max(1.0));
    }
}

//! Weakest amplitude at which a method still recovers the support.
//!
//! Signals have all magnitudes equal to `alpha`, so a sweep over `alpha`
//! with shared random numbers (same supports, signs, noise and test vectors
//! at every amplitude) traces a clean success-rate curve. The threshold is
//! found by geometric bisection on that curve.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::baselines::lasso::{lasso, LassoOptions};
use crate::error::{Error, Result};
use crate::harness::seeds::{trial_rng, Workers};
use crate::sensing::{allocate_beta, default_tau, sense_tree, SensingConfig};
use crate::tree::{make_tree, random_tree_sparse, TreeTopology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeMethod {
    /// Tree traversal with `beta` from the budget and `tau = beta * alpha / 2`.
    Adaptive,
    /// Lasso on `lasso_m` Gaussian projections, support = `k` largest entries.
    Lasso,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeConfig {
    pub degree: usize,
    pub depth: usize,
    pub k: usize,
    pub budget: f64,
    pub noise_std: f64,
    pub trials: usize,
    /// Required fraction of exact recoveries.
    pub target: f64,
    pub lasso_m: usize,
    pub lasso: LassoOptions,
    /// Bisection stops once `hi / lo <= 1 + rel_tol`.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self {
            degree: 2,
            depth: 10,
            k: 15,
            budget: 1023.0,
            noise_std: 1.0,
            trials: 500,
            target: 0.9,
            lasso_m: 128,
            lasso: LassoOptions { max_iters: 300, tol: 1e-5 },
            rel_tol: 0.05,
            seed: 0,
        }
    }
}

impl RegimeConfig {
    fn needed(&self) -> usize {
        (self.target * self.trials as f64).ceil() as usize
    }

    /// Lasso weight `sigma * sqrt(R/n) * sqrt(2 ln p)`: the noise level of a
    /// column of the ensemble times the usual union-bound factor.
    pub fn lasso_lambda(&self, n: usize) -> f64 {
        self.noise_std * (self.budget / n as f64).sqrt() * (2.0 * (n as f64).ln()).sqrt()
    }
}

fn exact_by_adaptive(tree: &TreeTopology, cfg: &RegimeConfig, values: &[f64], support: &[usize], alpha: f64, rng: &mut impl Rng) -> Result<bool> {
    let beta = allocate_beta(cfg.budget, cfg.degree, cfg.k)?;
    let sc = SensingConfig::new(beta, default_tau(beta, alpha))
        .with_noise(cfg.noise_std)
        .with_budget(cfg.budget);
    let out = sense_tree(tree, &sc, rng, |j| values.get(j).map_or(0.0, |v| alpha * v))?;
    Ok(out.support_estimate() == support)
}

fn exact_by_lasso(tree: &TreeTopology, cfg: &RegimeConfig, values: &[f64], support: &[usize], alpha: f64, rng: &mut impl Rng) -> Result<bool> {
    let (n, m) = (tree.len(), cfg.lasso_m);
    let scale = (cfg.budget / m as f64).sqrt();
    let mut a = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut row in a.row_iter_mut() {
        let s = scale / row.norm();
        row *= s;
    }
    let mut x = DVector::zeros(n);
    for (i, v) in values.iter().enumerate() {
        x[i] = alpha * v;
    }
    let y: Vec<f64> = (&a * x)
        .iter()
        .map(|v| v + cfg.noise_std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let fit = lasso(&a, &y, cfg.lasso_lambda(n), &cfg.lasso)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| fit.coeffs[j].abs().total_cmp(&fit.coeffs[i].abs()).then(i.cmp(&j)));
    let top: BTreeSet<usize> = order[..cfg.k].iter().copied().collect();
    Ok(top.iter().copied().eq(support.iter().copied()))
}

/// Whether `method` reaches the target recovery rate at `alpha`, and how
/// many trials were needed to decide. Trials run in batches of the worker
/// count and stop as soon as the outcome is settled.
pub fn passes(method: RegimeMethod, alpha: f64, cfg: &RegimeConfig, workers: &Workers) -> Result<(bool, usize)> {
    let tree = make_tree(cfg.degree, cfg.depth)?;
    let inner = make_tree(cfg.degree, cfg.depth - 1)?;
    let needed = cfg.needed();
    let allowed_failures = cfg.trials - needed;
    let (mut ok, mut bad, mut run) = (0usize, 0usize, 0usize);
    let batch = workers.count().max(1) * 8;
    while run < cfg.trials {
        let len = batch.min(cfg.trials - run);
        let results = workers.try_map(len, |i| {
            let t = (run + i) as u64;
            let mut rng = trial_rng(cfg.seed, &[7], t);
            let sig = random_tree_sparse(&inner, cfg.k, 1.0, 1.0, &mut rng)?;
            match method {
                RegimeMethod::Adaptive => exact_by_adaptive(&tree, cfg, sig.values(), sig.support(), alpha, &mut rng),
                RegimeMethod::Lasso => exact_by_lasso(&tree, cfg, sig.values(), sig.support(), alpha, &mut rng),
            }
        })?;
        // settle in trial order so the count does not depend on batching
        for r in results {
            run += 1;
            if r {
                ok += 1;
            } else {
                bad += 1;
            }
            if ok >= needed {
                return Ok((true, run));
            }
            if bad > allowed_failures {
                return Ok((false, run));
            }
        }
    }
    Ok((ok >= needed, run))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    /// Smallest amplitude observed to pass.
    pub alpha: f64,
    /// Largest amplitude observed to fail.
    pub below: f64,
    /// `(alpha, passed, trials run)` in evaluation order.
    pub evaluations: Vec<(f64, bool, usize)>,
}

pub fn recovery_threshold(method: RegimeMethod, start: f64, cfg: &RegimeConfig, workers: &Workers) -> Result<ThresholdReport> {
    if !(start > 0.0) || cfg.trials == 0 || !(cfg.target > 0.0 && cfg.target <= 1.0) {
        return Err(Error::arg("threshold search needs start > 0, trials >= 1, target in (0, 1]"));
    }
    if cfg.depth < 2 || cfg.lasso_m == 0 || cfg.k > make_tree(cfg.degree, cfg.depth - 1)?.len() {
        return Err(Error::arg("regime needs depth >= 2, lasso_m >= 1 and an interior-sized k"));
    }
    let mut evaluations = Vec::new();
    let mut eval = |alpha: f64| -> Result<bool> {
        let (pass, run) = passes(method, alpha, cfg, workers)?;
        evaluations.push((alpha, pass, run));
        Ok(pass)
    };
    let (mut lo, mut hi);
    if eval(start)? {
        hi = start;
        lo = start / 2.0;
        while eval(lo)? {
            hi = lo;
            lo /= 2.0;
            if lo < 1e-12 {
                return Err(Error::arg("recovery succeeds at vanishing amplitude"));
            }
        }
    } else {
        lo = start;
        hi = start * 2.0;
        while !eval(hi)? {
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::arg("recovery never reaches the target rate"));
            }
        }
    }
    while hi / lo > 1.0 + cfg.rel_tol {
        let mid = (lo * hi).sqrt();
        if eval(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ThresholdReport {
        alpha: hi,
        below: lo,
        evaluations,
    })
}

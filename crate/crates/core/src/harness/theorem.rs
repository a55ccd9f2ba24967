//! Monte Carlo check of the support-recovery guarantee.
//!
//! Each cell fixes `(k, R, tau)`; every trial draws a fresh random
//! k-tree-sparse signal with all magnitudes at the cell's `alpha_min`, runs
//! one budgeted session on the identity dictionary and records whether the
//! support was recovered exactly.

use crate::bounds::{failure_bound, min_amplitude, BoundInputs};
use crate::error::{Error, Result};
use crate::harness::config::ConfigMap;
use crate::harness::output::{TheoremSummaryRow, TheoremTrialRow};
use crate::harness::seeds::{trial_rng, Workers};
use crate::sensing::{allocate_beta, sense_tree, SensingConfig, Traversal};
use crate::tree::{make_tree, random_tree_sparse};

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremConfig {
    pub degree: usize,
    pub depth: usize,
    pub ks: Vec<usize>,
    pub c1: f64,
    /// Threshold fraction: `tau = a * beta * alpha_min` unless `taus` is set.
    pub a: f64,
    /// Budgets to sweep; empty means `(d + 1) k`, i.e. `beta = 1`.
    pub budgets: Vec<f64>,
    /// Absolute thresholds; empty means `a * beta * alpha_min`.
    pub taus: Vec<f64>,
    /// Fixed `alpha_min`; `None` uses the guaranteed minimum amplitude.
    pub alpha_min: Option<f64>,
    pub noise_std: f64,
    pub trials: usize,
    pub seed: u64,
    pub traversal: Traversal,
    /// Keep supports off the leaf level so `m = dk + 1` is attainable.
    pub interior: bool,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        Self {
            degree: 2,
            depth: 10,
            ks: vec![7, 15, 31],
            c1: 1.0,
            a: 0.5,
            budgets: Vec::new(),
            taus: Vec::new(),
            alpha_min: None,
            noise_std: 1.0,
            trials: 1000,
            seed: 0,
            traversal: Traversal::Queue,
            interior: true,
        }
    }
}

pub const THEOREM_KEYS: &[&str] = &[
    "d",
    "L",
    "ks",
    "c1",
    "a",
    "budgets",
    "taus",
    "alpha_min",
    "noise_std",
    "trials",
    "seed",
    "traversal",
    "interior",
    "workers",
    "out",
];

pub fn parse_traversal(s: &str) -> Result<Traversal> {
    match s {
        "queue" => Ok(Traversal::Queue),
        "stack" => Ok(Traversal::Stack),
        _ => Err(Error::Config(format!("traversal must be queue or stack, got {s:?}"))),
    }
}

impl TheoremConfig {
    pub fn from_config(c: &ConfigMap) -> Result<Self> {
        c.check_known(THEOREM_KEYS)?;
        let d = Self::default();
        Ok(Self {
            degree: c.get_or("d", d.degree)?,
            depth: c.get_or("L", d.depth)?,
            ks: c.get_list("ks", d.ks)?,
            c1: c.get_or("c1", d.c1)?,
            a: c.get_or("a", d.a)?,
            budgets: c.get_list("budgets", d.budgets)?,
            taus: c.get_list("taus", d.taus)?,
            alpha_min: c.get("alpha_min")?,
            noise_std: c.get_or("noise_std", d.noise_std)?,
            trials: c.get_or("trials", d.trials)?,
            seed: c.get_or("seed", d.seed)?,
            traversal: c.raw("traversal").map(parse_traversal).transpose()?.unwrap_or(d.traversal),
            interior: c.get_or("interior", d.interior)?,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct TheoremReport {
    pub trials: Vec<TheoremTrialRow>,
    pub summary: Vec<TheoremSummaryRow>,
    /// Cells that were not run, with the reason.
    pub skipped: Vec<String>,
}

struct Cell {
    k: usize,
    budget: f64,
    beta: f64,
    alpha_min: f64,
    tau: f64,
}

pub fn verify_theorem(cfg: &TheoremConfig, workers: &Workers) -> Result<TheoremReport> {
    if cfg.trials < 1 {
        return Err(Error::arg("trials must be at least 1"));
    }
    let tree = make_tree(cfg.degree, cfg.depth)?;
    let gen_tree = if cfg.interior {
        if cfg.depth < 2 {
            return Err(Error::arg("interior supports need depth >= 2"));
        }
        make_tree(cfg.degree, cfg.depth - 1)?
    } else {
        tree.clone()
    };

    let mut report = TheoremReport::default();
    let mut cells = Vec::new();
    for &k in &cfg.ks {
        if k < 1 || k > gen_tree.len() {
            report.skipped.push(format!("k={k}: outside 1..={}", gen_tree.len()));
            continue;
        }
        let budgets = if cfg.budgets.is_empty() {
            vec![((cfg.degree + 1) * k) as f64]
        } else {
            cfg.budgets.clone()
        };
        for &budget in &budgets {
            let beta = allocate_beta(budget, cfg.degree, k)?;
            let alpha_min = match cfg.alpha_min {
                Some(v) => v,
                None => match min_amplitude(cfg.c1, cfg.a, cfg.degree, k, beta) {
                    Ok(v) => v,
                    Err(e) => {
                        report.skipped.push(format!("k={k}, R={budget}: {e}"));
                        continue;
                    }
                },
            };
            let taus = if cfg.taus.is_empty() {
                vec![cfg.a * beta * alpha_min]
            } else {
                cfg.taus.clone()
            };
            for &tau in &taus {
                if !(tau < beta * alpha_min) {
                    report.skipped.push(format!(
                        "k={k}, R={budget}, tau={tau}: tau must be below beta*alpha_min = {}",
                        beta * alpha_min
                    ));
                    continue;
                }
                cells.push(Cell {
                    k,
                    budget,
                    beta,
                    alpha_min,
                    tau,
                });
            }
        }
    }

    for (ci, cell) in cells.iter().enumerate() {
        let sensing = SensingConfig {
            beta: cell.beta,
            tau: cell.tau,
            noise_std: cfg.noise_std,
            budget: Some(cell.budget),
            traversal: cfg.traversal,
        };
        let rows = workers.try_map(cfg.trials, |t| {
            let mut rng = trial_rng(cfg.seed, &[ci as u64], t as u64);
            let signal = random_tree_sparse(&gen_tree, cell.k, cell.alpha_min, cell.alpha_min, &mut rng)?;
            let values = signal.values();
            let out = sense_tree(&tree, &sensing, &mut rng, |j| values.get(j).copied().unwrap_or(0.0))?;
            Ok(TheoremTrialRow {
                d: cfg.degree,
                depth: cfg.depth,
                k: cell.k,
                budget: cell.budget,
                beta: cell.beta,
                alpha_min: cell.alpha_min,
                tau: cell.tau,
                trial: t,
                m: out.log().m(),
                support_exact: (out.support_estimate() == signal.support()) as u8,
                truncated: out.is_truncated() as u8,
                energy_spent: out.log().energy_spent(),
            })
        })?;
        let predicted_m = cfg.degree * cell.k + 1;
        let failures = rows.iter().filter(|r| r.support_exact == 0).count();
        let violations = rows.iter().filter(|r| r.support_exact == 1 && r.m != predicted_m).count();
        let mean_m = rows.iter().map(|r| r.m as f64).sum::<f64>() / rows.len() as f64;
        let bound = failure_bound(&BoundInputs {
            beta: cell.beta,
            tau: cell.tau,
            alpha_min: cell.alpha_min,
            k: cell.k,
            degree: cfg.degree,
        })?;
        report.summary.push(TheoremSummaryRow {
            d: cfg.degree,
            depth: cfg.depth,
            k: cell.k,
            budget: cell.budget,
            beta: cell.beta,
            alpha_min: cell.alpha_min,
            tau: cell.tau,
            trials: cfg.trials,
            failures,
            failure_rate: failures as f64 / cfg.trials as f64,
            bound,
            mean_m,
            predicted_m,
            m_law_violations: violations,
        });
        report.trials.extend(rows);
    }
    Ok(report)
}

//! Top-down adaptive acquisition of tree-sparse coefficients.
//!
//! A session keeps a stack or queue of nodes, starting from the tree roots.
//! Each popped node `j` is measured once as `y = beta * <d_j, x> + sigma * z`
//! with `z ~ N(0, 1)`; if `|y| >= tau` the children of `j` are scheduled.
//! Every measurement costs `beta^2` of sensing energy.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::tree::CoefficientTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Traversal {
    /// Depth-first.
    Stack,
    /// Breadth-first.
    #[default]
    Queue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingConfig {
    pub beta: f64,
    pub tau: f64,
    pub noise_std: f64,
    /// Total sensing energy; `None` is unbounded.
    pub budget: Option<f64>,
    pub traversal: Traversal,
}

impl SensingConfig {
    /// Unit noise, unbounded budget, breadth-first.
    pub fn new(beta: f64, tau: f64) -> Self {
        Self {
            beta,
            tau,
            noise_std: 1.0,
            budget: None,
            traversal: Traversal::Queue,
        }
    }

    pub fn with_noise(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn with_traversal(mut self, traversal: Traversal) -> Self {
        self.traversal = traversal;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::arg(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::arg(format!("tau must be nonnegative, got {}", self.tau)));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::arg(format!("noise_std must be nonnegative, got {}", self.noise_std)));
        }
        if let Some(r) = self.budget {
            if !(r > 0.0) {
                return Err(Error::arg(format!("budget must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

/// Default threshold `c2 * beta * alpha_min` with `c2 = 0.5`.
pub fn default_tau(beta: f64, alpha_min: f64) -> f64 {
    0.5 * beta * alpha_min
}

/// Per-measurement scale that spreads `budget` over the `(d+1)k`
/// measurements a successful session may need.
pub fn allocate_beta(budget: f64, degree: usize, k: usize) -> Result<f64> {
    if !(budget > 0.0) || degree == 0 || k == 0 {
        return Err(Error::arg(format!(
            "allocate_beta needs positive arguments, got R={budget}, d={degree}, k={k}"
        )));
    }
    Ok((budget / ((degree + 1) * k) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub node: usize,
    pub value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasurementLog {
    entries: Vec<Measurement>,
    energy_spent: f64,
}

impl MeasurementLog {
    pub fn entries(&self) -> &[Measurement] {
        &self.entries
    }

    pub fn m(&self) -> usize {
        self.entries.len()
    }

    pub fn energy_spent(&self) -> f64 {
        self.energy_spent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The scheduler ran dry.
    Completed,
    /// The next measurement would have overspent the budget.
    BudgetExhausted,
}

/// Second-stage re-measurements of the recovered support.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientEstimates {
    pub beta: f64,
    /// `(node, y' / beta')` for each re-measured node.
    pub values: Vec<(usize, f64)>,
    pub energy_spent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingOutcome {
    support_estimate: Vec<usize>,
    log: MeasurementLog,
    beta: f64,
    termination: Termination,
    estimates: Option<CoefficientEstimates>,
}

impl SensingOutcome {
    /// Measured nodes that passed the significance test, ascending.
    pub fn support_estimate(&self) -> &[usize] {
        &self.support_estimate
    }

    pub fn log(&self) -> &MeasurementLog {
        &self.log
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }

    pub fn is_truncated(&self) -> bool {
        self.termination == Termination::BudgetExhausted
    }

    pub fn estimates(&self) -> Option<&CoefficientEstimates> {
        self.estimates.as_ref()
    }

    /// Measurements across both stages.
    pub fn total_measurements(&self) -> usize {
        self.log.m() + self.estimates.as_ref().map_or(0, |e| e.values.len())
    }

    pub fn total_energy(&self) -> f64 {
        self.log.energy_spent + self.estimates.as_ref().map_or(0.0, |e| e.energy_spent)
    }

    /// Length-`p` coefficient estimate: second-stage values when present,
    /// otherwise `y_j / beta` on the support estimate.
    pub fn coefficients(&self, p: usize) -> Vec<f64> {
        let mut out = vec![0.0; p];
        match &self.estimates {
            Some(est) => {
                for &(j, v) in &est.values {
                    out[j] = v;
                }
            }
            None => {
                for e in self.log.entries.iter().filter(|e| e.significant) {
                    out[e.node] = e.value / self.beta;
                }
            }
        }
        out
    }

    /// Coefficient estimate using only the first `m` measurements.
    pub fn prefix_coefficients(&self, p: usize, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; p];
        for e in self.log.entries.iter().take(m).filter(|e| e.significant) {
            out[e.node] = e.value / self.beta;
        }
        out
    }
}

enum Scheduler {
    Stack(Vec<usize>),
    Queue(VecDeque<usize>),
}

impl Scheduler {
    fn new(traversal: Traversal, roots: Vec<usize>) -> Self {
        match traversal {
            // reversed so the first root is measured first
            Traversal::Stack => Scheduler::Stack(roots.into_iter().rev().collect()),
            Traversal::Queue => Scheduler::Queue(roots.into()),
        }
    }

    fn pop(&mut self) -> Option<usize> {
        match self {
            Scheduler::Stack(s) => s.pop(),
            Scheduler::Queue(q) => q.pop_front(),
        }
    }

    fn push_all(&mut self, nodes: &[usize]) {
        match self {
            Scheduler::Stack(s) => s.extend(nodes.iter().rev()),
            Scheduler::Queue(q) => q.extend(nodes.iter()),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            Scheduler::Stack(s) => s.is_empty(),
            Scheduler::Queue(q) => q.is_empty(),
        }
    }
}

/// Runs the traversal over any coefficient tree. `coefficient(j)` returns
/// the noiseless inner product `<d_j, x>`.
///
/// One standard normal draw is consumed per measurement even when
/// `noise_std == 0`, so the i-th measurement of sessions sharing a seed
/// always sees the same draw.
pub fn sense_tree<T, R, F>(tree: &T, cfg: &SensingConfig, rng: &mut R, mut coefficient: F) -> Result<SensingOutcome>
where
    T: CoefficientTree + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(usize) -> f64,
{
    cfg.validate()?;
    let cost = cfg.beta * cfg.beta;
    let mut scheduler = Scheduler::new(cfg.traversal, tree.roots());
    let mut log = MeasurementLog::default();
    let mut support = Vec::new();
    let mut children = Vec::new();
    let mut termination = Termination::Completed;

    while !scheduler.is_empty() {
        if let Some(budget) = cfg.budget {
            if log.energy_spent + cost > budget * (1.0 + 1e-12) {
                termination = Termination::BudgetExhausted;
                break;
            }
        }
        let node = scheduler.pop().unwrap();
        let z: f64 = rng.sample(StandardNormal);
        let y = cfg.beta * coefficient(node) + cfg.noise_std * z;
        let significant = y.abs() >= cfg.tau;
        log.entries.push(Measurement { node, value: y, significant });
        log.energy_spent += cost;
        if significant {
            support.push(node);
            children.clear();
            tree.push_children(node, &mut children);
            scheduler.push_all(&children);
        }
    }
    support.sort_unstable();
    Ok(SensingOutcome {
        support_estimate: support,
        log,
        beta: cfg.beta,
        termination,
        estimates: None,
    })
}

/// Acquires `signal` by projecting onto scaled atoms of `dict`.
pub fn adaptive_sense<R: Rng + ?Sized>(signal: &[f64], dict: &Dictionary, cfg: &SensingConfig, rng: &mut R) -> Result<SensingOutcome> {
    if signal.len() != dict.n() {
        return Err(Error::DimensionMismatch {
            expected: dict.n(),
            found: signal.len(),
        });
    }
    sense_tree(dict.tree(), cfg, rng, |j| dict.project(j, signal))
}

/// `mean_offset + sum_j c_j d_j` where `c` comes from
/// [`SensingOutcome::coefficients`].
pub fn reconstruct_from_outcome(outcome: &SensingOutcome, dict: &Dictionary, mean_offset: Option<&[f64]>) -> Result<Vec<f64>> {
    if !(outcome.beta > 0.0) {
        return Err(Error::arg("outcome has zero beta"));
    }
    let mut x = dict.synthesize(&outcome.coefficients(dict.p()));
    if let Some(mean) = mean_offset {
        if mean.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: mean.len(),
            });
        }
        for (xi, mi) in x.iter_mut().zip(mean) {
            *xi += mi;
        }
    }
    Ok(x)
}

/// Stage-one significance threshold for the two-stage estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Absolute(f64),
    /// `fraction * beta * alpha_min`, resolved with the stage-one `beta`.
    Relative {
        fraction: f64,
        alpha_min: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageConfig {
    pub total_budget: f64,
    pub k: usize,
    /// Share of the budget spent on support recovery.
    pub split: f64,
    pub threshold: Threshold,
    pub noise_std: f64,
    pub traversal: Traversal,
}

impl TwoStageConfig {
    pub fn new(total_budget: f64, k: usize, threshold: Threshold) -> Self {
        Self {
            total_budget,
            k,
            split: 0.5,
            threshold,
            noise_std: 1.0,
            traversal: Traversal::Queue,
        }
    }
}

/// Support recovery with `split * R`, then one fresh measurement of every
/// recovered node with the remaining energy spread evenly.
pub fn two_stage_with<T, R, F>(tree: &T, degree: usize, cfg: &TwoStageConfig, rng: &mut R, mut coefficient: F) -> Result<SensingOutcome>
where
    T: CoefficientTree + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(usize) -> f64,
{
    if !(cfg.total_budget > 0.0) {
        return Err(Error::arg(format!("total budget must be positive, got {}", cfg.total_budget)));
    }
    if cfg.k < 1 || cfg.k > tree.node_count() {
        return Err(Error::arg(format!("k={} must lie in 1..={}", cfg.k, tree.node_count())));
    }
    if !(cfg.split > 0.0 && cfg.split < 1.0) {
        return Err(Error::arg(format!("split must lie in (0, 1), got {}", cfg.split)));
    }
    let stage1_budget = cfg.split * cfg.total_budget;
    let beta = allocate_beta(stage1_budget, degree, cfg.k)?;
    let tau = match cfg.threshold {
        Threshold::Absolute(t) => t,
        Threshold::Relative { fraction, alpha_min } => fraction * beta * alpha_min,
    };
    let stage1 = SensingConfig {
        beta,
        tau,
        noise_std: cfg.noise_std,
        budget: Some(stage1_budget),
        traversal: cfg.traversal,
    };
    let mut outcome = sense_tree(tree, &stage1, rng, &mut coefficient)?;

    let support = outcome.support_estimate.clone();
    let estimates = if support.is_empty() {
        CoefficientEstimates {
            beta: 0.0,
            values: Vec::new(),
            energy_spent: 0.0,
        }
    } else {
        let stage2_budget = (1.0 - cfg.split) * cfg.total_budget;
        let beta2 = (stage2_budget / support.len() as f64).sqrt();
        let values = support
            .iter()
            .map(|&j| {
                let z: f64 = rng.sample(StandardNormal);
                let y = beta2 * coefficient(j) + cfg.noise_std * z;
                (j, y / beta2)
            })
            .collect();
        CoefficientEstimates {
            beta: beta2,
            values,
            energy_spent: beta2 * beta2 * support.len() as f64,
        }
    };
    outcome.estimates = Some(estimates);
    Ok(outcome)
}

/// Two-stage estimator acting on a signal through a dictionary.
pub fn two_stage_estimate<R: Rng + ?Sized>(signal: &[f64], dict: &Dictionary, cfg: &TwoStageConfig, rng: &mut R) -> Result<SensingOutcome> {
    if signal.len() != dict.n() {
        return Err(Error::DimensionMismatch {
            expected: dict.n(),
            found: signal.len(),
        });
    }
    two_stage_with(dict.tree(), dict.tree().degree(), cfg, rng, |j| dict.project(j, signal))
}

//! Alternating minimization of
//! `sum_i 1/2 ||x_i - D a_i||^2 + lambda * Omega(a_i)` subject to
//! `D^T D = I`, where `Omega` is the hierarchical group penalty.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::prox::{tree_group_penalty, tree_prox_in_place, GroupNorm};
use crate::dictionary::{orthonormality_error, Dictionary, ORTHONORMAL_TOL};
use crate::error::{Error, Result};
use crate::linalg::{orthonormal_completion, random_orthonormal};
use crate::tree::{groups_of, is_tree_sparse, GroupSet, TreeTopology};

/// Column-stacked training vectors, centered by their column mean.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    data: DMatrix<f64>,
    mean: Vec<f64>,
}

impl TrainingSet {
    /// Centers `raw` (`n x q`) by subtracting the mean column.
    pub fn from_columns(raw: DMatrix<f64>) -> Result<Self> {
        if raw.ncols() == 0 || raw.nrows() == 0 {
            return Err(Error::arg("training set needs at least one nonempty column"));
        }
        let mean = raw.column_mean();
        let mut data = raw;
        for mut col in data.column_iter_mut() {
            col -= &mean;
        }
        Ok(Self {
            data,
            mean: mean.as_slice().to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn q(&self) -> usize {
        self.data.ncols()
    }

    /// Centered data.
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Uncentered column `i`.
    pub fn original_column(&self, i: usize) -> Vec<f64> {
        self.data.column(i).iter().zip(&self.mean).map(|(x, m)| x + m).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum WeightScheme {
    #[default]
    Uniform,
    /// `rho^depth(g)`.
    DepthDecay(f64),
}

impl WeightScheme {
    pub fn weights(&self, tree: &TreeTopology) -> Vec<f64> {
        match *self {
            WeightScheme::Uniform => vec![1.0; tree.len()],
            WeightScheme::DepthDecay(rho) => (0..tree.len()).map(|i| rho.powi(tree.level_of(i) as i32)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub lambda: f64,
    pub group_norm: GroupNorm,
    pub weights: WeightScheme,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// Relative objective change that ends either loop early; `0` disables.
    pub tol: f64,
    /// Rounds of atom-position swaps tried after the alternation stalls;
    /// `0` disables. A swap is kept only if it lowers the objective, and each
    /// accepted round is followed by up to `outer_iters` more alternations.
    pub position_rounds: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            group_norm: GroupNorm::L2,
            weights: WeightScheme::Uniform,
            outer_iters: 30,
            inner_iters: 50,
            tol: 1e-8,
            position_rounds: 0,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::arg(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if self.outer_iters < 1 || self.inner_iters < 1 {
            return Err(Error::arg("iteration counts must be at least 1"));
        }
        if let WeightScheme::DepthDecay(rho) = self.weights {
            if !(rho >= 0.0) {
                return Err(Error::arg(format!("depth decay must be nonnegative, got {rho}")));
            }
        }
        Ok(())
    }

    pub fn groups(&self, tree: &TreeTopology) -> Result<GroupSet> {
        groups_of(tree, Some(&self.weights.weights(tree)))
    }
}

/// How the first dictionary is chosen.
#[derive(Debug, Clone)]
pub enum Init {
    /// Orthonormalized random training columns.
    DataColumns {
        seed: u64,
    },
    /// Haar-random orthonormal frame.
    Random {
        seed: u64,
    },
    /// Leading left singular vectors of the data, assigned in heap order.
    Principal,
    Provided(DMatrix<f64>),
}

/// `sum_i 1/2 ||x_i - D a_i||^2 + lambda * Omega(a_i)`.
pub fn objective(x: &TrainingSet, atoms: &DMatrix<f64>, codes: &DMatrix<f64>, groups: &GroupSet, cfg: &LearnConfig) -> f64 {
    let resid = x.data() - atoms * codes;
    let fit = 0.5 * resid.norm_squared();
    let pen: f64 = codes
        .column_iter()
        .map(|c| tree_group_penalty(c.as_slice(), groups, cfg.group_norm))
        .sum();
    fit + cfg.lambda * pen
}

/// Codes every training column against `dict`, starting from zero.
pub fn sparse_code(x: &TrainingSet, dict: &Dictionary, cfg: &LearnConfig) -> Result<DMatrix<f64>> {
    let groups = cfg.groups(dict.tree())?;
    code_columns(x, dict.atoms(), &groups, cfg, None)
}

/// Monotone accelerated proximal gradient per column with unit step.
///
/// The gradient uses the Gram matrix `D^T D`, so the unit step is only valid
/// for (numerically) orthonormal atoms.
pub fn code_columns(
    x: &TrainingSet,
    atoms: &DMatrix<f64>,
    groups: &GroupSet,
    cfg: &LearnConfig,
    warm: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    if atoms.nrows() != x.n() {
        return Err(Error::DimensionMismatch {
            expected: x.n(),
            found: atoms.nrows(),
        });
    }
    let err = orthonormality_error(atoms);
    if !(err <= ORTHONORMAL_TOL) {
        return Err(Error::NotOrthonormal(err));
    }
    let p = atoms.ncols();
    if let Some(w) = warm {
        if w.shape() != (p, x.q()) {
            return Err(Error::arg("warm start has the wrong shape"));
        }
    }
    let gram = atoms.tr_mul(atoms);
    let corr = atoms.tr_mul(x.data());
    let columns: Vec<Result<Vec<f64>>> = (0..x.q())
        .into_par_iter()
        .map(|i| {
            let b = corr.column(i).clone_owned();
            let start = match warm {
                Some(w) => w.column(i).clone_owned(),
                None => DVector::zeros(p),
            };
            code_one(&gram, &b, start, groups, cfg)
        })
        .collect();
    let mut codes = DMatrix::zeros(p, x.q());
    for (i, col) in columns.into_iter().enumerate() {
        codes.set_column(i, &DVector::from_vec(col?));
    }
    Ok(codes)
}

// smooth part up to the constant 1/2 ||x||^2
fn smooth(gram: &DMatrix<f64>, b: &DVector<f64>, a: &DVector<f64>) -> f64 {
    0.5 * a.dot(&(gram * a)) - b.dot(a)
}

fn code_one(gram: &DMatrix<f64>, b: &DVector<f64>, start: DVector<f64>, groups: &GroupSet, cfg: &LearnConfig) -> Result<Vec<f64>> {
    let total = |a: &DVector<f64>| smooth(gram, b, a) + cfg.lambda * tree_group_penalty(a.as_slice(), groups, cfg.group_norm);
    let mut x = start;
    let mut fx = total(&x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..cfg.inner_iters {
        let grad = gram * &y - b;
        let mut z = &y - grad;
        tree_prox_in_place(z.as_mut_slice(), groups, cfg.lambda, cfg.group_norm)?;
        let fz = total(&z);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let x_prev = x.clone();
        let f_prev = fx;
        if fz <= fx {
            x = z.clone();
            fx = fz;
        }
        y = &x + (&z - &x) * (t / t_next) + (&x - &x_prev) * ((t - 1.0) / t_next);
        t = t_next;
        let change = (f_prev - fx).abs();
        if change <= cfg.tol * f_prev.abs().max(1e-300) && (&x - &x_prev).norm() <= cfg.tol.max(1e-15) * x.norm().max(1.0) {
            break;
        }
    }
    Ok(x.as_slice().to_vec())
}

/// Result of an orthogonal Procrustes update.
#[derive(Debug, Clone)]
pub struct DictionaryUpdate {
    pub atoms: DMatrix<f64>,
    /// `X A^T` was rank deficient and null directions were completed.
    pub rank_deficient: bool,
}

/// Minimizer of `||X - D A||_F` over `D^T D = I`: `D = U V^T` from the thin
/// SVD of `X A^T`. Null directions are completed deterministically from the
/// columns of `previous` (when given) and then the standard basis.
pub fn update_dictionary(x: &TrainingSet, codes: &DMatrix<f64>, previous: Option<&DMatrix<f64>>) -> Result<DictionaryUpdate> {
    let p = codes.nrows();
    if codes.ncols() != x.q() {
        return Err(Error::DimensionMismatch {
            expected: x.q(),
            found: codes.ncols(),
        });
    }
    if p > x.n() {
        return Err(Error::arg(format!("{p} orthonormal atoms cannot live in dimension {}", x.n())));
    }
    let m = x.data() * codes.transpose();
    let svd = m.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::arg("SVD did not return U"))?;
    let v_t = svd.v_t.ok_or_else(|| Error::arg("SVD did not return V^T"))?;
    let sigma = svd.singular_values;
    let s_max = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = s_max * (x.n().max(p) as f64) * f64::EPSILON;
    let keep: Vec<usize> = (0..p).filter(|&j| s_max > 0.0 && sigma[j] > cutoff).collect();
    let rank_deficient = keep.len() < p;

    let u_full = if rank_deficient {
        let mut candidates: Vec<DVector<f64>> = keep.iter().map(|&j| u.column(j).clone_owned()).collect();
        if let Some(prev) = previous {
            candidates.extend(prev.column_iter().map(|c| c.clone_owned()));
        }
        // kept columns are already orthonormal, so they survive in front
        let completed = orthonormal_completion(x.n(), p, candidates);
        // reinsert kept columns at their singular-value slots
        let mut out = DMatrix::zeros(x.n(), p);
        let mut extra = keep.len();
        let mut next_kept = 0;
        for j in 0..p {
            if next_kept < keep.len() && keep[next_kept] == j {
                out.set_column(j, &completed.column(next_kept));
                next_kept += 1;
            } else {
                out.set_column(j, &completed.column(extra));
                extra += 1;
            }
        }
        out
    } else {
        u
    };
    let atoms = u_full * v_t;
    let err = orthonormality_error(&atoms);
    if !(err <= ORTHONORMAL_TOL) {
        return Err(Error::NotOrthonormal(err));
    }
    Ok(DictionaryUpdate { atoms, rank_deficient })
}

#[derive(Debug, Clone, Default)]
pub struct LearnReport {
    /// Objective at the initial dictionary, then after every alternation and
    /// every accepted swap round.
    pub objectives: Vec<f64>,
    pub rank_deficient_updates: usize,
    /// Rounds in which at least one atom-position swap was accepted.
    pub position_swaps: usize,
    pub lambda: f64,
}

impl LearnReport {
    pub fn alternations(&self) -> usize {
        self.objectives.len().saturating_sub(1 + self.position_swaps)
    }
}

#[derive(Debug, Clone)]
pub struct Learned {
    pub dictionary: Dictionary,
    pub codes: DMatrix<f64>,
    pub report: LearnReport,
}

impl Learned {
    /// Mean number of coefficients with `|a| > tol` per column.
    pub fn mean_sparsity(&self, tol: f64) -> f64 {
        mean_sparsity(&self.codes, tol)
    }

    /// Fraction of columns whose nonzero pattern is rooted-connected.
    pub fn tree_sparse_fraction(&self, tol: f64) -> f64 {
        let tree = self.dictionary.tree();
        let ok = self.codes.column_iter().filter(|c| is_tree_sparse(c.as_slice(), tree, tol)).count();
        ok as f64 / self.codes.ncols().max(1) as f64
    }
}

pub fn mean_sparsity(codes: &DMatrix<f64>, tol: f64) -> f64 {
    let nnz = codes.iter().filter(|v| v.abs() > tol).count();
    nnz as f64 / codes.ncols().max(1) as f64
}

pub fn initial_dictionary(x: &TrainingSet, p: usize, init: &Init) -> Result<DMatrix<f64>> {
    let n = x.n();
    let atoms = match init {
        Init::DataColumns { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let picks = sample(&mut rng, x.q(), p.min(x.q())).into_vec();
            let mut candidates: Vec<DVector<f64>> = picks.iter().map(|&i| x.data().column(i).clone_owned()).collect();
            let filler = random_orthonormal(n, p, &mut rng);
            candidates.extend(filler.column_iter().map(|c| c.clone_owned()));
            orthonormal_completion(n, p, candidates)
        }
        Init::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            random_orthonormal(n, p, &mut rng)
        }
        Init::Principal => {
            let svd = x.data().clone().svd(true, false);
            let u = svd.u.ok_or_else(|| Error::arg("SVD did not return U"))?;
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
            let candidates: Vec<DVector<f64>> = order.iter().map(|&j| u.column(j).clone_owned()).collect();
            orthonormal_completion(n, p, candidates)
        }
        Init::Provided(d) => {
            if d.shape() != (n, p) {
                return Err(Error::arg(format!("provided dictionary is {:?}, expected ({n}, {p})", d.shape())));
            }
            d.clone()
        }
    };
    let err = orthonormality_error(&atoms);
    if !(err <= ORTHONORMAL_TOL) {
        return Err(Error::NotOrthonormal(err));
    }
    Ok(atoms)
}

/// Alternates sparse coding and the Procrustes update.
pub fn learn(x: &TrainingSet, tree: &TreeTopology, cfg: &LearnConfig, init: &Init) -> Result<Learned> {
    cfg.validate()?;
    let p = tree.len();
    if p > x.n() {
        return Err(Error::arg(format!("{p} orthonormal atoms cannot live in dimension {}", x.n())));
    }
    let groups = cfg.groups(tree)?;
    let mut atoms = initial_dictionary(x, p, init)?;
    let mut codes = code_columns(x, &atoms, &groups, cfg, None)?;
    let mut report = LearnReport {
        objectives: vec![objective(x, &atoms, &codes, &groups, cfg)],
        rank_deficient_updates: 0,
        position_swaps: 0,
        lambda: cfg.lambda,
    };
    let mut alternations = 0;
    let mut rounds = 0;
    loop {
        while alternations < cfg.outer_iters {
            alternations += 1;
            let update = update_dictionary(x, &codes, Some(&atoms))?;
            if update.rank_deficient {
                report.rank_deficient_updates += 1;
            }
            atoms = update.atoms;
            codes = code_columns(x, &atoms, &groups, cfg, Some(&codes))?;
            let prev = *report.objectives.last().unwrap();
            let obj = objective(x, &atoms, &codes, &groups, cfg);
            report.objectives.push(obj);
            if cfg.tol > 0.0 && (prev - obj).abs() <= cfg.tol * prev.abs().max(1e-300) {
                break;
            }
        }
        if rounds == cfg.position_rounds {
            break;
        }
        rounds += 1;
        let current = *report.objectives.last().unwrap();
        match swap_positions(x, &atoms, &groups, cfg, current)? {
            Some((swapped, swapped_codes)) => {
                atoms = swapped;
                codes = swapped_codes;
                report.objectives.push(objective(x, &atoms, &codes, &groups, cfg));
                report.position_swaps += 1;
            }
            None => break,
        }
        alternations = 0;
    }
    Ok(Learned {
        dictionary: Dictionary::new(atoms, tree.clone())?,
        codes,
        report,
    })
}

// For orthonormal atoms the codes are exact proxes of the correlations and
// the objective splits into an out-of-span constant plus a per-column term.
fn coded_cost(corr: &DMatrix<f64>, groups: &GroupSet, cfg: &LearnConfig) -> Result<f64> {
    let terms: Vec<Result<f64>> = (0..corr.ncols())
        .into_par_iter()
        .map(|i| {
            let c = corr.column(i);
            let mut a = c.as_slice().to_vec();
            tree_prox_in_place(&mut a, groups, cfg.lambda, cfg.group_norm)?;
            let fit: f64 = a.iter().zip(c.iter()).map(|(u, v)| 0.5 * (u - v).powi(2)).sum();
            Ok(fit + cfg.lambda * tree_group_penalty(&a, groups, cfg.group_norm))
        })
        .collect();
    terms.into_iter().sum()
}

/// One first-improvement pass over all pairs of atom positions. Returns the
/// permuted atoms and their exact codes if the objective went below `current`.
fn swap_positions(
    x: &TrainingSet,
    atoms: &DMatrix<f64>,
    groups: &GroupSet,
    cfg: &LearnConfig,
    current: f64,
) -> Result<Option<(DMatrix<f64>, DMatrix<f64>)>> {
    let p = atoms.ncols();
    let mut corr = atoms.tr_mul(x.data());
    let outside = 0.5 * (x.data().norm_squared() - corr.norm_squared()).max(0.0);
    let mut best = (outside + coded_cost(&corr, groups, cfg)?).min(current);
    let mut perm: Vec<usize> = (0..p).collect();
    let mut moved = false;
    for i in 0..p {
        for j in i + 1..p {
            corr.swap_rows(i, j);
            let cost = outside + coded_cost(&corr, groups, cfg)?;
            if cost < best - 1e-9 * best.abs() {
                best = cost;
                perm.swap(i, j);
                moved = true;
            } else {
                corr.swap_rows(i, j);
            }
        }
    }
    if !moved {
        return Ok(None);
    }
    let mut swapped = DMatrix::zeros(x.n(), p);
    for (slot, &from) in perm.iter().enumerate() {
        swapped.set_column(slot, &atoms.column(from));
    }
    let mut codes = corr;
    for mut c in codes.column_iter_mut() {
        tree_prox_in_place(c.as_mut_slice(), groups, cfg.lambda, cfg.group_norm)?;
    }
    Ok(Some((swapped, codes)))
}

/// Bisection on `lambda` so that one-shot codes against `atoms` have a mean
/// column sparsity close to `target`.
pub fn search_lambda(x: &TrainingSet, atoms: &DMatrix<f64>, groups: &GroupSet, norm: GroupNorm, target: f64) -> Result<f64> {
    let corr = atoms.tr_mul(x.data());
    let sparsity_at = |lambda: f64| -> Result<f64> {
        let mut nnz = 0usize;
        for col in corr.column_iter() {
            let mut u = col.as_slice().to_vec();
            tree_prox_in_place(&mut u, groups, lambda, norm)?;
            nnz += u.iter().filter(|v| **v != 0.0).count();
        }
        Ok(nnz as f64 / x.q() as f64)
    };
    let mut hi = corr
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12);
    let mut lo = hi * 1e-9;
    if sparsity_at(lo)? <= target {
        return Ok(lo);
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if sparsity_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Learns with `lambda` retuned so codes average `target` nonzeros per
/// column: tune on the initial dictionary, learn, retune, learn again.
pub fn learn_to_sparsity(x: &TrainingSet, tree: &TreeTopology, cfg: &LearnConfig, init: &Init, target: f64) -> Result<Learned> {
    let groups = cfg.groups(tree)?;
    let start = initial_dictionary(x, tree.len(), init)?;
    let mut cfg = cfg.clone();
    cfg.lambda = search_lambda(x, &start, &groups, cfg.group_norm, target)?;
    let first = learn(x, tree, &cfg, &Init::Provided(start))?;
    cfg.lambda = search_lambda(x, first.dictionary.atoms(), &groups, cfg.group_norm, target)?;
    learn(x, tree, &cfg, &Init::Provided(first.dictionary.atoms().clone()))
}

//! SNR-versus-measurements sweeps across sensing strategies.
//!
//! Every arm reconstructs the raw test image and is scored against it. The
//! dictionary arms know the training mean, so they sense `x - mean` (any
//! projection of the mean can be subtracted from a measurement exactly) and
//! add the mean back. Direct Haar sensing works on the raw image.
//!
//! Random numbers are shared across budgets: a given (image, arm, trial)
//! sees the same noise draws and the same random test vectors at every `R`,
//! so differences between budget columns are not sampling noise.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::baselines::cosamp::{model_cosamp, CosampOptions};
use crate::baselines::haar::{haar2d_forward, haar2d_inverse, HaarQuadtree};
use crate::baselines::lasso::{lambda_max, lasso, LassoOptions};
use crate::baselines::pca::{pca_fit, pca_reconstruct, PcaModel};
use crate::dictionary::Dictionary;
use crate::dictlearn::TrainingSet;
use crate::error::{Error, Result};
use crate::harness::config::ConfigMap;
use crate::harness::output::ComparisonRow;
use crate::harness::seeds::{trial_rng, Workers};
use crate::harness::snr::{snr_db, Snr};
use crate::harness::theorem::parse_traversal;
use crate::sensing::{allocate_beta, sense_tree, SensingConfig, SensingOutcome, Traversal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    AdaptiveDict,
    AdaptiveHaar,
    Pca,
    Lasso,
    ModelCosamp,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::AdaptiveDict,
        Method::AdaptiveHaar,
        Method::Pca,
        Method::Lasso,
        Method::ModelCosamp,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::AdaptiveDict => "adaptive-dict",
            Method::AdaptiveHaar => "adaptive-haar",
            Method::Pca => "pca",
            Method::Lasso => "lasso",
            Method::ModelCosamp => "model-cosamp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    InSample,
    HeldOut,
}

impl Split {
    pub fn label(&self) -> &'static str {
        match self {
            Split::InSample => "in-sample",
            Split::HeldOut => "held-out",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestImage {
    pub label: String,
    pub split: Split,
    /// Column-major pixels.
    pub pixels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    /// Empty means `n, n/8, n/32`.
    pub budgets: Vec<f64>,
    /// Thresholds for the learned-dictionary adaptive arm.
    pub taus: Vec<f64>,
    /// Thresholds for direct Haar sensing.
    pub haar_taus: Vec<f64>,
    /// Measurement counts reported for every arm; empty picks powers of two
    /// up to `p`, plus `p`.
    pub m_grid: Vec<usize>,
    /// Sparsity used to spread the budget in the adaptive dictionary arm;
    /// `None` means `p`.
    pub laser_k: Option<usize>,
    /// Candidate Lasso weights as fractions of `lambda_max`.
    pub lambda_fractions: Vec<f64>,
    pub noise_std: f64,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub traversal: Traversal,
    /// Record wall time per reconstruction (makes output nondeterministic).
    pub timing: bool,
    pub lasso: LassoOptions,
    pub cosamp: CosampOptions,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            budgets: Vec::new(),
            taus: vec![0.0, 0.04, 0.06, 0.1],
            haar_taus: vec![0.0, 0.5],
            m_grid: Vec::new(),
            laser_k: None,
            lambda_fractions: vec![1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3],
            noise_std: 1.0,
            trials: 10,
            seed: 0,
            methods: Method::ALL.to_vec(),
            traversal: Traversal::Queue,
            timing: false,
            lasso: LassoOptions { max_iters: 300, tol: 1e-6 },
            cosamp: CosampOptions::default(),
        }
    }
}

pub const COMPARE_KEYS: &[&str] = &[
    "budgets",
    "taus",
    "haar_taus",
    "m_grid",
    "laser_k",
    "lambda_fractions",
    "noise_std",
    "trials",
    "seed",
    "methods",
    "traversal",
    "timing",
    "lasso_iters",
    "cosamp_iters",
];

impl CompareConfig {
    /// Reads the keys in [`COMPARE_KEYS`]; other keys are left to the caller.
    pub fn from_config(c: &ConfigMap) -> Result<Self> {
        let d = Self::default();
        let methods: Vec<String> = c.get_list("methods", Vec::new())?;
        Ok(Self {
            budgets: c.get_list("budgets", d.budgets)?,
            taus: c.get_list("taus", d.taus)?,
            haar_taus: c.get_list("haar_taus", d.haar_taus)?,
            m_grid: c.get_list("m_grid", d.m_grid)?,
            laser_k: c.get("laser_k")?,
            lambda_fractions: c.get_list("lambda_fractions", d.lambda_fractions)?,
            noise_std: c.get_or("noise_std", d.noise_std)?,
            trials: c.get_or("trials", d.trials)?,
            seed: c.get_or("seed", d.seed)?,
            methods: if c.contains("methods") {
                methods.iter().map(|s| Method::parse(s)).collect::<Result<_>>()?
            } else {
                d.methods
            },
            traversal: c.raw("traversal").map(parse_traversal).transpose()?.unwrap_or(d.traversal),
            timing: c.get_or("timing", d.timing)?,
            lasso: LassoOptions {
                max_iters: c.get_or("lasso_iters", d.lasso.max_iters)?,
                ..d.lasso
            },
            cosamp: CosampOptions {
                max_iters: c.get_or("cosamp_iters", d.cosamp.max_iters)?,
                ..d.cosamp
            },
        })
    }
}

/// Everything the sweep runs against.
#[derive(Debug, Clone)]
pub struct CompareInputs {
    pub dictionary: Dictionary,
    /// Mean removed before learning; added back by the dictionary arms.
    pub mean: Vec<f64>,
    /// Centered training data for the principal components.
    pub training: TrainingSet,
    /// Raw signal used only to pick the Lasso weight.
    pub tuning: Vec<f64>,
    pub images: Vec<TestImage>,
}

impl CompareInputs {
    pub fn n(&self) -> usize {
        self.dictionary.n()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        let check = |what: &str, len: usize| {
            if len != n {
                Err(Error::arg(format!("{what} has length {len}, dictionary expects {n}")))
            } else {
                Ok(())
            }
        };
        check("mean", self.mean.len())?;
        check("training data", self.training.n())?;
        check("tuning signal", self.tuning.len())?;
        for img in &self.images {
            check(&format!("image {}", img.label), img.pixels.len())?;
        }
        if self.images.is_empty() {
            return Err(Error::arg("no test images"));
        }
        Ok(())
    }
}

pub fn default_budgets(n: usize) -> Vec<f64> {
    vec![n as f64, n as f64 / 8.0, n as f64 / 32.0]
}

pub fn default_m_grid(p: usize) -> Vec<usize> {
    let mut g: Vec<usize> = (2..).map(|e| 1usize << e).take_while(|&m| m < p).collect();
    g.push(p);
    g
}

// labels for derive_seed
const ENSEMBLE: u64 = 1;
const TUNE: u64 = 2;
const NOISE_PROJ: u64 = 3;
const NOISE_PCA: u64 = 4;
const NOISE_DICT: u64 = 5;
const NOISE_HAAR: u64 = 6;

/// Gaussian test directions with unit-norm rows; the ensemble for budget
/// `R` is this matrix times `sqrt(R/m)`.
fn unit_rows<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut g = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut row in g.row_iter_mut() {
        let s = 1.0 / row.norm();
        row *= s;
    }
    g
}

fn noise<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn add_mean(mut x: Vec<f64>, mean: &[f64]) -> Vec<f64> {
    for (a, b) in x.iter_mut().zip(mean) {
        *a += b;
    }
    x
}

struct Projected {
    m: usize,
    /// `G D`
    gd: DMatrix<f64>,
    g: DMatrix<f64>,
}

struct Prepared<'a> {
    inputs: &'a CompareInputs,
    cfg: &'a CompareConfig,
    budgets: Vec<f64>,
    m_grid: Vec<usize>,
    laser_k: usize,
    pca: Option<PcaModel>,
    /// Lasso weight per (budget index, grid index).
    lambdas: Vec<Vec<f64>>,
    side: usize,
}

fn row(method: Method, img: &TestImage, budget: f64, tau: Option<f64>, m: usize, trial: usize) -> ComparisonRow {
    ComparisonRow {
        method: method.label().to_string(),
        image: img.label.clone(),
        split: img.split.label().to_string(),
        budget,
        tau,
        m,
        natural_stop: 0,
        trial,
        snr_db: None,
        exact: 0,
        support_exact: None,
        energy_spent: 0.0,
        wall_time_ms: None,
    }
}

fn elapsed_ms(start: Option<Instant>) -> Option<f64> {
    start.map(|s| s.elapsed().as_secs_f64() * 1e3)
}

impl Prepared<'_> {
    fn lasso_signal(&self, a: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let fit = lasso(a, y, lambda, &self.cfg.lasso)?;
        Ok(self.inputs.dictionary.synthesize(&fit.coeffs))
    }

    fn timer(&self) -> Option<Instant> {
        self.cfg.timing.then(Instant::now)
    }

    /// Prefix rows at each grid point the session reached, then the
    /// natural-stop row.
    #[allow(clippy::too_many_arguments)]
    fn adaptive_rows(
        &self,
        method: Method,
        img: &TestImage,
        budget: f64,
        tau: f64,
        trial: usize,
        outcome: &SensingOutcome,
        wall: Option<f64>,
        rebuild: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
        p: usize,
        out: &mut Vec<ComparisonRow>,
    ) -> Result<()> {
        let total = outcome.log().m();
        let cost = outcome.beta() * outcome.beta();
        for &m in self.m_grid.iter().filter(|&&m| m < total) {
            let x_hat = rebuild(&outcome.prefix_coefficients(p, m))?;
            let mut r = row(method, img, budget, Some(tau), m, trial);
            r.set_snr(snr_db(&img.pixels, &x_hat)?);
            r.energy_spent = m as f64 * cost;
            r.wall_time_ms = wall;
            out.push(r);
        }
        let x_hat = rebuild(&outcome.coefficients(p))?;
        let mut r = row(method, img, budget, Some(tau), total, trial);
        r.natural_stop = 1;
        r.set_snr(snr_db(&img.pixels, &x_hat)?);
        r.energy_spent = outcome.log().energy_spent();
        r.wall_time_ms = wall;
        out.push(r);
        Ok(())
    }

    fn run_trial(&self, trial: usize) -> Result<Vec<ComparisonRow>> {
        let cfg = self.cfg;
        let inputs = self.inputs;
        let dict = &inputs.dictionary;
        let (n, p) = (dict.n(), dict.p());
        let seed = cfg.seed;
        let wants = |m: Method| cfg.methods.contains(&m);
        let mut out = Vec::new();

        let projected: Vec<Projected> = if wants(Method::Lasso) || wants(Method::ModelCosamp) {
            self.m_grid
                .iter()
                .map(|&m| {
                    let mut rng = trial_rng(seed, &[ENSEMBLE, m as u64], trial as u64);
                    let g = unit_rows(m, n, &mut rng);
                    let gd = &g * dict.atoms();
                    Projected { m, gd, g }
                })
                .collect()
        } else {
            Vec::new()
        };

        for (ii, img) in inputs.images.iter().enumerate() {
            let centered: Vec<f64> = img.pixels.iter().zip(&inputs.mean).map(|(x, m)| x - m).collect();
            let xc = DVector::from_column_slice(&centered);

            if wants(Method::AdaptiveDict) {
                for (ti, &tau) in cfg.taus.iter().enumerate() {
                    for &budget in &self.budgets {
                        let mut rng = trial_rng(seed, &[NOISE_DICT, ii as u64, ti as u64], trial as u64);
                        let sc = SensingConfig {
                            beta: allocate_beta(budget, dict.tree().degree(), self.laser_k)?,
                            tau,
                            noise_std: cfg.noise_std,
                            budget: Some(budget),
                            traversal: cfg.traversal,
                        };
                        let start = self.timer();
                        let outcome = sense_tree(dict.tree(), &sc, &mut rng, |j| dict.project(j, &centered))?;
                        let wall = elapsed_ms(start);
                        let rebuild = |c: &[f64]| Ok(add_mean(dict.synthesize(c), &inputs.mean));
                        self.adaptive_rows(Method::AdaptiveDict, img, budget, tau, trial, &outcome, wall, &rebuild, p, &mut out)?;
                    }
                }
            }

            if wants(Method::AdaptiveHaar) {
                let coeffs = haar2d_forward(&img.pixels, self.side)?;
                let tree = HaarQuadtree::new(self.side)?;
                for (ti, &tau) in cfg.haar_taus.iter().enumerate() {
                    for &budget in &self.budgets {
                        let mut rng = trial_rng(seed, &[NOISE_HAAR, ii as u64, ti as u64], trial as u64);
                        let sc = SensingConfig {
                            beta: (budget / n as f64).sqrt(),
                            tau,
                            noise_std: cfg.noise_std,
                            budget: Some(budget),
                            traversal: cfg.traversal,
                        };
                        let start = self.timer();
                        let outcome = sense_tree(&tree, &sc, &mut rng, |j| coeffs[j])?;
                        let wall = elapsed_ms(start);
                        let side = self.side;
                        let rebuild = |c: &[f64]| haar2d_inverse(c, side);
                        self.adaptive_rows(Method::AdaptiveHaar, img, budget, tau, trial, &outcome, wall, &rebuild, n, &mut out)?;
                    }
                }
            }

            if let (true, Some(model)) = (wants(Method::Pca), &self.pca) {
                for &m in self.m_grid.iter().filter(|&&m| m <= model.r()) {
                    let sub = model.truncated(m)?;
                    for &budget in &self.budgets {
                        let mut rng = trial_rng(seed, &[NOISE_PCA, ii as u64, m as u64], trial as u64);
                        let start = self.timer();
                        let rec = pca_reconstruct(&sub, &img.pixels, budget, cfg.noise_std, &mut rng)?;
                        let mut r = row(Method::Pca, img, budget, None, m, trial);
                        r.wall_time_ms = elapsed_ms(start);
                        r.set_snr(snr_db(&img.pixels, &rec.signal)?);
                        r.energy_spent = rec.energy_spent;
                        out.push(r);
                    }
                }
            }

            for (gi, proj) in projected.iter().enumerate() {
                let m = proj.m;
                let mut rng = trial_rng(seed, &[NOISE_PROJ, ii as u64, m as u64], trial as u64);
                let z = noise(m, &mut rng);
                let gx = &proj.g * &xc;
                let energy: f64 = proj.g.row_iter().map(|r| r.norm_squared()).sum();
                for (bi, &budget) in self.budgets.iter().enumerate() {
                    let s = (budget / m as f64).sqrt();
                    let a = &proj.gd * s;
                    let y: Vec<f64> = (&gx * s + &z * cfg.noise_std).iter().copied().collect();
                    if wants(Method::Lasso) {
                        let start = self.timer();
                        let x_hat = add_mean(self.lasso_signal(&a, &y, self.lambdas[bi][gi])?, &inputs.mean);
                        let mut r = row(Method::Lasso, img, budget, None, m, trial);
                        r.wall_time_ms = elapsed_ms(start);
                        r.set_snr(snr_db(&img.pixels, &x_hat)?);
                        r.energy_spent = s * s * energy;
                        out.push(r);
                    }
                    if wants(Method::ModelCosamp) {
                        let k = cosamp_sparsity(m, p);
                        let start = self.timer();
                        let fit = model_cosamp(&a, &y, k, dict.tree(), &cfg.cosamp)?;
                        let x_hat = add_mean(dict.synthesize(fit.coeffs.values()), &inputs.mean);
                        let mut r = row(Method::ModelCosamp, img, budget, None, m, trial);
                        r.wall_time_ms = elapsed_ms(start);
                        r.set_snr(snr_db(&img.pixels, &x_hat)?);
                        r.energy_spent = s * s * energy;
                        out.push(r);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Tree sparsity handed to model-based CoSaMP at `m` measurements: a third
/// of `m`, so the merged support of the least-squares step fits in `m`.
pub fn cosamp_sparsity(m: usize, p: usize) -> usize {
    (m / 3).clamp(1, p)
}

/// Picks the Lasso weight for each (budget, m) by maximizing SNR on the
/// tuning signal under that cell's ensemble and noise.
fn tune_lambdas(inputs: &CompareInputs, cfg: &CompareConfig, budgets: &[f64], m_grid: &[usize]) -> Result<Vec<Vec<f64>>> {
    let dict = &inputs.dictionary;
    let centered: Vec<f64> = inputs.tuning.iter().zip(&inputs.mean).map(|(x, m)| x - m).collect();
    let xc = DVector::from_column_slice(&centered);
    let mut per_m = Vec::with_capacity(m_grid.len());
    for &m in m_grid {
        let mut rng = trial_rng(cfg.seed, &[TUNE, m as u64], 0);
        let g = unit_rows(m, dict.n(), &mut rng);
        let gd = &g * dict.atoms();
        let z = noise(m, &mut rng);
        let gx = &g * &xc;
        let mut row = Vec::with_capacity(budgets.len());
        for &budget in budgets {
            let s = (budget / m as f64).sqrt();
            let a = &gd * s;
            let y: Vec<f64> = (&gx * s + &z * cfg.noise_std).iter().copied().collect();
            let lmax = lambda_max(&a, &y);
            let mut best = (f64::NEG_INFINITY, lmax * cfg.lambda_fractions[0]);
            for &f in &cfg.lambda_fractions {
                let lambda = lmax * f;
                let fit = lasso(&a, &y, lambda, &cfg.lasso)?;
                let x_hat = add_mean(dict.synthesize(&fit.coeffs), &inputs.mean);
                let score = match snr_db(&inputs.tuning, &x_hat)? {
                    Snr::Exact => f64::INFINITY,
                    Snr::Db(v) => v,
                };
                if score > best.0 {
                    best = (score, lambda);
                }
            }
            row.push(best.1);
        }
        per_m.push(row);
    }
    // transpose to [budget][m]
    Ok((0..budgets.len()).map(|b| per_m.iter().map(|r| r[b]).collect()).collect())
}

pub fn compare_methods(inputs: &CompareInputs, cfg: &CompareConfig, workers: &Workers) -> Result<Vec<ComparisonRow>> {
    inputs.validate()?;
    if cfg.trials < 1 {
        return Err(Error::arg("trials must be at least 1"));
    }
    let dict = &inputs.dictionary;
    let (n, p) = (dict.n(), dict.p());
    let side = (n as f64).sqrt().round() as usize;
    let haar_ok = side * side == n && side.is_power_of_two();
    if cfg.methods.contains(&Method::AdaptiveHaar) && !haar_ok {
        return Err(Error::arg(format!("direct Haar sensing needs a square power-of-two image, n = {n}")));
    }
    let budgets = if cfg.budgets.is_empty() {
        default_budgets(n)
    } else {
        cfg.budgets.clone()
    };
    if budgets.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::arg("budgets must be positive"));
    }
    let mut m_grid = if cfg.m_grid.is_empty() { default_m_grid(p) } else { cfg.m_grid.clone() };
    m_grid.sort_unstable();
    m_grid.dedup();
    if m_grid.first() == Some(&0) || m_grid.last().is_some_and(|&m| m > n) {
        return Err(Error::arg(format!("measurement counts must lie in 1..={n}")));
    }
    if cfg.lambda_fractions.is_empty() && cfg.methods.contains(&Method::Lasso) {
        return Err(Error::arg("lambda_fractions is empty"));
    }
    let pca = if cfg.methods.contains(&Method::Pca) {
        let max_r = m_grid.last().copied().unwrap_or(0);
        Some(pca_fit(&inputs.training, max_r).or_else(|_| {
            // fall back to the numerical rank
            let cap = inputs.training.n().min(inputs.training.q());
            (0..=cap.min(max_r))
                .rev()
                .find_map(|r| pca_fit(&inputs.training, r).ok())
                .ok_or_else(|| Error::arg("cannot fit principal components"))
        })?)
    } else {
        None
    };
    let lambdas = if cfg.methods.contains(&Method::Lasso) {
        tune_lambdas(inputs, cfg, &budgets, &m_grid)?
    } else {
        Vec::new()
    };
    let prepared = Prepared {
        inputs,
        cfg,
        budgets,
        m_grid,
        laser_k: cfg.laser_k.unwrap_or(p),
        pca,
        lambdas,
        side,
    };
    let per_trial = workers.try_map(cfg.trials, |t| prepared.run_trial(t))?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Mean SNR of a group of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub tau: Option<f64>,
    pub budget: f64,
    /// `None` for the natural-stop group.
    pub m: Option<usize>,
    pub mean_m: f64,
    /// Mean over finite values.
    pub mean_snr_db: f64,
    pub exact: usize,
    pub count: usize,
}

/// Groups by (method, tau, R, m) with natural-stop rows pooled per
/// (method, tau, R). Group order follows first appearance.
pub fn summarize(rows: &[ComparisonRow]) -> Vec<SummaryRow> {
    let mut groups: Vec<(SummaryRow, f64, usize)> = Vec::new();
    for r in rows {
        let m = (r.natural_stop == 0).then_some(r.m);
        let pos = groups.iter().position(|(g, _, _)| {
            g.method == r.method && g.tau.map(f64::to_bits) == r.tau.map(f64::to_bits) && g.budget.to_bits() == r.budget.to_bits() && g.m == m
        });
        let idx = pos.unwrap_or_else(|| {
            groups.push((
                SummaryRow {
                    method: r.method.clone(),
                    tau: r.tau,
                    budget: r.budget,
                    m,
                    mean_m: 0.0,
                    mean_snr_db: 0.0,
                    exact: 0,
                    count: 0,
                },
                0.0,
                0,
            ));
            groups.len() - 1
        });
        let (g, snr_sum, finite) = &mut groups[idx];
        g.count += 1;
        g.mean_m += r.m as f64;
        g.exact += r.exact as usize;
        if let Some(v) = r.snr_db {
            *snr_sum += v;
            *finite += 1;
        }
    }
    groups
        .into_iter()
        .map(|(mut g, s, f)| {
            g.mean_m /= g.count as f64;
            g.mean_snr_db = if f > 0 { s / f as f64 } else { f64::INFINITY };
            g
        })
        .collect()
}

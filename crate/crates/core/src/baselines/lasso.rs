//! Gaussian random projections and l1-regularized recovery.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};

/// `m x n` Gaussian test vectors, each row rescaled to norm `sqrt(R/m)` so
/// the ensemble spends exactly `R`.
#[derive(Debug, Clone)]
pub struct RandomProjectionEnsemble {
    matrix: DMatrix<f64>,
    seed: u64,
    budget: f64,
}

impl RandomProjectionEnsemble {
    pub fn new(m: usize, n: usize, budget: f64, seed: u64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::arg("ensemble needs m >= 1 and n >= 1"));
        }
        if !(budget > 0.0) {
            return Err(Error::arg(format!("budget must be positive, got {budget}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut matrix = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let row_norm = (budget / m as f64).sqrt();
        for mut row in matrix.row_iter_mut() {
            let s = row_norm / row.norm();
            row *= s;
        }
        Ok(Self { matrix, seed, budget })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn m(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// `sum_i ||phi_i||^2`.
    pub fn energy(&self) -> f64 {
        self.matrix.norm_squared()
    }

    /// `Phi x + sigma z`.
    pub fn measure<R: Rng + ?Sized>(&self, x: &[f64], noise_std: f64, rng: &mut R) -> Result<Vec<f64>> {
        if x.len() != self.matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.ncols(),
                found: x.len(),
            });
        }
        let y = &self.matrix * DVector::from_column_slice(x);
        Ok(y.iter().map(|v| v + noise_std * rng.sample::<f64, _>(StandardNormal)).collect())
    }

    /// Effective sensing matrix `Phi D` in the coefficient domain.
    pub fn in_dictionary(&self, dict: &Dictionary) -> Result<DMatrix<f64>> {
        if dict.n() != self.matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.ncols(),
                found: dict.n(),
            });
        }
        Ok(&self.matrix * dict.atoms())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    pub max_iters: usize,
    /// Relative iterate change that ends the solve.
    pub tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { max_iters: 500, tol: 1e-7 }
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub coeffs: Vec<f64>,
    pub iterations: usize,
    /// Objective after each accepted iteration, starting at the zero vector.
    pub objectives: Vec<f64>,
}

fn soft_threshold(v: &DVector<f64>, t: f64) -> DVector<f64> {
    v.map(|x| x.signum() * (x.abs() - t).max(0.0))
}

/// Largest eigenvalue of `A^T A` by power iteration, used as the starting
/// Lipschitz estimate for backtracking.
fn lipschitz_estimate(a: &DMatrix<f64>) -> f64 {
    let p = a.ncols();
    let mut v = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..30 {
        let w = a.tr_mul(&(a * &v));
        let nrm = w.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        lambda = nrm;
        v = w / nrm;
    }
    lambda
}

/// Solves `min 1/2 ||y - A a||^2 + lambda ||a||_1` with monotone FISTA and
/// backtracking on the step size.
pub fn lasso(a: &DMatrix<f64>, y: &[f64], lambda: f64, opts: &LassoOptions) -> Result<LassoFit> {
    if y.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: y.len(),
        });
    }
    if !(lambda >= 0.0) {
        return Err(Error::arg(format!("lambda must be nonnegative, got {lambda}")));
    }
    let p = a.ncols();
    let y = DVector::from_column_slice(y);
    let penalty = |x: &DVector<f64>| lambda * x.lp_norm(1);

    // A x, A z and A y_k are carried along so each iteration costs one
    // product with A^T plus one with A per backtracking trial
    let mut lip = lipschitz_estimate(a).max(1e-12);
    let slack = 1e-12 * y.norm_squared() + 1e-300;
    let mut x = DVector::zeros(p);
    let mut ax = DVector::zeros(a.nrows());
    let mut fx = 0.5 * y.norm_squared();
    let mut objectives = vec![fx];
    let mut z_prev = x.clone();
    let mut yk = x.clone();
    let mut ayk = ax.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let resid = &ayk - &y;
        let f_y = 0.5 * resid.norm_squared();
        let grad = a.tr_mul(&resid);
        let (z, az) = loop {
            let cand = soft_threshold(&(&yk - &grad / lip), lambda / lip);
            let acand = a * &cand;
            let diff = &cand - &yk;
            let quad = f_y + grad.dot(&diff) + 0.5 * lip * diff.norm_squared();
            // slack on the scale of the data absorbs rounding once f is tiny
            if 0.5 * (&acand - &y).norm_squared() <= quad + slack {
                break (cand, acand);
            }
            lip *= 2.0;
            if !(lip.is_finite()) || 1.0 / lip < 1e-300 {
                return Err(Error::StepUnderflow {
                    iters: iter,
                    step: 1.0 / lip,
                });
            }
        };
        let fz = 0.5 * (&az - &y).norm_squared() + penalty(&z);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let x_prev = x.clone();
        let ax_prev = ax.clone();
        if fz <= fx {
            x = z.clone();
            ax = az.clone();
            fx = fz;
        }
        objectives.push(fx);
        let (c1, c2) = (t / t_next, (t - 1.0) / t_next);
        yk = &x + (&z - &x) * c1 + (&x - &x_prev) * c2;
        ayk = if iter % 16 == 15 {
            // the recurrences drift; resync against the true products
            ax = a * &x;
            a * &yk
        } else {
            &ax + (&az - &ax) * c1 + (&ax - &ax_prev) * c2
        };
        t = t_next;
        let step = (&z - &z_prev).norm();
        z_prev = z;
        if step <= opts.tol * x.norm().max(1e-12) {
            break;
        }
    }
    Ok(LassoFit {
        coeffs: x.as_slice().to_vec(),
        iterations,
        objectives,
    })
}

#[derive(Debug, Clone)]
pub struct LassoReconstruction {
    pub fit: LassoFit,
    /// `D a_hat` (no mean added).
    pub signal: Vec<f64>,
}

/// Lasso in the coefficient domain of `dict` from measurements taken with
/// `ensemble`.
pub fn lasso_reconstruct(
    ensemble: &RandomProjectionEnsemble,
    dict: &Dictionary,
    y: &[f64],
    lambda: f64,
    opts: &LassoOptions,
) -> Result<LassoReconstruction> {
    if y.len() != ensemble.m() {
        return Err(Error::DimensionMismatch {
            expected: ensemble.m(),
            found: y.len(),
        });
    }
    let a = ensemble.in_dictionary(dict)?;
    let fit = lasso(&a, y, lambda, opts)?;
    let signal = dict.synthesize(&fit.coeffs);
    Ok(LassoReconstruction { fit, signal })
}

/// `||A^T y||_inf`, the smallest lambda with an all-zero solution.
pub fn lambda_max(a: &DMatrix<f64>, y: &[f64]) -> f64 {
    a.tr_mul(&DVector::from_column_slice(y)).amax()
}

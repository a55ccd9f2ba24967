//! CoSaMP with both approximation steps replaced by projection onto the
//! rooted-connected (tree) model.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tree::{tree_project, ProjectionMode, TreeSparseVector, TreeTopology};

/// Trees up to this size use the exact projection; larger ones use greedy.
pub const EXACT_PROJECTION_MAX_NODES: usize = 1023;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosampOptions {
    pub max_iters: usize,
    /// Stop once `||r|| <= tol * ||y||`.
    pub tol: f64,
}

impl Default for CosampOptions {
    fn default() -> Self {
        Self { max_iters: 30, tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct CosampFit {
    pub coeffs: TreeSparseVector,
    pub iterations: usize,
    pub residual_norm: f64,
}

fn projection_mode(tree: &TreeTopology) -> ProjectionMode {
    if tree.len() <= EXACT_PROJECTION_MAX_NODES {
        ProjectionMode::Exact
    } else {
        ProjectionMode::Greedy
    }
}

/// Minimum-norm least squares on the columns `cols` of `a`.
fn restricted_lstsq(a: &DMatrix<f64>, y: &DVector<f64>, cols: &[usize]) -> Vec<f64> {
    let sub = a.select_columns(cols);
    let dim = sub.nrows().max(sub.ncols()) as f64;
    let svd = sub.svd(true, true);
    let s_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = s_max * dim * f64::EPSILON;
    match svd.solve(y, eps) {
        Ok(sol) => sol.as_slice().to_vec(),
        Err(_) => vec![0.0; cols.len()],
    }
}

/// Model-based CoSaMP: `a` is the `m x p` sensing matrix in the coefficient
/// domain, `k` the tree sparsity.
pub fn model_cosamp(a: &DMatrix<f64>, y: &[f64], k: usize, tree: &TreeTopology, opts: &CosampOptions) -> Result<CosampFit> {
    let p = tree.len();
    if a.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: a.ncols(),
        });
    }
    if y.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: y.len(),
        });
    }
    if k < 1 || k > p {
        return Err(Error::arg(format!("k={k} must lie in 1..={p}")));
    }
    let mode = projection_mode(tree);
    let y = DVector::from_column_slice(y);
    let y_norm = y.norm();
    let mut current = vec![0.0; p];
    let mut support: Vec<usize> = Vec::new();
    let mut resid = y.clone();
    let mut resid_norm = y_norm;
    let mut iterations = 0;

    if y_norm == 0.0 {
        return Ok(CosampFit {
            coeffs: tree_project(&current, tree, k, mode)?,
            iterations,
            residual_norm: 0.0,
        });
    }

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let proxy = a.tr_mul(&resid);
        let enlarged = tree_project(proxy.as_slice(), tree, (2 * k).min(p), mode)?;
        let mut merged: Vec<usize> = enlarged.support().iter().chain(&support).copied().collect();
        merged.sort_unstable();
        merged.dedup();
        if merged.is_empty() {
            break;
        }
        let sol = restricted_lstsq(a, &y, &merged);
        let mut full = vec![0.0; p];
        for (&j, v) in merged.iter().zip(sol) {
            full[j] = v;
        }
        let pruned = tree_project(&full, tree, k, mode)?;
        let next_resid = &y - a * DVector::from_column_slice(pruned.values());
        let next_norm = next_resid.norm();
        if next_norm >= resid_norm * (1.0 - 1e-12) && iter > 0 {
            // stagnation: keep the better previous iterate
            break;
        }
        current = pruned.values().to_vec();
        support = pruned.support().to_vec();
        resid = next_resid;
        resid_norm = next_norm;
        if resid_norm <= opts.tol * y_norm {
            break;
        }
    }
    Ok(CosampFit {
        coeffs: tree_project(&current, tree, k, mode)?,
        iterations,
        residual_norm: resid_norm,
    })
}

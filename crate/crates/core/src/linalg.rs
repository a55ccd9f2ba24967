//! Small dense helpers shared by the learners and baselines.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Gram-Schmidt (two passes) over `candidates` until `count` orthonormal
/// columns of length `n` are found. Candidates whose residual norm falls
/// below `1e-10` of their original norm are skipped; if the candidates run
/// out, the standard basis fills the remainder.
pub fn orthonormal_completion(n: usize, count: usize, candidates: impl IntoIterator<Item = DVector<f64>>) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(count);
    let fallback = (0..n).map(|i| {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        e
    });
    for mut v in candidates.into_iter().chain(fallback) {
        if basis.len() == count {
            break;
        }
        let orig = v.norm();
        if orig == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let r = v.norm();
        if r > 1e-10 * orig {
            basis.push(v / r);
        }
    }
    DMatrix::from_columns(&basis)
}

/// An `n x p` matrix with orthonormal columns drawn from the Haar measure
/// (QR of a Gaussian matrix with sign correction).
pub fn random_orthonormal<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dictlearn::TrainingSet;
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Leading principal directions of a centered training set.
#[derive(Debug, Clone)]
pub struct PcaModel {
    components: DMatrix<f64>,
    mean: Vec<f64>,
    variances: Vec<f64>,
}

impl PcaModel {
    /// `n x r`, orthonormal columns ordered by decreasing variance.
    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Squared singular values of the centered data for each component.
    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn r(&self) -> usize {
        self.components.ncols()
    }

    /// The first `r` components of this model.
    pub fn truncated(&self, r: usize) -> Result<PcaModel> {
        if r > self.r() {
            return Err(Error::arg(format!("cannot keep {r} of {} components", self.r())));
        }
        Ok(PcaModel {
            components: self.components.columns(0, r).clone_owned(),
            mean: self.mean.clone(),
            variances: self.variances[..r].to_vec(),
        })
    }
}

/// Top-`r` left singular vectors of the centered data. `r` may not exceed
/// the numerical rank.
pub fn pca_fit(x: &TrainingSet, r: usize) -> Result<PcaModel> {
    let n = x.n();
    if r > n.min(x.q()) {
        return Err(Error::arg(format!("r={r} exceeds min(n, q)={}", n.min(x.q()))));
    }
    let svd = x.data().clone().svd(true, false);
    let u = svd.u.ok_or_else(|| Error::arg("SVD did not return U"))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let s_max = order.first().map_or(0.0, |&j| sv[j]);
    let cutoff = s_max * (n.max(x.q()) as f64) * f64::EPSILON;
    let rank = order.iter().filter(|&&j| sv[j] > cutoff).count();
    if r > rank {
        return Err(Error::arg(format!("r={r} exceeds the data rank {rank}")));
    }
    let cols: Vec<_> = order[..r].iter().map(|&j| u.column(j).clone_owned()).collect();
    let components = if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    Ok(PcaModel {
        components,
        mean: x.mean().to_vec(),
        variances: order[..r].iter().map(|&j| sv[j] * sv[j]).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct PcaReconstruction {
    pub signal: Vec<f64>,
    pub measurements: usize,
    pub energy_spent: f64,
}

/// One noisy measurement per component at scale `sqrt(R/r)`, unscaled and
/// added back onto the mean.
pub fn pca_reconstruct<R: Rng + ?Sized>(model: &PcaModel, x: &[f64], budget: f64, noise_std: f64, rng: &mut R) -> Result<PcaReconstruction> {
    if x.len() != model.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: model.mean.len(),
            found: x.len(),
        });
    }
    let r = model.r();
    let mut signal = model.mean.clone();
    if r == 0 {
        return Ok(PcaReconstruction {
            signal,
            measurements: 0,
            energy_spent: 0.0,
        });
    }
    if !(budget > 0.0) {
        return Err(Error::arg(format!("budget must be positive, got {budget}")));
    }
    let scale = (budget / r as f64).sqrt();
    let centered: Vec<f64> = x.iter().zip(&model.mean).map(|(a, m)| a - m).collect();
    for j in 0..r {
        let c = model.components.column(j);
        let z: f64 = rng.sample(StandardNormal);
        let y = scale * dot(c.as_slice(), &centered) + noise_std * z;
        let coeff = y / scale;
        for (s, ci) in signal.iter_mut().zip(c.iter()) {
            *s += coeff * ci;
        }
    }
    Ok(PcaReconstruction {
        signal,
        measurements: r,
        energy_spent: scale * scale * r as f64,
    })
}

//! Orthonormal 2-d Haar transform and direct adaptive sensing of its
//! coefficients along the detail quadtree.
//!
//! Images are square with a power-of-two side and stored column-major:
//! pixel `(r, c)` lives at `c * side + r`. The transform is the full-depth
//! Mallat pyramid, so coefficient `(0, 0)` is the scaling coefficient and a
//! detail coefficient `(r, c)` has children `(2r..=2r+1, 2c..=2c+1)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::sensing::{sense_tree, SensingConfig, SensingOutcome};
use crate::tree::CoefficientTree;

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn check_side(len: usize, side: usize) -> Result<()> {
    if side == 0 || !side.is_power_of_two() {
        return Err(Error::arg(format!("image side {side} is not a power of two")));
    }
    if len != side * side {
        return Err(Error::DimensionMismatch {
            expected: side * side,
            found: len,
        });
    }
    Ok(())
}

/// Side of a square image with `len` pixels, if it is a power of two.
pub fn side_of(len: usize) -> Result<usize> {
    let side = (len as f64).sqrt().round() as usize;
    check_side(len, side)?;
    Ok(side)
}

fn at(side: usize, r: usize, c: usize) -> usize {
    c * side + r
}

pub fn haar2d_forward(image: &[f64], side: usize) -> Result<Vec<f64>> {
    check_side(image.len(), side)?;
    let mut data = image.to_vec();
    let mut tmp = vec![0.0; side];
    let mut size = side;
    while size > 1 {
        let half = size / 2;
        // rows
        for r in 0..size {
            for i in 0..half {
                let a = data[at(side, r, 2 * i)];
                let b = data[at(side, r, 2 * i + 1)];
                tmp[i] = (a + b) * SQRT_HALF;
                tmp[half + i] = (a - b) * SQRT_HALF;
            }
            for c in 0..size {
                data[at(side, r, c)] = tmp[c];
            }
        }
        // columns
        for c in 0..size {
            for i in 0..half {
                let a = data[at(side, 2 * i, c)];
                let b = data[at(side, 2 * i + 1, c)];
                tmp[i] = (a + b) * SQRT_HALF;
                tmp[half + i] = (a - b) * SQRT_HALF;
            }
            for r in 0..size {
                data[at(side, r, c)] = tmp[r];
            }
        }
        size = half;
    }
    Ok(data)
}

pub fn haar2d_inverse(coeffs: &[f64], side: usize) -> Result<Vec<f64>> {
    check_side(coeffs.len(), side)?;
    let mut data = coeffs.to_vec();
    let mut tmp = vec![0.0; side];
    let mut size = 2;
    while size <= side {
        let half = size / 2;
        for c in 0..size {
            for i in 0..half {
                let s = data[at(side, i, c)];
                let d = data[at(side, half + i, c)];
                tmp[2 * i] = (s + d) * SQRT_HALF;
                tmp[2 * i + 1] = (s - d) * SQRT_HALF;
            }
            for r in 0..size {
                data[at(side, r, c)] = tmp[r];
            }
        }
        for r in 0..size {
            for i in 0..half {
                let s = data[at(side, r, i)];
                let d = data[at(side, r, half + i)];
                tmp[2 * i] = (s + d) * SQRT_HALF;
                tmp[2 * i + 1] = (s - d) * SQRT_HALF;
            }
            for c in 0..size {
                data[at(side, r, c)] = tmp[c];
            }
        }
        size *= 2;
    }
    Ok(data)
}

/// The degree-4 detail quadtree over Haar coefficients. The scaling
/// coefficient and the three coarsest details are the roots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaarQuadtree {
    side: usize,
}

impl HaarQuadtree {
    pub fn new(side: usize) -> Result<Self> {
        check_side(side * side, side)?;
        Ok(Self { side })
    }

    pub fn side(&self) -> usize {
        self.side
    }
}

impl CoefficientTree for HaarQuadtree {
    fn node_count(&self) -> usize {
        self.side * self.side
    }

    fn roots(&self) -> Vec<usize> {
        if self.side == 1 {
            vec![0]
        } else {
            vec![at(self.side, 0, 0), at(self.side, 1, 0), at(self.side, 0, 1), at(self.side, 1, 1)]
        }
    }

    fn push_children(&self, node: usize, out: &mut Vec<usize>) {
        if node == 0 {
            return;
        }
        let (r, c) = (node % self.side, node / self.side);
        if 2 * r.max(c) >= self.side {
            return;
        }
        for dc in 0..2 {
            for dr in 0..2 {
                out.push(at(self.side, 2 * r + dr, 2 * c + dc));
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct WaveletSensing {
    pub outcome: SensingOutcome,
    /// Inverse transform of the significant coefficients divided by `beta`.
    pub image: Vec<f64>,
}

impl WaveletSensing {
    /// Reconstruction from the first `m` measurements only.
    pub fn prefix_image(&self, m: usize) -> Result<Vec<f64>> {
        let n = self.image.len();
        let coeffs = self.outcome.prefix_coefficients(n, m);
        haar2d_inverse(&coeffs, side_of(n)?)
    }
}

/// Adaptive sensing directly in the Haar domain.
pub fn wavelet_sense<R: Rng + ?Sized>(image: &[f64], side: usize, cfg: &SensingConfig, rng: &mut R) -> Result<WaveletSensing> {
    let coeffs = haar2d_forward(image, side)?;
    let tree = HaarQuadtree::new(side)?;
    let outcome = sense_tree(&tree, cfg, rng, |j| coeffs[j])?;
    let image = haar2d_inverse(&outcome.coefficients(side * side), side)?;
    Ok(WaveletSensing { outcome, image })
}

use crate::error::{Error, Result};

/// Error energy at or below this fraction of the signal energy counts as an
/// exact reconstruction (above 240 dB).
pub const EXACT_RELATIVE_ERROR: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Db(f64),
    Exact,
}

impl Snr {
    /// Finite value in decibels, `None` for an exact reconstruction.
    pub fn db(&self) -> Option<f64> {
        match *self {
            Snr::Db(v) => Some(v),
            Snr::Exact => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Snr::Exact)
    }
}

/// `10 log10(||x||^2 / ||x_hat - x||^2)`.
pub fn snr_db(x: &[f64], x_hat: &[f64]) -> Result<Snr> {
    if x.len() != x_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: x_hat.len(),
        });
    }
    let signal: f64 = x.iter().map(|v| v * v).sum();
    if !(signal > 0.0) {
        return Err(Error::arg("SNR reference signal has zero energy"));
    }
    let err: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    if err <= EXACT_RELATIVE_ERROR * signal {
        return Ok(Snr::Exact);
    }
    Ok(Snr::Db(10.0 * (signal / err).log10()))
}

//! Closed-form tail and union bounds for the adaptive support-recovery
//! procedure, and the minimum amplitude that makes them small.

use crate::error::{Error, Result};

/// Upper bound on `P(|N(0,1)| >= tau)`: `exp(-tau^2 / 2)`.
pub fn false_alarm_bound(tau: f64) -> f64 {
    (-tau * tau / 2.0).exp()
}

/// Upper bound on `P(|N(beta*alpha_min, 1)| < tau)`:
/// `exp(-(beta*alpha_min - tau)^2 / 2)`. Requires `tau < beta*alpha_min`.
pub fn miss_bound(beta: f64, alpha_min: f64, tau: f64) -> Result<f64> {
    let gap = beta * alpha_min - tau;
    if !(gap > 0.0) {
        return Err(Error::arg(format!(
            "miss bound needs tau < beta*alpha_min, got tau={tau}, beta*alpha_min={}",
            beta * alpha_min
        )));
    }
    Ok((-gap * gap / 2.0).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub beta: f64,
    pub tau: f64,
    pub alpha_min: f64,
    pub k: usize,
    pub degree: usize,
}

impl BoundInputs {
    /// Threshold placed at `a * beta * alpha_min`.
    pub fn at_fraction(beta: f64, alpha_min: f64, a: f64, k: usize, degree: usize) -> Self {
        Self {
            beta,
            tau: a * beta * alpha_min,
            alpha_min,
            k,
            degree,
        }
    }

    /// Measurement count of an error-free session, `dk + 1`.
    pub fn m(&self) -> usize {
        self.degree * self.k + 1
    }
}

/// `(m - k) exp(-tau^2/2) + k exp(-(beta*alpha_min - tau)^2/2)` without
/// clamping.
pub fn failure_bound_raw(inputs: &BoundInputs) -> Result<f64> {
    if inputs.k < 1 || inputs.degree < 2 {
        return Err(Error::arg(format!("need k >= 1 and d >= 2, got k={}, d={}", inputs.k, inputs.degree)));
    }
    let zeros_measured = (inputs.m() - inputs.k) as f64;
    let miss = miss_bound(inputs.beta, inputs.alpha_min, inputs.tau)?;
    Ok(zeros_measured * false_alarm_bound(inputs.tau) + inputs.k as f64 * miss)
}

/// Union bound on the probability that the support estimate is wrong,
/// clamped to `[0, 1]`.
pub fn failure_bound(inputs: &BoundInputs) -> Result<f64> {
    failure_bound_raw(inputs).map(|b| b.clamp(0.0, 1.0))
}

/// Amplitude at which the false-alarm branch of the union bound drops to
/// `k^-c1 / 2`.
pub fn false_alarm_amplitude(c1: f64, a: f64, degree: usize, k: usize, beta: f64) -> f64 {
    let kf = k as f64;
    let zeros = ((degree - 1) * k + 1) as f64;
    let num = 2.0 * zeros.ln() + 2.0 * c1 * kf.ln() + 2.0 * 2f64.ln();
    (num / (beta * beta * a * a)).sqrt()
}

/// Amplitude at which the miss branch drops to `k^-c1 / 2`.
pub fn miss_amplitude(c1: f64, a: f64, k: usize, beta: f64) -> f64 {
    let kf = k as f64;
    let num = 2.0 * (1.0 + c1) * kf.ln() + 2.0 * 2f64.ln();
    let one_minus = 1.0 - a;
    (num / (beta * beta * one_minus * one_minus)).sqrt()
}

/// Smallest `alpha_min` for which both branches of the union bound are at
/// most `k^-c1 / 2` when `tau = a * beta * alpha_min`.
pub fn min_amplitude(c1: f64, a: f64, degree: usize, k: usize, beta: f64) -> Result<f64> {
    if !(c1 > 0.0) {
        return Err(Error::arg(format!("c1 must be positive, got {c1}")));
    }
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::arg(format!("a must lie in (0, 1), got {a}")));
    }
    if k < 2 {
        return Err(Error::arg(format!("k must be at least 2 for a k^-c1 target, got {k}")));
    }
    if degree < 2 {
        return Err(Error::arg(format!("degree must be >= 2, got {degree}")));
    }
    if !(beta > 0.0) {
        return Err(Error::arg(format!("beta must be positive, got {beta}")));
    }
    Ok(false_alarm_amplitude(c1, a, degree, k, beta).max(miss_amplitude(c1, a, k, beta)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn false_alarm_values() {
        assert_eq!(false_alarm_bound(0.0), 1.0);
        assert!(close(false_alarm_bound(2.0), 0.135_335_283, 1e-8));
        assert!(close(false_alarm_bound(3.0), 0.011_108_997, 1e-8));
    }

    #[test]
    fn miss_values() {
        assert!(close(miss_bound(1.0, 5.0, 3.0).unwrap(), (-2.0f64).exp(), 1e-15));
        assert!(close(miss_bound(1.0, 3.0, 0.0).unwrap(), 0.011_108_997, 1e-8));
        assert!(miss_bound(1.0, 3.0, 3.0 - 1e-9).unwrap() > 0.999_999);
        assert!(miss_bound(1.0, 3.0, 3.0).is_err());
        assert!(miss_bound(1.0, 3.0, 4.0).is_err());
    }

    #[test]
    fn failure_values() {
        let one = BoundInputs {
            beta: 1.0,
            tau: 3.0,
            alpha_min: 6.0,
            k: 1,
            degree: 2,
        };
        assert!(close(failure_bound(&one).unwrap(), 0.033_326_990, 1e-8));

        let vacuous = BoundInputs { tau: 0.0, ..one };
        assert!(failure_bound_raw(&vacuous).unwrap() >= 1.0);
        assert_eq!(failure_bound(&vacuous).unwrap(), 1.0);

        for k in [1, 5, 30] {
            let sym = BoundInputs::at_fraction(1.0, 4.0, 0.5, k, 2);
            let e = (-(2.0f64 * 2.0) / 2.0).exp();
            let expected = (k + 1) as f64 * e + k as f64 * e;
            assert!(close(failure_bound_raw(&sym).unwrap(), expected, 1e-12));
        }
    }

    #[test]
    fn min_amplitude_scaling() {
        let a1 = min_amplitude(1.0, 0.5, 2, 31, 1.0).unwrap();
        let a2 = min_amplitude(1.0, 0.5, 2, 31, 2.0).unwrap();
        assert!(close(a1, 2.0 * a2, 1e-12));
        assert!(close(a1, 7.793_777_152, 1e-8));
        assert!(min_amplitude(1.0, 0.5, 2, 1, 1.0).is_err());
        assert!(min_amplitude(1.0, 1.0, 2, 4, 1.0).is_err());
        assert!(min_amplitude(0.0, 0.5, 2, 4, 1.0).is_err());
    }

    #[test]
    fn min_amplitude_matches_bisection_of_each_branch() {
        // solve each branch equation for alpha numerically
        fn solve(f: impl Fn(f64) -> f64) -> f64 {
            let (mut lo, mut hi) = (1e-6, 1e3);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
        for &(c1, a, d, k, beta) in &[(1.0, 0.5, 2, 31, 1.0), (0.5, 0.25, 3, 7, 2.5), (2.0, 0.75, 2, 64, 0.3)] {
            let kf = k as f64;
            let target = kf.powf(-c1) / 2.0;
            let m_minus_k = ((d - 1) * k + 1) as f64;
            let fa = solve(|al: f64| m_minus_k * (-(a * beta * al).powi(2) / 2.0).exp() - target);
            let mh = solve(|al: f64| kf * (-((1.0 - a) * beta * al).powi(2) / 2.0).exp() - target);
            let got = min_amplitude(c1, a, d, k, beta).unwrap();
            assert!(close(got, fa.max(mh), 1e-9 * got), "{got} vs {}", fa.max(mh));
        }
    }

    #[test]
    fn branches_meet_target_on_grid() {
        for &c1 in &[0.5, 1.0, 2.0] {
            for &a in &[0.25, 0.5, 0.75] {
                for d in [2, 3] {
                    for k in 2..=64 {
                        let al = min_amplitude(c1, a, d, k, 1.0).unwrap();
                        let inp = BoundInputs::at_fraction(1.0, al, a, k, d);
                        let target = (k as f64).powf(-c1);
                        let fa = (inp.m() - k) as f64 * false_alarm_bound(inp.tau);
                        let mh = k as f64 * miss_bound(1.0, al, inp.tau).unwrap();
                        assert!(fa <= target / 2.0 * (1.0 + 1e-12));
                        assert!(mh <= target / 2.0 * (1.0 + 1e-12));
                        assert!(failure_bound(&inp).unwrap() <= target * (1.0 + 1e-12));
                    }
                }
            }
        }
    }

    #[test]
    fn monotonicity() {
        let base = BoundInputs {
            beta: 1.0,
            tau: 2.0,
            alpha_min: 5.0,
            k: 10,
            degree: 2,
        };
        let mut prev = f64::INFINITY;
        for i in 0..40 {
            let b = failure_bound_raw(&BoundInputs {
                alpha_min: 2.5 + 0.25 * i as f64,
                ..base
            })
            .unwrap();
            assert!(b <= prev);
            prev = b;
        }
        let mut prev = 0.0;
        for k in 1..50 {
            let b = failure_bound_raw(&BoundInputs { k, ..base }).unwrap();
            assert!(b > prev);
            prev = b;
        }
        // decreasing in tau up to the minimizer of the raw bound
        let raw = |tau: f64| failure_bound_raw(&BoundInputs { tau, ..base }).unwrap();
        let grid: Vec<f64> = (0..490).map(|i| i as f64 * 0.01).collect();
        let argmin = grid.iter().copied().min_by(|a, b| raw(*a).total_cmp(&raw(*b))).unwrap();
        let mut prev = f64::INFINITY;
        for &t in grid.iter().filter(|t| **t <= argmin) {
            assert!(raw(t) <= prev);
            prev = raw(t);
        }
    }
}

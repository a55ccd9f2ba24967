//! Hierarchical group penalty over node-plus-descendants groups and its
//! proximal operator.

use crate::error::{Error, Result};
use crate::tree::GroupSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupNorm {
    #[default]
    L2,
    Linf,
}

/// `sum_g w_g * ||a_g||`.
pub fn tree_group_penalty(a: &[f64], groups: &GroupSet, norm: GroupNorm) -> f64 {
    groups
        .order()
        .iter()
        .map(|&g| {
            let w = groups.weight(g);
            if w == 0.0 {
                return 0.0;
            }
            let members = groups.ranges(g).into_iter().flatten();
            let n = match norm {
                GroupNorm::L2 => members.map(|i| a[i] * a[i]).sum::<f64>().sqrt(),
                GroupNorm::Linf => members.map(|i| a[i].abs()).fold(0.0, f64::max),
            };
            w * n
        })
        .sum()
}

/// Proximal operator of `threshold * sum_g w_g ||u_g||` at `v`.
///
/// Single-group operators are applied in the set's deepest-first order,
/// which gives the exact prox for tree-structured groups.
pub fn tree_prox(v: &[f64], groups: &GroupSet, threshold: f64, norm: GroupNorm) -> Result<Vec<f64>> {
    let mut u = v.to_vec();
    tree_prox_in_place(&mut u, groups, threshold, norm)?;
    Ok(u)
}

pub fn tree_prox_in_place(u: &mut [f64], groups: &GroupSet, threshold: f64, norm: GroupNorm) -> Result<()> {
    if u.len() != groups.tree().len() {
        return Err(Error::DimensionMismatch {
            expected: groups.tree().len(),
            found: u.len(),
        });
    }
    if !(threshold >= 0.0) {
        return Err(Error::arg(format!("prox threshold must be nonnegative, got {threshold}")));
    }
    if threshold == 0.0 {
        return Ok(());
    }
    let mut scratch = Vec::new();
    for &g in groups.order() {
        let t = threshold * groups.weight(g);
        if t == 0.0 {
            continue;
        }
        let ranges = groups.ranges(g);
        match norm {
            GroupNorm::L2 => {
                let sq: f64 = ranges.iter().cloned().flatten().map(|i| u[i] * u[i]).sum();
                let nrm = sq.sqrt();
                let scale = if nrm <= t { 0.0 } else { 1.0 - t / nrm };
                for i in ranges.into_iter().flatten() {
                    u[i] *= scale;
                }
            }
            GroupNorm::Linf => {
                scratch.clear();
                scratch.extend(ranges.iter().cloned().flatten().map(|i| u[i]));
                let proj = project_l1_ball(&scratch, t);
                for (i, p) in ranges.into_iter().flatten().zip(proj) {
                    u[i] -= p;
                }
            }
        }
    }
    Ok(())
}

/// Euclidean projection onto `{w : ||w||_1 <= radius}`.
pub fn project_l1_ball(x: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    if l1 <= radius {
        return x.to_vec();
    }
    if radius <= 0.0 {
        return vec![0.0; x.len()];
    }
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    x.iter().map(|&v| v.signum() * (v.abs() - theta).max(0.0)).collect()
}

//! Symmetric finite-range displacement kernels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the symmetry and normalization checks.
pub const KERNEL_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel weights are empty")]
    Empty,
    #[error("total kernel mass is zero")]
    ZeroMass,
    #[error("negative mass {mass} at displacement {displacement}")]
    NegativeMass { displacement: i64, mass: f64 },
    #[error("asymmetric kernel: p({displacement}) = {forward} but p({neg}) = {backward}", neg = -displacement)]
    AsymmetricKernel {
        displacement: i64,
        forward: f64,
        backward: f64,
    },
    #[error("displacement 0 is not allowed in an infection kernel")]
    ZeroDisplacement,
}

/// A symmetric probability kernel on displacements `[-R, R] \ {0}`.
///
/// Weights are normalized on construction; the range `R` is the largest
/// displacement carrying positive mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    range: u32,
    /// Sorted by displacement; only positive-mass entries are kept.
    weights: Vec<(i64, f64)>,
}

impl Kernel {
    /// Build and validate a kernel from a displacement -> mass map.
    ///
    /// Masses are normalized to sum to one.  Symmetry is checked on the raw
    /// masses: `|p(d) - p(-d)| <= KERNEL_TOL` must hold for every `d`.
    pub fn build(weights: &BTreeMap<i64, f64>) -> Result<Kernel, KernelError> {
        if weights.is_empty() {
            return Err(KernelError::Empty);
        }
        for (&d, &m) in weights {
            if d == 0 && m > 0.0 {
                return Err(KernelError::ZeroDisplacement);
            }
            if m < 0.0 {
                return Err(KernelError::NegativeMass {
                    displacement: d,
                    mass: m,
                });
            }
        }
        for (&d, &m) in weights {
            let back = weights.get(&-d).copied().unwrap_or(0.0);
            if (m - back).abs() > KERNEL_TOL {
                return Err(KernelError::AsymmetricKernel {
                    displacement: d,
                    forward: m,
                    backward: back,
                });
            }
        }
        let total: f64 = weights.values().sum();
        if total <= 0.0 {
            return Err(KernelError::ZeroMass);
        }
        let kept: Vec<(i64, f64)> = weights
            .iter()
            .filter(|(_, &m)| m > 0.0)
            .map(|(&d, &m)| (d, m / total))
            .collect();
        let range = kept.iter().map(|&(d, _)| d.unsigned_abs()).max().unwrap() as u32;
        Ok(Kernel {
            range,
            weights: kept,
        })
    }

    /// Nearest-neighbour kernel `p(1) = p(-1) = 1/2`.
    pub fn nearest_neighbour() -> Kernel {
        let mut w = BTreeMap::new();
        w.insert(-1, 0.5);
        w.insert(1, 0.5);
        Kernel::build(&w).unwrap()
    }

    /// Uniform kernel on `[-range, range] \ {0}`.
    pub fn uniform(range: u32) -> Kernel {
        assert!(range >= 1);
        let mut w = BTreeMap::new();
        for d in 1..=range as i64 {
            w.insert(d, 1.0);
            w.insert(-d, 1.0);
        }
        Kernel::build(&w).unwrap()
    }

    pub fn range(&self) -> u32 {
        self.range
    }

    /// Positive-mass displacements in increasing order.
    pub fn displacements(&self) -> impl Iterator<Item = i64> + '_ {
        self.weights.iter().map(|&(d, _)| d)
    }

    /// Normalized mass at displacement `d` (0 outside the support).
    pub fn mass(&self, d: i64) -> f64 {
        self.weights
            .iter()
            .find(|&&(x, _)| x == d)
            .map(|&(_, m)| m)
            .unwrap_or(0.0)
    }

    pub fn entries(&self) -> &[(i64, f64)] {
        &self.weights
    }

    /// Serialize to the displacement -> mass map used in JSON metadata.
    pub fn to_map(&self) -> BTreeMap<i64, f64> {
        self.weights.iter().copied().collect()
    }
}

//! Eigenvalue-based solution remapping baselines.
//!
//! Both modes decompose the full 6x6 Hessian and drop the components of the
//! unconstrained update along directions judged degenerate. The fixed mode
//! compares each eigenvalue against an absolute threshold; the relative mode
//! compares the largest eigenvalue against each one. The relative ratio is an
//! approximation of an automatic threshold and is not tuned.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PoseUpdate;
use crate::linalg::sym_eigen6;
use crate::registration::{solve_unconstrained, LinearizedProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemapMode {
    FixedThreshold,
    RelativeCondition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemappingConfig {
    pub eigenvalue_threshold: f64,
    pub condition_ratio: f64,
    pub mode: RemapMode,
}

impl Default for RemappingConfig {
    fn default() -> Self {
        Self { eigenvalue_threshold: 120.0, condition_ratio: 60.0, mode: RemapMode::FixedThreshold }
    }
}

impl RemappingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eigenvalue_threshold >= 0.0) || !(self.condition_ratio > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "remapping needs threshold >= 0 and condition ratio > 1, got {} and {}",
                self.eigenvalue_threshold, self.condition_ratio
            )));
        }
        Ok(())
    }

    pub fn with_mode(self, mode: RemapMode) -> Self {
        Self { mode, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemapResult {
    pub update: PoseUpdate,
    /// Degenerate flags per eigenvector, eigenvalues ascending.
    pub degenerate_mask: [bool; 6],
    pub eigenvalues: Vector6<f64>,
    pub eigenvectors: Matrix6<f64>,
}

pub fn degenerate_mask(eigenvalues: &Vector6<f64>, cfg: &RemappingConfig) -> [bool; 6] {
    let lmax = eigenvalues.max();
    std::array::from_fn(|i| match cfg.mode {
        RemapMode::FixedThreshold => eigenvalues[i] < cfg.eigenvalue_threshold,
        RemapMode::RelativeCondition => !(eigenvalues[i] > 0.0 && lmax / eigenvalues[i] <= cfg.condition_ratio),
    })
}

/// Unconstrained update with its components along degenerate eigenvectors removed.
pub fn solution_remap(problem: &LinearizedProblem, cfg: &RemappingConfig) -> RemapResult {
    let (eigenvalues, eigenvectors) = sym_eigen6(&problem.hessian);
    let mask = degenerate_mask(&eigenvalues, cfg);
    let free = solve_unconstrained(problem);
    let update = if mask.iter().any(|&m| m) {
        let x = free.to_vector();
        let mut out = x;
        for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            let v = eigenvectors.column(i);
            out -= v * v.dot(&x);
        }
        PoseUpdate::from_vector(&out)
    } else {
        free
    };
    RemapResult { update, degenerate_mask: mask, eigenvalues, eigenvectors }
}

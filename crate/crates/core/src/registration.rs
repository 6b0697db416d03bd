//! Point-to-plane least squares and the iterative registration loop.
//!
//! Each iteration linearizes about the current estimate in a frame that is
//! axis-aligned with the map and centered on the sensor position. The update
//! `x = [r; t]` then acts as `R <- exp(r) R`, `t <- t + dt`, so rotations
//! happen about the sensor and not the map origin. The same pairs expressed in
//! the lidar frame differ only by the estimate's rotation, which is how
//! lidar-frame eigenvectors are carried into the map frame.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use serde::{Deserialize, Serialize};

use crate::baseline::{solution_remap, RemapMode, RemappingConfig};
use crate::constrained::{build_constraints, solve_kkt, ConstraintSet};
use crate::correspondence::{match_with_tree, to_lidar_frame, CorrespondenceSet, MIN_MATCHES};
use crate::error::{Error, Result};
use crate::geometry::{Frame, PointCloud, PoseUpdate, RigidTransform};
use crate::kdtree::KdTree;
use crate::localizability::{detect, DetectionMode, LocalizabilityParams, LocalizabilityReport};

const PINV_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedProblem {
    /// Rows `[(p × n)ᵀ, nᵀ]`.
    pub jacobian: Vec<Vector6<f64>>,
    /// `nᵀ(q − p)` per pair.
    pub residuals: Vec<f64>,
    pub hessian: Matrix6<f64>,
    pub rhs: Vector6<f64>,
    pub frame: Frame,
}

impl LinearizedProblem {
    /// `‖J x − r‖²`.
    pub fn cost_at(&self, x: &Vector6<f64>) -> f64 {
        self.jacobian.iter().zip(&self.residuals).map(|(row, r)| (row.dot(x) - r).powi(2)).sum()
    }
}

pub fn linearize(matches: &CorrespondenceSet) -> Result<LinearizedProblem> {
    if matches.len() < MIN_MATCHES {
        return Err(Error::TooFewMatches { found: matches.len(), required: MIN_MATCHES });
    }
    let mut jacobian = Vec::with_capacity(matches.len());
    let mut residuals = Vec::with_capacity(matches.len());
    let mut hessian = Matrix6::zeros();
    let mut rhs = Vector6::zeros();
    for c in &matches.pairs {
        let tau = c.torque();
        let row = Vector6::new(tau.x, tau.y, tau.z, c.n.x, c.n.y, c.n.z);
        let r = c.residual();
        hessian += row * row.transpose();
        rhs += row * r;
        jacobian.push(row);
        residuals.push(r);
    }
    Ok(LinearizedProblem { jacobian, residuals, hessian, rhs, frame: matches.frame })
}

/// Minimum-norm least-squares update from the pseudo-inverse of `JᵀJ`.
pub fn solve_unconstrained(problem: &LinearizedProblem) -> PoseUpdate {
    // Symmetric PSD: the eigen-decomposition is the SVD.
    let eig = SymmetricEigen::new(problem.hessian);
    let smax = eig.eigenvalues.amax();
    if !(smax > 0.0) {
        return PoseUpdate::zero();
    }
    let tol = PINV_TOL * smax;
    let mut y = eig.eigenvectors.transpose() * problem.rhs;
    for i in 0..6 {
        let s = eig.eigenvalues[i];
        y[i] = if s.abs() > tol { y[i] / s } else { 0.0 };
    }
    PoseUpdate::from_vector(&(eig.eigenvectors * y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Handler {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "xicp")]
    Xicp,
    #[serde(rename = "xs-icp")]
    XsIcp,
    #[serde(rename = "remap")]
    SolutionRemapping,
    #[serde(rename = "remap-adaptive")]
    AdaptiveRemapping,
}

impl Handler {
    pub const ALL: [Handler; 5] =
        [Handler::None, Handler::Xicp, Handler::XsIcp, Handler::SolutionRemapping, Handler::AdaptiveRemapping];

    pub fn name(self) -> &'static str {
        match self {
            Handler::None => "none",
            Handler::Xicp => "xicp",
            Handler::XsIcp => "xs-icp",
            Handler::SolutionRemapping => "remap",
            Handler::AdaptiveRemapping => "remap-adaptive",
        }
    }
}

impl fmt::Display for Handler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Handler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Handler::ALL
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown handler '{s}' (expected none, xicp, xs-icp, remap, remap-adaptive)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpConfig {
    pub max_iterations: usize,
    pub trans_tol: f64,
    pub rot_tol: f64,
    pub max_match_dist: f64,
    pub handler: Handler,
    #[serde(skip)]
    pub localizability: LocalizabilityParams,
    #[serde(skip)]
    pub remapping: RemappingConfig,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 40,
            trans_tol: 1e-4,
            rot_tol: 1e-4,
            max_match_dist: 0.5,
            handler: Handler::None,
            localizability: LocalizabilityParams::default(),
            remapping: RemappingConfig::default(),
        }
    }
}

impl IcpConfig {
    pub fn with_handler(self, handler: Handler) -> Self {
        Self { handler, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 || !(self.trans_tol > 0.0) || !(self.rot_tol > 0.0) || !(self.max_match_dist > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "icp needs max_iterations >= 1 and positive tolerances and match distance: {self:?}"
            )));
        }
        self.localizability.validate()?;
        self.remapping.validate()
    }
}

/// Eigen-spectrum and mask of a remapping step, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct RemapRecord {
    pub eigenvalues: Vector6<f64>,
    pub degenerate_mask: [bool; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub matches: usize,
    /// Sum of squared residuals at the linearization point.
    pub cost: f64,
    pub update: PoseUpdate,
    pub report: Option<LocalizabilityReport>,
    /// Map-frame constraints; empty unless a localizability handler ran.
    pub constraints: ConstraintSet,
    /// `‖C x − d‖_∞` of the applied update.
    pub violation: f64,
    pub remap: Option<RemapRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub pose: RigidTransform,
    pub iterations: usize,
    pub final_cost: f64,
    pub converged: bool,
    pub log: Vec<IterationRecord>,
}

impl IcpResult {
    pub fn reports(&self) -> impl Iterator<Item = &LocalizabilityReport> {
        self.log.iter().filter_map(|r| r.report.as_ref())
    }
}

/// Register `reading` (sensor frame) against `reference` (map frame, with normals).
pub fn run_icp(reading: &PointCloud, reference: &PointCloud, t_init: &RigidTransform, cfg: &IcpConfig) -> Result<IcpResult> {
    let tree = KdTree::build(reference.points());
    run_icp_with_tree(reading, reference, &tree, t_init, cfg)
}

pub fn run_icp_with_tree(
    reading: &PointCloud,
    reference: &PointCloud,
    tree: &KdTree,
    t_init: &RigidTransform,
    cfg: &IcpConfig,
) -> Result<IcpResult> {
    cfg.validate()?;
    let mut pose = *t_init;
    let mut log = Vec::new();
    let mut converged = false;
    // The binary variant categorizes once and keeps those map-frame constraints.
    let mut held: Option<ConstraintSet> = None;
    for iteration in 0..cfg.max_iterations {
        let matches = match_with_tree(reading, reference, tree, &pose, cfg.max_match_dist)?;
        let problem = linearize(&matches.recentered(&pose.translation))?;
        let record = handle(&matches, &problem, &pose, cfg, held.as_ref())?;
        if cfg.handler == Handler::XsIcp && held.is_none() {
            held = Some(record.constraints.clone());
        }
        if !record.update.is_finite() {
            return Err(Error::NonFiniteUpdate { iteration });
        }
        pose = pose.apply_update(&record.update);
        let small = record.update.trans.norm() < cfg.trans_tol && record.update.rotvec.norm() < cfg.rot_tol;
        log.push(record);
        if small {
            converged = true;
            break;
        }
    }
    let final_cost = log.last().map_or(0.0, |r| r.cost);
    Ok(IcpResult { pose, iterations: log.len(), final_cost, converged, log })
}

fn handle(
    matches: &CorrespondenceSet,
    problem: &LinearizedProblem,
    pose: &RigidTransform,
    cfg: &IcpConfig,
    held: Option<&ConstraintSet>,
) -> Result<IterationRecord> {
    let mut record = IterationRecord {
        matches: matches.len(),
        cost: problem.residuals.iter().map(|r| r * r).sum(),
        update: PoseUpdate::zero(),
        report: None,
        constraints: ConstraintSet::default(),
        violation: 0.0,
        remap: None,
    };
    match cfg.handler {
        Handler::None => record.update = solve_unconstrained(problem),
        Handler::XsIcp if held.is_some() => {
            let constraints = held.expect("guarded").clone();
            let solution = solve_kkt(problem, &constraints)?;
            record.violation = constraints.violation(&solution.update);
            record.update = solution.update;
            record.constraints = constraints;
        }
        Handler::Xicp | Handler::XsIcp => {
            let mode = if cfg.handler == Handler::Xicp { DetectionMode::ThreeLevel } else { DetectionMode::Binary };
            let lidar = to_lidar_frame(matches, pose);
            let lidar_problem = linearize(&lidar)?;
            let report = detect(&lidar, &lidar_problem, &cfg.localizability, mode)?;
            let constraints = build_constraints(&report, &lidar, &pose.rotation)?;
            let solution = solve_kkt(problem, &constraints)?;
            record.violation = constraints.violation(&solution.update);
            record.update = solution.update;
            record.constraints = constraints;
            record.report = Some(report);
        }
        Handler::SolutionRemapping | Handler::AdaptiveRemapping => {
            let mode = if cfg.handler == Handler::SolutionRemapping {
                RemapMode::FixedThreshold
            } else {
                RemapMode::RelativeCondition
            };
            let out = solution_remap(problem, &cfg.remapping.with_mode(mode));
            record.update = out.update;
            record.remap = Some(RemapRecord { eigenvalues: out.eigenvalues, degenerate_mask: out.degenerate_mask });
        }
    }
    Ok(record)
}

//! Constraint assembly and the equality-constrained solve.
//!
//! Every direction that is not fully localizable becomes one row `v·x_block = d`
//! on the pose update. Directions without information are pinned to zero;
//! partially localizable directions take their value from a small least-squares
//! problem over the pairs that carry information along that direction.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector6};

use crate::correspondence::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::geometry::{Mat3, PoseUpdate, Vec3};
use crate::linalg::{sym_eigen3, sym_eigen6};
use crate::localizability::{Branch, Category, ContributionTables, LocalizabilityReport};
use crate::registration::LinearizedProblem;

/// Minimum number of re-sampled pairs for a partial solve.
pub const MIN_PARTIAL_PAIRS: usize = 3;
/// Above this condition estimate the scaled system gets Tikhonov damping.
pub const REGULARIZE_ABOVE: f64 = 1e8;
/// Above this, even after damping, the partial solve is abandoned.
pub const ILL_CONDITIONED_ABOVE: f64 = 1e12;
const TIKHONOV_FACTOR: f64 = 1e-6;
const KKT_RANK_TOL: f64 = 1e-10;
const EQUILIBRATION_FLOOR: f64 = 1e-12;
const REFINE_STEPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subspace {
    Rotation,
    Translation,
}

/// One constraint `direction · x_block = value` in the map frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRow {
    pub direction: Vec3,
    pub subspace: Subspace,
    pub value: f64,
    /// Direction index in `[r1, r2, r3, t1, t2, t3]`.
    pub source: usize,
    /// Category that produced the row after any demotion.
    pub category: Category,
}

impl ConstraintRow {
    /// The row embedded in the six-wide update layout `[r; t]`.
    pub fn row6(&self) -> Vector6<f64> {
        let mut row = Vector6::zeros();
        let off = match self.subspace {
            Subspace::Rotation => 0,
            Subspace::Translation => 3,
        };
        row.fixed_rows_mut::<3>(off).copy_from(&self.direction);
        row
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    pub rows: Vec<ConstraintRow>,
    /// Partial directions whose constraint value could not be computed and
    /// were pinned to zero instead.
    pub demoted: Vec<usize>,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.rows.len(), 6);
        for (i, row) in self.rows.iter().enumerate() {
            c.row_mut(i).copy_from(&row.row6().transpose());
        }
        c
    }

    pub fn values(&self) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.value))
    }

    /// `‖C x − d‖_∞`, zero for an empty set.
    pub fn violation(&self, x: &PoseUpdate) -> f64 {
        let v = x.to_vector();
        self.rows.iter().map(|r| (r.row6().dot(&v) - r.value).abs()).fold(0.0, f64::max)
    }
}

/// Pairs supporting direction `direction` (0-based, `[r1..r3, t1..t3]`),
/// ordered by contribution descending and pair index ascending.
pub fn resample_pairs(
    matches: &CorrespondenceSet,
    tables: &ContributionTables,
    direction: usize,
    branch: Branch,
) -> Result<CorrespondenceSet> {
    let table = match branch {
        Branch::CombinedFull | Branch::CombinedPartial => &tables.filtered,
        Branch::StrongFull | Branch::StrongPartial => &tables.strong,
        Branch::NoInformation => return Err(Error::EmptySelection { direction }),
    };
    let mut picked: Vec<usize> = (0..table.len()).filter(|&i| table[i][direction] > 0.0).collect();
    if picked.is_empty() {
        return Err(Error::EmptySelection { direction });
    }
    picked.sort_by(|&a, &b| table[b][direction].total_cmp(&table[a][direction]).then(a.cmp(&b)));
    Ok(matches.select(&picked))
}

/// Least-squares value of the translation (force rows `n`) or rotation
/// (torque rows `p × n`) explained by the selected pairs alone.
pub fn solve_partial_constraint(selected: &CorrespondenceSet, subspace: Subspace) -> Result<Vec3> {
    if selected.len() < MIN_PARTIAL_PAIRS {
        return Err(Error::InsufficientPairs { found: selected.len(), required: MIN_PARTIAL_PAIRS });
    }
    let mut a = Matrix3::zeros();
    let mut b = Vec3::zeros();
    for c in &selected.pairs {
        let row = match subspace {
            Subspace::Rotation => c.torque(),
            Subspace::Translation => c.n,
        };
        a += row * row.transpose();
        b += row * c.residual();
    }
    solve_scaled_normal(&a, &b)
}

/// Jacobi-scaled, optionally damped, fully pivoted LU solve of a 3x3 normal system.
///
/// Damping is added before scaling so that directions the data leave open
/// are pulled toward zero rather than amplified by their tiny diagonal.
fn solve_scaled_normal(a: &Mat3, b: &Vec3) -> Result<Vec3> {
    let jacobi = |m: &Mat3| {
        let scale = Vec3::from_fn(|i, _| if m[(i, i)] > 0.0 { 1.0 / m[(i, i)].sqrt() } else { 1.0 });
        let s = Matrix3::from_diagonal(&scale);
        (s, s * m * s)
    };
    let (mut s, mut scaled) = jacobi(a);
    let mut cond = condition_estimate(&scaled);
    if cond > REGULARIZE_ABOVE {
        let damped = a + Matrix3::identity() * (TIKHONOV_FACTOR * a.trace() / 3.0);
        (s, scaled) = jacobi(&damped);
        cond = condition_estimate(&scaled);
    }
    if !(cond <= ILL_CONDITIONED_ABOVE) {
        return Err(Error::IllConditioned { condition: cond });
    }
    let y = scaled
        .full_piv_lu()
        .solve(&(s * b))
        .ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
    Ok(s * y)
}

fn condition_estimate(m: &Mat3) -> f64 {
    let (vals, _) = sym_eigen3(m);
    if vals[0] <= 0.0 {
        f64::INFINITY
    } else {
        vals[2] / vals[0]
    }
}

/// One row per non-full direction, rotated into the map frame.
///
/// `matches` must be the lidar-frame pairs the report was computed from.
pub fn build_constraints(
    report: &LocalizabilityReport,
    matches: &CorrespondenceSet,
    r_map_lidar: &Mat3,
) -> Result<ConstraintSet> {
    let mut set = ConstraintSet::default();
    for j in 0..6 {
        let category = report.eta[j];
        if category == Category::Full {
            continue;
        }
        let subspace = if j < 3 { Subspace::Rotation } else { Subspace::Translation };
        let v = report.basis.direction(j);
        let (value, category) = match category {
            Category::Partial => match partial_value(report, matches, j, subspace) {
                Ok(solution) => (v.dot(&solution), Category::Partial),
                Err(Error::IllConditioned { .. } | Error::InsufficientPairs { .. } | Error::EmptySelection { .. }) => {
                    set.demoted.push(j);
                    (0.0, Category::None)
                }
                Err(e) => return Err(e),
            },
            _ => (0.0, Category::None),
        };
        set.rows.push(ConstraintRow { direction: r_map_lidar * v, subspace, value, source: j, category });
    }
    Ok(set)
}

fn partial_value(report: &LocalizabilityReport, matches: &CorrespondenceSet, j: usize, subspace: Subspace) -> Result<Vec3> {
    let selected = resample_pairs(matches, &report.tables, j, report.triggering_branch[j])?;
    solve_partial_constraint(&selected, subspace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub update: PoseUpdate,
    pub multipliers: DVector<f64>,
}

/// Solve `[[2H, Cᵀ], [C, 0]] [x; λ] = [2g; d]` by pseudo-inverse, where
/// `H = JᵀJ` and `g = Jᵀr`, followed by iterative refinement.
pub fn solve_kkt(problem: &LinearizedProblem, constraints: &ConstraintSet) -> Result<KktSolution> {
    let c = constraints.len();
    let n = 6 + c;
    let cm = constraints.matrix();
    let mut k = DMatrix::zeros(n, n);
    k.view_mut((0, 0), (6, 6)).copy_from(&(problem.hessian * 2.0));
    k.view_mut((0, 6), (6, c)).copy_from(&cm.transpose());
    k.view_mut((6, 0), (c, 6)).copy_from(&cm);
    let mut rhs = DVector::zeros(n);
    rhs.rows_mut(0, 6).copy_from(&(problem.rhs * 2.0));
    rhs.rows_mut(6, c).copy_from(&constraints.values());

    // Symmetric diagonal equilibration of the pose block; constraint rows are unit already.
    // Directions without information keep a bounded scale so they cannot swamp the rank test.
    let floor = (0..6).map(|i| k[(i, i)]).fold(0.0, f64::max) * EQUILIBRATION_FLOOR;
    let d = DVector::from_fn(n, |i, _| if i < 6 && floor > 0.0 { 1.0 / k[(i, i)].max(floor).sqrt() } else { 1.0 });
    let scaled = DMatrix::from_fn(n, n, |i, j| d[i] * k[(i, j)] * d[j]);
    // For a symmetric matrix the eigen-decomposition is its SVD with
    // singular values |λ|, and it is markedly more accurate than the general solver.
    let eig = scaled.symmetric_eigen();
    let smax = eig.eigenvalues.amax();
    let tol = KKT_RANK_TOL * smax;
    let rank = eig.eigenvalues.iter().filter(|s| s.abs() > tol).count();
    if rank < n {
        return Err(Error::SingularKkt { eigenvalue: reduced_min_eigenvalue(&problem.hessian, constraints) });
    }
    let q = &eig.eigenvectors;
    let pinv = |b: &DVector<f64>| {
        let mut y = q.transpose() * b.component_mul(&d);
        for (yi, s) in y.iter_mut().zip(eig.eigenvalues.iter()) {
            *yi = if s.abs() > tol { *yi / s } else { 0.0 };
        }
        (q * y).component_mul(&d)
    };
    let mut sol = pinv(&rhs);
    for _ in 0..REFINE_STEPS {
        let residual = &rhs - &k * &sol;
        sol += pinv(&residual);
    }
    let x = Vector6::from_iterator(sol.rows(0, 6).iter().copied());
    Ok(KktSolution { update: PoseUpdate::from_vector(&x), multipliers: sol.rows(6, c).into_owned() })
}

/// Smallest eigenvalue of the Hessian restricted to the null space of `C`.
fn reduced_min_eigenvalue(hessian: &Matrix6<f64>, constraints: &ConstraintSet) -> f64 {
    let cm = constraints.matrix();
    let gram = &cm * cm.transpose();
    let Some(inv) = gram.clone().pseudo_inverse(1e-12).ok() else {
        return 0.0;
    };
    let proj = DMatrix::<f64>::identity(6, 6) - cm.transpose() * inv * &cm;
    let proj = Matrix6::from_iterator(proj.iter().copied());
    let (vals, vecs) = sym_eigen6(&proj);
    let basis: Vec<Vector6<f64>> = (0..6).filter(|&i| vals[i] > 0.5).map(|i| vecs.column(i).into_owned()).collect();
    if basis.is_empty() {
        return 0.0;
    }
    let m = basis.len();
    let reduced = DMatrix::from_fn(m, m, |a, b| basis[a].dot(&(hessian * basis[b])));
    reduced.symmetric_eigenvalues().min()
}

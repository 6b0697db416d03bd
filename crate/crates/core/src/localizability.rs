//! Localizability detection.
//!
//! The translational and rotational Hessian blocks are eigen-decomposed
//! separately. Every information pair is projected onto those eigenvectors
//! (force `n` for translation, torque `p x n` for rotation), the projections
//! are filtered twice (noise floor `kappa_f`, then the strong-alignment cone
//! at 45 degrees) and summed per direction. A three-level decision tree maps
//! the sums to a category per eigenvector.
//!
//! All six-wide tables use the column order `[r1, r2, r3, t1, t2, t3]`, with
//! eigenvalues ascending inside each block.

use std::fmt;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::correspondence::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::geometry::{Frame, Vec3};
use crate::linalg::sym_eigen3;
use crate::registration::LinearizedProblem;

/// cos(45°): contributions at or above this are strong.
pub const STRONG_CUT: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub const DIRECTION_NAMES: [&str; 6] = ["r1", "r2", "r3", "t1", "t2", "t3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    None,
    Partial,
    Full,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::None => "none",
            Category::Partial => "partial",
            Category::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Category::None),
            "partial" => Some(Category::Partial),
            "full" => Some(Category::Full),
            _ => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which comparison of the decision tree decided a direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `L_c >= kappa1`
    CombinedFull,
    /// `L_s >= kappa2`
    StrongFull,
    /// `L_c >= kappa2`; re-sampling uses every filtered pair.
    CombinedPartial,
    /// `L_s >= kappa3`; re-sampling uses the strong pairs only.
    StrongPartial,
    NoInformation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizabilityParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    /// Noise floor on single contributions.
    pub kappa_f: f64,
    pub strong_cut: f64,
    /// Torques shorter than this drop the pair from rotational analysis.
    pub torque_eps: f64,
}

impl Default for LocalizabilityParams {
    fn default() -> Self {
        Self {
            kappa1: 250.0,
            kappa2: 180.0,
            kappa3: 35.0,
            kappa_f: KAPPA_F_SPARSE,
            strong_cut: STRONG_CUT,
            torque_eps: 1e-6,
        }
    }
}

/// cos(80°), for sparse sensors.
pub const KAPPA_F_SPARSE: f64 = 0.173_648_177_666_930_33;
/// cos(60°), for dense, noisier sensors.
pub const KAPPA_F_DENSE: f64 = 0.5;

impl LocalizabilityParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.kappa1 >= self.kappa2
            && self.kappa2 > self.kappa3
            && self.kappa3 > 0.0
            && self.kappa_f >= 0.0
            && self.kappa_f < self.strong_cut
            && self.strong_cut <= 1.0
            && self.torque_eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("localizability parameters violate kappa1 >= kappa2 > kappa3 > 0, 0 <= kappa_f < strong_cut: {self:?}")))
        }
    }
}

/// Eigenvectors (as matrix columns) and eigenvalues of the two Hessian blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub v_t: Matrix3<f64>,
    pub v_r: Matrix3<f64>,
    pub sigma_t: Vec3,
    pub sigma_r: Vec3,
    pub frame: Frame,
}

impl EigenBasis {
    /// Unit eigenvector of direction `j` in the six-wide column order.
    pub fn direction(&self, j: usize) -> Vec3 {
        if j < 3 {
            self.v_r.column(j).into_owned()
        } else {
            self.v_t.column(j - 3).into_owned()
        }
    }

    pub fn eigenvalues(&self) -> [f64; 6] {
        [self.sigma_r[0], self.sigma_r[1], self.sigma_r[2], self.sigma_t[0], self.sigma_t[1], self.sigma_t[2]]
    }
}

/// Decompose the rotational and translational Hessian blocks separately.
pub fn eigen_analyze(problem: &LinearizedProblem) -> EigenBasis {
    let h = &problem.hessian;
    let a_rr: Matrix3<f64> = h.fixed_view::<3, 3>(0, 0).into_owned();
    let a_tt: Matrix3<f64> = h.fixed_view::<3, 3>(3, 3).into_owned();
    let (sigma_r, v_r) = sym_eigen3(&a_rr);
    let (sigma_t, v_t) = sym_eigen3(&a_tt);
    EigenBasis {
        v_t,
        v_r,
        sigma_t: sigma_t.map(|x| x.max(0.0)),
        sigma_r: sigma_r.map(|x| x.max(0.0)),
        frame: problem.frame,
    }
}

pub type Row = [f64; 6];

#[derive(Debug, Clone, PartialEq)]
pub struct ContributionTables {
    /// Raw contributions in `[0, 1]`.
    pub raw: Vec<Row>,
    /// Contributions below `kappa_f` zeroed.
    pub filtered: Vec<Row>,
    /// Filtered contributions below the strong cut zeroed.
    pub strong: Vec<Row>,
    pub l_combined: Row,
    pub l_strong: Row,
    /// Pairs whose torque is too short for rotational analysis.
    pub dropped_pairs: Vec<usize>,
}

impl ContributionTables {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// Per-pair projections onto the eigenbasis, filtered and summed.
pub fn compute_contributions(
    matches: &CorrespondenceSet,
    basis: &EigenBasis,
    params: &LocalizabilityParams,
) -> Result<ContributionTables> {
    if matches.frame != basis.frame {
        return Err(Error::FrameMismatch { expected: basis.frame, found: matches.frame });
    }
    let n = matches.len();
    let mut raw = Vec::with_capacity(n);
    let mut dropped_pairs = Vec::new();
    let vr_t = basis.v_r.transpose();
    let vt_t = basis.v_t.transpose();
    for (i, c) in matches.pairs.iter().enumerate() {
        let mut row = [0.0; 6];
        let tau = c.torque();
        let len = tau.norm();
        if len < params.torque_eps {
            dropped_pairs.push(i);
        } else {
            // Moment normalization only for torques of at least unit length.
            let f = if len >= 1.0 { tau / len } else { tau };
            let proj = vr_t * f;
            for j in 0..3 {
                row[j] = proj[j].abs().min(1.0);
            }
        }
        let proj = vt_t * c.n;
        for j in 0..3 {
            row[3 + j] = proj[j].abs().min(1.0);
        }
        raw.push(row);
    }
    Ok(filter_contributions(raw, dropped_pairs, params))
}

/// Apply the two filtering stages to raw contributions and sum the columns
/// in index order.
pub fn filter_contributions(raw: Vec<Row>, dropped_pairs: Vec<usize>, params: &LocalizabilityParams) -> ContributionTables {
    let mut filtered = Vec::with_capacity(raw.len());
    let mut strong = Vec::with_capacity(raw.len());
    let mut l_combined = [0.0; 6];
    let mut l_strong = [0.0; 6];
    for row in &raw {
        let mut f = [0.0; 6];
        let mut s = [0.0; 6];
        for j in 0..6 {
            if row[j] >= params.kappa_f {
                f[j] = row[j];
                if f[j] >= params.strong_cut {
                    s[j] = f[j];
                }
            }
            l_combined[j] += f[j];
            l_strong[j] += s[j];
        }
        filtered.push(f);
        strong.push(s);
    }
    ContributionTables { raw, filtered, strong, l_combined, l_strong, dropped_pairs }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Categorization {
    pub eta: [Category; 6],
    pub branches: [Branch; 6],
}

/// Three-level decision tree, evaluated per direction.
pub fn categorize(tables: &ContributionTables, params: &LocalizabilityParams) -> Categorization {
    let mut eta = [Category::None; 6];
    let mut branches = [Branch::NoInformation; 6];
    for j in 0..6 {
        let (lc, ls) = (tables.l_combined[j], tables.l_strong[j]);
        (eta[j], branches[j]) = if lc >= params.kappa1 {
            (Category::Full, Branch::CombinedFull)
        } else if ls >= params.kappa2 {
            (Category::Full, Branch::StrongFull)
        } else if lc >= params.kappa2 {
            // Takes precedence over the strong comparison when both hold.
            (Category::Partial, Branch::CombinedPartial)
        } else if ls >= params.kappa3 {
            (Category::Partial, Branch::StrongPartial)
        } else {
            (Category::None, Branch::NoInformation)
        };
    }
    Categorization { eta, branches }
}

/// Two-level variant without a partial tier: the strong sum is compared
/// against `kappa2` only (the partial band collapses when `kappa3 = kappa2`).
pub fn categorize_binary(tables: &ContributionTables, params: &LocalizabilityParams) -> Categorization {
    let mut eta = [Category::None; 6];
    let mut branches = [Branch::NoInformation; 6];
    for j in 0..6 {
        if tables.l_combined[j] >= params.kappa1 {
            (eta[j], branches[j]) = (Category::Full, Branch::CombinedFull);
        } else if tables.l_strong[j] >= params.kappa2 {
            (eta[j], branches[j]) = (Category::Full, Branch::StrongFull);
        }
    }
    Categorization { eta, branches }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionMode {
    ThreeLevel,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizabilityReport {
    pub basis: EigenBasis,
    pub tables: ContributionTables,
    pub eta: [Category; 6],
    pub triggering_branch: [Branch; 6],
}

impl LocalizabilityReport {
    pub fn non_full(&self) -> impl Iterator<Item = usize> + '_ {
        (0..6).filter(|&j| self.eta[j] != Category::Full)
    }

    /// Number of non-full directions in the rotational and translational blocks.
    pub fn non_full_counts(&self) -> (usize, usize) {
        let r = (0..3).filter(|&j| self.eta[j] != Category::Full).count();
        let t = (3..6).filter(|&j| self.eta[j] != Category::Full).count();
        (r, t)
    }
}

/// Full detection pipeline on lidar-frame pairs and the matching lidar-frame problem.
pub fn detect(
    matches: &CorrespondenceSet,
    problem: &LinearizedProblem,
    params: &LocalizabilityParams,
    mode: DetectionMode,
) -> Result<LocalizabilityReport> {
    let basis = eigen_analyze(problem);
    let tables = compute_contributions(matches, &basis, params)?;
    let cat = match mode {
        DetectionMode::ThreeLevel => categorize(&tables, params),
        DetectionMode::Binary => categorize_binary(&tables, params),
    };
    Ok(LocalizabilityReport { basis, tables, eta: cat.eta, triggering_branch: cat.branches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::Correspondence;
    use crate::registration::linearize;
    use nalgebra::Matrix6;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tables_with_sums(lc: f64, ls: f64) -> ContributionTables {
        ContributionTables {
            raw: vec![],
            filtered: vec![],
            strong: vec![],
            l_combined: [lc; 6],
            l_strong: [ls; 6],
            dropped_pairs: vec![],
        }
    }

    fn problem_with_hessian(h: Matrix6<f64>) -> LinearizedProblem {
        LinearizedProblem { jacobian: vec![], residuals: vec![], hessian: h, rhs: Default::default(), frame: Frame::Lidar }
    }

    #[test]
    fn diagonal_block_eigenvectors() {
        let mut h = Matrix6::zeros();
        h[(3, 3)] = 3.0;
        h[(4, 4)] = 2.0;
        h[(5, 5)] = 1.0;
        let b = eigen_analyze(&problem_with_hessian(h));
        assert_eq!(b.sigma_t, Vec3::new(1.0, 2.0, 3.0));
        assert!((b.v_t.column(0) - Vec3::z()).norm() < 1e-12);
        assert!((b.v_t.column(1) - Vec3::y()).norm() < 1e-12);
        assert!((b.v_t.column(2) - Vec3::x()).norm() < 1e-12);
    }

    #[test]
    fn repeated_eigenvalues_reconstruct() {
        let mut h = Matrix6::identity();
        h[(0, 0)] = 4.0;
        let b = eigen_analyze(&problem_with_hessian(h));
        assert_eq!(b.sigma_t, Vec3::new(1.0, 1.0, 1.0));
        let rec = b.v_t * Matrix3::from_diagonal(&b.sigma_t) * b.v_t.transpose();
        assert!((rec - Matrix3::identity()).norm() < 1e-12);
    }

    /// Eigenvalues of a symmetric 3x3 matrix from the trigonometric solution
    /// of its characteristic cubic.
    fn cubic_eigenvalues(a: &Matrix3<f64>) -> [f64; 3] {
        let q = a.trace() / 3.0;
        let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (a - Matrix3::identity() * q) / p;
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let l3 = q + 2.0 * p * phi.cos();
        let l1 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [l1, 3.0 * q - l1 - l3, l3]
    }

    #[test]
    fn random_spd_matches_cubic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m = Matrix3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let spd = m * m.transpose() + Matrix3::identity() * 0.1;
            let mut h = Matrix6::identity();
            h.fixed_view_mut::<3, 3>(3, 3).copy_from(&spd);
            let b = eigen_analyze(&problem_with_hessian(h));
            let want = cubic_eigenvalues(&spd);
            for k in 0..3 {
                assert!((b.sigma_t[k] - want[k]).abs() < 1e-10 * spd.norm(), "{:?} vs {want:?}", b.sigma_t);
            }
            let rec = b.v_t * Matrix3::from_diagonal(&b.sigma_t) * b.v_t.transpose();
            assert!((rec - spd).norm() < 1e-10 * spd.norm());
        }
    }

    fn pair(p: Vec3, n: Vec3) -> Correspondence {
        Correspondence::new(p, p, n, 0, 0)
    }

    fn identity_basis() -> EigenBasis {
        EigenBasis {
            v_t: Matrix3::identity(),
            v_r: Matrix3::identity(),
            sigma_t: Vec3::zeros(),
            sigma_r: Vec3::zeros(),
            frame: Frame::Lidar,
        }
    }

    #[test]
    fn aligned_normal_contributes_fully() {
        let set = CorrespondenceSet::new(vec![pair(Vec3::new(0.0, 2.0, 0.0), Vec3::z())], Frame::Lidar);
        let t = compute_contributions(&set, &identity_basis(), &LocalizabilityParams::default()).unwrap();
        assert_eq!(&t.raw[0][3..], &[0.0, 0.0, 1.0]);
        // p x n = (2, 0, 0), unit after normalization.
        assert_eq!(&t.raw[0][..3], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn parallel_pair_is_dropped_from_rotation() {
        let set = CorrespondenceSet::new(
            vec![pair(Vec3::new(0.0, 0.0, 3.0), Vec3::z()), pair(Vec3::new(1.0, 0.0, 0.0), Vec3::z())],
            Frame::Lidar,
        );
        let t = compute_contributions(&set, &identity_basis(), &LocalizabilityParams::default()).unwrap();
        assert_eq!(t.dropped_pairs, vec![0]);
        assert_eq!(&t.raw[0][..3], &[0.0; 3]);
        assert_eq!(&t.raw[0][3..], &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn short_torques_are_not_inflated() {
        let set = CorrespondenceSet::new(vec![pair(Vec3::new(0.0, 0.4, 0.0), Vec3::z())], Frame::Lidar);
        let t = compute_contributions(&set, &identity_basis(), &LocalizabilityParams::default()).unwrap();
        assert!((t.raw[0][0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn frame_mismatch_is_rejected() {
        let set = CorrespondenceSet::new(vec![pair(Vec3::x(), Vec3::z())], Frame::Map);
        assert!(matches!(
            compute_contributions(&set, &identity_basis(), &LocalizabilityParams::default()),
            Err(Error::FrameMismatch { .. })
        ));
    }

    #[test]
    fn noise_floor_boundary() {
        let params = LocalizabilityParams::default();
        let t = filter_contributions(vec![[0.1, KAPPA_F_SPARSE, 0.70, STRONG_CUT, 1.0, 0.0]], vec![], &params);
        assert_eq!(t.filtered[0], [0.0, KAPPA_F_SPARSE, 0.70, STRONG_CUT, 1.0, 0.0]);
        assert_eq!(t.strong[0], [0.0, 0.0, 0.0, STRONG_CUT, 1.0, 0.0]);
    }

    /// Two perpendicular walls and an arc: pairs on the wall facing the first
    /// translational eigenvector contribute to it, the perpendicular wall does not.
    #[test]
    fn wall_and_arc_scene() {
        let mut pairs = Vec::new();
        // Flat wall at y = 4 facing the sensor, three sample normals.
        for x in [-1.0, 0.0, 1.5] {
            pairs.push(pair(Vec3::new(x, 4.0, 0.0), -Vec3::y()));
        }
        // Perpendicular wall at x = 5.
        pairs.push(pair(Vec3::new(5.0, 1.0, 0.0), -Vec3::x()));
        // Arc behind the sensor.
        for k in 0..5 {
            let a = std::f64::consts::PI * (1.1 + 0.15 * k as f64);
            let u = Vec3::new(a.cos(), a.sin(), 0.0);
            pairs.push(pair(u * 3.0, -u));
        }
        let set = CorrespondenceSet::new(pairs, Frame::Lidar);
        let problem = linearize(&set).unwrap();
        let basis = eigen_analyze(&problem);
        let t = compute_contributions(&set, &basis, &LocalizabilityParams::default()).unwrap();
        let v = basis.v_t.column(2).into_owned();
        assert!(v.y.abs() > 0.9, "dominant direction should be across the flat wall: {v}");
        for row in &t.raw[..3] {
            assert!(row[5] > 0.9);
        }
        assert!(t.raw[3][5] < 0.3);
        // Same projection against the exact wall normal: perpendicular wall is zero.
        let exact = EigenBasis { v_t: Matrix3::from_columns(&[Vec3::z(), Vec3::x(), Vec3::y()]), ..basis };
        let t = compute_contributions(&set, &exact, &LocalizabilityParams::default()).unwrap();
        assert_eq!(t.raw[3][5], 0.0);
        assert!(t.raw[..3].iter().all(|r| r[5] == 1.0));
    }

    #[test]
    fn decision_tree_examples() {
        let p = LocalizabilityParams::default();
        let c = categorize(&tables_with_sums(300.0, 0.0), &p);
        assert_eq!((c.eta[0], c.branches[0]), (Category::Full, Branch::CombinedFull));
        let c = categorize(&tables_with_sums(200.0, 10.0), &p);
        assert_eq!((c.eta[0], c.branches[0]), (Category::Partial, Branch::CombinedPartial));
        let c = categorize(&tables_with_sums(100.0, 40.0), &p);
        assert_eq!((c.eta[0], c.branches[0]), (Category::Partial, Branch::StrongPartial));
        let c = categorize(&tables_with_sums(100.0, 10.0), &p);
        assert_eq!((c.eta[0], c.branches[0]), (Category::None, Branch::NoInformation));
        let c = categorize(&tables_with_sums(200.0, 190.0), &p);
        assert_eq!((c.eta[0], c.branches[0]), (Category::Full, Branch::StrongFull));
        let c = categorize(&tables_with_sums(190.0, 40.0), &p);
        assert_eq!(c.branches[0], Branch::CombinedPartial);
    }

    #[test]
    fn binary_tree_examples() {
        let p = LocalizabilityParams::default();
        assert_eq!(categorize_binary(&tables_with_sums(300.0, 0.0), &p).eta[0], Category::Full);
        assert_eq!(categorize_binary(&tables_with_sums(200.0, 10.0), &p).eta[0], Category::None);
        assert_eq!(categorize_binary(&tables_with_sums(0.0, 0.0), &p).eta, [Category::None; 6]);
        assert_eq!(categorize_binary(&tables_with_sums(100.0, 190.0), &p).eta[0], Category::Full);
    }

    #[test]
    fn default_params_are_valid() {
        LocalizabilityParams::default().validate().unwrap();
        let bad = LocalizabilityParams { kappa3: 200.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    fn random_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Correspondence> {
        (0..n)
            .map(|_| {
                let p = Vec3::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(-2.0..2.0));
                let n = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    .normalize();
                pair(p, n)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn table_invariants(seed in 0u64..500, n in 6usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = CorrespondenceSet::new(random_pairs(&mut rng, n), Frame::Lidar);
            let params = LocalizabilityParams::default();
            let problem = linearize(&set).unwrap();
            let report = detect(&set, &problem, &params, DetectionMode::ThreeLevel).unwrap();
            let t = &report.tables;
            for i in 0..n {
                for j in 0..6 {
                    prop_assert!((0.0..=1.0 + 1e-9).contains(&t.raw[i][j]));
                    if t.strong[i][j] != 0.0 {
                        prop_assert_eq!(t.filtered[i][j], t.strong[i][j]);
                        prop_assert!(t.strong[i][j] >= STRONG_CUT);
                    }
                }
            }
            for j in 0..6 {
                let lc: f64 = t.filtered.iter().map(|r| r[j]).sum();
                let ls: f64 = t.strong.iter().map(|r| r[j]).sum();
                prop_assert_eq!(lc, t.l_combined[j]);
                prop_assert_eq!(ls, t.l_strong[j]);
                prop_assert!(t.l_strong[j] <= t.l_combined[j]);
                let full = t.l_combined[j] >= params.kappa1 || t.l_strong[j] >= params.kappa2;
                let partial = !full && (t.l_combined[j] >= params.kappa2 || t.l_strong[j] >= params.kappa3);
                let want = if full { Category::Full } else if partial { Category::Partial } else { Category::None };
                prop_assert_eq!(report.eta[j], want);
            }
        }

        #[test]
        fn adding_a_pair_never_lowers_sums(seed in 0u64..300, n in 6usize..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs = random_pairs(&mut rng, n + 1);
            let params = LocalizabilityParams::default();
            let basis = identity_basis();
            let a = compute_contributions(&CorrespondenceSet::new(pairs[..n].to_vec(), Frame::Lidar), &basis, &params).unwrap();
            let b = compute_contributions(&CorrespondenceSet::new(pairs, Frame::Lidar), &basis, &params).unwrap();
            for j in 0..6 {
                prop_assert!(b.l_combined[j] >= a.l_combined[j]);
                prop_assert!(b.l_strong[j] >= a.l_strong[j]);
            }
        }

        #[test]
        fn raising_a_sum_never_demotes(lc in 0.0f64..400.0, ls in 0.0f64..400.0, dc in 0.0f64..100.0, ds in 0.0f64..100.0) {
            let p = LocalizabilityParams::default();
            let before = categorize(&tables_with_sums(lc, ls.min(lc)), &p).eta[0];
            let after = categorize(&tables_with_sums(lc + dc, ls.min(lc) + ds), &p).eta[0];
            prop_assert!(after >= before);
        }

        #[test]
        fn long_lever_arms_do_not_change_rotation_rows(seed in 0u64..300, scale in 1.0f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs: Vec<Correspondence> = random_pairs(&mut rng, 50)
                .into_iter()
                .filter(|c| c.torque().norm() >= 1.0)
                .collect();
            prop_assume!(pairs.len() >= 6);
            let scaled: Vec<Correspondence> = pairs.iter().map(|c| pair(c.p * scale, c.n)).collect();
            let basis = eigen_analyze(&linearize(&CorrespondenceSet::new(pairs.clone(), Frame::Lidar)).unwrap());
            let params = LocalizabilityParams::default();
            let a = compute_contributions(&CorrespondenceSet::new(pairs, Frame::Lidar), &basis, &params).unwrap();
            let b = compute_contributions(&CorrespondenceSet::new(scaled, Frame::Lidar), &basis, &params).unwrap();
            for (ra, rb) in a.raw.iter().zip(&b.raw) {
                for j in 0..3 {
                    prop_assert!((ra[j] - rb[j]).abs() < 1e-12);
                }
            }
        }
    }
}

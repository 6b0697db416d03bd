//! Trajectory (APE, RPE) and map error metrics.

use nalgebra::{Matrix3, Matrix4, Quaternion, SymmetricEigen, UnitQuaternion};

use crate::error::{Error, Result};
use crate::geometry::{rotation_angle, PointCloud, RigidTransform, Vec3};
use crate::kdtree::KdTree;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    stamped: Vec<(f64, RigidTransform)>,
}

impl Trajectory {
    pub fn new(stamped: Vec<(f64, RigidTransform)>) -> Result<Self> {
        if let Some(i) = stamped.iter().position(|(t, p)| !t.is_finite() || !p.is_valid(1e-6)) {
            return Err(Error::NonFinite(i));
        }
        if stamped.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidConfig("trajectory timestamps must be strictly increasing".into()));
        }
        Ok(Self { stamped })
    }

    pub fn stamped(&self) -> &[(f64, RigidTransform)] {
        &self.stamped
    }

    pub fn len(&self) -> usize {
        self.stamped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamped.is_empty()
    }

    /// Cumulative traveled distance at each pose.
    pub fn distances(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.len());
        for (i, (_, pose)) in self.stamped.iter().enumerate() {
            if i > 0 {
                acc += (pose.translation - self.stamped[i - 1].1.translation).norm();
            }
            out.push(acc);
        }
        out
    }

    pub fn transformed(&self, g: &RigidTransform) -> Trajectory {
        Trajectory { stamped: self.stamped.iter().map(|(t, p)| (*t, g.compose(p))).collect() }
    }

    /// Smallest gap between consecutive stamps.
    fn min_period(&self) -> Option<f64> {
        self.stamped.windows(2).map(|w| w[1].0 - w[0].0).reduce(f64::min)
    }
}

/// Pairs `(estimate pose, reference pose, reference distance)` associated by
/// nearest timestamp within half a reference period.
fn associate(estimate: &Trajectory, reference: &Trajectory) -> Result<Vec<(RigidTransform, RigidTransform, f64)>> {
    let tol = reference.min_period().map_or(1e-9, |p| 0.5 * p);
    let stamps: Vec<f64> = reference.stamped.iter().map(|(t, _)| *t).collect();
    let dist = reference.distances();
    let mut out = Vec::new();
    for (t, pose) in &estimate.stamped {
        let k = stamps.partition_point(|s| s < t);
        let best = [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter(|&j| j < stamps.len())
            .min_by(|&a, &b| (stamps[a] - t).abs().total_cmp(&(stamps[b] - t).abs()));
        if let Some(j) = best.filter(|&j| (stamps[j] - t).abs() <= tol) {
            out.push((*pose, reference.stamped[j].1, dist[j]));
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyAssociation);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alignment {
    Origin,
    PrefixMeters(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorStats {
    pub trans_mean: f64,
    pub trans_std: f64,
    pub rot_mean_deg: f64,
    pub rot_std_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ApeStats {
    pub stats: ErrorStats,
    pub last_position_error: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(errors: &[(f64, f64)]) -> ErrorStats {
    let trans: Vec<f64> = errors.iter().map(|e| e.0).collect();
    let rot: Vec<f64> = errors.iter().map(|e| e.1).collect();
    let (trans_mean, trans_std) = mean_std(&trans);
    let (rot_mean_deg, rot_std_deg) = mean_std(&rot);
    ErrorStats { trans_mean, trans_std, rot_mean_deg, rot_std_deg }
}

fn pose_error(estimate: &RigidTransform, reference: &RigidTransform) -> (f64, f64) {
    let trans = (estimate.translation - reference.translation).norm();
    let rot = rotation_angle(&(reference.rotation.transpose() * estimate.rotation)).to_degrees();
    (trans, rot)
}

/// Least-squares rigid transform taking `from` onto `to`, via the unit
/// quaternion maximizing the alignment (largest eigenvector of a 4x4
/// symmetric matrix).
pub fn kabsch(from: &[Vec3], to: &[Vec3]) -> RigidTransform {
    let n = from.len() as f64;
    let cf = from.iter().sum::<Vec3>() / n;
    let ct = to.iter().sum::<Vec3>() / n;
    let mut s = Matrix3::zeros();
    for (a, b) in from.iter().zip(to) {
        s += (a - cf) * (b - ct).transpose();
    }
    let (xx, xy, xz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (yx, yy, yz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (zx, zy, zz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    let k = Matrix4::new(
        xx + yy + zz, yz - zy, zx - xz, xy - yx,
        yz - zy, xx - yy - zz, xy + yx, zx + xz,
        zx - xz, xy + yx, -xx + yy - zz, yz + zy,
        xy - yx, zx + xz, yz + zy, -xx - yy + zz,
    );
    let eig = SymmetricEigen::new(k);
    let q = eig.eigenvectors.column(eig.eigenvalues.imax());
    let rotation = *UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3])).to_rotation_matrix().matrix();
    RigidTransform::new(rotation, ct - rotation * cf)
}

pub fn ape(estimate: &Trajectory, reference: &Trajectory, alignment: Alignment) -> Result<ApeStats> {
    let pairs = associate(estimate, reference)?;
    let align = match alignment {
        Alignment::PrefixMeters(x) if pairs.iter().filter(|p| p.2 <= x).count() >= 3 => {
            let (from, to): (Vec<Vec3>, Vec<Vec3>) =
                pairs.iter().filter(|p| p.2 <= x).map(|p| (p.0.translation, p.1.translation)).unzip();
            kabsch(&from, &to)
        }
        _ => pairs[0].1.compose(&pairs[0].0.inverse()),
    };
    let errors: Vec<(f64, f64)> = pairs.iter().map(|(e, r, _)| pose_error(&align.compose(e), r)).collect();
    Ok(ApeStats { stats: summarize(&errors), last_position_error: errors.last().expect("non-empty").0 })
}

pub fn rpe_per_distance(estimate: &Trajectory, reference: &Trajectory, segment_m: f64) -> Result<ErrorStats> {
    let pairs = associate(estimate, reference)?;
    let mut errors = Vec::new();
    let mut j = 0;
    for i in 0..pairs.len() {
        j = j.max(i + 1);
        while j < pairs.len() && pairs[j].2 - pairs[i].2 < segment_m {
            j += 1;
        }
        if j == pairs.len() {
            break;
        }
        let est_rel = pairs[i].0.inverse().compose(&pairs[j].0);
        let ref_rel = pairs[i].1.inverse().compose(&pairs[j].1);
        errors.push(pose_error(&est_rel, &ref_rel));
    }
    if errors.is_empty() {
        return Err(Error::EmptyAssociation);
    }
    Ok(summarize(&errors))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MapError {
    pub mean: f64,
    pub rmse: f64,
    pub per_point: Vec<f64>,
}

pub fn map_p2p_error(built: &PointCloud, truth: &PointCloud) -> Result<MapError> {
    if truth.is_empty() {
        return Err(Error::TooFewPoints { found: 0, required: 1 });
    }
    if built.is_empty() {
        return Ok(MapError::default());
    }
    let tree = KdTree::build(truth.points());
    let per_point: Vec<f64> =
        built.points().iter().map(|p| tree.nearest(p).expect("non-empty tree").dist_sq.sqrt()).collect();
    let n = per_point.len() as f64;
    let mean = per_point.iter().sum::<f64>() / n;
    let rmse = (per_point.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
    Ok(MapError { mean, rmse, per_point })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Frame;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight(n: usize, step: f64) -> Trajectory {
        Trajectory::new((0..n).map(|i| (i as f64, RigidTransform::from_translation(Vec3::new(i as f64 * step, 0.0, 0.0)))).collect())
            .unwrap()
    }

    fn wiggly(seed: u64, n: usize) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pose = RigidTransform::identity();
        let mut out = Vec::new();
        for i in 0..n {
            out.push((i as f64 * 0.5, pose));
            let step = RigidTransform::from_rotvec(
                Vec3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(-0.2..0.2)),
                Vec3::new(rng.random_range(0.3..0.7), rng.random_range(-0.1..0.1), rng.random_range(-0.05..0.05)),
            );
            pose = pose.compose(&step);
        }
        Trajectory::new(out).unwrap()
    }

    fn perturbed(t: &Trajectory, seed: u64, scale: f64) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Trajectory::new(
            t.stamped()
                .iter()
                .map(|(s, p)| {
                    let noise = RigidTransform::from_rotvec(
                        Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale * 0.1,
                        Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale,
                    );
                    (*s, p.compose(&noise))
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_unordered_stamps() {
        let p = RigidTransform::identity();
        assert!(Trajectory::new(vec![(1.0, p), (1.0, p)]).is_err());
        assert!(Trajectory::new(vec![(1.0, p), (0.5, p)]).is_err());
    }

    #[test]
    fn identical_is_zero() {
        let t = wiggly(1, 50);
        let a = ape(&t, &t, Alignment::Origin).unwrap();
        assert_eq!(a.stats.trans_mean, 0.0);
        assert!(a.stats.rot_mean_deg < 1e-6);
        let r = rpe_per_distance(&t, &t, 5.0).unwrap();
        assert!(r.trans_mean < 1e-12 && r.rot_mean_deg < 1e-6);
        let k = ape(&t, &t, Alignment::PrefixMeters(5.0)).unwrap();
        assert!(k.stats.trans_mean < 1e-9);
    }

    #[test]
    fn shifted_tail_gives_constant_error() {
        let reference = straight(20, 1.0);
        let estimate = Trajectory::new(
            reference
                .stamped()
                .iter()
                .enumerate()
                .map(|(i, (t, p))| {
                    let shift = if i == 0 { Vec3::zeros() } else { Vec3::x() };
                    (*t, RigidTransform::from_translation(p.translation + shift))
                })
                .collect(),
        )
        .unwrap();
        let a = ape(&estimate, &reference, Alignment::Origin).unwrap();
        let want = 19.0 / 20.0;
        assert!((a.stats.trans_mean - want).abs() < 1e-12);
        assert!((a.last_position_error - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ape_matches_per_pose_oracle() {
        let reference = wiggly(2, 40);
        let estimate = perturbed(&reference, 3, 0.05);
        let a = ape(&estimate, &reference, Alignment::Origin).unwrap();
        let (e0, r0) = (estimate.stamped()[0].1, reference.stamped()[0].1);
        // Align by the first-pose difference, then compare each pose directly.
        let mut t_errs = Vec::new();
        let mut r_errs = Vec::new();
        for ((_, e), (_, r)) in estimate.stamped().iter().zip(reference.stamped()) {
            let rot = r0.rotation * e0.rotation.transpose() * e.rotation;
            let pos = r0.rotation * (e0.rotation.transpose() * (e.translation - e0.translation)) + r0.translation;
            t_errs.push((pos - r.translation).norm());
            let c = ((r.rotation.transpose() * rot).trace() - 1.0) / 2.0;
            r_errs.push(c.clamp(-1.0, 1.0).acos().to_degrees());
        }
        let mean = t_errs.iter().sum::<f64>() / t_errs.len() as f64;
        let rmean = r_errs.iter().sum::<f64>() / r_errs.len() as f64;
        assert!((a.stats.trans_mean - mean).abs() < 1e-9);
        assert!((a.stats.rot_mean_deg - rmean).abs() < 1e-6);
        assert!((a.last_position_error - t_errs.last().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn prefix_alignment_recovers_rigid_offset() {
        let reference = wiggly(4, 60);
        let g = RigidTransform::from_rotvec(Vec3::new(0.1, -0.2, 0.7), Vec3::new(3.0, -1.0, 2.0));
        let estimate = reference.transformed(&g);
        let a = ape(&estimate, &reference, Alignment::PrefixMeters(15.0)).unwrap();
        assert!(a.stats.trans_mean < 1e-9);
        assert!(a.stats.rot_mean_deg < 1e-5);
    }

    #[test]
    fn scale_drift_rpe() {
        let reference = straight(101, 0.5);
        let estimate = straight(101, 0.505);
        let r = rpe_per_distance(&estimate, &reference, 10.0).unwrap();
        assert!((r.trans_mean / 0.1 - 1.0).abs() < 0.02, "{}", r.trans_mean);
    }

    #[test]
    fn long_segment_is_empty() {
        let t = straight(10, 1.0);
        assert!(matches!(rpe_per_distance(&t, &t, 100.0), Err(Error::EmptyAssociation)));
    }

    #[test]
    fn disjoint_stamps_do_not_associate() {
        let a = straight(5, 1.0);
        let b = Trajectory::new(a.stamped().iter().map(|(t, p)| (t + 100.0, *p)).collect()).unwrap();
        assert!(matches!(ape(&a, &b, Alignment::Origin), Err(Error::EmptyAssociation)));
    }

    fn plane(spacing: f64) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..=100 {
            for j in 0..=100 {
                pts.push(Vec3::new(i as f64 * spacing - 5.0, j as f64 * spacing - 5.0, 0.0));
            }
        }
        PointCloud::new(pts, Frame::Map).unwrap()
    }

    #[test]
    fn map_error_zero_and_offset() {
        let truth = plane(0.1);
        let same = map_p2p_error(&truth, &truth).unwrap();
        assert_eq!(same.mean, 0.0);
        let shifted: Vec<Vec3> = truth.points().iter().filter(|p| p.x.abs() < 4.0).map(|p| p + Vec3::new(0.05, 0.0, 0.0)).collect();
        let e = map_p2p_error(&PointCloud::new(shifted, Frame::Map).unwrap(), &truth).unwrap();
        assert!((e.mean - 0.05).abs() < 1e-3);
    }

    #[test]
    fn map_error_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let truth: Vec<Vec3> = (0..800).map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) * 4.0).collect();
        let built: Vec<Vec3> = (0..300).map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) * 4.0).collect();
        let e = map_p2p_error(&PointCloud::new(built.clone(), Frame::Map).unwrap(), &PointCloud::new(truth.clone(), Frame::Map).unwrap())
            .unwrap();
        for (b, d) in built.iter().zip(&e.per_point) {
            let want = truth.iter().map(|t| (t - b).norm()).fold(f64::INFINITY, f64::min);
            assert_eq!(*d, want);
        }
    }

    proptest! {
        #[test]
        fn metrics_are_rigidly_invariant(seed in 0u64..200, rv in prop::array::uniform3(-3.0f64..3.0), tv in prop::array::uniform3(-50.0f64..50.0)) {
            let g = RigidTransform::from_rotvec(Vec3::from(rv), Vec3::from(tv));
            let reference = wiggly(seed, 40);
            let estimate = perturbed(&reference, seed + 1, 0.05);
            let (rg, eg) = (reference.transformed(&g), estimate.transformed(&g));
            for align in [Alignment::Origin, Alignment::PrefixMeters(8.0)] {
                let a = ape(&estimate, &reference, align).unwrap();
                let b = ape(&eg, &rg, align).unwrap();
                prop_assert!((a.stats.trans_mean - b.stats.trans_mean).abs() < 1e-9);
                prop_assert!((a.stats.rot_mean_deg - b.stats.rot_mean_deg).abs() < 1e-6);
                prop_assert!((a.last_position_error - b.last_position_error).abs() < 1e-9, "{:?} {:?} {:?}", align, a, b);
            }
            let a = rpe_per_distance(&estimate, &reference, 5.0).unwrap();
            let b = rpe_per_distance(&eg, &rg, 5.0).unwrap();
            prop_assert!((a.trans_mean - b.trans_mean).abs() < 1e-9);

            let pts: Vec<Vec3> = reference.stamped().iter().map(|(_, p)| p.translation).collect();
            let built: Vec<Vec3> = estimate.stamped().iter().map(|(_, p)| p.translation).collect();
            let m1 = map_p2p_error(&PointCloud::new(built.clone(), Frame::Map).unwrap(), &PointCloud::new(pts.clone(), Frame::Map).unwrap()).unwrap();
            let moved = |v: &[Vec3]| PointCloud::new(v.iter().map(|p| g.transform_point(p)).collect(), Frame::Map).unwrap();
            let m2 = map_p2p_error(&moved(&built), &moved(&pts)).unwrap();
            prop_assert!((m1.rmse - m2.rmse).abs() < 1e-9);
        }

        #[test]
        fn origin_ape_zero_iff_coincident(seed in 0u64..200, scale in 0.0f64..0.1) {
            let reference = wiggly(seed, 30);
            let estimate = perturbed(&reference, seed, scale);
            let a = ape(&estimate, &reference, Alignment::Origin).unwrap();
            if scale == 0.0 {
                prop_assert!(a.stats.trans_mean < 1e-9);
            } else {
                prop_assert!(a.stats.trans_mean > 0.0);
            }
        }
    }
}

//! Normal estimation on the reference cloud and nearest-neighbor data association.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::{Frame, PointCloud, RigidTransform, Vec3};
use crate::kdtree::KdTree;
use crate::linalg::sym_eigen3;

/// Fewer pairs than this leave the 6-DoF problem underdetermined.
pub const MIN_MATCHES: usize = 6;

pub const DEFAULT_NORMAL_K: usize = 10;

/// One information pair: a reading point `p`, its matched reference point
/// `q`, and the reference surface normal `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub p: Vec3,
    pub q: Vec3,
    pub n: Vec3,
    pub index_reading: usize,
    pub index_reference: usize,
    pub distance: f64,
}

impl Correspondence {
    pub fn new(p: Vec3, q: Vec3, n: Vec3, index_reading: usize, index_reference: usize) -> Self {
        Self { p, q, n, index_reading, index_reference, distance: (p - q).norm() }
    }

    /// Point-to-plane residual `nᵀ(q - p)`.
    pub fn residual(&self) -> f64 {
        self.n.dot(&(self.q - self.p))
    }

    pub fn torque(&self) -> Vec3 {
        self.p.cross(&self.n)
    }

    fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            p: t.transform_point(&self.p),
            q: t.transform_point(&self.q),
            n: t.transform_vector(&self.n),
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
    pub frame: Frame,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<Correspondence>, frame: Frame) -> Self {
        Self { pairs, frame }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Apply a rigid transform to every pair, relabelling the frame.
    pub fn transformed(&self, t: &RigidTransform, frame: Frame) -> Self {
        Self { pairs: self.pairs.iter().map(|c| c.transformed(t)).collect(), frame }
    }

    /// Shift `p` and `q` so that `origin` becomes the coordinate origin.
    /// Orientation and frame label are unchanged.
    pub fn recentered(&self, origin: &Vec3) -> Self {
        let pairs = self
            .pairs
            .iter()
            .map(|c| Correspondence { p: c.p - origin, q: c.q - origin, ..*c })
            .collect();
        Self { pairs, frame: self.frame }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self { pairs: indices.iter().map(|&i| self.pairs[i]).collect(), frame: self.frame }
    }

    /// Sum of squared point-to-plane residuals.
    pub fn cost(&self) -> f64 {
        self.pairs.iter().map(|c| c.residual().powi(2)).sum()
    }
}

/// Output of normal estimation: the cloud with normals, restricted to points
/// whose neighborhood was not degenerate.
#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    /// Original indices of the kept points, ascending.
    pub kept: Vec<usize>,
    /// Original indices rejected with a degenerate (collinear) neighborhood.
    pub dropped: Vec<usize>,
}

/// Least-eigenvalue eigenvector of the neighborhood covariance, oriented
/// toward `viewpoint` as seen from `at`.
pub fn normal_from_neighborhood(neighbors: &[Vec3], at: &Vec3, viewpoint: &Vec3) -> Option<Vec3> {
    fit_plane(neighbors, at, viewpoint).map(|(n, _)| n)
}

/// Oriented normal plus surface variation `λ0 / (λ0 + λ1 + λ2)` of the
/// neighborhood: 0 on a plane, 1/3 for an isotropic blob.
pub fn fit_plane(neighbors: &[Vec3], at: &Vec3, viewpoint: &Vec3) -> Option<(Vec3, f64)> {
    if neighbors.len() < 3 {
        return None;
    }
    let inv = 1.0 / neighbors.len() as f64;
    let mean = neighbors.iter().fold(Vec3::zeros(), |acc, p| acc + p) * inv;
    let cov = neighbors.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) * inv;
    let (vals, vecs) = sym_eigen3(&cov);
    // Rank < 2 means collinear or coincident points: no plane is defined.
    if !(vals[2] > 0.0) || vals[1] <= 1e-12 * vals[2] {
        return None;
    }
    let mut n = vecs.column(0).into_owned();
    n /= n.norm();
    if n.dot(&(viewpoint - at)) < 0.0 {
        n = -n;
    }
    let variation = vals[0].max(0.0) / (vals[0].max(0.0) + vals[1] + vals[2]);
    Some((n, variation))
}

/// Estimate a normal for every point from its `k` nearest neighbors
/// (including itself), oriented toward `viewpoint`.
pub fn estimate_normals_toward(cloud: &PointCloud, k: usize, viewpoint: &Vec3) -> Result<NormalEstimate> {
    if k < 3 {
        return Err(Error::InvalidConfig(format!("normal estimation needs k >= 3, got {k}")));
    }
    if cloud.len() < k + 1 {
        return Err(Error::TooFewPoints { found: cloud.len(), required: k + 1 });
    }
    let points = cloud.points();
    let tree = KdTree::build(points);
    let mut kept = Vec::with_capacity(points.len());
    let mut dropped = Vec::new();
    let mut normals = Vec::with_capacity(points.len());
    let mut hood = Vec::with_capacity(k);
    for (i, p) in points.iter().enumerate() {
        hood.clear();
        hood.extend(tree.knn(p, k).iter().map(|nb| points[nb.index]));
        match normal_from_neighborhood(&hood, p, viewpoint) {
            Some(n) => {
                kept.push(i);
                normals.push(n);
            }
            None => dropped.push(i),
        }
    }
    let kept_points = kept.iter().map(|&i| points[i]).collect();
    let cloud = PointCloud::with_normals(kept_points, normals, cloud.frame())?;
    Ok(NormalEstimate { cloud, kept, dropped })
}

/// [`estimate_normals_toward`] with the viewpoint at the frame origin.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<NormalEstimate> {
    estimate_normals_toward(cloud, k, &Vec3::zeros())
}

/// Nearest-neighbor association over a prebuilt tree of `reference`.
pub fn match_with_tree(
    reading: &PointCloud,
    reference: &PointCloud,
    tree: &KdTree,
    t_init: &RigidTransform,
    max_dist: f64,
) -> Result<CorrespondenceSet> {
    let normals = reference.normals().ok_or(Error::MissingNormals)?;
    if !(max_dist > 0.0) {
        return Err(Error::InvalidConfig(format!("max_dist must be positive, got {max_dist}")));
    }
    let max_sq = max_dist * max_dist;
    let refs = reference.points();
    let pairs: Vec<Correspondence> = reading
        .points()
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let p = t_init.transform_point(p);
            tree.nearest_within(&p, max_sq)
                .map(|nb| Correspondence::new(p, refs[nb.index], normals[nb.index], i, nb.index))
        })
        .collect();
    if pairs.len() < MIN_MATCHES {
        return Err(Error::TooFewMatches { found: pairs.len(), required: MIN_MATCHES });
    }
    Ok(CorrespondenceSet::new(pairs, reference.frame()))
}

/// Match every reading point (mapped by `t_init`) to its nearest reference
/// point within `max_dist`. Pairs carry the reference normal.
pub fn match_clouds(
    reading: &PointCloud,
    reference: &PointCloud,
    t_init: &RigidTransform,
    max_dist: f64,
) -> Result<CorrespondenceSet> {
    let tree = KdTree::build(reference.points());
    match_with_tree(reading, reference, &tree, t_init, max_dist)
}

/// Express map-frame pairs in the sensor frame of pose `t_ml`.
pub fn to_lidar_frame(matches: &CorrespondenceSet, t_ml: &RigidTransform) -> CorrespondenceSet {
    matches.transformed(&t_ml.inverse(), Frame::Lidar)
}

//! Accumulating voxel map for scan-to-map registration.
//!
//! Each occupied voxel keeps the centroid of every point that fell into it.
//! Normals come from the nearest centroids in the surrounding voxels and are
//! oriented toward the sensor of the insertion that last touched the voxel.
//! Voxels on edges and corners borrow the normal of a planar neighbor whose
//! plane passes through them, or get none.
//! Only voxels whose centroid moved get a new normal.

use std::collections::HashMap;

use crate::correspondence::{fit_plane, DEFAULT_NORMAL_K};
use crate::error::{Error, Result};
use crate::geometry::{Frame, PointCloud, RigidTransform, Vec3};
use crate::kdtree::KdTree;

/// Voxels around the touched bounding box searched for normal neighbors.
const NEIGHBOR_REACH: i64 = 2;

/// Neighborhoods less planar than this are not trusted as one surface.
pub const MAX_SURFACE_VARIATION: f64 = 0.005;

/// Distance, in voxels, within which a centroid counts as lying on a plane.
const ON_PLANE_FRACTION: f64 = 0.25;


type Key = (i64, i64, i64);

#[derive(Debug, Clone)]
struct Cell {
    sum: Vec3,
    count: usize,
    normal: Option<Vec3>,
    /// Normal fitted on a planar neighborhood rather than borrowed.
    planar: bool,
}

impl Cell {
    fn centroid(&self) -> Vec3 {
        self.sum / self.count as f64
    }
}

#[derive(Debug, Clone)]
pub struct VoxelMap {
    voxel: f64,
    cells: HashMap<Key, Cell>,
    normal_k: usize,
}

impl VoxelMap {
    pub fn new(voxel: f64) -> Result<Self> {
        if !(voxel > 0.0) {
            return Err(Error::InvalidConfig(format!("map voxel size must be positive, got {voxel}")));
        }
        Ok(Self { voxel, cells: HashMap::new(), normal_k: DEFAULT_NORMAL_K })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn key(&self, p: &Vec3) -> Key {
        ((p.x / self.voxel).floor() as i64, (p.y / self.voxel).floor() as i64, (p.z / self.voxel).floor() as i64)
    }

    /// Add a sensor-frame scan observed from `pose` (map from sensor).
    pub fn insert(&mut self, scan: &PointCloud, pose: &RigidTransform) -> Result<()> {
        if scan.frame() != Frame::Lidar {
            return Err(Error::FrameMismatch { expected: Frame::Lidar, found: scan.frame() });
        }
        let mut touched: Vec<Key> = Vec::with_capacity(scan.len());
        for p in scan.points() {
            let m = pose.transform_point(p);
            let key = self.key(&m);
            let cell = self.cells.entry(key).or_insert(Cell { sum: Vec3::zeros(), count: 0, normal: None, planar: false });
            cell.sum += m;
            cell.count += 1;
            touched.push(key);
        }
        touched.sort_unstable();
        touched.dedup();
        let Some(lo) = touched.iter().copied().reduce(|a, b| (a.0.min(b.0), a.1.min(b.1), a.2.min(b.2))) else {
            return Ok(());
        };
        let hi = touched.iter().copied().reduce(|a, b| (a.0.max(b.0), a.1.max(b.1), a.2.max(b.2))).expect("non-empty");
        // Every cell near the touched ones, in key order so neighbor ties are stable.
        let m = NEIGHBOR_REACH;
        let mut region: Vec<(Key, Vec3)> = self
            .cells
            .iter()
            .filter(|(k, _)| {
                (lo.0 - m..=hi.0 + m).contains(&k.0) && (lo.1 - m..=hi.1 + m).contains(&k.1) && (lo.2 - m..=hi.2 + m).contains(&k.2)
            })
            .map(|(k, c)| (*k, c.centroid()))
            .collect();
        region.sort_unstable_by_key(|e| e.0);
        let pts: Vec<Vec3> = region.iter().map(|e| e.1).collect();
        let tree = KdTree::build(&pts);
        let sensor = pose.translation;
        let mut rough = Vec::new();
        for &key in &touched {
            let center = self.cells[&key].centroid();
            let near: Vec<Vec3> = tree.knn(&center, self.normal_k).iter().map(|n| pts[n.index]).collect();
            let fit = fit_plane(&near, &center, &sensor).filter(|f| f.1 <= MAX_SURFACE_VARIATION);
            let cell = self.cells.get_mut(&key).expect("touched cells exist");
            cell.normal = fit.map(|f| f.0);
            cell.planar = fit.is_some();
            if fit.is_none() {
                rough.push(key);
            }
        }
        // Edge and corner voxels take the plane of a planar neighbor they lie on.
        let tol = self.voxel * ON_PLANE_FRACTION;
        for key in rough {
            let center = self.cells[&key].centroid();
            let borrowed = tree.knn(&center, self.normal_k).iter().find_map(|n| {
                let other = &self.cells[&region[n.index].0];
                let normal = other.normal.filter(|_| other.planar)?;
                ((center - pts[n.index]).dot(&normal).abs() <= tol).then_some(normal)
            });
            self.cells.get_mut(&key).expect("touched cells exist").normal =
                borrowed.map(|n| if n.dot(&(sensor - center)) < 0.0 { -n } else { n });
        }
        Ok(())
    }

    /// Centroids with valid normals, ordered by voxel key.
    pub fn cloud(&self) -> PointCloud {
        self.collect(|_| true)
    }

    /// Centroids with valid normals within `radius` of `center`.
    pub fn submap(&self, center: &Vec3, radius: f64) -> PointCloud {
        let r2 = radius * radius;
        self.collect(|p| (p - center).norm_squared() <= r2)
    }

    fn collect(&self, keep: impl Fn(&Vec3) -> bool) -> PointCloud {
        let mut keys: Vec<&Key> = self.cells.keys().collect();
        keys.sort_unstable();
        let (mut pts, mut nrm) = (Vec::new(), Vec::new());
        for k in keys {
            let c = &self.cells[k];
            if let Some(n) = c.normal {
                let p = c.centroid();
                if keep(&p) {
                    pts.push(p);
                    nrm.push(n);
                }
            }
        }
        PointCloud::with_normals(pts, nrm, Frame::Map).expect("normals are unit and finite")
    }

    /// All occupied voxel centroids, normals or not, ordered by voxel key.
    pub fn centroids(&self) -> Vec<Vec3> {
        let mut keys: Vec<&Key> = self.cells.keys().collect();
        keys.sort_unstable();
        keys.into_iter().map(|k| self.cells[k].centroid()).collect()
    }
}

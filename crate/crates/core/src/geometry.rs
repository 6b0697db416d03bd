//! Rigid transforms, rotation-vector algebra and the point-cloud value type.
//!
//! Pose updates are ordered `[r; t]`: rotation block first, translation second.

use nalgebra::{Matrix3, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::linalg::skew;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this angle the Rodrigues formula is replaced by its series expansion.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Coordinate frame a set of points is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    /// Sensor frame.
    Lidar,
    /// Map (world) frame.
    Map,
}

impl Frame {
    pub fn label(self) -> &'static str {
        match self {
            Frame::Lidar => "L",
            Frame::Map => "M",
        }
    }
}

/// Rotation matrix for a rotation vector (Rodrigues formula).
pub fn exp_rotvec(rotvec: &Vec3) -> Mat3 {
    let theta = rotvec.norm();
    let k = skew(rotvec);
    if theta < SMALL_ANGLE {
        return Mat3::identity() + k + k * k * 0.5;
    }
    let (s, c) = theta.sin_cos();
    Mat3::identity() + k * (s / theta) + k * k * ((1.0 - c) / (theta * theta))
}

/// Rotation vector of a rotation matrix, with angle in `[0, pi]`.
pub fn log_rotation(r: &Mat3) -> Vec3 {
    let w = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]) * 0.5;
    let s = w.norm();
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = s.atan2(c);
    if theta < SMALL_ANGLE {
        return w;
    }
    if std::f64::consts::PI - theta > 1e-6 {
        return w * (theta / s);
    }
    // Near pi the antisymmetric part vanishes; recover the axis from R + I.
    let b = (r + Mat3::identity()) * 0.5;
    let mut col = 0;
    for i in 1..3 {
        if b[(i, i)] > b[(col, col)] {
            col = i;
        }
    }
    let mut axis = b.column(col).into_owned();
    axis /= axis.norm();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Geodesic angle of a rotation matrix, radians.
pub fn rotation_angle(r: &Mat3) -> f64 {
    log_rotation(r).norm()
}

/// Rigid-body transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self { rotation: Mat3::identity(), translation }
    }

    pub fn from_rotvec(rotvec: Vec3, translation: Vec3) -> Self {
        Self { rotation: exp_rotvec(&rotvec), translation }
    }

    /// Rotation about +z by `yaw` radians, then translation.
    pub fn from_yaw(yaw: f64, translation: Vec3) -> Self {
        Self::from_rotvec(Vec3::new(0.0, 0.0, yaw), translation)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn rotvec(&self) -> Vec3 {
        log_rotation(&self.rotation)
    }

    /// Frobenius norm of `R Rᵀ - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation * self.rotation.transpose() - Mat3::identity()).norm()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.orthonormality_error() < tol
            && (self.rotation.determinant() - 1.0).abs() < tol
            && self.translation.iter().all(|x| x.is_finite())
    }

    /// Apply an update about the current origin: rotation first, then translation.
    ///
    /// Rotates the pose about its own position and then shifts it, i.e.
    /// `R <- exp(r) R`, `t <- t + dt`.
    pub fn apply_update(&self, update: &PoseUpdate) -> RigidTransform {
        RigidTransform {
            rotation: exp_rotvec(&update.rotvec) * self.rotation,
            translation: self.translation + update.trans,
        }
    }
}

/// Six-dimensional optimization variable `x = [r; t]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseUpdate {
    /// Rotation vector, radians.
    pub rotvec: Vec3,
    /// Translation, meters.
    pub trans: Vec3,
}

impl PoseUpdate {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self {
            rotvec: Vec3::new(x[0], x[1], x[2]),
            trans: Vec3::new(x[3], x[4], x[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.rotvec.x, self.rotvec.y, self.rotvec.z, self.trans.x, self.trans.y, self.trans.z)
    }

    pub fn is_finite(&self) -> bool {
        self.rotvec.iter().chain(self.trans.iter()).all(|x| x.is_finite())
    }
}

/// Points with optional unit normals, tagged with the frame they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    frame: Frame,
}

const NORMAL_TOL: f64 = 1e-6;

impl PointCloud {
    pub fn new(points: Vec<Vec3>, frame: Frame) -> Result<Self> {
        check_finite(&points)?;
        Ok(Self { points, normals: None, frame })
    }

    pub fn with_normals(points: Vec<Vec3>, normals: Vec<Vec3>, frame: Frame) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::LengthMismatch { points: points.len(), normals: normals.len() });
        }
        check_finite(&points)?;
        check_finite(&normals)?;
        for (index, n) in normals.iter().enumerate() {
            let norm = n.norm();
            if (norm - 1.0).abs() >= NORMAL_TOL {
                return Err(Error::NonUnitNormal { index, norm });
            }
        }
        Ok(Self { points, normals: Some(normals), frame })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_parts(self) -> (Vec<Vec3>, Option<Vec<Vec3>>, Frame) {
        (self.points, self.normals, self.frame)
    }

    /// Keep the points at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self.normals.as_ref().map(|n| indices.iter().map(|&i| n[i]).collect()),
            frame: self.frame,
        }
    }
}

fn check_finite(v: &[Vec3]) -> Result<()> {
    match v.iter().position(|p| !p.iter().all(|x| x.is_finite())) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Map points by `R p + t` and normals by `R n`, relabelling the frame.
pub fn apply_transform(t: &RigidTransform, cloud: &PointCloud, target: Frame) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| t.transform_point(p)).collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| t.transform_vector(n)).collect()),
        frame: target,
    }
}

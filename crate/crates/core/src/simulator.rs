//! Synthetic degenerate worlds, scan formation and noisy motion priors.
//!
//! Worlds are sampled on regular grids over analytic surfaces, so every
//! normal is exact. Worlds are built in a local frame where the degenerate
//! direction is axis-aligned; the tunnel and the combined world are then
//! yawed by `misalignment_deg` into the map frame.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Frame, PointCloud, RigidTransform, Vec3};

/// Speeds at which the per-speed noise figures are specified.
pub const REFERENCE_LINEAR_SPEED: f64 = 0.5;
pub const REFERENCE_ANGULAR_SPEED: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorldKind {
    Tunnel,
    CylinderRoom,
    Plane,
    CombinedCorridorOpen,
    BoxRoom,
}

impl WorldKind {
    pub fn name(self) -> &'static str {
        match self {
            WorldKind::Tunnel => "tunnel",
            WorldKind::CylinderRoom => "cylinder-room",
            WorldKind::Plane => "plane",
            WorldKind::CombinedCorridorOpen => "combined-corridor-open",
            WorldKind::BoxRoom => "box-room",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub kind: WorldKind,
    pub spacing: f64,
    pub seed: u64,
    /// In-surface jitter as a fraction of `spacing`; 0 keeps the exact grid.
    pub jitter: f64,
    pub misalignment_deg: f64,
    pub tunnel_radius: f64,
    pub tunnel_length: f64,
    pub cylinder_radius: f64,
    pub cylinder_height: f64,
    pub corridor_width: f64,
    pub corridor_length: f64,
    pub corridor_height: f64,
    pub open_radius: f64,
    pub plane_size: f64,
    /// Box room extents along x, y and z.
    pub box_extents: [f64; 3],
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            kind: WorldKind::BoxRoom,
            spacing: 0.1,
            seed: 0,
            jitter: 0.0,
            misalignment_deg: 20.0,
            tunnel_radius: 3.0,
            tunnel_length: 60.0,
            cylinder_radius: 8.0,
            cylinder_height: 4.0,
            corridor_width: 4.0,
            corridor_length: 30.0,
            corridor_height: 3.0,
            open_radius: 20.0,
            plane_size: 20.0,
            box_extents: [16.0, 10.0, 4.0],
        }
    }
}

impl WorldSpec {
    pub fn of_kind(kind: WorldKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.spacing,
            self.tunnel_radius,
            self.tunnel_length,
            self.cylinder_radius,
            self.cylinder_height,
            self.corridor_width,
            self.corridor_length,
            self.corridor_height,
            self.open_radius,
            self.plane_size,
            self.box_extents[0],
            self.box_extents[1],
            self.box_extents[2],
        ];
        if dims.iter().any(|d| !(*d > 0.0)) || !(0.0..0.5).contains(&self.jitter) || !self.misalignment_deg.is_finite() {
            return Err(Error::InvalidConfig(format!("world dimensions and spacing must be positive, jitter in [0, 0.5): {self:?}")));
        }
        Ok(())
    }

    /// Yaw from the world's local frame into the map frame.
    pub fn local_to_map(&self) -> RigidTransform {
        match self.kind {
            WorldKind::Tunnel | WorldKind::CombinedCorridorOpen => {
                RigidTransform::from_yaw(self.misalignment_deg.to_radians(), Vec3::zeros())
            }
            _ => RigidTransform::identity(),
        }
    }

    /// Unit direction of the degenerate tunnel or corridor axis, map frame.
    pub fn axis(&self) -> Vec3 {
        self.local_to_map().transform_vector(&Vec3::x())
    }
}

struct Sampler {
    points: Vec<Vec3>,
    normals: Vec<Vec3>,
    rng: ChaCha8Rng,
    jitter: f64,
}

impl Sampler {
    fn offset(&mut self, step: f64) -> f64 {
        if self.jitter > 0.0 {
            self.rng.random_range(-self.jitter..self.jitter) * step
        } else {
            0.0
        }
    }

    fn push(&mut self, p: Vec3, n: Vec3) {
        self.points.push(p);
        self.normals.push(n);
    }
}

/// `count + 1` samples covering `[a, b]`.
fn grid(a: f64, b: f64, step: f64) -> impl Iterator<Item = f64> + Clone {
    let count = ((b - a) / step).round().max(1.0) as usize;
    let h = (b - a) / count as f64;
    (0..=count).map(move |i| a + i as f64 * h)
}

pub fn build_world(spec: &WorldSpec) -> Result<PointCloud> {
    spec.validate()?;
    let s = spec.spacing;
    let mut w = Sampler { points: Vec::new(), normals: Vec::new(), rng: ChaCha8Rng::seed_from_u64(spec.seed), jitter: spec.jitter };
    match spec.kind {
        WorldKind::Plane => {
            let h = spec.plane_size / 2.0;
            for x in grid(-h, h, s) {
                for y in grid(-h, h, s) {
                    let (dx, dy) = (w.offset(s), w.offset(s));
                    w.push(Vec3::new(x + dx, y + dy, 0.0), Vec3::z());
                }
            }
        }
        WorldKind::Tunnel => {
            let r = spec.tunnel_radius;
            let arc = (std::f64::consts::PI * r / s).round() as usize;
            for x in grid(0.0, spec.tunnel_length, s) {
                for k in 0..=arc {
                    let th = std::f64::consts::PI * k as f64 / arc as f64 + w.offset(s) / r;
                    let x = x + w.offset(s);
                    let radial = Vec3::new(0.0, th.cos(), th.sin());
                    w.push(Vec3::new(x, 0.0, 0.0) + radial * r, -radial);
                }
                for y in grid(-r, r, s).filter(|y| y.abs() < r - 0.5 * s) {
                    let (dx, dy) = (w.offset(s), w.offset(s));
                    w.push(Vec3::new(x + dx, y + dy, 0.0), Vec3::z());
                }
            }
        }
        WorldKind::CylinderRoom => {
            let r = spec.cylinder_radius;
            let around = (2.0 * std::f64::consts::PI * r / s).round() as usize;
            for k in 0..around {
                for z in grid(0.0, spec.cylinder_height, s).skip(1) {
                    let phi = 2.0 * std::f64::consts::PI * k as f64 / around as f64 + w.offset(s) / r;
                    let z = z + w.offset(s);
                    let radial = Vec3::new(phi.cos(), phi.sin(), 0.0);
                    w.push(radial * r + Vec3::z() * z, -radial);
                }
            }
            floor_disk(&mut w, Vec3::zeros(), r - 0.5 * s, s);
        }
        WorldKind::CombinedCorridorOpen => {
            let (hw, len, ro) = (spec.corridor_width / 2.0, spec.corridor_length, spec.open_radius);
            corridor(&mut w, -len, 0.0, hw, spec.corridor_height, s);
            floor_disk(&mut w, Vec3::new(ro, 0.0, 0.0), ro, s);
            corridor(&mut w, 2.0 * ro, 2.0 * ro + len, hw, spec.corridor_height, s);
        }
        WorldKind::BoxRoom => {
            let [ex, ey, ez] = spec.box_extents;
            let (hx, hy) = (ex / 2.0, ey / 2.0);
            // Faces share no samples: edges belong to the floor/ceiling or to the x walls.
            for x in grid(-hx, hx, s) {
                for y in grid(-hy, hy, s) {
                    let (dx, dy) = (w.offset(s), w.offset(s));
                    w.push(Vec3::new(x + dx, y + dy, 0.0), Vec3::z());
                    let (dx, dy) = (w.offset(s), w.offset(s));
                    w.push(Vec3::new(x + dx, y + dy, ez), -Vec3::z());
                }
            }
            let inner_z: Vec<f64> = grid(0.0, ez, s).filter(|z| *z > 0.5 * s && *z < ez - 0.5 * s).collect();
            for &z in &inner_z {
                for y in grid(-hy, hy, s) {
                    for sign in [-1.0, 1.0] {
                        let (dy, dz) = (w.offset(s), w.offset(s));
                        w.push(Vec3::new(sign * hx, y + dy, z + dz), Vec3::new(-sign, 0.0, 0.0));
                    }
                }
                for x in grid(-hx, hx, s).filter(|x| x.abs() < hx - 0.5 * s) {
                    for sign in [-1.0, 1.0] {
                        let (dx, dz) = (w.offset(s), w.offset(s));
                        w.push(Vec3::new(x + dx, sign * hy, z + dz), Vec3::new(0.0, -sign, 0.0));
                    }
                }
            }
        }
    }
    let to_map = spec.local_to_map();
    let points = w.points.iter().map(|p| to_map.transform_point(p)).collect();
    let normals = w.normals.iter().map(|n| to_map.transform_vector(n)).collect();
    PointCloud::with_normals(points, normals, Frame::Map)
}

fn floor_disk(w: &mut Sampler, center: Vec3, radius: f64, s: f64) {
    for x in grid(center.x - radius, center.x + radius, s) {
        for y in grid(center.y - radius, center.y + radius, s) {
            if (x - center.x).powi(2) + (y - center.y).powi(2) <= radius * radius {
                let (dx, dy) = (w.offset(s), w.offset(s));
                w.push(Vec3::new(x + dx, y + dy, 0.0), Vec3::z());
            }
        }
    }
}

/// Open-ended corridor along x between `x0` and `x1` with walls at `y = ±hw`.
fn corridor(w: &mut Sampler, x0: f64, x1: f64, hw: f64, height: f64, s: f64) {
    for x in grid(x0, x1, s) {
        for z in grid(0.0, height, s).skip(1) {
            for sign in [-1.0, 1.0] {
                let (dx, dz) = (w.offset(s), w.offset(s));
                w.push(Vec3::new(x + dx, sign * hw, z + dz), Vec3::new(0.0, -sign, 0.0));
            }
        }
        for y in grid(-hw, hw, s).filter(|y| y.abs() < hw - 0.5 * s) {
            let (dx, dy) = (w.offset(s), w.offset(s));
            w.push(Vec3::new(x + dx, y + dy, 0.0), Vec3::z());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSpec {
    pub max_range: f64,
    pub max_points: usize,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self { max_range: 15.0, max_points: 8192 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Per-axis translation sigma (m) at the reference linear speed.
    pub sigma_t_per_speed: f64,
    /// Per-axis rotation sigma (rad) at the reference angular speed.
    pub sigma_r_per_speed: f64,
    /// Per-point range sigma (m).
    pub range_noise: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { sigma_t_per_speed: 0.0125, sigma_r_per_speed: 0.005, range_noise: 0.0, seed: 0 }
    }
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self { sigma_t_per_speed: 0.0, sigma_r_per_speed: 0.0, range_noise: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.sigma_t_per_speed, self.sigma_r_per_speed, self.range_noise].iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidConfig(format!("noise sigmas must be non-negative: {self:?}")));
        }
        Ok(())
    }
}

/// Points visible from `sensor_pose` (map from sensor), in the sensor frame.
///
/// Visible means within range and on a surface facing the sensor. Normals are
/// the exact world normals rotated into the sensor frame.
pub fn simulate_scan(
    world: &PointCloud,
    sensor_pose: &RigidTransform,
    sensor: &SensorSpec,
    range_noise: f64,
    seed: u64,
) -> Result<PointCloud> {
    let normals = world.normals().ok_or(Error::MissingNormals)?;
    let origin = sensor_pose.translation;
    let r2 = sensor.max_range * sensor.max_range;
    let mut visible: Vec<usize> = world
        .points()
        .iter()
        .zip(normals)
        .enumerate()
        .filter(|(_, (p, n))| {
            let d = origin - *p;
            let dist2 = d.norm_squared();
            dist2 <= r2 && dist2 > 0.0 && n.dot(&d) > 0.0
        })
        .map(|(i, _)| i)
        .collect();
    if visible.is_empty() {
        return Err(Error::EmptyScan);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if visible.len() > sensor.max_points {
        let mut keep = index::sample(&mut rng, visible.len(), sensor.max_points).into_vec();
        keep.sort_unstable();
        visible = keep.into_iter().map(|k| visible[k]).collect();
    }
    let inv = sensor_pose.inverse();
    let noise = if range_noise > 0.0 { Some(Normal::new(0.0, range_noise).expect("valid sigma")) } else { None };
    let mut pts = Vec::with_capacity(visible.len());
    let mut nrm = Vec::with_capacity(visible.len());
    for &i in &visible {
        let mut p = inv.transform_point(&world.points()[i]);
        if let Some(dist) = &noise {
            let range = p.norm();
            p *= (range + dist.sample(&mut rng)) / range;
        }
        pts.push(p);
        nrm.push(inv.transform_vector(&normals[i]));
    }
    PointCloud::with_normals(pts, nrm, Frame::Lidar)
}

/// Noisy version of a relative motion. Noise sigmas scale with the speeds of
/// the motion and the noise is applied in the moved body frame:
/// `prior = true_delta ∘ noise`.
pub fn perturb_prior(true_delta: &RigidTransform, speeds: (f64, f64), noise: &NoiseSpec, seed: u64) -> RigidTransform {
    let sigma_t = noise.sigma_t_per_speed * speeds.0 / REFERENCE_LINEAR_SPEED;
    let sigma_r = noise.sigma_r_per_speed * speeds.1 / REFERENCE_ANGULAR_SPEED;
    if !(sigma_t > 0.0) && !(sigma_r > 0.0) {
        return *true_delta;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |sigma: f64| {
        if sigma > 0.0 {
            let d = Normal::new(0.0, sigma).expect("valid sigma");
            Vec3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng))
        } else {
            Vec3::zeros()
        }
    };
    let dt = draw(sigma_t);
    let dr = draw(sigma_r);
    true_delta.compose(&RigidTransform::from_rotvec(dr, dt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    /// `[x, y, z, yaw]` in the world's local frame.
    pub waypoints: Vec<[f64; 4]>,
    pub linear_speed: f64,
    pub angular_speed: f64,
    pub scan_rate: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self { waypoints: vec![[0.0, 0.0, 1.0, 0.0]], linear_speed: 0.5, angular_speed: 0.2, scan_rate: 1.0 }
    }
}

/// One simulated pose with the speeds of the motion leading to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub time: f64,
    pub pose: RigidTransform,
    pub linear_speed: f64,
    pub angular_speed: f64,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty()
            || !(self.linear_speed >= 0.0)
            || !(self.angular_speed >= 0.0)
            || !(self.scan_rate > 0.0)
            || self.waypoints.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig(format!("trajectory needs waypoints, speeds >= 0 and scan_rate > 0: {self:?}")));
        }
        for w in self.waypoints.windows(2) {
            let moves = (0..3).any(|k| w[0][k] != w[1][k]);
            let turns = w[0][3] != w[1][3];
            if (moves && self.linear_speed == 0.0) || (turns && self.angular_speed == 0.0) {
                return Err(Error::InvalidConfig("a waypoint change needs a non-zero speed".into()));
            }
        }
        Ok(())
    }

    fn durations(&self) -> Vec<f64> {
        self.waypoints
            .windows(2)
            .map(|w| {
                let dist = Vec3::new(w[1][0] - w[0][0], w[1][1] - w[0][1], w[1][2] - w[0][2]).norm();
                let turn = (w[1][3] - w[0][3]).abs();
                let t_lin = if dist > 0.0 { dist / self.linear_speed } else { 0.0 };
                let t_ang = if turn > 0.0 { turn / self.angular_speed } else { 0.0 };
                t_lin.max(t_ang)
            })
            .collect()
    }

    pub fn duration(&self) -> f64 {
        self.durations().iter().sum()
    }

    /// Waypoint state `[x, y, z, yaw]` at time `t`, clamped to the path.
    fn state_at(&self, t: f64, durations: &[f64]) -> [f64; 4] {
        let mut start = 0.0;
        for (k, d) in durations.iter().enumerate() {
            if t <= start + d && *d > 0.0 {
                let a = ((t - start) / d).clamp(0.0, 1.0);
                let (p, q) = (self.waypoints[k], self.waypoints[k + 1]);
                return std::array::from_fn(|i| p[i] + a * (q[i] - p[i]));
            }
            start += d;
        }
        *self.waypoints.last().expect("validated non-empty")
    }
}

/// Sample the path at the scan rate, starting at time 0. Poses map sensor to map.
pub fn sample_trajectory(spec: &TrajectorySpec, local_to_map: &RigidTransform) -> Result<Vec<TrajectorySample>> {
    spec.validate()?;
    let durations = spec.durations();
    let total: f64 = durations.iter().sum();
    let period = 1.0 / spec.scan_rate;
    let frames = (total * spec.scan_rate + 1e-9).floor() as usize + 1;
    let mut out: Vec<TrajectorySample> = Vec::with_capacity(frames);
    for k in 0..frames {
        let time = k as f64 * period;
        let [x, y, z, yaw] = spec.state_at(time, &durations);
        let pose = local_to_map.compose(&RigidTransform::from_yaw(yaw, Vec3::new(x, y, z)));
        let (linear_speed, angular_speed) = match out.last() {
            Some(prev) => {
                let delta = prev.pose.inverse().compose(&pose);
                (delta.translation.norm() / period, delta.rotvec().norm() / period)
            }
            None => (0.0, 0.0),
        };
        out.push(TrajectorySample { time, pose, linear_speed, angular_speed });
    }
    Ok(out)
}

//! Scan-to-map experiments: configuration, simulation, sequential
//! registration against an accumulating map, and evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::RemappingConfig;
use crate::error::{Error, Result};
use crate::geometry::{Frame, PointCloud, RigidTransform};
use crate::io;
use crate::kdtree::KdTree;
use crate::localizability::LocalizabilityParams;
use crate::mapping::VoxelMap;
use crate::metrics::{ape, map_p2p_error, rpe_per_distance, Alignment, ApeStats, ErrorStats, MapError, Trajectory};
use crate::registration::{run_icp_with_tree, Handler, IcpConfig, IterationRecord};
use crate::simulator::{
    build_world, perturb_prior, sample_trajectory, simulate_scan, NoiseSpec, SensorSpec, TrajectorySample, TrajectorySpec,
    WorldSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub map_voxel: f64,
    pub world: WorldSpec,
    pub sensor: SensorSpec,
    pub trajectory: TrajectorySpec,
    pub noise: NoiseSpec,
    pub icp: IcpConfig,
    pub localizability: LocalizabilityParams,
    pub baseline: RemappingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            map_voxel: 0.1,
            world: WorldSpec::default(),
            sensor: SensorSpec::default(),
            trajectory: TrajectorySpec::default(),
            noise: NoiseSpec::default(),
            icp: IcpConfig::default(),
            localizability: LocalizabilityParams::default(),
            baseline: RemappingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.map_voxel > 0.0) {
            return Err(Error::InvalidConfig(format!("map_voxel must be positive, got {}", self.map_voxel)));
        }
        if !(self.sensor.max_range > 0.0) || self.sensor.max_points == 0 {
            return Err(Error::InvalidConfig("sensor needs a positive range and point budget".into()));
        }
        self.world.validate()?;
        self.trajectory.validate()?;
        self.noise.validate()?;
        self.icp_config().validate()
    }

    /// Registration settings with the detector and baseline sections folded in.
    pub fn icp_config(&self) -> IcpConfig {
        IcpConfig { localizability: self.localizability, remapping: self.baseline, ..self.icp }
    }

    /// Same experiment under another seed: world jitter and all noise streams.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.world.seed = seed;
        self.noise.seed = seed;
        self
    }
}

/// Independent, reproducible seed for element `index` of stream `stream`.
pub fn stream_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SCAN_STREAM: u64 = 1;
const PRIOR_STREAM: u64 = 2;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub world: PointCloud,
    pub truth: Vec<TrajectorySample>,
    /// Sensor-frame scans, one per truth sample.
    pub scans: Vec<PointCloud>,
}

impl Dataset {
    pub fn truth_trajectory(&self) -> Trajectory {
        Trajectory::new(self.truth.iter().map(|s| (s.time, s.pose)).collect()).expect("sampled stamps increase")
    }
}

pub fn simulate_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.validate()?;
    let world = build_world(&cfg.world)?;
    let truth = sample_trajectory(&cfg.trajectory, &cfg.world.local_to_map())?;
    let scans = truth
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let seed = stream_seed(cfg.noise.seed, SCAN_STREAM, k as u64);
            simulate_scan(&world, &s.pose, &cfg.sensor, cfg.noise.range_noise, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { world, truth, scans })
}

#[derive(Debug, Clone)]
pub struct FrameResult {
    pub index: usize,
    pub time: f64,
    pub prior: RigidTransform,
    pub pose: RigidTransform,
    /// Registration error message when the frame fell back to its prior.
    pub failure: Option<String>,
    pub converged: bool,
    pub log: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub handler: Handler,
    pub frames: Vec<FrameResult>,
    pub map: VoxelMap,
}

impl RunOutput {
    pub fn trajectory(&self) -> Trajectory {
        Trajectory::new(self.frames.iter().map(|f| (f.time, f.pose)).collect()).expect("frame stamps increase")
    }

    pub fn failed_frames(&self) -> usize {
        self.frames.iter().filter(|f| f.failure.is_some()).count()
    }
}

/// Prior for frame `k > 0`: the previous estimate composed with the noisy
/// relative motion between true poses.
pub fn frame_prior(cfg: &ExperimentConfig, truth: &[TrajectorySample], previous: &RigidTransform, k: usize) -> RigidTransform {
    let delta = truth[k - 1].pose.inverse().compose(&truth[k].pose);
    let speeds = (truth[k].linear_speed, truth[k].angular_speed);
    let noisy = perturb_prior(&delta, speeds, &cfg.noise, stream_seed(cfg.noise.seed, PRIOR_STREAM, k as u64));
    previous.compose(&noisy)
}

/// Register every scan in order against the map built from earlier frames.
/// The first scan seeds the map at its prior, the true first pose.
pub fn register_sequence(cfg: &ExperimentConfig, data: &Dataset, handler: Handler) -> Result<RunOutput> {
    cfg.validate()?;
    let icp = cfg.icp_config().with_handler(handler);
    let mut map = VoxelMap::new(cfg.map_voxel)?;
    let mut frames: Vec<FrameResult> = Vec::with_capacity(data.scans.len());
    let radius = cfg.sensor.max_range + icp.max_match_dist;
    for (k, (scan, sample)) in data.scans.iter().zip(&data.truth).enumerate() {
        let mut frame = FrameResult {
            index: k,
            time: sample.time,
            prior: sample.pose,
            pose: sample.pose,
            failure: None,
            converged: true,
            log: Vec::new(),
        };
        if let Some(prev) = frames.last() {
            frame.prior = frame_prior(cfg, &data.truth, &prev.pose, k);
            frame.pose = frame.prior;
            let reference = map.submap(&frame.prior.translation, radius);
            let tree = KdTree::build(reference.points());
            match run_icp_with_tree(scan, &reference, &tree, &frame.prior, &icp) {
                Ok(out) => {
                    frame.pose = out.pose;
                    frame.converged = out.converged;
                    frame.log = out.log;
                }
                Err(e) => {
                    frame.failure = Some(format!("frame {k}: {e}"));
                    frame.converged = false;
                }
            }
        }
        map.insert(scan, &frame.pose)?;
        frames.push(frame);
    }
    Ok(RunOutput { handler, frames, map })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub ape_origin: ApeStats,
    pub ape_prefix: ApeStats,
    /// Relative error per 10 m, absent when the path is shorter.
    pub rpe: Option<ErrorStats>,
    pub map: MapError,
}

pub const PREFIX_ALIGN_M: f64 = 15.0;
pub const RPE_SEGMENT_M: f64 = 10.0;

pub fn evaluate(estimate: &Trajectory, truth: &Trajectory, built: &PointCloud, world: &PointCloud) -> Result<Evaluation> {
    let rpe = match rpe_per_distance(estimate, truth, RPE_SEGMENT_M) {
        Ok(r) => Some(r),
        Err(Error::EmptyAssociation) if !estimate.is_empty() => None,
        Err(e) => return Err(e),
    };
    Ok(Evaluation {
        ape_origin: ape(estimate, truth, Alignment::Origin)?,
        ape_prefix: ape(estimate, truth, Alignment::PrefixMeters(PREFIX_ALIGN_M))?,
        rpe,
        map: map_p2p_error(built, world)?,
    })
}

pub const WORLD_FILE: &str = "world.ply";
pub const TRUTH_FILE: &str = "ground_truth.csv";
pub const SCAN_DIR: &str = "scans";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const LOCALIZABILITY_FILE: &str = "localizability.csv";
pub const FRAMES_FILE: &str = "frames.csv";
pub const MAP_FILE: &str = "map.ply";
pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MAP_ERROR_FILE: &str = "map_error.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes the world, the ground-truth trajectory and every scan.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Dataset> {
    let data = simulate_dataset(cfg)?;
    let dir = &cfg.output_dir;
    create_dir(&dir.join(SCAN_DIR))?;
    io::write_ply(&dir.join(WORLD_FILE), &data.world)?;
    io::write_trajectory(&dir.join(TRUTH_FILE), &data.truth_trajectory())?;
    for (k, scan) in data.scans.iter().enumerate() {
        io::write_ply(&dir.join(SCAN_DIR).join(format!("scan_{k:05}.ply")), scan)?;
    }
    fs::write(dir.join(CONFIG_FILE), cfg.to_toml())?;
    Ok(data)
}

/// Runs the scan-to-map pipeline and writes the estimate, the per-iteration
/// localizability table, per-frame status and the built map.
pub fn cmd_register(cfg: &ExperimentConfig, handler: Handler) -> Result<RunOutput> {
    let data = simulate_dataset(cfg)?;
    let run = register_sequence(cfg, &data, handler)?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    io::write_trajectory(&dir.join(TRAJECTORY_FILE), &run.trajectory())?;
    io::write_rows(&dir.join(LOCALIZABILITY_FILE), &io::localizability_header(), &io::localizability_rows(&run))?;
    io::write_rows(&dir.join(FRAMES_FILE), &io::frame_header(), &io::frame_rows(&run))?;
    io::write_ply(&dir.join(MAP_FILE), &run.map.cloud())?;
    let mut stored = cfg.clone();
    stored.icp.handler = handler;
    fs::write(dir.join(CONFIG_FILE), stored.to_toml())?;
    Ok(run)
}

/// Scores a registration run against a simulation output directory.
pub fn cmd_evaluate(run_dir: &Path, truth_dir: &Path) -> Result<Evaluation> {
    let estimate = io::read_trajectory(&run_dir.join(TRAJECTORY_FILE))?;
    let truth = io::read_trajectory(&truth_dir.join(TRUTH_FILE))?;
    let built = io::read_ply(&run_dir.join(MAP_FILE), Frame::Map)?;
    let world = io::read_ply(&truth_dir.join(WORLD_FILE), Frame::Map)?;
    let eval = evaluate(&estimate, &truth, &built, &world)?;
    let method = fs::read_to_string(run_dir.join(CONFIG_FILE))
        .ok()
        .and_then(|text| toml::from_str::<ExperimentConfig>(&text).ok())
        .map_or_else(
            || run_dir.file_name().map_or("run".to_string(), |n| n.to_string_lossy().into_owned()),
            |c| c.icp.handler.name().to_string(),
        );
    let (_, frames) = io::read_rows(&run_dir.join(FRAMES_FILE))?;
    let failed = frames.iter().filter(|r| r.get(4).is_some_and(|v| v == "true")).count();
    io::write_rows(&run_dir.join(METRICS_FILE), &io::metrics_header(), &[io::metrics_row(&method, estimate.len(), failed, &eval)])?;
    let (header, rows) = io::map_error_rows(&built, &eval.map.per_point);
    io::write_rows(&run_dir.join(MAP_ERROR_FILE), &header, &rows)?;
    Ok(eval)
}

/// Joins the metric rows of several evaluated runs into one table.
pub fn cmd_compare(run_dirs: &[PathBuf], out_dir: &Path) -> Result<PathBuf> {
    if run_dirs.is_empty() {
        return Err(Error::InvalidConfig("compare needs at least one run directory".into()));
    }
    let mut header = None;
    let mut rows = Vec::new();
    for dir in run_dirs {
        let (h, r) = io::read_rows(&dir.join(METRICS_FILE))?;
        if header.as_ref().is_some_and(|prev| *prev != h) {
            return Err(Error::Parse(format!("{} has a different metrics layout", dir.display())));
        }
        header = Some(h);
        rows.extend(r);
    }
    create_dir(out_dir)?;
    let path = out_dir.join(COMPARISON_FILE);
    io::write_rows(&path, &header.expect("non-empty"), &rows)?;
    Ok(path)
}

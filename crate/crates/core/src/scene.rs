//! Scene configuration, seeded synthetic generation and experiment reports.
//!
//! A [`SceneConfig`] is plain JSON. Every command turns it into a [`Report`]:
//! named metrics, pass/fail verdicts and embedded coefficient vectors. Maps
//! are ordered, so the same config and seed always serialize to the same
//! bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cameras::{fundamental, random_camera, Camera, Intrinsics, PluckerLine};
use crate::curves::{dual_image_curve, find_nodes, implicit_image_curve, preset_curve, sample_parameters, sample_tangents, Preset, RationalCurve3D};
use crate::dynamics::{
    classify_motion, lift_observations, noise_tolerance, propagated_noise, recover_line_motion, recover_static_point, simulate_dynamic,
    MotionModel, Trajectory, TrajectoryKind,
};
use crate::kruppa::{
    classical_kruppa_residual, constraint_norm, perturb_fundamental, quadric_degeneracy, quadric_dimension, solution_dimension,
    tangency_points, KruppaInstance, EPIPOLAR_DIM,
};
use crate::linalg::projective_distance;
use crate::reconstruct::{
    chow_reconstruct, chow_view_cap, consistency_report, dual_reconstruct, dual_view_cap, epipolar_sweep, meeting_lines, median,
    min_views_chow, min_views_dual, random_lines, tangent_planes, Classifier, ComponentSplit,
};

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("invalid range `{0}`: expected `a..b`, `a..=b` or `a`")]
    Range(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Core(#[from] crate::Error),
}

impl SceneError {
    /// Process exit code: 2 for bad input or I/O, 1 for a failed computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            SceneError::Core(_) => 1,
            _ => 2,
        }
    }

    fn key(key: impl Into<String>, message: impl fmt::Display) -> Self {
        SceneError::Config {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

pub type SceneResult<T> = std::result::Result<T, SceneError>;

/// A camera given either as a raw `3×4` matrix or as `K [R | t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum CameraSpec {
    Matrix {
        matrix: [[f64; 4]; 3],
    },
    Parameters {
        intrinsics: Intrinsics,
        rotation: [[f64; 3]; 3],
        translation: [f64; 3],
    },
}

impl CameraSpec {
    pub fn build(&self) -> crate::Result<Camera> {
        match self {
            CameraSpec::Matrix { matrix } => Camera::new(Matrix3x4::from_fn(|r, c| matrix[r][c])),
            CameraSpec::Parameters {
                intrinsics,
                rotation,
                translation,
            } => {
                let r = Matrix3::from_fn(|i, j| rotation[i][j]);
                let orth = (r.transpose() * r - Matrix3::identity()).norm();
                if !(orth <= 1e-6) || r.determinant() <= 0.0 {
                    return Err(crate::Error::InvalidArgument(format!(
                        "rotation is not a proper rotation (orthogonality error {orth:.1e})"
                    )));
                }
                if !(intrinsics.f.is_finite() && intrinsics.f > 0.0) {
                    return Err(crate::Error::InvalidArgument("focal length must be positive".into()));
                }
                Camera::from_parameters(intrinsics, &r, &Vector3::from_column_slice(translation))
            }
        }
    }
}

/// Cameras drawn on a sphere shell around the origin, looking inwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomCameras {
    pub count: usize,
    #[serde(default = "default_r_min")]
    pub r_min: f64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
}

fn default_r_min() -> f64 {
    3.0
}

fn default_r_max() -> f64 {
    5.0
}

/// A curve given by preset name or as 4 rows of `d + 1` coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum CurveSpec {
    Preset {
        preset: String,
        #[serde(default)]
        seed: Option<u64>,
    },
    Raw {
        coefficients: Vec<Vec<f64>>,
    },
}

/// A moving point: trajectory kind and frames per camera, or explicit
/// per-camera sampling times in `[0, π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicSpec {
    pub trajectory: TrajectoryKind,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default)]
    pub times: Option<Vec<Vec<f64>>>,
}

fn default_frames() -> usize {
    12
}

/// Sampling sizes used by the commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    pub sweep_planes: usize,
    pub samples_per_view: usize,
    pub d_max: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            sweep_planes: 500,
            samples_per_view: 20,
            d_max: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    #[serde(default)]
    pub cameras: Vec<CameraSpec>,
    #[serde(default)]
    pub random_cameras: Option<RandomCameras>,
    #[serde(default)]
    pub curves: Vec<CurveSpec>,
    #[serde(default)]
    pub dynamic_points: Vec<DynamicSpec>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub options: Options,
}

impl SceneConfig {
    pub fn from_json_str(s: &str) -> SceneResult<Self> {
        let cfg: SceneConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> SceneResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Checks every key that deserialization alone cannot.
    pub fn validate(&self) -> SceneResult<()> {
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(SceneError::key("noise_sigma", "must be finite and non-negative"));
        }
        for (i, cam) in self.cameras.iter().enumerate() {
            cam.build().map_err(|e| SceneError::key(format!("cameras[{i}]"), e))?;
        }
        if let Some(rc) = &self.random_cameras {
            if rc.count > 1000 {
                return Err(SceneError::key("random_cameras.count", "at most 1000"));
            }
            if !(rc.r_min.is_finite() && rc.r_max.is_finite() && 0.5 <= rc.r_min && rc.r_min < rc.r_max) {
                return Err(SceneError::key("random_cameras", "need 0.5 <= r_min < r_max"));
            }
        }
        for (i, c) in self.curves.iter().enumerate() {
            match c {
                CurveSpec::Preset { preset, .. } => {
                    preset
                        .parse::<Preset>()
                        .map_err(|e| SceneError::key(format!("curves[{i}].preset"), e))?;
                }
                CurveSpec::Raw { coefficients } => {
                    if coefficients.first().is_some_and(|r| r.len() > 9) {
                        return Err(SceneError::key(format!("curves[{i}].coefficients"), "degree above 8"));
                    }
                    RationalCurve3D::from_rows(coefficients)
                        .map_err(|e| SceneError::key(format!("curves[{i}].coefficients"), e))?;
                }
            }
        }
        for (i, d) in self.dynamic_points.iter().enumerate() {
            if d.frames == 0 || d.frames > 10_000 {
                return Err(SceneError::key(format!("dynamic_points[{i}].frames"), "must be in 1..=10000"));
            }
            if let Some(times) = &d.times {
                if times.iter().flatten().any(|t| !t.is_finite()) {
                    return Err(SceneError::key(format!("dynamic_points[{i}].times"), "non-finite time"));
                }
            }
        }
        let o = &self.options;
        if !(8..=100_000).contains(&o.sweep_planes) {
            return Err(SceneError::key("options.sweep_planes", "must be in 8..=100000"));
        }
        if !(4..=10_000).contains(&o.samples_per_view) {
            return Err(SceneError::key("options.samples_per_view", "must be in 4..=10000"));
        }
        if !(2..=6).contains(&o.d_max) {
            return Err(SceneError::key("options.d_max", "must be in 2..=6"));
        }
        Ok(())
    }
}

/// Parses `a..b` and `a..=b` (both inclusive) or a single integer.
pub fn parse_int_range(s: &str) -> SceneResult<RangeInclusive<usize>> {
    let bad = || SceneError::Range(s.to_string());
    let t = s.trim();
    let (lo, hi) = match t.split_once("..") {
        Some((a, b)) => (a, b.strip_prefix('=').unwrap_or(b)),
        None => (t, t),
    };
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok(lo..=hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// One candidate of an epipolar sweep, as exported to CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub plane_index: usize,
    pub candidate_index: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub component_label: String,
    pub curve_index: usize,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub command: String,
    pub inputs_digest: String,
    pub metrics: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub artifacts: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub samples: Vec<SampleRow>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Report {
    fn new(command: Command, inputs_digest: String) -> Self {
        Self {
            command: command.name().into(),
            inputs_digest,
            metrics: BTreeMap::new(),
            verdicts: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            samples: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Records a metric; non-finite values go to the notes instead.
    pub fn metric(&mut self, key: impl Into<String>, value: f64) {
        let key = key.into();
        if value.is_finite() {
            self.metrics.insert(key, value);
        } else {
            self.notes.push(format!("{key}: {value}"));
        }
    }

    pub fn verdict(&mut self, key: impl Into<String>, ok: bool) {
        self.verdicts.insert(key.into(), Verdict::from_bool(ok));
    }

    pub fn artifact(&mut self, key: impl Into<String>, values: Vec<f64>) {
        if values.iter().all(|v| v.is_finite()) {
            self.artifacts.insert(key.into(), values);
        }
    }

    fn failure(&mut self, key: impl Into<String>, err: impl fmt::Display) {
        let key = key.into();
        self.notes.push(format!("{key}: {err}"));
        self.verdict(key, false);
    }

    pub fn passed(&self) -> bool {
        self.verdicts.values().all(|v| *v == Verdict::Pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report maps have string keys")
    }

    pub fn from_json_str(s: &str) -> SceneResult<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// SHA-256 of the serialized report.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn write(&self, path: &Path) -> SceneResult<()> {
        fs::write(path, self.to_json()).map_err(|source| SceneError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Sweeps are densified until this many planes have all-real candidates.
pub const MIN_SWEEP_PLANES: usize = 50;

pub const SAMPLES_FILE: &str = "samples.csv";

/// Writes the report's sweep candidates to `dir/samples.csv`, header first.
pub fn export_samples(report: &Report, dir: &Path) -> SceneResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| SceneError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(SAMPLES_FILE);
    let csv_err = |source| SceneError::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).map_err(csv_err)?;
    w.write_record(["plane_index", "candidate_index", "x", "y", "z", "component_label", "curve_index", "theta"])
        .map_err(csv_err)?;
    for row in &report.samples {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| SceneError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    KruppaCheck,
    KruppaDim,
    ReconstructPoints,
    ReconstructDual,
    ReconstructChow,
    ClassifyMotion,
    ConsistencyTables,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Simulate,
        Command::KruppaCheck,
        Command::KruppaDim,
        Command::ReconstructPoints,
        Command::ReconstructDual,
        Command::ReconstructChow,
        Command::ClassifyMotion,
        Command::ConsistencyTables,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::KruppaCheck => "kruppa-check",
            Command::KruppaDim => "kruppa-dim",
            Command::ReconstructPoints => "reconstruct-points",
            Command::ReconstructDual => "reconstruct-dual",
            Command::ReconstructChow => "reconstruct-chow",
            Command::ClassifyMotion => "classify-motion",
            Command::ConsistencyTables => "consistency-tables",
        }
    }
}

impl FromStr for Command {
    type Err = SceneError;

    fn from_str(s: &str) -> SceneResult<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| SceneError::UnknownCommand(s.to_string()))
    }
}

/// Overrides and switches from the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub noise: Option<f64>,
    pub d_range: RangeInclusive<usize>,
    pub m_range: RangeInclusive<usize>,
    pub parallel: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: None,
            noise: None,
            d_range: 2..=4,
            m_range: 2..=8,
            parallel: false,
        }
    }
}

/// Cameras and curves built from a config, with the RNG that seeded them.
pub struct Scene {
    pub cameras: Vec<Camera>,
    pub curves: Vec<RationalCurve3D>,
    pub noise_sigma: f64,
    pub rng: ChaCha8Rng,
}

impl Scene {
    pub fn build(cfg: &SceneConfig, seed: u64, noise_sigma: f64) -> SceneResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cameras = Vec::new();
        for (i, spec) in cfg.cameras.iter().enumerate() {
            cameras.push(spec.build().map_err(|e| SceneError::key(format!("cameras[{i}]"), e))?);
        }
        if let Some(rc) = &cfg.random_cameras {
            for _ in 0..rc.count {
                cameras.push(random_camera(&mut rng, rc.r_min, rc.r_max));
            }
        }
        let mut curves = Vec::new();
        for (i, spec) in cfg.curves.iter().enumerate() {
            let curve = match spec {
                CurveSpec::Preset { preset, seed } => {
                    let p: Preset = preset.parse().map_err(|e| SceneError::key(format!("curves[{i}].preset"), e))?;
                    let s = seed.unwrap_or_else(|| rng.random());
                    preset_curve(p, s)
                }
                CurveSpec::Raw { coefficients } => RationalCurve3D::from_rows(coefficients)
                    .map_err(|e| SceneError::key(format!("curves[{i}].coefficients"), e))?,
            };
            curves.push(curve);
        }
        Ok(Self {
            cameras,
            curves,
            noise_sigma,
            rng,
        })
    }

    fn need_cameras(&self, n: usize, command: Command) -> SceneResult<()> {
        if self.cameras.len() < n {
            return Err(SceneError::key(
                "cameras",
                format!("`{}` needs at least {n} cameras, config has {}", command.name(), self.cameras.len()),
            ));
        }
        Ok(())
    }

    fn need_curves(&self, command: Command) -> SceneResult<()> {
        if self.curves.is_empty() {
            return Err(SceneError::key("curves", format!("`{}` needs at least one curve", command.name())));
        }
        Ok(())
    }
}

fn inputs_digest(cfg: &SceneConfig, command: Command, seed: u64, noise: f64, opts: &RunOptions) -> String {
    let mut h = Sha256::new();
    h.update(command.name().as_bytes());
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update(seed.to_le_bytes());
    h.update(noise.to_le_bytes());
    for r in [&opts.d_range, &opts.m_range] {
        h.update((*r.start() as u64).to_le_bytes());
        h.update((*r.end() as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn matrix_entries(cam: &Camera) -> Vec<f64> {
    let m = cam.matrix();
    (0..3).flat_map(|r| (0..4).map(move |c| m[(r, c)])).collect()
}

fn curve_entries(curve: &RationalCurve3D) -> Vec<f64> {
    curve.coeffs().iter().flat_map(|c| c.iter().copied()).collect()
}

/// Runs one command on a validated config.
pub fn run(command: Command, cfg: &SceneConfig, opts: &RunOptions) -> SceneResult<Report> {
    cfg.validate()?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let noise = opts.noise.unwrap_or(cfg.noise_sigma);
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(SceneError::key("noise_sigma", "must be finite and non-negative"));
    }
    let mut scene = Scene::build(cfg, seed, noise)?;
    let mut report = Report::new(command, inputs_digest(cfg, command, seed, noise, opts));
    report.metric("seed", seed as f64);
    report.metric("noise_sigma", noise);
    report.metric("cameras", scene.cameras.len() as f64);
    report.metric("curves", scene.curves.len() as f64);
    match command {
        Command::Simulate => simulate(&mut scene, cfg, &mut report)?,
        Command::KruppaCheck => kruppa_check(&mut scene, &mut report)?,
        Command::KruppaDim => kruppa_dim(&mut scene, &mut report)?,
        Command::ReconstructPoints => reconstruct_points(&mut scene, cfg, &mut report)?,
        Command::ReconstructDual => reconstruct_dual(&mut scene, cfg, &mut report)?,
        Command::ReconstructChow => reconstruct_chow(&mut scene, cfg, &mut report)?,
        Command::ClassifyMotion => classify(&mut scene, cfg, opts, &mut report)?,
        Command::ConsistencyTables => consistency(opts, &mut report)?,
    }
    Ok(report)
}

fn simulate(scene: &mut Scene, cfg: &SceneConfig, report: &mut Report) -> SceneResult<()> {
    for (c, cam) in scene.cameras.iter().enumerate() {
        report.artifact(format!("camera.{c}"), matrix_entries(cam));
    }
    for (i, curve) in scene.curves.iter().enumerate() {
        let key = format!("curve.{i}");
        report.metric(format!("{key}.degree"), curve.degree() as f64);
        report.metric(format!("{key}.class"), curve.class() as f64);
        report.artifact(format!("{key}.coefficients"), curve_entries(curve));
        for (c, cam) in scene.cameras.iter().enumerate() {
            let vkey = format!("{key}.view.{c}");
            match implicit_image_curve(curve, cam) {
                Ok(img) => {
                    report.metric(format!("{vkey}.image_residual"), img.residual);
                    report.verdict(format!("{vkey}.image_fit"), img.residual <= 1e-8);
                    report.metric(format!("{vkey}.nodes_expected"), img.nodes as f64);
                    report.metric(format!("{vkey}.nodes_found"), find_nodes(&img, curve, cam).len() as f64);
                    report.artifact(format!("{vkey}.image"), img.f.coeffs().to_vec());
                }
                Err(e) => report.failure(format!("{vkey}.image_fit"), e),
            }
            match dual_image_curve(curve, cam) {
                Ok(dual) => {
                    report.metric(format!("{vkey}.dual_residual"), dual.residual);
                    report.verdict(format!("{vkey}.dual_fit"), dual.residual <= 1e-8);
                    report.artifact(format!("{vkey}.dual"), dual.phi.coeffs().to_vec());
                }
                Err(e) => report.failure(format!("{vkey}.dual_fit"), e),
            }
        }
    }
    for (k, spec) in cfg.dynamic_points.iter().enumerate() {
        let ds = dynamic_scene(scene, spec, k)?;
        report.metric(format!("motion.{k}.detections"), ds.detections.len() as f64);
    }
    Ok(())
}

fn kruppa_check(scene: &mut Scene, report: &mut Report) -> SceneResult<()> {
    scene.need_cameras(2, Command::KruppaCheck)?;
    scene.need_curves(Command::KruppaCheck)?;
    let (c1, c2) = (&scene.cameras[0], &scene.cameras[1]);
    let eg = fundamental(c1, c2)?;
    report.metric("fundamental.rank_ratio", eg.rank_ratio());
    report.metric("fundamental.epipole_residual", eg.epipole_residual());
    report.verdict("fundamental.epipoles", eg.epipole_residual() <= 1e-10);
    report.artifact("fundamental", eg.f.transpose().as_slice().to_vec());
    report.artifact("e1", eg.e1.as_slice().to_vec());
    report.artifact("e2", eg.e2.as_slice().to_vec());
    for (i, curve) in scene.curves.iter().enumerate() {
        let key = format!("kruppa.curve.{i}");
        let inst = match (dual_image_curve(curve, c1), dual_image_curve(curve, c2)) {
            (Ok(a), Ok(b)) => KruppaInstance::new(a.phi, b.phi, eg),
            (Err(e), _) | (_, Err(e)) => Err(e),
        };
        let inst = match inst {
            Ok(inst) => inst,
            Err(e) => {
                report.failure(format!("{key}.vanishes"), e);
                continue;
            }
        };
        let probe_seed: u64 = scene.rng.random();
        match constraint_norm(&inst, probe_seed) {
            Ok(n) => {
                report.metric(format!("{key}.constraint_norm"), n);
                report.verdict(format!("{key}.vanishes"), n <= 1e-9);
            }
            Err(e) => report.failure(format!("{key}.vanishes"), e),
        }
        let mut worst = f64::INFINITY;
        for _ in 0..5 {
            let moved = perturb_fundamental(&eg, 1e-3, &mut scene.rng);
            match constraint_norm(&inst.with_geometry(moved), probe_seed) {
                Ok(n) => worst = worst.min(n),
                Err(_) => worst = f64::NAN,
            }
        }
        report.metric(format!("{key}.perturbed_norm"), worst);
        report.verdict(format!("{key}.detects_perturbation"), worst > 1e-5);
        if curve.degree() == 2 {
            let classical = implicit_image_curve(curve, c1)
                .and_then(|a| a.conic_matrix())
                .and_then(|k1| implicit_image_curve(curve, c2).and_then(|b| b.conic_matrix()).map(|k2| (k1, k2)))
                .and_then(|(k1, k2)| classical_kruppa_residual(&eg, &k1, &k2));
            match classical {
                Ok(r) => {
                    report.metric(format!("{key}.classical_residual"), r);
                    report.verdict(format!("{key}.classical_identity"), r <= 1e-9);
                }
                Err(e) => report.failure(format!("{key}.classical_identity"), e),
            }
        }
    }
    Ok(())
}

fn kruppa_dim(scene: &mut Scene, report: &mut Report) -> SceneResult<()> {
    scene.need_cameras(2, Command::KruppaDim)?;
    scene.need_curves(Command::KruppaDim)?;
    let (c1, c2) = (scene.cameras[0], scene.cameras[1]);
    let eg = fundamental(&c1, &c2)?;
    let mut instances = Vec::new();
    for (i, curve) in scene.curves.iter().enumerate() {
        let inst = dual_image_curve(curve, &c1)
            .and_then(|a| dual_image_curve(curve, &c2).map(|b| (a, b)))
            .and_then(|(a, b)| KruppaInstance::new(a.phi, b.phi, eg));
        match inst {
            Ok(inst) => instances.push(inst),
            Err(e) => {
                report.failure(format!("kruppa.curve.{i}.instance"), e);
                return Ok(());
            }
        }
        match tangency_points(curve, &c1, &c2) {
            Ok(td) => {
                report.metric(format!("kruppa.curve.{i}.tangencies_real"), td.real_count() as f64);
                report.metric(format!("kruppa.curve.{i}.tangencies_expected"), td.expected as f64);
                report.metric(format!("kruppa.curve.{i}.quadric_degenerate"), f64::from(u8::from(quadric_degeneracy(&td))));
            }
            Err(e) => report.notes.push(format!("kruppa.curve.{i}.tangencies: {e}")),
        }
    }
    let sum_m: usize = instances.iter().map(|i| i.class()).sum();
    let expected = EPIPOLAR_DIM.saturating_sub(sum_m);
    report.metric("kruppa.sum_class", sum_m as f64);
    report.metric("kruppa.expected_dimension", expected as f64);
    let oracle = quadric_dimension(&scene.curves, &c1, &c2);
    report.metric("kruppa.quadric_dimension", oracle as f64);
    match solution_dimension(&instances, &eg) {
        Ok(est) => {
            report.metric("kruppa.dimension", est.dimension as f64);
            report.metric("kruppa.rank", est.rank as f64);
            report.metric("kruppa.gap_ratio", est.gap_ratio);
            report.metric("kruppa.constraints", est.total_constraints as f64);
            report.artifact("kruppa.singular_values", est.singular_values.clone());
            report.verdict("kruppa.dimension_matches", est.dimension == expected);
            report.verdict("kruppa.unambiguous", !est.indeterminate);
            report.verdict("kruppa.oracle_agrees", est.dimension == oracle);
        }
        Err(e) => report.failure("kruppa.dimension_matches", e),
    }
    Ok(())
}

fn sweep_rows(split: &ComponentSplit, curve_index: usize) -> Vec<SampleRow> {
    let mut rows = Vec::new();
    for plane in &split.planes {
        for (k, c) in plane.candidates.iter().enumerate() {
            let w = c.point[3];
            rows.push(SampleRow {
                plane_index: plane.plane_index,
                candidate_index: k,
                x: c.point[0] / w,
                y: c.point[1] / w,
                z: c.point[2] / w,
                component_label: if c.true_component { "true" } else { "extraneous" }.into(),
                curve_index,
                theta: plane.theta,
            });
        }
    }
    rows
}

fn reconstruct_points(scene: &mut Scene, cfg: &SceneConfig, report: &mut Report) -> SceneResult<()> {
    scene.need_cameras(2, Command::ReconstructPoints)?;
    scene.need_curves(Command::ReconstructPoints)?;
    let (c1, c2) = (scene.cameras[0], scene.cameras[1]);
    let third = scene.cameras.get(2).copied();
    for (i, curve) in scene.curves.iter().enumerate() {
        let key = format!("sweep.curve.{i}");
        let images = implicit_image_curve(curve, &c1).and_then(|a| implicit_image_curve(curve, &c2).map(|b| (a, b)));
        let (f1, f2) = match images {
            Ok(x) => x,
            Err(e) => {
                report.failure(format!("{key}.counts"), e);
                continue;
            }
        };
        let mut n_planes = cfg.options.sweep_planes;
        let truth = loop {
            match epipolar_sweep(&f1, &f2, &c1, &c2, n_planes, Classifier::GroundTruth(curve)) {
                Ok(s) if s.planes.len() < MIN_SWEEP_PLANES && n_planes < 16 * cfg.options.sweep_planes => n_planes *= 2,
                other => break other,
            }
        };
        let truth = match truth {
            Ok(s) => s,
            Err(e) => {
                report.failure(format!("{key}.counts"), e);
                continue;
            }
        };
        report.metric(format!("{key}.planes_swept"), n_planes as f64);
        let d = truth.degree;
        report.metric(format!("{key}.degree"), d as f64);
        report.metric(format!("{key}.planes_used"), truth.planes.len() as f64);
        report.metric(format!("{key}.skipped_tangent"), truth.skipped_tangent as f64);
        report.metric(format!("{key}.skipped_complex"), truth.skipped_complex as f64);
        report.metric(format!("{key}.candidates_per_plane"), (d * d) as f64);
        report.verdict(format!("{key}.counts"), truth.counts_match() && truth.planes.len() >= MIN_SWEEP_PLANES);
        let mut labelled = truth;
        if let Some(c3) = third {
            match implicit_image_curve(curve, &c3)
                .and_then(|f3| epipolar_sweep(&f1, &f2, &c1, &c2, n_planes, Classifier::ThirdView(&c3, &f3)))
            {
                Ok(blind) => {
                    let agree = blind.planes.len() == labelled.planes.len()
                        && blind.planes.iter().zip(&labelled.planes).all(|(a, b)| {
                            a.candidates.iter().zip(&b.candidates).all(|(x, y)| x.true_component == y.true_component)
                        });
                    report.verdict(format!("{key}.third_view_agrees"), agree);
                    labelled = blind;
                }
                Err(e) => report.failure(format!("{key}.third_view_agrees"), e),
            }
        }
        report.samples.extend(sweep_rows(&labelled, i));
    }
    Ok(())
}

fn reconstruct_dual(scene: &mut Scene, cfg: &SceneConfig, report: &mut Report) -> SceneResult<()> {
    scene.need_cameras(1, Command::ReconstructDual)?;
    scene.need_curves(Command::ReconstructDual)?;
    for (i, curve) in scene.curves.iter().enumerate() {
        let key = format!("dual.curve.{i}");
        let m = curve.class();
        let n = cfg.options.samples_per_view.max(2 * dual_view_cap(m));
        let views: Vec<_> = scene
            .cameras
            .iter()
            .enumerate()
            .map(|(c, cam)| (*cam, sample_tangents(curve, cam, n, 0.13 * c as f64).into_iter().map(|(_, l)| l).collect()))
            .collect();
        report.metric(format!("{key}.class"), m as f64);
        report.metric(format!("{key}.views"), views.len() as f64);
        report.metric(format!("{key}.per_view_cap"), dual_view_cap(m) as f64);
        if let Ok(k) = min_views_dual(m) {
            report.metric(format!("{key}.min_views_formula"), k as f64);
        }
        match dual_reconstruct(&views, m) {
            Ok(dual) => {
                let held: u64 = scene.rng.random();
                let worst = tangent_planes(curve, 50, held).iter().map(|p| dual.residual_at(p)).fold(0.0, f64::max);
                report.metric(format!("{key}.rank"), dual.diagnostics.rank as f64);
                report.artifact(format!("{key}.per_view_ranks"), dual.diagnostics.per_view_ranks.iter().map(|&r| r as f64).collect());
                report.metric(format!("{key}.held_out_residual"), worst);
                report.verdict(format!("{key}.reconstructed"), worst <= 1e-7);
                report.artifact(format!("{key}.upsilon"), dual.upsilon.coeffs().to_vec());
            }
            Err(crate::Error::InsufficientRank { have, need, per_view }) => {
                report.metric(format!("{key}.rank"), have as f64);
                report.metric(format!("{key}.rank_needed"), need as f64);
                report.metric(format!("{key}.rank_deficit"), (need - have) as f64);
                report.artifact(format!("{key}.per_view_ranks"), per_view.iter().map(|&r| r as f64).collect());
                report.failure(format!("{key}.reconstructed"), format!("rank {have} of {need} needed"));
            }
            Err(e) => report.failure(format!("{key}.reconstructed"), e),
        }
    }
    Ok(())
}

fn reconstruct_chow(scene: &mut Scene, cfg: &SceneConfig, report: &mut Report) -> SceneResult<()> {
    scene.need_cameras(1, Command::ReconstructChow)?;
    scene.need_curves(Command::ReconstructChow)?;
    for (i, curve) in scene.curves.iter().enumerate() {
        let key = format!("chow.curve.{i}");
        let d = curve.degree();
        let n = cfg.options.samples_per_view.max(2 * chow_view_cap(d));
        let views: Vec<_> = scene
            .cameras
            .iter()
            .enumerate()
            .map(|(c, cam)| (*cam, sample_parameters(n, 0.13 * c as f64).iter().map(|&t| cam.project(&curve.point(t))).collect()))
            .collect();
        report.metric(format!("{key}.degree"), d as f64);
        report.metric(format!("{key}.views"), views.len() as f64);
        report.metric(format!("{key}.per_view_cap"), chow_view_cap(d) as f64);
        if let Ok(k) = min_views_chow(d) {
            report.metric(format!("{key}.min_views_formula"), k as f64);
        }
        match chow_reconstruct(&views, d) {
            Ok(g) => {
                let (s1, s2): (u64, u64) = (scene.rng.random(), scene.rng.random());
                let meet = meeting_lines(curve, 50, s1).iter().map(|l| g.residual_at(l)).fold(0.0, f64::max);
                let miss: Vec<f64> = random_lines(100, s2).iter().map(|l| g.residual_at(l)).collect();
                let sep = median(&miss);
                report.metric(format!("{key}.unknowns"), g.diagnostics.unknowns as f64);
                report.metric(format!("{key}.rank"), g.diagnostics.rank as f64);
                report.artifact(format!("{key}.per_view_ranks"), g.diagnostics.per_view_ranks.iter().map(|&r| r as f64).collect());
                report.metric(format!("{key}.meeting_residual"), meet);
                report.metric(format!("{key}.separation"), sep);
                report.verdict(format!("{key}.reconstructed"), meet <= 1e-8);
                report.verdict(format!("{key}.separates"), sep >= 1e-3);
                report.artifact(format!("{key}.gamma"), g.gamma.coeffs().to_vec());
            }
            Err(crate::Error::InsufficientRank { have, need, per_view }) => {
                report.metric(format!("{key}.rank"), have as f64);
                report.metric(format!("{key}.rank_needed"), need as f64);
                report.metric(format!("{key}.rank_deficit"), (need - have) as f64);
                report.artifact(format!("{key}.per_view_ranks"), per_view.iter().map(|&r| r as f64).collect());
                report.failure(format!("{key}.reconstructed"), format!("rank {have} of {need} needed"));
            }
            Err(e) => report.failure(format!("{key}.reconstructed"), e),
        }
    }
    Ok(())
}

fn dynamic_scene(scene: &mut Scene, spec: &DynamicSpec, k: usize) -> SceneResult<crate::dynamics::DynamicScene> {
    let traj = Trajectory::random(spec.trajectory, &mut scene.rng);
    let sub_seed: u64 = scene.rng.random();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
    let mut ds = simulate_dynamic(traj, scene.cameras.clone(), spec.frames, k, scene.noise_sigma, &mut rng);
    if let Some(times) = &spec.times {
        if times.len() != scene.cameras.len() {
            return Err(SceneError::key(
                format!("dynamic_points[{k}].times"),
                format!("{} rows for {} cameras", times.len(), scene.cameras.len()),
            ));
        }
        ds.times = times.clone();
        ds.detections.clear();
        for (c, cam) in scene.cameras.iter().enumerate() {
            for (f, &t) in times[c].iter().enumerate() {
                let p = cam.project(&ds.trajectory.position(t));
                let mut x = [p[0] / p[2], p[1] / p[2], 1.0];
                if scene.noise_sigma > 0.0 {
                    x[0] += scene.noise_sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
                    x[1] += scene.noise_sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
                }
                ds.detections.push(crate::dynamics::Detection {
                    camera_id: c,
                    point_id: k,
                    time_id: f,
                    point: x,
                });
            }
        }
    }
    Ok(ds)
}

/// Classifies one simulated moving point and checks the recovered model.
fn classify_one(ds: &crate::dynamics::DynamicScene, expected: TrajectoryKind, d_max: usize, sigma: f64, key: &str) -> Report {
    let mut r = Report::new(Command::ClassifyMotion, String::new());
    let rays = match lift_observations(&ds.cameras, &ds.detections) {
        Ok(x) => x,
        Err(e) => {
            r.failure(format!("{key}.classified"), e);
            return r;
        }
    };
    let sigma_est = propagated_noise(&ds.cameras, &ds.detections, sigma);
    let tol = noise_tolerance(sigma_est);
    r.metric(format!("{key}.rays"), rays.len() as f64);
    r.metric(format!("{key}.sigma_est"), sigma_est);
    r.metric(format!("{key}.tol"), tol);
    let class = match classify_motion(&rays, d_max, tol) {
        Ok(c) => c,
        Err(e) => {
            r.failure(format!("{key}.classified"), e);
            return r;
        }
    };
    for t in &class.trace {
        r.metric(format!("{key}.trial.{}.residual", t.model), t.residual);
    }
    r.verdict(format!("{key}.classified"), class.kind() == Some(expected.expected()));
    r.notes.push(format!("{key}: {} (expected {})", class.label(), expected.expected().name()));
    let Some(mc) = class.class else { return r };
    r.metric(format!("{key}.residual"), mc.residual);
    r.artifact(format!("{key}.model"), mc.coefficients());
    match (&mc.model, &ds.trajectory) {
        (MotionModel::Point(_), Trajectory::Static(x)) => match recover_static_point(&rays, tol.max(1e-7)) {
            Ok(p) => {
                let err = projective_distance(p.as_slice(), x.as_slice());
                r.metric(format!("{key}.point_error"), err);
                r.verdict(format!("{key}.point_recovered"), err <= tol.max(1e-6));
            }
            Err(e) => r.failure(format!("{key}.point_recovered"), e),
        },
        (MotionModel::Line(_), Trajectory::Line(..)) => match recover_line_motion(&rays, tol) {
            Ok(l) => {
                let worst = rays.iter().map(|o| o.ray.normalized_pairing(&l)).fold(0.0, f64::max);
                let truth = match &ds.trajectory {
                    Trajectory::Line(a, b) => PluckerLine::join(a, b),
                    _ => unreachable!(),
                };
                r.metric(format!("{key}.line_distance"), projective_distance(l.0.as_slice(), truth.0.as_slice()));
                r.metric(format!("{key}.pairing_residual"), worst);
                r.verdict(format!("{key}.line_recovered"), worst <= tol.max(1e-7));
            }
            Err(e) => r.failure(format!("{key}.line_recovered"), e),
        },
        (MotionModel::Chow(g), Trajectory::Curve(_)) => {
            r.metric(format!("{key}.chow_unknowns"), g.diagnostics.unknowns as f64);
            r.verdict(format!("{key}.chow_held_out"), mc.residual <= tol);
        }
        _ => {}
    }
    r
}

fn classify(scene: &mut Scene, cfg: &SceneConfig, opts: &RunOptions, report: &mut Report) -> SceneResult<()> {
    scene.need_cameras(2, Command::ClassifyMotion)?;
    if cfg.dynamic_points.is_empty() {
        return Err(SceneError::key("dynamic_points", "`classify-motion` needs at least one moving point"));
    }
    let mut jobs = Vec::new();
    for (k, spec) in cfg.dynamic_points.iter().enumerate() {
        jobs.push((dynamic_scene(scene, spec, k)?, spec.trajectory, format!("motion.{k}")));
    }
    let (d_max, sigma) = (cfg.options.d_max, scene.noise_sigma);
    let parts: Vec<Report> = if opts.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|(ds, kind, key)| s.spawn(move || classify_one(ds, *kind, d_max, sigma, key)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("classification thread panicked")).collect()
        })
    } else {
        jobs.iter().map(|(ds, kind, key)| classify_one(ds, *kind, d_max, sigma, key)).collect()
    };
    for p in parts {
        report.metrics.extend(p.metrics);
        report.verdicts.extend(p.verdicts);
        report.artifacts.extend(p.artifacts);
        report.notes.extend(p.notes);
    }
    Ok(())
}

fn consistency(opts: &RunOptions, report: &mut Report) -> SceneResult<()> {
    if *opts.d_range.start() < 2 {
        return Err(SceneError::key("d", "degrees start at 2"));
    }
    if *opts.m_range.start() < 2 {
        return Err(SceneError::key("m", "classes start at 2"));
    }
    let m0 = *opts.m_range.start();
    for d in opts.d_range.clone() {
        let row = consistency_report(d, m0)?;
        let key = format!("consistency.chow.d{d}");
        report.metric(format!("{key}.unknowns"), row.chow_unknowns as f64);
        report.metric(format!("{key}.per_view_cap"), row.chow_view_cap as f64);
        report.metric(format!("{key}.views_from_counts"), row.chow_views_from_counts as f64);
        report.metric(format!("{key}.min_views"), row.min_views_chow as f64);
        report.verdict(format!("{key}.consistent"), row.chow_views_from_counts == row.min_views_chow);
    }
    let d0 = *opts.d_range.start();
    for m in opts.m_range.clone() {
        let row = consistency_report(d0, m)?;
        let key = format!("consistency.dual.m{m}");
        report.metric(format!("{key}.unknowns"), row.dual_unknowns as f64);
        report.metric(format!("{key}.per_view_cap"), row.dual_view_cap as f64);
        report.metric(format!("{key}.views_from_counts"), row.dual_views_from_counts as f64);
        report.metric(format!("{key}.min_views"), row.min_views_dual as f64);
        report.verdict(format!("{key}.consistent"), row.dual_views_from_counts == row.min_views_dual);
    }
    Ok(())
}

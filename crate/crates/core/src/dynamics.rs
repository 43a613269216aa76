//! Moving points seen by unsynchronized cameras.
//!
//! Every detection lifts to the optical ray through it. The set of rays of a
//! single moving point is a subvariety of the Grassmannian whose type reveals
//! the motion: all lines through a point (static), the lines meeting a line,
//! or the lines meeting a curve of degree `d` (cut out by its Chow form).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cameras::{normalize4, Camera, PluckerLine, Point2, Point3};
use crate::curves::{preset_curve, Preset, RationalCurve3D};
use crate::linalg::{self, projective_distance};
use crate::reconstruct::{chow_unknowns, fit_chow, fit_chow_weighted, random_point, ChowForm};
use crate::{Error, Result};

/// Fewest rays for the static test.
pub const MIN_STATIC_RAYS: usize = 8;
/// Samples of the scan in [`localize_on_ray`].
pub const LOCALIZE_SAMPLES: usize = 512;
/// Floor for the quadric residual of a fitted line hyperplane.
pub const QUADRIC_LIMIT: f64 = 1e-4;
/// Gradient-weighted refits after the plain Chow fit.
pub const REWEIGHT_ROUNDS: usize = 2;

/// An image point of tracked point `point_id`, taken by camera `camera_id`
/// at that camera's frame `time_id`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub camera_id: usize,
    pub point_id: usize,
    pub time_id: usize,
    pub point: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayObservation {
    pub camera_id: usize,
    pub point_id: usize,
    pub time_id: usize,
    pub ray: PluckerLine,
}

/// One optical ray per detection. Detections that back-project to nothing
/// (the zero vector, or a point at the camera center) are skipped.
pub fn lift_observations(cams: &[Camera], detections: &[Detection]) -> Result<Vec<RayObservation>> {
    let mut out = Vec::with_capacity(detections.len());
    for det in detections {
        let cam = cams.get(det.camera_id).ok_or_else(|| {
            Error::InvalidArgument(format!("detection refers to camera {} of {}", det.camera_id, cams.len()))
        })?;
        let p = Point2::from_column_slice(&det.point);
        let ray = cam.optical_ray(&p);
        let scale = cam.ray_matrix().norm() * p.norm();
        if !(ray.0.norm() > 1e-12 * scale) {
            warn!(
                "skipping detection camera={} point={} time={}: no optical ray",
                det.camera_id, det.point_id, det.time_id
            );
            continue;
        }
        out.push(RayObservation {
            camera_id: det.camera_id,
            point_id: det.point_id,
            time_id: det.time_id,
            ray,
        });
    }
    Ok(out)
}

/// RMS relative perturbation of the optical rays caused by isotropic image
/// noise of standard deviation `sigma` on normalized image coordinates.
pub fn propagated_noise(cams: &[Camera], detections: &[Detection], sigma: f64) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for det in detections {
        let Some(cam) = cams.get(det.camera_id) else { continue };
        if det.point[2] == 0.0 {
            continue;
        }
        let p = Vector3::new(det.point[0] / det.point[2], det.point[1] / det.point[2], 1.0);
        let m = cam.ray_matrix();
        let ray = m * p;
        let norm = ray.norm();
        if norm == 0.0 {
            continue;
        }
        let u = ray / norm;
        for k in 0..2 {
            let d = m.column(k) * sigma;
            acc += (d - u * u.dot(&d)).norm_squared() / (norm * norm);
        }
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (acc / n as f64).sqrt()
    }
}

/// Acceptance tolerance for noisy rays: `max(1e-7, 10 σ)`.
pub fn noise_tolerance(sigma_est: f64) -> f64 {
    (10.0 * sigma_est).max(1e-7)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    Static,
    Line,
    Conic,
    Curve(usize),
}

impl MotionKind {
    pub fn name(self) -> String {
        match self {
            MotionKind::Static => "static".into(),
            MotionKind::Line => "line".into(),
            MotionKind::Conic => "conic".into(),
            MotionKind::Curve(d) => format!("curve({d})"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum MotionModel {
    Point(Point3),
    Line(PluckerLine),
    Chow(ChowForm),
}

/// An accepted motion model.
#[derive(Debug, Clone)]
pub struct MotionClass {
    pub kind: MotionKind,
    pub model: MotionModel,
    pub residual: f64,
}

impl MotionClass {
    /// Coefficients of the model: the point, the Plücker vector, or `Γ`.
    pub fn coefficients(&self) -> Vec<f64> {
        match &self.model {
            MotionModel::Point(p) => p.as_slice().to_vec(),
            MotionModel::Line(l) => l.0.as_slice().to_vec(),
            MotionModel::Chow(g) => g.gamma.coeffs().to_vec(),
        }
    }
}

/// One step of the model search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelTrial {
    pub model: String,
    pub residual: f64,
    pub accepted: bool,
    pub note: Option<String>,
}

/// Outcome of [`classify_motion`]; `class` is `None` when no model up to
/// the requested degree explains the rays.
#[derive(Debug, Clone)]
pub struct Classification {
    pub class: Option<MotionClass>,
    pub trace: Vec<ModelTrial>,
}

impl Classification {
    pub fn kind(&self) -> Option<MotionKind> {
        self.class.as_ref().map(|c| c.kind)
    }

    pub fn label(&self) -> String {
        self.kind().map_or_else(|| "unclassified".into(), MotionKind::name)
    }
}

fn unit_ray_matrix(rays: &[RayObservation]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(rays.len(), 6);
    for (r, obs) in rays.iter().enumerate() {
        let n = obs.ray.0.norm();
        if n > 0.0 {
            for c in 0..6 {
                a[(r, c)] = obs.ray.0[c] / n;
            }
        }
    }
    a
}

/// `σ₄/σ₁` of the unit rays: zero exactly when all rays pass through one point.
fn static_residual(rays: &[RayObservation]) -> f64 {
    let sv = linalg::singular_values(&unit_ray_matrix(rays));
    if sv.len() < 4 || sv[0] == 0.0 {
        return f64::INFINITY;
    }
    sv[3] / sv[0]
}

struct LineFit {
    line: PluckerLine,
    residual: f64,
    /// `σ₅/σ₁`, large when the hyperplane is unique.
    uniqueness: f64,
    quadric: f64,
}

fn line_fit(rays: &[RayObservation]) -> Result<LineFit> {
    if rays.len() < 5 {
        return Err(Error::Empty("fewer than 5 rays"));
    }
    let (sv, v) = linalg::right_singular(&unit_ray_matrix(rays));
    let h: Vector6<f64> = Vector6::from_iterator(v.column(5).iter().copied());
    let line = PluckerLine(crate::cameras::swap_blocks(&h));
    Ok(LineFit {
        quadric: line.quadric_residual(),
        line,
        residual: sv[5] / sv[0],
        uniqueness: sv[4] / sv[0],
    })
}

/// Signed first-order distance from a ray to `Γ = 0` within the Grassmannian,
/// with `Γ` and the ray unit-normalized.
fn signed_chow_distance(g: &ChowForm, ray: &PluckerLine) -> f64 {
    let l = ray.0.normalize();
    let gamma = g.gamma.normalized();
    let value = gamma.eval(l.as_slice()).unwrap_or(f64::INFINITY);
    let grad = Vector6::from_vec(gamma.gradient(l.as_slice()).unwrap_or_else(|_| vec![0.0; 6]));
    let normal = crate::cameras::swap_blocks(&l).normalize();
    let mut t = grad - l * l.dot(&grad);
    t -= normal * normal.dot(&t);
    let tn = t.norm();
    if tn > 0.0 {
        value / tn
    } else {
        value
    }
}

fn chow_gradient_norm(g: &ChowForm, ray: &PluckerLine) -> f64 {
    let l = ray.0.normalize();
    let gamma = g.gamma.normalized();
    let grad = Vector6::from_vec(gamma.gradient(l.as_slice()).unwrap_or_else(|_| vec![0.0; 6]));
    let normal = crate::cameras::swap_blocks(&l).normalize();
    let mut t = grad - l * l.dot(&grad);
    t -= normal * normal.dot(&t);
    t.norm()
}

pub fn chow_ray_distance(g: &ChowForm, ray: &PluckerLine) -> f64 {
    signed_chow_distance(g, ray).abs()
}

/// Fits `Γ` of degree `d` on two thirds of the rays and returns the RMS
/// distance of the remaining third.
fn chow_trial(rays: &[RayObservation], d: usize) -> Result<(ChowForm, f64)> {
    let need = 2 * chow_unknowns(d);
    if rays.len() < need {
        return Err(Error::InvalidArgument(format!("{} rays, degree {d} needs {need}", rays.len())));
    }
    let mut views: BTreeMap<usize, Vec<PluckerLine>> = BTreeMap::new();
    let mut held = Vec::new();
    for (i, obs) in rays.iter().enumerate() {
        if i % 3 == 2 {
            held.push(obs.ray);
        } else {
            views.entry(obs.camera_id).or_default().push(obs.ray);
        }
    }
    let views: Vec<Vec<PluckerLine>> = views.into_values().collect();
    let mut g = fit_chow(&views, d)?;
    for _ in 0..REWEIGHT_ROUNDS {
        let w: Vec<f64> = views.iter().flatten().map(|l| chow_gradient_norm(&g, l)).collect();
        if w.iter().any(|&x| !(x > 0.0)) {
            break;
        }
        g = fit_chow_weighted(&views, d, Some(&w))?;
    }
    let ms = held.iter().map(|l| chow_ray_distance(&g, l).powi(2)).sum::<f64>() / held.len() as f64;
    Ok((g, ms.sqrt()))
}

/// Simplest motion model, in the order static, line, conic, curve(3..=d_max),
/// whose residual stays within `tol`.
pub fn classify_motion(rays: &[RayObservation], d_max: usize, tol: f64) -> Result<Classification> {
    if rays.len() < MIN_STATIC_RAYS {
        return Err(Error::InvalidArgument(format!(
            "{} rays, classification needs at least {MIN_STATIC_RAYS}",
            rays.len()
        )));
    }
    let mut trace = Vec::new();

    let r = static_residual(rays);
    let accepted = r <= tol;
    trace.push(ModelTrial {
        model: "static".into(),
        residual: r,
        accepted,
        note: None,
    });
    if accepted {
        let (point, residual) = static_point_fit(rays)?;
        return Ok(Classification {
            class: Some(MotionClass {
                kind: MotionKind::Static,
                model: MotionModel::Point(point),
                residual,
            }),
            trace,
        });
    }

    if rays.len() >= 12 {
        let fit = line_fit(rays)?;
        let unique = fit.uniqueness > tol;
        let accepted = fit.residual <= tol && unique && fit.quadric <= tol;
        trace.push(ModelTrial {
            model: "line".into(),
            residual: fit.residual,
            accepted,
            note: (!unique).then(|| "hyperplane not unique".into()).or_else(|| {
                (fit.residual <= tol && fit.quadric > tol)
                    .then(|| format!("hyperplane off the quadric by {:.3e}", fit.quadric))
            }),
        });
        if accepted {
            return Ok(Classification {
                class: Some(MotionClass {
                    kind: MotionKind::Line,
                    model: MotionModel::Line(project_to_quadric(&fit.line)),
                    residual: fit.residual,
                }),
                trace,
            });
        }
    } else {
        trace.push(ModelTrial {
            model: "line".into(),
            residual: f64::NAN,
            accepted: false,
            note: Some(format!("{} rays, line needs 12", rays.len())),
        });
    }

    for d in 2..=d_max {
        let kind = if d == 2 { MotionKind::Conic } else { MotionKind::Curve(d) };
        match chow_trial(rays, d) {
            Ok((g, residual)) => {
                let accepted = residual <= tol;
                trace.push(ModelTrial {
                    model: kind.name(),
                    residual,
                    accepted,
                    note: None,
                });
                if accepted {
                    return Ok(Classification {
                        class: Some(MotionClass {
                            kind,
                            model: MotionModel::Chow(g),
                            residual,
                        }),
                        trace,
                    });
                }
            }
            Err(e) => {
                trace.push(ModelTrial {
                    model: kind.name(),
                    residual: f64::NAN,
                    accepted: false,
                    note: Some(e.to_string()),
                });
                if matches!(e, Error::InvalidArgument(_)) {
                    break;
                }
            }
        }
    }
    Ok(Classification { class: None, trace })
}

/// Least-squares common point of the rays and the largest normalized
/// ray-to-point incidence residual.
fn static_point_fit(rays: &[RayObservation]) -> Result<(Point3, f64)> {
    if rays.len() < 2 {
        return Err(Error::Empty("fewer than 2 rays"));
    }
    let mut a = DMatrix::zeros(4 * rays.len(), 4);
    for (i, obs) in rays.iter().enumerate() {
        let l = obs.ray.0 / obs.ray.0.norm();
        a.view_mut((4 * i, 0), (4, 4)).copy_from(&PluckerLine(l).dual_matrix());
    }
    let (_, v) = linalg::right_singular(&a);
    let x = normalize4(&Point3::from_iterator(v.column(3).iter().copied()));
    let residual = rays
        .iter()
        .map(|obs| {
            let l = obs.ray.0 / obs.ray.0.norm();
            (PluckerLine(l).dual_matrix() * x).norm()
        })
        .fold(0.0, f64::max);
    Ok((x, residual))
}

/// The point all rays pass through; fails when some ray misses it by more
/// than `tol` (normalized incidence).
pub fn recover_static_point(rays: &[RayObservation], tol: f64) -> Result<Point3> {
    let (x, residual) = static_point_fit(rays)?;
    if residual > tol {
        return Err(Error::Rejected { residual, tol });
    }
    Ok(x)
}

/// One Newton step towards `Q(L) = 0` along the gradient `swap(L)`.
fn project_to_quadric(l: &PluckerLine) -> PluckerLine {
    let p = l.0 / l.0.norm();
    let grad = crate::cameras::swap_blocks(&p);
    let q = crate::cameras::grassmann_quadric(&p);
    let g2 = grad.norm_squared();
    let step = if g2 > 0.0 { grad * (q / g2) } else { Vector6::zeros() };
    let out = p - step;
    PluckerLine(out / out.norm())
}

/// The line met by every ray. The hyperplane `h` with `h · L = 0` for all
/// rays must be unique (nullspace dimension 1 at `tol`) and close to the
/// Grassmann quadric.
pub fn recover_line_motion(rays: &[RayObservation], tol: f64) -> Result<PluckerLine> {
    let fit = line_fit(rays)?;
    let (sv, _) = linalg::right_singular(&unit_ray_matrix(rays));
    let nullity = sv.iter().filter(|&&s| s <= tol * sv[0]).count();
    if nullity != 1 {
        return Err(Error::NonGeneric(format!("hyperplane nullspace has dimension {nullity}, expected 1")));
    }
    let limit = tol.max(QUADRIC_LIMIT);
    if fit.quadric > limit {
        return Err(Error::Rejected {
            residual: fit.quadric,
            tol: limit,
        });
    }
    Ok(project_to_quadric(&fit.line))
}

/// Chow form of degree `d` of the trajectory, accepted when the held-out
/// third of the rays lies within `tol` of it.
pub fn recover_trajectory_chow(rays: &[RayObservation], d: usize, tol: f64) -> Result<(ChowForm, f64)> {
    let (g, residual) = chow_trial(rays, d)?;
    if residual > tol {
        return Err(Error::Rejected { residual, tol });
    }
    Ok((g, residual))
}

/// Points on a ray where it meets the trajectory.
#[derive(Debug, Clone)]
pub struct Localization {
    /// Best candidate first (closest to the hint when one is given).
    pub candidates: Vec<(Point3, f64)>,
    pub ambiguous: bool,
}

impl Localization {
    pub fn point(&self) -> Point3 {
        self.candidates[0].0
    }
}

const PROBE_POINTS: usize = 6;

fn probe_points() -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x51ed_2701);
    (0..PROBE_POINTS).map(|_| random_point(&mut rng)).collect()
}

fn membership_terms(g: &ChowForm, x: &Point3, probes: &[Point3]) -> Vec<f64> {
    probes
        .iter()
        .map(|q| {
            signed_chow_distance(g, &PluckerLine::join(x, q))
        })
        .collect()
}

fn membership(g: &ChowForm, x: &Point3, probes: &[Point3]) -> f64 {
    let t = membership_terms(g, x, probes);
    (t.iter().map(|v| v * v).sum::<f64>() / t.len() as f64).sqrt()
}

/// Scans the ray for points whose lines to fixed probe points all lie on
/// `Γ = 0`, then polishes each local minimum by Gauss-Newton. Every minimum
/// within `tol` is a candidate; several candidates mark the ray as ambiguous.
pub fn localize_on_ray(g: &ChowForm, ray: &PluckerLine, hint: Option<&Point3>, tol: f64) -> Result<Localization> {
    let (a, b) = ray.points();
    let b = (b - a * a.dot(&b)).normalize();
    let at = |s: f64| a * s.cos() + b * s.sin();
    let probes = probe_points();
    let n = LOCALIZE_SAMPLES;
    let step = PI / n as f64;
    let values: Vec<f64> = (0..n).map(|i| membership(g, &at(i as f64 * step), &probes)).collect();

    let mut candidates: Vec<(f64, f64)> = Vec::new();
    for i in 0..n {
        let (prev, next) = (values[(i + n - 1) % n], values[(i + 1) % n]);
        if values[i] <= prev && values[i] < next {
            let s = polish(g, &at, i as f64 * step, step, &probes);
            let v = membership(g, &at(s), &probes);
            if v <= tol {
                let s = s.rem_euclid(PI);
                let dup = candidates.iter().any(|&(t, _)| {
                    let d = (t - s).abs();
                    d.min(PI - d) < 1e-6
                });
                if !dup {
                    candidates.push((s, v));
                }
            }
        }
    }
    if candidates.is_empty() {
        let best = values.iter().copied().fold(f64::INFINITY, f64::min);
        return Err(Error::Rejected { residual: best, tol });
    }
    let mut out: Vec<(Point3, f64)> = candidates.into_iter().map(|(s, v)| (normalize4(&at(s)), v)).collect();
    match hint {
        Some(h) => out.sort_by(|x, y| projective_distance(x.0.as_slice(), h.as_slice()).total_cmp(&projective_distance(y.0.as_slice(), h.as_slice()))),
        None => out.sort_by(|x, y| x.1.total_cmp(&y.1)),
    }
    Ok(Localization {
        ambiguous: out.len() > 1,
        candidates: out,
    })
}

fn polish<F: Fn(f64) -> Point3>(g: &ChowForm, at: &F, mut s: f64, bracket: f64, probes: &[Point3]) -> f64 {
    let h = 1e-6;
    let start = s;
    for _ in 0..100 {
        let r = membership_terms(g, &at(s), probes);
        let rp = membership_terms(g, &at(s + h), probes);
        let rm = membership_terms(g, &at(s - h), probes);
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..r.len() {
            let j = (rp[k] - rm[k]) / (2.0 * h);
            num += j * r[k];
            den += j * j;
        }
        if den == 0.0 {
            break;
        }
        let delta = num / den;
        s -= delta;
        if (s - start).abs() > 2.0 * bracket {
            return start;
        }
        if delta.abs() < 1e-15 {
            break;
        }
    }
    s
}

/// The kind of motion a synthetic point performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Static,
    Line,
    Conic,
    Cubic,
}

impl TrajectoryKind {
    pub const ALL: [TrajectoryKind; 4] = [
        TrajectoryKind::Static,
        TrajectoryKind::Line,
        TrajectoryKind::Conic,
        TrajectoryKind::Cubic,
    ];

    pub fn expected(self) -> MotionKind {
        match self {
            TrajectoryKind::Static => MotionKind::Static,
            TrajectoryKind::Line => MotionKind::Line,
            TrajectoryKind::Conic => MotionKind::Conic,
            TrajectoryKind::Cubic => MotionKind::Curve(3),
        }
    }
}

/// Ground-truth motion, parametrized by `t ∈ [0, π)`.
#[derive(Debug, Clone)]
pub enum Trajectory {
    Static(Point3),
    Line(Point3, Point3),
    Curve(RationalCurve3D),
}

impl Trajectory {
    pub fn random<R: Rng + ?Sized>(kind: TrajectoryKind, rng: &mut R) -> Self {
        let affine = |rng: &mut R| {
            let v: Vector3<f64> = Vector3::from_fn(|_, _| rng.random_range(-0.8..0.8));
            Point3::new(v.x, v.y, v.z, 1.0)
        };
        match kind {
            TrajectoryKind::Static => Trajectory::Static(affine(rng)),
            TrajectoryKind::Line => loop {
                let (a, b) = (affine(rng), affine(rng));
                if (a - b).norm() > 0.5 {
                    break Trajectory::Line(a, b);
                }
            },
            TrajectoryKind::Conic => Trajectory::Curve(preset_curve(Preset::Conic, rng.random())),
            TrajectoryKind::Cubic => Trajectory::Curve(preset_curve(Preset::TwistedCubic, rng.random())),
        }
    }

    pub fn position(&self, t: f64) -> Point3 {
        match self {
            Trajectory::Static(p) => *p,
            Trajectory::Line(a, b) => a + (b - a) * (t / PI),
            Trajectory::Curve(c) => c.point(t),
        }
    }
}

/// Cameras, one moving point and its detections.
#[derive(Debug, Clone)]
pub struct DynamicScene {
    pub cameras: Vec<Camera>,
    pub trajectory: Trajectory,
    /// `times[camera][frame]`: each camera samples its own instants.
    pub times: Vec<Vec<f64>>,
    pub detections: Vec<Detection>,
}

impl DynamicScene {
    pub fn true_position(&self, det: &Detection) -> Point3 {
        self.trajectory.position(self.times[det.camera_id][det.time_id])
    }
}

/// Observes `trajectory` with `frames` independent random instants per
/// camera, adding isotropic Gaussian noise of `sigma` to normalized image
/// coordinates.
pub fn simulate_dynamic<R: Rng + ?Sized>(
    trajectory: Trajectory,
    cameras: Vec<Camera>,
    frames: usize,
    point_id: usize,
    sigma: f64,
    rng: &mut R,
) -> DynamicScene {
    let mut times = Vec::with_capacity(cameras.len());
    let mut detections = Vec::with_capacity(cameras.len() * frames);
    for (c, cam) in cameras.iter().enumerate() {
        let ts: Vec<f64> = (0..frames).map(|_| rng.random_range(0.0..PI)).collect();
        for (f, &t) in ts.iter().enumerate() {
            let p = cam.project(&trajectory.position(t));
            let mut x = [p[0] / p[2], p[1] / p[2], 1.0];
            if sigma > 0.0 {
                x[0] += sigma * rng.sample::<f64, _>(StandardNormal);
                x[1] += sigma * rng.sample::<f64, _>(StandardNormal);
            }
            detections.push(Detection {
                camera_id: c,
                point_id,
                time_id: f,
                point: x,
            });
        }
        times.push(ts);
    }
    DynamicScene {
        cameras,
        trajectory,
        times,
        detections,
    }
}

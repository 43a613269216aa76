//! Synthetic rational space curves and their images.
//!
//! A curve of degree `d` is a map `P¹ → P³`,
//! `(t : s) ↦ Σ_k C_k t^(d−k) s^k`. We walk `P¹` with the angle chart
//! `(t, s) = (cos θ, sin θ)`, `θ ∈ [0, π)`, which covers every point once.
//! Image curves `f` and dual image curves `φ` are recovered by nullspace
//! fitting over exact samples.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cameras::{random_rotation, Camera, Line2, Plane3, PluckerLine, Point2, Point3};
use crate::linalg::{self, normalize3, projective_distance};
use crate::dd::{self, Dd};
use crate::poly::{binomial, fit_form_dd, HomogeneousPolynomial, MonomialBasis};
use crate::{Error, Result};

/// Fits whose singular gap reaches this value are rejected as non-unique.
pub const FIT_GAP_LIMIT: f64 = 1e-3;

/// Samples used per fitted coefficient.
pub const OVERSAMPLING: usize = 2;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Conic,
    TwistedCubic,
    RationalQuartic,
    RationalQuintic,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Conic,
        Preset::TwistedCubic,
        Preset::RationalQuartic,
        Preset::RationalQuintic,
    ];

    pub fn degree(self) -> usize {
        match self {
            Preset::Conic => 2,
            Preset::TwistedCubic => 3,
            Preset::RationalQuartic => 4,
            Preset::RationalQuintic => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Conic => "conic",
            Preset::TwistedCubic => "twisted_cubic",
            Preset::RationalQuartic => "rational_quartic",
            Preset::RationalQuintic => "rational_quintic",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Class `m = 2d + 2g − 2` of the image of a degree-`d`, genus-`g` curve.
pub fn class_of(d: usize, g: usize) -> usize {
    2 * d + 2 * g - 2
}

/// Number of nodes `(d−1)(d−2)/2 − g` of a generic projection.
pub fn node_count(d: usize, g: usize) -> Result<usize> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("degree {d} < 2")));
    }
    let arithmetic = (d - 1) * (d - 2) / 2;
    if g > arithmetic {
        return Err(Error::InvalidArgument(format!(
            "genus {g} exceeds arithmetic genus {arithmetic} of a degree-{d} plane curve"
        )));
    }
    let nodes = arithmetic - g;
    debug_assert_eq!(d * (d - 1) - 2 * nodes, class_of(d, g));
    Ok(nodes)
}

/// A rational space curve `P¹ → P³` of degree `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalCurve3D {
    /// Columns `C_0 … C_d`, coefficient of `t^(d−k) s^k`.
    coeffs: Vec<Vector4<f64>>,
}

impl RationalCurve3D {
    pub fn new(coeffs: Vec<Vector4<f64>>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::InvalidArgument("a curve needs degree >= 1".into()));
        }
        let curve = Self { coeffs };
        if curve.degree() >= 2 && curve.rank() < 3 {
            return Err(Error::Degenerate("curve image is contained in a line".into()));
        }
        Ok(curve)
    }

    /// Coefficients given as 4 rows of length `d + 1`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: rows.len(),
            });
        }
        let n = rows[0].len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("coefficient rows have unequal length".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite curve coefficient".into()));
        }
        Self::new((0..n).map(|k| Vector4::new(rows[0][k], rows[1][k], rows[2][k], rows[3][k])).collect())
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn genus(&self) -> usize {
        0
    }

    pub fn class(&self) -> usize {
        class_of(self.degree(), 0)
    }

    pub fn coeffs(&self) -> &[Vector4<f64>] {
        &self.coeffs
    }

    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(4, self.coeffs.len(), |r, c| self.coeffs[c][r])
    }

    pub fn rank(&self) -> usize {
        linalg::numerical_rank(&linalg::singular_values(&self.coefficient_matrix()), 1e-10)
    }

    /// Applies a projective transform of `P³`.
    pub fn transformed(&self, v: &nalgebra::Matrix4<f64>) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| v * c).collect(),
        }
    }

    /// `X(t, s)`.
    pub fn eval_ts(&self, t: f64, s: f64) -> Point3 {
        let d = self.degree() as i32;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * (t.powi(d - k as i32) * s.powi(k as i32)))
            .sum()
    }

    /// `X` at angle `θ`.
    pub fn point(&self, theta: f64) -> Point3 {
        self.eval_ts(theta.cos(), theta.sin())
    }

    /// `dX/dθ`.
    pub fn derivative(&self, theta: f64) -> Point3 {
        let (t, s) = (theta.cos(), theta.sin());
        let d = self.degree() as i32;
        let mut out = Vector4::zeros();
        for (k, c) in self.coeffs.iter().enumerate() {
            let k = k as i32;
            let (a, b) = (d - k, k);
            // d/dθ [t^a s^b] = −a t^(a−1) s^(b+1) + b t^(a+1) s^(b−1)
            let mut w = 0.0;
            if a > 0 {
                w -= a as f64 * t.powi(a - 1) * s.powi(b + 1);
            }
            if b > 0 {
                w += b as f64 * t.powi(a + 1) * s.powi(b - 1);
            }
            out += c * w;
        }
        out
    }

    /// Tangent line of `X` at `θ`.
    pub fn tangent_line(&self, theta: f64) -> PluckerLine {
        PluckerLine::join(&self.point(theta), &self.derivative(theta))
    }

    /// Binary form `Π · X(t, s)` whose roots are the curve points on `Π`.
    pub fn plane_section_form(&self, plane: &Plane3) -> Vec<f64> {
        self.coeffs.iter().map(|c| plane.dot(c)).collect()
    }

    /// Real points of the curve on a plane, as `(θ, X(θ))`.
    pub fn plane_section(&self, plane: &Plane3) -> Result<Vec<(f64, Point3)>> {
        let roots = linalg::binary_form_roots(&self.plane_section_form(plane))?;
        Ok(roots
            .real
            .iter()
            .map(|[t, s]| {
                let theta = s.atan2(*t).rem_euclid(PI);
                (theta, self.point(theta))
            })
            .collect())
    }

    /// Smallest projective distance between `p` and a curve sample, refined
    /// by golden-section search around the best of `samples` grid points.
    pub fn distance_to(&self, p: &Point3, samples: usize) -> (f64, f64) {
        let dist = |th: f64| projective_distance(self.point(th).as_slice(), p.as_slice());
        let h = PI / samples as f64;
        let (mut best_t, mut best) = (0.0, f64::INFINITY);
        for i in 0..samples {
            let th = (i as f64 + 0.5) * h;
            let v = dist(th);
            if v < best {
                best = v;
                best_t = th;
            }
        }
        let (t, v) = golden_min(dist, best_t - h, best_t + h, 60);
        (v.min(best), t.rem_euclid(PI))
    }

    /// Checks that distinct parameter pairs map to distinct points.
    pub fn is_generically_injective(&self, pairs: usize, seed: u64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..pairs).all(|_| {
            let a = rng.random_range(0.0..PI);
            let b = rng.random_range(0.0..PI);
            let sep = (a - b).abs().min(PI - (a - b).abs());
            sep < 1e-3
                || projective_distance(self.point(a).as_slice(), self.point(b).as_slice()) > 1e-9
        })
    }
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub(crate) fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn base_curve(preset: Preset, rng: &mut ChaCha8Rng) -> Vec<Vector4<f64>> {
    match preset {
        // circle in the plane z = 0: (t² − s², 2ts, 0, t² + s²)
        Preset::Conic => vec![
            Vector4::new(1.0, 0.0, 0.0, 1.0),
            Vector4::new(0.0, 2.0, 0.0, 0.0),
            Vector4::new(-1.0, 0.0, 0.0, 1.0),
        ],
        Preset::TwistedCubic => vec![
            Vector4::new(1.0, 0.0, 0.0, 0.0),
            Vector4::new(0.0, 1.0, 0.0, 0.0),
            Vector4::new(0.0, 0.0, 1.0, 0.0),
            Vector4::new(0.0, 0.0, 0.0, 1.0),
        ],
        // (cos φ, sin φ, 0.5 sin 2φ + 0.3 cos 2φ) with the half-angle substitution,
        // homogenized by (t² + s²)²
        Preset::RationalQuartic => {
            // cos φ = (t² − s²)/(t²+s²), sin φ = 2ts/(t²+s²)
            // x = (t² − s²)(t² + s²) = t⁴ − s⁴
            // y = 2ts (t² + s²)      = 2t³s + 2ts³
            // sin 2φ (t²+s²)² = 4ts(t² − s²) = 4t³s − 4ts³
            // cos 2φ (t²+s²)² = (t² − s²)² − 4t²s² = t⁴ − 6t²s² + s⁴
            // w = (t² + s²)² = t⁴ + 2t²s² + s⁴
            vec![
                Vector4::new(1.0, 0.0, 0.3, 1.0),
                Vector4::new(0.0, 2.0, 2.0, 0.0),
                Vector4::new(0.0, 0.0, -1.8, 2.0),
                Vector4::new(0.0, 2.0, -2.0, 0.0),
                Vector4::new(-1.0, 0.0, 0.3, 1.0),
            ]
        }
        // a generic projection of the rational normal quintic
        Preset::RationalQuintic => {
            let mut cols: Vec<Vector4<f64>> = (0..6)
                .map(|_| Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)))
                .collect();
            // keep the curve mostly affine: w = t⁵ + 2t³s² + s⁵·0 + …, dominated by t
            for (k, c) in cols.iter_mut().enumerate() {
                c[3] = [1.5, 0.0, 1.0, 0.0, 0.5, 0.2][k];
            }
            cols
        }
    }
}

/// Seeded instance of a preset, placed by a random mild projective transform.
pub fn preset_curve(preset: Preset, seed: u64) -> RationalCurve3D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    loop {
        let base = base_curve(preset, &mut rng);
        let r = random_rotation(&mut rng);
        let scale = rng.random_range(0.7..1.0);
        let mut v = nalgebra::Matrix4::<f64>::identity();
        v.fixed_view_mut::<3, 3>(0, 0).copy_from(&(r * scale));
        for i in 0..3 {
            v[(i, 3)] = rng.random_range(-0.2..0.2);
            v[(3, i)] = rng.random_range(-0.1..0.1);
        }
        let curve = RationalCurve3D { coeffs: base }.transformed(&v);
        let full_rank = if preset == Preset::Conic { 3 } else { 4 };
        if curve.rank() == full_rank && curve.is_generically_injective(64, seed) {
            return curve;
        }
    }
}

/// Parses a preset name and builds the seeded curve.
pub fn preset_curve_by_name(name: &str, seed: u64) -> Result<RationalCurve3D> {
    Ok(preset_curve(name.parse()?, seed))
}

/// Deterministic, well-spread parameters in `[0, π)` with an offset.
pub fn sample_parameters(n: usize, offset: f64) -> Vec<f64> {
    (0..n)
        .map(|i| (PI * (i as f64 + 0.5 + offset) / n as f64).rem_euclid(PI))
        .collect()
}

/// An implicit image curve `f = 0`.
#[derive(Debug, Clone)]
pub struct ImageCurve {
    pub f: HomogeneousPolynomial,
    pub degree: usize,
    pub class: usize,
    /// Expected node count of a generic projection.
    pub nodes: usize,
    pub gap: f64,
    /// Largest normalized `|f|` at held-out projected samples.
    pub residual: f64,
}

impl ImageCurve {
    /// `|f(p)|` with `f` and `p` unit-normalized.
    pub fn residual_at(&self, p: &Point2) -> f64 {
        self.f.eval_normalized(p.as_slice()).unwrap_or(f64::INFINITY)
    }

    /// Symmetric matrix `C` with `f(p) = pᵀ C p` (conics only).
    pub fn conic_matrix(&self) -> Result<Matrix3<f64>> {
        conic_matrix(&self.f)
    }
}

/// Symmetric matrix of a ternary quadratic form.
pub fn conic_matrix(f: &HomogeneousPolynomial) -> Result<Matrix3<f64>> {
    if f.num_vars() != 3 || f.degree() != 2 {
        return Err(Error::InvalidArgument("not a ternary quadratic".into()));
    }
    let mut c = Matrix3::zeros();
    for (e, v) in f.basis().exponents().iter().zip(f.coeffs()) {
        let idx: Vec<usize> = e
            .iter()
            .enumerate()
            .flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize))
            .collect();
        let (i, j) = (idx[0], idx[1]);
        if i == j {
            c[(i, i)] = *v;
        } else {
            c[(i, j)] = v / 2.0;
            c[(j, i)] = v / 2.0;
        }
    }
    Ok(c)
}

/// Ternary quadratic form of a symmetric matrix.
pub fn quadratic_form(c: &Matrix3<f64>) -> HomogeneousPolynomial {
    let basis = MonomialBasis::new(3, 2);
    let coeffs = basis
        .exponents()
        .iter()
        .map(|e| {
            let idx: Vec<usize> = e
                .iter()
                .enumerate()
                .flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize))
                .collect();
            let (i, j) = (idx[0], idx[1]);
            if i == j {
                c[(i, i)]
            } else {
                c[(i, j)] + c[(j, i)]
            }
        })
        .collect();
    HomogeneousPolynomial::from_coeffs(3, 2, coeffs).expect("six coefficients")
}

fn check_center_off_curve(curve: &RationalCurve3D, cam: &Camera) -> Result<()> {
    let (dist, _) = curve.distance_to(&cam.center(), 720);
    if dist < 1e-6 {
        return Err(Error::Degenerate("camera center lies on the curve".into()));
    }
    Ok(())
}

/// Fits the degree-`d` image curve `f` from exact projected samples.
pub fn implicit_image_curve(curve: &RationalCurve3D, cam: &Camera) -> Result<ImageCurve> {
    check_center_off_curve(curve, cam)?;
    let d = curve.degree();
    let n = OVERSAMPLING * binomial(d + 2, 2);
    let jet = ImageJet::new(curve, cam);
    let pts: Vec<Vec<Dd>> = sample_parameters(n, 0.0)
        .into_iter()
        .map(|th| jet.point(th).to_vec())
        .collect();
    let (f, fit) = fit_form_dd(&pts, d)?;
    if fit.gap >= FIT_GAP_LIMIT {
        return Err(Error::NonUniqueFit {
            gap: fit.gap,
            threshold: FIT_GAP_LIMIT,
        });
    }
    let residual = sample_parameters(50, GOLDEN)
        .into_iter()
        .map(|th| f.eval_normalized(cam.project(&curve.point(th)).as_slice()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(ImageCurve {
        f,
        degree: d,
        class: curve.class(),
        nodes: node_count(d, 0)?,
        gap: fit.gap,
        residual,
    })
}

/// The projected parametrization `p(t, s) = Σ M C_k t^(d−k) s^k`,
/// evaluated in double-double precision.
struct ImageJet {
    coeffs: Vec<[Dd; 3]>,
}

impl ImageJet {
    fn new(curve: &RationalCurve3D, cam: &Camera) -> Self {
        let m = cam.matrix();
        let rows: Vec<[f64; 4]> = (0..3).map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)], m[(r, 3)]]).collect();
        let coeffs = curve
            .coeffs()
            .iter()
            .map(|c| {
                let c: Vec<Dd> = c.iter().map(|&x| Dd::from(x)).collect();
                [dd::dot_f64(&rows[0], &c), dd::dot_f64(&rows[1], &c), dd::dot_f64(&rows[2], &c)]
            })
            .collect();
        Self { coeffs }
    }

    fn combine(&self, weights: impl Iterator<Item = (usize, Dd)>) -> [Dd; 3] {
        let mut out = [Dd::ZERO; 3];
        for (k, w) in weights {
            for (o, c) in out.iter_mut().zip(&self.coeffs[k]) {
                *o += *c * w;
            }
        }
        out
    }

    fn point(&self, theta: f64) -> [Dd; 3] {
        let (t, s) = (Dd::from(theta.cos()), Dd::from(theta.sin()));
        let d = self.coeffs.len() as u32 - 1;
        self.combine((0..=d).map(|k| (k as usize, t.powi(d - k) * s.powi(k))))
    }

    /// `p_t × p_s`, a positive multiple of `p × dp/dθ`.
    fn tangent(&self, theta: f64) -> [Dd; 3] {
        let (t, s) = (Dd::from(theta.cos()), Dd::from(theta.sin()));
        let d = self.coeffs.len() as u32 - 1;
        let pt = self.combine((0..d).map(|k| (k as usize, (t.powi(d - k - 1) * s.powi(k)).mul_f64((d - k) as f64))));
        let ps = self.combine((1..=d).map(|k| (k as usize, (t.powi(d - k) * s.powi(k - 1)).mul_f64(k as f64))));
        dd::cross(&pt, &ps)
    }
}

/// Projected point and its `θ`-derivative.
fn projected_jet(curve: &RationalCurve3D, cam: &Camera, theta: f64) -> (Point2, Point2) {
    (cam.project(&curve.point(theta)), cam.project(&curve.derivative(theta)))
}

/// Parameters other than `theta` (up to `exclude` in angle) whose image
/// coincides with the image of `theta`: the other branches through a node.
pub fn coincident_parameters(curve: &RationalCurve3D, cam: &Camera, theta: f64, exclude: f64) -> Vec<f64> {
    let p = cam.project(&curve.point(theta)).normalize();
    let dist = |th: f64| {
        let q = cam.project(&curve.point(th)).normalize();
        q.cross(&p).norm()
    };
    let n = 720;
    let h = PI / n as f64;
    let vals: Vec<f64> = (0..n).map(|i| dist(i as f64 * h)).collect();
    let mut out: Vec<f64> = Vec::new();
    for i in 0..n {
        let (prev, next) = (vals[(i + n - 1) % n], vals[(i + 1) % n]);
        if vals[i] <= prev && vals[i] <= next && vals[i] < 0.05 {
            let th = i as f64 * h;
            let sep = (th - theta).rem_euclid(PI);
            if sep.min(PI - sep) < exclude {
                continue;
            }
            let (t, v) = golden_min(dist, th - h, th + h, 80);
            if v < 1e-7 {
                let t = t.rem_euclid(PI);
                let sep = (t - theta).rem_euclid(PI);
                if sep.min(PI - sep) >= exclude && out.iter().all(|&o| (o - t).abs() > 1e-6) {
                    out.push(t);
                }
            }
        }
    }
    out
}

/// Tangent line of the image curve at the image of `X(θ)`.
pub fn image_tangent(curve: &RationalCurve3D, cam: &Camera, theta: f64) -> Result<Line2> {
    let (p, dp) = projected_jet(curve, cam, theta);
    let l = p.cross(&dp);
    if l.norm() <= 1e-10 * p.norm() * dp.norm().max(1e-300) || dp.norm() == 0.0 {
        return Err(Error::Degenerate("tangent line undefined (cusp of the projection)".into()));
    }
    if !coincident_parameters(curve, cam, theta, 1e-3).is_empty() {
        return Err(Error::NonGeneric(format!(
            "image point at θ = {theta:.6} is a node: two branches, two tangents"
        )));
    }
    Ok(normalize3(&l))
}

/// A fitted dual image curve `φ = 0` of degree `m`.
#[derive(Debug, Clone)]
pub struct DualImageCurve {
    pub phi: HomogeneousPolynomial,
    pub class: usize,
    pub gap: f64,
    /// Largest normalized `|φ|` over held-out tangents.
    pub residual: f64,
}

/// `n` image tangents at well-spread parameters, skipping any that fail.
pub fn sample_tangents(curve: &RationalCurve3D, cam: &Camera, n: usize, offset: f64) -> Vec<(f64, Line2)> {
    let mut out = Vec::with_capacity(n);
    let mut extra = 0;
    while out.len() < n && extra < 4 {
        for th in sample_parameters(n, offset + extra as f64 * 0.37) {
            if out.len() == n {
                break;
            }
            if let Ok(l) = image_tangent(curve, cam, th) {
                out.push((th, l));
            }
        }
        extra += 1;
    }
    out
}

/// Fits the dual image curve `φ` of degree `m = 2d − 2` from tangent lines.
pub fn dual_image_curve(curve: &RationalCurve3D, cam: &Camera) -> Result<DualImageCurve> {
    check_center_off_curve(curve, cam)?;
    let m = curve.class();
    let n = OVERSAMPLING * binomial(m + 2, 2);
    let jet = ImageJet::new(curve, cam);
    let lines: Vec<Vec<Dd>> = sample_tangents(curve, cam, n, 0.0)
        .into_iter()
        .map(|(th, _)| jet.tangent(th).to_vec())
        .collect();
    let (phi, fit) = fit_form_dd(&lines, m)?;
    if fit.gap >= FIT_GAP_LIMIT {
        return Err(Error::NonUniqueFit {
            gap: fit.gap,
            threshold: FIT_GAP_LIMIT,
        });
    }
    let residual = sample_tangents(curve, cam, 50, GOLDEN)
        .iter()
        .map(|(_, l)| phi.eval_normalized(l.as_slice()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(DualImageCurve {
        phi,
        class: m,
        gap: fit.gap,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Two real branches cross.
    Crunode,
    /// Isolated real point with complex-conjugate branches.
    Acnode,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub point: Point2,
    pub kind: NodeKind,
    /// Real parameters mapping onto the node.
    pub parameters: Vec<f64>,
}

/// Real singular points of the image curve: Gauss–Newton on `∇f = 0` from
/// the lowest-gradient points of a sphere grid, then classified by the
/// number of real curve parameters landing on them.
pub fn find_nodes(image: &ImageCurve, curve: &RationalCurve3D, cam: &Camera) -> Vec<Node> {
    let f = &image.f;
    let fnorm = f.coeff_norm();
    let grad_norm = |p: &Vector3<f64>| -> f64 {
        let g = f.gradient(p.normalize().as_slice()).expect("3 vars");
        Vector3::from_column_slice(&g).norm() / fnorm
    };
    // Fibonacci hemisphere
    let n = 4000;
    let mut grid: Vec<(f64, Vector3<f64>)> = (0..n)
        .map(|i| {
            let z = (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = i as f64 * PI * (3.0 - 5f64.sqrt());
            let p = Vector3::new(r * phi.cos(), r * phi.sin(), z);
            (grad_norm(&p), p)
        })
        .collect();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut found: Vec<Vector3<f64>> = Vec::new();
    for (_, start) in grid.iter().take(80) {
        if let Some(p) = polish_singular_point(f, start) {
            if grad_norm(&p) <= 1e-10
                && found
                    .iter()
                    .all(|q| projective_distance(q.as_slice(), p.as_slice()) > 1e-5)
            {
                found.push(p);
            }
        }
    }
    found
        .into_iter()
        .map(|p| {
            let dist = |th: f64| cam.project(&curve.point(th)).normalize().cross(&p).norm();
            let m = 1440;
            let h = PI / m as f64;
            let vals: Vec<f64> = (0..m).map(|i| dist(i as f64 * h)).collect();
            let mut params = Vec::new();
            for i in 0..m {
                let (prev, next) = (vals[(i + m - 1) % m], vals[(i + 1) % m]);
                if vals[i] <= prev && vals[i] <= next && vals[i] < 0.05 {
                    let (t, v) = golden_min(dist, i as f64 * h - h, i as f64 * h + h, 80);
                    let t = t.rem_euclid(PI);
                    if v < 1e-6 && params.iter().all(|&o: &f64| (o - t).abs() > 1e-5) {
                        params.push(t);
                    }
                }
            }
            let kind = if params.len() >= 2 {
                NodeKind::Crunode
            } else {
                NodeKind::Acnode
            };
            Node {
                point: normalize3(&p),
                kind,
                parameters: params,
            }
        })
        .collect()
}

/// Gauss–Newton on `∇f(p) = 0` over the tangent plane chart of the unit sphere.
fn polish_singular_point(f: &HomogeneousPolynomial, start: &Vector3<f64>) -> Option<Vector3<f64>> {
    let grad = |p: &Vector3<f64>| Vector3::from_column_slice(&f.gradient(p.as_slice()).expect("3 vars"));
    let mut p = start.normalize();
    for _ in 0..50 {
        let g = grad(&p);
        // chart basis orthogonal to p
        let u = if p.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let u = (u - p * p.dot(&u)).normalize();
        let v = p.cross(&u);
        let h = 1e-6;
        let ju = (grad(&(p + u * h)) - grad(&(p - u * h))) / (2.0 * h);
        let jv = (grad(&(p + v * h)) - grad(&(p - v * h))) / (2.0 * h);
        let j = nalgebra::Matrix3x2::from_columns(&[ju, jv]);
        let step = j.svd(true, true).solve(&(-g), 1e-14).ok()?;
        p = (p + u * step[0] + v * step[1]).normalize();
        if step.norm() < 1e-14 {
            break;
        }
    }
    Some(p)
}

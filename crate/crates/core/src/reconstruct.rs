//! Reconstruction of a space curve from its images: intersection of the
//! viewing cones, linear recovery of the dual surface `Υ`, and linear
//! recovery of the Chow form `Γ` on the Grassmannian of lines.

use std::f64::consts::PI;

use log::debug;
use nalgebra::{DMatrix, DVector, Matrix3x4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::cameras::{normalize4, Camera, Line2, Plane3, PluckerLine, Point2, Point3};
use crate::curves::{ImageCurve, RationalCurve3D};
use crate::linalg::{self, normalize3, right_singular, RANK_TOL};
use crate::poly::{binomial, fit_form, pullback, restrict_to_line, HomogeneousPolynomial, MonomialBasis};
use crate::{Error, Result};

/// Root collisions closer than this on an epipolar line mark a tangent plane.
pub const TANGENT_SEPARATION: f64 = 1e-7;

/// Candidates within this projective distance of the truth are labelled true.
pub const TRUTH_TOL: f64 = 1e-6;

/// Third-view acceptance for candidates in blind mode.
pub const THIRD_VIEW_TOL: f64 = 1e-7;

/// The viewing cone `Δ(P) = f(M P)`.
#[derive(Debug, Clone)]
pub struct Cone {
    pub delta: HomogeneousPolynomial,
}

impl Cone {
    pub fn residual_at(&self, p: &Point3) -> f64 {
        self.delta.eval_normalized(p.as_slice()).unwrap_or(f64::INFINITY)
    }
}

pub fn cone(f: &ImageCurve, cam: &Camera) -> Result<Cone> {
    let m = DMatrix::from_fn(3, 4, |r, c| cam.matrix()[(r, c)]);
    Ok(Cone {
        delta: pullback(&f.f, &m)?,
    })
}

/// How candidates on an epipolar plane are told apart.
#[derive(Debug, Clone, Copy)]
pub enum Classifier<'a> {
    /// Synthetic mode: compare with the true plane section of the curve.
    GroundTruth(&'a RationalCurve3D),
    /// Blind mode: keep candidates that reproject onto a third image curve.
    ThirdView(&'a Camera, &'a ImageCurve),
}

#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    /// Index of the intersection on the first and second epipolar line.
    pub pair: (usize, usize),
    pub point: [f64; 4],
    pub true_component: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlaneCandidates {
    pub plane_index: usize,
    /// Pencil parameter of the plane in `[0, π)`.
    pub theta: f64,
    pub candidates: Vec<Candidate>,
}

impl PlaneCandidates {
    pub fn true_count(&self) -> usize {
        self.candidates.iter().filter(|c| c.true_component).count()
    }

    pub fn extraneous_count(&self) -> usize {
        self.candidates.len() - self.true_count()
    }
}

/// Result of the epipolar plane sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentSplit {
    pub degree: usize,
    pub planes: Vec<PlaneCandidates>,
    /// Planes skipped because two intersections collided (tangent planes).
    pub skipped_tangent: usize,
    /// Planes skipped because part of the section was not real.
    pub skipped_complex: usize,
}

impl ComponentSplit {
    pub fn true_component(&self) -> Vec<[f64; 4]> {
        self.collect(true)
    }

    pub fn extraneous_component(&self) -> Vec<[f64; 4]> {
        self.collect(false)
    }

    fn collect(&self, label: bool) -> Vec<[f64; 4]> {
        self.planes
            .iter()
            .flat_map(|p| p.candidates.iter())
            .filter(|c| c.true_component == label)
            .map(|c| c.point)
            .collect()
    }

    /// Whether every plane has `d` true and `d(d − 1)` extraneous candidates.
    pub fn counts_match(&self) -> bool {
        let d = self.degree;
        self.planes
            .iter()
            .all(|p| p.true_count() == d && p.extraneous_count() == d * (d - 1))
    }
}

/// Two points spanning an image line.
fn line_points(l: &Line2) -> (Point2, Point2) {
    let m = DMatrix::from_row_slice(1, 3, l.as_slice());
    let (_, v) = right_singular(&m);
    (
        Point2::from_iterator(v.column(1).iter().copied()),
        Point2::from_iterator(v.column(2).iter().copied()),
    )
}

/// Real intersections of an image curve with a line, or why there are not `d` of them.
enum Section {
    Points(Vec<Point2>),
    Tangent,
    Complex,
}

fn line_section(f: &HomogeneousPolynomial, l: &Line2) -> Result<Section> {
    let (a, b) = line_points(l);
    let q = restrict_to_line(f, a.as_slice(), b.as_slice())?;
    let roots = linalg::binary_form_roots(q.coeffs())?;
    if roots.min_separation < TANGENT_SEPARATION {
        return Ok(Section::Tangent);
    }
    if roots.complex > 0 || roots.real.len() != f.degree() {
        return Ok(Section::Complex);
    }
    Ok(Section::Points(
        roots.real.iter().map(|[x, y]| normalize3(&(a * *x + b * *y))).collect(),
    ))
}

/// Image line of a plane through the camera center: solves `Mᵀ l = π`.
fn epipolar_line_of_plane(cam: &Camera, plane: &Plane3) -> Line2 {
    let m = cam.matrix();
    let lhs = m * m.transpose();
    let rhs = m * plane;
    normalize3(&lhs.try_inverse().map(|inv| inv * rhs).unwrap_or(rhs))
}

/// Linear triangulation from two views.
pub fn triangulate(cam1: &Camera, p1: &Point2, cam2: &Camera, p2: &Point2) -> Point3 {
    let rows = |m: &Matrix3x4<f64>, p: &Point2| {
        let p = normalize3(p);
        let r: [[f64; 4]; 3] = std::array::from_fn(|k| {
            let (i, j) = [(1, 2), (2, 0), (0, 1)][k];
            std::array::from_fn(|c| p[i] * m[(j, c)] - p[j] * m[(i, c)])
        });
        r
    };
    let (m1, m2) = (cam1.matrix() / cam1.matrix().norm(), cam2.matrix() / cam2.matrix().norm());
    let all: Vec<[f64; 4]> = rows(&m1, p1).into_iter().chain(rows(&m2, p2)).collect();
    let a = DMatrix::from_fn(6, 4, |r, c| all[r][c]);
    let (_, v) = right_singular(&a);
    normalize4(&Point3::from_iterator(v.column(3).iter().copied()))
}

/// Two planes spanning the pencil through the baseline.
fn baseline_pencil(cam1: &Camera, cam2: &Camera) -> (Plane3, Plane3) {
    let (o1, o2) = (cam1.center(), cam2.center());
    let m = DMatrix::from_row_slice(2, 4, &[o1[0], o1[1], o1[2], o1[3], o2[0], o2[1], o2[2], o2[3]]);
    let (_, v) = right_singular(&m);
    (
        Plane3::from_iterator(v.column(2).iter().copied()),
        Plane3::from_iterator(v.column(3).iter().copied()),
    )
}

/// Sweeps `n_planes` planes of the pencil through the baseline, pairs the
/// `d` intersections on corresponding epipolar lines in all `d²` ways and
/// labels each triangulated candidate.
pub fn epipolar_sweep(
    f1: &ImageCurve,
    f2: &ImageCurve,
    cam1: &Camera,
    cam2: &Camera,
    n_planes: usize,
    classifier: Classifier<'_>,
) -> Result<ComponentSplit> {
    if f1.degree != f2.degree {
        return Err(Error::InvalidArgument("image curves of different degrees".into()));
    }
    let d = f1.degree;
    let (pa, pb) = baseline_pencil(cam1, cam2);
    let mut planes = Vec::new();
    let (mut skipped_tangent, mut skipped_complex) = (0, 0);
    for k in 0..n_planes {
        let theta = PI * (k as f64 + 0.5) / n_planes as f64;
        let plane = pa * theta.cos() + pb * theta.sin();
        let l1 = epipolar_line_of_plane(cam1, &plane);
        let l2 = epipolar_line_of_plane(cam2, &plane);
        let (s1, s2) = (line_section(&f1.f, &l1)?, line_section(&f2.f, &l2)?);
        let (q1, q2) = match (s1, s2) {
            (Section::Points(a), Section::Points(b)) => (a, b),
            (Section::Tangent, _) | (_, Section::Tangent) => {
                debug!("plane {k}: tangent, skipped");
                skipped_tangent += 1;
                continue;
            }
            _ => {
                skipped_complex += 1;
                continue;
            }
        };
        let truth = match classifier {
            Classifier::GroundTruth(curve) => curve
                .plane_section(&plane)?
                .into_iter()
                .map(|(_, x)| x)
                .collect(),
            Classifier::ThirdView(..) => Vec::new(),
        };
        let mut candidates = Vec::with_capacity(d * d);
        for (i, p1) in q1.iter().enumerate() {
            for (j, p2) in q2.iter().enumerate() {
                let x = triangulate(cam1, p1, cam2, p2);
                let true_component = match classifier {
                    Classifier::GroundTruth(_) => truth
                        .iter()
                        .any(|t: &Point3| linalg::projective_distance(t.as_slice(), x.as_slice()) <= TRUTH_TOL),
                    Classifier::ThirdView(cam3, f3) => f3.residual_at(&cam3.project(&x)) <= THIRD_VIEW_TOL,
                };
                candidates.push(Candidate {
                    pair: (i, j),
                    point: [x[0], x[1], x[2], x[3]],
                    true_component,
                });
            }
        }
        planes.push(PlaneCandidates {
            plane_index: k,
            theta,
            candidates,
        });
    }
    Ok(ComponentSplit {
        degree: d,
        planes,
        skipped_tangent,
        skipped_complex,
    })
}

/// Coefficients fitted against a rank-checked system.
#[derive(Debug, Clone)]
pub struct FitDiagnostics {
    /// Numerical rank of each view's rows.
    pub per_view_ranks: Vec<usize>,
    /// Numerical rank of all rows together.
    pub rank: usize,
    /// Number of unknown coefficients, counting the overall scale.
    pub unknowns: usize,
    pub gap: f64,
}

/// The dual surface `Υ = 0` of a space curve, a form on planes.
#[derive(Debug, Clone)]
pub struct DualSurface {
    pub upsilon: HomogeneousPolynomial,
    pub diagnostics: FitDiagnostics,
}

impl DualSurface {
    pub fn residual_at(&self, plane: &Plane3) -> f64 {
        self.upsilon.eval_normalized(plane.as_slice()).unwrap_or(f64::INFINITY)
    }
}

/// Rank of unit-normalized monomial rows, measured after whitening.
fn monomial_rank(basis: &MonomialBasis, points: &[Vec<f64>], whitening: &DMatrix<f64>) -> Result<usize> {
    if points.is_empty() {
        return Ok(0);
    }
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let y = whitening * DVector::from_column_slice(p);
            basis.evaluate(y.normalize().as_slice())
        })
        .collect::<Result<_>>()?;
    let mut m = DMatrix::from_fn(rows.len(), basis.len(), |r, c| rows[r][c]);
    linalg::normalize_rows(&mut m);
    Ok(linalg::numerical_rank(&linalg::singular_values(&m), RANK_TOL))
}

fn view_ranks(basis: &MonomialBasis, views: &[Vec<Vec<f64>>]) -> Result<(Vec<usize>, usize)> {
    let all: Vec<Vec<f64>> = views.iter().flatten().cloned().collect();
    let t = crate::poly::whitening(all.iter().map(|p| p.as_slice()), basis.num_vars());
    let per_view = views
        .iter()
        .map(|v| monomial_rank(basis, v, &t))
        .collect::<Result<Vec<_>>>()?;
    Ok((per_view, monomial_rank(basis, &all, &t)?))
}

/// Per-view cap on independent equations for the dual surface.
pub fn dual_view_cap(m: usize) -> usize {
    binomial(m + 2, 2) - 1
}

/// Linear recovery of `Υ` of degree `m` from tangent lines seen in several
/// views: each tangent `l` gives `Υ(Mᵀ l) = 0`.
pub fn dual_reconstruct(views: &[(Camera, Vec<Line2>)], m: usize) -> Result<DualSurface> {
    if views.is_empty() {
        return Err(Error::Empty("no views"));
    }
    let basis = MonomialBasis::new(4, m);
    let planes: Vec<Vec<Vec<f64>>> = views
        .iter()
        .map(|(cam, lines)| {
            lines
                .iter()
                .map(|l| {
                    let p = cam.plane_of_line(l);
                    (p / p.norm()).as_slice().to_vec()
                })
                .collect()
        })
        .collect();
    let (per_view_ranks, rank) = view_ranks(&basis, &planes)?;
    let need = basis.len() - 1;
    if rank < need {
        return Err(Error::InsufficientRank {
            have: rank,
            need,
            per_view: per_view_ranks,
        });
    }
    let all: Vec<Vec<f64>> = planes.into_iter().flatten().collect();
    let (upsilon, fit) = fit_form(&all, m)?;
    Ok(DualSurface {
        upsilon: upsilon.normalized(),
        diagnostics: FitDiagnostics {
            per_view_ranks,
            rank,
            unknowns: basis.len(),
            gap: fit.gap,
        },
    })
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Fewest views for a linear dual reconstruction of class `m`:
/// `⌈(m² + 6m + 11) / (3(m + 3))⌉`.
pub fn min_views_dual(m: usize) -> Result<usize> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("class {m} < 2")));
    }
    Ok(ceil_div(m * m + 6 * m + 11, 3 * (m + 3)))
}

/// Fewest views for a linear Chow reconstruction of degree `d`:
/// `⌈(d³ + 8d² + 23d + 28) / (6(d + 3))⌉`.
pub fn min_views_chow(d: usize) -> Result<usize> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("degree {d} < 2")));
    }
    Ok(ceil_div(d * d * d + 8 * d * d + 23 * d + 28, 6 * (d + 3)))
}

/// `dim S(G(1,3))_d`: degree-`d` forms on `P⁵` modulo multiples of the Grassmann quadric.
pub fn chow_unknowns(d: usize) -> usize {
    binomial(d + 5, 5) - if d >= 2 { binomial(d + 3, 5) } else { 0 }
}

/// Per-view cap `½d² + 3⁄2·d` on independent Chow equations.
pub fn chow_view_cap(d: usize) -> usize {
    (d * d + 3 * d) / 2
}

/// Coefficient vectors of `q · Q` for every monomial `q` of degree `d − 2`,
/// `Q` the Grassmann quadric: a basis of the ideal piece `I(G)_d`.
pub fn grassmann_ideal_basis(d: usize) -> Result<DMatrix<f64>> {
    let basis = MonomialBasis::new(6, d);
    if d < 2 {
        return Ok(DMatrix::zeros(0, basis.len()));
    }
    let quadric = HomogeneousPolynomial::from_terms(
        6,
        2,
        &[(1.0, &[1, 0, 0, 1, 0, 0]), (1.0, &[0, 1, 0, 0, 1, 0]), (1.0, &[0, 0, 1, 0, 0, 1])],
    )?;
    let lower = MonomialBasis::new(6, d - 2);
    let mut rows = Vec::with_capacity(lower.len());
    for e in lower.exponents() {
        let q = HomogeneousPolynomial::from_terms(6, d - 2, &[(1.0, e)])?;
        rows.push(q.mul(&quadric)?.coeffs().to_vec());
    }
    Ok(DMatrix::from_fn(rows.len(), basis.len(), |r, c| rows[r][c]))
}

/// The Chow form `Γ` of a space curve, the canonical representative
/// orthogonal to the ideal of the Grassmannian.
#[derive(Debug, Clone)]
pub struct ChowForm {
    pub gamma: HomogeneousPolynomial,
    pub diagnostics: FitDiagnostics,
}

impl ChowForm {
    pub fn degree(&self) -> usize {
        self.gamma.degree()
    }

    /// `|Γ(L)|` with `Γ` and `L` unit-normalized.
    pub fn residual_at(&self, line: &PluckerLine) -> f64 {
        self.gamma.eval_normalized(line.0.as_slice()).unwrap_or(f64::INFINITY)
    }

    /// Largest `|⟨c, b⟩|` over the unit-normalized ideal basis vectors `b`.
    pub fn ideal_orthogonality(&self) -> Result<f64> {
        let ideal = grassmann_ideal_basis(self.degree())?;
        let c = DVector::from_column_slice(self.gamma.coeffs());
        let c = &c / c.norm();
        Ok(ideal
            .row_iter()
            .map(|r| (r.dot(&c.transpose()) / r.norm()).abs())
            .fold(0.0, f64::max))
    }
}

/// Fits a degree-`d` Chow form through the given rays, grouped by view for
/// the rank diagnostics.
pub fn fit_chow(views: &[Vec<PluckerLine>], d: usize) -> Result<ChowForm> {
    fit_chow_weighted(views, d, None)
}

/// [`fit_chow`] with each ray's row divided by the given weight (rays in
/// view order); unit weights reproduce the plain fit.
pub fn fit_chow_weighted(views: &[Vec<PluckerLine>], d: usize, weights: Option<&[f64]>) -> Result<ChowForm> {
    if views.iter().all(|v| v.is_empty()) {
        return Err(Error::Empty("no rays"));
    }
    let basis = MonomialBasis::new(6, d);
    let unknowns = chow_unknowns(d);
    let rays: Vec<Vec<Vec<f64>>> = views
        .iter()
        .map(|v| v.iter().map(|l| l.normalized().0.as_slice().to_vec()).collect())
        .collect();
    let (per_view_ranks, rank) = view_ranks(&basis, &rays)?;
    if rank < unknowns - 1 {
        return Err(Error::InsufficientRank {
            have: rank,
            need: unknowns - 1,
            per_view: per_view_ranks,
        });
    }
    let ideal = grassmann_ideal_basis(d)?;
    let all: Vec<&Vec<f64>> = rays.iter().flatten().collect();
    if weights.is_some_and(|w| w.len() != all.len()) {
        return Err(Error::DimensionMismatch {
            expected: all.len(),
            got: weights.map_or(0, |w| w.len()),
        });
    }
    let n_rows = all.len() + ideal.nrows();
    let mut a = DMatrix::zeros(n_rows, basis.len());
    for (r, x) in all.iter().enumerate() {
        let row = basis.evaluate(x)?;
        let n = match weights {
            Some(w) => w[r],
            None => row.iter().map(|v| v * v).sum::<f64>().sqrt(),
        };
        for (c, v) in row.iter().enumerate() {
            a[(r, c)] = v / n;
        }
    }
    for (k, row) in ideal.row_iter().enumerate() {
        let n = row.norm();
        for c in 0..basis.len() {
            a[(all.len() + k, c)] = row[c] / n;
        }
    }
    let (sv, v) = right_singular(&a);
    let k = sv.len();
    let mut c = v.column(k - 1).into_owned();
    if ideal.nrows() > 0 {
        // remove the remaining component along the ideal exactly
        let bt = ideal.transpose();
        let gram = &ideal * &bt;
        let proj = gram
            .cholesky()
            .ok_or_else(|| Error::Degenerate("ideal basis is not independent".into()))?
            .solve(&(&ideal * &c));
        c -= bt * proj;
    }
    let c = linalg::normalize_dvec(&c);
    let floor = f64::EPSILON * sv[0];
    let gap = sv[k - 1].max(floor) / sv[k - 2].max(floor);
    Ok(ChowForm {
        gamma: HomogeneousPolynomial::new(std::sync::Arc::new(basis), c.iter().copied().collect())?,
        diagnostics: FitDiagnostics {
            per_view_ranks,
            rank,
            unknowns,
            gap,
        },
    })
}

/// Linear recovery of the Chow form from image points: each point `p`
/// gives `Γ(M̂ p) = 0` on its optical ray.
pub fn chow_reconstruct(views: &[(Camera, Vec<Point2>)], d: usize) -> Result<ChowForm> {
    let rays: Vec<Vec<PluckerLine>> = views
        .iter()
        .map(|(cam, pts)| pts.iter().map(|p| cam.optical_ray(p)).collect())
        .collect();
    fit_chow(&rays, d)
}

/// Whether `Γ` vanishes on `trials` random lines through `p`.
pub fn chow_membership<R: Rng + ?Sized>(g: &ChowForm, p: &Point3, trials: usize, rng: &mut R) -> Result<bool> {
    if trials < 3 {
        return Err(Error::InvalidArgument(format!("{trials} trials < 3")));
    }
    let p = normalize4(p);
    Ok((0..trials).all(|_| {
        let q = random_point(rng);
        g.residual_at(&PluckerLine::join(&p, &q)) <= 1e-7
    }))
}

pub fn random_point<R: Rng + ?Sized>(rng: &mut R) -> Point3 {
    normalize4(&Point3::from_fn(|_, _| rng.sample(StandardNormal)))
}

/// Lines through curve points and random points: all meet the curve.
pub fn meeting_lines(curve: &RationalCurve3D, n: usize, seed: u64) -> Vec<PluckerLine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = normalize4(&curve.point(rng.random_range(0.0..PI)));
            PluckerLine::join(&x, &random_point(&mut rng)).normalized()
        })
        .collect()
}

/// Lines through two random points.
pub fn random_lines(n: usize, seed: u64) -> Vec<PluckerLine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| PluckerLine::join(&random_point(&mut rng), &random_point(&mut rng)).normalized())
        .collect()
}

/// Planes containing a tangent line of the curve: points of the dual surface.
pub fn tangent_planes(curve: &RationalCurve3D, n: usize, seed: u64) -> Vec<Plane3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t = curve.tangent_line(rng.random_range(0.0..PI));
            let plane = t.dual_matrix() * random_point(&mut rng);
            plane / plane.norm()
        })
        .collect()
}

/// Median of the values, the separation statistic used for random lines.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Coefficient counts, per-view caps and view bounds for degree `d` and class `m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyRow {
    pub d: usize,
    pub m: usize,
    pub chow_unknowns: usize,
    pub chow_view_cap: usize,
    pub chow_views_from_counts: usize,
    pub min_views_chow: usize,
    pub dual_unknowns: usize,
    pub dual_view_cap: usize,
    pub dual_views_from_counts: usize,
    pub min_views_dual: usize,
    pub consistent: bool,
}

pub fn consistency_report(d: usize, m: usize) -> Result<ConsistencyRow> {
    let chow_unknowns = chow_unknowns(d);
    let chow_cap = chow_view_cap(d);
    let dual_unknowns = binomial(m + 3, 3);
    let dual_cap = dual_view_cap(m);
    let chow_views_from_counts = ceil_div(chow_unknowns - 1, chow_cap);
    let dual_views_from_counts = ceil_div(dual_unknowns - 1, dual_cap);
    let (mvc, mvd) = (min_views_chow(d)?, min_views_dual(m)?);
    Ok(ConsistencyRow {
        d,
        m,
        chow_unknowns,
        chow_view_cap: chow_cap,
        chow_views_from_counts,
        min_views_chow: mvc,
        dual_unknowns,
        dual_view_cap: dual_cap,
        dual_views_from_counts,
        min_views_dual: mvd,
        consistent: chow_views_from_counts == mvc && dual_views_from_counts == mvd,
    })
}

/// The `6×6` map induced on Plücker coordinates by a point transform `V`.
pub fn plucker_transform(v: &nalgebra::Matrix4<f64>) -> nalgebra::Matrix6<f64> {
    let mut out = nalgebra::Matrix6::zeros();
    let e = |k: usize| Point3::from_fn(|i, _| if i == k { 1.0 } else { 0.0 });
    // columns: images of the basis lines e_i ∧ e_j in coordinate order
    let pairs = [(0, 1), (0, 2), (0, 3), (2, 3), (3, 1), (1, 2)];
    for (c, (i, j)) in pairs.iter().enumerate() {
        let l = PluckerLine::join(&(v * e(*i)), &(v * e(*j)));
        out.set_column(c, &l.0);
    }
    out
}

/// Removes the ideal component from a degree-`d` form on `P⁵`.
pub fn reduce_modulo_ideal(g: &HomogeneousPolynomial) -> Result<HomogeneousPolynomial> {
    let ideal = grassmann_ideal_basis(g.degree())?;
    let mut c = DVector::from_column_slice(g.coeffs());
    if ideal.nrows() > 0 {
        let bt = ideal.transpose();
        let proj = (&ideal * &bt)
            .cholesky()
            .ok_or_else(|| Error::Degenerate("ideal basis is not independent".into()))?
            .solve(&(&ideal * &c));
        c -= bt * proj;
    }
    HomogeneousPolynomial::new(g.basis().clone(), c.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cameras::random_camera;
    use crate::curves::{implicit_image_curve, preset_curve, sample_parameters, Preset};
    use nalgebra::Matrix4;

    fn cams(seed: u64, n: usize) -> Vec<Camera> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| random_camera(&mut rng, 3.0, 5.0)).collect()
    }

    #[test]
    fn view_bounds() {
        assert_eq!(min_views_dual(2).unwrap(), 2);
        assert_eq!(min_views_dual(4).unwrap(), 3);
        assert_eq!(min_views_dual(6).unwrap(), 4);
        assert_eq!(min_views_chow(2).unwrap(), 4);
        assert_eq!(min_views_chow(3).unwrap(), 6);
        assert_eq!(min_views_chow(4).unwrap(), 8);
        assert_eq!(chow_unknowns(2), 20);
        assert_eq!(chow_unknowns(3), 50);
        assert_eq!((chow_view_cap(2), chow_view_cap(3)), (5, 9));
        assert_eq!(dual_view_cap(4), 14);
        assert!(min_views_chow(1).is_err());
    }

    #[test]
    fn consistency_rows() {
        for d in 2..=4 {
            for m in [2, 4, 6] {
                assert!(consistency_report(d, m).unwrap().consistent, "d={d} m={m}");
            }
        }
        let r = consistency_report(3, 4).unwrap();
        assert_eq!((r.chow_views_from_counts, r.dual_views_from_counts), (6, 3));
    }

    #[test]
    fn cone_contains_curve_and_center() {
        let curve = preset_curve(Preset::TwistedCubic, 1);
        let cam = &cams(1, 1)[0];
        let f = implicit_image_curve(&curve, cam).unwrap();
        let k = cone(&f, cam).unwrap();
        assert_eq!((k.delta.num_vars(), k.delta.degree()), (4, 3));
        for th in sample_parameters(30, 0.2) {
            assert!(k.residual_at(&normalize4(&curve.point(th))) <= 1e-9);
        }
        assert!(k.residual_at(&cam.center()) <= 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let off = (0..20).filter(|_| k.residual_at(&random_point(&mut rng)) >= 1e-4).count();
        assert!(off >= 18);
    }

    #[test]
    fn triangulation_is_exact() {
        let c = cams(3, 2);
        let x = normalize4(&Point3::new(0.3, -0.2, 0.5, 1.0));
        let y = triangulate(&c[0], &c[0].project(&x), &c[1], &c[1].project(&x));
        assert!(linalg::projective_distance(x.as_slice(), y.as_slice()) < 1e-12);
    }

    #[test]
    fn sweep_splits_conic_and_cubic() {
        for (preset, d) in [(Preset::Conic, 2), (Preset::TwistedCubic, 3)] {
            let curve = preset_curve(preset, 4);
            let c = cams(4, 3);
            let f: Vec<_> = c.iter().map(|cam| implicit_image_curve(&curve, cam).unwrap()).collect();
            let truth = epipolar_sweep(&f[0], &f[1], &c[0], &c[1], 500, Classifier::GroundTruth(&curve)).unwrap();
            assert!(truth.planes.len() >= 50, "{} planes", truth.planes.len());
            assert!(truth.counts_match());
            assert!(truth.planes.iter().all(|p| p.candidates.len() == d * d));
            let blind = epipolar_sweep(&f[0], &f[1], &c[0], &c[1], 500, Classifier::ThirdView(&c[2], &f[2])).unwrap();
            assert_eq!(blind.planes.len(), truth.planes.len());
            for (a, b) in blind.planes.iter().zip(&truth.planes) {
                let la: Vec<bool> = a.candidates.iter().map(|c| c.true_component).collect();
                let lb: Vec<bool> = b.candidates.iter().map(|c| c.true_component).collect();
                assert_eq!(la, lb);
            }
        }
    }

    #[test]
    fn ideal_basis_vanishes_on_lines() {
        let ideal = grassmann_ideal_basis(3).unwrap();
        assert_eq!(ideal.nrows(), 6);
        let basis = MonomialBasis::new(6, 3);
        for l in random_lines(10, 5) {
            let row = DVector::from_vec(basis.evaluate(l.0.as_slice()).unwrap());
            assert!((&ideal * row).amax() < 1e-14);
        }
    }

    fn tangent_views(curve: &RationalCurve3D, c: &[Camera], n: usize) -> Vec<(Camera, Vec<Line2>)> {
        c.iter()
            .enumerate()
            .map(|(k, cam)| {
                let lines = crate::curves::sample_tangents(curve, cam, n, 0.1 * k as f64).into_iter().map(|(_, l)| l).collect();
                (*cam, lines)
            })
            .collect()
    }

    fn point_views(curve: &RationalCurve3D, c: &[Camera], n: usize) -> Vec<(Camera, Vec<Point2>)> {
        c.iter()
            .enumerate()
            .map(|(k, cam)| {
                let pts = sample_parameters(n, 0.13 * k as f64).iter().map(|&th| cam.project(&curve.point(th))).collect();
                (*cam, pts)
            })
            .collect()
    }

    #[test]
    fn dual_of_twisted_cubic_needs_five_views() {
        let curve = preset_curve(Preset::TwistedCubic, 8);
        let views = tangent_views(&curve, &cams(8, 5), 20);
        let dual = dual_reconstruct(&views, 4).unwrap();
        assert_eq!(dual.upsilon.coeffs().len(), 35);
        assert_eq!(dual.diagnostics.per_view_ranks, vec![14; 5]);
        let worst = tangent_planes(&curve, 50, 9).iter().map(|p| dual.residual_at(p)).fold(0.0, f64::max);
        assert!(worst <= 1e-7, "{worst:e}");
        for (k, rank) in [(2, 24), (3, 30), (4, 33)] {
            match dual_reconstruct(&views[..k], 4) {
                Err(Error::InsufficientRank { have, need, .. }) => assert_eq!((have, need), (rank, 34)),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn dual_of_conic_is_a_quadric_cone() {
        let curve = preset_curve(Preset::Conic, 10);
        let views = tangent_views(&curve, &cams(10, 3), 12);
        let dual = dual_reconstruct(&views, 2).unwrap();
        let worst = tangent_planes(&curve, 50, 11).iter().map(|p| dual.residual_at(p)).fold(0.0, f64::max);
        assert!(worst <= 1e-7, "{worst:e}");

        let basis = dual.upsilon.basis().clone();
        let mut q = Matrix4::zeros();
        for (e, c) in basis.exponents().iter().zip(dual.upsilon.coeffs()) {
            let idx: Vec<usize> = (0..4).flat_map(|i| std::iter::repeat_n(i, e[i] as usize)).collect();
            if idx[0] == idx[1] {
                q[(idx[0], idx[0])] = *c;
            } else {
                q[(idx[0], idx[1])] = c / 2.0;
                q[(idx[1], idx[0])] = c / 2.0;
            }
        }
        let sv = linalg::singular_values(&DMatrix::from_column_slice(4, 4, q.as_slice()));
        assert!(sv[3] < 1e-9 * sv[0] && sv[2] > 1e-3 * sv[0], "{sv:?}");
        let plane = linalg::right_singular(&curve.coefficient_matrix().transpose()).1.column(3).into_owned();
        assert!((DMatrix::from_column_slice(4, 4, q.as_slice()) * plane).norm() < 1e-9);

        assert!(matches!(dual_reconstruct(&views[..2], 2), Err(Error::InsufficientRank { have: 8, need: 9, .. })));
    }

    #[test]
    fn chow_of_conic_needs_five_views() {
        let curve = preset_curve(Preset::Conic, 12);
        let c = cams(12, 5);
        let g = chow_reconstruct(&point_views(&curve, &c, 20), 2).unwrap();
        assert_eq!(g.diagnostics.per_view_ranks, vec![5; 5]);
        assert_eq!(g.diagnostics.unknowns, 20);
        assert!(g.ideal_orthogonality().unwrap() <= 1e-10);
        let meet = meeting_lines(&curve, 50, 13).iter().map(|l| g.residual_at(l)).fold(0.0, f64::max);
        assert!(meet <= 1e-8, "{meet:e}");
        let miss: Vec<f64> = random_lines(100, 14).iter().map(|l| g.residual_at(l)).collect();
        assert!(median(&miss) >= 1e-3, "{}", median(&miss));
        for (k, rank) in [(3, 14), (4, 17)] {
            match chow_reconstruct(&point_views(&curve, &c[..k], 20), 2) {
                Err(Error::InsufficientRank { have, need, .. }) => assert_eq!((have, need), (rank, 19)),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn chow_of_twisted_cubic_needs_eight_views() {
        let curve = preset_curve(Preset::TwistedCubic, 15);
        let c = cams(15, 8);
        let g = chow_reconstruct(&point_views(&curve, &c, 20), 3).unwrap();
        assert_eq!(g.diagnostics.per_view_ranks, vec![9; 8]);
        assert_eq!(g.diagnostics.unknowns, 50);
        let meet = meeting_lines(&curve, 50, 16).iter().map(|l| g.residual_at(l)).fold(0.0, f64::max);
        assert!(meet <= 1e-8, "{meet:e}");
        let miss: Vec<f64> = random_lines(100, 17).iter().map(|l| g.residual_at(l)).collect();
        assert!(median(&miss) >= 1e-3, "{}", median(&miss));
        assert!(g.ideal_orthogonality().unwrap() <= 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(18);
        assert!(chow_membership(&g, &curve.point(0.7), 5, &mut rng).unwrap());
        let off = (0..100).filter(|_| chow_membership(&g, &random_point(&mut rng), 3, &mut rng).unwrap()).count();
        assert_eq!(off, 0);

        for (k, rank) in [(6, 44), (7, 48)] {
            match chow_reconstruct(&point_views(&curve, &c[..k], 20), 3) {
                Err(Error::InsufficientRank { have, need, .. }) => assert_eq!((have, need), (rank, 49)),
                other => panic!("{other:?}"),
            }
        }
    }
}

//! Generalized Kruppa constraints between two dual image curves.
//!
//! For a space curve seen by two cameras, the dual image curves satisfy
//! `φ₂(F p) = λ φ₁([e₁]× p)` for all `p`. Both sides only depend on `p`
//! modulo `e₁`, so restricting to one probe line not through `e₁` and
//! eliminating `λ` by cross differences leaves `m` scalar conditions on
//! `(e₁, F, e₂)`.

use nalgebra::{Complex, DMatrix, DVector, Matrix2, Matrix3, Matrix3x2, Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cameras::{normalize4, normalize_matrix, Camera, EpipolarGeometry, Point2, Point3, PluckerLine};
use crate::curves::RationalCurve3D;
use crate::linalg::{self, binary_form_eval, cross_matrix, normalize3, right_singular};
use crate::poly::{restrict_to_line, HomogeneousPolynomial, MonomialBasis};
use crate::{Error, Result};

/// Probe lines tried before giving up on an instance.
pub const PROBE_RETRIES: usize = 5;
/// Central-difference step of the Jacobian.
pub const FD_STEP: f64 = 1e-6;
/// Relative singular-value threshold for rank decisions.
pub const RANK_THRESHOLD: f64 = 1e-7;
/// Minimum separation, in multiples of the threshold, for a rank decision.
pub const GAP_RATIO: f64 = 10.0;
/// Probe lines per instance in the dimension estimate; each term's Jacobian
/// block is scaled to unit norm before the rank decision.
pub const DIMENSION_PROBES: usize = 16;
/// Dimension of the variety of epipolar geometries.
pub const EPIPOLAR_DIM: usize = 7;

/// One curve seen in both images, with the shared two-view geometry.
#[derive(Debug, Clone)]
pub struct KruppaInstance {
    pub phi1: HomogeneousPolynomial,
    pub phi2: HomogeneousPolynomial,
    pub eg: EpipolarGeometry,
}

impl KruppaInstance {
    pub fn new(phi1: HomogeneousPolynomial, phi2: HomogeneousPolynomial, eg: EpipolarGeometry) -> Result<Self> {
        if phi1.num_vars() != 3 || phi2.num_vars() != 3 {
            return Err(Error::InvalidArgument("dual curves must be ternary forms".into()));
        }
        if phi1.degree() != phi2.degree() {
            return Err(Error::DimensionMismatch {
                expected: phi1.degree(),
                got: phi2.degree(),
            });
        }
        Ok(Self { phi1, phi2, eg })
    }

    pub fn class(&self) -> usize {
        self.phi1.degree()
    }

    /// `γ`: a point to its epipolar line through `e₁`.
    pub fn gamma(&self) -> Matrix3<f64> {
        cross_matrix(&self.eg.e1)
    }

    /// `ξ`: a point to its epipolar line in image 2.
    pub fn xi(&self) -> Matrix3<f64> {
        self.eg.f
    }

    pub fn with_geometry(&self, eg: EpipolarGeometry) -> Self {
        Self {
            eg,
            ..self.clone()
        }
    }
}

/// A line of the first image, given by two of its points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeLine {
    pub a: Point2,
    pub b: Point2,
}

impl ProbeLine {
    pub fn line(&self) -> Vector3<f64> {
        self.a.cross(&self.b)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut draw = || Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
        Self { a: draw(), b: draw() }
    }
}

/// Both sides of the Kruppa identity restricted to the probe line, each
/// scaled to unit coefficient norm: `(φ₁∘γ, φ₂∘ξ)`.
pub fn restricted_forms(
    phi1: &HomogeneousPolynomial,
    phi2: &HomogeneousPolynomial,
    e1: &Point2,
    f: &Matrix3<f64>,
    probe: &ProbeLine,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = cross_matrix(e1);
    let side = |phi: &HomogeneousPolynomial, m: &Matrix3<f64>| -> Result<Vec<f64>> {
        let (a, b) = (m * probe.a, m * probe.b);
        let q = restrict_to_line(phi, a.as_slice(), b.as_slice()).map_err(|e| Error::InvalidProbe(e.to_string()))?;
        let n = q.coeff_norm();
        let scale = (a.norm_squared() + b.norm_squared()).sqrt().powi(phi.degree() as i32);
        if !(n > 1e-12 * phi.coeff_norm() * scale) {
            return Err(Error::InvalidProbe("restricted form vanishes identically".into()));
        }
        let m = q.coeffs().len() - 1;
        // scaled coefficients c_k / √C(m, k), invariant under rotations of the pencil chart
        let mut binom = 1.0f64;
        let scaled: Vec<f64> = q
            .coeffs()
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let v = c / binom.sqrt();
                binom = binom * (m - k) as f64 / (k + 1) as f64;
                v
            })
            .collect();
        let n = scaled.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(scaled.iter().map(|c| c / n).collect())
    };
    Ok((side(phi1, &g)?, side(phi2, f)?))
}

/// The `m` cross differences `g2ᵢ g1ₖ − g2ₖ g1ᵢ`, `i ≠ k`.
pub fn cross_differences(g1: &[f64], g2: &[f64], pivot: usize) -> Vec<f64> {
    (0..g1.len())
        .filter(|&i| i != pivot)
        .map(|i| g2[i] * g1[pivot] - g2[pivot] * g1[i])
        .collect()
}

fn pivot_of(g: &[f64]) -> usize {
    g.iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// λ-eliminated constraint vector (length `m`) on one probe line.
pub fn gen_kruppa_constraints(inst: &KruppaInstance, probe: &ProbeLine) -> Result<DVector<f64>> {
    let (g1, g2) = restricted_forms(&inst.phi1, &inst.phi2, &inst.eg.e1, &inst.eg.f, probe)?;
    Ok(DVector::from_vec(cross_differences(&g1, &g2, pivot_of(&g1))))
}

/// Draws probe lines until one is valid for the instance: it must keep
/// clear of `e₁` and give nonzero restricted forms.
pub fn choose_probe<R: Rng + ?Sized>(inst: &KruppaInstance, rng: &mut R) -> Result<ProbeLine> {
    let e1 = inst.eg.e1.normalize();
    let mut last = String::from("no probe drawn");
    for _ in 0..PROBE_RETRIES {
        let probe = ProbeLine::random(rng);
        let l = probe.line();
        if l.norm() < 1e-3 || l.normalize().dot(&e1).abs() < 0.05 {
            last = "probe line passes too close to e1".into();
            continue;
        }
        match restricted_forms(&inst.phi1, &inst.phi2, &inst.eg.e1, &inst.eg.f, &probe) {
            Ok((g1, _)) => return Ok(spread_roots(probe, &g1)),
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::InvalidProbe(format!("{PROBE_RETRIES} probe lines rejected: {last}")))
}

/// Reparametrizes the probe line so that the roots of `g1` (the epipolar
/// tangents) are centred at 0 with unit spread in the pencil chart.
fn spread_roots(probe: ProbeLine, g1: &[f64]) -> ProbeLine {
    let (use_u, roots) = linalg::chart_roots(g1);
    if roots.is_empty() || roots.iter().any(|(re, im)| !re.is_finite() || !im.is_finite()) {
        return probe;
    }
    let n = roots.len() as f64;
    let c = roots.iter().map(|r| r.0).sum::<f64>() / n;
    let w = (roots.iter().map(|r| (r.0 - c).powi(2) + r.1 * r.1).sum::<f64>() / n).sqrt();
    if !(w > 1e-12) {
        return probe;
    }
    let (a, b) = if use_u {
        // p = a + z b with z = c + w z'
        (probe.a + probe.b * c, probe.b * w)
    } else {
        // p = z a + b with z = c + w z'
        (probe.a * w, probe.a * c + probe.b)
    };
    let k = a.norm().max(b.norm());
    ProbeLine { a: a / k, b: b / k }
}

/// Constraint norm at the instance's own geometry with a seeded probe.
pub fn constraint_norm(inst: &KruppaInstance, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = choose_probe(inst, &mut rng)?;
    Ok(gen_kruppa_constraints(inst, &probe)?.norm())
}

/// Checks that both restricted sides are proportional with one `λ`.
pub fn sides_proportional(inst: &KruppaInstance, probe: &ProbeLine, tol: f64) -> Result<(bool, f64)> {
    let (g1, g2) = restricted_forms(&inst.phi1, &inst.phi2, &inst.eg.e1, &inst.eg.f, probe)?;
    crate::poly::proportional(&g2, &g1, tol)
}

/// Normalized residual of `[e₁]×ᵀ C₁* [e₁]× ≅ Fᵀ C₂* F`.
pub fn classical_kruppa_residual(eg: &EpipolarGeometry, c1: &Matrix3<f64>, c2: &Matrix3<f64>) -> Result<f64> {
    let adj = |c: &Matrix3<f64>| -> Result<Matrix3<f64>> {
        let sv = c.svd(false, false).singular_values;
        if sv.min() <= 1e-12 * sv.max() {
            return Err(Error::Degenerate("singular conic".into()));
        }
        Ok(c.try_inverse().expect("nonsingular"))
    };
    let (a1, a2) = (adj(c1)?, adj(c2)?);
    let g = cross_matrix(&eg.e1);
    let lhs = g.transpose() * a1 * g;
    let rhs = eg.f.transpose() * a2 * eg.f;
    let (na, nb) = (lhs.norm(), rhs.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("Kruppa side vanishes".into()));
    }
    let (lhs, rhs) = (lhs / na, rhs / nb);
    Ok((lhs - rhs).norm().min((lhs + rhs).norm()))
}

/// `F` moved by `rel` (relative Frobenius norm) in a random direction.
pub fn perturb_fundamental<R: Rng + ?Sized>(eg: &EpipolarGeometry, rel: f64, rng: &mut R) -> EpipolarGeometry {
    let f = eg.f / eg.f.norm();
    let dir = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    EpipolarGeometry {
        f: f + dir * (rel / dir.norm()),
        ..*eg
    }
}

/// The epipolar tangency points of a curve.
#[derive(Debug, Clone)]
pub struct TangencyData {
    pub parameters: Vec<f64>,
    pub q1: Vec<Point2>,
    pub q2: Vec<Point2>,
    pub space_points: Vec<Point3>,
    pub baseline: PluckerLine,
    /// Class of the image curves, the number of tangencies over ℂ.
    pub expected: usize,
    /// Sign changes of the tangency condition on a dense scan of `P¹`.
    pub scan_sign_changes: usize,
}

impl TangencyData {
    pub fn real_count(&self) -> usize {
        self.space_points.len()
    }

    /// Tangencies that are not real.
    pub fn deficit(&self) -> usize {
        self.expected - self.real_count()
    }
}

/// Coefficients of `det[O₁, O₂, X_t, X_s]`, whose roots are the parameters
/// where an epipolar plane touches the curve; degree `2d − 2`.
pub fn tangency_form(curve: &RationalCurve3D, o1: &Point3, o2: &Point3) -> Vec<f64> {
    let c = curve.coeffs();
    let d = curve.degree();
    let xt: Vec<_> = (0..d).map(|i| c[i] * (d - i) as f64).collect();
    let xs: Vec<_> = (0..d).map(|i| c[i + 1] * (i + 1) as f64).collect();
    let mut out = vec![0.0; 2 * d - 1];
    for (i, a) in xt.iter().enumerate() {
        for (j, b) in xs.iter().enumerate() {
            out[i + j] += Matrix4::from_columns(&[*o1, *o2, *a, *b]).determinant();
        }
    }
    out
}

/// Parameters where an epipolar plane of the pair is tangent to the curve,
/// with their images and space points.
pub fn tangency_points(curve: &RationalCurve3D, cam1: &Camera, cam2: &Camera) -> Result<TangencyData> {
    let (o1, o2) = (normalize4(&cam1.center()), normalize4(&cam2.center()));
    let baseline = PluckerLine::join(&o1, &o2);
    let form = tangency_form(curve, &o1, &o2);
    let roots = linalg::binary_form_roots(&form)?;
    if roots.min_separation < 1e-7 {
        return Err(Error::NonGeneric("an epipolar plane is tangent to the curve twice".into()));
    }
    let scan = 2000;
    let vals: Vec<f64> = (0..=scan)
        .map(|i| {
            let th = std::f64::consts::PI * i as f64 / scan as f64;
            binary_form_eval(&form, th.cos(), th.sin())
        })
        .collect();
    // the form has odd or even parity under (t, s) → (−t, −s), so the scan
    // closes up at θ = π with sign (−1)^m = +1
    let scan_sign_changes = vals.windows(2).filter(|w| w[0] * w[1] < 0.0).count();

    let mut parameters: Vec<f64> = roots
        .real
        .iter()
        .map(|[t, s]| s.atan2(*t).rem_euclid(std::f64::consts::PI))
        .collect();
    parameters.sort_by(f64::total_cmp);
    let space_points: Vec<Point3> = parameters.iter().map(|&th| normalize4(&curve.point(th))).collect();
    Ok(TangencyData {
        q1: space_points.iter().map(|x| normalize3(&cam1.project(x))).collect(),
        q2: space_points.iter().map(|x| normalize3(&cam2.project(x))).collect(),
        parameters,
        space_points,
        baseline,
        expected: form.len() - 1,
        scan_sign_changes,
    })
}

/// Whether some quadric contains the line and all `points`: the
/// `(3 + n) × 10` incidence matrix has a null vector.
pub fn quadric_through_line_and_points(line: &PluckerLine, points: &[Point3]) -> bool {
    let (a, b) = line.points();
    let mut all: Vec<Point3> = vec![a, b, a + b];
    all.extend_from_slice(points);
    let basis = MonomialBasis::new(4, 2);
    let rows: Vec<Vec<f64>> = all
        .iter()
        .map(|p| basis.evaluate(normalize4(p).as_slice()).expect("4 coordinates"))
        .collect();
    if rows.len() < basis.len() {
        return true;
    }
    let m = DMatrix::from_fn(rows.len(), basis.len(), |r, c| rows[r][c]);
    let sv = linalg::singular_values(&m);
    sv[basis.len() - 1] <= 1e-9 * sv[0]
}

/// Quadric test for the baseline and the tangency points.
pub fn quadric_degeneracy(td: &TangencyData) -> bool {
    quadric_through_line_and_points(&td.baseline, &td.space_points)
}

/// All epipolar tangency points over ℂ, as complex points of `P³`, unit norm.
pub fn complex_tangencies(curve: &RationalCurve3D, o1: &Point3, o2: &Point3) -> Vec<[Complex<f64>; 4]> {
    let form = tangency_form(curve, o1, o2);
    let (use_u, roots) = linalg::chart_roots(&form);
    let one = Complex::new(1.0, 0.0);
    let d = curve.degree();
    roots
        .into_iter()
        .map(|(re, im)| {
            let z = Complex::new(re, im);
            let (t, s) = if use_u { (one, z) } else { (z, one) };
            let mut x = [Complex::new(0.0, 0.0); 4];
            for (k, c) in curve.coeffs().iter().enumerate() {
                let w = t.powu((d - k) as u32) * s.powu(k as u32);
                for j in 0..4 {
                    x[j] += w * c[j];
                }
            }
            let n = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            x.map(|v| v / n)
        })
        .collect()
}

/// Dimension of the linear space of quadrics containing the baseline and
/// every tangency point over ℂ. At the true geometry this is the dimension
/// of the tangent space of the solution variety, so it predicts
/// [`solution_dimension`] without differentiating the constraints.
pub fn quadric_dimension(curves: &[RationalCurve3D], cam1: &Camera, cam2: &Camera) -> usize {
    let (o1, o2) = (normalize4(&cam1.center()), normalize4(&cam2.center()));
    let (a, b) = PluckerLine::join(&o1, &o2).points();
    let basis = MonomialBasis::new(4, 2);
    let mut rows: Vec<Vec<f64>> = [a, b, a + b]
        .iter()
        .map(|p| basis.evaluate(normalize4(p).as_slice()).expect("4 coordinates"))
        .collect();
    for curve in curves {
        for x in complex_tangencies(curve, &o1, &o2) {
            let mono: Vec<Complex<f64>> = basis
                .exponents()
                .iter()
                .map(|e| (0..4).map(|i| x[i].powu(e[i])).product())
                .collect();
            // a conjugate pair contributes the real and imaginary parts of one member;
            // the phase of x is fixed by the root chart, so the pairs are exact conjugates
            let im = mono.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
            if im <= 1e-9 {
                rows.push(mono.iter().map(|v| v.re).collect());
            } else if mono.iter().map(|v| v.im).find(|v| v.abs() > 1e-9).unwrap_or(0.0) > 0.0 {
                rows.push(mono.iter().map(|v| v.re).collect());
                rows.push(mono.iter().map(|v| v.im).collect());
            }
        }
    }
    let m = DMatrix::from_fn(rows.len(), basis.len(), |r, c| rows[r][c]);
    let sv = linalg::singular_values(&m);
    let rank = sv.iter().filter(|&&v| v > 1e-9 * sv[0]).count();
    basis.len() - rank
}

/// Orthonormal basis of the plane orthogonal to `v`.
fn complement(v: &Vector3<f64>) -> Matrix3x2<f64> {
    let m = DMatrix::from_row_slice(1, 3, v.as_slice());
    let (_, basis) = right_singular(&m);
    Matrix3x2::from_columns(&[
        Vector3::from_iterator(basis.column(1).iter().copied()),
        Vector3::from_iterator(basis.column(2).iter().copied()),
    ])
}

/// A 7-dimensional chart of rank-2 fundamental matrices (up to scale)
/// centred at a given geometry: two coordinates per epipole and three for
/// the remaining `2×2` core `K` in `F = B₂ K B₁ᵀ`.
#[derive(Debug, Clone)]
pub struct EpipolarChart {
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    b1: Matrix3x2<f64>,
    b2: Matrix3x2<f64>,
    k0: Matrix2<f64>,
    k_dirs: [Matrix2<f64>; 3],
}

impl EpipolarChart {
    pub fn at(eg: &EpipolarGeometry) -> Result<Self> {
        let e1 = eg.e1.normalize();
        let e2 = eg.e2.normalize();
        let (b1, b2) = (complement(&e1), complement(&e2));
        let f = eg.f / eg.f.norm();
        let k0 = b2.transpose() * f * b1;
        let kn = k0.norm();
        if kn < 1e-6 {
            return Err(Error::Degenerate("F is inconsistent with its epipoles".into()));
        }
        let k0 = k0 / kn;
        let m = DMatrix::from_row_slice(1, 4, k0.as_slice());
        let (_, v) = right_singular(&m);
        let dir = |i: usize| Matrix2::from_column_slice(v.column(i).as_slice());
        Ok(Self {
            e1,
            e2,
            b1,
            b2,
            k0,
            k_dirs: [dir(1), dir(2), dir(3)],
        })
    }

    pub fn geometry(&self, x: &[f64]) -> EpipolarGeometry {
        let e1 = (self.e1 + self.b1 * nalgebra::Vector2::new(x[0], x[1])).normalize();
        let e2 = (self.e2 + self.b2 * nalgebra::Vector2::new(x[2], x[3])).normalize();
        let p1 = Matrix3::identity() - e1 * e1.transpose();
        let p2 = Matrix3::identity() - e2 * e2.transpose();
        let k = self.k0 + self.k_dirs[0] * x[4] + self.k_dirs[1] * x[5] + self.k_dirs[2] * x[6];
        let f = (p2 * self.b2) * k * (p1 * self.b1).transpose();
        EpipolarGeometry { f: f / f.norm(), e1, e2 }
    }
}

/// Stacked constraints of several instances with frozen probes and pivots.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    terms: Vec<(HomogeneousPolynomial, HomogeneousPolynomial, ProbeLine, usize)>,
}

impl ConstraintSystem {
    pub fn new(instances: &[KruppaInstance], at: &EpipolarGeometry, seed: u64) -> Result<Self> {
        Self::with_probes(instances, at, seed, 1)
    }

    /// One term per instance and probe line, `probes` lines per instance.
    pub fn with_probes(instances: &[KruppaInstance], at: &EpipolarGeometry, seed: u64, probes: usize) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Empty("no Kruppa instances"));
        }
        if probes == 0 {
            return Err(Error::InvalidArgument("at least one probe line".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = Vec::with_capacity(instances.len() * probes);
        for _ in 0..probes {
            for inst in instances {
                let inst = inst.with_geometry(*at);
                let probe = choose_probe(&inst, &mut rng)?;
                let (g1, _) = restricted_forms(&inst.phi1, &inst.phi2, &at.e1, &at.f, &probe)?;
                terms.push((inst.phi1, inst.phi2, probe, pivot_of(&g1)));
            }
        }
        Ok(Self { terms })
    }

    /// Row count of each term, in stacking order.
    pub fn term_rows(&self) -> Vec<usize> {
        self.terms.iter().map(|t| t.0.degree()).collect()
    }

    /// `Σ m` over the instances.
    pub fn len(&self) -> usize {
        self.terms.iter().map(|t| t.0.degree()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, eg: &EpipolarGeometry) -> Result<DVector<f64>> {
        let mut out = Vec::with_capacity(self.len());
        for (phi1, phi2, probe, pivot) in &self.terms {
            let (g1, g2) = restricted_forms(phi1, phi2, &eg.e1, &eg.f, probe)?;
            out.extend(cross_differences(&g1, &g2, *pivot));
        }
        Ok(DVector::from_vec(out))
    }

    /// Central-difference Jacobian in the chart centred at `chart`.
    pub fn jacobian(&self, chart: &EpipolarChart) -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(self.len(), EPIPOLAR_DIM);
        for k in 0..EPIPOLAR_DIM {
            let mut x = [0.0; EPIPOLAR_DIM];
            x[k] = FD_STEP;
            let plus = self.eval(&chart.geometry(&x))?;
            x[k] = -FD_STEP;
            let minus = self.eval(&chart.geometry(&x))?;
            j.set_column(k, &((plus - minus) / (2.0 * FD_STEP)));
        }
        Ok(j)
    }
}

/// Local dimension of the solution set of the stacked constraints.
#[derive(Debug, Clone)]
pub struct DimensionEstimate {
    pub dimension: usize,
    pub rank: usize,
    pub total_constraints: usize,
    pub singular_values: Vec<f64>,
    /// Separation of the rank decision from the threshold, as a multiple of
    /// it on the closer side.
    pub gap_ratio: f64,
    pub indeterminate: bool,
}

/// `7 − rank J` at the true geometry, `J` the Jacobian of all stacked
/// constraints in a chart of the epipolar variety.
pub fn solution_dimension(instances: &[KruppaInstance], eg_truth: &EpipolarGeometry) -> Result<DimensionEstimate> {
    solution_dimension_seeded(instances, eg_truth, 0)
}

pub fn solution_dimension_seeded(
    instances: &[KruppaInstance],
    eg_truth: &EpipolarGeometry,
    seed: u64,
) -> Result<DimensionEstimate> {
    let system = ConstraintSystem::with_probes(instances, eg_truth, seed, DIMENSION_PROBES)?;
    let chart = EpipolarChart::at(eg_truth)?;
    let mut j = system.jacobian(&chart)?;
    let mut start = 0;
    for rows in system.term_rows() {
        let n = j.rows(start, rows).norm();
        if n > 0.0 {
            j.rows_mut(start, rows).unscale_mut(n);
        }
        start += rows;
    }
    let sv = linalg::singular_values(&j);
    let threshold = RANK_THRESHOLD * sv[0];
    let rank = linalg::numerical_rank(&sv, RANK_THRESHOLD);
    let above = if rank > 0 { sv[rank - 1] / threshold } else { f64::INFINITY };
    let below = sv.get(rank).map_or(f64::INFINITY, |&s| threshold / s.max(f64::MIN_POSITIVE));
    let gap_ratio = above.min(below);
    Ok(DimensionEstimate {
        dimension: EPIPOLAR_DIM.saturating_sub(rank),
        rank,
        total_constraints: system.len(),
        singular_values: sv,
        gap_ratio,
        indeterminate: gap_ratio < GAP_RATIO,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RefineOptions {
    pub max_iterations: usize,
    /// Iteration stops once the constraint norm falls below this.
    pub tol: f64,
    /// Residuals above this at termination are failures.
    pub fail_above: f64,
    pub seed: u64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tol: 1e-12,
            fail_above: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub eg: EpipolarGeometry,
    pub iterations: usize,
    pub initial_residual: f64,
    pub residual: f64,
    /// `Σ m < 7`: the solution set is positive dimensional.
    pub underdetermined: bool,
}

/// Levenberg–Marquardt on the stacked constraints, re-centring the chart
/// at every accepted step.
pub fn refine_epipolar(
    eg_init: &EpipolarGeometry,
    instances: &[KruppaInstance],
    opts: RefineOptions,
) -> Result<Refinement> {
    let init = EpipolarGeometry::from_f(&eg_init.f)?;
    let system = ConstraintSystem::new(instances, &init, opts.seed)?;
    let underdetermined = system.len() < EPIPOLAR_DIM;
    let mut eg = init;
    let mut r = system.eval(&eg)?;
    let initial_residual = r.norm();
    let mut mu = 1e-3;
    let mut iterations = 0;
    while r.norm() > opts.tol && iterations < opts.max_iterations {
        let chart = EpipolarChart::at(&eg)?;
        let j = system.jacobian(&chart)?;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut improved = false;
        while mu < 1e12 {
            let mut a = jtj.clone();
            for i in 0..EPIPOLAR_DIM {
                a[(i, i)] += mu * (jtj[(i, i)] + 1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                mu *= 10.0;
                continue;
            };
            let trial = chart.geometry(step.as_slice());
            let rt = system.eval(&trial)?;
            if rt.norm() < r.norm() {
                eg = trial;
                r = rt;
                mu = (mu / 10.0).max(1e-15);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        iterations += 1;
        if !improved {
            break;
        }
    }
    let residual = r.norm();
    if !residual.is_finite() || residual > opts.fail_above {
        return Err(Error::RefinementFailed { iterations, residual });
    }
    Ok(Refinement {
        eg: EpipolarGeometry {
            f: normalize_matrix(&eg.f),
            ..eg
        },
        iterations,
        initial_residual,
        residual,
        underdetermined,
    })
}

//! Projective cameras `P³ → P²` and the two-view algebra built on them.
//!
//! Plücker coordinates are ordered `(p01, p02, p03, p23, p31, p12)` with
//! `p_ij = P_i Q_j − P_j Q_i` for the line joining `P` and `Q`. The incidence
//! pairing swaps the two blocks of three:
//! `⟨L, L'⟩ = p01 p'23 + p02 p'31 + p03 p'12 + p23 p'01 + p31 p'02 + p12 p'03`,
//! and two lines meet iff their pairing vanishes. A line lies on the
//! Grassmann quadric iff `⟨L, L⟩ = 0`.

use nalgebra::{Matrix3, Matrix3x4, Matrix3x6, Matrix4, Matrix6x3, Vector3, Vector4, Vector6};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{cross_matrix, normalize3, normalize_homog};
use crate::{Error, Result};

pub type Point2 = Vector3<f64>;
pub type Line2 = Vector3<f64>;
pub type Point3 = Vector4<f64>;
pub type Plane3 = Vector4<f64>;

pub fn normalize4(v: &Vector4<f64>) -> Vector4<f64> {
    let n = normalize_homog(v.as_slice()).unwrap_or_else(|| vec![0.0; 4]);
    Vector4::from_column_slice(&n)
}

/// A line of `P³` in Plücker coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluckerLine(pub Vector6<f64>);

impl PluckerLine {
    pub fn from_slice(c: &[f64]) -> Self {
        Self(Vector6::from_column_slice(c))
    }

    /// Line through two points.
    pub fn join(p: &Point3, q: &Point3) -> Self {
        let c = |i: usize, j: usize| p[i] * q[j] - p[j] * q[i];
        Self(Vector6::new(c(0, 1), c(0, 2), c(0, 3), c(2, 3), c(3, 1), c(1, 2)))
    }

    /// Line common to two planes.
    pub fn meet(a: &Plane3, b: &Plane3) -> Self {
        // dual coordinates of the pencil, re-read in primal order
        let c = |i: usize, j: usize| a[i] * b[j] - a[j] * b[i];
        Self(Vector6::new(c(2, 3), c(3, 1), c(1, 2), c(0, 1), c(0, 2), c(0, 3)))
    }

    pub fn coords(&self) -> &Vector6<f64> {
        &self.0
    }

    /// The block swap `(p23, p31, p12, p01, p02, p03)`.
    pub fn swapped(&self) -> Vector6<f64> {
        swap_blocks(&self.0)
    }

    pub fn pairing(&self, other: &PluckerLine) -> f64 {
        self.swapped().dot(&other.0)
    }

    /// `⟨L, L⟩ / 2 = p01 p23 + p02 p31 + p03 p12`.
    pub fn quadric(&self) -> f64 {
        grassmann_quadric(&self.0)
    }

    /// Grassmann residual scaled by `‖L‖²`.
    pub fn quadric_residual(&self) -> f64 {
        let n2 = self.0.norm_squared();
        if n2 == 0.0 {
            return 0.0;
        }
        self.quadric().abs() / n2
    }

    /// Pairing scaled by both norms.
    pub fn normalized_pairing(&self, other: &PluckerLine) -> f64 {
        let d = self.0.norm() * other.0.norm();
        if d == 0.0 {
            return 0.0;
        }
        self.pairing(other).abs() / d
    }

    pub fn normalized(&self) -> Self {
        let n = normalize_homog(self.0.as_slice()).unwrap_or_else(|| vec![0.0; 6]);
        Self::from_slice(&n)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    /// Antisymmetric `L` with `L_ij = p_ij`; for `L = join(P, Q)` this is
    /// `P Qᵀ − Q Pᵀ`, and `L · Δ` is the point where the line meets plane `Δ`.
    pub fn primal_matrix(&self) -> Matrix4<f64> {
        let p = &self.0;
        let (p01, p02, p03, p23, p31, p12) = (p[0], p[1], p[2], p[3], p[4], p[5]);
        Matrix4::new(
            0.0, p01, p02, p03, //
            -p01, 0.0, p12, -p31, //
            -p02, -p12, 0.0, p23, //
            -p03, p31, -p23, 0.0,
        )
    }

    /// Antisymmetric `L*` whose kernel is the line: `L* · X = 0` for every
    /// point `X` on it.
    pub fn dual_matrix(&self) -> Matrix4<f64> {
        let p = &self.0;
        let (p01, p02, p03, p23, p31, p12) = (p[0], p[1], p[2], p[3], p[4], p[5]);
        Matrix4::new(
            0.0, p23, p31, p12, //
            -p23, 0.0, p03, -p02, //
            -p31, -p03, 0.0, p01, //
            -p12, p02, -p01, 0.0,
        )
    }

    /// Point where the line crosses a plane.
    pub fn meet_plane(&self, plane: &Plane3) -> Point3 {
        self.primal_matrix() * plane
    }

    /// Two distinct points spanning the line.
    pub fn points(&self) -> (Point3, Point3) {
        let lm = self.primal_matrix();
        // L·e_k is the intersection with coordinate plane k; take the two largest
        let mut cols: Vec<(f64, Point3)> = (0..4)
            .map(|k| {
                let c: Point3 = lm.column(k).into_owned();
                (c.norm(), c)
            })
            .collect();
        cols.sort_by(|a, b| b.0.total_cmp(&a.0));
        let a = cols[0].1.normalize();
        let mut b = cols[1].1;
        for (_, c) in cols.iter().skip(1) {
            let r = c - a * a.dot(c);
            if r.norm() > 1e-6 * c.norm() {
                b = r;
                break;
            }
        }
        (a, b.normalize())
    }
}

pub fn swap_blocks(v: &Vector6<f64>) -> Vector6<f64> {
    Vector6::new(v[3], v[4], v[5], v[0], v[1], v[2])
}

pub fn grassmann_quadric(p: &Vector6<f64>) -> f64 {
    p[0] * p[3] + p[1] * p[4] + p[2] * p[5]
}

/// Point common to three planes, scaled so that `x · meet3(a, b, c) = det[x; a; b; c]`.
pub fn meet3(a: &Plane3, b: &Plane3, c: &Plane3) -> Point3 {
    let rows = [a, b, c];
    let minor = |skip: usize| {
        let cols: Vec<usize> = (0..4).filter(|&k| k != skip).collect();
        let m = Matrix3::from_fn(|r, k| rows[r][cols[k]]);
        m.determinant()
    };
    Vector4::new(minor(0), -minor(1), minor(2), -minor(3))
}

/// Internal camera parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub f: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub skew: f64,
    #[serde(default)]
    pub u0: f64,
    #[serde(default)]
    pub v0: f64,
}

fn one() -> f64 {
    1.0
}

impl Intrinsics {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.f,
            self.skew,
            self.u0,
            0.0,
            self.alpha * self.f,
            self.v0,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// A full-rank `3×4` projection matrix, rows `Γᵀ, Λᵀ, Θᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    m: Matrix3x4<f64>,
}

impl Camera {
    pub fn new(m: Matrix3x4<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("camera matrix has non-finite entries".into()));
        }
        let sv = m.svd(false, false).singular_values;
        let (max, min) = (sv.max(), sv.min());
        if max == 0.0 || min <= 1e-12 * max {
            return Err(Error::RankDeficient("camera matrix must have rank 3".into()));
        }
        Ok(Self { m })
    }

    /// `M = K [R | t]`.
    pub fn from_parameters(k: &Intrinsics, r: &Matrix3<f64>, t: &Vector3<f64>) -> Result<Self> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        rt.set_column(3, t);
        Self::new(k.matrix() * rt)
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.m
    }

    /// Row `i` of `M` as a plane of `P³`.
    pub fn row_plane(&self, i: usize) -> Plane3 {
        self.m.row(i).transpose()
    }

    /// Unit-norm center `O` with `M O = 0`.
    pub fn center(&self) -> Point3 {
        normalize4(&meet3(&self.row_plane(0), &self.row_plane(1), &self.row_plane(2)))
    }

    pub fn project(&self, p: &Point3) -> Point2 {
        self.m * p
    }

    /// The `6×3` map `M̂` taking an image point to its optical ray.
    pub fn ray_matrix(&self) -> Matrix6x3<f64> {
        let (g, l, t) = (self.row_plane(0), self.row_plane(1), self.row_plane(2));
        let mut out = Matrix6x3::zeros();
        out.set_column(0, &PluckerLine::meet(&l, &t).0);
        out.set_column(1, &PluckerLine::meet(&t, &g).0);
        out.set_column(2, &PluckerLine::meet(&g, &l).0);
        out
    }

    /// Optical ray `L_p = x Λ∧Θ + y Θ∧Γ + z Γ∧Λ`.
    pub fn optical_ray(&self, p: &Point2) -> PluckerLine {
        PluckerLine(self.ray_matrix() * p)
    }

    /// `M̃ = M̂ᵀ`, acting on block-swapped (dual) Plücker coordinates.
    pub fn line_map(&self) -> Matrix3x6<f64> {
        self.ray_matrix().transpose()
    }

    /// Image of a space line. Lines through the center have no image line.
    pub fn line_image(&self, line: &PluckerLine) -> Result<Line2> {
        let l = self.line_map() * line.swapped();
        let scale = self.m.norm().powi(2) * line.0.norm();
        if l.norm() <= 1e-12 * scale {
            return Err(Error::Degenerate("line passes through the camera center".into()));
        }
        Ok(normalize3(&l))
    }

    /// Plane `Mᵀ l` spanned by the center and the image line `l`.
    pub fn plane_of_line(&self, l: &Line2) -> Plane3 {
        self.m.transpose() * l
    }

    /// RQ split of the left `3×3` block: returns `(K, R, t)` with `K` upper
    /// triangular, positive diagonal, `K[2,2] = 1`, and `M ≅ K [R | t]`.
    pub fn decompose(&self) -> Result<(Matrix3<f64>, Matrix3<f64>, Vector3<f64>)> {
        let a: Matrix3<f64> = self.m.fixed_view::<3, 3>(0, 0).into_owned();
        if a.determinant().abs() <= 1e-12 * a.norm().powi(3) {
            return Err(Error::RankDeficient("left 3x3 block is singular".into()));
        }
        // RQ via QR of the row-reversed transpose
        let p = Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
        let qr = (p * a).transpose().qr();
        let (q, r) = (qr.q(), qr.r());
        let mut k = p * r.transpose() * p;
        let mut rot = p * q.transpose();
        for i in 0..3 {
            if k[(i, i)] < 0.0 {
                let s = Matrix3::from_diagonal(&Vector3::from_fn(|j, _| if j == i { -1.0 } else { 1.0 }));
                k *= s;
                rot = s * rot;
            }
        }
        let scale = k[(2, 2)];
        let t = k.try_inverse().expect("nonsingular") * self.m.column(3);
        let (k, t) = (k / scale, t);
        // M = K_unscaled [R | t] = scale * K [R | t]
        Ok((k, rot, t))
    }

    /// Image `ω` of the absolute conic and its adjoint `ω*`.
    pub fn absolute_conic_image(&self) -> Result<AbsoluteConicImage> {
        let a: Matrix3<f64> = self.m.fixed_view::<3, 3>(0, 0).into_owned();
        let aat = a * a.transpose();
        let omega = aat
            .try_inverse()
            .filter(|_| a.determinant().abs() > 1e-12 * a.norm().powi(3))
            .ok_or_else(|| Error::RankDeficient("internal-parameter matrix is not invertible".into()))?;
        let omega = omega / omega.norm();
        let omega_star = aat / aat.norm();
        Ok(AbsoluteConicImage { omega, omega_star })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AbsoluteConicImage {
    /// `ω ≅ K⁻ᵀ K⁻¹`, unit Frobenius norm.
    pub omega: Matrix3<f64>,
    /// `ω* ≅ K Kᵀ`, unit Frobenius norm.
    pub omega_star: Matrix3<f64>,
}

/// Fundamental matrix and epipoles of an ordered camera pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpipolarGeometry {
    pub f: Matrix3<f64>,
    pub e1: Point2,
    pub e2: Point2,
}

impl EpipolarGeometry {
    /// Builds the triple from a (nearly) rank-2 `F`, reading the epipoles off
    /// its null vectors; `F` is projected to rank 2.
    pub fn from_f(f: &Matrix3<f64>) -> Result<Self> {
        let svd = f.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut s = svd.singular_values;
        let order = {
            let mut idx = [0usize, 1, 2];
            idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
            idx
        };
        if s[order[1]] <= 1e-12 * s[order[0]] {
            return Err(Error::RankDeficient("fundamental matrix has rank < 2".into()));
        }
        let smallest = order[2];
        s[smallest] = 0.0;
        let f2 = u * Matrix3::from_diagonal(&s) * v_t;
        let e1 = normalize3(&v_t.row(smallest).transpose());
        let e2 = normalize3(&u.column(smallest).into_owned());
        Ok(Self {
            f: normalize_matrix(&f2),
            e1,
            e2,
        })
    }

    /// The geometry of the swapped camera pair.
    pub fn reversed(&self) -> Self {
        Self {
            f: normalize_matrix(&self.f.transpose()),
            e1: self.e2,
            e2: self.e1,
        }
    }

    /// Max of `‖F e1‖` and `‖e2ᵀ F‖`, with `F` and epipoles unit-normalized.
    pub fn epipole_residual(&self) -> f64 {
        let f = self.f / self.f.norm();
        let a = (f * self.e1.normalize()).norm();
        let b = (self.e2.normalize().transpose() * f).norm();
        a.max(b)
    }

    /// `σ3 / σ1` of `F`.
    pub fn rank_ratio(&self) -> f64 {
        let sv = self.f.svd(false, false).singular_values;
        sv.min() / sv.max()
    }

    /// Epipolar line `F p` in the second image.
    pub fn epipolar_line(&self, p: &Point2) -> Line2 {
        self.f * p
    }
}

/// Frobenius-normalized copy with the first significant entry positive.
pub fn normalize_matrix(m: &Matrix3<f64>) -> Matrix3<f64> {
    let flat: Vec<f64> = m.transpose().iter().copied().collect();
    let n = normalize_homog(&flat).unwrap_or(flat);
    Matrix3::from_row_slice(&n)
}

/// `|cos|` between two matrices viewed as vectors.
pub fn matrix_cosine(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    crate::linalg::cosine_up_to_scale(a.as_slice(), b.as_slice())
}

/// Homography `H_Δ` transferring image-1 points of plane `Δ` to image 2.
pub fn homography(cam1: &Camera, cam2: &Camera, plane: &Plane3) -> Result<Matrix3<f64>> {
    let (o1, o2) = (cam1.center(), cam2.center());
    let pn = plane.norm();
    if pn == 0.0 {
        return Err(Error::ZeroVector("plane"));
    }
    if plane.dot(&o1).abs() <= 1e-10 * pn || plane.dot(&o2).abs() <= 1e-10 * pn {
        return Err(Error::Degenerate("plane passes through a camera center".into()));
    }
    let (g, l, t) = (cam1.row_plane(0), cam1.row_plane(1), cam1.row_plane(2));
    let mut points = Matrix4::<f64>::zeros();
    points.set_column(0, &meet3(&l, &t, plane));
    points.set_column(1, &meet3(&t, &g, plane));
    points.set_column(2, &meet3(&g, &l, plane));
    let h = cam2.matrix() * points.fixed_view::<4, 3>(0, 0);
    Ok(normalize_matrix(&h))
}

/// Fundamental matrix `F = M̃₂ M̂₁` and epipoles `e1 = M₁O₂`, `e2 = M₂O₁`.
pub fn fundamental(cam1: &Camera, cam2: &Camera) -> Result<EpipolarGeometry> {
    let (o1, o2) = (cam1.center(), cam2.center());
    if PluckerLine::join(&o1, &o2).0.norm() <= 1e-10 {
        return Err(Error::Degenerate("camera centers coincide".into()));
    }
    let f = cam2.line_map() * swap_matrix() * cam1.ray_matrix();
    Ok(EpipolarGeometry {
        f: normalize_matrix(&f),
        e1: normalize3(&cam1.project(&o2)),
        e2: normalize3(&cam2.project(&o1)),
    })
}

/// The `6×6` block-swap matrix `J` with `⟨L, L'⟩ = Lᵀ J L'`.
pub fn swap_matrix() -> nalgebra::Matrix6<f64> {
    let mut j = nalgebra::Matrix6::zeros();
    for i in 0..3 {
        j[(i, i + 3)] = 1.0;
        j[(i + 3, i)] = 1.0;
    }
    j
}

/// A representative camera pair `([I | 0], [S | e2])` with `S = [e2]× F / ‖e2‖`.
pub fn canonical_pair(eg: &EpipolarGeometry) -> Result<(Camera, Camera)> {
    let first = Camera::new(Matrix3x4::identity())?;
    let s = cross_matrix(&eg.e2) * eg.f / eg.e2.norm();
    let mut m2 = Matrix3x4::zeros();
    m2.fixed_view_mut::<3, 3>(0, 0).copy_from(&s);
    m2.set_column(3, &eg.e2);
    Ok((first, Camera::new(m2)?))
}

/// Uniform random rotation from a random unit quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    let q = loop {
        let v: Vector4<f64> = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            break v / n;
        }
    };
    let uq = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    uq.to_rotation_matrix().into_inner()
}

/// Rotation whose third row (optical axis) points from `center` to `target`.
pub fn look_at(center: &Vector3<f64>, target: &Vector3<f64>, up_hint: &Vector3<f64>) -> Matrix3<f64> {
    let z = (target - center).normalize();
    let mut x = up_hint.cross(&z);
    if x.norm() < 1e-6 {
        x = Vector3::x().cross(&z);
    }
    let x = x.normalize();
    let y = z.cross(&x);
    Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}

/// A camera on a sphere of radius in `[r_min, r_max]` around the origin,
/// looking roughly at the origin, with normalized-image intrinsics.
pub fn random_camera<R: Rng + ?Sized>(rng: &mut R, r_min: f64, r_max: f64) -> Camera {
    loop {
        let dir = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if dir.norm() < 0.2 || dir.norm() > 1.0 {
            continue;
        }
        let c = dir.normalize() * rng.random_range(r_min..r_max);
        let target = Vector3::from_fn(|_, _| rng.random_range(-0.2..0.2));
        let up = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let r = look_at(&c, &target, &up);
        let k = Intrinsics {
            f: rng.random_range(0.8..1.2),
            alpha: rng.random_range(0.9..1.1),
            skew: rng.random_range(-0.05..0.05),
            u0: rng.random_range(-0.1..0.1),
            v0: rng.random_range(-0.1..0.1),
        };
        if let Ok(cam) = Camera::from_parameters(&k, &r, &(-(r * c))) {
            return cam;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_point(rng: &mut ChaCha8Rng) -> Point3 {
        Vector4::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            1.0,
        )
    }

    fn pair(rng: &mut ChaCha8Rng) -> (Camera, Camera) {
        (random_camera(rng, 3.0, 5.0), random_camera(rng, 3.0, 5.0))
    }

    /// All 4x4 minors of the 4x3 matrix [X | P | Q] vanish iff X is on PQ.
    fn on_line(x: &Point3, p: &Point3, q: &Point3) -> f64 {
        let m = nalgebra::Matrix4x3::from_columns(&[x.normalize(), p.normalize(), q.normalize()]);
        m.svd(false, false).singular_values.min()
    }

    #[test]
    fn plucker_conventions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (p, q, r, s) = (
            rand_point(&mut rng),
            rand_point(&mut rng),
            rand_point(&mut rng),
            rand_point(&mut rng),
        );
        let l = PluckerLine::join(&p, &q);
        assert!(l.quadric_residual() < 1e-15);
        // pairing of two joins is the 4x4 determinant
        let det = Matrix4::from_columns(&[p, q, r, s]).determinant();
        let pairing = l.pairing(&PluckerLine::join(&r, &s));
        assert!((pairing.abs() - det.abs()).abs() < 1e-12);
        // dual matrix annihilates the points of the line
        assert!((l.dual_matrix() * p).norm() < 1e-12);
        assert!((l.dual_matrix() * q).norm() < 1e-12);
        // meet of two planes through the line reproduces it
        let a: Plane3 = {
            let m = nalgebra::DMatrix::from_fn(2, 4, |i, j| if i == 0 { p[j] } else { q[j] });
            let n = crate::linalg::nullspace(&m, 1e-12);
            n.column(0).into_owned().fixed_rows::<4>(0).into_owned()
        };
        let b: Plane3 = {
            let m = nalgebra::DMatrix::from_fn(2, 4, |i, j| if i == 0 { p[j] } else { q[j] });
            let n = crate::linalg::nullspace(&m, 1e-12);
            n.column(1).into_owned().fixed_rows::<4>(0).into_owned()
        };
        let met = PluckerLine::meet(&a, &b);
        let cos = crate::linalg::cosine_up_to_scale(met.0.as_slice(), l.0.as_slice());
        assert!(cos > 1.0 - 1e-12);
        // the line meets a plane at a point of the line lying on the plane
        let pl = Vector4::new(0.3, -0.2, 0.9, 0.1);
        let x = l.meet_plane(&pl);
        assert!(x.dot(&pl).abs() < 1e-12);
        assert!(on_line(&x, &p, &q) < 1e-12);
        let (u, v) = l.points();
        assert!(on_line(&u, &p, &q) < 1e-12 && on_line(&v, &p, &q) < 1e-12);
    }

    #[test]
    fn center_examples() {
        let cam = Camera::new(Matrix3x4::identity()).unwrap();
        assert_eq!(cam.center(), Vector4::new(0.0, 0.0, 0.0, 1.0));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let m = Matrix3x4::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let cam = Camera::new(m).unwrap();
            assert!((m * cam.center()).norm() < 1e-12 * m.norm());
            // independent oracle: last right singular vector
            let full = nalgebra::DMatrix::from_row_slice(3, 4, m.transpose().as_slice());
            let ns = crate::linalg::nullspace(&full, 1e-12);
            let cos = crate::linalg::cosine_up_to_scale(ns.column(0).as_slice(), cam.center().as_slice());
            assert!(cos > 1.0 - 1e-12);
        }

        let c = Vector3::new(1.0, -2.0, 0.5);
        let r = random_rotation(&mut rng);
        let k = Intrinsics { f: 1.1, alpha: 1.0, skew: 0.0, u0: 0.1, v0: 0.0 };
        let cam = Camera::from_parameters(&k, &r, &(-(r * c))).unwrap();
        let o = cam.center();
        assert!((o.xyz() / o.w - c).norm() < 1e-12);

        let bad = Matrix3x4::new(1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0);
        assert!(Camera::new(bad).is_err());
    }

    #[test]
    fn optical_ray_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let cam = random_camera(&mut rng, 3.0, 5.0);
            let p3 = rand_point(&mut rng);
            let ray = cam.optical_ray(&cam.project(&p3));
            assert!(ray.quadric_residual() < 1e-14);
            assert!(ray.pairing(&ray).abs() < 1e-14 * ray.0.norm_squared());
            let (a, b) = ray.points();
            assert!(on_line(&p3, &a, &b) < 1e-10);
            assert!(on_line(&cam.center(), &a, &b) < 1e-10);
            let join = PluckerLine::join(&cam.center(), &p3);
            let cos = crate::linalg::cosine_up_to_scale(join.0.as_slice(), ray.0.as_slice());
            assert!(cos > 1.0 - 1e-12);
        }
    }

    #[test]
    fn line_image_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cam = random_camera(&mut rng, 3.0, 5.0);
        let ray = cam.optical_ray(&Vector3::new(0.1, 0.2, 1.0));
        assert!(cam.line_image(&ray).is_err());
        assert_eq!(cam.line_map(), cam.ray_matrix().transpose());
        for _ in 0..20 {
            let (p, q) = (rand_point(&mut rng), rand_point(&mut rng));
            let l = cam.line_image(&PluckerLine::join(&p, &q)).unwrap();
            let oracle = normalize3(&cam.project(&p).cross(&cam.project(&q)));
            assert!(crate::linalg::cosine_up_to_scale(l.as_slice(), oracle.as_slice()) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn plane_of_line_examples() {
        let cam = Camera::new(Matrix3x4::identity()).unwrap();
        assert_eq!(cam.plane_of_line(&Vector3::new(0.0, 0.0, 1.0)), Vector4::new(0.0, 0.0, 1.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let cam = random_camera(&mut rng, 3.0, 5.0);
            let l = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let plane = cam.plane_of_line(&l);
            assert!(plane.dot(&cam.center()).abs() < 1e-12 * plane.norm());
            // two points on l, back-projected: both rays lie in the plane
            let a = l.cross(&Vector3::new(0.3, 0.1, 1.0));
            let b = l.cross(&a);
            for p in [a, b] {
                let (u, v) = cam.optical_ray(&p).points();
                assert!(plane.dot(&u).abs() < 1e-10 * plane.norm());
                assert!(plane.dot(&v).abs() < 1e-10 * plane.norm());
            }
        }
    }

    #[test]
    fn homography_and_fundamental_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..30 {
            let (c1, c2) = pair(&mut rng);
            let plane = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let h = homography(&c1, &c2, &plane).unwrap();
            let eg = fundamental(&c1, &c2).unwrap();
            // transfer of points on the plane
            for _ in 0..20 {
                let x = rand_point(&mut rng);
                // project onto plane along a fixed direction
                let dir = Vector4::new(0.2, 0.7, -0.4, 0.0);
                let t = -plane.dot(&x) / plane.dot(&dir);
                let p = x + dir * t;
                let transferred = normalize3(&(h * c1.project(&p)));
                let direct = normalize3(&c2.project(&p));
                assert!(crate::linalg::projective_distance(transferred.as_slice(), direct.as_slice()) < 1e-9);
            }
            // H e1 ≅ e2
            let he1 = h * eg.e1;
            assert!(crate::linalg::cosine_up_to_scale(he1.as_slice(), eg.e2.as_slice()) > 1.0 - 1e-9);
            // Hᵀ F + Fᵀ H = 0
            let f = eg.f;
            let res = (h.transpose() * f + f.transpose() * h).norm() / (f.norm() * h.norm());
            assert!(res < 1e-9, "res = {res}");
            // F ≅ [e2]x H
            let fh = cross_matrix(&eg.e2) * h;
            assert!(matrix_cosine(&fh, &f) > 1.0 - 1e-9);
            // swap cameras
            let rev = fundamental(&c2, &c1).unwrap();
            assert!(matrix_cosine(&rev.f, &f.transpose()) > 1.0 - 1e-12);
        }
        let (c1, c2) = pair(&mut rng);
        let o1 = c1.center();
        let through = Vector4::new(1.0, 0.0, 0.0, -o1.x / o1.w);
        assert!(homography(&c1, &c2, &through).is_err());
        assert!(fundamental(&c1, &c1).is_err());
    }

    #[test]
    fn epipolar_constraint_on_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (c1, c2) = pair(&mut rng);
        let eg = fundamental(&c1, &c2).unwrap();
        assert!(eg.rank_ratio() < 1e-12);
        assert!(eg.epipole_residual() < 1e-12);
        for _ in 0..100 {
            let p = rand_point(&mut rng);
            let (p1, p2) = (c1.project(&p).normalize(), c2.project(&p).normalize());
            assert!((p2.transpose() * eg.f * p1)[0].abs() < 1e-10);
        }
    }

    #[test]
    fn canonical_pair_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let (c1, c2) = pair(&mut rng);
            let eg = fundamental(&c1, &c2).unwrap();
            let (n1, n2) = canonical_pair(&eg).unwrap();
            let eg2 = fundamental(&n1, &n2).unwrap();
            assert!(matrix_cosine(&eg2.f, &eg.f) >= 1.0 - 1e-9);
            assert!(crate::linalg::cosine_up_to_scale(eg2.e1.as_slice(), eg.e1.as_slice()) > 1.0 - 1e-9);
            // projective change of world frame leaves F unchanged
            let v = Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0)) + Matrix4::identity() * 2.0;
            let vi = v.try_inverse().unwrap();
            let t1 = Camera::new(c1.matrix() * vi).unwrap();
            let t2 = Camera::new(c2.matrix() * vi).unwrap();
            let eg3 = fundamental(&t1, &t2).unwrap();
            assert!(matrix_cosine(&eg3.f, &eg.f) >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn absolute_conic_examples() {
        let cam = Camera::new(Matrix3x4::identity()).unwrap();
        let w = cam.absolute_conic_image().unwrap();
        assert!((w.omega - Matrix3::identity() / 3f64.sqrt()).norm() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let cam = random_camera(&mut rng, 3.0, 5.0);
            let w = cam.absolute_conic_image().unwrap();
            // complex points (u + i v, 0) with u ⟂ v, |u| = |v| lie on X²+Y²+Z²=0
            let u = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
            let v = u.cross(&Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).normalize();
            let pu = cam.project(&u.push(0.0));
            let pv = cam.project(&v.push(0.0));
            let om = w.omega;
            let re = (pu.transpose() * om * pu)[0] - (pv.transpose() * om * pv)[0];
            let im = 2.0 * (pu.transpose() * om * pv)[0];
            let scale = pu.norm_squared() * om.norm();
            assert!(re.abs() < 1e-12 * scale && im.abs() < 1e-12 * scale);
            // ω ω* ≅ det(ω) I
            let prod = w.omega * w.omega_star;
            let id_cos = matrix_cosine(&prod, &Matrix3::identity());
            assert!(id_cos > 1.0 - 1e-12);
            let (k, r, _) = cam.decompose().unwrap();
            assert!((r * r.transpose() - Matrix3::identity()).norm() < 1e-12);
            let kinv = k.try_inverse().unwrap();
            let oracle = kinv.transpose() * kinv;
            assert!(matrix_cosine(&oracle, &w.omega) > 1.0 - 1e-12);
        }
        let singular = Matrix3x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0);
        let cam = Camera::new(singular).unwrap();
        assert!(cam.absolute_conic_image().is_err());
    }
}

//! Small numerical helpers shared by every module: projective normalization,
//! SVD-based rank and nullspace queries, and real roots of binary forms.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::{Error, Result};

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-7;

/// Normalizes a homogeneous vector to unit Euclidean norm with its first
/// significant coordinate positive. Returns `None` for the zero vector.
pub fn normalize_homog(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    let cutoff = 1e-12 * v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let sign = v
        .iter()
        .find(|x| x.abs() > cutoff)
        .map(|x| x.signum())
        .unwrap_or(1.0);
    Some(v.iter().map(|x| sign * x / norm).collect())
}

pub fn normalize3(v: &Vector3<f64>) -> Vector3<f64> {
    let n = normalize_homog(v.as_slice()).unwrap_or_else(|| vec![0.0; 3]);
    Vector3::from_column_slice(&n)
}

pub fn normalize_dvec(v: &DVector<f64>) -> DVector<f64> {
    let n = normalize_homog(v.as_slice()).unwrap_or_else(|| vec![0.0; v.len()]);
    DVector::from_vec(n)
}

/// |cos| of the angle between two vectors, i.e. similarity up to scale and sign.
pub fn cosine_up_to_scale(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).abs()
}

/// Distance between two projective points after unit normalization, taking
/// the closer of the two sign representatives.
pub fn projective_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (mut plus, mut minus) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x / na, y / nb);
        plus += (x - y) * (x - y);
        minus += (x + y) * (x + y);
    }
    plus.min(minus).sqrt()
}

/// Matrix of the cross product: `cross_matrix(v) * w == v.cross(&w)`.
pub fn cross_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.as_slice().to_vec()
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(sv: &[f64], rel_tol: f64) -> usize {
    let Some(&max) = sv.first() else { return 0 };
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Scales every nonzero row of `m` to unit Euclidean norm.
pub fn normalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
}

/// Full right-singular basis of `m`. Matrices with fewer rows than columns
/// are padded with zero rows so that the complete `V` is available.
/// Returns singular values (descending, length = ncols) and `V` (columns).
pub fn right_singular(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.ncols();
    let padded;
    let work = if m.nrows() < n {
        padded = {
            let mut p = DMatrix::zeros(n, n);
            p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
            p
        };
        &padded
    } else {
        m
    };
    let svd = work.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    (svd.singular_values.as_slice().to_vec(), v_t.transpose())
}

/// Right nullspace basis: the columns of `V` whose singular values fall below
/// `rel_tol * sigma_max`.
pub fn nullspace(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (sv, v) = right_singular(m);
    let rank = numerical_rank(&sv, rel_tol);
    v.columns(rank, v.ncols() - rank).into_owned()
}

/// Real projective roots `(x : y)` of the binary form
/// `sum_k c[k] x^(d-k) y^k`, each returned as a unit vector `(x, y)`.
#[derive(Debug, Clone)]
pub struct BinaryRoots {
    pub real: Vec<[f64; 2]>,
    /// Number of non-real roots (counted individually).
    pub complex: usize,
    /// Smallest angular separation between any two roots, real or not,
    /// measured on the chart that was used; small values flag tangency.
    pub min_separation: f64,
}

pub fn binary_form_eval(c: &[f64], x: f64, y: f64) -> f64 {
    let d = c.len() - 1;
    c.iter()
        .enumerate()
        .map(|(k, ck)| ck * x.powi((d - k) as i32) * y.powi(k as i32))
        .sum()
}

/// Roots of a binary form through the companion matrix of the better
/// conditioned affine chart, polished by Newton iteration.
pub fn binary_form_roots(c: &[f64]) -> Result<BinaryRoots> {
    if c.len() < 2 {
        return Err(Error::InvalidArgument("binary form of degree 0".into()));
    }
    let scale = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Err(Error::ZeroVector("binary form is identically zero"));
    }
    let (use_u, roots) = chart_roots(c);
    let asc: Vec<f64> = if use_u {
        c.to_vec()
    } else {
        c.iter().rev().copied().collect()
    };

    let mut min_sep = f64::INFINITY;
    for i in 0..roots.len() {
        for j in (i + 1)..roots.len() {
            let (a, b) = (roots[i], roots[j]);
            let sep = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
                / (1.0 + a.0.hypot(a.1)).max(1.0 + b.0.hypot(b.1));
            min_sep = min_sep.min(sep);
        }
    }

    let mut real = Vec::new();
    let mut complex = 0;
    for (re, im) in roots {
        if im.abs() > 1e-7 * (1.0 + re.abs()) {
            complex += 1;
            continue;
        }
        let r = polish_root(&asc, re);
        let (x, y) = if use_u { (1.0, r) } else { (r, 1.0) };
        let n = x.hypot(y);
        real.push([x / n, y / n]);
    }
    Ok(BinaryRoots {
        real,
        complex,
        min_separation: min_sep,
    })
}

/// All complex roots of a nonzero binary form on the better-conditioned
/// affine chart: `u = y/x` when the flag is true, `v = x/y` otherwise.
pub fn chart_roots(c: &[f64]) -> (bool, Vec<(f64, f64)>) {
    let d = c.len() - 1;
    // chart u = y/x uses leading coefficient c[d]; chart v = x/y uses c[0]
    let use_u = c[d].abs() >= c[0].abs();
    // polynomial coefficients in ascending powers of the chart variable
    let asc: Vec<f64> = if use_u {
        c.to_vec()
    } else {
        c.iter().rev().copied().collect()
    };
    let lead = asc[d];
    let mut comp = DMatrix::<f64>::zeros(d, d);
    for i in 1..d {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..d {
        comp[(i, d - 1)] = -asc[i] / lead;
    }
    let eig = comp.complex_eigenvalues();
    (use_u, eig.iter().map(|z| (z.re, z.im)).collect())
}

fn polish_root(asc: &[f64], mut r: f64) -> f64 {
    for _ in 0..8 {
        let (mut p, mut dp) = (0.0, 0.0);
        for &a in asc.iter().rev() {
            dp = dp * r + p;
            p = p * r + a;
        }
        if dp == 0.0 {
            break;
        }
        let step = p / dp;
        if !step.is_finite() {
            break;
        }
        r -= step;
        if step.abs() <= 1e-16 * (1.0 + r.abs()) {
            break;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_fixes_sign() {
        let n = normalize_homog(&[0.0, -3.0, 4.0]).unwrap();
        assert!((n[1] - 0.6).abs() < 1e-15 && (n[2] + 0.8).abs() < 1e-15);
        assert!(normalize_homog(&[0.0, 0.0]).is_none());
    }

    #[test]
    fn roots_of_product_of_lines() {
        // (x - 2y)(x + y)(3x - y) has roots (2:1), (-1:1), (1:3)
        // expand: (x^2 - xy - 2y^2)(3x - y) = 3x^3 - 4x^2 y - 5 x y^2 + 2 y^3
        let r = binary_form_roots(&[3.0, -4.0, -5.0, 2.0]).unwrap();
        assert_eq!(r.real.len(), 3);
        assert_eq!(r.complex, 0);
        for [x, y] in &r.real {
            assert!(binary_form_eval(&[3.0, -4.0, -5.0, 2.0], *x, *y).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_roots_are_counted() {
        // x^2 + y^2
        let r = binary_form_roots(&[1.0, 0.0, 1.0]).unwrap();
        assert!(r.real.is_empty());
        assert_eq!(r.complex, 2);
    }

    #[test]
    fn root_at_infinity_is_found() {
        // y (x - y): roots (1:0) and (1:1)
        let r = binary_form_roots(&[0.0, 1.0, -1.0]).unwrap();
        assert_eq!(r.real.len(), 2);
    }

    #[test]
    fn nullspace_of_wide_matrix() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let ns = nullspace(&m, RANK_TOL);
        assert_eq!(ns.ncols(), 2);
        assert!((m * ns).norm() < 1e-14);
    }
}

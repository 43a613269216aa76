//! Dense homogeneous polynomials over a graded-lexicographic monomial basis.
//!
//! Every curve-related object in the crate is one of these: image curves `f`
//! and dual curves `φ` live in 3 variables, cones and dual surfaces in 4,
//! Chow forms in the 6 Plücker coordinates.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dd::{dot_f64, Dd};
use crate::linalg::{self, normalize_rows, right_singular};
use crate::{Error, Result};

/// Exponent tuples of all monomials of a fixed degree in `num_vars`
/// variables, in graded-lexicographic order (`x0^d` first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    num_vars: usize,
    degree: usize,
    exponents: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl MonomialBasis {
    pub fn new(num_vars: usize, degree: usize) -> Self {
        assert!(num_vars >= 1, "a monomial basis needs at least one variable");
        let mut exponents = Vec::with_capacity(binomial(num_vars + degree - 1, degree));
        let mut current = vec![0u32; num_vars];
        fill_exponents(0, degree as u32, &mut current, &mut exponents);
        let index = exponents
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        Self {
            num_vars,
            degree,
            exponents,
            index,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn index_of(&self, exponent: &[u32]) -> Option<usize> {
        self.index.get(exponent).copied()
    }

    /// Values of every basis monomial at `x`: one row of a fitting matrix.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.num_vars {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars,
                got: x.len(),
            });
        }
        let powers = power_table(x, self.degree);
        Ok(self
            .exponents
            .iter()
            .map(|e| {
                e.iter()
                    .enumerate()
                    .map(|(v, &k)| powers[v][k as usize])
                    .product()
            })
            .collect())
    }
}

fn fill_exponents(var: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let n = current.len();
    if var == n - 1 {
        current[var] = remaining;
        out.push(current.clone());
        return;
    }
    for k in (0..=remaining).rev() {
        current[var] = k;
        fill_exponents(var + 1, remaining - k, current, out);
    }
    current[var] = 0;
}

fn power_table(x: &[f64], degree: usize) -> Vec<Vec<f64>> {
    x.iter()
        .map(|&xi| {
            let mut p = Vec::with_capacity(degree + 1);
            let mut acc = 1.0;
            for _ in 0..=degree {
                p.push(acc);
                acc *= xi;
            }
            p
        })
        .collect()
}

/// Binomial coefficient `C(n, k)`, zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Enumerates the monomial basis of degree `degree` in `num_vars` variables.
pub fn enumerate_monomials(num_vars: usize, degree: usize) -> Result<MonomialBasis> {
    if num_vars == 0 {
        return Err(Error::InvalidArgument("num_vars must be at least 1".into()));
    }
    Ok(MonomialBasis::new(num_vars, degree))
}

/// A homogeneous polynomial stored densely against a shared monomial basis.
#[derive(Debug, Clone)]
pub struct HomogeneousPolynomial {
    basis: Arc<MonomialBasis>,
    coeffs: Vec<f64>,
}

impl PartialEq for HomogeneousPolynomial {
    fn eq(&self, other: &Self) -> bool {
        self.num_vars() == other.num_vars()
            && self.degree() == other.degree()
            && self.coeffs == other.coeffs
    }
}

impl HomogeneousPolynomial {
    pub fn new(basis: Arc<MonomialBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self { basis, coeffs })
    }

    pub fn zero(num_vars: usize, degree: usize) -> Self {
        let basis = Arc::new(MonomialBasis::new(num_vars, degree));
        let coeffs = vec![0.0; basis.len()];
        Self { basis, coeffs }
    }

    pub fn from_coeffs(num_vars: usize, degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        Self::new(Arc::new(MonomialBasis::new(num_vars, degree)), coeffs)
    }

    /// Builds a polynomial from `(coefficient, exponent)` terms; repeated
    /// exponents accumulate.
    pub fn from_terms(num_vars: usize, degree: usize, terms: &[(f64, &[u32])]) -> Result<Self> {
        let mut p = Self::zero(num_vars, degree);
        for (c, e) in terms {
            let i = p.basis.index_of(e).ok_or_else(|| {
                Error::InvalidArgument(format!("exponent {e:?} not of degree {degree}"))
            })?;
            p.coeffs[i] += c;
        }
        Ok(p)
    }

    /// The linear form `sum_i a[i] x_i`.
    pub fn linear(a: &[f64]) -> Self {
        Self::from_coeffs(a.len(), 1, a.to_vec()).expect("linear basis size equals var count")
    }

    pub fn basis(&self) -> &Arc<MonomialBasis> {
        &self.basis
    }

    pub fn num_vars(&self) -> usize {
        self.basis.num_vars()
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Same polynomial rescaled to unit coefficient norm with the first
    /// significant coefficient positive.
    pub fn normalized(&self) -> Self {
        let coeffs = linalg::normalize_homog(&self.coeffs).unwrap_or_else(|| self.coeffs.clone());
        Self {
            basis: self.basis.clone(),
            coeffs,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let row = self.basis.evaluate(x)?;
        Ok(row.iter().zip(&self.coeffs).map(|(m, c)| m * c).sum())
    }

    /// `|p(x)| / (‖p‖ ‖x‖^deg)`: evaluation invariant to rescaling either side.
    pub fn eval_normalized(&self, x: &[f64]) -> Result<f64> {
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let np = self.coeff_norm();
        if nx == 0.0 || np == 0.0 {
            return Ok(0.0);
        }
        let unit: Vec<f64> = x.iter().map(|v| v / nx).collect();
        Ok(self.eval(&unit)?.abs() / np)
    }

    /// Gradient with respect to the variables at `x`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.num_vars();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let powers = power_table(x, self.degree());
        let mut g = vec![0.0; n];
        for (e, c) in self.basis.exponents().iter().zip(&self.coeffs) {
            if *c == 0.0 {
                continue;
            }
            for v in 0..n {
                if e[v] == 0 {
                    continue;
                }
                let mut term = c * e[v] as f64;
                for (w, &k) in e.iter().enumerate() {
                    let k = if w == v { k - 1 } else { k };
                    term *= powers[w][k as usize];
                }
                g[v] += term;
            }
        }
        Ok(g)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_space(other)?;
        Ok(Self {
            basis: self.basis.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    fn check_same_space(&self, other: &Self) -> Result<()> {
        if self.num_vars() != other.num_vars() || self.degree() != other.degree() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.len(),
                got: other.basis.len(),
            });
        }
        Ok(())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.num_vars() != other.num_vars() {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars(),
                got: other.num_vars(),
            });
        }
        let mut out = Self::zero(self.num_vars(), self.degree() + other.degree());
        let mut e = vec![0u32; self.num_vars()];
        for (ea, ca) in self.basis.exponents().iter().zip(&self.coeffs) {
            if *ca == 0.0 {
                continue;
            }
            for (eb, cb) in other.basis.exponents().iter().zip(&other.coeffs) {
                if *cb == 0.0 {
                    continue;
                }
                for v in 0..e.len() {
                    e[v] = ea[v] + eb[v];
                }
                let i = out.basis.index_of(&e).expect("product exponent in basis");
                out.coeffs[i] += ca * cb;
            }
        }
        Ok(out)
    }
}

/// Composition `p ∘ A`: substitutes `x = A y`, with `A` of shape
/// `p.num_vars() × k`. Each monomial is expanded as a product of powers of
/// the row forms of `A`.
pub fn pullback(p: &HomogeneousPolynomial, a: &DMatrix<f64>) -> Result<HomogeneousPolynomial> {
    let n = p.num_vars();
    if a.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.nrows(),
        });
    }
    let k = a.ncols();
    let d = p.degree();
    // powers[i][j] = (row_i · y)^j
    let mut powers: Vec<Vec<HomogeneousPolynomial>> = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = a.row(i).iter().copied().collect();
        let lin = HomogeneousPolynomial::linear(&row);
        let mut list = vec![HomogeneousPolynomial::from_coeffs(k, 0, vec![1.0])?];
        for j in 1..=d {
            let next = list[j - 1].mul(&lin)?;
            list.push(next);
        }
        powers.push(list);
    }
    let mut out = HomogeneousPolynomial::zero(k, d);
    for (e, c) in p.basis.exponents().iter().zip(&p.coeffs) {
        if *c == 0.0 {
            continue;
        }
        let mut term = HomogeneousPolynomial::from_coeffs(k, 0, vec![*c])?;
        for (i, &ei) in e.iter().enumerate() {
            if ei > 0 {
                term = term.mul(&powers[i][ei as usize])?;
            }
        }
        for (o, t) in out.coeffs.iter_mut().zip(&term.coeffs) {
            *o += t;
        }
    }
    Ok(out)
}

/// Restriction of a ternary form to the line through `a` and `b`:
/// the binary form `q(x, y) = p(x a + y b)`, coefficients ordered
/// `x^d, x^(d-1) y, …, y^d`.
pub fn restrict_to_line(p: &HomogeneousPolynomial, a: &[f64], b: &[f64]) -> Result<HomogeneousPolynomial> {
    if p.num_vars() != a.len() || a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: p.num_vars(),
            got: a.len().max(b.len()),
        });
    }
    let m = DMatrix::from_fn(a.len(), 2, |r, c| if c == 0 { a[r] } else { b[r] });
    let sv = linalg::singular_values(&m);
    if sv[1] <= 1e-12 * sv[0] {
        return Err(Error::Degenerate("line points are linearly dependent".into()));
    }
    pullback(p, &m)
}

/// Tests whether `p = λ q` for some scalar λ.
///
/// The verdict uses the cross differences `p_i q_j − p_j q_i`, scaled by
/// `‖p‖‖q‖`; `λ` is the least-squares scale `p·q / q·q`.
pub fn proportional(p: &[f64], q: &[f64], tol: f64) -> Result<(bool, f64)> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let nq = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nq == 0.0 {
        return Err(Error::ZeroVector("reference vector is zero"));
    }
    let np = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    let lambda = p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() / (nq * nq);
    if np == 0.0 {
        return Ok((true, 0.0));
    }
    Ok((cross_residual(p, q) / (np * nq) <= tol, lambda))
}

/// `max_{i<j} |p_i q_j − p_j q_i|` (unnormalized).
pub fn cross_residual(p: &[f64], q: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        for j in (i + 1)..p.len() {
            worst = worst.max((p[i] * q[j] - p[j] * q[i]).abs());
        }
    }
    worst
}

/// Result of a homogeneous least-squares fit.
#[derive(Debug, Clone)]
pub struct NullspaceFit {
    /// Unit-norm coefficient vector (right singular vector of the least
    /// singular value), sign-normalized.
    pub coeffs: DVector<f64>,
    /// `σ_min / σ_next`, with both floored at machine precision times
    /// `σ_max`. Small means the kernel direction is unique.
    pub gap: f64,
    pub singular_values: Vec<f64>,
}

/// Solves `rows · c ≈ 0`, `‖c‖ = 1` after normalizing each row.
pub fn fit_nullspace(rows: &DMatrix<f64>) -> Result<NullspaceFit> {
    if rows.nrows() == 0 || rows.ncols() == 0 {
        return Err(Error::Empty("no rows to fit"));
    }
    let mut m = rows.clone();
    normalize_rows(&mut m);
    let (sv, v) = right_singular(&m);
    let n = sv.len();
    let coeffs = linalg::normalize_dvec(&v.column(n - 1).into_owned());
    let floor = f64::EPSILON * n as f64 * sv[0];
    let gap = if n < 2 {
        0.0
    } else {
        sv[n - 1].max(floor) / sv[n - 2].max(floor)
    };
    Ok(NullspaceFit {
        coeffs,
        gap,
        singular_values: sv,
    })
}

/// Stacks the monomial rows of `points` against `basis`.
pub fn design_matrix<'a, I>(basis: &MonomialBasis, points: I) -> Result<DMatrix<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let rows: Vec<Vec<f64>> = points
        .into_iter()
        .map(|x| basis.evaluate(x))
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(rows.len(), basis.len(), |r, c| rows[r][c]))
}

/// Isotropic rescaling `T = S^(-1/2)` of unit-normalized samples, `S` their
/// second-moment matrix, with eigenvalues clamped at `1e-8` of the largest.
pub fn whitening<'a, I>(points: I, n: usize) -> DMatrix<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut s = DMatrix::<f64>::zeros(n, n);
    let mut count = 0usize;
    for x in points {
        let v = DVector::from_column_slice(x);
        let norm = v.norm();
        if norm > 0.0 {
            let v = v / norm;
            s += &v * v.transpose();
            count += 1;
        }
    }
    if count == 0 {
        return DMatrix::identity(n, n);
    }
    let eig = nalgebra::SymmetricEigen::new(s / count as f64);
    let top = eig.eigenvalues.max();
    let scale = eig.eigenvalues.map(|l| 1.0 / l.max(1e-8 * top).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&scale) * eig.eigenvectors.transpose()
}

/// Degree-`d` form vanishing on `points`; see [`fit_form_dd`].
pub fn fit_form(points: &[Vec<f64>], degree: usize) -> Result<(HomogeneousPolynomial, NullspaceFit)> {
    let pts: Vec<Vec<Dd>> = points.iter().map(|p| p.iter().map(|&x| Dd::from(x)).collect()).collect();
    fit_form_dd(&pts, degree)
}

/// Degree-`d` form vanishing on `points`, fitted in whitened coordinates
/// and pulled back.
///
/// The design matrix is assembled in double-double precision. An `f64`
/// SVD gives the starting null vector, which is then refined by solving
/// the pivoted consistent system with extended-precision residuals. The
/// reported gap is `‖A c‖ / σ_{n−1}` with the residual taken in extended
/// precision; the diagnostics refer to the whitened system.
pub fn fit_form_dd(points: &[Vec<Dd>], degree: usize) -> Result<(HomogeneousPolynomial, NullspaceFit)> {
    let n = points.first().map(|p| p.len()).ok_or(Error::Empty("no points to fit"))?;
    if points.iter().any(|p| p.len() != n) {
        return Err(Error::InvalidArgument("points of mixed dimension".into()));
    }
    let hi: Vec<Vec<f64>> = points.iter().map(|p| p.iter().map(|x| x.hi).collect()).collect();
    let t = whitening(hi.iter().map(|p| p.as_slice()), n);
    let t_rows: Vec<Vec<f64>> = (0..n).map(|r| t.row(r).iter().copied().collect()).collect();
    let basis = MonomialBasis::new(n, degree);
    let k = basis.len();
    let rows: Vec<Vec<Dd>> = points
        .iter()
        .map(|p| {
            let y: Vec<Dd> = t_rows.iter().map(|row| dot_f64(row, p)).collect();
            let row = monomials_dd(&basis, &y);
            let norm = row.iter().map(|v| v.hi * v.hi).sum::<f64>().sqrt();
            row.into_iter().map(|v| v.mul_f64(1.0 / norm)).collect()
        })
        .collect();
    let a = DMatrix::from_fn(rows.len(), k, |r, c| rows[r][c].hi);
    let start = fit_nullspace(&a)?;
    if k == 1 {
        let poly = HomogeneousPolynomial::from_coeffs(n, degree, vec![1.0])?;
        return Ok((poly, start));
    }

    let v0 = &start.coeffs;
    let pivot = (0..k).max_by(|&i, &j| v0[i].abs().total_cmp(&v0[j].abs())).unwrap_or(0);
    let cols: Vec<usize> = (0..k).filter(|&c| c != pivot).collect();
    let reduced = DMatrix::from_fn(rows.len(), k - 1, |r, c| a[(r, cols[c])]);
    let svd = reduced.svd(true, true);
    let mut x: Vec<Dd> = cols.iter().map(|&c| Dd::from(v0[c] / v0[pivot])).collect();
    let residual = |x: &[Dd]| -> Vec<Dd> {
        rows.iter()
            .map(|row| {
                let mut acc = -row[pivot];
                for (j, &c) in cols.iter().enumerate() {
                    acc = acc - row[c] * x[j];
                }
                acc
            })
            .collect()
    };
    for _ in 0..8 {
        let r = DVector::from_iterator(rows.len(), residual(&x).iter().map(|v| v.to_f64()));
        let delta = svd
            .solve(&r, 0.0)
            .map_err(|e| Error::Degenerate(format!("refinement solve failed: {e}")))?;
        for (xj, dj) in x.iter_mut().zip(delta.iter()) {
            *xj += Dd::from(*dj);
        }
        let xn = x.iter().map(|v| v.hi * v.hi).sum::<f64>().sqrt();
        if delta.norm() <= 1e-30 * xn.max(1.0) {
            break;
        }
    }
    let mut c = vec![0.0; k];
    c[pivot] = 1.0;
    for (j, &col) in cols.iter().enumerate() {
        c[col] = x[j].to_f64();
    }
    let cn = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r_norm = residual(&x).iter().map(|v| v.to_f64().powi(2)).sum::<f64>().sqrt() / cn;
    let sv = start.singular_values.clone();
    let floor = 1e-30 * sv[0];
    let gap = r_norm.max(floor) / sv[k - 2].max(floor);
    let coeffs = linalg::normalize_dvec(&DVector::from_vec(c));
    let local = HomogeneousPolynomial::from_coeffs(n, degree, coeffs.as_slice().to_vec())?;
    let mut singular_values = sv;
    singular_values[k - 1] = r_norm;
    let fit = NullspaceFit {
        coeffs,
        gap,
        singular_values,
    };
    Ok((pullback(&local, &t)?.normalized(), fit))
}

fn monomials_dd(basis: &MonomialBasis, x: &[Dd]) -> Vec<Dd> {
    let d = basis.degree();
    let powers: Vec<Vec<Dd>> = x
        .iter()
        .map(|&v| {
            let mut p = vec![Dd::ONE];
            for e in 1..=d {
                let next = p[e - 1] * v;
                p.push(next);
            }
            p
        })
        .collect();
    basis
        .exponents()
        .iter()
        .map(|e| {
            e.iter()
                .enumerate()
                .fold(Dd::ONE, |acc, (i, &k)| if k == 0 { acc } else { acc * powers[i][k as usize] })
        })
        .collect()
}

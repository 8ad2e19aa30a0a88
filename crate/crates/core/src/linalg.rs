//! Dense real-matrix primitives: SVD with a fixed sign convention, Schatten
//! norms, Löwner-order tests, symmetric eigen-decomposition and Haar sampling.
//!
//! Singular values are always stored in nonincreasing order.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen, SVD};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMatrix = DMatrix<Complex<f64>>;

const MAX_ITER: usize = 100_000;

/// Relative asymmetry tolerated by routines that require symmetric input.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Builds a matrix from row-major entries, rejecting ragged or non-finite input.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::DimensionMismatch("rows have unequal lengths".into()));
    }
    let m = Matrix::from_fn(r, c, |i, j| rows[i][j]);
    ensure_finite(&m)?;
    Ok(m)
}

pub fn ensure_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub fn ensure_square(m: &Matrix) -> Result<usize> {
    if m.is_square() {
        Ok(m.nrows())
    } else {
        Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

fn ensure_symmetric(m: &Matrix) -> Result<()> {
    ensure_square(m)?;
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub u: Matrix,
    /// Nonincreasing.
    pub sigma: Vector,
    pub v: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        &self.u * Matrix::from_diagonal(&self.sigma) * self.v.transpose()
    }
}

/// Singular value decomposition `m = u diag(sigma) vᵀ`.
///
/// In every column of `u` the first entry of largest magnitude is made
/// nonnegative; the matching column of `v` absorbs the sign.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    ensure_square(m)?;
    ensure_finite(m)?;
    let dec = SVD::try_new(m.clone(), true, true, f64::EPSILON, MAX_ITER)
        .ok_or(Error::NoConvergence("SVD"))?;
    let mut u = dec.u.ok_or(Error::NoConvergence("SVD"))?;
    let mut v = dec.v_t.ok_or(Error::NoConvergence("SVD"))?.transpose();
    let sigma = dec.singular_values;
    for j in 0..u.ncols() {
        let mut pivot = 0.0_f64;
        for x in u.column(j).iter() {
            if x.abs() > pivot.abs() {
                pivot = *x;
            }
        }
        if pivot < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    Ok(SvdResult { u, sigma, v })
}

/// Singular values only, nonincreasing.
pub fn singular_values(m: &Matrix) -> Result<Vector> {
    ensure_finite(m)?;
    SVD::try_new(m.clone(), false, false, f64::EPSILON, MAX_ITER)
        .map(|s| s.singular_values)
        .ok_or(Error::NoConvergence("SVD"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchattenP {
    Two,
    Four,
    Inf,
}

impl FromStr for SchattenP {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "2" => Ok(Self::Two),
            "4" => Ok(Self::Four),
            "inf" | "infinity" | "∞" => Ok(Self::Inf),
            other => Err(Error::UnsupportedSchatten(other.to_string())),
        }
    }
}

impl fmt::Display for SchattenP {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Two => "2",
            Self::Four => "4",
            Self::Inf => "inf",
        })
    }
}

pub fn schatten_norm(m: &Matrix, p: SchattenP) -> Result<f64> {
    ensure_finite(m)?;
    match p {
        SchattenP::Two => Ok(m.norm()),
        SchattenP::Four => {
            let s = singular_values(m)?;
            Ok(s.iter().map(|x| x.powi(4)).sum::<f64>().powf(0.25))
        }
        SchattenP::Inf => Ok(singular_values(m)?.max()),
    }
}

/// Largest singular value.
pub fn op_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).map(|s| s.max()).unwrap_or(f64::NAN)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in nondecreasing
/// order; column `i` of the returned matrix pairs with eigenvalue `i`.
pub fn eig_sym(m: &Matrix) -> Result<(Vector, Matrix)> {
    ensure_symmetric(m)?;
    ensure_finite(m)?;
    let eig = SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, MAX_ITER)
        .ok_or(Error::NoConvergence("symmetric eigensolver"))?;
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

pub fn lambda_min(m: &Matrix) -> Result<f64> {
    Ok(eig_sym(m)?.0[0])
}

pub fn lambda_max(m: &Matrix) -> Result<f64> {
    let (v, _) = eig_sym(m)?;
    Ok(v[v.len() - 1])
}

/// `a ⪯ b` in the Löwner order, up to `tol`.
pub fn is_psd_dominated(a: &Matrix, b: &Matrix, tol: f64) -> Result<bool> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    ensure_symmetric(a)?;
    ensure_symmetric(b)?;
    Ok(lambda_min(&(b - a))? >= -tol)
}

/// Symmetric inverse square root of a positive definite matrix.
pub fn sym_inv_sqrt(m: &Matrix) -> Result<Matrix> {
    let (vals, vecs) = eig_sym(m)?;
    let top = vals[vals.len() - 1].abs().max(f64::MIN_POSITIVE);
    if vals[0] <= 1e-14 * top {
        return Err(Error::NotPositiveDefinite(vals[0]));
    }
    let d = Matrix::from_diagonal(&vals.map(|x| 1.0 / x.sqrt()));
    Ok(symmetrize(&(&vecs * d * vecs.transpose())))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    ensure_symmetric(m)?;
    let chol = nalgebra::Cholesky::new(symmetrize(m))
        .ok_or_else(|| Error::NotPositiveDefinite(lambda_min(m).unwrap_or(f64::NAN)))?;
    Ok(chol.inverse())
}

/// `[A⁰, A¹, …, A^{count-1}]`.
pub fn powers(a: &Matrix, count: usize) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(Matrix::identity(a.nrows(), a.ncols()));
    for k in 1..count {
        let next = a * &out[k - 1];
        out.push(next);
    }
    out
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vector {
    Vector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Uniform draw from the unit sphere in `R^d`.
pub fn unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vector {
    loop {
        let g = gaussian_vector(d, rng);
        let n = g.norm();
        if n > 1e-300 {
            return g / n;
        }
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// diagonal of R forced positive.
pub fn haar_orthogonal_raw<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix {
    let qr = gaussian_matrix(d, d, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Haar draw followed by the column-sign convention used for SVD factors: the
/// first entry of largest magnitude in each column is nonnegative.
pub fn haar_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix {
    let mut q = haar_orthogonal_raw(d, rng);
    normalize_column_signs(&mut q);
    q
}

/// Flips columns so that the first entry of largest magnitude is nonnegative.
/// Returns the applied signs.
pub fn normalize_column_signs(q: &mut Matrix) -> Vec<f64> {
    let mut signs = Vec::with_capacity(q.ncols());
    for j in 0..q.ncols() {
        let mut pivot = 0.0_f64;
        for x in q.column(j).iter() {
            if x.abs() > pivot.abs() {
                pivot = *x;
            }
        }
        if pivot < 0.0 {
            q.column_mut(j).neg_mut();
            signs.push(-1.0);
        } else {
            signs.push(1.0);
        }
    }
    signs
}

pub fn to_complex(m: &Matrix) -> CMatrix {
    m.map(|x| Complex::new(x, 0.0))
}

/// Squared operator norm of `p + i q` computed through the real embedding
/// `[[p, -q], [q, p]]`, whose singular values are those of `p + i q`, doubled.
pub fn complex_op_norm_sq(p: &Matrix, q: &Matrix) -> f64 {
    let (r, c) = p.shape();
    let mut e = Matrix::zeros(2 * r, 2 * c);
    e.view_mut((0, 0), (r, c)).copy_from(p);
    e.view_mut((r, c), (r, c)).copy_from(p);
    e.view_mut((r, 0), (r, c)).copy_from(q);
    e.view_mut((0, c), (r, c)).copy_from(&(-q));
    let gram = e.transpose() * &e;
    SymmetricEigen::try_new(gram, f64::EPSILON, MAX_ITER)
        .map(|eig| eig.eigenvalues.max().max(0.0))
        .unwrap_or(f64::NAN)
}

/// Singular values of a complex matrix, nonincreasing.
pub fn complex_singular_values(m: &CMatrix) -> Result<Vector> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    SVD::try_new(m.clone(), false, false, f64::EPSILON, MAX_ITER)
        .map(|s| s.singular_values)
        .ok_or(Error::NoConvergence("complex SVD"))
}

/// Ratio of extreme singular values of a complex matrix.
pub fn complex_cond(m: &CMatrix) -> Result<f64> {
    let s = complex_singular_values(m)?;
    let min = s.min();
    Ok(if min > 0.0 {
        s.max() / min
    } else {
        f64::INFINITY
    })
}

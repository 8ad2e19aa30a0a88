//! Minimax machinery over the class of matrices with least singular value at
//! least `s`: the operator-ball prior with density `∏ Z (ε − σ_i)²` over the
//! singular values `σ_i` of `A − sI`, its sampler, score and Fisher
//! information, the van Trees bound and its three explicit regimes.

use std::fmt;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::bounds::geom_sum;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::quadrature;
use crate::rng::RandomStream;

/// Distance from the ball boundary below which the score is refused.
pub const BOUNDARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    /// Centre offset: the prior is centred at `sI`.
    pub s: f64,
    /// Ball radius.
    pub eps: f64,
    pub d: usize,
}

impl PriorSpec {
    pub fn new(s: f64, eps: f64, d: usize) -> Result<Self> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "s = {s} must be finite and nonnegative"
            )));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eps = {eps} must be positive"
            )));
        }
        if d == 0 {
            return Err(Error::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        Ok(Self { s, eps, d })
    }

    fn shifted(&self, a: &Matrix) -> Result<Matrix> {
        if linalg::ensure_square(a)? != self.d {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, prior dimension is {}",
                a.nrows(),
                a.ncols(),
                self.d
            )));
        }
        Ok(a - Matrix::identity(self.d, self.d) * self.s)
    }
}

/// One prior draw `A = sI + U diag(σ) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSample {
    pub u: Matrix,
    pub sigmas: Vec<f64>,
    pub v: Matrix,
    pub a: Matrix,
}

/// `Z = d(d+1)(d+2) / (2 ε^{d+2})`, the reciprocal of `∫_0^ε (ε−σ)² σ^{d−1} dσ`.
pub fn z_const(d: usize, eps: f64) -> f64 {
    let df = d as f64;
    df * (df + 1.0) * (df + 2.0) / (2.0 * eps.powi(d as i32 + 2))
}

/// Prior density at `a`: `∏ Z (ε − σ_i)²` inside the ball `|A − sI|_op ≤ ε`,
/// zero outside.
pub fn prior_density(a: &Matrix, spec: &PriorSpec) -> Result<f64> {
    let sv = linalg::singular_values(&spec.shifted(a)?)?;
    if sv.iter().any(|&x| x >= spec.eps) {
        return Ok(0.0);
    }
    let z = z_const(spec.d, spec.eps);
    Ok(sv.iter().map(|&x| z * (spec.eps - x).powi(2)).product())
}

/// Natural log of [`prior_density`]; `-inf` outside the ball.
pub fn log_prior_density(a: &Matrix, spec: &PriorSpec) -> Result<f64> {
    let sv = linalg::singular_values(&spec.shifted(a)?)?;
    if sv.iter().any(|&x| x >= spec.eps) {
        return Ok(f64::NEG_INFINITY);
    }
    let lz = z_const(spec.d, spec.eps).ln();
    Ok(sv.iter().map(|&x| lz + 2.0 * (spec.eps - x).ln()).sum())
}

pub fn sample_prior(spec: &PriorSpec, stream: &RandomStream) -> PriorSample {
    sample_prior_rng(spec, &mut stream.rng())
}

/// Draws `σ_i = ε · Beta(d, 3)` independently, `U` Haar with the column-sign
/// convention and `V` Haar; the sign normalisation of `U` is equivalent to
/// pushing signs into `V`, which leaves `V` Haar.
pub fn sample_prior_rng<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> PriorSample {
    let d = spec.d;
    let beta = Beta::new(d as f64, 3.0).expect("Beta(d, 3) parameters are positive");
    let sigmas: Vec<f64> = (0..d).map(|_| spec.eps * beta.sample(rng)).collect();
    let u = linalg::haar_orthogonal(d, rng);
    let v = linalg::haar_orthogonal_raw(d, rng);
    let a = Matrix::identity(d, d) * spec.s
        + &u * Matrix::from_diagonal(&Vector::from_row_slice(&sigmas)) * v.transpose();
    PriorSample { u, sigmas, v, a }
}

/// Score of the prior, `∇_A log Π = −2 U (εI − Σ)⁻¹ Vᵀ` with `A − sI = UΣVᵀ`.
/// Only `U f(Σ) Vᵀ` enters, so repeated singular values are harmless.
pub fn grad_log_prior(a: &Matrix, spec: &PriorSpec) -> Result<Matrix> {
    let dec = linalg::svd(&spec.shifted(a)?)?;
    if let Some(x) = dec.sigma.iter().find(|&&x| x > spec.eps - BOUNDARY_TOL) {
        return Err(Error::InvalidParameter(format!(
            "singular value {x} is within {BOUNDARY_TOL:e} of the ball radius {}",
            spec.eps
        )));
    }
    let f = dec.sigma.map(|x| -2.0 / (spec.eps - x));
    Ok(&dec.u * Matrix::from_diagonal(&f) * dec.v.transpose())
}

/// `I_Π = 2(d+1)(d+2)/ε² · I_d`.
pub fn prior_fisher(d: usize, eps: f64) -> Matrix {
    let df = d as f64;
    Matrix::identity(d, d) * (2.0 * (df + 1.0) * (df + 2.0) / (eps * eps))
}

/// van Trees minimax bound
/// `d² / (Σ_{i=0}^{N-2}(N−1−i)(s+ε)^{2i} + 2(d+2)²/ε²)`.
pub fn van_trees_bound(d: usize, n: usize, s: f64, eps: f64) -> f64 {
    let df = d as f64;
    df * df / (geom_sum((s + eps).powi(2), n) + 2.0 * (df + 2.0).powi(2) / (eps * eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `s ∈ [0, 1)`
    Stable,
    /// `s = 1`
    Limit,
    /// `s > 1`
    Unstable,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stable => "stable",
            Self::Limit => "limit",
            Self::Unstable => "unstable",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeBound {
    pub regime: Regime,
    pub valid: bool,
    pub value: f64,
    /// Horizon from which the value is claimed; zero when unconditional.
    pub threshold: f64,
}

/// The explicit minimax rates:
/// `s < 1`: `d²(1 − (s+1)²/4)/((1+α)N)` for `N ≥ 16(d+2)²/(α(1−s)²)`;
/// `s > 1`: `d²((s+1)²−1)²/((1+α)(s+1)^{2N})` for `N ≥ log₂((d+2)/α) + 3`;
/// `s = 1`: `log²(d+2)/(3N²(1+2/d)²)`.
pub fn minimax_regimes(d: usize, n: usize, s: f64, alpha: f64) -> Result<RegimeBound> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "s = {s} must be finite and nonnegative"
        )));
    }
    let df = d as f64;
    let nf = n as f64;
    if (s - 1.0).abs() <= 1e-12 {
        return Ok(RegimeBound {
            regime: Regime::Limit,
            valid: true,
            value: (df + 2.0).ln().powi(2) / (3.0 * nf * nf * (1.0 + 2.0 / df).powi(2)),
            threshold: 0.0,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} must lie in (0, 1)"
        )));
    }
    if s < 1.0 {
        let threshold = 16.0 * (df + 2.0).powi(2) / (alpha * (1.0 - s).powi(2));
        Ok(RegimeBound {
            regime: Regime::Stable,
            valid: nf >= threshold,
            value: df * df * (1.0 - (s + 1.0).powi(2) / 4.0) / ((1.0 + alpha) * nf),
            threshold,
        })
    } else {
        let threshold = ((df + 2.0) / alpha).log2() + 3.0;
        let q = (s + 1.0).powi(2);
        Ok(RegimeBound {
            regime: Regime::Unstable,
            valid: nf >= threshold,
            value: df * df * (q - 1.0).powi(2) / ((1.0 + alpha) * q.powf(nf)),
            threshold,
        })
    }
}

/// `−A (∇_A log Π(A))ᵀ` for one draw; its prior mean is `d I_d`.
pub fn score_identity_lhs(sample: &PriorSample, spec: &PriorSpec) -> Result<Matrix> {
    let g = grad_log_prior(&sample.a, spec)?;
    Ok(-(&sample.a * g.transpose()))
}

/// Gauss–Legendre nodes used by the quadrature checks; exact for the
/// polynomial integrands below whenever `d ≤ 2·NODES − 2`.
const NODES: usize = 64;

/// `Z ∫_0^ε (ε − σ)² σ^{d−1} dσ`, which should equal 1: the Haar factors
/// integrate to one, so this is the total mass of the prior.
pub fn prior_mass_by_quadrature(d: usize, eps: f64) -> f64 {
    let z = z_const(d, eps);
    quadrature::integrate(
        |x| z * (eps - x).powi(2) * x.powi(d as i32 - 1),
        0.0,
        eps,
        NODES,
    )
}

/// `E[4 (ε − σ)^{-2}]` under the singular-value density `Z (ε − σ)² σ^{d−1}`,
/// which should reproduce the diagonal of [`prior_fisher`].
pub fn prior_fisher_by_quadrature(d: usize, eps: f64) -> f64 {
    let z = z_const(d, eps);
    quadrature::integrate(
        |x| 4.0 / (eps - x).powi(2) * z * (eps - x).powi(2) * x.powi(d as i32 - 1),
        0.0,
        eps,
        NODES,
    )
}

/// CDF of Beta(d, 3): `Σ_{j=d}^{d+2} C(d+2, j) x^j (1−x)^{d+2−j}`.
pub fn beta_d3_cdf(d: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let m = d + 2;
    (d..=m)
        .map(|j| binomial(m, j) * x.powi(j as i32) * (1.0 - x).powi((m - j) as i32))
        .sum()
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &xi)| {
            let f = cdf(xi);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

//! The model `x_{i+1} = A x_i + B ε_i`, `x_0 = 0`, `ε_i ~ N(0, I_d)`.
//!
//! Indexing: `N` counts transitions, so a trajectory holds states `x_0..x_N`
//! and noise `ε_0..ε_{N-1}`. Data sums (Γ, Σ, log-likelihood) run over
//! `i = 1..=N`; Ψ and the Fisher information sum over `i = 1..=N-1`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, gaussian_vector, Matrix, Vector};
use crate::rng::RandomStream;

/// Dynamics `A`, full-rank noise shaping `B` and horizon `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    a: Matrix,
    b: Matrix,
    n: usize,
    /// `(BBᵀ)⁻¹`
    w: Matrix,
}

impl SystemParams {
    pub fn new(a: Matrix, b: Matrix, n: usize) -> Result<Self> {
        let d = linalg::ensure_square(&a)?;
        if linalg::ensure_square(&b)? != d {
            return Err(Error::DimensionMismatch(format!(
                "A is {d}x{d} but B is {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if d == 0 {
            return Err(Error::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        linalg::ensure_finite(&a)?;
        linalg::ensure_finite(&b)?;
        let smin = linalg::singular_values(&b)?.min();
        if smin <= 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "B must be full rank (smallest singular value {smin:.3e})"
            )));
        }
        if n < d + 1 {
            return Err(Error::InvalidParameter(format!(
                "horizon N = {n} must be at least d + 1 = {}",
                d + 1
            )));
        }
        let w = linalg::spd_inverse(&(&b * b.transpose()))?;
        Ok(Self { a, b, n, w })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn d(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `(BBᵀ)⁻¹`.
    pub fn noise_precision(&self) -> &Matrix {
        &self.w
    }

    /// Same `B` and `N`, different `A`.
    pub fn with_a(&self, a: Matrix) -> Result<Self> {
        Self::new(a, self.b.clone(), self.n)
    }

    /// Same `A` and `B`, different horizon.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), n)
    }

    /// Same `A` and `N`, different `B`.
    pub fn with_b(&self, b: Matrix) -> Result<Self> {
        Self::new(self.a.clone(), b, self.n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x_0..x_N`
    pub states: Vec<Vector>,
    /// `ε_0..ε_{N-1}` when retained.
    pub noise: Option<Vec<Vector>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |x| x.len())
    }

    /// Scalar trajectory from a list of states, for tests and examples.
    pub fn from_scalars(states: &[f64]) -> Self {
        Self {
            states: states.iter().map(|&x| Vector::from_element(1, x)).collect(),
            noise: None,
        }
    }
}

/// Natural statistics of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct GramStatistics {
    /// `Γ = Σ_{i=1}^N x_i x_{i-1}ᵀ`
    pub gamma: Matrix,
    /// `Σ = Σ_{i=1}^N x_{i-1} x_{i-1}ᵀ`
    pub sigma: Matrix,
}

pub fn simulate(params: &SystemParams, stream: &RandomStream, keep_noise: bool) -> Trajectory {
    simulate_rng(params, &mut stream.rng(), keep_noise)
}

/// Simulation drawing noise from an existing generator.
pub fn simulate_rng<R: Rng + ?Sized>(
    params: &SystemParams,
    rng: &mut R,
    keep_noise: bool,
) -> Trajectory {
    let d = params.d();
    let noise: Vec<Vector> = (0..params.n).map(|_| gaussian_vector(d, rng)).collect();
    let states = propagate(params, &noise);
    Trajectory {
        states,
        noise: keep_noise.then_some(noise),
    }
}

/// Runs the recursion on caller-supplied noise `ε_0..ε_{N-1}`.
pub fn simulate_injected(params: &SystemParams, noise: &[Vector]) -> Result<Trajectory> {
    if noise.len() != params.n {
        return Err(Error::DimensionMismatch(format!(
            "expected {} noise vectors, got {}",
            params.n,
            noise.len()
        )));
    }
    if let Some(bad) = noise.iter().find(|e| e.len() != params.d()) {
        return Err(Error::DimensionMismatch(format!(
            "noise vector of length {} in a {}-dimensional system",
            bad.len(),
            params.d()
        )));
    }
    Ok(Trajectory {
        states: propagate(params, noise),
        noise: Some(noise.to_vec()),
    })
}

fn propagate(params: &SystemParams, noise: &[Vector]) -> Vec<Vector> {
    let mut states = Vec::with_capacity(noise.len() + 1);
    states.push(Vector::zeros(params.d()));
    for eps in noise {
        let prev = states.last().expect("x_0 present");
        let next = &params.a * prev + &params.b * eps;
        states.push(next);
    }
    states
}

pub fn gram_stats(traj: &Trajectory) -> GramStatistics {
    let d = traj.dim();
    let mut gamma = Matrix::zeros(d, d);
    let mut sigma = Matrix::zeros(d, d);
    for w in traj.states.windows(2) {
        gamma.ger(1.0, &w[1], &w[0], 1.0);
        sigma.ger(1.0, &w[0], &w[0], 1.0);
    }
    GramStatistics { gamma, sigma }
}

/// `Â = Γ Σ⁻¹`.
pub fn least_squares(traj: &Trajectory) -> Result<Matrix> {
    least_squares_from_stats(&gram_stats(traj))
}

/// `Â = Γ Σ⁻¹`, refusing when `λ_min(Σ) ≤ 1e-12 · λ_max(Σ)`.
pub fn least_squares_from_stats(stats: &GramStatistics) -> Result<Matrix> {
    let (vals, _) = linalg::eig_sym(&stats.sigma)?;
    let top = vals[vals.len() - 1];
    let ratio = if top > 0.0 { vals[0] / top } else { 0.0 };
    if !(ratio > 1e-12) {
        return Err(Error::SingularCovariance(ratio));
    }
    let chol =
        nalgebra::Cholesky::new(stats.sigma.clone()).ok_or(Error::SingularCovariance(ratio))?;
    // Σ symmetric: Â = Γ Σ⁻¹ = (Σ⁻¹ Γᵀ)ᵀ
    Ok(chol.solve(&stats.gamma.transpose()).transpose())
}

/// Score `∇_A log f = (BBᵀ)⁻¹ (Γ − A Σ)`, computed from states alone.
pub fn sensitivity(params: &SystemParams, traj: &Trajectory) -> Matrix {
    sensitivity_from_stats(params, &gram_stats(traj))
}

pub fn sensitivity_from_stats(params: &SystemParams, stats: &GramStatistics) -> Matrix {
    &params.w * (&stats.gamma - &params.a * &stats.sigma)
}

/// `Σ_{i=1}^{N-1} (N − i) |A^{i-1} B|²_F`.
pub fn fisher_scalar(params: &SystemParams) -> f64 {
    let n = params.n;
    let mut acc = 0.0;
    let mut p = params.b.clone();
    for i in 1..n {
        acc += (n - i) as f64 * p.norm_squared();
        p = &params.a * p;
    }
    acc
}

/// Closed-form Fisher information `(Σ_{i=1}^{N-1} (N−i)|A^{i-1}B|²_F) (BBᵀ)⁻¹`.
pub fn fisher_information(params: &SystemParams) -> Matrix {
    &params.w * fisher_scalar(params)
}

/// Gaussian log-likelihood written in exponential-family form:
/// `⟨WA, Γ⟩ − ½⟨AᵀWA, Σ⟩ − (N/2)(d log 2π + log det BBᵀ) − ½ Σ_{i=1}^N x_iᵀ W x_i`
/// with `W = (BBᵀ)⁻¹`.
pub fn log_likelihood(params: &SystemParams, traj: &Trajectory) -> f64 {
    let stats = gram_stats(traj);
    let w = &params.w;
    let a = &params.a;
    let wa = w * a;
    let natural = wa.dot(&stats.gamma) - 0.5 * (a.transpose() * &wa).dot(&stats.sigma);
    let d = params.d() as f64;
    let n = traj.horizon() as f64;
    let log_det = (&params.b * params.b.transpose()).determinant().ln();
    let log_partition = 0.5 * n * (d * (2.0 * std::f64::consts::PI).ln() + log_det);
    let base: f64 = traj.states[1..].iter().map(|x| x.dot(&(w * x))).sum();
    natural - log_partition - 0.5 * base
}

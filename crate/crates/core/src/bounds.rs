//! Deterministic bound quantities: the expected covariate Gram matrix Ψ, the
//! frequency constant `L_{A,B}`, the deviation levels Δ₁ and Δ₂, the rate
//! function Φ, the Cramér–Rao matrix bound, and the explicit bounds available
//! for diagonalizable `A`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, Matrix};
use crate::lti::{fisher_scalar, SystemParams};

/// Default number of frequency grid points for [`l_ab`].
pub const DEFAULT_GRID_POINTS: usize = 4096;
pub const MIN_GRID_POINTS: usize = 64;

/// `Ψ = Σ_{k=1}^{N-1} (N − k) A^{k-1} BBᵀ A^{(k-1)ᵀ} = E Σ_{i=1}^{N-1} x_i x_iᵀ`.
pub fn psi(params: &SystemParams) -> Matrix {
    let n = params.n();
    let d = params.d();
    let mut out = Matrix::zeros(d, d);
    let mut p = params.b().clone();
    for k in 1..n {
        out += (&p * p.transpose()) * (n - k) as f64;
        p = params.a() * p;
    }
    (&out + out.transpose()) * 0.5
}

/// `L_{A,B} = sup_{s∈[0,1]} |Ψ^{-1/2} (Σ_{k=0}^{N-2} A^k e^{j2πks}) B|²_op`.
///
/// The supremum is taken over the grid `s = j/M` and then refined by a
/// golden-section search within one grid cell of the best grid point. The
/// result is never below the grid maximum.
pub fn l_ab(params: &SystemParams, grid_points: usize) -> Result<f64> {
    if grid_points < MIN_GRID_POINTS {
        return Err(Error::InvalidParameter(format!(
            "grid_points = {grid_points} is below the minimum {MIN_GRID_POINTS}"
        )));
    }
    let r = linalg::sym_inv_sqrt(&psi(params))?;
    let terms = params.n() - 1;
    // G_k = Ψ^{-1/2} A^k B, k = 0..N-2
    let mut g = Vec::with_capacity(terms);
    let mut ak_b = params.b().clone();
    for _ in 0..terms {
        g.push(&r * &ak_b);
        ak_b = params.a() * ak_b;
    }

    let d = params.d();
    let mut re = Matrix::zeros(d, d);
    let mut im = Matrix::zeros(d, d);
    let mut eval_angles = |angle: &dyn Fn(usize) -> f64| -> f64 {
        re.fill(0.0);
        im.fill(0.0);
        for (k, gk) in g.iter().enumerate() {
            let th = angle(k);
            let (sn, cs) = th.sin_cos();
            re.zip_apply(gk, |r, g| *r += cs * g);
            im.zip_apply(gk, |r, g| *r += sn * g);
        }
        linalg::complex_op_norm_sq(&re, &im)
    };

    let m = grid_points;
    let mut best = f64::NEG_INFINITY;
    let mut best_j = 0;
    for j in 0..m {
        // exact phase reduction: 2π k j / M with (k j) mod M
        let v = eval_angles(&|k| 2.0 * PI * ((k * j) % m) as f64 / m as f64);
        if v > best {
            best = v;
            best_j = j;
        }
    }

    let mut f = |s: f64| eval_angles(&|k| 2.0 * PI * (k as f64 * s).fract());
    let h = 1.0 / m as f64;
    let centre = best_j as f64 * h;
    let (mut lo, mut hi) = (centre - h, centre + h);
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..60 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(best.max(f1).max(f2))
}

/// `Δ₁(t) = (d ∨ t) L + ((d ∨ t) L)^{1/2}`, with `t` clamped at zero.
pub fn delta1(d: usize, t: f64, l: f64) -> f64 {
    let level = (d as f64).max(t.max(0.0));
    level * l + (level * l).sqrt()
}

/// `Δ₂ = d L`.
pub fn delta2(d: usize, l: f64) -> f64 {
    d as f64 * l
}

/// Rate function: `N/(1−a) + 1/(1−a)²` for `a < 1`, `N(N−1)/2` at `a = 1`
/// (within 1e-12), `a^N/(a−1)²` for `a > 1`.
pub fn phi(a: f64, n: usize) -> f64 {
    let nf = n as f64;
    if (a - 1.0).abs() <= 1e-12 {
        nf * (nf - 1.0) / 2.0
    } else if a < 1.0 {
        nf / (1.0 - a) + 1.0 / (1.0 - a).powi(2)
    } else {
        a.powf(nf) / (a - 1.0).powi(2)
    }
}

/// `Σ_{i=0}^{N-2} (N − 1 − i) a^i` by direct accumulation.
pub fn geom_sum(a: f64, n: usize) -> f64 {
    let mut acc = 0.0;
    let mut p = 1.0;
    for i in 0..n.saturating_sub(1) {
        acc += (n - 1 - i) as f64 * p;
        p *= a;
    }
    acc
}

/// `Φ(a, N) ≥ geom_sum(a, N)` up to rounding. For `a > 1` the exact gap is
/// about `N/a` while both sides are of order `a^N`, so for large `N` the two
/// agree to the last bit and only a few-ulp relative slack is meaningful.
pub fn phi_dominates_geom_sum(a: f64, n: usize) -> bool {
    phi(a, n) >= geom_sum(a, n) * (1.0 - 8.0 * f64::EPSILON)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomLower {
    /// `N ≥ 1/(α(1 − a))`
    pub valid: bool,
    /// `(1 − α) N / (1 − a)`
    pub lower: f64,
}

/// Lower estimate of [`geom_sum`] for `a ∈ (0, 1)`.
pub fn geom_sum_lower(a: f64, n: usize, alpha: f64) -> GeomLower {
    let nf = n as f64;
    GeomLower {
        valid: nf >= 1.0 / (alpha * (1.0 - a)),
        lower: (1.0 - alpha) * nf / (1.0 - a),
    }
}

/// Which level `t` feeds `Δ₁(t)` in the Cramér–Rao bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaLevel {
    /// `t = log(L / ε)`
    #[default]
    Statement,
    /// `t = log(C Δ₂ / ε)`
    Proof,
}

impl fmt::Display for DeltaLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Statement => "log(L/eps)",
            Self::Proof => "log(C*Delta2/eps)",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrSettings {
    pub epsilon: f64,
    /// The unspecified universal constant `C`.
    pub constant: f64,
    pub grid_points: usize,
    pub level: DeltaLevel,
}

impl Default for CrSettings {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            constant: 1.0,
            grid_points: DEFAULT_GRID_POINTS,
            level: DeltaLevel::Statement,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub psi: Matrix,
    pub l_ab: f64,
    /// Level `t` used in Δ₁, after clamping.
    pub t_used: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// `Φ(|A|²_op)`
    pub phi_value: f64,
    pub cr_matrix: Matrix,
    pub mse_lower: f64,
    pub epsilon_used: f64,
    pub constant_used: f64,
    pub level: DeltaLevel,
}

/// Cramér–Rao-type lower bound on `E(Â − A)(Â − A)ᵀ` for least squares:
/// `d²(1−ε)²/(1+CΔ)² · BBᵀ / Σ_{i=1}^{N-1}(N−i)|A^{i-1}B|²_F`, with the scalar
/// form `(1−ε)²/(1+CΔ)² · d²/Φ(|A|²_op)`.
pub fn cr_bound(params: &SystemParams, settings: &CrSettings) -> Result<BoundReport> {
    let CrSettings {
        epsilon,
        constant,
        grid_points,
        level,
    } = *settings;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must lie in (0, 1)"
        )));
    }
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "constant = {constant} must be positive"
        )));
    }
    let d = params.d();
    let psi_m = psi(params);
    let l = l_ab(params, grid_points)?;
    let d2 = delta2(d, l);
    let t = match level {
        DeltaLevel::Statement => (l / epsilon).ln(),
        DeltaLevel::Proof => (constant * d2 / epsilon).ln(),
    }
    .max(0.0);
    let d1 = delta1(d, t, l);
    let shrink = (1.0 - epsilon).powi(2) / (1.0 + constant * d1).powi(2);
    let dd = (d * d) as f64;
    let bbt = params.b() * params.b().transpose();
    let cr_matrix = bbt * (shrink * dd / fisher_scalar(params));
    let a_op = linalg::op_norm(params.a());
    let phi_value = phi(a_op * a_op, params.n());
    Ok(BoundReport {
        psi: psi_m,
        l_ab: l,
        t_used: t,
        delta1: d1,
        delta2: d2,
        phi_value,
        cr_matrix,
        mse_lower: shrink * dd / phi_value,
        epsilon_used: epsilon,
        constant_used: constant,
        level,
    })
}

/// Eigen-decomposition `A = S diag(λ) S⁻¹` of a diagonalizable matrix with the
/// spectrum split into stable (`|λ| < 1 − tol`), unstable (`|λ| > 1 + tol`)
/// and limit (the rest) parts.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSplit {
    /// Columns are unit-norm eigenvectors.
    pub s_basis: CMatrix,
    pub eigenvalues: Vec<Complex<f64>>,
    pub stable: Vec<usize>,
    pub unstable: Vec<usize>,
    pub limit: Vec<usize>,
    /// `B̃ = S⁻¹ B`; with no `B` attached this is `S⁻¹`.
    pub b_tilde: CMatrix,
    pub tol: f64,
    s_inverse: CMatrix,
}

impl SpectralSplit {
    /// Replaces `B̃` by `S⁻¹ B`.
    pub fn with_b(mut self, b: &Matrix) -> Result<Self> {
        if b.nrows() != self.s_basis.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, A has dimension {}",
                b.nrows(),
                self.s_basis.nrows()
            )));
        }
        self.b_tilde = &self.s_inverse * linalg::to_complex(b);
        Ok(self)
    }

    fn moduli<'a>(&'a self, idx: &'a [usize]) -> impl Iterator<Item = f64> + 'a {
        idx.iter().map(move |&i| self.eigenvalues[i].norm())
    }

    /// `|A_s|_op`, `None` when there is no stable part.
    pub fn stable_norm(&self) -> Option<f64> {
        self.moduli(&self.stable).reduce(f64::max)
    }

    /// `s_min(A_s)`.
    pub fn stable_smin(&self) -> Option<f64> {
        self.moduli(&self.stable).reduce(f64::min)
    }

    /// `|A_u⁻¹|_op`.
    pub fn unstable_inv_norm(&self) -> Option<f64> {
        self.moduli(&self.unstable)
            .reduce(f64::min)
            .map(|m| 1.0 / m)
    }

    /// `s_min(A_u⁻¹)`.
    pub fn unstable_inv_smin(&self) -> Option<f64> {
        self.moduli(&self.unstable)
            .reduce(f64::max)
            .map(|m| 1.0 / m)
    }

    /// `cond²(B̃)`.
    pub fn cond_sq(&self) -> Result<f64> {
        Ok(linalg::complex_cond(&self.b_tilde)?.powi(2))
    }

    /// `1 − (|A_u⁻¹| ∨ |A_s|)`; empty parts count as zero.
    pub fn gap(&self) -> f64 {
        1.0 - self
            .unstable_inv_norm()
            .unwrap_or(0.0)
            .max(self.stable_norm().unwrap_or(0.0))
    }

    /// `s²_min(A_u⁻¹) ∨ s²_min(A_s)`; empty parts count as zero.
    pub fn max_smin_sq(&self) -> f64 {
        self.unstable_inv_smin()
            .unwrap_or(0.0)
            .powi(2)
            .max(self.stable_smin().unwrap_or(0.0).powi(2))
    }
}

/// Splits the spectrum of a diagonalizable `a`. Eigenvectors come from the
/// null space of `a − λI`; an eigenvalue whose geometric multiplicity falls
/// short of its algebraic multiplicity, an ill-conditioned eigenbasis, or a
/// failed reconstruction is reported as non-diagonalizable.
pub fn spectral_split(a: &Matrix, tol: f64) -> Result<SpectralSplit> {
    let d = linalg::ensure_square(a)?;
    linalg::ensure_finite(a)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance {tol} must be positive"
        )));
    }
    let scale = linalg::op_norm(a).max(1.0);
    let eig = a.complex_eigenvalues();
    let raw: Vec<Complex<f64>> = eig.iter().copied().collect();

    // cluster numerically repeated eigenvalues
    let cluster_tol = 1e-5 * scale;
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..d {
        match clusters
            .iter_mut()
            .find(|c| c.iter().any(|&j| (raw[j] - raw[i]).norm() <= cluster_tol))
        {
            Some(c) => c.push(i),
            None => clusters.push(vec![i]),
        }
    }

    let ac = linalg::to_complex(a);
    let null_tol = 1e-6 * scale;
    let mut s_basis = CMatrix::zeros(d, d);
    let mut eigenvalues = Vec::with_capacity(d);
    let mut col = 0;
    for c in &clusters {
        let m = c.len();
        let lambda = c.iter().map(|&j| raw[j]).sum::<Complex<f64>>() / m as f64;
        let shifted = &ac - CMatrix::identity(d, d) * lambda;
        let dec = nalgebra::SVD::try_new(shifted, false, true, f64::EPSILON, 100_000)
            .ok_or(Error::NoConvergence("complex SVD"))?;
        let v_t = dec.v_t.ok_or(Error::NoConvergence("complex SVD"))?;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| dec.singular_values[i].total_cmp(&dec.singular_values[j]));
        let null_dim = order
            .iter()
            .take_while(|&&i| dec.singular_values[i] <= null_tol)
            .count();
        if null_dim < m {
            return Err(Error::NotDiagonalizable(format!(
                "eigenvalue {:.6}{:+.6}i has algebraic multiplicity {m} but only {null_dim} independent eigenvectors",
                lambda.re, lambda.im
            )));
        }
        for &i in order.iter().take(m) {
            let v = v_t.row(i).transpose().map(|z| z.conj());
            let norm = v.norm();
            s_basis.set_column(col, &(v / Complex::new(norm, 0.0)));
            eigenvalues.push(lambda);
            col += 1;
        }
    }

    let cond = linalg::complex_cond(&s_basis)?;
    if !(cond <= 1e8) {
        return Err(Error::NotDiagonalizable(format!(
            "eigenvector basis condition number {cond:.3e} exceeds 1e8"
        )));
    }
    let s_inverse = s_basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotDiagonalizable("eigenvector basis is singular".into()))?;
    let lam = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(eigenvalues.clone()));
    let recon = &s_basis * lam * &s_inverse;
    let err = (recon - &ac).norm() / a.norm().max(1e-300);
    if !(err <= 1e-8) && a.norm() > 0.0 {
        return Err(Error::NotDiagonalizable(format!(
            "reconstruction error {err:.3e} exceeds 1e-8"
        )));
    }

    let mut stable = Vec::new();
    let mut unstable = Vec::new();
    let mut limit = Vec::new();
    for (i, l) in eigenvalues.iter().enumerate() {
        let r = l.norm();
        if r < 1.0 - tol {
            stable.push(i);
        } else if r > 1.0 + tol {
            unstable.push(i);
        } else {
            limit.push(i);
        }
    }
    Ok(SpectralSplit {
        b_tilde: s_inverse.clone(),
        s_basis,
        eigenvalues,
        stable,
        unstable,
        limit,
        tol,
        s_inverse,
    })
}

/// Split of `params.a()` with tolerance `1/N` and `B̃ = S⁻¹B` attached.
pub fn spectral_split_for(params: &SystemParams) -> Result<SpectralSplit> {
    spectral_split(params.a(), 1.0 / params.n() as f64)?.with_b(params.b())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabUpperBound {
    pub valid: bool,
    pub value: f64,
    /// Smallest `N` for which the bound is claimed.
    pub threshold: f64,
}

/// Upper estimate of `L_{A,B}` for diagonalizable `A`:
/// `(1/(1−|A_u⁻¹|) + 1/(1−|A_s|) + 1) cond²(B̃)` divided by the minimum of
/// `(1−α)N/(1−s²_min(A_u⁻¹))`, `(1−α)N/(1−s²_min(A_s))` and `1/3`.
/// Reciprocal and minimum terms are included only for nonempty parts.
pub fn lab_upper_bound(split: &SpectralSplit, n: usize, alpha: f64) -> Result<LabUpperBound> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} must lie in (0, 1)"
        )));
    }
    let nf = n as f64;
    let mut numerator = 1.0;
    let mut denominator = f64::INFINITY;
    if let (Some(norm), Some(smin)) = (split.stable_norm(), split.stable_smin()) {
        numerator += 1.0 / (1.0 - norm);
        denominator = denominator.min((1.0 - alpha) * nf / (1.0 - smin * smin));
    }
    if let (Some(norm), Some(smin)) = (split.unstable_inv_norm(), split.unstable_inv_smin()) {
        numerator += 1.0 / (1.0 - norm);
        denominator = denominator.min((1.0 - alpha) * nf / (1.0 - smin * smin));
    }
    if !split.limit.is_empty() {
        denominator = denominator.min(1.0 / 3.0);
    }
    let threshold = 1.0 / (alpha * (1.0 - split.max_smin_sq()));
    Ok(LabUpperBound {
        valid: nf >= threshold,
        value: numerator / denominator * split.cond_sq()?,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropBound {
    /// Horizon from which the bound is claimed.
    pub n_min: u64,
    pub valid: bool,
    pub mse_lower: f64,
}

fn ceil_count(x: f64) -> u64 {
    if x.is_finite() {
        x.ceil().max(0.0) as u64
    } else {
        u64::MAX
    }
}

/// Bound for `A` without limit-stable eigenvalues:
/// `(1−ε)²/(1+ε)² · d²/Φ(|A|²_op)`, claimed for
/// `N ≥ (d ∨ log(1/ε)) cond²(B̃) / (ε² (1 − |A_u⁻¹| ∨ |A_s|))`.
pub fn prop_bound_no_limit(
    params: &SystemParams,
    split: &SpectralSplit,
    epsilon: f64,
) -> Result<PropBound> {
    if !split.limit.is_empty() {
        return Err(Error::InvalidParameter(
            "A has limit-stable eigenvalues; use the limit-part bound".into(),
        ));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must lie in (0, 1)"
        )));
    }
    let d = params.d() as f64;
    let level = d.max((1.0 / epsilon).ln());
    let n_min = ceil_count(level * split.cond_sq()? / (epsilon * epsilon * split.gap()));
    let a_op = linalg::op_norm(params.a());
    let mse_lower =
        ((1.0 - epsilon) / (1.0 + epsilon)).powi(2) * d * d / phi(a_op * a_op, params.n());
    Ok(PropBound {
        n_min,
        valid: params.n() as u64 >= n_min,
        mse_lower,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitPropBound {
    pub n_min: u64,
    pub valid: bool,
    pub delta_eps: f64,
    /// Formula value with leading constant 1; only the rate is meaningful.
    pub mse_lower: f64,
}

/// Bound for `A` with limit-stable eigenvalues:
/// `(1−ε)² (d/Δ_ε)² / Φ(|A|²_op)` with
/// `Δ_ε = (d ∨ log(cond²(B̃)/(ε·gap))) cond²(B̃)/gap`, `gap = 1 − |A_u⁻¹| ∨ |A_s|`,
/// claimed for `N ≥ 2/(1 − s²_min(A_u⁻¹) ∨ s²_min(A_s))`.
pub fn prop_bound_with_limit(
    params: &SystemParams,
    split: &SpectralSplit,
    epsilon: f64,
) -> Result<LimitPropBound> {
    if split.limit.is_empty() {
        return Err(Error::InvalidParameter(
            "A has no limit-stable eigenvalues; use the no-limit bound".into(),
        ));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must lie in (0, 1)"
        )));
    }
    let d = params.d() as f64;
    let cond_sq = split.cond_sq()?;
    let gap = split.gap();
    let delta_eps = d.max((cond_sq / (epsilon * gap)).ln()) * cond_sq / gap;
    let a_op = linalg::op_norm(params.a());
    let mse_lower =
        (1.0 - epsilon).powi(2) * (d / delta_eps).powi(2) / phi(a_op * a_op, params.n());
    let n_min = ceil_count(2.0 / (1.0 - split.max_smin_sq()));
    Ok(LimitPropBound {
        n_min,
        valid: params.n() as u64 >= n_min,
        delta_eps,
        mse_lower,
    })
}

/// Block rotation `scale · R(angle)` on consecutive coordinate pairs; an odd
/// trailing coordinate gets `scale`.
pub fn rotation_matrix(d: usize, angle: f64, scale: f64) -> Matrix {
    let mut m = Matrix::zeros(d, d);
    let (s, c) = angle.sin_cos();
    let mut i = 0;
    while i + 1 < d {
        m[(i, i)] = scale * c;
        m[(i, i + 1)] = -scale * s;
        m[(i + 1, i)] = scale * s;
        m[(i + 1, i + 1)] = scale * c;
        i += 2;
    }
    if d % 2 == 1 {
        m[(d - 1, d - 1)] = scale;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;
    use crate::rng::RandomStream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(a: Matrix, b: Matrix, n: usize) -> SystemParams {
        SystemParams::new(a, b, n).unwrap()
    }

    fn scalar(a: f64, n: usize) -> SystemParams {
        params(
            Matrix::from_element(1, 1, a),
            Matrix::from_element(1, 1, 1.0),
            n,
        )
    }

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_row_slice(v))
    }

    #[test]
    fn psi_examples() {
        for d in 1..4 {
            let p = params(Matrix::zeros(d, d), Matrix::identity(d, d), 7);
            assert!((psi(&p) - Matrix::identity(d, d) * 6.0).amax() < 1e-14);
        }
        let p = params(Matrix::identity(2, 2) * 0.5, Matrix::identity(2, 2), 3);
        assert!((psi(&p) - Matrix::identity(2, 2) * 2.25).amax() < 1e-14);
    }

    #[test]
    fn psi_matches_empirical_gram() {
        let p = params(rotation_matrix(2, 0.4, 0.7), diag(&[1.0, 2.0]), 6);
        let root = RandomStream::new(1);
        let trials = 100_000;
        let mut acc = Matrix::zeros(2, 2);
        for k in 0..trials {
            let t = crate::lti::simulate(&p, &root.derive(k), false);
            for x in &t.states[1..6] {
                acc += x * x.transpose();
            }
        }
        let emp = acc / trials as f64;
        let exact = psi(&p);
        assert!((&emp - &exact).norm() / exact.norm() < 0.02);
    }

    #[test]
    fn psi_dominates_first_term() {
        let mut rng = RandomStream::new(2).rng();
        for _ in 0..50 {
            let a = linalg::gaussian_matrix(3, 3, &mut rng) * 0.5;
            let b = linalg::gaussian_matrix(3, 3, &mut rng) + Matrix::identity(3, 3) * 3.0;
            let n = 12;
            let p = params(a, b.clone(), n);
            let first = &b * b.transpose() * (n - 1) as f64;
            assert!(linalg::is_psd_dominated(&first, &psi(&p), 1e-9 * first.norm()).unwrap());
        }
    }

    #[test]
    fn l_ab_memoryless() {
        for d in 1..4 {
            for n in [5, 20] {
                let p = params(Matrix::zeros(d, d), Matrix::identity(d, d), n);
                assert_relative_eq!(
                    l_ab(&p, 64).unwrap(),
                    1.0 / (n as f64 - 1.0),
                    max_relative = 1e-12
                );
            }
        }
        assert!(l_ab(&scalar(0.5, 10), 63).is_err());
    }

    #[test]
    fn l_ab_scalar_matches_dense_grid() {
        for &(a, n) in &[(0.3, 10), (0.7, 25), (-0.6, 12), (0.95, 40)] {
            let p = scalar(a, n);
            let psi_s: f64 = (1..n)
                .map(|k| (n - k) as f64 * a.powi(2 * (k as i32 - 1)))
                .sum();
            let m = 1usize << 20;
            let mut best = 0.0_f64;
            for j in 0..m {
                let s = j as f64 / m as f64;
                let (mut re, mut im) = (0.0, 0.0);
                for k in 0..(n - 1) {
                    let th = 2.0 * PI * k as f64 * s;
                    re += a.powi(k as i32) * th.cos();
                    im += a.powi(k as i32) * th.sin();
                }
                best = best.max((re * re + im * im) / psi_s);
            }
            let got = l_ab(&p, DEFAULT_GRID_POINTS).unwrap();
            assert!(got >= best * (1.0 - 1e-9), "a={a}: {got} < {best}");
            assert!(got <= best * (1.0 + 1e-6), "a={a}: {got} > {best}");
            if a > 0.0 {
                let at_zero = (1.0 - a.powi(n as i32 - 1)).powi(2) / (1.0 - a).powi(2) / psi_s;
                assert_relative_eq!(got, at_zero, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn l_ab_grid_convergence() {
        let mut rng = RandomStream::new(3).rng();
        for _ in 0..10 {
            let g = linalg::gaussian_matrix(3, 3, &mut rng);
            let a = &g * (0.9 / linalg::op_norm(&g));
            let b = linalg::gaussian_matrix(3, 3, &mut rng) + Matrix::identity(3, 3) * 2.0;
            let p = params(a, b, 30);
            let coarse = l_ab(&p, 4096).unwrap();
            let fine = l_ab(&p, 8192).unwrap();
            assert!((coarse - fine).abs() / fine < 1e-3);
        }
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta1(2, 1.0, 0.0), 0.0);
        assert_relative_eq!(delta1(2, 1.0, 1.0), 2.0 + 2.0_f64.sqrt(), epsilon = 1e-15);
        assert_eq!(delta1(2, -5.0, 1.0), delta1(2, 0.0, 1.0));
        assert_eq!(delta2(3, 0.0), 0.0);
        assert_relative_eq!(delta2(3, 0.5), 1.5);
        let mut prev_t = 0.0;
        for i in 0..50 {
            let t = i as f64 * 0.3;
            let v = delta1(3, t, 0.2);
            assert!(v >= prev_t);
            prev_t = v;
            let mut prev_l = 0.0;
            for j in 0..20 {
                let w = delta1(3, t, j as f64 * 0.1);
                assert!(w >= prev_l);
                prev_l = w;
            }
        }
    }

    #[test]
    fn phi_and_geom_examples() {
        assert_relative_eq!(phi(0.0, 10), 11.0);
        assert_relative_eq!(phi(1.0, 10), 45.0);
        assert_relative_eq!(phi(2.0, 3), 8.0);
        assert_relative_eq!(geom_sum(2.0, 3), 4.0);
        assert_relative_eq!(geom_sum(1.0, 10), 45.0);
        assert_relative_eq!(geom_sum(0.0, 10), 9.0);
        let g = geom_sum_lower(0.5, 10, 0.5);
        assert!(g.valid);
        assert_relative_eq!(g.lower, 10.0);
        assert!(!geom_sum_lower(0.5, 3, 0.5).valid);
    }

    #[test]
    fn phi_dominates_geom_sum_on_grid() {
        for i in 0..200 {
            let a = 3.0 * i as f64 / 199.0;
            for n in 2..=50 {
                assert!(phi_dominates_geom_sum(a, n), "a={a} n={n}");
                if a <= 1.0 || n < 20 {
                    assert!(phi(a, n) >= geom_sum(a, n), "a={a} n={n}");
                }
            }
        }
    }

    #[test]
    fn geom_lower_holds_when_valid() {
        for i in 1..100 {
            let a = i as f64 / 100.0;
            for n in 2..200 {
                for alpha in [0.1, 0.5, 0.9] {
                    let g = geom_sum_lower(a, n, alpha);
                    if g.valid {
                        assert!(geom_sum(a, n) >= g.lower, "a={a} n={n} alpha={alpha}");
                    }
                }
            }
        }
    }

    #[test]
    fn cr_bound_memoryless() {
        let eps = 0.1;
        for d in 1..4 {
            let n = 20;
            let p = params(Matrix::zeros(d, d), Matrix::identity(d, d), n);
            let r = cr_bound(
                &p,
                &CrSettings {
                    epsilon: eps,
                    ..Default::default()
                },
            )
            .unwrap();
            let l = 1.0 / (n as f64 - 1.0);
            assert_relative_eq!(r.l_ab, l, max_relative = 1e-12);
            let t = (l / eps).ln().max(0.0);
            let dl = delta1(d, t, l);
            let df = d as f64;
            let expected = df * (1.0 - eps).powi(2) / ((1.0 + dl).powi(2) * (n as f64 - 1.0));
            assert!((&r.cr_matrix - Matrix::identity(d, d) * expected).amax() < 1e-14);
            assert_relative_eq!(
                r.mse_lower,
                (1.0 - eps).powi(2) / (1.0 + dl).powi(2) * df * df / (n as f64 + 1.0),
                max_relative = 1e-12
            );
            assert_eq!(r.constant_used, 1.0);
        }
    }

    #[test]
    fn cr_bound_rejects_bad_settings() {
        let p = scalar(0.5, 10);
        for eps in [0.0, 1.0, -0.5] {
            assert!(cr_bound(
                &p,
                &CrSettings {
                    epsilon: eps,
                    ..Default::default()
                }
            )
            .is_err());
        }
        assert!(cr_bound(
            &p,
            &CrSettings {
                constant: 0.0,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn cr_bound_ideal_limit() {
        // ε → 0 and C → 0 recover d² BBᵀ / Σ(N−i)|A^{i-1}B|²_F
        let p = params(diag(&[0.5, -0.3]), diag(&[1.0, 3.0]), 15);
        let r = cr_bound(
            &p,
            &CrSettings {
                epsilon: 1e-12,
                constant: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        let ideal = p.b() * p.b().transpose() * (4.0 / fisher_scalar(&p));
        assert!((&r.cr_matrix - ideal).norm() / r.cr_matrix.norm() < 1e-9);
    }

    #[test]
    fn cr_bound_scalarisation_and_b_invariance() {
        let mut rng = RandomStream::new(4).rng();
        for _ in 0..20 {
            let a = linalg::gaussian_matrix(2, 2, &mut rng) * 0.4;
            let b = linalg::gaussian_matrix(2, 2, &mut rng) + Matrix::identity(2, 2) * 2.0;
            let p = params(a, b, 25);
            let r = cr_bound(&p, &CrSettings::default()).unwrap();
            assert!(r.cr_matrix.trace() >= r.mse_lower * (1.0 - 1e-12));
            assert!(linalg::lambda_min(&r.cr_matrix).unwrap() >= 0.0);
            let q = p.with_b(p.b() * 3.0).unwrap();
            let r3 = cr_bound(&q, &CrSettings::default()).unwrap();
            assert_relative_eq!(r.mse_lower, r3.mse_lower, max_relative = 1e-9);
            assert_relative_eq!(r.l_ab, r3.l_ab, max_relative = 1e-9);
        }
    }

    #[test]
    fn cr_bound_level_switch() {
        let p = params(Matrix::zeros(2, 2), Matrix::identity(2, 2), 5);
        // L = 1/4: statement level log(2.5) < d, proof level log(C·2·L/ε) = log(5) < d
        let s = cr_bound(
            &p,
            &CrSettings {
                level: DeltaLevel::Statement,
                ..Default::default()
            },
        )
        .unwrap();
        let q = cr_bound(
            &p,
            &CrSettings {
                level: DeltaLevel::Proof,
                constant: 100.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_relative_eq!(s.t_used, 2.5_f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(q.t_used, (100.0 * 0.5 / 0.1_f64).ln(), max_relative = 1e-12);
        assert!(q.delta1 > s.delta1);
    }

    #[test]
    fn split_examples() {
        let s = spectral_split(&diag(&[0.5, 2.0]), 0.01).unwrap();
        assert_eq!(s.stable.len(), 1);
        assert_eq!(s.unstable.len(), 1);
        assert!(s.limit.is_empty());
        assert_relative_eq!(s.eigenvalues[s.stable[0]].re, 0.5, epsilon = 1e-12);
        assert_relative_eq!(s.eigenvalues[s.unstable[0]].re, 2.0, epsilon = 1e-12);

        let r = spectral_split(&rotation_matrix(2, 0.7, 1.0), 0.01).unwrap();
        assert_eq!(r.limit.len(), 2);
        assert!(r.stable.is_empty() && r.unstable.is_empty());

        let s = spectral_split(&(Matrix::identity(3, 3) * 0.5), 0.01).unwrap();
        assert_eq!(s.stable.len(), 3);
        assert_relative_eq!(s.cond_sq().unwrap(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn split_rejects_jordan_block() {
        let j = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let err = spectral_split(&j, 0.01).unwrap_err();
        assert!(matches!(err, Error::NotDiagonalizable(_)));
        assert!(err.to_string().contains("not diagonalizable"));
        let j3 = Matrix::from_row_slice(3, 3, &[0.5, 1.0, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0, 0.5]);
        assert!(matches!(
            spectral_split(&j3, 0.01),
            Err(Error::NotDiagonalizable(_))
        ));
    }

    #[test]
    fn split_reconstructs_random_diagonalizable() {
        let mut rng = RandomStream::new(5).rng();
        for trial in 0..200 {
            let d = 1 + trial % 5;
            let s = linalg::gaussian_matrix(d, d, &mut rng) + Matrix::identity(d, d) * 2.0;
            let lam = linalg::gaussian_vector(d, &mut rng);
            let a = &s * Matrix::from_diagonal(&lam) * s.clone().try_inverse().unwrap();
            let split = spectral_split(&a, 0.05).unwrap();
            let sb = &split.s_basis;
            let l = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(split.eigenvalues.clone()));
            let recon = sb * l * sb.clone().try_inverse().unwrap();
            let err = (recon - linalg::to_complex(&a)).norm() / a.norm();
            assert!(err < 1e-8);
            assert_eq!(
                split.stable.len() + split.unstable.len() + split.limit.len(),
                d
            );
        }
    }

    #[test]
    fn lab_upper_bound_scalar() {
        let n = 200;
        let p = scalar(0.5, n);
        let split = spectral_split_for(&p).unwrap();
        let u = lab_upper_bound(&split, n, 0.5).unwrap();
        assert!(u.valid);
        assert_relative_eq!(u.value, 3.0 / (0.5 * n as f64 / 0.75), max_relative = 1e-12);
        assert!(l_ab(&p, DEFAULT_GRID_POINTS).unwrap() <= u.value);
        assert!(!lab_upper_bound(&split, 2, 0.5).unwrap().valid);
        assert!(lab_upper_bound(&split, 3, 0.5).unwrap().valid);
        assert_relative_eq!(u.threshold, 1.0 / (0.5 * 0.75), max_relative = 1e-12);
    }

    #[test]
    fn lab_upper_bound_scales_with_condition() {
        let a = diag(&[0.5, 0.3]);
        let p1 = params(a.clone(), Matrix::identity(2, 2), 50);
        let p2 = params(a, diag(&[1.0, 4.0]), 50);
        let u1 = lab_upper_bound(&spectral_split_for(&p1).unwrap(), 50, 0.5).unwrap();
        let u2 = lab_upper_bound(&spectral_split_for(&p2).unwrap(), 50, 0.5).unwrap();
        assert_relative_eq!(u2.value, 16.0 * u1.value, max_relative = 1e-10);
    }

    #[test]
    fn prop_no_limit_scalar() {
        let p = scalar(0.5, 500);
        let split = spectral_split_for(&p).unwrap();
        let b = prop_bound_no_limit(&p, &split, 0.1).unwrap();
        assert_eq!(b.n_min, 461);
        assert!(b.valid);
        assert_relative_eq!(
            b.mse_lower,
            (0.9_f64 / 1.1).powi(2) / phi(0.25, 500),
            max_relative = 1e-12
        );
        let tiny = prop_bound_no_limit(&p, &split, 1e-9).unwrap();
        assert_relative_eq!(tiny.mse_lower, 1.0 / phi(0.25, 500), max_relative = 1e-8);
        assert!(prop_bound_with_limit(&p, &split, 0.1).is_err());
    }

    #[test]
    fn prop_no_limit_below_cr_ideal() {
        let mut rng = RandomStream::new(6).rng();
        for _ in 0..20 {
            let a = diag(&[
                rand::Rng::random_range(&mut rng, -0.9..0.9),
                rand::Rng::random_range(&mut rng, -0.9..0.9),
            ]);
            let p = params(a, Matrix::identity(2, 2), 100);
            let split = spectral_split_for(&p).unwrap();
            let b = prop_bound_no_limit(&p, &split, 0.1).unwrap();
            let ideal = cr_bound(
                &p,
                &CrSettings {
                    epsilon: 1e-12,
                    constant: 1e-12,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(b.mse_lower < ideal.mse_lower);
        }
    }

    #[test]
    fn prop_with_limit_cases() {
        let p = params(rotation_matrix(2, 0.7, 1.0), Matrix::identity(2, 2), 64);
        let split = spectral_split_for(&p).unwrap();
        assert!(prop_bound_no_limit(&p, &split, 0.1).is_err());
        let b = prop_bound_with_limit(&p, &split, 0.1).unwrap();
        assert!(b.delta_eps.is_finite() && b.mse_lower > 0.0);
        assert_eq!(b.n_min, 2);
        assert!(2.0 / b.delta_eps <= 1.0);

        let mut rng = RandomStream::new(7).rng();
        for _ in 0..50 {
            let theta = rand::Rng::random_range(&mut rng, 0.1..3.0);
            let r = rand::Rng::random_range(&mut rng, 0.05..0.95);
            let mut a = Matrix::zeros(3, 3);
            a.view_mut((0, 0), (2, 2))
                .copy_from(&rotation_matrix(2, theta, 1.0));
            a[(2, 2)] = r;
            let b = linalg::gaussian_matrix(3, 3, &mut rng) + Matrix::identity(3, 3) * 3.0;
            let p = params(a, b, 40);
            let split = spectral_split_for(&p).unwrap();
            let bound = prop_bound_with_limit(&p, &split, 0.1).unwrap();
            assert!(bound.mse_lower > 0.0 && bound.delta_eps.is_finite());
            assert!(3.0 / bound.delta_eps <= 1.0);
        }
    }

    #[test]
    fn rotation_matrix_shape() {
        let r = rotation_matrix(3, 0.3, 0.9);
        assert_relative_eq!(r[(2, 2)], 0.9);
        assert_relative_eq!(linalg::op_norm(&r), 0.9, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn phi_dominates_geom(a in 0.0f64..3.0, n in 2usize..60) {
            prop_assert!(phi_dominates_geom_sum(a, n));
        }

        #[test]
        fn delta1_monotone(t1 in 0.0f64..20.0, dt in 0.0f64..5.0, l in 0.0f64..3.0, d in 1usize..6) {
            prop_assert!(delta1(d, t1 + dt, l) >= delta1(d, t1, l));
            prop_assert!(delta1(d, t1, l + dt) >= delta1(d, t1, l));
        }
    }
}

//! Seeded Monte Carlo experiments for the exact identities, the lower bounds
//! and the concentration statements. Trial `i` of every experiment draws from
//! `stream.derive(i)`, and accumulation goes through [`crate::mc`], so results
//! do not depend on the worker count.

use crate::bounds::{self, BoundReport, CrSettings};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::lti::{self, SystemParams, Trajectory};
use crate::mc::{fold_trials, MatrixMoments, ScalarMoments};
use crate::minimax::{self, PriorSpec};
use crate::rng::RandomStream;

/// Allowed share of trials with a singular sample covariance.
pub const MAX_FAILED_FRACTION: f64 = 1e-3;

fn ensure_trials(trials: u64) -> Result<()> {
    if trials < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 trials, got {trials}"
        )));
    }
    Ok(())
}

fn check_failures(failed: u64, trials: u64) -> Result<()> {
    if failed as f64 > MAX_FAILED_FRACTION * trials as f64 {
        return Err(Error::TooManyFailedTrials {
            failed: failed as usize,
            trials: trials as usize,
        });
    }
    Ok(())
}

/// Monte Carlo mean of a matrix statistic with entrywise standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McMatrix {
    pub mean: Matrix,
    pub std_error: Matrix,
    pub trials: u64,
}

impl From<MatrixMoments> for McMatrix {
    fn from(m: MatrixMoments) -> Self {
        Self {
            mean: m.mean(),
            std_error: m.std_error(),
            trials: m.count,
        }
    }
}

/// Entrywise comparison of a Monte Carlo mean with its exact value.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub pass: bool,
    /// Largest `|mean − target| / SE` over entries.
    pub worst_z: f64,
    pub max_abs_dev: f64,
}

impl McMatrix {
    /// Passes when every entry is within `k` standard errors of `target`.
    pub fn check(&self, target: &Matrix, k: f64) -> IdentityCheck {
        let mut worst_z = 0.0_f64;
        let mut max_abs_dev = 0.0_f64;
        let mut pass = true;
        for ((m, t), se) in self
            .mean
            .iter()
            .zip(target.iter())
            .zip(self.std_error.iter())
        {
            let dev = (m - t).abs();
            max_abs_dev = max_abs_dev.max(dev);
            if *se > 0.0 {
                let z = dev / se;
                worst_z = worst_z.max(z);
                pass &= z <= k;
            } else {
                pass &= dev <= 1e-12 * t.abs().max(1.0);
            }
        }
        IdentityCheck {
            pass,
            worst_z,
            max_abs_dev,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskEstimate {
    /// Mean of `(Â − A)(Â − A)ᵀ`.
    pub error_matrix: Matrix,
    pub mse: f64,
    pub trials: u64,
    pub mse_std_error: f64,
    /// Trials whose sample covariance was singular; excluded from the means.
    pub failed_trials: u64,
}

#[derive(Clone)]
struct RiskAcc {
    err: MatrixMoments,
    mse: ScalarMoments,
    failed: u64,
}

impl RiskAcc {
    fn new(d: usize) -> Self {
        Self {
            err: MatrixMoments::new(d, d),
            mse: ScalarMoments::default(),
            failed: 0,
        }
    }

    fn push(&mut self, ahat: Result<Matrix>, a: &Matrix) {
        match ahat {
            Ok(ahat) => {
                let e = ahat - a;
                self.mse.push(e.norm_squared());
                self.err.push(&(&e * e.transpose()));
            }
            Err(_) => self.failed += 1,
        }
    }

    fn merge(self, other: Self) -> Self {
        Self {
            err: self.err.merge(other.err),
            mse: self.mse.merge(other.mse),
            failed: self.failed + other.failed,
        }
    }

    fn finish(self, trials: u64) -> Result<RiskEstimate> {
        check_failures(self.failed, trials)?;
        let error_matrix = self.err.mean();
        Ok(RiskEstimate {
            error_matrix: (&error_matrix + error_matrix.transpose()) * 0.5,
            mse: self.mse.mean(),
            trials,
            mse_std_error: self.mse.std_error(),
            failed_trials: self.failed,
        })
    }
}

/// Risk of least squares over trajectories produced by `generate(i)`.
pub fn risk_from_trajectories<G>(
    params: &SystemParams,
    trials: u64,
    generate: G,
) -> Result<RiskEstimate>
where
    G: Fn(u64) -> Trajectory + Sync,
{
    ensure_trials(trials)?;
    let d = params.d();
    fold_trials(
        trials,
        || RiskAcc::new(d),
        |acc, i| acc.push(lti::least_squares(&generate(i)), params.a()),
        RiskAcc::merge,
    )
    .finish(trials)
}

/// Monte Carlo estimate of `E(Â_LS − A)(Â_LS − A)ᵀ`.
pub fn empirical_risk(
    params: &SystemParams,
    trials: u64,
    stream: &RandomStream,
) -> Result<RiskEstimate> {
    risk_from_trajectories(params, trials, |i| {
        lti::simulate(params, &stream.derive(i), false)
    })
}

/// Monte Carlo mean of `(Σ_{i=1}^{N-1} ε_i x_iᵀ) Ψ⁻¹ (Σ_{i=1}^{N-1} x_i ε_iᵀ)`,
/// which equals `d I_d` exactly.
pub fn mc_selfnorm_identity(
    params: &SystemParams,
    trials: u64,
    stream: &RandomStream,
) -> Result<McMatrix> {
    ensure_trials(trials)?;
    let psi_inv = linalg::spd_inverse(&bounds::psi(params))?;
    let d = params.d();
    let n = params.n();
    Ok(fold_trials(
        trials,
        || MatrixMoments::new(d, d),
        |acc, i| {
            let t = lti::simulate(params, &stream.derive(i), true);
            let eps = t.noise.as_ref().expect("noise retained");
            let mut m = Matrix::zeros(d, d);
            for k in 1..n {
                m.ger(1.0, &t.states[k], &eps[k], 1.0);
            }
            acc.push(&(m.transpose() * &psi_inv * &m));
        },
        MatrixMoments::merge,
    )
    .into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherCheck {
    /// Monte Carlo mean of `S Sᵀ`.
    pub mc: McMatrix,
    pub closed: Matrix,
    /// `|mc − closed|_F / |closed|_F`
    pub rel_err: f64,
}

/// Compares the Monte Carlo mean of `S Sᵀ`, `S` the score, with the closed form.
pub fn mc_fisher_check(
    params: &SystemParams,
    trials: u64,
    stream: &RandomStream,
) -> Result<FisherCheck> {
    ensure_trials(trials)?;
    let d = params.d();
    let mc: McMatrix = fold_trials(
        trials,
        || MatrixMoments::new(d, d),
        |acc, i| {
            let s = lti::sensitivity(params, &lti::simulate(params, &stream.derive(i), false));
            acc.push(&(&s * s.transpose()));
        },
        MatrixMoments::merge,
    )
    .into();
    let closed = lti::fisher_information(params);
    let rel_err = (&mc.mean - &closed).norm() / closed.norm();
    Ok(FisherCheck {
        mc,
        closed,
        rel_err,
    })
}

/// Monte Carlo mean of the score `(BBᵀ)⁻¹(Γ − AΣ)` at the true parameter.
pub fn mc_score_mean(
    params: &SystemParams,
    trials: u64,
    stream: &RandomStream,
) -> Result<McMatrix> {
    mc_score_mean_at(params, params.a(), trials, stream)
}

/// Score evaluated at `a_eval` on data generated by `params`; nonzero in
/// expectation when `a_eval ≠ A`.
pub fn mc_score_mean_at(
    params: &SystemParams,
    a_eval: &Matrix,
    trials: u64,
    stream: &RandomStream,
) -> Result<McMatrix> {
    ensure_trials(trials)?;
    let eval = params.with_a(a_eval.clone())?;
    let d = params.d();
    Ok(fold_trials(
        trials,
        || MatrixMoments::new(d, d),
        |acc, i| {
            let t = lti::simulate(params, &stream.derive(i), false);
            acc.push(&lti::sensitivity(&eval, &t));
        },
        MatrixMoments::merge,
    )
    .into())
}

/// Monte Carlo mean of `−A (∇ log Π(A))ᵀ` under the prior; equals `d I_d`.
pub fn mc_prior_score_identity(
    spec: &PriorSpec,
    trials: u64,
    stream: &RandomStream,
) -> Result<McMatrix> {
    ensure_trials(trials)?;
    let d = spec.d;
    let failed = fold_trials(
        trials,
        || (MatrixMoments::new(d, d), 0u64),
        |acc, i| {
            let sample = minimax::sample_prior(spec, &stream.derive(i));
            match minimax::score_identity_lhs(&sample, spec) {
                Ok(m) => acc.0.push(&m),
                Err(_) => acc.1 += 1,
            }
        },
        |a, b| (a.0.merge(b.0), a.1 + b.1),
    );
    check_failures(failed.1, trials)?;
    Ok(failed.0.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    /// `|Ψ^{-1/2} (Σ_{i=1}^{N-1} x_i x_iᵀ) Ψ^{-1/2} − I|_op`, largest first.
    pub deviations: Vec<f64>,
    pub t_levels: Vec<f64>,
    /// Share of trials above `fitted_constant · Δ₁(t)` per level.
    pub empirical_exceedance: Vec<f64>,
    pub delta1_levels: Vec<f64>,
    /// Smallest `c` with every exceedance at most `e^{−t}`.
    pub fitted_constant: f64,
    pub l_ab: f64,
}

pub fn concentration_experiment(
    params: &SystemParams,
    trials: u64,
    t_levels: &[f64],
    stream: &RandomStream,
) -> Result<ConcentrationReport> {
    ensure_trials(trials)?;
    if t_levels.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidParameter(
            "t levels must be nonnegative".into(),
        ));
    }
    let r = linalg::sym_inv_sqrt(&bounds::psi(params))?;
    let d = params.d();
    let n = params.n();
    let mut deviations = fold_trials(
        trials,
        Vec::new,
        |acc: &mut Vec<f64>, i| {
            let t = lti::simulate(params, &stream.derive(i), false);
            let mut g = Matrix::zeros(d, d);
            for x in &t.states[1..n] {
                g.ger(1.0, x, x, 1.0);
            }
            let dev = &r * g * &r - Matrix::identity(d, d);
            acc.push(linalg::op_norm(&dev));
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    );
    deviations.sort_by(|a, b| b.total_cmp(a));

    let l = bounds::l_ab(params, bounds::DEFAULT_GRID_POINTS)?;
    let delta1_levels: Vec<f64> = t_levels.iter().map(|&t| bounds::delta1(d, t, l)).collect();
    let count = deviations.len();
    let mut fitted = 0.0_f64;
    for (&t, &dl) in t_levels.iter().zip(&delta1_levels) {
        // at most floor(e^{-t} n) trials may exceed c·Δ₁(t)
        let allowed = ((-t).exp() * count as f64).floor() as usize;
        if allowed < count && dl > 0.0 {
            fitted = fitted.max(deviations[allowed] / dl);
        }
    }
    let empirical_exceedance = delta1_levels
        .iter()
        .map(|&dl| deviations.iter().filter(|&&x| x > fitted * dl).count() as f64 / count as f64)
        .collect();
    Ok(ConcentrationReport {
        deviations,
        t_levels: t_levels.to_vec(),
        empirical_exceedance,
        delta1_levels,
        fitted_constant: fitted,
        l_ab: l,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplicationReport {
    /// Monte Carlo mean of `|Ψ^{-1/2} Σ_{i=1}^{N-1} x_i ε_iᵀ|²_op`.
    pub mc_value: f64,
    pub mc_std_error: f64,
    /// `d Δ₂ = d² L_{A,B}`
    pub bound_value: f64,
}

pub fn multiplication_experiment(
    params: &SystemParams,
    trials: u64,
    stream: &RandomStream,
) -> Result<MultiplicationReport> {
    ensure_trials(trials)?;
    let r = linalg::sym_inv_sqrt(&bounds::psi(params))?;
    let d = params.d();
    let n = params.n();
    let m = fold_trials(
        trials,
        ScalarMoments::default,
        |acc, i| {
            let t = lti::simulate(params, &stream.derive(i), true);
            let eps = t.noise.as_ref().expect("noise retained");
            let mut s = Matrix::zeros(d, d);
            for k in 1..n {
                s.ger(1.0, &t.states[k], &eps[k], 1.0);
            }
            acc.push(linalg::op_norm(&(&r * s)).powi(2));
        },
        ScalarMoments::merge,
    );
    let l = bounds::l_ab(params, bounds::DEFAULT_GRID_POINTS)?;
    Ok(MultiplicationReport {
        mc_value: m.mean(),
        mc_std_error: m.std_error(),
        bound_value: d as f64 * bounds::delta2(d, l),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub holds: bool,
    /// `λ_min(error_matrix − scale · cr_matrix)`
    pub margin: f64,
    pub scale: f64,
    pub risk: RiskEstimate,
    pub bound: BoundReport,
}

/// Löwner check `E(Â − A)(Â − A)ᵀ ⪰ scale · cr_matrix`; `scale = 1` is the
/// bound itself, larger values serve as negative controls.
pub fn dominance_check(
    params: &SystemParams,
    trials: u64,
    settings: &CrSettings,
    scale: f64,
    stream: &RandomStream,
) -> Result<DominanceReport> {
    let bound = bounds::cr_bound(params, settings)?;
    let risk = empirical_risk(params, trials, stream)?;
    let diff = &risk.error_matrix - &bound.cr_matrix * scale;
    let margin = linalg::lambda_min(&((&diff + diff.transpose()) * 0.5))?;
    Ok(DominanceReport {
        holds: margin >= 0.0,
        margin,
        scale,
        risk,
        bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesRiskReport {
    pub bayes_mse: f64,
    pub std_error: f64,
    pub vt_bound: f64,
    pub trials: u64,
    pub failed_trials: u64,
}

/// Bayes risk of least squares with `A` drawn from the prior and `B = I`.
pub fn bayes_risk_experiment(
    spec: &PriorSpec,
    n: usize,
    trials: u64,
    stream: &RandomStream,
) -> Result<BayesRiskReport> {
    ensure_trials(trials)?;
    let d = spec.d;
    let eye = Matrix::identity(d, d);
    // validates n against d once
    SystemParams::new(Matrix::zeros(d, d), eye.clone(), n)?;
    let (m, failed) = fold_trials(
        trials,
        || (ScalarMoments::default(), 0u64),
        |acc, i| {
            let trial = stream.derive(i);
            let sample = minimax::sample_prior(spec, &trial.derive(0));
            let params =
                SystemParams::new(sample.a.clone(), eye.clone(), n).expect("validated above");
            let t = lti::simulate(&params, &trial.derive(1), false);
            match lti::least_squares(&t) {
                Ok(ahat) => acc.0.push((ahat - &sample.a).norm_squared()),
                Err(_) => acc.1 += 1,
            }
        },
        |a, b| (a.0.merge(b.0), a.1 + b.1),
    );
    check_failures(failed, trials)?;
    Ok(BayesRiskReport {
        bayes_mse: m.mean(),
        std_error: m.std_error(),
        vt_bound: minimax::van_trees_bound(d, n, spec.s, spec.eps),
        trials,
        failed_trials: failed,
    })
}

/// Smallest value of `|u₁−u₂| + |v₁−v₂| − |u₁v₁ᵀ − u₂v₂ᵀ|_op` over random
/// unit vectors.
pub fn norm_ineq_fuzz(d: usize, trials: u64, stream: &RandomStream) -> Result<f64> {
    ensure_trials(trials)?;
    if d == 0 {
        return Err(Error::InvalidParameter(
            "dimension must be at least 1".into(),
        ));
    }
    Ok(fold_trials(
        trials,
        || f64::INFINITY,
        |worst, i| {
            let mut rng = stream.derive(i).rng();
            let u1 = linalg::unit_sphere(d, &mut rng);
            let v1 = linalg::unit_sphere(d, &mut rng);
            // mix in close pairs, where the inequality is tightest
            let (u2, v2) = if i % 2 == 0 {
                (
                    linalg::unit_sphere(d, &mut rng),
                    linalg::unit_sphere(d, &mut rng),
                )
            } else {
                let scale = 10f64.powi(-(((i / 2) % 8) as i32));
                let pu: Vector = &u1 + linalg::gaussian_vector(d, &mut rng) * scale;
                let pv: Vector = &v1 + linalg::gaussian_vector(d, &mut rng) * scale;
                (pu.normalize(), pv.normalize())
            };
            *worst = worst.min(rank_one_slack(&u1, &v1, &u2, &v2));
        },
        f64::min,
    ))
}

/// `|u₁−u₂| + |v₁−v₂| − |u₁v₁ᵀ − u₂v₂ᵀ|_op`.
pub fn rank_one_slack(u1: &Vector, v1: &Vector, u2: &Vector, v2: &Vector) -> f64 {
    let lhs = linalg::op_norm(&(u1 * v1.transpose() - u2 * v2.transpose()));
    (u1 - u2).norm() + (v1 - v2).norm() - lhs
}

/// A labelled system of a test family.
#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub label: String,
    pub params: SystemParams,
}

const ROTATION_ANGLE: f64 = 0.7;

fn diag(v: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_row_slice(v))
}

/// `d ∈ {1,2,3}`, `A ∈ {0, 0.5I, 0.9·rotation, diag(0.5, 1.2, …)}`,
/// `B ∈ {I, diag(1, 3, …)}`, `N ∈ {8, 32}`. In `d = 1` only the real scalars
/// `0` and `0.5` apply.
pub fn default_family() -> Vec<FamilyMember> {
    let mut out = Vec::new();
    for d in 1..=3usize {
        let mut dynamics: Vec<(&str, Matrix)> = vec![
            ("zero", Matrix::zeros(d, d)),
            ("half", Matrix::identity(d, d) * 0.5),
        ];
        if d >= 2 {
            dynamics.push(("rot0.9", bounds::rotation_matrix(d, ROTATION_ANGLE, 0.9)));
            let mut v = vec![0.5, 1.2];
            v.extend(std::iter::repeat_n(0.3, d - 2));
            dynamics.push(("diag0.5_1.2", diag(&v)));
        }
        let mut shaping: Vec<(&str, Matrix)> = vec![("I", Matrix::identity(d, d))];
        let mut bv = vec![1.0; d];
        bv[d.min(2) - 1] = 3.0;
        shaping.push(("diag1_3", diag(&bv)));
        for (an, a) in &dynamics {
            for (bn, b) in &shaping {
                for n in [8usize, 32] {
                    out.push(FamilyMember {
                        label: format!("d{d}_A{an}_B{bn}_N{n}"),
                        params: SystemParams::new(a.clone(), b.clone(), n)
                            .expect("family members are valid"),
                    });
                }
            }
        }
    }
    out
}

/// Stable systems used by the dominance suite at horizon `n`.
pub fn stable_family(n: usize) -> Vec<FamilyMember> {
    let systems: Vec<(&str, Matrix, Matrix)> = vec![
        ("d1_A0.5_BI", diag(&[0.5]), diag(&[1.0])),
        (
            "d2_Ahalf_BI",
            Matrix::identity(2, 2) * 0.5,
            Matrix::identity(2, 2),
        ),
        (
            "d2_Adiag0.5_0.2_Bdiag1_3",
            diag(&[0.5, 0.2]),
            diag(&[1.0, 3.0]),
        ),
        (
            "d2_Arot0.9_BI",
            bounds::rotation_matrix(2, ROTATION_ANGLE, 0.9),
            Matrix::identity(2, 2),
        ),
        (
            "d3_Adiag0.5_0.2_-0.3_BI",
            diag(&[0.5, 0.2, -0.3]),
            Matrix::identity(3, 3),
        ),
    ];
    systems
        .into_iter()
        .map(|(label, a, b)| FamilyMember {
            label: format!("{label}_N{n}"),
            params: SystemParams::new(a, b, n).expect("stable family members are valid"),
        })
        .collect()
}

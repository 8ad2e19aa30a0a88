//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `EXPECTED_FAILURES` are checked exactly as stated and
//! reported as FAIL; the process only exits nonzero when the set of failing
//! criteria differs from that list.

use std::collections::BTreeSet;
use std::process::Command;
use std::time::Instant;

use lti_bounds::bounds::{self, CrSettings};
use lti_bounds::minimax::{self, PriorSpec};
use lti_bounds::verify::{self, FamilyMember};
use lti_bounds::{linalg, Matrix, RandomStream, SystemParams};

const SEED: u64 = 20_240_917;
const K_SE: f64 = 4.0;

/// The stated upper estimate of `L_{A,B}` is smaller than `L_{A,B}` itself on
/// part of the default family (0.9-rotation at N=32, diag(0.5, 1.2) with B=I),
/// so criterion 3 cannot pass as stated.
const EXPECTED_FAILURES: &[u32] = &[3];

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

fn report(id: u32, title: &str, start: Instant, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!(
        "[{tag}] criterion {id}: {title}: {} ({:.1}s)",
        o.summary,
        start.elapsed().as_secs_f64()
    );
    for d in &o.details {
        println!("        {d}");
    }
}

fn criterion_1() -> Outcome {
    let trials = 100_000;
    let root = RandomStream::new(SEED).derive_named("criterion-1");
    let family = verify::default_family();
    let mut details = Vec::new();
    let (mut worst_selfnorm, mut worst_score, mut worst_fisher, mut worst_prior) =
        (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut pass = true;
    for FamilyMember { label, params } in &family {
        let d = params.d();
        let s = root.derive_named(label);
        let sn = verify::mc_selfnorm_identity(params, trials, &s.derive_named("selfnorm")).unwrap();
        let c = sn.check(&(Matrix::identity(d, d) * d as f64), K_SE);
        worst_selfnorm = worst_selfnorm.max(c.worst_z);
        if !c.pass {
            pass = false;
            details.push(format!(
                "{label}: selfnorm identity worst z {:.2}",
                c.worst_z
            ));
        }
        let f = verify::mc_fisher_check(params, trials, &s.derive_named("fisher")).unwrap();
        worst_fisher = worst_fisher.max(f.rel_err);
        if f.rel_err > 0.05 {
            pass = false;
            details.push(format!("{label}: Fisher relative error {:.4}", f.rel_err));
        }
        let sc = verify::mc_score_mean(params, trials, &s.derive_named("score")).unwrap();
        let c = sc.check(&Matrix::zeros(d, d), K_SE);
        worst_score = worst_score.max(c.worst_z);
        if !c.pass {
            pass = false;
            details.push(format!("{label}: score mean worst z {:.2}", c.worst_z));
        }
    }
    for s in [0.0, 5.0] {
        for d in 1..=3 {
            let spec = PriorSpec::new(s, 1.0, d).unwrap();
            let stream = root.derive_named(&format!("prior/s{s}/d{d}"));
            let m = verify::mc_prior_score_identity(&spec, trials, &stream).unwrap();
            let c = m.check(&(Matrix::identity(d, d) * d as f64), K_SE);
            worst_prior = worst_prior.max(c.worst_z);
            if !c.pass {
                pass = false;
                details.push(format!(
                    "prior s={s} d={d}: score identity worst z {:.2}",
                    c.worst_z
                ));
            }
        }
    }
    Outcome {
        pass,
        summary: format!(
            "{} systems x 1e5 trials; worst z: selfnorm {worst_selfnorm:.2}, score {worst_score:.2}, prior {worst_prior:.2} (limit {K_SE}); Fisher max rel err {worst_fisher:.4} (limit 0.05)",
            family.len()
        ),
        details,
    }
}

fn criterion_2() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;

    let mut worst_mass = 0.0_f64;
    let mut worst_fisher = 0.0_f64;
    for d in 1..=8 {
        for eps in [0.25, 0.5, 1.0, 2.0] {
            worst_mass = worst_mass.max((minimax::prior_mass_by_quadrature(d, eps) - 1.0).abs());
            let exact = 2.0 * (d as f64 + 1.0) * (d as f64 + 2.0) / (eps * eps);
            worst_fisher = worst_fisher
                .max((minimax::prior_fisher_by_quadrature(d, eps) - exact).abs() / exact);
        }
    }
    if worst_mass > 1e-10 {
        pass = false;
        details.push(format!("normalisation error {worst_mass:.3e}"));
    }
    if worst_fisher > 1e-10 {
        pass = false;
        details.push(format!("prior Fisher quadrature error {worst_fisher:.3e}"));
    }

    let root = RandomStream::new(SEED).derive_named("criterion-2");
    let mut worst_ks = 0.0_f64;
    for d in 1..=3 {
        let spec = PriorSpec::new(0.5, 1.0, d).unwrap();
        let stream = root.derive_named(&format!("ks/d{d}"));
        let ratios: Vec<f64> = (0..100_000u64)
            .map(|i| minimax::sample_prior(&spec, &stream.derive(i)).sigmas[0] / spec.eps)
            .collect();
        let ks = minimax::ks_distance(&ratios, |x| minimax::beta_d3_cdf(d, x));
        worst_ks = worst_ks.max(ks);
        if ks >= 0.01 {
            pass = false;
            details.push(format!("d={d}: KS {ks:.4}"));
        }
    }

    let spec = PriorSpec::new(0.5, 1.0, 3).unwrap();
    let stream = root.derive_named("fd");
    let h = 1e-6;
    let mut worst_fd = 0.0_f64;
    for i in 0..1000u64 {
        let a = minimax::sample_prior(&spec, &stream.derive(i)).a;
        let g = minimax::grad_log_prior(&a, &spec).unwrap();
        let fd = Matrix::from_fn(3, 3, |r, c| {
            let mut p = a.clone();
            let mut m = a.clone();
            p[(r, c)] += h;
            m[(r, c)] -= h;
            (minimax::log_prior_density(&p, &spec).unwrap()
                - minimax::log_prior_density(&m, &spec).unwrap())
                / (2.0 * h)
        });
        worst_fd = worst_fd.max((&fd - &g).norm() / g.norm());
    }
    if worst_fd >= 1e-5 {
        pass = false;
        details.push(format!("finite-difference gradient error {worst_fd:.3e}"));
    }

    Outcome {
        pass,
        summary: format!(
            "mass err {worst_mass:.1e}, prior Fisher err {worst_fisher:.1e} (limit 1e-10, d<=8); KS max {worst_ks:.4} (limit 0.01, 1e5 draws); grad FD max rel err {worst_fd:.1e} (limit 1e-5, 1e3 points)"
        ),
        details,
    }
}

fn criterion_3() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;

    let mut grid_violations = 0;
    let mut strict_violations = 0;
    for j in 0..200 {
        let a = 3.0 * j as f64 / 199.0;
        for n in 2..=50 {
            if !bounds::phi_dominates_geom_sum(a, n) {
                grid_violations += 1;
            }
            if bounds::phi(a, n) < bounds::geom_sum(a, n) {
                strict_violations += 1;
            }
        }
    }
    if grid_violations > 0 {
        pass = false;
        details.push(format!("Phi < geom_sum at {grid_violations} grid points"));
    }

    let mut valid_cases = 0;
    let mut lab_failures = Vec::new();
    for FamilyMember { label, params } in verify::default_family() {
        let split = bounds::spectral_split_for(&params).unwrap();
        let ub = bounds::lab_upper_bound(&split, params.n(), 0.5).unwrap();
        if !ub.valid {
            continue;
        }
        valid_cases += 1;
        let l = bounds::l_ab(&params, bounds::DEFAULT_GRID_POINTS).unwrap();
        if ub.value < l {
            lab_failures.push(format!("{label}: upper {:.4} < L {:.4}", ub.value, l));
        }
    }
    if !lab_failures.is_empty() {
        pass = false;
        details.push(format!(
            "L upper estimate below L on {}/{} valid systems:",
            lab_failures.len(),
            valid_cases
        ));
        details.extend(lab_failures.iter().map(|s| format!("  {s}")));
    }

    let slack = verify::norm_ineq_fuzz(
        5,
        100_000,
        &RandomStream::new(SEED).derive_named("criterion-3"),
    )
    .unwrap();
    if slack < -1e-12 {
        pass = false;
        details.push(format!("rank-one inequality worst slack {slack:.3e}"));
    }

    let vt = minimax::van_trees_bound(2, 3, 0.0, 1.0);
    let vt_err = (vt - 4.0 / 35.0).abs();
    let lim = minimax::minimax_regimes(2, 10, 1.0, 0.5).unwrap().value;
    let lim_exact = 4f64.ln().powi(2) / 1200.0;
    let lim_err = (lim - lim_exact).abs();
    // 0.0016015 is printed to 7 decimals, so it can only match to half a unit there
    let lim_printed = (lim - 0.0016015).abs();
    if vt_err > 1e-9 || lim_err > 1e-9 || lim_printed > 5e-8 {
        pass = false;
        details.push(format!(
            "hand values: 4/35 err {vt_err:.1e}, ln^2(4)/1200 err {lim_err:.1e}"
        ));
    }

    Outcome {
        pass,
        summary: format!(
            "Phi grid 200x49 violations {grid_violations} (strict float {strict_violations}); L upper estimate holds on {}/{valid_cases} valid systems; rank-one worst slack {slack:.2e}; 4/35 err {vt_err:.1e}; limit-regime err {lim_err:.1e}",
            valid_cases - lab_failures.len()
        ),
        details,
    }
}

fn criterion_4() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    let root = RandomStream::new(SEED).derive_named("criterion-4");
    let settings = CrSettings::default();
    let mut min_margin = f64::INFINITY;
    let mut max_inflated = f64::NEG_INFINITY;
    for FamilyMember { label, params } in verify::stable_family(500) {
        let r =
            verify::dominance_check(&params, 10_000, &settings, 1.0, &root.derive_named(&label))
                .unwrap();
        min_margin = min_margin.min(r.margin);
        if !r.holds {
            pass = false;
            details.push(format!("{label}: dominance margin {:.3e}", r.margin));
        }
        let inflated = &r.risk.error_matrix - &r.bound.cr_matrix * 10.0;
        let m = linalg::lambda_min(&((&inflated + inflated.transpose()) * 0.5)).unwrap();
        max_inflated = max_inflated.max(m);
        if m >= 0.0 {
            pass = false;
            details.push(format!(
                "{label}: 10x inflated bound still dominated (margin {m:.3e})"
            ));
        }
    }
    let spec = PriorSpec::new(0.0, 0.5, 2).unwrap();
    let b = verify::bayes_risk_experiment(&spec, 8, 10_000, &root.derive_named("bayes")).unwrap();
    if b.bayes_mse < b.vt_bound {
        pass = false;
        details.push(format!(
            "Bayes MSE {:.4} < van Trees {:.4}",
            b.bayes_mse, b.vt_bound
        ));
    }
    let vt_inflated = 10.0 * b.vt_bound;
    Outcome {
        pass,
        summary: format!(
            "min dominance margin {min_margin:.3e} (>= 0), max 10x-inflated margin {max_inflated:.3e} (< 0); Bayes MSE {:.4} >= van Trees {:.4} (10x bound {vt_inflated:.4})",
            b.bayes_mse, b.vt_bound
        ),
        details,
    }
}

fn criterion_5() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    let root = RandomStream::new(SEED).derive_named("criterion-5");
    let scalar =
        |n| SystemParams::new(Matrix::from_element(1, 1, 0.5), Matrix::identity(1, 1), n).unwrap();
    let (n1, n2) = (500, 1000);
    let m1 = verify::empirical_risk(&scalar(n1), 10_000, &root.derive(1))
        .unwrap()
        .mse;
    let m2 = verify::empirical_risk(&scalar(n2), 10_000, &root.derive(2))
        .unwrap()
        .mse;
    let mse_ratio = m1 / m2;
    if !(1.7..=2.3).contains(&mse_ratio) {
        pass = false;
        details.push(format!("MSE ratio {mse_ratio:.3}"));
    }
    let l1 = bounds::l_ab(&scalar(n1), bounds::DEFAULT_GRID_POINTS).unwrap();
    let l2 = bounds::l_ab(&scalar(n2), bounds::DEFAULT_GRID_POINTS).unwrap();
    let l_ratio = l1 / l2;
    if !(1.7..=2.3).contains(&l_ratio) {
        pass = false;
        details.push(format!("L ratio {l_ratio:.3}"));
    }
    // the resonant frequency alone gives L >= 2(N-1)/N for a pure rotation
    let floor = 1.0;
    let rot: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| {
            let p = SystemParams::new(
                bounds::rotation_matrix(2, 0.7, 1.0),
                Matrix::identity(2, 2),
                n,
            )
            .unwrap();
            bounds::l_ab(&p, bounds::DEFAULT_GRID_POINTS).unwrap()
        })
        .collect();
    if rot.iter().any(|&l| l < floor) {
        pass = false;
        details.push(format!("rotation L {rot:?} drops below {floor}"));
    }
    Outcome {
        pass,
        summary: format!(
            "MSE(N={n1})/MSE(N={n2}) = {mse_ratio:.3}, L ratio {l_ratio:.3} (both in [1.7, 2.3]); rotation L at N=16,32,64 = {:.3}, {:.3}, {:.3} (floor {floor})",
            rot[0], rot[1], rot[2]
        ),
        details,
    }
}

fn criterion_6() -> Outcome {
    let dir = std::env::temp_dir().join(format!("lti-bounds-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("verify.json");
    std::fs::write(&cfg, r#"{"run": {"trials": 1000}}"#).unwrap();
    let run = |workers: &str| {
        Command::new(env!("CARGO_BIN_EXE_lti-bounds"))
            .args(["verify", "--seed", "42", "--workers", workers, "--config"])
            .arg(&cfg)
            .output()
            .unwrap()
    };
    let a = run("1");
    let b = run("8");
    let _ = std::fs::remove_dir_all(&dir);
    let identical = a.stdout == b.stdout && a.status.code() == b.status.code();
    let rows = a.stdout.iter().filter(|&&c| c == b'\n').count();
    Outcome {
        pass: identical && rows > 1,
        summary: format!(
            "default verify suite, seed 42: {} bytes / {rows} lines with 1 worker vs {} bytes with 8 workers, identical = {identical}",
            a.stdout.len(),
            b.stdout.len()
        ),
        details: Vec::new(),
    }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 6] = [
        (1, "exact-identity Monte Carlo suite", criterion_1),
        (2, "prior machinery", criterion_2),
        (3, "deterministic formula checks", criterion_3),
        (4, "dominance suite", criterion_4),
        (5, "rate checks", criterion_5),
        (6, "reproducibility across worker counts", criterion_6),
    ];
    let mut failed = BTreeSet::new();
    for (id, title, f) in criteria {
        let start = Instant::now();
        let o = f();
        report(id, title, start, &o);
        if !o.pass {
            failed.insert(id);
        }
    }
    let expected: BTreeSet<u32> = EXPECTED_FAILURES.iter().copied().collect();
    println!(
        "acceptance: {}/6 criteria pass; failing {:?}; expected failing {:?}",
        6 - failed.len(),
        failed,
        expected
    );
    if failed != expected {
        eprintln!("acceptance: failing set differs from the expected set");
        std::process::exit(1);
    }
}

//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so the
//! lines show up in every `cargo test` log; exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use funnelguard::control::{companion_f_h, scale_to_omega, scale_to_xi, ControllerGains};
use funnelguard::num::{gaussian_tail, saturate};
use funnelguard::privacy::{delta_bound, epsilon_bound, estimate_pdf, gaussian_kappa, BoundCase};
use funnelguard::sim::run_tracking;
use funnelguard::stoch::TruncatedGaussianParams;
use funnelguard_cli::config::{default_config, Experiment, ExperimentConfig};
use funnelguard_cli::experiments::{dp_runs, ou_check_report, privacy_report_from_samples, privacy_samples, table1_rows};
use funnelguard_cli::run_experiment;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn config_in(dir: &Path, experiment: Experiment) -> ExperimentConfig {
    let mut cfg = default_config();
    cfg.experiment = experiment;
    cfg.output_dir = dir.join(experiment.name());
    cfg
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

/// Published variances: (Var y, Var w) per row.
const PUBLISHED_VARS: [(f64, f64); 4] = [(0.4323, 0.4246), (1.5615, 1.5335), (3.8909, 3.8211), (6.7378, 6.6169)];

fn criterion_1(dir: &Path) -> Vec<(String, Outcome)> {
    let start = Instant::now();
    let cfg = config_in(dir, Experiment::Table1);
    let rows = table1_rows(&cfg).unwrap();
    let out = run_experiment(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let csv_rows = read_csv(&out.files[0]).len();

    let mut var_ok = rows.len() == 4 && csv_rows == 4;
    let mut var_detail = Vec::new();
    let mut mean_ok = true;
    let mut mean_detail = Vec::new();
    let mut ar1_ok = true;
    let n = cfg.discrete_ou.n_steps as f64 - cfg.discrete_ou.burn_in_steps as f64;
    let a_w = cfg.discrete_ou.a_w;
    for (i, (r, &(py, pw))) in rows.iter().zip(&PUBLISHED_VARS).enumerate() {
        let errs = [rel(r.var_y, py), rel(r.var_w, pw), rel(r.var_y, r.oracle_var_y), rel(r.var_w, r.oracle_var_w)];
        var_ok &= errs[0] < 0.03 && errs[1] < 0.03 && errs[2] < 0.02 && errs[3] < 0.02;
        var_detail.push(format!(
            "row{}: var_y {:.4} ({:.2}%/{:.2}%), var_w {:.4} ({:.2}%/{:.2}%)",
            i + 1,
            r.var_y,
            100.0 * errs[0],
            100.0 * errs[2],
            r.var_w,
            100.0 * errs[1],
            100.0 * errs[3]
        ));
        let lim_y = 4.0 * (r.var_y / 1e6).sqrt();
        let lim_w = 4.0 * (r.var_w / 1e6).sqrt();
        mean_ok &= r.mean_y.abs() < lim_y && r.mean_w.abs() < lim_w;
        mean_detail.push(format!("row{}: |mean_y| {:.2e} vs {:.2e}", i + 1, r.mean_y.abs(), lim_y));
        // same 4σ band with the AR(1) variance inflation (1+a)/(1−a)
        ar1_ok &= r.mean_w.abs() < 4.0 * (r.var_w * (1.0 + a_w) / (1.0 - a_w) / n).sqrt();
    }
    vec![
        (
            "1a  filter variances within 3% of published values and 2% of Lyapunov oracle, runtime < 30 s".into(),
            outcome(var_ok && secs < 30.0, format!("{}; {secs:.1} s", var_detail.join("; "))),
        ),
        (
            "1b  filter |mean| < 4*sqrt(Var/1e6)".into(),
            outcome(
                mean_ok,
                format!(
                    "{}; i.i.d. band ignores AR(1) correlation (a_w = 0.9 inflates the mean's spread by sqrt(19) ~ 4.4), \
                     correlation-aware 4-sigma band holds: {ar1_ok}",
                    mean_detail.join("; ")
                ),
            ),
        ),
    ]
}

fn criterion_2(dir: &Path) -> Outcome {
    let start = Instant::now();
    let cfg = config_in(dir, Experiment::Track);
    let out = run_experiment(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rows = read_csv(&out.files[0]);
    let mut min_margin = f64::INFINITY;
    for r in &rows {
        let e: f64 = r[1].parse().unwrap();
        let psi: f64 = r[2].parse().unwrap();
        min_margin = min_margin.min(psi - e.abs());
    }
    let last_t: f64 = rows.last().unwrap()[0].parse().unwrap();
    let noise_active = rows.iter().any(|r| r[5].parse::<f64>().unwrap().abs() > 0.05);
    outcome(
        min_margin > 0.0 && last_t == 10.0 && noise_active && secs < 60.0,
        format!("{} rows, min(psi+y-|e|) = {min_margin:.4}, noise active: {noise_active}, {secs:.1} s", rows.len()),
    )
}

fn criterion_3(dir: &Path) -> Outcome {
    let cfg = config_in(dir, Experiment::PrivacyReport);
    let samples = privacy_samples(&cfg).unwrap();
    let (_, r) = privacy_report_from_samples(&cfg, &samples).unwrap();
    let b = r.bounds;
    outcome(
        r.n_samples >= 100_000
            && b.case == BoundCase::I
            && (0.5..=1.5).contains(&b.epsilon_u)
            && (0.01..=0.08).contains(&b.delta_u),
        format!(
            "M = {}, dpsi' = {}, case {:?}, epsilon_U = {:.4}, delta_U = {:.4}, n = {}",
            b.m, b.delta_psi_prime, b.case, b.epsilon_u, b.delta_u, r.n_samples
        ),
    )
}

fn criterion_4() -> Outcome {
    let r = ou_check_report(&default_config()).unwrap();
    outcome(
        r.fast_filter.pass && (r.fast_filter.bound - 0.036).abs() < 1e-12 && r.envelope.pass,
        format!(
            "max|y-w| for t >= 0.1 = {:.5} vs {:.3}; envelope violations {}/{}",
            r.fast_filter.max_dev, r.fast_filter.bound, r.envelope.violations, r.envelope.points
        ),
    )
}

fn criterion_5() -> Outcome {
    let sp = 1.0 / 2f64.sqrt();
    let normal = Normal::new(0.0, sp).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let xs: Vec<f64> = (0..1_000_000).map(|_| normal.sample(&mut rng)).collect();
    let pdf = estimate_pdf(&xs, 200).unwrap();
    let eps = epsilon_bound(&pdf, 0.8, 0.5).unwrap();
    let del = delta_bound(&pdf, 0.8).unwrap();
    // ln p(0.3)/p(0.8) with σ′² = 1/2, and two-sided tails counted twice
    let eps_exact = (0.8f64 * 0.8 - 0.3 * 0.3) / (2.0 * sp * sp);
    let del_exact = 2.0 * 2.0 * gaussian_tail(0.8 * 2f64.sqrt());
    outcome(
        eps.case == BoundCase::I && rel(eps.epsilon_u, eps_exact) < 0.05 && rel(del.delta_u, del_exact) < 0.05,
        format!(
            "epsilon {:.4} vs {eps_exact:.4} ({:.2}%), delta {:.4} vs {del_exact:.4} ({:.2}%)",
            eps.epsilon_u,
            100.0 * rel(eps.epsilon_u, eps_exact),
            del.delta_u,
            100.0 * rel(del.delta_u, del_exact)
        ),
    )
}

/// Q⁻¹ by bisection on the tail integral.
fn tail_inv_bisect(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gaussian_tail(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_6() -> Outcome {
    let (kappa, k) = gaussian_kappa::<f64>(1.0, 0.05).unwrap();
    let kb = tail_inv_bisect(0.05);
    let oracle = (kb + (kb * kb + 2.0).sqrt()) / 2.0;
    let mut worst = 0.0f64;
    for i in 0..10 {
        for j in 0..10 {
            let eps = 0.1 + 0.5 * i as f64;
            let delta = 0.001 + 0.049 * j as f64;
            let (kappa, k): (f64, f64) = gaussian_kappa(eps, delta).unwrap();
            worst = worst.max((2.0 * eps * kappa * kappa - 2.0 * k * kappa - 1.0).abs());
        }
    }
    outcome(
        (kappa - 1.907).abs() <= 0.001 && (kappa - oracle).abs() <= 0.001 && (k - kb).abs() < 1e-9 && worst < 1e-10,
        format!("kappa(1, 0.05) = {kappa:.6} (oracle {oracle:.6}), max quadratic residual {worst:.1e}"),
    )
}

fn criterion_7(dir: &Path) -> Outcome {
    let cfg = config_in(dir, Experiment::DpVerify);
    let out = run_experiment(&cfg).unwrap();
    let diff = out.files.iter().find(|f| f.ends_with("difference.csv")).unwrap();
    let diff_rows = read_csv(diff).len();
    let v = dp_runs(&cfg).unwrap().report.verification;
    outcome(
        v.adjacent && v.both_contained && diff_rows > 0,
        format!(
            "psi_ss 1.3 vs {}, adjacent {}, both contained {}, {diff_rows} difference rows; max_error_gap = {:.4} (reported only)",
            cfg.privacy.adjacent_psi_ss, v.adjacent, v.both_contained, v.max_error_gap
        ),
    )
}

fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Routh–Hurwitz on `c[0]·λⁿ + … + c[n]` with `c[0] > 0`.
fn routh_stable(c: &[f64]) -> bool {
    let n = c.len() - 1;
    let mut rows: Vec<Vec<f64>> = vec![
        c.iter().step_by(2).copied().collect(),
        c.iter().skip(1).step_by(2).copied().collect(),
    ];
    let width = rows[0].len();
    for r in rows.iter_mut() {
        r.resize(width + 1, 0.0);
    }
    while rows.len() < n + 1 {
        let (a, b) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
        if b[0] == 0.0 {
            return false;
        }
        let next: Vec<f64> = (0..width).map(|j| (b[0] * a[j + 1] - a[0] * b[j + 1]) / b[0]).chain([0.0]).collect();
        rows.push(next);
    }
    rows.iter().all(|r| r[0] > 0.0)
}

fn criterion_8(dir: &Path) -> Vec<(String, Outcome)> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut out = Vec::new();

    let p = TruncatedGaussianParams::new(0.0, 1.0, -0.9, 0.9).unwrap();
    let xs: Vec<f64> = (0..100_000).map(|_| p.sample(&mut rng).unwrap()).collect();
    let in_support = xs.iter().all(|&x| (-0.9..=0.9).contains(&x));
    let d = ks_distance(xs, |x| p.cdf(x));
    out.push(("8a  sampler support + KS < 0.01".into(), outcome(in_support && d < 0.01, format!("KS = {d:.5}"))));

    let mut worst = 0.0f64;
    for p in [
        TruncatedGaussianParams::new(0.0, 1.0, -0.5, 0.5).unwrap(),
        TruncatedGaussianParams::new(0.3, 2.0, -1.0, 2.5).unwrap(),
        TruncatedGaussianParams::new(0.0, 3.0, -2.0, 2.0).unwrap(),
    ] {
        let (m, v) = p.moments();
        let mq = simpson(|x| x * p.pdf(x), p.alpha, p.beta, 2000);
        let vq = simpson(|x| (x - mq).powi(2) * p.pdf(x), p.alpha, p.beta, 2000);
        worst = worst.max((m - mq).abs()).max((v - vq).abs());
    }
    out.push(("8b  truncated moments vs quadrature (1e-6)".into(), outcome(worst < 1e-6, format!("max error {worst:.1e}"))));

    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let rho = rng.random_range(1..=4);
        let g = ControllerGains { k: (1..rho).map(|_| rng.random_range(0.1..10.0)).collect(), varrho: rng.random_range(0.01..1.0) };
        let xi: Vec<f64> = (0..rho).map(|_| rng.random_range(-5.0..5.0)).collect();
        let r: Vec<f64> = (0..rho).map(|_| rng.random_range(-5.0..5.0)).collect();
        let back = scale_to_xi(&scale_to_omega(&xi, &r, &g).unwrap(), &r, &g).unwrap();
        worst = xi.iter().zip(&back).fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    out.push(("8c  scaling round-trip (1e-12)".into(), outcome(worst < 1e-12, format!("max error {worst:.1e}"))));

    let mut disagreements = 0;
    let mut checked = 0;
    for _ in 0..600 {
        let rho = rng.random_range(2..=4);
        let k: Vec<f64> = (1..rho).map(|_| rng.random_range(0.01..5.0)).collect();
        let g = ControllerGains { k: k.clone(), varrho: 0.1 };
        // characteristic polynomial k_ρ λ^{ρ−1} + … + k₂ λ + 1
        let coeffs: Vec<f64> = k.iter().rev().copied().chain([1.0]).collect();
        checked += 1;
        if companion_f_h(&g).hurwitz != routh_stable(&coeffs) {
            disagreements += 1;
        }
    }
    out.push((
        "8d  Hurwitz check vs Routh oracle".into(),
        outcome(disagreements == 0, format!("{disagreements} disagreements in {checked}")),
    ));

    let mut ok = true;
    for _ in 0..10_000 {
        let x: f64 = rng.random_range(-100.0..100.0);
        let l: f64 = rng.random_range(0.01..50.0);
        let s = saturate(x, l);
        ok &= saturate(s, l) == s && s.abs() <= l;
    }
    out.push(("8e  saturation idempotence".into(), outcome(ok, "10000 random points")));

    let mut cfg = config_in(dir, Experiment::Track);
    cfg.output_dir = dir.join("det_a");
    let a = run_experiment(&cfg).unwrap();
    cfg.output_dir = dir.join("det_b");
    let b = run_experiment(&cfg).unwrap();
    let same = a.files.iter().zip(&b.files).all(|(x, y)| fs::read(x).unwrap() == fs::read(y).unwrap());
    out.push(("8f  determinism (byte-identical outputs)".into(), outcome(same, format!("{} files compared", a.files.len()))));

    let coarse_cfg = default_config();
    let mut fine_cfg = default_config();
    fine_cfg.sim.dt /= 2.0;
    fine_cfg.sim.record_stride *= 2;
    let coarse = run_tracking(&coarse_cfg.sim_config(), &coarse_cfg.tracking_setup(1.3).unwrap()).unwrap();
    let fine = run_tracking(&fine_cfg.sim_config(), &fine_cfg.tracking_setup(1.3).unwrap()).unwrap();
    let gap = coarse.e.iter().zip(&fine.e).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let aligned = coarse.len() == fine.len();
    out.push((
        "8g  dt-halving sup|de| < 1e-4".into(),
        outcome(aligned && gap < 1e-4, format!("sup gap {gap:.2e} over {} points", coarse.len())),
    ));

    let secs = start.elapsed().as_secs_f64();
    out.push(("8h  property suite runtime < 5 min".into(), outcome(secs < 300.0, format!("{secs:.1} s"))));
    out
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut results: Vec<(String, Outcome)> = Vec::new();
    results.extend(criterion_1(dir));
    results.push(("2   funnel containment on the noisy boundary (track, defaults)".into(), criterion_2(dir)));
    results.push(("3   privacy bounds at M = 0.8: epsilon in [0.5, 1.5], delta in [0.01, 0.08]".into(), criterion_3(dir)));
    results.push(("4   fast-filter deviation <= 0.036 and envelope".into(), criterion_4()));
    results.push(("5   accountant vs exact Gaussian within 5%".into(), criterion_5()));
    results.push(("6   Gaussian mechanism kappa and quadratic residual".into(), criterion_6()));
    results.push(("7   dp-verify on adjacent boundaries".into(), criterion_7(dir)));
    results.extend(criterion_8(dir));

    let mut failed = 0;
    for (name, o) in &results {
        println!("[{}] {name} -- {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

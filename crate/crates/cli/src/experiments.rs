//! The five experiments and the files they emit.

use std::fs;
use std::path::{Path, PathBuf};

use funnelguard::funnel::{BoundaryDataset, Sensitivity};
use funnelguard::num::std_normal_pdf;
use funnelguard::privacy::{
    estimate_pdf, privacy_bounds, verify_error_dp, DpVerificationReport, EmpiricalPdf, PrivacyBoundReport,
};
use funnelguard::sim::{
    envelope_check, mean_var, ou_ensemble_samples, run_discrete_ou, run_tracking, simulate_ou_path, EnvelopeReport,
    FastFilterReport, Trajectory, TrajectorySummary,
};
use funnelguard::stoch::{ou_disc_stationary_cov, TruncatedGaussianParams};
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    match cfg.experiment {
        Experiment::Table1 => table1(cfg, dir),
        Experiment::Track => track(cfg, dir),
        Experiment::PrivacyReport => privacy_report(cfg, dir),
        Experiment::DpVerify => dp_verify(cfg, dir),
        Experiment::OuCheck => ou_check(cfg, dir),
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io { path: path.to_path_buf(), source: e };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| io(e.into()))?;
    w.write_record(header).map_err(|e| io(e.into()))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_trajectory(path: &Path, traj: &Trajectory<f64>) -> Result<(), CliError> {
    let rows = (0..traj.len()).map(|i| {
        vec![
            num(traj.times[i]),
            num(traj.e[i]),
            num(traj.psi_noisy[i]),
            num(traj.s[i]),
            num(traj.u[i]),
            num(traj.y_noise[i]),
        ]
    });
    write_csv(path, &["t", "e", "psi_noisy", "s", "u", "y_noise"], rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub mu_sigma: (f64, f64),
    pub alpha_beta: (f64, f64),
    pub var_y: f64,
    pub var_w: f64,
    pub mean_y: f64,
    pub mean_w: f64,
    pub oracle_var_y: f64,
    pub oracle_var_w: f64,
}

/// Row `i` uses the stream seeded with `seed + i`.
pub fn table1_rows(cfg: &ExperimentConfig) -> Result<Vec<Table1Row>, CliError> {
    let p = cfg.discrete_params()?;
    let d = &cfg.discrete_ou;
    d.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let noise = TruncatedGaussianParams::new(r[0], r[1], r[2], r[3])?;
            let run = run_discrete_ou(cfg.sim.seed.wrapping_add(i as u64), &p, &noise, d.n_steps, d.burn_in_steps)?;
            let cov = ou_disc_stationary_cov(&p, noise.moments().1)?;
            Ok(Table1Row {
                mu_sigma: (r[0], r[1]),
                alpha_beta: (r[2], r[3]),
                var_y: run.var_y,
                var_w: run.var_w,
                mean_y: run.mean_y,
                mean_w: run.mean_w,
                oracle_var_y: cov[0][0],
                oracle_var_w: cov[1][1],
            })
        })
        .collect()
}

fn pair(a: f64, b: f64) -> String {
    format!("({a},{b})")
}

fn table1(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput, CliError> {
    let rows = table1_rows(cfg)?;
    let path = dir.join("table1.csv");
    write_csv(
        &path,
        &["(mu,sigma)", "(alpha,beta)", "var_y", "var_w", "mean_y", "mean_w", "oracle_var_y", "oracle_var_w"],
        rows.iter().map(|r| {
            vec![
                pair(r.mu_sigma.0, r.mu_sigma.1),
                pair(r.alpha_beta.0, r.alpha_beta.1),
                num(r.var_y),
                num(r.var_w),
                num(r.mean_y),
                num(r.mean_w),
                num(r.oracle_var_y),
                num(r.oracle_var_w),
            ]
        }),
    )?;
    let summary = rows
        .iter()
        .map(|r| format!("{}: var_y={:.4} var_w={:.4}", pair(r.alpha_beta.0, r.alpha_beta.1), r.var_y, r.var_w))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(RunOutput { files: vec![path], summary })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackSummary {
    pub seed: u64,
    pub mode: crate::config::Mode,
    pub points: usize,
    pub t_final: f64,
    #[serde(flatten)]
    pub summary: TrajectorySummary<f64>,
    pub warnings: Vec<String>,
}

fn track(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput, CliError> {
    let traj = run_tracking(&cfg.sim_config(), &cfg.tracking_setup(cfg.funnel.psi_ss)?)?;
    let csv = dir.join("trajectory.csv");
    write_trajectory(&csv, &traj)?;
    let summary = TrackSummary {
        seed: cfg.sim.seed,
        mode: cfg.controller.mode,
        points: traj.len(),
        t_final: *traj.times.last().unwrap_or(&0.0),
        summary: traj.summary,
        warnings: traj.warnings.clone(),
    };
    let json = dir.join("summary.json");
    write_json(&json, &summary)?;
    Ok(RunOutput {
        files: vec![csv, json],
        summary: format!(
            "containment_ok={} min_margin={:.6} max_abs_u={:.4}",
            traj.summary.containment_ok, traj.summary.min_margin, traj.summary.max_abs_u
        ),
    })
}

/// Steady-state filter output pooled over the ensemble.
pub fn privacy_samples(cfg: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    let noise = cfg.truncated_noise()?;
    Ok(ou_ensemble_samples(&cfg.privacy_sim_config(), &cfg.ou_params()?, &noise, cfg.privacy.ensemble_size)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyReportFile {
    #[serde(flatten)]
    pub bounds: PrivacyBoundReport<f64>,
    pub n_samples: usize,
    pub n_bins: usize,
    pub seed: u64,
}

pub fn privacy_report_from_samples(
    cfg: &ExperimentConfig,
    samples: &[f64],
) -> Result<(EmpiricalPdf<f64>, PrivacyReportFile), CliError> {
    let p = &cfg.privacy;
    let pdf = estimate_pdf(samples, p.n_bins)?;
    let bounds = privacy_bounds(&pdf, p.m, p.delta_psi_prime, p.min_bin_count)?;
    Ok((pdf, PrivacyReportFile { bounds, n_samples: samples.len(), n_bins: p.n_bins, seed: cfg.sim.seed }))
}

fn privacy_report(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput, CliError> {
    let samples = privacy_samples(cfg)?;
    let p = &cfg.privacy;
    let pdf = estimate_pdf(&samples, p.n_bins)?;

    let hist = dir.join("histogram.csv");
    write_csv(
        &hist,
        &["bin_left", "bin_right", "density"],
        pdf.edges.windows(2).zip(&pdf.density).map(|(w, &d)| vec![num(w[0]), num(w[1]), num(d)]),
    )?;

    // Gaussian with the same spread, for visual comparison only
    let (_, var) = mean_var(&samples);
    let sd = var.sqrt();
    let baseline = dir.join("baseline.csv");
    write_csv(
        &baseline,
        &["y", "p_ou", "p_gauss"],
        pdf.centers().into_iter().map(|y| vec![num(y), num(pdf.eval(y)), num(std_normal_pdf(y / sd) / sd)]),
    )?;

    let frontier = dir.join("frontier.csv");
    write_csv(
        &frontier,
        &["M", "case", "c_b", "epsilon_U", "S1", "S2", "delta_U", "status"],
        p.m_sweep.iter().map(|&m| match privacy_bounds(&pdf, m, p.delta_psi_prime, p.min_bin_count) {
            Ok(b) => vec![
                num(m),
                format!("{:?}", b.case),
                num(b.c_b),
                num(b.epsilon_u),
                num(b.s1),
                num(b.s2),
                num(b.delta_u),
                "ok".into(),
            ],
            Err(e) => {
                let mut row = vec![num(m)];
                row.extend(std::iter::repeat_n(String::new(), 6));
                row.push(e.category().into());
                row
            }
        }),
    )?;

    let (_, report) = privacy_report_from_samples(cfg, &samples)?;
    let json = dir.join("privacy_report.json");
    write_json(&json, &report)?;
    Ok(RunOutput {
        files: vec![hist, baseline, frontier, json],
        summary: format!(
            "case={:?} epsilon_U={:.4} delta_U={:.4} n_samples={}",
            report.bounds.case, report.bounds.epsilon_u, report.bounds.delta_u, report.n_samples
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpReportFile {
    pub seed: u64,
    pub psi_ss_a: f64,
    pub psi_ss_b: f64,
    pub sensitivity: Sensitivity<f64>,
    #[serde(flatten)]
    pub verification: DpVerificationReport<f64>,
    pub min_margin_a: f64,
    pub min_margin_b: f64,
}

pub struct DpOutcome {
    pub traj_a: Trajectory<f64>,
    pub traj_b: Trajectory<f64>,
    pub report: DpReportFile,
}

/// Two tracking runs on adjacent boundaries with a shared seed.
pub fn dp_runs(cfg: &ExperimentConfig) -> Result<DpOutcome, CliError> {
    let sim = cfg.sim_config();
    let p = &cfg.privacy;
    let setup_a = cfg.tracking_setup(cfg.funnel.psi_ss)?;
    let setup_b = cfg.tracking_setup(p.adjacent_psi_ss)?;
    let traj_a = run_tracking(&sim, &setup_a)?;
    let traj_b = run_tracking(&sim, &setup_b)?;
    let verification = verify_error_dp(
        &traj_a,
        &traj_b,
        &setup_a.boundary,
        &setup_b.boundary,
        p.delta_psi,
        [p.window_start, cfg.sim.t_final],
    )?;
    let dataset =
        BoundaryDataset::new(vec![setup_a.boundary, setup_b.boundary], traj_a.times.clone(), p.delta_psi, cfg.sim.t_final)?;
    let report = DpReportFile {
        seed: cfg.sim.seed,
        psi_ss_a: cfg.funnel.psi_ss,
        psi_ss_b: p.adjacent_psi_ss,
        sensitivity: dataset.query_sensitivity()?,
        verification,
        min_margin_a: traj_a.summary.min_margin,
        min_margin_b: traj_b.summary.min_margin,
    };
    Ok(DpOutcome { traj_a, traj_b, report })
}

fn dp_verify(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput, CliError> {
    let out = dp_runs(cfg)?;
    let a = dir.join("trajectory_a.csv");
    let b = dir.join("trajectory_b.csv");
    write_trajectory(&a, &out.traj_a)?;
    write_trajectory(&b, &out.traj_b)?;
    let diff = dir.join("difference.csv");
    write_csv(
        &diff,
        &["t", "e_a", "e_b", "e_diff", "psi_diff"],
        (0..out.traj_a.len()).map(|i| {
            let (ta, tb) = (&out.traj_a, &out.traj_b);
            vec![
                num(ta.times[i]),
                num(ta.e[i]),
                num(tb.e[i]),
                num(ta.e[i] - tb.e[i]),
                num(ta.psi_noisy[i] - tb.psi_noisy[i]),
            ]
        }),
    )?;
    let json = dir.join("dp_report.json");
    write_json(&json, &out.report)?;
    let v = &out.report.verification;
    Ok(RunOutput {
        files: vec![a, b, diff, json],
        summary: format!(
            "adjacent={} both_contained={} max_error_gap={:.6}",
            v.adjacent, v.both_contained, v.max_error_gap
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportReport {
    pub lo: f64,
    pub hi: f64,
    pub min_y: f64,
    pub max_y: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuCheckFile {
    pub seed: u64,
    pub theta: f64,
    pub vartheta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dt: f64,
    pub t_final: f64,
    pub noise_hold: f64,
    pub fast_filter: FastFilterReport<f64>,
    pub envelope: EnvelopeReport<f64>,
    pub support: SupportReport,
}

pub fn ou_check_report(cfg: &ExperimentConfig) -> Result<OuCheckFile, CliError> {
    let ou = cfg.ou_params()?;
    let noise = cfg.truncated_noise()?;
    let sim = funnelguard::sim::SimConfig { record_stride: 1, ..cfg.sim_config() };
    let path = simulate_ou_path(&sim, &ou, Some(&noise), 0, true)?;
    let (alpha, beta) = (noise.alpha, noise.beta);
    let fast_filter = funnelguard::sim::fast_filter_check(&path, &ou, alpha, beta)?;
    let envelope = envelope_check(&path, &ou, alpha, beta)?;
    let (lo, hi) = (alpha.min(0.0) / ou.vartheta, beta.max(0.0) / ou.vartheta);
    let min_y = path.y.iter().copied().fold(f64::INFINITY, f64::min);
    let max_y = path.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(OuCheckFile {
        seed: cfg.sim.seed,
        theta: ou.theta,
        vartheta: ou.vartheta,
        alpha,
        beta,
        dt: sim.dt,
        t_final: sim.t_final,
        noise_hold: sim.noise_hold,
        fast_filter,
        envelope,
        support: SupportReport { lo, hi, min_y, max_y, pass: min_y >= lo && max_y <= hi },
    })
}

fn ou_check(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput, CliError> {
    let report = ou_check_report(cfg)?;
    let json = dir.join("ou_check.json");
    write_json(&json, &report)?;
    Ok(RunOutput {
        files: vec![json],
        summary: format!(
            "fast_filter max_dev={:.6} bound={:.6} pass={}; envelope pass={}",
            report.fast_filter.max_dev, report.fast_filter.bound, report.fast_filter.pass, report.envelope.pass
        ),
    })
}

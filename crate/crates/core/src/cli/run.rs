use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{parse_config, RunMode, ScenarioConfig};
use super::csvout::{trajectory_columns, write_csv, Table};
use super::svg::{decimate, LinePlot};
use crate::analysis::{self, IdentityProbe};
use crate::linalg;
use crate::model::rng::Lcg32;
use crate::model::{RegressorSignal, Scenario, TunerVariant};
use crate::sim::{self, Trajectory};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },

    #[error(transparent)]
    Numerical(#[from] crate::Error),
}

impl CliError {
    /// 2 for configuration and I/O problems, 3 for numerical aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(e) if e.is_numerical_abort() => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fig1" => Ok(Preset::Fig1),
            "fig2" => Ok(Preset::Fig2),
            "fig3" => Ok(Preset::Fig3),
            "fig4" => Ok(Preset::Fig4),
            other => Err(format!("unknown preset `{other}` (fig1..fig4)")),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
        }
    }

    pub fn regressor(self) -> RegressorSignal {
        match self {
            Preset::Fig1 => RegressorSignal::preset_step(),
            Preset::Fig2 => RegressorSignal::preset_sinusoid(),
            Preset::Fig3 => RegressorSignal::preset_exp_sinusoid(),
            Preset::Fig4 => RegressorSignal::preset_pseudo_random(),
        }
    }

    /// Sinusoid and pseudorandom presets are persistently exciting.
    pub fn is_persistently_exciting(self) -> bool {
        matches!(self, Preset::Fig2 | Preset::Fig4)
    }
}

/// Required decay `‖q(T)‖ / ‖q(0)‖` of the accelerating tuner on exciting presets.
pub const PRESET_DECAY_RATIO: f64 = 0.05;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub mode: Option<RunMode>,
    pub preset: Option<Preset>,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub plot: bool,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub mode: String,
    pub config_hash: String,
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
    pub wall_seconds: f64,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn config_err(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.into(),
        message: message.into(),
    }
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::Write {
            path: dir.clone(),
            message: e.to_string(),
        })?;
        Ok(Output { dir, files: Vec::new() })
    }

    fn csv(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write_csv(&path, table).map_err(|e| CliError::Write {
            path: path.clone(),
            message: e.to_string(),
        })?;
        self.files.push(path);
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::Write {
            path: path.clone(),
            message: e.to_string(),
        })?;
        self.files.push(path);
        Ok(())
    }
}

/// Runs one CLI invocation: writes the result files and returns the report.
/// The report itself is also written as `<name>_report.json`.
pub fn run(opts: &RunOptions) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let (mode_name, hash, out_dir, mut output_checks) = match (opts.preset, &opts.config) {
        (Some(_), Some(_)) => return Err(config_err("--preset", "cannot be combined with --config")),
        (Some(_), None) if opts.mode.is_some() => return Err(config_err("--preset", "cannot be combined with a mode")),
        (Some(preset), None) => {
            let mut out = Output::new(opts.out.clone().unwrap_or_else(|| PathBuf::from(".")))?;
            let checks = run_preset(preset, &mut out)?;
            (
                preset.name().to_string(),
                sha256_hex(preset.name().as_bytes()),
                out,
                checks,
            )
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Read {
                path: path.clone(),
                source,
            })?;
            let cfg = parse_config(&text, opts.mode)?;
            let mode = opts
                .mode
                .or(cfg.mode)
                .ok_or_else(|| config_err("mode", "no mode given on the command line or in the config"))?;
            if let (Some(cli), Some(file)) = (opts.mode, cfg.mode) {
                if cli != file {
                    return Err(config_err(
                        "mode",
                        format!("config says {file}, command line says {cli}"),
                    ));
                }
            }
            let dir = opts
                .out
                .clone()
                .or_else(|| cfg.out.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            let mut out = Output::new(dir)?;
            let checks = run_mode(mode, &cfg, opts, &mut out)?;
            (mode.to_string(), sha256_hex(text.as_bytes()), out, checks)
        }
        (None, None) => return Err(config_err("--config", "either --config or --preset is required")),
    };

    let stem = match opts.preset {
        Some(p) => p.name().to_string(),
        None => output_checks.0.clone(),
    };
    let mut report = RunReport {
        mode: mode_name,
        config_hash: hash,
        files: out_dir.files.clone(),
        checks: std::mem::take(&mut output_checks.1),
        wall_seconds: 0.0,
    };
    let mut out_dir = out_dir;
    let report_path = out_dir.dir.join(format!("{stem}_report.json"));
    report.files.push(report_path);
    report.wall_seconds = started.elapsed().as_secs_f64();
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    out_dir.text(&format!("{stem}_report.json"), &json)?;
    Ok(report)
}

/// (file stem, checks)
type ModeOutcome = (String, Vec<Check>);

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

fn lyapunov_checks(label: &str, traj: &Trajectory) -> Vec<Check> {
    let v = &traj.channels.v;
    let slack = 1e-9 * (1.0 + v[0]);
    let worst = v.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let bound = traj.norm_bound();
    let peak = traj.channels.norm_q.iter().copied().fold(0.0, f64::max);
    vec![
        check(
            format!("{label}_lyapunov_nonincreasing"),
            worst <= slack,
            format!("max V increase {worst:e}, slack {slack:e}"),
        ),
        check(
            format!("{label}_norm_bound"),
            peak <= bound * (1.0 + 1e-12),
            format!("sup |q| = {peak:.6e}, bound {bound:.6e}"),
        ),
    ]
}

fn plot_channel(
    out: &mut Output,
    file: &str,
    title: &str,
    y_label: &str,
    runs: &[(&str, &Trajectory)],
    pick: impl Fn(&Trajectory) -> &[f64],
) -> Result<(), CliError> {
    let mut plot = LinePlot::new(title, "t [s]", y_label);
    for (name, traj) in runs {
        let (xs, ys) = decimate(&traj.times, pick(traj), 2000);
        plot.add(name, xs, ys);
    }
    out.text(file, &plot.render())
}

fn run_preset(preset: Preset, out: &mut Output) -> Result<ModeOutcome, CliError> {
    let name = preset.name();
    let variants = [
        TunerVariant::Velocity,
        TunerVariant::NormalizedVelocity,
        TunerVariant::Acceleration,
    ];
    let mut runs = Vec::new();
    let mut checks = Vec::new();
    for variant in variants {
        let s = Scenario::figure(variant, preset.regressor());
        let traj = sim::integrate_deterministic(&s)?;
        out.csv(&format!("{name}_{}.csv", variant.name()), &trajectory_columns(&traj))?;
        checks.extend(lyapunov_checks(variant.name(), &traj));
        if variant == TunerVariant::Acceleration && preset.is_persistently_exciting() {
            let ratio = traj.final_q().norm() / s.q0().norm();
            checks.push(check(
                "accel_decay",
                ratio <= PRESET_DECAY_RATIO,
                format!("|q(T)|/|q(0)| = {ratio:.3e}, limit {PRESET_DECAY_RATIO}"),
            ));
        }
        runs.push((variant, traj));
    }
    let labelled: Vec<(&str, &Trajectory)> = runs
        .iter()
        .map(|(v, t)| {
            let label = match v {
                TunerVariant::Velocity => "gradient",
                TunerVariant::NormalizedVelocity => "normalized gradient",
                TunerVariant::Acceleration => "accelerating",
            };
            (label, t)
        })
        .collect();
    plot_channel(
        out,
        &format!("{name}_normq.svg"),
        &format!("{name}: |q|"),
        "sqrt(q'q)",
        &labelled,
        |t| &t.channels.norm_q,
    )?;
    plot_channel(
        out,
        &format!("{name}_error.svg"),
        &format!("{name}: x'q"),
        "x'q",
        &labelled,
        |t| &t.channels.err,
    )?;
    Ok((name.to_string(), checks))
}

fn scenario_of(cfg: &ScenarioConfig, mode: RunMode) -> Result<&Scenario, CliError> {
    cfg.scenario
        .as_ref()
        .ok_or_else(|| config_err("variant", format!("{mode} needs a full tuner scenario")))
}

fn run_mode(mode: RunMode, cfg: &ScenarioConfig, opts: &RunOptions, out: &mut Output) -> Result<ModeOutcome, CliError> {
    let name = cfg.name.as_str();
    let mut scenario = cfg.scenario.clone();
    if let (Some(seed), Some(s)) = (opts.seed, scenario.as_mut()) {
        s.noise.seed = seed;
    }
    let plot = opts.plot || cfg.plot;
    let mut checks = Vec::new();
    match mode {
        RunMode::Simulate => {
            let s = scenario
                .as_ref()
                .ok_or_else(|| config_err("variant", "simulate needs a tuner scenario"))?;
            let traj = if s.noise.is_noise_free() {
                sim::integrate_deterministic(s)?
            } else {
                sim::integrate_stochastic(s)?
            };
            out.csv(&format!("{name}_{}.csv", s.variant.name()), &trajectory_columns(&traj))?;
            if s.noise.is_noise_free() {
                checks.extend(lyapunov_checks(s.variant.name(), &traj));
            }
            if plot {
                let runs = [(s.variant.name(), &traj)];
                plot_channel(out, &format!("{name}_normq.svg"), "|q|", "sqrt(q'q)", &runs, |t| {
                    &t.channels.norm_q
                })?;
                plot_channel(out, &format!("{name}_error.svg"), "x'q", "x'q", &runs, |t| {
                    &t.channels.err
                })?;
            }
        }
        RunMode::MonteCarlo => {
            let s = scenario
                .as_ref()
                .ok_or_else(|| config_err("variant", "montecarlo needs a tuner scenario"))?;
            let trials = opts.trials.or(cfg.trials).unwrap_or(1000);
            if trials < 2 {
                return Err(config_err("trials", "need at least 2 trials"));
            }
            let stride = cfg.stride.unwrap_or((s.num_steps() / 200).max(1));
            let rep = sim::monte_carlo(s, trials, stride)?;
            let n = s.dim();
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
            let mut header = vec!["t".to_string()];
            header.extend((1..=n).map(|i| format!("mean_{i}")));
            header.extend((1..=n).map(|i| format!("mean_se_{i}")));
            for prefix in ["m2", "m2_se", "analytic"] {
                header.extend(pairs.iter().map(|(i, j)| format!("{prefix}_{}_{}", i + 1, j + 1)));
            }
            if rep.bound.is_some() {
                header.extend(pairs.iter().map(|(i, j)| format!("bound_{}_{}", i + 1, j + 1)));
            }
            let analytic = rep
                .analytic_second_moment()
                .expect("monte_carlo attaches analytic curves");
            let mut table = Table::new(header);
            for k in 0..rep.times.len() {
                let mut row = vec![rep.times[k]];
                row.extend(rep.mc_mean[k].iter());
                row.extend(rep.mc_mean_se[k].iter());
                for m in [&rep.mc_second_moment[k], &rep.mc_second_moment_se[k], &analytic[k]] {
                    row.extend(pairs.iter().map(|&(i, j)| m[(i, j)]));
                }
                if let Some(b) = &rep.bound {
                    row.extend(pairs.iter().map(|&(i, j)| b[k][(i, j)]));
                }
                table.rows.push(row);
            }
            out.csv(&format!("{name}_montecarlo.csv"), &table)?;

            let last = rep.times.len() - 1;
            for i in 0..n {
                let diff = (rep.mc_second_moment[last][(i, i)] - analytic[last][(i, i)]).abs();
                let se = rep.mc_second_moment_se[last][(i, i)];
                checks.push(check(
                    format!("final_second_moment_{}_within_3se", i + 1),
                    diff <= 3.0 * se,
                    format!("|mc - analytic| = {diff:.3e}, 3 SE = {:.3e}", 3.0 * se),
                ));
            }
            let worst = rep
                .mc_second_moment
                .iter()
                .map(linalg::min_eigenvalue)
                .fold(f64::INFINITY, f64::min);
            checks.push(check(
                "second_moment_psd",
                worst >= -1e-10,
                format!("min eigenvalue {worst:e}"),
            ));
            if plot {
                let mut p = LinePlot::new("second moment of q", "t [s]", "E{q_i^2}");
                for i in 0..n {
                    p.add(
                        &format!("mc q{}^2", i + 1),
                        rep.times.clone(),
                        rep.mc_second_moment.iter().map(|m| m[(i, i)]).collect(),
                    );
                    p.add(
                        &format!("analytic q{}^2", i + 1),
                        rep.times.clone(),
                        analytic.iter().map(|m| m[(i, i)]).collect(),
                    );
                }
                out.text(&format!("{name}_montecarlo.svg"), &p.render())?;
            }
        }
        RunMode::Covariance => {
            let s = scenario_of(cfg, mode)?;
            let stride = cfg.stride.unwrap_or((s.num_steps() / 1000).max(1));
            let cov = analysis::covariance_ode_strided(s, stride)?;
            let n = s.dim();
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
            let closed = match (&s.gains, s.variant) {
                (crate::model::TunerGains::Velocity { m }, TunerVariant::Velocity) => {
                    let qq0 = s.q0() * s.q0().transpose();
                    Some(
                        cov.transition
                            .iter()
                            .map(|phi| analysis::velocity_covariance_closed_form(phi, m, &qq0, s.noise.sigma_w))
                            .collect::<Vec<_>>(),
                    )
                }
                _ => None,
            };
            let mut header = vec!["t".to_string()];
            header.extend((1..=n).map(|i| format!("mean_{i}")));
            let mut prefixes = vec!["m2", "noise"];
            if closed.is_some() {
                prefixes.push("closed");
            }
            if cov.bound.is_some() {
                prefixes.push("bound");
            }
            for prefix in &prefixes {
                header.extend(pairs.iter().map(|(i, j)| format!("{prefix}_{}_{}", i + 1, j + 1)));
            }
            let mut table = Table::new(header);
            for k in 0..cov.times.len() {
                let mut row = vec![cov.times[k]];
                row.extend(cov.mean[k].iter());
                let mut mats = vec![&cov.second_moment[k], &cov.noise[k]];
                if let Some(c) = &closed {
                    mats.push(&c[k]);
                }
                if let Some(b) = &cov.bound {
                    mats.push(&b[k]);
                }
                for m in mats {
                    row.extend(pairs.iter().map(|&(i, j)| m[(i, j)]));
                }
                table.rows.push(row);
            }
            out.csv(&format!("{name}_covariance.csv"), &table)?;

            let worst = cov
                .noise
                .iter()
                .map(linalg::min_eigenvalue)
                .fold(f64::INFINITY, f64::min);
            checks.push(check(
                "noise_covariance_psd",
                worst >= -1e-10,
                format!("min eigenvalue {worst:e}"),
            ));
            if let Some(c) = &closed {
                let gap = c
                    .iter()
                    .zip(&cov.second_moment)
                    .map(|(a, b)| linalg::frobenius(&(a - b)))
                    .fold(0.0, f64::max);
                checks.push(check(
                    "closed_form_agreement",
                    gap <= 1e-6,
                    format!("max Frobenius gap {gap:e}"),
                ));
            }
            if let Some(b) = &cov.bound {
                let worst = b
                    .iter()
                    .zip(&cov.noise)
                    .map(|(b, nz)| linalg::min_eigenvalue(&(b - nz)))
                    .fold(f64::INFINITY, f64::min);
                checks.push(check(
                    "exact_bound_dominates",
                    worst >= -1e-8,
                    format!("min eigenvalue of gap {worst:e}"),
                ));
            }
            if plot {
                let mut p = LinePlot::new("analytic second moment of q", "t [s]", "E{q_i^2}");
                for i in 0..n {
                    p.add(
                        &format!("q{}^2", i + 1),
                        cov.times.clone(),
                        cov.second_moment.iter().map(|m| m[(i, i)]).collect(),
                    );
                    if let Some(b) = &cov.bound {
                        p.add(
                            &format!("bound {}", i + 1),
                            cov.times.clone(),
                            b.iter()
                                .zip(&cov.mean_term)
                                .map(|(b, m)| b[(i, i)] + m[(i, i)])
                                .collect(),
                        );
                    }
                }
                out.text(&format!("{name}_covariance.svg"), &p.render())?;
            }
        }
        RunMode::VerifyIdentity => {
            let s = scenario_of(cfg, mode)?;
            if !s.variant.is_second_order() || !s.gains.is_scalar() {
                return Err(config_err(
                    "variant",
                    "verify-identity needs the accel variant with scalar gains",
                ));
            }
            let t = cfg.identity_t.unwrap_or(s.horizon);
            let margin = (0.05 * t).max(2.0 * cfg.fd_step);
            if !(t > 2.0 * margin) {
                return Err(config_err("identity_t", "too short for the difference stencil"));
            }
            let mut lcg = Lcg32::new(s.noise.seed);
            let probes: Vec<IdentityProbe> = (0..cfg.draws)
                .map(|_| IdentityProbe {
                    mu1: 2.0 * lcg.next_f64(),
                    mu2: 2.0 * lcg.next_f64(),
                    t,
                    tau: margin + (t - 2.0 * margin) * lcg.next_f64(),
                })
                .collect();
            let residuals = analysis::verify_identity_batch(s, &probes, cfg.fd_step)?;
            let mut table = Table::new(
                ["draw", "mu1", "mu2", "t", "tau", "residual"]
                    .map(String::from)
                    .to_vec(),
            );
            for (i, (p, r)) in probes.iter().zip(&residuals).enumerate() {
                table.rows.push(vec![i as f64, p.mu1, p.mu2, p.t, p.tau, *r]);
            }
            out.csv(&format!("{name}_identity.csv"), &table)?;
            let worst = residuals.iter().copied().fold(0.0, f64::max);
            checks.push(check(
                "identity_residual",
                worst <= cfg.tolerance,
                format!("max residual {worst:e}, tolerance {:e}", cfg.tolerance),
            ));
        }
        RunMode::Pe => {
            let window = cfg.window.expect("parser requires window for pe");
            let mut table = Table::new(vec!["t0".into(), "pe".into()]);
            let mut t0 = 0.0;
            let mut k = 0usize;
            while t0 + window <= cfg.horizon * (1.0 + 1e-12) {
                table
                    .rows
                    .push(vec![t0, analysis::pe_measure(&cfg.regressor, t0, window)]);
                k += 1;
                t0 = k as f64 * window;
            }
            if table.rows.is_empty() {
                return Err(config_err("window", "longer than the horizon T"));
            }
            out.csv(&format!("{name}_pe.csv"), &table)?;
            if plot {
                let mut p = LinePlot::new("excitation per window", "window start [s]", "min eig of int xx'");
                p.add("pe", table.column("t0").unwrap(), table.column("pe").unwrap());
                out.text(&format!("{name}_pe.svg"), &p.render())?;
            }
        }
    }
    Ok((name.to_string(), checks))
}

/// Exists so tests can point at files relative to a report.
pub fn file_names(report: &RunReport) -> Vec<String> {
    report
        .files
        .iter()
        .filter_map(|p| Path::new(p).file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect()
}

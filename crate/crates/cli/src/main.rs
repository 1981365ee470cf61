//! Batch front-end: parses a system configuration, dispatches the library
//! operations, and emits machine-readable JSON reports and plot-ready CSV
//! tables.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 numeric failure,
//! 4 a requested acceptance threshold failed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use melnikov_core::{
    action_jump, additivity_gap, build_separatrix, find_critical_tau, find_critical_tau_scan,
    melnikov_potential, melnikov_vector, order_fit, reduced_potential,
    measure_splitting, CriticalPoint, IntegratorConfig, JumpReport, MelnikovValue, NewtonOptions,
    Perturbation, PhasePoint, ReducedSample, SeparatrixOrbit, SplittingReport, SystemConfig,
};

const CONFIG_VERSION: u32 = 1;

/// On-disk run configuration: a version tag plus the system description.
/// Unknown keys are rejected so that misspelled fields cannot silently fall
/// back to defaults and invalidate a numerical claim.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    version: u32,
    system: SystemConfig,
}

#[derive(Parser)]
#[command(
    name = "melnikov",
    version,
    about = "Splitting analysis for penduli-rotator systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PhaseArgs {
    /// Rotator actions I (one value per rotator dimension).
    #[arg(long, value_delimiter = ',', required = true)]
    action: Vec<f64>,
    /// Rotator angles phi.
    #[arg(long, value_delimiter = ',', required = true)]
    phi: Vec<f64>,
    /// Clock coordinates; defaults to the configured initial clock state.
    #[arg(long, value_delimiter = ',')]
    clock: Option<Vec<f64>>,
}

impl PhaseArgs {
    fn phase(&self, cfg: &SystemConfig) -> PhasePoint {
        PhasePoint::new(
            self.action.clone(),
            self.phi.clone(),
            self.clock.clone().unwrap_or_else(|| cfg.clock.initial.clone()),
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the Melnikov vector (and potential, when Hamiltonian).
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        phase: PhaseArgs,
        /// Separatrix phases tau, one per pendulum.
        #[arg(long, value_delimiter = ',', required = true)]
        tau: Vec<f64>,
        /// Quadrature tolerance.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Locate a non-degenerate critical point of the potential and report
    /// its rank/condition certificate.
    Critical {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        phase: PhaseArgs,
        /// Newton seed; omitted means a grid scan over one tau period.
        #[arg(long, value_delimiter = ',')]
        seed: Option<Vec<f64>>,
    },
    /// Sample the reduced potential and its theta-gradient over a grid and
    /// report the non-degeneracy certificate (min gradient norm).
    Reduced {
        #[command(flatten)]
        config: ConfigArg,
        /// Rotator actions I.
        #[arg(long, value_delimiter = ',', required = true)]
        action: Vec<f64>,
        /// Number of grid points per angle dimension.
        #[arg(long, default_value_t = 16)]
        theta_count: usize,
    },
    /// Measure graph splitting over an epsilon list and compare with the
    /// first-order prediction; optionally enforce a residual-order slope.
    VerifySplitting {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        phase: PhaseArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        tau: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 5e-3, 2.5e-3, 1.25e-3])]
        eps: Vec<f64>,
        /// Fail (exit 4) when the fitted residual slope is below this.
        #[arg(long)]
        min_slope: Option<f64>,
    },
    /// Measure the action jump across the homoclinic channel at one epsilon
    /// and compare with the first-order prediction.
    VerifyJump {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        phase: PhaseArgs,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// Newton seed for the critical point; omitted means grid scan.
        #[arg(long, value_delimiter = ',')]
        seed: Option<Vec<f64>>,
        /// Fail (exit 4) when the relative error exceeds this.
        #[arg(long)]
        max_rel_error: Option<f64>,
    },
    /// Report the additivity gap |M~ - sum_i M~_i| at the given phases.
    Additivity {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        phase: PhaseArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        tau: Vec<f64>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Fail (exit 4) when the gap exceeds this.
        #[arg(long)]
        max_gap: Option<f64>,
    },
    /// Splitting and jump residuals across an epsilon list, with order fits
    /// and a plot-ready CSV table.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        phase: PhaseArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        tau: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 5e-3, 2.5e-3, 1.25e-3])]
        eps: Vec<f64>,
        /// Also measure the action jump per epsilon (slower).
        #[arg(long)]
        jump: bool,
        /// Write the per-epsilon table here as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Fail (exit 4) when the splitting residual slope is below this.
        #[arg(long)]
        min_slope: Option<f64>,
    },
    /// Export sampled separatrix orbits as CSV (s, p_i, q_i per pendulum).
    ExportSeparatrix {
        #[command(flatten)]
        config: ConfigArg,
        /// Half-width of the sampled s-interval.
        #[arg(long, default_value_t = 10.0)]
        span: f64,
        /// Number of samples.
        #[arg(long, default_value_t = 401)]
        samples: usize,
        /// Write the table here as CSV (default stdout).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

enum CliError {
    Parse(String),
    Numeric(String),
    Threshold(String),
}

impl From<melnikov_core::Error> for CliError {
    fn from(e: melnikov_core::Error) -> Self {
        CliError::Numeric(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Envelope common to every JSON report: tool version and the SHA-256 of the
/// configuration file that produced it, so results stay traceable.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    tool_version: &'static str,
    config_sha256: &'a str,
    command: &'static str,
    #[serde(flatten)]
    payload: T,
}

struct Loaded {
    system: SystemConfig,
    orbit: SeparatrixOrbit,
    config_sha256: String,
}

fn load(path: &Path) -> CliResult<Loaded> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let run: RunConfig = toml::from_str(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    if run.version != CONFIG_VERSION {
        return Err(CliError::Parse(format!(
            "unsupported config version {} (expected {CONFIG_VERSION})",
            run.version
        )));
    }
    let orbit = build_separatrix(&run.system.penduli)?;
    let config_sha256 = hex(&Sha256::digest(text.as_bytes()));
    Ok(Loaded {
        system: run.system,
        orbit,
        config_sha256,
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn emit<T: Serialize>(cfg: &ConfigArg, sha: &str, command: &'static str, payload: T) -> CliResult<()> {
    let report = Report {
        tool_version: env!("CARGO_PKG_VERSION"),
        config_sha256: sha,
        command,
        payload,
    };
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Numeric(format!("serialization: {e}")))?;
    text.push('\n');
    match &cfg.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Numeric(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn write_table(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => {
            fs::write(p, text).map_err(|e| CliError::Numeric(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct EvalPayload {
    tau: Vec<f64>,
    phase: PhasePoint,
    vector: MelnikovValue<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    potential: Option<MelnikovValue<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    potential_absent_reason: Option<String>,
}

fn cmd_eval(config: &ConfigArg, phase: &PhaseArgs, tau: &[f64], tol: f64) -> CliResult<()> {
    let loaded = load(&config.config)?;
    let ph = phase.phase(&loaded.system);
    let vector = melnikov_vector(&loaded.system, &loaded.orbit, tau, &ph, tol)?;
    let (potential, reason) = match loaded.system.perturbation {
        Perturbation::Hamiltonian { .. } => (
            Some(melnikov_potential(&loaded.system, &loaded.orbit, tau, &ph, tol)?),
            None,
        ),
        Perturbation::General { .. } => (
            None,
            Some("no potential: the perturbation is a general vector field".to_string()),
        ),
    };
    emit(
        config,
        &loaded.config_sha256,
        "eval",
        EvalPayload {
            tau: tau.to_vec(),
            phase: ph,
            vector,
            potential,
            potential_absent_reason: reason,
        },
    )
}

fn cmd_critical(config: &ConfigArg, phase: &PhaseArgs, seed: Option<&[f64]>) -> CliResult<()> {
    let loaded = load(&config.config)?;
    let ph = phase.phase(&loaded.system);
    let opts = NewtonOptions::default();
    let crit: CriticalPoint = match seed {
        Some(s) => find_critical_tau(&loaded.system, &loaded.orbit, s, &ph, &opts)?,
        None => find_critical_tau_scan(&loaded.system, &loaded.orbit, &ph, &opts)?,
    };
    emit(config, &loaded.config_sha256, "critical", crit)
}

#[derive(Serialize)]
struct ReducedPayload {
    samples: Vec<ReducedSample>,
    /// min over the grid of ||d/dtheta M~*||: the non-degeneracy margin.
    min_gradient_norm: f64,
}

fn cmd_reduced(config: &ConfigArg, action: &[f64], theta_count: usize) -> CliResult<()> {
    let loaded = load(&config.config)?;
    if theta_count == 0 {
        return Err(CliError::Parse("theta-count must be positive".into()));
    }
    let d = loaded.system.rotator.omega(action).len();
    if d != 1 {
        return Err(CliError::Parse(
            "reduced grid sampling currently supports d = 1 rotators".into(),
        ));
    }
    let opts = NewtonOptions::default();
    let mut samples = Vec::with_capacity(theta_count);
    let mut warm: Option<Vec<f64>> = None;
    for k in 0..theta_count {
        let theta = vec![k as f64 / theta_count as f64];
        let s = reduced_potential(
            &loaded.system,
            &loaded.orbit,
            action,
            &theta,
            warm.as_deref(),
            &opts,
        )?;
        warm = Some(s.tau_star.clone());
        samples.push(s);
    }
    let min_gradient_norm = samples
        .iter()
        .map(|s| s.dtheta.iter().map(|g| g * g).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min);
    emit(
        config,
        &loaded.config_sha256,
        "reduced",
        ReducedPayload {
            samples,
            min_gradient_norm,
        },
    )
}

fn cmd_verify_splitting(
    config: &ConfigArg,
    phase: &PhaseArgs,
    tau: &[f64],
    eps: &[f64],
    min_slope: Option<f64>,
) -> CliResult<()> {
    let loaded = load(&config.config)?;
    let ph = phase.phase(&loaded.system);
    let report: SplittingReport = measure_splitting(
        &loaded.system,
        &loaded.orbit,
        tau,
        &ph,
        eps,
        &IntegratorConfig::default(),
    )?;
    let slope = report.fit.slope;
    emit(config, &loaded.config_sha256, "verify-splitting", report)?;
    if let Some(min) = min_slope {
        if slope < min {
            return Err(CliError::Threshold(format!(
                "residual slope {slope:.3} below required {min}"
            )));
        }
    }
    Ok(())
}

fn cmd_verify_jump(
    config: &ConfigArg,
    phase: &PhaseArgs,
    eps: f64,
    seed: Option<&[f64]>,
    max_rel_error: Option<f64>,
) -> CliResult<()> {
    let loaded = load(&config.config)?;
    let ph = phase.phase(&loaded.system);
    let report: JumpReport = action_jump(
        &loaded.system,
        &loaded.orbit,
        &ph,
        eps,
        seed,
        &IntegratorConfig::default(),
        &NewtonOptions::default(),
    )?;
    let rel = report.relative_error;
    emit(config, &loaded.config_sha256, "verify-jump", report)?;
    if let Some(max) = max_rel_error {
        if rel > max {
            return Err(CliError::Threshold(format!(
                "jump relative error {rel:.3} above allowed {max}"
            )));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct AdditivityPayload {
    tau: Vec<f64>,
    gap: f64,
    tol: f64,
}

fn cmd_additivity(
    config: &ConfigArg,
    phase: &PhaseArgs,
    tau: &[f64],
    tol: f64,
    max_gap: Option<f64>,
) -> CliResult<()> {
    let loaded = load(&config.config)?;
    let ph = phase.phase(&loaded.system);
    let gap = additivity_gap(&loaded.system, &loaded.orbit, tau, &ph, tol)?;
    emit(
        config,
        &loaded.config_sha256,
        "additivity",
        AdditivityPayload {
            tau: tau.to_vec(),
            gap,
            tol,
        },
    )?;
    if let Some(max) = max_gap {
        if gap.abs() > max {
            return Err(CliError::Threshold(format!(
                "additivity gap {gap:.3e} above allowed {max:.3e}"
            )));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepPayload {
    splitting: SplittingReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    jumps: Option<Vec<JumpReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    jump_residual_slope: Option<f64>,
}

fn cmd_sweep(
    config: &ConfigArg,
    phase: &PhaseArgs,
    tau: &[f64],
    eps: &[f64],
    jump: bool,
    csv: Option<&Path>,
    min_slope: Option<f64>,
) -> CliResult<()> {
    let loaded = load(&config.config)?;
    let ph = phase.phase(&loaded.system);
    let icfg = IntegratorConfig::default();
    let splitting = measure_splitting(&loaded.system, &loaded.orbit, tau, &ph, eps, &icfg)?;

    let (jumps, jump_residual_slope) = if jump {
        let newton = NewtonOptions::default();
        let mut reports = Vec::with_capacity(eps.len());
        let mut warm: Option<Vec<f64>> = None;
        for &e in eps {
            let r = action_jump(
                &loaded.system,
                &loaded.orbit,
                &ph,
                e,
                warm.as_deref(),
                &icfg,
                &newton,
            )?;
            warm = Some(r.tau_star.clone());
            reports.push(r);
        }
        let resid: Vec<f64> = reports
            .iter()
            .map(|r| {
                r.measured
                    .iter()
                    .zip(&r.predicted)
                    .map(|(m, p)| (m - p).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let slope = order_fit(eps, &resid)?.slope;
        (Some(reports), Some(slope))
    } else {
        (None, None)
    };

    let mut table = String::from("quantity,eps,measured,predicted,residual\n");
    for (k, &e) in eps.iter().enumerate() {
        for i in 0..splitting.measured[k].len() {
            table.push_str(&format!(
                "splitting_{i},{e:e},{:e},{:e},{:e}\n",
                splitting.measured[k][i], splitting.predicted[k][i], splitting.residual[k]
            ));
        }
    }
    if let Some(reports) = &jumps {
        for r in reports {
            for i in 0..r.measured.len() {
                table.push_str(&format!(
                    "jump_{i},{:e},{:e},{:e},{:e}\n",
                    r.eps,
                    r.measured[i],
                    r.predicted[i],
                    (r.measured[i] - r.predicted[i]).abs()
                ));
            }
        }
    }
    write_table(csv, &table)?;

    let slope = splitting.fit.slope;
    emit(
        config,
        &loaded.config_sha256,
        "sweep",
        SweepPayload {
            splitting,
            jumps,
            jump_residual_slope,
        },
    )?;
    if let Some(min) = min_slope {
        if slope < min {
            return Err(CliError::Threshold(format!(
                "splitting residual slope {slope:.3} below required {min}"
            )));
        }
    }
    Ok(())
}

fn cmd_export_separatrix(
    config: &ConfigArg,
    span: f64,
    samples: usize,
    csv: Option<&Path>,
) -> CliResult<()> {
    let loaded = load(&config.config)?;
    if samples < 2 {
        return Err(CliError::Parse("samples must be at least 2".into()));
    }
    let n = loaded.orbit.penduli.len();
    let mut table = String::from("s");
    for i in 0..n {
        table.push_str(&format!(",p{i},q{i}"));
    }
    table.push('\n');
    for k in 0..samples {
        let s = -span + 2.0 * span * k as f64 / (samples - 1) as f64;
        table.push_str(&format!("{s:e}"));
        for sep in &loaded.orbit.penduli {
            let (p, q) = sep.point(s);
            table.push_str(&format!(",{p:e},{q:e}"));
        }
        table.push('\n');
    }
    write_table(csv, &table)
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Eval {
            config,
            phase,
            tau,
            tol,
        } => cmd_eval(config, phase, tau, *tol),
        Command::Critical {
            config,
            phase,
            seed,
        } => cmd_critical(config, phase, seed.as_deref()),
        Command::Reduced {
            config,
            action,
            theta_count,
        } => cmd_reduced(config, action, *theta_count),
        Command::VerifySplitting {
            config,
            phase,
            tau,
            eps,
            min_slope,
        } => cmd_verify_splitting(config, phase, tau, eps, *min_slope),
        Command::VerifyJump {
            config,
            phase,
            eps,
            seed,
            max_rel_error,
        } => cmd_verify_jump(config, phase, *eps, seed.as_deref(), *max_rel_error),
        Command::Additivity {
            config,
            phase,
            tau,
            tol,
            max_gap,
        } => cmd_additivity(config, phase, tau, *tol, *max_gap),
        Command::Sweep {
            config,
            phase,
            tau,
            eps,
            jump,
            csv,
            min_slope,
        } => cmd_sweep(config, phase, tau, eps, *jump, csv.as_deref(), *min_slope),
        Command::ExportSeparatrix {
            config,
            span,
            samples,
            csv,
        } => cmd_export_separatrix(config, *span, *samples, csv.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Parse(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Threshold(msg)) => {
            eprintln!("threshold failure: {msg}");
            ExitCode::from(4)
        }
    }
}

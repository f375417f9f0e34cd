//! qdec: decoherence of a qubit coupled to a transverse-field Ising chain
//! driven linearly through both of its quantum critical points.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use commands::{AnalyzeArgs, CliError, SweepArgs};
use config::{parse_f64_list, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "qdec",
    version,
    about = "Simulate and analyze qubit decoherence from a critically quenched Ising environment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a quench and write trace.csv, snapshot spectra and a manifest
    Simulate(ConfigArgs),
    /// Evolve only to the snapshot fields and write the mode spectra
    Modes(ConfigArgs),
    /// Kibble-Zurek scaling sweep at fixed interference phase
    Sweep(SweepCli),
    /// Locate revival peaks in an existing trace.csv
    Analyze(AnalyzeCli),
}

/// Layering: defaults, then --config file, then --set pairs, then the
/// dedicated flags.
#[derive(Args)]
struct ConfigArgs {
    /// Key=value config file; '#' starts a comment
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. --set n=2000
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Environment size (number of spins)
    #[arg(long)]
    n: Option<usize>,
    /// Qubit-environment coupling
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Quench time
    #[arg(long)]
    tau_q: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    g_start: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    g_end: Option<f64>,
    /// Trace sampling step in g
    #[arg(long)]
    dg: Option<f64>,
    /// magnus4 | rk4 | rk45
    #[arg(long)]
    integrator: Option<String>,
    #[arg(long)]
    dt_max: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Evolve every m-th mode and integrate the spectrum instead
    #[arg(long)]
    subsample: Option<usize>,
    /// Comma-separated snapshot fields, e.g. 2.0,0.0,-2.0
    #[arg(long, allow_hyphen_values = true)]
    snapshots: Option<String>,
    /// Allow a ramp that does not cover both critical points
    #[arg(long, value_name = "BOOL")]
    partial: Option<bool>,
    /// Output directory (overrides config out_root and QDEC_OUT_ROOT)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path).map_err(CliError::Config)?;
        }
        for pair in &self.set {
            cfg.apply_override(pair).map_err(CliError::Config)?;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.tau_q {
            cfg.tau_q = v;
        }
        if let Some(v) = self.g_start {
            cfg.g_start = v;
        }
        if let Some(v) = self.g_end {
            cfg.g_end = v;
        }
        if let Some(v) = self.dg {
            cfg.dg = v;
        }
        if let Some(v) = &self.integrator {
            cfg.set("integrator", v).map_err(CliError::Config)?;
        }
        if let Some(v) = self.dt_max {
            cfg.dt_max = Some(v);
        }
        if let Some(v) = self.rel_tol {
            cfg.rel_tol = v;
        }
        if let Some(v) = self.abs_tol {
            cfg.abs_tol = v;
        }
        if let Some(v) = self.subsample {
            cfg.subsample = v;
        }
        if let Some(s) = &self.snapshots {
            cfg.snapshots = parse_f64_list(s).map_err(CliError::Config)?;
        }
        if let Some(v) = self.partial {
            cfg.partial = v;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SweepCli {
    #[command(flatten)]
    base: ConfigArgs,
    /// Comma-separated quench times; at least four spanning a decade
    #[arg(long, value_name = "LIST")]
    tau_q_list: String,
    /// Interference phase 4 t delta held fixed across the sweep
    #[arg(long, default_value_t = 0.4)]
    phi_star: f64,
    /// Per-run coupling is coupling_scale / tau_q
    #[arg(long, default_value_t = 0.1)]
    coupling_scale: f64,
}

#[derive(Args)]
struct AnalyzeCli {
    /// trace.csv produced by simulate
    #[arg(long)]
    trace: PathBuf,
    /// Environment size; defaults to the sibling manifest, then 1000
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    tau_q: Option<f64>,
    #[arg(long)]
    g_start: Option<f64>,
    #[arg(long)]
    g_end: Option<f64>,
    /// Field window searched for peaks, as "lo,hi"
    #[arg(long, value_name = "LO,HI", allow_hyphen_values = true)]
    window: Option<String>,
    /// Report directory; defaults to the trace's own
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_window(s: &str) -> Result<(f64, f64), CliError> {
    let v = parse_f64_list(s).map_err(CliError::Config)?;
    if v.len() != 2 {
        return Err(CliError::Config(format!(
            "window needs exactly two numbers, got {}",
            v.len()
        )));
    }
    Ok((v[0], v[1]))
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Simulate(a) => {
            let cfg = a.build()?;
            commands::simulate(&cfg, a.out.clone())
        }
        Command::Modes(a) => {
            let cfg = a.build()?;
            commands::modes(&cfg, a.out.clone())
        }
        Command::Sweep(s) => {
            let cfg = s.base.build()?;
            let args = SweepArgs {
                tau_q_list: parse_f64_list(&s.tau_q_list).map_err(CliError::Config)?,
                phi_star: s.phi_star,
                coupling_scale: s.coupling_scale,
            };
            commands::sweep(&cfg, &args, s.base.out.clone())
        }
        Command::Analyze(a) => {
            let window = a.window.as_deref().map(parse_window).transpose()?;
            let args = AnalyzeArgs {
                trace: a.trace.clone(),
                n: a.n,
                delta: a.delta,
                tau_q: a.tau_q,
                g_start: a.g_start,
                g_end: a.g_end,
                window,
            };
            commands::analyze(&args, a.out.clone())
        }
    }
}

fn main() -> ExitCode {
    // clap's own exit code for usage errors is 2, which this tool reserves
    // for numerical failures; route flag mistakes to 1 with config errors
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("qdec: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

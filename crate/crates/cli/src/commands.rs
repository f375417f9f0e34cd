//! The four subcommands: simulate, modes, sweep, analyze.
//!
//! Exit codes: 0 success, 1 configuration or parse error, 2 numerical
//! failure, 3 analysis warning (poor scaling fit, missed revival detection).

use crate::config::{build_samples, RunConfig};
use crate::output::{fmt_f64, unix_now, Csv, Emitter, FailureEntry};
use qdec_core::analysis::{
    classify_regime, excited_sector_product, find_revivals, fit_scaling, Regime, ScalingPoint,
};
use qdec_core::analytic::{
    decoherence_after, decoherence_between, fidelity_paramagnetic, fk_adiabatic,
    fk_excited_first, fk_excited_second, strong_coupling_warning, ValidityWindow,
};
use qdec_core::decoherence::{
    run_quench, DecoherenceTrace, ModeSnapshot, RegimeTag, TraceMeta, TraceSample,
};
use qdec_core::integrator::IntegratorConfig;
use qdec_core::num_complex::Complex64;
use qdec_core::quench::{revival_threshold, ModeGrid, QuenchSchedule};
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Analysis(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Analysis(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) | CliError::Analysis(m) => m,
        }
    }
}

fn core_err(e: qdec_core::Error) -> CliError {
    match e {
        qdec_core::Error::InvalidParameter(m) => CliError::Config(m),
        qdec_core::Error::Analysis(m) => CliError::Analysis(m),
        other => CliError::Numeric(other.to_string()),
    }
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

/// Closed-form D(t) for the trace overlay, routed by phase: adiabatic
/// paramagnetic fidelity above g = 1, first-crossing form between the
/// critical points, the frozen two-crossing form past the second.
fn overlay_big_d(
    n: usize,
    delta: f64,
    tau_q: f64,
    t: f64,
    g: f64,
    w: &ValidityWindow,
) -> (f64, bool) {
    if delta == 0.0 {
        // uncoupled: D = 1 identically, and the piecewise forms would
        // divide 0/0 at |g| = 1
        return (1.0, true);
    }
    if g >= 1.0 {
        let valid = w
            .clears_both(g, delta, tau_q)
            .map(|ok| ok && g > 1.0)
            .unwrap_or(false);
        match fidelity_paramagnetic(n, delta, g) {
            Ok(v) => (v, valid),
            Err(_) => (0.0, false),
        }
    } else if g > -1.0 {
        match decoherence_between(n, delta, tau_q, t, w) {
            Ok(f) => (f.value, f.valid),
            Err(_) => (0.0, false),
        }
    } else {
        match decoherence_after(n, delta, tau_q, t, w) {
            Ok(f) => (f.value, f.valid),
            Err(_) => (0.0, false),
        }
    }
}

/// The pure fidelity envelope, with the excitation factors stripped off.
fn envelope_big_d(n: usize, delta: f64, g: f64) -> f64 {
    if delta == 0.0 {
        return 1.0;
    }
    let g2 = g * g;
    let x = n as f64 * delta * delta / 4.0;
    if g2 > 1.0 {
        (-x / (g2 * (g2 - 1.0))).exp()
    } else if g2 < 1.0 {
        (-x / (1.0 - g2)).exp()
    } else {
        0.0
    }
}

/// Closed-form F_k for a snapshot entry. The branch follows the phase g sits
/// in and the mode's regime tag; anything the formulas cannot reach prints
/// as NaN so the column stays rectangular.
fn overlay_mode(
    k: f64,
    t: f64,
    g: f64,
    tau_q: f64,
    delta: f64,
    tag: RegimeTag,
    w: &ValidityWindow,
) -> f64 {
    let r = if g >= 1.0 {
        fk_adiabatic(k, g, delta, tau_q, w)
    } else {
        match tag {
            RegimeTag::LowKExcited => fk_excited_first(k, t, tau_q, delta, w),
            RegimeTag::Adiabatic => fk_adiabatic(k, g, delta, tau_q, w),
            RegimeTag::HighKExcited => {
                if g <= -1.0 {
                    fk_excited_second(k, t, tau_q, delta, w)
                } else {
                    fk_adiabatic(k, g, delta, tau_q, w)
                }
            }
        }
    };
    r.map(|f| f.value).unwrap_or(f64::NAN)
}

const TRACE_HEADER: &str = "t,g,D_numeric,D_analytic,D_fidelity,ln_D_numeric,singular_flag,valid_flag";
const MODES_HEADER: &str = "k,F_k_numeric,F_k_analytic,regime";

fn trace_csv(cfg: &RunConfig, trace: &DecoherenceTrace) -> String {
    let w = ValidityWindow::default();
    let mut csv = Csv::new(TRACE_HEADER);
    for s in &trace.samples {
        let (da, valid) = overlay_big_d(cfg.n, cfg.delta, cfg.tau_q, s.t, s.g, &w);
        csv.row(&[
            fmt_f64(s.t),
            fmt_f64(s.g),
            fmt_f64(s.big_d),
            fmt_f64(da),
            fmt_f64(envelope_big_d(cfg.n, cfg.delta, s.g)),
            fmt_f64(s.ln_big_d),
            flag(s.singular),
            flag(valid),
        ]);
    }
    csv.finish()
}

fn modes_csv(cfg: &RunConfig, snap: &ModeSnapshot) -> (String, String) {
    let w = ValidityWindow::default();
    let name = format!("modes_g{:.4}.csv", snap.g);
    let mut csv = Csv::new(MODES_HEADER);
    for e in &snap.entries {
        let fa = overlay_mode(e.k, snap.t, snap.g, cfg.tau_q, cfg.delta, e.regime, &w);
        csv.row(&[
            fmt_f64(e.k),
            fmt_f64(e.fidelity),
            fmt_f64(fa),
            e.regime.to_string(),
        ]);
    }
    (name, csv.finish())
}

fn run_warnings(cfg: &RunConfig) -> Vec<String> {
    let mut w = Vec::new();
    if strong_coupling_warning(cfg.delta, cfg.tau_q) {
        w.push(format!(
            "delta={:e} is above a quarter of the revival threshold {:e}; \
             the weak-coupling forms degrade",
            cfg.delta,
            revival_threshold(cfg.tau_q)
        ));
    }
    w
}

pub fn simulate(cfg: &RunConfig, out: Option<PathBuf>) -> Result<u8, CliError> {
    let resolved = cfg.resolve().map_err(CliError::Config)?;
    let grid = build_samples(&resolved.schedule, cfg.dg, &cfg.snapshots)
        .map_err(CliError::Config)?;
    let mut em = Emitter::new(&cfg.out_dir(out)).map_err(CliError::Config)?;
    let started = unix_now();
    let warnings = run_warnings(cfg);

    match run_quench(
        &resolved.schedule,
        cfg.delta,
        &resolved.grid,
        cfg.subsample,
        &resolved.integrator,
        &grid.times,
        &grid.snapshot_indices,
    ) {
        Ok((trace, snaps)) => {
            em.write("trace.csv", &trace_csv(cfg, &trace))
                .map_err(CliError::Config)?;
            for snap in &snaps {
                let (name, body) = modes_csv(cfg, snap);
                em.write(&name, &body).map_err(CliError::Config)?;
            }
            em.write_manifest(
                "simulate",
                cfg,
                started,
                Some(trace.meta.max_norm_drift),
                &warnings,
                &[],
            )
            .map_err(CliError::Config)?;
            println!("wrote {}", em.dir().join("trace.csv").display());
            Ok(0)
        }
        Err(qdec_core::Error::ModeFailures(list)) => {
            let failures: Vec<FailureEntry> = list
                .into_iter()
                .map(|(k, message)| FailureEntry { k, message })
                .collect();
            em.write_manifest("simulate", cfg, started, None, &warnings, &failures)
                .map_err(CliError::Config)?;
            Err(CliError::Numeric(format!(
                "{} mode integrations failed; see {}",
                failures.len(),
                em.dir().join("manifest.json").display()
            )))
        }
        Err(e) => Err(core_err(e)),
    }
}

pub fn modes(cfg: &RunConfig, out: Option<PathBuf>) -> Result<u8, CliError> {
    if cfg.snapshots.is_empty() {
        return Err(CliError::Config(
            "modes needs at least one snapshot field".into(),
        ));
    }
    let resolved = cfg.resolve().map_err(CliError::Config)?;
    let sched = &resolved.schedule;
    let mut times: Vec<f64> = cfg.snapshots.iter().map(|&g| sched.time_at(g)).collect();
    times.sort_by(f64::total_cmp);
    let tol = 1e-9 * (sched.t_end() - sched.t_start()).max(1.0);
    times.dedup_by(|a, b| (*a - *b).abs() <= tol);
    let indices: Vec<usize> = (0..times.len()).collect();

    let mut em = Emitter::new(&cfg.out_dir(out)).map_err(CliError::Config)?;
    let started = unix_now();
    let warnings = run_warnings(cfg);

    match run_quench(
        sched,
        cfg.delta,
        &resolved.grid,
        cfg.subsample,
        &resolved.integrator,
        &times,
        &indices,
    ) {
        Ok((trace, snaps)) => {
            for snap in &snaps {
                let (name, body) = modes_csv(cfg, snap);
                em.write(&name, &body).map_err(CliError::Config)?;
            }
            em.write_manifest(
                "modes",
                cfg,
                started,
                Some(trace.meta.max_norm_drift),
                &warnings,
                &[],
            )
            .map_err(CliError::Config)?;
            println!(
                "wrote {} snapshot file(s) under {}",
                snaps.len(),
                em.dir().display()
            );
            Ok(0)
        }
        Err(qdec_core::Error::ModeFailures(list)) => {
            let failures: Vec<FailureEntry> = list
                .into_iter()
                .map(|(k, message)| FailureEntry { k, message })
                .collect();
            em.write_manifest("modes", cfg, started, None, &warnings, &failures)
                .map_err(CliError::Config)?;
            Err(CliError::Numeric(format!(
                "{} mode integrations failed; see {}",
                failures.len(),
                em.dir().join("manifest.json").display()
            )))
        }
        Err(e) => Err(core_err(e)),
    }
}

pub struct SweepArgs {
    pub tau_q_list: Vec<f64>,
    pub phi_star: f64,
    pub coupling_scale: f64,
}

#[derive(Serialize)]
struct SweepEcho<'a> {
    #[serde(flatten)]
    base: &'a RunConfig,
    tau_q_list: &'a [f64],
    phi_star: f64,
    coupling_scale: f64,
    g_star: f64,
}

#[derive(Serialize)]
struct FitReport<'a> {
    exponent: f64,
    exponent_err: f64,
    amplitude: f64,
    r_squared: f64,
    poor_fit: bool,
    tau_q_list: &'a [f64],
    residuals: &'a [f64],
}

/// Scaling sweep: every run is cut off at the field g* where the
/// accumulated phase reaches phi* = 4 t delta_i, with delta_i = c / tau_q
/// so that g* = 1 - phi*/(4 c) is the same point for every quench time.
pub fn sweep(cfg: &RunConfig, args: &SweepArgs, out: Option<PathBuf>) -> Result<u8, CliError> {
    let mut taus = args.tau_q_list.clone();
    if taus.len() < 4 {
        return Err(CliError::Config(format!(
            "sweep needs at least 4 quench times, got {}",
            taus.len()
        )));
    }
    if taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(CliError::Config("quench times must be positive".into()));
    }
    taus.sort_by(f64::total_cmp);
    if taus.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Config("duplicate quench time in sweep".into()));
    }
    if taus[taus.len() - 1] / taus[0] < 10.0 {
        return Err(CliError::Config(
            "quench times must span at least a decade".into(),
        ));
    }
    let c = args.coupling_scale;
    if !(c > 0.0 && c.is_finite()) {
        return Err(CliError::Config(format!(
            "coupling_scale must be positive, got {c}"
        )));
    }
    if !(args.phi_star > 0.0 && args.phi_star.is_finite()) {
        return Err(CliError::Config(format!(
            "phi_star must be positive, got {}",
            args.phi_star
        )));
    }
    let g_star = 1.0 - args.phi_star / (4.0 * c);
    if g_star <= -1.0 {
        return Err(CliError::Config(format!(
            "phi_star/coupling_scale probes g*={g_star}, past the second critical point"
        )));
    }
    if cfg.g_start <= g_star {
        return Err(CliError::Config(format!(
            "g_start={} must lie above the probe field g*={g_star}",
            cfg.g_start
        )));
    }

    let mut em = Emitter::new(&cfg.out_dir(out)).map_err(CliError::Config)?;
    let started = unix_now();

    let rows: Vec<(f64, f64, f64)> = taus
        .par_iter()
        .map(|&tau| -> Result<(f64, f64, f64), CliError> {
            let delta_i = c / tau;
            let sched =
                QuenchSchedule::partial(tau, cfg.g_start, g_star).map_err(core_err)?;
            let grid = ModeGrid::new(cfg.n).map_err(core_err)?;
            let method = cfg.integrator.parse().map_err(core_err)?;
            let defaults = IntegratorConfig::default_for(&sched, delta_i);
            let icfg = IntegratorConfig::new(
                method,
                cfg.dt_max.unwrap_or(defaults.dt_max),
                cfg.rel_tol,
                cfg.abs_tol,
            )
            .map_err(core_err)?;
            let t_samples = [sched.t_start(), sched.t_end()];
            let (_, snaps) =
                run_quench(&sched, delta_i, &grid, 1, &icfg, &t_samples, &[1])
                    .map_err(core_err)?;
            let d_hat = excited_sector_product(&snaps[0], tau).map_err(core_err)?;
            Ok((tau, delta_i, d_hat))
        })
        .collect::<Result<_, _>>()?;

    let mut csv = Csv::new("tau_q,delta,phi_star,d_hat");
    for &(tau, delta_i, d_hat) in &rows {
        csv.row(&[
            fmt_f64(tau),
            fmt_f64(delta_i),
            fmt_f64(args.phi_star),
            fmt_f64(d_hat),
        ]);
    }
    em.write("scaling.csv", &csv.finish())
        .map_err(CliError::Config)?;

    let points: Vec<ScalingPoint> = rows
        .iter()
        .map(|&(tau, _, d_hat)| ScalingPoint { tau_q: tau, d_hat })
        .collect();
    let fit = fit_scaling(&points).map_err(core_err)?;
    let report = FitReport {
        exponent: fit.exponent,
        exponent_err: fit.exponent_err,
        amplitude: fit.amplitude,
        r_squared: fit.r_squared,
        poor_fit: fit.poor_fit,
        tau_q_list: &fit.tau_q_list,
        residuals: &fit.residuals,
    };
    let mut body =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?;
    body.push('\n');
    em.write("fit.json", &body).map_err(CliError::Config)?;

    let mut warnings = Vec::new();
    if fit.poor_fit {
        warnings.push(format!(
            "scaling fit r_squared={:.6} is below 0.99",
            fit.r_squared
        ));
    }
    let echo = SweepEcho {
        base: cfg,
        tau_q_list: &taus,
        phi_star: args.phi_star,
        coupling_scale: c,
        g_star,
    };
    em.write_manifest("sweep", &echo, started, None, &warnings, &[])
        .map_err(CliError::Config)?;

    println!(
        "exponent {:.6} +- {:.6} over {} quench times",
        fit.exponent,
        fit.exponent_err,
        taus.len()
    );
    if fit.poor_fit {
        eprintln!("qdec: warning: {}", warnings[0]);
        return Ok(3);
    }
    Ok(0)
}

pub struct AnalyzeArgs {
    pub trace: PathBuf,
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub tau_q: Option<f64>,
    pub g_start: Option<f64>,
    pub g_end: Option<f64>,
    pub window: Option<(f64, f64)>,
}

struct TraceRow {
    t: f64,
    g: f64,
    big_d: f64,
    ln_big_d: f64,
    singular: bool,
}

fn parse_trace(path: &Path) -> Result<Vec<TraceRow>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("{}: empty file", path.display())))?
        .1;
    if header.trim_end() != TRACE_HEADER {
        return Err(CliError::Config(format!(
            "{}: unexpected header '{header}'",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(CliError::Config(format!(
                "{}:{}: expected 8 fields, got {}",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        let num = |j: usize, name: &str| -> Result<f64, CliError> {
            fields[j].trim().parse::<f64>().map_err(|_| {
                CliError::Config(format!(
                    "{}:{}: bad {name} '{}'",
                    path.display(),
                    i + 1,
                    fields[j]
                ))
            })
        };
        rows.push(TraceRow {
            t: num(0, "t")?,
            g: num(1, "g")?,
            big_d: num(2, "D_numeric")?,
            ln_big_d: num(5, "ln_D_numeric")?,
            singular: fields[6].trim() == "1",
        });
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(rows)
}

/// Parameters the trace alone cannot carry come from flags first, the
/// sibling manifest second, library defaults last.
fn sidecar_config(trace: &Path) -> serde_json::Value {
    let manifest = match trace.parent() {
        Some(dir) => dir.join("manifest.json"),
        None => return serde_json::Value::Null,
    };
    std::fs::read_to_string(manifest)
        .ok()
        .and_then(|text| serde_json::from_str::<serde_json::Value>(&text).ok())
        .and_then(|v| v.get("config").cloned())
        .unwrap_or(serde_json::Value::Null)
}

#[derive(Serialize)]
struct AnalyzeReport {
    regime: String,
    revival_threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    predicted_period_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_period_g: Option<f64>,
    peak_positions_g: Vec<f64>,
    peak_values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    envelope_gap: Option<f64>,
    warnings: Vec<String>,
}

pub fn analyze(args: &AnalyzeArgs, out: Option<PathBuf>) -> Result<u8, CliError> {
    let rows = parse_trace(&args.trace)?;
    let side = sidecar_config(&args.trace);
    let getf = |flag: Option<f64>, key: &str, default: f64| {
        flag.or_else(|| side.get(key).and_then(serde_json::Value::as_f64))
            .unwrap_or(default)
    };
    let defaults = RunConfig::default();
    let n = args
        .n
        .or_else(|| {
            side.get("n")
                .and_then(serde_json::Value::as_u64)
                .map(|v| v as usize)
        })
        .unwrap_or(defaults.n);
    let delta = getf(args.delta, "delta", defaults.delta);
    let tau_q = getf(args.tau_q, "tau_q", defaults.tau_q);
    let g_start = getf(args.g_start, "g_start", defaults.g_start);
    let g_end = getf(args.g_end, "g_end", defaults.g_end);
    let window = args.window.unwrap_or((-0.9, 0.9));

    let sched = QuenchSchedule::partial(tau_q, g_start, g_end)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let meta = TraceMeta {
        n,
        delta,
        tau_q,
        g_start,
        g_end,
        subsample: 1,
        integrator: IntegratorConfig::default_for(&sched, delta),
        max_norm_drift: 0.0,
    };
    let samples: Vec<TraceSample> = rows
        .iter()
        .map(|r| TraceSample {
            t: r.t,
            g: r.g,
            d: Complex64::new(r.big_d.max(0.0).sqrt(), 0.0),
            big_d: r.big_d,
            ln_big_d: r.ln_big_d,
            singular: r.singular,
        })
        .collect();
    let trace = DecoherenceTrace { meta, samples };

    let mut warnings = Vec::new();
    let (regime_name, predicted) = if delta == 0.0 {
        (Regime::Monotonic.to_string(), None)
    } else {
        let regime = classify_regime(delta.abs(), tau_q).map_err(core_err)?;
        (
            regime.to_string(),
            Some(std::f64::consts::PI / (4.0 * tau_q * delta.abs())),
        )
    };

    let attempt = if delta == 0.0 {
        Err(qdec_core::Error::Analysis(
            "uncoupled trace has no revivals".into(),
        ))
    } else {
        find_revivals(&trace, window)
    };

    let mut code = 0u8;
    let report = match attempt {
        Ok(r) => AnalyzeReport {
            regime: regime_name.clone(),
            revival_threshold: revival_threshold(tau_q),
            predicted_period_g: predicted,
            mean_period_g: Some(r.mean_period_g),
            peak_positions_g: r.peak_positions_g,
            peak_values: r.peak_values,
            envelope_gap: Some(r.envelope_gap),
            warnings: {
                if regime_name != "revivals" {
                    warnings.push(format!(
                        "peaks detected although the coupling classifies as {regime_name}"
                    ));
                }
                warnings.clone()
            },
        },
        Err(e) => {
            if regime_name == "revivals" {
                warnings.push(format!("classified as revivals but detection failed: {e}"));
                code = 3;
            } else {
                warnings.push(format!("no revival structure, as expected: {e}"));
            }
            AnalyzeReport {
                regime: regime_name,
                revival_threshold: revival_threshold(tau_q),
                predicted_period_g: predicted,
                mean_period_g: None,
                peak_positions_g: Vec::new(),
                peak_values: Vec::new(),
                envelope_gap: None,
                warnings: warnings.clone(),
            }
        }
    };

    let dir = out
        .or_else(|| args.trace.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let mut body =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?;
    body.push('\n');
    let path = dir.join("report.json");
    std::fs::write(&path, body)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    for w in &warnings {
        eprintln!("qdec: warning: {w}");
    }
    Ok(code)
}

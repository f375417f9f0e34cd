//! Physics extraction from completed runs: oscillation-regime
//! classification, revival detection, localization of the most-suppressed
//! momentum, and the universal scaling-exponent fit across ramp-rate sweeps.

use crate::analytic::fidelity_paramagnetic;
use crate::decoherence::{DecoherenceTrace, ModeSnapshot};
use crate::error::{Error, Result};
use crate::numeric::{parabola_vertex, KahanSum};
use crate::quench::{kz_scales, revival_threshold, UniversalityClass};
use std::f64::consts::PI;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Revivals,
    /// Within 1% of the threshold coupling; either behavior may dominate.
    Marginal,
    Monotonic,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Revivals => "revivals",
            Regime::Marginal => "marginal",
            Regime::Monotonic => "monotonic",
        })
    }
}

/// Oscillatory or monotonic inter-critical decay: revivals iff
/// delta > pi / (16 tau_q), with a 1% marginal band at the boundary.
pub fn classify_regime(delta: f64, tau_q: f64) -> Result<Regime> {
    if !(delta > 0.0 && delta.is_finite()) || !(tau_q > 0.0 && tau_q.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "classification needs positive delta and tau_q, got ({delta}, {tau_q})"
        )));
    }
    let thr = revival_threshold(tau_q);
    Ok(if (delta - thr).abs() <= 0.01 * thr {
        Regime::Marginal
    } else if delta > thr {
        Regime::Revivals
    } else {
        Regime::Monotonic
    })
}

#[derive(Debug, Clone)]
pub struct RevivalReport {
    /// Interpolated peak locations, ascending in g.
    pub peak_positions_g: Vec<f64>,
    /// Interpolated D at each peak, same order.
    pub peak_values: Vec<f64>,
    pub mean_period_g: f64,
    pub predicted_period_g: f64,
    /// Worst distance between a peak and the adiabatic fidelity envelope.
    pub envelope_gap: f64,
}

fn envelope(n: usize, delta: f64, g: f64) -> f64 {
    if g.abs() > 1.0 {
        fidelity_paramagnetic(n, delta, g).unwrap_or(f64::NAN)
    } else {
        (-(n as f64) * delta * delta / (4.0 * (1.0 - g * g))).exp()
    }
}

/// Find coherence revivals inside a g-window by three-point quadratic
/// interpolation of the trace (no smoothing: the data are deterministic).
///
/// Errors when the sampling is coarser than 20 points per predicted period
/// or when fewer than two peaks exist (no period measurable).
pub fn find_revivals(trace: &DecoherenceTrace, window: (f64, f64)) -> Result<RevivalReport> {
    let (g_lo, g_hi) = window;
    if !(g_lo < g_hi) || !g_lo.is_finite() || !g_hi.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "revival window must be an ordered g-range, got ({g_lo}, {g_hi})"
        )));
    }
    let delta = trace.meta.delta.abs();
    let predicted = PI / (4.0 * trace.meta.tau_q * delta);
    let in_window: Vec<(f64, f64)> = trace
        .samples
        .iter()
        .filter(|s| s.g >= g_lo && s.g <= g_hi)
        .map(|s| (s.g, s.big_d))
        .collect();
    if in_window.len() < 3 {
        return Err(Error::Analysis(format!(
            "only {} trace samples inside the window",
            in_window.len()
        )));
    }
    let max_step = in_window
        .windows(2)
        .map(|w| (w[0].0 - w[1].0).abs())
        .fold(0.0f64, f64::max);
    if predicted.is_finite() && max_step > predicted / 20.0 {
        return Err(Error::Analysis(format!(
            "sampling step {max_step:.3e} in g resolves fewer than 20 points per \
             predicted period {predicted:.3e}"
        )));
    }

    // samples run along the ramp, so g descends; collect then flip
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    for i in 1..in_window.len() - 1 {
        let (gm, dm) = in_window[i - 1];
        let (g0, d0) = in_window[i];
        let (gp, dp) = in_window[i + 1];
        if d0 > dm && d0 >= dp {
            let (gv, dv, curv) = parabola_vertex((gm, dm), (g0, d0), (gp, dp));
            if curv < 0.0 {
                peaks.push((gv, dv));
            } else {
                peaks.push((g0, d0));
            }
        }
    }
    if peaks.len() < 2 {
        return Err(Error::Analysis(format!(
            "found {} peak(s); at least 2 are needed for a period",
            peaks.len()
        )));
    }
    peaks.reverse();
    let mean_period_g =
        (peaks[peaks.len() - 1].0 - peaks[0].0) / (peaks.len() - 1) as f64;
    let envelope_gap = peaks
        .iter()
        .map(|&(g, d)| (d - envelope(trace.meta.n, trace.meta.delta, g)).abs())
        .fold(0.0f64, f64::max);
    Ok(RevivalReport {
        peak_positions_g: peaks.iter().map(|p| p.0).collect(),
        peak_values: peaks.iter().map(|p| p.1).collect(),
        mean_period_g,
        predicted_period_g: predicted,
        envelope_gap,
    })
}

fn argmin_refined(sector: &[(f64, f64)]) -> Result<f64> {
    let (mut idx, mut best) = (0usize, f64::INFINITY);
    for (i, &(_, f)) in sector.iter().enumerate() {
        if f < best {
            best = f;
            idx = i;
        }
    }
    if best > 0.5 {
        return Err(Error::Analysis(format!(
            "insufficient contrast: sector minimum F = {best:.4} exceeds 0.5"
        )));
    }
    if idx == 0 || idx == sector.len() - 1 {
        return Ok(sector[idx].0);
    }
    let (kv, _, curv) = parabola_vertex(sector[idx - 1], sector[idx], sector[idx + 1]);
    Ok(if curv > 0.0 { kv } else { sector[idx].0 })
}

/// Momentum of the deepest fidelity suppression in the low-k sector
/// (k < pi/4), parabola-refined between grid points. Requires phase
/// contrast: the snapshot must sit where sin^2(4 t delta) > 1/2, else the
/// dip is too shallow to localize.
pub fn locate_km(snapshot: &ModeSnapshot, delta: f64) -> Result<f64> {
    let contrast = (4.0 * snapshot.t * delta).sin().powi(2);
    if !(contrast > 0.5) {
        return Err(Error::Analysis(format!(
            "insufficient contrast: sin^2(4 t delta) = {contrast:.4} at t = {}",
            snapshot.t
        )));
    }
    let sector: Vec<(f64, f64)> = snapshot
        .entries
        .iter()
        .filter(|e| e.k < PI / 4.0)
        .map(|e| (e.k, e.fidelity))
        .collect();
    if sector.is_empty() {
        return Err(Error::Analysis("no modes below pi/4 in snapshot".into()));
    }
    argmin_refined(&sector)
}

/// Mirror of locate_km past the second crossing: deepest suppression in the
/// high-k sector (k > 3 pi / 4), driven by the phase eta.
pub fn locate_km_mirror(snapshot: &ModeSnapshot, tau_q: f64, delta: f64) -> Result<f64> {
    let eta = 4.0 * tau_q * delta * (1.0 + snapshot.g);
    let contrast = eta.sin().powi(2);
    if !(contrast > 0.5) {
        return Err(Error::Analysis(format!(
            "insufficient contrast: sin^2(eta) = {contrast:.4} at g = {}",
            snapshot.g
        )));
    }
    let sector: Vec<(f64, f64)> = snapshot
        .entries
        .iter()
        .filter(|e| e.k > 3.0 * PI / 4.0)
        .map(|e| (e.k, e.fidelity))
        .collect();
    if sector.is_empty() {
        return Err(Error::Analysis("no modes above 3 pi / 4 in snapshot".into()));
    }
    argmin_refined(&sector)
}

/// D with the adiabatic sector divided out: the product of F_k restricted to
/// the two excited sectors k < 4 k_hat and k > pi - 4 k_hat. Computed from
/// the numeric mode fidelities, not the closed forms, so fit quality does
/// not inherit their truncation error.
pub fn excited_sector_product(snapshot: &ModeSnapshot, tau_q: f64) -> Result<f64> {
    let k_hat = kz_scales(&UniversalityClass::ISING, tau_q)?.k_hat;
    let mut ln_f = KahanSum::new();
    for e in &snapshot.entries {
        if e.k < 4.0 * k_hat || e.k > PI - 4.0 * k_hat {
            ln_f.add(e.fidelity.clamp(1e-300, 1.0).ln());
        }
    }
    Ok(ln_f.value().exp())
}

/// One ramp rate's matched-phase measurement.
#[derive(Debug, Clone, Copy)]
pub struct ScalingPoint {
    pub tau_q: f64,
    /// Excited-sector decoherence factor at the matched phase.
    pub d_hat: f64,
}

#[derive(Debug, Clone)]
pub struct ScalingFitResult {
    /// Slope of ln(-ln d_hat) against ln tau_q; the universal prediction for
    /// the Ising sweep is -1/2.
    pub exponent: f64,
    pub exponent_err: f64,
    /// exp(intercept): the non-universal prefactor, -ln d_hat = amplitude *
    /// tau_q^exponent.
    pub amplitude: f64,
    pub tau_q_list: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    /// r_squared < 0.99: the power law does not describe the sweep well.
    pub poor_fit: bool,
}

/// Least-squares fit of ln(-ln d_hat) = intercept + exponent * ln tau_q.
/// Needs at least 4 ramp rates spanning a decade. A common rescaling of all
/// d_hat (e.g. a leftover adiabatic factor) moves only the intercept.
pub fn fit_scaling(points: &[ScalingPoint]) -> Result<ScalingFitResult> {
    if points.len() < 4 {
        return Err(Error::Analysis(format!(
            "scaling fit needs at least 4 ramp rates, got {}",
            points.len()
        )));
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for p in points {
        if !(p.tau_q > 0.0 && p.tau_q.is_finite()) {
            return Err(Error::Analysis(format!("bad tau_q {}", p.tau_q)));
        }
        if !(p.d_hat > 0.0 && p.d_hat < 1.0) {
            return Err(Error::Analysis(format!(
                "d_hat must lie in (0, 1) for a log-log fit, got {} at tau_q = {}",
                p.d_hat, p.tau_q
            )));
        }
        lo = lo.min(p.tau_q);
        hi = hi.max(p.tau_q);
    }
    if hi / lo < 10.0 {
        return Err(Error::Analysis(format!(
            "ramp rates span a factor {:.2}; a decade is required",
            hi / lo
        )));
    }

    let xs: Vec<f64> = points.iter().map(|p| p.tau_q.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| (-p.d_hat.ln()).ln()).collect();
    let nn = points.len() as f64;
    let x_bar = xs.iter().sum::<f64>() / nn;
    let y_bar = ys.iter().sum::<f64>() / nn;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - x_bar) * (x - x_bar);
        sxy += (x - x_bar) * (y - y_bar);
        syy += (y - y_bar) * (y - y_bar);
    }
    if sxx == 0.0 {
        return Err(Error::Analysis("all ramp rates identical".into()));
    }
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let residuals: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let exponent_err = (sse / (nn - 2.0) / sxx).sqrt();
    Ok(ScalingFitResult {
        exponent: slope,
        exponent_err,
        amplitude: intercept.exp(),
        tau_q_list: points.iter().map(|p| p.tau_q).collect(),
        residuals,
        r_squared,
        poor_fit: r_squared < 0.99,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoherence::{RegimeTag, SnapshotEntry, TraceMeta, TraceSample};
    use crate::integrator::IntegratorConfig;
    use crate::quench::{k_m, QuenchSchedule};
    use num_complex::Complex64;

    const TAU: f64 = 250.0;
    const DELTA: f64 = 0.01;

    fn meta(n: usize, delta: f64) -> TraceMeta {
        let sched = QuenchSchedule::new(TAU, 5.0, -3.0).unwrap();
        TraceMeta {
            n,
            delta,
            tau_q: TAU,
            g_start: 5.0,
            g_end: -3.0,
            subsample: 1,
            integrator: IntegratorConfig::default_for(&sched, delta),
            max_norm_drift: 0.0,
        }
    }

    fn synthetic_trace(n: usize, delta: f64, dg: f64) -> DecoherenceTrace {
        // envelope * cos^2(4 t delta) between the critical points
        let mut samples = Vec::new();
        let mut g = 0.95;
        while g > -0.95 {
            let t = TAU * (1.0 - g);
            let d = envelope(n, delta, g) * (4.0 * t * delta).cos().powi(2);
            samples.push(TraceSample {
                t,
                g,
                d: Complex64::new(d.sqrt(), 0.0),
                big_d: d,
                ln_big_d: d.ln(),
                singular: false,
            });
            g -= dg;
        }
        DecoherenceTrace {
            meta: meta(n, delta),
            samples,
        }
    }

    #[test]
    fn regimes_split_at_the_threshold() {
        assert_eq!(classify_regime(0.01, TAU).unwrap(), Regime::Revivals);
        assert_eq!(classify_regime(4e-4, TAU).unwrap(), Regime::Monotonic);
        let thr = revival_threshold(TAU);
        assert_eq!(classify_regime(thr, TAU).unwrap(), Regime::Marginal);
        assert_eq!(classify_regime(thr * 1.02, TAU).unwrap(), Regime::Revivals);
        assert_eq!(classify_regime(thr * 0.98, TAU).unwrap(), Regime::Monotonic);
        assert!(classify_regime(0.0, TAU).is_err());
        assert!(classify_regime(0.01, 0.0).is_err());
    }

    #[test]
    fn revivals_of_a_synthetic_trace() {
        let trace = synthetic_trace(1000, DELTA, 2.5e-3);
        let rep = find_revivals(&trace, (-0.9, 0.9)).unwrap();
        let predicted = PI / (4.0 * TAU * DELTA);
        assert!((rep.predicted_period_g - predicted).abs() < 1e-15);
        assert!(rep.peak_positions_g.len() >= 5);
        assert!(
            (rep.mean_period_g / predicted - 1.0).abs() < 5e-3,
            "period {} vs {}",
            rep.mean_period_g,
            predicted
        );
        assert!(rep.peak_positions_g.windows(2).all(|w| w[0] < w[1]));
        // peaks touch the envelope by construction, up to the small shift the
        // envelope slope induces: |gap| <= (E'/E)^2 E / (4 (4 tau delta)^2),
        // about 2e-3 at the outermost peak
        assert!(rep.envelope_gap < 5e-3, "gap = {}", rep.envelope_gap);
    }

    #[test]
    fn sparse_or_flat_traces_are_rejected() {
        let sparse = synthetic_trace(1000, DELTA, 0.05);
        assert!(find_revivals(&sparse, (-0.9, 0.9)).is_err());
        // uncoupled trace: flat D = 1, no peaks
        let mut flat = synthetic_trace(1000, DELTA, 2.5e-3);
        for s in &mut flat.samples {
            s.big_d = 1.0;
        }
        assert!(find_revivals(&flat, (-0.9, 0.9)).is_err());
        assert!(find_revivals(&flat, (0.9, -0.9)).is_err());
    }

    fn snapshot_from_first_form(t: f64) -> ModeSnapshot {
        let w = crate::analytic::ValidityWindow::default();
        let grid = crate::quench::ModeGrid::new(1000).unwrap();
        let entries: Vec<SnapshotEntry> = grid
            .momenta()
            .iter()
            .map(|&k| {
                let f = crate::analytic::fk_excited_first(k, t, TAU, DELTA, &w)
                    .unwrap()
                    .value;
                SnapshotEntry {
                    k,
                    overlap: Complex64::new(f.sqrt(), 0.0),
                    fidelity: f,
                    regime: RegimeTag::Adiabatic,
                }
            })
            .collect();
        ModeSnapshot {
            t,
            g: 1.0 - t / TAU,
            entries,
        }
    }

    #[test]
    fn km_located_within_a_grid_spacing() {
        let t = 3.0 * PI / (8.0 * DELTA); // sin^2(4 t delta) = 1
        let snap = snapshot_from_first_form(t);
        let found = locate_km(&snap, DELTA).unwrap();
        let spacing = 2.0 * PI / 1000.0;
        assert!(
            (found - k_m(TAU)).abs() < spacing,
            "found {found}, want {} within {spacing}",
            k_m(TAU)
        );
        // low contrast rejected: sin^2 = 0.206 at phi = 0.15 pi
        let dull = snapshot_from_first_form(0.15 * PI / (4.0 * DELTA));
        assert!(locate_km(&dull, DELTA).is_err());
    }

    #[test]
    fn mirror_minimum_past_second_crossing() {
        // eta = -pi/2 at g = -1 - pi / (8 tau delta)
        let g = -1.0 - PI / (8.0 * TAU * DELTA);
        let t = TAU * (1.0 - g);
        let w = crate::analytic::ValidityWindow::default();
        let grid = crate::quench::ModeGrid::new(1000).unwrap();
        let entries: Vec<SnapshotEntry> = grid
            .momenta()
            .iter()
            .map(|&k| {
                let f = crate::analytic::fk_excited_second(k, t, TAU, DELTA, &w)
                    .unwrap()
                    .value;
                SnapshotEntry {
                    k,
                    overlap: Complex64::new(f.sqrt(), 0.0),
                    fidelity: f,
                    regime: RegimeTag::Adiabatic,
                }
            })
            .collect();
        let snap = ModeSnapshot { t, g, entries };
        let found = locate_km_mirror(&snap, TAU, DELTA).unwrap();
        let spacing = 2.0 * PI / 1000.0;
        assert!((found - (PI - k_m(TAU))).abs() < spacing);
    }

    #[test]
    fn sector_product_multiplies_only_excited_modes() {
        // tau = 100: sectors are k < 0.4 and k > pi - 0.4
        let mk = |k: f64, f: f64| SnapshotEntry {
            k,
            overlap: Complex64::new(f.sqrt(), 0.0),
            fidelity: f,
            regime: RegimeTag::Adiabatic,
        };
        let snap = ModeSnapshot {
            t: 0.0,
            g: 0.0,
            entries: vec![mk(0.1, 0.5), mk(1.5, 0.9), mk(3.0, 0.5)],
        };
        let d_hat = excited_sector_product(&snap, 100.0).unwrap();
        assert!((d_hat - 0.25).abs() < 1e-15);
    }

    #[test]
    fn planted_power_law_recovered_exactly() {
        let taus = [64.0, 128.0, 256.0, 512.0, 1024.0];
        let c = 3.7;
        let points: Vec<ScalingPoint> = taus
            .iter()
            .map(|&tau| ScalingPoint {
                tau_q: tau,
                d_hat: (-c / tau.sqrt()).exp(),
            })
            .collect();
        let fit = fit_scaling(&points).unwrap();
        assert!((fit.exponent + 0.5).abs() < 1e-12, "slope {}", fit.exponent);
        assert!((fit.amplitude - c).abs() < 1e-11);
        assert!(!fit.poor_fit);
        assert!(fit.r_squared > 0.999999);
        assert!(fit.exponent_err < 1e-12);

        // rescaling every d_hat by a common power moves only the amplitude
        let scaled: Vec<ScalingPoint> = points
            .iter()
            .map(|p| ScalingPoint {
                tau_q: p.tau_q,
                d_hat: p.d_hat.powf(2.5),
            })
            .collect();
        let fit2 = fit_scaling(&scaled).unwrap();
        assert!((fit2.exponent - fit.exponent).abs() < 1e-12);
        assert!((fit2.amplitude / fit.amplitude - 2.5).abs() < 1e-9);
    }

    #[test]
    fn fit_input_validation_and_poor_fits() {
        let mk = |tau: f64, d: f64| ScalingPoint { tau_q: tau, d_hat: d };
        // too few points
        assert!(fit_scaling(&[mk(64.0, 0.5), mk(128.0, 0.4), mk(256.0, 0.3)]).is_err());
        // span under a decade
        assert!(fit_scaling(&[
            mk(64.0, 0.5),
            mk(96.0, 0.45),
            mk(128.0, 0.4),
            mk(256.0, 0.3)
        ])
        .is_err());
        // d_hat out of (0, 1)
        assert!(fit_scaling(&[
            mk(64.0, 0.5),
            mk(128.0, 1.0),
            mk(256.0, 0.3),
            mk(1024.0, 0.2)
        ])
        .is_err());
        // wiggly data fit poorly but do not error
        let points = [
            mk(64.0, 0.9),
            mk(128.0, 0.2),
            mk(256.0, 0.8),
            mk(1024.0, 0.3),
        ];
        let fit = fit_scaling(&points).unwrap();
        assert!(fit.poor_fit);
        assert!(fit.r_squared < 0.99);
        assert_eq!(fit.residuals.len(), 4);
    }
}

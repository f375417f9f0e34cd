//! Assembly of branch evolutions into the qubit's decoherence factor:
//! per-mode overlaps F_k, the exact product over the grid, the
//! thermodynamic-limit log-integral, time traces, and the reduced density
//! matrix.

use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::modes::{evolve_branch, ModeAmplitudes};
use crate::numeric::KahanSum;
use crate::quadrature;
use crate::quench::{kz_scales, CouplingSplit, ModeGrid, QuenchSchedule, UniversalityClass};
use num_complex::Complex64;
use rayon::prelude::*;
use std::cell::Cell;
use std::f64::consts::PI;
use std::fmt;

/// Any mode fidelity below this marks the whole sample as singular: the
/// log-integral representation is unreliable where ln F_k blows up.
const SINGULAR_FIDELITY: f64 = 1e-12;
/// Floor applied before taking logs so a (sub)normal-zero fidelity cannot
/// poison the compensated sum with -inf.
const FIDELITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeTag {
    /// k < 4 k_hat: excited by the first critical point.
    LowKExcited,
    Adiabatic,
    /// k > pi - 4 k_hat: excited by the second critical point.
    HighKExcited,
}

impl fmt::Display for RegimeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeTag::LowKExcited => "low-k-excited",
            RegimeTag::Adiabatic => "adiabatic",
            RegimeTag::HighKExcited => "high-k-excited",
        })
    }
}

/// Sector of the mode spectrum relative to the frozen-correlation scale.
/// The tags are presentational; no computation branches on them.
pub fn regime_tag(k: f64, k_hat: f64) -> RegimeTag {
    if k < 4.0 * k_hat {
        RegimeTag::LowKExcited
    } else if k > PI - 4.0 * k_hat {
        RegimeTag::HighKExcited
    } else {
        RegimeTag::Adiabatic
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SnapshotEntry {
    pub k: f64,
    pub overlap: Complex64,
    /// F_k = |overlap|^2, clamped into [0, 1] (rounding can push the raw
    /// square a few ulps above 1).
    pub fidelity: f64,
    pub regime: RegimeTag,
}

/// All mode overlaps at one instant.
#[derive(Debug, Clone)]
pub struct ModeSnapshot {
    pub t: f64,
    pub g: f64,
    pub entries: Vec<SnapshotEntry>,
}

#[derive(Debug, Clone, Copy)]
pub struct TraceSample {
    pub t: f64,
    pub g: f64,
    pub d: Complex64,
    /// D = |d|^2.
    pub big_d: f64,
    pub ln_big_d: f64,
    pub singular: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct TraceMeta {
    pub n: usize,
    pub delta: f64,
    pub tau_q: f64,
    pub g_start: f64,
    pub g_end: f64,
    /// Every m-th grid mode was evolved; 1 means the exact product.
    pub subsample: usize,
    pub integrator: IntegratorConfig,
    pub max_norm_drift: f64,
}

#[derive(Debug, Clone)]
pub struct DecoherenceTrace {
    pub meta: TraceMeta,
    pub samples: Vec<TraceSample>,
}

/// Qubit superposition weights; |c_+|^2 + |c_-|^2 = 1 enforced at build.
#[derive(Debug, Clone, Copy)]
pub struct QubitState {
    c_plus: Complex64,
    c_minus: Complex64,
}

impl QubitState {
    pub fn new(c_plus: Complex64, c_minus: Complex64) -> Result<Self> {
        let norm = c_plus.norm_sqr() + c_minus.norm_sqr();
        if !((norm - 1.0).abs() < 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "qubit amplitudes must be normalized, got |c+|^2 + |c-|^2 = {norm}"
            )));
        }
        Ok(Self { c_plus, c_minus })
    }

    /// The equal-weight superposition, the most decoherence-sensitive state.
    pub fn balanced() -> Self {
        let w = Complex64::new(0.5f64.sqrt(), 0.0);
        Self {
            c_plus: w,
            c_minus: w,
        }
    }

    pub fn c_plus(&self) -> Complex64 {
        self.c_plus
    }

    pub fn c_minus(&self) -> Complex64 {
        self.c_minus
    }
}

/// Overlap o_k of the two conditional branch states of one mode.
/// F_k = |o_k|^2 is the mode's contribution to D.
pub fn mode_overlap(plus: &ModeAmplitudes, minus: &ModeAmplitudes) -> Result<Complex64> {
    if plus.k != minus.k || plus.t != minus.t {
        return Err(Error::InvalidParameter(format!(
            "overlap requires matching mode and time: (k={}, t={}) vs (k={}, t={})",
            plus.k, plus.t, minus.k, minus.t
        )));
    }
    if !(plus.branch_sign > 0.0 && minus.branch_sign < 0.0) {
        return Err(Error::InvalidParameter(
            "overlap takes the + branch first and the - branch second".into(),
        ));
    }
    Ok(plus.u.conj() * minus.u + plus.v.conj() * minus.v)
}

#[derive(Debug, Clone, Copy)]
pub struct ProductResult {
    pub d: Complex64,
    pub big_d: f64,
    pub ln_big_d: f64,
    pub singular: bool,
}

/// Exact decoherence factor over the overlaps of one snapshot.
///
/// Entries must be in strictly ascending k. The reduction order is fixed by
/// that ordering and compensated, so the result is one deterministic double
/// regardless of how the overlaps were produced.
pub fn decoherence_product(snapshot: &ModeSnapshot) -> Result<ProductResult> {
    for pair in snapshot.entries.windows(2) {
        if !(pair[1].k > pair[0].k) {
            return Err(Error::InvalidParameter(format!(
                "snapshot entries must be strictly ascending in k ({} then {})",
                pair[0].k, pair[1].k
            )));
        }
    }
    Ok(product_over(snapshot.entries.iter().map(|e| e.overlap)))
}

fn product_over<I: Iterator<Item = Complex64>>(overlaps: I) -> ProductResult {
    let mut ln_f = KahanSum::new();
    let mut phase = KahanSum::new();
    let mut singular = false;
    let mut exact_zero = false;
    for o in overlaps {
        let f = o.norm_sqr().min(1.0);
        if f == 0.0 {
            exact_zero = true;
        }
        if f < SINGULAR_FIDELITY {
            singular = true;
        }
        ln_f.add(f.max(FIDELITY_FLOOR).ln());
        phase.add(o.arg());
    }
    if exact_zero {
        return ProductResult {
            d: Complex64::new(0.0, 0.0),
            big_d: 0.0,
            ln_big_d: f64::NEG_INFINITY,
            singular: true,
        };
    }
    let s = ln_f.value();
    ProductResult {
        d: Complex64::from_polar((0.5 * s).exp(), phase.value()),
        big_d: s.exp(),
        ln_big_d: s,
        singular,
    }
}

/// Thermodynamic-limit decoherence factor
/// D = exp(-(N / 2 pi) * integral of ln 1/F(k) over (0, pi)),
/// with the integral resolved adaptively to 1e-10 absolute.
///
/// Returns (D, floored): floored reports that F dipped below the log floor
/// somewhere, which makes the integral representation unreliable.
pub fn decoherence_integral<F>(fidelity: F, n: usize) -> Result<(f64, bool)>
where
    F: Fn(f64) -> f64,
{
    if n == 0 {
        return Err(Error::InvalidParameter(
            "environment size must be positive".into(),
        ));
    }
    let floored = Cell::new(false);
    let integrand = |k: f64| {
        let f = fidelity(k);
        let f = if f <= FIDELITY_FLOOR {
            floored.set(true);
            FIDELITY_FLOOR
        } else {
            f.min(1.0)
        };
        -f.ln()
    };
    let integral = quadrature::integrate(&integrand, 0.0, PI, 1e-10)?;
    let d = (-(n as f64) / (2.0 * PI) * integral).exp();
    Ok((d, floored.get()))
}

/// rho_S in the (+, -) pointer basis: populations untouched, coherences
/// scaled by the complex decoherence amplitude d.
pub fn reduced_density_matrix(q: &QubitState, d: Complex64) -> Result<[[Complex64; 2]; 2]> {
    if d.norm() > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "|d| = {} exceeds 1; not a decoherence amplitude",
            d.norm()
        )));
    }
    let off = q.c_plus * q.c_minus.conj() * d;
    Ok([
        [Complex64::new(q.c_plus.norm_sqr(), 0.0), off],
        [off.conj(), Complex64::new(q.c_minus.norm_sqr(), 0.0)],
    ])
}

struct ModeTrack {
    overlaps: Vec<Complex64>,
    snaps: Vec<(ModeAmplitudes, ModeAmplitudes)>,
    max_drift: f64,
}

fn evolve_mode(
    k: f64,
    schedule: &QuenchSchedule,
    plus: &CouplingSplit,
    minus: &CouplingSplit,
    cfg: &IntegratorConfig,
    t_samples: &[f64],
    snapshot_indices: &[usize],
) -> Result<ModeTrack> {
    let up = evolve_branch(k, schedule, plus, cfg, t_samples)?;
    let dn = evolve_branch(k, schedule, minus, cfg, t_samples)?;
    let mut overlaps = Vec::with_capacity(t_samples.len());
    let mut max_drift: f64 = 0.0;
    for (p, m) in up.iter().zip(&dn) {
        overlaps.push(mode_overlap(p, m)?);
        max_drift = max_drift.max(p.norm_drift()).max(m.norm_drift());
    }
    let snaps = snapshot_indices.iter().map(|&j| (up[j], dn[j])).collect();
    Ok(ModeTrack {
        overlaps,
        snaps,
        max_drift,
    })
}

/// Evolve every grid mode through the schedule and assemble the decoherence
/// trace plus full mode snapshots at the requested sample indices.
///
/// Modes run data-parallel; the per-sample reduction is the fixed ascending-k
/// compensated sum, so the output does not depend on thread count. With
/// subsample > 1 only every m-th mode is evolved and D comes from the
/// log-integral over the piecewise-linear interpolant of ln F_k (exact
/// trapezoid on the knots, constant extension to the interval ends).
pub fn run_quench(
    schedule: &QuenchSchedule,
    delta: f64,
    grid: &ModeGrid,
    subsample: usize,
    cfg: &IntegratorConfig,
    t_samples: &[f64],
    snapshot_indices: &[usize],
) -> Result<(DecoherenceTrace, Vec<ModeSnapshot>)> {
    let (plus, minus) = CouplingSplit::pair(delta)?;
    if subsample == 0 {
        return Err(Error::InvalidParameter(
            "subsample factor must be at least 1".into(),
        ));
    }
    let mut prev = None;
    for &j in snapshot_indices {
        if j >= t_samples.len() {
            return Err(Error::InvalidParameter(format!(
                "snapshot index {j} out of range ({} samples)",
                t_samples.len()
            )));
        }
        if prev.is_some_and(|p| j <= p) {
            return Err(Error::InvalidParameter(
                "snapshot indices must be strictly ascending".into(),
            ));
        }
        prev = Some(j);
    }

    let momenta: Vec<f64> = if subsample == 1 {
        grid.momenta().to_vec()
    } else {
        grid.subsampled(subsample)
    };

    let results: Vec<Result<ModeTrack>> = momenta
        .par_iter()
        .map(|&k| evolve_mode(k, schedule, &plus, &minus, cfg, t_samples, snapshot_indices))
        .collect();
    let mut tracks = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (k, r) in momenta.iter().zip(results) {
        match r {
            Ok(t) => tracks.push(t),
            Err(Error::ModeFailure { k, message }) => failures.push((k, message)),
            Err(e) => failures.push((*k, e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(Error::ModeFailures(failures));
    }

    let k_hat = kz_scales(&UniversalityClass::ISING, schedule.tau_q())?.k_hat;
    let max_norm_drift = tracks.iter().fold(0.0f64, |m, t| m.max(t.max_drift));

    let samples: Vec<TraceSample> = (0..t_samples.len())
        .map(|j| {
            let t = t_samples[j];
            let pr = if subsample == 1 {
                product_over(tracks.iter().map(|tr| tr.overlaps[j]))
            } else {
                tabulated_integral(&momenta, tracks.iter().map(|tr| tr.overlaps[j]), grid.n())
            };
            TraceSample {
                t,
                g: schedule.field_at(t),
                d: pr.d,
                big_d: pr.big_d,
                ln_big_d: pr.ln_big_d,
                singular: pr.singular,
            }
        })
        .collect();

    let snapshots: Vec<ModeSnapshot> = snapshot_indices
        .iter()
        .enumerate()
        .map(|(si, &j)| {
            let entries = momenta
                .iter()
                .zip(&tracks)
                .map(|(&k, tr)| {
                    let (p, m) = &tr.snaps[si];
                    let overlap = mode_overlap(p, m).expect("branches sampled together");
                    SnapshotEntry {
                        k,
                        overlap,
                        fidelity: overlap.norm_sqr().min(1.0),
                        regime: regime_tag(k, k_hat),
                    }
                })
                .collect();
            ModeSnapshot {
                t: t_samples[j],
                g: schedule.field_at(t_samples[j]),
                entries,
            }
        })
        .collect();

    let trace = DecoherenceTrace {
        meta: TraceMeta {
            n: grid.n(),
            delta,
            tau_q: schedule.tau_q(),
            g_start: schedule.g_start(),
            g_end: schedule.g_end(),
            subsample,
            integrator: *cfg,
            max_norm_drift,
        },
        samples,
    };
    Ok((trace, snapshots))
}

/// ln D = (N / 2 pi) * integral of the piecewise-linear interpolant of
/// ln F_k, evaluated exactly. The phase of d is reconstructed the same way
/// after unwrapping arg o_k along k, which assumes adjacent retained modes
/// differ in phase by less than pi.
fn tabulated_integral<I: Iterator<Item = Complex64>>(
    momenta: &[f64],
    overlaps: I,
    n: usize,
) -> ProductResult {
    let mut ln_f = Vec::with_capacity(momenta.len());
    let mut args = Vec::with_capacity(momenta.len());
    let mut singular = false;
    let mut exact_zero = false;
    let mut arg_prev = 0.0;
    for o in overlaps {
        let f = o.norm_sqr().min(1.0);
        if f == 0.0 {
            exact_zero = true;
        }
        if f < SINGULAR_FIDELITY {
            singular = true;
        }
        ln_f.push(f.max(FIDELITY_FLOOR).ln());
        let mut a = o.arg();
        while a - arg_prev > PI {
            a -= 2.0 * PI;
        }
        while a - arg_prev < -PI {
            a += 2.0 * PI;
        }
        args.push(a);
        arg_prev = a;
    }
    if exact_zero {
        return ProductResult {
            d: Complex64::new(0.0, 0.0),
            big_d: 0.0,
            ln_big_d: f64::NEG_INFINITY,
            singular: true,
        };
    }
    let weight = n as f64 / (2.0 * PI);
    let s = weight * trapezoid_extended(momenta, &ln_f);
    let phi = weight * trapezoid_extended(momenta, &args);
    ProductResult {
        d: Complex64::from_polar((0.5 * s).exp(), phi),
        big_d: s.exp(),
        ln_big_d: s,
        singular,
    }
}

/// Trapezoid over tabulated knots in (0, pi), with the first and last values
/// extended as constants to the interval ends.
fn trapezoid_extended(k: &[f64], y: &[f64]) -> f64 {
    let mut acc = KahanSum::new();
    acc.add(y[0] * k[0]);
    for i in 1..k.len() {
        acc.add(0.5 * (y[i] + y[i - 1]) * (k[i] - k[i - 1]));
    }
    acc.add(y[y.len() - 1] * (PI - k[k.len() - 1]));
    acc.value()
}

//! Mode-level dynamics: instantaneous pair ground states and the driven
//! evolution of each qubit-conditioned branch.

use crate::error::{Error, Result};
use crate::integrator::{IntegratorConfig, Method, ModeOde};
use crate::quench::{CouplingSplit, QuenchSchedule};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Norm drift beyond this is treated as an integration failure, not noise.
const NORM_FAIL: f64 = 1e-6;

/// Bogolubov angle of the (k, -k) pair ground state at field g.
///
/// theta = atan2(sin k, cos k - g) lies in (0, pi) for k in (0, pi) and is
/// stable for every g, critical points included; the textbook arctan of
/// sin k / (cos k - g) loses the branch when g > cos k.
pub fn bogolubov_angle(k: f64, g: f64) -> f64 {
    f64::atan2(k.sin(), k.cos() - g)
}

/// Instantaneous ground state of one momentum pair in the real nonnegative
/// gauge: v = cos(theta/2), u = sin(theta/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundState {
    pub v: f64,
    pub u: f64,
}

pub fn ground_state_amplitudes(k: f64, g_eff: f64) -> Result<GroundState> {
    if !(k > 0.0 && k < PI) {
        return Err(Error::InvalidParameter(format!(
            "momentum must lie strictly inside (0, pi), got {k}"
        )));
    }
    if !g_eff.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "effective field must be finite, got {g_eff}"
        )));
    }
    let half = 0.5 * bogolubov_angle(k, g_eff);
    Ok(GroundState {
        v: half.cos(),
        u: half.sin(),
    })
}

/// State of one branch of one momentum mode at time t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeAmplitudes {
    pub v: Complex64,
    pub u: Complex64,
    pub k: f64,
    pub branch_sign: f64,
    pub t: f64,
}

impl ModeAmplitudes {
    pub fn norm_sq(&self) -> f64 {
        self.v.norm_sqr() + self.u.norm_sqr()
    }

    /// ||v|^2 + |u|^2 - 1|; unitary propagation keeps this at rounding level.
    pub fn norm_drift(&self) -> f64 {
        (self.norm_sq() - 1.0).abs()
    }
}

/// Evolve one branch from the instantaneous ground state at g_start through
/// the ramp, returning the amplitudes at each requested sample time.
///
/// Sample times must be sorted ascending and lie within the run window.
/// Norm drift beyond 1e-6 at any sample aborts with the mode identity; it is
/// never repaired by renormalizing, since drift means the stepper is
/// misconfigured for this mode.
pub fn evolve_branch(
    k: f64,
    schedule: &QuenchSchedule,
    coupling: &CouplingSplit,
    cfg: &IntegratorConfig,
    t_samples: &[f64],
) -> Result<Vec<ModeAmplitudes>> {
    let gs = ground_state_amplitudes(k, coupling.effective_field(schedule.g_start()))?;
    let (t0, t1) = (schedule.t_start(), schedule.t_end());
    let slack = 1e-9 * (t1 - t0).max(1.0);
    let mut prev = f64::NEG_INFINITY;
    for &t in t_samples {
        if !(t >= prev) {
            return Err(Error::InvalidParameter(format!(
                "sample times must be sorted ascending, got {t} after {prev}"
            )));
        }
        if t < t0 - slack || t > t1 + slack {
            return Err(Error::InvalidParameter(format!(
                "sample time {t} outside the run window [{t0}, {t1}]"
            )));
        }
        prev = t;
    }

    let ode = ModeOde::new(schedule, coupling, k);
    let mut v = Complex64::new(gs.v, 0.0);
    let mut u = Complex64::new(gs.u, 0.0);
    let mut t = t0;
    let mut h_adaptive = cfg.dt_max;
    let mut out = Vec::with_capacity(t_samples.len());
    for &sample in t_samples {
        let target = sample.clamp(t0, t1);
        let span = target - t;
        if span > 0.0 {
            match cfg.method {
                Method::Rk45 => {
                    let (nv, nu, h) = ode
                        .advance_rk45(t, target, v, u, cfg.rel_tol, cfg.abs_tol, h_adaptive)
                        .map_err(|e| Error::ModeFailure {
                            k,
                            message: e.to_string(),
                        })?;
                    v = nv;
                    u = nu;
                    h_adaptive = h;
                }
                method => {
                    let n = (span / cfg.dt_max).ceil().max(1.0) as u64;
                    let h = span / n as f64;
                    for i in 0..n {
                        (v, u) = ode.step(method, t + i as f64 * h, h, v, u);
                    }
                }
            }
            t = target;
        }
        let amps = ModeAmplitudes {
            v,
            u,
            k,
            branch_sign: coupling.branch_sign(),
            t: target,
        };
        let drift = amps.norm_drift();
        if !(drift <= NORM_FAIL) {
            return Err(Error::ModeFailure {
                k,
                message: format!(
                    "norm drift {drift:.3e} exceeds {NORM_FAIL:.0e} at t = {target:.6}"
                ),
            });
        }
        out.push(amps);
    }
    Ok(out)
}

/// Probability of not being in the instantaneous ground state at g_eff.
pub fn excitation_probability(amps: &ModeAmplitudes, g_eff: f64) -> Result<f64> {
    let gs = ground_state_amplitudes(amps.k, g_eff)?;
    let ovl = amps.v * gs.v + amps.u * gs.u;
    Ok((1.0 - ovl.norm_sqr()).clamp(0.0, 1.0))
}

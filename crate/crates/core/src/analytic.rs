//! Closed-form approximations to the mode fidelities and the decoherence
//! factor, valid away from the critical points, plus the special integral
//! f[phi] they share.
//!
//! Conventions: the ramp is g(t) = 1 - t/tau_q, the first-crossing phase is
//! phi(t) = 4 t delta and the second-crossing phase eta(t) = 4 tau_q delta
//! (1 + g(t)). Phases enter every formula through sin^2, so their overall
//! sign is immaterial.

use crate::error::{Error, Result};
use crate::modes::bogolubov_angle;
use crate::quadrature;
use crate::quench::{kz_scales, revival_threshold, UniversalityClass};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{OnceLock, RwLock};

/// A closed-form value together with its domain verdict. Out-of-domain calls
/// still return the formula's number so plotted curves stay continuous, but
/// the flag travels with it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged {
    pub value: f64,
    pub valid: bool,
}

/// How far from both critical points a closed form is trusted:
/// |g -+ 1| must exceed margin_delta * |delta| and margin_ghat * g_hat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityWindow {
    margin_delta: f64,
    margin_ghat: f64,
}

impl Default for ValidityWindow {
    fn default() -> Self {
        Self {
            margin_delta: 5.0,
            margin_ghat: 5.0,
        }
    }
}

impl ValidityWindow {
    pub fn new(margin_delta: f64, margin_ghat: f64) -> Result<Self> {
        if !(margin_delta >= 1.0 && margin_ghat >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "validity margins must be at least 1, got ({margin_delta}, {margin_ghat})"
            )));
        }
        Ok(Self {
            margin_delta,
            margin_ghat,
        })
    }

    /// Minimum trusted distance from a critical point.
    pub fn margin(&self, delta: f64, tau_q: f64) -> Result<f64> {
        let g_hat = kz_scales(&UniversalityClass::ISING, tau_q)?.g_hat;
        Ok((self.margin_delta * delta.abs()).max(self.margin_ghat * g_hat))
    }

    /// True when g keeps the trusted distance from both g_c = +1 and -1.
    pub fn clears_both(&self, g: f64, delta: f64, tau_q: f64) -> Result<bool> {
        let m = self.margin(delta, tau_q)?;
        Ok((g - 1.0).abs() > m && (g + 1.0).abs() > m)
    }
}

/// Accumulated phase between the branches after the first crossing.
pub fn phase_first(t: f64, delta: f64) -> f64 {
    4.0 * t * delta
}

/// Phase picked up past the second crossing; zero at g = -1.
pub fn phase_second(g: f64, tau_q: f64, delta: f64) -> f64 {
    4.0 * tau_q * delta * (1.0 + g)
}

/// Unreduced overlap phase chi before the small-k, small-delta reduction,
/// kept as a cross-check on the reduced phases. Defined for field values
/// below the mode's own crossing, g < cos k - |delta|.
pub fn phase_general(k: f64, g: f64, tau_q: f64, delta: f64) -> f64 {
    let c = k.cos() - g;
    let root = 2.0 * tau_q.sqrt();
    let a_plus = root * (c - delta);
    let a_minus = root * (c + delta);
    let tau_prime = 4.0 * tau_q * k.sin().powi(2);
    0.25 * (a_minus * a_minus - a_plus * a_plus) + 0.25 * tau_prime * (a_minus / a_plus).ln()
}

fn check_physical(n: usize, delta: f64, tau_q: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "environment size must be positive".into(),
        ));
    }
    if !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "coupling must be finite, got {delta}"
        )));
    }
    if !tau_q.is_finite() || tau_q <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tau_q must be positive, got {tau_q}"
        )));
    }
    Ok(())
}

/// Mode fidelity when both branches stay adiabatic, in the exact
/// Bogolubov-angle form F_k = cos^2((theta_+ - theta_-) / 2).
pub fn fk_adiabatic(
    k: f64,
    g: f64,
    delta: f64,
    tau_q: f64,
    w: &ValidityWindow,
) -> Result<Flagged> {
    let half = 0.5 * (bogolubov_angle(k, g + delta) - bogolubov_angle(k, g - delta));
    Ok(Flagged {
        value: half.cos().powi(2),
        valid: w.clears_both(g, delta, tau_q)?,
    })
}

/// Leading order of fk_adiabatic in the coupling:
/// 1 - delta^2 sin^2 k / (1 - 2 g cos k + g^2)^2.
pub fn fk_adiabatic_expansion(k: f64, g: f64, delta: f64) -> f64 {
    let den = 1.0 - 2.0 * g * k.cos() + g * g;
    1.0 - delta * delta * k.sin().powi(2) / (den * den)
}

/// Decoherence of a fully adiabatic environment in the paramagnetic phase:
/// D = exp(-N delta^2 / (4 g^2 (g^2 - 1))). Diverges at |g| = 1, hence the
/// hard domain check.
pub fn fidelity_paramagnetic(n: usize, delta: f64, g: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "environment size must be positive".into(),
        ));
    }
    if !g.is_finite() || g.abs() <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "paramagnetic fidelity needs |g| > 1, got {g}"
        )));
    }
    let g2 = g * g;
    Ok((-(n as f64) * delta * delta / (4.0 * g2 * (g2 - 1.0))).exp())
}

/// Fidelity of the modes excited at the first critical point:
/// F_k = 1 - 4 (x - x^2) sin^2(phi), x = exp(-2 pi tau_q k^2).
/// Trusted for k below pi/4 once g(t) has dropped a margin under 1.
pub fn fk_excited_first(
    k: f64,
    t: f64,
    tau_q: f64,
    delta: f64,
    w: &ValidityWindow,
) -> Result<Flagged> {
    check_physical(1, delta, tau_q)?;
    let g = 1.0 - t / tau_q;
    let x = (-2.0 * PI * tau_q * k * k).exp();
    let s = phase_first(t, delta).sin();
    Ok(Flagged {
        value: 1.0 - 4.0 * x * (1.0 - x) * s * s,
        valid: k < PI / 4.0 && g < 1.0 - w.margin(delta, tau_q)?,
    })
}

/// Mirror form for the modes excited at the second critical point, peaked
/// near k = pi and driven by the phase eta.
pub fn fk_excited_second(
    k: f64,
    t: f64,
    tau_q: f64,
    delta: f64,
    w: &ValidityWindow,
) -> Result<Flagged> {
    check_physical(1, delta, tau_q)?;
    let g = 1.0 - t / tau_q;
    let dk = k - PI;
    let x = (-2.0 * PI * tau_q * dk * dk).exp();
    let s = phase_second(g, tau_q, delta).sin();
    Ok(Flagged {
        value: 1.0 - 4.0 * x * (1.0 - x) * s * s,
        valid: PI - k < PI / 4.0 && g < -1.0 - w.margin(delta, tau_q)?,
    })
}

static F_CACHE: OnceLock<RwLock<HashMap<u64, f64>>> = OnceLock::new();

/// The dimensionless integral
/// f[phi] = -(2 pi)^(-1/2) * int_0^inf ds ln[1 - 4 (e^(-s^2) - e^(-2 s^2)) sin^2 phi],
/// nonnegative, pi-periodic, maximal at phi = pi/2.
///
/// The integrand is rewritten as ln[(1 - 2x)^2 + 4 cos^2(phi) x (1 - x)],
/// x = e^(-s^2): algebraically identical, but immune to the cancellation
/// that makes the printed form go negative near x = 1/2 when sin^2 phi ~ 1.
/// Values are cached exactly per cos^2 phi; interpolating on a phi grid
/// would break regression constants, since f has a sqrt cusp at pi/2.
pub fn f_integral(phi: f64) -> Result<f64> {
    if !phi.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "phase must be finite, got {phi}"
        )));
    }
    let c = phi.cos();
    let m1 = c * c;
    let key = m1.to_bits();
    let cache = F_CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(&v) = cache.read().expect("cache poisoned").get(&key) {
        return Ok(v);
    }
    let v = f_of_cos2(m1)?;
    cache
        .write()
        .expect("cache poisoned")
        .insert(key, v);
    Ok(v)
}

fn f_of_cos2(m1: f64) -> Result<f64> {
    // sin^2 phi = 0: the bracket is (1 - 2x)^2 + 4x(1 - x) = 1 identically,
    // but quadrature would round its logarithm to ~1e-16 noise. Return the
    // exact value so uncoupled closed forms stay exactly 1.
    if m1 == 1.0 {
        return Ok(0.0);
    }
    // 1 - 2x is exact over the cancellation zone x in [1/4, 1] (Sterbenz),
    // and both bracket terms are nonnegative, so the argument of ln can
    // never round below zero. The floor only guards the literal m1 = 0,
    // x = 1/2 point where the argument is a true zero.
    let integrand = move |s: f64| {
        let x = (-s * s).exp();
        let d = 1.0 - 2.0 * x;
        (d * d + 4.0 * m1 * x * (1.0 - x)).max(1e-300).ln()
    };
    // Split at the extremum x = 1/2 of the bracket (the singular point when
    // sin^2 phi = 1). Beyond s = 6 the integrand is under 4e-36: dropped.
    let split = f64::ln(2.0).sqrt();
    let i = quadrature::integrate_split(&integrand, &[0.0, split, 6.0], 1e-10)?;
    Ok((-i / (2.0 * PI).sqrt()).max(0.0))
}

/// True when the coupling is too strong for the gaussian small-phase form
/// to hold over the whole inter-critical window.
pub fn strong_coupling_warning(delta: f64, tau_q: f64) -> bool {
    delta.abs() > 0.25 * revival_threshold(tau_q)
}

fn fidelity_exponent_between(n: usize, delta: f64, g: f64) -> f64 {
    n as f64 * delta * delta / (4.0 * (1.0 - g * g))
}

/// D between the critical points: the ferromagnetic fidelity factor times
/// the universal first-crossing excitation term,
/// D = exp(-N delta^2 / (4 (1 - g^2))) * exp(-(N / 2 pi) f[phi] / sqrt(tau_q)).
pub fn decoherence_between(
    n: usize,
    delta: f64,
    tau_q: f64,
    t: f64,
    w: &ValidityWindow,
) -> Result<Flagged> {
    check_physical(n, delta, tau_q)?;
    let g = 1.0 - t / tau_q;
    let kz = n as f64 / (2.0 * PI) * f_integral(phase_first(t, delta))? / tau_q.sqrt();
    let m = w.margin(delta, tau_q)?;
    Ok(Flagged {
        value: (-fidelity_exponent_between(n, delta, g) - kz).exp(),
        valid: g < 1.0 - m && g > -1.0 + m,
    })
}

/// D past the second crossing: paramagnetic fidelity times both excitation
/// terms, the first-crossing one still accumulating phase and the
/// second-crossing one frozen in.
pub fn decoherence_after(
    n: usize,
    delta: f64,
    tau_q: f64,
    t: f64,
    w: &ValidityWindow,
) -> Result<Flagged> {
    check_physical(n, delta, tau_q)?;
    let g = 1.0 - t / tau_q;
    let g2 = g * g;
    let fid = n as f64 * delta * delta / (4.0 * g2 * (g2 - 1.0));
    let kz = n as f64 / (2.0 * PI) / tau_q.sqrt()
        * (f_integral(phase_first(t, delta))? + f_integral(phase_second(g, tau_q, delta))?);
    Ok(Flagged {
        value: (-fid - kz).exp(),
        valid: g < -1.0 - w.margin(delta, tau_q)?,
    })
}

/// Weak-coupling limit of decoherence_between: the oscillatory factor
/// collapses to a gaussian, D = exp(-8 N delta^2 t^2 (sqrt 2 - 1) / (pi sqrt
/// tau_q)) times the fidelity factor. Holds when delta is well below the
/// revival threshold; see strong_coupling_warning.
pub fn decoherence_gaussian(
    n: usize,
    delta: f64,
    tau_q: f64,
    t: f64,
    w: &ValidityWindow,
) -> Result<Flagged> {
    check_physical(n, delta, tau_q)?;
    let g = 1.0 - t / tau_q;
    let rate = 8.0 * n as f64 * delta * delta * (2f64.sqrt() - 1.0) / (PI * tau_q.sqrt());
    let m = w.margin(delta, tau_q)?;
    Ok(Flagged {
        value: (-fidelity_exponent_between(n, delta, g) - rate * t * t).exp(),
        valid: g < 1.0 - m && g > -1.0 + m,
    })
}

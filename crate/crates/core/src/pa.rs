//! Memoryless power amplifier: modified Rapp AM/AM and AM/PM, output backoff,
//! Bussgang linear gain and the drain-efficiency law.
//!
//! Inside the signal chain amplitudes are normalized so that the saturation
//! amplitude is one (`A_sat^2` is the saturation power). Absolute watts only
//! appear through [`BackoffPoint`].

use num_complex::Complex64;

use crate::config::PaProfile;
use crate::units::{db_to_linear, linear_to_db};

/// Largest input drive considered by the backoff search, in dB above `A_sat^2`.
pub const MAX_DRIVE_DB: f64 = 20.0;

/// Output-power tolerance of the backoff search (dB).
pub const BACKOFF_TOLERANCE_DB: f64 = 0.05;

const SEARCH_TOLERANCE_DB: f64 = 1e-4;
const MAX_SEARCH_ITERATIONS: usize = 30;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PaError {
    #[error("backoff {requested_db} dB is below the feasible minimum {feasible_min_db:.3} dB")]
    Unreachable { requested_db: f64, feasible_min_db: f64 },
    #[error("backoff must be >= 0 dB, got {0}")]
    NegativeBackoff(f64),
    #[error("input signal has zero energy")]
    ZeroInput,
    #[error("input and output lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Modified Rapp nonlinearity in normalized amplitude units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RappModel {
    pub a_sat: f64,
    pub smoothness: f64,
    pub alpha: f64,
    pub beta: f64,
    pub q1: f64,
    pub q2: f64,
}

impl RappModel {
    pub fn from_profile(profile: &PaProfile) -> Self {
        Self {
            a_sat: 1.0,
            smoothness: profile.smoothness,
            alpha: profile.am_pm_alpha_rad,
            beta: profile.am_pm_beta,
            q1: profile.am_pm_q1,
            q2: profile.am_pm_q2,
        }
    }

    /// Pure AM/AM compression, no phase distortion.
    pub fn am_am_only(a_sat: f64, smoothness: f64) -> Self {
        Self { a_sat, smoothness, alpha: 0.0, beta: 1.0, q1: 1.0, q2: 1.0 }
    }

    /// Output amplitude `g(r)`.
    pub fn am_am(&self, r: f64) -> f64 {
        let two_s = 2.0 * self.smoothness;
        r * (1.0 + (r / self.a_sat).powf(two_s)).powf(-1.0 / two_s)
    }

    /// Phase rotation `theta(r)` in radians.
    pub fn am_pm(&self, r: f64) -> f64 {
        if r == 0.0 || self.alpha == 0.0 {
            return 0.0;
        }
        self.alpha * r.powf(self.q1) / (1.0 + (r / self.beta).powf(self.q2))
    }

    /// `q(|x|) x`: output amplitude `g(|x|)`, phase advanced by `theta(|x|)`.
    pub fn apply(&self, x: Complex64) -> Complex64 {
        let r = x.norm();
        if r == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let gain = self.am_am(r) / r;
        x * Complex64::from_polar(gain, self.am_pm(r))
    }

    pub fn amplify(&self, x: &[Complex64]) -> Vec<Complex64> {
        x.iter().map(|&v| self.apply(v)).collect()
    }

    /// Mean output power when `x` is driven at `scale`.
    fn mean_output_power(&self, x: &[Complex64], scale: f64) -> f64 {
        let sum: f64 = x
            .iter()
            .map(|v| {
                let g = self.am_am(v.norm() * scale);
                g * g
            })
            .sum();
        sum / x.len() as f64
    }
}

/// `q(x) x` for one sample.
pub fn rapp_gain(sample: Complex64, model: &RappModel) -> Complex64 {
    model.apply(sample)
}

/// Result of driving the PA at a prescribed output backoff.
#[derive(Debug, Clone)]
pub struct BackoffOutcome {
    /// Input scaling applied to the caller's samples.
    pub scale: f64,
    pub output: Vec<Complex64>,
    /// Achieved output backoff relative to `A_sat^2`.
    pub achieved_db: f64,
    pub iterations: usize,
}

/// Scale `x` so the amplified signal's mean power sits `backoff_db` below saturation.
///
/// The drive level is found by a fixed-point iteration on the output power in
/// the log domain; the local slope of output versus input power is estimated
/// from the previous step so the iteration stays fast near compression.
pub fn apply_backoff(x: &[Complex64], backoff_db: f64, model: &RappModel) -> Result<BackoffOutcome, PaError> {
    if !(backoff_db >= 0.0) {
        return Err(PaError::NegativeBackoff(backoff_db));
    }
    let input_power = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len().max(1) as f64;
    if !(input_power > 0.0) {
        return Err(PaError::ZeroInput);
    }
    let sat_power = model.a_sat * model.a_sat;
    let target = sat_power * db_to_linear(-backoff_db);

    let max_scale = (sat_power * db_to_linear(MAX_DRIVE_DB) / input_power).sqrt();
    let max_out = model.mean_output_power(x, max_scale);
    if max_out < target * db_to_linear(-SEARCH_TOLERANCE_DB) {
        return Err(PaError::Unreachable { requested_db: backoff_db, feasible_min_db: linear_to_db(sat_power / max_out) });
    }

    // Work in u = ln(scale^2), h(u) = ln(P_out) - ln(target).
    let mut u = (target / input_power).ln();
    let mut h = model.mean_output_power(x, (0.5 * u).exp()).ln() - target.ln();
    let mut slope = 1.0;
    let mut iterations = 0;
    let tol = SEARCH_TOLERANCE_DB * std::f64::consts::LN_10 / 10.0;
    while h.abs() > tol && iterations < MAX_SEARCH_ITERATIONS {
        let u_max = max_scale.powi(2).ln();
        let next_u = (u - h / slope).min(u_max);
        let next_h = model.mean_output_power(x, (0.5 * next_u).exp()).ln() - target.ln();
        if next_u != u {
            slope = ((next_h - h) / (next_u - u)).clamp(1e-6, 1.0);
        }
        u = next_u;
        h = next_h;
        iterations += 1;
    }
    if h.abs() > tol {
        // Output power is monotone in drive: finish by bisection on u.
        let (mut lo, mut hi) = if h < 0.0 { (u, max_scale.powi(2).ln()) } else { (f64::MIN_POSITIVE.ln(), u) };
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            let hm = model.mean_output_power(x, (0.5 * mid).exp()).ln() - target.ln();
            iterations += 1;
            if hm.abs() <= tol {
                u = mid;
                break;
            }
            if hm < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            u = mid;
        }
    }
    let scale = (0.5 * u).exp();
    let output: Vec<Complex64> = x.iter().map(|&v| model.apply(v * scale)).collect();
    let out_power = output.iter().map(|v| v.norm_sqr()).sum::<f64>() / output.len() as f64;
    Ok(BackoffOutcome { scale, output, achieved_db: linear_to_db(sat_power / out_power), iterations })
}

/// Bussgang linear gain `a = <x_out, x_in> / ||x_in||^2`.
pub fn bussgang_gain(x_in: &[Complex64], x_out: &[Complex64]) -> Result<Complex64, PaError> {
    if x_in.len() != x_out.len() {
        return Err(PaError::LengthMismatch(x_in.len(), x_out.len()));
    }
    let energy: f64 = x_in.iter().map(|v| v.norm_sqr()).sum();
    if !(energy > 0.0) {
        return Err(PaError::ZeroInput);
    }
    let corr: Complex64 = x_out.iter().zip(x_in).map(|(o, i)| o * i.conj()).sum();
    Ok(corr / energy)
}

/// Residual `x_out - a x_in`, uncorrelated with `x_in` by construction.
pub fn bussgang_distortion(x_in: &[Complex64], x_out: &[Complex64], gain: Complex64) -> Vec<Complex64> {
    x_out.iter().zip(x_in).map(|(o, i)| o - gain * i).collect()
}

/// Distortion-to-output power ratio of the Bussgang decomposition.
pub fn distortion_ratio(x_in: &[Complex64], x_out: &[Complex64]) -> Result<f64, PaError> {
    let a = bussgang_gain(x_in, x_out)?;
    let d: f64 = bussgang_distortion(x_in, x_out, a).iter().map(|v| v.norm_sqr()).sum();
    let out: f64 = x_out.iter().map(|v| v.norm_sqr()).sum();
    Ok(d / out)
}

/// Operating point of one PA at output backoff `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackoffPoint {
    pub backoff_db: f64,
    pub p_tx_w: f64,
    pub p_dc_w: f64,
    pub eta: f64,
}

/// Drain efficiency `eta_sat * 10^(-b/20)`.
pub fn drain_efficiency(backoff_db: f64, profile: &PaProfile) -> f64 {
    (profile.eta_sat * 10f64.powf(-backoff_db.max(0.0) / 20.0)).min(profile.eta_sat)
}

/// Output and DC power of a PA operated exactly `b` dB below saturation.
pub fn pa_dc_power(backoff_db: f64, profile: &PaProfile) -> BackoffPoint {
    let eta = drain_efficiency(backoff_db, profile);
    let p_tx_w = profile.p_sat_w() * db_to_linear(-backoff_db);
    BackoffPoint { backoff_db, p_tx_w, p_dc_w: p_tx_w / eta, eta }
}

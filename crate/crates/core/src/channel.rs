//! Fading channels.
//!
//! Two views of the channel are used. The link-level EVM chain draws a
//! frequency-selective SISO tapped-delay-line realization per OFDM symbol and
//! applies it as a circular convolution (exact once the cyclic prefix is
//! removed). The link budget works with a frequency-flat 2x2 matrix of
//! i.i.d. unit-variance complex Gaussian entries and only needs its
//! eigenvalues.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{self, Purpose};

const TDL_C_CSV: &str = include_str!("../data/tdl_c.csv");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChannelError {
    #[error("delay profile: {0}")]
    Profile(String),
    #[error("delay spread spans {delay_samples} samples, longer than the {fft_size}-sample symbol")]
    DelaySpreadTooLong { delay_samples: usize, fft_size: usize },
    #[error("signal length {signal} does not match channel length {channel}")]
    LengthMismatch { signal: usize, channel: usize },
    #[error("channel matrix has non-finite entries")]
    NonFinite,
}

/// Normalized power-delay profile: delays in units of the RMS delay spread.
#[derive(Debug, Clone, PartialEq)]
pub struct TdlProfile {
    pub normalized_delays: Vec<f64>,
    pub powers_db: Vec<f64>,
}

impl TdlProfile {
    /// The standardized NLOS TDL-C profile (24 taps).
    pub fn tdl_c() -> Self {
        Self::from_csv(TDL_C_CSV).expect("bundled TDL-C profile parses")
    }

    /// Parse `delay_ns_normalized,power_db` rows (header optional).
    pub fn from_csv(text: &str) -> Result<Self, ChannelError> {
        let mut normalized_delays = Vec::new();
        let mut powers_db = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("delay") {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let parse = |s: Option<&str>| -> Result<f64, ChannelError> {
                s.and_then(|v| v.parse().ok())
                    .ok_or_else(|| ChannelError::Profile(format!("line {}: expected two numbers", lineno + 1)))
            };
            let delay = parse(cols.next())?;
            let power = parse(cols.next())?;
            if delay < 0.0 {
                return Err(ChannelError::Profile(format!("line {}: negative delay", lineno + 1)));
            }
            normalized_delays.push(delay);
            powers_db.push(power);
        }
        if normalized_delays.is_empty() {
            return Err(ChannelError::Profile("no taps".into()));
        }
        Ok(Self { normalized_delays, powers_db })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("delay_ns_normalized,power_db\n");
        for (d, p) in self.normalized_delays.iter().zip(&self.powers_db) {
            out.push_str(&format!("{d},{p}\n"));
        }
        out
    }

    /// Tap powers normalized to unit sum, merged onto integer sample delays.
    pub fn sampled(&self, delay_spread_s: f64, sample_rate_hz: f64) -> Vec<(usize, f64)> {
        let total: f64 = self.powers_db.iter().map(|p| 10f64.powf(p / 10.0)).sum();
        let mut taps: Vec<(usize, f64)> = Vec::new();
        for (d, p) in self.normalized_delays.iter().zip(&self.powers_db) {
            let delay = (d * delay_spread_s * sample_rate_hz).round() as usize;
            let power = 10f64.powf(p / 10.0) / total;
            match taps.iter_mut().find(|(k, _)| *k == delay) {
                Some(tap) => tap.1 += power,
                None => taps.push((delay, power)),
            }
        }
        taps.sort_by_key(|t| t.0);
        taps
    }
}

/// One fading draw of a SISO link.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Impulse response `h[0..L]` at the simulation sample rate.
    pub taps: Vec<Complex64>,
    /// Non-normalized DFT of the zero-padded taps, centered order, one entry
    /// per sample of the symbol.
    pub freq_response: Vec<Complex64>,
    /// Per-sample variance of the additive noise.
    pub noise_variance: f64,
}

impl ChannelRealization {
    pub fn from_taps(taps: Vec<Complex64>, len: usize, noise_variance: f64) -> Result<Self, ChannelError> {
        if taps.len() > len {
            return Err(ChannelError::DelaySpreadTooLong { delay_samples: taps.len() - 1, fft_size: len });
        }
        let mut spectrum = vec![Complex64::new(0.0, 0.0); len];
        spectrum[..taps.len()].copy_from_slice(&taps);
        rustfft::FftPlanner::new().plan_fft_forward(len).process(&mut spectrum);
        let freq_response = (0..len).map(|i| spectrum[crate::waveform::centered_to_bin(i, len, len)]).collect();
        Ok(Self { taps, freq_response, noise_variance })
    }

    /// Distortion-free unit channel.
    pub fn identity(len: usize) -> Self {
        Self {
            taps: vec![Complex64::new(1.0, 0.0)],
            freq_response: vec![Complex64::new(1.0, 0.0); len],
            noise_variance: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.freq_response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq_response.is_empty()
    }
}

/// Draw a TDL realization for a symbol of `len` samples at `sample_rate_hz`.
///
/// Each tap is CN(0, p) with the profile powers normalized to unit total, so
/// the expected channel energy is one.
pub fn draw_tdl<R: Rng + ?Sized>(
    profile: &TdlProfile,
    delay_spread_s: f64,
    sample_rate_hz: f64,
    len: usize,
    rng: &mut R,
) -> Result<ChannelRealization, ChannelError> {
    let sampled = profile.sampled(delay_spread_s, sample_rate_hz);
    let max_delay = sampled.last().map(|t| t.0).unwrap_or(0);
    if max_delay >= len {
        return Err(ChannelError::DelaySpreadTooLong { delay_samples: max_delay, fft_size: len });
    }
    let mut taps = vec![Complex64::new(0.0, 0.0); max_delay + 1];
    for (delay, power) in sampled {
        taps[delay] = complex_gaussian(rng, power);
    }
    ChannelRealization::from_taps(taps, len, 0.0)
}

/// TDL-C draw, see [`draw_tdl`].
pub fn draw_tdlc<R: Rng + ?Sized>(
    delay_spread_s: f64,
    sample_rate_hz: f64,
    len: usize,
    rng: &mut R,
) -> Result<ChannelRealization, ChannelError> {
    draw_tdl(&TdlProfile::tdl_c(), delay_spread_s, sample_rate_hz, len, rng)
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Circular convolution with the taps, without noise.
pub fn circular_convolve(x: &[Complex64], taps: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for (l, h) in taps.iter().enumerate() {
        if *h == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (k, out) in y.iter_mut().enumerate() {
            *out += h * x[(k + n - l % n) % n];
        }
    }
    y
}

/// `y = h (*) x + v`, with `v ~ CN(0, noise_variance)` per sample.
pub fn apply_channel<R: Rng + ?Sized>(
    x: &[Complex64],
    realization: &ChannelRealization,
    rng: &mut R,
) -> Result<Vec<Complex64>, ChannelError> {
    if x.len() != realization.len() {
        return Err(ChannelError::LengthMismatch { signal: x.len(), channel: realization.len() });
    }
    let mut y = circular_convolve(x, &realization.taps);
    if realization.noise_variance > 0.0 {
        for v in y.iter_mut() {
            *v += complex_gaussian(rng, realization.noise_variance);
        }
    }
    Ok(y)
}

/// Frequency-flat channel matrix, rows = receive antennas, columns = transmit antennas.
pub type Mat2 = [[Complex64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGains {
    /// Eigenvalues of H^H H, descending.
    pub lambda: [f64; 2],
    /// Best single-antenna gain, max_j ||h_j||^2 over transmit columns.
    pub lambda_eff: f64,
}

pub fn channel_gains(h: &Mat2) -> Result<ChannelGains, ChannelError> {
    if h.iter().flatten().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(ChannelError::NonFinite);
    }
    // Gram matrix H^H H = [[a, b], [conj(b), d]].
    let col_energy = |j: usize| h[0][j].norm_sqr() + h[1][j].norm_sqr();
    let a = col_energy(0);
    let d = col_energy(1);
    let b = h[0][0].conj() * h[0][1] + h[1][0].conj() * h[1][1];
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let lambda = [mean + radius, (mean - radius).max(0.0)];
    Ok(ChannelGains { lambda, lambda_eff: a.max(d) })
}

pub fn draw_flat_mimo<R: Rng + ?Sized>(rng: &mut R) -> Mat2 {
    let mut h = [[Complex64::new(0.0, 0.0); 2]; 2];
    for row in h.iter_mut() {
        for v in row.iter_mut() {
            *v = complex_gaussian(rng, 1.0);
        }
    }
    h
}

/// Eigen-quantities fed to the link budget, with a label for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda_eff: f64,
    pub label: String,
}

impl ChannelStats {
    pub fn from_gains(g: ChannelGains, label: impl Into<String>) -> Self {
        Self { lambda0: g.lambda[0], lambda1: g.lambda[1], lambda_eff: g.lambda_eff, label: label.into() }
    }

    /// Single representative draw (draw index 0 of the seed).
    pub fn fixed(seed: u64) -> Self {
        let h = draw_flat_mimo(&mut rng::stream(seed, 0, Purpose::LinkBudget));
        Self::from_gains(channel_gains(&h).expect("gaussian draw is finite"), "fixed")
    }

    /// Per-quantity medians over `draws` flat 2x2 realizations.
    pub fn median(seed: u64, draws: usize) -> Self {
        let gains: Vec<ChannelGains> = (0..draws as u64)
            .map(|i| channel_gains(&draw_flat_mimo(&mut rng::stream(seed, i, Purpose::LinkBudget))).unwrap())
            .collect();
        let med = |f: &dyn Fn(&ChannelGains) -> f64| median(gains.iter().map(f).collect());
        Self {
            lambda0: med(&|g| g.lambda[0]),
            lambda1: med(&|g| g.lambda[1]),
            lambda_eff: med(&|g| g.lambda_eff),
            label: "median".into(),
        }
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty(), "median of empty set");
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

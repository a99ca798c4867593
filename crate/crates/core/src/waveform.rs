//! Transmit chain for CP-OFDM and DFT-s-OFDM.
//!
//! Conventions used throughout the crate:
//!
//! * Every DFT is unitary (1/sqrt(size) on both directions).
//! * Frequency grids are stored in *centered* order: grid index `i` is the
//!   subcarrier at offset `i - N/2` from DC, so index `N/2` is DC.
//! * CP-OFDM is the DFT-s-OFDM pipeline with the spreading DFT replaced by the
//!   identity; both share [`build_frame`].

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WaveformError {
    #[error("unsupported QAM order {0}")]
    UnsupportedOrder(u32),
    #[error("bit length {len} is not a multiple of {bits_per_symbol}")]
    BitLength { len: usize, bits_per_symbol: usize },
    #[error("bits must be 0 or 1")]
    NotABit,
    #[error("split-localized mapping needs an even tone count, got {0}")]
    OddSplit(usize),
    #[error("{tones} tones do not fit in {usable} usable subcarriers")]
    TooManyTones { tones: usize, usable: usize },
    #[error("PAPR of an all-zero or empty signal is undefined")]
    ZeroSignal,
    #[error("oversampling factor must be >= 1")]
    Oversample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WaveformKind {
    #[serde(rename = "CP-OFDM")]
    CpOfdm,
    #[serde(rename = "DFT-s-OFDM")]
    DftSOfdm,
}

impl WaveformKind {
    pub fn label(self) -> &'static str {
        match self {
            WaveformKind::CpOfdm => "CP-OFDM",
            WaveformKind::DftSOfdm => "DFT-s-OFDM",
        }
    }
}

impl std::fmt::Display for WaveformKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MappingScheme {
    /// Two contiguous halves on either side of a nulled DC tone.
    SplitLocalized,
    /// One contiguous block centered on DC.
    Localized,
}

/// Square Gray-coded QAM with unit average power.
#[derive(Debug, Clone)]
pub struct Constellation {
    order: u32,
    bits_per_axis: usize,
    points: Vec<Complex64>,
}

impl Constellation {
    pub fn new(order: u32) -> Result<Self, WaveformError> {
        if !matches!(order, 4 | 16 | 64 | 256) {
            return Err(WaveformError::UnsupportedOrder(order));
        }
        let bits_per_axis = (order.trailing_zeros() / 2) as usize;
        let levels = 1usize << bits_per_axis;
        let scale = (2.0 * ((levels * levels) as f64 - 1.0) / 3.0).sqrt().recip();
        // Gray label g sits at amplitude (levels-1) - 2*gray_to_binary(g): label 0 is the
        // most positive level.
        let amplitude = |label: usize| {
            let mut idx = label;
            let mut shift = label >> 1;
            while shift != 0 {
                idx ^= shift;
                shift >>= 1;
            }
            (levels as f64 - 1.0) - 2.0 * idx as f64
        };
        let points = (0..order as usize)
            .map(|sym| {
                let i_label = sym >> bits_per_axis;
                let q_label = sym & (levels - 1);
                Complex64::new(amplitude(i_label), amplitude(q_label)) * scale
            })
            .collect();
        Ok(Self { order, bits_per_axis, points })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    /// Points indexed by the symbol's bit label (MSB first, I bits then Q bits).
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>, WaveformError> {
        let k = self.bits_per_symbol();
        if !bits.len().is_multiple_of(k) {
            return Err(WaveformError::BitLength { len: bits.len(), bits_per_symbol: k });
        }
        bits.chunks(k)
            .map(|chunk| {
                chunk.iter().try_fold(0usize, |acc, &b| match b {
                    0 | 1 => Ok((acc << 1) | b as usize),
                    _ => Err(WaveformError::NotABit),
                })
            })
            .map(|label| label.map(|l| self.points[l]))
            .collect()
    }

    /// Uniform random symbols, drawn through the bit mapper.
    pub fn random_symbols<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Complex64> {
        let bits: Vec<u8> = (0..count * self.bits_per_symbol()).map(|_| rng.random::<bool>() as u8).collect();
        self.modulate(&bits).expect("generated bits are well formed")
    }
}

/// Gray-mapped square QAM, unit average power.
pub fn qam_modulate(bits: &[u8], order: u32) -> Result<Vec<Complex64>, WaveformError> {
    Constellation::new(order)?.modulate(bits)
}

/// Cached unitary FFT plans for one spreading size and one IFFT size.
#[derive(Clone)]
pub struct Transforms {
    spread_fwd: Arc<dyn Fft<f64>>,
    spread_inv: Arc<dyn Fft<f64>>,
    ofdm_fwd: Arc<dyn Fft<f64>>,
    ofdm_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Transforms {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transforms")
            .field("spread_len", &self.spread_fwd.len())
            .field("ofdm_len", &self.ofdm_fwd.len())
            .finish()
    }
}

impl Transforms {
    pub fn new(spread_len: usize, ofdm_len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            spread_fwd: planner.plan_fft_forward(spread_len),
            spread_inv: planner.plan_fft_inverse(spread_len),
            ofdm_fwd: planner.plan_fft_forward(ofdm_len),
            ofdm_inv: planner.plan_fft_inverse(ofdm_len),
        }
    }

    pub fn spread_len(&self) -> usize {
        self.spread_fwd.len()
    }

    pub fn ofdm_len(&self) -> usize {
        self.ofdm_fwd.len()
    }

    pub fn dft_spread(&self, d: &[Complex64]) -> Vec<Complex64> {
        unitary(&*self.spread_fwd, d)
    }

    pub fn dft_despread(&self, d: &[Complex64]) -> Vec<Complex64> {
        unitary(&*self.spread_inv, d)
    }

    /// Centered grid of length N to `ofdm_len` time samples (zero-padded when oversampling).
    pub fn to_time_domain(&self, grid: &[Complex64]) -> Vec<Complex64> {
        let total = self.ofdm_len();
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        for (i, &v) in grid.iter().enumerate() {
            buf[centered_to_bin(i, grid.len(), total)] = v;
        }
        scale_in_place(&*self.ofdm_inv, &mut buf);
        buf
    }

    /// Inverse of [`Transforms::to_time_domain`]: the centered N-tone window of the spectrum.
    pub fn to_grid(&self, samples: &[Complex64], n: usize) -> Vec<Complex64> {
        let spectrum = self.spectrum(samples);
        (0..n).map(|i| spectrum[centered_to_bin(i, n, samples.len())]).collect()
    }

    /// Full unitary spectrum in FFT-bin order.
    pub fn spectrum(&self, samples: &[Complex64]) -> Vec<Complex64> {
        unitary(&*self.ofdm_fwd, samples)
    }
}

fn unitary(fft: &dyn Fft<f64>, input: &[Complex64]) -> Vec<Complex64> {
    assert_eq!(input.len(), fft.len(), "transform length mismatch");
    let mut buf = input.to_vec();
    scale_in_place(fft, &mut buf);
    buf
}

fn scale_in_place(fft: &dyn Fft<f64>, buf: &mut [Complex64]) {
    fft.process(buf);
    let s = (buf.len() as f64).sqrt().recip();
    buf.iter_mut().for_each(|v| *v *= s);
}

/// FFT bin of centered grid index `i` (grid of `n` tones inside a transform of `total`).
pub fn centered_to_bin(i: usize, n: usize, total: usize) -> usize {
    let offset = i as isize - (n / 2) as isize;
    offset.rem_euclid(total as isize) as usize
}

/// Unitary M-point DFT (1/sqrt(M)).
pub fn dft_spread(d: &[Complex64]) -> Vec<Complex64> {
    let fft = FftPlanner::new().plan_fft_forward(d.len());
    unitary(&*fft, d)
}

/// Unitary inverse M-point DFT.
pub fn dft_despread(d: &[Complex64]) -> Vec<Complex64> {
    let fft = FftPlanner::new().plan_fft_inverse(d.len());
    unitary(&*fft, d)
}

/// Active tone set, as indices into the centered grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToneMap {
    pub fft_size: usize,
    pub indices: Vec<usize>,
}

impl ToneMap {
    pub fn new(tones: usize, fft_size: usize, scheme: MappingScheme, dc_guard: usize) -> Result<Self, WaveformError> {
        let center = fft_size / 2;
        let indices: Vec<usize> = match scheme {
            MappingScheme::Localized => {
                if tones > fft_size {
                    return Err(WaveformError::TooManyTones { tones, usable: fft_size });
                }
                let start = center - tones / 2;
                (start..start + tones).collect()
            }
            MappingScheme::SplitLocalized => {
                if !tones.is_multiple_of(2) {
                    return Err(WaveformError::OddSplit(tones));
                }
                let half = tones / 2;
                let gap = dc_guard;
                // Lower half ends below DC - gap, upper half starts above DC + gap.
                let usable = 2 * center.saturating_sub(gap).min((fft_size - 1).saturating_sub(center + gap));
                if tones > usable {
                    return Err(WaveformError::TooManyTones { tones, usable });
                }
                let lower = center - gap - half..center - gap;
                let upper = center + gap + 1..center + gap + 1 + half;
                lower.chain(upper).collect()
            }
        };
        Ok(Self { fft_size, indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn place(&self, values: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.indices.len(), "tone count mismatch");
        let mut grid = vec![Complex64::new(0.0, 0.0); self.fft_size];
        for (&i, &v) in self.indices.iter().zip(values) {
            grid[i] = v;
        }
        grid
    }

    pub fn extract(&self, grid: &[Complex64]) -> Vec<Complex64> {
        self.indices.iter().map(|&i| grid[i]).collect()
    }
}

/// Place `spread` on an N-tone centered grid; returns the grid and the tone map.
pub fn map_tones(
    spread: &[Complex64],
    fft_size: usize,
    scheme: MappingScheme,
    dc_guard: usize,
) -> Result<(Vec<Complex64>, ToneMap), WaveformError> {
    let map = ToneMap::new(spread.len(), fft_size, scheme, dc_guard)?;
    Ok((map.place(spread), map))
}

/// Unitary inverse DFT of a centered grid, zero-padded to `N * oversample`.
pub fn to_time_domain(grid: &[Complex64], oversample: usize) -> Result<Vec<Complex64>, WaveformError> {
    if oversample == 0 {
        return Err(WaveformError::Oversample);
    }
    let total = grid.len() * oversample;
    let fft = FftPlanner::new().plan_fft_inverse(total);
    let mut buf = vec![Complex64::new(0.0, 0.0); total];
    for (i, &v) in grid.iter().enumerate() {
        buf[centered_to_bin(i, grid.len(), total)] = v;
    }
    scale_in_place(&*fft, &mut buf);
    Ok(buf)
}

/// Forward counterpart of [`to_time_domain`]: the centered `n`-tone window.
pub fn to_frequency_grid(samples: &[Complex64], n: usize) -> Vec<Complex64> {
    let fft = FftPlanner::new().plan_fft_forward(samples.len());
    let spectrum = unitary(&*fft, samples);
    (0..n).map(|i| spectrum[centered_to_bin(i, n, samples.len())]).collect()
}

/// Peak-to-average power ratio in dB.
pub fn papr(x: &[Complex64]) -> Result<f64, WaveformError> {
    if x.is_empty() {
        return Err(WaveformError::ZeroSignal);
    }
    let (peak, sum) = x.iter().fold((0.0f64, 0.0f64), |(p, s), v| {
        let e = v.norm_sqr();
        (p.max(e), s + e)
    });
    if sum == 0.0 {
        return Err(WaveformError::ZeroSignal);
    }
    Ok(10.0 * (peak / (sum / x.len() as f64)).log10())
}

/// One OFDM symbol through the transmit chain.
#[derive(Debug, Clone)]
pub struct SymbolFrame {
    pub kind: WaveformKind,
    pub data_symbols: Vec<Complex64>,
    pub spread_symbols: Vec<Complex64>,
    pub grid: Vec<Complex64>,
    pub time_samples: Vec<Complex64>,
    pub mapping: ToneMap,
}

/// Spread (or not), map and transform one symbol.
pub fn build_frame(
    kind: WaveformKind,
    data: Vec<Complex64>,
    mapping: &ToneMap,
    transforms: &Transforms,
) -> SymbolFrame {
    let spread_symbols = match kind {
        WaveformKind::DftSOfdm => transforms.dft_spread(&data),
        WaveformKind::CpOfdm => data.clone(),
    };
    let grid = mapping.place(&spread_symbols);
    let time_samples = transforms.to_time_domain(&grid);
    SymbolFrame { kind, data_symbols: data, spread_symbols, grid, time_samples, mapping: mapping.clone() }
}

/// Settings of a PAPR CCDF experiment.
#[derive(Debug, Clone)]
pub struct PaprSetup {
    pub tones: usize,
    pub fft_size: usize,
    pub modulation_order: u32,
    pub mapping: MappingScheme,
    pub dc_guard: usize,
    pub oversample: usize,
}

/// Per-symbol PAPR values (dB) of `symbols` independent frames, in symbol order.
pub fn papr_samples(
    setup: &PaprSetup,
    kind: WaveformKind,
    symbols: usize,
    seed: u64,
) -> Result<Vec<f64>, WaveformError> {
    use rayon::prelude::*;

    let constellation = Constellation::new(setup.modulation_order)?;
    let map = ToneMap::new(setup.tones, setup.fft_size, setup.mapping, setup.dc_guard)?;
    if setup.oversample == 0 {
        return Err(WaveformError::Oversample);
    }
    let transforms = Transforms::new(setup.tones, setup.fft_size * setup.oversample);
    (0..symbols as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::stream(seed, i, crate::rng::Purpose::Data);
            let data = constellation.random_symbols(setup.tones, &mut rng);
            let frame = build_frame(kind, data, &map, &transforms);
            papr(&frame.time_samples)
        })
        .collect()
}

/// Level exceeded with probability `prob` (empirical CCDF inverse).
pub fn ccdf_level(samples: &[f64], prob: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Smallest level with at most prob*n samples strictly above it.
    let above = (prob * n as f64).floor() as usize;
    sorted[n.saturating_sub(above + 1).min(n - 1)]
}

/// Empirical CCDF evaluated at `levels`.
pub fn ccdf(samples: &[f64], levels: &[f64]) -> Vec<f64> {
    let n = samples.len() as f64;
    levels.iter().map(|&l| samples.iter().filter(|&&s| s > l).count() as f64 / n).collect()
}

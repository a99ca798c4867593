//! Receive chain: per-tone MMSE on the Bussgang-linearized channel,
//! despreading, EVM measurement and the minimum EVM-compliant backoff.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{self, ChannelError, ChannelRealization, TdlProfile};
use crate::config::ScenarioConfig;
use crate::linkbudget::BackoffTable;
use crate::pa::{self, PaError, RappModel};
use crate::rng::{self, Purpose};
use crate::units::{db_to_linear, linear_to_db};
use crate::waveform::{self, Constellation, MappingScheme, ToneMap, Transforms, WaveformError, WaveformKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReceiverError {
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Pa(#[from] PaError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("at least one trial is required")]
    NoTrials,
    #[error("equalized grid has {got} tones, mapping expects {expected}")]
    MappingMismatch { expected: usize, got: usize },
    #[error(
        "EVM requirement {requirement_db} dB is not met within [0, {max_backoff_db}] dB backoff \
         (EVM at the upper end: {evm_at_max_db:.2} dB)"
    )]
    Infeasible { requirement_db: f64, max_backoff_db: f64, evm_at_max_db: f64 },
    #[error("the full-matrix receiver needs oversample 1 and at most {max} subcarriers, got {fft_size}")]
    OracleTooLarge { fft_size: usize, max: usize },
}

/// Propagation model of the link-level chain.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    Tdl { profile: TdlProfile, delay_spread_s: f64 },
    /// Unit channel, no multipath.
    Identity,
}

/// Everything the EVM chain needs; decoupled from [`ScenarioConfig`] so toy
/// sizes that violate the resource-block invariant can be simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub fft_size: usize,
    pub tones: usize,
    pub mapping: MappingScheme,
    pub dc_guard: usize,
    pub oversample: usize,
    pub modulation_order: u32,
    pub subcarrier_spacing_hz: f64,
    pub channel: ChannelModel,
    /// Signal-to-noise ratio per active tone; `None` disables noise.
    pub snr_db: Option<f64>,
    pub pa: RappModel,
}

impl LinkParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let w = &cfg.waveform;
        Self {
            fft_size: w.fft_size,
            tones: w.allocated_tones,
            mapping: w.mapping,
            dc_guard: w.dc_guard_tones,
            oversample: w.oversample,
            modulation_order: w.modulation_order,
            subcarrier_spacing_hz: w.subcarrier_spacing_hz,
            channel: ChannelModel::Tdl { profile: TdlProfile::tdl_c(), delay_spread_s: cfg.channel.delay_spread_ns * 1e-9 },
            snr_db: Some(cfg.channel.link_snr_db),
            pa: RappModel::from_profile(&cfg.pa),
        }
    }

    fn samples_per_symbol(&self) -> usize {
        self.fft_size * self.oversample
    }
}

/// Per-tone MMSE `conj(h) / (|h|^2 + sigma2)`; tones with `h = 0` and
/// `sigma2 = 0` are zeroed.
pub fn mmse_equalize(y: &[Complex64], h_eff: &[Complex64], sigma2: f64) -> Vec<Complex64> {
    y.iter()
        .zip(h_eff)
        .map(|(&y, &h)| {
            let den = h.norm_sqr() + sigma2;
            if den > 0.0 {
                h.conj() * y / den
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// Extract the active tones of an equalized N-grid and undo the spreading.
pub fn despread(grid_eq: &[Complex64], mapping: &ToneMap, kind: WaveformKind) -> Result<Vec<Complex64>, ReceiverError> {
    if grid_eq.len() != mapping.fft_size {
        return Err(ReceiverError::MappingMismatch { expected: mapping.fft_size, got: grid_eq.len() });
    }
    let tones = mapping.extract(grid_eq);
    Ok(match kind {
        WaveformKind::CpOfdm => tones,
        WaveformKind::DftSOfdm => waveform::dft_despread(&tones),
    })
}

/// Outcome of one simulated OFDM symbol.
#[derive(Debug, Clone)]
pub struct SymbolOutcome {
    pub data: Vec<Complex64>,
    pub estimate: Vec<Complex64>,
    pub bussgang_gain: Complex64,
    pub noise_variance: f64,
}

impl SymbolOutcome {
    pub fn error_energy(&self) -> f64 {
        self.estimate.iter().zip(&self.data).map(|(a, b)| (a - b).norm_sqr()).sum()
    }

    pub fn data_energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Prepared transmit/receive chain for one parameter set.
#[derive(Debug, Clone)]
pub struct LinkSimulator {
    params: LinkParams,
    constellation: Constellation,
    map: ToneMap,
    transforms: Transforms,
}

impl LinkSimulator {
    pub fn new(params: LinkParams) -> Result<Self, ReceiverError> {
        if params.oversample == 0 {
            return Err(WaveformError::Oversample.into());
        }
        let constellation = Constellation::new(params.modulation_order)?;
        let map = ToneMap::new(params.tones, params.fft_size, params.mapping, params.dc_guard)?;
        let transforms = Transforms::new(params.tones, params.samples_per_symbol());
        Ok(Self { params, constellation, map, transforms })
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn tone_map(&self) -> &ToneMap {
        &self.map
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    fn draw_channel(&self, seed: u64, trial: u64) -> Result<ChannelRealization, ReceiverError> {
        let len = self.params.samples_per_symbol();
        Ok(match &self.params.channel {
            ChannelModel::Identity => ChannelRealization::identity(len),
            ChannelModel::Tdl { profile, delay_spread_s } => {
                let fs = self.params.subcarrier_spacing_hz * len as f64;
                channel::draw_tdl(profile, *delay_spread_s, fs, len, &mut rng::stream(seed, trial, Purpose::Channel))?
            }
        })
    }

    /// Random data symbols of trial `trial`.
    pub fn trial_data(&self, seed: u64, trial: u64) -> Vec<Complex64> {
        self.constellation.random_symbols(self.params.tones, &mut rng::stream(seed, trial, Purpose::Data))
    }

    /// Run `data` through PA, channel and the diagonal MMSE receiver. The
    /// channel and noise of trial `trial` are used.
    pub fn run_symbol(
        &self,
        kind: WaveformKind,
        data: Vec<Complex64>,
        backoff_db: f64,
        seed: u64,
        trial: u64,
    ) -> Result<SymbolOutcome, ReceiverError> {
        let frame = waveform::build_frame(kind, data, &self.map, &self.transforms);
        let driven = pa::apply_backoff(&frame.time_samples, backoff_db, &self.params.pa)?;
        // Gain relative to the unscaled frame, so it absorbs the drive scale.
        let gain = pa::bussgang_gain(&frame.time_samples, &driven.output)?;

        let mut realization = self.draw_channel(seed, trial)?;
        realization.noise_variance = self.noise_variance(&driven.output);
        let y = channel::apply_channel(&driven.output, &realization, &mut rng::stream(seed, trial, Purpose::Noise))?;

        let n = self.params.fft_size;
        let len = realization.len();
        let grid = self.transforms.to_grid(&y, n);
        let h_eff: Vec<Complex64> =
            (0..n).map(|i| gain * realization.freq_response[i + len / 2 - n / 2]).collect();
        let eq = mmse_equalize(&grid, &h_eff, realization.noise_variance);
        let tones = self.map.extract(&eq);
        let estimate = match kind {
            WaveformKind::CpOfdm => tones,
            WaveformKind::DftSOfdm => self.transforms.dft_despread(&tones),
        };
        Ok(SymbolOutcome { data: frame.data_symbols, estimate, bussgang_gain: gain, noise_variance: realization.noise_variance })
    }

    /// Noise variance per sample (equivalently per tone) for the configured SNR.
    fn noise_variance(&self, tx: &[Complex64]) -> f64 {
        match self.params.snr_db {
            None => 0.0,
            Some(snr) => {
                let per_tone = tx.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.params.tones as f64;
                per_tone / db_to_linear(snr)
            }
        }
    }

    /// Pooled EVM over `trials` symbols; trials run in parallel, reduced in index order.
    pub fn measure_evm(&self, kind: WaveformKind, backoff_db: f64, trials: usize, seed: u64) -> Result<EvmReport, ReceiverError> {
        if trials == 0 {
            return Err(ReceiverError::NoTrials);
        }
        let energies: Vec<(f64, f64)> = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let out = self.run_symbol(kind, self.trial_data(seed, t), backoff_db, seed, t)?;
                Ok((out.error_energy(), out.data_energy()))
            })
            .collect::<Result<_, ReceiverError>>()?;
        Ok(EvmReport::pool(kind, backoff_db, &energies))
    }

    /// Smallest backoff in `[0, max_db]` meeting `evm_req_db`, by bisection to
    /// `tol_db` with the seed frozen across probes. Returns the feasible end.
    pub fn min_backoff(
        &self,
        kind: WaveformKind,
        evm_req_db: f64,
        trials: usize,
        seed: u64,
        max_db: f64,
        tol_db: f64,
    ) -> Result<f64, ReceiverError> {
        let at_max = self.measure_evm(kind, max_db, trials, seed)?;
        if at_max.evm_db > evm_req_db {
            return Err(ReceiverError::Infeasible {
                requirement_db: evm_req_db,
                max_backoff_db: max_db,
                evm_at_max_db: at_max.evm_db,
            });
        }
        let (mut lo, mut hi) = (0.0, max_db);
        while hi - lo > tol_db {
            let mid = 0.5 * (lo + hi);
            let feasible = match self.measure_evm(kind, mid, trials, seed) {
                Ok(r) => r.evm_db <= evm_req_db,
                Err(ReceiverError::Pa(PaError::Unreachable { .. })) => false,
                Err(e) => return Err(e),
            };
            if feasible {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Diagonal and exact full-matrix MMSE EVM (dB) on identical symbols.
    ///
    /// The full-matrix receiver knows the data-dependent effective channel
    /// `F H Q F^H`, including the per-sample PA gain `Q`.
    pub fn compare_receivers(
        &self,
        kind: WaveformKind,
        backoff_db: f64,
        trials: usize,
        seed: u64,
    ) -> Result<ReceiverComparison, ReceiverError> {
        const MAX_ORACLE_SIZE: usize = 256;
        let n = self.params.fft_size;
        if self.params.oversample != 1 || n > MAX_ORACLE_SIZE {
            return Err(ReceiverError::OracleTooLarge { fft_size: n * self.params.oversample, max: MAX_ORACLE_SIZE });
        }
        if trials == 0 {
            return Err(ReceiverError::NoTrials);
        }
        let f = dft_matrix(n);
        let fh = f.adjoint();
        let rows: Vec<(f64, f64, f64)> = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let data = self.trial_data(seed, t);
                let diag = self.run_symbol(kind, data.clone(), backoff_db, seed, t)?;

                let frame = waveform::build_frame(kind, data, &self.map, &self.transforms);
                let driven = pa::apply_backoff(&frame.time_samples, backoff_db, &self.params.pa)?;
                let mut realization = self.draw_channel(seed, t)?;
                realization.noise_variance = self.noise_variance(&driven.output);
                let y = channel::apply_channel(&driven.output, &realization, &mut rng::stream(seed, t, Purpose::Noise))?;

                let q = DMatrix::from_fn(n, n, |i, j| {
                    if i != j {
                        return Complex64::new(0.0, 0.0);
                    }
                    let x = frame.time_samples[i] * driven.scale;
                    if x.norm() > 0.0 {
                        driven.output[i] / frame.time_samples[i]
                    } else {
                        Complex64::new(driven.scale, 0.0)
                    }
                });
                let circ = circulant(&realization.taps, n);
                let h_eff = &f * circ * q * &fh;
                let gram = &h_eff * h_eff.adjoint()
                    + DMatrix::<Complex64>::identity(n, n) * Complex64::new(realization.noise_variance, 0.0);
                let y_grid = &f * nalgebra::DVector::from_vec(y);
                let solved = gram.lu().solve(&y_grid).expect("regularized Gram matrix is invertible");
                let g = h_eff.adjoint() * solved;
                let full = despread(g.as_slice(), &self.map, kind)?;

                let full_err: f64 = full.iter().zip(&diag.data).map(|(a, b)| (a - b).norm_sqr()).sum();
                Ok((diag.error_energy(), full_err, diag.data_energy()))
            })
            .collect::<Result<_, ReceiverError>>()?;
        let (mut e_diag, mut e_full, mut energy) = (0.0, 0.0, 0.0);
        for (d, f, e) in rows {
            e_diag += d;
            e_full += f;
            energy += e;
        }
        Ok(ReceiverComparison {
            diagonal_evm_db: linear_to_db(e_diag / energy),
            full_matrix_evm_db: linear_to_db(e_full / energy),
        })
    }
}

/// EVM of the practical and the genie full-matrix receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverComparison {
    pub diagonal_evm_db: f64,
    pub full_matrix_evm_db: f64,
}

/// Unitary DFT matrix mapping time samples to the centered grid.
pub fn dft_matrix(n: usize) -> DMatrix<Complex64> {
    let scale = (n as f64).sqrt().recip();
    DMatrix::from_fn(n, n, |i, t| {
        let bin = waveform::centered_to_bin(i, n, n) as f64;
        Complex64::from_polar(scale, -2.0 * std::f64::consts::PI * bin * t as f64 / n as f64)
    })
}

/// Circulant matrix of the zero-padded taps: `C[k, j] = h[(k - j) mod n]`.
pub fn circulant(taps: &[Complex64], n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |k, j| {
        let l = (k + n - j) % n;
        taps.get(l).copied().unwrap_or_default()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvmReport {
    pub evm_rms: f64,
    pub evm_db: f64,
    pub trials: usize,
    pub per_trial: Vec<f64>,
    pub kind: WaveformKind,
    pub backoff_db: f64,
}

impl EvmReport {
    /// Pool `(error energy, data energy)` pairs in order.
    pub fn pool(kind: WaveformKind, backoff_db: f64, energies: &[(f64, f64)]) -> Self {
        let (mut err, mut sig) = (0.0, 0.0);
        let mut per_trial = Vec::with_capacity(energies.len());
        for &(e, s) in energies {
            err += e;
            sig += s;
            per_trial.push(linear_to_db(e / s));
        }
        let evm_rms = (err / sig).sqrt();
        Self { evm_rms, evm_db: 20.0 * evm_rms.log10(), trials: energies.len(), per_trial, kind, backoff_db }
    }
}

/// [`LinkSimulator::measure_evm`] for a scenario.
pub fn measure_evm(
    cfg: &ScenarioConfig,
    kind: WaveformKind,
    backoff_db: f64,
    trials: usize,
    seed: u64,
) -> Result<EvmReport, ReceiverError> {
    LinkSimulator::new(LinkParams::from_config(cfg))?.measure_evm(kind, backoff_db, trials, seed)
}

/// EVM at each backoff of `backoffs_db`, both waveforms sharing seeds.
pub fn evm_sweep(
    cfg: &ScenarioConfig,
    kinds: &[WaveformKind],
    backoffs_db: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<EvmReport>, ReceiverError> {
    let sim = LinkSimulator::new(LinkParams::from_config(cfg))?;
    let mut out = Vec::new();
    for &kind in kinds {
        for &b in backoffs_db {
            out.push(sim.measure_evm(kind, b, trials, seed)?);
        }
    }
    Ok(out)
}

/// Minimum EVM-compliant backoff for a scenario, with the bracket and
/// tolerance from the optimizer section and the sweep's trials and seed.
pub fn min_backoff(cfg: &ScenarioConfig, kind: WaveformKind, evm_req_db: f64) -> Result<f64, ReceiverError> {
    LinkSimulator::new(LinkParams::from_config(cfg))?.min_backoff(
        kind,
        evm_req_db,
        cfg.sweep.trials,
        cfg.sweep.seed,
        cfg.optimizer.backoff_search_max_db,
        cfg.optimizer.backoff_tolerance_db,
    )
}

/// Per-waveform minimum backoff at `evm_req_db`; explicit values in the
/// optimizer section take precedence over simulation.
pub fn backoff_table(cfg: &ScenarioConfig, evm_req_db: f64) -> Result<BackoffTable, ReceiverError> {
    let sim = LinkSimulator::new(LinkParams::from_config(cfg))?;
    let search = |kind| {
        sim.min_backoff(
            kind,
            evm_req_db,
            cfg.sweep.trials,
            cfg.sweep.seed,
            cfg.optimizer.backoff_search_max_db,
            cfg.optimizer.backoff_tolerance_db,
        )
    };
    let cp_db = match cfg.optimizer.b_min_cp_db {
        Some(b) => b,
        None => search(WaveformKind::CpOfdm)?,
    };
    let dft_db = match cfg.optimizer.b_min_dft_db {
        Some(b) => b,
        None => search(WaveformKind::DftSOfdm)?,
    };
    Ok(BackoffTable { cp_db, dft_db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_scenario;

    fn toy(channel: ChannelModel, snr_db: Option<f64>) -> LinkParams {
        LinkParams {
            fft_size: 64,
            tones: 32,
            mapping: MappingScheme::SplitLocalized,
            dc_guard: 0,
            oversample: 1,
            modulation_order: 64,
            subcarrier_spacing_hz: 15e3,
            channel,
            snr_db,
            pa: RappModel::from_profile(&default_scenario().pa),
        }
    }

    fn tdl() -> ChannelModel {
        ChannelModel::Tdl { profile: TdlProfile::tdl_c(), delay_spread_s: 300e-9 }
    }

    #[test]
    fn mmse_limits() {
        let y = [Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.3)];
        let h = [Complex64::new(0.5, -0.5), Complex64::new(2.0, 1.0)];
        for (z, (y, h)) in mmse_equalize(&y, &h, 0.0).iter().zip(y.iter().zip(&h)) {
            assert!((z - y / h).norm() < 1e-12);
        }
        let ones = [Complex64::new(1.0, 0.0); 2];
        for (z, y) in mmse_equalize(&y, &ones, 0.25).iter().zip(&y) {
            assert!((z - y / 1.25).norm() < 1e-12);
        }
        assert_eq!(mmse_equalize(&y, &[Complex64::default(); 2], 0.0), vec![Complex64::default(); 2]);
    }

    #[test]
    fn despread_checks_mapping() {
        let map = ToneMap::new(4, 16, MappingScheme::Localized, 0).unwrap();
        assert_eq!(
            despread(&[Complex64::default(); 8], &map, WaveformKind::CpOfdm).unwrap_err(),
            ReceiverError::MappingMismatch { expected: 16, got: 8 }
        );
        let values: Vec<Complex64> = (0..4).map(|k| Complex64::new(k as f64, 1.0)).collect();
        let grid = map.place(&values);
        assert_eq!(despread(&grid, &map, WaveformKind::CpOfdm).unwrap(), values);
        let spread = waveform::dft_spread(&values);
        let back = despread(&map.place(&spread), &map, WaveformKind::DftSOfdm).unwrap();
        for (a, b) in back.iter().zip(&values) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn end_to_end_identity() {
        for oversample in [1, 2] {
            let sim = LinkSimulator::new(LinkParams { oversample, ..toy(ChannelModel::Identity, None) }).unwrap();
            for kind in [WaveformKind::CpOfdm, WaveformKind::DftSOfdm] {
                let out = sim.run_symbol(kind, sim.trial_data(1, 0), 60.0, 1, 0).unwrap();
                for (a, b) in out.estimate.iter().zip(&out.data) {
                    assert!((a - b).norm() < 1e-6);
                }
                let report = sim.measure_evm(kind, 30.0, 4, 1).unwrap();
                assert!(report.evm_db < -80.0, "{}", report.evm_db);
            }
        }
    }

    #[test]
    fn phase_rotation_invariance() {
        let sim = LinkSimulator::new(toy(tdl(), None)).unwrap();
        let rot = Complex64::from_polar(1.0, std::f64::consts::PI / 7.0);
        for kind in [WaveformKind::CpOfdm, WaveformKind::DftSOfdm] {
            let data = sim.trial_data(3, 5);
            let base = sim.run_symbol(kind, data.clone(), 6.0, 3, 5).unwrap();
            let rotated = sim.run_symbol(kind, data.iter().map(|d| d * rot).collect(), 6.0, 3, 5).unwrap();
            let e0 = base.error_energy();
            let e1 = rotated.error_energy();
            assert!((e0 - e1).abs() < 1e-9 * e0.max(1e-30));
        }
    }

    #[test]
    fn pooled_evm_is_reproducible() {
        let sim = LinkSimulator::new(toy(tdl(), Some(40.0))).unwrap();
        let a = sim.measure_evm(WaveformKind::DftSOfdm, 5.0, 32, 9).unwrap();
        let b = sim.measure_evm(WaveformKind::DftSOfdm, 5.0, 32, 9).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| sim.measure_evm(WaveformKind::DftSOfdm, 5.0, 32, 9).unwrap());
        assert_eq!(a.evm_db.to_bits(), c.evm_db.to_bits());
        assert!((a.evm_db - 20.0 * a.evm_rms.log10()).abs() < 1e-12);
    }

    #[test]
    fn infeasible_requirement() {
        let sim = LinkSimulator::new(toy(tdl(), Some(45.0))).unwrap();
        match sim.min_backoff(WaveformKind::CpOfdm, -80.0, 16, 1, 20.0, 0.05) {
            Err(ReceiverError::Infeasible { requirement_db, .. }) => assert_eq!(requirement_db, -80.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn looser_requirement_needs_less_backoff() {
        let sim = LinkSimulator::new(toy(tdl(), Some(45.0))).unwrap();
        let strict = sim.min_backoff(WaveformKind::CpOfdm, -28.0, 64, 2, 20.0, 0.05).unwrap();
        let loose = sim.min_backoff(WaveformKind::CpOfdm, -20.0, 64, 2, 20.0, 0.05).unwrap();
        assert!(loose <= strict);
        let at = sim.measure_evm(WaveformKind::CpOfdm, strict, 64, 2).unwrap();
        assert!(at.evm_db <= -28.0);
    }

    #[test]
    fn full_matrix_matches_diagonal_on_linear_chain() {
        // Deep backoff: Q is a scaled identity, so both receivers coincide.
        let sim = LinkSimulator::new(toy(tdl(), Some(30.0))).unwrap();
        let cmp = sim.compare_receivers(WaveformKind::DftSOfdm, 40.0, 8, 4).unwrap();
        assert!((cmp.diagonal_evm_db - cmp.full_matrix_evm_db).abs() < 1e-3, "{cmp:?}");
    }

    #[test]
    fn oracle_rejects_large_grids() {
        let sim = LinkSimulator::new(LinkParams::from_config(&default_scenario())).unwrap();
        assert!(matches!(
            sim.compare_receivers(WaveformKind::CpOfdm, 5.0, 1, 1),
            Err(ReceiverError::OracleTooLarge { .. })
        ));
    }
}

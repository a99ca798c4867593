//! Independent oracles for the signal chain: dense matrices, Monte-Carlo
//! statistics and the EVM-vs-backoff shape.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ruee_core::channel::{self, ChannelRealization};
use ruee_core::config::default_scenario;
use ruee_core::pa::{self, RappModel};
use ruee_core::receiver::{circulant, dft_matrix, LinkParams, LinkSimulator};
use ruee_core::rng::{stream, Purpose};
use ruee_core::waveform::{self, MappingScheme, PaprSetup, Transforms, WaveformKind};
use ruee_core::Complex64;

fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| channel::complex_gaussian(&mut rng, 1.0)).collect()
}

#[test]
fn circular_convolution_matches_dense_circulant() {
    let n = 32;
    let taps = random_vec(5, 1);
    let x = random_vec(n, 2);
    let dense = circulant(&taps, n) * nalgebra::DVector::from_vec(x.clone());
    let fast = channel::circular_convolve(&x, &taps);
    let err = fast.iter().zip(dense.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn dft_diagonalizes_the_circulant() {
    for n in [16, 32, 64] {
        let taps = random_vec(7, n as u64);
        let real = ChannelRealization::from_taps(taps.clone(), n, 0.0).unwrap();
        let f = dft_matrix(n);
        let d = &f * circulant(&taps, n) * f.adjoint();
        let expected = DMatrix::from_fn(n, n, |i, j| if i == j { real.freq_response[i] } else { Complex64::default() });
        let err = (d - expected).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "n={n}: {err}");
    }
}

#[test]
fn tdl_mean_energy_is_normalized() {
    let draws = 10_000;
    let total: f64 = (0..draws)
        .map(|i| {
            let r = channel::draw_tdlc(300e-9, 30.72e6, 2048, &mut stream(11, i, Purpose::Channel)).unwrap();
            r.taps.iter().map(|h| h.norm_sqr()).sum::<f64>()
        })
        .sum();
    let mean = total / draws as f64;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}

#[test]
fn noise_variance_is_calibrated() {
    let n = 100_000;
    let mut real = ChannelRealization::identity(n);
    real.noise_variance = 0.37;
    let x = vec![Complex64::default(); n];
    let y = channel::apply_channel(&x, &real, &mut stream(4, 0, Purpose::Noise)).unwrap();
    let var = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
    assert!((var / 0.37 - 1.0).abs() < 0.01, "{var}");
}

#[test]
fn flat_mimo_gains_satisfy_trace_and_bound() {
    for i in 0..500 {
        let h = channel::draw_flat_mimo(&mut stream(5, i, Purpose::LinkBudget));
        let g = channel::channel_gains(&h).unwrap();
        let frob: f64 = h.iter().flatten().map(|v| v.norm_sqr()).sum();
        assert!((g.lambda[0] + g.lambda[1] - frob).abs() < 1e-10 * frob);
        assert!(g.lambda[0] >= g.lambda[1] && g.lambda[1] >= 0.0);
        assert!(g.lambda_eff <= g.lambda[0] * (1.0 + 1e-12));
        let m = nalgebra::Matrix2::new(h[0][0], h[0][1], h[1][0], h[1][1]);
        let eig = (m.adjoint() * m).symmetric_eigenvalues();
        let (hi, lo) = (eig[0].max(eig[1]), eig[0].min(eig[1]));
        assert!((hi - g.lambda[0]).abs() < 1e-9 && (lo - g.lambda[1]).abs() < 1e-9);
    }
}

#[test]
fn ofdm_frame_backoff_lands_on_target() {
    let cfg = default_scenario();
    let sim = LinkSimulator::new(LinkParams::from_config(&cfg)).unwrap();
    let transforms = Transforms::new(cfg.waveform.allocated_tones, cfg.waveform.fft_size);
    let model = RappModel::from_profile(&cfg.pa);
    for kind in [WaveformKind::CpOfdm, WaveformKind::DftSOfdm] {
        let frame = waveform::build_frame(kind, sim.trial_data(2, 0), sim.tone_map(), &transforms);
        for b in [1.0, 3.0, 5.0, 10.0, 30.0] {
            let out = pa::apply_backoff(&frame.time_samples, b, &model).unwrap();
            let p = out.output.iter().map(|v| v.norm_sqr()).sum::<f64>() / out.output.len() as f64;
            assert!((-10.0 * p.log10() - b).abs() < pa::BACKOFF_TOLERANCE_DB);
            assert!(out.iterations <= 30, "{kind} b={b}: {} iterations", out.iterations);
        }
    }
}

#[test]
fn bussgang_at_deep_backoff() {
    let cfg = default_scenario();
    let model = RappModel::from_profile(&cfg.pa);
    let x = random_vec(8192, 3);
    let out = pa::apply_backoff(&x, 30.0, &model).unwrap();
    let a = pa::bussgang_gain(&x, &out.output).unwrap();
    // Small-signal gain of the scaled input is the scale itself.
    assert!((a.norm() / out.scale - 1.0).abs() < 0.01);
    assert!(pa::distortion_ratio(&x, &out.output).unwrap() < 1e-4);
    for b in [3.0, 8.0] {
        let out = pa::apply_backoff(&x, b, &model).unwrap();
        let a = pa::bussgang_gain(&x, &out.output).unwrap();
        let d = pa::bussgang_distortion(&x, &out.output, a);
        let inner: Complex64 = d.iter().zip(&x).map(|(d, x)| d * x.conj()).sum();
        let norm_x = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let norm_d = d.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(inner.norm() <= 1e-9 * norm_x * norm_d);
    }
}

#[test]
fn dft_spread_has_lower_median_papr() {
    let setup = PaprSetup {
        tones: 1200,
        fft_size: 2048,
        modulation_order: 64,
        mapping: MappingScheme::SplitLocalized,
        dc_guard: 0,
        oversample: 1,
    };
    let median = |kind| ruee_core::channel::median(waveform::papr_samples(&setup, kind, 10_000, 21).unwrap());
    assert!(median(WaveformKind::DftSOfdm) < median(WaveformKind::CpOfdm));
}

#[test]
fn evm_decreases_with_backoff() {
    let cfg = default_scenario();
    let sim = LinkSimulator::new(LinkParams::from_config(&cfg)).unwrap();
    for kind in [WaveformKind::CpOfdm, WaveformKind::DftSOfdm] {
        let evm: Vec<f64> =
            [2.0, 4.0, 6.0, 8.0, 10.0].iter().map(|&b| sim.measure_evm(kind, b, 500, 1).unwrap().evm_db).collect();
        assert!(evm.windows(2).all(|w| w[1] < w[0]), "{kind}: {evm:?}");
    }
}

#[test]
fn dft_spread_dominates_across_backoffs() {
    let cfg = default_scenario();
    let sim = LinkSimulator::new(LinkParams::from_config(&cfg)).unwrap();
    for b in [3.0, 5.0, 7.0, 10.0] {
        let cp = sim.measure_evm(WaveformKind::CpOfdm, b, 500, 4).unwrap().evm_db;
        let dft = sim.measure_evm(WaveformKind::DftSOfdm, b, 500, 4).unwrap().evm_db;
        assert!(dft <= cp + 0.5, "b={b}: CP {cp}, DFT-s {dft}");
    }
}

//! Acceptance criteria. Each test writes one `PASS`/`FAIL` line straight to
//! stderr (bypassing the test harness capture) and then asserts.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ruee_core::channel::ChannelStats;
use ruee_core::config::{default_scenario, linspace, ScenarioConfig};
use ruee_core::linkbudget::{self, BackoffTable, LinkBudgetInput, ModeKind, RuModel};
use ruee_core::optimizer::{self, EeContext, FractionalProblem, Gains, IterationLimits, Strategy};
use ruee_core::pa::{self, RappModel};
use ruee_core::receiver::{self, ChannelModel, LinkParams, LinkSimulator};
use ruee_core::waveform::{self, MappingScheme, PaprSetup, WaveformKind};
use ruee_core::Complex64;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance {id:>2} {verdict} {name}: {detail}");
}

fn cfg() -> ScenarioConfig {
    default_scenario()
}

/// Minimum backoffs at the EE requirement, shared by the link-budget criteria.
fn ee_backoffs() -> BackoffTable {
    static TABLE: OnceLock<BackoffTable> = OnceLock::new();
    *TABLE.get_or_init(|| {
        let c = cfg();
        receiver::backoff_table(&c, c.optimizer.evm_requirement_db).expect("EE requirement is feasible")
    })
}

fn median_stats(c: &ScenarioConfig) -> ChannelStats {
    ChannelStats::median(c.sweep.seed, c.channel.stats_draws)
}

#[test]
fn criterion_01_evm_gap() {
    let c = cfg();
    let start = Instant::now();
    let sim = LinkSimulator::new(LinkParams::from_config(&c)).unwrap();
    let trials = c.sweep.trials.max(500);
    let cp = sim.measure_evm(WaveformKind::CpOfdm, 5.0, trials, c.sweep.seed).unwrap();
    let dft = sim.measure_evm(WaveformKind::DftSOfdm, 5.0, trials, c.sweep.seed).unwrap();
    let gap = cp.evm_db - dft.evm_db;
    let elapsed = start.elapsed().as_secs_f64();
    let pass = (1.5..=4.5).contains(&gap) && elapsed < 300.0;
    report(
        1,
        "EVM gap at 5 dB backoff",
        pass,
        format!(
            "CP {:.2} dB, DFT-s {:.2} dB, gap {gap:.2} dB in [1.5, 4.5], {trials} trials, {elapsed:.1} s",
            cp.evm_db, dft.evm_db
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_backoff_ordering() {
    let c = cfg();
    let sim = LinkSimulator::new(LinkParams::from_config(&c)).unwrap();
    let search = |kind, req| {
        sim.min_backoff(
            kind,
            req,
            c.sweep.trials,
            c.sweep.seed,
            c.optimizer.backoff_search_max_db,
            c.optimizer.backoff_tolerance_db,
        )
        .unwrap()
    };
    let requirements = [-20.0, -24.0, -28.0, -31.0];
    let cp: Vec<f64> = requirements.iter().map(|&r| search(WaveformKind::CpOfdm, r)).collect();
    let dft: Vec<f64> = requirements.iter().map(|&r| search(WaveformKind::DftSOfdm, r)).collect();
    let monotone = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
    let (cp28, dft28) = (cp[2], dft[2]);
    let pass = cp28 - dft28 >= 0.5 && monotone(&cp) && monotone(&dft);
    report(
        2,
        "backoff ordering at -28 dB",
        pass,
        format!("b_min CP {cp28:.2} dB, DFT-s {dft28:.2} dB; CP curve {cp:.2?}, DFT-s curve {dft:.2?} over {requirements:?} dB"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_crossover_shift() {
    let c = cfg();
    let table = ee_backoffs();
    let ru = RuModel::new(&c, table);
    let input = LinkBudgetInput::new(&c, &median_stats(&c));
    let grid = c.sweep.se_grid();
    let cp = linkbudget::crossover(&input, ModeKind::SimoCp, &grid, &ru);
    let dft = linkbudget::crossover(&input, ModeKind::SimoDft, &grid, &ru);
    let pass = matches!((cp, dft), (Some(a), Some(b)) if b.se > a.se);
    report(
        3,
        "crossover shift (median channel)",
        pass,
        format!(
            "s*(SIMO-CP) {:?}, s*(SIMO-DFT) {:?} bits/s/Hz; b_min CP {:.2} dB, DFT-s {:.2} dB",
            cp.map(|x| x.se),
            dft.map(|x| x.se),
            table.cp_db,
            table.dft_db
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_power_dominance() {
    let c = cfg();
    let ru = RuModel::new(&c, ee_backoffs());
    let stats = median_stats(&c);
    let ctx = EeContext::new(&c, &stats, ru.clone());
    // Mutually feasible range: every strategy can fall back to MIMO-CP.
    let se_max = ModeKind::MimoCp.rate(ru.cap_w(ModeKind::MimoCp), &ctx.link);
    let grid = linspace(c.sweep.se_min, se_max * (1.0 - 1e-9), 40);
    let rows = ctx.sweep_modes(&grid);
    let crossover = linkbudget::crossover(&ctx.link, ModeKind::SimoCp, &c.sweep.se_grid(), &ru).map(|x| x.se);
    let mut ordered = true;
    let mut strict_below = false;
    let mut all_feasible = true;
    for cell in rows.chunks(3) {
        let p = |s: Strategy| cell.iter().find(|r| r.mode == s).and_then(|r| r.p_ru_w);
        let (Some(full), Some(cp), Some(dft)) = (p(Strategy::FullMimo), p(Strategy::SwitchCp), p(Strategy::SwitchDft))
        else {
            all_feasible = false;
            continue;
        };
        let slack = 1e-12 * full;
        ordered &= dft <= cp + slack && cp <= full + slack;
        if crossover.is_some_and(|s| cell[0].se < s) && dft < cp - slack {
            strict_below = true;
        }
    }
    let pass = ordered && strict_below && all_feasible;
    report(
        4,
        "power dominance on 40-point grid",
        pass,
        format!(
            "SE [{:.2}, {se_max:.2}], ordering held: {ordered}, strict below crossover {crossover:.3?}: {strict_below}, all cells feasible: {all_feasible}",
            c.sweep.se_min
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_ee_peak() {
    let c = cfg();
    let ctx = EeContext::new(&c, &median_stats(&c), RuModel::new(&c, ee_backoffs()));
    let dft = ctx.solve_mode(Strategy::SwitchDft, None).unwrap();
    let full = ctx.solve_mode(Strategy::FullMimo, None).unwrap();
    let pass = dft.ee > full.ee && dft.se <= full.se;
    report(
        5,
        "EE peak ordering and shift",
        pass,
        format!(
            "Switch-DFT {:.4e} bit/J at {:.3} bits/s/Hz ({}), Full-MIMO {:.4e} bit/J at {:.3} bits/s/Hz",
            dft.ee, dft.se, dft.inner, full.ee, full.se
        ),
    );
    assert!(pass);
}

fn random_problem(rng: &mut ChaCha8Rng, mimo: bool) -> FractionalProblem {
    let log_uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (rng.random_range(lo.ln()..hi.ln())).exp();
    let gains = if mimo {
        let c0 = log_uniform(rng, 1e-1, 1e4);
        Gains::Mimo(c0, c0 * rng.random_range(0.01..1.0))
    } else {
        Gains::Simo(log_uniform(rng, 1e-1, 1e4))
    };
    let p_max = log_uniform(rng, 0.5, 40.0);
    FractionalProblem {
        gains,
        eta: rng.random_range(0.05..0.45),
        p_circ: rng.random_range(1.0..20.0),
        m_act: if mimo { 2 } else { 1 },
        rate_scale: rng.random_range(1e6..2e7),
        p_min: 0.0,
        p_max,
    }
}

#[test]
fn criterion_06_optimizer_oracle() {
    const GRID: usize = 1_000_000;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_p: f64 = 0.0;
    let mut worst_f: f64 = 0.0;
    let mut monotone = true;
    let mut iterations = Vec::new();
    for k in 0..100 {
        let prob = random_problem(&mut rng, k >= 50);
        let sol = optimizer::maximize_ee(&prob, IterationLimits::default()).unwrap();
        iterations.push(sol.iterations);
        monotone &= sol.trace.windows(2).all(|w| w[1].f >= w[0].f * (1.0 - 1e-12));

        let lo = prob.p_max * 1e-9;
        let ratio = (prob.p_max / lo).ln() / (GRID - 1) as f64;
        let (mut best_p, mut best_f) = (0.0, f64::MIN);
        for i in 0..GRID {
            let p = if i == GRID - 1 { prob.p_max } else { lo * (ratio * i as f64).exp() };
            let f = optimizer::objective_f(p, &prob);
            if f > best_f {
                best_f = f;
                best_p = p;
            }
        }
        worst_p = worst_p.max((sol.p_star - best_p).abs() / best_p);
        worst_f = worst_f.max((sol.f_star - best_f).abs() / best_f);
    }
    iterations.sort_unstable();
    let median_iterations = iterations[iterations.len() / 2];
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_p <= 1e-3 && worst_f <= 1e-3 && monotone && median_iterations <= 30 && elapsed < 30.0;
    report(
        6,
        "fractional program vs grid search",
        pass,
        format!(
            "worst rel. error p* {worst_p:.2e}, f* {worst_f:.2e}; traces nondecreasing: {monotone}; \
             median iterations {median_iterations}; {elapsed:.1} s"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_closed_form_inverses() {
    let c = cfg();
    let input = LinkBudgetInput::new(&c, &median_stats(&c));
    let rates = [0.25, 0.5, 1.0, 2.0, 4.0, 6.0, 8.0];
    let mut worst_mimo: f64 = 0.0;
    let mut worst_simo: f64 = 0.0;
    for &r in &rates {
        let p = linkbudget::mimo_ptx(r, &input).unwrap();
        worst_mimo = worst_mimo.max((linkbudget::mimo_se(p, &input) - r).abs() / r);
        let p = linkbudget::simo_ptx(r, &input).unwrap();
        worst_simo = worst_simo.max((linkbudget::simo_se(p, &input) - r).abs() / r);
    }
    let mut worst_sym: f64 = 0.0;
    for lambda in [0.3, 1.0, 2.7] {
        let sym = LinkBudgetInput { lambda0: lambda, lambda1: lambda, ..input };
        for &r in &rates {
            let closed = 2.0 * input.noise_power_w / (input.gain * lambda) * (2f64.powf(r / 2.0) - 1.0);
            let p = linkbudget::mimo_ptx(r, &sym).unwrap();
            worst_sym = worst_sym.max((p - closed).abs() / closed);
        }
    }
    let pass = worst_mimo <= 1e-9 && worst_simo <= 1e-9 && worst_sym <= 1e-12;
    report(
        7,
        "closed-form inverses",
        pass,
        format!("MIMO round trip {worst_mimo:.1e}, SIMO {worst_simo:.1e}, symmetric reduction {worst_sym:.1e} (relative)"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_pa_model() {
    let c = cfg();
    let model = RappModel::from_profile(&c.pa);
    let mut worst_am: f64 = 0.0;
    for a_sat in [1.0, 0.25, 3.0] {
        let m = RappModel { a_sat, ..model };
        let out = m.apply(Complex64::from_polar(a_sat, 0.3)).norm();
        worst_am = worst_am.max((out - a_sat * 2f64.powf(-1.0 / 6.0)).abs());
    }
    let sim = LinkSimulator::new(LinkParams::from_config(&c)).unwrap();
    let transforms = waveform::Transforms::new(c.waveform.allocated_tones, c.waveform.fft_size);
    let mut x = Vec::new();
    for t in 0..8 {
        let frame = waveform::build_frame(WaveformKind::CpOfdm, sim.trial_data(8, t), sim.tone_map(), &transforms);
        x.extend(frame.time_samples);
    }
    let ratios: Vec<f64> = [10.0, 20.0, 30.0]
        .iter()
        .map(|&b| {
            let driven = pa::apply_backoff(&x, b, &model).unwrap();
            pa::distortion_ratio(&x, &driven.output).unwrap()
        })
        .collect();
    let pass = worst_am <= 1e-12 && ratios[0] > ratios[1] && ratios[1] > ratios[2] && ratios[2] < 1e-4;
    report(
        8,
        "PA model",
        pass,
        format!("|g(A_sat) - A_sat 2^(-1/6)| <= {worst_am:.1e}; distortion ratio at 10/20/30 dB {:.2e} / {:.2e} / {:.2e}", ratios[0], ratios[1], ratios[2]),
    );
    assert!(pass);
}

#[test]
fn criterion_09_mmse_oracle() {
    let c = cfg();
    let start = Instant::now();
    let params = LinkParams {
        fft_size: 64,
        tones: 32,
        mapping: MappingScheme::SplitLocalized,
        dc_guard: 0,
        oversample: 1,
        modulation_order: c.waveform.modulation_order,
        subcarrier_spacing_hz: c.waveform.subcarrier_spacing_hz,
        channel: ChannelModel::Tdl {
            profile: ruee_core::channel::TdlProfile::tdl_c(),
            delay_spread_s: c.channel.delay_spread_ns * 1e-9,
        },
        snr_db: Some(c.channel.link_snr_db),
        pa: RappModel::from_profile(&c.pa),
    };
    let sim = LinkSimulator::new(params).unwrap();
    let trials = 200;
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for kind in [WaveformKind::CpOfdm, WaveformKind::DftSOfdm] {
        let b_min = sim.min_backoff(kind, c.sweep.evm_constraint_db, trials, c.sweep.seed, 20.0, 0.05).unwrap();
        for b in [b_min, b_min + 2.0, b_min + 4.0] {
            let cmp = sim.compare_receivers(kind, b, trials, c.sweep.seed).unwrap();
            let diff = (cmp.diagonal_evm_db - cmp.full_matrix_evm_db).abs();
            worst = worst.max(diff);
            lines.push(format!(
                "{} b={b:.2}: diagonal {:.2} dB, full {:.2} dB",
                kind.label(),
                cmp.diagonal_evm_db,
                cmp.full_matrix_evm_db
            ));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst < 1.0 && elapsed < 120.0;
    report(
        9,
        "diagonal vs full-matrix MMSE (N=64, M=32)",
        pass,
        format!("max |difference| {worst:.2} dB (limit 1 dB), {elapsed:.1} s; {}", lines.join("; ")),
    );
    assert!(pass);
}

#[test]
fn criterion_10_papr() {
    let c = cfg();
    let setup = PaprSetup {
        tones: c.waveform.allocated_tones,
        fft_size: c.waveform.fft_size,
        modulation_order: 4,
        mapping: MappingScheme::Localized,
        dc_guard: 0,
        oversample: 4,
    };
    let symbols = c.sweep.papr_symbols.max(100_000);
    let cp = waveform::papr_samples(&setup, WaveformKind::CpOfdm, symbols, c.sweep.seed).unwrap();
    let dft = waveform::papr_samples(&setup, WaveformKind::DftSOfdm, symbols, c.sweep.seed).unwrap();
    let cp_level = waveform::ccdf_level(&cp, 1e-3);
    let dft_level = waveform::ccdf_level(&dft, 1e-3);
    let pass = cp_level - dft_level >= 2.0;
    report(
        10,
        "PAPR CCDF at 1e-3",
        pass,
        format!("CP {cp_level:.2} dB, DFT-s {dft_level:.2} dB, margin {:.2} dB over {symbols} symbols", cp_level - dft_level),
    );
    assert!(pass);
}

use serde::Serialize;

use ruee_core::channel::ChannelStats;
use ruee_core::config::{ChannelStatsMode, ScenarioConfig};
use ruee_core::linkbudget::{self, LinkBudgetInput, ModeKind, RuModel};
use ruee_core::optimizer::{EeContext, Strategy};
use ruee_core::receiver::{self, LinkParams, LinkSimulator};
use ruee_core::waveform::{self, PaprSetup, WaveformKind};

use crate::output::Artifacts;
use crate::plot::{self, Series};
use crate::{CliError, Command};

const WAVEFORMS: [WaveformKind; 2] = [WaveformKind::CpOfdm, WaveformKind::DftSOfdm];
const CONSTELLATION_SYMBOLS: u64 = 8;

pub fn run(command: Command, cfg: &ScenarioConfig, out: &mut Artifacts, plot: bool) -> Result<(), CliError> {
    match command {
        Command::Papr => papr(cfg, out, plot),
        Command::EvmSweep => evm_sweep(cfg, out, plot),
        Command::MinBackoff => min_backoff(cfg, out),
        Command::Crossover => crossover(cfg, out, plot),
        Command::SweepSe => sweep_se(cfg, out, plot),
        Command::OptimizeEe => optimize_ee(cfg, out),
    }
}

#[derive(Serialize)]
struct PaprRow {
    waveform: &'static str,
    papr_db: f64,
    ccdf: f64,
}

fn papr(cfg: &ScenarioConfig, out: &mut Artifacts, plot: bool) -> Result<(), CliError> {
    let setup = PaprSetup {
        tones: cfg.waveform.allocated_tones,
        fft_size: cfg.waveform.fft_size,
        modulation_order: cfg.sweep.papr_modulation_order,
        mapping: cfg.sweep.papr_mapping,
        dc_guard: cfg.waveform.dc_guard_tones,
        oversample: cfg.sweep.papr_oversample,
    };
    let levels: Vec<f64> = (0..=140).map(|k| k as f64 * 0.1).collect();
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for kind in WAVEFORMS {
        let samples = waveform::papr_samples(&setup, kind, cfg.sweep.papr_symbols, cfg.sweep.seed)?;
        log::info!("{kind}: CCDF 1e-3 level {:.2} dB", waveform::ccdf_level(&samples, 1e-3));
        let ccdf = waveform::ccdf(&samples, &levels);
        let mut points = Vec::new();
        for (&papr_db, &c) in levels.iter().zip(&ccdf) {
            rows.push(PaprRow { waveform: kind.label(), papr_db, ccdf: c });
            if c > 0.0 {
                points.push((papr_db, c));
            }
        }
        series.push(Series::new(kind.label(), points));
    }
    out.write_csv("papr_ccdf.csv", &rows)?;
    if plot {
        plot::lines(&out.path("papr_ccdf.svg"), "PAPR CCDF", "PAPR (dB)", "Pr(PAPR > x)", &series, true)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvmRow {
    waveform: &'static str,
    backoff_db: f64,
    evm_db: f64,
    trials: usize,
    seed: u64,
}

#[derive(Serialize)]
struct ConstellationRow {
    waveform: &'static str,
    backoff_db: f64,
    re: f64,
    im: f64,
}

fn evm_sweep(cfg: &ScenarioConfig, out: &mut Artifacts, plot: bool) -> Result<(), CliError> {
    let sim = LinkSimulator::new(LinkParams::from_config(cfg))?;
    let (trials, seed) = (cfg.sweep.trials, cfg.sweep.seed);
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for kind in WAVEFORMS {
        let mut points = Vec::new();
        for &b in &cfg.sweep.backoffs_db {
            let report = sim.measure_evm(kind, b, trials, seed)?;
            log::info!("{kind} b={b}: {:.2} dB", report.evm_db);
            rows.push(EvmRow { waveform: kind.label(), backoff_db: b, evm_db: report.evm_db, trials, seed });
            points.push((b, report.evm_db));
        }
        series.push(Series::new(kind.label(), points));
    }
    out.write_csv("evm_sweep.csv", &rows)?;

    let b = cfg.sweep.constellation_backoff_db;
    let mut points = Vec::new();
    let mut panels = Vec::new();
    for kind in WAVEFORMS {
        let mut panel = Vec::new();
        for t in 0..CONSTELLATION_SYMBOLS {
            let symbol = sim.run_symbol(kind, sim.trial_data(seed, t), b, seed, t)?;
            for v in symbol.estimate {
                points.push(ConstellationRow { waveform: kind.label(), backoff_db: b, re: v.re, im: v.im });
                panel.push((v.re, v.im));
            }
        }
        panels.push(Series::new(kind.label(), panel));
    }
    out.write_csv("constellation.csv", &points)?;
    if plot {
        plot::lines(&out.path("evm_vs_backoff.svg"), "EVM versus PA backoff", "output backoff (dB)", "EVM (dB)", &series, false)?;
        plot::constellations(&out.path("constellation.svg"), &format!("Equalized 64QAM at {b} dB backoff"), &panels)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct MinBackoffRow {
    waveform: &'static str,
    evm_req_db: f64,
    b_min_db: f64,
    trials: usize,
    seed: u64,
}

fn min_backoff(cfg: &ScenarioConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let mut requirements = vec![cfg.sweep.evm_constraint_db, cfg.optimizer.evm_requirement_db];
    requirements.dedup();
    let mut rows = Vec::new();
    for req in requirements {
        for kind in WAVEFORMS {
            let b = receiver::min_backoff(cfg, kind, req)?;
            rows.push(MinBackoffRow {
                waveform: kind.label(),
                evm_req_db: req,
                b_min_db: b,
                trials: cfg.sweep.trials,
                seed: cfg.sweep.seed,
            });
        }
    }
    out.write_csv("min_backoff.csv", &rows)
}

fn ru_model(cfg: &ScenarioConfig) -> Result<RuModel, CliError> {
    let table = receiver::backoff_table(cfg, cfg.optimizer.evm_requirement_db)?;
    log::info!("minimum backoff: CP-OFDM {:.2} dB, DFT-s-OFDM {:.2} dB", table.cp_db, table.dft_db);
    Ok(RuModel::new(cfg, table))
}

fn channel_stats(cfg: &ScenarioConfig) -> ChannelStats {
    match cfg.channel.channel_stats {
        ChannelStatsMode::Median => ChannelStats::median(cfg.sweep.seed, cfg.channel.stats_draws),
        ChannelStatsMode::Fixed => ChannelStats::fixed(cfg.sweep.seed),
    }
}

#[derive(Serialize)]
struct CrossoverCurveRow {
    se: f64,
    p_ru_simo: Option<f64>,
    p_ru_mimo: Option<f64>,
    mode_simo: &'static str,
    channel_label: String,
}

#[derive(Serialize)]
struct CrossoverPointRow {
    mode_simo: &'static str,
    channel_label: String,
    b_min_db: f64,
    s_star: Option<f64>,
    p_star: Option<f64>,
}

fn crossover(cfg: &ScenarioConfig, out: &mut Artifacts, plot: bool) -> Result<(), CliError> {
    let ru = ru_model(cfg)?;
    let grid = cfg.sweep.se_grid();
    let mut curves = Vec::new();
    let mut points = Vec::new();
    for stats in [
        ChannelStats::median(cfg.sweep.seed, cfg.channel.stats_draws),
        ChannelStats::fixed(cfg.sweep.seed),
    ] {
        let input = LinkBudgetInput::new(cfg, &stats);
        let mut series = Vec::new();
        for simo in [ModeKind::SimoCp, ModeKind::SimoDft] {
            let curve = linkbudget::crossover_curve(&input, simo, &grid, &ru);
            let x = linkbudget::crossover(&input, simo, &grid, &ru);
            points.push(CrossoverPointRow {
                mode_simo: simo.label(),
                channel_label: stats.label.clone(),
                b_min_db: ru.backoffs.for_mode(simo),
                s_star: x.map(|x| x.se),
                p_star: x.map(|x| x.p_ru),
            });
            series.push(Series::new(simo.label(), curve.iter().filter_map(|r| Some((r.se, r.p_ru_simo?))).collect()));
            if simo == ModeKind::SimoCp {
                series.push(Series::new("MIMO-CP", curve.iter().filter_map(|r| Some((r.se, r.p_ru_mimo?))).collect()));
            }
            curves.extend(curve.into_iter().map(|r| CrossoverCurveRow {
                se: r.se,
                p_ru_simo: r.p_ru_simo,
                p_ru_mimo: r.p_ru_mimo,
                mode_simo: simo.label(),
                channel_label: stats.label.clone(),
            }));
        }
        if plot {
            let name = format!("ru_power_crossover_{}.svg", stats.label);
            let title = format!("RU power versus spectral efficiency ({} channel)", stats.label);
            plot::lines(&out.path(&name), &title, "spectral efficiency (bits/s/Hz)", "P_RU (W)", &series, false)?;
        }
    }
    out.write_csv("crossover.csv", &curves)?;
    out.write_csv("crossover_points.csv", &points)
}

#[derive(Serialize)]
struct SweepCsvRow {
    se_bits_hz: f64,
    mode: &'static str,
    inner_selection: Option<&'static str>,
    b_db: Option<f64>,
    p_tx_w: Option<f64>,
    p_ru_w: Option<f64>,
    ee_bits_per_joule: Option<f64>,
    feasible: bool,
}

#[derive(Serialize)]
struct BackoffGridRow {
    mode: &'static str,
    b_db: f64,
    ee_bits_per_joule: f64,
}

fn sweep_se(cfg: &ScenarioConfig, out: &mut Artifacts, plot: bool) -> Result<(), CliError> {
    let ctx = EeContext::new(cfg, &channel_stats(cfg), ru_model(cfg)?);
    let rows = ctx.sweep_modes(&cfg.sweep.se_grid());
    let csv_rows: Vec<SweepCsvRow> = rows
        .iter()
        .map(|r| SweepCsvRow {
            se_bits_hz: r.se,
            mode: r.mode.label(),
            inner_selection: r.inner.map(ModeKind::label),
            b_db: r.b_db,
            p_tx_w: r.p_tx_w,
            p_ru_w: r.p_ru_w,
            ee_bits_per_joule: r.ee,
            feasible: r.feasible,
        })
        .collect();
    out.write_csv("sweep_se.csv", &csv_rows)?;

    if cfg.optimizer.validate_backoff_grid {
        let mut grid_rows = Vec::new();
        for mode in ModeKind::ALL {
            for (b, ee) in ctx.backoff_grid(mode, cfg.optimizer.backoff_search_max_db, cfg.optimizer.backoff_grid_step_db)? {
                grid_rows.push(BackoffGridRow { mode: mode.label(), b_db: b, ee_bits_per_joule: ee });
            }
        }
        out.write_csv("backoff_grid.csv", &grid_rows)?;
    }

    if plot {
        let series = |f: &dyn Fn(&ruee_core::optimizer::SweepRow) -> Option<f64>| -> Vec<Series> {
            Strategy::ALL
                .iter()
                .map(|&s| {
                    Series::new(s.label(), rows.iter().filter(|r| r.mode == s).filter_map(|r| Some((r.se, f(r)?))).collect())
                })
                .collect()
        };
        let power = series(&|r| r.p_ru_w);
        let ee = series(&|r| r.ee.map(|e| e / 1e6));
        let x = "spectral efficiency (bits/s/Hz)";
        plot::lines(&out.path("ru_power_vs_se.svg"), "RU power per strategy", x, "P_RU (W)", &power, false)?;
        plot::lines(&out.path("ee_vs_se.svg"), "Energy efficiency per strategy", x, "EE (Mbit/J)", &ee, false)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EeOptimumRow {
    mode: &'static str,
    p_star: f64,
    y_star: f64,
    ee: f64,
    iterations: usize,
    inner_selection: &'static str,
    se_bits_hz: f64,
    p_ru_w: f64,
    b_db: f64,
}

#[derive(Serialize)]
struct EeTraceRow {
    mode: &'static str,
    iteration: usize,
    p: f64,
    ee_bits_per_joule: f64,
}

fn optimize_ee(cfg: &ScenarioConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let ctx = EeContext::new(cfg, &channel_stats(cfg), ru_model(cfg)?);
    let mut rows = Vec::new();
    let mut trace = Vec::new();
    for strategy in Strategy::ALL {
        let r = ctx.solve_mode(strategy, None)?;
        log::info!("{strategy}: {:.4e} bit/J at {:.3} bits/s/Hz via {}", r.ee, r.se, r.inner);
        trace.extend(r.trace.iter().map(|t| EeTraceRow {
            mode: strategy.label(),
            iteration: t.iteration,
            p: t.p,
            ee_bits_per_joule: t.f,
        }));
        rows.push(EeOptimumRow {
            mode: strategy.label(),
            p_star: r.p_star,
            y_star: r.y_star,
            ee: r.ee,
            iterations: r.iterations,
            inner_selection: r.inner.label(),
            se_bits_hz: r.se,
            p_ru_w: r.p_ru,
            b_db: r.b_db,
        });
    }
    out.write_csv("ee_optimum.csv", &rows)?;
    out.write_csv("ee_trace.csv", &trace)
}

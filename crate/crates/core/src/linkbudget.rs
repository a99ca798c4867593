//! Closed-form rate/power conversions of the 2x2 link, radio-unit power and
//! the SIMO/MIMO crossover point.

use crate::channel::ChannelStats;
use crate::config::{CircuitProfile, EfficiencyPoint, PaProfile, ScenarioConfig};
use crate::pa::{drain_efficiency, BackoffPoint};
use crate::units::{db_to_linear, linear_to_db};
use crate::waveform::WaveformKind;

const CROSSOVER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinkBudgetError {
    #[error("channel has a zero eigenvalue (lambda0 = {lambda0}, lambda1 = {lambda1}); use a SIMO mode")]
    RankDeficient { lambda0: f64, lambda1: f64 },
    #[error("effective SIMO gain is zero")]
    ZeroGain,
    #[error("spectral efficiency must be >= 0, got {0}")]
    NegativeRate(f64),
    #[error(
        "per-PA transmit power {p_tx_w:.4} W exceeds the cap {cap_w:.4} W set by the {backoff_db:.2} dB minimum backoff"
    )]
    CapExceeded { p_tx_w: f64, cap_w: f64, backoff_db: f64 },
}

/// Link quantities entering the rate/power conversions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudgetInput {
    /// Large-scale gain G (linear).
    pub gain: f64,
    /// N0·B in watts.
    pub noise_power_w: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda_eff: f64,
    pub bandwidth_hz: f64,
}

impl LinkBudgetInput {
    pub fn new(cfg: &ScenarioConfig, stats: &ChannelStats) -> Self {
        Self {
            gain: cfg.channel.large_scale_gain(),
            noise_power_w: cfg.noise_power_w(),
            lambda0: stats.lambda0,
            lambda1: stats.lambda1,
            lambda_eff: stats.lambda_eff,
            bandwidth_hz: cfg.waveform.bandwidth_hz,
        }
    }

    /// Noise-normalized gains `G λ / (N0 B)` of the two MIMO eigenmodes.
    pub fn mimo_gains(&self) -> [f64; 2] {
        [self.gain * self.lambda0 / self.noise_power_w, self.gain * self.lambda1 / self.noise_power_w]
    }

    /// Noise-normalized SIMO gain `G λ_eff / (N0 B)`.
    pub fn simo_gain(&self) -> f64 {
        self.gain * self.lambda_eff / self.noise_power_w
    }
}

/// `C = Σ_j log2(1 + SNR/2 · λ_j)` with `SNR = G p_tx / (N0 B)`, equal power over two streams.
pub fn mimo_se(p_tx: f64, input: &LinkBudgetInput) -> f64 {
    let snr = input.gain * p_tx / input.noise_power_w;
    (1.0 + snr / 2.0 * input.lambda0).log2() + (1.0 + snr / 2.0 * input.lambda1).log2()
}

/// Total transmit power reaching `c_bits` on both streams (positive root of the quadratic).
pub fn mimo_ptx(c_bits: f64, input: &LinkBudgetInput) -> Result<f64, LinkBudgetError> {
    let (l0, l1) = (input.lambda0, input.lambda1);
    if !(l0 > 0.0 && l1 > 0.0) {
        return Err(LinkBudgetError::RankDeficient { lambda0: l0, lambda1: l1 });
    }
    if c_bits < 0.0 {
        return Err(LinkBudgetError::NegativeRate(c_bits));
    }
    let half_sum = 0.5 * (l0 + l1);
    let prod = l0 * l1;
    // sqrt(a^2 + d) - a written as d / (sqrt(a^2 + d) + a) to avoid cancellation.
    let d = prod * c_bits.exp2_m1();
    let root = d / ((half_sum * half_sum + d).sqrt() + half_sum);
    Ok(2.0 * input.noise_power_w / (input.gain * prod) * root)
}

/// SIMO spectral efficiency at transmit power `p_tx`.
pub fn simo_se(p_tx: f64, input: &LinkBudgetInput) -> f64 {
    (1.0 + input.gain * p_tx * input.lambda_eff / input.noise_power_w).log2()
}

/// `(N0 B / (G λ_eff)) (2^C - 1)`.
pub fn simo_ptx(c_bits: f64, input: &LinkBudgetInput) -> Result<f64, LinkBudgetError> {
    if !(input.lambda_eff > 0.0) {
        return Err(LinkBudgetError::ZeroGain);
    }
    if c_bits < 0.0 {
        return Err(LinkBudgetError::NegativeRate(c_bits));
    }
    Ok(input.noise_power_w / (input.gain * input.lambda_eff) * c_bits.exp2_m1())
}

trait Exp2M1 {
    fn exp2_m1(self) -> f64;
}

impl Exp2M1 for f64 {
    fn exp2_m1(self) -> f64 {
        (self * std::f64::consts::LN_2).exp_m1()
    }
}

/// Transmission mode of the radio unit at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeKind {
    SimoCp,
    SimoDft,
    MimoCp,
}

impl ModeKind {
    pub const ALL: [ModeKind; 3] = [ModeKind::SimoCp, ModeKind::SimoDft, ModeKind::MimoCp];

    pub fn waveform(self) -> WaveformKind {
        match self {
            ModeKind::SimoDft => WaveformKind::DftSOfdm,
            ModeKind::SimoCp | ModeKind::MimoCp => WaveformKind::CpOfdm,
        }
    }

    pub fn active_chains(self) -> usize {
        match self {
            ModeKind::MimoCp => 2,
            _ => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModeKind::SimoCp => "SIMO-CP",
            ModeKind::SimoDft => "SIMO-DFT",
            ModeKind::MimoCp => "MIMO-CP",
        }
    }

    /// Per-PA transmit power needed for `c_bits` (MIMO splits equally over two PAs).
    pub fn required_power(self, c_bits: f64, input: &LinkBudgetInput) -> Result<f64, LinkBudgetError> {
        match self {
            ModeKind::MimoCp => Ok(mimo_ptx(c_bits, input)? / 2.0),
            _ => simo_ptx(c_bits, input),
        }
    }

    /// Spectral efficiency at per-PA power `p`.
    pub fn rate(self, p: f64, input: &LinkBudgetInput) -> f64 {
        match self {
            ModeKind::MimoCp => mimo_se(2.0 * p, input),
            _ => simo_se(p, input),
        }
    }
}

impl std::fmt::Display for ModeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Minimum EVM-compliant backoff of each waveform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackoffTable {
    pub cp_db: f64,
    pub dft_db: f64,
}

impl BackoffTable {
    pub fn for_waveform(&self, kind: WaveformKind) -> f64 {
        match kind {
            WaveformKind::CpOfdm => self.cp_db,
            WaveformKind::DftSOfdm => self.dft_db,
        }
    }

    pub fn for_mode(&self, mode: ModeKind) -> f64 {
        self.for_waveform(mode.waveform())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuPowerBreakdown {
    pub p_pa_total: f64,
    pub p_circ: f64,
    pub p_ru: f64,
    pub m_act: usize,
    pub per_pa: Vec<BackoffPoint>,
}

/// Hardware description turning per-PA transmit power into RU power.
#[derive(Debug, Clone, PartialEq)]
pub struct RuModel {
    pub backoffs: BackoffTable,
    pub circuit: CircuitProfile,
    pub pa: PaProfile,
    pub efficiency_at: EfficiencyPoint,
}

impl RuModel {
    pub fn new(cfg: &ScenarioConfig, backoffs: BackoffTable) -> Self {
        Self { backoffs, circuit: cfg.circuit.clone(), pa: cfg.pa.clone(), efficiency_at: cfg.optimizer.efficiency_at }
    }

    /// Largest per-PA transmit power allowed in `mode`.
    pub fn cap_w(&self, mode: ModeKind) -> f64 {
        self.pa.p_sat_w() * db_to_linear(-self.backoffs.for_mode(mode))
    }

    /// Drain efficiency at the mode's minimum backoff.
    pub fn mode_efficiency(&self, mode: ModeKind) -> f64 {
        drain_efficiency(self.backoffs.for_mode(mode), &self.pa)
    }

    pub fn power(&self, mode: ModeKind, p_tx_per_pa: f64) -> Result<RuPowerBreakdown, LinkBudgetError> {
        let b_min = self.backoffs.for_mode(mode);
        let cap = self.cap_w(mode);
        if p_tx_per_pa > cap * (1.0 + 1e-12) {
            return Err(LinkBudgetError::CapExceeded { p_tx_w: p_tx_per_pa, cap_w: cap, backoff_db: b_min });
        }
        let operating_db =
            if p_tx_per_pa > 0.0 { linear_to_db(self.pa.p_sat_w() / p_tx_per_pa) } else { f64::INFINITY };
        let eta = match self.efficiency_at {
            EfficiencyPoint::MinimumBackoff => drain_efficiency(b_min, &self.pa),
            EfficiencyPoint::OperatingPoint => drain_efficiency(operating_db, &self.pa),
        };
        let p_dc = if p_tx_per_pa > 0.0 { p_tx_per_pa / eta } else { 0.0 };
        let m_act = mode.active_chains();
        let point = BackoffPoint { backoff_db: operating_db, p_tx_w: p_tx_per_pa, p_dc_w: p_dc, eta };
        let p_pa_total = p_dc * m_act as f64;
        let p_circ = self.circuit.total_w(m_act);
        Ok(RuPowerBreakdown { p_pa_total, p_circ, p_ru: p_pa_total + p_circ, m_act, per_pa: vec![point; m_act] })
    }

    /// RU power to deliver `c_bits` in `mode`; errors when the cap is exceeded.
    pub fn power_for_rate(
        &self,
        mode: ModeKind,
        c_bits: f64,
        input: &LinkBudgetInput,
    ) -> Result<RuPowerBreakdown, LinkBudgetError> {
        self.power(mode, mode.required_power(c_bits, input)?)
    }
}

/// RU power of `mode` at per-PA transmit power `p_tx_per_pa`; the drain
/// efficiency is taken at the mode's minimum backoff.
pub fn ru_power(
    mode: ModeKind,
    p_tx_per_pa: f64,
    backoffs: &BackoffTable,
    circuit: &CircuitProfile,
    pa: &PaProfile,
) -> Result<RuPowerBreakdown, LinkBudgetError> {
    RuModel {
        backoffs: *backoffs,
        circuit: circuit.clone(),
        pa: pa.clone(),
        efficiency_at: EfficiencyPoint::MinimumBackoff,
    }
    .power(mode, p_tx_per_pa)
}

/// Spectral efficiency and RU power where SIMO and MIMO power are equal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossover {
    pub se: f64,
    pub p_ru: f64,
}

/// First sign change of `P_RU(simo) - P_RU(MIMO)` between consecutive grid
/// points where both modes are feasible, refined by bisection.
pub fn crossover(
    input: &LinkBudgetInput,
    simo: ModeKind,
    grid: &[f64],
    ru: &RuModel,
) -> Option<Crossover> {
    let diff = |s: f64| -> Option<f64> {
        let a = ru.power_for_rate(simo, s, input).ok()?.p_ru;
        let b = ru.power_for_rate(ModeKind::MimoCp, s, input).ok()?.p_ru;
        Some(a - b)
    };
    for w in grid.windows(2) {
        let (Some(d0), Some(d1)) = (diff(w[0]), diff(w[1])) else { continue };
        if d0 == 0.0 {
            return Some(Crossover { se: w[0], p_ru: ru.power_for_rate(simo, w[0], input).ok()?.p_ru });
        }
        if d0.signum() == d1.signum() {
            continue;
        }
        let (mut lo, mut hi) = (w[0], w[1]);
        while hi - lo > CROSSOVER_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            let dm = diff(mid)?;
            if dm.signum() == d0.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let se = 0.5 * (lo + hi);
        return Some(Crossover { se, p_ru: ru.power_for_rate(simo, se, input).ok()?.p_ru });
    }
    None
}

/// One row of the power-versus-SE curves behind the crossover figure.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverRow {
    pub se: f64,
    pub p_ru_simo: Option<f64>,
    pub p_ru_mimo: Option<f64>,
    pub mode_simo: ModeKind,
}

pub fn crossover_curve(input: &LinkBudgetInput, simo: ModeKind, grid: &[f64], ru: &RuModel) -> Vec<CrossoverRow> {
    grid.iter()
        .map(|&se| CrossoverRow {
            se,
            p_ru_simo: ru.power_for_rate(simo, se, input).ok().map(|b| b.p_ru),
            p_ru_mimo: ru.power_for_rate(ModeKind::MimoCp, se, input).ok().map(|b| b.p_ru),
            mode_simo: simo,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_scenario;

    fn unit(l0: f64, l1: f64, leff: f64) -> LinkBudgetInput {
        LinkBudgetInput { gain: 1.0, noise_power_w: 1.0, lambda0: l0, lambda1: l1, lambda_eff: leff, bandwidth_hz: 1.0 }
    }

    fn ru() -> RuModel {
        RuModel::new(&default_scenario(), BackoffTable { cp_db: 7.8, dft_db: 6.5 })
    }

    #[test]
    fn mimo_se_cases() {
        assert_eq!(mimo_se(0.0, &unit(1.0, 1.0, 1.0)), 0.0);
        assert!((mimo_se(2.0, &unit(1.0, 1.0, 1.0)) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mimo_ptx_cases() {
        let input = unit(3.0, 0.5, 2.0);
        assert_eq!(mimo_ptx(0.0, &input).unwrap(), 0.0);
        for c in [0.5, 2.0, 6.0] {
            let p = mimo_ptx(c, &input).unwrap();
            assert!((mimo_se(p, &input) - c).abs() < 1e-9 * c);
        }
        let sym = unit(1.7, 1.7, 1.7);
        let c = 3.3;
        let direct = 2.0 / 1.7 * (2f64.powf(c / 2.0) - 1.0);
        assert!((mimo_ptx(c, &sym).unwrap() - direct).abs() < 1e-12 * direct);
        assert!(matches!(mimo_ptx(1.0, &unit(1.0, 0.0, 1.0)), Err(LinkBudgetError::RankDeficient { .. })));
    }

    #[test]
    fn mimo_ptx_convex_increasing() {
        let input = unit(2.5, 0.4, 1.5);
        let p: Vec<f64> = (0..200).map(|k| mimo_ptx(k as f64 * 0.05, &input).unwrap()).collect();
        for w in p.windows(3) {
            assert!(w[1] > w[0]);
            assert!(w[2] - 2.0 * w[1] + w[0] > 0.0);
        }
    }

    #[test]
    fn simo_ptx_cases() {
        let input = unit(1.0, 1.0, 1.0);
        assert_eq!(simo_ptx(0.0, &input).unwrap(), 0.0);
        assert!((simo_ptx(1.0, &input).unwrap() - 1.0).abs() < 1e-15);
        let p1 = simo_ptx(3.0, &unit(1.0, 1.0, 1.3)).unwrap();
        let p2 = simo_ptx(3.0, &unit(1.0, 1.0, 2.6)).unwrap();
        assert!((p1 - 2.0 * p2).abs() < 1e-12);
        assert_eq!(simo_ptx(1.0, &unit(1.0, 1.0, 0.0)), Err(LinkBudgetError::ZeroGain));
    }

    #[test]
    fn circuit_floor_and_increments() {
        let cfg = default_scenario();
        let table = BackoffTable { cp_db: 7.8, dft_db: 6.5 };
        let simo = ru_power(ModeKind::SimoCp, 0.0, &table, &cfg.circuit, &cfg.pa).unwrap();
        assert!((simo.p_ru - (0.5 + 0.02 + 0.38 + 3.5 + 3.5)).abs() < 1e-12);
        let mimo = ru_power(ModeKind::MimoCp, 0.0, &table, &cfg.circuit, &cfg.pa).unwrap();
        assert!((mimo.p_circ - simo.p_circ - 7.4).abs() < 1e-12);
        assert!((mimo.p_circ - 15.3).abs() < 1e-12);
        assert_eq!(mimo.per_pa.len(), 2);
    }

    #[test]
    fn cap_is_enforced() {
        let model = ru();
        let cap = model.cap_w(ModeKind::SimoDft);
        assert!(model.power(ModeKind::SimoDft, cap).is_ok());
        assert!(matches!(model.power(ModeKind::SimoDft, cap * 1.01), Err(LinkBudgetError::CapExceeded { .. })));
    }

    #[test]
    fn ru_power_monotone() {
        let model = ru();
        for efficiency_at in [EfficiencyPoint::MinimumBackoff, EfficiencyPoint::OperatingPoint] {
            let model = RuModel { efficiency_at, ..model.clone() };
            let mut last = 0.0;
            for k in 0..=100 {
                let p = model.cap_w(ModeKind::MimoCp) * k as f64 / 100.0;
                let now = model.power(ModeKind::MimoCp, p).unwrap().p_ru;
                assert!(now >= last);
                last = now;
            }
        }
    }

    #[test]
    fn operating_point_efficiency() {
        let model = RuModel { efficiency_at: EfficiencyPoint::OperatingPoint, ..ru() };
        let p_sat = model.pa.p_sat_w();
        let p = p_sat * db_to_linear(-9.0);
        let b = model.power(ModeKind::SimoCp, p).unwrap();
        assert!((b.per_pa[0].eta - 0.45 * 10f64.powf(-9.0 / 20.0)).abs() < 1e-12);
        assert!((b.per_pa[0].backoff_db - 9.0).abs() < 1e-9);
    }

    #[test]
    fn crossover_residual_and_sides() {
        let cfg = default_scenario();
        let stats = ChannelStats::median(1, 1000);
        let input = LinkBudgetInput::new(&cfg, &stats);
        let model = ru();
        let grid = cfg.sweep.se_grid();
        for simo in [ModeKind::SimoCp, ModeKind::SimoDft] {
            let x = crossover(&input, simo, &grid, &model).expect("crossover");
            let ps = model.power_for_rate(simo, x.se, &input).unwrap().p_ru;
            let pm = model.power_for_rate(ModeKind::MimoCp, x.se, &input).unwrap().p_ru;
            assert!((ps - pm).abs() < 1e-3);
            let below = x.se - 0.1;
            assert!(
                model.power_for_rate(simo, below, &input).unwrap().p_ru
                    < model.power_for_rate(ModeKind::MimoCp, below, &input).unwrap().p_ru
            );
        }
    }

    #[test]
    fn no_crossover_when_simo_always_cheaper() {
        let cfg = default_scenario();
        let input = LinkBudgetInput::new(&cfg, &ChannelStats::median(1, 1000));
        let grid: Vec<f64> = (1..10).map(|k| k as f64 * 0.1).collect();
        assert_eq!(crossover(&input, ModeKind::SimoDft, &grid, &ru()), None);
    }
}

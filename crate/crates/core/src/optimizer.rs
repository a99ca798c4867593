//! Energy-efficiency maximization per transmission mode with the quadratic
//! transform, and selection among the Full-MIMO and switching strategies.
//!
//! Internally rates use natural logarithms; reported spectral efficiencies
//! and energy efficiencies are converted to bits once at the end.

use std::f64::consts::LN_2;

use crate::channel::ChannelStats;
use crate::config::ScenarioConfig;
use crate::linkbudget::{LinkBudgetError, LinkBudgetInput, ModeKind, RuModel};
use crate::pa::drain_efficiency;
use crate::units::db_to_linear;

const ROOT_TOLERANCE_REL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizerError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("no convergence after {iterations} iterations (last step {last_step:.3e} W)")]
    NonConvergence { iterations: usize, last_step: f64, trace: Vec<TracePoint> },
    #[error(
        "{mode}: target rate needs {p_min_w:.4} W per PA but the backoff cap allows {p_max_w:.4} W \
         (rate floor conflicts with the saturation limit)"
    )]
    ConstraintConflict { mode: Strategy, p_min_w: f64, p_max_w: f64 },
    #[error(transparent)]
    LinkBudget(#[from] LinkBudgetError),
}

/// Noise-normalized channel gains of the problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gains {
    Simo(f64),
    Mimo(f64, f64),
}

/// `max_p A(p)/B(p)`, `A = rate_scale Σ ln(1 + c_j p)`, `B = m_act p / η + P_circ`,
/// with `p` the per-PA transmit power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalProblem {
    pub gains: Gains,
    pub eta: f64,
    pub p_circ: f64,
    pub m_act: usize,
    /// Overhead factor times bandwidth.
    pub rate_scale: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl FractionalProblem {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::InvalidProblem(m.to_string()));
        let gains_ok = match self.gains {
            Gains::Simo(c) => c > 0.0,
            Gains::Mimo(c0, c1) => c0 > 0.0 && c1 > 0.0,
        };
        if !gains_ok {
            return bad("channel gains must be > 0");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        if !(self.p_circ > 0.0) {
            return bad("circuit power must be > 0");
        }
        if self.m_act == 0 {
            return bad("at least one active chain is required");
        }
        if !(self.rate_scale > 0.0) {
            return bad("rate scale must be > 0");
        }
        if !(self.p_min >= 0.0 && self.p_min <= self.p_max && self.p_max.is_finite()) {
            return bad("need 0 <= p_min <= p_max < inf");
        }
        Ok(())
    }

    /// Numerator A(p), natural-log units.
    pub fn numerator(&self, p: f64) -> f64 {
        self.rate_scale
            * match self.gains {
                Gains::Simo(c) => (c * p).ln_1p(),
                Gains::Mimo(c0, c1) => (c0 * p).ln_1p() + (c1 * p).ln_1p(),
            }
    }

    /// A'(p).
    pub fn numerator_slope(&self, p: f64) -> f64 {
        self.rate_scale
            * match self.gains {
                Gains::Simo(c) => c / (1.0 + c * p),
                Gains::Mimo(c0, c1) => c0 / (1.0 + c0 * p) + c1 / (1.0 + c1 * p),
            }
    }

    /// Denominator B(p): RU power.
    pub fn denominator(&self, p: f64) -> f64 {
        self.m_act as f64 * p / self.eta + self.p_circ
    }

    /// Left-hand side of the first-order condition, `A'(p)/sqrt(A(p))`; strictly decreasing.
    pub fn foc_lhs(&self, p: f64) -> f64 {
        let a = self.numerator(p);
        if a <= 0.0 {
            return f64::INFINITY;
        }
        self.numerator_slope(p) / a.sqrt()
    }

    /// `g(p, y) = 2 y sqrt(A(p)) - y^2 B(p)`.
    pub fn surrogate(&self, p: f64, y: f64) -> f64 {
        2.0 * y * self.numerator(p).sqrt() - y * y * self.denominator(p)
    }
}

/// `f(p) = A(p)/B(p)` in bits per joule.
pub fn objective_f(p: f64, prob: &FractionalProblem) -> f64 {
    prob.numerator(p) / prob.denominator(p) / LN_2
}

/// Closed-form auxiliary variable `sqrt(A(p))/B(p)` (natural-log units).
pub fn y_update(p: f64, prob: &FractionalProblem) -> f64 {
    prob.numerator(p).sqrt() / prob.denominator(p)
}

/// Maximizer of `g(·, y)` on `[p_min, p_max]`: root of `A'/sqrt(A) = y m_act / η`,
/// clamped to the bounds.
pub fn p_update(y: f64, prob: &FractionalProblem) -> f64 {
    let target = y * prob.m_act as f64 / prob.eta;
    let (mut lo, mut hi) = (prob.p_min, prob.p_max);
    if prob.foc_lhs(hi) >= target {
        return hi;
    }
    if prob.foc_lhs(lo) <= target {
        return lo;
    }
    let width = ROOT_TOLERANCE_REL * prob.p_max.max(f64::MIN_POSITIVE);
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if prob.foc_lhs(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub p: f64,
    /// Objective in bits per joule.
    pub f: f64,
}

/// Optimum of one fractional problem.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalSolution {
    pub p_star: f64,
    pub y_star: f64,
    /// Bits per joule.
    pub f_star: f64,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
}

/// Stopping rule and iteration cap of [`maximize_ee`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLimits {
    pub max_iterations: usize,
    pub tolerance_rel: f64,
}

impl Default for IterationLimits {
    fn default() -> Self {
        Self { max_iterations: 1000, tolerance_rel: 1e-9 }
    }
}

/// Alternate the y- and p-updates from the mid-point until the power step is
/// below `tolerance_rel * p_max`.
pub fn maximize_ee(prob: &FractionalProblem, limits: IterationLimits) -> Result<FractionalSolution, OptimizerError> {
    prob.validate()?;
    let eps = limits.tolerance_rel * prob.p_max;
    let mut p = 0.5 * (prob.p_min + prob.p_max);
    let mut trace = vec![TracePoint { iteration: 0, p, f: objective_f(p, prob) }];
    for k in 1..=limits.max_iterations {
        let y = y_update(p, prob);
        let next = p_update(y, prob);
        let step = (next - p).abs();
        p = next;
        trace.push(TracePoint { iteration: k, p, f: objective_f(p, prob) });
        if step <= eps {
            return Ok(FractionalSolution {
                p_star: p,
                y_star: y_update(p, prob),
                f_star: objective_f(p, prob),
                iterations: k,
                trace,
            });
        }
        if k == limits.max_iterations {
            return Err(OptimizerError::NonConvergence { iterations: k, last_step: step, trace });
        }
    }
    Err(OptimizerError::NonConvergence { iterations: 0, last_step: f64::NAN, trace })
}

/// Radio-unit transmission strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Always two streams with CP-OFDM.
    FullMimo,
    /// SIMO or MIMO, both with CP-OFDM.
    SwitchCp,
    /// SIMO with DFT-s-OFDM or MIMO with CP-OFDM.
    SwitchDft,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::FullMimo, Strategy::SwitchCp, Strategy::SwitchDft];

    pub fn candidates(self) -> &'static [ModeKind] {
        match self {
            Strategy::FullMimo => &[ModeKind::MimoCp],
            Strategy::SwitchCp => &[ModeKind::SimoCp, ModeKind::MimoCp],
            Strategy::SwitchDft => &[ModeKind::SimoDft, ModeKind::MimoCp],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Strategy::FullMimo => "Full-MIMO",
            Strategy::SwitchCp => "Switch-CP",
            Strategy::SwitchDft => "Switch-DFT",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Optimum of one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct EeResult {
    pub mode: Strategy,
    pub inner: ModeKind,
    pub b_db: f64,
    /// Per-PA transmit power.
    pub p_star: f64,
    pub y_star: f64,
    /// Bits per joule.
    pub ee: f64,
    /// Bits/s/Hz.
    pub se: f64,
    pub p_ru: f64,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
}

/// Inputs shared by every per-mode solve.
#[derive(Debug, Clone, PartialEq)]
pub struct EeContext {
    pub link: LinkBudgetInput,
    pub ru: RuModel,
    pub overhead_factor: f64,
    pub limits: IterationLimits,
}

impl EeContext {
    pub fn new(cfg: &ScenarioConfig, stats: &ChannelStats, ru: RuModel) -> Self {
        Self {
            link: LinkBudgetInput::new(cfg, stats),
            ru,
            overhead_factor: cfg.optimizer.overhead_factor,
            limits: IterationLimits {
                max_iterations: cfg.optimizer.max_iterations,
                tolerance_rel: cfg.optimizer.tolerance_rel,
            },
        }
    }

    fn rate_scale(&self) -> f64 {
        self.overhead_factor * self.link.bandwidth_hz
    }

    /// Fractional problem of `mode` at backoff `b_db`, with an optional rate floor.
    pub fn problem(&self, mode: ModeKind, b_db: f64, target_se: Option<f64>) -> Result<FractionalProblem, OptimizerError> {
        let gains = match mode {
            ModeKind::MimoCp => {
                let [c0, c1] = self.link.mimo_gains();
                Gains::Mimo(c0, c1)
            }
            _ => Gains::Simo(self.link.simo_gain()),
        };
        let p_max = self.ru.pa.p_sat_w() * db_to_linear(-b_db);
        let p_min = match target_se {
            Some(se) => mode.required_power(se, &self.link)?,
            None => 0.0,
        };
        Ok(FractionalProblem {
            gains,
            eta: drain_efficiency(b_db, &self.ru.pa),
            p_circ: self.ru.circuit.total_w(mode.active_chains()),
            m_act: mode.active_chains(),
            rate_scale: self.rate_scale(),
            p_min,
            p_max,
        })
    }

    fn solve_inner(
        &self,
        strategy: Strategy,
        mode: ModeKind,
        b_db: f64,
        target_se: Option<f64>,
    ) -> Result<EeResult, OptimizerError> {
        let prob = self.problem(mode, b_db, target_se)?;
        if prob.p_min > prob.p_max {
            return Err(OptimizerError::ConstraintConflict { mode: strategy, p_min_w: prob.p_min, p_max_w: prob.p_max });
        }
        let sol = maximize_ee(&prob, self.limits)?;
        let se = mode.rate(sol.p_star, &self.link);
        let p_ru = prob.denominator(sol.p_star);
        Ok(EeResult {
            mode: strategy,
            inner: mode,
            b_db,
            p_star: sol.p_star,
            y_star: sol.y_star,
            ee: self.overhead_factor * self.link.bandwidth_hz * se / p_ru,
            se,
            p_ru,
            iterations: sol.iterations,
            trace: sol.trace,
        })
    }

    /// Best EE of `strategy` with every mode at its minimum backoff.
    pub fn solve_mode(&self, strategy: Strategy, target_se: Option<f64>) -> Result<EeResult, OptimizerError> {
        let mut best: Option<EeResult> = None;
        let mut conflict = None;
        for &mode in strategy.candidates() {
            match self.solve_inner(strategy, mode, self.ru.backoffs.for_mode(mode), target_se) {
                Ok(r) => {
                    if best.as_ref().is_none_or(|b| r.ee > b.ee) {
                        best = Some(r);
                    }
                }
                Err(e @ OptimizerError::ConstraintConflict { .. }) => conflict = Some(e),
                Err(e) => return Err(e),
            }
        }
        best.ok_or_else(|| conflict.expect("a strategy has at least one candidate"))
    }

    /// EE optimum of `mode` on a backoff grid from its minimum to `max_db`.
    /// Under a decreasing efficiency law the first point should win.
    pub fn backoff_grid(&self, mode: ModeKind, max_db: f64, step_db: f64) -> Result<Vec<(f64, f64)>, OptimizerError> {
        let b0 = self.ru.backoffs.for_mode(mode);
        let steps = ((max_db - b0) / step_db).floor().max(0.0) as usize;
        (0..=steps)
            .map(|k| {
                let b = b0 + k as f64 * step_db;
                Ok((b, self.solve_inner(Strategy::FullMimo, mode, b, None)?.ee))
            })
            .collect()
    }

    /// Fixed-rate comparison: RU power and EE of each strategy on each SE target.
    pub fn sweep_modes(&self, se_grid: &[f64]) -> Vec<SweepRow> {
        let mut rows = Vec::with_capacity(se_grid.len() * Strategy::ALL.len());
        for &se in se_grid {
            for strategy in Strategy::ALL {
                let mut best: Option<SweepRow> = None;
                for &mode in strategy.candidates() {
                    let Ok(p) = mode.required_power(se, &self.link) else { continue };
                    let Ok(power) = self.ru.power(mode, p) else { continue };
                    let row = SweepRow {
                        se,
                        mode: strategy,
                        inner: Some(mode),
                        b_db: Some(self.ru.backoffs.for_mode(mode)),
                        p_tx_w: Some(p),
                        p_ru_w: Some(power.p_ru),
                        ee: Some(self.rate_scale() * se / power.p_ru),
                        feasible: true,
                    };
                    if best.as_ref().is_none_or(|b| power.p_ru < b.p_ru_w.unwrap()) {
                        best = Some(row);
                    }
                }
                rows.push(best.unwrap_or(SweepRow {
                    se,
                    mode: strategy,
                    inner: None,
                    b_db: None,
                    p_tx_w: None,
                    p_ru_w: None,
                    ee: None,
                    feasible: false,
                }));
            }
        }
        rows
    }
}

/// One (SE target, strategy) cell of the fixed-rate sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub se: f64,
    pub mode: Strategy,
    pub inner: Option<ModeKind>,
    pub b_db: Option<f64>,
    /// Per-PA transmit power.
    pub p_tx_w: Option<f64>,
    pub p_ru_w: Option<f64>,
    pub ee: Option<f64>,
    pub feasible: bool,
}

//! Python bindings: `import ruee`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ruee_core::channel::ChannelStats;
use ruee_core::config::{self, ChannelStatsMode, ScenarioConfig};
use ruee_core::linkbudget::{self, BackoffTable, LinkBudgetInput, ModeKind, RuModel};
use ruee_core::optimizer::{self, EeContext, FractionalProblem, Gains, IterationLimits, Strategy};
use ruee_core::pa::{self, RappModel};
use ruee_core::receiver::{self, LinkParams, LinkSimulator};
use ruee_core::waveform::{self, WaveformKind};
use ruee_core::Complex64;

fn py_err(e: impl Into<ruee_core::Error>) -> PyErr {
    use ruee_core::Error as E;
    let e = e.into();
    match e {
        E::Config(_) | E::Waveform(_) | E::Channel(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn waveform_kind(name: &str) -> PyResult<WaveformKind> {
    match name.to_ascii_lowercase().as_str() {
        "cp" | "cp-ofdm" => Ok(WaveformKind::CpOfdm),
        "dft" | "dft-s-ofdm" => Ok(WaveformKind::DftSOfdm),
        _ => Err(PyValueError::new_err(format!("unknown waveform {name:?}; use \"CP-OFDM\" or \"DFT-s-OFDM\""))),
    }
}

fn mode_kind(name: &str) -> PyResult<ModeKind> {
    ModeKind::ALL
        .into_iter()
        .find(|m| m.label().eq_ignore_ascii_case(name))
        .ok_or_else(|| PyValueError::new_err(format!("unknown mode {name:?}; use SIMO-CP, SIMO-DFT or MIMO-CP")))
}

fn strategy(name: &str) -> PyResult<Strategy> {
    Strategy::ALL
        .into_iter()
        .find(|s| s.label().eq_ignore_ascii_case(name))
        .ok_or_else(|| PyValueError::new_err(format!("unknown strategy {name:?}; use Full-MIMO, Switch-CP or Switch-DFT")))
}

/// Validated scenario parameter set.
#[pyclass(name = "Scenario", module = "ruee", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    cfg: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    /// Parse a TOML scenario (bundled defaults when omitted) and apply `key=value` overrides.
    #[new]
    #[pyo3(signature = (toml = None, overrides = Vec::new()))]
    fn new(toml: Option<&str>, overrides: Vec<String>) -> PyResult<Self> {
        let text = toml.unwrap_or(config::DEFAULT_SCENARIO_TOML);
        let cfg = config::parse_scenario(text, &overrides).map_err(py_err)?;
        Ok(Self { cfg })
    }

    #[staticmethod]
    fn load(path: &str, overrides: Vec<String>) -> PyResult<Self> {
        let cfg = config::load_scenario(std::path::Path::new(path), &overrides).map_err(py_err)?;
        Ok(Self { cfg })
    }

    fn to_toml(&self) -> String {
        self.cfg.to_toml()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.cfg.sweep.seed
    }

    #[getter]
    fn trials(&self) -> usize {
        self.cfg.sweep.trials
    }

    #[getter]
    fn evm_requirement_db(&self) -> f64 {
        self.cfg.optimizer.evm_requirement_db
    }

    fn se_grid(&self) -> Vec<f64> {
        self.cfg.sweep.se_grid()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(fft_size={}, tones={}, seed={}, trials={})",
            self.cfg.waveform.fft_size, self.cfg.waveform.allocated_tones, self.cfg.sweep.seed, self.cfg.sweep.trials
        )
    }
}

/// Modified Rapp power amplifier with normalized saturation amplitude.
#[pyclass(name = "RappModel", module = "ruee", from_py_object)]
#[derive(Clone)]
struct PyRappModel {
    model: RappModel,
}

#[pymethods]
impl PyRappModel {
    #[new]
    #[pyo3(signature = (smoothness, a_sat = 1.0))]
    fn new(smoothness: f64, a_sat: f64) -> Self {
        Self { model: RappModel::am_am_only(a_sat, smoothness) }
    }

    #[staticmethod]
    fn from_scenario(scenario: &PyScenario) -> Self {
        Self { model: RappModel::from_profile(&scenario.cfg.pa) }
    }

    fn am_am(&self, r: f64) -> f64 {
        self.model.am_am(r)
    }

    fn am_pm(&self, r: f64) -> f64 {
        self.model.am_pm(r)
    }

    fn amplify(&self, x: Vec<Complex64>) -> Vec<Complex64> {
        self.model.amplify(&x)
    }

    /// Scale `x` to the requested output backoff and amplify; returns `(output, achieved_db)`.
    fn apply_backoff(&self, x: Vec<Complex64>, backoff_db: f64) -> PyResult<(Vec<Complex64>, f64)> {
        let out = pa::apply_backoff(&x, backoff_db, &self.model).map_err(py_err)?;
        Ok((out.output, out.achieved_db))
    }
}

/// Monte-Carlo EVM link: waveform, PA, TDL channel, MMSE equalizer.
#[pyclass(name = "LinkSimulator", module = "ruee")]
struct PyLinkSimulator {
    sim: LinkSimulator,
    seed: u64,
    trials: usize,
}

#[pymethods]
impl PyLinkSimulator {
    #[new]
    fn new(scenario: &PyScenario) -> PyResult<Self> {
        let sim = LinkSimulator::new(LinkParams::from_config(&scenario.cfg)).map_err(py_err)?;
        Ok(Self { sim, seed: scenario.cfg.sweep.seed, trials: scenario.cfg.sweep.trials })
    }

    /// Pooled EVM in dB.
    #[pyo3(signature = (waveform, backoff_db, trials = None, seed = None))]
    fn measure_evm(&self, py: Python<'_>, waveform: &str, backoff_db: f64, trials: Option<usize>, seed: Option<u64>) -> PyResult<f64> {
        let kind = waveform_kind(waveform)?;
        let (trials, seed) = (trials.unwrap_or(self.trials), seed.unwrap_or(self.seed));
        let report = py.detach(|| self.sim.measure_evm(kind, backoff_db, trials, seed)).map_err(py_err)?;
        Ok(report.evm_db)
    }

    /// Smallest backoff in dB meeting `evm_req_db`.
    #[pyo3(signature = (waveform, evm_req_db, trials = None, seed = None, max_db = 20.0, tol_db = 0.05))]
    #[allow(clippy::too_many_arguments)]
    fn min_backoff(
        &self,
        py: Python<'_>,
        waveform: &str,
        evm_req_db: f64,
        trials: Option<usize>,
        seed: Option<u64>,
        max_db: f64,
        tol_db: f64,
    ) -> PyResult<f64> {
        let kind = waveform_kind(waveform)?;
        let (trials, seed) = (trials.unwrap_or(self.trials), seed.unwrap_or(self.seed));
        py.detach(|| self.sim.min_backoff(kind, evm_req_db, trials, seed, max_db, tol_db)).map_err(py_err)
    }
}

/// Radio-unit power and energy-efficiency model for one channel statistic.
#[pyclass(name = "EnergyModel", module = "ruee")]
struct PyEnergyModel {
    ctx: EeContext,
    grid: Vec<f64>,
}

impl PyEnergyModel {
    fn link(&self) -> &LinkBudgetInput {
        &self.ctx.link
    }
}

#[pymethods]
impl PyEnergyModel {
    /// Minimum backoffs are simulated at the scenario's EVM requirement unless both are given.
    #[new]
    #[pyo3(signature = (scenario, b_min_cp_db = None, b_min_dft_db = None, channel = None))]
    fn new(
        py: Python<'_>,
        scenario: &PyScenario,
        b_min_cp_db: Option<f64>,
        b_min_dft_db: Option<f64>,
        channel: Option<&str>,
    ) -> PyResult<Self> {
        let cfg = &scenario.cfg;
        let table = match (b_min_cp_db, b_min_dft_db) {
            (Some(cp_db), Some(dft_db)) => BackoffTable { cp_db, dft_db },
            _ => {
                let mut cfg = cfg.clone();
                cfg.optimizer.b_min_cp_db = b_min_cp_db.or(cfg.optimizer.b_min_cp_db);
                cfg.optimizer.b_min_dft_db = b_min_dft_db.or(cfg.optimizer.b_min_dft_db);
                let req = cfg.optimizer.evm_requirement_db;
                py.detach(|| receiver::backoff_table(&cfg, req)).map_err(py_err)?
            }
        };
        let mode = match channel {
            None => cfg.channel.channel_stats,
            Some("median") => ChannelStatsMode::Median,
            Some("fixed") => ChannelStatsMode::Fixed,
            Some(other) => return Err(PyValueError::new_err(format!("unknown channel statistic {other:?}"))),
        };
        let stats = match mode {
            ChannelStatsMode::Median => ChannelStats::median(cfg.sweep.seed, cfg.channel.stats_draws),
            ChannelStatsMode::Fixed => ChannelStats::fixed(cfg.sweep.seed),
        };
        Ok(Self { ctx: EeContext::new(cfg, &stats, RuModel::new(cfg, table)), grid: cfg.sweep.se_grid() })
    }

    /// `(b_min_cp_db, b_min_dft_db)`.
    #[getter]
    fn backoffs(&self) -> (f64, f64) {
        let t = self.ctx.ru.backoffs;
        (t.cp_db, t.dft_db)
    }

    /// Per-PA transmit power in W for a mode to reach `se` bits/s/Hz.
    fn required_power(&self, mode: &str, se: f64) -> PyResult<f64> {
        mode_kind(mode)?.required_power(se, self.link()).map_err(py_err)
    }

    /// Total radio-unit power in W for a mode at `se` bits/s/Hz.
    fn ru_power(&self, mode: &str, se: f64) -> PyResult<f64> {
        let mode = mode_kind(mode)?;
        Ok(self.ctx.ru.power_for_rate(mode, se, self.link()).map_err(py_err)?.p_ru)
    }

    /// `(se, p_ru)` where the SIMO mode stops drawing less power than MIMO-CP, or `None`.
    #[pyo3(signature = (simo_mode = "SIMO-DFT"))]
    fn crossover(&self, simo_mode: &str) -> PyResult<Option<(f64, f64)>> {
        let simo = mode_kind(simo_mode)?;
        Ok(linkbudget::crossover(self.link(), simo, &self.grid, &self.ctx.ru).map(|x| (x.se, x.p_ru)))
    }

    /// EE-optimal operating point of a strategy, optionally with a rate floor.
    #[pyo3(signature = (strategy_name, target_se = None))]
    fn optimize<'py>(&self, py: Python<'py>, strategy_name: &str, target_se: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
        let r = self.ctx.solve_mode(strategy(strategy_name)?, target_se).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("mode", r.mode.label())?;
        d.set_item("inner", r.inner.label())?;
        d.set_item("b_db", r.b_db)?;
        d.set_item("p_star", r.p_star)?;
        d.set_item("y_star", r.y_star)?;
        d.set_item("ee", r.ee)?;
        d.set_item("se", r.se)?;
        d.set_item("p_ru", r.p_ru)?;
        d.set_item("iterations", r.iterations)?;
        d.set_item("trace", r.trace.iter().map(|t| (t.p, t.f)).collect::<Vec<_>>())?;
        Ok(d)
    }
}

/// Peak-to-average power ratio in dB.
#[pyfunction]
fn papr(samples: Vec<Complex64>) -> PyResult<f64> {
    waveform::papr(&samples).map_err(py_err)
}

/// Gray-mapped, unit-energy square QAM.
#[pyfunction]
fn qam_modulate(bits: Vec<u8>, order: u32) -> PyResult<Vec<Complex64>> {
    waveform::qam_modulate(&bits, order).map_err(py_err)
}

/// Unitary DFT spreading.
#[pyfunction]
fn dft_spread(d: Vec<Complex64>) -> Vec<Complex64> {
    waveform::dft_spread(&d)
}

/// Quadratic-transform solution of `max A(p)/B(p)`; returns `(p_star, ee_bits_per_joule, iterations)`.
#[pyfunction]
#[pyo3(signature = (gains, eta, p_circ, rate_scale, p_max, p_min = 0.0))]
fn maximize_ee(gains: Vec<f64>, eta: f64, p_circ: f64, rate_scale: f64, p_max: f64, p_min: f64) -> PyResult<(f64, f64, usize)> {
    let (gains, m_act) = match gains.as_slice() {
        [c] => (Gains::Simo(*c), 1),
        [c0, c1] => (Gains::Mimo(*c0, *c1), 2),
        _ => return Err(PyValueError::new_err("gains must hold one (SIMO) or two (MIMO) values")),
    };
    let prob = FractionalProblem { gains, eta, p_circ, m_act, rate_scale, p_min, p_max };
    let sol = optimizer::maximize_ee(&prob, IterationLimits::default()).map_err(py_err)?;
    Ok((sol.p_star, sol.f_star, sol.iterations))
}

#[pymodule]
fn ruee(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRappModel>()?;
    m.add_class::<PyLinkSimulator>()?;
    m.add_class::<PyEnergyModel>()?;
    m.add_function(wrap_pyfunction!(papr, m)?)?;
    m.add_function(wrap_pyfunction!(qam_modulate, m)?)?;
    m.add_function(wrap_pyfunction!(dft_spread, m)?)?;
    m.add_function(wrap_pyfunction!(maximize_ee, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

//! Experiment configuration, the three comparison modes and the
//! inter-site-distance sweep.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bnb::{solve, SolverOptions, Status, TraceRow};
use crate::error::{Error, Result};
use crate::rate_model::{rate_from_sinr, sinr, LowSnrBranch, RateCurve, UtilityConfig};
use crate::scheduler::{self, SchedulerConfig};
use crate::topology::{
    build_instance, dbm_to_mw, hex7_placement, NetworkInstance, NodePlacement, Point3,
};

pub const DEFAULT_SLOT_ITERATIONS: usize = 400;

pub const DEFAULT_ISD_GRID: [f64; 9] = [2.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 60.0, 80.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Every transmitter on at full power, carrier sensing ignored.
    BaselineMaxpower,
    /// One static power-control solve with equal weights.
    PurePc,
    /// Power control rerun every slot with history weights.
    PcSched,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::BaselineMaxpower, Mode::PurePc, Mode::PcSched];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::BaselineMaxpower => "baseline-maxpower",
            Mode::PurePc => "pure-pc",
            Mode::PcSched => "pc-sched",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hex7Config {
    pub isd: f64,
    pub ap_height: f64,
    pub sta_height: f64,
    pub sta_offset: f64,
}

impl Default for Hex7Config {
    fn default() -> Self {
        Self {
            isd: 20.0,
            ap_height: 6.0,
            sta_height: 1.0,
            sta_offset: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionsConfig {
    pub transmitters: Vec<[f64; 3]>,
    pub receivers: Vec<[f64; 3]>,
}

/// Raw gain matrices; noise, caps and threshold still come from the radio block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatricesConfig {
    pub gain_rx: Vec<Vec<f64>>,
    pub gain_tx: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologyConfig {
    Hex7(Hex7Config),
    Positions(PositionsConfig),
    Matrices(MatricesConfig),
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig::Hex7(Hex7Config::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub carrier_freq_ghz: f64,
    pub noise_dbm: f64,
    pub max_power_dbm: f64,
    pub cst_dbm: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            carrier_freq_ghz: 5.21,
            noise_dbm: -94.0,
            max_power_dbm: 20.0,
            cst_dbm: -82.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateCurveConfig {
    pub saturation_mbps: f64,
    pub midpoint_db: f64,
    pub slope_per_db: f64,
    pub low_snr_branch: LowSnrBranch,
}

impl Default for RateCurveConfig {
    fn default() -> Self {
        let c = RateCurve::default();
        Self {
            saturation_mbps: c.saturation,
            midpoint_db: c.midpoint_db,
            slope_per_db: c.slope,
            low_snr_branch: c.low_branch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub rate_floor: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            alpha: 1.0,
            epsilon: o.epsilon,
            rate_floor: 1e-3,
            max_iterations: o.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerBlock {
    pub slots: usize,
    pub weight_floor: f64,
    /// Branch-and-bound budget for each slot's weighted-sum-rate solve.
    pub max_iterations_per_slot: usize,
}

impl Default for SchedulerBlock {
    fn default() -> Self {
        let s = SchedulerConfig::default();
        Self {
            slots: s.slots,
            weight_floor: s.weight_floor,
            max_iterations_per_slot: DEFAULT_SLOT_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub isd: Vec<f64>,
    pub modes: Vec<Mode>,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            isd: DEFAULT_ISD_GRID.to_vec(),
            modes: Mode::ALL.to_vec(),
            seed: 1,
        }
    }
}

/// Full experiment description. Omitted blocks take their defaults; unknown
/// keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologyConfig,
    pub radio: RadioConfig,
    pub rate_curve: RateCurveConfig,
    pub solver: SolverConfig,
    pub scheduler: SchedulerBlock,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("{field}: {why}")));
        if let TopologyConfig::Hex7(h) = &self.topology {
            if !(h.isd > 0.0) {
                return bad("topology.hex7.isd", "must be positive");
            }
            if !(h.ap_height >= 0.0) || !(h.sta_height >= 0.0) || !(h.sta_offset >= 0.0) {
                return bad(
                    "topology.hex7",
                    "heights and sta_offset must be non-negative",
                );
            }
        }
        if !(self.radio.carrier_freq_ghz > 0.0) {
            return bad("radio.carrier_freq_ghz", "must be positive");
        }
        for (field, v) in [
            ("radio.noise_dbm", self.radio.noise_dbm),
            ("radio.max_power_dbm", self.radio.max_power_dbm),
            ("radio.cst_dbm", self.radio.cst_dbm),
        ] {
            if !v.is_finite() {
                return bad(field, "must be finite");
            }
        }
        self.curve()
            .map_err(|e| Error::Config(format!("rate_curve: {e}")))?;
        if !(self.solver.alpha >= 0.0) {
            return bad("solver.alpha", "must be non-negative");
        }
        if !(self.solver.epsilon > 0.0) {
            return bad("solver.epsilon", "must be positive");
        }
        if !(self.solver.rate_floor >= 0.0) {
            return bad("solver.rate_floor", "must be non-negative");
        }
        if self.solver.max_iterations == 0 {
            return bad("solver.max_iterations", "must be at least 1");
        }
        if self.scheduler.max_iterations_per_slot == 0 {
            return bad("scheduler.max_iterations_per_slot", "must be at least 1");
        }
        if self.scheduler.slots == 0 {
            return bad("scheduler.slots", "must be at least 1");
        }
        if !(self.scheduler.weight_floor > 0.0) {
            return bad("scheduler.weight_floor", "must be positive");
        }
        if self.sweep.isd.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return bad("sweep.isd", "every inter-site distance must be positive");
        }
        Ok(())
    }

    pub fn curve(&self) -> Result<RateCurve> {
        let c = &self.rate_curve;
        RateCurve::new(
            c.saturation_mbps,
            c.midpoint_db,
            c.slope_per_db,
            c.low_snr_branch,
        )
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            epsilon: self.solver.epsilon,
            max_iterations: self.solver.max_iterations,
            trace: false,
        }
    }

    pub fn scheduler_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            alpha: self.solver.alpha,
            weight_floor: self.scheduler.weight_floor,
            rate_floor: self.solver.rate_floor,
            slots: self.scheduler.slots,
            solver: SolverOptions {
                max_iterations: self.scheduler.max_iterations_per_slot,
                ..self.solver_options()
            },
        }
    }

    /// Equal-weight utility over `n` links.
    pub fn utility(&self, n: usize) -> Result<UtilityConfig> {
        UtilityConfig::equal_weights(n, self.solver.alpha, self.solver.rate_floor)
    }

    fn build_from(&self, placement: &NodePlacement) -> Result<NetworkInstance> {
        let r = &self.radio;
        build_instance(
            placement,
            r.carrier_freq_ghz,
            r.noise_dbm,
            r.max_power_dbm,
            r.cst_dbm,
        )
    }

    /// Instance for the configured topology.
    pub fn instance(&self) -> Result<NetworkInstance> {
        match &self.topology {
            TopologyConfig::Hex7(h) => self.instance_at(h.isd),
            TopologyConfig::Positions(p) => {
                let pt = |c: &[f64; 3]| Point3::new(c[0], c[1], c[2]);
                let placement = NodePlacement::new(
                    p.transmitters.iter().map(pt).collect(),
                    p.receivers.iter().map(pt).collect(),
                )?;
                self.build_from(&placement)
            }
            TopologyConfig::Matrices(m) => {
                let n = m.gain_rx.len();
                let r = &self.radio;
                NetworkInstance::new(
                    m.gain_rx.clone(),
                    m.gain_tx.clone(),
                    vec![dbm_to_mw(r.noise_dbm); n],
                    vec![dbm_to_mw(r.max_power_dbm); n],
                    dbm_to_mw(r.cst_dbm),
                )
            }
        }
    }

    /// Hex instance at inter-site distance `isd` using the sweep seed.
    pub fn instance_at(&self, isd: f64) -> Result<NetworkInstance> {
        let TopologyConfig::Hex7(h) = &self.topology else {
            return Err(Error::Config(
                "topology: sweeps need a hex7 topology".into(),
            ));
        };
        let placement = hex7_placement(
            isd,
            h.ap_height,
            h.sta_height,
            h.sta_offset,
            self.sweep.seed,
        )?;
        self.build_from(&placement)
    }
}

/// One transmission pattern: who sends at what power and the resulting rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub rates: Vec<f64>,
    pub powers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeOutcome {
    /// Per-user rate (time-averaged for `pc-sched`).
    pub rates: Vec<f64>,
    /// Every allocation the mode used, one per slot for `pc-sched`.
    pub allocations: Vec<Allocation>,
    pub iteration_limited: bool,
}

/// All transmitters at their caps; carrier sensing is not enforced.
pub fn baseline_allocation(instance: &NetworkInstance, curve: &RateCurve) -> Allocation {
    let powers = instance.max_power().to_vec();
    let rates = (0..instance.n_pairs())
        .map(|i| rate_from_sinr(sinr(&powers, instance, i), curve))
        .collect();
    Allocation { rates, powers }
}

pub fn run_mode(
    instance: &NetworkInstance,
    curve: &RateCurve,
    config: &ExperimentConfig,
    mode: Mode,
) -> Result<ModeOutcome> {
    match mode {
        Mode::BaselineMaxpower => {
            let alloc = baseline_allocation(instance, curve);
            Ok(ModeOutcome {
                rates: alloc.rates.clone(),
                allocations: vec![alloc],
                iteration_limited: false,
            })
        }
        Mode::PurePc => {
            let utility = config.utility(instance.n_pairs())?;
            let sol = solve(instance, curve, &utility, &config.solver_options())?;
            Ok(ModeOutcome {
                rates: sol.rates.clone(),
                allocations: vec![Allocation {
                    rates: sol.rates,
                    powers: sol.powers,
                }],
                iteration_limited: sol.status == Status::IterationLimit,
            })
        }
        Mode::PcSched => {
            let run = scheduler::run(instance, curve, &config.scheduler_config())?;
            let iteration_limited = run.hit_iteration_limit();
            Ok(ModeOutcome {
                rates: run.avg_rates,
                allocations: run
                    .slots
                    .into_iter()
                    .map(|s| Allocation {
                        rates: s.rates,
                        powers: s.powers,
                    })
                    .collect(),
                iteration_limited,
            })
        }
    }
}

/// Geometric mean of `r + floor`, minus `floor`: the equivalent rate of the
/// floor-shifted log utility. Never exceeds the arithmetic mean.
pub fn geometric_mean(rates: &[f64], rate_floor: f64) -> f64 {
    let mean_log = rates.iter().map(|r| (r + rate_floor).ln()).sum::<f64>() / rates.len() as f64;
    // AM-GM holds exactly; the clamp only absorbs rounding.
    (mean_log.exp() - rate_floor).clamp(0.0, arithmetic_mean(rates))
}

pub fn arithmetic_mean(rates: &[f64]) -> f64 {
    rates.iter().sum::<f64>() / rates.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub isd: f64,
    pub mode: Mode,
    pub geo_mean: f64,
    pub arith_mean: f64,
    pub per_user_rates: Vec<f64>,
    pub iteration_limited: bool,
    pub allocations: Vec<Allocation>,
}

/// Runs every (isd, mode) cell. Rows come back sorted by isd, then mode,
/// independent of evaluation order.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let curve = config.curve()?;
    let mut isds = config.sweep.isd.clone();
    isds.sort_by(f64::total_cmp);
    isds.dedup();
    let mut modes = config.sweep.modes.clone();
    modes.sort();
    modes.dedup();

    let cells: Vec<(f64, Mode)> = isds
        .iter()
        .flat_map(|&isd| modes.iter().map(move |&m| (isd, m)))
        .collect();
    cells
        .par_iter()
        .map(|&(isd, mode)| {
            let instance = config.instance_at(isd)?;
            let outcome = run_mode(&instance, &curve, config, mode)?;
            Ok(SweepRow {
                isd,
                mode,
                geo_mean: geometric_mean(&outcome.rates, config.solver.rate_floor),
                arith_mean: arithmetic_mean(&outcome.rates),
                per_user_rates: outcome.rates,
                iteration_limited: outcome.iteration_limited,
                allocations: outcome.allocations,
            })
        })
        .collect()
}

/// Six significant digits, fixed-point.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], rate_floor: f64, mut out: W) -> Result<()> {
    writeln!(out, "# rate_floor_mbps={}", format_sig6(rate_floor))?;
    writeln!(
        out,
        "isd_m,mode,geo_mean_mbps,arith_mean_mbps,user_rates_mbps"
    )?;
    for row in rows {
        let users: Vec<String> = row.per_user_rates.iter().map(|r| format_sig6(*r)).collect();
        writeln!(
            out,
            "{},{},{},{},{}",
            format_sig6(row.isd),
            row.mode.as_str(),
            format_sig6(row.geo_mean),
            format_sig6(row.arith_mean),
            users.join(";")
        )?;
    }
    Ok(())
}

pub fn write_bnb_trace_csv<W: Write>(trace: &[TraceRow], mut out: W) -> Result<()> {
    writeln!(out, "iteration,live_boxes,u_best_eqrate,u_max_eqrate")?;
    for row in trace {
        writeln!(
            out,
            "{},{},{},{}",
            row.iteration,
            row.live_boxes,
            format_sig6(row.u_best_eqrate),
            format_sig6(row.u_max_eqrate)
        )?;
    }
    Ok(())
}

/// Saved output of `solve`, read back by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionRecord {
    pub rates_mbps: Vec<f64>,
    pub powers_mw: Vec<f64>,
    pub utility: f64,
    pub equivalent_rate_mbps: f64,
    pub status: Status,
    pub iterations: usize,
}

//! Dynamic time division: one branch-and-bound solve per slot, weighted by
//! the inverse of each user's average rate so far.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bnb::{solve, SolverOptions, Status};
use crate::error::{Error, Result};
use crate::experiment::format_sig6;
use crate::rate_model::{RateCurve, UtilityConfig};
use crate::topology::{mw_to_dbm, NetworkInstance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// Fairness exponent applied to the rate history.
    pub alpha: f64,
    /// Lower clamp (Mbit/s) on average rates inside the weights.
    pub weight_floor: f64,
    /// Utility shift passed to each per-slot solve.
    pub rate_floor: f64,
    pub slots: usize,
    pub solver: SolverOptions,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            weight_floor: 1e-3,
            rate_floor: 1e-3,
            slots: 140,
            solver: SolverOptions::default(),
        }
    }
}

/// `w_i ∝ 1 / max(R_i, floor)^alpha`, normalised to sum to one.
pub fn compute_weights(avg_rates: &[f64], alpha: f64, weight_floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = avg_rates
        .iter()
        .map(|r| r.max(weight_floor).powf(-alpha))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub weights: Vec<f64>,
    pub rates: Vec<f64>,
    pub powers: Vec<f64>,
    pub status: Status,
    pub iterations: usize,
}

impl SlotRecord {
    pub fn active_links(&self) -> Vec<usize> {
        (0..self.powers.len())
            .filter(|&i| self.powers[i] > 0.0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    /// Running mean of each user's per-slot rate, Mbit/s.
    pub avg_rates: Vec<f64>,
    /// Number of completed slots.
    pub slot: usize,
    pub alpha: f64,
    pub weight_floor: f64,
}

impl ScheduleState {
    pub fn new(n_users: usize, alpha: f64, weight_floor: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !(weight_floor > 0.0) {
            return Err(Error::Domain(format!(
                "scheduler needs alpha >= 0 and a positive weight floor (got {alpha}, {weight_floor})"
            )));
        }
        Ok(Self {
            avg_rates: vec![0.0; n_users],
            slot: 0,
            alpha,
            weight_floor,
        })
    }

    pub fn weights(&self) -> Vec<f64> {
        compute_weights(&self.avg_rates, self.alpha, self.weight_floor)
    }

    /// Solves one slot with a weighted sum-rate objective and folds the
    /// slot's rates into the running averages.
    pub fn step(
        &mut self,
        instance: &NetworkInstance,
        curve: &RateCurve,
        rate_floor: f64,
        solver: &SolverOptions,
    ) -> Result<SlotRecord> {
        let weights = self.weights();
        let utility = UtilityConfig::new(0.0, weights.clone(), rate_floor)?;
        let solution = solve(instance, curve, &utility, solver)?;
        let done = self.slot as f64;
        for (avg, r) in self.avg_rates.iter_mut().zip(&solution.rates) {
            *avg = (done * *avg + r) / (done + 1.0);
        }
        let record = SlotRecord {
            slot: self.slot,
            weights,
            rates: solution.rates,
            powers: solution.powers,
            status: solution.status,
            iterations: solution.iterations,
        };
        self.slot += 1;
        Ok(record)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRun {
    pub avg_rates: Vec<f64>,
    pub slots: Vec<SlotRecord>,
}

impl ScheduleRun {
    pub fn hit_iteration_limit(&self) -> bool {
        self.slots
            .iter()
            .any(|s| s.status == Status::IterationLimit)
    }
}

pub fn run(
    instance: &NetworkInstance,
    curve: &RateCurve,
    config: &SchedulerConfig,
) -> Result<ScheduleRun> {
    if config.slots == 0 {
        return Err(Error::Domain("scheduler needs at least one slot".into()));
    }
    let mut state = ScheduleState::new(instance.n_pairs(), config.alpha, config.weight_floor)?;
    let slots = (0..config.slots)
        .map(|_| state.step(instance, curve, config.rate_floor, &config.solver))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScheduleRun {
        avg_rates: state.avg_rates,
        slots,
    })
}

/// Per-slot trace: one row per (slot, user).
pub fn write_trace_csv<W: Write>(run: &ScheduleRun, mut out: W) -> Result<()> {
    writeln!(out, "slot,user,rate_mbps,power_dbm_or_off,weight")?;
    for record in &run.slots {
        for user in 0..record.rates.len() {
            let power = if record.powers[user] > 0.0 {
                format_sig6(mw_to_dbm(record.powers[user]))
            } else {
                "off".to_string()
            };
            writeln!(
                out,
                "{},{},{},{},{}",
                record.slot,
                user,
                format_sig6(record.rates[user]),
                power,
                format_sig6(record.weights[user])
            )?;
        }
    }
    Ok(())
}

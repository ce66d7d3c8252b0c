//! Branch and bound over per-link rate vectors.
//!
//! The search space is the box `[0, utopia]` in rate space. Feasibility of a
//! rate vector is decided by [`solve_powers`]; because the feasible set is
//! downward closed, a bisection along a box diagonal locates a point `h` on
//! the infeasible side of the frontier and everything above `h` can be
//! excluded from the box's upper bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::{solve_powers, verify, PowerSolution, SinrCheck, VerifyOptions};
use crate::rate_model::{rate_from_sinr, sinr, RateCurve, UtilityConfig};
use crate::topology::NetworkInstance;

/// Boxes with every side below this (Mbit/s) are never branched.
pub const MIN_SIDE: f64 = 1e-6;
const MAX_BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Target accuracy in equivalent-rate units (Mbit/s).
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Record one trace row per iteration.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            max_iterations: 100_000,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    IterationLimit,
}

/// Axis-aligned box `[lower, upper]` in rate space with an upper bound on
/// the utility of any feasible point inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct RateBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub u_max: f64,
    pub id: u64,
}

impl RateBox {
    pub fn contains(&self, rates: &[f64]) -> bool {
        rates
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(r, (lo, hi))| lo <= r && r <= hi)
    }

    fn longest_side(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            let side = hi - lo;
            if side > best.1 {
                best = (k, side);
            }
        }
        best
    }

    fn is_tiny(&self) -> bool {
        self.longest_side().1 < MIN_SIDE
    }
}

/// Heap entry: highest bound first, oldest box among equals.
struct Ranked(RateBox);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .u_max
            .total_cmp(&other.0.u_max)
            .then_with(|| other.0.id.cmp(&self.0.id))
    }
}

/// Best feasible allocation found so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub rates: Vec<f64>,
    pub powers: Vec<f64>,
    pub utility: f64,
}

impl Incumbent {
    fn offer(&mut self, rates: &[f64], solution: &PowerSolution, utility: f64) -> bool {
        if utility > self.utility {
            self.rates = rates.to_vec();
            self.powers = solution.powers.clone();
            self.utility = utility;
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub live_boxes: usize,
    pub u_best_eqrate: f64,
    pub u_max_eqrate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub rates: Vec<f64>,
    pub powers: Vec<f64>,
    pub utility: f64,
    /// Upper bound on the optimal utility when the search stopped.
    pub upper_bound: f64,
    pub status: Status,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

/// Per-link rates with interference removed and every transmitter at its cap.
pub fn utopia_point(instance: &NetworkInstance, curve: &RateCurve) -> Vec<f64> {
    (0..instance.n_pairs())
        .map(|i| {
            rate_from_sinr(
                instance.gain_rx(i, i) * instance.max_power()[i] / instance.noise()[i],
                curve,
            )
        })
        .collect()
}

/// Halves `parent` across its longest side (lowest index on ties).
pub fn branch(parent: &RateBox, next_id: &mut u64) -> Result<(RateBox, RateBox)> {
    let (k, side) = parent.longest_side();
    if !(side > 0.0) {
        return Err(Error::DegenerateBox);
    }
    let mid = 0.5 * (parent.lower[k] + parent.upper[k]);
    let mut left = parent.clone();
    let mut right = parent.clone();
    left.upper[k] = mid;
    right.lower[k] = mid;
    left.id = *next_id;
    right.id = *next_id + 1;
    *next_id += 2;
    Ok((left, right))
}

/// Tightens the corners of a box using the incumbent utility (lower corner)
/// and the box's own bound (upper corner). Returns `None` when the box is
/// proven to hold nothing better than `u_best`.
pub fn reduce(mut rbox: RateBox, u_best: f64, utility: &UtilityConfig) -> Option<RateBox> {
    let n = rbox.lower.len();
    let weights = utility.weights();
    let term = |r: f64, k: usize| {
        if weights[k] > 0.0 {
            weights[k] * utility.utility(r)
        } else {
            0.0
        }
    };

    if u_best > f64::NEG_INFINITY {
        let at_upper: Vec<f64> = (0..n).map(|k| term(rbox.upper[k], k)).collect();
        let total: f64 = at_upper.iter().sum();
        for k in 0..n {
            if weights[k] == 0.0 {
                continue;
            }
            let rest = total - at_upper[k];
            let r = if rest == f64::NEG_INFINITY {
                // every point of the box carries -inf utility
                f64::INFINITY
            } else {
                utility.inverse_clamped((u_best - rest) / weights[k])
            };
            if r > rbox.lower[k] {
                rbox.lower[k] = r;
            }
        }
    }

    if rbox.lower.iter().zip(&rbox.upper).any(|(lo, hi)| lo > hi) {
        return None;
    }

    if rbox.u_max.is_finite() {
        let at_lower: Vec<f64> = (0..n).map(|k| term(rbox.lower[k], k)).collect();
        let total: f64 = at_lower.iter().sum();
        for k in 0..n {
            if weights[k] == 0.0 {
                continue;
            }
            let rest = total - at_lower[k];
            if rest == f64::NEG_INFINITY {
                continue;
            }
            let target = (rbox.u_max - rest) / weights[k];
            let floor = utility.min_utility();
            if target < floor - 1e-12 * floor.abs().max(1.0) {
                return None;
            }
            let r = utility.inverse_clamped(target);
            if r < rbox.upper[k] {
                rbox.upper[k] = r;
            }
        }
    }

    if rbox.lower.iter().zip(&rbox.upper).any(|(lo, hi)| lo > hi) {
        None
    } else {
        Some(rbox)
    }
}

/// Shared read-only inputs of one solver run.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub instance: &'a NetworkInstance,
    pub curve: &'a RateCurve,
    pub utility: &'a UtilityConfig,
}

impl Problem<'_> {
    fn powers_for(&self, rates: &[f64]) -> PowerSolution {
        solve_powers(rates, self.instance, self.curve)
            .expect("rate vectors inside a box are valid targets")
    }

    fn eqrate(&self, u: f64) -> f64 {
        self.utility.equivalent_rate(u)
    }
}

/// Pulls each upper coordinate down to the feasibility frontier seen from
/// the lower corner: a feasible point of the box dominates `lower`, so its
/// `k`-th rate cannot exceed the largest feasible `r_k` with every other
/// coordinate at `lower`. Returns `None` if `lower` itself is infeasible.
pub fn shrink_to_frontier(mut rbox: RateBox, problem: &Problem<'_>, tol: f64) -> Option<RateBox> {
    if !problem.powers_for(&rbox.lower).is_feasible() {
        return None;
    }
    let mut probe = rbox.lower.clone();
    for k in 0..probe.len() {
        let (mut lo, mut hi) = (rbox.lower[k], rbox.upper[k]);
        if hi <= lo {
            continue;
        }
        probe[k] = hi;
        if problem.powers_for(&probe).is_feasible() {
            probe[k] = rbox.lower[k];
            continue;
        }
        // Relative resolution keeps the bisection short on wide boxes; later
        // splits refine the frontier where it matters.
        let resolution = tol.max((hi - lo) / 16.0);
        while hi - lo > resolution {
            let mid = 0.5 * (lo + hi);
            probe[k] = mid;
            if problem.powers_for(&probe).is_feasible() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        rbox.upper[k] = hi;
        probe[k] = rbox.lower[k];
    }
    Some(rbox)
}

/// Tightens `rbox.u_max` by locating the feasibility frontier on the box
/// diagonal, updating `incumbent` with any better feasible point met on the
/// way. Returns `None` when the box contains no feasible point.
pub fn bound(
    mut rbox: RateBox,
    problem: &Problem<'_>,
    epsilon: f64,
    incumbent: &mut Incumbent,
) -> Option<RateBox> {
    let utility = problem.utility;

    let at_upper = problem.powers_for(&rbox.upper);
    if at_upper.is_feasible() {
        let u = utility.system_utility(&rbox.upper);
        rbox.u_max = u;
        incumbent.offer(&rbox.upper, &at_upper, u);
        return Some(rbox);
    }

    // Downward closure: an infeasible lower corner empties the whole box.
    let at_lower = problem.powers_for(&rbox.lower);
    if !at_lower.is_feasible() {
        return None;
    }

    if rbox.is_tiny() {
        let u = utility.system_utility(&rbox.lower);
        incumbent.offer(&rbox.lower, &at_lower, u);
        rbox.u_max = rbox.u_max.min(utility.system_utility(&rbox.upper));
        return Some(rbox);
    }

    let mut low = rbox.lower.clone();
    let mut low_solution = at_lower;
    let mut high = rbox.upper.clone();
    let mut mid = vec![0.0; low.len()];
    for _ in 0..MAX_BISECTION_STEPS {
        let gap = problem.eqrate(utility.system_utility(&high))
            - problem.eqrate(utility.system_utility(&low));
        if gap < epsilon {
            break;
        }
        for k in 0..mid.len() {
            mid[k] = 0.5 * (low[k] + high[k]);
        }
        let at_mid = problem.powers_for(&mid);
        if at_mid.is_feasible() {
            low.copy_from_slice(&mid);
            low_solution = at_mid;
        } else {
            high.copy_from_slice(&mid);
        }
    }

    // [high, upper] is infeasible, so every feasible point has some r_k < high_k.
    let mut corner = rbox.upper.clone();
    let mut u_star = f64::NEG_INFINITY;
    for k in 0..corner.len() {
        corner[k] = high[k];
        u_star = u_star.max(utility.system_utility(&corner));
        corner[k] = rbox.upper[k];
    }
    if u_star < rbox.u_max {
        rbox.u_max = u_star;
    }

    let u_low = utility.system_utility(&low);
    incumbent.offer(&low, &low_solution, u_low);
    Some(rbox)
}

/// Branch-and-bound state. Drive it with [`Solver::step`] or [`Solver::run`].
pub struct Solver<'a> {
    problem: Problem<'a>,
    options: SolverOptions,
    boxes: BinaryHeap<Ranked>,
    incumbent: Incumbent,
    next_id: u64,
    iterations: usize,
    status: Option<Status>,
    trace: Vec<TraceRow>,
}

impl<'a> Solver<'a> {
    /// Builds the initial state. Stops immediately when the utopia point is feasible.
    pub fn new(problem: Problem<'a>, options: SolverOptions) -> Result<Self> {
        let n = problem.instance.n_pairs();
        if problem.utility.len() != n {
            return Err(Error::Domain(format!(
                "utility has {} weights but the instance has {n} links",
                problem.utility.len()
            )));
        }
        if !(options.epsilon > 0.0) {
            return Err(Error::Domain(format!(
                "epsilon must be positive, got {}",
                options.epsilon
            )));
        }

        let utopia = utopia_point(problem.instance, problem.curve);
        let at_utopia = problem.powers_for(&utopia);
        let u_utopia = problem.utility.system_utility(&utopia);
        let mut solver = Self {
            problem,
            options,
            boxes: BinaryHeap::new(),
            incumbent: Incumbent {
                rates: vec![0.0; n],
                powers: vec![0.0; n],
                utility: problem.utility.system_utility(&vec![0.0; n]),
            },
            next_id: 0,
            iterations: 0,
            status: None,
            trace: Vec::new(),
        };
        if at_utopia.is_feasible() {
            solver.incumbent = Incumbent {
                rates: utopia,
                powers: at_utopia.powers,
                utility: u_utopia,
            };
            solver.status = Some(Status::Optimal);
        } else {
            solver.push(RateBox {
                lower: vec![0.0; n],
                upper: utopia,
                u_max: u_utopia,
                id: 0,
            });
        }
        Ok(solver)
    }

    fn push(&mut self, rbox: RateBox) {
        self.next_id = self.next_id.max(rbox.id + 1);
        self.boxes.push(Ranked(rbox));
    }

    pub fn incumbent(&self) -> &Incumbent {
        &self.incumbent
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn status(&self) -> Option<Status> {
        self.status
    }

    pub fn live_boxes(&self) -> impl Iterator<Item = &RateBox> {
        self.boxes.iter().map(|r| &r.0)
    }

    /// Largest box bound, or the incumbent utility once no box is left.
    pub fn upper_bound(&self) -> f64 {
        self.boxes.peek().map_or(self.incumbent.utility, |r| {
            r.0.u_max.max(self.incumbent.utility)
        })
    }

    /// One iteration: select, test termination, branch, reduce, bound.
    /// Returns the final status once the search has stopped.
    pub fn step(&mut self) -> Option<Status> {
        if self.status.is_some() {
            return self.status;
        }
        let eps = self.options.epsilon;
        let best_eq = self.problem.eqrate(self.incumbent.utility);

        let Some(top) = self.boxes.peek() else {
            self.status = Some(Status::Optimal);
            return self.status;
        };
        let top_eq = self.problem.eqrate(top.0.u_max);
        if self.options.trace {
            self.trace.push(TraceRow {
                iteration: self.iterations,
                live_boxes: self.boxes.len(),
                u_best_eqrate: best_eq,
                u_max_eqrate: top_eq.max(best_eq),
            });
        }
        if top_eq < best_eq + eps {
            self.status = Some(Status::Optimal);
            return self.status;
        }
        if self.iterations >= self.options.max_iterations {
            self.status = Some(Status::IterationLimit);
            return self.status;
        }
        self.iterations += 1;

        let selected = self.boxes.pop().expect("peeked above").0;
        if selected.is_tiny() {
            // nothing left to resolve at this scale
            return None;
        }
        let (left, right) = branch(&selected, &mut self.next_id).expect("box has a positive side");
        for child in [left, right] {
            let Some(child) = reduce(child, self.incumbent.utility, self.problem.utility) else {
                continue;
            };
            let Some(child) = shrink_to_frontier(child, &self.problem, eps / 8.0) else {
                continue;
            };
            let Some(child) = bound(child, &self.problem, eps, &mut self.incumbent) else {
                continue;
            };
            if child.u_max > self.incumbent.utility {
                self.boxes.push(Ranked(child));
            }
        }
        None
    }

    pub fn run(mut self) -> Solution {
        let status = loop {
            if let Some(status) = self.step() {
                break status;
            }
        };
        let upper_bound = self.upper_bound();
        let Incumbent {
            rates,
            powers,
            utility,
        } = self.incumbent;
        let (rates, powers, utility) = polish(&self.problem, rates, powers, utility);
        Solution {
            rates,
            powers,
            utility,
            upper_bound: upper_bound.max(utility),
            status,
            iterations: self.iterations,
            trace: self.trace,
        }
    }
}

/// Scales the incumbent's powers up by the largest common factor the caps
/// and the carrier-sense threshold allow. Every SINR grows with the factor,
/// so no link loses rate; the achieved rates are reported.
fn polish(
    problem: &Problem<'_>,
    rates: Vec<f64>,
    powers: Vec<f64>,
    utility: f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let instance = problem.instance;
    let active: Vec<usize> = (0..powers.len()).filter(|&i| powers[i] > 0.0).collect();
    let mut factor = f64::INFINITY;
    let mut binding = None;
    for &i in &active {
        let cap = instance.max_power()[i] / powers[i];
        if cap < factor {
            factor = cap;
            binding = Some((i, true));
        }
        let sensed = instance.sensed_power(&powers, i);
        if sensed > 0.0 && instance.cst() / sensed < factor {
            factor = instance.cst() / sensed;
            binding = Some((i, false));
        }
    }
    if !(factor > 1.0) || !factor.is_finite() {
        return (rates, powers, utility);
    }

    let mut scaled: Vec<f64> = powers
        .iter()
        .zip(instance.max_power())
        .map(|(x, cap)| (x * factor).min(*cap))
        .collect();
    if let Some((i, true)) = binding {
        scaled[i] = instance.max_power()[i];
    }
    let achieved: Vec<f64> = (0..scaled.len())
        .map(|i| {
            if scaled[i] > 0.0 {
                rate_from_sinr(sinr(&scaled, instance, i), problem.curve)
            } else {
                0.0
            }
        })
        .collect();
    let new_utility = problem.utility.system_utility(&achieved);
    let check = VerifyOptions {
        tol: 1e-10,
        sinr: SinrCheck::Equal,
        check_cst: true,
    };
    let consistent = active
        .iter()
        .all(|&i| achieved[i] > 0.0 && achieved[i] < problem.curve.saturation)
        && verify(&scaled, &achieved, instance, problem.curve, &check).is_ok();
    if consistent && new_utility >= utility {
        (achieved, scaled, new_utility)
    } else {
        (rates, powers, utility)
    }
}

/// Runs branch and bound to `options.epsilon` accuracy.
pub fn solve(
    instance: &NetworkInstance,
    curve: &RateCurve,
    utility: &UtilityConfig,
    options: &SolverOptions,
) -> Result<Solution> {
    let problem = Problem {
        instance,
        curve,
        utility,
    };
    Ok(Solver::new(problem, *options)?.run())
}

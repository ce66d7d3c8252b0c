//! Target-rate feasibility: the minimal power vector meeting a set of SINR
//! targets, checked against power caps and the carrier-sense threshold.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate_model::{sinr, sinr_from_rate, RateCurve};
use crate::topology::NetworkInstance;

/// Condition-number estimate above which the SINR system counts as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Smallest power (mW) accepted for a link with a positive target.
pub const MIN_ACTIVE_POWER: f64 = 1e-12;
/// Relative slack on the cap and threshold checks, absorbing round-off of
/// the rate/SINR round trip.
pub const CONSTRAINT_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibleReason {
    Singular,
    NegativePower,
    PowerCap,
    Cst,
    UnattainableRate,
}

impl fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Singular => "singular",
            Self::NegativePower => "negative_power",
            Self::PowerCap => "power_cap",
            Self::Cst => "cst",
            Self::UnattainableRate => "unattainable_rate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Feasible,
    Infeasible(InfeasibleReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    /// Transmit powers in mW; zero outside the active set. Meaningful only
    /// when the verdict is feasible.
    pub powers: Vec<f64>,
    pub active_set: Vec<usize>,
    pub verdict: Verdict,
}

impl PowerSolution {
    pub fn is_feasible(&self) -> bool {
        self.verdict == Verdict::Feasible
    }

    fn infeasible(n: usize, active_set: Vec<usize>, reason: InfeasibleReason) -> Self {
        Self {
            powers: vec![0.0; n],
            active_set,
            verdict: Verdict::Infeasible(reason),
        }
    }
}

/// Finds the componentwise-minimal power vector realizing `target_rates`.
///
/// Links with a zero target are switched off and take no part in either the
/// SINR system or the carrier-sense constraints.
pub fn solve_powers(
    target_rates: &[f64],
    instance: &NetworkInstance,
    curve: &RateCurve,
) -> Result<PowerSolution> {
    let n = instance.n_pairs();
    if target_rates.len() != n {
        return Err(Error::Domain(format!(
            "expected {n} target rates, got {}",
            target_rates.len()
        )));
    }
    if let Some(bad) = target_rates.iter().find(|r| !(**r >= 0.0)) {
        return Err(Error::Domain(format!(
            "target rates must be non-negative, got {bad}"
        )));
    }

    let active: Vec<usize> = (0..n).filter(|&i| target_rates[i] > 0.0).collect();
    if active.is_empty() {
        return Ok(PowerSolution {
            powers: vec![0.0; n],
            active_set: active,
            verdict: Verdict::Feasible,
        });
    }

    let mut gamma = Vec::with_capacity(active.len());
    for &i in &active {
        match sinr_from_rate(target_rates[i], curve) {
            Ok(g) => gamma.push(g),
            Err(Error::UnattainableRate { .. }) => {
                return Ok(PowerSolution::infeasible(
                    n,
                    active,
                    InfeasibleReason::UnattainableRate,
                ))
            }
            Err(e) => return Err(e),
        }
    }

    // Noise alone already forces x_i >= gamma_i n_i / a_ii.
    let floor: Vec<f64> = active
        .iter()
        .zip(&gamma)
        .map(|(&i, g)| g * instance.noise()[i] / instance.gain_rx(i, i))
        .collect();
    if active
        .iter()
        .zip(&floor)
        .any(|(&i, x)| *x > instance.max_power()[i] * (1.0 + CONSTRAINT_RTOL))
    {
        return Ok(PowerSolution::infeasible(
            n,
            active,
            InfeasibleReason::PowerCap,
        ));
    }
    let threshold = instance.cst() * (1.0 + CONSTRAINT_RTOL);
    let sensed_floor = |i: usize| -> f64 {
        active
            .iter()
            .zip(&floor)
            .map(|(&j, x)| instance.gain_tx(i, j) * x)
            .sum()
    };
    if active.iter().any(|&i| sensed_floor(i) > threshold) {
        return Ok(PowerSolution::infeasible(n, active, InfeasibleReason::Cst));
    }

    // Row a: x_i - gamma_i/a_ii * sum_{j != i} a_ij x_j = gamma_i n_i / a_ii
    let m = active.len();
    let mut matrix = DMatrix::<f64>::identity(m, m);
    for (a, &i) in active.iter().enumerate() {
        let direct = instance.gain_rx(i, i);
        for (b, &j) in active.iter().enumerate() {
            if a != b {
                matrix[(a, b)] = -gamma[a] * instance.gain_rx(i, j) / direct;
            }
        }
    }
    let rhs = DVector::from_vec(floor);

    let solved = match solve_checked(matrix, rhs) {
        Ok(x) => x,
        Err(reason) => return Ok(PowerSolution::infeasible(n, active, reason)),
    };

    let mut powers = vec![0.0; n];
    for (a, &i) in active.iter().enumerate() {
        let x = solved[a];
        let cap = instance.max_power()[i];
        if x > cap * (1.0 + CONSTRAINT_RTOL) {
            return Ok(PowerSolution::infeasible(
                n,
                active,
                InfeasibleReason::PowerCap,
            ));
        }
        powers[i] = x.min(cap);
    }

    if active
        .iter()
        .any(|&i| instance.sensed_power(&powers, i) > threshold)
    {
        return Ok(PowerSolution::infeasible(n, active, InfeasibleReason::Cst));
    }

    Ok(PowerSolution {
        powers,
        active_set: active,
        verdict: Verdict::Feasible,
    })
}

/// Convenience wrapper: `true` iff `target_rates` is achievable.
pub fn is_feasible(target_rates: &[f64], instance: &NetworkInstance, curve: &RateCurve) -> bool {
    solve_powers(target_rates, instance, curve)
        .map(|s| s.is_feasible())
        .unwrap_or(false)
}

/// Solves `(I - G) x = rhs` for non-negative `G` and positive `rhs`.
///
/// A positive solution exists iff the spectral radius of `G` is below one,
/// in which case `(I - G)^-1` is non-negative and its infinity norm is the
/// largest entry of `(I - G)^-1 * 1`. That gives the condition number
/// without forming the inverse.
fn solve_checked(
    matrix: DMatrix<f64>,
    rhs: DVector<f64>,
) -> std::result::Result<DVector<f64>, InfeasibleReason> {
    let norm = infinity_norm(&matrix);
    let m = matrix.nrows();
    let lu = matrix.lu();
    let x = lu.solve(&rhs).ok_or(InfeasibleReason::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(InfeasibleReason::Singular);
    }
    if x.iter().any(|v| !(*v >= MIN_ACTIVE_POWER)) {
        return Err(InfeasibleReason::NegativePower);
    }
    let row_sums = lu
        .solve(&DVector::from_element(m, 1.0))
        .ok_or(InfeasibleReason::Singular)?;
    let inverse_norm = row_sums.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !(norm * inverse_norm <= MAX_CONDITION) {
        return Err(InfeasibleReason::Singular);
    }
    Ok(x)
}

fn infinity_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// How achieved SINRs are compared with the targets in [`verify`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SinrCheck {
    /// Achieved SINR equals the target within the tolerance.
    Equal,
    /// Achieved SINR meets or exceeds the target.
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Relative tolerance for SINR, power-cap and threshold comparisons.
    pub tol: f64,
    pub sinr: SinrCheck,
    /// Whether the carrier-sense constraint is enforced.
    pub check_cst: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            sinr: SinrCheck::Equal,
            check_cst: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    LengthMismatch {
        expected: usize,
        powers: usize,
        rates: usize,
    },
    NegativePower {
        link: usize,
        power: f64,
    },
    PowerCap {
        link: usize,
        power: f64,
        cap: f64,
    },
    InactivePower {
        link: usize,
        power: f64,
    },
    Cst {
        link: usize,
        sensed: f64,
        threshold: f64,
    },
    SinrShortfall {
        link: usize,
        achieved: f64,
        target: f64,
    },
    SinrExcess {
        link: usize,
        achieved: f64,
        target: f64,
    },
    UnattainableRate {
        link: usize,
        rate: f64,
    },
}

impl Violation {
    /// Short constraint name, as printed by the CLI.
    pub fn constraint(&self) -> &'static str {
        match self {
            Self::LengthMismatch { .. } => "length",
            Self::NegativePower { .. } => "negative_power",
            Self::PowerCap { .. } => "power_cap",
            Self::InactivePower { .. } => "inactive_power",
            Self::Cst { .. } => "cst",
            Self::SinrShortfall { .. } => "sinr_shortfall",
            Self::SinrExcess { .. } => "sinr_excess",
            Self::UnattainableRate { .. } => "unattainable_rate",
        }
    }

    /// Signed distance to the constraint boundary (negative means violated).
    pub fn margin(&self) -> f64 {
        match *self {
            Self::LengthMismatch { .. } => f64::NAN,
            Self::NegativePower { power, .. } => power,
            Self::PowerCap { power, cap, .. } => cap - power,
            Self::InactivePower { power, .. } => -power,
            Self::Cst {
                sensed, threshold, ..
            } => threshold - sensed,
            Self::SinrShortfall {
                achieved, target, ..
            } => achieved - target,
            Self::SinrExcess {
                achieved, target, ..
            } => target - achieved,
            Self::UnattainableRate { .. } => f64::NEG_INFINITY,
        }
    }

    pub fn link(&self) -> Option<usize> {
        match *self {
            Self::LengthMismatch { .. } => None,
            Self::NegativePower { link, .. }
            | Self::PowerCap { link, .. }
            | Self::InactivePower { link, .. }
            | Self::Cst { link, .. }
            | Self::SinrShortfall { link, .. }
            | Self::SinrExcess { link, .. }
            | Self::UnattainableRate { link, .. } => Some(link),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::LengthMismatch { expected, powers, rates } => write!(
                f,
                "length: expected {expected} links, got {powers} powers and {rates} rates"
            ),
            Self::NegativePower { link, power } => write!(f, "link {link}: negative_power {power:e} mW"),
            Self::PowerCap { link, power, cap } => {
                write!(f, "link {link}: power_cap {power:e} mW > {cap:e} mW (margin {:e})", self.margin())
            }
            Self::InactivePower { link, power } => {
                write!(f, "link {link}: inactive_power {power:e} mW on a zero-rate link")
            }
            Self::Cst { link, sensed, threshold } => write!(
                f,
                "link {link}: cst sensed {sensed:e} mW > {threshold:e} mW (margin {:e})",
                self.margin()
            ),
            Self::SinrShortfall { link, achieved, target } => write!(
                f,
                "link {link}: sinr_shortfall achieved {achieved:e} < target {target:e} (margin {:e})",
                self.margin()
            ),
            Self::SinrExcess { link, achieved, target } => write!(
                f,
                "link {link}: sinr_excess achieved {achieved:e} > target {target:e} (margin {:e})",
                self.margin()
            ),
            Self::UnattainableRate { link, rate } => {
                write!(f, "link {link}: unattainable_rate {rate} Mbit/s")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, constraint: &str) -> bool {
        self.violations.iter().any(|v| v.constraint() == constraint)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return writeln!(f, "ok: all constraints satisfied");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Independent check of a power vector against target rates and the
/// instance constraints. Recomputes every SINR from scratch.
pub fn verify(
    powers: &[f64],
    target_rates: &[f64],
    instance: &NetworkInstance,
    curve: &RateCurve,
    options: &VerifyOptions,
) -> VerifyReport {
    let n = instance.n_pairs();
    let mut violations = Vec::new();
    if powers.len() != n || target_rates.len() != n {
        violations.push(Violation::LengthMismatch {
            expected: n,
            powers: powers.len(),
            rates: target_rates.len(),
        });
        return VerifyReport { violations };
    }
    let tol = options.tol;
    for link in 0..n {
        let power = powers[link];
        if !(power >= 0.0) {
            violations.push(Violation::NegativePower { link, power });
            continue;
        }
        let cap = instance.max_power()[link];
        if power > cap * (1.0 + tol) {
            violations.push(Violation::PowerCap { link, power, cap });
        }
        let rate = target_rates[link];
        if rate > 0.0 {
            let target = match sinr_from_rate(rate, curve) {
                Ok(g) => g,
                Err(_) => {
                    violations.push(Violation::UnattainableRate { link, rate });
                    continue;
                }
            };
            let achieved = sinr(powers, instance, link);
            if achieved < target * (1.0 - tol) {
                violations.push(Violation::SinrShortfall {
                    link,
                    achieved,
                    target,
                });
            } else if options.sinr == SinrCheck::Equal && achieved > target * (1.0 + tol) {
                violations.push(Violation::SinrExcess {
                    link,
                    achieved,
                    target,
                });
            }
        } else if power > 0.0 && options.sinr == SinrCheck::Equal {
            // a zero target is met by any SINR, so this is only wrong for exact solutions
            violations.push(Violation::InactivePower { link, power });
        }
        if options.check_cst && power > 0.0 {
            let sensed = instance.sensed_power(powers, link);
            let threshold = instance.cst();
            if sensed > threshold * (1.0 + tol) {
                violations.push(Violation::Cst {
                    link,
                    sensed,
                    threshold,
                });
            }
        }
    }
    VerifyReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate_model::rate_from_sinr;

    fn curve() -> RateCurve {
        RateCurve::default()
    }

    fn rate_for(gamma: f64) -> f64 {
        rate_from_sinr(gamma, &curve())
    }

    fn pair(cross: f64, b: f64, cap: f64, cst: f64) -> NetworkInstance {
        NetworkInstance::new(
            vec![vec![1.0, cross], vec![cross, 1.0]],
            vec![vec![0.0, b], vec![b, 0.0]],
            vec![1.0, 1.0],
            vec![cap, cap],
            cst,
        )
        .unwrap()
    }

    #[test]
    fn all_zero_targets_are_trivially_feasible() {
        let sol = solve_powers(&[0.0, 0.0], &pair(0.5, 0.1, 10.0, 1.0), &curve()).unwrap();
        assert!(sol.is_feasible());
        assert_eq!(sol.powers, vec![0.0, 0.0]);
        assert!(sol.active_set.is_empty());
    }

    #[test]
    fn single_link_closed_form() {
        let inst =
            NetworkInstance::new(vec![vec![1.0]], vec![vec![0.0]], vec![1.0], vec![10.0], 1.0)
                .unwrap();
        let sol = solve_powers(&[rate_for(5.0)], &inst, &curve()).unwrap();
        assert!(sol.is_feasible());
        assert!((sol.powers[0] - 5.0).abs() < 1e-9);

        let tight =
            NetworkInstance::new(vec![vec![1.0]], vec![vec![0.0]], vec![1.0], vec![4.0], 1.0)
                .unwrap();
        let sol = solve_powers(&[rate_for(5.0)], &tight, &curve()).unwrap();
        assert_eq!(sol.verdict, Verdict::Infeasible(InfeasibleReason::PowerCap));
    }

    #[test]
    fn symmetric_pair_hand_solution() {
        // x1 = 1 + 0.5 x2, x2 = 1 + 0.5 x1  =>  x = (2, 2)
        let inst = pair(0.5, 0.1, 10.0, 1.0);
        let r = rate_for(1.0);
        let sol = solve_powers(&[r, r], &inst, &curve()).unwrap();
        assert!(sol.is_feasible());
        for x in &sol.powers {
            assert!((x - 2.0).abs() < 1e-9);
        }
        assert!((inst.sensed_power(&sol.powers, 0) - 0.2).abs() < 1e-9);

        let blocked = pair(0.5, 0.1, 10.0, 0.19);
        let sol = solve_powers(&[r, r], &blocked, &curve()).unwrap();
        assert_eq!(sol.verdict, Verdict::Infeasible(InfeasibleReason::Cst));
    }

    #[test]
    fn strong_coupling_is_infeasible() {
        // x1 = 1 + 1.5 x2, x2 = 1 + 1.5 x1 has only the solution x = (-2, -2)
        let inst = pair(1.5, 0.1, 10.0, 1.0);
        let r = rate_for(1.0);
        let sol = solve_powers(&[r, r], &inst, &curve()).unwrap();
        assert_eq!(
            sol.verdict,
            Verdict::Infeasible(InfeasibleReason::NegativePower)
        );
    }

    #[test]
    fn singular_system_detected() {
        // gamma * cross = 1 makes the 2x2 system exactly singular
        let inst = pair(1.0, 0.0, 10.0, 1.0);
        let r = rate_for(1.0);
        let sol = solve_powers(&[r, r], &inst, &curve()).unwrap();
        assert!(matches!(
            sol.verdict,
            Verdict::Infeasible(InfeasibleReason::Singular)
                | Verdict::Infeasible(InfeasibleReason::NegativePower)
        ));
    }

    #[test]
    fn zero_rate_link_ignores_cst() {
        // link 1 off: its sensed power is irrelevant even if huge
        let inst = pair(0.5, 100.0, 10.0, 1.0);
        let sol = solve_powers(&[rate_for(3.0), 0.0], &inst, &curve()).unwrap();
        assert!(sol.is_feasible());
        assert_eq!(sol.active_set, vec![0]);
        assert_eq!(sol.powers[1], 0.0);
    }

    #[test]
    fn saturation_rate_is_unattainable() {
        let inst = pair(0.0, 0.0, 10.0, 1.0);
        let sol = solve_powers(&[51.8, 0.0], &inst, &curve()).unwrap();
        assert_eq!(
            sol.verdict,
            Verdict::Infeasible(InfeasibleReason::UnattainableRate)
        );
    }

    #[test]
    fn rejects_malformed_targets() {
        let inst = pair(0.0, 0.0, 10.0, 1.0);
        assert!(solve_powers(&[1.0], &inst, &curve()).is_err());
        assert!(solve_powers(&[-1.0, 1.0], &inst, &curve()).is_err());
        assert!(solve_powers(&[f64::NAN, 1.0], &inst, &curve()).is_err());
    }

    #[test]
    fn verify_accepts_solver_output() {
        let inst = pair(0.5, 0.1, 10.0, 1.0);
        let rates = [rate_for(1.0), rate_for(1.5)];
        let sol = solve_powers(&rates, &inst, &curve()).unwrap();
        let report = verify(
            &sol.powers,
            &rates,
            &inst,
            &curve(),
            &VerifyOptions::default(),
        );
        assert!(report.is_ok(), "{report}");
    }

    #[test]
    fn verify_flags_power_cap() {
        let inst = pair(0.0, 0.0, 10.0, 1.0);
        let rates = [rate_for(11.0), 0.0];
        let report = verify(
            &[11.0, 0.0],
            &rates,
            &inst,
            &curve(),
            &VerifyOptions::default(),
        );
        assert!(report.violates("power_cap"));
        assert!(!report.is_ok());
    }

    #[test]
    fn verify_perturbed_solution() {
        let inst = pair(0.5, 0.1, 10.0, 1.0);
        let rates = [rate_for(1.0), rate_for(1.0)];
        let mut powers = solve_powers(&rates, &inst, &curve()).unwrap().powers;
        powers[0] *= 1.1;

        let strict = verify(&powers, &rates, &inst, &curve(), &VerifyOptions::default());
        assert!(strict.violates("sinr_excess"));
        assert!(strict.violates("sinr_shortfall"));

        let relaxed = VerifyOptions {
            sinr: SinrCheck::AtLeast,
            ..VerifyOptions::default()
        };
        let report = verify(&powers, &rates, &inst, &curve(), &relaxed);
        // the boosted link is fine, its neighbour now falls short
        assert!(report.violations.iter().all(|v| v.link() == Some(1)));
        assert!(report.violates("sinr_shortfall"));
    }

    #[test]
    fn verify_checks_cst_only_for_transmitting_links() {
        let inst = pair(0.0, 1.0, 10.0, 1.0);
        let rates = [rate_for(2.0), rate_for(2.0)];
        let report = verify(
            &[2.0, 2.0],
            &rates,
            &inst,
            &curve(),
            &VerifyOptions::default(),
        );
        assert_eq!(
            report
                .violations
                .iter()
                .filter(|v| v.constraint() == "cst")
                .count(),
            2
        );

        let no_cst = VerifyOptions {
            check_cst: false,
            ..VerifyOptions::default()
        };
        assert!(verify(&[2.0, 2.0], &rates, &inst, &curve(), &no_cst).is_ok());
    }

    #[test]
    fn verify_flags_power_on_idle_link() {
        let inst = pair(0.0, 0.0, 10.0, 1.0);
        let report = verify(
            &[0.0, 1.0],
            &[0.0, 0.0],
            &inst,
            &curve(),
            &VerifyOptions::default(),
        );
        assert!(report.violates("inactive_power"));
        let at_least = VerifyOptions {
            sinr: SinrCheck::AtLeast,
            ..VerifyOptions::default()
        };
        assert!(verify(&[0.0, 1.0], &[0.0, 0.0], &inst, &curve(), &at_least).is_ok());
    }
}

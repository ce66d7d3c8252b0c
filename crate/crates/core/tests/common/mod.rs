#![allow(dead_code)]

use pcsched::rate_model::{rate_from_sinr, sinr, RateCurve, UtilityConfig};
use pcsched::topology::{dbm_to_mw, NetworkInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_POWER_MW: f64 = 100.0;

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo.log10()..hi.log10()))
}

/// Direct, cross and sensing gains drawn log-uniformly; radio constants at
/// their defaults (-94 dBm noise, 20 dBm cap, -82 dBm threshold).
pub fn random_instance(n: usize, seed: u64) -> NetworkInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                a[i][j] = log_uniform(&mut rng, 1e-10, 1e-7);
            } else {
                a[i][j] = log_uniform(&mut rng, 1e-12, 1e-8);
                b[i][j] = log_uniform(&mut rng, 1e-13, 1e-9);
            }
        }
    }
    NetworkInstance::new(
        a,
        b,
        vec![dbm_to_mw(-94.0); n],
        vec![MAX_POWER_MW; n],
        dbm_to_mw(-82.0),
    )
    .unwrap()
}

/// Rates delivered by a power vector; silent links get zero.
pub fn rates_for(powers: &[f64], inst: &NetworkInstance, curve: &RateCurve) -> Vec<f64> {
    (0..powers.len())
        .map(|i| {
            if powers[i] > 0.0 {
                rate_from_sinr(sinr(powers, inst, i), curve)
            } else {
                0.0
            }
        })
        .collect()
}

pub fn respects_cst(powers: &[f64], inst: &NetworkInstance) -> bool {
    (0..powers.len()).all(|i| powers[i] == 0.0 || inst.sensed_power(powers, i) <= inst.cst())
}

/// Zero plus `count - 1` levels log-spaced over six decades up to the cap.
pub fn log_levels(cap: f64, count: usize) -> Vec<f64> {
    let mut levels = vec![0.0];
    levels.extend((0..count - 1).map(|k| cap * 10f64.powf(-6.0 * k as f64 / (count - 2) as f64)));
    levels
}

/// Zero plus `count - 1` evenly spaced levels up to the cap.
pub fn linear_levels(cap: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| cap * k as f64 / (count - 1) as f64)
        .collect()
}

pub struct OracleResult {
    pub utility: f64,
    pub powers: Vec<f64>,
}

/// Exhaustive search over the product of per-link power levels, keeping
/// only vectors that satisfy carrier sensing.
pub fn power_grid_oracle(
    inst: &NetworkInstance,
    curve: &RateCurve,
    utility: &UtilityConfig,
    levels: &[f64],
) -> OracleResult {
    let n = inst.n_pairs();
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut best = OracleResult {
        utility: f64::NEG_INFINITY,
        powers: vec![0.0; n],
    };
    loop {
        for i in 0..n {
            x[i] = levels[idx[i]];
        }
        if respects_cst(&x, inst) {
            let u = utility.system_utility(&rates_for(&x, inst, curve));
            if u > best.utility {
                best = OracleResult {
                    utility: u,
                    powers: x.clone(),
                };
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                return best;
            }
            idx[k] += 1;
            if idx[k] < levels.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Random feasible power vector: each link silent with probability 0.2,
/// otherwise log-uniform over six decades below the cap. Half the samples
/// are then scaled up until a cap or the threshold binds.
pub fn sample_feasible_powers(inst: &NetworkInstance, rng: &mut impl Rng) -> Vec<f64> {
    let n = inst.n_pairs();
    loop {
        let mut x: Vec<f64> = (0..n)
            .map(|i| {
                if rng.random_bool(0.2) {
                    0.0
                } else {
                    log_uniform(rng, inst.max_power()[i] * 1e-6, inst.max_power()[i])
                }
            })
            .collect();
        if !respects_cst(&x, inst) {
            continue;
        }
        if rng.random_bool(0.5) {
            let mut factor = f64::INFINITY;
            for i in (0..n).filter(|&i| x[i] > 0.0) {
                factor = factor.min(inst.max_power()[i] / x[i]);
                let sensed = inst.sensed_power(&x, i);
                if sensed > 0.0 {
                    factor = factor.min(inst.cst() / sensed);
                }
            }
            if factor.is_finite() && factor > 1.0 {
                let scaled: Vec<f64> = x.iter().map(|v| v * factor * (1.0 - 1e-9)).collect();
                if respects_cst(&scaled, inst)
                    && scaled.iter().zip(inst.max_power()).all(|(v, c)| v <= c)
                {
                    x = scaled;
                }
            }
        }
        return x;
    }
}

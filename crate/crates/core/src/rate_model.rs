//! SINR, the SINR-to-rate curve and alpha-fair utilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::NetworkInstance;

/// Shape of the curve below its midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LowSnrBranch {
    /// Tangent of the logistic at the midpoint: slope `L*k/4` Mbit/s per dB.
    /// Lies below the logistic, so capacity is never overestimated.
    #[default]
    Tangent,
    /// Slope `k/4` Mbit/s per dB, independent of `L`.
    Unscaled,
}

/// Logistic SINR-to-rate mapping in the dB domain with a linear lower branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    /// Saturation rate `L`, Mbit/s.
    pub saturation: f64,
    /// Midpoint `y0`, dB.
    pub midpoint_db: f64,
    /// Logistic slope `k`, per dB.
    pub slope: f64,
    pub low_branch: LowSnrBranch,
}

impl Default for RateCurve {
    fn default() -> Self {
        Self {
            saturation: 51.8,
            midpoint_db: 10.0,
            slope: 0.17,
            low_branch: LowSnrBranch::Tangent,
        }
    }
}

impl RateCurve {
    pub fn new(
        saturation: f64,
        midpoint_db: f64,
        slope: f64,
        low_branch: LowSnrBranch,
    ) -> Result<Self> {
        if !(saturation > 0.0) || !saturation.is_finite() {
            return Err(Error::Domain(format!(
                "saturation rate must be positive, got {saturation}"
            )));
        }
        if !(slope > 0.0) || !slope.is_finite() {
            return Err(Error::Domain(format!(
                "curve slope must be positive, got {slope}"
            )));
        }
        if !midpoint_db.is_finite() {
            return Err(Error::Domain("curve midpoint must be finite".into()));
        }
        Ok(Self {
            saturation,
            midpoint_db,
            slope,
            low_branch,
        })
    }

    /// Slope of the lower branch in Mbit/s per dB.
    pub fn linear_slope(&self) -> f64 {
        match self.low_branch {
            LowSnrBranch::Tangent => self.saturation * self.slope / 4.0,
            LowSnrBranch::Unscaled => self.slope / 4.0,
        }
    }

    pub fn rate(&self, gamma: f64) -> f64 {
        rate_from_sinr(gamma, self)
    }

    pub fn sinr(&self, rate: f64) -> Result<f64> {
        sinr_from_rate(rate, self)
    }
}

/// SINR at receiver `i` when the network transmits `powers` (mW).
pub fn sinr(powers: &[f64], instance: &NetworkInstance, i: usize) -> f64 {
    let interference: f64 = powers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, x)| instance.gain_rx(i, j) * x)
        .sum();
    instance.gain_rx(i, i) * powers[i] / (instance.noise()[i] + interference)
}

pub fn rate_from_sinr(gamma: f64, curve: &RateCurve) -> f64 {
    let y = 10.0 * gamma.log10();
    let dy = y - curve.midpoint_db;
    if dy >= 0.0 {
        curve.saturation / (1.0 + (-curve.slope * dy).exp())
    } else {
        (curve.saturation / 2.0 + curve.linear_slope() * dy).max(0.0)
    }
}

/// Inverse of [`rate_from_sinr`] on `(0, L)`.
pub fn sinr_from_rate(rate: f64, curve: &RateCurve) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::Domain(format!(
            "rate must be positive to invert, got {rate}"
        )));
    }
    let l = curve.saturation;
    if rate >= l {
        return Err(Error::UnattainableRate {
            rate,
            saturation: l,
        });
    }
    let half = l / 2.0;
    let y = if rate >= half {
        curve.midpoint_db - ((l - rate) / rate).ln() / curve.slope
    } else {
        curve.midpoint_db + (rate - half) / curve.linear_slope()
    };
    Ok(10f64.powf(y / 10.0))
}

/// Alpha-fair utility of a single rate, shifted by `rate_floor`.
pub fn utility(rate: f64, alpha: f64, rate_floor: f64) -> f64 {
    let s = rate + rate_floor;
    if alpha == 1.0 {
        s.ln()
    } else {
        s.powf(1.0 - alpha) / (1.0 - alpha)
    }
}

/// Inverse of [`utility`].
pub fn utility_inverse(u: f64, alpha: f64, rate_floor: f64) -> Result<f64> {
    let out_of_range = || {
        Error::Domain(format!(
            "utility {u} outside the range of U (alpha {alpha})"
        ))
    };
    if u.is_nan() {
        return Err(out_of_range());
    }
    let s = if alpha == 1.0 {
        u.exp()
    } else {
        let scaled = u * (1.0 - alpha);
        if scaled < 0.0 || (alpha > 1.0 && u == 0.0) {
            return Err(out_of_range());
        }
        scaled.powf(1.0 / (1.0 - alpha))
    };
    let r = s - rate_floor;
    // allow the last-ulp slack that `s` picks up near the floor
    if r.is_nan() || r < -1e-12 * rate_floor.max(1.0) {
        return Err(out_of_range());
    }
    Ok(r.max(0.0))
}

/// Weighted alpha-fair utility configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityConfig {
    alpha: f64,
    weights: Vec<f64>,
    rate_floor: f64,
}

impl UtilityConfig {
    pub fn new(alpha: f64, weights: Vec<f64>, rate_floor: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::Domain(format!(
                "alpha must be non-negative, got {alpha}"
            )));
        }
        if !(rate_floor >= 0.0) || !rate_floor.is_finite() {
            return Err(Error::Domain(format!(
                "rate floor must be non-negative, got {rate_floor}"
            )));
        }
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain(
                "weights must be non-negative and non-empty".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("weights must sum to 1, got {total}")));
        }
        Ok(Self {
            alpha,
            weights,
            rate_floor,
        })
    }

    pub fn equal_weights(n: usize, alpha: f64, rate_floor: f64) -> Result<Self> {
        Self::new(alpha, vec![1.0 / n as f64; n], rate_floor)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rate_floor(&self) -> f64 {
        self.rate_floor
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn utility(&self, rate: f64) -> f64 {
        utility(rate, self.alpha, self.rate_floor)
    }

    pub fn system_utility(&self, rates: &[f64]) -> f64 {
        system_utility(rates, self)
    }

    pub fn inverse(&self, u: f64) -> Result<f64> {
        utility_inverse(u, self.alpha, self.rate_floor)
    }

    /// Lowest utility value, attained at zero rate.
    pub fn min_utility(&self) -> f64 {
        self.utility(0.0)
    }

    /// Smallest rate whose utility reaches `u`: 0 below the range of U,
    /// infinity above it.
    pub fn inverse_clamped(&self, u: f64) -> f64 {
        if u.is_nan() {
            return f64::NAN;
        }
        if u <= self.min_utility() {
            return 0.0;
        }
        let above = match self.alpha {
            a if a > 1.0 => u >= 0.0,
            _ => u == f64::INFINITY,
        };
        if above {
            return f64::INFINITY;
        }
        self.inverse(u).unwrap_or(0.0)
    }

    /// Rate `r` such that every link at `r` yields system utility `u`.
    pub fn equivalent_rate(&self, u: f64) -> f64 {
        self.inverse_clamped(u)
    }
}

pub fn system_utility(rates: &[f64], config: &UtilityConfig) -> f64 {
    rates
        .iter()
        .zip(&config.weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&r, &w)| w * config.utility(r))
        .sum()
}

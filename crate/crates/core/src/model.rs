//! Physical and game constants plus the closed-form quantities every solver
//! evaluates: path gain, effective interference, SINR, the two utilities and
//! the target-SINR identity.
//!
//! Units are SI throughout (watts, bps, hertz); gains are dimensionless.

use crate::error::{Error, Result};

pub const DEFAULT_PATHLOSS_EXPONENT: f64 = 4.0;
pub const DEFAULT_SHADOWING: f64 = 0.097;
/// Noise floor used when a scenario does not specify one; negligible next to
/// the received powers of the desk-scale experiments.
pub const DEFAULT_NOISE_W: f64 = 5e-15;
pub const DEFAULT_BANDWIDTH_HZ: f64 = 1e6;

/// Distance-based path gain `ξ / d^η`.
pub fn path_gain(distance_m: f64, pathloss_exponent: f64, shadowing: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::domain(format!("distance must be positive, got {distance_m}")));
    }
    Ok(shadowing / distance_m.powf(pathloss_exponent))
}

/// Interference-plus-noise seen by user `i`, normalised by its own gain:
/// `(Σ_{j≠i} g_j p_j + N₀) / g_i`.
pub fn effective_interference(gains: &[f64], powers: &[f64], i: usize, noise_w: f64) -> Result<f64> {
    if gains.len() != powers.len() {
        return Err(Error::domain("gain and power vectors differ in length"));
    }
    let own = *gains
        .get(i)
        .ok_or_else(|| Error::domain(format!("user index {i} out of range")))?;
    if !(own > 0.0) {
        return Err(Error::domain(format!("direct gain of user {i} must be positive")));
    }
    let interference: f64 = gains
        .iter()
        .zip(powers)
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, (g, p))| g * p)
        .sum();
    Ok((interference + noise_w) / own)
}

/// Received SINR including the processing gain `W / r`.
pub fn sinr(bandwidth_hz: f64, strategy: Strategy, r_eff: f64) -> Result<f64> {
    if !(strategy.rate > 0.0) {
        return Err(Error::domain("rate must be positive"));
    }
    if !(r_eff > 0.0) {
        return Err(Error::domain("effective interference must be positive"));
    }
    Ok(bandwidth_hz / strategy.rate * strategy.power / r_eff)
}

/// Utility of the unpriced game, `log(k₁ r + k₂ p / R_eff)`.
pub fn utility_base(strategy: Strategy, r_eff: f64, k: UtilityParamsBase) -> Result<f64> {
    if !(r_eff > 0.0) {
        return Err(Error::domain("effective interference must be positive"));
    }
    let arg = k.k1 * strategy.rate + k.k2 * strategy.power / r_eff;
    if !(arg > 0.0) {
        return Err(Error::domain("utility argument must be positive"));
    }
    Ok(arg.ln())
}

/// Priced utility
/// `log(α₂ R r + α₁ p) − (λ/2)((α₂/α₁) R r² + (α₁/α₂) p² / R)`.
pub fn utility_priced(strategy: Strategy, r_eff: f64, alpha1: f64, alpha2: f64, lambda: f64) -> Result<f64> {
    if !(r_eff > 0.0) {
        return Err(Error::domain("effective interference must be positive"));
    }
    let (p, r) = (strategy.power, strategy.rate);
    let arg = alpha2 * r_eff * r + alpha1 * p;
    if !(arg > 0.0) {
        return Err(Error::domain("utility argument must be positive"));
    }
    let ratio = alpha2 / alpha1;
    let price = 0.5 * lambda * (ratio * r_eff * r * r + p * p / (ratio * r_eff));
    Ok(arg.ln() - price)
}

/// Analytic gradient `(∂u/∂p, ∂u/∂r)` of [`utility_priced`].
pub fn utility_priced_gradient(strategy: Strategy, r_eff: f64, alpha1: f64, alpha2: f64, lambda: f64) -> [f64; 2] {
    let (p, r) = (strategy.power, strategy.rate);
    let s = alpha1 * p + alpha2 * r_eff * r;
    let ratio = alpha2 / alpha1;
    [
        alpha1 / s - lambda * p / (ratio * r_eff),
        alpha2 * r_eff / s - lambda * ratio * r_eff * r,
    ]
}

/// Analytic Hessian `[[u_pp, u_pr], [u_pr, u_rr]]` of [`utility_priced`].
pub fn utility_priced_hessian(strategy: Strategy, r_eff: f64, alpha1: f64, alpha2: f64, lambda: f64) -> [[f64; 2]; 2] {
    let (p, r) = (strategy.power, strategy.rate);
    let s = alpha1 * p + alpha2 * r_eff * r;
    let s2 = s * s;
    let ratio = alpha2 / alpha1;
    let upp = -alpha1 * alpha1 / s2 - lambda / (ratio * r_eff);
    let urr = -(alpha2 * r_eff).powi(2) / s2 - lambda * ratio * r_eff;
    let upr = -alpha1 * alpha2 * r_eff / s2;
    [[upp, upr], [upr, urr]]
}

/// SINR every user reaches at an interior equilibrium: `(α₂/α₁) W`.
pub fn target_sinr(alpha1: f64, alpha2: f64, bandwidth_hz: f64) -> f64 {
    alpha2 / alpha1 * bandwidth_hz
}

/// Inverse of [`target_sinr`]: the weight ratio `α₂/α₁` that yields `target`.
pub fn alpha_ratio_for_target(target: f64, bandwidth_hz: f64) -> f64 {
    target / bandwidth_hz
}

/// One user's transmit power (W) and data rate (bps).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strategy {
    pub power: f64,
    pub rate: f64,
}

impl Strategy {
    pub fn new(power: f64, rate: f64) -> Self {
        Strategy { power, rate }
    }
}

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Self {
        Bounds { min, max }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.min).min(self.max)
    }

    /// The violated bound, if `x` lies outside the interval.
    pub fn violated(&self, x: f64) -> Option<f64> {
        if x < self.min {
            Some(self.min)
        } else if x > self.max {
            Some(self.max)
        } else {
            None
        }
    }
}

/// Per-user game constants.
#[derive(Debug, Clone, PartialEq)]
pub struct UserParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda: f64,
    pub power: Bounds,
    pub rate: Bounds,
    pub initial: Strategy,
}

impl UserParams {
    /// Parameters with the initial strategy at the lower corner of the box.
    pub fn new(alpha1: f64, alpha2: f64, lambda: f64, power: Bounds, rate: Bounds) -> Self {
        UserParams {
            alpha1,
            alpha2,
            lambda,
            power,
            rate,
            initial: Strategy::new(power.min, rate.min),
        }
    }

    pub fn with_initial(mut self, initial: Strategy) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// `α₂/α₁`.
    pub fn alpha_ratio(&self) -> f64 {
        self.alpha2 / self.alpha1
    }

    pub fn target_sinr(&self, bandwidth_hz: f64) -> f64 {
        target_sinr(self.alpha1, self.alpha2, bandwidth_hz)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("alpha1", self.alpha1)?;
        positive("alpha2", self.alpha2)?;
        positive("lambda", self.lambda)?;
        positive("p_min", self.power.min)?;
        positive("r_min", self.rate.min)?;
        if !(self.power.min <= self.power.max) || !self.power.max.is_finite() {
            return Err(Error::config("p_min must not exceed p_max"));
        }
        if !(self.rate.min <= self.rate.max) || !self.rate.max.is_finite() {
            return Err(Error::config("r_min must not exceed r_max"));
        }
        if !self.power.contains(self.initial.power) {
            return Err(Error::config(format!(
                "initial power {} outside [{}, {}]",
                self.initial.power, self.power.min, self.power.max
            )));
        }
        if !self.rate.contains(self.initial.rate) {
            return Err(Error::config(format!(
                "initial rate {} outside [{}, {}]",
                self.initial.rate, self.rate.min, self.rate.max
            )));
        }
        Ok(())
    }
}

/// Weights of the unpriced utility, `k₁ = k'` and `k₂ = k' k W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityParamsBase {
    pub k1: f64,
    pub k2: f64,
}

impl UtilityParamsBase {
    /// `k = k' = 1`.
    pub fn unit(bandwidth_hz: f64) -> Self {
        UtilityParamsBase { k1: 1.0, k2: bandwidth_hz }
    }
}

/// Users-by-stations distance matrix with the derived path gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    distances: Vec<Vec<f64>>,
    gains: Vec<Vec<f64>>,
    stations: usize,
    pathloss_exponent: f64,
    shadowing: f64,
    noise_w: f64,
    bandwidth_hz: f64,
}

impl ChannelModel {
    /// `distances_m[user][station]`, in meters.
    pub fn new(
        distances_m: Vec<Vec<f64>>,
        pathloss_exponent: f64,
        shadowing: f64,
        noise_w: f64,
        bandwidth_hz: f64,
    ) -> Result<Self> {
        let stations = distances_m.first().map_or(0, Vec::len);
        Self::with_stations(stations, distances_m, pathloss_exponent, shadowing, noise_w, bandwidth_hz)
    }

    /// Like [`ChannelModel::new`] but with an explicit station count, so the
    /// user list may be empty.
    pub fn with_stations(
        stations: usize,
        distances_m: Vec<Vec<f64>>,
        pathloss_exponent: f64,
        shadowing: f64,
        noise_w: f64,
        bandwidth_hz: f64,
    ) -> Result<Self> {
        if stations == 0 {
            return Err(Error::config("at least one base station is required"));
        }
        if !(pathloss_exponent > 0.0) {
            return Err(Error::config("path-loss exponent must be positive"));
        }
        if !(shadowing > 0.0) {
            return Err(Error::config("shadowing factor must be positive"));
        }
        if !(noise_w >= 0.0) || !noise_w.is_finite() {
            return Err(Error::config("noise power must be non-negative"));
        }
        if !(bandwidth_hz > 0.0) {
            return Err(Error::config("bandwidth must be positive"));
        }
        let mut model = ChannelModel {
            distances: Vec::with_capacity(distances_m.len()),
            gains: Vec::with_capacity(distances_m.len()),
            stations,
            pathloss_exponent,
            shadowing,
            noise_w,
            bandwidth_hz,
        };
        for row in distances_m {
            model.push_user(row)?;
        }
        Ok(model)
    }

    /// Single-station channel with default propagation constants.
    pub fn single_cell(distances_m: &[f64], noise_w: f64) -> Result<Self> {
        Self::new(
            distances_m.iter().map(|&d| vec![d]).collect(),
            DEFAULT_PATHLOSS_EXPONENT,
            DEFAULT_SHADOWING,
            noise_w,
            DEFAULT_BANDWIDTH_HZ,
        )
    }

    fn gain_row(&self, distances: &[f64]) -> Result<Vec<f64>> {
        if distances.len() != self.stations {
            return Err(Error::config(format!(
                "expected {} distances (one per station), got {}",
                self.stations,
                distances.len()
            )));
        }
        distances
            .iter()
            .map(|&d| {
                let g = path_gain(d, self.pathloss_exponent, self.shadowing)?;
                if g > 0.0 && g.is_finite() {
                    Ok(g)
                } else {
                    Err(Error::domain(format!("path gain at {d} m is not finite and positive")))
                }
            })
            .collect()
    }

    /// Appends a user; returns its index.
    pub fn push_user(&mut self, distances_m: Vec<f64>) -> Result<usize> {
        let gains = self.gain_row(&distances_m)?;
        self.distances.push(distances_m);
        self.gains.push(gains);
        Ok(self.distances.len() - 1)
    }

    pub fn set_distances(&mut self, user: usize, distances_m: Vec<f64>) -> Result<()> {
        if user >= self.users() {
            return Err(Error::config(format!("no user with index {user}")));
        }
        self.gains[user] = self.gain_row(&distances_m)?;
        self.distances[user] = distances_m;
        Ok(())
    }

    pub fn remove_user(&mut self, user: usize) -> Vec<f64> {
        self.gains.remove(user);
        self.distances.remove(user)
    }

    pub fn users(&self) -> usize {
        self.distances.len()
    }

    pub fn stations(&self) -> usize {
        self.stations
    }

    pub fn distances(&self, user: usize) -> &[f64] {
        &self.distances[user]
    }

    pub fn gain(&self, user: usize, station: usize) -> f64 {
        self.gains[user][station]
    }

    /// Every user's gain towards `station`.
    pub fn gains_to(&self, station: usize) -> Vec<f64> {
        self.gains.iter().map(|row| row[station]).collect()
    }

    pub fn pathloss_exponent(&self) -> f64 {
        self.pathloss_exponent
    }

    pub fn shadowing(&self) -> f64 {
        self.shadowing
    }

    pub fn noise_w(&self) -> f64 {
        self.noise_w
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    /// `R^eff_{a,i}` at `station` for `user`, given every user's power.
    ///
    /// Only the user's own gain and the total received power at the station
    /// enter, which is all a distributed update may observe.
    pub fn effective_interference(&self, station: usize, user: usize, powers: &[f64]) -> Result<f64> {
        if powers.len() != self.users() {
            return Err(Error::domain("power vector does not match the user count"));
        }
        let own = self.gains[user][station];
        let received: f64 = self
            .gains
            .iter()
            .zip(powers)
            .enumerate()
            .filter(|(j, _)| *j != user)
            .map(|(_, (row, p))| row[station] * p)
            .sum();
        Ok((received + self.noise_w) / own)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn path_gain_values() {
        // 0.097 / 110^4 = 0.097 / 146_410_000
        let g110 = path_gain(110.0, 4.0, 0.097).unwrap();
        assert!(rel(g110, 6.6255e-10) < 1e-4);
        assert!(rel(g110, 0.097 / 146_410_000.0) < 1e-15);
        let g210 = path_gain(210.0, 4.0, 0.097).unwrap();
        assert!(rel(g210, 4.9877e-11) < 1e-4);
        assert_eq!(path_gain(37.0, 0.0, 0.097).unwrap(), 0.097);
    }

    #[test]
    fn path_gain_rejects_non_positive_distance() {
        assert!(matches!(path_gain(0.0, 4.0, 0.097), Err(Error::Domain(_))));
        assert!(matches!(path_gain(-3.0, 4.0, 0.097), Err(Error::Domain(_))));
    }

    #[test]
    fn effective_interference_cases() {
        assert_eq!(effective_interference(&[1e-10], &[0.7], 0, 1e-10).unwrap(), 1.0);

        // Table I converged powers, user 2 (index 1) with negligible noise.
        let g = [6.6255e-10, 3.3962e-10, 4.9877e-11];
        let p = [1.011, 123.0, 3.0];
        let r = effective_interference(&g, &p, 1, 0.0).unwrap();
        let hand = (6.6255e-10 * 1.011 + 4.9877e-11 * 3.0) / 3.3962e-10;
        assert!(rel(r, hand) < 1e-12);
        assert!(rel(r, 2.413) < 1e-3);

        assert_eq!(effective_interference(&g, &[5.0, 0.0, 0.0], 0, 0.0).unwrap(), 0.0);
        assert!(effective_interference(&[0.0, 1.0], &[1.0, 1.0], 0, 1.0).is_err());
    }

    #[test]
    fn sinr_cases() {
        let s = sinr(5.0, Strategy::new(2.0, 5.0), 2.0).unwrap();
        assert_eq!(s, 1.0);
        let s = sinr(1e6, Strategy::new(0.0647, 19306.0), 0.2588).unwrap();
        assert!(rel(s, 12.949) < 1e-4);
        let s = sinr(1e6, Strategy::new(1.0, 3972.0), 24.4703).unwrap();
        assert!(rel(s, 10.289) < 1e-4);
        assert!(sinr(1e6, Strategy::new(1.0, 0.0), 1.0).is_err());
        assert!(sinr(1e6, Strategy::new(1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn utility_base_cases() {
        let k = UtilityParamsBase { k1: 1.0, k2: 0.0 };
        assert_eq!(utility_base(Strategy::new(0.3, 1.0), 2.0, k).unwrap(), 0.0);
        let k = UtilityParamsBase { k1: 1.0, k2: std::f64::consts::E - 1.0 };
        let u = utility_base(Strategy::new(1.0, 1.0), 1.0, k).unwrap();
        assert!((u - 1.0).abs() < 1e-15);
        let k = UtilityParamsBase::unit(1e6);
        let lo = utility_base(Strategy::new(0.1, 100.0), 3.0, k).unwrap();
        let hi = utility_base(Strategy::new(0.2, 100.0), 3.0, k).unwrap();
        assert!(hi > lo);
        assert!(utility_base(Strategy::new(1.0, 1.0), 0.0, k).is_err());
    }

    #[test]
    fn utility_priced_cases() {
        let s = Strategy::new(0.05, 20_000.0);
        let zero = utility_priced(s, 0.3, 1e6, 12.9492, 0.0).unwrap();
        assert_eq!(zero, (12.9492 * 0.3 * 20_000.0 + 1e6 * 0.05_f64).ln());
        let a = utility_priced(s, 0.3, 1e6, 12.9492, 1e-4).unwrap();
        let b = utility_priced(s, 0.3, 1e6, 12.9492, 2e-4).unwrap();
        assert!(b < a && a < zero);
        assert!(utility_priced(s, 0.0, 1e6, 12.9492, 1e-4).is_err());
    }

    #[test]
    fn target_sinr_and_ratio() {
        assert_eq!(target_sinr(1e6, 20.0, 1e6), 20.0);
        assert!(rel(target_sinr(1e6, 12.9492, 1e6), 12.9492) < 1e-15);
        assert_eq!(target_sinr(3.5, 3.5, 1e6), 1e6);
        assert!(rel(alpha_ratio_for_target(20.0, 1e6), 2e-5) < 1e-15);
        assert!(rel(alpha_ratio_for_target(12.9492, 1e6), 1.29492e-5) < 1e-15);
        let ratio = alpha_ratio_for_target(target_sinr(15.0, 3e-4, 1e6), 1e6);
        assert!(rel(ratio, 3e-4 / 15.0) < 1e-14);
    }

    #[test]
    fn channel_rejects_bad_dimensions() {
        let mut ch = ChannelModel::new(vec![vec![100.0, 200.0]], 4.0, 0.097, 0.0, 1e6).unwrap();
        assert!(ch.push_user(vec![100.0]).is_err());
        assert!(ch.push_user(vec![100.0, 0.0]).is_err());
        assert!(ChannelModel::new(vec![], 4.0, 0.097, 0.0, 1e6).is_err());
        assert!(ChannelModel::with_stations(2, vec![], 4.0, 0.097, 0.0, 1e6).is_ok());
    }

    #[test]
    fn channel_interference_matches_free_function() {
        let ch = ChannelModel::single_cell(&[110.0, 130.0, 210.0], 1e-13).unwrap();
        let p = [0.2, 0.4, 0.9];
        let gains = ch.gains_to(0);
        for i in 0..3 {
            let a = ch.effective_interference(0, i, &p).unwrap();
            let b = effective_interference(&gains, &p, i, 1e-13).unwrap();
            assert!(rel(a, b) < 1e-15);
        }
    }

    #[test]
    fn user_params_validation() {
        let ok = UserParams::new(1e6, 20.0, 1e-4, Bounds::new(1e-6, 3.0), Bounds::new(0.1, 96_000.0));
        assert!(ok.validate().is_ok());
        assert_eq!(ok.initial, Strategy::new(1e-6, 0.1));
        assert!(ok.clone().with_lambda(0.0).validate().is_err());
        assert!(ok.clone().with_initial(Strategy::new(4.0, 1.0)).validate().is_err());
        let inverted = UserParams::new(1e6, 20.0, 1e-4, Bounds::new(3.0, 1.0), Bounds::new(0.1, 1.0));
        assert!(inverted.validate().is_err());
    }
}

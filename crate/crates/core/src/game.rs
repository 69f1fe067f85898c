//! Single-cell solvers and the shared fixed-point iteration.
//!
//! Every per-user update reads only the user's own parameters and its
//! effective interference, i.e. its own gain plus the total power received at
//! its station. Rates never feed back into anyone's update.

use crate::error::{Error, Result};
use crate::model::{self, Bounds, ChannelModel, Strategy, UserParams};
use crate::multicell::{self, Assignment};
use crate::quantizer::{QuantizeMode, RateQuantization};

/// How a best response that leaves the strategy box is brought back into it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdatePolicy {
    /// Project power and rate onto their intervals independently.
    #[default]
    Clamp,
    /// Pin the violated coordinate and re-optimise the other one from the
    /// first-order condition on that boundary.
    Kkt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// `max_i(|Δp|/p + |Δr|/r)`.
    #[default]
    Relative,
    /// `max_i(|Δp| + |Δr|)`, mixing watts and bps.
    PaperAbsolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Every user updates from the previous iterate.
    #[default]
    Synchronous,
    /// Users update in index order against the freshest state.
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceConfig {
    pub delta: f64,
    pub max_iterations: usize,
    pub metric: Metric,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            delta: 1e-9,
            max_iterations: 500,
            metric: Metric::Relative,
        }
    }
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::config("convergence threshold must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Floor for the relative metric's denominators.
const METRIC_EPS: f64 = 1e-30;

/// One user's state after an iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRecord {
    /// Stable identifier (scenario order, arrivals appended).
    pub user: usize,
    pub station: usize,
    pub strategy: Strategy,
    pub sinr: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub users: Vec<UserRecord>,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations_used: usize,
}

impl IterationTrace {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn final_strategies(&self) -> Vec<Strategy> {
        self.last().map_or_else(Vec::new, |r| r.users.iter().map(|u| u.strategy).collect())
    }

    pub fn final_sinrs(&self) -> Vec<f64> {
        self.last().map_or_else(Vec::new, |r| r.users.iter().map(|u| u.sinr).collect())
    }

    pub fn final_stations(&self) -> Vec<usize> {
        self.last().map_or_else(Vec::new, |r| r.users.iter().map(|u| u.station).collect())
    }
}

/// All users' strategies plus their current stations.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub strategies: Vec<Strategy>,
    pub assignment: Assignment,
}

impl NetworkState {
    pub fn powers(&self) -> Vec<f64> {
        self.strategies.iter().map(|s| s.power).collect()
    }
}

/// Equilibrium of the unpriced game: every user at `(p_max, r_max)`.
pub fn njrpcg_equilibrium(users: &[UserParams]) -> Vec<Strategy> {
    users.iter().map(|u| Strategy::new(u.power.max, u.rate.max)).collect()
}

/// Stationary point of the priced utility:
/// `p = sqrt(½ (α₂/α₁) R / λ)`, `r = sqrt(½ (α₁/α₂) / (λ R))`.
pub fn unconstrained_best_response(r_eff: f64, alpha1: f64, alpha2: f64, lambda: f64) -> Result<Strategy> {
    if !(r_eff > 0.0) || !r_eff.is_finite() {
        return Err(Error::domain(format!("effective interference must be positive, got {r_eff}")));
    }
    let ratio = alpha2 / alpha1;
    Ok(Strategy::new(
        (0.5 * ratio * r_eff / lambda).sqrt(),
        (0.5 / (ratio * lambda * r_eff)).sqrt(),
    ))
}

/// Positive root of `a x² + b x − c` for `a, c > 0`, `b ≥ 0`, in the
/// cancellation-free form `2c / (b + sqrt(b² + 4ac))`.
fn positive_root(a: f64, b: f64, c: f64) -> f64 {
    2.0 * c / (b + (b * b + 4.0 * a * c).sqrt())
}

/// Power optimum with the rate pinned at `rate_bound`: positive root of
/// `α₁λp² + α₂λR r_b p − α₂R = 0`.
pub fn power_update_rate_bounded(r_eff: f64, rate_bound: f64, alpha1: f64, alpha2: f64, lambda: f64) -> f64 {
    positive_root(alpha1 * lambda, alpha2 * lambda * r_eff * rate_bound, alpha2 * r_eff)
}

/// Rate optimum with the power pinned at `power_bound`: positive root of
/// `α₂λR r² + α₁λ p_b r − α₁ = 0`.
pub fn rate_update_power_bounded(r_eff: f64, power_bound: f64, alpha1: f64, alpha2: f64, lambda: f64) -> f64 {
    positive_root(alpha2 * lambda * r_eff, alpha1 * lambda * power_bound, alpha1)
}

/// One user's best response against `r_eff`, kept inside its strategy box.
pub fn bounded_step(user: &UserParams, r_eff: f64, policy: UpdatePolicy) -> Result<Strategy> {
    let candidate = unconstrained_best_response(r_eff, user.alpha1, user.alpha2, user.lambda)?;
    let power_hit = user.power.violated(candidate.power);
    let rate_hit = user.rate.violated(candidate.rate);
    let clamped = || Strategy::new(user.power.clamp(candidate.power), user.rate.clamp(candidate.rate));
    let step = match (policy, power_hit, rate_hit) {
        (_, None, None) => candidate,
        (UpdatePolicy::Clamp, _, _) | (UpdatePolicy::Kkt, Some(_), Some(_)) => clamped(),
        (UpdatePolicy::Kkt, None, Some(rate)) => {
            let power = power_update_rate_bounded(r_eff, rate, user.alpha1, user.alpha2, user.lambda);
            Strategy::new(user.power.clamp(power), rate)
        }
        (UpdatePolicy::Kkt, Some(power), None) => {
            let rate = rate_update_power_bounded(r_eff, power, user.alpha1, user.alpha2, user.lambda);
            Strategy::new(power, user.rate.clamp(rate))
        }
    };
    Ok(step)
}

/// Closed-form equilibrium of `users` identical users sharing one gain.
///
/// Solves `p² = (ρ/2λ)((M−1)p + N₀/g)` for its positive root and returns the
/// matching rate.
pub fn symmetric_fixed_point(users: usize, alpha_ratio: f64, lambda: f64, noise_w: f64, gain: f64) -> Strategy {
    let others = users.saturating_sub(1) as f64;
    let b = alpha_ratio * others / (2.0 * lambda);
    let c = alpha_ratio * noise_w / (2.0 * lambda * gain);
    let power = (b + (b * b + 4.0 * c).sqrt()) / 2.0;
    let r_eff = others * power + noise_w / gain;
    let rate = (0.5 / (alpha_ratio * lambda * r_eff)).sqrt();
    Strategy::new(power, rate)
}

/// One synchronous round of bounded best responses with a fixed assignment.
pub fn synchronous_update(
    channel: &ChannelModel,
    users: &[UserParams],
    state: &NetworkState,
    policy: UpdatePolicy,
) -> Result<Vec<Strategy>> {
    let powers = state.powers();
    users
        .iter()
        .enumerate()
        .map(|(i, user)| {
            let r_eff = channel.effective_interference(state.assignment.station(i), i, &powers)?;
            bounded_step(user, r_eff, policy)
        })
        .collect()
}

/// A vector-valued power update `p ↦ I(p)`.
pub trait PowerMap {
    fn apply(&self, powers: &[f64]) -> Vec<f64>;
}

impl<F: Fn(&[f64]) -> Vec<f64>> PowerMap for F {
    fn apply(&self, powers: &[f64]) -> Vec<f64> {
        self(powers)
    }
}

/// The interior power update `I_i(p) = sqrt(½ (α₂/α₁) R_i(p) / λ)` at fixed
/// stations, optionally projected onto each user's power interval.
#[derive(Debug, Clone)]
pub struct PowerUpdateMap<'a> {
    pub channel: &'a ChannelModel,
    pub users: &'a [UserParams],
    pub stations: &'a [usize],
    pub clamped: bool,
}

impl PowerMap for PowerUpdateMap<'_> {
    fn apply(&self, powers: &[f64]) -> Vec<f64> {
        self.users
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let r_eff = received_over_gain(self.channel, self.stations[i], i, powers);
                let p = (0.5 * u.alpha_ratio() * r_eff / u.lambda).sqrt();
                if self.clamped {
                    u.power.clamp(p)
                } else {
                    p
                }
            })
            .collect()
    }
}

pub(crate) fn received_over_gain(channel: &ChannelModel, station: usize, user: usize, powers: &[f64]) -> f64 {
    let received: f64 = powers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != user)
        .map(|(j, p)| channel.gain(j, station) * p)
        .sum();
    (received + channel.noise_w()) / channel.gain(user, station)
}

/// How stations are chosen during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Association {
    /// Keep the initial assignment.
    #[default]
    Fixed,
    /// Re-select the minimum-interference station before every update.
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverOptions {
    pub policy: UpdatePolicy,
    pub convergence: ConvergenceConfig,
    pub schedule: Schedule,
    pub association: Association,
    pub quantization: Option<RateQuantization>,
}

/// Iterative best-response solver owning one run's state and trace.
#[derive(Debug, Clone)]
pub struct Solver {
    channel: ChannelModel,
    users: Vec<UserParams>,
    ids: Vec<usize>,
    options: SolverOptions,
    state: NetworkState,
    trace: IterationTrace,
}

impl Solver {
    /// Starts every user at its initial strategy. Fixed association serves
    /// everyone from station 0; dynamic association starts from the
    /// minimum-interference station at the initial powers.
    pub fn new(channel: ChannelModel, users: Vec<UserParams>, options: SolverOptions) -> Result<Self> {
        if channel.users() != users.len() {
            return Err(Error::config(format!(
                "channel has {} users but {} parameter sets were given",
                channel.users(),
                users.len()
            )));
        }
        for (i, u) in users.iter().enumerate() {
            u.validate().map_err(|e| Error::config(format!("user {i}: {e}")))?;
        }
        options.convergence.validate()?;
        let strategies: Vec<Strategy> = users.iter().map(|u| u.initial).collect();
        let assignment = match options.association {
            Association::Fixed => Assignment::uniform(users.len(), 0),
            Association::Dynamic => {
                let powers: Vec<f64> = strategies.iter().map(|s| s.power).collect();
                Assignment::new(
                    (0..users.len())
                        .map(|i| multicell::assign_base_station(&channel, &powers, i, 0))
                        .collect(),
                )
            }
        };
        let ids = (0..users.len()).collect();
        Ok(Solver {
            channel,
            users,
            ids,
            options,
            state: NetworkState { strategies, assignment },
            trace: IterationTrace::default(),
        })
    }

    /// Overrides the starting stations.
    pub fn with_assignment(mut self, assignment: Assignment) -> Result<Self> {
        if assignment.len() != self.users.len() || assignment.iter().any(|&a| a >= self.channel.stations()) {
            return Err(Error::config("assignment does not match the network dimensions"));
        }
        self.state.assignment = assignment;
        Ok(self)
    }

    /// Overrides the user identifiers reported in the trace.
    pub fn with_ids(mut self, ids: Vec<usize>) -> Result<Self> {
        if ids.len() != self.users.len() {
            return Err(Error::config("one identifier per user is required"));
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn users(&self) -> &[UserParams] {
        &self.users
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn trace(&self) -> &IterationTrace {
        &self.trace
    }

    pub fn into_trace(self) -> IterationTrace {
        self.trace
    }

    pub fn iterations(&self) -> usize {
        self.trace.records.len()
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// Inserts a user at its initial strategy; it takes part from the next
    /// iteration on.
    pub fn add_user(&mut self, params: UserParams, distances_m: Vec<f64>, id: usize) -> Result<()> {
        params.validate()?;
        let index = self.channel.push_user(distances_m)?;
        self.users.push(params.clone());
        self.ids.push(id);
        self.state.strategies.push(params.initial);
        let station = match self.options.association {
            Association::Fixed => 0,
            Association::Dynamic => {
                multicell::assign_base_station(&self.channel, &self.state.powers(), index, 0)
            }
        };
        self.state.assignment.push(station);
        self.trace.converged = false;
        Ok(())
    }

    fn update_one(&self, i: usize, powers: &[f64], current: usize) -> Result<(usize, Strategy)> {
        let station = match self.options.association {
            Association::Fixed => current,
            Association::Dynamic => multicell::assign_base_station(&self.channel, powers, i, current),
        };
        let r_eff = self.channel.effective_interference(station, i, powers)?;
        let mut next = bounded_step(&self.users[i], r_eff, self.options.policy)?;
        if let Some(q) = &self.options.quantization {
            if q.mode == QuantizeMode::EveryIteration {
                next.rate = q.set.quantize_down(next.rate)?;
            }
        }
        Ok((station, next))
    }

    /// Performs one iteration, records it and returns the convergence metric.
    pub fn step(&mut self) -> Result<f64> {
        let previous = self.state.strategies.clone();
        match self.options.schedule {
            Schedule::Synchronous => {
                let powers = self.state.powers();
                let updates = (0..self.users.len())
                    .map(|i| self.update_one(i, &powers, self.state.assignment.station(i)))
                    .collect::<Result<Vec<_>>>()?;
                for (i, (station, s)) in updates.into_iter().enumerate() {
                    self.state.assignment.set(i, station);
                    self.state.strategies[i] = s;
                }
            }
            Schedule::Sequential => {
                let mut powers = self.state.powers();
                for i in 0..self.users.len() {
                    let (station, s) = self.update_one(i, &powers, self.state.assignment.station(i))?;
                    powers[i] = s.power;
                    self.state.assignment.set(i, station);
                    self.state.strategies[i] = s;
                }
            }
        }
        let metric = change_metric(&previous, &self.state.strategies, self.options.convergence.metric);
        self.record(metric)?;
        self.trace.converged = metric <= self.options.convergence.delta;
        Ok(metric)
    }

    fn record(&mut self, metric: f64) -> Result<()> {
        let powers = self.state.powers();
        let w = self.channel.bandwidth_hz();
        let users = (0..self.users.len())
            .map(|i| {
                let station = self.state.assignment.station(i);
                let strategy = self.state.strategies[i];
                let r_eff = self.channel.effective_interference(station, i, &powers)?;
                let u = &self.users[i];
                Ok(UserRecord {
                    user: self.ids[i],
                    station,
                    strategy,
                    sinr: model::sinr(w, strategy, r_eff)?,
                    utility: model::utility_priced(strategy, r_eff, u.alpha1, u.alpha2, u.lambda)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let iteration = self.trace.records.len() + 1;
        self.trace.records.push(IterationRecord { iteration, users, metric });
        self.trace.iterations_used = iteration;
        Ok(())
    }

    /// Iterates until the metric drops to `delta` or the iteration budget is
    /// spent; returns whether it converged.
    pub fn run(&mut self) -> Result<bool> {
        let config = self.options.convergence;
        while self.iterations() < config.max_iterations {
            if self.step()? <= config.delta {
                self.finalize()?;
                return Ok(true);
            }
        }
        self.trace.converged = false;
        Ok(false)
    }

    /// Marks the run converged and applies quantization deferred to
    /// convergence, if configured. Called by [`Solver::run`]; drivers that
    /// call [`Solver::step`] directly call it once they stop.
    pub fn finalize(&mut self) -> Result<()> {
        self.trace.converged = true;
        let Some(q) = self.options.quantization.clone() else {
            return Ok(());
        };
        if q.mode != QuantizeMode::AtConvergence {
            return Ok(());
        }
        let previous = self.state.strategies.clone();
        for s in &mut self.state.strategies {
            s.rate = q.set.quantize_down(s.rate)?;
        }
        let metric = change_metric(&previous, &self.state.strategies, self.options.convergence.metric);
        self.record(metric)
    }
}

fn change_metric(previous: &[Strategy], next: &[Strategy], metric: Metric) -> f64 {
    previous
        .iter()
        .zip(next)
        .map(|(a, b)| {
            let dp = (b.power - a.power).abs();
            let dr = (b.rate - a.rate).abs();
            match metric {
                Metric::Relative => dp / b.power.max(METRIC_EPS) + dr / b.rate.max(METRIC_EPS),
                Metric::PaperAbsolute => dp + dr,
            }
        })
        .fold(0.0, f64::max)
}

/// Runs the priced single-cell game (every user served by station 0).
pub fn iterate_to_convergence(
    channel: &ChannelModel,
    users: &[UserParams],
    policy: UpdatePolicy,
    config: ConvergenceConfig,
    schedule: Schedule,
) -> Result<IterationTrace> {
    let options = SolverOptions {
        policy,
        convergence: config,
        schedule,
        association: Association::Fixed,
        quantization: None,
    };
    let mut solver = Solver::new(channel.clone(), users.to_vec(), options)?;
    solver.run()?;
    Ok(solver.into_trace())
}

/// A complete, owned game definition that can be solved repeatedly.
#[derive(Debug, Clone)]
pub struct Game {
    pub channel: ChannelModel,
    pub users: Vec<UserParams>,
    pub options: SolverOptions,
    pub initial_assignment: Option<Assignment>,
}

impl Game {
    pub fn new(channel: ChannelModel, users: Vec<UserParams>, options: SolverOptions) -> Self {
        Game {
            channel,
            users,
            options,
            initial_assignment: None,
        }
    }

    pub fn solver(&self) -> Result<Solver> {
        let solver = Solver::new(self.channel.clone(), self.users.clone(), self.options.clone())?;
        match &self.initial_assignment {
            Some(a) => solver.with_assignment(a.clone()),
            None => Ok(solver),
        }
    }

    pub fn solve(&self) -> Result<IterationTrace> {
        let mut solver = self.solver()?;
        solver.run()?;
        Ok(solver.into_trace())
    }

    pub fn targets(&self) -> Vec<f64> {
        let w = self.channel.bandwidth_hz();
        self.users.iter().map(|u| u.target_sinr(w)).collect()
    }

    /// Drops user `index` from the channel, the parameters and any initial
    /// assignment.
    pub fn remove_user(&mut self, index: usize) {
        self.channel.remove_user(index);
        self.users.remove(index);
        if let Some(a) = &mut self.initial_assignment {
            let mut v = std::mem::take(a).into_inner();
            v.remove(index);
            *a = Assignment::new(v);
        }
    }
}

/// Rate and power box shared by many built-in experiments.
pub fn default_box() -> (Bounds, Bounds) {
    (Bounds::new(1e-6, 3.0), Bounds::new(0.1, 96_000.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEFAULT_NOISE_W;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    /// Bisection root of an increasing function on `[0, hi]`; independent of
    /// the closed-form roots under test.
    fn bisect(f: impl Fn(f64) -> f64, mut hi: f64) -> f64 {
        let mut lo = 0.0;
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn user(alpha2: f64, lambda: f64, p_max: f64, r_max: f64) -> UserParams {
        UserParams::new(1e6, alpha2, lambda, Bounds::new(1e-6, p_max), Bounds::new(0.1, r_max))
    }

    #[test]
    fn unpriced_equilibrium_sits_at_the_upper_corner() {
        let users = vec![user(20.0, 1e-5, 3.0, 47_000.0), user(5.0, 7.0, 0.5, 1_000.0)];
        assert_eq!(
            njrpcg_equilibrium(&users),
            vec![Strategy::new(3.0, 47_000.0), Strategy::new(0.5, 1_000.0)]
        );
        let repriced: Vec<_> = users.iter().map(|u| u.clone().with_lambda(1.0)).collect();
        assert_eq!(njrpcg_equilibrium(&repriced), njrpcg_equilibrium(&users));
    }

    #[test]
    fn unconstrained_best_response_values() {
        let s = unconstrained_best_response(1.0221, 1e6, 20.0, 1e-5).unwrap();
        assert!(rel(s.power, 1.011) < 1e-3);
        let s = unconstrained_best_response(0.2590, 1e6, 12.9492, 4e-4).unwrap();
        assert!(rel(s.power, 0.0647) < 1e-3);
        assert!(rel(s.rate, 19306.0) < 1e-3);
        // p / (r R) = α₂/α₁
        assert!(rel(s.power / (s.rate * 0.2590), 12.9492 / 1e6) < 1e-14);
        assert!(unconstrained_best_response(0.0, 1e6, 20.0, 1e-5).is_err());
    }

    #[test]
    fn rate_bounded_power_root() {
        let (r_eff, a1, a2, l) = (1.0221, 1e6, 20.0, 1e-5);
        assert!(rel(power_update_rate_bounded(r_eff, 0.0, a1, a2, l), (a2 * r_eff / (a1 * l)).sqrt()) < 1e-14);
        let oracle = bisect(|p| a1 * l * p * p + a2 * l * r_eff * 47_000.0 * p - a2 * r_eff, 1.0);
        let p = power_update_rate_bounded(r_eff, 47_000.0, a1, a2, l);
        assert!(rel(p, oracle) < 1e-12);
        assert!(rel(p, 1.0279) < 1e-4);
        let interior = unconstrained_best_response(r_eff, a1, a2, l).unwrap();
        assert!(rel(power_update_rate_bounded(r_eff, interior.rate, a1, a2, l), interior.power) < 1e-12);
    }

    #[test]
    fn power_bounded_rate_root() {
        let (r_eff, a1, a2, l) = (0.3235, 1e6, 12.9492, 4e-4);
        assert!(rel(rate_update_power_bounded(r_eff, 0.0, a1, a2, l), (a1 / (a2 * l * r_eff)).sqrt()) < 1e-14);
        let oracle = bisect(|r| a2 * l * r_eff * r * r + a1 * l * 0.0647 * r - a1, 1.0);
        let r = rate_update_power_bounded(r_eff, 0.0647, a1, a2, l);
        assert!(rel(r, oracle) < 1e-12);
        assert!(rel(r, 17899.0) < 1e-4);
        let interior = unconstrained_best_response(r_eff, a1, a2, l).unwrap();
        assert!(rel(rate_update_power_bounded(r_eff, interior.power, a1, a2, l), interior.rate) < 1e-12);
    }

    #[test]
    fn bounded_step_cases() {
        let u = user(20.0, 1e-5, 3.0, 47_000.0);
        // interior candidate: unchanged under both policies
        let inner = unconstrained_best_response(2.4, 1e6, 20.0, 1e-5).unwrap();
        assert_eq!(bounded_step(&u, 2.4, UpdatePolicy::Clamp).unwrap(), inner);
        assert_eq!(bounded_step(&u, 2.4, UpdatePolicy::Kkt).unwrap(), inner);

        // user 3 of the three-user bounded example, R_eff = 24
        let clamp = bounded_step(&u, 24.0, UpdatePolicy::Clamp).unwrap();
        assert_eq!(clamp.power, 3.0);
        assert!(rel(clamp.rate, (0.5f64 * 1e6 / 20.0 / (1e-5 * 24.0)).sqrt()) < 1e-14);
        assert!(rel(clamp.rate, 10206.0) < 1e-4);

        let kkt = bounded_step(&u, 24.0, UpdatePolicy::Kkt).unwrap();
        let oracle = bisect(|r| 20.0 * 1e-5 * 24.0 * r * r + 1e6 * 1e-5 * 3.0 * r - 1e6, 1.0);
        assert_eq!(kkt.power, 3.0);
        assert!(rel(kkt.rate, oracle) < 1e-12);
        assert!(rel(kkt.rate, 11643.0) < 1e-4);
    }

    #[test]
    fn both_bounds_violated_clamps_both() {
        // Tiny interference: power below p_min and rate above r_max at once.
        let u = user(20.0, 1e-5, 3.0, 1_000.0).with_initial(Strategy::new(1e-6, 0.1));
        let u = UserParams { power: Bounds::new(0.5, 3.0), ..u };
        for policy in [UpdatePolicy::Clamp, UpdatePolicy::Kkt] {
            let s = bounded_step(&u, 1e-3, policy).unwrap();
            assert_eq!(s, Strategy::new(0.5, 1_000.0));
        }
    }

    #[test]
    fn symmetric_fixed_point_values() {
        let s = symmetric_fixed_point(3, 1.29492e-5, 4e-4, 0.0, 1.0);
        assert!(rel(s.power, 0.0324) < 2e-3);
        assert!(rel(s.rate, 38612.0) < 1e-4);
        let g = model::path_gain(250.0, 4.0, 0.097).unwrap();
        let s = symmetric_fixed_point(10, 1.29492e-5, 1e-4, 1e-10, g);
        assert!(rel(s.power, 0.879) < 1e-3);
        assert!(rel(s.rate, 5686.0) < 1e-3);
        let s = symmetric_fixed_point(1, 2e-5, 3e-4, 1e-10, 2e-11);
        assert!(rel(s.power, (2e-5f64 * 1e-10 / (2.0 * 3e-4 * 2e-11)).sqrt()) < 1e-14);
        let single = unconstrained_best_response(1e-10 / 2e-11, 1.0, 2e-5, 3e-4).unwrap();
        assert!(rel(s.rate, single.rate) < 1e-14);
    }

    #[test]
    fn single_uncoupled_user_converges_immediately() {
        let channel = ChannelModel::new(vec![vec![1.0]], 1.0, 1e-10, 1e-10, 1e6).unwrap();
        let users = vec![user(20.0, 1e-4, 3.0, 96_000.0)];
        let trace =
            iterate_to_convergence(&channel, &users, UpdatePolicy::Clamp, ConvergenceConfig::default(), Schedule::Synchronous)
                .unwrap();
        assert!(trace.converged);
        // first step lands on the answer, second confirms it
        assert_eq!(trace.iterations_used, 2);
        let expect = unconstrained_best_response(1.0, 1e6, 20.0, 1e-4).unwrap();
        assert_eq!(trace.final_strategies()[0], expect);
    }

    #[test]
    fn equal_distance_scenario_reaches_target() {
        let channel = ChannelModel::single_cell(&[110.0; 5], DEFAULT_NOISE_W).unwrap();
        let users = vec![user(12.9492, 4e-4, 3.0, 96_000.0); 5];
        for schedule in [Schedule::Synchronous, Schedule::Sequential] {
            let trace =
                iterate_to_convergence(&channel, &users, UpdatePolicy::Clamp, ConvergenceConfig::default(), schedule)
                    .unwrap();
            assert!(trace.converged);
            for rec in &trace.last().unwrap().users {
                assert!(rel(rec.strategy.power, 0.0647) < 5e-3);
                assert!(rel(rec.strategy.rate, 19306.0) < 5e-3);
                assert!(rel(rec.sinr, 12.9492) < 1e-6);
            }
        }
    }

    #[test]
    fn unconverged_run_is_flagged_not_failed() {
        let channel = ChannelModel::single_cell(&[110.0; 5], DEFAULT_NOISE_W).unwrap();
        let users = vec![user(12.9492, 4e-4, 3.0, 96_000.0); 5];
        let config = ConvergenceConfig { max_iterations: 3, ..Default::default() };
        let trace =
            iterate_to_convergence(&channel, &users, UpdatePolicy::Clamp, config, Schedule::Synchronous).unwrap();
        assert!(!trace.converged);
        assert_eq!(trace.records.len(), 3);
    }

    #[test]
    fn paper_absolute_metric_sums_units() {
        let a = [Strategy::new(1.0, 10.0)];
        let b = [Strategy::new(1.5, 12.0)];
        assert_eq!(change_metric(&a, &b, Metric::PaperAbsolute), 2.5);
        assert!((change_metric(&a, &b, Metric::Relative) - (0.5 / 1.5 + 2.0 / 12.0)).abs() < 1e-15);
    }

    #[test]
    fn rate_perturbation_does_not_move_other_updates() {
        let channel = ChannelModel::single_cell(&[110.0, 130.0, 210.0], DEFAULT_NOISE_W).unwrap();
        let users = vec![user(20.0, 1e-4, 3.0, 96_000.0); 3];
        let base = NetworkState {
            strategies: vec![Strategy::new(0.1, 4e4), Strategy::new(0.2, 3e4), Strategy::new(0.5, 1e4)],
            assignment: Assignment::uniform(3, 0),
        };
        let mut perturbed = base.clone();
        perturbed.strategies[1].rate = 17.0;
        let a = synchronous_update(&channel, &users, &base, UpdatePolicy::Kkt).unwrap();
        let b = synchronous_update(&channel, &users, &perturbed, UpdatePolicy::Kkt).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn solver_rejects_mismatched_inputs() {
        let channel = ChannelModel::single_cell(&[110.0, 130.0], DEFAULT_NOISE_W).unwrap();
        let users = vec![user(20.0, 1e-4, 3.0, 96_000.0)];
        assert!(Solver::new(channel.clone(), users, SolverOptions::default()).is_err());
        let users = vec![user(20.0, 1e-4, 3.0, 96_000.0); 2];
        let bad = SolverOptions {
            convergence: ConvergenceConfig { delta: 0.0, ..Default::default() },
            ..Default::default()
        };
        assert!(Solver::new(channel, users, bad).is_err());
    }
}

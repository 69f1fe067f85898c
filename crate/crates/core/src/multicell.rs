//! Base-station assignment by minimum effective interference and the joint
//! rate/power/assignment iteration.

use std::ops::Deref;

use crate::error::Result;
use crate::game::{
    self, received_over_gain, Association, ConvergenceConfig, IterationTrace, NetworkState, PowerMap, Schedule,
    Solver, SolverOptions, UpdatePolicy,
};
use crate::model::{ChannelModel, Strategy, UserParams};

/// Two effective interferences closer than this (relative) count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Station index per user.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment(Vec<usize>);

impl Assignment {
    pub fn new(stations: Vec<usize>) -> Self {
        Assignment(stations)
    }

    pub fn uniform(users: usize, station: usize) -> Self {
        Assignment(vec![station; users])
    }

    pub fn station(&self, user: usize) -> usize {
        self.0[user]
    }

    pub(crate) fn set(&mut self, user: usize, station: usize) {
        self.0[user] = station;
    }

    pub(crate) fn push(&mut self, station: usize) {
        self.0.push(station);
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl Deref for Assignment {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

/// `argmin_a R^eff_{a,i}`; keeps `current` when it ties for the minimum,
/// otherwise the lowest-index minimiser wins.
pub fn assign_base_station(channel: &ChannelModel, powers: &[f64], user: usize, current: usize) -> usize {
    let costs: Vec<f64> = (0..channel.stations())
        .map(|a| received_over_gain(channel, a, user, powers))
        .collect();
    let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let ties = |c: f64| c <= best * (1.0 + TIE_TOLERANCE);
    if current < costs.len() && ties(costs[current]) {
        return current;
    }
    costs.iter().position(|&c| ties(c)).unwrap_or(0)
}

/// Reassigns every user against the current powers, then takes one bounded
/// best response at the chosen station.
///
/// Both updates are monotone in `R^eff`, so the chosen station yields the
/// smallest power and the largest rate among all stations.
pub fn multicell_step(
    channel: &ChannelModel,
    users: &[UserParams],
    state: &NetworkState,
    policy: UpdatePolicy,
) -> Result<(Assignment, Vec<Strategy>)> {
    let powers = state.powers();
    let assignment = Assignment::new(
        (0..users.len())
            .map(|i| assign_base_station(channel, &powers, i, state.assignment.station(i)))
            .collect(),
    );
    let reassigned = NetworkState {
        strategies: state.strategies.clone(),
        assignment,
    };
    let strategies = game::synchronous_update(channel, users, &reassigned, policy)?;
    Ok((reassigned.assignment, strategies))
}

/// Runs the game with dynamic assignment until the stop rule fires.
pub fn njrpcgpb_iterate(
    channel: &ChannelModel,
    users: &[UserParams],
    policy: UpdatePolicy,
    config: ConvergenceConfig,
    initial: Option<Assignment>,
) -> Result<IterationTrace> {
    let options = SolverOptions {
        policy,
        convergence: config,
        schedule: Schedule::Synchronous,
        association: Association::Dynamic,
        quantization: None,
    };
    let mut solver = Solver::new(channel.clone(), users.to_vec(), options)?;
    if let Some(assignment) = initial {
        solver = solver.with_assignment(assignment)?;
    }
    solver.run()?;
    Ok(solver.into_trace())
}

/// `I_i(p) = min_a sqrt(½ (α₂/α₁) R^eff_{a,i}(p) / λ)`, optionally clamped.
#[derive(Debug, Clone)]
pub struct MinStationPowerMap<'a> {
    pub channel: &'a ChannelModel,
    pub users: &'a [UserParams],
    pub clamped: bool,
}

impl PowerMap for MinStationPowerMap<'_> {
    fn apply(&self, powers: &[f64]) -> Vec<f64> {
        self.users
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let p = (0..self.channel.stations())
                    .map(|a| (0.5 * u.alpha_ratio() * received_over_gain(self.channel, a, i, powers) / u.lambda).sqrt())
                    .fold(f64::INFINITY, f64::min);
                if self.clamped {
                    u.power.clamp(p)
                } else {
                    p
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{bounded_step, default_box, iterate_to_convergence};
    use crate::model::{DEFAULT_BANDWIDTH_HZ, DEFAULT_NOISE_W, DEFAULT_PATHLOSS_EXPONENT, DEFAULT_SHADOWING};

    fn two_cell(d1: &[f64], d2: &[f64]) -> ChannelModel {
        ChannelModel::new(
            d1.iter().zip(d2).map(|(&a, &b)| vec![a, b]).collect(),
            DEFAULT_PATHLOSS_EXPONENT,
            DEFAULT_SHADOWING,
            DEFAULT_NOISE_W,
            DEFAULT_BANDWIDTH_HZ,
        )
        .unwrap()
    }

    fn users(n: usize) -> Vec<UserParams> {
        let (p, r) = default_box();
        vec![UserParams::new(1e6, 20.0, 1e-4, p, r); n]
    }

    #[test]
    fn single_station_is_trivial() {
        let ch = ChannelModel::single_cell(&[100.0, 200.0], DEFAULT_NOISE_W).unwrap();
        assert_eq!(assign_base_station(&ch, &[0.1, 0.2], 1, 0), 0);
    }

    #[test]
    fn symmetric_position_keeps_current_station() {
        // user 3 midway (260 m / 260 m) with a mirror-symmetric interferer layout
        let ch = two_cell(&[110.0, 130.0, 260.0, 390.0, 410.0], &[410.0, 390.0, 260.0, 130.0, 110.0]);
        let powers = [0.3, 0.4, 0.7, 0.4, 0.3];
        assert_eq!(assign_base_station(&ch, &powers, 2, 0), 0);
        assert_eq!(assign_base_station(&ch, &powers, 2, 1), 1);
    }

    #[test]
    fn walking_past_midpoint_switches_station() {
        let ch = two_cell(&[110.0, 130.0, 270.0, 390.0, 410.0], &[410.0, 390.0, 250.0, 130.0, 110.0]);
        let powers = [0.3, 0.4, 0.7, 0.4, 0.3];
        assert_eq!(assign_base_station(&ch, &powers, 2, 0), 1);
    }

    #[test]
    fn one_station_step_matches_single_cell_update() {
        let ch = ChannelModel::single_cell(&[110.0, 130.0, 210.0], DEFAULT_NOISE_W).unwrap();
        let us = users(3);
        let state = NetworkState {
            strategies: vec![Strategy::new(0.1, 1e3), Strategy::new(0.2, 2e3), Strategy::new(0.3, 3e3)],
            assignment: Assignment::uniform(3, 0),
        };
        let (a, s) = multicell_step(&ch, &us, &state, UpdatePolicy::Clamp).unwrap();
        assert_eq!(&*a, &[0, 0, 0]);
        assert_eq!(s, game::synchronous_update(&ch, &us, &state, UpdatePolicy::Clamp).unwrap());
    }

    #[test]
    fn chosen_station_minimises_power_and_maximises_rate() {
        let ch = two_cell(&[110.0, 130.0, 230.0, 390.0, 410.0], &[410.0, 390.0, 290.0, 130.0, 110.0]);
        let us = users(5);
        let state = NetworkState {
            strategies: vec![Strategy::new(0.2, 1e4); 5],
            assignment: Assignment::uniform(5, 1),
        };
        let powers = state.powers();
        let (a, s) = multicell_step(&ch, &us, &state, UpdatePolicy::Clamp).unwrap();
        for i in 0..5 {
            for station in 0..2 {
                let r_eff = ch.effective_interference(station, i, &powers).unwrap();
                let alt = bounded_step(&us[i], r_eff, UpdatePolicy::Clamp).unwrap();
                assert!(s[i].power <= alt.power && s[i].rate >= alt.rate, "user {i} station {station} vs {}", a[i]);
            }
        }
    }

    #[test]
    fn duplicate_stations_reduce_to_single_cell() {
        let d = [110.0, 130.0, 210.0];
        let ch = two_cell(&d, &d);
        let single = ChannelModel::single_cell(&d, DEFAULT_NOISE_W).unwrap();
        let us = users(3);
        let cfg = ConvergenceConfig::default();
        let multi = njrpcgpb_iterate(&ch, &us, UpdatePolicy::Clamp, cfg, None).unwrap();
        let one = iterate_to_convergence(&single, &us, UpdatePolicy::Clamp, cfg, Schedule::Synchronous).unwrap();
        assert!(multi.converged && one.converged);
        for (a, b) in multi.final_strategies().iter().zip(one.final_strategies()) {
            assert!(((a.power - b.power) / b.power).abs() < 1e-12);
            assert!(((a.rate - b.rate) / b.rate).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_assignment_does_not_change_equilibrium() {
        let ch = two_cell(&[110.0, 130.0, 240.0, 390.0, 410.0], &[410.0, 390.0, 280.0, 130.0, 110.0]);
        let us = users(5);
        let cfg = ConvergenceConfig::default();
        let a = njrpcgpb_iterate(&ch, &us, UpdatePolicy::Clamp, cfg, Some(Assignment::uniform(5, 0))).unwrap();
        let b = njrpcgpb_iterate(&ch, &us, UpdatePolicy::Clamp, cfg, Some(Assignment::uniform(5, 1))).unwrap();
        assert_eq!(a.final_stations(), b.final_stations());
        for (x, y) in a.final_strategies().iter().zip(b.final_strategies()) {
            assert!(((x.power - y.power) / y.power).abs() < 1e-6);
            assert!(((x.rate - y.rate) / y.rate).abs() < 1e-6);
        }
        for s in a.final_sinrs() {
            assert!((s / 20.0 - 1.0).abs() < 1e-6);
        }
    }
}

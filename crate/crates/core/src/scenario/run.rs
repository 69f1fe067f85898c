use std::fmt::Write as _;

use super::{Event, Scenario};
use crate::admission::{classify_users, UserOutcome, AT_TARGET_TOLERANCE};
use crate::error::Result;
use crate::game::{IterationRecord, IterationTrace};
use crate::model::Strategy;
use crate::multicell::Assignment;

/// Relative SINR band used to decide when a perturbed run has settled.
pub const SINR_BAND: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalOutcome {
    pub iteration: usize,
    pub user: usize,
    /// Incumbents' strategies just before the arrival, by user id.
    pub before: Vec<Strategy>,
    /// Incumbents' SINRs just before the arrival (empty for an arrival at
    /// iteration 1).
    pub before_sinrs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Converged iterate of this step.
    pub record: IterationRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// The iteration trace; for scenarios with moves, one record per outer
    /// step holding that step's converged values.
    pub trace: IterationTrace,
    /// User names and targets, indexed by user id (arrivals appended).
    pub names: Vec<String>,
    pub targets: Vec<f64>,
    /// Per-user outcome of the final iterate; `None` if it did not converge.
    pub categories: Option<Vec<UserOutcome>>,
    pub arrivals: Vec<ArrivalOutcome>,
    /// First iteration from which every SINR stays within [`SINR_BAND`] of
    /// its target for the rest of the run (after the last arrival).
    pub settled_at: Option<usize>,
    pub steps: Vec<StepOutcome>,
}

impl RunOutcome {
    /// Flat `key = value` summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "converged = {}", self.trace.converged);
        let _ = writeln!(out, "iterations = {}", self.trace.iterations_used);
        if let Some(last) = self.trace.last() {
            let _ = writeln!(out, "users = {}", last.users.len());
            let total: f64 = last.users.iter().map(|u| u.strategy.power).sum();
            let _ = writeln!(out, "total_power_w = {total:.16e}");
            for (k, u) in last.users.iter().enumerate() {
                let key = format!("user.{}", u.user);
                let _ = writeln!(out, "{key}.name = {}", self.names[u.user]);
                let _ = writeln!(out, "{key}.bs = {}", u.station);
                let _ = writeln!(out, "{key}.p_w = {:.16e}", u.strategy.power);
                let _ = writeln!(out, "{key}.r_bps = {:.16e}", u.strategy.rate);
                let _ = writeln!(out, "{key}.sinr = {:.16e}", u.sinr);
                let _ = writeln!(out, "{key}.target_sinr = {:.16e}", self.targets[u.user]);
                let _ = writeln!(out, "{key}.utility = {:.16e}", u.utility);
                let category = self.categories.as_ref().map_or("unconverged", |c| c[k].as_str());
                let _ = writeln!(out, "{key}.category = {category}");
            }
        }
        for (k, a) in self.arrivals.iter().enumerate() {
            let key = format!("arrival.{k}");
            let _ = writeln!(out, "{key}.iteration = {}", a.iteration);
            let _ = writeln!(out, "{key}.user = {}", a.user);
            for (id, s) in a.before.iter().enumerate() {
                let _ = writeln!(out, "{key}.before.{id}.p_w = {:.16e}", s.power);
                let _ = writeln!(out, "{key}.before.{id}.r_bps = {:.16e}", s.rate);
            }
            for (id, s) in a.before_sinrs.iter().enumerate() {
                let _ = writeln!(out, "{key}.before.{id}.sinr = {s:.16e}");
            }
        }
        if let Some(t) = self.settled_at {
            let _ = writeln!(out, "settled_iteration = {t}");
        }
        for s in &self.steps {
            let key = format!("step.{}", s.step);
            let _ = writeln!(out, "{key}.converged = {}", s.converged);
            let _ = writeln!(out, "{key}.iterations = {}", s.iterations);
            for u in &s.record.users {
                let _ = writeln!(out, "{key}.user.{}.bs = {}", u.user, u.station);
                let _ = writeln!(out, "{key}.user.{}.p_w = {:.16e}", u.user, u.strategy.power);
                let _ = writeln!(out, "{key}.user.{}.r_bps = {:.16e}", u.user, u.strategy.rate);
                let _ = writeln!(out, "{key}.user.{}.sinr = {:.16e}", u.user, u.sinr);
            }
        }
        out
    }
}

/// Executes a scenario: a plain run, a run with mid-course arrivals, or a
/// sequence of movement steps.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome> {
    scenario.validate()?;
    let w = scenario.network.bandwidth_hz;
    let mut names: Vec<String> = scenario.users.iter().map(|u| u.name.clone()).collect();
    let mut targets: Vec<f64> = scenario.users.iter().map(|u| u.params.target_sinr(w)).collect();
    for e in &scenario.events {
        if let Event::Arrival { user, .. } = e {
            names.push(user.name.clone());
            targets.push(user.params.target_sinr(w));
        }
    }

    let moves = scenario.events.iter().any(|e| matches!(e, Event::Move { .. }));
    let (trace, arrivals, steps) = if moves {
        let (trace, steps) = run_steps(scenario)?;
        (trace, Vec::new(), steps)
    } else {
        let (trace, arrivals) = run_with_arrivals(scenario)?;
        (trace, arrivals, Vec::new())
    };

    let categories = trace.last().filter(|_| trace.converged).map(|last| {
        let t: Vec<f64> = last.users.iter().map(|u| targets[u.user]).collect();
        classify_users(&trace, &t, AT_TARGET_TOLERANCE).expect("converged trace")
    });
    let settled_at = if moves { None } else { settled_at(&trace, &targets, arrivals.last().map_or(1, |a| a.iteration)) };
    Ok(RunOutcome { trace, names, targets, categories, arrivals, settled_at, steps })
}

/// Runs `scenario` once per price in `lambdas`, every user priced alike.
pub fn sweep_lambda(scenario: &Scenario, lambdas: &[f64]) -> Result<Vec<(f64, RunOutcome)>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let mut s = scenario.clone();
            s.set_lambda(lambda);
            Ok((lambda, run_scenario(&s)?))
        })
        .collect()
}

fn run_with_arrivals(scenario: &Scenario) -> Result<(IterationTrace, Vec<ArrivalOutcome>)> {
    let pending: Vec<(usize, &super::UserSpec)> = scenario
        .events
        .iter()
        .filter_map(|e| match e {
            Event::Arrival { iteration, user } => Some((*iteration, user)),
            Event::Move { .. } => None,
        })
        .collect();
    let mut solver = scenario.game()?.solver()?;
    let config = scenario.options.convergence;
    let mut arrivals = Vec::new();
    let mut next = 0;
    let mut converged = false;
    while solver.iterations() < config.max_iterations {
        if let Some(&(iteration, user)) = pending.get(next) {
            if iteration == solver.iterations() + 1 {
                let id = scenario.users.len() + next;
                arrivals.push(ArrivalOutcome {
                    iteration,
                    user: id,
                    before: solver.state().strategies.clone(),
                    before_sinrs: solver.trace().last().map_or_else(Vec::new, |r| r.users.iter().map(|u| u.sinr).collect()),
                });
                solver.add_user(user.params.clone(), user.distances_m.clone(), id)?;
                next += 1;
            }
        }
        let metric = solver.step()?;
        if metric <= config.delta && next == pending.len() {
            solver.finalize()?;
            converged = true;
            break;
        }
    }
    let mut trace = solver.into_trace();
    trace.converged = converged;
    Ok((trace, arrivals))
}

fn run_steps(scenario: &Scenario) -> Result<(IterationTrace, Vec<StepOutcome>)> {
    let mut game = scenario.game()?;
    let last_step = scenario
        .events
        .iter()
        .filter_map(|e| match e {
            Event::Move { step, .. } => Some(*step),
            Event::Arrival { .. } => None,
        })
        .max()
        .unwrap_or(1);
    let mut trace = IterationTrace { converged: true, ..IterationTrace::default() };
    let mut steps = Vec::new();
    for step in 1..=last_step {
        for e in &scenario.events {
            if let Event::Move { step: s, user, distances_m } = e {
                if *s == step {
                    let index = scenario.users.iter().position(|u| &u.name == user).expect("validated");
                    game.channel.set_distances(index, distances_m.clone())?;
                }
            }
        }
        let run = game.solve()?;
        let mut record = run.last().cloned().unwrap_or(IterationRecord { iteration: 0, users: Vec::new(), metric: 0.0 });
        record.iteration = step;
        game.initial_assignment = Some(Assignment::new(run.final_stations()));
        trace.converged &= run.converged;
        trace.iterations_used += run.iterations_used;
        trace.records.push(record.clone());
        steps.push(StepOutcome { step, converged: run.converged, iterations: run.iterations_used, record });
    }
    Ok((trace, steps))
}

fn settled_at(trace: &IterationTrace, targets: &[f64], from: usize) -> Option<usize> {
    let in_band = |r: &IterationRecord| {
        r.users.iter().all(|u| ((u.sinr - targets[u.user]) / targets[u.user]).abs() <= SINR_BAND)
    };
    let mut first = None;
    for r in trace.records.iter().filter(|r| r.iteration >= from) {
        match (in_band(r), first) {
            (true, None) => first = Some(r.iteration),
            (false, _) => first = None,
            _ => {}
        }
    }
    first
}

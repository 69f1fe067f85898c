//! Scenario files: definition, parsing and serialization, execution with
//! arrival and movement events, CSV traces, and built-in reproductions.
//!
//! A scenario is line-oriented sectioned `key = value` text; `#` starts a
//! comment. See `scenarios/README.md` for the full schema.

mod builtin;
mod parse;
mod reproduce;
mod run;
mod trace;

use std::fmt::Write as _;

pub use builtin::{builtin_scenario, BUILTIN_NAMES};
pub use parse::parse_scenario;
pub use reproduce::{reproduce, Check, Report, Target};
pub use run::{run_scenario, sweep_lambda, ArrivalOutcome, RunOutcome, StepOutcome, SINR_BAND};
pub use trace::{emit_trace, read_trace, write_trace, TraceRow, TRACE_HEADER};

use crate::admission::PricingRule;
use crate::error::{Error, Result};
use crate::game::{Association, Game, Metric, Schedule, SolverOptions, UpdatePolicy};
use crate::model::{
    ChannelModel, UserParams, DEFAULT_BANDWIDTH_HZ, DEFAULT_NOISE_W, DEFAULT_PATHLOSS_EXPONENT, DEFAULT_SHADOWING,
};
use crate::multicell::Assignment;
use crate::quantizer::QuantizeMode;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub stations: usize,
    pub pathloss_exponent: f64,
    pub shadowing: f64,
    pub noise_w: f64,
    pub bandwidth_hz: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            stations: 1,
            pathloss_exponent: DEFAULT_PATHLOSS_EXPONENT,
            shadowing: DEFAULT_SHADOWING,
            noise_w: DEFAULT_NOISE_W,
            bandwidth_hz: DEFAULT_BANDWIDTH_HZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserSpec {
    pub name: String,
    /// Distance to each station, in metres.
    pub distances_m: Vec<f64>,
    pub params: UserParams,
    /// Starting station, if pinned.
    pub station: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// A new user joins before the update of `iteration` (1-based) and the
    /// run continues.
    Arrival { iteration: usize, user: UserSpec },
    /// Before outer step `step`, `user` relocates; each step is solved to
    /// convergence from the initial strategies, carrying the previous
    /// step's stations.
    Move { step: usize, user: String, distances_m: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: NetworkSpec,
    pub users: Vec<UserSpec>,
    pub options: SolverOptions,
    /// When present, overrides every user's `lambda`.
    pub pricing: Option<PricingRule>,
    pub events: Vec<Event>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let stations = self.network.stations;
        if stations == 0 {
            return Err(Error::config("at least one station is required"));
        }
        if self.users.is_empty() {
            return Err(Error::config("at least one user is required"));
        }
        let mut names: Vec<String> = Vec::new();
        let mut check_user = |u: &UserSpec| -> Result<()> {
            if names.contains(&u.name) {
                return Err(Error::config(format!("duplicate user name `{}`", u.name)));
            }
            names.push(u.name.clone());
            if u.distances_m.len() != stations {
                return Err(Error::config(format!(
                    "user `{}` lists {} distances for {stations} stations",
                    u.name,
                    u.distances_m.len()
                )));
            }
            if u.station.is_some_and(|s| s >= stations) {
                return Err(Error::config(format!("user `{}` starts at a station that does not exist", u.name)));
            }
            u.params.validate().map_err(|e| Error::config(format!("user `{}`: {e}", u.name)))
        };
        for u in &self.users {
            check_user(u)?;
        }
        let pinned = self.users.iter().filter(|u| u.station.is_some()).count();
        if pinned != 0 && pinned != self.users.len() {
            return Err(Error::config("either every user or no user may pin a starting station"));
        }

        let arrivals = self.events.iter().any(|e| matches!(e, Event::Arrival { .. }));
        let moves = self.events.iter().any(|e| matches!(e, Event::Move { .. }));
        if arrivals && moves {
            return Err(Error::config("arrival and move events cannot be combined in one scenario"));
        }
        if arrivals && self.pricing.is_some() {
            return Err(Error::config("a [pricing] rule cannot be combined with arrival events"));
        }
        let mut last = 0;
        for e in &self.events {
            let at = match e {
                Event::Arrival { iteration, user } => {
                    check_user(user)?;
                    if user.station.is_some() {
                        return Err(Error::config("an arriving user cannot pin a station"));
                    }
                    if *iteration > self.options.convergence.max_iterations {
                        return Err(Error::config(format!("arrival at iteration {iteration} is beyond max_iterations")));
                    }
                    *iteration
                }
                Event::Move { step, user, distances_m } => {
                    if !self.users.iter().any(|u| &u.name == user) {
                        return Err(Error::config(format!("move refers to unknown user `{user}`")));
                    }
                    if distances_m.len() != stations {
                        return Err(Error::config(format!("move of `{user}` lists {} distances", distances_m.len())));
                    }
                    *step
                }
            };
            if at == 0 {
                return Err(Error::config("event iterations and steps start at 1"));
            }
            if at <= last {
                return Err(Error::config("event iterations/steps must be strictly increasing"));
            }
            last = at;
        }
        self.options.convergence.validate()
    }

    pub fn channel(&self) -> Result<ChannelModel> {
        let n = &self.network;
        ChannelModel::with_stations(
            n.stations,
            self.users.iter().map(|u| u.distances_m.clone()).collect(),
            n.pathloss_exponent,
            n.shadowing,
            n.noise_w,
            n.bandwidth_hz,
        )
    }

    /// The game over the initial users, with any pricing rule applied.
    pub fn game(&self) -> Result<Game> {
        let mut game = Game::new(
            self.channel()?,
            self.users.iter().map(|u| u.params.clone()).collect(),
            self.options.clone(),
        );
        if self.users.iter().all(|u| u.station.is_some()) {
            game.initial_assignment = Some(Assignment::new(self.users.iter().filter_map(|u| u.station).collect()));
        }
        if let Some(rule) = &self.pricing {
            rule.apply(&mut game)?;
        }
        Ok(game)
    }

    /// Sets every user's price (including arrivals) and drops any pricing
    /// rule.
    pub fn set_lambda(&mut self, lambda: f64) {
        self.pricing = None;
        for u in &mut self.users {
            u.params.lambda = lambda;
        }
        for e in &mut self.events {
            if let Event::Arrival { user, .. } = e {
                user.params.lambda = lambda;
            }
        }
    }

    /// Serializes to the text format; `parse_scenario` reads it back to an
    /// equal scenario.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let n = &self.network;
        let _ = writeln!(out, "[network]");
        let _ = writeln!(out, "stations = {}", n.stations);
        let _ = writeln!(out, "pathloss_exponent = {:e}", n.pathloss_exponent);
        let _ = writeln!(out, "shadowing = {:e}", n.shadowing);
        let _ = writeln!(out, "noise_w = {:e}", n.noise_w);
        let _ = writeln!(out, "bandwidth_hz = {:e}", n.bandwidth_hz);

        for u in &self.users {
            let _ = writeln!(out, "\n[user {}]", u.name);
            write_user_keys(&mut out, u);
            if let Some(s) = u.station {
                let _ = writeln!(out, "station = {s}");
            }
        }

        let o = &self.options;
        let _ = writeln!(out, "\n[run]");
        let _ = writeln!(out, "policy = {}", policy_name(o.policy));
        let _ = writeln!(out, "schedule = {}", schedule_name(o.schedule));
        let _ = writeln!(out, "association = {}", association_name(o.association));
        let _ = writeln!(out, "delta = {:e}", o.convergence.delta);
        let _ = writeln!(out, "max_iterations = {}", o.convergence.max_iterations);
        let _ = writeln!(out, "metric = {}", metric_name(o.convergence.metric));
        if let Some(q) = &o.quantization {
            let _ = writeln!(out, "rates = {}", join(q.set.rates()));
            let _ = writeln!(out, "quantize = {}", quantize_name(q.mode));
        }

        if let Some(p) = &self.pricing {
            let _ = writeln!(out, "\n[pricing]");
            let _ = writeln!(out, "rule = {}", p.kind);
            let _ = writeln!(out, "c = {:e}", p.c);
            let _ = writeln!(out, "dc = {:e}", p.dc);
        }

        for e in &self.events {
            match e {
                Event::Arrival { iteration, user } => {
                    let _ = writeln!(out, "\n[event arrival]");
                    let _ = writeln!(out, "iteration = {iteration}");
                    let _ = writeln!(out, "name = {}", user.name);
                    write_user_keys(&mut out, user);
                }
                Event::Move { step, user, distances_m } => {
                    let _ = writeln!(out, "\n[event move]");
                    let _ = writeln!(out, "step = {step}");
                    let _ = writeln!(out, "user = {user}");
                    let _ = writeln!(out, "distances_m = {}", join(distances_m));
                }
            }
        }
        out
    }
}

fn write_user_keys(out: &mut String, u: &UserSpec) {
    let p = &u.params;
    let _ = writeln!(out, "distances_m = {}", join(&u.distances_m));
    let _ = writeln!(out, "alpha1 = {:e}", p.alpha1);
    let _ = writeln!(out, "alpha2 = {:e}", p.alpha2);
    let _ = writeln!(out, "lambda = {:e}", p.lambda);
    let _ = writeln!(out, "p_min = {:e}", p.power.min);
    let _ = writeln!(out, "p_max = {:e}", p.power.max);
    let _ = writeln!(out, "r_min = {:e}", p.rate.min);
    let _ = writeln!(out, "r_max = {:e}", p.rate.max);
    let _ = writeln!(out, "p_init = {:e}", p.initial.power);
    let _ = writeln!(out, "r_init = {:e}", p.initial.rate);
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ")
}

pub(crate) fn policy_name(p: UpdatePolicy) -> &'static str {
    match p {
        UpdatePolicy::Clamp => "clamp",
        UpdatePolicy::Kkt => "kkt",
    }
}

pub(crate) fn schedule_name(s: Schedule) -> &'static str {
    match s {
        Schedule::Synchronous => "sync",
        Schedule::Sequential => "seq",
    }
}

fn association_name(a: Association) -> &'static str {
    match a {
        Association::Fixed => "fixed",
        Association::Dynamic => "dynamic",
    }
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::Relative => "relative",
        Metric::PaperAbsolute => "paper_absolute",
    }
}

fn quantize_name(q: QuantizeMode) -> &'static str {
    match q {
        QuantizeMode::EveryIteration => "every_iteration",
        QuantizeMode::AtConvergence => "at_convergence",
    }
}

pub fn parse_policy(s: &str) -> Result<UpdatePolicy> {
    match s {
        "clamp" => Ok(UpdatePolicy::Clamp),
        "kkt" => Ok(UpdatePolicy::Kkt),
        _ => Err(Error::config(format!("unknown policy `{s}` (clamp|kkt)"))),
    }
}

pub fn parse_schedule(s: &str) -> Result<Schedule> {
    match s {
        "sync" => Ok(Schedule::Synchronous),
        "seq" => Ok(Schedule::Sequential),
        _ => Err(Error::config(format!("unknown schedule `{s}` (sync|seq)"))),
    }
}

pub(crate) fn parse_association(s: &str) -> Result<Association> {
    match s {
        "fixed" => Ok(Association::Fixed),
        "dynamic" => Ok(Association::Dynamic),
        _ => Err(Error::config(format!("unknown association `{s}` (fixed|dynamic)"))),
    }
}

pub(crate) fn parse_metric(s: &str) -> Result<Metric> {
    match s {
        "relative" => Ok(Metric::Relative),
        "paper_absolute" => Ok(Metric::PaperAbsolute),
        _ => Err(Error::config(format!("unknown metric `{s}` (relative|paper_absolute)"))),
    }
}

pub(crate) fn parse_quantize(s: &str) -> Result<QuantizeMode> {
    match s {
        "every_iteration" => Ok(QuantizeMode::EveryIteration),
        "at_convergence" => Ok(QuantizeMode::AtConvergence),
        _ => Err(Error::config(format!("unknown quantize mode `{s}` (every_iteration|at_convergence)"))),
    }
}

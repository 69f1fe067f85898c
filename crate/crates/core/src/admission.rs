//! Pricing rules, outcome classification, pricing escalation and user
//! removal.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::game::{Game, IterationTrace};

/// Relative SINR band counted as "at target".
pub const AT_TARGET_TOLERANCE: f64 = 1e-3;

/// Escalation budget used when none is given.
pub const DEFAULT_MAX_STEPS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PricingKind {
    /// `λ = c`
    Constant,
    /// `λ = c·M`
    PerUserCount,
    /// `λ = c·g_i`
    DirectGain,
    /// `λ = c/g_i`
    InverseGain,
    /// `λ = c·α₂/α₁`
    TargetRatio,
    /// `λ = c·α₁/α₂`
    InverseTargetRatio,
}

impl PricingKind {
    pub fn is_gain_dependent(self) -> bool {
        matches!(self, PricingKind::DirectGain | PricingKind::InverseGain)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PricingKind::Constant => "constant",
            PricingKind::PerUserCount => "per_user_count",
            PricingKind::DirectGain => "direct_gain",
            PricingKind::InverseGain => "inverse_gain",
            PricingKind::TargetRatio => "target_ratio",
            PricingKind::InverseTargetRatio => "inverse_target_ratio",
        }
    }
}

impl fmt::Display for PricingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PricingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "constant" => PricingKind::Constant,
            "per_user_count" => PricingKind::PerUserCount,
            "direct_gain" => PricingKind::DirectGain,
            "inverse_gain" => PricingKind::InverseGain,
            "target_ratio" => PricingKind::TargetRatio,
            "inverse_target_ratio" => PricingKind::InverseTargetRatio,
            other => return Err(Error::config(format!("unknown pricing rule `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingRule {
    pub kind: PricingKind,
    pub c: f64,
    pub dc: f64,
}

impl PricingRule {
    /// A rule with the default escalation step `Δc = c/4`.
    pub fn new(kind: PricingKind, c: f64) -> Result<Self> {
        Self::with_step(kind, c, 0.25 * c)
    }

    pub fn with_step(kind: PricingKind, c: f64, dc: f64) -> Result<Self> {
        if !(c > 0.0) || !(dc > 0.0) {
            return Err(Error::config("pricing coefficient and step must be positive"));
        }
        Ok(PricingRule { kind, c, dc })
    }

    /// `λ_i` for one user. `gain` is the user's direct gain, or `None` in a
    /// multi-cell network where no single gain exists.
    pub fn evaluate(&self, users: usize, gain: Option<f64>, alpha1: f64, alpha2: f64) -> Result<f64> {
        pricing_rule_eval(self, users, gain, alpha1, alpha2)
    }

    /// Writes `λ_i` into every user of `game`.
    pub fn apply(&self, game: &mut Game) -> Result<()> {
        let m = game.users.len();
        let single_cell = game.channel.stations() == 1;
        for i in 0..m {
            let gain = single_cell.then(|| game.channel.gain(i, 0));
            let u = &game.users[i];
            let lambda = self.evaluate(m, gain, u.alpha1, u.alpha2)?;
            game.users[i].lambda = lambda;
        }
        Ok(())
    }
}

pub fn pricing_rule_eval(rule: &PricingRule, users: usize, gain: Option<f64>, alpha1: f64, alpha2: f64) -> Result<f64> {
    let c = rule.c;
    let need_gain = || {
        gain.ok_or_else(|| {
            Error::config(format!(
                "pricing rule `{}` depends on a per-station gain and cannot be used with several base stations",
                rule.kind
            ))
        })
    };
    Ok(match rule.kind {
        PricingKind::Constant => c,
        PricingKind::PerUserCount => c * users as f64,
        PricingKind::DirectGain => c * need_gain()?,
        PricingKind::InverseGain => c / need_gain()?,
        PricingKind::TargetRatio => c * alpha2 / alpha1,
        PricingKind::InverseTargetRatio => c * alpha1 / alpha2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserOutcome {
    BelowTarget,
    AtTarget,
    AboveTarget,
}

impl UserOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            UserOutcome::BelowTarget => "below_target",
            UserOutcome::AtTarget => "at_target",
            UserOutcome::AboveTarget => "above_target",
        }
    }
}

impl fmt::Display for UserOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify_sinr(sinr: f64, target: f64, tolerance: f64) -> UserOutcome {
    let deviation = (sinr - target) / target;
    if deviation < -tolerance {
        UserOutcome::BelowTarget
    } else if deviation > tolerance {
        UserOutcome::AboveTarget
    } else {
        UserOutcome::AtTarget
    }
}

/// Categorises the final iterate of a converged trace.
pub fn classify_users(trace: &IterationTrace, targets: &[f64], tolerance: f64) -> Result<Vec<UserOutcome>> {
    if !trace.converged {
        return Err(Error::NotConverged);
    }
    let last = trace.last().ok_or(Error::NotConverged)?;
    if last.users.len() != targets.len() {
        return Err(Error::config("one target per user is required"));
    }
    Ok(last
        .users
        .iter()
        .zip(targets)
        .map(|(u, &t)| classify_sinr(u.sinr, t, tolerance))
        .collect())
}

#[derive(Debug, Clone)]
pub struct Escalation {
    /// Least tested coefficient with nobody below target, or the last one
    /// tried when `achieved` is false.
    pub coefficient: f64,
    pub achieved: bool,
    /// `(c, outcomes)` for every run, in order.
    pub history: Vec<(f64, Vec<UserOutcome>)>,
    pub trace: IterationTrace,
}

/// Raises the pricing coefficient by `dc` from `c0` until nobody is below
/// target, running at most `max_steps` games.
pub fn escalate_pricing(game: &Game, rule: PricingKind, c0: f64, dc: f64, max_steps: usize) -> Result<Escalation> {
    if !(dc > 0.0) || !(c0 > 0.0) {
        return Err(Error::config("escalation needs positive c0 and dc"));
    }
    if max_steps == 0 {
        return Err(Error::config("escalation needs at least one step"));
    }
    let targets = game.targets();
    let mut history = Vec::new();
    let mut trace = IterationTrace::default();
    let mut c = c0;
    for k in 0..max_steps {
        c = c0 + k as f64 * dc;
        let mut priced = game.clone();
        PricingRule::with_step(rule, c, dc)?.apply(&mut priced)?;
        trace = priced.solve()?;
        let outcomes = classify_users(&trace, &targets, AT_TARGET_TOLERANCE)?;
        let done = !outcomes.contains(&UserOutcome::BelowTarget);
        history.push((c, outcomes));
        if done {
            return Ok(Escalation { coefficient: c, achieved: true, history, trace });
        }
    }
    Ok(Escalation { coefficient: c, achieved: false, history, trace })
}

#[derive(Debug, Clone)]
pub struct Removal {
    /// Identifiers of removed users, in removal order.
    pub removed: Vec<usize>,
    /// Identifiers of the users still in the network.
    pub remaining: Vec<usize>,
    /// Final run over the remaining users (empty when nobody is left).
    pub trace: IterationTrace,
    pub emptied: bool,
}

/// Removes below-target users one at a time, worst achieved/target SINR
/// ratio first, re-solving after each removal.
pub fn removal_loop(game: &Game) -> Result<Removal> {
    let mut game = game.clone();
    let mut ids: Vec<usize> = (0..game.users.len()).collect();
    let mut removed = Vec::new();
    loop {
        if game.users.is_empty() {
            return Ok(Removal { removed, remaining: ids, trace: IterationTrace::default(), emptied: true });
        }
        let mut solver = game.solver()?.with_ids(ids.clone())?;
        solver.run()?;
        let trace = solver.into_trace();
        let targets = game.targets();
        let outcomes = classify_users(&trace, &targets, AT_TARGET_TOLERANCE)?;
        let sinrs = trace.final_sinrs();
        let worst = outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| **o == UserOutcome::BelowTarget)
            .map(|(i, _)| (i, sinrs[i] / targets[i]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i);
        match worst {
            None => return Ok(Removal { removed, remaining: ids, trace, emptied: false }),
            Some(i) => {
                removed.push(ids.remove(i));
                game.remove_user(i);
            }
        }
    }
}

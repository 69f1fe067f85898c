use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use jrpc::admission::{escalate_pricing, removal_loop, PricingKind, DEFAULT_MAX_STEPS};
use jrpc::scenario::{
    emit_trace, parse_policy, parse_scenario, reproduce, run_scenario, sweep_lambda, Scenario, Target,
};
use jrpc::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Joint rate and power control game for CDMA uplinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and print (or write) its summary.
    Run {
        scenario: PathBuf,
        /// Write the per-iteration CSV trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the summary here instead of stdout.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long, value_parser = ["clamp", "kkt"])]
        policy: Option<String>,
        #[arg(long, value_parser = ["sync", "seq"])]
        schedule: Option<String>,
    },
    /// Re-run a built-in experiment and compare with its expected values.
    Reproduce {
        /// table1..table4, fig1..fig4, or `all`.
        target: String,
    },
    /// Run a scenario over evenly spaced common prices.
    SweepLambda {
        scenario: PathBuf,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 10)]
        steps: usize,
    },
    /// Raise the price until no user is below its target SINR.
    TunePricing {
        scenario: PathBuf,
        /// Price increment (defaults to the scenario's `dc`, else c0/4).
        #[arg(long)]
        dc: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: usize,
    },
    /// Remove below-target users one at a time until the rest are served.
    RemoveLoop { scenario: PathBuf },
}

fn load(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    parse_scenario(&text)
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { scenario, trace, summary, policy, schedule } => {
            let mut s = load(&scenario)?;
            if let Some(p) = policy {
                s.options.policy = parse_policy(&p)?;
            }
            if let Some(sch) = schedule {
                s.options.schedule = jrpc::scenario::parse_schedule(&sch)?;
            }
            let out = run_scenario(&s)?;
            if let Some(path) = trace {
                emit_trace(&out.trace, &path)?;
            }
            match summary {
                Some(path) => fs::write(path, out.summary())?,
                None => print!("{}", out.summary()),
            }
            Ok(out.trace.converged)
        }
        Command::Reproduce { target } => {
            let targets = match target.as_str() {
                "all" => Target::ALL.to_vec(),
                t => vec![t.parse()?],
            };
            let mut ok = true;
            for t in targets {
                let report = reproduce(t)?;
                print!("{report}");
                ok &= report.passed();
            }
            Ok(ok)
        }
        Command::SweepLambda { scenario, from, to, steps } => {
            if !(from > 0.0 && to > 0.0) || steps == 0 {
                return Err(Error::Config("need positive --from/--to and at least one step".into()));
            }
            let s = load(&scenario)?;
            let lambdas: Vec<f64> = match steps {
                1 => vec![from],
                n => (0..n).map(|k| from + (to - from) * k as f64 / (n - 1) as f64).collect(),
            };
            let mut all_converged = true;
            println!("lambda,user,p_w,r_bps,sinr");
            for (lambda, out) in sweep_lambda(&s, &lambdas)? {
                all_converged &= out.trace.converged;
                if let Some(last) = out.trace.last() {
                    for u in &last.users {
                        println!(
                            "{lambda:.16e},{},{:.16e},{:.16e},{:.16e}",
                            u.user, u.strategy.power, u.strategy.rate, u.sinr
                        );
                    }
                }
            }
            Ok(all_converged)
        }
        Command::TunePricing { scenario, dc, max_steps } => {
            let s = load(&scenario)?;
            let (kind, c0, rule_dc) = match &s.pricing {
                Some(rule) => (rule.kind, rule.c, rule.dc),
                None => {
                    let c0 = s.users[0].params.lambda;
                    if s.users.iter().any(|u| u.params.lambda != c0) {
                        return Err(Error::Config(
                            "users have different prices; add a [pricing] section to tune them together".into(),
                        ));
                    }
                    (PricingKind::Constant, c0, 0.25 * c0)
                }
            };
            let e = escalate_pricing(&s.game()?, kind, c0, dc.unwrap_or(rule_dc), max_steps)?;
            for (c, outcomes) in &e.history {
                let list: Vec<&str> = outcomes.iter().map(|o| o.as_str()).collect();
                println!("c = {c:.6e}: {}", list.join(" "));
            }
            println!("rule = {kind}");
            println!("achieved = {}", e.achieved);
            println!("c = {:.16e}", e.coefficient);
            if let Some(last) = e.trace.last() {
                for u in &last.users {
                    println!(
                        "user.{}: p_w = {:.6e}, r_bps = {:.6e}, sinr = {:.6}",
                        s.users[u.user].name, u.strategy.power, u.strategy.rate, u.sinr
                    );
                }
            }
            Ok(e.achieved)
        }
        Command::RemoveLoop { scenario } => {
            let s = load(&scenario)?;
            let r = removal_loop(&s.game()?)?;
            let name = |i: &usize| s.users[*i].name.as_str();
            println!("removed = {}", r.removed.iter().map(name).collect::<Vec<_>>().join(", "));
            println!("remaining = {}", r.remaining.iter().map(name).collect::<Vec<_>>().join(", "));
            if let Some(last) = r.trace.last() {
                for u in &last.users {
                    println!(
                        "user.{}: p_w = {:.6e}, r_bps = {:.6e}, sinr = {:.6}",
                        s.users[u.user].name, u.strategy.power, u.strategy.rate, u.sinr
                    );
                }
            }
            Ok(true)
        }
    }
}

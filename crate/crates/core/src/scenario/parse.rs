use super::{
    parse_association, parse_metric, parse_policy, parse_quantize, parse_schedule, Event, NetworkSpec, Scenario,
    UserSpec,
};
use crate::admission::{PricingKind, PricingRule};
use crate::error::{Error, Result};
use crate::game::{default_box, Association, ConvergenceConfig, SolverOptions};
use crate::model::{Bounds, Strategy, UserParams};
use crate::quantizer::{QuantizeMode, RateQuantization, RateSet};

const DEFAULT_ALPHA1: f64 = 1e6;
const DEFAULT_ALPHA2: f64 = 20.0;
const DEFAULT_LAMBDA: f64 = 1e-4;

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    kind: String,
    arg: String,
    line: usize,
    entries: Vec<Entry>,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn lex(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let inner = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, "section header is missing `]`"))?
                .trim();
            let (kind, arg) = match inner.split_once(char::is_whitespace) {
                Some((k, a)) => (k.to_string(), a.trim().to_string()),
                None => (inner.to_string(), String::new()),
            };
            sections.push(Section { kind, arg, line, entries: Vec::new() });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, found `{content}`")))?;
        let section = sections
            .last_mut()
            .ok_or_else(|| err(line, "key outside of any section"))?;
        let key = key.trim().to_string();
        if section.entries.iter().any(|e| e.key == key) {
            return Err(err(line, format!("duplicate key `{key}`")));
        }
        section.entries.push(Entry { key, value: value.trim().to_string(), line });
    }
    Ok(sections)
}

/// Key access that remembers which keys were consumed, so leftovers can be
/// reported as unknown.
struct Fields<'a> {
    section: &'a Section,
    used: Vec<bool>,
}

impl<'a> Fields<'a> {
    fn new(section: &'a Section) -> Self {
        Fields { section, used: vec![false; section.entries.len()] }
    }

    fn take(&mut self, key: &str) -> Option<&'a Entry> {
        let i = self.section.entries.iter().position(|e| e.key == key)?;
        self.used[i] = true;
        Some(&self.section.entries[i])
    }

    fn word(&mut self, key: &str) -> Option<(&'a str, usize)> {
        self.take(key).map(|e| (e.value.as_str(), e.line))
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.take(key).map(number).transpose()
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.take(key)
            .map(|e| {
                e.value
                    .parse::<usize>()
                    .map_err(|_| err(e.line, format!("`{}` must be a non-negative integer, found `{}`", e.key, e.value)))
            })
            .transpose()
    }

    fn list(&mut self, key: &str) -> Result<Option<(Vec<f64>, usize)>> {
        let Some(e) = self.take(key) else {
            return Ok(None);
        };
        let values = e
            .value
            .split(',')
            .map(|v| {
                let v = v.trim();
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(e.line, format!("`{}`: `{v}` is not a number", e.key)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Some((values, e.line)))
    }

    fn finish(self) -> Result<()> {
        match self.used.iter().position(|u| !u) {
            Some(i) => {
                let e = &self.section.entries[i];
                let name = match self.section.arg.is_empty() {
                    true => self.section.kind.clone(),
                    false => format!("{} {}", self.section.kind, self.section.arg),
                };
                Err(err(e.line, format!("unknown key `{}` in [{name}]", e.key)))
            }
            None => Ok(()),
        }
    }
}

fn number(e: &Entry) -> Result<f64> {
    e.value
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| err(e.line, format!("`{}` must be a number, found `{}`", e.key, e.value)))
}

fn at(line: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Parse { .. } => e,
        Error::Config(m) | Error::Domain(m) => err(line, m),
        other => err(line, other.to_string()),
    }
}

fn parse_network(s: &Section) -> Result<NetworkSpec> {
    let mut f = Fields::new(s);
    let d = NetworkSpec::default();
    let spec = NetworkSpec {
        stations: f.usize("stations")?.unwrap_or(d.stations),
        pathloss_exponent: f.f64("pathloss_exponent")?.unwrap_or(d.pathloss_exponent),
        shadowing: f.f64("shadowing")?.unwrap_or(d.shadowing),
        noise_w: f.f64("noise_w")?.unwrap_or(d.noise_w),
        bandwidth_hz: f.f64("bandwidth_hz")?.unwrap_or(d.bandwidth_hz),
    };
    f.finish()?;
    if spec.stations == 0 {
        return Err(err(s.line, "`stations` must be at least 1"));
    }
    Ok(spec)
}

/// Reads the per-user keys shared by `[user]` and `[event arrival]`.
fn parse_user_keys(f: &mut Fields, name: String, network: &NetworkSpec, line: usize) -> Result<UserSpec> {
    let (distances_m, dline) = f
        .list("distances_m")?
        .ok_or_else(|| err(line, format!("user `{name}` needs `distances_m`")))?;
    if distances_m.len() != network.stations {
        return Err(err(
            dline,
            format!("`distances_m` has {} entries for {} stations", distances_m.len(), network.stations),
        ));
    }
    let alpha1 = f.f64("alpha1")?.unwrap_or(DEFAULT_ALPHA1);
    let alpha2 = match (f.f64("alpha2")?, f.take("target_sinr")) {
        (Some(_), Some(e)) => return Err(err(e.line, "give either `alpha2` or `target_sinr`, not both")),
        (Some(a2), None) => a2,
        (None, Some(e)) => number(e)? * alpha1 / network.bandwidth_hz,
        (None, None) => DEFAULT_ALPHA2,
    };
    let lambda = match f.list("lambda")? {
        None => DEFAULT_LAMBDA,
        Some((values, l)) => {
            if values.len() != 1 && values.len() != network.stations {
                return Err(err(l, "`lambda` takes one value or one per station"));
            }
            if values.iter().any(|v| *v != values[0]) {
                return Err(err(l, "`lambda` must be the same at every station"));
            }
            values[0]
        }
    };
    let (pb, rb) = default_box();
    let power = Bounds::new(f.f64("p_min")?.unwrap_or(pb.min), f.f64("p_max")?.unwrap_or(pb.max));
    let rate = Bounds::new(f.f64("r_min")?.unwrap_or(rb.min), f.f64("r_max")?.unwrap_or(rb.max));
    let initial = Strategy::new(
        f.f64("p_init")?.unwrap_or(power.min),
        f.f64("r_init")?.unwrap_or(rate.min),
    );
    let params = UserParams::new(alpha1, alpha2, lambda, power, rate).with_initial(initial);
    params.validate().map_err(at(line))?;
    Ok(UserSpec { name, distances_m, params, station: None })
}

fn parse_run(s: &Section, stations: usize) -> Result<SolverOptions> {
    let mut f = Fields::new(s);
    let d = ConvergenceConfig::default();
    let mut options = SolverOptions {
        association: if stations > 1 { Association::Dynamic } else { Association::Fixed },
        ..SolverOptions::default()
    };
    if let Some((v, l)) = f.word("policy") {
        options.policy = parse_policy(v).map_err(at(l))?;
    }
    if let Some((v, l)) = f.word("schedule") {
        options.schedule = parse_schedule(v).map_err(at(l))?;
    }
    if let Some((v, l)) = f.word("association") {
        options.association = parse_association(v).map_err(at(l))?;
    }
    options.convergence.delta = f.f64("delta")?.unwrap_or(d.delta);
    options.convergence.max_iterations = f.usize("max_iterations")?.unwrap_or(d.max_iterations);
    if let Some((v, l)) = f.word("metric") {
        options.convergence.metric = parse_metric(v).map_err(at(l))?;
    }
    let mode = match f.word("quantize") {
        Some((v, l)) => Some((parse_quantize(v).map_err(at(l))?, l)),
        None => None,
    };
    match (f.list("rates")?, mode) {
        (Some((rates, l)), mode) => {
            let set = RateSet::new(rates).map_err(at(l))?;
            let mode = mode.map_or(QuantizeMode::default(), |m| m.0);
            options.quantization = Some(RateQuantization { set, mode });
        }
        (None, Some((_, l))) => return Err(err(l, "`quantize` needs a `rates` list")),
        (None, None) => {}
    }
    f.finish()?;
    options.convergence.validate().map_err(at(s.line))?;
    Ok(options)
}

fn parse_pricing(s: &Section) -> Result<PricingRule> {
    let mut f = Fields::new(s);
    let (rule, l) = f.word("rule").ok_or_else(|| err(s.line, "[pricing] needs `rule`"))?;
    let kind: PricingKind = rule.parse().map_err(at(l))?;
    let c = f.f64("c")?.ok_or_else(|| err(s.line, "[pricing] needs `c`"))?;
    let dc = f.f64("dc")?.unwrap_or(0.25 * c);
    f.finish()?;
    PricingRule::with_step(kind, c, dc).map_err(at(s.line))
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let sections = lex(text)?;

    let mut network = None;
    for s in sections.iter().filter(|s| s.kind == "network") {
        if network.is_some() {
            return Err(err(s.line, "duplicate [network] section"));
        }
        if !s.arg.is_empty() {
            return Err(err(s.line, "[network] takes no name"));
        }
        network = Some(parse_network(s)?);
    }
    let network = network.unwrap_or_default();

    let mut users = Vec::new();
    let mut options = None;
    let mut pricing = None;
    let mut events = Vec::new();
    for s in &sections {
        match (s.kind.as_str(), s.arg.as_str()) {
            ("network", _) => {}
            ("user", "") => return Err(err(s.line, "[user] needs a name, e.g. [user u1]")),
            ("user", name) => {
                let mut f = Fields::new(s);
                let mut user = parse_user_keys(&mut f, name.to_string(), &network, s.line)?;
                user.station = f.usize("station")?;
                f.finish()?;
                if users.iter().any(|u: &UserSpec| u.name == user.name) {
                    return Err(err(s.line, format!("duplicate user `{}`", user.name)));
                }
                users.push(user);
            }
            ("run", "") => {
                if options.is_some() {
                    return Err(err(s.line, "duplicate [run] section"));
                }
                options = Some(parse_run(s, network.stations)?);
            }
            ("pricing", "") => {
                if pricing.is_some() {
                    return Err(err(s.line, "duplicate [pricing] section"));
                }
                pricing = Some(parse_pricing(s)?);
            }
            ("event", "arrival") => {
                let mut f = Fields::new(s);
                let iteration = f.usize("iteration")?.ok_or_else(|| err(s.line, "arrival needs `iteration`"))?;
                let (name, _) = f.word("name").ok_or_else(|| err(s.line, "arrival needs `name`"))?;
                let user = parse_user_keys(&mut f, name.to_string(), &network, s.line)?;
                f.finish()?;
                events.push((s.line, Event::Arrival { iteration, user }));
            }
            ("event", "move") => {
                let mut f = Fields::new(s);
                let step = f.usize("step")?.ok_or_else(|| err(s.line, "move needs `step`"))?;
                let (user, _) = f.word("user").ok_or_else(|| err(s.line, "move needs `user`"))?;
                let (distances_m, _) = f.list("distances_m")?.ok_or_else(|| err(s.line, "move needs `distances_m`"))?;
                f.finish()?;
                events.push((s.line, Event::Move { step, user: user.to_string(), distances_m }));
            }
            ("event", other) => return Err(err(s.line, format!("unknown event kind `{other}` (arrival|move)"))),
            (kind, _) => return Err(err(s.line, format!("unknown section [{kind}]"))),
        }
    }

    let options = options.unwrap_or_else(|| SolverOptions {
        association: if network.stations > 1 { Association::Dynamic } else { Association::Fixed },
        ..SolverOptions::default()
    });
    let first_line = sections.first().map_or(1, |s| s.line);
    let scenario = Scenario {
        network,
        users,
        options,
        pricing,
        events: events.iter().map(|(_, e)| e.clone()).collect(),
    };
    if let Err(e) = scenario.validate() {
        // attribute event problems to the offending section where possible
        let line = events
            .iter()
            .find(|(_, ev)| {
                let mut single = scenario.clone();
                single.events = vec![ev.clone()];
                single.validate().is_err()
            })
            .map_or(first_line, |(l, _)| *l);
        return Err(at(line)(e));
    }
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::UpdatePolicy;

    #[test]
    fn minimal_document_takes_defaults() {
        let s = parse_scenario("[user a]\ndistances_m = 100\n").unwrap();
        assert_eq!(s.network, NetworkSpec::default());
        assert_eq!(s.options, SolverOptions::default());
        let u = &s.users[0].params;
        assert_eq!((u.alpha1, u.alpha2, u.lambda), (1e6, 20.0, 1e-4));
        assert_eq!(u.initial, Strategy::new(u.power.min, u.rate.min));
        assert!(s.events.is_empty() && s.pricing.is_none());
    }

    #[test]
    fn literal_values_are_kept() {
        let text = "
            [user u1]   # first
            distances_m = 110
            alpha2 = 12.9492
            lambda = 4e-4
            p_max = 0.0486
            [run]
            policy = kkt
        ";
        let s = parse_scenario(text).unwrap();
        let u = &s.users[0].params;
        assert_eq!(u.power.max, 0.0486);
        assert_eq!(u.alpha2, 12.9492);
        assert_eq!(s.options.policy, UpdatePolicy::Kkt);
    }

    #[test]
    fn target_sinr_sets_alpha2() {
        let s = parse_scenario("[user a]\ndistances_m = 100\nalpha1 = 2e6\ntarget_sinr = 10\n").unwrap();
        assert!((s.users[0].params.alpha2 - 20.0).abs() < 1e-12);
        assert!(parse_scenario("[user a]\ndistances_m = 100\nalpha2 = 3\ntarget_sinr = 10\n").is_err());
    }

    fn line_of(e: Error) -> usize {
        match e {
            Error::Parse { line, .. } => line,
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn per_station_lambda_must_agree() {
        let text = "[network]\nstations = 2\n[user a]\ndistances_m = 100, 200\nlambda = 1e-4, 2e-4\n";
        assert_eq!(line_of(parse_scenario(text).unwrap_err()), 5);
        let ok = "[network]\nstations = 2\n[user a]\ndistances_m = 100, 200\nlambda = 1e-4, 1e-4\n";
        assert_eq!(parse_scenario(ok).unwrap().users[0].params.lambda, 1e-4);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(line_of(parse_scenario("[user a]\ndistances_m = 100\ncolour = red\n").unwrap_err()), 3);
        assert_eq!(line_of(parse_scenario("[user a]\ndistances_m = 100, 3\n").unwrap_err()), 2);
        assert_eq!(line_of(parse_scenario("[user a]\ndistances_m = 100\np_max = x\n").unwrap_err()), 3);
        assert_eq!(line_of(parse_scenario("\n\n[user a]\ndistances_m = 100\np_min = 5\n").unwrap_err()), 3);
        assert_eq!(line_of(parse_scenario("x = 1\n").unwrap_err()), 1);
        assert_eq!(line_of(parse_scenario("[user a]\ndistances_m = 1\n[oops]\n").unwrap_err()), 3);
        assert_eq!(line_of(parse_scenario("[user a]\ndistances_m = 1\ndistances_m = 2\n").unwrap_err()), 3);
    }

    #[test]
    fn events_are_checked() {
        let base = "[user a]\ndistances_m = 100\n";
        let arrival = |it: usize| format!("[event arrival]\niteration = {it}\nname = b\ndistances_m = 120\n");
        assert!(parse_scenario(&format!("{base}{}", arrival(20))).is_ok());
        assert!(parse_scenario(&format!("{base}{}", arrival(0))).is_err());
        assert!(parse_scenario(&format!("{base}{}{}", arrival(20), arrival(10))).is_err());
        let mv = "[event move]\nstep = 2\nuser = ghost\ndistances_m = 120\n";
        assert_eq!(line_of(parse_scenario(&format!("{base}{mv}")).unwrap_err()), 3);
        let mixed = format!("{base}{}[event move]\nstep = 2\nuser = a\ndistances_m = 120\n", arrival(5));
        assert!(parse_scenario(&mixed).is_err());
    }

    #[test]
    fn rates_and_pricing() {
        let text = "[user a]\ndistances_m = 100\n[run]\nrates = 19200, 9600\nquantize = at_convergence\n[pricing]\nrule = per_user_count\nc = 2e-5\n";
        let s = parse_scenario(text).unwrap();
        let q = s.options.quantization.unwrap();
        assert_eq!(q.set.rates(), &[9600.0, 19200.0]);
        assert_eq!(q.mode, QuantizeMode::AtConvergence);
        let p = s.pricing.unwrap();
        assert_eq!(p.kind, PricingKind::PerUserCount);
        assert!((p.dc - 5e-6).abs() < 1e-20);
        assert!(parse_scenario("[user a]\ndistances_m = 100\n[run]\nquantize = at_convergence\n").is_err());
    }

    #[test]
    fn multi_station_defaults_to_dynamic_association() {
        let s = parse_scenario("[network]\nstations = 2\n[user a]\ndistances_m = 100, 300\n").unwrap();
        assert_eq!(s.options.association, Association::Dynamic);
    }
}

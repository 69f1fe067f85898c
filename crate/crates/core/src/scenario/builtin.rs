use super::{parse_scenario, Scenario};
use crate::error::{Error, Result};

const FILES: &[(&str, &str)] = &[
    ("table1", include_str!("../../scenarios/table1.scn")),
    ("table2_distinct", include_str!("../../scenarios/table2_distinct.scn")),
    ("table2_equal", include_str!("../../scenarios/table2_equal.scn")),
    ("table3", include_str!("../../scenarios/table3.scn")),
    ("table4", include_str!("../../scenarios/table4.scn")),
    ("fig1", include_str!("../../scenarios/fig1.scn")),
    ("fig2", include_str!("../../scenarios/fig2.scn")),
    ("fig3", include_str!("../../scenarios/fig3.scn")),
    ("fig4", include_str!("../../scenarios/fig4.scn")),
];

pub const BUILTIN_NAMES: &[&str] = &[
    "table1",
    "table2_distinct",
    "table2_equal",
    "table3",
    "table4",
    "fig1",
    "fig2",
    "fig3",
    "fig4",
];

/// Source text of a built-in scenario.
pub fn builtin_scenario(name: &str) -> Option<&'static str> {
    FILES.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub(crate) fn load(name: &str) -> Result<Scenario> {
    let text = builtin_scenario(name).ok_or_else(|| Error::config(format!("no built-in scenario `{name}`")))?;
    parse_scenario(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_parses_and_round_trips() {
        assert_eq!(FILES.len(), BUILTIN_NAMES.len());
        for name in BUILTIN_NAMES {
            let s = load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(parse_scenario(&s.to_text()).unwrap(), s, "{name}");
        }
    }
}

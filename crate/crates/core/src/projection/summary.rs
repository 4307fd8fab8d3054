use std::io::Write;

use super::{CountryTrajectory, Scenario, ScenarioTrajectories, SrbPaths};
use crate::quantile::Summary;

pub const SCENARIO_HEADER: &str =
    "country_code,year,scenario,q50,q025,q975,q10,q90,infl_q50,infl_q025,infl_q975";

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummaryRow {
    pub country_code: String,
    pub year: i32,
    pub scenario: Scenario,
    pub theta: Summary,
    pub inflation: Summary,
}

/// Median and interval bounds of SRB and of the inflation component, per
/// country and year.
pub fn summarize(traj: &ScenarioTrajectories) -> Vec<ScenarioSummaryRow> {
    traj.countries.iter().flat_map(summarize_country).collect()
}

fn summarize_country(c: &CountryTrajectory) -> Vec<ScenarioSummaryRow> {
    SrbPaths::years()
        .map(|year| ScenarioSummaryRow {
            country_code: c.code.clone(),
            year,
            scenario: c.scenario,
            theta: Summary::from_draws(&c.theta_draws(year)),
            inflation: Summary::from_draws(c.inflation_draws(year)),
        })
        .collect()
}

pub fn write_scenario_csv<W: Write>(
    rows: &[ScenarioSummaryRow],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "{SCENARIO_HEADER}")?;
    for r in rows {
        let (t, i) = (&r.theta, &r.inflation);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.country_code,
            r.year,
            r.scenario,
            t.median,
            t.q025,
            t.q975,
            t.q10,
            t.q90,
            i.median,
            i.q025,
            i.q975
        )?;
    }
    Ok(())
}

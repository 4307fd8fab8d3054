//! Missing female births implied by the gap between realized and
//! inflation-free SRB.
//!
//! With total births `B` and SRB `Θ`, female births are `B / (1 + Θ)`. The
//! inflation-free count divides the realized male births by the baseline
//! SRB `β η`. Annual missing female births (AMFB) are the difference, and
//! cumulative missing female births (CMFB) sum AMFB over a window.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::BirthsTable;
use crate::projection::{CountryTrajectory, Scenario, ScenarioTrajectories};
use crate::quantile::Summary;
use crate::{GRID_END, GRID_START};

pub const DEFAULT_WINDOW_START: i32 = 1970;
pub const BIRTHS_HEADER: &str =
    "country_code,year,scenario,amfb_q50,amfb_q025,amfb_q975,cmfb_q50,cmfb_q025,cmfb_q975";

#[derive(Debug, Error, PartialEq)]
pub enum BirthsError {
    #[error("SRB must be positive, got {0}")]
    NonPositiveTheta(f64),
    #[error("no births for {country} in {year}")]
    MissingBirths { country: String, year: i32 },
    #[error("invalid window {t1}..{t2}; it must lie within {GRID_START}..{GRID_END}")]
    InvalidWindow { t1: i32, t2: i32 },
}

/// Female births `B / (1 + Θ)`.
pub fn female_births(births: f64, theta: f64) -> Result<f64, BirthsError> {
    if !(theta > 0.0) {
        return Err(BirthsError::NonPositiveTheta(theta));
    }
    Ok(births / (1.0 + theta))
}

/// Female births that the realized male births imply under the
/// inflation-free SRB.
pub fn inflation_free_female(
    births: f64,
    female: f64,
    theta_free: f64,
) -> Result<f64, BirthsError> {
    if !(theta_free > 0.0) {
        return Err(BirthsError::NonPositiveTheta(theta_free));
    }
    Ok((births - female) / theta_free)
}

/// AMFB for a single draw.
pub fn missing_female_births(births: f64, theta: f64, theta_free: f64) -> Result<f64, BirthsError> {
    let female = female_births(births, theta)?;
    Ok(inflation_free_female(births, female, theta_free)? - female)
}

/// Per-draw AMFB and CMFB of one country over `t1..=t2`, year-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CountryAccounting {
    pub code: String,
    pub t1: i32,
    pub n_draws: usize,
    pub amfb: Vec<f64>,
    pub cmfb: Vec<f64>,
}

impl CountryAccounting {
    fn row(&self, year: i32) -> std::ops::Range<usize> {
        let k = (year - self.t1) as usize * self.n_draws;
        k..k + self.n_draws
    }

    pub fn amfb_draws(&self, year: i32) -> &[f64] {
        &self.amfb[self.row(year)]
    }

    /// Running sum of AMFB from `t1` through `year`.
    pub fn cmfb_draws(&self, year: i32) -> &[f64] {
        &self.cmfb[self.row(year)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthsAccounting {
    pub scenario: Scenario,
    pub unit: String,
    pub t1: i32,
    pub t2: i32,
    pub countries: Vec<CountryAccounting>,
}

impl BirthsAccounting {
    pub fn country(&self, code: &str) -> Option<&CountryAccounting> {
        self.countries.iter().find(|c| c.code == code)
    }
}

pub fn amfb_cmfb(
    traj: &ScenarioTrajectories,
    births: &BirthsTable,
    t1: i32,
    t2: i32,
) -> Result<BirthsAccounting, BirthsError> {
    if t1 > t2 || t1 < GRID_START || t2 > GRID_END {
        return Err(BirthsError::InvalidWindow { t1, t2 });
    }
    let countries = traj
        .countries
        .par_iter()
        .map(|c| account_country(c, births, t1, t2))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BirthsAccounting {
        scenario: traj.scenario,
        unit: births.unit.clone(),
        t1,
        t2,
        countries,
    })
}

fn account_country(
    c: &CountryTrajectory,
    births: &BirthsTable,
    t1: i32,
    t2: i32,
) -> Result<CountryAccounting, BirthsError> {
    let n = c.n_draws;
    let mut amfb = Vec::with_capacity(n * (t2 - t1 + 1) as usize);
    let mut cmfb = Vec::with_capacity(amfb.capacity());
    for year in t1..=t2 {
        let b = births
            .get(&c.code, year)
            .ok_or_else(|| BirthsError::MissingBirths {
                country: c.code.clone(),
                year,
            })?;
        let base = c.base_draws(year);
        let infl = c.inflation_draws(year);
        for g in 0..n {
            let a = missing_female_births(b, base[g] + infl[g], base[g])?;
            let prev = if year == t1 {
                0.0
            } else {
                cmfb[cmfb.len() - n]
            };
            amfb.push(a);
            cmfb.push(prev + a);
        }
    }
    Ok(CountryAccounting {
        code: c.code.clone(),
        t1,
        n_draws: n,
        amfb,
        cmfb,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthsSummaryRow {
    pub country_code: String,
    pub year: i32,
    pub scenario: Scenario,
    pub amfb: Summary,
    pub cmfb: Summary,
}

pub fn summarize(acc: &BirthsAccounting) -> Vec<BirthsSummaryRow> {
    acc.countries
        .iter()
        .flat_map(|c| {
            (acc.t1..=acc.t2).map(move |year| BirthsSummaryRow {
                country_code: c.code.clone(),
                year,
                scenario: acc.scenario,
                amfb: Summary::from_draws(c.amfb_draws(year)),
                cmfb: Summary::from_draws(c.cmfb_draws(year)),
            })
        })
        .collect()
}

/// Writes the accounting table. The births unit goes on a leading `#` line
/// so that readers of the numbers know their scale.
pub fn write_births_csv<W: Write>(
    rows: &[BirthsSummaryRow],
    unit: &str,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "# unit={unit}")?;
    writeln!(out, "{BIRTHS_HEADER}")?;
    for r in rows {
        let (a, c) = (&r.amfb, &r.cmfb);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.country_code, r.year, r.scenario, a.median, a.q025, a.q975, c.median, c.q025, c.q975
        )?;
    }
    Ok(())
}

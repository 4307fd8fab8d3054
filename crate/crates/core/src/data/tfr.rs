use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_f64, parse_year, CsvTable, IngestError, RowError, RowErrorKind};

/// Earliest year accepted as start-year truncation or location.
const ANCHOR_FLOOR: i32 = 1970;
const TFR_TRUNCATION: f64 = 6.0;
const TFR_LOCATION: f64 = 2.9;

/// Annual TFR for one country: the median series and optional projection
/// trajectories (`trajectories[j][k]` is trajectory j in `years[k]`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TfrSeries {
    pub years: Vec<i32>,
    pub median: Vec<f64>,
    pub trajectories: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TfrTable {
    series: BTreeMap<String, TfrSeries>,
}

/// Fertility anchors of the transition start-year prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfrAnchors {
    pub country_code: String,
    /// First year with median TFR at or below 6.
    pub f6: i32,
    /// First year with median TFR at or below 2.9.
    pub f29: i32,
    /// Lower truncation of the start year.
    pub z: i32,
    /// Location of the start year.
    pub x: i32,
    /// The median never reaches 2.9 on the grid; `f29` is the last grid year.
    pub never_crosses: bool,
}

/// `(f6, f29, never_crosses)` for a series on `years`. Series that never reach
/// a threshold report the last year.
pub fn anchor_years(years: &[i32], values: &[f64]) -> (i32, i32, bool) {
    let last = *years.last().unwrap_or(&crate::GRID_END);
    let first_at_or_below = |thr: f64| {
        years
            .iter()
            .zip(values)
            .find(|(_, &v)| v <= thr)
            .map(|(&y, _)| y)
    };
    let f6 = first_at_or_below(TFR_TRUNCATION).unwrap_or(last);
    match first_at_or_below(TFR_LOCATION) {
        Some(f29) => (f6, f29, false),
        None => (f6, last, true),
    }
}

pub fn compute_tfr_anchors(tfr: &TfrTable, country: &str) -> Result<TfrAnchors, IngestError> {
    let s = tfr
        .get(country)
        .filter(|s| !s.years.is_empty())
        .ok_or_else(|| IngestError::MissingTfr(country.to_string()))?;
    let (f6, f29, never_crosses) = anchor_years(&s.years, &s.median);
    Ok(TfrAnchors {
        country_code: country.to_string(),
        f6,
        f29,
        z: f6.max(ANCHOR_FLOOR),
        x: f29.max(ANCHOR_FLOOR),
        never_crosses,
    })
}

impl TfrSeries {
    /// Location year `x` implied by trajectory `j`.
    pub fn trajectory_location(&self, j: usize) -> i32 {
        anchor_years(&self.years, &self.trajectories[j])
            .1
            .max(ANCHOR_FLOOR)
    }
}

impl TfrTable {
    pub fn insert(&mut self, country: &str, series: TfrSeries) {
        self.series.insert(country.to_string(), series);
    }

    pub fn get(&self, country: &str) -> Option<&TfrSeries> {
        self.series.get(country)
    }

    pub fn countries(&self) -> impl Iterator<Item = &String> {
        self.series.keys()
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::from_table(&CsvTable::read(path)?)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self, IngestError> {
        Self::from_table(&CsvTable::from_reader(reader, "tfr.csv")?)
    }

    fn from_table(table: &CsvTable) -> Result<Self, IngestError> {
        let c_code = table.column("country_code")?;
        let c_year = table.column("year")?;
        let c_med = table.column("tfr_median")?;
        let traj_cols: Vec<usize> = (1..)
            .map_while(|j| table.headers.iter().position(|h| *h == format!("traj_{j}")))
            .collect();

        let mut rows: BTreeMap<String, Vec<(i32, f64, Vec<f64>)>> = BTreeMap::new();
        let mut errors = Vec::new();
        for (line, rec) in &table.records {
            let get = |i: usize| rec.get(i).unwrap_or("");
            let parsed = (|| {
                let year = parse_year(get(c_year), "year")?;
                let med = positive(parse_f64(get(c_med), "tfr_median")?, "tfr_median")?;
                let traj = traj_cols
                    .iter()
                    .map(|&c| positive(parse_f64(get(c), &table.headers[c])?, &table.headers[c]))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok::<_, RowErrorKind>((year, med, traj))
            })();
            match parsed {
                Ok(row) => rows.entry(get(c_code).to_string()).or_default().push(row),
                Err(kind) => errors.push(RowError { line: *line, kind }),
            }
        }
        if !errors.is_empty() {
            return Err(IngestError::InvalidRows {
                file: table.file.clone(),
                errors,
            });
        }

        let mut out = TfrTable::default();
        for (code, mut rs) in rows {
            rs.sort_by_key(|r| r.0);
            if rs.windows(2).any(|w| w[1].0 != w[0].0 + 1) {
                return Err(IngestError::NonContiguousTfr(code));
            }
            let mut s = TfrSeries {
                years: rs.iter().map(|r| r.0).collect(),
                median: rs.iter().map(|r| r.1).collect(),
                trajectories: vec![Vec::with_capacity(rs.len()); traj_cols.len()],
            };
            for r in &rs {
                for (j, v) in r.2.iter().enumerate() {
                    s.trajectories[j].push(*v);
                }
            }
            out.insert(&code, s);
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let m = self
            .series
            .values()
            .map(|s| s.trajectories.len())
            .max()
            .unwrap_or(0);
        write!(out, "country_code,year,tfr_median")?;
        for j in 1..=m {
            write!(out, ",traj_{j}")?;
        }
        writeln!(out)?;
        for (code, s) in &self.series {
            for (k, (year, med)) in s.years.iter().zip(&s.median).enumerate() {
                write!(out, "{code},{year},{med}")?;
                for j in 0..m {
                    let v = s.trajectories.get(j).map_or(*med, |t| t[k]);
                    write!(out, ",{v}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

fn positive(v: f64, column: &str) -> Result<f64, RowErrorKind> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(RowErrorKind::OutOfRange {
            column: column.to_string(),
            value: v,
        })
    }
}

//! Input tables and the model-specific sub-databases built from them.

mod births_table;
mod observation;
mod registry;
mod tfr;

use std::path::Path;

use thiserror::Error;

pub use births_table::BirthsTable;
pub use observation::{Observation, ObservationSet, SourceType, OBSERVATIONS_HEADER};
pub use registry::{Country, CountryRegistry};
pub use tfr::{anchor_years, compute_tfr_anchors, TfrAnchors, TfrSeries, TfrTable};

use crate::RISK_FREE_CUTOFF;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: malformed CSV: {message}")]
    Csv { file: String, message: String },
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file}: {} invalid row(s), first at line {}: {}", .errors.len(), .errors[0].line, .errors[0].kind)]
    InvalidRows { file: String, errors: Vec<RowError> },
    #[error("unknown country `{0}`")]
    UnknownCountry(String),
    #[error("duplicate country `{0}` in registry")]
    DuplicateCountry(String),
    #[error("no TFR series for country `{0}`")]
    MissingTfr(String),
    #[error("TFR series for `{0}` is not contiguous in years")]
    NonContiguousTfr(String),
    #[error("{file}: births unit changes from `{first}` to `{other}`")]
    MixedUnits {
        file: String,
        first: String,
        other: String,
    },
}

/// A rejected input row; `line` is the 1-based line in the file (header is line 1).
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: usize,
    pub kind: RowErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RowErrorKind {
    #[error("SRB must be positive, got {0}")]
    NonPositiveSrb(f64),
    #[error("unknown source type `{0}`")]
    UnknownSourceType(String),
    #[error("unknown country `{0}`")]
    UnknownCountry(String),
    #[error("column `{column}`: cannot parse `{value}`")]
    InvalidNumber { column: String, value: String },
    #[error("column `{column}`: value {value} out of range")]
    OutOfRange { column: String, value: f64 },
}

impl IngestError {
    /// Kinds of all row errors, empty for other variants. Handy in tests.
    pub fn row_kinds(&self) -> Vec<&RowErrorKind> {
        match self {
            IngestError::InvalidRows { errors, .. } => errors.iter().map(|e| &e.kind).collect(),
            _ => Vec::new(),
        }
    }
}

/// Header-indexed view over a CSV file, shared by the table loaders.
pub(crate) struct CsvTable {
    pub file: String,
    pub headers: Vec<String>,
    pub records: Vec<(usize, csv::StringRecord)>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self, IngestError> {
        let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(&bytes[..], &path.display().to_string())
    }

    /// Lines starting with `#` are provenance comments and skipped.
    pub fn from_reader<R: std::io::Read>(reader: R, file: &str) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let csv_err = |e: csv::Error| IngestError::Csv {
            file: file.to_string(),
            message: e.to_string(),
        };
        let headers = rdr
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect();
        let mut records = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            records.push((line, rec));
        }
        Ok(CsvTable {
            file: file.to_string(),
            headers,
            records,
        })
    }

    pub fn column(&self, name: &str) -> Result<usize, IngestError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn {
                file: self.file.clone(),
                column: name.to_string(),
            })
    }
}

pub(crate) fn parse_f64(raw: &str, column: &str) -> Result<f64, RowErrorKind> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| RowErrorKind::InvalidNumber {
            column: column.to_string(),
            value: raw.to_string(),
        })
}

pub(crate) fn parse_year(raw: &str, column: &str) -> Result<i32, RowErrorKind> {
    raw.parse::<i32>().map_err(|_| RowErrorKind::InvalidNumber {
        column: column.to_string(),
        value: raw.to_string(),
    })
}

/// All rows from countries not at risk, plus rows of at-risk countries with
/// reference year up to 1970.
pub fn build_risk_free_db(obs: &ObservationSet, reg: &CountryRegistry) -> ObservationSet {
    obs.filtered(|o| !reg.is_at_risk(&o.country_code) || o.year <= RISK_FREE_CUTOFF)
}

/// All rows from at-risk countries.
pub fn build_at_risk_db(obs: &ObservationSet, reg: &CountryRegistry) -> ObservationSet {
    obs.filtered(|o| reg.is_at_risk(&o.country_code))
}

/// All rows of one country. The country must exist in the registry.
pub fn build_country_db(
    obs: &ObservationSet,
    reg: &CountryRegistry,
    country: &str,
) -> Result<ObservationSet, IngestError> {
    if reg.get(country).is_none() {
        return Err(IngestError::UnknownCountry(country.to_string()));
    }
    Ok(obs.filtered(|o| o.country_code == country))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> CountryRegistry {
        CountryRegistry::new(vec![
            Country::new("CHN", "China", "EAS", true),
            Country::new("AUS", "Australia", "ENAN", false),
            Country::new("SEN", "Senegal", "SSA", true),
        ])
        .unwrap()
    }

    fn obs(code: &str, year: f64) -> Observation {
        Observation {
            country_code: code.into(),
            year,
            value: 1.06,
            source_type: SourceType::CrvsSrs,
            sampling_sd: 0.01,
        }
    }

    #[test]
    fn risk_free_excludes_at_risk_after_1970() {
        let reg = registry();
        let set = ObservationSet::new(vec![
            obs("CHN", 1975.0),
            obs("CHN", 1965.0),
            obs("CHN", 1970.0),
            obs("AUS", 2010.0),
            obs("AUS", 1930.0),
        ]);
        let rf = build_risk_free_db(&set, &reg);
        let years: Vec<(String, f64)> = rf
            .iter()
            .map(|o| (o.country_code.clone(), o.year))
            .collect();
        assert_eq!(
            years,
            vec![
                ("AUS".into(), 1930.0),
                ("AUS".into(), 2010.0),
                ("CHN".into(), 1965.0),
                ("CHN".into(), 1970.0)
            ]
        );
    }

    #[test]
    fn at_risk_and_country_dbs() {
        let reg = registry();
        let mut rows: Vec<Observation> = (0..12).map(|i| obs("SEN", 1990.0 + i as f64)).collect();
        rows.push(obs("AUS", 2000.0));
        rows.push(obs("CHN", 2000.0));
        let set = ObservationSet::new(rows);
        let ar = build_at_risk_db(&set, &reg);
        assert_eq!(ar.len(), 13);
        assert!(ar.iter().all(|o| reg.is_at_risk(&o.country_code)));
        assert_eq!(build_country_db(&set, &reg, "SEN").unwrap().len(), 12);
        assert!(matches!(
            build_country_db(&set, &reg, "XXX"),
            Err(IngestError::UnknownCountry(c)) if c == "XXX"
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn risk_free_partition(years in proptest::collection::vec((0usize..3, 1940.0f64..2020.0), 0..60)) {
                let reg = registry();
                let codes = ["CHN", "AUS", "SEN"];
                let set = ObservationSet::new(years.iter().map(|(c, y)| obs(codes[*c], *y)).collect());
                let rf = build_risk_free_db(&set, &reg);
                let late = set.filtered(|o| reg.is_at_risk(&o.country_code) && o.year > 1970.0);
                let mut union: Vec<Observation> = rf.iter().cloned().chain(late.iter().cloned()).collect();
                prop_assert_eq!(union.len(), set.len());
                let union = ObservationSet::new(std::mem::take(&mut union));
                prop_assert_eq!(union.rows(), set.rows());
            }
        }
    }
}

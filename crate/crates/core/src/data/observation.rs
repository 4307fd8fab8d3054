use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_f64, CountryRegistry, CsvTable, IngestError, RowError, RowErrorKind};

pub const OBSERVATIONS_HEADER: &str = "country_code,year,srb,source_type,sampling_sd";

/// Data source categories. CRVS and SRS share one category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceType {
    #[serde(rename = "CRVS_SRS")]
    CrvsSrs,
    Census,
    #[serde(rename = "DHS")]
    Dhs,
    #[serde(rename = "OtherDHS")]
    OtherDhs,
    Other,
}

impl SourceType {
    pub const ALL: [SourceType; 5] = [
        SourceType::CrvsSrs,
        SourceType::Census,
        SourceType::Dhs,
        SourceType::OtherDhs,
        SourceType::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SourceType::CrvsSrs => "CRVS_SRS",
            SourceType::Census => "Census",
            SourceType::Dhs => "DHS",
            SourceType::OtherDhs => "OtherDHS",
            SourceType::Other => "Other",
        }
    }

    pub fn parse(raw: &str) -> Option<SourceType> {
        match raw {
            "CRVS_SRS" | "CRVS/SRS" => Some(SourceType::CrvsSrs),
            "Census" => Some(SourceType::Census),
            "DHS" => Some(SourceType::Dhs),
            "OtherDHS" | "Other DHS" => Some(SourceType::OtherDhs),
            "Other" => Some(SourceType::Other),
            _ => None,
        }
    }

    /// Registration data carries no non-sampling error.
    pub fn has_nonsampling_error(self) -> bool {
        self != SourceType::CrvsSrs
    }
}

impl fmt::Display for SourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One SRB data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub country_code: String,
    /// Reference year, possibly fractional (survey period midpoints).
    pub year: f64,
    /// Observed SRB, male over female births.
    pub value: f64,
    pub source_type: SourceType,
    /// Sampling or stochastic standard deviation on the log scale.
    pub sampling_sd: f64,
}

impl Observation {
    /// Calendar year on the annual grid this observation informs.
    pub fn grid_year(&self) -> i32 {
        (self.year + 0.5).floor() as i32
    }
}

/// Observations sorted by (country, year); ties keep input order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    rows: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(mut rows: Vec<Observation>) -> Self {
        rows.sort_by(|a, b| {
            a.country_code
                .cmp(&b.country_code)
                .then(a.year.total_cmp(&b.year))
        });
        ObservationSet { rows }
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.rows.iter()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn filtered(&self, keep: impl Fn(&Observation) -> bool) -> ObservationSet {
        ObservationSet {
            rows: self.rows.iter().filter(|o| keep(o)).cloned().collect(),
        }
    }

    /// Distinct country codes in sorted order.
    pub fn countries(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for o in &self.rows {
            if out.last() != Some(&o.country_code) {
                out.push(o.country_code.clone());
            }
        }
        out
    }

    pub fn for_country<'a>(&'a self, code: &'a str) -> impl Iterator<Item = &'a Observation> + 'a {
        self.rows.iter().filter(move |o| o.country_code == code)
    }

    /// Loads `observations.csv`. With a registry, rows of unregistered
    /// countries are rejected.
    pub fn load(path: &Path, registry: Option<&CountryRegistry>) -> Result<Self, IngestError> {
        let table = CsvTable::read(path)?;
        Self::from_table(&table, registry)
    }

    pub fn from_reader<R: std::io::Read>(
        reader: R,
        registry: Option<&CountryRegistry>,
    ) -> Result<Self, IngestError> {
        let table = CsvTable::from_reader(reader, "observations.csv")?;
        Self::from_table(&table, registry)
    }

    fn from_table(
        table: &CsvTable,
        registry: Option<&CountryRegistry>,
    ) -> Result<Self, IngestError> {
        let c_code = table.column("country_code")?;
        let c_year = table.column("year")?;
        let c_srb = table.column("srb")?;
        let c_src = table.column("source_type")?;
        let c_sd = table.column("sampling_sd")?;

        let mut rows = Vec::with_capacity(table.records.len());
        let mut errors = Vec::new();
        for (line, rec) in &table.records {
            match parse_row(rec, [c_code, c_year, c_srb, c_src, c_sd], registry) {
                Ok(o) => rows.push(o),
                Err(kind) => errors.push(RowError { line: *line, kind }),
            }
        }
        if !errors.is_empty() {
            return Err(IngestError::InvalidRows {
                file: table.file.clone(),
                errors,
            });
        }
        Ok(ObservationSet::new(rows))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{OBSERVATIONS_HEADER}")?;
        for o in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                o.country_code, o.year, o.value, o.source_type, o.sampling_sd
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}

impl<'a> IntoIterator for &'a ObservationSet {
    type Item = &'a Observation;
    type IntoIter = std::slice::Iter<'a, Observation>;
    fn into_iter(self) -> Self::IntoIter {
        self.rows.iter()
    }
}

fn parse_row(
    rec: &csv::StringRecord,
    cols: [usize; 5],
    registry: Option<&CountryRegistry>,
) -> Result<Observation, RowErrorKind> {
    let field = |i: usize| rec.get(i).unwrap_or("");
    let code = field(cols[0]).to_string();
    if let Some(reg) = registry {
        if reg.get(&code).is_none() {
            return Err(RowErrorKind::UnknownCountry(code));
        }
    }
    let year = parse_f64(field(cols[1]), "year")?;
    if !(1900.0..=2100.0).contains(&year) {
        return Err(RowErrorKind::OutOfRange {
            column: "year".into(),
            value: year,
        });
    }
    let value = parse_f64(field(cols[2]), "srb")?;
    if value <= 0.0 {
        return Err(RowErrorKind::NonPositiveSrb(value));
    }
    let source_type = SourceType::parse(field(cols[3]))
        .ok_or_else(|| RowErrorKind::UnknownSourceType(field(cols[3]).to_string()))?;
    let sampling_sd = parse_f64(field(cols[4]), "sampling_sd")?;
    if sampling_sd < 0.0 {
        return Err(RowErrorKind::OutOfRange {
            column: "sampling_sd".into(),
            value: sampling_sd,
        });
    }
    Ok(Observation {
        country_code: code,
        year,
        value,
        source_type,
        sampling_sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<ObservationSet, IngestError> {
        ObservationSet::from_reader(text.as_bytes(), None)
    }

    #[test]
    fn parses_a_census_row() {
        let set =
            parse("country_code,year,srb,source_type,sampling_sd\nCHN,1982.5,1.107,Census,0.002\n")
                .unwrap();
        assert_eq!(
            set.rows(),
            &[Observation {
                country_code: "CHN".into(),
                year: 1982.5,
                value: 1.107,
                source_type: SourceType::Census,
                sampling_sd: 0.002,
            }]
        );
        assert_eq!(set.rows()[0].grid_year(), 1983);
    }

    #[test]
    fn negative_srb_is_rejected_with_line_number() {
        let err = parse("country_code,year,srb,source_type,sampling_sd\nCHN,1990,1.1,DHS,0.01\nCHN,1991,-1.0,DHS,0.01\n")
            .unwrap_err();
        match err {
            IngestError::InvalidRows { errors, .. } => {
                assert_eq!(errors.len(), 1);
                assert_eq!(errors[0].line, 3);
                assert_eq!(errors[0].kind, RowErrorKind::NonPositiveSrb(-1.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_unknown_source() {
        let err = parse("country_code,year,srb,sampling_sd\nCHN,1990,1.1,0.01\n").unwrap_err();
        assert!(
            matches!(err, IngestError::MissingColumn { ref column, .. } if column == "source_type")
        );
        let err = parse("country_code,year,srb,source_type,sampling_sd\nCHN,1990,1.1,Tweet,0.01\n")
            .unwrap_err();
        assert_eq!(
            err.row_kinds(),
            vec![&RowErrorKind::UnknownSourceType("Tweet".into())]
        );
    }

    #[test]
    fn unknown_country_against_registry() {
        let reg = CountryRegistry::new(vec![super::super::Country::new(
            "CHN", "China", "EAS", true,
        )])
        .unwrap();
        let err = ObservationSet::from_reader(
            "country_code,year,srb,source_type,sampling_sd\nXXX,1990,1.1,DHS,0.01\n".as_bytes(),
            Some(&reg),
        )
        .unwrap_err();
        assert_eq!(
            err.row_kinds(),
            vec![&RowErrorKind::UnknownCountry("XXX".into())]
        );
    }

    #[test]
    fn sorted_by_country_then_year() {
        let set = parse("country_code,year,srb,source_type,sampling_sd\nIND,2001,1.1,DHS,0.01\nCHN,1995,1.1,DHS,0.01\nCHN,1990,1.1,DHS,0.01\n").unwrap();
        let keys: Vec<_> = set
            .iter()
            .map(|o| (o.country_code.as_str(), o.year))
            .collect();
        assert_eq!(
            keys,
            vec![("CHN", 1990.0), ("CHN", 1995.0), ("IND", 2001.0)]
        );
    }

    #[test]
    fn loads_full_scale_file() {
        let mut text = String::from(OBSERVATIONS_HEADER);
        text.push('\n');
        let sources = ["CRVS_SRS", "Census", "DHS", "OtherDHS", "Other"];
        for i in 0..10_835 {
            text.push_str(&format!(
                "C{:03},{},{},{},{}\n",
                i % 212,
                1950 + (i % 68),
                1.03 + (i % 7) as f64 * 0.01,
                sources[i % 5],
                0.001 * (1 + i % 9) as f64
            ));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("observations.csv");
        std::fs::write(&path, text).unwrap();
        assert_eq!(ObservationSet::load(&path, None).unwrap().len(), 10_835);
    }

    fn arb_obs() -> impl Strategy<Value = Observation> {
        (
            prop::sample::select(vec!["AFG", "CHN", "IND", "ZMB"]),
            1900u32..=2100,
            prop::bool::ANY,
            1u32..3000,
            0usize..5,
            0u32..500,
        )
            .prop_map(|(c, y, half, srb, s, sd)| Observation {
                country_code: c.to_string(),
                year: y as f64 + if half && y < 2100 { 0.5 } else { 0.0 },
                value: srb as f64 / 1000.0,
                source_type: SourceType::ALL[s],
                sampling_sd: sd as f64 / 10_000.0,
            })
    }

    proptest! {
        #[test]
        fn canonical_round_trip(rows in proptest::collection::vec(arb_obs(), 0..40)) {
            let text = ObservationSet::new(rows).to_csv_string();
            let reparsed = parse(&text).unwrap();
            prop_assert_eq!(reparsed.to_csv_string(), text);
        }
    }
}

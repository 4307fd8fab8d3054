use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::{parse_f64, parse_year, CsvTable, IngestError, RowError, RowErrorKind};

/// Total births per country-year, in the unit declared by the file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BirthsTable {
    pub unit: String,
    values: BTreeMap<String, BTreeMap<i32, f64>>,
}

impl BirthsTable {
    pub fn new(unit: &str) -> Self {
        BirthsTable {
            unit: unit.to_string(),
            values: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, country: &str, year: i32, births: f64) {
        self.values
            .entry(country.to_string())
            .or_default()
            .insert(year, births);
    }

    pub fn get(&self, country: &str, year: i32) -> Option<f64> {
        self.values.get(country)?.get(&year).copied()
    }

    pub fn countries(&self) -> impl Iterator<Item = &String> {
        self.values.keys()
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::from_table(&CsvTable::read(path)?)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self, IngestError> {
        Self::from_table(&CsvTable::from_reader(reader, "births.csv")?)
    }

    fn from_table(table: &CsvTable) -> Result<Self, IngestError> {
        let c_code = table.column("country_code")?;
        let c_year = table.column("year")?;
        let c_births = table.column("births")?;
        let c_unit = table.column("unit")?;
        let mut out: Option<BirthsTable> = None;
        let mut errors = Vec::new();
        for (line, rec) in &table.records {
            let get = |i: usize| rec.get(i).unwrap_or("");
            let parsed = parse_year(get(c_year), "year").and_then(|y| {
                let b = parse_f64(get(c_births), "births")?;
                if b < 0.0 {
                    return Err(RowErrorKind::OutOfRange {
                        column: "births".into(),
                        value: b,
                    });
                }
                Ok((y, b))
            });
            match parsed {
                Ok((year, births)) => {
                    let unit = get(c_unit);
                    let table_out = out.get_or_insert_with(|| BirthsTable::new(unit));
                    if table_out.unit != unit {
                        return Err(IngestError::MixedUnits {
                            file: table.file.clone(),
                            first: table_out.unit.clone(),
                            other: unit.to_string(),
                        });
                    }
                    table_out.insert(get(c_code), year, births);
                }
                Err(kind) => errors.push(RowError { line: *line, kind }),
            }
        }
        if !errors.is_empty() {
            return Err(IngestError::InvalidRows {
                file: table.file.clone(),
                errors,
            });
        }
        Ok(out.unwrap_or_default())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "country_code,year,births,unit")?;
        for (code, years) in &self.values {
            for (year, b) in years {
                writeln!(out, "{code},{year},{b},{}", self.unit)?;
            }
        }
        Ok(())
    }
}

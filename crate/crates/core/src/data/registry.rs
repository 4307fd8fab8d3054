use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CsvTable, IngestError, RowError, RowErrorKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Country {
    pub code: String,
    pub name: String,
    pub region_code: String,
    pub at_risk: bool,
}

impl Country {
    pub fn new(code: &str, name: &str, region_code: &str, at_risk: bool) -> Self {
        Country {
            code: code.into(),
            name: name.into(),
            region_code: region_code.into(),
            at_risk,
        }
    }
}

/// Countries, their regions and the configured at-risk flags.
#[derive(Debug, Clone, PartialEq)]
pub struct CountryRegistry {
    countries: Vec<Country>,
    regions: Vec<String>,
    by_code: HashMap<String, usize>,
}

impl CountryRegistry {
    /// Regions are numbered in order of first appearance.
    pub fn new(countries: Vec<Country>) -> Result<Self, IngestError> {
        let mut by_code = HashMap::with_capacity(countries.len());
        let mut regions: Vec<String> = Vec::new();
        for (i, c) in countries.iter().enumerate() {
            if by_code.insert(c.code.clone(), i).is_some() {
                return Err(IngestError::DuplicateCountry(c.code.clone()));
            }
            if !regions.contains(&c.region_code) {
                regions.push(c.region_code.clone());
            }
        }
        Ok(CountryRegistry {
            countries,
            regions,
            by_code,
        })
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::from_table(&CsvTable::read(path)?)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self, IngestError> {
        Self::from_table(&CsvTable::from_reader(reader, "countries.csv")?)
    }

    fn from_table(table: &CsvTable) -> Result<Self, IngestError> {
        let c_code = table.column("country_code")?;
        let c_name = table.column("name")?;
        let c_region = table.column("region_code")?;
        let c_risk = table.column("at_risk")?;
        let mut countries = Vec::new();
        let mut errors = Vec::new();
        for (line, rec) in &table.records {
            let get = |i: usize| rec.get(i).unwrap_or("").to_string();
            let at_risk = match get(c_risk).as_str() {
                "1" => true,
                "0" => false,
                other => {
                    errors.push(RowError {
                        line: *line,
                        kind: RowErrorKind::InvalidNumber {
                            column: "at_risk".into(),
                            value: other.into(),
                        },
                    });
                    continue;
                }
            };
            countries.push(Country {
                code: get(c_code),
                name: get(c_name),
                region_code: get(c_region),
                at_risk,
            });
        }
        if !errors.is_empty() {
            return Err(IngestError::InvalidRows {
                file: table.file.clone(),
                errors,
            });
        }
        Self::new(countries)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "country_code,name,region_code,at_risk")?;
        for c in &self.countries {
            // Names may contain commas ("Hong Kong, SAR of China").
            let name = if c.name.contains(',') || c.name.contains('"') {
                format!("\"{}\"", c.name.replace('"', "\"\""))
            } else {
                c.name.clone()
            };
            writeln!(
                out,
                "{},{},{},{}",
                c.code,
                name,
                c.region_code,
                u8::from(c.at_risk)
            )?;
        }
        Ok(())
    }

    pub fn countries(&self) -> &[Country] {
        &self.countries
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn get(&self, code: &str) -> Option<&Country> {
        self.by_code.get(code).map(|&i| &self.countries[i])
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.by_code.get(code).copied()
    }

    pub fn region_index(&self, region_code: &str) -> Option<usize> {
        self.regions.iter().position(|r| r == region_code)
    }

    pub fn is_at_risk(&self, code: &str) -> bool {
        self.get(code).is_some_and(|c| c.at_risk)
    }

    pub fn at_risk_codes(&self) -> Vec<String> {
        self.countries
            .iter()
            .filter(|c| c.at_risk)
            .map(|c| c.code.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_round_trips() {
        let text = "country_code,name,region_code,at_risk\nHKG,\"Hong Kong, SAR of China\",EAS,1\nAUS,Australia,ENAN,0\nCHN,China,EAS,1\n";
        let reg = CountryRegistry::from_reader(text.as_bytes()).unwrap();
        assert_eq!(reg.regions(), &["EAS".to_string(), "ENAN".to_string()]);
        assert_eq!(
            reg.at_risk_codes(),
            vec!["HKG".to_string(), "CHN".to_string()]
        );
        assert_eq!(reg.get("HKG").unwrap().name, "Hong Kong, SAR of China");
        let mut buf = Vec::new();
        reg.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }

    #[test]
    fn rejects_duplicates_and_bad_flags() {
        let dup = vec![
            Country::new("A", "a", "R", false),
            Country::new("A", "b", "R", true),
        ];
        assert!(matches!(
            CountryRegistry::new(dup),
            Err(IngestError::DuplicateCountry(_))
        ));
        let err = CountryRegistry::from_reader(
            "country_code,name,region_code,at_risk\nA,a,R,yes\n".as_bytes(),
        )
        .unwrap_err();
        assert_eq!(err.row_kinds().len(), 1);
    }
}

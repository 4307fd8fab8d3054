use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ProjectionError;
use crate::data::CountryRegistry;
use crate::mcmc::{names, DrawSet, PosteriorChains};

/// Posterior inflation probability at or above which a country counts as
/// having strong evidence of inflation.
pub const PSI_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountryClass {
    Base,
    Inflation,
    FutureInflation,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountryClassification {
    pub psi: BTreeMap<String, f64>,
    pub base: BTreeSet<String>,
    pub inflation: BTreeSet<String>,
    pub future_inflation: BTreeSet<String>,
}

impl CountryClassification {
    pub fn class_of(&self, code: &str) -> Option<CountryClass> {
        if self.base.contains(code) {
            Some(CountryClass::Base)
        } else if self.inflation.contains(code) {
            Some(CountryClass::Inflation)
        } else if self.future_inflation.contains(code) {
            Some(CountryClass::FutureInflation)
        } else {
            None
        }
    }

    pub fn countries(&self) -> impl Iterator<Item = (&String, CountryClass)> {
        self.base
            .iter()
            .map(|c| (c, CountryClass::Base))
            .chain(self.inflation.iter().map(|c| (c, CountryClass::Inflation)))
            .chain(
                self.future_inflation
                    .iter()
                    .map(|c| (c, CountryClass::FutureInflation)),
            )
    }
}

/// Fraction of draws with `δ_c = 1`, per country of the fit.
pub fn compute_psi(m2: &PosteriorChains) -> BTreeMap<String, f64> {
    psi_from_draws(
        &m2.pooled(),
        m2.layout.slots.iter().map(|s| s.code.as_str()),
    )
}

pub(crate) fn psi_from_draws<'a>(
    draws: &DrawSet,
    codes: impl Iterator<Item = &'a str>,
) -> BTreeMap<String, f64> {
    codes
        .filter_map(|c| {
            let d = draws.get(&names::delta(c))?;
            let ones = d.iter().filter(|&&x| x > 0.5).count();
            Some((c.to_string(), ones as f64 / d.len() as f64))
        })
        .collect()
}

pub fn classify(
    registry: &CountryRegistry,
    psi: &BTreeMap<String, f64>,
) -> Result<CountryClassification, ProjectionError> {
    let mut out = CountryClassification::default();
    for c in registry.countries() {
        if !c.at_risk {
            out.base.insert(c.code.clone());
            continue;
        }
        let p = *psi
            .get(&c.code)
            .ok_or_else(|| ProjectionError::MissingPsi(c.code.clone()))?;
        out.psi.insert(c.code.clone(), p);
        if p >= PSI_THRESHOLD {
            out.inflation.insert(c.code.clone());
        } else {
            out.future_inflation.insert(c.code.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Country;
    use proptest::prelude::*;

    fn registry(n: usize) -> CountryRegistry {
        CountryRegistry::new(
            (0..n)
                .map(|i| Country::new(&format!("C{i}"), "x", "R", i % 3 != 0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn thresholds() {
        let reg = CountryRegistry::new(vec![
            Country::new("CHN", "China", "EA", true),
            Country::new("TWN", "Taiwan", "EA", true),
            Country::new("MRT", "Mauritania", "AF", true),
            Country::new("XXX", "Edge", "AF", true),
            Country::new("AUS", "Australia", "OC", false),
        ])
        .unwrap();
        let psi: BTreeMap<String, f64> =
            [("CHN", 1.0), ("TWN", 0.997), ("MRT", 0.638), ("XXX", 0.949)]
                .into_iter()
                .map(|(c, p)| (c.to_string(), p))
                .collect();
        let cl = classify(&reg, &psi).unwrap();
        assert_eq!(cl.class_of("CHN"), Some(CountryClass::Inflation));
        assert_eq!(cl.class_of("TWN"), Some(CountryClass::Inflation));
        assert_eq!(cl.class_of("MRT"), Some(CountryClass::FutureInflation));
        assert_eq!(cl.class_of("XXX"), Some(CountryClass::FutureInflation));
        assert_eq!(cl.class_of("AUS"), Some(CountryClass::Base));
    }

    #[test]
    fn missing_psi() {
        let reg = registry(3);
        assert!(matches!(
            classify(&reg, &BTreeMap::new()),
            Err(ProjectionError::MissingPsi(_))
        ));
    }

    #[test]
    fn psi_counts_indicator_draws() {
        let d = DrawSet::new(
            vec![names::delta("A"), names::delta("B"), names::delta("C")],
            vec![vec![1.0; 4], vec![0.0; 4], vec![1.0, 0.0, 1.0, 1.0]],
        );
        let psi = psi_from_draws(&d, ["A", "B", "C"].into_iter());
        assert_eq!(psi["A"], 1.0);
        assert_eq!(psi["B"], 0.0);
        assert_eq!(psi["C"], 0.75);
    }

    proptest! {
        #[test]
        fn classes_partition_the_registry(ps in proptest::collection::vec(0.0f64..=1.0, 12)) {
            let reg = registry(12);
            let psi: BTreeMap<String, f64> = ps.iter().enumerate().map(|(i, p)| (format!("C{i}"), *p)).collect();
            let cl = classify(&reg, &psi).unwrap();
            prop_assert_eq!(cl.base.len() + cl.inflation.len() + cl.future_inflation.len(), 12);
            for c in reg.countries() {
                let hits = [&cl.base, &cl.inflation, &cl.future_inflation].iter().filter(|s| s.contains(&c.code)).count();
                prop_assert_eq!(hits, 1);
                prop_assert_eq!(cl.base.contains(&c.code), !c.at_risk);
            }
        }
    }
}

use sexratio_core::data::{build_at_risk_db, SourceType};
use sexratio_core::mcmc::{fit, names, DrawSet, FitInputs, McmcConfig};
use sexratio_core::model::ModelSpec;
use sexratio_core::projection::FitDraws;
use sexratio_core::synth::{country_code, generate, CountryOverride, Schedule, World, WorldSpec};
use sexratio_core::validation::{
    estimate_shift_metrics, leftout_metrics, permutation_outcomes, posterior_predictive,
    predictions_from_1970, split, Outcome, SplitMode, SplitSpec, ValidationError, REFERENCE_YEARS,
};
use statrs::distribution::{Binomial, DiscreteCDF};

fn survey_world(seed: u64, regions: usize, per_region: usize, at_risk: usize) -> World {
    let overrides = (1..=regions)
        .flat_map(|r| (1..=at_risk).map(move |i| country_code(r, i)))
        .map(|code| CountryOverride {
            code,
            delta: Some(false),
            ..Default::default()
        })
        .collect();
    generate(&WorldSpec {
        seed,
        regions,
        countries_per_region: per_region,
        at_risk_per_region: at_risk,
        schedule: Schedule {
            first_year: 1960.0,
            last_year: 2015.0,
            step: 1.0,
            source: SourceType::Dhs,
            sampling_sd: 0.02,
        },
        overrides,
        ..WorldSpec::default()
    })
    .unwrap()
}

/// 99% central band of the percentage of `n` Bernoulli(p) successes.
fn binomial_band(n: u64, p: f64) -> (f64, f64) {
    let b = Binomial::new(p, n).unwrap();
    let pct = |k: u64| 100.0 * k as f64 / n as f64;
    (pct(b.inverse_cdf(0.005)), pct(b.inverse_cdf(0.995)))
}

#[test]
fn exact_predictive_distribution_is_calibrated() {
    let w = survey_world(3, 3, 20, 0);
    let s = split(
        &w.observations,
        &SplitSpec {
            mode: SplitMode::RandomFraction { fraction: 0.2 },
            repetition: 0,
            seed: 8,
        },
    )
    .unwrap();
    let rows = posterior_predictive(&w.oracle_fit(4000), &s.test, 5).unwrap();
    assert_eq!(rows.len(), s.test.len());
    let sets = permutation_outcomes(&rows, 1000, 2).unwrap();
    for set in &sets {
        assert_eq!(set.below95 + set.above95 + set.inside95, set.n);
        assert_eq!(set.below80 + set.above80 + set.inside80, set.n);
    }
    let m = leftout_metrics(&rows, 1000, 2).unwrap();
    let n = m.n_test_countries as u64;
    let (lo, hi) = binomial_band(n, 0.95);
    let inside95 = 100.0 - m.below95 - m.above95;
    assert!(
        lo <= inside95 && inside95 <= hi,
        "{inside95} not in [{lo}, {hi}]"
    );
    let (lo, hi) = binomial_band(n, 0.80);
    let inside80 = 100.0 - m.below80 - m.above80;
    assert!(
        lo <= inside80 && inside80 <= hi,
        "{inside80} not in [{lo}, {hi}]"
    );
    assert!(m.median_error.abs() < 0.01, "{m:?}");
}

fn m1_fit(w: &World, data: &sexratio_core::data::ObservationSet) -> FitDraws {
    let cfg = McmcConfig {
        n_chains: 2,
        n_burnin: 600,
        thinning: 1,
        n_posterior: 1000,
        seed: 4,
        ..McmcConfig::default()
    };
    let inputs = FitInputs {
        data,
        registry: &w.registry,
        anchors: &w.anchors,
    };
    FitDraws::from_chains(&fit(&ModelSpec::m1(), &inputs, &cfg).unwrap())
}

#[test]
fn estimate_shifts() {
    let w = survey_world(4, 2, 6, 0);
    let full = m1_fit(&w, &w.observations);
    let same = estimate_shift_metrics(&full, &full, &REFERENCE_YEARS, 1).unwrap();
    assert_eq!(same.len(), 3);
    for e in &same {
        assert_eq!(e.outcome, Outcome::Theta);
        assert_eq!((e.median_error, e.median_abs_error), (0.0, 0.0));
        assert_eq!(e.below95 + e.above95 + e.below80 + e.above80, 0);
        assert_eq!(e.n_countries, 12);
    }

    let s = split(
        &w.observations,
        &SplitSpec {
            mode: SplitMode::RecentAfterYear { cutoff: 2000 },
            repetition: 0,
            seed: 0,
        },
    )
    .unwrap();
    let train = m1_fit(&w, &s.train);
    let shifted = estimate_shift_metrics(&full, &train, &REFERENCE_YEARS, 1).unwrap();
    let mae = |y: i32| {
        shifted
            .iter()
            .find(|e| e.year == y)
            .unwrap()
            .median_abs_error
    };
    assert!(mae(2015) > mae(1995), "{shifted:?}");
    assert!(mae(2015) > 0.0);

    assert!(matches!(
        estimate_shift_metrics(&full, &train, &[2200], 1),
        Err(ValidationError::MissingYear(2200))
    ));
}

/// Rebuilds `draws` with the named columns overwritten by constants.
fn with_columns(draws: &DrawSet, set: &[(&str, f64)]) -> DrawSet {
    let names = draws.names().to_vec();
    let values = names
        .iter()
        .map(|n| match set.iter().find(|(k, _)| k == n) {
            Some((_, v)) => vec![*v; draws.len()],
            None => draws.get(n).unwrap().to_vec(),
        })
        .collect();
    DrawSet::new(names, values)
}

#[test]
fn prediction_without_inflation_ignores_transition_hyperparameters() {
    let w = survey_world(6, 2, 3, 3);
    let at_risk = build_at_risk_db(&w.observations, &w.registry);
    let m1 = w.oracle_fit(500);
    let mut m2 = w.oracle_fit(500);
    m2.draws = with_columns(&m2.draws, &[(names::MU_PI, -60.0), (names::SIGMA_PI, 0.01)]);
    let base = predictions_from_1970(&m1, &m2, &at_risk, &w.anchors, 3).unwrap();
    assert!(base.iter().all(|r| r.year > 1970.0));
    assert_eq!(
        base.len(),
        at_risk.iter().filter(|o| o.grid_year() > 1970).count()
    );

    let mut other = m2.clone();
    other.draws = with_columns(
        &other.draws,
        &[(names::MU_XI, 0.5), (names::SIGMA_GAMMA, 9.0)],
    );
    assert_eq!(
        base,
        predictions_from_1970(&m1, &other, &at_risk, &w.anchors, 3).unwrap()
    );

    // With inflation switched on for every draw the predictions move up.
    let mut on = m2.clone();
    on.draws = with_columns(&on.draws, &[(names::MU_PI, 60.0)]);
    let inflated = predictions_from_1970(&m1, &on, &at_risk, &w.anchors, 3).unwrap();
    let total = |rows: &[sexratio_core::validation::PredictiveRow]| {
        rows.iter().map(|r| r.ppd.median).sum::<f64>()
    };
    assert!(total(&inflated) > total(&base));

    let stripped = FitDraws {
        draws: DrawSet::new(vec![names::RHO.into()], vec![vec![0.5; 500]]),
        ..m2
    };
    assert!(matches!(
        predictions_from_1970(&m1, &stripped, &at_risk, &w.anchors, 3),
        Err(ValidationError::MissingHyperDraws(_))
    ));
}

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{EstimateShift, LeftoutMetrics};

/// One validation exercise: a column of the left-out table and, when
/// available, the estimate-shift rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub label: String,
    pub n_train_countries: usize,
    pub n_full_countries: usize,
    pub leftout: Option<LeftoutMetrics>,
    pub estimates: Vec<EstimateShift>,
}

/// A percentage with its count in parentheses, or the bare percentage when
/// the count is zero: `3.4 (1)`, `0.0`.
pub fn format_pct_count(pct: f64, count: usize) -> String {
    if count == 0 {
        format!("{pct:.1}")
    } else {
        format!("{pct:.1} ({count})")
    }
}

pub fn write_reports_json<W: Write>(
    reports: &[ValidationReport],
    out: W,
) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(out, reports)
}

/// Left-out metrics with one column per report.
pub fn write_leftout_csv<W: Write>(
    reports: &[ValidationReport],
    mut out: W,
) -> std::io::Result<()> {
    let with: Vec<(&ValidationReport, &LeftoutMetrics)> = reports
        .iter()
        .filter_map(|r| r.leftout.as_ref().map(|m| (r, m)))
        .collect();
    write!(out, "metric")?;
    for (r, _) in &with {
        write!(out, ",{}", r.label)?;
    }
    writeln!(out)?;
    let rows: [(&str, &dyn Fn(&ValidationReport, &LeftoutMetrics) -> String); 8] = [
        ("countries_train", &|r, _| r.n_train_countries.to_string()),
        ("countries_test", &|_, m| m.n_test_countries.to_string()),
        ("median_error", &|_, m| format!("{:.3}", m.median_error)),
        ("median_abs_error", &|_, m| {
            format!("{:.3}", m.median_abs_error)
        }),
        ("below_95_pct", &|_, m| format!("{:.1}", m.below95)),
        ("above_95_pct", &|_, m| format!("{:.1}", m.above95)),
        ("below_80_pct", &|_, m| format!("{:.1}", m.below80)),
        ("above_80_pct", &|_, m| format!("{:.1}", m.above80)),
    ];
    for (name, cell) in rows {
        write!(out, "{name}")?;
        for (r, m) in &with {
            write!(out, ",{}", cell(r, m))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub const ESTIMATES_HEADER: &str =
    "label,outcome,year,countries,median_error,median_abs_error,below_95,above_95,below_80,above_80";

/// Estimate-shift rows; interval cells read `percent (count)`.
pub fn write_estimates_csv<W: Write>(
    reports: &[ValidationReport],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "{ESTIMATES_HEADER}")?;
    for r in reports {
        for e in &r.estimates {
            writeln!(
                out,
                "{},{},{},{},{:.3},{:.3},{},{},{},{}",
                r.label,
                e.outcome.name(),
                e.year,
                e.n_countries,
                e.median_error,
                e.median_abs_error,
                format_pct_count(e.pct(e.below95), e.below95),
                format_pct_count(e.pct(e.above95), e.above95),
                format_pct_count(e.pct(e.below80), e.below80),
                format_pct_count(e.pct(e.above80), e.above80),
            )?;
        }
    }
    Ok(())
}

/// Combines repeated exercises into one report. Left-out metrics are
/// averaged over the repetitions. Estimate-shift errors are averaged and
/// their interval counts pooled, so percentages refer to all country
/// instances together.
pub fn aggregate_reports(label: &str, reports: &[ValidationReport]) -> Option<ValidationReport> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&ValidationReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let with_leftout: Vec<&LeftoutMetrics> =
        reports.iter().filter_map(|r| r.leftout.as_ref()).collect();
    let leftout = (!with_leftout.is_empty()).then(|| {
        let k = with_leftout.len() as f64;
        let avg =
            |f: fn(&LeftoutMetrics) -> f64| with_leftout.iter().map(|m| f(m)).sum::<f64>() / k;
        LeftoutMetrics {
            n_test_countries: avg(|m| m.n_test_countries as f64).round() as usize,
            n_test_rows: avg(|m| m.n_test_rows as f64).round() as usize,
            n_permutations: with_leftout[0].n_permutations,
            median_error: avg(|m| m.median_error),
            median_abs_error: avg(|m| m.median_abs_error),
            below95: avg(|m| m.below95),
            above95: avg(|m| m.above95),
            below80: avg(|m| m.below80),
            above80: avg(|m| m.above80),
        }
    });
    let estimates = first
        .estimates
        .iter()
        .map(|e0| {
            let same: Vec<&EstimateShift> = reports
                .iter()
                .flat_map(|r| &r.estimates)
                .filter(|e| e.outcome == e0.outcome && e.year == e0.year)
                .collect();
            let k = same.len() as f64;
            let sum = |f: fn(&EstimateShift) -> usize| same.iter().map(|e| f(e)).sum::<usize>();
            EstimateShift {
                outcome: e0.outcome,
                year: e0.year,
                n_countries: sum(|e| e.n_countries),
                median_error: same.iter().map(|e| e.median_error).sum::<f64>() / k,
                median_abs_error: same.iter().map(|e| e.median_abs_error).sum::<f64>() / k,
                below95: sum(|e| e.below95),
                above95: sum(|e| e.above95),
                below80: sum(|e| e.below80),
                above80: sum(|e| e.above80),
            }
        })
        .collect();
    Some(ValidationReport {
        label: label.to_string(),
        n_train_countries: mean(&|r| r.n_train_countries as f64).round() as usize,
        n_full_countries: first.n_full_countries,
        leftout,
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(err: f64, below: usize) -> ValidationReport {
        ValidationReport {
            label: "r".into(),
            n_train_countries: 10,
            n_full_countries: 12,
            leftout: Some(LeftoutMetrics {
                n_test_countries: 4,
                n_test_rows: 9,
                n_permutations: 10,
                median_error: err,
                median_abs_error: err.abs(),
                below95: 25.0 * below as f64,
                above95: 0.0,
                below80: 0.0,
                above80: 0.0,
            }),
            estimates: vec![EstimateShift {
                outcome: super::super::Outcome::Theta,
                year: 2005,
                n_countries: 4,
                median_error: err,
                median_abs_error: err.abs(),
                below95: below,
                above95: 0,
                below80: 0,
                above80: 0,
            }],
        }
    }

    #[test]
    fn aggregate_averages_and_pools() {
        let agg = aggregate_reports("all", &[report(0.01, 1), report(-0.03, 0)]).unwrap();
        let m = agg.leftout.unwrap();
        assert!((m.median_error + 0.01).abs() < 1e-12);
        assert_eq!(m.below95, 12.5);
        let e = agg.estimates[0];
        assert_eq!((e.n_countries, e.below95), (8, 1));
        assert!((e.pct(e.below95) - 12.5).abs() < 1e-12);
        assert!(aggregate_reports("none", &[]).is_none());
    }

    #[test]
    fn table_cells() {
        assert_eq!(format_pct_count(100.0 / 29.0, 1), "3.4 (1)");
        assert_eq!(format_pct_count(0.0, 0), "0.0");
        assert_eq!(format_pct_count(9.04, 19), "9.0 (19)");
    }
}

//! Aggregation and output files.
//!
//! Every real written to disk is rounded to 4 significant digits. Files in
//! the output directory:
//!
//! - `results.ndjson`: one selected record per (replicate, method).
//! - `runs.ndjson`: every grid run, without test metrics.
//! - `summary.csv`: per method, mean and standard error of each metric.
//! - `summary.txt`: the same as an aligned table.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use cox_subgroup::algos::Method;
use cox_subgroup::Region;

use crate::sweep::{RunRecord, SweepOutput};
use crate::HarnessError;

/// Rounds to 4 significant digits. Non-finite values pass through.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.3e}")
        .parse()
        .expect("formatted float parses back")
}

fn round_opt(x: Option<f64>) -> Option<f64> {
    x.map(round_sig)
}

fn round_region(r: &Region) -> Region {
    let lo = r.lower().iter().map(|&v| round_sig(v)).collect();
    let hi = r.upper().iter().map(|&v| round_sig(v)).collect();
    // Rounding is monotone, so lower <= upper survives.
    Region::new(lo, hi).expect("rounding keeps bounds ordered")
}

/// The record as written: every real rounded by [`round_sig`].
pub fn rounded(r: &RunRecord) -> RunRecord {
    RunRecord {
        region: r.region.as_ref().map(round_region),
        beta: r
            .beta
            .as_ref()
            .map(|b| b.iter().map(|&v| round_sig(v)).collect()),
        size_fraction: round_sig(r.size_fraction),
        train_epe: round_opt(r.train_epe),
        test_epe: round_opt(r.test_epe),
        test_c_index: round_opt(r.test_c_index),
        test_rej10: round_opt(r.test_rej10),
        f1: round_opt(r.f1),
        precision: round_opt(r.precision),
        recall: round_opt(r.recall),
        ..r.clone()
    }
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`; zero
/// for a single value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn mean_se(values: &[f64]) -> Option<MeanSe> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let se = if n < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Some(MeanSe { mean, se, n })
}

type Getter = fn(&RunRecord) -> Option<f64>;

/// Summary columns in output order.
pub const METRICS: [(&str, Getter); 7] = [
    ("test_epe", |r| r.test_epe),
    ("test_c_index", |r| r.test_c_index),
    ("test_rej10", |r| r.test_rej10),
    ("size", |r| r.failed.is_none().then_some(r.size_fraction)),
    ("f1", |r| r.f1),
    ("precision", |r| r.precision),
    ("recall", |r| r.recall),
];

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub replicates: usize,
    /// Replicates where no subgroup was selected.
    pub missing: usize,
    pub metrics: Vec<(&'static str, Option<MeanSe>)>,
}

impl MethodSummary {
    pub fn metric(&self, name: &str) -> Option<MeanSe> {
        self.metrics
            .iter()
            .find(|(n, _)| *n == name)
            .and_then(|(_, m)| *m)
    }
}

/// Per-method summaries of the selected records, in `methods` order.
pub fn summarize(selected: &[RunRecord], methods: &[Method]) -> Vec<MethodSummary> {
    methods
        .iter()
        .map(|m| {
            let recs: Vec<&RunRecord> = selected.iter().filter(|r| r.method == m.name()).collect();
            let metrics = METRICS
                .iter()
                .map(|&(name, get)| {
                    let vals: Vec<f64> = recs.iter().filter_map(|r| get(r)).collect();
                    (name, mean_se(&vals))
                })
                .collect();
            MethodSummary {
                method: m.name().to_string(),
                replicates: recs.len(),
                missing: recs.iter().filter(|r| r.region.is_none()).count(),
                metrics,
            }
        })
        .collect()
}

fn fmt_real(x: f64) -> String {
    round_sig(x).to_string()
}

pub fn summary_csv(summaries: &[MethodSummary]) -> String {
    let mut out = String::from("method,replicates,missing");
    for (name, _) in METRICS {
        let _ = write!(out, ",{name}_mean,{name}_se,{name}_n");
    }
    out.push('\n');
    for s in summaries {
        let _ = write!(out, "{},{},{}", s.method, s.replicates, s.missing);
        for (_, m) in &s.metrics {
            match m {
                Some(m) => {
                    let _ = write!(out, ",{},{},{}", fmt_real(m.mean), fmt_real(m.se), m.n);
                }
                None => out.push_str(",,,0"),
            }
        }
        out.push('\n');
    }
    out
}

/// Human-readable `mean ± se` table. Metric columns with no values for any
/// method are left out.
pub fn summary_table(summaries: &[MethodSummary]) -> String {
    let shown: Vec<usize> = (0..METRICS.len())
        .filter(|&k| summaries.iter().any(|s| s.metrics[k].1.is_some()))
        .collect();
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("method".to_string())
        .chain(shown.iter().map(|&k| METRICS[k].0.to_string()))
        .chain(["missing".to_string()])
        .collect()];
    for s in summaries {
        let mut row = vec![s.method.clone()];
        for &k in &shown {
            row.push(match s.metrics[k].1 {
                Some(m) => format!("{} ± {}", fmt_real(m.mean), fmt_real(m.se)),
                None => "-".into(),
            });
        }
        row.push(format!("{}/{}", s.missing, s.replicates));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn to_ndjson(records: &[RunRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&rounded(r)).expect("records serialize"));
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}

/// Writes all report files into `dir` (created if absent) and returns the
/// summaries.
pub fn write_reports(
    dir: &Path,
    output: &SweepOutput,
    methods: &[Method],
) -> Result<Vec<MethodSummary>, HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let summaries = summarize(&output.selected, methods);
    write_file(&dir.join("results.ndjson"), &to_ndjson(&output.selected))?;
    write_file(&dir.join("runs.ndjson"), &to_ndjson(&output.runs))?;
    write_file(&dir.join("summary.csv"), &summary_csv(&summaries))?;
    write_file(&dir.join("summary.txt"), &summary_table(&summaries))?;
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_significant_digits() {
        assert_eq!(round_sig(0.123456), 0.1235);
        assert_eq!(round_sig(123456.0), 123500.0);
        assert_eq!(round_sig(-0.000987654), -0.0009877);
        assert_eq!(round_sig(0.0), 0.0);
        assert!(round_sig(f64::NAN).is_nan());
        assert_eq!(fmt_real(0.38471), "0.3847");
    }

    #[test]
    fn mean_and_standard_error() {
        let m = mean_se(&[0.4, 0.6]).unwrap();
        assert!((m.mean - 0.5).abs() < 1e-15);
        assert!((m.se - 0.1).abs() < 1e-15);
        assert_eq!(mean_se(&[0.3]).unwrap().se, 0.0);
        assert!(mean_se(&[]).is_none());
    }

    #[test]
    fn summaries_skip_missing_values() {
        let mut a = RunRecord::empty("base", "", 0);
        a.region = Some(Region::new(vec![0.0], vec![1.0]).unwrap());
        a.size_fraction = 1.0;
        a.test_epe = Some(0.4);
        let mut b = RunRecord::empty("base", "", 1);
        b.failed = Some("no eligible subgroup".into());
        let s = &summarize(&[a, b], &[Method::Base])[0];
        assert_eq!((s.replicates, s.missing), (2, 1));
        assert_eq!(s.metric("test_epe").unwrap().n, 1);
        assert_eq!(s.metric("size").unwrap().mean, 1.0);
        assert!(s.metric("f1").is_none());
        let table = summary_table(std::slice::from_ref(s));
        assert!(table.contains("0.4 ± 0"), "{table}");
        assert!(!table.contains("f1"));
    }
}

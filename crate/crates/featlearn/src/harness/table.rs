//! Method comparison tables: per-seed rows, cross-seed aggregation, CSV and
//! text rendering, and threshold assertions on the aggregate.

use crate::{FeatError, FeatResult};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// The six methods compared in table experiments, in display order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Network,
    Ntk,
    Rf,
    OneStep,
    TwoStep,
    NetworkNoStructure,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Network,
        Method::Ntk,
        Method::Rf,
        Method::OneStep,
        Method::TwoStep,
        Method::NetworkNoStructure,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Network => "network",
            Method::Ntk => "ntk",
            Method::Rf => "rf",
            Method::OneStep => "one_step",
            Method::TwoStep => "two_step",
            Method::NetworkNoStructure => "network_no_structure",
        }
    }

    pub fn display(self) -> &'static str {
        match self {
            Method::Network => "Network",
            Method::Ntk => "NTK",
            Method::Rf => "RF",
            Method::OneStep => "One Step",
            Method::TwoStep => "Two Step",
            Method::NetworkNoStructure => "Network w/o structure",
        }
    }
}

/// One method's numbers for one seed. Test accuracy is tracked both at the
/// best step and at the last step; `test_hinge` is measured at the best step,
/// where the 0-1 error is bounded by it. `cosine` is the best alignment
/// between any first-layer row (or feature anchor) and the planted direction;
/// the kernel baseline has no meaningful row direction, so it stays None.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub train_accuracy: f64,
    pub best_test_accuracy: f64,
    pub final_test_accuracy: f64,
    pub test_hinge: f64,
    pub cosine: Option<f64>,
}

/// All methods for one seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedTable {
    pub seed_index: usize,
    pub rows: Vec<MethodResult>,
}

impl SeedTable {
    pub fn get(&self, method: Method) -> Option<&MethodResult> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Cross-seed mean ± std for one method, with per-seed values retained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub mean_train_accuracy: f64,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
    pub mean_final_test_accuracy: f64,
    pub mean_cosine: Option<f64>,
    pub test_accuracies: Vec<f64>,
    pub cosines: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodTable {
    pub seeds: Vec<SeedTable>,
    pub aggregate: Vec<AggregateRow>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

impl MethodTable {
    pub fn from_seeds(seeds: Vec<SeedTable>) -> FeatResult<Self> {
        if seeds.is_empty() {
            return Err(FeatError::Empty);
        }
        for seed in &seeds {
            for row in &seed.rows {
                // a misclassified point contributes hinge >= 1, so the error
                // rate can never exceed the mean hinge
                if 1.0 - row.best_test_accuracy > row.test_hinge + 1e-9 {
                    return Err(FeatError::Param(format!(
                        "seed {} {}: error rate {} exceeds test hinge {}",
                        seed.seed_index,
                        row.method.id(),
                        1.0 - row.best_test_accuracy,
                        row.test_hinge
                    )));
                }
            }
        }
        let methods: Vec<Method> = seeds[0].rows.iter().map(|r| r.method).collect();
        let mut aggregate = Vec::with_capacity(methods.len());
        for &method in &methods {
            let mut trains = Vec::new();
            let mut tests = Vec::new();
            let mut finals = Vec::new();
            let mut coss = Vec::new();
            for seed in &seeds {
                let row = seed.get(method).ok_or_else(|| {
                    FeatError::Param(format!(
                        "seed {} is missing method {}",
                        seed.seed_index,
                        method.id()
                    ))
                })?;
                trains.push(row.train_accuracy);
                tests.push(row.best_test_accuracy);
                finals.push(row.final_test_accuracy);
                coss.push(row.cosine);
            }
            let mean_cosine = if coss.iter().all(|c| c.is_some()) {
                Some(mean(&coss.iter().map(|c| c.unwrap()).collect::<Vec<_>>()))
            } else {
                None
            };
            aggregate.push(AggregateRow {
                method,
                mean_train_accuracy: mean(&trains),
                mean_test_accuracy: mean(&tests),
                std_test_accuracy: sample_std(&tests),
                mean_final_test_accuracy: mean(&finals),
                mean_cosine,
                test_accuracies: tests,
                cosines: coss,
            });
        }
        Ok(MethodTable { seeds, aggregate })
    }

    pub fn mean_test(&self, method: Method) -> Option<f64> {
        self.aggregate.iter().find(|r| r.method == method).map(|r| r.mean_test_accuracy)
    }

    pub fn mean_cosine(&self, method: Method) -> Option<f64> {
        self.aggregate.iter().find(|r| r.method == method).and_then(|r| r.mean_cosine)
    }

    /// Aggregate CSV: one row per method, accuracies in percent.
    pub fn to_csv(&self, path: &Path) -> FeatResult<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "method",
            "train_accuracy",
            "test_accuracy",
            "test_accuracy_std",
            "final_test_accuracy",
            "cosine",
        ])?;
        for row in &self.aggregate {
            w.write_record([
                row.method.id().to_string(),
                format!("{}", 100.0 * row.mean_train_accuracy),
                format!("{}", 100.0 * row.mean_test_accuracy),
                format!("{}", 100.0 * row.std_test_accuracy),
                format!("{}", 100.0 * row.mean_final_test_accuracy),
                row.mean_cosine.map_or_else(|| "NA".to_string(), |c| format!("{c}")),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn render_text(&self) -> String {
        render_rows(&self.aggregate)
    }
}

/// Aligned text table; an empty row list yields the header alone.
pub fn render_rows(rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    let name_w = Method::ALL
        .iter()
        .map(|m| m.display().len())
        .max()
        .unwrap_or(8)
        .max("method".len());
    let _ = writeln!(out, "{:<name_w$}  {:>7}  {:>13}  {:>6}", "method", "train%", "test%", "cos");
    for row in rows {
        let cos = row.mean_cosine.map_or_else(|| "NA".to_string(), |c| format!("{c:.3}"));
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>7.1}  {:>7.1} ± {:>3.1}  {:>6}",
            row.method.display(),
            100.0 * row.mean_train_accuracy,
            100.0 * row.mean_test_accuracy,
            100.0 * row.std_test_accuracy,
            cos
        );
    }
    out
}

/// A single pass/fail condition on an aggregated table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Threshold {
    pub label: String,
    pub observed: f64,
    pub bound: f64,
    /// true: observed must be >= bound; false: observed must be <= bound.
    pub at_least: bool,
}

impl Threshold {
    pub fn at_least(label: impl Into<String>, observed: f64, bound: f64) -> Self {
        Threshold { label: label.into(), observed, bound, at_least: true }
    }

    pub fn at_most(label: impl Into<String>, observed: f64, bound: f64) -> Self {
        Threshold { label: label.into(), observed, bound, at_least: false }
    }

    pub fn holds(&self) -> bool {
        if self.at_least {
            self.observed >= self.bound
        } else {
            self.observed <= self.bound
        }
    }

    pub fn render(&self) -> String {
        let rel = if self.at_least { ">=" } else { "<=" };
        let verdict = if self.holds() { "PASS" } else { "FAIL" };
        let fmt = |v: f64| {
            if v == 0.0 || v.abs() >= 0.01 {
                format!("{v:.4}")
            } else {
                format!("{v:.2e}")
            }
        };
        format!(
            "[{verdict}] {}: {} {rel} {}",
            self.label,
            fmt(self.observed),
            fmt(self.bound)
        )
    }
}

/// Checks every threshold, printing one line each; errors if any failed.
pub fn assert_thresholds(thresholds: &[Threshold]) -> FeatResult<()> {
    let mut failed = Vec::new();
    for t in thresholds {
        println!("{}", t.render());
        if !t.holds() {
            failed.push(t.label.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(FeatError::Threshold(format!(
            "{} check(s) failed: {}",
            failed.len(),
            failed.join(", ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed_table(idx: usize, net: f64) -> SeedTable {
        let rows = Method::ALL
            .iter()
            .map(|&method| MethodResult {
                method,
                train_accuracy: net,
                best_test_accuracy: if method == Method::Network { net } else { 0.5 },
                final_test_accuracy: 0.5,
                test_hinge: 1.0,
                cosine: if method == Method::Ntk { None } else { Some(0.9) },
            })
            .collect();
        SeedTable { seed_index: idx, rows }
    }

    #[test]
    fn aggregate_takes_means_and_stds() {
        let table = MethodTable::from_seeds(vec![seed_table(0, 1.0), seed_table(1, 0.9)]).unwrap();
        let net = table.mean_test(Method::Network).unwrap();
        assert!((net - 0.95).abs() < 1e-12);
        let row = &table.aggregate[0];
        assert!((row.std_test_accuracy - (0.05f64 * 2.0f64.sqrt())).abs() < 1e-12);
        assert!(table.mean_cosine(Method::Ntk).is_none());
        assert_eq!(table.mean_cosine(Method::Rf), Some(0.9));
    }

    #[test]
    fn missing_method_is_an_error() {
        let mut bad = seed_table(0, 1.0);
        bad.rows.pop();
        let full = seed_table(1, 1.0);
        assert!(MethodTable::from_seeds(vec![full, bad]).is_err());
    }

    #[test]
    fn error_rate_above_hinge_is_rejected() {
        let mut bad = seed_table(0, 1.0);
        bad.rows[2].best_test_accuracy = 0.5;
        bad.rows[2].test_hinge = 0.2;
        assert!(MethodTable::from_seeds(vec![bad]).is_err());
    }

    #[test]
    fn empty_render_is_header_only() {
        let text = render_rows(&[]);
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("method"));
    }

    #[test]
    fn single_row_renders_one_line() {
        let table = MethodTable::from_seeds(vec![seed_table(0, 1.0)]).unwrap();
        let one = vec![table.aggregate[0].clone()];
        assert_eq!(render_rows(&one).lines().count(), 2);
    }

    #[test]
    fn thresholds_report_direction() {
        let ok = Threshold::at_least("x", 0.99, 0.9);
        let bad = Threshold::at_most("y", 0.99, 0.9);
        assert!(ok.holds());
        assert!(!bad.holds());
        assert!(ok.render().starts_with("[PASS]"));
        assert!(bad.render().starts_with("[FAIL]"));
        assert!(assert_thresholds(&[ok, bad]).is_err());
    }

    #[test]
    fn csv_has_na_for_missing_cosine() {
        let table = MethodTable::from_seeds(vec![seed_table(0, 1.0)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        table.to_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("ntk") && text.contains("NA"));
    }
}

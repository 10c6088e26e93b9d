//! Backtest report files: a JSON document with the full trajectories plus a
//! CSV summary, and the merge logic behind the compare command.

use std::fmt::Write as _;
use std::path::Path;

use folio_core::backtest::{BacktestReport, SummaryRow};
use folio_core::market::PeriodRange;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const REPORT_VERSION: u32 = 1;

/// One backtest invocation: shared metadata plus per-policy reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub assets: Vec<String>,
    pub window_size: usize,
    pub commission_rate: f64,
    /// Period range within the (possibly trimmed and restricted) dataset.
    pub test_range: PeriodRange,
    pub policies: Vec<BacktestReport>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let report: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: bad report: {e}", path.display())))?;
        if report.version != REPORT_VERSION {
            return Err(CliError::Data(format!(
                "{}: unsupported report version {}",
                path.display(),
                report.version
            )));
        }
        Ok(report)
    }

    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.policies.iter().map(SummaryRow::from_report).collect()
    }
}

/// Capital curves side by side, one column per policy, for external plotting
/// (log scale recommended: the curves are products of per-period factors).
pub fn curves_csv(reports: &[BacktestReport]) -> String {
    let mut out = String::from("period");
    for report in reports {
        let _ = write!(out, ",{}", report.policy);
    }
    out.push('\n');
    let length = reports.iter().map(|r| r.capital_curve.len()).max().unwrap_or(0);
    for i in 0..length {
        let _ = write!(out, "{i}");
        for report in reports {
            match report.capital_curve.get(i) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Merge several reports into one table sorted by final value, descending.
/// Reports must agree on asset set, window and range; the comparison would
/// be meaningless otherwise.
pub fn merge(reports: &[RunReport]) -> Result<Vec<SummaryRow>, CliError> {
    let first = reports
        .first()
        .ok_or_else(|| CliError::Config("compare needs at least one report".into()))?;
    for report in &reports[1..] {
        if report.assets != first.assets {
            return Err(CliError::Data(format!(
                "asset sets differ: {:?} vs {:?}",
                report.assets, first.assets
            )));
        }
        if report.test_range != first.test_range || report.window_size != first.window_size {
            return Err(CliError::Data(format!(
                "test ranges differ: {:?} (w={}) vs {:?} (w={})",
                report.test_range, report.window_size, first.test_range, first.window_size
            )));
        }
    }
    let mut rows: Vec<SummaryRow> = reports.iter().flat_map(RunReport::summary_rows).collect();
    rows.sort_by(|a, b| {
        b.final_value
            .partial_cmp(&a.final_value)
            .expect("finite final values")
            .then_with(|| a.name.cmp(&b.name))
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_with(name: &str, final_value: f64) -> RunReport {
        RunReport {
            version: REPORT_VERSION,
            assets: vec!["BTC".into(), "ETH".into()],
            window_size: 10,
            commission_rate: 0.0025,
            test_range: PeriodRange::new(80, 100),
            policies: vec![BacktestReport {
                policy: name.into(),
                capital_curve: vec![1.0, final_value],
                weights_log: vec![],
                period_returns: vec![final_value - 1.0],
                final_value,
                sharpe: None,
                max_drawdown: 0.0,
                return_std: 0.0,
                geometric_mean_return: final_value,
            }],
        }
    }

    #[test]
    fn merge_sorts_by_final_value_descending() {
        // ordering mirrors a published comparison: mean reversion first,
        // the network second, newton step last
        let reports = vec![
            report_with("ons", 2.648263),
            report_with("pamr", 21.872857),
            report_with("agent", 16.305332),
        ];
        let rows = merge(&reports).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, vec!["pamr", "agent", "ons"]);
    }

    #[test]
    fn merge_of_one_report_is_itself() {
        let report = report_with("ucrp", 1.0);
        let rows = merge(&[report.clone()]).unwrap();
        assert_eq!(rows, report.summary_rows());
    }

    #[test]
    fn merge_rejects_mismatched_ranges() {
        let a = report_with("ucrp", 1.0);
        let mut b = report_with("ubah", 1.1);
        b.test_range = PeriodRange::new(60, 80);
        assert!(matches!(merge(&[a, b]), Err(CliError::Data(_))));
    }

    #[test]
    fn curves_csv_lines_up_policies() {
        let a = report_with("ucrp", 1.0);
        let csv = curves_csv(&a.policies);
        assert!(csv.starts_with("period,ucrp\n0,1\n1,1\n"));
    }
}

//! Report serialization and the cross-method summary.

use std::fmt::Write;

use swag_core::metrics::MetricsReport;

pub fn report_json(report: &MetricsReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// One row per horizon; horizon 0 is recognition.
pub fn report_csv(report: &MetricsReport) -> String {
    let mut s = String::from("horizon,samples,accuracy,f1,wmae,in_mae,out_mae\n");
    for row in report.rows() {
        let mae = row.mae;
        writeln!(
            s,
            "{},{},{:.6},{:.6},{},{},{}",
            row.horizon,
            row.samples,
            row.accuracy,
            row.f1,
            opt(mae.map(|m| m.wmae)),
            opt(mae.map(|m| m.in_mae)),
            opt(mae.map(|m| m.out_mae)),
        )
        .expect("string write");
    }
    s
}

struct SummaryRow {
    method: String,
    cells: Vec<String>,
}

const SUMMARY_COLUMNS: [&str; 10] = [
    "videos",
    "recognition_f1",
    "mean_f1",
    "mean_accuracy",
    "seg_f1",
    "f1_first",
    "f1_last",
    "wmae_last",
    "rsd_mae_all",
    "horizon",
];

fn summary_rows(reports: &[MetricsReport]) -> Vec<SummaryRow> {
    reports
        .iter()
        .map(|r| {
            let first = r.horizons.first();
            let last = r.horizons.last();
            SummaryRow {
                method: r.method.clone(),
                cells: vec![
                    r.videos.to_string(),
                    format!("{:.4}", r.recognition.f1),
                    format!("{:.4}", r.mean_f1),
                    format!("{:.4}", r.mean_accuracy),
                    format!("{:.4}", r.seg_f1),
                    opt(first.map(|h| h.f1)),
                    opt(last.map(|h| h.f1)),
                    opt(last.and_then(|h| h.mae).map(|m| m.wmae)),
                    opt(r.rsd.map(|s| s.mae_all.mean)),
                    r.horizons.len().to_string(),
                ],
            }
        })
        .collect()
}

pub fn summary_csv(reports: &[MetricsReport]) -> String {
    let mut s = format!("method,{}\n", SUMMARY_COLUMNS.join(","));
    for row in summary_rows(reports) {
        writeln!(s, "{},{}", row.method, row.cells.join(",")).expect("string write");
    }
    s
}

/// Headline table plus per-horizon F1 curves.
pub fn summary_markdown(reports: &[MetricsReport]) -> String {
    let mut s = String::from("# Summary\n\n");
    writeln!(s, "| method | {} |", SUMMARY_COLUMNS.join(" | ")).expect("string write");
    writeln!(s, "|---|{}", "---|".repeat(SUMMARY_COLUMNS.len())).expect("string write");
    for row in summary_rows(reports) {
        writeln!(s, "| {} | {} |", row.method, row.cells.join(" | ")).expect("string write");
    }
    let longest = reports.iter().map(|r| r.horizons.len()).max().unwrap_or(0);
    s.push_str("\n## F1 by horizon (minutes)\n\n| method |");
    for n in 1..=longest {
        write!(s, " {n} |").expect("string write");
    }
    writeln!(s, "\n|---|{}", "---|".repeat(longest)).expect("string write");
    for r in reports {
        write!(s, "| {} |", r.method).expect("string write");
        for n in 0..longest {
            write!(s, " {} |", r.horizons.get(n).map(|h| format!("{:.3}", h.f1)).unwrap_or_default())
                .expect("string write");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use swag_core::metrics::{evaluate_run, EvalConfig, GroundTruthOracle};
    use swag_core::simulate::{build_dataset, FeatureModel, SplitCounts, WorkflowGrammar};

    fn oracle_report() -> MetricsReport {
        let d = build_dataset(
            &WorkflowGrammar::structured(),
            &FeatureModel::random(7, 2, 0.1, 1),
            SplitCounts::new(1, 1, 2),
            4,
        )
        .unwrap();
        evaluate_run(&GroundTruthOracle { horizon: 4 }, &d.test, &EvalConfig::new(7)).unwrap()
    }

    #[test]
    fn json_round_trips() {
        let r = oracle_report();
        let back: MetricsReport = serde_json::from_str(&report_json(&r)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_has_one_row_per_horizon() {
        let csv = report_csv(&oracle_report());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 1 + 4);
        assert!(lines[2].starts_with("1,") && lines[2].contains(",1.000000,"));
        assert!(lines.iter().all(|l| l.split(',').count() == 7));
    }

    #[test]
    fn summary_lists_each_method() {
        let mut a = oracle_report();
        let b = a.clone();
        a.method = "alpha".into();
        let md = summary_markdown(&[a.clone(), b.clone()]);
        assert!(md.contains("| alpha |") && md.contains("| oracle |"));
        let csv = summary_csv(&[a, b]);
        assert_eq!(csv.lines().count(), 3);
    }
}

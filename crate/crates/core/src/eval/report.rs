use std::fmt::Write as _;
use std::str::FromStr;

use super::experiment::{CellReport, ExperimentReport, Group, Stat, Summary};
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(EvalError::Config(format!("unknown report format {s:?} (expected table or csv)"))),
        }
    }
}

/// `mean (±std)` with one decimal.
pub fn cell(stat: Stat, scale: f64) -> String {
    format!("{:.1} (±{:.1})", stat.mean * scale, stat.std * scale)
}

const GROUPS: [(Group, &str, &str); 3] = [
    (Group::All, "All test days", ""),
    (Group::Event, "Event days", "event_"),
    (Group::NonEvent, "Non-event days", "nonevent_"),
];

fn summary_cells(s: Option<Summary>) -> [String; 4] {
    match s {
        None => ["n/a".into(), "n/a".into(), "n/a".into(), "n/a".into()],
        Some(s) => [
            cell(s.mae, 1.0),
            cell(s.rmse, 1.0),
            s.mape.map_or_else(|| "n/a".into(), |m| cell(m, 1.0)),
            cell(s.r2, 100.0),
        ],
    }
}

fn runs_cell(c: &CellReport) -> String {
    format!("{}/{}", c.runs.len(), c.runs.len() + c.failures.len())
}

fn table(report: &ExperimentReport, groups: &[(Group, &str, &str)]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "area {} | test days {} ({} with events) | runs per cell {} | base seed {}",
        report.area_id, report.test_days, report.event_days, report.runs_per_cell, report.base_seed
    );
    let header = ["Model", "Features", "Runs", "MAE", "RMSE", "MAPE", "R2 (x100)"];
    for &(group, title, _) in groups {
        let rows: Vec<[String; 7]> = report
            .cells
            .iter()
            .map(|c| {
                let [mae, rmse, mape, r2] = summary_cells(c.summary(group));
                [
                    c.method.label().to_string(),
                    c.feature_set.map_or_else(|| "-".into(), |f| f.name().to_string()),
                    runs_cell(c),
                    mae,
                    rmse,
                    mape,
                    r2,
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for r in &rows {
            for (w, v) in widths.iter_mut().zip(r) {
                *w = (*w).max(v.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (v, &w))| if i < 3 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let _ = writeln!(out, "\n{title}");
        let _ = writeln!(out, "{}", line(&header.map(String::from)));
        let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        for r in &rows {
            let _ = writeln!(out, "{}", line(r));
        }
    }
    let failures: Vec<String> = report
        .cells
        .iter()
        .flat_map(|c| c.failures.iter().map(move |f| format!("  {} seed {}: {}", c.label(), f.seed, f.reason)))
        .collect();
    if !failures.is_empty() {
        let _ = writeln!(out, "\nExcluded runs");
        for f in failures {
            let _ = writeln!(out, "{f}");
        }
    }
    out
}

fn csv(report: &ExperimentReport, groups: &[(Group, &str, &str)]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string(), "features".into(), "runs".into(), "excluded".into()];
    for &(_, _, prefix) in groups {
        for f in ["days", "mae_mean", "mae_std", "rmse_mean", "rmse_std", "mape_mean", "mape_std", "r2_mean", "r2_std"] {
            header.push(format!("{prefix}{f}"));
        }
    }
    w.write_record(&header)?;
    let num = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for c in &report.cells {
        let mut rec = vec![
            c.method.label().to_string(),
            c.feature_set.map_or_else(String::new, |f| f.name().to_string()),
            c.runs.len().to_string(),
            c.failures.len().to_string(),
        ];
        for &(group, _, _) in groups {
            let s = c.summary(group);
            rec.push(s.map_or_else(|| "0".into(), |s| s.days.to_string()));
            for stat in [s.map(|s| s.mae), s.map(|s| s.rmse), s.and_then(|s| s.mape), s.map(|s| s.r2)] {
                rec.push(num(stat.map(|x| x.mean)));
                rec.push(num(stat.map(|x| x.std)));
            }
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Deterministic text rendering, with the event and non-event breakdown.
/// Rows follow the report's cell order.
pub fn render_report(report: &ExperimentReport, format: ReportFormat) -> Result<String, EvalError> {
    render_report_with(report, format, true)
}

/// [`render_report`], optionally restricted to all test days.
pub fn render_report_with(report: &ExperimentReport, format: ReportFormat, breakdown: bool) -> Result<String, EvalError> {
    let groups = if breakdown { &GROUPS[..] } else { &GROUPS[..1] };
    match format {
        ReportFormat::Table => Ok(table(report, groups)),
        ReportFormat::Csv => csv(report, groups),
    }
}

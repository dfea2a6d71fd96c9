use std::fmt::Write;

use super::crossval::CrossvalResult;
use super::metrics::MetricsReport;

pub const CSV_HEADER: &str = "arch,features,fold,accuracy,precision,recall,f1,roc_auc";
const COLUMNS: [&str; 5] = ["Accuracy", "Precision", "Recall", "F1-Score", "ROC-AUC"];

/// Published figures for this task: `(model, [accuracy, precision, recall, f1, roc_auc])`.
/// Feature-engineered baselines on the same headline dataset.
pub const BASELINES: &[(&str, [f64; 5])] = &[
    ("SVM", [0.93, 0.95, 0.90, 0.93, 0.97]),
    ("Decision Tree", [0.90, 0.91, 0.89, 0.90, 0.90]),
    ("Random Forest", [0.92, 0.94, 0.91, 0.92, 0.97]),
];

/// Published 10-fold means for the nine grid points, in grid order.
pub const PUBLISHED_GRID: &[(&str, [f64; 5])] = &[
    ("BiRNN (CE)", [0.9629, 0.9513, 0.9757, 0.9633, 0.9929]),
    ("BiRNN (WE)", [0.9650, 0.9722, 0.9573, 0.9647, 0.9935]),
    ("BiRNN (CE+WE)", [0.9666, 0.9530, 0.9787, 0.9655, 0.9938]),
    ("BiGRU (CE)", [0.9661, 0.9833, 0.9482, 0.9634, 0.9945]),
    ("BiGRU (WE)", [0.9769, 0.9761, 0.9778, 0.9770, 0.9965]),
    ("BiGRU (CE+WE)", [0.9774, 0.9662, 0.9893, 0.9776, 0.9979]),
    ("BiLSTM (CE)", [0.9673, 0.9849, 0.9492, 0.9667, 0.9950]),
    ("BiLSTM (WE)", [0.9787, 0.9759, 0.9815, 0.9787, 0.9970]),
    ("BiLSTM (CE+WE)", [0.9819, 0.9839, 0.9799, 0.9819, 0.9980]),
];

fn table(rows: &[(String, Option<[f64; 5]>, Option<String>)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("Model".len());
    let mut out = format!("{:<width$}", "Model");
    for c in COLUMNS {
        write!(out, "  {c:>9}").unwrap();
    }
    out.push('\n');
    let rule = width + COLUMNS.len() * 11;
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for (name, values, note) in rows {
        write!(out, "{name:<width$}").unwrap();
        if let Some(v) = values {
            for x in v {
                write!(out, "  {x:>9.4}").unwrap();
            }
        }
        if let Some(n) = note {
            write!(out, "  {n}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Aligned comparison table with one summary row per grid point.
pub fn render_table(result: &CrossvalResult) -> String {
    let rows: Vec<_> = result
        .configs
        .iter()
        .map(|(p, r)| match r {
            Ok(c) => (p.model_name(), Some(c.summary.values()), None),
            Err(e) => (p.model_name(), None, Some(format!("failed: {e}"))),
        })
        .collect();
    table(&rows)
}

/// The baselines against one model's summary.
pub fn render_baseline_table(name: &str, summary: &MetricsReport) -> String {
    let mut rows: Vec<_> = BASELINES
        .iter()
        .map(|(n, v)| (n.to_string(), Some(*v), None))
        .collect();
    rows.push((name.to_string(), Some(summary.values()), None));
    table(&rows)
}

fn csv_row(out: &mut String, arch: &str, features: &str, fold: &str, r: &MetricsReport) {
    write!(out, "{arch},{features},{fold}").unwrap();
    for v in r.values() {
        write!(out, ",{v:.6}").unwrap();
    }
    out.push('\n');
}

/// Per-fold rows followed by a `mean` row for each successful grid point.
/// The summary row is labelled `mean` in both aggregation modes.
pub fn render_csv(result: &CrossvalResult) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for (point, r) in &result.configs {
        let Ok(c) = r else { continue };
        let (arch, features) = (point.arch.as_str(), point.features.as_str());
        for (i, fold) in c.folds.iter().enumerate() {
            csv_row(&mut out, arch, features, &(i + 1).to_string(), fold);
        }
        csv_row(&mut out, arch, features, "mean", &c.summary);
    }
    out
}

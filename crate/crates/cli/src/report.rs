//! Markdown tables, JSON reports and ROC polylines. Every number printed
//! is a field of the report; the renderer does no arithmetic.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, Task};
use crate::run::ExperimentReport;
use crate::CliError;

/// Rows shown in each importance table.
const IMPORTANCE_ROWS: usize = 10;

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

/// Lower-case label with runs of other characters collapsed to `_`.
pub fn slug(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    let trimmed = out.trim_matches('_');
    if trimmed.is_empty() {
        "model".into()
    } else {
        trimmed.to_string()
    }
}

/// GitHub-flavored Markdown summary of a run.
pub fn render_table(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let p = &report.plan;
    let _ = writeln!(s, "# {}\n", report.name);
    let _ = writeln!(
        s,
        "Dataset `{}`, n = {}; {}-fold cross-validation{}, seed {}, fold hash `{}`.\n",
        report.dataset,
        p.n_rows,
        p.folds,
        if p.stratified { " stratified by class" } else { "" },
        p.seed,
        p.fingerprint
    );
    match report.task {
        Task::Classification => {
            s.push_str(
                "| model | AUC | misclass (out) | misclass (in) | cutoff s* | sens @ s* | spec @ s* | sens @ 0.5 | spec @ 0.5 | seed |\n",
            );
            s.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
            for m in &report.models {
                let c = m.classification.as_ref().expect("classification runs carry a summary");
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                    m.label,
                    f4(c.auc),
                    f4(m.cv.risk),
                    f4(m.cv.in_sample_risk),
                    f4(c.cutoff.threshold),
                    f4(c.at_cutoff.sensitivity),
                    f4(c.at_cutoff.specificity),
                    f4(c.at_half.sensitivity),
                    f4(c.at_half.specificity),
                    m.cv.seed
                );
            }
        }
        Task::Regression => {
            s.push_str("| model | out-of-sample MSE | in-sample MSE | seed |\n");
            s.push_str("|---|---|---|---|\n");
            for m in &report.models {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} |",
                    m.label,
                    f4(m.cv.risk),
                    f4(m.cv.in_sample_risk),
                    m.cv.seed
                );
            }
        }
    }
    for m in &report.models {
        if let Some(rows) = &m.importance {
            let _ = writeln!(s, "\n## Variable importance: {}\n", m.label);
            s.push_str("| rank | variable | impurity decrease | permutation | permutation s.e. |\n");
            s.push_str("|---|---|---|---|---|\n");
            for (rank, r) in rows.iter().take(IMPORTANCE_ROWS).enumerate() {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} |",
                    rank + 1,
                    r.variable,
                    f4(r.impurity),
                    f4(r.permutation),
                    f4(r.permutation_se)
                );
            }
        }
    }
    s
}

fn write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn emit_table(report: &ExperimentReport, path: &Path) -> Result<(), CliError> {
    write(path, render_table(report).as_bytes())
}

pub fn emit_roc(curve: &twocultures::eval::RocCurve, path: &Path) -> Result<(), CliError> {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    write(path, &buf)
}

/// Writes the table, the JSON report and one ROC file per classifier into
/// `out_dir`; returns the written paths.
pub fn write_outputs(cfg: &ExperimentConfig, report: &ExperimentReport, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut written = Vec::new();

    let table = out_dir.join(cfg.output.table.clone().unwrap_or_else(|| format!("{}.md", cfg.name)));
    emit_table(report, &table)?;
    written.push(table);

    let json = out_dir.join(format!("{}.json", cfg.name));
    let text = serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))?;
    write(&json, text.as_bytes())?;
    written.push(json);

    let prefix = cfg.output.roc.clone().unwrap_or_else(|| format!("{}_roc", cfg.name));
    for m in &report.models {
        if let Some(c) = &m.classification {
            let path = out_dir.join(format!("{prefix}_{}.csv", slug(&m.label)));
            emit_roc(&c.roc, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Wall-clock seconds per model, one `label<TAB>seconds` line each.
pub fn render_timings(report: &ExperimentReport) -> String {
    report.timings.iter().map(|(label, secs)| format!("{label}\t{secs:.3}\n")).collect()
}

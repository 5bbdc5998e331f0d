//! Static run reports: accuracy matrix, robustness, per-dialect means,
//! gap-error distribution and the manifest, as Markdown and CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use xdialect_core::gapscope::{category_distribution, CategoryDistribution, ClassifiedGap};
use xdialect_core::metrics::{accuracy_matrix, AccuracyMatrix};
use xdialect_core::{Dialect, EvalRecord, RunManifest};

use crate::error::{HarnessError, Result};
use crate::run::IncompleteStage;

pub struct ReportInput<'a> {
    pub manifest: &'a RunManifest,
    pub records: &'a [EvalRecord],
    pub classifications: &'a [ClassifiedGap],
    pub incomplete: &'a BTreeMap<String, IncompleteStage>,
}

const NO_BASELINE: &str = "Robustness is omitted: the run has no SQLite results to use as the baseline.";

fn csv_err(e: impl ToString) -> HarnessError {
    HarnessError::Config(format!("csv: {}", e.to_string()))
}

/// One row per model: accuracy per dialect, the model's mean and its
/// robustness. Values are written in shortest round-trip form so they
/// parse back to exactly the computed numbers.
pub fn matrix_csv(m: &AccuracyMatrix) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string()];
    header.extend(m.dialects().iter().map(|d| d.id().to_string()));
    header.extend(["avg".to_string(), "robustness".to_string()]);
    w.write_record(&header).map_err(csv_err)?;
    for (i, model) in m.models().iter().enumerate() {
        let mut row = vec![model.clone()];
        row.extend((0..m.dialects().len()).map(|j| m.cell(i, j).map(|v| v.to_string()).unwrap_or_default()));
        row.push(m.model_mean(model).map(|v| v.to_string()).unwrap_or_default());
        row.push(match m.robustness(model) {
            Some(Ok(r)) => r.to_string(),
            _ => String::new(),
        });
        w.write_record(&row).map_err(csv_err)?;
    }
    String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
}

/// Read a model-by-dialect accuracy table. Any column other than `model`,
/// `avg` and `robustness` is a dialect; empty cells stay empty.
pub fn read_matrix_csv(reader: impl Read) -> Result<AccuracyMatrix> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(csv_err)?.clone();
    let mut dialect_cols = Vec::new();
    let mut model_col = None;
    for (j, name) in header.iter().enumerate() {
        match name.trim() {
            "model" => model_col = Some(j),
            "avg" | "robustness" => {}
            d => dialect_cols.push((j, d.parse::<Dialect>()?)),
        }
    }
    let model_col = model_col.ok_or_else(|| csv_err("no 'model' column"))?;
    let mut models = Vec::new();
    let mut cells = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        models.push(rec.get(model_col).unwrap_or_default().trim().to_string());
        let row = dialect_cols
            .iter()
            .map(|(j, _)| {
                let v = rec.get(*j).unwrap_or_default().trim();
                if v.is_empty() {
                    Ok(None)
                } else {
                    v.parse::<f64>().map(Some).map_err(|e| csv_err(format!("'{v}': {e}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(row);
    }
    Ok(AccuracyMatrix::from_grid(models, dialect_cols.into_iter().map(|(_, d)| d).collect(), cells))
}

/// Markdown accuracy table with one decimal, a per-dialect mean row, and a
/// robustness column when a SQLite baseline exists.
pub fn matrix_markdown(m: &AccuracyMatrix) -> String {
    let has_baseline = m.dialects().contains(&Dialect::Sqlite) && m.dialects().len() > 1;
    let pct = |v: Option<f64>| v.map(|v| format!("{v:.1}")).unwrap_or_else(|| "–".into());
    let mut out = String::new();
    let names: Vec<&str> = m.dialects().iter().map(Dialect::display_name).collect();
    let _ = write!(out, "| Model | {} | Avg |", names.join(" | "));
    if has_baseline {
        out.push_str(" Robustness |");
    }
    out.push('\n');
    let cols = names.len() + 2 + usize::from(has_baseline);
    out.push_str(&format!("|{}\n", "---|".repeat(cols)));
    for (i, model) in m.models().iter().enumerate() {
        let cells: Vec<String> = (0..m.dialects().len()).map(|j| pct(m.cell(i, j))).collect();
        let _ = write!(out, "| {model} | {} | {} |", cells.join(" | "), pct(m.model_mean(model)));
        if has_baseline {
            let r = match m.robustness(model) {
                Some(Ok(r)) => format!("{r:.4}"),
                _ => "–".into(),
            };
            let _ = write!(out, " {r} |");
        }
        out.push('\n');
    }
    let means: Vec<String> = m.dialects().iter().map(|d| pct(m.dialect_mean(d))).collect();
    let _ = write!(out, "| *Dialect mean* | {} | |", means.join(" | "));
    if has_baseline {
        out.push_str(" |");
    }
    out.push('\n');
    if !has_baseline {
        let _ = write!(out, "\n{NO_BASELINE}\n");
    }
    out
}

pub fn distribution_markdown(d: &CategoryDistribution) -> String {
    let mut out = String::from("| Category | Count | Share (%) |\n|---|---|---|\n");
    for (share, (_, rounded)) in d.shares.iter().zip(d.rounded()) {
        let _ = writeln!(out, "| {} | {} | {rounded:.1} |", share.category.label(), share.count);
    }
    let _ = writeln!(out, "| *Total* | {} | 100.0 |", d.total);
    out
}

fn manifest_markdown(m: &RunManifest) -> String {
    let mut out = String::new();
    let dialects: Vec<&str> = m.dialects.iter().map(Dialect::id).collect();
    let models: Vec<&str> = m.endpoints.iter().map(|e| e.model_id.as_str()).collect();
    let _ = writeln!(out, "- Run: `{}`, created {}", m.run_id, m.created_at);
    let _ = writeln!(out, "- Benchmark: {} (`{}`, sha256 `{}`)", m.benchmark_name, m.benchmark_path, m.benchmark_sha256);
    let _ = writeln!(out, "- Databases: `{}`", m.db_root);
    let _ = writeln!(out, "- Dialects: {}", if dialects.is_empty() { "–".into() } else { dialects.join(", ") });
    let _ = writeln!(out, "- Models: {}", if models.is_empty() { "–".into() } else { models.join(", ") });
    let _ = writeln!(out, "- Tolerances: rtol {}, atol {}; timeout {} ms; parallelism {}", m.rtol, m.atol, m.timeout_ms, m.parallelism);
    out
}

/// Markdown and CSV report text for a run.
pub fn render_report(input: &ReportInput<'_>) -> Result<(String, String)> {
    let matrix = accuracy_matrix(input.records);
    let mut md = format!("# Run report: {}\n\n## Execution accuracy (%)\n\n", input.manifest.run_id);
    if input.records.is_empty() {
        md.push_str("No verdicts recorded yet.\n");
    } else {
        md.push_str(&matrix_markdown(&matrix));
        if let Some(drops) = matrix.drops() {
            let _ = write!(
                md,
                "\nMean drop from SQLite: {:.1} points ({:.1}% relative, {:.1}% pooled).\n",
                drops.mean_points, drops.mean_relative_pct, drops.pooled_relative_pct
            );
        }
    }
    if !input.classifications.is_empty() {
        md.push_str("\n## Gap errors by category\n\n");
        match category_distribution(input.classifications.iter().map(|c| &c.classification)) {
            Ok(d) => md.push_str(&distribution_markdown(&d)),
            Err(e) => {
                let _ = writeln!(md, "{e}");
            }
        }
    }
    if !input.incomplete.is_empty() {
        md.push_str("\n## Unfinished stages\n\n");
        for (stage, state) in input.incomplete {
            let _ = writeln!(md, "- `{stage}`: {} ({} pending)", state.message, state.pending.len());
        }
    }
    md.push_str("\n## Run\n\n");
    md.push_str(&manifest_markdown(input.manifest));
    Ok((md, matrix_csv(&matrix)?))
}

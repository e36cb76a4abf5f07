use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{row_set_hash, AuditEntry, BenchConfig, BenchData, MatrixOutput, Method, ResultRow};
use crate::error::{Error, Result};
use crate::graph::{dag_to_dot, shd, to_dot, EdgeList};
use crate::ingest::Table;

/// Median of finite values; NaN when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// One treatment's histogram over bins shared by all treatments.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub treatment: String,
    /// `counts.len() + 1` ascending edges; the last bin is closed.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Per-treatment histograms of `column` with `n_bins` equal-width bins over the
/// pooled range. A constant column gets a single bin.
pub fn distribution_summary(table: &Table, column: &str, n_bins: usize) -> Result<Vec<Histogram>> {
    if n_bins == 0 {
        return Err(Error::Config("histograms need at least one bin".into()));
    }
    let values = table.column_by_name(column)?;
    if values.is_empty() {
        return Err(Error::Data("no rows to summarise".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(format!("column '{column}' has non-finite values")));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = if hi > lo { n_bins } else { 1 };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| if k == bins { hi } else { lo + width * k as f64 }).collect();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (v, t) in values.iter().zip(&table.treatment) {
        let b = if hi > lo { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
        groups.entry(t.as_str()).or_insert_with(|| vec![0; bins])[b] += 1;
    }
    Ok(groups
        .into_iter()
        .map(|(t, counts)| Histogram {
            treatment: t.to_string(),
            edges: edges.clone(),
            counts,
        })
        .collect())
}

pub fn histograms_csv(hists: &[Histogram]) -> String {
    let mut s = String::from("treatment,bin_low,bin_high,count\n");
    for h in hists {
        for (k, c) in h.counts.iter().enumerate() {
            writeln!(s, "{},{:.6},{:.6},{}", h.treatment, h.edges[k], h.edges[k + 1], c).unwrap();
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub median_mse: f64,
    pub median_mae: f64,
    pub succeeded: usize,
    pub failed: usize,
    pub warnings: u64,
}

/// Per-method medians in the order methods first appear in `rows`.
pub fn summarise(rows: &[ResultRow]) -> Vec<MethodSummary> {
    let mut order: Vec<Method> = Vec::new();
    for r in rows {
        if !order.contains(&r.method) {
            order.push(r.method);
        }
    }
    order
        .into_iter()
        .map(|m| {
            let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.method == m).collect();
            let ok: Vec<&&ResultRow> = mine.iter().filter(|r| r.failure.is_none()).collect();
            MethodSummary {
                method: m,
                median_mse: median(&ok.iter().map(|r| r.mse).collect::<Vec<_>>()),
                median_mae: median(&ok.iter().map(|r| r.mae).collect::<Vec<_>>()),
                succeeded: ok.len(),
                failed: mine.len() - ok.len(),
                warnings: mine.iter().map(|r| r.warnings).sum(),
            }
        })
        .collect()
}

/// Every causal-skeleton GNN beats every non-causal method on both metrics.
pub fn causal_ordering_holds(summaries: &[MethodSummary]) -> bool {
    let (causal, other): (Vec<_>, Vec<_>) = summaries.iter().partition(|s| s.method.causal());
    !causal.is_empty()
        && !other.is_empty()
        && causal.iter().all(|c| {
            other
                .iter()
                .all(|o| c.median_mse < o.median_mse && c.median_mae < o.median_mae)
        })
}

/// Rendered artifacts of one matrix run.
#[derive(Debug, Clone)]
pub struct Report {
    pub results_csv: String,
    pub reference_csv: String,
    pub audit_csv: String,
    pub markdown: String,
    pub summaries: Vec<MethodSummary>,
    pub reference: Vec<MethodSummary>,
    pub audit: Vec<AuditEntry>,
}

fn rows_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from("method,causal,skeleton,model,seed,mse,mae,warnings,status\n");
    for r in rows {
        let status = match &r.failure {
            None => "ok".to_string(),
            Some(e) => format!("\"failed: {}\"", e.replace('"', "'")),
        };
        writeln!(
            s,
            "{},{},{},{},{},{:.6},{:.6},{},{}",
            r.method.name(),
            r.method.causal(),
            r.method.skeleton(),
            r.method.model(),
            r.seed,
            r.mse,
            r.mae,
            r.warnings,
            status
        )
        .unwrap();
    }
    s
}

fn summary_table(s: &mut String, summaries: &[MethodSummary]) {
    s.push_str("| Method | Causal | Median MSE | Median MAE | Seeds ok | Seeds failed | Warnings |\n");
    s.push_str("|---|---|---|---|---|---|---|\n");
    for m in summaries {
        writeln!(
            s,
            "| {} | {} | {:.4} | {:.4} | {} | {} | {} |",
            m.method.name(),
            if m.method.causal() { "yes" } else { "no" },
            m.median_mse,
            m.median_mae,
            m.succeeded,
            m.failed,
            m.warnings
        )
        .unwrap();
    }
}

/// Canonical text artifacts; independent of worker count and cell scheduling.
pub fn render_report(config: &BenchConfig, data: &BenchData, matrix: &MatrixOutput) -> Report {
    let summaries = summarise(&matrix.rows);
    let reference = summarise(&matrix.reference);

    let train_hash = row_set_hash(&data.prepared.table, &data.split.train_mask);
    let mut audit = data.audit.clone();
    for r in matrix.rows.iter().chain(&matrix.reference) {
        audit.push(AuditEntry {
            stage: format!("fit-{}-seed{}", r.method.key(), r.seed),
            rows: data.split.train_rows(),
            row_hash: train_hash.clone(),
            fit_hash: r.fit_hash.clone(),
        });
    }
    let mut audit_csv = String::from("stage,rows,row_hash,fit_hash\n");
    for a in &audit {
        writeln!(audit_csv, "{},{},{},{}", a.stage, a.rows, a.row_hash, a.fit_hash).unwrap();
    }

    let mut md = String::new();
    md.push_str("# Out-of-distribution benchmark report\n\n");
    writeln!(md, "- Config hash: `{}`", config.hash()).unwrap();
    writeln!(md, "- Seeds: {} (master seed {})", config.seeds, config.master_seed).unwrap();
    writeln!(
        md,
        "- Train treatments: {} ({} fields, {} rows)",
        config.train_treatments.join(", "),
        data.split.train_fields,
        data.split.train_rows()
    )
    .unwrap();
    writeln!(
        md,
        "- Test treatments: {} ({} fields, {} rows)",
        config.test_treatments.join(", "),
        data.split.test_fields,
        data.split.test_rows()
    )
    .unwrap();
    writeln!(
        md,
        "- Metrics are in raw target units (`{}` is never scaled). Medians are taken over seeds.",
        data.target_label()
    )
    .unwrap();
    md.push_str("- Causal discovery, scaling and model selection use training rows only; see audit.csv.\n\n");

    md.push_str("## Results\n\n");
    summary_table(&mut md, &summaries);
    writeln!(
        md,
        "\nEvery causal-skeleton GNN below every non-causal method on both metrics: **{}**\n",
        if causal_ordering_holds(&summaries) { "yes" } else { "no" }
    )
    .unwrap();

    md.push_str("## Reference: true graph\n\n");
    md.push_str("Not part of the comparison above.\n\n");
    summary_table(&mut md, &reference);

    md.push_str("\n## Discovered graphs\n\n");
    md.push_str("| Algorithm | Edges | Directed | SHD to truth | Warnings | Extension fallback |\n|---|---|---|---|---|---|\n");
    let truth = data.true_cpdag();
    for (alg, g) in &data.graphs {
        writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} |",
            alg.as_str().to_uppercase(),
            g.cpdag.n_edges(),
            g.cpdag.directed().len(),
            shd(&truth, &g.cpdag),
            g.warnings,
            if g.fallback { "yes" } else { "no" }
        )
        .unwrap();
    }

    let notes: Vec<&ResultRow> = matrix.rows.iter().filter(|r| r.method == Method::Mlp && r.failure.is_none()).collect();
    if !notes.is_empty() {
        md.push_str("\n## MLP grid choice\n\n");
        for r in notes {
            writeln!(md, "- seed {}: {}", r.seed, r.note).unwrap();
        }
    }
    let failed: Vec<&ResultRow> = matrix.rows.iter().chain(&matrix.reference).filter(|r| r.failure.is_some()).collect();
    if !failed.is_empty() {
        md.push_str("\n## Failed cells\n\n");
        for r in failed {
            writeln!(md, "- {} seed {}: {}", r.method.name(), r.seed, r.failure.as_deref().unwrap_or("")).unwrap();
        }
    }

    Report {
        results_csv: rows_csv(&matrix.rows),
        reference_csv: rows_csv(&matrix.reference),
        audit_csv,
        markdown: md,
        summaries,
        reference,
        audit,
    }
}

/// Writes the report, histograms and graphs under `dir`.
pub fn write_outputs(dir: &Path, report: &Report, data: &BenchData) -> Result<()> {
    fs::create_dir_all(dir.join("histograms"))?;
    fs::create_dir_all(dir.join("graphs"))?;
    fs::write(dir.join("results.csv"), &report.results_csv)?;
    fs::write(dir.join("reference.csv"), &report.reference_csv)?;
    fs::write(dir.join("audit.csv"), &report.audit_csv)?;
    fs::write(dir.join("report.md"), &report.markdown)?;
    let target = data.target_label().to_string();
    for column in [target.as_str(), "plough"] {
        let h = distribution_summary(&data.raw, column, 20)?;
        fs::write(dir.join("histograms").join(format!("{column}.csv")), histograms_csv(&h))?;
    }
    let roles = data.scm.role_map();
    for (alg, g) in &data.graphs {
        let stem = alg.as_str();
        fs::write(dir.join("graphs").join(format!("{stem}.dot")), to_dot(&g.cpdag, Some(&roles)))?;
        fs::write(dir.join("graphs").join(format!("{stem}.edges")), EdgeList::from_dag(&g.dag).to_text())?;
    }
    fs::write(dir.join("graphs").join("truth.dot"), dag_to_dot(&data.scm.dag, Some(&roles)))?;
    fs::write(dir.join("graphs").join("truth.edges"), EdgeList::from_dag(&data.scm.dag).to_text())?;
    Ok(())
}

use std::collections::BTreeMap;

use super::table::{Cadence, ColumnKind, ColumnSpec, Schema, Table};
use crate::error::{Error, Result};

fn category_label(spec: &ColumnSpec, code: f64) -> Result<String> {
    if code.fract() != 0.0 || code < 0.0 || !code.is_finite() {
        return Err(Error::Schema(format!(
            "column '{}' holds non-integer category code {code}",
            spec.name
        )));
    }
    let k = code as usize;
    Ok(match spec.categories.get(k) {
        Some(l) => l.clone(),
        None if spec.categories.is_empty() => k.to_string(),
        None => {
            return Err(Error::Schema(format!(
                "column '{}' code {k} has no declared label",
                spec.name
            )))
        }
    })
}

/// Replaces each named categorical column with one binary column per
/// observed category, ordered lexicographically by category label.
pub fn one_hot_encode(table: &Table, columns: &[&str]) -> Result<Table> {
    for c in columns {
        table.schema.require(c)?;
    }
    let n = table.n_rows();
    let mut specs = Vec::new();
    let mut data: Vec<Vec<f64>> = Vec::new();
    for (ci, spec) in table.schema.columns.iter().enumerate() {
        if !columns.contains(&spec.name.as_str()) {
            specs.push(spec.clone());
            data.push(table.column(ci));
            continue;
        }
        let labels: Vec<String> = (0..n)
            .map(|r| category_label(spec, table.get(r, ci)))
            .collect::<Result<_>>()?;
        let mut cats: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for l in &labels {
            cats.entry(l.as_str()).or_insert_with(|| vec![0.0; n]);
        }
        for (r, l) in labels.iter().enumerate() {
            cats.get_mut(l.as_str()).unwrap()[r] = 1.0;
        }
        for (label, col) in cats {
            specs.push(ColumnSpec {
                name: format!("{}={}", spec.name, label),
                kind: ColumnKind::OneHot,
                source_group: spec.name.clone(),
                cadence: spec.cadence,
                categories: Vec::new(),
            });
            data.push(col);
        }
    }
    let schema = Schema::new(specs, table.schema.target.as_deref())?;
    let mut values = Vec::with_capacity(n * schema.width());
    for r in 0..n {
        values.extend(data.iter().map(|c| c[r]));
    }
    Table::new(schema, values, table.dates.clone(), table.field_id.clone(), table.treatment.clone())
}

/// Appends one `field=<id>` indicator column per entry in `vocabulary`.
pub fn field_indicators(table: &Table, vocabulary: &[String]) -> Result<Table> {
    let mut vocab = vocabulary.to_vec();
    vocab.sort();
    vocab.dedup();
    if let Some(f) = table.field_id.iter().find(|f| !vocab.contains(f)) {
        return Err(Error::Schema(format!("field '{f}' missing from vocabulary")));
    }
    let specs = vocab
        .iter()
        .map(|f| ColumnSpec {
            name: format!("field={f}"),
            kind: ColumnKind::OneHot,
            source_group: "field".into(),
            cadence: Cadence::Daily,
            categories: Vec::new(),
        })
        .collect();
    let data = vocab
        .iter()
        .map(|f| table.field_id.iter().map(|x| if x == f { 1.0 } else { 0.0 }).collect())
        .collect();
    table.with_columns(specs, data)
}

//! Loading, encoding, scaling and time alignment of tabular farm records.

mod encode;
pub mod io;
mod lags;
mod merge;
mod scale;
mod table;

pub use encode::{field_indicators, one_hot_encode};
pub use lags::{lag_column_name, lag_counts, DEFAULT_LAG_WINDOWS};
pub use merge::daily_merge;
pub use scale::{min_max_apply, min_max_fit, min_max_invert, ColumnRange, ScalerParams};
pub use table::{Cadence, ColumnKind, ColumnSpec, Schema, Table, LAG_GROUP_PREFIX};

use crate::error::Result;

/// A model-ready table together with the scaler that produced it.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub table: Table,
    pub scaler: ScalerParams,
    pub train_mask: Vec<bool>,
}

/// Columns that get min-max scaled: everything numeric except one-hot
/// indicators and the target, which stays in raw units.
pub fn scalable_columns(schema: &Schema) -> Vec<String> {
    schema
        .columns
        .iter()
        .filter(|c| matches!(c.kind, ColumnKind::Continuous | ColumnKind::EventCount))
        .filter(|c| Some(&c.name) != schema.target.as_ref())
        .map(|c| c.name.clone())
        .collect()
}

/// Daily merge, one-hot encoding of categorical columns, field indicators,
/// lag windows, then min-max scaling fitted on the training treatments only.
pub fn prepare(raw: &Table, field_vocab: &[String], train_treatments: &[String], windows: &[i64]) -> Result<Prepared> {
    let merged = daily_merge(std::slice::from_ref(raw))?;
    let categorical: Vec<String> = merged
        .schema
        .columns
        .iter()
        .filter(|c| c.kind == ColumnKind::Categorical)
        .map(|c| c.name.clone())
        .collect();
    let cat_refs: Vec<&str> = categorical.iter().map(String::as_str).collect();
    let encoded = if cat_refs.is_empty() {
        merged
    } else {
        one_hot_encode(&merged, &cat_refs)?
    };
    let with_fields = field_indicators(&encoded, field_vocab)?;
    let lagged = lag_counts(&with_fields, windows)?;
    let train_mask = lagged.treatment_mask(train_treatments);
    let scaler = min_max_fit(&lagged, &scalable_columns(&lagged.schema), &train_mask)?;
    let table = min_max_apply(&lagged, &scaler)?;
    table.validate()?;
    Ok(Prepared {
        table,
        scaler,
        train_mask,
    })
}

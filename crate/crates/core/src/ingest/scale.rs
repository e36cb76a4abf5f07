use std::fmt::Write as _;

use super::table::Table;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

/// Per-column min-max ranges fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    pub columns: Vec<ColumnRange>,
    pub fitted_on: usize,
}

pub fn min_max_fit(table: &Table, columns: &[String], train_mask: &[bool]) -> Result<ScalerParams> {
    if train_mask.len() != table.n_rows() {
        return Err(Error::Data("train mask length differs from row count".into()));
    }
    let rows: Vec<usize> = (0..table.n_rows()).filter(|&r| train_mask[r]).collect();
    if rows.is_empty() {
        return Err(Error::Data("min-max fit needs at least one training row".into()));
    }
    let mut out = Vec::with_capacity(columns.len());
    for name in columns {
        let c = table.schema.require(name)?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in &rows {
            let v = table.get(r, c);
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite value in '{name}' during scaler fit")));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        out.push(ColumnRange {
            name: name.clone(),
            min: lo,
            max: hi,
        });
    }
    Ok(ScalerParams {
        columns: out,
        fitted_on: rows.len(),
    })
}

/// Maps x to (x - min) / (max - min); constant columns map to 0. No clipping.
pub fn min_max_apply(table: &Table, params: &ScalerParams) -> Result<Table> {
    let mut out = table.clone();
    for cr in &params.columns {
        let c = table
            .schema
            .index(&cr.name)
            .ok_or_else(|| Error::Schema(format!("scaler column '{}' not in table", cr.name)))?;
        let span = cr.max - cr.min;
        for r in 0..table.n_rows() {
            let v = table.get(r, c);
            out.set(r, c, if span > 0.0 { (v - cr.min) / span } else { 0.0 });
        }
    }
    Ok(out)
}

/// Inverse of [`min_max_apply`] for non-degenerate columns.
pub fn min_max_invert(table: &Table, params: &ScalerParams) -> Result<Table> {
    let mut out = table.clone();
    for cr in &params.columns {
        let c = table.schema.require(&cr.name)?;
        let span = cr.max - cr.min;
        for r in 0..table.n_rows() {
            let v = table.get(r, c);
            out.set(r, c, if span > 0.0 { v * span + cr.min } else { cr.min });
        }
    }
    Ok(out)
}

impl ScalerParams {
    /// Plain-text form: `fitted_on = N`, then `name<TAB>min<TAB>max` per column.
    pub fn to_text(&self) -> String {
        let mut s = format!("fitted_on = {}\n", self.fitted_on);
        for c in &self.columns {
            writeln!(s, "{}\t{:?}\t{:?}", c.name, c.min, c.max).unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut fitted_on = None;
        let mut columns = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if let Some(v) = line.strip_prefix("fitted_on = ") {
                fitted_on = Some(
                    v.trim()
                        .parse()
                        .map_err(|_| Error::Data(format!("bad fitted_on '{v}'")))?,
                );
                continue;
            }
            let p: Vec<&str> = line.split('\t').collect();
            if p.len() != 3 {
                return Err(Error::Data(format!("bad scaler line '{line}'")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Data(format!("bad number '{s}'")));
            columns.push(ColumnRange {
                name: p[0].to_string(),
                min: num(p[1])?,
                max: num(p[2])?,
            });
        }
        Ok(ScalerParams {
            columns,
            fitted_on: fitted_on.ok_or_else(|| Error::Data("scaler text lacks fitted_on".into()))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::table::{Cadence, ColumnSpec, Schema};
    use chrono::NaiveDate;

    fn single(vals: &[f64]) -> Table {
        let n = vals.len();
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        Table::new(
            Schema::new(vec![ColumnSpec::continuous("x", Cadence::Daily)], None).unwrap(),
            vals.to_vec(),
            (0..n).map(|i| d0 + chrono::Days::new(i as u64)).collect(),
            vec!["f".into(); n],
            vec!["red".into(); n],
        )
        .unwrap()
    }

    #[test]
    fn maps_endpoints() {
        let t = single(&[2.0, 4.0, 6.0]);
        let p = min_max_fit(&t, &["x".into()], &[true; 3]).unwrap();
        assert_eq!(min_max_apply(&t, &p).unwrap().column(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(p.fitted_on, 3);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let t = single(&[5.0, 5.0, 5.0]);
        let p = min_max_fit(&t, &["x".into()], &[true; 3]).unwrap();
        assert_eq!(min_max_apply(&t, &p).unwrap().column(0), vec![0.0; 3]);
    }

    #[test]
    fn test_rows_extrapolate_unclipped() {
        let t = single(&[2.0, 4.0, 6.0]);
        let p = min_max_fit(&t, &["x".into()], &[true, true, false]).unwrap();
        assert_eq!(p.fitted_on, 2);
        assert_eq!(min_max_apply(&t, &p).unwrap().get(2, 0), 2.0);
    }

    #[test]
    fn unfitted_column_is_error() {
        let t = single(&[1.0]);
        let p = ScalerParams {
            columns: vec![ColumnRange {
                name: "y".into(),
                min: 0.0,
                max: 1.0,
            }],
            fitted_on: 1,
        };
        assert!(min_max_apply(&t, &p).is_err());
        assert!(min_max_fit(&t, &["x".into()], &[false]).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let t = single(&[0.1, 0.7, 1.0 / 3.0]);
        let p = min_max_fit(&t, &["x".into()], &[true; 3]).unwrap();
        assert_eq!(ScalerParams::parse(&p.to_text()).unwrap(), p);
    }
}

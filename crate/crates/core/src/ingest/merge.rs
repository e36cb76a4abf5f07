use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::table::{ColumnKind, ColumnSpec, Schema, Table};
use crate::error::{Error, Result};

#[derive(Clone, Copy)]
struct Acc {
    sum: f64,
    count: u32,
    first: f64,
}

/// Merges tables to one row per (field, day).
///
/// Continuous and one-hot values recorded on the same day are averaged,
/// event counts are summed, categorical codes keep the first reading.
/// Missing continuous values are forward-filled within a field, then
/// leading gaps back-filled.
pub fn daily_merge(tables: &[Table]) -> Result<Table> {
    if tables.is_empty() {
        return Err(Error::Data("daily_merge needs at least one table".into()));
    }
    let mut specs: Vec<ColumnSpec> = Vec::new();
    let mut target: Option<String> = None;
    // per input table, its column -> output column
    let mut maps = Vec::with_capacity(tables.len());
    for t in tables {
        let mut map = Vec::with_capacity(t.n_cols());
        for c in &t.schema.columns {
            match specs.iter().position(|s| s.name == c.name) {
                Some(i) if specs[i] == *c => map.push(i),
                Some(_) => {
                    return Err(Error::Schema(format!(
                        "column '{}' declared with conflicting specs across inputs",
                        c.name
                    )))
                }
                None => {
                    specs.push(c.clone());
                    map.push(specs.len() - 1);
                }
            }
        }
        match (&target, &t.schema.target) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Schema(format!("inputs disagree on target: '{a}' vs '{b}'")))
            }
            (None, Some(b)) => target = Some(b.clone()),
            _ => {}
        }
        maps.push(map);
    }
    let width = specs.len();

    let mut keys: BTreeMap<(String, NaiveDate), usize> = BTreeMap::new();
    let mut field_treatment: BTreeMap<String, String> = BTreeMap::new();
    for t in tables {
        for r in 0..t.n_rows() {
            keys.insert((t.field_id[r].clone(), t.dates[r]), 0);
            match field_treatment.get(&t.field_id[r]) {
                Some(tr) if *tr != t.treatment[r] => {
                    return Err(Error::Data(format!(
                        "field '{}' tagged with treatments '{tr}' and '{}'",
                        t.field_id[r], t.treatment[r]
                    )))
                }
                Some(_) => {}
                None => {
                    field_treatment.insert(t.field_id[r].clone(), t.treatment[r].clone());
                }
            }
        }
    }
    for (i, v) in keys.values_mut().enumerate() {
        *v = i;
    }
    let n = keys.len();
    let mut acc: Vec<Option<Acc>> = vec![None; n * width];
    for (t, map) in tables.iter().zip(&maps) {
        for r in 0..t.n_rows() {
            let row = keys[&(t.field_id[r].clone(), t.dates[r])];
            for (c, &oc) in map.iter().enumerate() {
                let v = t.get(r, c);
                if v.is_nan() {
                    continue;
                }
                let slot = &mut acc[row * width + oc];
                *slot = Some(match *slot {
                    None => Acc {
                        sum: v,
                        count: 1,
                        first: v,
                    },
                    Some(a) => Acc {
                        sum: a.sum + v,
                        count: a.count + 1,
                        first: a.first,
                    },
                });
            }
        }
    }

    let mut values = vec![f64::NAN; n * width];
    for row in 0..n {
        for (c, spec) in specs.iter().enumerate() {
            let a = acc[row * width + c];
            values[row * width + c] = match (spec.kind, a) {
                (ColumnKind::EventCount, None) => 0.0,
                (ColumnKind::EventCount, Some(a)) => a.sum,
                (ColumnKind::Categorical, Some(a)) => a.first,
                (_, Some(a)) if a.count == 1 => a.sum,
                (_, Some(a)) => a.sum / a.count as f64,
                (_, None) => f64::NAN,
            };
        }
    }

    let key_list: Vec<&(String, NaiveDate)> = keys.keys().collect();
    fill_gaps(&mut values, width, &key_list, &specs)?;

    Table::new(
        Schema::new(specs, target.as_deref())?,
        values,
        key_list.iter().map(|k| k.1).collect(),
        key_list.iter().map(|k| k.0.clone()).collect(),
        key_list.iter().map(|k| field_treatment[&k.0].clone()).collect(),
    )
}

fn fill_gaps(values: &mut [f64], width: usize, keys: &[&(String, NaiveDate)], specs: &[ColumnSpec]) -> Result<()> {
    let n = keys.len();
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end < n && keys[end].0 == keys[start].0 {
            end += 1;
        }
        for c in 0..width {
            let mut last = f64::NAN;
            for r in start..end {
                let v = &mut values[r * width + c];
                if v.is_nan() {
                    *v = last;
                } else {
                    last = *v;
                }
            }
            let first = (start..end).map(|r| values[r * width + c]).find(|v| !v.is_nan());
            match first {
                Some(f) => {
                    for r in start..end {
                        let v = &mut values[r * width + c];
                        if v.is_nan() {
                            *v = f;
                        } else {
                            break;
                        }
                    }
                }
                None => {
                    return Err(Error::Data(format!(
                        "column '{}' has no observations for field '{}'",
                        specs[c].name, keys[start].0
                    )))
                }
            }
        }
        start = end;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::table::Cadence;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 3, day).unwrap()
    }

    fn tbl(spec: ColumnSpec, rows: &[(u32, f64)]) -> Table {
        Table::new(
            Schema::new(vec![spec], None).unwrap(),
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| d(r.0)).collect(),
            vec!["f1".into(); rows.len()],
            vec!["red".into(); rows.len()],
        )
        .unwrap()
    }

    #[test]
    fn same_day_readings_averaged() {
        let t = tbl(ColumnSpec::continuous("pH", Cadence::SubDaily), &[(1, 6.0), (1, 7.0)]);
        let m = daily_merge(&[t]).unwrap();
        assert_eq!(m.n_rows(), 1);
        assert_eq!(m.get(0, 0), 6.5);
    }

    #[test]
    fn same_day_events_summed() {
        let t = tbl(ColumnSpec::event("plough"), &[(2, 1.0), (2, 1.0)]);
        assert_eq!(daily_merge(&[t]).unwrap().get(0, 0), 2.0);
    }

    #[test]
    fn missing_values_forward_then_back_filled() {
        let ph = tbl(ColumnSpec::continuous("pH", Cadence::Daily), &[(2, 6.0), (4, 7.0)]);
        let ev = tbl(ColumnSpec::event("plough"), &[(1, 1.0), (3, 1.0), (5, 1.0)]);
        let m = daily_merge(&[ph, ev]).unwrap();
        assert_eq!(m.n_rows(), 5);
        assert_eq!(m.column(0), vec![6.0, 6.0, 6.0, 7.0, 7.0]);
        assert_eq!(m.column(1), vec![1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn conflicting_specs_rejected() {
        let a = tbl(ColumnSpec::continuous("x", Cadence::Daily), &[(1, 1.0)]);
        let b = tbl(ColumnSpec::event("x"), &[(1, 1.0)]);
        assert!(matches!(daily_merge(&[a, b]), Err(Error::Schema(_))));
    }

    #[test]
    fn merging_daily_table_is_identity() {
        let ph = tbl(ColumnSpec::continuous("pH", Cadence::Daily), &[(1, 6.1), (2, 6.3), (3, 5.9)]);
        let m = daily_merge(std::slice::from_ref(&ph)).unwrap();
        assert_eq!(m, ph);
    }
}

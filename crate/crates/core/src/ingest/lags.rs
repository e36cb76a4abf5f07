use super::table::{Cadence, ColumnKind, ColumnSpec, Table, LAG_GROUP_PREFIX};
use crate::error::{Error, Result};

/// Window lengths in days standing in for 1.5 months, 6 months, 1 year and 2 years.
pub const DEFAULT_LAG_WINDOWS: [i64; 4] = [45, 182, 365, 730];

pub fn lag_column_name(event: &str, window: i64) -> String {
    format!("{event}_lag{window}")
}

/// Appends, for each event-count column and window `w`, the number of
/// occurrences within the half-open window `(t - w, t]` of the same field.
///
/// Rows must be sorted by (field, date).
pub fn lag_counts(events: &Table, windows: &[i64]) -> Result<Table> {
    if let Some(w) = windows.iter().find(|&&w| w <= 0) {
        return Err(Error::Config(format!("lag window must be positive, got {w}")));
    }
    events.validate()?;
    let event_cols: Vec<usize> = events
        .schema
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == ColumnKind::EventCount)
        .map(|(i, _)| i)
        .collect();
    let n = events.n_rows();
    let mut specs = Vec::new();
    let mut data = Vec::new();
    for &c in &event_cols {
        let name = &events.schema.columns[c].name;
        for &w in windows {
            specs.push(ColumnSpec {
                name: lag_column_name(name, w),
                kind: ColumnKind::Continuous,
                source_group: format!("{LAG_GROUP_PREFIX}{name}"),
                cadence: Cadence::Daily,
                categories: Vec::new(),
            });
            let mut out = vec![0.0; n];
            // two pointers per field: [lo, r] is the window
            let mut start = 0;
            while start < n {
                let mut end = start;
                while end < n && events.field_id[end] == events.field_id[start] {
                    end += 1;
                }
                let mut lo = start;
                let mut acc = 0.0;
                for r in start..end {
                    acc += events.get(r, c);
                    while (events.dates[r] - events.dates[lo]).num_days() >= w {
                        acc -= events.get(lo, c);
                        lo += 1;
                    }
                    out[r] = acc;
                }
                start = end;
            }
            data.push(out);
        }
    }
    events.with_columns(specs, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::table::Schema;
    use chrono::NaiveDate;

    fn log(days: &[u64], n_days: u64) -> Table {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let vals: Vec<f64> = (1..=n_days).map(|d| if days.contains(&d) { 1.0 } else { 0.0 }).collect();
        Table::new(
            Schema::new(vec![ColumnSpec::event("plough")], None).unwrap(),
            vals,
            (1..=n_days).map(|d| d0 + chrono::Days::new(d)).collect(),
            vec!["f".into(); n_days as usize],
            vec!["red".into(); n_days as usize],
        )
        .unwrap()
    }

    #[test]
    fn both_events_inside_window() {
        let t = lag_counts(&log(&[1, 10], 10), &[45]).unwrap();
        assert_eq!(t.get(9, 1), 2.0);
    }

    #[test]
    fn half_open_window_excludes_old_event() {
        let t = lag_counts(&log(&[1, 10], 10), &[5]).unwrap();
        assert_eq!(t.get(9, 1), 1.0);
        assert_eq!(t.get(5, 1), 0.0);
    }

    #[test]
    fn non_positive_window_is_config_error() {
        assert!(matches!(lag_counts(&log(&[1], 3), &[0]), Err(Error::Config(_))));
    }

    #[test]
    fn lag_columns_tagged() {
        let t = lag_counts(&log(&[1], 3), &DEFAULT_LAG_WINDOWS).unwrap();
        assert_eq!(t.n_cols(), 5);
        assert!(t.schema.columns[1].is_lag());
        assert_eq!(t.schema.columns[4].name, "plough_lag730");
    }
}

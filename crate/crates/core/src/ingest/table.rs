use std::collections::HashSet;

use chrono::NaiveDate;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnKind {
    Continuous,
    OneHot,
    EventCount,
    /// Integer-coded categorical column awaiting one-hot encoding.
    Categorical,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Continuous => "continuous",
            ColumnKind::OneHot => "one_hot",
            ColumnKind::EventCount => "event_count",
            ColumnKind::Categorical => "categorical",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "continuous" => ColumnKind::Continuous,
            "one_hot" => ColumnKind::OneHot,
            "event_count" => ColumnKind::EventCount,
            "categorical" => ColumnKind::Categorical,
            _ => return Err(Error::Schema(format!("unknown column kind '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cadence {
    Daily,
    SubDaily,
    SparseEvent,
}

impl Cadence {
    pub fn as_str(self) -> &'static str {
        match self {
            Cadence::Daily => "daily",
            Cadence::SubDaily => "sub_daily",
            Cadence::SparseEvent => "sparse_event",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "daily" => Cadence::Daily,
            "sub_daily" => Cadence::SubDaily,
            "sparse_event" => Cadence::SparseEvent,
            _ => return Err(Error::Schema(format!("unknown cadence '{s}'"))),
        })
    }
}

/// Prefix of `source_group` marking lag-window columns derived from an event column.
pub const LAG_GROUP_PREFIX: &str = "lag:";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub source_group: String,
    pub cadence: Cadence,
    /// Category labels indexed by integer code (categorical columns only).
    pub categories: Vec<String>,
}

impl ColumnSpec {
    pub fn continuous(name: &str, cadence: Cadence) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Continuous,
            source_group: name.to_string(),
            cadence,
            categories: Vec::new(),
        }
    }

    pub fn event(name: &str) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::EventCount,
            source_group: name.to_string(),
            cadence: Cadence::SparseEvent,
            categories: Vec::new(),
        }
    }

    pub fn categorical(name: &str, categories: Vec<String>) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Categorical,
            source_group: name.to_string(),
            cadence: Cadence::SparseEvent,
            categories,
        }
    }

    pub fn is_lag(&self) -> bool {
        self.source_group.starts_with(LAG_GROUP_PREFIX)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    pub target: Option<String>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>, target: Option<&str>) -> Result<Self> {
        let s = Schema {
            columns,
            target: target.map(str::to_string),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column '{}'", c.name)));
            }
            if c.kind == ColumnKind::OneHot && c.source_group.is_empty() {
                return Err(Error::Schema(format!("one-hot column '{}' has no source group", c.name)));
            }
        }
        if let Some(t) = &self.target {
            if !seen.contains(t.as_str()) {
                return Err(Error::Schema(format!("target column '{t}' not in schema")));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index(name)
            .ok_or_else(|| Error::Schema(format!("unknown column '{name}'")))
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn target_index(&self) -> Result<usize> {
        let t = self
            .target
            .as_deref()
            .ok_or_else(|| Error::Schema("schema declares no target column".into()))?;
        self.require(t)
    }
}

/// Timestamped, field-tagged records in a dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: Schema,
    values: Vec<f64>,
    pub dates: Vec<NaiveDate>,
    pub field_id: Vec<String>,
    pub treatment: Vec<String>,
}

impl Table {
    pub fn new(
        schema: Schema,
        values: Vec<f64>,
        dates: Vec<NaiveDate>,
        field_id: Vec<String>,
        treatment: Vec<String>,
    ) -> Result<Self> {
        schema.validate()?;
        let n = dates.len();
        if field_id.len() != n || treatment.len() != n {
            return Err(Error::Schema(format!(
                "row metadata lengths differ: {} dates, {} field ids, {} treatments",
                n,
                field_id.len(),
                treatment.len()
            )));
        }
        if values.len() != n * schema.width() {
            return Err(Error::Schema(format!(
                "value buffer holds {} cells, expected {} x {}",
                values.len(),
                n,
                schema.width()
            )));
        }
        Ok(Table {
            schema,
            values,
            dates,
            field_id,
            treatment,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_cols(&self) -> usize {
        self.schema.width()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        let w = self.n_cols();
        self.values[row * w + col] = v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let w = self.n_cols();
        &self.values[row * w..(row + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.column(self.schema.require(name)?))
    }

    /// Model-ready checks: no NaN, dates strictly increasing within each field.
    pub fn validate(&self) -> Result<()> {
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos / self.n_cols(), pos % self.n_cols());
            return Err(Error::Data(format!(
                "non-finite value in column '{}' at row {r}",
                self.schema.columns[c].name
            )));
        }
        for r in 1..self.n_rows() {
            if self.field_id[r] == self.field_id[r - 1] && self.dates[r] <= self.dates[r - 1] {
                return Err(Error::Data(format!(
                    "dates not strictly increasing within field '{}' at row {r}",
                    self.field_id[r]
                )));
            }
        }
        Ok(())
    }

    /// Stable sort of rows by (field_id, date).
    pub fn sorted(&self) -> Table {
        let mut idx: Vec<usize> = (0..self.n_rows()).collect();
        idx.sort_by(|&a, &b| {
            self.field_id[a]
                .cmp(&self.field_id[b])
                .then(self.dates[a].cmp(&self.dates[b]))
        });
        self.select_rows(&idx)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Table {
        let w = self.n_cols();
        let mut values = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Table {
            schema: self.schema.clone(),
            values,
            dates: rows.iter().map(|&r| self.dates[r]).collect(),
            field_id: rows.iter().map(|&r| self.field_id[r].clone()).collect(),
            treatment: rows.iter().map(|&r| self.treatment[r].clone()).collect(),
        }
    }

    pub fn select_mask(&self, mask: &[bool]) -> Table {
        let rows: Vec<usize> = (0..self.n_rows()).filter(|&r| mask[r]).collect();
        self.select_rows(&rows)
    }

    /// Projects onto the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<Table> {
        let idx: Vec<usize> = names.iter().map(|n| self.schema.require(n)).collect::<Result<_>>()?;
        let columns = idx.iter().map(|&i| self.schema.columns[i].clone()).collect();
        let target = self
            .schema
            .target
            .clone()
            .filter(|t| names.iter().any(|n| n == t));
        let mut values = Vec::with_capacity(self.n_rows() * idx.len());
        for r in 0..self.n_rows() {
            for &c in &idx {
                values.push(self.get(r, c));
            }
        }
        Table::new(
            Schema {
                columns,
                target,
            },
            values,
            self.dates.clone(),
            self.field_id.clone(),
            self.treatment.clone(),
        )
    }

    /// Appends columns given column-major data.
    pub fn with_columns(&self, specs: Vec<ColumnSpec>, data: Vec<Vec<f64>>) -> Result<Table> {
        let n = self.n_rows();
        if data.iter().any(|c| c.len() != n) {
            return Err(Error::Schema("appended column length differs from row count".into()));
        }
        let mut schema = self.schema.clone();
        schema.columns.extend(specs);
        schema.validate()?;
        let w = schema.width();
        let mut values = Vec::with_capacity(n * w);
        for r in 0..n {
            values.extend_from_slice(self.row(r));
            values.extend(data.iter().map(|c| c[r]));
        }
        Table::new(schema, values, self.dates.clone(), self.field_id.clone(), self.treatment.clone())
    }

    /// Row-wise concatenation of tables sharing a schema.
    pub fn concat(tables: &[Table]) -> Result<Table> {
        let first = tables
            .first()
            .ok_or_else(|| Error::Data("cannot concatenate zero tables".into()))?;
        let mut out = first.clone();
        for t in &tables[1..] {
            if t.schema != first.schema {
                return Err(Error::Schema("concatenated tables differ in schema".into()));
            }
            out.values.extend_from_slice(&t.values);
            out.dates.extend_from_slice(&t.dates);
            out.field_id.extend(t.field_id.iter().cloned());
            out.treatment.extend(t.treatment.iter().cloned());
        }
        Ok(out)
    }

    /// Rows whose treatment is in `treatments`.
    pub fn treatment_mask(&self, treatments: &[String]) -> Vec<bool> {
        self.treatment.iter().map(|t| treatments.contains(t)).collect()
    }
}

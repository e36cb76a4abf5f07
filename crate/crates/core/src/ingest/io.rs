//! CSV tables with a key-value schema sidecar.
//!
//! Sidecar format, one entry per line (`#` starts a comment):
//!
//! ```text
//! target = totalC
//! column = pH; kind=continuous; cadence=daily; group=pH
//! column = op; kind=categorical; cadence=sparse_event; group=op; categories=plough|sow
//! ```
//!
//! Column names may contain `=` but not `;`.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use super::table::{Cadence, ColumnKind, ColumnSpec, Schema, Table};
use crate::error::{Error, Result};

const META_COLS: [&str; 3] = ["date", "field_id", "treatment"];

pub fn schema_to_text(schema: &Schema) -> String {
    let mut s = String::from("# soc-causal schema v1\n");
    if let Some(t) = &schema.target {
        writeln!(s, "target = {t}").unwrap();
    }
    for c in &schema.columns {
        write!(
            s,
            "column = {}; kind={}; cadence={}; group={}",
            c.name,
            c.kind.as_str(),
            c.cadence.as_str(),
            c.source_group
        )
        .unwrap();
        if !c.categories.is_empty() {
            write!(s, "; categories={}", c.categories.join("|")).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn parse_schema(text: &str) -> Result<Schema> {
    let mut columns = Vec::new();
    let mut target = None;
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(" = ")
            .ok_or_else(|| Error::Schema(format!("schema line {}: expected 'key = value'", ln + 1)))?;
        match key.trim() {
            "target" => target = Some(value.trim().to_string()),
            "column" => {
                let mut parts = value.split(';').map(str::trim);
                let name = parts.next().unwrap_or_default().to_string();
                if name.is_empty() {
                    return Err(Error::Schema(format!("schema line {}: empty column name", ln + 1)));
                }
                let mut kind = None;
                let mut cadence = Cadence::Daily;
                let mut group = name.clone();
                let mut categories = Vec::new();
                for p in parts {
                    let (k, v) = p
                        .split_once('=')
                        .ok_or_else(|| Error::Schema(format!("schema line {}: bad attribute '{p}'", ln + 1)))?;
                    match k.trim() {
                        "kind" => kind = Some(ColumnKind::parse(v.trim())?),
                        "cadence" => cadence = Cadence::parse(v.trim())?,
                        "group" => group = v.trim().to_string(),
                        "categories" => categories = v.split('|').map(|c| c.trim().to_string()).collect(),
                        other => {
                            return Err(Error::Schema(format!(
                                "schema line {}: unknown attribute '{other}'",
                                ln + 1
                            )))
                        }
                    }
                }
                columns.push(ColumnSpec {
                    name,
                    kind: kind.ok_or_else(|| Error::Schema(format!("schema line {}: missing kind", ln + 1)))?,
                    source_group: group,
                    cadence,
                    categories,
                });
            }
            other => return Err(Error::Schema(format!("schema line {}: unknown key '{other}'", ln + 1))),
        }
    }
    Schema::new(columns, target.as_deref())
}

pub fn write_csv<W: std::io::Write>(table: &Table, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = META_COLS.iter().map(|s| s.to_string()).collect();
    header.extend(table.schema.names());
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for r in 0..table.n_rows() {
        rec.clear();
        rec.push(table.dates[r].format("%Y-%m-%d").to_string());
        rec.push(table.field_id[r].clone());
        rec.push(table.treatment[r].clone());
        for &v in table.row(r) {
            rec.push(if v.is_nan() { String::new() } else { v.to_string() });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R, schema: Schema) -> Result<Table> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[..3] != META_COLS {
        return Err(Error::Schema("CSV must start with date,field_id,treatment".into()));
    }
    let mut col_of = Vec::with_capacity(schema.width());
    for c in &schema.columns {
        let pos = header[3..]
            .iter()
            .position(|h| *h == c.name)
            .ok_or_else(|| Error::Schema(format!("CSV lacks schema column '{}'", c.name)))?;
        col_of.push(pos + 3);
    }
    if header.len() - 3 != schema.width() {
        return Err(Error::Schema("CSV has columns not declared in the schema".into()));
    }
    let (mut values, mut dates, mut fields, mut treatments) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (ln, rec) in rd.records().enumerate() {
        let rec = rec?;
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|_| Error::Data(format!("row {}: bad date '{}'", ln + 1, &rec[0])))?;
        dates.push(date);
        fields.push(rec[1].to_string());
        treatments.push(rec[2].to_string());
        for &c in &col_of {
            let cell = rec[c].trim();
            values.push(if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse::<f64>()
                    .map_err(|_| Error::Data(format!("row {}: bad number '{cell}'", ln + 1)))?
            });
        }
    }
    Table::new(schema, values, dates, fields, treatments)
}

/// Writes `<stem>.csv` and `<stem>.schema` into `dir`.
pub fn save_table(table: &Table, dir: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let f = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
    write_csv(table, std::io::BufWriter::new(f))?;
    std::fs::write(dir.join(format!("{stem}.schema")), schema_to_text(&table.schema))?;
    Ok(())
}

/// Loads a CSV and its sidecar (same path with `.schema` extension).
pub fn load_table(csv_path: &Path) -> Result<Table> {
    let schema_path = csv_path.with_extension("schema");
    let schema = parse_schema(&std::fs::read_to_string(&schema_path).map_err(|e| {
        Error::Data(format!("cannot read schema '{}': {e}", schema_path.display()))
    })?)?;
    let f = std::fs::File::open(csv_path)
        .map_err(|e| Error::Data(format!("cannot open '{}': {e}", csv_path.display())))?;
    read_csv(std::io::BufReader::new(f), schema)
}

//! CSV ingest and export. The sidecar schema is a JSON file:
//!
//! ```json
//! {"attributes": [
//!     {"name": "qty",   "type": "int"},
//!     {"name": "price", "type": "decimal", "scale": 2},
//!     {"name": "city",  "type": "string"}
//! ]}
//! ```
//!
//! Export presents values in their original units: offsets re-applied,
//! decimals with the declared number of fractional digits, dictionary
//! codes decoded back to strings.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{ingest, AttrType, Attribute, RawValue, Table};

#[derive(Debug, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<Attribute>,
}

pub fn read_schema(path: &Path) -> Result<Schema> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Ingest a CSV file (with a header row) under the given schema. Columns
/// are matched to attributes by header name.
pub fn read_csv(csv_path: &Path, schema: &Schema) -> Result<Table> {
    let mut reader = csv::Reader::from_path(csv_path)?;
    let headers = reader.headers()?.clone();
    let mut positions = Vec::with_capacity(schema.attributes.len());
    for attr in &schema.attributes {
        let pos = headers
            .iter()
            .position(|h| h == attr.name)
            .ok_or_else(|| Error::UnknownAttribute(attr.name.clone()))?;
        positions.push(pos);
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut row = Vec::with_capacity(schema.attributes.len());
        for (attr, &pos) in schema.attributes.iter().zip(&positions) {
            let field = record.get(pos).unwrap_or("");
            let value = match attr.ty {
                AttrType::Int => RawValue::Int(field.trim().parse::<i128>().map_err(|_| {
                    Error::Format(format!(
                        "row {}, attribute {:?}: {:?} is not an integer",
                        rows.len(),
                        attr.name,
                        field
                    ))
                })?),
                AttrType::Decimal { .. } => RawValue::Decimal(field.to_string()),
                AttrType::String => RawValue::Str(field.to_string()),
            };
            row.push(value);
        }
        rows.push(row);
    }
    ingest(&schema.attributes, &rows)
}

/// Present one stored value in its original units.
pub fn present(table: &Table, attr: usize, row: usize) -> String {
    let meta = &table.attrs()[attr];
    let raw = table.value(attr, row) as i128 + meta.offset as i128;
    match meta.ty {
        AttrType::Int => raw.to_string(),
        AttrType::Decimal { scale } => {
            let sign = if raw < 0 { "-" } else { "" };
            let abs = raw.unsigned_abs();
            let pow = 10u128.pow(scale);
            if scale == 0 {
                format!("{sign}{abs}")
            } else {
                format!("{sign}{}.{:0width$}", abs / pow, abs % pow, width = scale as usize)
            }
        }
        AttrType::String => table
            .dictionary(attr)
            .and_then(|d| d.decode(table.value(attr, row) as u32))
            .unwrap_or("")
            .to_string(),
    }
}

pub fn write_csv(table: &Table, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let header: Vec<&str> = table.attrs().iter().map(|a| a.name.as_str()).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in 0..table.row_count() {
        let fields: Vec<String> = (0..table.attr_count())
            .map(|attr| present(table, attr, row))
            .collect();
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_reproduces_values() {
        let schema = Schema {
            attributes: vec![
                Attribute::int("t"),
                Attribute {
                    name: "price".into(),
                    ty: AttrType::Decimal { scale: 2 },
                    offset: 0,
                },
                Attribute {
                    name: "tag".into(),
                    ty: AttrType::String,
                    offset: 0,
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        std::fs::write(
            &input,
            "t,price,tag\n-3,12.34,b\n7,0.50,a\n0,100.00,b\n",
        )
        .unwrap();
        let table = read_csv(&input, &schema).unwrap();
        assert_eq!(table.row_count(), 3);
        let out = dir.path().join("out.csv");
        write_csv(&table, &out).unwrap();
        let again = read_csv(&out, &schema).unwrap();
        for attr in 0..3 {
            for row in 0..3 {
                assert_eq!(again.value(attr, row), table.value(attr, row));
                assert_eq!(again.attrs()[attr].offset, table.attrs()[attr].offset);
            }
        }
        // Spot-check presentation.
        assert_eq!(present(&table, 0, 0), "-3");
        assert_eq!(present(&table, 1, 0), "12.34");
        assert_eq!(present(&table, 2, 0), "b");
    }

    #[test]
    fn schema_json_parses() {
        let text = r#"{"attributes": [
            {"name": "a", "type": "int"},
            {"name": "b", "type": "decimal", "scale": 3},
            {"name": "c", "type": "string"}
        ]}"#;
        let schema: Schema = serde_json::from_str(text).unwrap();
        assert_eq!(schema.attributes.len(), 3);
        assert_eq!(schema.attributes[1].ty, AttrType::Decimal { scale: 3 });
    }
}

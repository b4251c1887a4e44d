//! Binary table file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"LGTB"
//! version u32 (currently 1)
//! rows    u64
//! attrs   u32
//! attrs * descriptor:
//!     name    u16 len + utf-8 bytes
//!     type    u8   0 = int, 1 = decimal, 2 = string
//!     scale   u32  (decimal only; 0 otherwise)
//!     offset  i64  (subtracted at ingest)
//!     flags   u8   bit 0 = dictionary present, bit 1 = cumulative present
//!     payload u64  absolute byte offset of this attribute's payload
//! attrs * payload:
//!     column: rows u64, block count u64, mins u64[], widths u8[],
//!             word offsets u64[block count + 1], packed word count u64,
//!             packed u64[]
//!     dictionary (if flagged): entry count u32, entries as u16 len + utf-8
//!     cumulative (if flagged): u64[rows]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::*;
use crate::store::{AttrType, Attribute, Column, Dictionary, Table};

const MAGIC: &[u8; 4] = b"LGTB";
const VERSION: u32 = 1;

fn write_column<W: Write>(w: &mut W, col: &Column) -> Result<()> {
    let (len, mins, widths, offsets, packed) = col.parts();
    w_u64(w, len as u64)?;
    w_u64(w, mins.len() as u64)?;
    for &m in mins {
        w_u64(w, m)?;
    }
    for &wd in widths {
        w_u8(w, wd)?;
    }
    for &o in offsets {
        w_u64(w, o)?;
    }
    w_u64(w, packed.len() as u64)?;
    for &p in packed {
        w_u64(w, p)?;
    }
    Ok(())
}

fn read_column<R: Read>(r: &mut R) -> Result<Column> {
    let len = r_usize(r)?;
    let blocks = r_usize(r)?;
    if blocks != len.div_ceil(crate::store::BLOCK_LEN) {
        return Err(Error::Format("block count does not match row count".into()));
    }
    let mut mins = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        mins.push(r_u64(r)?);
    }
    let mut widths = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        widths.push(r_u8(r)?);
    }
    let mut offsets = Vec::with_capacity(blocks + 1);
    for _ in 0..blocks + 1 {
        offsets.push(r_u64(r)?);
    }
    let packed_len = r_usize(r)?;
    let mut packed = Vec::with_capacity(packed_len);
    for _ in 0..packed_len {
        packed.push(r_u64(r)?);
    }
    Ok(Column::from_parts(len, mins, widths, offsets, packed))
}

pub fn write_table(table: &Table, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w_u32(&mut w, VERSION)?;
    w_u64(&mut w, table.row_count() as u64)?;
    w_u32(&mut w, table.attr_count() as u32)?;
    // Descriptors first with placeholder payload offsets; patched after
    // the payloads are laid down.
    let mut offset_positions = Vec::with_capacity(table.attr_count());
    for (idx, attr) in table.attrs().iter().enumerate() {
        w_str(&mut w, &attr.name)?;
        let (tag, scale) = match attr.ty {
            AttrType::Int => (0u8, 0u32),
            AttrType::Decimal { scale } => (1, scale),
            AttrType::String => (2, 0),
        };
        w_u8(&mut w, tag)?;
        w_u32(&mut w, scale)?;
        w_i64(&mut w, attr.offset)?;
        let mut flags = 0u8;
        if table.dictionary(idx).is_some() {
            flags |= 1;
        }
        if table.cumulative(idx).is_some() {
            flags |= 2;
        }
        w_u8(&mut w, flags)?;
        offset_positions.push(w.stream_position()?);
        w_u64(&mut w, 0)?;
    }
    let mut payload_offsets = Vec::with_capacity(table.attr_count());
    for idx in 0..table.attr_count() {
        payload_offsets.push(w.stream_position()?);
        write_column(&mut w, table.column(idx))?;
        if let Some(dict) = table.dictionary(idx) {
            w_u32(&mut w, dict.len() as u32)?;
            for v in dict.values() {
                w_str(&mut w, v)?;
            }
        }
        if let Some(cum) = table.cumulative(idx) {
            for &v in cum {
                w_u64(&mut w, v)?;
            }
        }
    }
    w.flush()?;
    let mut file = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    for (pos, payload) in offset_positions.iter().zip(&payload_offsets) {
        file.seek(SeekFrom::Start(*pos))?;
        file.write_all(&payload.to_le_bytes())?;
    }
    file.flush()?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a table file".into()));
    }
    let version = r_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported table version {version}")));
    }
    let rows = r_usize(&mut r)?;
    let attr_count = r_u32(&mut r)? as usize;
    let mut attrs = Vec::with_capacity(attr_count);
    let mut flags = Vec::with_capacity(attr_count);
    let mut payload_offsets = Vec::with_capacity(attr_count);
    for _ in 0..attr_count {
        let name = r_str(&mut r)?;
        let tag = r_u8(&mut r)?;
        let scale = r_u32(&mut r)?;
        let offset = r_i64(&mut r)?;
        let ty = match tag {
            0 => AttrType::Int,
            1 => AttrType::Decimal { scale },
            2 => AttrType::String,
            other => return Err(Error::Format(format!("unknown attribute type tag {other}"))),
        };
        attrs.push(Attribute { name, ty, offset });
        flags.push(r_u8(&mut r)?);
        payload_offsets.push(r_u64(&mut r)?);
    }
    let mut columns = Vec::with_capacity(attr_count);
    let mut dicts = Vec::with_capacity(attr_count);
    let mut cumulative = Vec::with_capacity(attr_count);
    for idx in 0..attr_count {
        r.seek(SeekFrom::Start(payload_offsets[idx]))?;
        let col = read_column(&mut r)?;
        if col.len() != rows {
            return Err(Error::Format(format!(
                "column {idx} has {} rows, expected {rows}",
                col.len()
            )));
        }
        columns.push(col);
        if flags[idx] & 1 != 0 {
            let n = r_u32(&mut r)? as usize;
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                values.push(r_str(&mut r)?);
            }
            dicts.push(Some(Dictionary::from_values(values)));
        } else {
            dicts.push(None);
        }
        if flags[idx] & 2 != 0 {
            let mut cum = Vec::with_capacity(rows);
            for _ in 0..rows {
                cum.push(r_u64(&mut r)?);
            }
            cumulative.push(Some(cum));
        } else {
            cumulative.push(None);
        }
    }
    Ok(Table::from_parts(attrs, columns, dicts, cumulative, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{ingest, RawValue};

    #[test]
    fn roundtrip_mixed_table() {
        let attrs = vec![
            Attribute::int("qty"),
            Attribute {
                name: "price".into(),
                ty: AttrType::Decimal { scale: 2 },
                offset: 0,
            },
            Attribute {
                name: "city".into(),
                ty: AttrType::String,
                offset: 0,
            },
        ];
        let rows: Vec<Vec<RawValue>> = (0..500)
            .map(|i| {
                vec![
                    RawValue::Int(i as i128 - 100),
                    RawValue::Decimal(format!("{}.{:02}", i, i % 100)),
                    RawValue::Str(format!("c{}", i % 7)),
                ]
            })
            .collect();
        let mut table = ingest(&attrs, &rows).unwrap();
        table.add_cumulative(0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tbl");
        write_table(&table, &path).unwrap();
        let back = read_table(&path).unwrap();
        assert_eq!(back.row_count(), table.row_count());
        assert_eq!(back.attrs(), table.attrs());
        for a in 0..3 {
            for i in 0..table.row_count() {
                assert_eq!(back.value(a, i), table.value(a, i));
            }
        }
        assert_eq!(back.cumulative(0).unwrap(), table.cumulative(0).unwrap());
        assert_eq!(
            back.dictionary(2).unwrap().values(),
            table.dictionary(2).unwrap().values()
        );
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tbl");
        std::fs::write(&path, b"NOPE0000").unwrap();
        assert!(matches!(read_table(&path), Err(Error::Format(_))));
    }

    #[test]
    fn identical_tables_serialize_identically() {
        let t1 = Table::from_columns(
            vec![Attribute::int("a")],
            vec![(0..1000u64).map(|i| i * 3).collect()],
        );
        let t2 = t1.clone();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.tbl");
        let p2 = dir.path().join("b.tbl");
        write_table(&t1, &p1).unwrap();
        write_table(&t2, &p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }
}

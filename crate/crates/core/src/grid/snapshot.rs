//! Binary snapshot of a built grid index: layout, bucketing models, cell
//! table, per-cell models, and the row permutation. The data itself is
//! not stored; loading takes the original table and replays the
//! permutation.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic    b"LGIX"
//! version  u32 (currently 1)
//! rows     u64, attrs u32
//! layout   d u32, ordering u32[d], counts u64[d-1], flattened u8
//! config   plm_delta f64, plm_min_cell u64, max_total_cells u64
//! buckets  per grid dim: tag u8 (0 = equal-width min/max u64,
//!          1 = CDF model payload)
//! cells    starts u64[cells + 1] prefixed by its length
//! models   count u64, then (cell u64, model payload) each
//! perm     physical position u32[rows]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Bucketing, CellTable, GridConfig, GridIndex, Layout};
use crate::io::*;
use crate::store::Table;
use crate::{Plm64, Rmi64};

const MAGIC: &[u8; 4] = b"LGIX";
const VERSION: u32 = 1;

pub fn save(index: &GridIndex, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w_u32(&mut w, VERSION)?;
    w_u64(&mut w, index.table().row_count() as u64)?;
    w_u32(&mut w, index.table().attr_count() as u32)?;
    let layout = index.layout();
    w_u32(&mut w, layout.ordering.len() as u32)?;
    for &a in &layout.ordering {
        w_u32(&mut w, a as u32)?;
    }
    for &c in &layout.column_counts {
        w_u64(&mut w, c)?;
    }
    w_u8(&mut w, layout.flattened as u8)?;
    let cfg = index.config();
    w_f64(&mut w, cfg.plm_delta)?;
    w_u64(&mut w, cfg.plm_min_cell as u64)?;
    w_u64(&mut w, cfg.max_total_cells)?;
    for b in index.bucketing() {
        match b {
            Bucketing::EqualWidth { min, max } => {
                w_u8(&mut w, 0)?;
                w_u64(&mut w, *min)?;
                w_u64(&mut w, *max)?;
            }
            Bucketing::Cdf(rmi) => {
                w_u8(&mut w, 1)?;
                rmi.write_to(&mut w)?;
            }
        }
    }
    w_u64s(&mut w, index.cell_table().starts())?;
    w_u64(&mut w, index.plms().len() as u64)?;
    for (cell, plm) in index.plms() {
        w_u64(&mut w, *cell)?;
        plm.write_to(&mut w)?;
    }
    for &p in index.permutation() {
        w_u32(&mut w, p)?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuild an index from a snapshot plus the original (un-reordered)
/// table it was built from.
pub fn load(path: &Path, table: &Table) -> Result<GridIndex> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an index snapshot".into()));
    }
    let version = r_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let rows = r_usize(&mut r)?;
    let attrs = r_u32(&mut r)? as usize;
    if rows != table.row_count() || attrs != table.attr_count() {
        return Err(Error::Format(format!(
            "snapshot is for a {rows}x{attrs} table, got {}x{}",
            table.row_count(),
            table.attr_count()
        )));
    }
    let d = r_u32(&mut r)? as usize;
    let mut ordering = Vec::with_capacity(d);
    for _ in 0..d {
        ordering.push(r_u32(&mut r)? as usize);
    }
    let mut counts = Vec::with_capacity(d.saturating_sub(1));
    for _ in 0..d.saturating_sub(1) {
        counts.push(r_u64(&mut r)?);
    }
    let flattened = r_u8(&mut r)? != 0;
    let layout = Layout::new(ordering, counts, flattened);
    let config = GridConfig {
        plm_delta: r_f64(&mut r)?,
        plm_min_cell: r_usize(&mut r)?,
        max_total_cells: r_u64(&mut r)?,
    };
    layout.validate(attrs, config.max_total_cells)?;
    let mut bucketing = Vec::with_capacity(d - 1);
    for _ in 0..d - 1 {
        match r_u8(&mut r)? {
            0 => bucketing.push(Bucketing::EqualWidth {
                min: r_u64(&mut r)?,
                max: r_u64(&mut r)?,
            }),
            1 => bucketing.push(Bucketing::Cdf(Rmi64::read_from(&mut r)?)),
            other => return Err(Error::Format(format!("unknown bucketing tag {other}"))),
        }
    }
    let starts = r_u64s(&mut r, layout.total_cells() + 1)?;
    if starts.len() as u64 != layout.total_cells() + 1 {
        return Err(Error::Format("cell table length mismatch".into()));
    }
    let plm_count = r_usize(&mut r)?;
    let mut plms = Vec::with_capacity(plm_count);
    for _ in 0..plm_count {
        let cell = r_u64(&mut r)?;
        plms.push((cell, Plm64::read_from(&mut r)?));
    }
    let mut permutation = Vec::with_capacity(rows);
    for _ in 0..rows {
        permutation.push(r_u32(&mut r)?);
    }
    let mut gather = vec![0u32; rows];
    for (orig, &phys) in permutation.iter().enumerate() {
        if phys as usize >= rows {
            return Err(Error::Format("permutation entry out of range".into()));
        }
        gather[phys as usize] = orig as u32;
    }
    let reordered = table.reorder(&gather);
    Ok(GridIndex::from_parts(
        layout,
        bucketing,
        CellTable::from_starts(starts),
        plms,
        reordered,
        permutation,
        config,
    ))
}

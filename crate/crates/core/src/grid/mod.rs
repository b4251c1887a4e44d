//! The learned grid index.
//!
//! A layout names an ordering of the attributes — the first `d - 1` form
//! a grid, the last sorts points inside each cell — and a column count
//! per grid dimension. Building physically reorders the table into cell
//! order (cells in row-major order of the grid coordinates, each cell
//! sorted by the sort dimension) and records where each cell starts.
//! Queries project their rectangle onto the grid, refine each cell's
//! physical range along the sort dimension with a per-cell model, and
//! scan what remains.

pub mod snapshot;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cost::QueryStats;
use crate::error::{Error, Result};
use crate::models::{CdfSample, Plm};
use crate::store::{scan, AggregateResult, PhysicalRange, Query, ScanStats, Table};
use crate::{Plm64, Rmi64};

/// Grid geometry: attribute ordering (last entry is the sort dimension)
/// plus per-grid-dimension column counts, and whether grid dimensions
/// are bucketed by learned CDF (flattened) or by equal-width ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub ordering: Vec<usize>,
    pub column_counts: Vec<u64>,
    pub flattened: bool,
}

impl Layout {
    pub fn new(ordering: Vec<usize>, column_counts: Vec<u64>, flattened: bool) -> Self {
        Layout {
            ordering,
            column_counts,
            flattened,
        }
    }

    /// Single-cell layout: sort by one dimension, no grid resolution.
    pub fn sort_only(ordering: Vec<usize>) -> Self {
        let counts = vec![1; ordering.len().saturating_sub(1)];
        Layout {
            ordering,
            column_counts: counts,
            flattened: false,
        }
    }

    pub fn dims(&self) -> usize {
        self.ordering.len()
    }

    pub fn sort_dim(&self) -> usize {
        *self.ordering.last().expect("layout has at least one dim")
    }

    /// Grid dimensions in layout order (all but the sort dimension).
    pub fn grid_dims(&self) -> &[usize] {
        &self.ordering[..self.ordering.len() - 1]
    }

    pub fn total_cells(&self) -> u64 {
        self.column_counts.iter().product()
    }

    /// Row-major strides over the grid coordinates.
    pub fn strides(&self) -> Vec<u64> {
        let g = self.column_counts.len();
        let mut strides = vec![1u64; g];
        for i in (0..g.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.column_counts[i + 1];
        }
        strides
    }

    pub fn validate(&self, attr_count: usize, max_cells: u64) -> Result<()> {
        let d = self.ordering.len();
        if d == 0 || d != attr_count {
            return Err(Error::InvalidLayout(format!(
                "ordering covers {d} attributes, table has {attr_count}"
            )));
        }
        let mut seen = vec![false; attr_count];
        for &a in &self.ordering {
            if a >= attr_count || seen[a] {
                return Err(Error::InvalidLayout("ordering is not a permutation".into()));
            }
            seen[a] = true;
        }
        if self.column_counts.len() != d - 1 {
            return Err(Error::InvalidLayout(format!(
                "{} column counts for {} grid dimensions",
                self.column_counts.len(),
                d - 1
            )));
        }
        if self.column_counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidLayout("column counts must be positive".into()));
        }
        let mut total: u64 = 1;
        for &c in &self.column_counts {
            total = total
                .checked_mul(c)
                .ok_or_else(|| Error::InvalidLayout("cell count overflows u64".into()))?;
        }
        if total > max_cells {
            return Err(Error::InvalidLayout(format!(
                "{total} cells exceeds the {max_cells} cell cap"
            )));
        }
        Ok(())
    }
}

/// Grid coordinates of one cell plus its row-major linearization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellId {
    pub coords: Vec<u64>,
    pub linear: u64,
}

/// First physical index of every cell, with a final sentinel equal to
/// the row count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellTable {
    starts: Vec<u64>,
}

impl CellTable {
    pub fn from_starts(starts: Vec<u64>) -> Self {
        debug_assert!(starts.windows(2).all(|w| w[0] <= w[1]));
        CellTable { starts }
    }

    pub fn starts(&self) -> &[u64] {
        &self.starts
    }

    pub fn cells(&self) -> u64 {
        (self.starts.len() - 1) as u64
    }

    #[inline]
    pub fn range(&self, linear: u64) -> (usize, usize) {
        (
            self.starts[linear as usize] as usize,
            self.starts[linear as usize + 1] as usize,
        )
    }

    pub fn population(&self, linear: u64) -> u64 {
        self.starts[linear as usize + 1] - self.starts[linear as usize]
    }
}

/// How one grid dimension maps values to columns.
#[derive(Debug, Clone, PartialEq)]
pub enum Bucketing {
    EqualWidth { min: u64, max: u64 },
    Cdf(Rmi64),
}

impl Bucketing {
    #[inline]
    pub fn bucket(&self, v: u64, columns: u64) -> u64 {
        match self {
            Bucketing::EqualWidth { min, max } => {
                if v <= *min {
                    return 0;
                }
                if v >= *max {
                    return columns - 1;
                }
                let span = (*max - *min) as u128 + 1;
                (((v - *min) as u128 * columns as u128 / span) as u64).min(columns - 1)
            }
            Bucketing::Cdf(rmi) => rmi.bucket(v, columns),
        }
    }

    pub fn domain(&self) -> (u64, u64) {
        match self {
            Bucketing::EqualWidth { min, max } => (*min, *max),
            Bucketing::Cdf(rmi) => rmi.domain(),
        }
    }

    pub fn size_bytes(&self) -> usize {
        match self {
            Bucketing::EqualWidth { .. } => 16,
            Bucketing::Cdf(rmi) => rmi.size_bytes(),
        }
    }
}

/// Build-time options.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    /// Average-error budget for per-cell models, in index units.
    pub plm_delta: f64,
    /// Cells below this population skip the model and binary search.
    pub plm_min_cell: usize,
    /// Guard against absurd grids.
    pub max_total_cells: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            plm_delta: 50.0,
            plm_min_cell: 64,
            max_total_cells: 1 << 22,
        }
    }
}

/// One projected cell with a non-empty physical range.
#[derive(Debug, Clone, Copy)]
struct ProjectedCell {
    linear: u64,
    start: usize,
    end_excl: usize,
    /// True when the cell lies strictly inside the query interval along
    /// every filtered grid dimension.
    grid_exact: bool,
    /// Bitmask over grid-dimension positions that touch a boundary
    /// column of the query and therefore need per-row checks.
    boundary_mask: u32,
}

/// The built index: bucketing models, cell table, per-cell sort-dimension
/// models, and the physically reordered table.
#[derive(Debug, Clone)]
pub struct GridIndex {
    layout: Layout,
    bucketing: Vec<Bucketing>,
    cell_table: CellTable,
    plms: Vec<(u64, Plm64)>,
    table: Table,
    /// Physical position of each original row.
    permutation: Vec<u32>,
    config: GridConfig,
    build_seconds: f64,
}

impl GridIndex {
    /// Reorder `table` into cell order under `layout` and build the cell
    /// table and per-cell models.
    pub fn build(table: &Table, layout: Layout, config: GridConfig) -> Result<Self> {
        let t0 = Instant::now();
        layout.validate(table.attr_count(), config.max_total_cells)?;
        let n = table.row_count();
        let grid_dims = layout.grid_dims().to_vec();

        let mut bucketing = Vec::with_capacity(grid_dims.len());
        for &attr in &grid_dims {
            let col = table.column(attr);
            if layout.flattened {
                let mut values: Vec<u64> = col.iter().collect();
                values.sort_unstable();
                if values.is_empty() {
                    values.push(0);
                }
                bucketing.push(Bucketing::Cdf(Rmi64::fit_sorted(&values)));
            } else {
                let mut min = u64::MAX;
                let mut max = 0u64;
                for v in col.iter() {
                    min = min.min(v);
                    max = max.max(v);
                }
                if n == 0 {
                    min = 0;
                    max = 0;
                }
                bucketing.push(Bucketing::EqualWidth { min, max });
            }
        }

        let strides = layout.strides();
        let counts = &layout.column_counts;
        let sort_attr = layout.sort_dim();
        let sort_col = table.column(sort_attr);
        // (cell, sort value, original row id); including the id makes
        // the unstable sort a deterministic stable order.
        let mut keys: Vec<(u64, u64, u32)> = Vec::with_capacity(n);
        for row in 0..n {
            let mut linear = 0u64;
            for (g, &attr) in grid_dims.iter().enumerate() {
                let comp = bucketing[g].bucket(table.value(attr, row), counts[g]);
                linear += comp * strides[g];
            }
            keys.push((linear, sort_col.get(row), row as u32));
        }
        keys.sort_unstable();

        let gather: Vec<u32> = keys.iter().map(|k| k.2).collect();
        let reordered = table.reorder(&gather);
        let mut permutation = vec![0u32; n];
        for (phys, &(_, _, orig)) in keys.iter().enumerate() {
            permutation[orig as usize] = phys as u32;
        }

        let total_cells = layout.total_cells();
        let mut starts = vec![0u64; total_cells as usize + 1];
        for &(cell, _, _) in &keys {
            starts[cell as usize + 1] += 1;
        }
        for i in 1..starts.len() {
            starts[i] += starts[i - 1];
        }
        let cell_table = CellTable { starts };
        drop(keys);

        let sorted_col = reordered.column(sort_attr);
        let mut plms = Vec::new();
        for cell in 0..total_cells {
            let (s, e) = cell_table.range(cell);
            if e - s >= config.plm_min_cell {
                let slice: Vec<u64> = (s..e).map(|i| sorted_col.get(i)).collect();
                let plm = Plm::fit(&CdfSample::new(&slice), config.plm_delta);
                plms.push((cell, plm));
            }
        }

        Ok(GridIndex {
            layout,
            bucketing,
            cell_table,
            plms,
            table: reordered,
            permutation,
            config,
            build_seconds: t0.elapsed().as_secs_f64(),
        })
    }

    pub(crate) fn from_parts(
        layout: Layout,
        bucketing: Vec<Bucketing>,
        cell_table: CellTable,
        plms: Vec<(u64, Plm64)>,
        table: Table,
        permutation: Vec<u32>,
        config: GridConfig,
    ) -> Self {
        GridIndex {
            layout,
            bucketing,
            cell_table,
            plms,
            table,
            permutation,
            config,
            build_seconds: 0.0,
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    pub fn cell_table(&self) -> &CellTable {
        &self.cell_table
    }

    pub fn bucketing(&self) -> &[Bucketing] {
        &self.bucketing
    }

    pub fn permutation(&self) -> &[u32] {
        &self.permutation
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn build_seconds(&self) -> f64 {
        self.build_seconds
    }

    pub fn plms(&self) -> &[(u64, Plm64)] {
        &self.plms
    }

    pub fn plm_for(&self, cell: u64) -> Option<&Plm64> {
        self.plms
            .binary_search_by_key(&cell, |(c, _)| *c)
            .ok()
            .map(|i| &self.plms[i].1)
    }

    /// Metadata bytes: cell table, bucketing models, per-cell models.
    /// The reordered data and the row permutation are not counted.
    pub fn index_size_bytes(&self) -> u64 {
        let cells = self.cell_table.starts.len() * 8;
        let buckets: usize = self.bucketing.iter().map(|b| b.size_bytes()).sum();
        let plms: usize = self.plms.iter().map(|(_, p)| 8 + p.size_bytes()).sum();
        (cells + buckets + plms) as u64
    }

    /// Cell a point falls in under this index's layout and models.
    pub fn cell_of(&self, point: &[u64]) -> CellId {
        debug_assert_eq!(point.len(), self.layout.dims());
        let strides = self.layout.strides();
        let mut coords = Vec::with_capacity(self.layout.grid_dims().len());
        let mut linear = 0u64;
        for (g, &attr) in self.layout.grid_dims().iter().enumerate() {
            let comp = self.bucketing[g].bucket(point[attr], self.layout.column_counts[g]);
            coords.push(comp);
            linear += comp * strides[g];
        }
        CellId { coords, linear }
    }

    /// Cell holding a physical row of the reordered table.
    pub fn cell_of_physical_row(&self, row: usize) -> u64 {
        let strides = self.layout.strides();
        let mut linear = 0u64;
        for (g, &attr) in self.layout.grid_dims().iter().enumerate() {
            let comp = self.bucketing[g].bucket(
                self.table.value(attr, row),
                self.layout.column_counts[g],
            );
            linear += comp * strides[g];
        }
        linear
    }

    /// Per-grid-dimension column spans of the query rectangle, or `None`
    /// when some filtered dimension misses the domain entirely.
    fn column_spans(&self, q: &Query) -> Option<Vec<(u64, u64, bool)>> {
        let mut spans = Vec::with_capacity(self.layout.grid_dims().len());
        for (g, &attr) in self.layout.grid_dims().iter().enumerate() {
            let c = self.layout.column_counts[g];
            match q.filters[attr] {
                None => spans.push((0, c - 1, false)),
                Some((lo, hi)) => {
                    let (dom_min, dom_max) = self.bucketing[g].domain();
                    if hi < dom_min || lo > dom_max {
                        return None;
                    }
                    let col_lo = self.bucketing[g].bucket(lo.max(dom_min), c);
                    let col_hi = self.bucketing[g].bucket(hi.min(dom_max), c);
                    spans.push((col_lo, col_hi, true));
                }
            }
        }
        Some(spans)
    }

    /// Enumerate intersecting cells. Returns the rectangle cell count
    /// (empty cells included) and the non-empty cells; every enumerated
    /// cell's population is appended to `sizes`.
    fn project_cells(&self, q: &Query, sizes: &mut Vec<u64>) -> (u64, Vec<ProjectedCell>) {
        let Some(spans) = self.column_spans(q) else {
            return (0, Vec::new());
        };
        let strides = self.layout.strides();
        let g = spans.len();
        let mut n_c = 1u64;
        for &(lo, hi, _) in &spans {
            n_c *= hi - lo + 1;
        }
        let mut cells = Vec::new();
        let mut coords: Vec<u64> = spans.iter().map(|s| s.0).collect();
        loop {
            let mut linear = 0u64;
            let mut boundary_mask = 0u32;
            for i in 0..g {
                linear += coords[i] * strides[i];
                let (lo, hi, filtered) = spans[i];
                if filtered && (coords[i] == lo || coords[i] == hi) {
                    boundary_mask |= 1 << i;
                }
            }
            let (s, e) = self.cell_table.range(linear);
            sizes.push((e - s) as u64);
            if e > s {
                cells.push(ProjectedCell {
                    linear,
                    start: s,
                    end_excl: e,
                    grid_exact: boundary_mask == 0,
                    boundary_mask,
                });
            }
            // Advance the odometer; done once every coordinate is maxed.
            let mut i = g;
            let advanced = loop {
                if i == 0 {
                    break false;
                }
                i -= 1;
                if coords[i] < spans[i].1 {
                    coords[i] += 1;
                    for j in i + 1..g {
                        coords[j] = spans[j].0;
                    }
                    break true;
                }
            };
            if !advanced {
                return (n_c, cells);
            }
        }
    }

    /// Cells intersecting the query rectangle, with their physical
    /// ranges. A range is exact when the cell is interior to the query
    /// along every filtered grid dimension and no other attribute
    /// filters (the sort dimension counts as exact once refined, so it
    /// is treated separately by `execute`).
    pub fn project(&self, q: &Query) -> Vec<(CellId, PhysicalRange)> {
        let mut sizes = Vec::new();
        let (_, cells) = self.project_cells(q, &mut sizes);
        let residual = self.residual_attrs(q);
        let sort_filtered = q.filters_attr(self.layout.sort_dim());
        cells
            .iter()
            .map(|pc| {
                let exact = pc.grid_exact && residual.is_empty() && !sort_filtered;
                (
                    CellId {
                        coords: self.delinearize(pc.linear),
                        linear: pc.linear,
                    },
                    PhysicalRange::new(pc.start, pc.end_excl - 1, exact),
                )
            })
            .collect()
    }

    fn delinearize(&self, linear: u64) -> Vec<u64> {
        let strides = self.layout.strides();
        let mut rest = linear;
        strides
            .iter()
            .map(|&s| {
                let c = rest / s;
                rest %= s;
                c
            })
            .collect()
    }

    /// Filtered attributes that are neither grid dimensions nor the sort
    /// dimension; they are checked per row during the scan.
    fn residual_attrs(&self, q: &Query) -> Vec<usize> {
        let sort = self.layout.sort_dim();
        q.filters
            .iter()
            .enumerate()
            .filter_map(|(attr, f)| {
                if f.is_none() || attr == sort || self.layout.grid_dims().contains(&attr) {
                    None
                } else {
                    Some(attr)
                }
            })
            .collect()
    }

    /// Shrink a cell's physical range to the rows whose sort-dimension
    /// value lies in `[a, b]`. Returns `None` for an empty result.
    pub fn refine(&self, cell_linear: u64, a: u64, b: u64) -> Option<PhysicalRange> {
        let (s, e) = self.cell_table.range(cell_linear);
        if s == e {
            return None;
        }
        let (lo, hi_excl) = self.refine_slice(cell_linear, s, e, a, b);
        if lo >= hi_excl {
            None
        } else {
            Some(PhysicalRange::new(lo, hi_excl - 1, true))
        }
    }

    fn refine_slice(&self, cell: u64, s: usize, e: usize, a: u64, b: u64) -> (usize, usize) {
        let col = self.table.column(self.layout.sort_dim());
        let len = e - s;
        let get = |i: usize| col.get(s + i);
        let (lo, hi) = match self.plm_for(cell) {
            Some(plm) => {
                let lo = plm.lookup(a, len, get);
                let hi = if b == u64::MAX {
                    len
                } else {
                    plm.lookup(b + 1, len, get)
                };
                (lo, hi)
            }
            None => {
                let lo = lower_bound(len, a, &get);
                let hi = if b == u64::MAX {
                    len
                } else {
                    lower_bound(len, b + 1, &get)
                };
                (lo, hi)
            }
        };
        (s + lo, s + hi)
    }

    /// Run a query: project, refine, scan. Returns the aggregate and the
    /// per-phase statistics the cost model trains on.
    pub fn execute(&self, q: &Query) -> Result<(AggregateResult, QueryStats)> {
        if q.filters.len() != self.table.attr_count() {
            return Err(Error::InvalidConfig(format!(
                "query has {} filter slots, table has {} attributes",
                q.filters.len(),
                self.table.attr_count()
            )));
        }
        let sort_attr = self.layout.sort_dim();
        let sort_filter = q.filters[sort_attr];
        let residual = self.residual_attrs(q);
        let mut sizes: Vec<u64> = Vec::new();

        let t0 = Instant::now();
        let (n_c, mut cells) = self.project_cells(q, &mut sizes);
        let t1 = Instant::now();

        // Refinement: with a sort-dimension filter, narrow every cell's
        // range; the sort dimension is then exact by construction.
        if let Some((a, b)) = sort_filter {
            let mut kept = Vec::with_capacity(cells.len());
            for pc in &cells {
                let (lo, hi_excl) = self.refine_slice(pc.linear, pc.start, pc.end_excl, a, b);
                if lo < hi_excl {
                    kept.push(ProjectedCell {
                        start: lo,
                        end_excl: hi_excl,
                        ..*pc
                    });
                }
            }
            cells = kept;
        }
        // Group ranges by which attributes still need per-row checks:
        // residual filters always, plus grid filters whose cell touches
        // a boundary column.
        let mut groups: BTreeMap<u32, Vec<PhysicalRange>> = BTreeMap::new();
        for pc in &cells {
            let exact = pc.grid_exact && residual.is_empty();
            groups
                .entry(pc.boundary_mask)
                .or_default()
                .push(PhysicalRange::new(pc.start, pc.end_excl - 1, exact));
        }
        let t2 = Instant::now();

        let mut result = AggregateResult::default();
        let mut scan_stats = ScanStats::default();
        let grid_dims = self.layout.grid_dims();
        for (mask, ranges) in &groups {
            let mut check_attrs = residual.clone();
            for (g, &attr) in grid_dims.iter().enumerate() {
                if mask & (1 << g) != 0 {
                    check_attrs.push(attr);
                }
            }
            let reduced = q.restricted_to(&check_attrs);
            let (r, s) = scan(&self.table, ranges, &reduced)?;
            result.rows += r.rows;
            result.value = result.value.wrapping_add(r.value);
            scan_stats.merge(&s);
        }
        let t3 = Instant::now();

        let stats = QueryStats::from_phases(
            n_c,
            &scan_stats,
            result.rows,
            self.cell_table.cells(),
            &mut sizes,
            q.filtered_dims() as u32,
            sort_filter.is_some(),
            [t0, t1, t2, t3],
        );
        Ok((result, stats))
    }
}

fn lower_bound<G: Fn(usize) -> u64>(len: usize, v: u64, get: &G) -> usize {
    let mut lo = 0usize;
    let mut hi = len;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if get(mid) < v {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

#[cfg(test)]
mod tests;

//! In-memory column store: block-delta compressed columns, typed ingest,
//! filtered range scans, and optional cumulative-aggregate columns.

mod column;
pub mod csvio;
pub mod format;

pub use column::{Column, BLOCK_LEN};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declared type of an attribute before integer conversion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum AttrType {
    Int,
    Decimal { scale: u32 },
    String,
}

/// Attribute metadata. `offset` is what ingest subtracted to make the
/// stored values unsigned; presentation adds it back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(flatten)]
    pub ty: AttrType,
    #[serde(default)]
    pub offset: i64,
}

impl Attribute {
    pub fn int(name: impl Into<String>) -> Self {
        Attribute {
            name: name.into(),
            ty: AttrType::Int,
            offset: 0,
        }
    }
}

/// Value dictionary for a string attribute; the code of a value is its
/// position, assigned in first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    values: Vec<String>,
    by_value: HashMap<String, u32>,
}

impl Dictionary {
    pub fn intern(&mut self, value: &str) -> u32 {
        if let Some(&code) = self.by_value.get(value) {
            return code;
        }
        let code = self.values.len() as u32;
        self.values.push(value.to_string());
        self.by_value.insert(value.to_string(), code);
        code
    }

    pub fn decode(&self, code: u32) -> Option<&str> {
        self.values.get(code as usize).map(|s| s.as_str())
    }

    pub fn code(&self, value: &str) -> Option<u32> {
        self.by_value.get(value).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn from_values(values: Vec<String>) -> Self {
        let by_value = values
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i as u32))
            .collect();
        Dictionary { values, by_value }
    }
}

/// Immutable columnar table. All columns share `row_count`.
#[derive(Debug, Clone)]
pub struct Table {
    attrs: Vec<Attribute>,
    columns: Vec<Column>,
    dicts: Vec<Option<Dictionary>>,
    cumulative: Vec<Option<Vec<u64>>>,
    row_count: usize,
}

impl Table {
    /// Build a table from already-integer columns (synthetic data path).
    pub fn from_columns(attrs: Vec<Attribute>, values: Vec<Vec<u64>>) -> Self {
        assert_eq!(attrs.len(), values.len());
        let row_count = values.first().map_or(0, |c| c.len());
        assert!(values.iter().all(|c| c.len() == row_count));
        let columns = values.iter().map(|v| Column::encode(v)).collect();
        let n = attrs.len();
        Table {
            attrs,
            columns,
            dicts: vec![None; n],
            cumulative: vec![None; n],
            row_count,
        }
    }

    pub(crate) fn from_parts(
        attrs: Vec<Attribute>,
        columns: Vec<Column>,
        dicts: Vec<Option<Dictionary>>,
        cumulative: Vec<Option<Vec<u64>>>,
        row_count: usize,
    ) -> Self {
        Table {
            attrs,
            columns,
            dicts,
            cumulative,
            row_count,
        }
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn attr_count(&self) -> usize {
        self.attrs.len()
    }

    pub fn attrs(&self) -> &[Attribute] {
        &self.attrs
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a.name == name)
    }

    pub fn column(&self, attr: usize) -> &Column {
        &self.columns[attr]
    }

    pub fn dictionary(&self, attr: usize) -> Option<&Dictionary> {
        self.dicts[attr].as_ref()
    }

    pub fn cumulative(&self, attr: usize) -> Option<&[u64]> {
        self.cumulative[attr].as_deref()
    }

    pub fn value(&self, attr: usize, row: usize) -> u64 {
        self.columns[attr].get(row)
    }

    /// Add a running-sum column for `attr`: entry `i` is the wrapping sum
    /// of the first `i + 1` values.
    pub fn add_cumulative(&mut self, attr: usize) {
        let col = &self.columns[attr];
        let mut run = 0u64;
        let mut cum = Vec::with_capacity(self.row_count);
        for v in col.iter() {
            run = run.wrapping_add(v);
            cum.push(run);
        }
        self.cumulative[attr] = Some(cum);
    }

    pub fn has_cumulative(&self, attr: usize) -> bool {
        self.cumulative[attr].is_some()
    }

    /// New table with rows permuted so row `i` of the result is row
    /// `perm[i]` of `self`. Cumulative columns are rebuilt.
    pub fn reorder(&self, perm: &[u32]) -> Table {
        assert_eq!(perm.len(), self.row_count);
        let mut columns = Vec::with_capacity(self.columns.len());
        let mut scratch = vec![0u64; self.row_count];
        for col in &self.columns {
            for (out, &src) in scratch.iter_mut().zip(perm) {
                *out = col.get(src as usize);
            }
            columns.push(Column::encode(&scratch));
        }
        let mut out = Table {
            attrs: self.attrs.clone(),
            columns,
            dicts: self.dicts.clone(),
            cumulative: vec![None; self.attrs.len()],
            row_count: self.row_count,
        };
        for attr in 0..self.attrs.len() {
            if self.cumulative[attr].is_some() {
                out.add_cumulative(attr);
            }
        }
        out
    }

    /// Compressed payload bytes across all columns (cumulative columns
    /// and dictionaries excluded).
    pub fn encoded_bytes(&self) -> usize {
        self.columns.iter().map(|c| c.encoded_bytes()).sum()
    }
}

/// Aggregation requested by a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateKind {
    Count,
    Sum,
}

/// Aggregation outcome. `rows` is the number of matching rows; `value`
/// is the count again or the wrapping sum, depending on the kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AggregateResult {
    pub rows: u64,
    pub value: u64,
}

/// Conjunction of per-attribute closed ranges plus an aggregation.
/// A missing filter means the attribute is unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub filters: Vec<Option<(u64, u64)>>,
    pub agg: AggregateKind,
    pub agg_attr: Option<usize>,
    pub type_id: Option<u32>,
}

impl Query {
    pub fn count(dims: usize) -> Self {
        Query {
            filters: vec![None; dims],
            agg: AggregateKind::Count,
            agg_attr: None,
            type_id: None,
        }
    }

    pub fn sum(dims: usize, agg_attr: usize) -> Self {
        Query {
            filters: vec![None; dims],
            agg: AggregateKind::Sum,
            agg_attr: Some(agg_attr),
            type_id: None,
        }
    }

    pub fn with_range(mut self, attr: usize, lo: u64, hi: u64) -> Self {
        debug_assert!(lo <= hi);
        self.filters[attr] = Some((lo, hi));
        self
    }

    pub fn filtered_dims(&self) -> usize {
        self.filters.iter().filter(|f| f.is_some()).count()
    }

    pub fn filters_attr(&self, attr: usize) -> bool {
        self.filters.get(attr).is_some_and(|f| f.is_some())
    }

    /// Keep only the filters named in `attrs`; aggregation unchanged.
    pub fn restricted_to(&self, attrs: &[usize]) -> Query {
        let mut q = self.clone();
        for (i, f) in q.filters.iter_mut().enumerate() {
            if !attrs.contains(&i) {
                *f = None;
            }
        }
        q
    }

    #[inline]
    pub fn matches_row(&self, table: &Table, row: usize) -> bool {
        for (attr, f) in self.filters.iter().enumerate() {
            if let Some((lo, hi)) = f {
                let v = table.value(attr, row);
                if v < *lo || v > *hi {
                    return false;
                }
            }
        }
        true
    }

    fn validate(&self, table: &Table) -> Result<usize> {
        if self.filters.len() != table.attr_count() {
            return Err(Error::InvalidConfig(format!(
                "query has {} filter slots, table has {} attributes",
                self.filters.len(),
                table.attr_count()
            )));
        }
        match self.agg {
            AggregateKind::Count => Ok(usize::MAX),
            AggregateKind::Sum => {
                let attr = self.agg_attr.ok_or(Error::MissingAggregateAttribute)?;
                if attr >= table.attr_count() {
                    return Err(Error::UnknownAttribute(format!("#{attr}")));
                }
                Ok(attr)
            }
        }
    }
}

/// Contiguous physical index range, endpoints inclusive. `exact` asserts
/// that every row inside satisfies the query filter, letting the scan
/// skip per-row checks and use cumulative-aggregate shortcuts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhysicalRange {
    pub start: usize,
    pub end: usize,
    pub exact: bool,
}

impl PhysicalRange {
    pub fn new(start: usize, end: usize, exact: bool) -> Self {
        debug_assert!(start <= end);
        PhysicalRange { start, end, exact }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Counters describing one scan call.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScanStats {
    pub points_scanned: u64,
    pub exact_points: u64,
    pub filter_evals: u64,
    pub ranges: u64,
}

impl ScanStats {
    pub fn merge(&mut self, other: &ScanStats) {
        self.points_scanned += other.points_scanned;
        self.exact_points += other.exact_points;
        self.filter_evals += other.filter_evals;
        self.ranges += other.ranges;
    }
}

/// Aggregate over the rows in `ranges` that satisfy `filter`.
///
/// Ranges must be disjoint and sorted ascending. Exact ranges skip the
/// per-row filter; with a cumulative column present, SUM and COUNT over
/// an exact range become a difference of two lookups.
pub fn scan(table: &Table, ranges: &[PhysicalRange], filter: &Query) -> Result<(AggregateResult, ScanStats)> {
    let sum_attr = filter.validate(table)?;
    debug_assert!(ranges.windows(2).all(|w| w[0].end < w[1].start));
    let mut res = AggregateResult::default();
    let mut stats = ScanStats::default();
    let filtered: Vec<(usize, u64, u64)> = filter
        .filters
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.map(|(lo, hi)| (i, lo, hi)))
        .collect();
    for r in ranges {
        debug_assert!(r.end < table.row_count());
        let len = (r.end - r.start + 1) as u64;
        stats.points_scanned += len;
        stats.ranges += 1;
        if r.exact {
            stats.exact_points += len;
            res.rows += len;
            match filter.agg {
                AggregateKind::Count => res.value += len,
                AggregateKind::Sum => {
                    if let Some(cum) = table.cumulative(sum_attr) {
                        let before = if r.start == 0 { 0 } else { cum[r.start - 1] };
                        res.value = res.value.wrapping_add(cum[r.end].wrapping_sub(before));
                    } else {
                        let col = table.column(sum_attr);
                        for i in r.start..=r.end {
                            res.value = res.value.wrapping_add(col.get(i));
                        }
                    }
                }
            }
        } else {
            for i in r.start..=r.end {
                stats.filter_evals += 1;
                let mut ok = true;
                for &(attr, lo, hi) in &filtered {
                    let v = table.value(attr, i);
                    if v < lo || v > hi {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    res.rows += 1;
                    match filter.agg {
                        AggregateKind::Count => res.value += 1,
                        AggregateKind::Sum => {
                            res.value = res.value.wrapping_add(table.value(sum_attr, i))
                        }
                    }
                }
            }
        }
    }
    Ok((res, stats))
}

/// Reference evaluation: visit every row, apply the filter, aggregate.
/// Deliberately bypasses the range machinery so it can cross-check it.
pub fn full_scan(table: &Table, q: &Query) -> Result<AggregateResult> {
    let sum_attr = q.validate(table)?;
    let mut res = AggregateResult::default();
    for row in 0..table.row_count() {
        if q.matches_row(table, row) {
            res.rows += 1;
            match q.agg {
                AggregateKind::Count => res.value += 1,
                AggregateKind::Sum => {
                    res.value = res.value.wrapping_add(table.value(sum_attr, row))
                }
            }
        }
    }
    Ok(res)
}

/// One parsed input value during ingest.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Int(i128),
    /// Decimal text such as `-12.34`, scaled by the attribute's scale.
    Decimal(String),
    Str(String),
}

fn parse_decimal(text: &str, scale: u32) -> Option<i128> {
    let text = text.trim();
    let (sign, rest) = match text.strip_prefix('-') {
        Some(r) => (-1i128, r),
        None => (1i128, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = match rest.split_once('.') {
        Some((i, f)) => (i, f),
        None => (rest, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if frac_part.len() > scale as usize {
        // More fractional digits than the declared scale can hold.
        return None;
    }
    let mut v: i128 = 0;
    for ch in int_part.chars().chain(frac_part.chars()) {
        let d = ch.to_digit(10)? as i128;
        v = v.checked_mul(10)?.checked_add(d)?;
    }
    for _ in frac_part.len()..scale as usize {
        v = v.checked_mul(10)?;
    }
    Some(sign * v)
}

/// Convert typed raw records into a table.
///
/// Decimals are scaled by `10^scale`; strings become dense dictionary
/// codes in first-occurrence order; any attribute whose minimum is
/// negative is shifted up by that minimum so storage stays unsigned.
pub fn ingest(attrs: &[Attribute], rows: &[Vec<RawValue>]) -> Result<Table> {
    let d = attrs.len();
    let mut numeric: Vec<Vec<i128>> = vec![Vec::with_capacity(rows.len()); d];
    let mut dicts: Vec<Option<Dictionary>> = attrs
        .iter()
        .map(|a| matches!(a.ty, AttrType::String).then(Dictionary::default))
        .collect();
    for (row_idx, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Format(format!(
                "row {row_idx} has {} values, expected {d}",
                row.len()
            )));
        }
        for (attr_idx, (attr, value)) in attrs.iter().zip(row).enumerate() {
            let v = match (&attr.ty, value) {
                (AttrType::Int, RawValue::Int(v)) => *v,
                (AttrType::Decimal { scale }, RawValue::Decimal(text)) => parse_decimal(text, *scale)
                    .ok_or_else(|| Error::ValueOverflow {
                        row: row_idx,
                        attr: attr.name.clone(),
                    })?,
                (AttrType::String, RawValue::Str(s)) => {
                    dicts[attr_idx].as_mut().unwrap().intern(s) as i128
                }
                _ => {
                    return Err(Error::Format(format!(
                        "row {row_idx}, attribute {:?}: value does not match declared type",
                        attr.name
                    )))
                }
            };
            numeric[attr_idx].push(v);
        }
    }
    let mut out_attrs = attrs.to_vec();
    let mut columns = Vec::with_capacity(d);
    for (attr_idx, vals) in numeric.iter().enumerate() {
        let min = vals.iter().copied().min().unwrap_or(0);
        let offset = min.min(0);
        out_attrs[attr_idx].offset =
            i64::try_from(offset).map_err(|_| Error::ValueOverflow {
                row: 0,
                attr: attrs[attr_idx].name.clone(),
            })?;
        let mut shifted = Vec::with_capacity(vals.len());
        for (row_idx, &v) in vals.iter().enumerate() {
            let u = u64::try_from(v - offset).map_err(|_| Error::ValueOverflow {
                row: row_idx,
                attr: attrs[attr_idx].name.clone(),
            })?;
            shifted.push(u);
        }
        columns.push(Column::encode(&shifted));
    }
    Ok(Table::from_parts(
        out_attrs,
        columns,
        dicts,
        vec![None; d],
        rows.len(),
    ))
}

//! Clustered single-dimension index: the table is sorted by one
//! attribute (the workload's most selective) and a three-layer learned
//! model predicts positions in the sorted column. Queries that filter
//! that attribute narrow to one physical range; anything else falls back
//! to a full scan.
//!
//! The model layers hold 1, sqrt(n) and n experts. Non-leaf layers are
//! linear splines so the expert chosen in the next layer is monotone in
//! the key; leaves are least-squares fits corrected by a bounded local
//! search at lookup time.

use std::time::Instant;

use crate::baselines::{BuildStats, MultiDimIndex};
use crate::cost::QueryStats;
use crate::error::Result;
use crate::store::{scan, AggregateResult, PhysicalRange, Query, Table};

#[derive(Debug, Clone, Copy, Default)]
struct Linear {
    slope: f64,
    intercept: f64,
}

impl Linear {
    fn eval(&self, v: u64) -> f64 {
        self.slope * v as f64 + self.intercept
    }

    /// Spline segment through two (key, position) anchor points.
    fn spline(x0: u64, y0: f64, x1: u64, y1: f64) -> Self {
        if x1 <= x0 {
            return Linear {
                slope: 0.0,
                intercept: y0,
            };
        }
        let slope = (y1 - y0) / (x1 as f64 - x0 as f64);
        Linear {
            slope,
            intercept: y0 - slope * x0 as f64,
        }
    }

    fn least_squares(keys: &[u64], first_pos: usize) -> Self {
        let n = keys.len() as f64;
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (off, &k) in keys.iter().enumerate() {
            let x = k as f64;
            let y = (first_pos + off) as f64;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let var = sxx - sx * sx / n;
        let slope = if var > 0.0 { ((sxy - sx * sy / n) / var).max(0.0) } else { 0.0 };
        Linear {
            slope,
            intercept: (sy - slope * sx) / n,
        }
    }
}

/// Three layers of experts over the sorted key column.
#[derive(Debug, Clone)]
struct LayeredModel {
    root: Linear,
    mid: Vec<Linear>,
    leaves: Vec<Linear>,
    n: usize,
}

impl LayeredModel {
    fn fit(keys: &[u64], leaf_experts: usize) -> Self {
        let n = keys.len();
        let leaves_n = leaf_experts.clamp(1, n.max(1));
        let mid_n = (leaves_n as f64).sqrt().ceil() as usize;
        let root = Linear::spline(keys[0], 0.0, keys[n - 1], (n - 1) as f64);

        // Route every key through the root to assign mid experts, then
        // fit each mid expert as a spline over its slice endpoints.
        let route_root = |v: u64| -> usize {
            let f = root.eval(v) / n as f64;
            ((f * mid_n as f64) as isize).clamp(0, mid_n as isize - 1) as usize
        };
        let mut mid = vec![Linear::default(); mid_n];
        let mut start = 0usize;
        let mut prev_y = 0.0;
        for expert in 0..mid_n {
            let mut end = start;
            while end < n && route_root(keys[end]) == expert {
                end += 1;
            }
            mid[expert] = if start == end {
                Linear { slope: 0.0, intercept: prev_y }
            } else {
                let y0 = start as f64;
                let y1 = (end - 1) as f64;
                prev_y = y1;
                Linear::spline(keys[start], y0, keys[end - 1], y1)
            };
            start = end;
        }

        let route_mid = |v: u64| -> usize {
            let m = &mid[route_root(v)];
            let f = m.eval(v) / n as f64;
            ((f * leaves_n as f64) as isize).clamp(0, leaves_n as isize - 1) as usize
        };
        let mut leaves = vec![Linear::default(); leaves_n];
        let mut start = 0usize;
        let mut prev_y = 0.0;
        for expert in 0..leaves_n {
            let mut end = start;
            while end < n && route_mid(keys[end]) == expert {
                end += 1;
            }
            leaves[expert] = if start == end {
                Linear { slope: 0.0, intercept: prev_y }
            } else {
                prev_y = (end - 1) as f64;
                Linear::least_squares(&keys[start..end], start)
            };
            start = end;
        }
        LayeredModel {
            root,
            mid,
            leaves,
            n,
        }
    }

    fn predict(&self, v: u64) -> usize {
        let f = self.root.eval(v) / self.n as f64;
        let mid_idx =
            ((f * self.mid.len() as f64) as isize).clamp(0, self.mid.len() as isize - 1) as usize;
        let f2 = self.mid[mid_idx].eval(v) / self.n as f64;
        let leaf_idx = ((f2 * self.leaves.len() as f64) as isize)
            .clamp(0, self.leaves.len() as isize - 1) as usize;
        let p = self.leaves[leaf_idx].eval(v);
        (p as isize).clamp(0, self.n as isize - 1) as usize
    }

    fn size_bytes(&self) -> u64 {
        ((1 + self.mid.len() + self.leaves.len()) * 16) as u64
    }
}

pub struct ClusteredIndex {
    table: Table,
    attr: usize,
    model: LayeredModel,
    build: BuildStats,
}

impl ClusteredIndex {
    /// Sort by `attr` and learn the position model with `leaf_experts`
    /// leaf entries.
    pub fn build(table: &Table, attr: usize, leaf_experts: usize) -> Self {
        let t0 = Instant::now();
        assert!(attr < table.attr_count());
        let n = table.row_count();
        let col = table.column(attr);
        let mut keyed: Vec<(u64, u32)> = (0..n).map(|r| (col.get(r), r as u32)).collect();
        keyed.sort_unstable();
        let gather: Vec<u32> = keyed.iter().map(|k| k.1).collect();
        let sorted_keys: Vec<u64> = keyed.iter().map(|k| k.0).collect();
        let table = table.reorder(&gather);
        let model = if sorted_keys.is_empty() {
            LayeredModel::fit(&[0], 1)
        } else {
            LayeredModel::fit(&sorted_keys, leaf_experts)
        };
        let bytes = model.size_bytes();
        ClusteredIndex {
            table,
            attr,
            model,
            build: BuildStats {
                build_seconds: t0.elapsed().as_secs_f64(),
                nodes: 1 + model_len(&sorted_keys, leaf_experts),
                pages: 0,
                depth: 3,
                bytes,
            },
        }
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    pub fn sort_attr(&self) -> usize {
        self.attr
    }

    /// First position with key >= v: model prediction plus a galloping
    /// correction in whichever direction is needed.
    fn lower_bound(&self, v: u64) -> usize {
        let n = self.table.row_count();
        if n == 0 {
            return 0;
        }
        let col = self.table.column(self.attr);
        let get = |i: usize| col.get(i);
        let pred = self.model.predict(v).min(n - 1);
        if get(pred) >= v {
            // Gallop down to the first position whose predecessor is
            // below v.
            let mut hi = pred;
            let mut step = 1usize;
            let mut lo = pred;
            while lo > 0 && get(lo - 1) >= v {
                hi = lo;
                lo = lo.saturating_sub(step);
                step <<= 1;
            }
            let mut l = lo;
            let mut r = hi;
            while l < r {
                let m = l + (r - l) / 2;
                if get(m) < v {
                    l = m + 1;
                } else {
                    r = m;
                }
            }
            l
        } else {
            let mut prev = pred;
            let mut step = 1usize;
            let mut cur = pred + 1;
            while cur < n && get(cur) < v {
                prev = cur;
                step <<= 1;
                cur = prev.saturating_add(step).min(n);
            }
            let mut l = prev + 1;
            let mut r = cur.min(n);
            while l < r {
                let m = l + (r - l) / 2;
                if get(m) < v {
                    l = m + 1;
                } else {
                    r = m;
                }
            }
            l
        }
    }
}

fn model_len(keys: &[u64], leaf_experts: usize) -> u64 {
    let leaves = leaf_experts.clamp(1, keys.len().max(1)) as u64;
    leaves + (leaves as f64).sqrt().ceil() as u64
}

impl MultiDimIndex for ClusteredIndex {
    fn name(&self) -> &'static str {
        "clustered"
    }

    fn execute(&self, q: &Query) -> Result<(AggregateResult, QueryStats)> {
        let t0 = Instant::now();
        let n = self.table.row_count();
        let mut ranges = Vec::new();
        match q.filters.get(self.attr).copied().flatten() {
            Some((lo, hi)) => {
                let start = self.lower_bound(lo);
                let end_excl = if hi == u64::MAX { n } else { self.lower_bound(hi + 1) };
                if start < end_excl {
                    // Exact when the sort attribute is the only filter.
                    let exact = q.filtered_dims() == 1;
                    ranges.push(PhysicalRange::new(start, end_excl - 1, exact));
                }
            }
            None => {
                if n > 0 {
                    ranges.push(PhysicalRange::new(0, n - 1, q.filtered_dims() == 0));
                }
            }
        }
        let t1 = Instant::now();
        let (res, stats) = scan(&self.table, &ranges, q)?;
        let t2 = Instant::now();
        let mut sizes: Vec<u64> = ranges.iter().map(|r| r.len() as u64).collect();
        Ok((
            res,
            QueryStats::from_index_scan(
                1,
                &stats,
                res.rows,
                1,
                &mut sizes,
                q.filtered_dims() as u32,
                [t0, t1, t2],
            ),
        ))
    }

    fn build_stats(&self) -> BuildStats {
        self.build.clone()
    }

    fn index_size_bytes(&self) -> u64 {
        self.build.bytes
    }
}

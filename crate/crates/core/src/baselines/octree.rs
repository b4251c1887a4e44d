//! Hyperoctree: space splits equally into 2^d octants per level until
//! each leaf holds at most a page of points. Leaves are laid out
//! contiguously in depth-first order.

use std::time::Instant;

use crate::baselines::{BuildStats, MultiDimIndex};
use crate::cost::QueryStats;
use crate::error::{Error, Result};
use crate::store::{scan, AggregateResult, PhysicalRange, Query, Table};

/// Octrees hold a child slot per octant; cap the dimensionality so a
/// node's child table stays reasonable.
pub const MAX_OCTREE_DIMS: usize = 12;

#[derive(Debug)]
enum Node {
    Internal {
        /// (octant mask, child index); only non-empty octants exist.
        children: Vec<(u32, u32)>,
    },
    Leaf {
        start: usize,
        end_excl: usize,
        point_lo: Vec<u64>,
        point_hi: Vec<u64>,
    },
}

pub struct Hyperoctree {
    table: Table,
    nodes: Vec<Node>,
    /// Region bounds of every node, parallel to `nodes`.
    regions: Vec<(Vec<u64>, Vec<u64>)>,
    page_size: usize,
    build: BuildStats,
}

struct Builder<'a> {
    table: &'a Table,
    page_size: usize,
    nodes: Vec<Node>,
    regions: Vec<(Vec<u64>, Vec<u64>)>,
    order: Vec<u32>,
    depth_seen: u32,
}

impl<'a> Builder<'a> {
    fn grow(&mut self, mut rows: Vec<u32>, lo: Vec<u64>, hi: Vec<u64>, depth: u32) -> u32 {
        self.depth_seen = self.depth_seen.max(depth);
        let d = lo.len();
        let splittable = (0..d).any(|i| hi[i] > lo[i]);
        if rows.len() <= self.page_size || !splittable {
            let mut point_lo = vec![u64::MAX; d];
            let mut point_hi = vec![0u64; d];
            for &r in &rows {
                for (i, (plo, phi)) in point_lo.iter_mut().zip(point_hi.iter_mut()).enumerate() {
                    let v = self.table.value(i, r as usize);
                    *plo = (*plo).min(v);
                    *phi = (*phi).max(v);
                }
            }
            let start = self.order.len();
            self.order.append(&mut rows);
            let idx = self.nodes.len() as u32;
            self.nodes.push(Node::Leaf {
                start,
                end_excl: self.order.len(),
                point_lo,
                point_hi,
            });
            self.regions.push((lo, hi));
            return idx;
        }
        let mids: Vec<u64> = lo.iter().zip(&hi).map(|(&l, &h)| l + (h - l) / 2).collect();
        let mut octants: Vec<(u32, Vec<u32>)> = Vec::new();
        for &r in &rows {
            let mut mask = 0u32;
            for i in 0..d {
                if self.table.value(i, r as usize) > mids[i] {
                    mask |= 1 << i;
                }
            }
            match octants.iter_mut().find(|(m, _)| *m == mask) {
                Some((_, v)) => v.push(r),
                None => octants.push((mask, vec![r])),
            }
        }
        octants.sort_by_key(|(m, _)| *m);
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node::Internal { children: Vec::new() });
        self.regions.push((lo.clone(), hi.clone()));
        let mut children = Vec::with_capacity(octants.len());
        for (mask, sub) in octants {
            let mut clo = lo.clone();
            let mut chi = hi.clone();
            for i in 0..d {
                if mask & (1 << i) != 0 {
                    clo[i] = (mids[i] + 1).min(hi[i]);
                } else {
                    chi[i] = mids[i];
                }
            }
            let child = self.grow(sub, clo, chi, depth + 1);
            children.push((mask, child));
        }
        match &mut self.nodes[idx as usize] {
            Node::Internal { children: c } => *c = children,
            Node::Leaf { .. } => unreachable!(),
        }
        idx
    }
}

impl Hyperoctree {
    pub fn build(table: &Table, page_size: usize) -> Result<Self> {
        let t0 = Instant::now();
        let d = table.attr_count();
        if d > MAX_OCTREE_DIMS {
            return Err(Error::InvalidConfig(format!(
                "hyperoctree supports up to {MAX_OCTREE_DIMS} dimensions, got {d}"
            )));
        }
        let n = table.row_count();
        let mut lo = vec![0u64; d];
        let mut hi = vec![0u64; d];
        for attr in 0..d {
            let col = table.column(attr);
            let mut min = u64::MAX;
            let mut max = 0u64;
            for v in col.iter() {
                min = min.min(v);
                max = max.max(v);
            }
            lo[attr] = if n == 0 { 0 } else { min };
            hi[attr] = if n == 0 { 0 } else { max };
        }
        let mut builder = Builder {
            table,
            page_size: page_size.max(1),
            nodes: Vec::new(),
            regions: Vec::new(),
            order: Vec::new(),
            depth_seen: 0,
        };
        builder.grow((0..n as u32).collect(), lo, hi, 0);
        let reordered = table.reorder(&builder.order);
        let leaf_count = builder
            .nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count() as u64;
        let d_bytes = (d * 16) as u64;
        let bytes: u64 = builder
            .nodes
            .iter()
            .map(|n| match n {
                Node::Internal { children } => d_bytes + children.len() as u64 * 8,
                Node::Leaf { .. } => 2 * d_bytes + 16,
            })
            .sum();
        Ok(Hyperoctree {
            table: reordered,
            nodes: builder.nodes,
            regions: builder.regions,
            page_size,
            build: BuildStats {
                build_seconds: t0.elapsed().as_secs_f64(),
                nodes: 0,
                pages: leaf_count,
                depth: builder.depth_seen,
                bytes,
            },
        })
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn leaf_ranges(&self) -> Vec<(usize, usize)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { start, end_excl, .. } => Some((*start, *end_excl)),
                _ => None,
            })
            .collect()
    }
}

fn rect_of(q: &Query) -> Vec<Option<(u64, u64)>> {
    q.filters.clone()
}

fn boxes_overlap(lo: &[u64], hi: &[u64], rect: &[Option<(u64, u64)>]) -> bool {
    rect.iter().enumerate().all(|(i, f)| match f {
        None => true,
        Some((ql, qh)) => hi[i] >= *ql && lo[i] <= *qh,
    })
}

fn box_inside(lo: &[u64], hi: &[u64], rect: &[Option<(u64, u64)>]) -> bool {
    rect.iter().enumerate().all(|(i, f)| match f {
        None => true,
        Some((ql, qh)) => lo[i] >= *ql && hi[i] <= *qh,
    })
}

impl MultiDimIndex for Hyperoctree {
    fn name(&self) -> &'static str {
        "octree"
    }

    fn execute(&self, q: &Query) -> Result<(AggregateResult, QueryStats)> {
        let t0 = Instant::now();
        let rect = rect_of(q);
        let mut ranges = Vec::new();
        let mut sizes = Vec::new();
        let mut visited = 0u64;
        let mut stack = vec![0u32];
        if self.nodes.is_empty() || self.table.row_count() == 0 {
            stack.clear();
        }
        while let Some(idx) = stack.pop() {
            visited += 1;
            let (rlo, rhi) = &self.regions[idx as usize];
            if !boxes_overlap(rlo, rhi, &rect) {
                continue;
            }
            match &self.nodes[idx as usize] {
                Node::Internal { children } => {
                    // Reverse keeps depth-first, ascending-range order.
                    for (_, child) in children.iter().rev() {
                        stack.push(*child);
                    }
                }
                Node::Leaf {
                    start,
                    end_excl,
                    point_lo,
                    point_hi,
                } => {
                    if *start == *end_excl || !boxes_overlap(point_lo, point_hi, &rect) {
                        continue;
                    }
                    let exact = box_inside(point_lo, point_hi, &rect);
                    sizes.push((end_excl - start) as u64);
                    ranges.push(PhysicalRange::new(*start, *end_excl - 1, exact));
                }
            }
        }
        let t1 = Instant::now();
        let (res, stats) = scan(&self.table, &ranges, q)?;
        let t2 = Instant::now();
        Ok((
            res,
            QueryStats::from_index_scan(
                visited,
                &stats,
                res.rows,
                self.build.pages,
                &mut sizes,
                q.filtered_dims() as u32,
                [t0, t1, t2],
            ),
        ))
    }

    fn build_stats(&self) -> BuildStats {
        let mut b = self.build.clone();
        b.nodes = self.nodes.len() as u64;
        b
    }

    fn index_size_bytes(&self) -> u64 {
        self.build.bytes
    }
}

//! Piecewise linear model over a sorted slice.
//!
//! The model maps a value to a predicted position that never exceeds the
//! first occurrence of that value (the lower-bound property), so a
//! lookup can correct the prediction by searching strictly upward.
//! Segments are grown greedily: keep extending while the segment's
//! average error stays within the budget `delta`, otherwise start a new
//! slice at the current value.
//!
//! Each candidate segment is a least-squares line over the elements seen
//! so far, shifted down by its worst overshoot against the first
//! occurrences, which restores the lower bound and makes the average
//! error equal to that shift. The worst overshoot is tracked through the
//! lower convex hull of the distinct (value, first index) points, since
//! a linear function attains its maximum over a point set at a hull
//! vertex.

use std::io::{Read, Write};

use crate::error::Result;
use crate::io::*;
use crate::Real;

/// Sorted value sequence with first-occurrence positions, the training
/// input for a [`Plm`].
pub struct CdfSample<'a> {
    values: &'a [u64],
}

impl<'a> CdfSample<'a> {
    pub fn new(sorted_values: &'a [u64]) -> Self {
        debug_assert!(sorted_values.windows(2).all(|w| w[0] <= w[1]));
        CdfSample { values: sorted_values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[u64] {
        self.values
    }

    /// First index of `v`, for values present in the sample.
    pub fn first_index(&self, v: u64) -> usize {
        self.values.partition_point(|&x| x < v)
    }

    /// Iterate runs of equal values as (value, first index, count).
    fn runs(&self) -> impl Iterator<Item = (u64, usize, usize)> + 'a {
        let values = self.values;
        let mut i = 0usize;
        std::iter::from_fn(move || {
            if i >= values.len() {
                return None;
            }
            let v = values[i];
            let start = i;
            while i < values.len() && values[i] == v {
                i += 1;
            }
            Some((v, start, i - start))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlmSegment<F> {
    pub first_key: u64,
    pub slope: F,
    pub intercept: F,
    /// Largest prediction this segment may emit: the first occurrence of
    /// its last key. Queries past the segment's keys clamp here, which
    /// keeps them at or below the true position.
    pub max_pred: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plm<F> {
    first_keys: Vec<u64>,
    segments: Vec<PlmSegment<F>>,
    delta: F,
    len: usize,
}

struct SegmentDraft {
    start_elem: usize,
    first_key: u64,
    // Weighted least-squares accumulators over (value, element index).
    n: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    sxy: f64,
    // Lower hull of distinct (value, first index) points.
    hull: Vec<(f64, f64)>,
    last_key: u64,
    last_first_index: usize,
    distinct: usize,
}

/// What one `add_run` changed, so a budget-busting run can be backed out.
struct AddUndo {
    sums: (f64, f64, f64, f64, f64),
    popped: Vec<(f64, f64)>,
    prev_last_key: u64,
    prev_last_first: usize,
}

impl SegmentDraft {
    fn new(start_elem: usize, first_key: u64) -> Self {
        SegmentDraft {
            start_elem,
            first_key,
            n: 0.0,
            sx: 0.0,
            sy: 0.0,
            sxx: 0.0,
            sxy: 0.0,
            hull: Vec::new(),
            last_key: first_key,
            last_first_index: 0,
            distinct: 0,
        }
    }

    fn add_run(&mut self, v: u64, first_idx: usize, count: usize) -> AddUndo {
        let undo_sums = (self.n, self.sx, self.sy, self.sxx, self.sxy);
        let prev_last_key = self.last_key;
        let prev_last_first = self.last_first_index;
        let x = v as f64;
        let m = count as f64;
        let d = first_idx as f64;
        // Sum of element indices first_idx .. first_idx + count.
        let ysum = m * d + m * (m - 1.0) / 2.0;
        self.n += m;
        self.sx += m * x;
        self.sy += ysum;
        self.sxx += m * x * x;
        self.sxy += x * ysum;
        let popped = push_lower_hull(&mut self.hull, (x, d));
        self.last_key = v;
        self.last_first_index = first_idx;
        self.distinct += 1;
        AddUndo {
            sums: undo_sums,
            popped,
            prev_last_key,
            prev_last_first,
        }
    }

    fn undo(&mut self, undo: AddUndo) {
        (self.n, self.sx, self.sy, self.sxx, self.sxy) = undo.sums;
        self.hull.pop();
        for p in undo.popped.into_iter().rev() {
            self.hull.push(p);
        }
        self.last_key = undo.prev_last_key;
        self.last_first_index = undo.prev_last_first;
        self.distinct -= 1;
    }

    fn fit(&self) -> (f64, f64) {
        let var = self.sxx - self.sx * self.sx / self.n;
        let slope = if var > 0.0 && self.distinct > 1 {
            ((self.sxy - self.sx * self.sy / self.n) / var).max(0.0)
        } else {
            0.0
        };
        let intercept = (self.sy - slope * self.sx) / self.n;
        (slope, intercept)
    }

    /// Average error the shifted fit would have: its worst overshoot
    /// against the first occurrences.
    fn shifted_mean_error(&self) -> f64 {
        let (slope, intercept) = self.fit();
        hull_max_overshoot(&self.hull, slope, intercept).max(0.0)
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Push onto the lower hull, returning the vertices the push removed.
fn push_lower_hull(hull: &mut Vec<(f64, f64)>, p: (f64, f64)) -> Vec<(f64, f64)> {
    let mut popped = Vec::new();
    while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
        popped.push(hull.pop().unwrap());
    }
    hull.push(p);
    popped
}

/// Max of `slope * x + intercept - y` over the hull vertices. The
/// sequence is concave along the lower hull, so a binary peak search
/// plus a small window scan finds it.
fn hull_max_overshoot(hull: &[(f64, f64)], slope: f64, intercept: f64) -> f64 {
    let g = |p: (f64, f64)| slope * p.0 + intercept - p.1;
    if hull.len() <= 8 {
        return hull.iter().copied().map(g).fold(f64::NEG_INFINITY, f64::max);
    }
    let mut lo = 0usize;
    let mut hi = hull.len() - 1;
    while hi - lo > 2 {
        let m = (lo + hi) / 2;
        if g(hull[m + 1]) > g(hull[m]) {
            lo = m + 1;
        } else {
            hi = m;
        }
    }
    let from = lo.saturating_sub(2);
    let to = (hi + 2).min(hull.len() - 1);
    hull[from..=to]
        .iter()
        .copied()
        .map(g)
        .fold(f64::NEG_INFINITY, f64::max)
}

impl<F: Real> Plm<F> {
    /// Greedy fit with average-error budget `delta` (in index units).
    pub fn fit(sample: &CdfSample<'_>, delta: F) -> Self {
        let delta_f = delta.to_f64().unwrap();
        assert!(delta_f > 0.0, "delta must be positive");
        // Stay a hair inside the budget so the exact close-out shift
        // cannot round past it.
        let budget = delta_f - (delta_f * 1e-9).min(1e-6);
        let mut first_keys = Vec::new();
        let mut segments: Vec<PlmSegment<F>> = Vec::new();
        let mut draft: Option<SegmentDraft> = None;
        for (v, first_idx, count) in sample.runs() {
            match draft.as_mut() {
                None => {
                    let mut d = SegmentDraft::new(first_idx, v);
                    let _ = d.add_run(v, first_idx, count);
                    draft = Some(d);
                }
                Some(d) => {
                    let undo = d.add_run(v, first_idx, count);
                    if d.shifted_mean_error() > budget {
                        d.undo(undo);
                        let seg = close_segment(d, sample);
                        first_keys.push(seg.first_key);
                        segments.push(seg);
                        let mut nd = SegmentDraft::new(first_idx, v);
                        nd.add_run(v, first_idx, count);
                        *d = nd;
                    }
                }
            }
        }
        if let Some(d) = draft {
            let seg = close_segment(&d, sample);
            first_keys.push(seg.first_key);
            segments.push(seg);
        }
        Plm {
            first_keys,
            segments,
            delta,
            len: sample.len(),
        }
    }

    pub fn segments(&self) -> &[PlmSegment<F>] {
        &self.segments
    }

    pub fn delta(&self) -> F {
        self.delta
    }

    pub fn covered_len(&self) -> usize {
        self.len
    }

    /// Raw model output for `v`, clamped to the segment's valid range.
    /// For any trained value this is at most its first occurrence index.
    pub fn predict_value(&self, v: u64) -> F {
        if self.segments.is_empty() {
            return F::zero();
        }
        let idx = self.first_keys.partition_point(|&k| k <= v);
        let seg = &self.segments[idx.saturating_sub(1)];
        let p = seg.slope * F::from_u64(v).unwrap() + seg.intercept;
        p.min(seg.max_pred).max(F::zero())
    }

    /// Predicted lower-bound position for `v`; never exceeds the true
    /// first index with value >= `v`.
    pub fn predict(&self, v: u64) -> usize {
        self.predict_value(v).to_f64().unwrap().floor() as usize
    }

    /// True lower-bound position of `v` in the slice the model was fit
    /// on: prediction plus an upward exponential search.
    pub fn lookup<G: Fn(usize) -> u64>(&self, v: u64, len: usize, get: G) -> usize {
        if len == 0 {
            return 0;
        }
        let start = self.predict(v).min(len - 1);
        search_up(start, v, len, get)
    }

    pub fn size_bytes(&self) -> usize {
        self.first_keys.len() * 8 + self.segments.len() * (8 + 3 * std::mem::size_of::<F>())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w_f64(w, self.delta.to_f64().unwrap())?;
        w_u64(w, self.len as u64)?;
        w_u64(w, self.segments.len() as u64)?;
        for seg in &self.segments {
            w_u64(w, seg.first_key)?;
            w_f64(w, seg.slope.to_f64().unwrap())?;
            w_f64(w, seg.intercept.to_f64().unwrap())?;
            w_f64(w, seg.max_pred.to_f64().unwrap())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let delta = F::from_f64(r_f64(r)?).unwrap();
        let len = r_usize(r)?;
        let n = r_usize(r)?;
        let mut first_keys = Vec::with_capacity(n);
        let mut segments = Vec::with_capacity(n);
        for _ in 0..n {
            let first_key = r_u64(r)?;
            let seg = PlmSegment {
                first_key,
                slope: F::from_f64(r_f64(r)?).unwrap(),
                intercept: F::from_f64(r_f64(r)?).unwrap(),
                max_pred: F::from_f64(r_f64(r)?).unwrap(),
            };
            first_keys.push(first_key);
            segments.push(seg);
        }
        Ok(Plm {
            first_keys,
            segments,
            delta,
            len,
        })
    }
}

/// First index in `[0, len)` with `get(i) >= v`, or `len`, found by
/// galloping upward from `start`. Requires `get(start) < v` or `start`
/// already being the answer.
fn search_up<G: Fn(usize) -> u64>(start: usize, v: u64, len: usize, get: G) -> usize {
    if get(start) >= v {
        debug_assert!(start == 0 || get(start - 1) < v || start == len, "prediction overshot");
        return start;
    }
    let mut prev = start;
    let mut step = 1usize;
    let mut cur = start + 1;
    while cur < len && get(cur) < v {
        prev = cur;
        step <<= 1;
        cur = prev.saturating_add(step).min(len);
    }
    let mut lo = prev + 1;
    let mut hi = cur.min(len);
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

fn close_segment<F: Real>(draft: &SegmentDraft, sample: &CdfSample<'_>) -> PlmSegment<F> {
    let (slope, intercept_ls) = draft.fit();
    // The hull estimate drives the greedy split, but the stored intercept
    // must make the lower bound airtight in the arithmetic actually used
    // at prediction time, so iterate the shift until no distinct value
    // overshoots its first occurrence.
    let values = sample.values();
    let max_overshoot = |intercept: f64| -> f64 {
        let mut over = f64::NEG_INFINITY;
        let mut i = draft.start_elem;
        let end = draft.last_first_index;
        loop {
            let v = values[i];
            let pred = slope * (v as f64) + intercept;
            over = over.max(pred - i as f64);
            if i >= end {
                break;
            }
            let mut j = i + 1;
            while j < values.len() && values[j] == v {
                j += 1;
            }
            i = j;
        }
        over
    };
    let mut intercept = intercept_ls;
    for _ in 0..64 {
        let over = max_overshoot(intercept);
        if over <= 0.0 {
            break;
        }
        let lowered = intercept - over;
        intercept = if lowered < intercept {
            lowered
        } else {
            intercept.next_down()
        };
    }
    // Re-verify in the scalar type actually used at prediction time; a
    // narrowing conversion may round the intercept back up.
    let slope_f = F::from_f64(slope).unwrap();
    let mut intercept_f = F::from_f64(intercept).unwrap();
    let overshoot_f = |intercept: F| -> F {
        let mut over = F::neg_infinity();
        let mut i = draft.start_elem;
        let end = draft.last_first_index;
        loop {
            let v = values[i];
            let pred = slope_f * F::from_u64(v).unwrap() + intercept;
            over = over.max(pred - F::from_usize(i).unwrap());
            if i >= end {
                break;
            }
            let mut j = i + 1;
            while j < values.len() && values[j] == v {
                j += 1;
            }
            i = j;
        }
        over
    };
    for _ in 0..64 {
        let over = overshoot_f(intercept_f);
        if over <= F::zero() {
            break;
        }
        let lowered = intercept_f - over;
        intercept_f = if lowered < intercept_f {
            lowered
        } else {
            intercept_f - F::epsilon() * intercept_f.abs().max(F::one())
        };
    }
    debug_assert!(overshoot_f(intercept_f) <= F::zero());
    PlmSegment {
        first_key: draft.first_key,
        slope: slope_f,
        intercept: intercept_f,
        max_pred: F::from_f64(draft.last_first_index as f64).unwrap(),
    }
}

//! Two-layer recursive model index approximating an empirical CDF.
//!
//! The root layer is a monotone linear spline with knots placed at
//! quantiles of the training values; it routes a value to one of the
//! leaf models. Each leaf is a least-squares line over its slice,
//! clamped to the slice's CDF range so the composed model stays monotone
//! and inside [0, 1].

use std::io::{Read, Write};

use crate::error::Result;
use crate::io::*;
use crate::Real;

const ROOT_KNOTS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
struct Leaf<F> {
    slope: F,
    intercept: F,
    lo: F,
    hi: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rmi<F> {
    domain_min: u64,
    domain_max: u64,
    root_keys: Vec<u64>,
    root_vals: Vec<F>,
    leaves: Vec<Leaf<F>>,
}

impl<F: Real> Rmi<F> {
    /// Fit to a value sequence (order does not matter). Panics on empty
    /// input.
    pub fn fit(values: &[u64]) -> Self {
        assert!(!values.is_empty(), "cannot fit a CDF to no values");
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        Self::fit_sorted(&sorted)
    }

    /// Fit to already-sorted values.
    pub fn fit_sorted(sorted: &[u64]) -> Self {
        assert!(!sorted.is_empty());
        debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
        let n = sorted.len();
        let nf = n as f64;
        let target = |i: usize| -> f64 { (i as f64 + 0.5) / nf };

        // Root spline knots at evenly spaced ranks; duplicate keys keep
        // the largest CDF value so the spline stays a function.
        let knot_count = ROOT_KNOTS.min(n.saturating_sub(1)).max(1);
        let mut root_keys: Vec<u64> = Vec::with_capacity(knot_count + 1);
        let mut root_vals_f64: Vec<f64> = Vec::with_capacity(knot_count + 1);
        for j in 0..=knot_count {
            let idx = (j * (n - 1)) / knot_count;
            let key = sorted[idx];
            let val = target(idx);
            if let Some(&last) = root_keys.last() {
                if last == key {
                    *root_vals_f64.last_mut().unwrap() = val;
                    continue;
                }
            }
            root_keys.push(key);
            root_vals_f64.push(val);
        }

        let leaf_count = ((n as f64).sqrt().floor() as usize).max(1);
        let spline_eval = |v: u64| -> f64 {
            eval_spline(&root_keys, &root_vals_f64, v)
        };
        let leaf_of = |v: u64| -> usize {
            let f = spline_eval(v);
            ((f * leaf_count as f64) as usize).min(leaf_count - 1)
        };

        // Training values are sorted and the spline is monotone, so each
        // leaf owns a contiguous slice.
        let mut leaves = Vec::with_capacity(leaf_count);
        let mut start = 0usize;
        let mut prev_hi = 0.0f64;
        for leaf_idx in 0..leaf_count {
            let mut end = start;
            while end < n && leaf_of(sorted[end]) == leaf_idx {
                end += 1;
            }
            let leaf = if start == end {
                Leaf {
                    slope: F::zero(),
                    intercept: F::from_f64(prev_hi).unwrap(),
                    lo: F::from_f64(prev_hi).unwrap(),
                    hi: F::from_f64(prev_hi).unwrap(),
                }
            } else {
                let slice = &sorted[start..end];
                let m = slice.len() as f64;
                let mut sx = 0.0;
                let mut sy = 0.0;
                let mut sxx = 0.0;
                let mut sxy = 0.0;
                for (off, &v) in slice.iter().enumerate() {
                    let x = v as f64;
                    let y = target(start + off);
                    sx += x;
                    sy += y;
                    sxx += x * x;
                    sxy += x * y;
                }
                let var = sxx - sx * sx / m;
                let slope = if var > 0.0 {
                    ((sxy - sx * sy / m) / var).max(0.0)
                } else {
                    0.0
                };
                let intercept = (sy - slope * sx) / m;
                let lo = target(start);
                let hi = target(end - 1);
                prev_hi = hi;
                Leaf {
                    slope: F::from_f64(slope).unwrap(),
                    intercept: F::from_f64(intercept).unwrap(),
                    lo: F::from_f64(lo).unwrap(),
                    hi: F::from_f64(hi).unwrap(),
                }
            };
            leaves.push(leaf);
            start = end;
        }

        Rmi {
            domain_min: sorted[0],
            domain_max: sorted[n - 1],
            root_keys,
            root_vals: root_vals_f64
                .iter()
                .map(|&v| F::from_f64(v).unwrap())
                .collect(),
            leaves,
        }
    }

    pub fn domain(&self) -> (u64, u64) {
        (self.domain_min, self.domain_max)
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Approximate fraction of training values that are `<= v`, always
    /// in [0, 1] and monotone non-decreasing in `v`.
    pub fn eval(&self, v: u64) -> F {
        if v < self.domain_min {
            return F::zero();
        }
        if v > self.domain_max {
            return F::one();
        }
        let f = self.root_eval(v);
        let leaf_count = self.leaves.len();
        let idx = ((f.to_f64().unwrap() * leaf_count as f64) as usize).min(leaf_count - 1);
        let leaf = &self.leaves[idx];
        let x = F::from_u64(v).unwrap();
        let y = leaf.slope * x + leaf.intercept;
        y.max(leaf.lo).min(leaf.hi).max(F::zero()).min(F::one())
    }

    fn root_eval(&self, v: u64) -> F {
        let keys = &self.root_keys;
        let vals = &self.root_vals;
        if v <= keys[0] {
            return vals[0];
        }
        if v >= keys[keys.len() - 1] {
            return vals[vals.len() - 1];
        }
        // Last knot with key <= v.
        let i = keys.partition_point(|&k| k <= v) - 1;
        let x0 = F::from_u64(keys[i]).unwrap();
        let x1 = F::from_u64(keys[i + 1]).unwrap();
        let t = ((F::from_u64(v).unwrap() - x0) / (x1 - x0))
            .max(F::zero())
            .min(F::one());
        vals[i] + t * (vals[i + 1] - vals[i])
    }

    /// Bucket index for a value when the domain is split into `buckets`
    /// equal-CDF-width columns: `floor(cdf(v) * buckets)`, clamped.
    pub fn bucket(&self, v: u64, buckets: u64) -> u64 {
        debug_assert!(buckets >= 1);
        let f = self.eval(v).to_f64().unwrap();
        ((f * buckets as f64) as u64).min(buckets - 1)
    }

    /// Bytes used by the fitted model.
    pub fn size_bytes(&self) -> usize {
        self.root_keys.len() * 8
            + self.root_vals.len() * std::mem::size_of::<F>()
            + self.leaves.len() * 4 * std::mem::size_of::<F>()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w_u64(w, self.domain_min)?;
        w_u64(w, self.domain_max)?;
        w_u64(w, self.root_keys.len() as u64)?;
        for &k in &self.root_keys {
            w_u64(w, k)?;
        }
        for &v in &self.root_vals {
            w_f64(w, v.to_f64().unwrap())?;
        }
        w_u64(w, self.leaves.len() as u64)?;
        for leaf in &self.leaves {
            w_f64(w, leaf.slope.to_f64().unwrap())?;
            w_f64(w, leaf.intercept.to_f64().unwrap())?;
            w_f64(w, leaf.lo.to_f64().unwrap())?;
            w_f64(w, leaf.hi.to_f64().unwrap())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let domain_min = r_u64(r)?;
        let domain_max = r_u64(r)?;
        let kn = r_usize(r)?;
        let mut root_keys = Vec::with_capacity(kn);
        for _ in 0..kn {
            root_keys.push(r_u64(r)?);
        }
        let mut root_vals = Vec::with_capacity(kn);
        for _ in 0..kn {
            root_vals.push(F::from_f64(r_f64(r)?).unwrap());
        }
        let ln = r_usize(r)?;
        let mut leaves = Vec::with_capacity(ln);
        for _ in 0..ln {
            leaves.push(Leaf {
                slope: F::from_f64(r_f64(r)?).unwrap(),
                intercept: F::from_f64(r_f64(r)?).unwrap(),
                lo: F::from_f64(r_f64(r)?).unwrap(),
                hi: F::from_f64(r_f64(r)?).unwrap(),
            });
        }
        Ok(Rmi {
            domain_min,
            domain_max,
            root_keys,
            root_vals,
            leaves,
        })
    }
}

fn eval_spline(keys: &[u64], vals: &[f64], v: u64) -> f64 {
    if v <= keys[0] {
        return vals[0];
    }
    if v >= keys[keys.len() - 1] {
        return vals[vals.len() - 1];
    }
    let i = keys.partition_point(|&k| k <= v) - 1;
    let x0 = keys[i] as f64;
    let x1 = keys[i + 1] as f64;
    let t = (((v as f64) - x0) / (x1 - x0)).clamp(0.0, 1.0);
    vals[i] + t * (vals[i + 1] - vals[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, LogNormal};

    #[test]
    fn uniform_cdf_close_to_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<u64> = (0..200_000).map(|_| rng.gen_range(0..1_000_000u64)).collect();
        let rmi: Rmi<f64> = Rmi::fit(&values);
        for _ in 0..1000 {
            let v = rng.gen_range(0..1_000_000u64);
            let expect = v as f64 / 1_000_000.0;
            assert!(
                (rmi.eval(v) - expect).abs() < 0.01,
                "eval({v}) = {} vs {expect}",
                rmi.eval(v)
            );
        }
    }

    #[test]
    fn endpoints_hit_zero_and_one() {
        let values: Vec<u64> = (0..5000u64).map(|i| i * 7 + 3).collect();
        let rmi: Rmi<f64> = Rmi::fit(&values);
        let n = values.len() as f64;
        assert!(rmi.eval(3) <= 1.0 / n);
        assert!(rmi.eval(4999 * 7 + 3) >= 1.0 - 1.0 / n);
        assert_eq!(rmi.eval(0), 0.0);
        assert_eq!(rmi.eval(u64::MAX), 1.0);
    }

    #[test]
    fn monotone_on_sorted_probe_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dist = LogNormal::new(12.0, 2.0).unwrap();
        let values: Vec<u64> = (0..50_000).map(|_| dist.sample(&mut rng) as u64).collect();
        let rmi: Rmi<f64> = Rmi::fit(&values);
        for _ in 0..10_000 {
            let a = rng.gen::<u64>() >> rng.gen_range(0..32);
            let b = rng.gen::<u64>() >> rng.gen_range(0..32);
            let (a, b) = (a.min(b), a.max(b));
            assert!(rmi.eval(a) <= rmi.eval(b), "eval({a}) > eval({b})");
        }
    }

    #[test]
    fn bucket_floor_and_clamp() {
        // A synthetic model is tedious to arrange; drive through a dense
        // uniform fit where the CDF is essentially v/n.
        let values: Vec<u64> = (0..100_000u64).collect();
        let rmi: Rmi<f64> = Rmi::fit(&values);
        // cdf ~ 0.5 -> floor(0.5 * 4) = 2
        assert_eq!(rmi.bucket(50_000, 4), 2);
        // cdf = 1.0 at the top clamps into the last bucket
        assert_eq!(rmi.bucket(u64::MAX, 4), 3);
        assert_eq!(rmi.bucket(0, 4), 0);
    }

    #[test]
    fn skewed_buckets_stay_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dist = LogNormal::new(13.0, 1.5).unwrap();
        let values: Vec<u64> = (0..100_000).map(|_| dist.sample(&mut rng) as u64).collect();
        let rmi: Rmi<f64> = Rmi::fit(&values);
        let buckets = 16u64;
        let mut counts = vec![0usize; buckets as usize];
        for &v in &values {
            counts[rmi.bucket(v, buckets) as usize] += 1;
        }
        let expect = values.len() / buckets as usize;
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expect as f64).abs() <= 0.2 * expect as f64,
                "bucket {i} has {c}, expected {expect} +/- 20%"
            );
        }
    }

    #[test]
    fn balance_upper_bound_across_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let n = 60_000usize;
        let datasets: Vec<Vec<u64>> = vec![
            (0..n).map(|_| rng.gen_range(0..10_000_000u64)).collect(),
            {
                let d = rand_distr::Normal::new(5e8f64, 1e7).unwrap();
                (0..n).map(|_| d.sample(&mut rng).max(0.0) as u64).collect()
            },
            {
                let d = LogNormal::new(10.0, 2.5).unwrap();
                (0..n).map(|_| d.sample(&mut rng) as u64).collect()
            },
        ];
        for values in &datasets {
            let rmi: Rmi<f64> = Rmi::fit(values);
            for buckets in [4u64, 16, 64] {
                let mut counts = vec![0usize; buckets as usize];
                for &v in values {
                    counts[rmi.bucket(v, buckets) as usize] += 1;
                }
                let cap = 2 * n / buckets as usize;
                assert!(
                    counts.iter().all(|&c| c <= cap),
                    "max bucket {} over cap {cap} at {buckets} buckets",
                    counts.iter().max().unwrap()
                );
            }
        }
    }

    #[test]
    fn single_value_input() {
        let rmi: Rmi<f64> = Rmi::fit(&[42]);
        let f = rmi.eval(42);
        assert!((0.0..=1.0).contains(&f));
        assert_eq!(rmi.eval(41), 0.0);
        assert_eq!(rmi.eval(43), 1.0);
        assert!(rmi.bucket(42, 8) < 8);
    }

    #[test]
    fn serialization_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<u64> = (0..10_000).map(|_| rng.gen_range(0..1u64 << 40)).collect();
        let rmi: Rmi<f64> = Rmi::fit(&values);
        let mut buf = Vec::new();
        rmi.write_to(&mut buf).unwrap();
        let back: Rmi<f64> = Rmi::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, rmi);
    }

    #[test]
    fn f32_instantiation_stays_in_unit_interval() {
        let values: Vec<u64> = (0..10_000u64).map(|i| i * i).collect();
        let rmi: Rmi<f32> = Rmi::fit(&values);
        for &v in values.iter().step_by(97) {
            let f = rmi.eval(v);
            assert!((0.0..=1.0).contains(&f));
        }
    }
}

//! Layout search: pick the sort dimension and per-grid-dimension column
//! counts that minimize average predicted query time over a sampled,
//! flattened workload.
//!
//! The search samples the data and the queries once, orders dimensions
//! by average selectivity, then tries every dimension as the sort
//! dimension. For each choice it descends on the column counts; cost
//! evaluations never build an index — statistics come from the sample
//! and the rectangle arithmetic. Column counts are discrete, so the
//! descent is coordinate-wise with halving/doubling probes plus a
//! final +/-1 pass, restarted from a few perturbed starting points.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{LayoutEvaluator, SampledTable, WeightModel};
use crate::error::{Error, Result};
use crate::grid::Layout;
use crate::store::{Query, Table};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationConfig {
    pub data_sample_rate: f64,
    pub query_sample_rate: f64,
    /// Cost-evaluation budget per sort-dimension choice.
    pub max_cost_evals: usize,
    pub restarts: usize,
    /// Starting total-cell budget is rows / cell_budget_divisor.
    pub cell_budget_divisor: u64,
    pub max_total_cells: u64,
    pub seed: u64,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        OptimizationConfig {
            data_sample_rate: 0.01,
            query_sample_rate: 0.05,
            max_cost_evals: 200,
            restarts: 3,
            cell_budget_divisor: 1000,
            max_total_cells: 1 << 22,
            seed: 0xf100d,
        }
    }
}

impl OptimizationConfig {
    fn validate(&self) -> Result<()> {
        if !(self.data_sample_rate > 0.0 && self.data_sample_rate <= 1.0)
            || !(self.query_sample_rate > 0.0 && self.query_sample_rate <= 1.0)
        {
            return Err(Error::InvalidConfig("sample rates must be in (0, 1]".into()));
        }
        if self.max_cost_evals == 0 || self.restarts == 0 {
            return Err(Error::InvalidConfig("need at least one eval and restart".into()));
        }
        Ok(())
    }
}

/// A searched layout with its predicted average query time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayoutCandidate {
    pub layout: Layout,
    pub predicted_ns: f64,
}

/// Mean fraction of sample rows passing each dimension's filter,
/// averaged over the workload; an unfiltered dimension counts as 1.0.
pub fn avg_selectivity(workload: &[Query], sample: &SampledTable) -> Vec<f64> {
    let d = sample.raw.len();
    let mut sorted: Vec<Vec<u64>> = Vec::with_capacity(d);
    for attr in 0..d {
        let mut v = sample.raw[attr].clone();
        v.sort_unstable();
        sorted.push(v);
    }
    let mut sums = vec![0.0f64; d];
    for q in workload {
        for attr in 0..d {
            let frac = match q.filters.get(attr).copied().flatten() {
                None => 1.0,
                Some((lo, hi)) => {
                    let col = &sorted[attr];
                    let pass = col.partition_point(|&v| v <= hi) - col.partition_point(|&v| v < lo);
                    pass as f64 / col.len().max(1) as f64
                }
            };
            sums[attr] += frac;
        }
    }
    sums.iter().map(|s| s / workload.len().max(1) as f64).collect()
}

/// Stratified query sample: preserves per-type proportions when the
/// queries carry type labels, plain uniform otherwise.
pub fn sample_queries(workload: &[Query], rate: f64, seed: u64) -> Vec<Query> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = ((workload.len() as f64 * rate).round() as usize).clamp(1, workload.len());
    let has_types = workload.iter().any(|q| q.type_id.is_some());
    let mut picked: Vec<usize> = if has_types {
        let mut by_type: Vec<(Option<u32>, Vec<usize>)> = Vec::new();
        for (i, q) in workload.iter().enumerate() {
            match by_type.iter_mut().find(|(t, _)| *t == q.type_id) {
                Some((_, v)) => v.push(i),
                None => by_type.push((q.type_id, vec![i])),
            }
        }
        let mut out = Vec::new();
        for (_, mut idx) in by_type {
            let share = ((idx.len() as f64 * rate).round() as usize).max(1);
            use rand::seq::SliceRandom;
            idx.shuffle(&mut rng);
            out.extend(idx.into_iter().take(share));
        }
        out
    } else {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..workload.len()).collect();
        idx.shuffle(&mut rng);
        idx.into_iter().take(target).collect()
    };
    picked.sort_unstable();
    picked.iter().map(|&i| workload[i].clone()).collect()
}

/// Outcome of one column-count descent.
#[derive(Debug, Clone)]
pub struct DescentResult {
    pub counts: Vec<u64>,
    pub cost: f64,
    pub evals: usize,
    /// Costs of accepted iterates, in order; non-increasing.
    pub trace: Vec<f64>,
}

/// Coordinate descent over integer column counts against an arbitrary
/// cost function. Probes halve/double each coordinate until no move
/// helps, then refines by +/-1 steps; restarts perturb the start point.
pub fn descend_columns<C: FnMut(&[u64]) -> f64>(
    init: &[u64],
    max_per_dim: u64,
    max_total: u64,
    max_evals: usize,
    restarts: usize,
    rng: &mut ChaCha8Rng,
    mut cost: C,
) -> DescentResult {
    let g = init.len();
    let mut memo: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut evals = 0usize;
    let mut trace = Vec::new();
    let clamp = |counts: &mut Vec<u64>| {
        for c in counts.iter_mut() {
            *c = (*c).clamp(1, max_per_dim);
        }
        // Scale down proportionally while over the total-cell cap.
        loop {
            let total: u128 = counts.iter().map(|&c| c as u128).product();
            if total <= max_total as u128 {
                break;
            }
            let Some(c) = counts.iter_mut().max() else { break };
            if *c == 1 {
                break;
            }
            *c /= 2;
        }
    };
    let mut eval = |counts: &Vec<u64>, memo: &mut HashMap<Vec<u64>, f64>, evals: &mut usize| -> f64 {
        if let Some(&c) = memo.get(counts) {
            return c;
        }
        *evals += 1;
        let c = cost(counts);
        memo.insert(counts.clone(), c);
        c
    };

    let mut best_counts = init.to_vec();
    clamp(&mut best_counts);
    let mut best_cost = eval(&best_counts, &mut memo, &mut evals);
    trace.push(best_cost);

    for restart in 0..restarts {
        let mut current = if restart == 0 {
            best_counts.clone()
        } else {
            let mut c: Vec<u64> = init
                .iter()
                .map(|&v| {
                    let factor = 2f64.powf(rng.gen_range(-1.5..1.5));
                    ((v as f64 * factor).round() as u64).max(1)
                })
                .collect();
            clamp(&mut c);
            c
        };
        let mut current_cost = eval(&current, &mut memo, &mut evals);
        if current_cost < best_cost {
            best_cost = current_cost;
            best_counts = current.clone();
            trace.push(best_cost);
        }
        // Multiplicative sweeps, then unit refinement.
        for phase in 0..2 {
            loop {
                let mut improved = false;
                for dim in 0..g {
                    let candidates: [i64; 2] = if phase == 0 {
                        [-(current[dim] as i64) / 2, current[dim] as i64]
                    } else {
                        [-1, 1]
                    };
                    for delta in candidates {
                        if evals >= max_evals {
                            break;
                        }
                        let cand_val = current[dim] as i64 + delta;
                        if cand_val < 1 {
                            continue;
                        }
                        let mut cand = current.clone();
                        cand[dim] = cand_val as u64;
                        clamp(&mut cand);
                        if cand == current {
                            continue;
                        }
                        let c = eval(&cand, &mut memo, &mut evals);
                        if c < current_cost {
                            current = cand;
                            current_cost = c;
                            improved = true;
                            if current_cost < best_cost {
                                best_cost = current_cost;
                                best_counts = current.clone();
                            }
                            trace.push(current_cost.min(best_cost));
                        }
                    }
                    if evals >= max_evals {
                        break;
                    }
                }
                if !improved || evals >= max_evals {
                    break;
                }
            }
            if evals >= max_evals {
                break;
            }
        }
        if evals >= max_evals {
            break;
        }
    }
    DescentResult {
        counts: best_counts,
        cost: best_cost,
        evals,
        trace,
    }
}

/// Search for the lowest-predicted-cost layout over every choice of
/// sort dimension.
pub fn find_optimal_layout(
    table: &Table,
    workload: &[Query],
    model: &WeightModel,
    cfg: &OptimizationConfig,
) -> Result<LayoutCandidate> {
    if workload.is_empty() {
        return Err(Error::EmptyWorkload);
    }
    cfg.validate()?;
    let d = table.attr_count();
    let sample = SampledTable::sample(table, cfg.data_sample_rate, cfg.seed);
    let query_sample = sample_queries(workload, cfg.query_sample_rate, cfg.seed ^ 0x9e37);

    // Most selective first: the dimension that admits the smallest
    // fraction of rows gets the highest grid priority.
    let selectivity = avg_selectivity(&query_sample, &sample);
    let mut dims: Vec<usize> = (0..d).collect();
    dims.sort_by(|&a, &b| selectivity[a].total_cmp(&selectivity[b]).then(a.cmp(&b)));

    if d == 1 {
        return Ok(LayoutCandidate {
            layout: Layout::new(vec![0], Vec::new(), true),
            predicted_ns: average_predicted_cost(
                &sample,
                &Layout::new(vec![0], Vec::new(), true),
                &query_sample,
                model,
            ),
        });
    }

    let budget = (table.row_count() as u64 / cfg.cell_budget_divisor).max(1);
    let mut best: Option<LayoutCandidate> = None;
    for (choice, &sort_dim) in dims.iter().enumerate() {
        let grid_dims: Vec<usize> = dims.iter().copied().filter(|&x| x != sort_dim).collect();
        let mut ordering = grid_dims.clone();
        ordering.push(sort_dim);

        // Start with columns proportional to inverse selectivity,
        // normalized to the cell budget.
        let weights: Vec<f64> = grid_dims
            .iter()
            .map(|&a| 1.0 / selectivity[a].max(1e-3))
            .collect();
        let wprod: f64 = weights.iter().product();
        let t = (budget as f64 / wprod).powf(1.0 / grid_dims.len() as f64);
        let init: Vec<u64> = weights
            .iter()
            .map(|w| ((w * t).round() as u64).max(1))
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(choice as u64));
        let result = descend_columns(
            &init,
            table.row_count().max(1) as u64,
            cfg.max_total_cells,
            cfg.max_cost_evals,
            cfg.restarts,
            &mut rng,
            |counts| {
                let layout = Layout::new(ordering.clone(), counts.to_vec(), true);
                average_predicted_cost(&sample, &layout, &query_sample, model)
            },
        );
        // The single-cell layout (plain sort by this dimension) is the
        // trivial fallback; never return anything predicted to be worse.
        let trivial_counts = vec![1u64; grid_dims.len()];
        let trivial_layout = Layout::new(ordering.clone(), trivial_counts.clone(), true);
        let trivial_cost = average_predicted_cost(&sample, &trivial_layout, &query_sample, model);
        let (counts, cost) = if trivial_cost < result.cost {
            (trivial_counts, trivial_cost)
        } else {
            (result.counts, result.cost)
        };
        let candidate = LayoutCandidate {
            layout: Layout::new(ordering, counts, true),
            predicted_ns: cost,
        };
        if best.as_ref().map_or(true, |b| candidate.predicted_ns < b.predicted_ns) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one sort-dimension candidate"))
}

/// Mean predicted query time of a layout over a query sample.
pub fn average_predicted_cost(
    sample: &SampledTable,
    layout: &Layout,
    queries: &[Query],
    model: &WeightModel,
) -> f64 {
    let evaluator = LayoutEvaluator::new(sample, layout);
    let mut total = 0.0;
    for q in queries {
        let stats = evaluator.estimate(q);
        total += model.predict_ns(&stats);
    }
    total / queries.len().max(1) as f64
}

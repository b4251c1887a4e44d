//! Synthetic dataset and query-workload generation, plus the JSON-lines
//! workload format. Everything is a pure function of (spec, seed).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, LogNormal, Normal, Zipf};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::store::{AggregateKind, Attribute, Query, Table};

/// Per-dimension value distribution. `Correlated` copies an earlier
/// dimension plus uniform noise in `[0, noise]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueDistribution {
    Uniform { lo: u64, hi: u64 },
    Gaussian { mean: f64, std: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Zipf { s: f64, k: u64 },
    Correlated { source: usize, noise: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub rows: usize,
    pub distributions: Vec<ValueDistribution>,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn dims(&self) -> usize {
        self.distributions.len()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Deterministically generate a table from a dataset spec. Values are
/// quantized to integers at generation.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Table> {
    if spec.rows == 0 || spec.distributions.is_empty() {
        return Err(Error::InvalidConfig("dataset needs rows and dimensions".into()));
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim_seeds: Vec<u64> = (0..spec.dims()).map(|_| seeder.gen()).collect();
    let mut columns: Vec<Vec<u64>> = Vec::with_capacity(spec.dims());
    for (dim, dist) in spec.distributions.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(dim_seeds[dim]);
        let column = match dist {
            ValueDistribution::Uniform { lo, hi } => {
                if lo >= hi {
                    return Err(Error::InvalidConfig(format!("uniform needs lo < hi in dim {dim}")));
                }
                (0..spec.rows).map(|_| rng.gen_range(*lo..*hi)).collect()
            }
            ValueDistribution::Gaussian { mean, std } => {
                let d = Normal::new(*mean, *std)
                    .map_err(|e| Error::InvalidConfig(format!("dim {dim}: {e}")))?;
                (0..spec.rows)
                    .map(|_| d.sample(&mut rng).round().max(0.0).min(u64::MAX as f64) as u64)
                    .collect()
            }
            ValueDistribution::Lognormal { mu, sigma } => {
                let d = LogNormal::new(*mu, *sigma)
                    .map_err(|e| Error::InvalidConfig(format!("dim {dim}: {e}")))?;
                (0..spec.rows)
                    .map(|_| d.sample(&mut rng).round().min(u64::MAX as f64) as u64)
                    .collect()
            }
            ValueDistribution::Zipf { s, k } => {
                let d = Zipf::new(*k, *s)
                    .map_err(|e| Error::InvalidConfig(format!("dim {dim}: {e}")))?;
                (0..spec.rows).map(|_| d.sample(&mut rng) as u64 - 1).collect()
            }
            ValueDistribution::Correlated { source, noise } => {
                if *source >= dim {
                    return Err(Error::InvalidConfig(format!(
                        "dim {dim} correlates with dim {source}, which must come first"
                    )));
                }
                let base = &columns[*source];
                base.iter()
                    .map(|&v| v.saturating_add(rng.gen_range(0..=*noise)))
                    .collect()
            }
        };
        columns.push(column);
    }
    let attrs = (0..spec.dims())
        .map(|i| Attribute::int(format!("d{i}")))
        .collect();
    Ok(Table::from_columns(attrs, columns))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Range,
    Equality,
}

/// One query shape: which dimensions it filters and how, plus the
/// aggregation and its share of the workload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryType {
    pub dims: Vec<usize>,
    #[serde(default)]
    pub kinds: Vec<FilterKind>,
    /// Overall selectivity target for the conjunction.
    pub selectivity: f64,
    #[serde(default = "default_agg")]
    pub agg: AggregateKind,
    #[serde(default)]
    pub agg_attr: Option<usize>,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_agg() -> AggregateKind {
    AggregateKind::Count
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub queries: usize,
    pub types: Vec<QueryType>,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Generate queries against the empirical quantiles of `table`.
///
/// A type filtering `k` dimensions with overall target `s` gives each
/// range dimension selectivity `s^(1/k)` under independence; equality
/// dimensions take a present value and the range dimensions share the
/// remaining budget.
pub fn generate_workload(spec: &WorkloadSpec, table: &Table) -> Result<Vec<Query>> {
    if spec.queries == 0 || spec.types.is_empty() {
        return Err(Error::InvalidConfig("workload needs queries and types".into()));
    }
    let d = table.attr_count();
    let n = table.row_count();
    for (i, ty) in spec.types.iter().enumerate() {
        if ty.dims.is_empty() {
            return Err(Error::InvalidConfig(format!("type {i} filters no dimensions")));
        }
        if ty.dims.iter().any(|&a| a >= d) {
            return Err(Error::InvalidConfig(format!("type {i} names a missing attribute")));
        }
        if !ty.kinds.is_empty() && ty.kinds.len() != ty.dims.len() {
            return Err(Error::InvalidConfig(format!(
                "type {i}: {} kinds for {} dims",
                ty.kinds.len(),
                ty.dims.len()
            )));
        }
        if ty.selectivity <= 0.0 || ty.selectivity > 1.0 {
            return Err(Error::InvalidConfig(format!("type {i}: bad selectivity")));
        }
        if ty.agg == AggregateKind::Sum && ty.agg_attr.map_or(true, |a| a >= d) {
            return Err(Error::MissingAggregateAttribute);
        }
    }
    let mut sorted: Vec<Vec<u64>> = Vec::with_capacity(d);
    for attr in 0..d {
        let mut v: Vec<u64> = table.column(attr).iter().collect();
        v.sort_unstable();
        sorted.push(v);
    }
    let weights: Vec<f64> = spec.types.iter().map(|t| t.weight.max(0.0)).collect();
    let total_weight: f64 = weights.iter().sum();
    if total_weight <= 0.0 {
        return Err(Error::InvalidConfig("type weights sum to zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut queries = Vec::with_capacity(spec.queries);
    for _ in 0..spec.queries {
        let mut pick = rng.gen_range(0.0..total_weight);
        let mut type_id = 0usize;
        for (i, w) in weights.iter().enumerate() {
            if pick < *w {
                type_id = i;
                break;
            }
            pick -= w;
        }
        let ty = &spec.types[type_id];
        let mut q = Query {
            filters: vec![None; d],
            agg: ty.agg,
            agg_attr: ty.agg_attr,
            type_id: Some(type_id as u32),
        };
        // Equality filters bind first so the range dimensions can split
        // whatever budget remains.
        let kinds: Vec<FilterKind> = if ty.kinds.is_empty() {
            vec![FilterKind::Range; ty.dims.len()]
        } else {
            ty.kinds.clone()
        };
        let mut eq_fraction = 1.0f64;
        for (&attr, kind) in ty.dims.iter().zip(&kinds) {
            if *kind == FilterKind::Equality {
                let v = sorted[attr][rng.gen_range(0..n)];
                q.filters[attr] = Some((v, v));
                let count = sorted[attr].partition_point(|&x| x <= v)
                    - sorted[attr].partition_point(|&x| x < v);
                eq_fraction *= count as f64 / n as f64;
            }
        }
        let range_dims: Vec<usize> = ty
            .dims
            .iter()
            .zip(&kinds)
            .filter(|(_, k)| **k == FilterKind::Range)
            .map(|(&a, _)| a)
            .collect();
        if !range_dims.is_empty() {
            let budget = (ty.selectivity / eq_fraction.max(1e-12)).min(1.0);
            let per_dim = budget.powf(1.0 / range_dims.len() as f64).min(1.0);
            for &attr in &range_dims {
                let col = &sorted[attr];
                let start = rng.gen_range(0.0..(1.0 - per_dim).max(f64::MIN_POSITIVE));
                let lo_idx = (start * (n - 1) as f64).round() as usize;
                let hi_idx = (((start + per_dim) * (n - 1) as f64).round() as usize).min(n - 1);
                let lo = col[lo_idx.min(hi_idx)];
                let hi = col[hi_idx];
                q.filters[attr] = Some((lo, hi.max(lo)));
            }
        }
        queries.push(q);
    }
    Ok(queries)
}

/// Deterministic stratified split into disjoint halves.
pub fn split_train_test(workload: &[Query], seed: u64) -> Result<(Vec<Query>, Vec<Query>)> {
    if workload.len() < 2 {
        return Err(Error::InvalidConfig("need at least two queries to split".into()));
    }
    let mut by_type: Vec<(Option<u32>, Vec<usize>)> = Vec::new();
    for (i, q) in workload.iter().enumerate() {
        match by_type.iter_mut().find(|(t, _)| *t == q.type_id) {
            Some((_, v)) => v.push(i),
            None => by_type.push((q.type_id, vec![i])),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (_, mut idx) in by_type {
        idx.shuffle(&mut rng);
        for (i, q) in idx.into_iter().enumerate() {
            if i % 2 == 0 {
                train_idx.push(q);
            } else {
                test_idx.push(q);
            }
        }
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((
        train_idx.iter().map(|&i| workload[i].clone()).collect(),
        test_idx.iter().map(|&i| workload[i].clone()).collect(),
    ))
}

/// One query as a JSON object keyed by attribute names:
/// `{"filters": {"d0": [lo, hi]}, "agg": "count", "agg_attr": "d1"}`.
pub fn query_to_json(q: &Query, table: &Table) -> serde_json::Value {
    let mut filters = serde_json::Map::new();
    for (attr, f) in q.filters.iter().enumerate() {
        if let Some((lo, hi)) = f {
            filters.insert(table.attrs()[attr].name.clone(), json!([lo, hi]));
        }
    }
    let mut obj = serde_json::Map::new();
    obj.insert("filters".into(), serde_json::Value::Object(filters));
    obj.insert(
        "agg".into(),
        json!(match q.agg {
            AggregateKind::Count => "count",
            AggregateKind::Sum => "sum",
        }),
    );
    if let Some(attr) = q.agg_attr {
        obj.insert("agg_attr".into(), json!(table.attrs()[attr].name));
    }
    if let Some(t) = q.type_id {
        obj.insert("type".into(), json!(t));
    }
    serde_json::Value::Object(obj)
}

pub fn query_from_json(value: &serde_json::Value, table: &Table) -> Result<Query> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Format("query must be a JSON object".into()))?;
    let mut q = Query {
        filters: vec![None; table.attr_count()],
        agg: AggregateKind::Count,
        agg_attr: None,
        type_id: None,
    };
    if let Some(filters) = obj.get("filters").and_then(|f| f.as_object()) {
        for (name, range) in filters {
            let attr = table
                .attr_index(name)
                .ok_or_else(|| Error::UnknownAttribute(name.clone()))?;
            let pair = range
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| Error::Format(format!("filter {name} needs [lo, hi]")))?;
            let lo = pair[0]
                .as_u64()
                .ok_or_else(|| Error::Format(format!("filter {name}: lo not a u64")))?;
            let hi = pair[1]
                .as_u64()
                .ok_or_else(|| Error::Format(format!("filter {name}: hi not a u64")))?;
            if lo > hi {
                return Err(Error::Format(format!("filter {name}: lo > hi")));
            }
            q.filters[attr] = Some((lo, hi));
        }
    }
    match obj.get("agg").and_then(|a| a.as_str()).unwrap_or("count") {
        "count" => q.agg = AggregateKind::Count,
        "sum" => q.agg = AggregateKind::Sum,
        other => return Err(Error::Format(format!("unknown aggregation {other:?}"))),
    }
    if let Some(name) = obj.get("agg_attr").and_then(|a| a.as_str()) {
        q.agg_attr = Some(
            table
                .attr_index(name)
                .ok_or_else(|| Error::UnknownAttribute(name.to_string()))?,
        );
    }
    if let Some(t) = obj.get("type").and_then(|t| t.as_u64()) {
        q.type_id = Some(t as u32);
    }
    Ok(q)
}

/// Write a workload as JSON lines.
pub fn write_workload(path: &Path, queries: &[Query], table: &Table) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for q in queries {
        serde_json::to_writer(&mut w, &query_to_json(q, table))?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_workload(path: &Path, table: &Table) -> Result<Vec<Query>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut queries = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)?;
        queries.push(query_from_json(&value, table)?);
    }
    Ok(queries)
}

#[cfg(test)]
mod tests;

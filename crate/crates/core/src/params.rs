//! Noised Dirichlet-multinomial conditional probability tables.
//!
//! Tables are learned lazily: the first request for a parent configuration
//! counts matching records in D_P, adds Laplace noise drawn from an RNG seeded
//! by a hash of the configuration and the model seed, and caches the
//! posterior. The same key therefore yields bit-identical tables in every
//! worker and every run.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, OnceLock, RwLock};

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Schema};
use crate::noise::{laplace_scale, rng_from_seed, sample_laplace, Fnv1a};
use crate::structure::DependencyGraph;
use crate::{Error, Result};

/// Attribute index plus the bucketized values of its parents, ordered by
/// parent index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfigurationKey {
    pub attr: usize,
    pub parents: Vec<u32>,
}

impl ConfigurationKey {
    pub fn new(attr: usize, parents: Vec<u32>) -> Self {
        ConfigurationKey { attr, parents }
    }

    /// Key of `attr` under the parent configuration found in `record`.
    pub fn from_record(schema: &Schema, graph: &DependencyGraph, attr: usize, record: &[u32]) -> Self {
        let parents = graph
            .parents(attr)
            .iter()
            .map(|&j| schema.bucketize(j, record[j]))
            .collect();
        ConfigurationKey { attr, parents }
    }

    /// Seed of the noise stream for this key.
    pub fn stable_hash(&self, model_seed: u64) -> u64 {
        let mut h = Fnv1a::default();
        h.write_u32(self.attr as u32);
        for &b in &self.parents {
            h.write_u32(b);
        }
        h.write_u64(model_seed);
        h.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    pub key: ConfigurationKey,
    pub alpha: Vec<f64>,
    pub noisy_counts: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ConditionalTable {
    #[inline]
    pub fn prob(&self, value: u32) -> f64 {
        self.probs[value as usize]
    }

    /// Inverse-CDF draw of a value index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (l, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = l;
            }
            acc += p;
            if u < acc {
                return l as u32;
            }
        }
        // rounding left u above the final partial sum
        last_positive as u32
    }
}

/// Laplace noise `Lap(1/eps_p)` on every component, floored at zero.
pub fn noisy_count_vector<R: Rng + ?Sized>(n: &[u64], eps_p: f64, rng: &mut R) -> Result<Vec<f64>> {
    let scale = laplace_scale("eps_p", 1.0, eps_p)?;
    Ok(n.iter()
        .map(|&c| (c as f64 + sample_laplace(scale, rng)).max(0.0))
        .collect())
}

/// Posterior mean `(alpha_l + n_l) / (sum alpha + sum n)`.
pub fn posterior_probs(alpha: &[f64], noisy_counts: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != noisy_counts.len() {
        return Err(Error::param("alpha", "length differs from the count vector"));
    }
    if alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::param("alpha", "hyper-parameters must be positive and finite"));
    }
    let total: f64 = alpha.iter().sum::<f64>() + noisy_counts.iter().sum::<f64>();
    Ok(alpha
        .iter()
        .zip(noisy_counts)
        .map(|(a, n)| (a + n) / total)
        .collect())
}

/// One draw from Dirichlet(`concentration`) through normalized Gamma draws.
pub fn sample_dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if concentration.is_empty() {
        return Err(Error::param("concentration", "empty parameter vector"));
    }
    let mut draws = concentration
        .iter()
        .map(|&a| {
            let g = Gamma::new(a, 1.0)
                .map_err(|_| Error::param("concentration", format!("parameter must be positive, got {a}")))?;
            Ok(g.sample(rng))
        })
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = draws.iter().sum();
    if !(total > 0.0) {
        // every Gamma draw underflowed; the largest parameter takes the mass
        let top = concentration
            .iter()
            .enumerate()
            .fold(0, |best, (i, &a)| if a > concentration[best] { i } else { best });
        draws.iter_mut().for_each(|d| *d = 0.0);
        draws[top] = 1.0;
        return Ok(draws);
    }
    draws.iter_mut().for_each(|d| *d /= total);
    Ok(draws)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Posterior-mean tables.
    #[default]
    PosteriorMean,
    /// One Dirichlet draw per configuration from the key's noise stream.
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Uniform Dirichlet hyper-parameter.
    pub alpha: f64,
    pub eps_p: f64,
    pub model_seed: u64,
    pub sampling: Sampling,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            alpha: 1.0,
            eps_p: f64::INFINITY,
            model_seed: 0,
            sampling: Sampling::PosteriorMean,
        }
    }
}

type CountIndex = HashMap<Vec<u32>, Vec<u64>>;

enum TableSource {
    Learned {
        d_p: Arc<Dataset>,
        params: ModelParams,
        // per-attribute counts of every configuration present in D_P
        index: Vec<OnceLock<CountIndex>>,
    },
    Fixed {
        tables: HashMap<ConfigurationKey, Vec<f64>>,
        marginals: HashMap<usize, Vec<f64>>,
    },
}

/// Bayesian-network model: a dependency graph plus lazily materialized
/// conditional tables.
pub struct GenerativeModel {
    schema: Arc<Schema>,
    graph: DependencyGraph,
    source: TableSource,
    cache: Vec<RwLock<HashMap<Vec<u32>, Arc<ConditionalTable>>>>,
    marginals: Vec<OnceLock<Arc<ConditionalTable>>>,
}

impl std::fmt::Debug for GenerativeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GenerativeModel")
            .field("graph", &self.graph)
            .field("cached_tables", &self.cached_table_count())
            .finish_non_exhaustive()
    }
}

impl GenerativeModel {
    /// Model whose tables are learned from `d_p` on demand.
    pub fn learned(graph: DependencyGraph, d_p: Arc<Dataset>, params: ModelParams) -> Result<Self> {
        if !(params.alpha > 0.0 && params.alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be positive and finite, got {}", params.alpha)));
        }
        laplace_scale("eps_p", 1.0, params.eps_p)?;
        let schema = d_p.schema().clone();
        let m = schema.len();
        Self::check_graph(&schema, &graph)?;
        Ok(GenerativeModel {
            schema,
            graph,
            source: TableSource::Learned {
                d_p,
                params,
                index: (0..m).map(|_| OnceLock::new()).collect(),
            },
            cache: (0..m).map(|_| RwLock::default()).collect(),
            marginals: (0..m).map(|_| OnceLock::new()).collect(),
        })
    }

    /// Model with explicitly given tables. Requests for keys that were not
    /// supplied fail with [`Error::InvalidKey`]. Marginals default to the
    /// conditional table of parentless attributes.
    pub fn fixed(
        schema: Arc<Schema>,
        graph: DependencyGraph,
        tables: impl IntoIterator<Item = (ConfigurationKey, Vec<f64>)>,
        marginals: impl IntoIterator<Item = (usize, Vec<f64>)>,
    ) -> Result<Self> {
        Self::check_graph(&schema, &graph)?;
        let m = schema.len();
        let mut by_key = HashMap::new();
        for (key, probs) in tables {
            Self::check_key(&schema, &graph, &key)?;
            Self::check_probs(&schema, key.attr, &probs)?;
            by_key.insert(key, probs);
        }
        let mut by_attr = HashMap::new();
        for (attr, probs) in marginals {
            if attr >= m {
                return Err(Error::InvalidKey {
                    attr,
                    message: "attribute out of range".into(),
                });
            }
            Self::check_probs(&schema, attr, &probs)?;
            by_attr.insert(attr, probs);
        }
        Ok(GenerativeModel {
            schema,
            graph,
            source: TableSource::Fixed {
                tables: by_key,
                marginals: by_attr,
            },
            cache: (0..m).map(|_| RwLock::default()).collect(),
            marginals: (0..m).map(|_| OnceLock::new()).collect(),
        })
    }

    fn check_graph(schema: &Schema, graph: &DependencyGraph) -> Result<()> {
        if graph.attribute_count() != schema.len() {
            return Err(Error::Inconsistent(format!(
                "graph has {} attributes, schema has {}",
                graph.attribute_count(),
                schema.len()
            )));
        }
        graph.validate()
    }

    fn check_probs(schema: &Schema, attr: usize, probs: &[f64]) -> Result<()> {
        let sum: f64 = probs.iter().sum();
        if probs.len() != schema.cardinality(attr) || probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidKey {
                attr,
                message: format!("table {probs:?} is not a distribution over {} values", schema.cardinality(attr)),
            });
        }
        Ok(())
    }

    fn check_key(schema: &Schema, graph: &DependencyGraph, key: &ConfigurationKey) -> Result<()> {
        let invalid = |message: String| Error::InvalidKey { attr: key.attr, message };
        if key.attr >= schema.len() {
            return Err(invalid("attribute out of range".into()));
        }
        let parents = graph.parents(key.attr);
        if parents.len() != key.parents.len() {
            return Err(invalid(format!(
                "expected {} parent values, got {}",
                parents.len(),
                key.parents.len()
            )));
        }
        for (&j, &b) in parents.iter().zip(&key.parents) {
            if b as usize >= schema.bucket_count(j) {
                return Err(invalid(format!("bucket {b} out of range for parent {j}")));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn graph(&self) -> &DependencyGraph {
        &self.graph
    }

    /// Conditional table of `key`, learning and caching it on first use.
    pub fn get_table(&self, key: &ConfigurationKey) -> Result<Arc<ConditionalTable>> {
        if key.attr >= self.schema.len() {
            return Err(Error::InvalidKey {
                attr: key.attr,
                message: "attribute out of range".into(),
            });
        }
        let slot = &self.cache[key.attr];
        if let Some(t) = slot.read().expect("table cache poisoned").get(&key.parents) {
            return Ok(t.clone());
        }
        Self::check_key(&self.schema, &self.graph, key)?;
        let table = Arc::new(self.build_table(key)?);
        let mut w = slot.write().expect("table cache poisoned");
        // another worker may have inserted the identical table meanwhile
        Ok(w.entry(key.parents.clone()).or_insert(table).clone())
    }

    /// Table of `attr` under the parent configuration of `record`.
    pub fn conditional(&self, attr: usize, record: &[u32]) -> Result<Arc<ConditionalTable>> {
        self.get_table(&ConfigurationKey::from_record(&self.schema, &self.graph, attr, record))
    }

    /// Noised marginal distribution of `attr`. For parentless attributes this
    /// is the same table as the conditional one.
    pub fn marginal(&self, attr: usize) -> Result<Arc<ConditionalTable>> {
        if attr >= self.schema.len() {
            return Err(Error::InvalidKey {
                attr,
                message: "attribute out of range".into(),
            });
        }
        if self.graph.parents(attr).is_empty() {
            if let TableSource::Learned { .. } = self.source {
                return self.get_table(&ConfigurationKey::new(attr, Vec::new()));
            }
        }
        if let Some(t) = self.marginals[attr].get() {
            return Ok(t.clone());
        }
        let key = ConfigurationKey::new(attr, Vec::new());
        let table = match &self.source {
            TableSource::Learned { d_p, params, .. } => {
                let mut counts = vec![0u64; self.schema.cardinality(attr)];
                for r in d_p.records() {
                    counts[r[attr] as usize] += 1;
                }
                let mut h = Fnv1a::default();
                h.write_u32(attr as u32);
                h.write_u32(u32::MAX);
                h.write_u64(params.model_seed);
                noised_table(key, &counts, params, h.finish())?
            }
            TableSource::Fixed { tables, marginals } => {
                let probs = marginals
                    .get(&attr)
                    .or_else(|| {
                        if self.graph.parents(attr).is_empty() {
                            tables.get(&key)
                        } else {
                            None
                        }
                    })
                    .ok_or_else(|| Error::InvalidKey {
                        attr,
                        message: "no marginal table supplied".into(),
                    })?;
                fixed_table(key, probs)
            }
        };
        Ok(self.marginals[attr].get_or_init(|| Arc::new(table)).clone())
    }

    fn build_table(&self, key: &ConfigurationKey) -> Result<ConditionalTable> {
        match &self.source {
            TableSource::Learned { params, .. } => {
                let counts = self.indexed_counts(key);
                noised_table(key.clone(), &counts, params, key.stable_hash(params.model_seed))
            }
            TableSource::Fixed { tables, .. } => tables
                .get(key)
                .map(|p| fixed_table(key.clone(), p))
                .ok_or_else(|| Error::InvalidKey {
                    attr: key.attr,
                    message: format!("no table supplied for parent configuration {:?}", key.parents),
                }),
        }
    }

    fn indexed_counts(&self, key: &ConfigurationKey) -> Vec<u64> {
        let TableSource::Learned { d_p, index, .. } = &self.source else {
            unreachable!("counts requested from a fixed model")
        };
        let attr = key.attr;
        let idx = index[attr].get_or_init(|| {
            let card = self.schema.cardinality(attr);
            let mut map: CountIndex = HashMap::new();
            for r in d_p.records() {
                let k = ConfigurationKey::from_record(&self.schema, &self.graph, attr, r).parents;
                map.entry(k).or_insert_with(|| vec![0; card])[r[attr] as usize] += 1;
            }
            map
        });
        idx.get(&key.parents)
            .cloned()
            .unwrap_or_else(|| vec![0; self.schema.cardinality(attr)])
    }

    /// Counts of each value of `key.attr` among D_P records whose
    /// bucketized parents match `key`, by direct scan.
    pub fn count_vector(&self, key: &ConfigurationKey) -> Result<Vec<u64>> {
        Self::check_key(&self.schema, &self.graph, key)?;
        match &self.source {
            TableSource::Learned { d_p, .. } => Ok(count_vector(d_p, &self.graph, key)),
            TableSource::Fixed { .. } => Err(Error::Inconsistent("fixed model has no training data".into())),
        }
    }

    pub fn cached_table_count(&self) -> usize {
        self.cache
            .iter()
            .map(|c| c.read().expect("table cache poisoned").len())
            .sum()
    }

    /// Snapshot of all cached conditional tables, sorted by key.
    pub fn cached_tables(&self) -> Vec<Arc<ConditionalTable>> {
        let mut out: Vec<_> = self
            .cache
            .iter()
            .flat_map(|c| c.read().expect("table cache poisoned").values().cloned().collect::<Vec<_>>())
            .collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        out
    }

    /// Writes every cached table as JSON.
    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let tables: Vec<ConditionalTable> = self.cached_tables().iter().map(|t| (**t).clone()).collect();
        let json = serde_json::to_vec(&tables).map_err(|e| Error::Artifact(format!("cannot encode cache: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Preloads tables written by [`save_cache`](Self::save_cache). Tables
    /// already in memory are kept. Returns how many were loaded.
    pub fn load_cache(&self, path: &Path) -> Result<usize> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let tables: Vec<ConditionalTable> = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Artifact(format!("{}: cannot decode cache: {e}", path.display())))?;
        let mut loaded = 0;
        for t in tables {
            Self::check_key(&self.schema, &self.graph, &t.key)?;
            Self::check_probs(&self.schema, t.key.attr, &t.probs)?;
            let mut w = self.cache[t.key.attr].write().expect("table cache poisoned");
            if !w.contains_key(&t.key.parents) {
                w.insert(t.key.parents.clone(), Arc::new(t));
                loaded += 1;
            }
        }
        Ok(loaded)
    }
}

fn noised_table(key: ConfigurationKey, counts: &[u64], params: &ModelParams, seed: u64) -> Result<ConditionalTable> {
    let mut rng = rng_from_seed(seed);
    let noisy_counts = noisy_count_vector(counts, params.eps_p, &mut rng)?;
    let alpha = vec![params.alpha; counts.len()];
    let probs = match params.sampling {
        Sampling::PosteriorMean => posterior_probs(&alpha, &noisy_counts)?,
        Sampling::Dirichlet => {
            let conc: Vec<f64> = alpha.iter().zip(&noisy_counts).map(|(a, n)| a + n).collect();
            sample_dirichlet(&conc, &mut rng)?
        }
    };
    Ok(ConditionalTable {
        key,
        alpha,
        noisy_counts,
        probs,
    })
}

/// An explicit table is represented as a prior equal to the probabilities
/// with zero counts.
fn fixed_table(key: ConfigurationKey, probs: &[f64]) -> ConditionalTable {
    ConditionalTable {
        key,
        alpha: probs.to_vec(),
        noisy_counts: vec![0.0; probs.len()],
        probs: probs.to_vec(),
    }
}

/// Counts of each value of `key.attr` among records of `d_p` whose
/// bucketized parent values equal `key.parents`.
pub fn count_vector(d_p: &Dataset, graph: &DependencyGraph, key: &ConfigurationKey) -> Vec<u64> {
    let schema = d_p.schema();
    let parents = graph.parents(key.attr);
    let mut counts = vec![0u64; schema.cardinality(key.attr)];
    for r in d_p.records() {
        let matches = parents
            .iter()
            .zip(&key.parents)
            .all(|(&j, &b)| schema.bucketize(j, r[j]) == b);
        if matches {
            counts[r[key.attr] as usize] += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::Record;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Binary target `1` with binary parent `0`; six records.
    fn six_records() -> (Arc<Dataset>, DependencyGraph) {
        let schema = Arc::new(Schema::from_cardinalities(&[2, 2]).unwrap());
        let rows = [[0, 0], [0, 1], [1, 0], [1, 0], [1, 1], [0, 0]];
        let d = Dataset::new(schema, rows.iter().map(|r| Record::new(r.to_vec())).collect()).unwrap();
        let g = DependencyGraph::new(vec![vec![], vec![0]]).unwrap();
        (Arc::new(d), g)
    }

    #[test]
    fn counts_by_scan_and_by_index_agree() {
        let (d, g) = six_records();
        let key = ConfigurationKey::new(1, vec![1]);
        assert_eq!(count_vector(&d, &g, &key), vec![2, 1]);
        let model = GenerativeModel::learned(g.clone(), d.clone(), ModelParams::default()).unwrap();
        assert_eq!(model.indexed_counts(&key), vec![2, 1]);
        assert_eq!(model.count_vector(&key).unwrap(), vec![2, 1]);
        // parentless attribute: full histogram
        assert_eq!(count_vector(&d, &g, &ConfigurationKey::new(0, vec![])), vec![3, 3]);
        let empty = Dataset::empty(d.schema().clone());
        assert_eq!(count_vector(&empty, &g, &key), vec![0, 0]);
    }

    #[test]
    fn one_record_changes_one_count() {
        let (d, g) = six_records();
        let five = Dataset::new(d.schema().clone(), d.records()[..5].to_vec()).unwrap();
        let keys = [
            ConfigurationKey::new(1, vec![0]),
            ConfigurationKey::new(1, vec![1]),
        ];
        // replace record 0 by every possible record
        for a in 0..2 {
            for b in 0..2 {
                let mut rows = five.records().to_vec();
                rows[0] = Record::new(vec![a, b]);
                let other = Dataset::new(d.schema().clone(), rows).unwrap();
                // removing record 0 changes exactly one component by one
                let mut removed = five.records().to_vec();
                removed.remove(0);
                let smaller = Dataset::new(d.schema().clone(), removed).unwrap();
                let diff: u64 = keys
                    .iter()
                    .map(|k| {
                        let x = count_vector(&other, &g, k);
                        let y = count_vector(&smaller, &g, k);
                        x.iter().zip(&y).map(|(p, q)| p.abs_diff(*q)).sum::<u64>()
                    })
                    .sum();
                assert_eq!(diff, 1);
            }
        }
    }

    #[test]
    fn noisy_counts_limits() {
        let mut rng = rng_from_seed(0);
        assert_eq!(noisy_count_vector(&[3, 0, 7], f64::INFINITY, &mut rng).unwrap(), vec![3.0, 0.0, 7.0]);
        assert!(noisy_count_vector(&[3], 0.0, &mut rng).is_err());
        // heavy noise: every component stays nonnegative
        for _ in 0..1000 {
            assert!(noisy_count_vector(&[0, 1], 0.01, &mut rng).unwrap().iter().all(|&c| c >= 0.0));
        }
    }

    #[test]
    fn posterior_examples() {
        let p = posterior_probs(&[1.0; 3], &[2.0, 3.0, 5.0]).unwrap();
        assert!(close(p[0], 3.0 / 13.0, 1e-15));
        assert!(close(p[1], 4.0 / 13.0, 1e-15));
        assert!(close(p[2], 6.0 / 13.0, 1e-15));
        assert_eq!(posterior_probs(&[1.0; 4], &[0.0; 4]).unwrap(), vec![0.25; 4]);
        let q = posterior_probs(&[2.0; 3], &[4.0, 6.0, 10.0]).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert!(close(*a, *b, 1e-15));
        }
        assert!(posterior_probs(&[0.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn dirichlet_examples() {
        let mut rng = rng_from_seed(4);
        let p = sample_dirichlet(&[1e9, 1e9], &mut rng).unwrap();
        assert!(close(p[0], 0.5, 1e-3) && close(p[1], 0.5, 1e-3));
        assert!(sample_dirichlet(&[1.0, 0.0], &mut rng).is_err());
        let n = 100_000;
        let mut mean = 0.0;
        for _ in 0..n {
            let p = sample_dirichlet(&[2.0, 6.0], &mut rng).unwrap();
            assert!(p.iter().all(|&x| x > 0.0));
            assert!(close(p.iter().sum(), 1.0, 1e-12));
            mean += p[0];
        }
        mean /= n as f64;
        // Beta(2,6) variance: ab / ((a+b)^2 (a+b+1))
        let sd = (12.0 / (64.0 * 9.0) / n as f64).sqrt();
        assert!((mean - 0.25).abs() < 3.0 * sd, "mean {mean}");
    }

    #[test]
    fn tables_are_deterministic_and_cached() {
        let (d, g) = six_records();
        let params = ModelParams {
            eps_p: 0.5,
            model_seed: 42,
            ..ModelParams::default()
        };
        let a = GenerativeModel::learned(g.clone(), d.clone(), params).unwrap();
        let b = GenerativeModel::learned(g, d, params).unwrap();
        let key = ConfigurationKey::new(1, vec![0]);
        let t1 = a.get_table(&key).unwrap();
        let t2 = a.get_table(&key).unwrap();
        assert!(Arc::ptr_eq(&t1, &t2));
        assert_eq!(*t1, *b.get_table(&key).unwrap());
        assert_eq!(a.cached_table_count(), 1);
        assert!(close(t1.probs.iter().sum(), 1.0, 1e-12));
    }

    #[test]
    fn unseen_configuration_falls_back_to_prior() {
        let schema = Arc::new(Schema::from_cardinalities(&[3, 3]).unwrap());
        let d = Arc::new(Dataset::new(schema, vec![Record::new(vec![0, 1])]).unwrap());
        let g = DependencyGraph::new(vec![vec![], vec![0]]).unwrap();
        let model = GenerativeModel::learned(g, d, ModelParams::default()).unwrap();
        let t = model.get_table(&ConfigurationKey::new(1, vec![2])).unwrap();
        assert_eq!(t.probs, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn invalid_keys_are_rejected() {
        let (d, g) = six_records();
        let model = GenerativeModel::learned(g, d, ModelParams::default()).unwrap();
        assert!(matches!(model.get_table(&ConfigurationKey::new(1, vec![])), Err(Error::InvalidKey { .. })));
        assert!(matches!(model.get_table(&ConfigurationKey::new(1, vec![2])), Err(Error::InvalidKey { .. })));
        assert!(matches!(model.get_table(&ConfigurationKey::new(5, vec![])), Err(Error::InvalidKey { .. })));
    }

    #[test]
    fn noiseless_tiny_alpha_matches_frequencies() {
        let (d, g) = six_records();
        let params = ModelParams {
            alpha: 1e-9,
            ..ModelParams::default()
        };
        let model = GenerativeModel::learned(g, d, params).unwrap();
        let t = model.get_table(&ConfigurationKey::new(1, vec![1])).unwrap();
        assert!(close(t.probs[0], 2.0 / 3.0, 1e-8));
        let m = model.marginal(1).unwrap();
        assert!(close(m.probs[0], 4.0 / 6.0, 1e-8));
    }

    #[test]
    fn fixed_model_serves_only_supplied_keys() {
        let schema = Arc::new(Schema::from_cardinalities(&[2, 2]).unwrap());
        let g = DependencyGraph::new(vec![vec![], vec![0]]).unwrap();
        let model = GenerativeModel::fixed(
            schema,
            g,
            [
                (ConfigurationKey::new(0, vec![]), vec![0.3, 0.7]),
                (ConfigurationKey::new(1, vec![0]), vec![1.0, 0.0]),
            ],
            [],
        )
        .unwrap();
        assert_eq!(model.get_table(&ConfigurationKey::new(1, vec![0])).unwrap().probs, vec![1.0, 0.0]);
        assert!(matches!(model.get_table(&ConfigurationKey::new(1, vec![1])), Err(Error::InvalidKey { .. })));
        assert_eq!(model.marginal(0).unwrap().probs, vec![0.3, 0.7]);
        assert!(model.marginal(1).is_err());
    }

    #[test]
    fn cache_file_round_trip() {
        let (d, g) = six_records();
        let params = ModelParams {
            eps_p: 1.0,
            model_seed: 3,
            ..ModelParams::default()
        };
        let a = GenerativeModel::learned(g.clone(), d.clone(), params).unwrap();
        a.get_table(&ConfigurationKey::new(1, vec![0])).unwrap();
        a.get_table(&ConfigurationKey::new(0, vec![])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        a.save_cache(&path).unwrap();
        let b = GenerativeModel::learned(g, d, params).unwrap();
        assert_eq!(b.load_cache(&path).unwrap(), 2);
        let ta: Vec<_> = a.cached_tables().iter().map(|t| (**t).clone()).collect();
        let tb: Vec<_> = b.cached_tables().iter().map(|t| (**t).clone()).collect();
        assert_eq!(ta, tb);
    }

    #[test]
    fn table_sampling_matches_probs() {
        let t = fixed_table(ConfigurationKey::new(0, vec![]), &[0.2, 0.0, 0.8]);
        let mut rng = rng_from_seed(8);
        let n = 100_000;
        let mut hits = [0usize; 3];
        for _ in 0..n {
            hits[t.sample(&mut rng) as usize] += 1;
        }
        assert_eq!(hits[1], 0);
        let sd = (0.2 * 0.8 / n as f64).sqrt();
        assert!((hits[0] as f64 / n as f64 - 0.2).abs() < 3.0 * sd);
    }

    proptest! {
        #[test]
        fn learned_tables_are_distributions(
            rows in prop::collection::vec((0u32..3, 0u32..4), 0..40),
            eps in 0.05f64..5.0,
            seed in any::<u64>(),
            parent in 0u32..3,
        ) {
            let schema = Arc::new(Schema::from_cardinalities(&[3, 4]).unwrap());
            let d = Arc::new(Dataset::new(schema, rows.into_iter().map(|(a, b)| Record::new(vec![a, b])).collect()).unwrap());
            let g = DependencyGraph::new(vec![vec![], vec![0]]).unwrap();
            let params = ModelParams { eps_p: eps, model_seed: seed, ..ModelParams::default() };
            let model = GenerativeModel::learned(g, d, params).unwrap();
            for key in [ConfigurationKey::new(1, vec![parent]), ConfigurationKey::new(0, vec![])] {
                let t = model.get_table(&key).unwrap();
                prop_assert!(t.probs.iter().all(|&p| p >= 0.0));
                prop_assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(t.noisy_counts.iter().all(|&c| c >= 0.0));
            }
        }
    }
}

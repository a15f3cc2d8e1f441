//! Utility measures: total variation distance between empirical attribute
//! and attribute-pair distributions, and the error of the generative model
//! when predicting one attribute from all others.
//!
//! Distributions are taken over raw values; bucketization only matters for
//! learning.

use std::io::Write;
use std::thread;

use serde::Serialize;

use crate::data::{Dataset, Record, Schema};
use crate::params::GenerativeModel;
use crate::{Error, Result};

/// `(1/2) Σ |p_l - q_l|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::param(
            "q",
            format!("support sizes differ: {} vs {}", p.len(), q.len()),
        ));
    }
    for (name, v) in [("p", p), ("q", q)] {
        let sum: f64 = v.iter().sum();
        if v.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::param(name, format!("not a probability vector (sum {sum})")));
        }
    }
    let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * d).min(1.0))
}

/// Empirical distributions of every attribute and every pair `i < j`.
/// Pair tables are flattened row-major, `a * cardinality(j) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttrDistributions {
    pub singles: Vec<Vec<f64>>,
    pub pairs: Vec<((usize, usize), Vec<f64>)>,
}

pub fn attr_distributions(d: &Dataset) -> Result<AttrDistributions> {
    if d.is_empty() {
        return Err(Error::Dataset("cannot compute distributions of an empty dataset".into()));
    }
    let schema = d.schema();
    let m = schema.len();
    let n = d.len() as f64;
    let mut singles: Vec<Vec<u64>> = (0..m).map(|i| vec![0; schema.cardinality(i)]).collect();
    let mut pairs: Vec<((usize, usize), Vec<u64>)> = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            pairs.push(((i, j), vec![0; schema.cardinality(i) * schema.cardinality(j)]));
        }
    }
    for r in d.records() {
        for (i, &v) in r.iter().enumerate() {
            singles[i][v as usize] += 1;
        }
        for ((i, j), h) in pairs.iter_mut() {
            h[r[*i] as usize * schema.cardinality(*j) + r[*j] as usize] += 1;
        }
    }
    let norm = |h: Vec<u64>| h.into_iter().map(|c| c as f64 / n).collect::<Vec<f64>>();
    Ok(AttrDistributions {
        singles: singles.into_iter().map(norm).collect(),
        pairs: pairs.into_iter().map(|(ij, h)| (ij, norm(h))).collect(),
    })
}

/// TV distances between two datasets over the same schema.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceReport {
    pub singles: Vec<f64>,
    pub pairs: Vec<((usize, usize), f64)>,
}

impl DistanceReport {
    pub fn mean_single(&self) -> f64 {
        mean(self.singles.iter().copied())
    }

    pub fn mean_pair(&self) -> f64 {
        mean(self.pairs.iter().map(|p| p.1))
    }

    pub fn max_single(&self) -> f64 {
        self.singles.iter().copied().fold(0.0, f64::max)
    }
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    xs.sum::<f64>() / n as f64
}

fn check_same_schema(a: &Schema, b: &Schema) -> Result<()> {
    if a != b {
        return Err(Error::Schema("datasets use different schemas".into()));
    }
    Ok(())
}

pub fn distances(reference: &Dataset, candidate: &Dataset) -> Result<DistanceReport> {
    check_same_schema(reference.schema(), candidate.schema())?;
    let a = attr_distributions(reference)?;
    let b = attr_distributions(candidate)?;
    let singles = a
        .singles
        .iter()
        .zip(&b.singles)
        .map(|(p, q)| tv_distance(p, q))
        .collect::<Result<_>>()?;
    let pairs = a
        .pairs
        .iter()
        .zip(&b.pairs)
        .map(|((ij, p), (_, q))| Ok((*ij, tv_distance(p, q)?)))
        .collect::<Result<_>>()?;
    Ok(DistanceReport { singles, pairs })
}

/// Most likely value of `attr` given the rest of `record`: the argmax over
/// `v` of the attribute's own conditional times its children's conditionals,
/// with `x_attr = v`. Ties go to the smallest value.
pub fn predict(model: &GenerativeModel, record: &Record, attr: usize) -> Result<u32> {
    let children: Vec<usize> = model.graph().children(attr).collect();
    let mut r = record.values().to_vec();
    let mut best = (0u32, f64::NEG_INFINITY);
    for v in 0..model.schema().cardinality(attr) as u32 {
        r[attr] = v;
        let mut score = model.conditional(attr, &r)?.prob(v).ln();
        for &c in &children {
            score += model.conditional(c, &r)?.prob(r[c]).ln();
        }
        if score > best.1 {
            best = (v, score);
        }
    }
    Ok(best.0)
}

/// Fraction of `test` records whose value of each attribute differs from
/// the model's prediction given the other attributes.
pub fn model_error(model: &GenerativeModel, test: &Dataset) -> Result<Vec<f64>> {
    check_same_schema(model.schema(), test.schema())?;
    if test.is_empty() {
        return Err(Error::Dataset("model error needs a nonempty test set".into()));
    }
    let m = model.schema().len();
    let n = test.len() as f64;
    thread::scope(|scope| {
        let handles: Vec<_> = (0..m)
            .map(|attr| {
                scope.spawn(move || {
                    let mut wrong = 0u64;
                    for r in test.records() {
                        if predict(model, r, attr)? != r[attr] {
                            wrong += 1;
                        }
                    }
                    Ok(wrong as f64 / n)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Inconsistent("metrics worker panicked".into()))))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub attribute: String,
    pub metric: String,
    pub value: f64,
}

impl MetricRow {
    pub fn new(attribute: impl Into<String>, metric: impl Into<String>, value: f64) -> Self {
        MetricRow {
            attribute: attribute.into(),
            metric: metric.into(),
            value,
        }
    }
}

/// Rows for a distance report: one per attribute, one per pair (named
/// `a|b`), and the two means under attribute `*`.
pub fn distance_rows(schema: &Schema, report: &DistanceReport, label: &str) -> Vec<MetricRow> {
    let mut rows: Vec<MetricRow> = report
        .singles
        .iter()
        .enumerate()
        .map(|(i, &v)| MetricRow::new(schema.attribute(i).name(), format!("{label}_tv_single"), v))
        .collect();
    rows.extend(report.pairs.iter().map(|&((i, j), v)| {
        MetricRow::new(
            format!("{}|{}", schema.attribute(i).name(), schema.attribute(j).name()),
            format!("{label}_tv_pair"),
            v,
        )
    }));
    rows.push(MetricRow::new("*", format!("{label}_tv_single_mean"), report.mean_single()));
    rows.push(MetricRow::new("*", format!("{label}_tv_pair_mean"), report.mean_pair()));
    rows
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Artifact(format!("writing metrics: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("metrics output", e))?;
    Ok(())
}

//! Schema, record encoding, bucketization and dataset partitioning.
//!
//! All attributes are finite categorical: every cell is stored as the index
//! of its label in the attribute's ordered value list. Numeric attributes
//! declare their finite domain explicitly (`values = 17..96`).
//!
//! Schema files hold one `[attribute]` block per attribute:
//!
//! ```text
//! [attribute]
//! name = age
//! values = 17..96
//! bucket = width:10,origin:17
//!
//! [attribute]
//! name = sex
//! values = male, female
//! ```
//!
//! `bucket` is one of `identity` (the default), `width:<w>,origin:<o>` or
//! `explicit:<label>=<bucket>,<label>=<bucket>,...`.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kv::Document;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BucketMode {
    Identity,
    /// Half-open bins `[origin + b*width, origin + (b+1)*width)` over the
    /// numeric value of each label.
    FixedWidth { width: i64, origin: i64 },
    Explicit,
}

/// A total, surjective map from value indices to bucket indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketSpec {
    mode: BucketMode,
    assignment: Vec<u32>,
    bucket_count: u32,
}

impl BucketSpec {
    pub fn identity(cardinality: usize) -> Self {
        BucketSpec {
            mode: BucketMode::Identity,
            assignment: (0..cardinality as u32).collect(),
            bucket_count: cardinality as u32,
        }
    }

    pub fn fixed_width(values: &[String], width: i64, origin: i64) -> Result<Self> {
        if width <= 0 {
            return Err(Error::Schema(format!("bucket width must be positive, got {width}")));
        }
        let assignment = values
            .iter()
            .map(|label| {
                let v: i64 = label.parse().map_err(|_| {
                    Error::Schema(format!("fixed-width bucketizer needs integer labels, got `{label}`"))
                })?;
                if v < origin {
                    return Err(Error::Schema(format!("value {v} lies below bucket origin {origin}")));
                }
                u32::try_from((v - origin) / width)
                    .map_err(|_| Error::Schema(format!("bucket index overflow for value {v}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_assignment(BucketMode::FixedWidth { width, origin }, assignment)
    }

    pub fn explicit(assignment: Vec<u32>) -> Result<Self> {
        Self::from_assignment(BucketMode::Explicit, assignment)
    }

    fn from_assignment(mode: BucketMode, assignment: Vec<u32>) -> Result<Self> {
        let bucket_count = assignment.iter().max().map_or(0, |&b| b + 1);
        let mut used = vec![false; bucket_count as usize];
        for &b in &assignment {
            used[b as usize] = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(Error::Schema(format!("bucket {empty} has no values assigned")));
        }
        Ok(BucketSpec {
            mode,
            assignment,
            bucket_count,
        })
    }

    pub fn mode(&self) -> &BucketMode {
        &self.mode
    }

    pub fn bucket_count(&self) -> usize {
        self.bucket_count as usize
    }

    #[inline]
    pub fn bucket(&self, value: u32) -> u32 {
        self.assignment[value as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    name: String,
    values: Vec<String>,
    bucketizer: BucketSpec,
    #[serde(skip)]
    lookup: HashMap<String, u32>,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, values: Vec<String>, bucketizer: BucketSpec) -> Result<Self> {
        let name = name.into();
        if values.is_empty() {
            return Err(Error::Schema(format!("attribute `{name}` has an empty value list")));
        }
        if values.len() < 2 {
            return Err(Error::Schema(format!(
                "attribute `{name}` has cardinality {}, need at least 2",
                values.len()
            )));
        }
        if bucketizer.assignment.len() != values.len() {
            return Err(Error::Schema(format!(
                "attribute `{name}`: bucketizer covers {} values, attribute has {}",
                bucketizer.assignment.len(),
                values.len()
            )));
        }
        let mut lookup = HashMap::with_capacity(values.len());
        for (i, v) in values.iter().enumerate() {
            if v.is_empty() || v.contains(',') {
                return Err(Error::Schema(format!("attribute `{name}`: invalid label `{v}`")));
            }
            if lookup.insert(v.clone(), i as u32).is_some() {
                return Err(Error::Schema(format!("attribute `{name}`: duplicate label `{v}`")));
            }
        }
        Ok(AttributeSpec {
            name,
            values,
            bucketizer,
            lookup,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    pub fn bucketizer(&self) -> &BucketSpec {
        &self.bucketizer
    }

    pub fn bucket_count(&self) -> usize {
        self.bucketizer.bucket_count()
    }

    pub fn encode(&self, label: &str) -> Option<u32> {
        self.lookup.get(label).copied()
    }

    pub fn label(&self, value: u32) -> &str {
        &self.values[value as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    attributes: Vec<AttributeSpec>,
}

impl Schema {
    pub fn new(attributes: Vec<AttributeSpec>) -> Result<Self> {
        if attributes.len() < 2 {
            return Err(Error::Schema(format!(
                "need at least 2 attributes, got {}",
                attributes.len()
            )));
        }
        for (i, a) in attributes.iter().enumerate() {
            if attributes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Schema(format!("duplicate attribute name `{}`", a.name)));
            }
        }
        Ok(Schema { attributes })
    }

    /// Anonymous schema with attributes `a0, a1, ...` whose labels are
    /// `"0", "1", ...` and identity bucketizers.
    pub fn from_cardinalities(cardinalities: &[usize]) -> Result<Self> {
        let attributes = cardinalities
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                AttributeSpec::new(
                    format!("a{i}"),
                    (0..c).map(|v| v.to_string()).collect(),
                    BucketSpec::identity(c),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Schema::new(attributes)
    }

    pub fn parse(context: &str, text: &str) -> Result<Self> {
        let doc = Document::parse(context, text)?;
        if let Some(other) = doc.sections.iter().find(|s| s.name != "attribute") {
            return Err(doc.error(other.line, format!("unexpected section [{}]", other.name)));
        }
        let mut attributes = Vec::new();
        for section in doc.sections("attribute") {
            let name = section
                .get("name")
                .ok_or_else(|| doc.error(section.line, "attribute block without `name`"))?;
            let values_entry = section
                .get("values")
                .ok_or_else(|| doc.error(section.line, format!("attribute `{}` has no `values`", name.value)))?;
            let values = parse_values(&values_entry.value).map_err(|m| doc.error(values_entry.line, m))?;
            let bucketizer = match section.get("bucket") {
                None => BucketSpec::identity(values.len()),
                Some(entry) => parse_bucket(&entry.value, &values).map_err(|e| match e {
                    Error::Schema(m) => doc.error(entry.line, m),
                    other => other,
                })?,
            };
            for entry in &section.entries {
                if !matches!(entry.key.as_str(), "name" | "values" | "bucket") {
                    return Err(doc.error(entry.line, format!("unknown attribute key `{}`", entry.key)));
                }
            }
            attributes.push(AttributeSpec::new(name.value.clone(), values, bucketizer)?);
        }
        Schema::new(attributes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.attributes
    }

    pub fn attribute(&self, i: usize) -> &AttributeSpec {
        &self.attributes[i]
    }

    /// Number of attributes.
    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn cardinality(&self, attr: usize) -> usize {
        self.attributes[attr].cardinality()
    }

    pub fn bucket_count(&self, attr: usize) -> usize {
        self.attributes[attr].bucket_count()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    #[inline]
    pub fn bucketize(&self, attr: usize, value: u32) -> u32 {
        self.attributes[attr].bucketizer.bucket(value)
    }

    /// Number of distinct records, saturating at `u128::MAX`.
    pub fn universe_size(&self) -> u128 {
        self.attributes
            .iter()
            .fold(1u128, |acc, a| acc.saturating_mul(a.cardinality() as u128))
    }

    pub fn validate(&self, record: &Record) -> bool {
        record.len() == self.len()
            && record
                .iter()
                .zip(&self.attributes)
                .all(|(&v, a)| (v as usize) < a.cardinality())
    }

    /// Every record of the universe in lexicographic order. Intended for
    /// small schemas only.
    pub fn enumerate_universe(&self) -> Vec<Record> {
        let mut out = vec![Record::new(Vec::new())];
        for a in &self.attributes {
            out = out
                .into_iter()
                .flat_map(|r| {
                    (0..a.cardinality() as u32).map(move |v| {
                        let mut values = r.0.clone();
                        values.push(v);
                        Record::new(values)
                    })
                })
                .collect();
        }
        out
    }
}

fn parse_values(text: &str) -> std::result::Result<Vec<String>, String> {
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: i64 = lo.trim().parse().map_err(|_| format!("bad range start in `{text}`"))?;
        let hi: i64 = hi.trim().parse().map_err(|_| format!("bad range end in `{text}`"))?;
        if hi < lo {
            return Err(format!("empty range `{text}`"));
        }
        return Ok((lo..=hi).map(|v| v.to_string()).collect());
    }
    let values: Vec<String> = text
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    Ok(values)
}

fn parse_bucket(text: &str, values: &[String]) -> Result<BucketSpec> {
    let text = text.trim();
    if text == "identity" {
        return Ok(BucketSpec::identity(values.len()));
    }
    if let Some(rest) = text.strip_prefix("width:") {
        let (width, origin) = match rest.split_once(',') {
            Some((w, o)) => {
                let o = o
                    .trim()
                    .strip_prefix("origin:")
                    .ok_or_else(|| Error::Schema(format!("expected `origin:<o>` in `{text}`")))?;
                (w.trim(), o.trim())
            }
            None => return Err(Error::Schema(format!("fixed-width bucket needs an origin: `{text}`"))),
        };
        let width = width
            .parse()
            .map_err(|_| Error::Schema(format!("bad bucket width `{width}`")))?;
        let origin = origin
            .parse()
            .map_err(|_| Error::Schema(format!("bad bucket origin `{origin}`")))?;
        return BucketSpec::fixed_width(values, width, origin);
    }
    if let Some(rest) = text.strip_prefix("explicit:") {
        let mut assignment: Vec<Option<u32>> = vec![None; values.len()];
        for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (label, bucket) = pair
                .rsplit_once('=')
                .ok_or_else(|| Error::Schema(format!("expected `<label>=<bucket>`, got `{pair}`")))?;
            let label = label.trim();
            let idx = values
                .iter()
                .position(|v| v == label)
                .ok_or_else(|| Error::Schema(format!("explicit bucket for unknown label `{label}`")))?;
            let bucket: u32 = bucket
                .trim()
                .parse()
                .map_err(|_| Error::Schema(format!("bad bucket index in `{pair}`")))?;
            if assignment[idx].replace(bucket).is_some() {
                return Err(Error::Schema(format!("label `{label}` assigned twice")));
            }
        }
        let assignment = assignment
            .into_iter()
            .zip(values)
            .map(|(b, label)| b.ok_or_else(|| Error::Schema(format!("label `{label}` has no bucket"))))
            .collect::<Result<Vec<_>>>()?;
        return BucketSpec::explicit(assignment);
    }
    Err(Error::Schema(format!("unknown bucketizer `{text}`")))
}

/// One encoded row: a value index per attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Record(Vec<u32>);

impl Record {
    pub fn new(values: Vec<u32>) -> Self {
        Record(values)
    }

    pub fn values(&self) -> &[u32] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [u32] {
        &mut self.0
    }
}

impl std::ops::Deref for Record {
    type Target = [u32];
    fn deref(&self) -> &[u32] {
        &self.0
    }
}

impl From<Vec<u32>> for Record {
    fn from(values: Vec<u32>) -> Self {
        Record(values)
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<Schema>,
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(schema: Arc<Schema>, records: Vec<Record>) -> Result<Self> {
        if let Some(bad) = records.iter().position(|r| !schema.validate(r)) {
            return Err(Error::Dataset(format!("record {bad} does not conform to the schema")));
        }
        Ok(Dataset { schema, records })
    }

    pub fn empty(schema: Arc<Schema>) -> Self {
        Dataset {
            schema,
            records: Vec::new(),
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: Record) -> Result<()> {
        if !self.schema.validate(&record) {
            return Err(Error::Dataset(format!("record {record} does not conform to the schema")));
        }
        self.records.push(record);
        Ok(())
    }

    /// Reads a CSV whose header names every schema attribute exactly once,
    /// in any order. Rows with a missing or unknown cell are dropped; the
    /// number dropped is returned alongside the dataset.
    pub fn load(path: &Path, schema: Arc<Schema>) -> Result<(Self, usize)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, schema).map_err(|e| match e {
            Error::Dataset(m) => Error::Dataset(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_reader<R: std::io::Read>(reader: R, schema: Arc<Schema>) -> Result<(Self, usize)> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .quoting(false)
            .from_reader(reader);
        let header = csv
            .headers()
            .map_err(|e| Error::Dataset(format!("cannot read header: {e}")))?
            .clone();
        if header.len() != schema.len() {
            return Err(Error::Dataset(format!(
                "header has {} columns, schema has {} attributes",
                header.len(),
                schema.len()
            )));
        }
        // column c holds attribute column_attr[c]
        let mut column_attr = Vec::with_capacity(header.len());
        let mut seen = vec![false; schema.len()];
        for name in header.iter() {
            let attr = schema
                .index_of(name)
                .ok_or_else(|| Error::Dataset(format!("header column `{name}` is not in the schema")))?;
            if std::mem::replace(&mut seen[attr], true) {
                return Err(Error::Dataset(format!("header column `{name}` appears twice")));
            }
            column_attr.push(attr);
        }

        let mut records = Vec::new();
        let mut dropped = 0usize;
        let mut row = csv::StringRecord::new();
        loop {
            match csv.read_record(&mut row) {
                Ok(false) => break,
                Ok(true) => {}
                Err(e) => return Err(Error::Dataset(format!("malformed CSV: {e}"))),
            }
            if row.len() != column_attr.len() {
                dropped += 1;
                continue;
            }
            let mut values = vec![0u32; schema.len()];
            let ok = row.iter().zip(&column_attr).all(|(cell, &attr)| {
                match schema.attribute(attr).encode(cell) {
                    Some(v) => {
                        values[attr] = v;
                        true
                    }
                    None => false,
                }
            });
            if ok {
                records.push(Record(values));
            } else {
                dropped += 1;
            }
        }
        if records.is_empty() {
            return Err(Error::Dataset("no valid rows".to_string()));
        }
        Ok((Dataset { schema, records }, dropped))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_records_csv(&self.schema, self.records.iter(), out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Writes records as CSV with the schema's header and labels.
pub fn write_records_csv<'a, W: Write>(
    schema: &Schema,
    records: impl IntoIterator<Item = &'a Record>,
    out: W,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(out);
    let to_err = |e: csv::Error| Error::Dataset(format!("cannot write CSV: {e}"));
    w.write_record(schema.attributes().iter().map(|a| a.name()))
        .map_err(to_err)?;
    for r in records {
        w.write_record(r.iter().enumerate().map(|(i, &v)| schema.attribute(i).label(v)))
            .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Dataset(format!("cannot write CSV: {e}")))?;
    Ok(())
}

/// Probabilities with which each record goes to the synthesis, structure and
/// parameter subsets. Records fall in no subset with probability
/// `1 - sum`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub synthesis: f64,
    pub structure: f64,
    pub parameters: f64,
}

impl Default for Fractions {
    fn default() -> Self {
        Fractions {
            synthesis: 0.57,
            structure: 0.215,
            parameters: 0.215,
        }
    }
}

impl Fractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.synthesis, self.structure, self.parameters];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::param("fractions", format!("each fraction must lie in [0, 1], got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if sum <= 0.0 || sum > 1.0 + 1e-12 {
            return Err(Error::param("fractions", format!("fractions must sum to (0, 1], got {sum}")));
        }
        Ok(())
    }
}

/// The three disjoint subsets D_S, D_T, D_P.
#[derive(Debug, Clone)]
pub struct Partition {
    pub synthesis: Dataset,
    pub structure: Dataset,
    pub parameters: Dataset,
}

/// Assigns every record independently to one of the three subsets (or to
/// none) with the given probabilities. One uniform draw per record.
pub fn partition_dataset<R: Rng + ?Sized>(
    dataset: &Dataset,
    fractions: Fractions,
    rng: &mut R,
) -> Result<Partition> {
    fractions.validate()?;
    let schema = dataset.schema.clone();
    let mut parts = Partition {
        synthesis: Dataset::empty(schema.clone()),
        structure: Dataset::empty(schema.clone()),
        parameters: Dataset::empty(schema),
    };
    let t_s = fractions.synthesis;
    let t_t = t_s + fractions.structure;
    let t_p = t_t + fractions.parameters;
    for r in &dataset.records {
        let u: f64 = rng.random();
        let target = if u < t_s {
            &mut parts.synthesis
        } else if u < t_t {
            &mut parts.structure
        } else if u < t_p {
            &mut parts.parameters
        } else {
            continue;
        };
        target.records.push(r.clone());
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::rng_from_seed;

    fn toy_schema() -> Arc<Schema> {
        Arc::new(
            Schema::parse(
                "toy",
                "[attribute]\nname = color\nvalues = red, green, blue\n\
                 [attribute]\nname = size\nvalues = s, m\n",
            )
            .unwrap(),
        )
    }

    #[test]
    fn age_buckets_follow_ten_year_bins() {
        let values: Vec<String> = (17..=96).map(|v| v.to_string()).collect();
        let b = BucketSpec::fixed_width(&values, 10, 17).unwrap();
        assert_eq!(b.bucket_count(), 8);
        let idx = |age: i64| (age - 17) as u32;
        assert_eq!(b.bucket(idx(17)), 0);
        assert_eq!(b.bucket(idx(26)), 0);
        assert_eq!(b.bucket(idx(27)), 1);
        assert_eq!(b.bucket(idx(36)), 1);
        assert_eq!(b.bucket(idx(96)), 7);
        // enumerate: each of the 8 bins receives 10 ages
        let mut sizes = [0; 8];
        for v in 0..80 {
            sizes[b.bucket(v) as usize] += 1;
        }
        assert_eq!(sizes, [10; 8]);
    }

    #[test]
    fn hours_bucket_with_origin_zero() {
        let values: Vec<String> = (0..=99).map(|v| v.to_string()).collect();
        let b = BucketSpec::fixed_width(&values, 15, 0).unwrap();
        assert_eq!(b.bucket(44), 2);
        assert_eq!(b.bucket(14), 0);
        assert_eq!(b.bucket(15), 1);
        assert_eq!(b.bucket(45), 3);
        assert_eq!(b.bucket_count(), 7);
    }

    #[test]
    fn identity_and_explicit_buckets() {
        let s = Schema::parse(
            "t",
            "[attribute]\nname = edu\nvalues = none, hs, ba, ms\nbucket = explicit:none=0,hs=0,ba=1,ms=1\n\
             [attribute]\nname = x\nvalues = a, b, c, d\n",
        )
        .unwrap();
        assert_eq!(s.bucket_count(0), 2);
        assert_eq!(s.bucketize(0, 1), 0);
        assert_eq!(s.bucketize(0, 3), 1);
        assert_eq!(s.bucketize(1, 3), 3);
    }

    #[test]
    fn schema_errors() {
        // cardinality one
        assert!(Schema::parse("t", "[attribute]\nname=a\nvalues=x\n[attribute]\nname=b\nvalues=1,2\n").is_err());
        // empty values
        assert!(Schema::parse("t", "[attribute]\nname=a\nvalues=\n[attribute]\nname=b\nvalues=1,2\n").is_err());
        // duplicate names
        assert!(Schema::parse("t", "[attribute]\nname=a\nvalues=1,2\n[attribute]\nname=a\nvalues=1,2\n").is_err());
        // non-surjective explicit map
        assert!(Schema::parse(
            "t",
            "[attribute]\nname=a\nvalues=1,2\nbucket=explicit:1=0,2=2\n[attribute]\nname=b\nvalues=1,2\n"
        )
        .is_err());
        // single attribute
        assert!(Schema::parse("t", "[attribute]\nname=a\nvalues=1,2\n").is_err());
        // gap in fixed-width buckets
        assert!(Schema::parse(
            "t",
            "[attribute]\nname=a\nvalues=1,30\nbucket=width:10,origin:0\n[attribute]\nname=b\nvalues=1,2\n"
        )
        .is_err());
    }

    #[test]
    fn load_drops_invalid_rows() {
        let csv = "color,size\nred,s\nblue,m\npurple,s\ngreen,m\n";
        let (d, dropped) = Dataset::from_reader(csv.as_bytes(), toy_schema()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(dropped, 1);
        let missing = "color,size\nred,\nblue,m\n";
        let (d, dropped) = Dataset::from_reader(missing.as_bytes(), toy_schema()).unwrap();
        assert_eq!((d.len(), dropped), (1, 1));
    }

    #[test]
    fn load_is_column_order_insensitive() {
        let a = "color,size\nred,s\nblue,m\n";
        let b = "size,color\ns,red\nm,blue\n";
        let (da, _) = Dataset::from_reader(a.as_bytes(), toy_schema()).unwrap();
        let (db, _) = Dataset::from_reader(b.as_bytes(), toy_schema()).unwrap();
        assert_eq!(da.records(), db.records());
    }

    #[test]
    fn load_errors() {
        assert!(Dataset::from_reader("color,weight\nred,1\n".as_bytes(), toy_schema()).is_err());
        assert!(Dataset::from_reader("color\nred\n".as_bytes(), toy_schema()).is_err());
        assert!(Dataset::from_reader("color,size\npurple,s\n".as_bytes(), toy_schema()).is_err());
    }

    #[test]
    fn write_then_load_round_trip() {
        let schema = toy_schema();
        let records = vec![Record::new(vec![0, 1]), Record::new(vec![2, 0]), Record::new(vec![0, 1])];
        let d = Dataset::new(schema.clone(), records).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let (back, dropped) = Dataset::from_reader(buf.as_slice(), schema).unwrap();
        assert_eq!(dropped, 0);
        let mut a = d.records().to_vec();
        let mut b = back.records().to_vec();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn partition_all_to_synthesis() {
        let schema = Arc::new(Schema::from_cardinalities(&[2, 2]).unwrap());
        let records = (0..100).map(|i| Record::new(vec![i % 2, (i / 2) % 2])).collect();
        let d = Dataset::new(schema, records).unwrap();
        let f = Fractions {
            synthesis: 1.0,
            structure: 0.0,
            parameters: 0.0,
        };
        let p = partition_dataset(&d, f, &mut rng_from_seed(1)).unwrap();
        assert_eq!(p.synthesis.len(), 100);
        assert!(p.structure.is_empty() && p.parameters.is_empty());
    }

    #[test]
    fn partition_rejects_bad_fractions() {
        let schema = Arc::new(Schema::from_cardinalities(&[2, 2]).unwrap());
        let d = Dataset::new(schema, vec![Record::new(vec![0, 0])]).unwrap();
        let bad = Fractions {
            synthesis: 0.7,
            structure: 0.3,
            parameters: 0.1,
        };
        assert!(partition_dataset(&d, bad, &mut rng_from_seed(1)).is_err());
        let neg = Fractions {
            synthesis: -0.1,
            structure: 0.3,
            parameters: 0.1,
        };
        assert!(partition_dataset(&d, neg, &mut rng_from_seed(1)).is_err());
    }

    #[test]
    fn universe_enumeration() {
        let s = Schema::from_cardinalities(&[2, 3]).unwrap();
        let u = s.enumerate_universe();
        assert_eq!(u.len(), 6);
        assert_eq!(u[0].values(), &[0, 0]);
        assert_eq!(u[5].values(), &[1, 2]);
        assert_eq!(s.universe_size(), 6);
    }
}

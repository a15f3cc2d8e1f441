//! Run configuration, artifacts and the `pdsynth` subcommands.
//!
//! A run is described by one sectioned `key = value` file:
//!
//! ```text
//! [data]
//! schema = schema.txt          # paths are relative to the config file
//! dataset = data.csv
//! fractions = 0.57,0.215,0.215
//! seed = 1
//! out = out
//!
//! [model]
//! eps_target = 1
//! delta_target = 9.313225746154785e-10
//! maxcost = 10000
//! alpha = 1
//!
//! [privacy]
//! k = 50
//! gamma = 4
//! eps0 = 1
//! t = 10
//!
//! [generation]
//! count = 1000
//! omega = 5-11
//! workers = 4
//! ```
//!
//! All random streams are derived from the `[data]` seed, so `learn` and
//! `generate` agree on the dataset partition without storing it.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::accounting::{self, DpBudget, PerQuery, DEFAULT_DELTA};
use crate::data::{partition_dataset, write_records_csv, Dataset, Fractions, Partition, Schema};
use crate::kv::{Document, Entry};
use crate::metrics::{self, MetricRow};
use crate::noise::{derive_seed, rng_from_seed, Fnv1a};
use crate::oracle::{self, SweepConfig};
use crate::params::{GenerativeModel, ModelParams, Sampling};
use crate::privacy::{self, GenerationConfig, GenerationOutput, PrivacyParams, TestKind};
use crate::structure::{learn_structure, DependencyGraph, EntropyTable, DEFAULT_MAXCOST};
use crate::synthesis::{synthesize_marginal, OmegaRange};
use crate::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const MODEL_FILE: &str = "model.json";
pub const GRAPH_FILE: &str = "graph.txt";
pub const LEARN_META_FILE: &str = "learn_meta.txt";
pub const SYNTHETIC_FILE: &str = "synthetic.csv";
pub const MARGINAL_FILE: &str = "marginal.csv";
pub const AUDIT_FILE: &str = "audit.tsv";
pub const GENERATE_META_FILE: &str = "generate_meta.txt";
pub const TIMING_FILE: &str = "timing.txt";
pub const VERIFY_FILE: &str = "verify.txt";
pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub schema: PathBuf,
    pub dataset: PathBuf,
    pub fractions: Fractions,
    pub seed: u64,
    pub out: PathBuf,
}

/// Per-query epsilons are either solved from a target or given directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetChoice {
    Target { eps: f64, delta: f64, amplify: bool },
    Explicit(PerQuery),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub budget: BudgetChoice,
    pub maxcost: u64,
    pub alpha: f64,
    pub sampling: Sampling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyConfig {
    pub params: PrivacyParams,
    pub kind: TestKind,
    /// `t` used when reporting the per-release guarantee.
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    None,
    Marginal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSection {
    pub count: usize,
    pub omega: Option<OmegaRange>,
    pub workers: usize,
    pub max_candidates: Option<usize>,
    pub time_budget: Option<Duration>,
    pub baseline: Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    pub reference: Option<PathBuf>,
    pub candidate: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub model_error: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub privacy: PrivacyConfig,
    pub generation: GenerationSection,
    pub verify: SweepConfig,
    pub metrics: MetricsConfig,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("data", &["schema", "dataset", "fractions", "seed", "out"]),
    (
        "model",
        &[
            "eps_target",
            "delta_target",
            "amplify",
            "eps_h",
            "eps_nt",
            "eps_p",
            "delta_l",
            "delta_p",
            "maxcost",
            "alpha",
            "sampling",
        ],
    ),
    (
        "privacy",
        &["k", "gamma", "eps0", "t", "test", "max_plausible", "max_check_plausible"],
    ),
    (
        "generation",
        &["count", "omega", "workers", "max_candidates", "time_budget_secs", "baseline"],
    ),
    (
        "verify",
        &[
            "cardinalities",
            "dataset_size",
            "datasets",
            "explicit_models",
            "edge_models",
            "synth_models",
            "k",
            "gamma",
            "eps0",
            "t",
            "gamma_factor",
            "sensitivity_bins",
            "sensitivity_n",
            "seed",
            "workers",
        ],
    ),
    ("metrics", &["reference", "candidate", "baseline", "model_error"]),
];

struct Reader<'a> {
    doc: &'a Document,
    base: &'a Path,
}

impl Reader<'_> {
    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.doc.value(section, key)
    }

    fn parse<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|err| self.doc.error(e.line, format!("[{section}] {key}: {err}"))),
        }
    }

    fn or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(section, key)?.unwrap_or(default))
    }

    fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|err| self.doc.error(e.line, format!("[{section}] {key}: `{}`: {err}", v.trim())))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// `none` disables a cap.
    fn cap(&self, section: &str, key: &str, default: Option<usize>) -> Result<Option<usize>> {
        match self.entry(section, key) {
            None => Ok(default),
            Some(e) if e.value.eq_ignore_ascii_case("none") => Ok(None),
            Some(_) => self.parse(section, key),
        }
    }

    fn path(&self, section: &str, key: &str) -> Option<PathBuf> {
        self.entry(section, key).map(|e| self.base.join(&e.value))
    }

    fn required_path(&self, section: &str, key: &str) -> Result<PathBuf> {
        self.path(section, key)
            .ok_or_else(|| Error::Config(format!("missing `{key}` in [{section}]")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let doc = Document::read(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_document(&doc, base)
    }

    pub fn parse(context: &str, text: &str, base: &Path) -> Result<Self> {
        Self::from_document(&Document::parse(context, text)?, base)
    }

    fn from_document(doc: &Document, base: &Path) -> Result<Self> {
        for (i, s) in doc.sections.iter().enumerate() {
            if doc.sections[..i].iter().any(|p| p.name == s.name) {
                return Err(doc.error(s.line, format!("section [{}] appears twice", s.name)));
            }
            let Some((_, keys)) = KNOWN_KEYS.iter().find(|(name, _)| *name == s.name) else {
                return Err(doc.error(s.line, format!("unknown section [{}]", s.name)));
            };
            if let Some(e) = s.entries.iter().find(|e| !keys.contains(&e.key.as_str())) {
                return Err(doc.error(e.line, format!("unknown key `{}` in [{}]", e.key, s.name)));
            }
        }
        let r = Reader { doc, base };

        let fractions = match r.list::<f64>("data", "fractions")? {
            None => Fractions::default(),
            Some(v) if v.len() == 3 => Fractions {
                synthesis: v[0],
                structure: v[1],
                parameters: v[2],
            },
            Some(_) => return Err(Error::Config("[data] fractions needs three values".into())),
        };
        let data = DataConfig {
            schema: r.required_path("data", "schema")?,
            dataset: r.required_path("data", "dataset")?,
            fractions,
            seed: r.or("data", "seed", 0)?,
            out: r.path("data", "out").unwrap_or_else(|| base.join("out")),
        };

        let explicit = ["eps_h", "eps_nt", "eps_p"].map(|k| r.entry("model", k).is_some());
        let budget = if explicit.iter().any(|&b| b) {
            if !explicit.iter().all(|&b| b) || r.entry("model", "eps_target").is_some() {
                return Err(Error::Config(
                    "[model] give either eps_target or all of eps_h, eps_nt, eps_p".into(),
                ));
            }
            BudgetChoice::Explicit(PerQuery {
                eps_h: r.or("model", "eps_h", 0.0)?,
                eps_nt: r.or("model", "eps_nt", 0.0)?,
                eps_p: r.or("model", "eps_p", 0.0)?,
                delta_l: r.or("model", "delta_l", DEFAULT_DELTA)?,
                delta_p: r.or("model", "delta_p", DEFAULT_DELTA)?,
            })
        } else {
            BudgetChoice::Target {
                eps: r.or("model", "eps_target", 1.0)?,
                delta: r.or("model", "delta_target", DEFAULT_DELTA)?,
                amplify: r.or("model", "amplify", true)?,
            }
        };
        let sampling = match r.entry("model", "sampling").map(|e| e.value.as_str()) {
            None | Some("posterior_mean") => Sampling::PosteriorMean,
            Some("dirichlet") => Sampling::Dirichlet,
            Some(other) => {
                return Err(Error::Config(format!(
                    "[model] sampling must be `posterior_mean` or `dirichlet`, got `{other}`"
                )))
            }
        };
        let model = ModelConfig {
            budget,
            maxcost: r.or("model", "maxcost", DEFAULT_MAXCOST)?,
            alpha: r.or("model", "alpha", 1.0)?,
            sampling,
        };

        let defaults = PrivacyParams::default();
        let params = PrivacyParams {
            k: r.or("privacy", "k", defaults.k)?,
            gamma: r.or("privacy", "gamma", defaults.gamma)?,
            eps0: r.or("privacy", "eps0", defaults.eps0)?,
            max_plausible: r.cap("privacy", "max_plausible", defaults.max_plausible)?,
            max_check_plausible: r.cap("privacy", "max_check_plausible", defaults.max_check_plausible)?,
        };
        params.validate()?;
        let privacy = PrivacyConfig {
            params,
            kind: r.or("privacy", "test", TestKind::Randomized)?,
            t: r.or("privacy", "t", (params.k / 5).max(1))?,
        };

        let baseline = match r.entry("generation", "baseline").map(|e| e.value.as_str()) {
            None | Some("none") => Baseline::None,
            Some("marginal") => Baseline::Marginal,
            Some(other) => {
                return Err(Error::Config(format!(
                    "[generation] baseline must be `none` or `marginal`, got `{other}`"
                )))
            }
        };
        let generation = GenerationSection {
            count: r.or("generation", "count", 1000)?,
            omega: r.parse("generation", "omega")?,
            workers: r.or("generation", "workers", 1)?,
            max_candidates: r.parse("generation", "max_candidates")?,
            time_budget: r
                .parse::<f64>("generation", "time_budget_secs")?
                .map(Duration::try_from_secs_f64)
                .transpose()
                .map_err(|e| Error::Config(format!("[generation] time_budget_secs: {e}")))?,
            baseline,
        };

        let d = SweepConfig::default();
        let verify = SweepConfig {
            cardinalities: r.list("verify", "cardinalities")?.unwrap_or(d.cardinalities),
            dataset_size: r.or("verify", "dataset_size", d.dataset_size)?,
            datasets: r.or("verify", "datasets", d.datasets)?,
            explicit_models: r.or("verify", "explicit_models", d.explicit_models)?,
            edge_models: r.or("verify", "edge_models", d.edge_models)?,
            synth_models: r.or("verify", "synth_models", d.synth_models)?,
            k: r.list("verify", "k")?.unwrap_or(d.k),
            gamma: r.list("verify", "gamma")?.unwrap_or(d.gamma),
            eps0: r.list("verify", "eps0")?.unwrap_or(d.eps0),
            t: r.list("verify", "t")?.unwrap_or(d.t),
            gamma_factor: r.or("verify", "gamma_factor", d.gamma_factor)?,
            sensitivity_bins: r.or("verify", "sensitivity_bins", d.sensitivity_bins)?,
            sensitivity_n: r.or("verify", "sensitivity_n", d.sensitivity_n)?,
            seed: r.or("verify", "seed", d.seed)?,
            workers: r.or("verify", "workers", d.workers)?,
        };

        let metrics = MetricsConfig {
            reference: r.path("metrics", "reference"),
            candidate: r.path("metrics", "candidate"),
            baseline: r.path("metrics", "baseline"),
            model_error: r.or("metrics", "model_error", false)?,
        };

        Ok(RunConfig {
            data,
            model,
            privacy,
            generation,
            verify,
            metrics,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.data.seed = seed;
        }
        if let Some(w) = o.workers {
            self.generation.workers = w;
            self.verify.workers = w;
        }
        if let Some(out) = &o.out {
            self.data.out.clone_from(out);
        }
    }
}

/// Seeds of the independent random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub run: u64,
    pub partition: u64,
    pub structure: u64,
    pub model: u64,
    pub generation: u64,
    pub baseline: u64,
}

impl Seeds {
    pub fn derive(run: u64) -> Self {
        Seeds {
            run,
            partition: derive_seed(run, "partition"),
            structure: derive_seed(run, "structure"),
            model: derive_seed(run, "model"),
            generation: derive_seed(run, "generation"),
            baseline: derive_seed(run, "baseline"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub per_query: PerQuery,
    /// ε_L, δ_L.
    pub structure: DpBudget,
    /// ε_P, δ_P.
    pub parameters: DpBudget,
    /// Probability used for amplification by sampling, if any.
    pub sampling_p: Option<f64>,
    pub model: DpBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSizes {
    pub input: usize,
    pub dropped: usize,
    pub synthesis: usize,
    pub structure: usize,
    pub parameters: usize,
}

/// Everything `generate` needs besides the data itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub tool_version: String,
    pub attributes: Vec<String>,
    pub seeds: Seeds,
    pub fractions: Fractions,
    pub sizes: PartitionSizes,
    pub maxcost: u64,
    pub graph: DependencyGraph,
    pub entropy: EntropyTable,
    pub model_params: ModelParams,
    pub budget: BudgetReport,
}

impl ModelArtifact {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let a: ModelArtifact = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))?;
        a.graph.validate()?;
        Ok(a)
    }
}

/// Loaded input data split into D_S, D_T, D_P.
pub struct Inputs {
    pub schema: Arc<Schema>,
    pub dataset: Dataset,
    pub partition: Partition,
    pub sizes: PartitionSizes,
}

pub fn load_inputs(cfg: &RunConfig, seeds: &Seeds) -> Result<Inputs> {
    let schema = Arc::new(Schema::load(&cfg.data.schema)?);
    let (dataset, dropped) = Dataset::load(&cfg.data.dataset, schema.clone())?;
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing or invalid values");
    }
    let partition = partition_dataset(&dataset, cfg.data.fractions, &mut rng_from_seed(seeds.partition))?;
    let sizes = PartitionSizes {
        input: dataset.len(),
        dropped,
        synthesis: partition.synthesis.len(),
        structure: partition.structure.len(),
        parameters: partition.parameters.len(),
    };
    log::info!(
        "partition: |D_S| = {}, |D_T| = {}, |D_P| = {}",
        sizes.synthesis,
        sizes.structure,
        sizes.parameters
    );
    Ok(Inputs {
        schema,
        dataset,
        partition,
        sizes,
    })
}

fn budget_report(cfg: &RunConfig, m: usize) -> Result<BudgetReport> {
    let f = cfg.data.fractions;
    let (per_query, sampling_p) = match cfg.model.budget {
        BudgetChoice::Target { eps, delta, amplify } => {
            // D_T and D_P are independent samples; the larger rate is conservative
            let p = amplify.then(|| f.structure.max(f.parameters));
            (accounting::solve_per_query(DpBudget { eps, delta }, m, p)?, p)
        }
        BudgetChoice::Explicit(q) => (q, None),
    };
    let structure = per_query.structure(m)?;
    let parameters = per_query.parameters(m)?;
    let model = accounting::model_budget(structure, parameters, sampling_p)?;
    Ok(BudgetReport {
        per_query,
        structure,
        parameters,
        sampling_p,
        model,
    })
}

fn warn_delta(what: &str, delta: f64, n: usize) {
    if n > 0 && delta * n as f64 > 0.01 {
        log::warn!("{what}: delta = {delta:e} is not much smaller than 1/n = {:e}", 1.0 / n as f64);
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn fmt_cap(c: Option<usize>) -> String {
    c.map_or_else(|| "none".to_string(), |v| v.to_string())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

/// Run metadata shared by `learn` and `generate`: privacy parameters,
/// per-query epsilons, the per-release guarantee and the model budget.
fn metadata(cfg: &RunConfig, seeds: &Seeds, budget: &BudgetReport, sizes: &PartitionSizes) -> Result<String> {
    let p = &cfg.privacy.params;
    let mut s = String::new();
    let _ = writeln!(s, "[run]");
    let _ = writeln!(s, "tool_version = {TOOL_VERSION}");
    let _ = writeln!(s, "seed = {}", seeds.run);
    let _ = writeln!(s, "partition_seed = {}", seeds.partition);
    let _ = writeln!(s, "structure_seed = {}", seeds.structure);
    let _ = writeln!(s, "model_seed = {}", seeds.model);
    let _ = writeln!(s, "generation_seed = {}", seeds.generation);
    let _ = writeln!(s);
    let _ = writeln!(s, "[data]");
    let _ = writeln!(s, "records = {}", sizes.input);
    let _ = writeln!(s, "dropped = {}", sizes.dropped);
    let _ = writeln!(s, "synthesis = {}", sizes.synthesis);
    let _ = writeln!(s, "structure = {}", sizes.structure);
    let _ = writeln!(s, "parameters = {}", sizes.parameters);
    let _ = writeln!(s);
    let _ = writeln!(s, "[privacy]");
    let _ = writeln!(s, "test = {}", test_name(cfg.privacy.kind));
    let _ = writeln!(s, "k = {}", p.k);
    let _ = writeln!(s, "gamma = {}", p.gamma);
    let _ = writeln!(s, "eps0 = {}", p.eps0);
    let _ = writeln!(s, "t = {}", cfg.privacy.t);
    let _ = writeln!(s, "max_plausible = {}", fmt_cap(p.max_plausible));
    let _ = writeln!(s, "max_check_plausible = {}", fmt_cap(p.max_check_plausible));
    let capped = p.max_plausible.is_some() || p.max_check_plausible.is_some();
    let _ = writeln!(s, "capped = {capped}");
    match (cfg.privacy.kind, accounting::theorem1_params(p.k, p.gamma, p.eps0, cfg.privacy.t)) {
        (TestKind::Randomized, Ok(b)) => {
            let _ = writeln!(s, "release_eps = {}", b.eps);
            let _ = writeln!(s, "release_delta = {:e}", b.delta);
            if capped {
                let _ = writeln!(s, "release_note = guarantee derived for uncapped counting");
            }
        }
        (TestKind::Randomized, Err(e)) => return Err(e),
        (TestKind::Deterministic, _) => {
            let _ = writeln!(s, "release_note = deterministic test carries no differential privacy guarantee");
        }
    }
    let _ = writeln!(s);
    let q = &budget.per_query;
    let _ = writeln!(s, "[budget]");
    let _ = writeln!(s, "eps_h = {}", q.eps_h);
    let _ = writeln!(s, "eps_nt = {}", q.eps_nt);
    let _ = writeln!(s, "eps_p = {}", q.eps_p);
    let _ = writeln!(s, "delta_l = {:e}", q.delta_l);
    let _ = writeln!(s, "delta_p = {:e}", q.delta_p);
    let _ = writeln!(s, "structure_eps = {}", budget.structure.eps);
    let _ = writeln!(s, "structure_delta = {:e}", budget.structure.delta);
    let _ = writeln!(s, "parameters_eps = {}", budget.parameters.eps);
    let _ = writeln!(s, "parameters_delta = {:e}", budget.parameters.delta);
    let _ = writeln!(s, "sampling_p = {}", fmt_opt(budget.sampling_p));
    let _ = writeln!(s, "model_eps = {}", budget.model.eps);
    let _ = writeln!(s, "model_delta = {:e}", budget.model.delta);
    Ok(s)
}

fn test_name(kind: TestKind) -> &'static str {
    match kind {
        TestKind::Deterministic => "deterministic",
        TestKind::Randomized => "randomized",
    }
}

#[derive(Debug, Clone)]
pub struct LearnSummary {
    pub artifact: ModelArtifact,
    pub out: PathBuf,
}

/// Partitions the data, learns the structure on D_T and writes the model
/// artifact, the graph and the run metadata.
pub fn cmd_learn(cfg: &RunConfig) -> Result<LearnSummary> {
    let seeds = Seeds::derive(cfg.data.seed);
    let inputs = load_inputs(cfg, &seeds)?;
    let m = inputs.schema.len();
    let budget = budget_report(cfg, m)?;
    log::info!(
        "budget: eps_L = {:.6}, eps_P = {:.6}, model eps = {:.6}",
        budget.structure.eps,
        budget.parameters.eps,
        budget.model.eps
    );
    warn_delta("model budget", budget.model.delta, inputs.sizes.input);

    let q = budget.per_query;
    let (graph, entropy) = learn_structure(
        &inputs.partition.structure,
        q.eps_h,
        q.eps_nt,
        cfg.model.maxcost,
        &mut rng_from_seed(seeds.structure),
    )?;
    log::info!("learned {} edges", graph.edge_count());
    let model_params = ModelParams {
        alpha: cfg.model.alpha,
        eps_p: q.eps_p,
        model_seed: seeds.model,
        sampling: cfg.model.sampling,
    };
    // fail early on bad hyper-parameters
    GenerativeModel::learned(graph.clone(), Arc::new(inputs.partition.parameters.clone()), model_params)?;

    let artifact = ModelArtifact {
        tool_version: TOOL_VERSION.to_string(),
        attributes: inputs.schema.attributes().iter().map(|a| a.name().to_string()).collect(),
        seeds,
        fractions: cfg.data.fractions,
        sizes: inputs.sizes,
        maxcost: cfg.model.maxcost,
        graph,
        entropy,
        model_params,
        budget,
    };
    let out = cfg.data.out.clone();
    create_out(&out)?;
    let json = serde_json::to_vec_pretty(&artifact).map_err(|e| Error::Artifact(e.to_string()))?;
    write_file(&out.join(MODEL_FILE), &json)?;
    write_file(&out.join(GRAPH_FILE), artifact.graph.to_text(&inputs.schema).as_bytes())?;
    let meta = metadata(cfg, &seeds, &budget, &inputs.sizes)?;
    write_file(&out.join(LEARN_META_FILE), meta.as_bytes())?;
    Ok(LearnSummary { artifact, out })
}

/// Rebuilds the model of a previous `learn` run from the config and its
/// artifact.
pub fn load_model(cfg: &RunConfig) -> Result<(Inputs, ModelArtifact, GenerativeModel)> {
    let path = cfg.data.out.join(MODEL_FILE);
    if !path.exists() {
        return Err(Error::Artifact(format!("{} not found; run `pdsynth learn` first", path.display())));
    }
    let artifact = ModelArtifact::read(&path)?;
    let seeds = Seeds::derive(cfg.data.seed);
    if artifact.seeds != seeds {
        return Err(Error::Artifact(format!(
            "model was learned with seed {}, config asks for {}",
            artifact.seeds.run, seeds.run
        )));
    }
    let inputs = load_inputs(cfg, &seeds)?;
    let names: Vec<&str> = inputs.schema.attributes().iter().map(|a| a.name()).collect();
    if artifact.attributes != names || artifact.sizes != inputs.sizes || artifact.fractions != cfg.data.fractions {
        return Err(Error::Artifact(
            "model artifact does not match the configured schema, dataset or fractions".into(),
        ));
    }
    let model = GenerativeModel::learned(
        artifact.graph.clone(),
        Arc::new(inputs.partition.parameters.clone()),
        artifact.model_params,
    )?;
    Ok((inputs, artifact, model))
}

#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub output: GenerationOutput,
    pub released: usize,
    pub wall_time: Duration,
    pub out: PathBuf,
}

fn default_omega(m: usize) -> OmegaRange {
    OmegaRange { lo: m.min(5), hi: m }
}

/// Runs the release mechanism on D_S and writes the released records, the
/// private audit log and the run metadata. Wall time and worker count go to
/// a separate file so that the other artifacts are reproducible.
pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateSummary> {
    let (inputs, artifact, model) = load_model(cfg)?;
    let d_s = inputs.partition.synthesis.records();
    let params = cfg.privacy.params;
    if d_s.len() < params.k {
        return Err(Error::param(
            "k",
            format!("|D_S| = {} is smaller than k = {}", d_s.len(), params.k),
        ));
    }
    let m = inputs.schema.len();
    let g = &cfg.generation;
    let gen_cfg = GenerationConfig {
        count: g.count,
        omega: g.omega.unwrap_or_else(|| default_omega(m)),
        kind: cfg.privacy.kind,
        workers: g.workers,
        seed: artifact.seeds.generation,
        max_candidates: g.max_candidates.unwrap_or(g.count.saturating_mul(1000)),
        time_budget: g.time_budget,
    };
    if let Ok(b) = accounting::theorem1_params(params.k, params.gamma, params.eps0, cfg.privacy.t) {
        warn_delta("per-release guarantee", b.delta, d_s.len());
    }

    let start = Instant::now();
    let output = privacy::generate(d_s, &model, &params, &gen_cfg)?;
    let wall_time = start.elapsed();
    let stats = &output.stats;
    if stats.passed < g.count {
        log::warn!(
            "released {} of {} records after {} candidates",
            stats.passed,
            g.count,
            stats.candidates
        );
    }

    let out = cfg.data.out.clone();
    create_out(&out)?;
    let synth_path = out.join(SYNTHETIC_FILE);
    let f = fs::File::create(&synth_path).map_err(|e| Error::io(&synth_path, e))?;
    write_records_csv(&inputs.schema, output.released(), BufWriter::new(f))?;
    write_audit_log(&out.join(AUDIT_FILE), &output, d_s)?;

    if g.baseline == Baseline::Marginal {
        let mut rng = rng_from_seed(artifact.seeds.baseline);
        let records = (0..g.count)
            .map(|_| synthesize_marginal(&model, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let path = out.join(MARGINAL_FILE);
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_records_csv(&inputs.schema, &records, BufWriter::new(f))?;
    }

    let mut meta = metadata(cfg, &artifact.seeds, &artifact.budget, &inputs.sizes)?;
    let _ = writeln!(meta);
    let _ = writeln!(meta, "[generation]");
    let _ = writeln!(meta, "count = {}", g.count);
    let _ = writeln!(meta, "omega = {}", gen_cfg.omega);
    let _ = writeln!(meta, "max_candidates = {}", gen_cfg.max_candidates);
    let _ = writeln!(meta, "candidates = {}", stats.candidates);
    let _ = writeln!(meta, "passed = {}", stats.passed);
    let _ = writeln!(meta, "failed = {}", stats.failed);
    let _ = writeln!(meta, "capped = {}", stats.capped);
    let _ = writeln!(meta, "capped_failed = {}", stats.capped_failed);
    let _ = writeln!(meta, "timed_out = {}", stats.timed_out);
    let _ = writeln!(meta, "baseline = {}", if g.baseline == Baseline::Marginal { "marginal" } else { "none" });
    write_file(&out.join(GENERATE_META_FILE), meta.as_bytes())?;

    let secs = wall_time.as_secs_f64();
    let mut timing = String::new();
    let _ = writeln!(timing, "workers = {}", g.workers);
    let _ = writeln!(timing, "wall_time_secs = {secs:.3}");
    if secs > 0.0 {
        let rate = stats.candidates as f64 / secs * 60.0 / g.workers as f64;
        let _ = writeln!(timing, "candidates_per_minute_per_worker = {rate:.0}");
    }
    write_file(&out.join(TIMING_FILE), timing.as_bytes())?;

    log::info!(
        "released {} records from {} candidates in {secs:.2}s",
        stats.passed,
        stats.candidates
    );
    Ok(GenerateSummary {
        released: stats.passed,
        output,
        wall_time,
        out,
    })
}

/// One line per candidate. The log reveals which seeds produced which
/// candidates and must be kept private.
fn write_audit_log(path: &Path, output: &GenerationOutput, d_s: &[crate::data::Record]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(w, "candidate\tseed_hash\tomega\tpartition\tplausible\tcapped\tthreshold\tverdict").map_err(io)?;
    for (c, d) in output.decisions.iter().enumerate() {
        let mut h = Fnv1a::default();
        d_s[d.seed_index].iter().for_each(|&v| h.write_u32(v));
        writeln!(
            w,
            "{c}\t{:016x}\t{}\t{}\t{}\t{}\t{:.6}\t{}",
            h.finish(),
            d.omega.map_or_else(|| "-".to_string(), |o| o.to_string()),
            d.partition,
            d.plausible.count,
            d.plausible.capped,
            d.threshold,
            if d.passed { "pass" } else { "fail" }
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Runs the oracle sweep and writes its report. A violation is an error
/// with exit code 4, after the report has been written.
pub fn cmd_verify(cfg: &RunConfig) -> Result<oracle::VerificationReport> {
    let report = oracle::run_sweep(&cfg.verify)?;
    create_out(&cfg.data.out)?;
    write_file(&cfg.data.out.join(VERIFY_FILE), report.to_text().as_bytes())?;
    log::info!(
        "verified {} configurations with {} checks",
        report.theorem.configurations,
        report.theorem.checks
    );
    if !report.passed() {
        return Err(Error::Verification(format!(
            "{} violations, {} sensitivity violations; first: {}",
            report.theorem.violations,
            report.sensitivity_violations,
            report.theorem.first_violation.as_deref().unwrap_or("-")
        )));
    }
    Ok(report)
}

/// Compares a candidate dataset (and optionally a baseline) with the
/// reference and writes the distances, plus model error when asked.
pub fn cmd_metrics(cfg: &RunConfig) -> Result<Vec<MetricRow>> {
    let schema = Arc::new(Schema::load(&cfg.data.schema)?);
    let mc = &cfg.metrics;
    let reference_path = mc.reference.clone().unwrap_or_else(|| cfg.data.dataset.clone());
    let candidate_path = mc.candidate.clone().unwrap_or_else(|| cfg.data.out.join(SYNTHETIC_FILE));
    let (reference, _) = Dataset::load(&reference_path, schema.clone())?;
    let (candidate, _) = Dataset::load(&candidate_path, schema.clone())?;
    let mut rows = metrics::distance_rows(&schema, &metrics::distances(&reference, &candidate)?, "candidate");
    if let Some(p) = &mc.baseline {
        let (baseline, _) = Dataset::load(p, schema.clone())?;
        rows.extend(metrics::distance_rows(
            &schema,
            &metrics::distances(&reference, &baseline)?,
            "baseline",
        ));
    }
    if mc.model_error {
        let (_, _, model) = load_model(cfg)?;
        let errors = metrics::model_error(&model, &reference)?;
        rows.extend(
            errors
                .iter()
                .enumerate()
                .map(|(i, &e)| MetricRow::new(schema.attribute(i).name(), "model_error", e)),
        );
    }
    create_out(&cfg.data.out)?;
    let path = cfg.data.out.join(METRICS_FILE);
    let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    metrics::write_metrics_csv(&rows, BufWriter::new(f))?;
    Ok(rows)
}

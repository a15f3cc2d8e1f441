//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any failed.

mod common;

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use pdsynth::accounting::{self, adv_compose, amplify, theorem1_params, DpBudget, DEFAULT_DELTA};
use pdsynth::cli::{self, Overrides, RunConfig};
use pdsynth::data::{partition_dataset, Dataset, Fractions, Record, Schema};
use pdsynth::metrics;
use pdsynth::noise::rng_from_seed;
use pdsynth::oracle::{self, release_distribution, ExplicitModel, SweepConfig};
use pdsynth::params::{GenerativeModel, ModelParams};
use pdsynth::privacy::{self, GenerationConfig, PrivacyParams, TestKind};
use pdsynth::structure::{learn_structure, DependencyGraph, DEFAULT_MAXCOST};
use pdsynth::synthesis::{record_probability, synthesize, synthesize_marginal, OmegaModel, OmegaRange};
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// `|observed - n p| <= 3 sqrt(n p (1 - p))`; an impossible outcome must
/// never be observed.
fn within_3sigma(observed: u64, n: u64, p: f64) -> bool {
    let n = n as f64;
    let sd = (n * p * (1.0 - p)).sqrt();
    if sd == 0.0 {
        return observed as f64 == n * p;
    }
    (observed as f64 - n * p).abs() <= 3.0 * sd
}

fn c1_sensitivity() -> Outcome {
    let start = Instant::now();
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut cases = 0;
    for bins in 1..=4 {
        for n in 1..=12usize {
            let (max, bound) = oracle::sensitivity_bruteforce(bins, n).unwrap();
            let nf = n as f64;
            let expected_bound = (2.0 + 1.0 / std::f64::consts::LN_2 + 2.0 * nf.log2()) / nf;
            if (bound - expected_bound).abs() > 1e-12 || max > expected_bound {
                violations += 1;
            }
            worst = worst.max(max - expected_bound);
            cases += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        violations == 0 && secs < 10.0,
        format!("{cases} (bins, n) cases, {violations} violations, worst gap {worst:.4}, {secs:.2}s"),
    )
}

fn tally<M>(
    records: &[Record],
    model: &M,
    universe: &[Record],
    params: &PrivacyParams,
    trials: u64,
    seed: u64,
    mut step: impl FnMut(&[Record], &M, &PrivacyParams, &mut pdsynth::noise::SimRng) -> privacy::ReleaseDecision,
) -> (Vec<u64>, u64) {
    let index: HashMap<&Record, usize> = universe.iter().enumerate().map(|(i, r)| (r, i)).collect();
    let mut counts = vec![0u64; universe.len()];
    let mut none = 0;
    let mut rng = rng_from_seed(seed);
    for _ in 0..trials {
        let d = step(records, model, params, &mut rng);
        if d.passed {
            counts[index[&d.candidate]] += 1;
        } else {
            none += 1;
        }
    }
    (counts, none)
}

fn compare(counts: &[u64], none: u64, exact: &[f64], exact_none: f64, trials: u64) -> (bool, usize) {
    let mut bad = 0;
    for (&c, &p) in counts.iter().zip(exact) {
        if !within_3sigma(c, trials, p) {
            bad += 1;
        }
    }
    if !within_3sigma(none, trials, exact_none) {
        bad += 1;
    }
    (bad == 0, bad)
}

fn c2_mechanism_vs_oracle() -> Outcome {
    let start = Instant::now();
    let trials = 1_000_000u64;
    let schema = Arc::new(Schema::from_cardinalities(&[2, 2, 2]).unwrap());
    let universe = schema.enumerate_universe();
    let d = [0usize, 0, 3, 5, 6, 7];
    let records: Vec<Record> = d.iter().map(|&i| universe[i].clone()).collect();
    let params = PrivacyParams {
        k: 3,
        gamma: 2.0,
        eps0: 1.0,
        max_plausible: None,
        max_check_plausible: None,
    };
    let mut rng = rng_from_seed(2024);
    let mut details = Vec::new();
    let mut all_ok = true;

    // seed-based synthesizer with omega drawn from 1..=3 inside the mechanism
    let gm = oracle::random_chain_model(schema.clone(), &mut rng).unwrap();
    let mut exact = vec![0.0; universe.len()];
    let mut exact_none = 0.0;
    for w in 1..=3 {
        let em = ExplicitModel::from_model(universe.clone(), &OmegaModel::new(&gm, w).unwrap()).unwrap();
        let (p, none) = release_distribution(&d, &em, params.k, params.gamma, params.eps0);
        exact.iter_mut().zip(&p).for_each(|(e, v)| *e += v / 3.0);
        exact_none += none / 3.0;
    }
    let (counts, none) = tally(&records, &gm, &universe, &params, trials, 1, |r, m, p, rng| {
        privacy::mechanism_step(r, m, OmegaRange { lo: 1, hi: 3 }, p, TestKind::Randomized, rng).unwrap()
    });
    let (ok, bad) = compare(&counts, none, &exact, exact_none, trials);
    all_ok &= ok;
    details.push(format!("synthesizer {bad} off"));

    // explicit matrices spread outcomes over several partitions
    for (label, em) in [
        ("random", ExplicitModel::random(universe.clone(), &mut rng).unwrap()),
        ("edges", ExplicitModel::random_edges(universe.clone(), 2.0, &mut rng).unwrap()),
    ] {
        let (exact, exact_none) = release_distribution(&d, &em, params.k, params.gamma, params.eps0);
        let (counts, none) = tally(&records, &em, &universe, &params, trials, 2, |r, m, p, rng| {
            privacy::mechanism_step_with(r, m, p, TestKind::Randomized, rng).unwrap()
        });
        let (ok, bad) = compare(&counts, none, &exact, exact_none, trials);
        all_ok &= ok;
        details.push(format!("{label} {bad} off"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        all_ok && secs < 120.0,
        format!(
            "3 models x {trials} trials, outcomes outside 3 sigma: {}, {secs:.1}s",
            details.join(", ")
        ),
    )
}

fn c3_theorem_sweep() -> Outcome {
    let start = Instant::now();
    let cfg = SweepConfig::default();
    assert_eq!(cfg.k, vec![3, 5]);
    assert_eq!(cfg.gamma, vec![2.0, 4.0]);
    assert_eq!(cfg.eps0, vec![0.5, 1.0]);
    assert_eq!(cfg.t, vec![1, 2]);
    let rep = oracle::run_sweep(&cfg).unwrap();
    let th = &rep.theorem;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        rep.passed() && secs < 300.0,
        format!(
            "{} configurations, {} checks, {} violations, worst margins fwd {:.2e} bwd {:.2e} sandwich {:.2e}, {secs:.1}s",
            th.configurations, th.checks, th.violations, th.worst_forward, th.worst_backward, th.worst_sandwich
        ),
    )
}

fn c4_closed_forms() -> Outcome {
    let t1 = theorem1_params(50, 4.0, 1.0, 10).unwrap();
    let eps_ref = 1.0 + (1.4f64).ln();
    let delta_ref = (-40.0f64).exp();
    let t1_ok = ((t1.eps - eps_ref) / eps_ref).abs() < 1e-9
        && ((t1.delta - delta_ref) / delta_ref).abs() < 1e-9
        && (t1.eps - 1.3364722).abs() < 1e-7;
    let adv = adv_compose(0.01, 0.0, 132, DEFAULT_DELTA).unwrap();
    let adv_ok = (adv.eps - 0.754186).abs() <= 1e-5;
    let amp = amplify(1.0, 0.0, 0.25).unwrap();
    let amp_ok = (amp.eps - 0.3573738).abs() <= 1e-6;
    outcome(
        t1_ok && adv_ok && amp_ok,
        format!(
            "theorem1 ({:.10}, {:.6e}), adv_compose {:.7}, amplify {:.7}",
            t1.eps, t1.delta, adv.eps, amp.eps
        ),
    )
}

fn c5_calibration() -> Outcome {
    let trials = 100_000u64;
    let universe = Schema::from_cardinalities(&[2, 2, 2]).unwrap().enumerate_universe();
    let row = vec![1.0 / 8.0; 8];
    let em = ExplicitModel::new(universe.clone(), vec![row; 8]).unwrap();
    // ten identical seeds: every record is plausible, k' = 10
    let d = vec![universe[0].clone(); 10];
    let mut rng = rng_from_seed(55);
    let mut all_ok = true;
    let mut parts = Vec::new();
    for (diff, expected) in [(-2i64, 0.0676676), (0, 0.5), (5, 0.9966310)] {
        let k = (10 - diff) as usize;
        let params = PrivacyParams {
            k,
            gamma: 4.0,
            eps0: 1.0,
            max_plausible: None,
            max_check_plausible: None,
        };
        let mut passed = 0u64;
        for _ in 0..trials {
            let dec = privacy::privacy_test_randomized(&d, 0, &universe[3], &em, &params, &mut rng).unwrap();
            assert_eq!(dec.plausible.count, 10);
            passed += u64::from(dec.passed);
        }
        let tail = oracle::pt_exact(10, k, 1.0);
        let ok = within_3sigma(passed, trials, expected) && (tail - expected).abs() < 1e-7;
        all_ok &= ok;
        parts.push(format!("k'-k={diff}: {:.5} vs {expected}", passed as f64 / trials as f64));
    }
    outcome(all_ok, format!("{trials} trials each; {}", parts.join(", ")))
}

/// Chi-square goodness of fit, pooling outcomes with expected count below 5.
fn chi_square_p(observed: &[u64], expected_probs: &[f64], n: u64) -> f64 {
    let mut stat = 0.0;
    let mut bins = 0;
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = p * n as f64;
        if e < 5.0 {
            pool_o += o as f64;
            pool_e += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            bins += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        bins += 1;
    }
    if bins < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

fn c6_synthesis() -> Outcome {
    let mut rng = rng_from_seed(66);
    let mut models = Vec::new();
    // random chain
    let chain_schema = Arc::new(Schema::from_cardinalities(&[2, 3, 2, 4]).unwrap());
    models.push(("chain", oracle::random_chain_model(chain_schema, &mut rng).unwrap()));
    // learned tables over a bucketized schema with a two-parent attribute
    let schema = Arc::new(
        Schema::parse(
            "toy",
            "[attribute]\nname = a\nvalues = 1..6\nbucket = width:3,origin:1\n\
             [attribute]\nname = b\nvalues = x,y,z\n\
             [attribute]\nname = c\nvalues = 0..3\nbucket = explicit:0=0,1=0,2=1,3=1\n",
        )
        .unwrap(),
    );
    let data: Vec<Record> = (0..300)
        .map(|_| {
            let a = rand::Rng::random_range(&mut rng, 0..6u32);
            let b = (a / 2 + rand::Rng::random_range(&mut rng, 0..2u32)) % 3;
            let c = (a + b) % 4;
            Record::new(vec![a, b, c])
        })
        .collect();
    let d_p = Arc::new(Dataset::new(schema.clone(), data).unwrap());
    let graph = DependencyGraph::new(vec![vec![], vec![0], vec![0, 1]]).unwrap();
    let params = ModelParams {
        eps_p: 0.5,
        model_seed: 9,
        ..ModelParams::default()
    };
    models.push(("learned", GenerativeModel::learned(graph, d_p, params).unwrap()));

    let mut worst_sum = 0.0f64;
    let mut min_p = 1.0f64;
    let draws = 20_000u64;
    for (_, model) in &models {
        let universe = model.schema().enumerate_universe();
        let index: HashMap<&Record, usize> = universe.iter().enumerate().map(|(i, r)| (r, i)).collect();
        let m = model.schema().len();
        for omega in 1..=m {
            for seed in &universe {
                let probs: Vec<f64> = universe
                    .iter()
                    .map(|y| record_probability(model, seed, y, omega).unwrap())
                    .collect();
                let sum: f64 = probs.iter().sum();
                worst_sum = worst_sum.max((sum - 1.0).abs());
            }
            // Monte Carlo on a few seeds per omega
            for seed in universe.iter().step_by(universe.len() / 3) {
                let probs: Vec<f64> = universe
                    .iter()
                    .map(|y| record_probability(model, seed, y, omega).unwrap())
                    .collect();
                let mut counts = vec![0u64; universe.len()];
                for _ in 0..draws {
                    counts[index[&synthesize(seed, omega, model, &mut rng).unwrap()]] += 1;
                }
                min_p = min_p.min(chi_square_p(&counts, &probs, draws));
            }
        }
    }
    outcome(
        worst_sum < 1e-9 && min_p > 0.01,
        format!("max |sum - 1| = {worst_sum:.2e}, smallest goodness-of-fit p = {min_p:.4}"),
    )
}

/// Model learned from separate desk samples standing in for D_T and D_P.
fn desk_model(seed: u64, eps_target: f64) -> GenerativeModel {
    let d_t = common::desk_dataset(8_000, seed);
    let d_p = common::desk_dataset(8_000, seed + 1);
    let q = accounting::solve_per_query(
        DpBudget {
            eps: eps_target,
            delta: DEFAULT_DELTA,
        },
        d_t.schema().len(),
        None,
    )
    .unwrap();
    let (graph, _) = learn_structure(&d_t, q.eps_h, q.eps_nt, DEFAULT_MAXCOST, &mut rng_from_seed(seed + 2)).unwrap();
    GenerativeModel::learned(
        graph,
        Arc::new(d_p),
        ModelParams {
            eps_p: q.eps_p,
            model_seed: seed + 3,
            ..ModelParams::default()
        },
    )
    .unwrap()
}

fn c7_pass_rate_monotone() -> Outcome {
    let d_s = common::desk_dataset(10_000, 70);
    let model = desk_model(71, 1.0);
    let mut rates = Vec::new();
    for k in [5, 10, 25, 50, 100] {
        let params = PrivacyParams {
            k,
            ..PrivacyParams::default()
        };
        let cfg = GenerationConfig {
            count: usize::MAX,
            omega: OmegaRange { lo: 5, hi: 11 },
            kind: TestKind::Deterministic,
            workers: 4,
            seed: 72,
            max_candidates: 2_000,
            time_budget: None,
        };
        let out = privacy::generate(d_s.records(), &model, &params, &cfg).unwrap();
        rates.push((k, out.stats.passed as f64 / out.stats.candidates as f64));
    }
    let monotone = rates.windows(2).all(|w| w[1].1 <= w[0].1);
    let text: Vec<String> = rates.iter().map(|(k, r)| format!("k={k}: {r:.3}")).collect();
    outcome(monotone, format!("pass fractions over 2000 candidates: {}", text.join(", ")))
}

fn c8_utility_direction() -> Outcome {
    let real = common::dependent_dataset(20_000, 80);
    let m = real.schema().len();
    let parts = partition_dataset(&real, Fractions::default(), &mut rng_from_seed(81)).unwrap();
    let p = Fractions::default().structure;
    let q = accounting::solve_per_query(
        DpBudget {
            eps: 1.0,
            delta: DEFAULT_DELTA,
        },
        m,
        Some(p),
    )
    .unwrap();
    let (graph, _) =
        learn_structure(&parts.structure, q.eps_h, q.eps_nt, DEFAULT_MAXCOST, &mut rng_from_seed(82)).unwrap();
    let model = GenerativeModel::learned(
        graph,
        Arc::new(parts.parameters.clone()),
        ModelParams {
            eps_p: q.eps_p,
            model_seed: 83,
            ..ModelParams::default()
        },
    )
    .unwrap();
    let count = 5_000;
    let cfg = GenerationConfig {
        count,
        omega: OmegaRange::fixed(m),
        kind: TestKind::Randomized,
        workers: 4,
        seed: 84,
        max_candidates: 1_000 * count,
        time_budget: None,
    };
    let params = PrivacyParams {
        k: 5,
        ..PrivacyParams::default()
    };
    let out = privacy::generate(parts.synthesis.records(), &model, &params, &cfg).unwrap();
    let synth = Dataset::new(real.schema().clone(), out.released().cloned().collect()).unwrap();
    let mut rng = rng_from_seed(85);
    let marg = Dataset::new(
        real.schema().clone(),
        (0..count).map(|_| synthesize_marginal(&model, &mut rng).unwrap()).collect(),
    )
    .unwrap();
    let ds = metrics::distances(&real, &synth).unwrap();
    let dm = metrics::distances(&real, &marg).unwrap();
    let ok = ds.mean_pair() < dm.mean_pair() && ds.max_single() < 0.05 && dm.max_single() < 0.05;
    outcome(
        ok,
        format!(
            "{} edges; mean pair TV synthetic {:.4} vs marginal {:.4}; max single TV {:.4} / {:.4}",
            model.graph().edge_count(),
            ds.mean_pair(),
            dm.mean_pair(),
            ds.max_single(),
            dm.max_single()
        ),
    )
}

fn run_pipeline(out: &Path, workers: usize) {
    let mut cfg = RunConfig::load(&common::data_dir().join("toy.conf")).unwrap();
    cfg.apply(&Overrides {
        seed: Some(5),
        workers: Some(workers),
        out: Some(out.to_path_buf()),
    });
    cli::cmd_learn(&cfg).unwrap();
    cli::cmd_generate(&cfg).unwrap();
}

fn c9_determinism() -> Outcome {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    run_pipeline(dirs[0].path(), 1);
    run_pipeline(dirs[1].path(), 1);
    run_pipeline(dirs[2].path(), 8);
    let files = [
        cli::MODEL_FILE,
        cli::GRAPH_FILE,
        cli::LEARN_META_FILE,
        cli::SYNTHETIC_FILE,
        cli::MARGINAL_FILE,
        cli::AUDIT_FILE,
        cli::GENERATE_META_FILE,
    ];
    let mut differing = Vec::new();
    for f in files {
        let a = fs::read(dirs[0].path().join(f)).unwrap();
        for d in &dirs[1..] {
            if fs::read(d.path().join(f)).unwrap() != a {
                differing.push(f);
            }
        }
    }
    let rows = fs::read_to_string(dirs[0].path().join(cli::SYNTHETIC_FILE)).unwrap().lines().count() - 1;
    outcome(
        differing.is_empty() && rows == 200,
        format!(
            "{} artifacts over 3 runs (workers 1, 1, 8), {rows} released rows, differing: {:?}",
            files.len(),
            differing
        ),
    )
}

fn c10_throughput() -> Outcome {
    let d_s = common::desk_dataset(50_000, 100);
    let model = desk_model(101, 1.0);
    let params = PrivacyParams::default();
    let candidates = 3_000;
    let cfg = GenerationConfig {
        count: usize::MAX,
        omega: OmegaRange { lo: 5, hi: 11 },
        kind: TestKind::Randomized,
        workers: 1,
        seed: 102,
        max_candidates: candidates,
        time_budget: Some(Duration::from_secs(120)),
    };
    let start = Instant::now();
    let out = privacy::generate(d_s.records(), &model, &params, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rate = out.stats.candidates as f64 / secs * 60.0;
    outcome(
        rate >= 10_000.0,
        format!(
            "{} candidates in {secs:.2}s on 1 worker = {rate:.0}/min ({} passed, {} capped)",
            out.stats.candidates, out.stats.passed, out.stats.capped
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    // the harness passes --list when enumerating tests; nothing to list
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [Criterion; 10] = [
        ("1 entropy sensitivity bound", c1_sensitivity),
        ("2 mechanism matches exact release probabilities", c2_mechanism_vs_oracle),
        ("3 neighbor sweep of the randomized test", c3_theorem_sweep),
        ("4 closed-form budgets", c4_closed_forms),
        ("5 randomized test calibration", c5_calibration),
        ("6 synthesis probabilities", c6_synthesis),
        ("7 pass rate nonincreasing in k", c7_pass_rate_monotone),
        ("8 synthetic beats marginals on pair TV", c8_utility_direction),
        ("9 deterministic artifacts", c9_determinism),
        ("10 throughput", c10_throughput),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        println!("{} criterion {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

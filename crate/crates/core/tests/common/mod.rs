#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use pdsynth::data::{Dataset, Record, Schema};
use pdsynth::noise::{rng_from_seed, SimRng};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn acs_schema() -> Arc<Schema> {
    Arc::new(Schema::load(&data_dir().join("acs_schema.txt")).unwrap())
}

fn pick<R: Rng>(weights: &[f64], rng: &mut R) -> u32 {
    WeightedIndex::new(weights).unwrap().sample(rng) as u32
}

/// One census-like person. Values are indices into the schema's value lists.
fn person(rng: &mut SimRng) -> Vec<u32> {
    // age 17..96, skewed young
    let age = (rng.random::<f64>().powf(1.4) * 80.0) as u32;
    let years = age + 17;
    let sex = pick(&[0.5, 0.5], rng);
    let race = pick(&[0.72, 0.12, 0.08, 0.05, 0.03], rng);
    let waob = if race == 0 {
        pick(&[0.9, 0.02, 0.02, 0.02, 0.01, 0.01, 0.01, 0.01], rng)
    } else {
        pick(&[0.4, 0.1, 0.2, 0.1, 0.1, 0.04, 0.03, 0.03], rng)
    };
    // education: buckets below diploma, diploma, then degrees
    let schl = {
        let young = years < 22;
        let r: f64 = rng.random();
        if r < if young { 0.35 } else { 0.12 } {
            rng.random_range(0..15)
        } else if r < if young { 0.9 } else { 0.55 } {
            rng.random_range(15..19)
        } else {
            pick(&[0.3, 0.4, 0.18, 0.06, 0.06], rng) + 19
        }
    };
    let mar = match years {
        17..=24 => pick(&[0.15, 0.01, 0.02, 0.02, 0.8], rng),
        25..=39 => pick(&[0.55, 0.01, 0.1, 0.03, 0.31], rng),
        40..=64 => pick(&[0.62, 0.04, 0.16, 0.03, 0.15], rng),
        _ => pick(&[0.5, 0.3, 0.12, 0.02, 0.06], rng),
    };
    let relp = if mar == 0 {
        pick(&[0.5, 0.45, 0.05], rng)
    } else if years < 25 {
        2 + pick(&[0.5, 0.2, 0.1, 0.1, 0.1], rng)
    } else {
        rng.random_range(0..18)
    };
    let cow = if schl >= 20 {
        pick(&[0.55, 0.1, 0.12, 0.1, 0.05, 0.06, 0.01, 0.01], rng)
    } else {
        pick(&[0.7, 0.05, 0.04, 0.05, 0.06, 0.07, 0.02, 0.01], rng)
    };
    let occp = {
        let band = if schl >= 20 { 0 } else if schl >= 15 { 8 } else { 16 };
        let shift = if sex == 0 { 0 } else { 3 };
        ((band + shift + rng.random_range(0..9)) % 25) as u32
    };
    let wkhp = {
        let h: f64 = if years > 70 { 15.0 } else { 40.0 };
        let noise = (rng.random::<f64>() - 0.5) * 30.0;
        (h + noise + if cow == 5 { 10.0 } else { 0.0 }).clamp(0.0, 99.0) as u32
    };
    let wagp = {
        let mut score = -2.5;
        score += (schl as f64 - 15.0) * 0.25;
        score += (wkhp as f64 - 35.0) * 0.05;
        score += if (30..60).contains(&years) { 0.8 } else { -0.5 };
        score += if sex == 0 { 0.4 } else { 0.0 };
        u32::from(rng.random::<f64>() < 1.0 / (1.0 + (-score).exp()))
    };
    vec![age, cow, schl, mar, occp, relp, race, sex, wkhp, waob, wagp]
}

/// `n` records from a fixed census-like generator over the ACS-style schema.
pub fn desk_dataset(n: usize, seed: u64) -> Dataset {
    let schema = acs_schema();
    let mut rng = rng_from_seed(seed);
    let records = (0..n).map(|_| Record::new(person(&mut rng))).collect();
    Dataset::new(schema, records).unwrap()
}

/// Five attributes where each of the last four copies its predecessor with
/// probability 0.9 and is uniform otherwise.
pub fn dependent_dataset(n: usize, seed: u64) -> Dataset {
    let schema = Arc::new(Schema::from_cardinalities(&[4, 4, 4, 4, 4]).unwrap());
    let mut rng = rng_from_seed(seed);
    let records = (0..n)
        .map(|_| {
            let mut r = vec![rng.random_range(0..4u32)];
            for i in 1..5 {
                let prev = r[i - 1];
                r.push(if rng.random::<f64>() < 0.9 { prev } else { rng.random_range(0..4) });
            }
            Record::new(r)
        })
        .collect();
    Dataset::new(schema, records).unwrap()
}

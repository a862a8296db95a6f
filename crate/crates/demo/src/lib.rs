//! Browser bindings for the `expts` library: tabulate a sampling
//! distribution, histogram its draws, and race policies on a small bandit
//! instance. Each `*_json` function is a plain Rust core returning a JSON
//! string (unit-testable on any host) wrapped by a thin `wasm_bindgen`
//! export.
//!
//! Episodes run sequentially here — browsers get no worker pool — so the
//! replication counts are meant for interactive scales.

use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use expts::family::{BanditInstance, ExpFamilyModel};
use expts::policy::PolicyKind;
use expts::sampler::{self, SamplerParams};
use expts::simulate::{geometric_checkpoints, mix_seed, run_episode, DEFAULT_CHECKPOINT_RATIO};

fn parse_family(tag: &str) -> Result<ExpFamilyModel, String> {
    ExpFamilyModel::from_str(tag.trim()).map_err(|e| e.to_string())
}

fn parse_params(mu: f64, n: u64) -> Result<SamplerParams, String> {
    if n == 0 {
        return Err("pull count must be at least 1".into());
    }
    Ok(SamplerParams::new(mu, n))
}

/// Tabulates pdf/cdf/tail for one arm's sampling distribution.
pub fn sampler_curve_json(family: &str, mu: f64, n: u64, points: usize) -> Result<String, String> {
    let model = parse_family(family)?;
    let params = parse_params(mu, n)?;
    if !(2..=100_000).contains(&points) {
        return Err("points must be between 2 and 100000".into());
    }
    let curve = sampler::sampler_curve(&model, &params, points).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&curve).expect("curve serializes"))
}

#[derive(Serialize)]
struct Histogram {
    /// Bin edges, length `bins + 1`.
    edges: Vec<f64>,
    /// Normalized bin densities (area sums to the kept fraction of draws).
    densities: Vec<f64>,
    /// Draws that fell outside the tabulated range (still part of the mass).
    outside: u64,
    draws: u64,
}

/// Draws from the sampling distribution and bins the results over the
/// central 99.8% range used by `sampler_curve_json`.
pub fn sampler_histogram_json(
    family: &str,
    mu: f64,
    n: u64,
    draws: u64,
    bins: usize,
    seed: u64,
) -> Result<String, String> {
    let model = parse_family(family)?;
    let params = parse_params(mu, n)?;
    if !(1..=1_000_000).contains(&draws) {
        return Err("draws must be between 1 and 1000000".into());
    }
    if !(1..=4_096).contains(&bins) {
        return Err("bins must be between 1 and 4096".into());
    }
    // Two curve points are enough to recover the plotting range.
    let range = sampler::sampler_curve(&model, &params, 2).map_err(|e| e.to_string())?;
    let (lo, hi) = (range[0].x, range[1].x);
    let width = (hi - lo) / bins as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; bins];
    let mut outside = 0u64;
    for _ in 0..draws {
        let x = sampler::sample(&model, &params, &mut rng).map_err(|e| e.to_string())?.value();
        let bin = ((x - lo) / width).floor();
        if bin >= 0.0 && (bin as usize) < bins {
            counts[bin as usize] += 1;
        } else {
            outside += 1;
        }
    }
    let norm = 1.0 / (draws as f64 * width);
    let histogram = Histogram {
        edges: (0..=bins).map(|i| lo + width * i as f64).collect(),
        densities: counts.iter().map(|&c| c as f64 * norm).collect(),
        outside,
        draws,
    };
    Ok(serde_json::to_string(&histogram).expect("histogram serializes"))
}

#[derive(Serialize)]
struct RaceSeries {
    policy: String,
    mean_regret: Vec<f64>,
}

#[derive(Serialize)]
struct Race {
    checkpoints: Vec<u64>,
    series: Vec<RaceSeries>,
}

/// Races policies on one instance, averaging sequential episodes.
///
/// `means` and `policies` are comma-separated; the variance cap defaults
/// to the exact maximum of the variance function over the mean range.
pub fn regret_race_json(
    family: &str,
    means: &str,
    policies: &str,
    horizon: u64,
    replications: u64,
    seed: u64,
) -> Result<String, String> {
    let model = parse_family(family)?;
    let mean_values: Vec<f64> = means
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("mean `{}`: {e}", s.trim())))
        .collect::<Result<_, _>>()?;
    let kinds: Vec<PolicyKind> = policies
        .split(',')
        .map(|s| PolicyKind::from_str(s.trim()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    if !(1..=200_000).contains(&horizon) {
        return Err("horizon must be between 1 and 200000".into());
    }
    if !(1..=500).contains(&replications) {
        return Err("replications must be between 1 and 500".into());
    }

    let (lo, hi) = mean_values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &m| (lo.min(m), hi.max(m)));
    let cap = model.max_variance_on(lo, hi).map_err(|e| e.to_string())?;
    let instance = BanditInstance::new(model, mean_values, cap).map_err(|e| e.to_string())?;
    for &kind in &kinds {
        kind.validate_family(instance.family()).map_err(|e| e.to_string())?;
    }

    let checkpoints = geometric_checkpoints(horizon, DEFAULT_CHECKPOINT_RATIO);
    let mut series = Vec::new();
    for &kind in &kinds {
        let mut totals = vec![0.0; checkpoints.len()];
        for rep in 0..replications {
            let trace = run_episode(kind, &instance, horizon, &checkpoints, mix_seed(seed, rep))
                .map_err(|e| e.to_string())?;
            for (total, r) in totals.iter_mut().zip(&trace.regrets) {
                *total += r;
            }
        }
        let scale = 1.0 / replications as f64;
        series.push(RaceSeries {
            policy: kind.to_string(),
            mean_regret: totals.iter().map(|t| t * scale).collect(),
        });
    }
    let race = Race { checkpoints, series };
    Ok(serde_json::to_string(&race).expect("race serializes"))
}

#[wasm_bindgen(js_name = samplerCurve)]
pub fn sampler_curve_wasm(family: &str, mu: f64, n: u64, points: usize) -> Result<String, JsError> {
    sampler_curve_json(family, mu, n, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = samplerHistogram)]
pub fn sampler_histogram_wasm(
    family: &str,
    mu: f64,
    n: u64,
    draws: u64,
    bins: usize,
    seed: u64,
) -> Result<String, JsError> {
    sampler_histogram_json(family, mu, n, draws, bins, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = regretRace)]
pub fn regret_race_wasm(
    family: &str,
    means: &str,
    policies: &str,
    horizon: u64,
    replications: u64,
    seed: u64,
) -> Result<String, JsError> {
    regret_race_json(family, means, policies, horizon, replications, seed)
        .map_err(|e| JsError::new(&e))
}

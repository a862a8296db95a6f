//! Deterministic Monte Carlo simulation of bandit episodes.
//!
//! Reproducibility contract: episode `i` of a run with base seed `s` uses a
//! ChaCha8 generator seeded with `mix_seed(s, i)` (a splitmix64 output, see
//! below), episodes are collected in replication order, and all statistics
//! are reduced sequentially. Results are therefore bit-identical across
//! repeated runs and across worker counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::family::{BanditInstance, ExpFamilyModel, FamilyError};
use crate::policy::{PolicyError, PolicyKind, PolicyState};

/// The default geometric checkpoint ratio, `10^(1/8)` (eight checkpoints
/// per decade).
pub const DEFAULT_CHECKPOINT_RATIO: f64 = 1.333521432163324;

/// Errors raised by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    /// The policy cannot run on the instance family.
    #[error(transparent)]
    Policy(#[from] PolicyError),
    /// A family-level validation failed.
    #[error(transparent)]
    Family(#[from] FamilyError),
    /// Zero replications requested.
    #[error("replications must be at least 1")]
    NoReplications,
    /// A checkpoint ratio that cannot generate a growing grid.
    #[error("checkpoint ratio must be finite and greater than 1, got {0}")]
    BadRatio(f64),
    /// The rayon worker pool could not be built.
    #[error("failed to build worker pool: {0}")]
    WorkerPool(String),
    /// A concentration check needs a crossing point distinct from the mean.
    #[error("crossing point {x} must differ from the mean {mu}")]
    DegenerateCrossing { mu: f64, x: f64 },
}

/// Derives the seed of replication `index` from `base` via the splitmix64
/// output function; equivalently, output `index` of a splitmix64 stream
/// seeded with `base`. Documented so runs can be reproduced bit-exactly by
/// other implementations.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Geometric checkpoint grid: the distinct values of `ceil(ratio^k)` that
/// are at least 2 and below the horizon, followed by the horizon itself.
///
/// The powers are accumulated by repeated multiplication, which is exact
/// enough for the grid and deterministic on every platform.
pub fn geometric_checkpoints(horizon: u64, ratio: f64) -> Vec<u64> {
    assert!(ratio.is_finite() && ratio > 1.0, "checkpoint ratio must exceed 1");
    if horizon == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut x = 1.0f64;
    loop {
        let t = x.ceil() as u64;
        if t >= horizon || x > 1e18 {
            break;
        }
        if t >= 2 && out.last() != Some(&t) {
            out.push(t);
        }
        x *= ratio;
    }
    out.push(horizon);
    out
}

/// Pseudo-regret of a single episode at each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretTrace {
    /// Checkpoint rounds, strictly increasing.
    pub checkpoints: Vec<u64>,
    /// Cumulative pseudo-regret (sum of pulled-arm gaps) at each checkpoint.
    pub regrets: Vec<f64>,
}

/// Options shared by Monte Carlo runs.
#[derive(Debug, Clone, PartialEq)]
pub struct McOptions {
    /// Number of independent episodes.
    pub replications: u64,
    /// Base seed; episode seeds are `mix_seed(base_seed, i)`.
    pub base_seed: u64,
    /// Ratio of the geometric checkpoint grid.
    pub checkpoint_ratio: f64,
    /// Worker threads: `None` uses the global rayon pool; `Some(w)` builds
    /// a dedicated pool (the result is identical either way).
    pub workers: Option<usize>,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            replications: 100,
            base_seed: 0,
            checkpoint_ratio: DEFAULT_CHECKPOINT_RATIO,
            workers: None,
        }
    }
}

/// Checkpointed regret statistics of a policy over many episodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretSummary {
    /// The policy that produced the episodes.
    pub policy: PolicyKind,
    /// Episode length.
    pub horizon: u64,
    /// Number of episodes.
    pub replications: u64,
    /// Checkpoint rounds.
    pub checkpoints: Vec<u64>,
    /// Mean pseudo-regret per checkpoint.
    pub mean_regret: Vec<f64>,
    /// Standard error per checkpoint (sample std over sqrt(replications);
    /// zero when a single episode was run).
    pub stderr: Vec<f64>,
}

/// Runs one episode and records pseudo-regret at the given checkpoints.
///
/// `checkpoints` must be strictly increasing, start at 1 or later, and stay
/// within the horizon. Episode memory is O(arms + checkpoints); no per-round
/// history is kept.
pub fn run_episode(
    kind: PolicyKind,
    instance: &BanditInstance,
    horizon: u64,
    checkpoints: &[u64],
    seed: u64,
) -> Result<RegretTrace, SimError> {
    kind.validate_family(instance.family())?;
    assert!(
        checkpoints.windows(2).all(|w| w[0] < w[1]),
        "checkpoints must be strictly increasing"
    );
    assert!(
        checkpoints.first().map_or(true, |&t| t >= 1)
            && checkpoints.last().map_or(true, |&t| t <= horizon),
        "checkpoints must lie in [1, horizon]"
    );
    Ok(RegretTrace {
        checkpoints: checkpoints.to_vec(),
        regrets: episode_regrets(kind, instance, horizon, checkpoints, seed),
    })
}

/// Episode loop shared by `run_episode` and the Monte Carlo driver; all
/// validation has already happened.
fn episode_regrets(
    kind: PolicyKind,
    instance: &BanditInstance,
    horizon: u64,
    checkpoints: &[u64],
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = instance.family();
    let cap = instance.variance_cap();
    let gaps = instance.gaps();
    let samplers: Vec<_> = instance
        .means()
        .iter()
        .map(|&m| model.reward_sampler(m).expect("instance means are validated"))
        .collect();
    let mut state = PolicyState::new(kind, instance.num_arms());
    let mut regret = 0.0;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    for t in 1..=horizon {
        let arm = state.select_arm(model, cap, &mut rng);
        let reward = samplers[arm].sample(&mut rng);
        state.update(arm, reward);
        regret += gaps[arm];
        while next < checkpoints.len() && checkpoints[next] == t {
            out.push(regret);
            next += 1;
        }
    }
    out
}

/// Runs `f` on the global rayon pool or on a dedicated one of `workers`
/// threads.
fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, SimError> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| SimError::WorkerPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs independent replications of a policy on an instance and reduces
/// them to checkpointed mean regret and standard errors.
///
/// Episodes are distributed over worker threads but collected in
/// replication order and reduced sequentially, so the summary is
/// bit-identical for every worker count.
pub fn run_monte_carlo(
    kind: PolicyKind,
    instance: &BanditInstance,
    horizon: u64,
    opts: &McOptions,
) -> Result<RegretSummary, SimError> {
    kind.validate_family(instance.family())?;
    if opts.replications == 0 {
        return Err(SimError::NoReplications);
    }
    if !(opts.checkpoint_ratio.is_finite() && opts.checkpoint_ratio > 1.0) {
        return Err(SimError::BadRatio(opts.checkpoint_ratio));
    }
    let checkpoints = geometric_checkpoints(horizon, opts.checkpoint_ratio);
    let traces: Vec<Vec<f64>> = with_pool(opts.workers, || {
        (0..opts.replications)
            .into_par_iter()
            .map(|i| episode_regrets(kind, instance, horizon, &checkpoints, mix_seed(opts.base_seed, i)))
            .collect()
    })?;

    let n = opts.replications as f64;
    let mut mean_regret = Vec::with_capacity(checkpoints.len());
    let mut stderr = Vec::with_capacity(checkpoints.len());
    for j in 0..checkpoints.len() {
        let mean = traces.iter().map(|t| t[j]).sum::<f64>() / n;
        let se = if opts.replications > 1 {
            let ss = traces.iter().map(|t| (t[j] - mean) * (t[j] - mean)).sum::<f64>();
            (ss / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            0.0
        };
        mean_regret.push(mean);
        stderr.push(se);
    }
    Ok(RegretSummary {
        policy: kind,
        horizon,
        replications: opts.replications,
        checkpoints,
        mean_regret,
        stderr,
    })
}

/// The instance-dependent constant `sum_i gap_i / kl(mean_i, best)` over
/// suboptimal arms: the slope that `regret / ln t` approaches from below on
/// asymptotically optimal policies.
pub fn asymptotic_constant(instance: &BanditInstance) -> f64 {
    let best = instance.best_mean();
    instance
        .means()
        .iter()
        .filter(|&&m| m < best)
        .map(|&m| {
            let kl = instance
                .family()
                .kl_divergence(m, best)
                .expect("instance means are validated");
            (best - m) / kl
        })
        .sum()
}

/// `mean_regret / ln t` per checkpoint, paired with the checkpoint round.
/// The ratio is infinite at `t = 1` (where `ln t = 0`).
pub fn asymptotic_ratio(summary: &RegretSummary) -> Vec<(u64, f64)> {
    summary
        .checkpoints
        .iter()
        .zip(&summary.mean_regret)
        .map(|(&t, &r)| (t, r / (t as f64).ln()))
        .collect()
}

/// Which side of the mean a running-mean crossing event targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Crossing {
    /// The running mean dips to `x` below the true mean.
    Below,
    /// The running mean rises to `x` above the true mean.
    Above,
}

/// Outcome of one empirical maximal-inequality check.
#[derive(Debug, Clone, Serialize)]
pub struct MaximalCheck {
    /// Reward family.
    pub family: ExpFamilyModel,
    /// True reward mean.
    pub mu: f64,
    /// Crossing threshold (interior, distinct from `mu`).
    pub x: f64,
    /// Direction inferred from the sign of `x - mu`.
    pub direction: Crossing,
    /// First sample size of the window.
    pub from_n: u64,
    /// Last sample size of the window.
    pub to_n: u64,
    /// Number of independent reward streams.
    pub replications: u64,
    /// Fraction of streams whose running mean crossed `x` inside the window.
    pub frequency: f64,
    /// The KL maximal bound `exp(-from_n * kl(x, mu))`.
    pub kl_bound: f64,
    /// The looser sub-Gaussian form `exp(-from_n (x - mu)^2 / (2 max V))`.
    pub subgaussian_bound: f64,
    /// Three binomial standard deviations at the KL bound.
    pub slack: f64,
    /// Whether `frequency <= kl_bound + slack`.
    pub ok: bool,
}

/// Estimates `P(exists n in [from_n, to_n]: running mean crosses x)` for
/// iid rewards with mean `mu` and compares it against the maximal
/// concentration bound `exp(-from_n * kl(x, mu))`.
///
/// The event is monotone in `to_n`; the infinite-window bound applies to
/// any truncation. Streams share the seeding scheme of the simulator.
#[allow(clippy::too_many_arguments)]
pub fn verify_maximal_case(
    family: &ExpFamilyModel,
    mu: f64,
    x: f64,
    from_n: u64,
    to_n: u64,
    replications: u64,
    seed: u64,
) -> Result<MaximalCheck, SimError> {
    if replications == 0 {
        return Err(SimError::NoReplications);
    }
    assert!(from_n >= 1 && from_n <= to_n, "window must satisfy 1 <= from_n <= to_n");
    if x == mu {
        return Err(SimError::DegenerateCrossing { mu, x });
    }
    let kl = family.kl_divergence(x, mu)?;
    let vmax = family.max_variance_on(x, mu)?;
    let direction = if x < mu { Crossing::Below } else { Crossing::Above };
    let sampler = family.reward_sampler(mu)?;
    let n0 = from_n as f64;
    let kl_bound = (-n0 * kl).exp();
    let subgaussian_bound = (-n0 * (x - mu) * (x - mu) / (2.0 * vmax)).exp();

    let mut hits = 0u64;
    for rep in 0..replications {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, rep));
        let mut sum = 0.0;
        for n in 1..=to_n {
            sum += sampler.sample(&mut rng);
            if n >= from_n {
                let mean = sum / n as f64;
                let crossed = match direction {
                    Crossing::Below => mean <= x,
                    Crossing::Above => mean >= x,
                };
                if crossed {
                    hits += 1;
                    break;
                }
            }
        }
    }
    let frequency = hits as f64 / replications as f64;
    let slack = 3.0 * (kl_bound * (1.0 - kl_bound) / replications as f64).sqrt();
    Ok(MaximalCheck {
        family: *family,
        mu,
        x,
        direction,
        from_n,
        to_n,
        replications,
        frequency,
        kl_bound,
        subgaussian_bound,
        slack,
        ok: frequency <= kl_bound + slack,
    })
}

/// One point of the standard-normal tail sandwich.
#[derive(Debug, Clone, Serialize)]
pub struct GaussianTailPoint {
    /// Positive standardized threshold.
    pub z: f64,
    /// Exact tail `P(Z > z)` via the complementary error function.
    pub tail: f64,
    /// Upper envelope `exp(-z^2/2) / (z sqrt(2 pi))`.
    pub upper_bound: f64,
    /// Lower envelope: the `z / (z^2 + 1)` form, improved to
    /// `exp(-z^2/2) / sqrt(8 pi)` on `z <= 1`.
    pub lower_bound: f64,
    /// Whether the sandwich holds at this point (with 1e-12 relative slack).
    pub ok: bool,
}

/// Evaluates the Gaussian tail sandwich on a grid of positive thresholds.
pub fn verify_gaussian_tail(zs: &[f64]) -> Vec<GaussianTailPoint> {
    let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
    zs.iter()
        .map(|&z| {
            assert!(z > 0.0 && z.is_finite(), "thresholds must be positive, got {z}");
            let tail = 0.5 * libm::erfc(z / std::f64::consts::SQRT_2);
            let gauss = (-0.5 * z * z).exp();
            let upper_bound = gauss / (z * sqrt_2pi);
            let mut lower_bound = z / ((z * z + 1.0) * sqrt_2pi) * gauss;
            if z <= 1.0 {
                lower_bound = lower_bound.max(gauss / (8.0 * std::f64::consts::PI).sqrt());
            }
            let ok = lower_bound * (1.0 - 1e-12) <= tail && tail <= upper_bound * (1.0 + 1e-12);
            GaussianTailPoint { z, tail, upper_bound, lower_bound, ok }
        })
        .collect()
}

//! Self-contained verification suites.
//!
//! Each suite pairs a default case grid with a driver that produces a
//! serializable report; the CLI prints the reports and the integration
//! tests assert on them, so both always agree on what was checked.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::family::{BanditInstance, ExpFamilyModel};
use crate::policy::PolicyKind;
use crate::sampler::{self, SamplerParams};
use crate::simulate::{
    mix_seed, run_monte_carlo, verify_maximal_case, MaximalCheck, McOptions, SimError,
};

/// Two-sided Kolmogorov-Smirnov critical value at significance `alpha` for
/// `n` draws (asymptotic form `sqrt(ln(2 / alpha) / 2) / sqrt(n)`).
pub fn ks_critical(n: u64, alpha: f64) -> f64 {
    assert!(n > 0 && alpha > 0.0 && alpha < 1.0);
    ((2.0 / alpha).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// One sampling-distribution case of the tails suite.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailsCase {
    /// Reward family.
    pub family: ExpFamilyModel,
    /// Interior mean estimate.
    pub mu: f64,
    /// Pull count (at least 2, so every draw is finite).
    pub n: u64,
}

/// A single tail-frequency comparison at a threshold.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailCheck {
    /// Threshold.
    pub z: f64,
    /// Analytic `P(theta >= z)`.
    pub expected: f64,
    /// Empirical frequency of `theta >= z`.
    pub observed: f64,
    /// One binomial standard deviation at the analytic value.
    pub sigma: f64,
    /// Whether `|observed - expected| <= 3 sigma`.
    pub ok: bool,
}

/// Outcome of one tails-suite case.
#[derive(Debug, Clone, Serialize)]
pub struct TailsOutcome {
    /// The case.
    pub case: TailsCase,
    /// Number of draws.
    pub draws: u64,
    /// Two-sided KS statistic of the draws against the analytic CDF.
    pub ks_statistic: f64,
    /// Critical value at significance 0.001.
    pub ks_critical: f64,
    /// Tail comparisons at the 5%, 25%, 75% and 95% quantiles.
    pub tail_checks: Vec<TailCheck>,
    /// KS below critical and all tail checks within 3 sigma.
    pub ok: bool,
}

/// Report of the whole tails suite.
#[derive(Debug, Clone, Serialize)]
pub struct TailsReport {
    /// Per-case outcomes.
    pub outcomes: Vec<TailsOutcome>,
    /// Whether every case passed.
    pub ok: bool,
}

/// The default tails grid: every family, mixed means and pull counts.
///
/// Cases keep `n b_n * min(mu, 1 - mu) >= 1/2` on the bounded family so the
/// interior clamp margin carries invisible probability mass (under 1e-6).
pub fn default_tails_cases() -> Vec<TailsCase> {
    let gauss1 = ExpFamilyModel::gaussian(1.0).unwrap();
    let gauss4 = ExpFamilyModel::gaussian(4.0).unwrap();
    let gamma2 = ExpFamilyModel::gamma(2.0).unwrap();
    let gamma_half = ExpFamilyModel::gamma(0.5).unwrap();
    vec![
        TailsCase { family: ExpFamilyModel::Bernoulli, mu: 0.5, n: 2 },
        TailsCase { family: ExpFamilyModel::Bernoulli, mu: 0.3, n: 5 },
        TailsCase { family: ExpFamilyModel::Bernoulli, mu: 0.8, n: 10 },
        TailsCase { family: ExpFamilyModel::Bernoulli, mu: 0.5, n: 50 },
        TailsCase { family: gauss1, mu: 0.0, n: 2 },
        TailsCase { family: gauss1, mu: 2.5, n: 20 },
        TailsCase { family: gauss4, mu: -1.0, n: 8 },
        TailsCase { family: ExpFamilyModel::Exponential, mu: 1.0, n: 3 },
        TailsCase { family: ExpFamilyModel::Exponential, mu: 2.0, n: 12 },
        TailsCase { family: ExpFamilyModel::Exponential, mu: 0.5, n: 40 },
        TailsCase { family: gamma2, mu: 1.5, n: 6 },
        TailsCase { family: gamma_half, mu: 2.0, n: 15 },
        TailsCase { family: ExpFamilyModel::Poisson, mu: 3.0, n: 4 },
        TailsCase { family: ExpFamilyModel::Poisson, mu: 1.3, n: 25 },
        TailsCase { family: ExpFamilyModel::Poisson, mu: 8.0, n: 9 },
    ]
}

/// Draws `draws` samples per case and checks the distribution two ways:
/// a KS test against the analytic CDF (significance 0.001) and empirical
/// tail frequencies against the analytic tails at four quantiles (3 sigma).
pub fn verify_tails_suite(cases: &[TailsCase], draws: u64, seed: u64) -> TailsReport {
    let outcomes: Vec<TailsOutcome> = cases
        .iter()
        .enumerate()
        .map(|(idx, case)| run_tails_case(case, draws, mix_seed(seed, idx as u64)))
        .collect();
    let ok = outcomes.iter().all(|o| o.ok);
    TailsReport { outcomes, ok }
}

fn run_tails_case(case: &TailsCase, draws: u64, seed: u64) -> TailsOutcome {
    assert!(case.n >= 2, "tails cases need finite draws (n >= 2)");
    let params = SamplerParams::new(case.mu, case.n);
    let model = &case.family;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<f64> = (0..draws)
        .map(|_| {
            let s = sampler::sample(model, &params, &mut rng).expect("case parameters are valid");
            debug_assert!(s.is_finite());
            s.value()
        })
        .collect();
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite draws"));

    // Two-sided KS distance between the empirical staircase and the CDF.
    let n = draws as f64;
    let mut ks_statistic: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = sampler::cdf(model, &params, x).expect("draws lie in the support");
        ks_statistic = ks_statistic.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }

    // Tail frequencies at fixed quantiles of the analytic distribution.
    let tail_checks: Vec<TailCheck> = [0.05, 0.25, 0.75, 0.95]
        .iter()
        .map(|&q| {
            let z = sampler::sample_with_uniform(model, &params, q)
                .expect("case parameters are valid")
                .value();
            let expected =
                sampler::tail_probability(model, &params, z).expect("z lies in the support");
            // Draws are sorted: count the suffix with theta >= z.
            let observed = (draws - xs.partition_point(|&x| x < z) as u64) as f64 / n;
            let sigma = (expected * (1.0 - expected) / n).sqrt();
            let ok = (observed - expected).abs() <= 3.0 * sigma;
            TailCheck { z, expected, observed, sigma, ok }
        })
        .collect();

    let crit = ks_critical(draws, 0.001);
    let ok = ks_statistic < crit && tail_checks.iter().all(|c| c.ok);
    TailsOutcome {
        case: *case,
        draws,
        ks_statistic,
        ks_critical: crit,
        tail_checks,
        ok,
    }
}

/// The default maximal-inequality grid: 21 cases over all five families,
/// both crossing directions and varied windows.
pub fn default_maximal_cases() -> Vec<(ExpFamilyModel, f64, f64, u64, u64)> {
    let bern = ExpFamilyModel::Bernoulli;
    let gauss1 = ExpFamilyModel::gaussian(1.0).unwrap();
    let gauss4 = ExpFamilyModel::gaussian(4.0).unwrap();
    let exp = ExpFamilyModel::Exponential;
    let gamma2 = ExpFamilyModel::gamma(2.0).unwrap();
    let pois = ExpFamilyModel::Poisson;
    vec![
        (bern, 0.6, 0.4, 1, 30),
        (bern, 0.6, 0.4, 5, 60),
        (bern, 0.6, 0.4, 20, 120),
        (bern, 0.6, 0.5, 1, 30),
        (bern, 0.6, 0.5, 5, 60),
        (bern, 0.6, 0.5, 20, 120),
        (bern, 0.3, 0.45, 5, 60),
        (bern, 0.3, 0.45, 50, 200),
        (gauss1, 0.0, -0.3, 1, 30),
        (gauss1, 0.0, -0.3, 10, 100),
        (gauss1, 0.0, 0.5, 5, 60),
        (gauss4, 1.0, 0.0, 10, 100),
        (exp, 2.0, 1.4, 5, 60),
        (exp, 2.0, 1.4, 20, 120),
        (exp, 2.0, 3.0, 10, 100),
        (gamma2, 1.5, 1.0, 5, 60),
        (gamma2, 1.5, 2.2, 20, 120),
        (pois, 3.0, 2.2, 5, 60),
        (pois, 3.0, 2.2, 20, 120),
        (pois, 3.0, 4.0, 10, 100),
        (pois, 1.0, 0.5, 10, 100),
    ]
}

/// Report of the maximal-inequality suite.
#[derive(Debug, Clone, Serialize)]
pub struct MaximalReport {
    /// Per-case outcomes.
    pub checks: Vec<MaximalCheck>,
    /// Whether every case respected its bound.
    pub ok: bool,
}

/// Runs the maximal-inequality grid with `replications` reward streams per
/// case.
pub fn verify_maximal_suite(replications: u64, seed: u64) -> Result<MaximalReport, SimError> {
    let checks = default_maximal_cases()
        .iter()
        .enumerate()
        .map(|(idx, &(family, mu, x, from_n, to_n))| {
            verify_maximal_case(&family, mu, x, from_n, to_n, replications, mix_seed(seed, idx as u64))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ok = checks.iter().all(|c| c.ok);
    Ok(MaximalReport { checks, ok })
}

/// One cell of the minimax sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    /// Number of arms.
    pub num_arms: usize,
    /// Horizon.
    pub horizon: u64,
    /// Gap between the unique best arm and the rest, `sqrt(K / T)`.
    pub gap: f64,
    /// Mean final pseudo-regret.
    pub mean_regret: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    /// The ceiling `10 sqrt(V K T)` the mean must stay under.
    pub ceiling: f64,
}

/// Report of the minimax sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    /// The swept policy.
    pub policy: PolicyKind,
    /// Replications per cell.
    pub replications: u64,
    /// All cells, grouped by arm count in horizon order.
    pub cells: Vec<SweepCell>,
    /// Fitted log-log slope of mean regret against horizon, per arm count.
    pub slopes: Vec<(usize, f64)>,
    /// Acceptance band for the slopes.
    pub slope_band: (f64, f64),
    /// All slopes inside the band and all cells under their ceilings.
    pub ok: bool,
}

/// Sweeps worst-case-style Gaussian instances (unit variance, a single
/// best arm ahead by `sqrt(K / T)`) over `K` in {2, 10, 50} and `T` in
/// {10^3, 10^4, 10^5}, and fits the growth of mean regret in `T`.
///
/// A square-root-like growth lands the fitted log-log slope near 1/2; the
/// accepted band is [0.40, 0.62].
pub fn sweep_minimax(
    policy: PolicyKind,
    replications: u64,
    base_seed: u64,
    workers: Option<usize>,
) -> Result<SweepReport, SimError> {
    const ARMS: [usize; 3] = [2, 10, 50];
    const HORIZONS: [u64; 3] = [1_000, 10_000, 100_000];
    const SLOPE_BAND: (f64, f64) = (0.40, 0.62);
    let model = ExpFamilyModel::gaussian(1.0).unwrap();

    let mut cells = Vec::new();
    let mut slopes = Vec::new();
    for (ki, &k) in ARMS.iter().enumerate() {
        let mut points = Vec::new();
        for (ti, &horizon) in HORIZONS.iter().enumerate() {
            let gap = (k as f64 / horizon as f64).sqrt();
            let mut means = vec![0.0; k];
            means[0] = gap;
            let instance = BanditInstance::new(model, means, 1.0).expect("valid sweep instance");
            let opts = McOptions {
                replications,
                base_seed: mix_seed(base_seed, (ki * HORIZONS.len() + ti) as u64),
                // A huge ratio keeps only the final checkpoint.
                checkpoint_ratio: 1e15,
                workers,
            };
            let summary = run_monte_carlo(policy, &instance, horizon, &opts)?;
            let mean_regret = *summary.mean_regret.last().expect("one checkpoint");
            let stderr = *summary.stderr.last().expect("one checkpoint");
            let ceiling = 10.0 * (k as f64 * horizon as f64).sqrt();
            points.push(((horizon as f64).ln(), mean_regret.max(f64::MIN_POSITIVE).ln()));
            cells.push(SweepCell { num_arms: k, horizon, gap, mean_regret, stderr, ceiling });
        }
        slopes.push((k, least_squares_slope(&points)));
    }
    let ok = slopes.iter().all(|&(_, s)| (SLOPE_BAND.0..=SLOPE_BAND.1).contains(&s))
        && cells.iter().all(|c| c.mean_regret <= c.ceiling);
    Ok(SweepReport { policy, replications, cells, slopes, slope_band: SLOPE_BAND, ok })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    let sxx = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
    sxy / sxx
}

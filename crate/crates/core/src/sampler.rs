//! The anytime KL-tail sampling distribution.
//!
//! For an interior mean `mu`, a pull count `n >= 1` and the anytime
//! coefficient `b_n = (n - 1) / n`, the distribution has density
//!
//! ```text
//! f(x) = n b_n |x - mu| / (2 V(x)) * exp(-n b_n kl(mu, x))
//! ```
//!
//! on the open mean support, which gives the exact two-sided tails
//! `P(theta >= z) = exp(-n b_n kl(mu, z)) / 2` for `z >= mu` and
//! `P(theta <= z) = exp(-n b_n kl(mu, z)) / 2` for `z <= mu`. Draws are
//! produced by inverting the CDF: a uniform `y` picks a tail and a target
//! `c`, and the sample is the solution of `kl(mu, x) = c` on that side.
//!
//! With `n = 1` the exponent vanishes and the distribution degenerates to
//! two half-weight points on the support boundary; unbounded boundaries are
//! reported as infinite sentinel samples, bounded ones are clamped just
//! inside the support (margin 2^-40, see below), so downstream KL machinery
//! always receives admissible values.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::family::{ExpFamilyModel, FamilyError};

/// Which tail of the sampling distribution a KL inversion targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailSide {
    /// Roots below the mean.
    Lower,
    /// Roots above the mean.
    Upper,
}

impl std::fmt::Display for TailSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TailSide::Lower => write!(f, "lower"),
            TailSide::Upper => write!(f, "upper"),
        }
    }
}

/// Errors raised by sampler operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    /// The underlying family rejected a mean or evaluation point.
    #[error(transparent)]
    Family(#[from] FamilyError),
    /// The KL inversion target is NaN or negative.
    #[error("inversion target {target} is not a valid KL value")]
    InvalidTarget { target: f64 },
    /// The requested uniform variate is outside the open interval (0, 1).
    #[error("uniform variate {y} is outside the open interval (0, 1)")]
    InvalidUniform { y: f64 },
    /// The root of `kl(mu, x) = target` lies closer to a bounded support
    /// edge than the representable interior margin; callers clamp.
    #[error("KL target {target} has no representable root toward the {side} support boundary")]
    BoundaryOverflow { target: f64, side: TailSide },
}

/// The anytime coefficient `b_n = (n - 1) / n`.
pub fn anytime_coefficient(n: u64) -> f64 {
    assert!(n >= 1, "pull count must be at least 1");
    (n - 1) as f64 / n as f64
}

/// Parameters of the sampling distribution: an (interior) mean estimate, a
/// pull count and the tail-sharpening coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerParams {
    mu: f64,
    n: u64,
    coeff: f64,
}

impl SamplerParams {
    /// Parameters with the standard anytime coefficient `(n - 1) / n`.
    ///
    /// Panics if `n == 0`; `mu` is validated against the family by each
    /// operation.
    pub fn new(mu: f64, n: u64) -> Self {
        Self::with_coeff(mu, n, anytime_coefficient(n))
    }

    /// Parameters with an explicit coefficient (for experimentation).
    ///
    /// Panics if `n == 0` or `coeff` is negative or non-finite.
    pub fn with_coeff(mu: f64, n: u64, coeff: f64) -> Self {
        assert!(n >= 1, "pull count must be at least 1");
        assert!(coeff.is_finite() && coeff >= 0.0, "coefficient must be finite and nonnegative");
        SamplerParams { mu, n, coeff }
    }

    /// The mean estimate.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// The pull count.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// The tail-sharpening coefficient.
    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    /// The exponent scale `n * coeff`; zero exactly when `n = 1` under the
    /// anytime coefficient.
    pub fn scaled_count(&self) -> f64 {
        self.n as f64 * self.coeff
    }
}

/// A draw from the sampling distribution over the extended reals.
///
/// Finite draws always lie in the closed interior clamp interval of the
/// family; infinite draws are the boundary sentinels of unbounded supports.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExtendedSample(f64);

impl ExtendedSample {
    /// The sampled value, possibly an infinite sentinel.
    pub fn value(self) -> f64 {
        self.0
    }

    /// Whether the draw is a finite point of the support.
    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

/// Density of the sampling distribution at `x`.
///
/// Zero outside the open mean support (including on bounded boundaries,
/// where only the integrable-limit convention matters) and identically zero
/// when `n = 1`.
pub fn pdf(model: &ExpFamilyModel, params: &SamplerParams, x: f64) -> Result<f64, SamplerError> {
    model.variance_at(params.mu)?;
    if x.is_nan() {
        let (lo, hi) = model.mean_support();
        return Err(FamilyError::PointOutsideSupport { value: x, lo, hi }.into());
    }
    let (lo, hi) = model.mean_support();
    if x <= lo || x >= hi {
        return Ok(0.0);
    }
    let nb = params.scaled_count();
    if nb == 0.0 {
        return Ok(0.0);
    }
    let kl = model.kl_divergence(params.mu, x)?;
    let v = model.variance_at(x)?;
    Ok(nb * (x - params.mu).abs() / (2.0 * v) * (-nb * kl).exp())
}

/// CDF of the sampling distribution, `P(theta <= x)`, over the extended
/// reals: 0 at or below the lower boundary, 1 at or above the upper one,
/// and exactly 1/2 at `x = mu`.
pub fn cdf(model: &ExpFamilyModel, params: &SamplerParams, x: f64) -> Result<f64, SamplerError> {
    model.variance_at(params.mu)?;
    if x.is_nan() {
        let (lo, hi) = model.mean_support();
        return Err(FamilyError::PointOutsideSupport { value: x, lo, hi }.into());
    }
    let (lo, hi) = model.mean_support();
    if x <= lo {
        return Ok(0.0);
    }
    if x >= hi {
        return Ok(1.0);
    }
    let half_tail = 0.5 * (-params.scaled_count() * model.kl_divergence(params.mu, x)?).exp();
    Ok(if x >= params.mu { 1.0 - half_tail } else { half_tail })
}

/// Upper tail of the sampling distribution, `P(theta >= z)`, computed
/// without cancellation on either side of the mean.
pub fn tail_probability(
    model: &ExpFamilyModel,
    params: &SamplerParams,
    z: f64,
) -> Result<f64, SamplerError> {
    model.variance_at(params.mu)?;
    if z.is_nan() {
        let (lo, hi) = model.mean_support();
        return Err(FamilyError::PointOutsideSupport { value: z, lo, hi }.into());
    }
    let (lo, hi) = model.mean_support();
    if z <= lo {
        return Ok(1.0);
    }
    if z >= hi {
        return Ok(0.0);
    }
    let half_tail = 0.5 * (-params.scaled_count() * model.kl_divergence(params.mu, z)?).exp();
    Ok(if z >= params.mu { half_tail } else { 1.0 - half_tail })
}

/// Solves `kl(mu, x) = target` for `x` on the requested side of `mu`.
///
/// `target = 0` returns `mu`; `target = +inf` returns the boundary point of
/// that side (which is infinite on unbounded sides). Finite targets whose
/// root would fall between a bounded boundary and the interior clamp margin
/// yield [`SamplerError::BoundaryOverflow`]; finite targets whose root
/// exceeds the f64 range on an unbounded side collapse to the infinite
/// sentinel. The Gaussian case is closed-form; all other families use
/// bracketed bisection with a guarded-Newton fast path (the bracket is the
/// correctness argument, Newton only accelerates).
pub fn invert_kl(
    model: &ExpFamilyModel,
    mu: f64,
    target: f64,
    side: TailSide,
) -> Result<f64, SamplerError> {
    model.variance_at(mu)?;
    if target.is_nan() || target < 0.0 {
        return Err(SamplerError::InvalidTarget { target });
    }
    if target == 0.0 {
        return Ok(mu);
    }
    // Closed form: kl = (mu - x)^2 / (2 variance).
    if let ExpFamilyModel::Gaussian { variance } = model {
        let w = (2.0 * variance * target).sqrt();
        return Ok(match side {
            TailSide::Upper => mu + w,
            TailSide::Lower => mu - w,
        });
    }
    let (lo, hi) = model.mean_support();
    if target.is_infinite() {
        return Ok(match side {
            TailSide::Upper => hi,
            TailSide::Lower => lo,
        });
    }
    let (clamp_lo, clamp_hi) = model.clamp_interval(mu);
    match side {
        TailSide::Lower => {
            // Every non-Gaussian family is bounded below; the bracket is
            // [clamp edge, mu].
            let edge = clamp_lo.min(mu);
            let at_edge = model.kl_divergence(mu, edge)?;
            if at_edge < target {
                return Err(SamplerError::BoundaryOverflow { target, side });
            }
            Ok(solve_on_bracket(model, mu, target, edge, mu, at_edge - target, -target))
        }
        TailSide::Upper => {
            if hi.is_finite() {
                let edge = clamp_hi.max(mu);
                let at_edge = model.kl_divergence(mu, edge)?;
                if at_edge < target {
                    return Err(SamplerError::BoundaryOverflow { target, side });
                }
                return Ok(solve_on_bracket(model, mu, target, mu, edge, -target, at_edge - target));
            }
            // Unbounded above: grow a bracket by doubling an initial width
            // derived from the local curvature, kl ~ (x - mu)^2 / (2 V(mu)).
            let v_mu = model.variance_at(mu)?;
            let mut w = (2.0 * v_mu * target).sqrt();
            if w == 0.0 || mu + w == mu {
                return Ok(mu);
            }
            let mut lo_x = mu;
            let mut lo_h = -target;
            for _ in 0..4400 {
                let hi_x = mu + w;
                if hi_x.is_infinite() {
                    return Ok(f64::INFINITY);
                }
                let hi_h = model.kl_divergence(mu, hi_x)? - target;
                if hi_h >= 0.0 {
                    return Ok(solve_on_bracket(model, mu, target, lo_x, hi_x, lo_h, hi_h));
                }
                lo_x = hi_x;
                lo_h = hi_h;
                w *= 2.0;
            }
            unreachable!("doubling bracket reaches infinity in finitely many steps");
        }
    }
}

/// Bisection with a guarded-Newton fast path on a bracket that lies on one
/// side of `mu`, where `h(x) = kl(mu, x) - target` is monotone.
///
/// Preconditions: `lo <= hi`, `h_lo` and `h_hi` have opposite (or zero)
/// signs, and both ends are admissible KL evaluation points.
fn solve_on_bracket(
    model: &ExpFamilyModel,
    mu: f64,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    mut h_lo: f64,
    h_hi: f64,
) -> f64 {
    if h_lo == 0.0 {
        return lo;
    }
    if h_hi == 0.0 {
        return hi;
    }
    debug_assert!((h_lo < 0.0) != (h_hi < 0.0), "bracket must straddle the root");
    let h_scale = target.max(1.0);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..256 {
        let hx = model.kl_divergence(mu, x).expect("bracket stays inside the support") - target;
        if hx == 0.0 || hx.abs() <= 1e-12 * h_scale {
            return x;
        }
        if (hx < 0.0) == (h_lo < 0.0) {
            lo = x;
            h_lo = hx;
        } else {
            hi = x;
        }
        // Bracket widths are relative: every non-Gaussian bracket is
        // strictly positive, so hi bounds the scale of both ends.
        if hi - lo <= 1e-13 * hi {
            return 0.5 * (lo + hi);
        }
        // Newton step on h, with derivative (x - mu) / V(x); fall back to
        // the midpoint whenever it leaves the bracket.
        let d = (x - mu) / model.variance_at(x).expect("bracket stays inside the support");
        let candidate = x - hx / d;
        let next = if candidate.is_finite() && candidate > lo && candidate < hi {
            candidate
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-14 * x.abs() {
            return next;
        }
        x = next;
    }
    0.5 * (lo + hi)
}

/// Maps an inversion outcome to an extended sample: finite roots are
/// clamped into the interior margin, infinite roots pass through as
/// sentinels, and overflow toward a bounded edge lands on the margin.
fn root_to_sample(
    model: &ExpFamilyModel,
    mu: f64,
    root: Result<f64, SamplerError>,
) -> Result<ExtendedSample, SamplerError> {
    let (clamp_lo, clamp_hi) = model.clamp_interval(mu);
    match root {
        Ok(x) if x.is_finite() => Ok(ExtendedSample(x.clamp(clamp_lo.min(mu), clamp_hi.max(mu)))),
        Ok(inf) => Ok(ExtendedSample(inf)),
        Err(SamplerError::BoundaryOverflow { side, .. }) => Ok(ExtendedSample(match side {
            TailSide::Upper => clamp_hi.max(mu),
            TailSide::Lower => clamp_lo.min(mu),
        })),
        Err(e) => Err(e),
    }
}

/// Draws from the sampling distribution by inverting the CDF at `y`.
///
/// `y >= 1/2` targets the upper tail with `kl` target `-ln(2(1 - y)) / (n
/// b_n)` and the lower tail mirrors it with `-ln(2 y) / (n b_n)`; `y` must
/// lie strictly inside (0, 1).
pub fn sample_with_uniform(
    model: &ExpFamilyModel,
    params: &SamplerParams,
    y: f64,
) -> Result<ExtendedSample, SamplerError> {
    if !(y > 0.0 && y < 1.0) {
        return Err(SamplerError::InvalidUniform { y });
    }
    let nb = params.scaled_count();
    let (side, raw) = if y >= 0.5 {
        (TailSide::Upper, -(2.0 * (1.0 - y)).ln())
    } else {
        (TailSide::Lower, -(2.0 * y).ln())
    };
    // With a vanishing exponent every draw sits on the boundary.
    let target = if nb == 0.0 { f64::INFINITY } else { raw / nb };
    root_to_sample(model, params.mu, invert_kl(model, params.mu, target, side))
}

/// Draws from the sampling distribution using fresh uniform randomness.
pub fn sample<R: Rng + ?Sized>(
    model: &ExpFamilyModel,
    params: &SamplerParams,
    rng: &mut R,
) -> Result<ExtendedSample, SamplerError> {
    // random::<f64>() covers [0, 1); redraw the measure-zero 0.
    let y = loop {
        let y = rng.random::<f64>();
        if y > 0.0 {
            break y;
        }
    };
    sample_with_uniform(model, params, y)
}

/// Greedy-mixture draw: with probability `1 - 1/num_arms` returns the mean
/// estimate itself, otherwise defers to [`sample`]. With one arm it always
/// defers (and consumes no mixture coin).
pub fn sample_plus<R: Rng + ?Sized>(
    model: &ExpFamilyModel,
    params: &SamplerParams,
    num_arms: usize,
    rng: &mut R,
) -> Result<ExtendedSample, SamplerError> {
    assert!(num_arms >= 1, "arm count must be at least 1");
    if num_arms > 1 {
        let greedy_prob = 1.0 - 1.0 / num_arms as f64;
        if rng.random::<f64>() < greedy_prob {
            model.variance_at(params.mu)?;
            return Ok(ExtendedSample(params.mu));
        }
    }
    sample(model, params, rng)
}

/// One point of a tabulated sampling distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    /// Evaluation point.
    pub x: f64,
    /// Density at `x`.
    pub pdf: f64,
    /// `P(theta <= x)`.
    pub cdf: f64,
    /// `P(theta >= x)`.
    pub tail: f64,
}

/// Tabulates the density, CDF and tail on an equally spaced grid covering
/// the central 99.8% of the distribution (quantiles 0.001 to 0.999), with
/// the grid point nearest the mean snapped to exactly `mu` (where the CDF
/// is exactly one half).
///
/// Quantiles that are infinite sentinels (single-pull parameters on an
/// unbounded support) fall back to four posterior standard deviations
/// around the mean. Panics if `points < 2`.
pub fn sampler_curve(
    model: &ExpFamilyModel,
    params: &SamplerParams,
    points: usize,
) -> Result<Vec<CurvePoint>, SamplerError> {
    assert!(points >= 2, "a curve needs at least two points");
    let spread = 4.0 * model.variance_at(params.mu)?.sqrt();
    let lo_q = sample_with_uniform(model, params, 0.001)?.value();
    let hi_q = sample_with_uniform(model, params, 0.999)?.value();
    let mut lo = if lo_q.is_finite() { lo_q } else { params.mu - spread };
    let mut hi = if hi_q.is_finite() { hi_q } else { params.mu + spread };
    if !(lo < hi) {
        lo = params.mu - spread;
        hi = params.mu + spread;
    }
    let step = (hi - lo) / (points - 1) as f64;
    let nearest_to_mu = (((params.mu - lo) / step).round() as usize).min(points - 1);
    (0..points)
        .map(|i| {
            let x = if i == nearest_to_mu { params.mu } else { lo + step * i as f64 };
            Ok(CurvePoint {
                x,
                pdf: pdf(model, params, x)?,
                cdf: cdf(model, params, x)?,
                tail: tail_probability(model, params, x)?,
            })
        })
        .collect()
}

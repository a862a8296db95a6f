//! Numeric oracles for the acceptance tests, independent of the library's
//! own closed forms: an adaptive Simpson integrator and literal variance
//! functions, so KL values and distribution masses can be recomputed from
//! their defining integrals.

use expts::family::ExpFamilyModel;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol` (Richardson-corrected, tolerance halved per split).
///
/// The first six subdivision levels are unconditional: the halved-interval
/// agreement test can be fooled by integrands whose coarse and refined
/// Simpson sums coincide by accident, so convergence is only trusted on
/// intervals no wider than 1/64 of the original.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        force: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || (force == 0 && delta.abs() <= 15.0 * tol) {
            return left + right + delta / 15.0;
        }
        let half_tol = 0.5 * tol;
        let deeper = force.saturating_sub(1);
        recurse(f, a, m, fa, flm, fm, left, half_tol, depth - 1, deeper)
            + recurse(f, m, b, fm, frm, fb, right, half_tol, depth - 1, deeper)
    }

    assert!(a.is_finite() && b.is_finite() && a < b);
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 64, 6)
}

/// The variance function `V(x)`, written out literally per family.
pub fn oracle_variance(model: &ExpFamilyModel, x: f64) -> f64 {
    match *model {
        ExpFamilyModel::Bernoulli => x * (1.0 - x),
        ExpFamilyModel::Gaussian { variance } => variance,
        ExpFamilyModel::Exponential => x * x,
        ExpFamilyModel::Gamma { shape } => x * x / shape,
        ExpFamilyModel::Poisson => x,
    }
}

/// KL divergence recomputed from its defining integral
/// `kl(mu, mu') = integral from mu to mu' of (x - mu) / V(x) dx`.
pub fn oracle_kl(model: &ExpFamilyModel, mu: f64, mu_prime: f64, tol: f64) -> f64 {
    if mu == mu_prime {
        return 0.0;
    }
    let integrand = move |x: f64| (x - mu) / oracle_variance(model, x);
    if mu < mu_prime {
        adaptive_simpson(&integrand, mu, mu_prime, tol)
    } else {
        // Reversed bounds flip the integral's sign once.
        -adaptive_simpson(&integrand, mu_prime, mu, tol)
    }
}

//! First-order Marcum Q function.
//!
//! Q₁(a, b) is the tail P(X > b²) of a non-central χ² variable with two
//! degrees of freedom and non-centrality a². Writing X as a Poisson(a²/2)
//! mixture of central χ²_{2(K+1)} variables, and using
//! P(χ²_{2(k+1)} > b²) = P(Poisson(b²/2) ≤ k), gives
//!
//! ```text
//! Q₁(a, b) = Σ_k Pois(k; a²/2) · P(Pois(b²/2) ≤ k)
//! ```
//!
//! Every term is non-negative, so there is no cancellation. Both Poisson
//! laws are summed only over the window μ ± t(μ), where t is chosen from
//! Bernstein's inequality so that the mass outside is below 2e⁻⁴⁰ ≈ 8.5e-18.
//! Window weights come from the pmf ratio recurrence and are normalized, so
//! the absolute error of the result is dominated by rounding and stays well
//! below 1e-12.

/// ln k! exactly for small k, otherwise Stirling's series (error < 1e-15).
pub fn ln_factorial(k: u64) -> f64 {
    if k < 32 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

pub fn poisson_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (-mean + k as f64 * mean.ln() - ln_factorial(k)).exp()
}

/// Index window [lo, hi] holding all but 2e⁻⁴⁰ of the Poisson(mean) mass.
fn window(mean: f64) -> (u64, u64) {
    // P(|X − μ| ≥ t) ≤ 2 exp(−t² / (2(μ + t/3))) = 2e⁻⁴⁰
    let c: f64 = 40.0;
    let t = (2.0 * c / 3.0 + ((2.0 * c / 3.0).powi(2) + 8.0 * c * mean).sqrt()) / 2.0;
    let lo = (mean - t).floor().max(0.0) as u64;
    let hi = (mean + t).ceil() as u64;
    (lo, hi)
}

/// Poisson(mean) weights over its window, built by the ratio recurrence
/// outward from the mode and normalized to sum to one. Normalizing removes
/// the common rounding error that evaluating each pmf in the log domain
/// would carry.
fn window_weights(mean: f64) -> (u64, Vec<f64>) {
    let (lo, hi) = window(mean);
    let mode = (mean.floor() as u64).clamp(lo, hi);
    let mut w = vec![0.0; (hi - lo + 1) as usize];
    let at = |k: u64| (k - lo) as usize;
    w[at(mode)] = 1.0;
    for k in mode..hi {
        w[at(k + 1)] = w[at(k)] * mean / (k + 1) as f64;
    }
    for k in (lo + 1..=mode).rev() {
        w[at(k - 1)] = w[at(k)] * k as f64 / mean;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    (lo, w)
}

pub fn marcum_q1(a: f64, b: f64) -> f64 {
    assert!(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite(), "Q1({a}, {b}) undefined");
    if b == 0.0 {
        return 1.0;
    }
    if a == 0.0 {
        return (-b * b / 2.0).exp();
    }
    let lam = a * a / 2.0;
    let beta = b * b / 2.0;
    let (lo, hi) = window(lam);
    let (blo, bhi) = window(beta);
    if lo > bhi {
        return 1.0;
    }
    if hi < blo {
        return 0.0;
    }
    let (_, wl) = window_weights(lam);
    let (_, wb) = window_weights(beta);
    // P(Pois(β) ≤ lo − 1)
    let mut cdf: f64 = (blo..lo.min(bhi + 1)).map(|i| wb[(i - blo) as usize]).sum();
    let mut q = 0.0;
    for k in lo..=hi {
        if k >= blo && k <= bhi {
            cdf += wb[(k - blo) as usize];
        }
        q += wl[(k - lo) as usize] * cdf.min(1.0);
    }
    q.clamp(0.0, 1.0)
}

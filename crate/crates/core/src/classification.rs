//! MAP classification of a scatter point from the magnitude of its
//! estimated channel coefficient.
//!
//! Under hypothesis H_i the coefficient β is circular Gaussian, and the
//! estimate β̂ = β + e adds independent estimation noise of variance σ_β̂².
//! |β̂| is then Rayleigh distributed with combined power s_i² = 2ς_i² + σ_β̂².
//! All decisions work on t = |β̂|², where each log-likelihood is a line in t.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::LinkBudget;
use crate::geometry::SpKind;
use crate::rng::{complex_gaussian, stream};
use crate::{Error, Result};

/// Priors and RCS amplitudes of the three hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    priors: [f64; 3],
    rcs_sqrts: [f64; 3],
}

impl HypothesisSet {
    pub fn new(priors: [f64; 3], rcs_sqrts: [f64; 3]) -> Result<Self> {
        if priors.iter().any(|p| !(0.0..=1.0).contains(p)) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!("priors {priors:?} must be probabilities summing to 1")));
        }
        if rcs_sqrts[0] != 0.0 || !(rcs_sqrts[1] >= 0.0) || !(rcs_sqrts[1] < rcs_sqrts[2]) {
            return Err(Error::InvalidConfig(format!("RCS amplitudes {rcs_sqrts:?} must satisfy 0 = s0 <= s1 < s2")));
        }
        Ok(Self { priors, rcs_sqrts })
    }

    /// Uniform priors, NUE at 1 dB·m², object at 17 dB·m².
    pub fn table_one() -> Self {
        Self::new([1.0 / 3.0; 3], [0.0, crate::db_to_amplitude(1.0), crate::db_to_amplitude(17.0)]).unwrap()
    }

    pub fn priors(&self) -> [f64; 3] {
        self.priors
    }

    pub fn rcs_sqrts(&self) -> [f64; 3] {
        self.rcs_sqrts
    }

    pub fn rcs_sqrt(&self, kind: SpKind) -> f64 {
        self.rcs_sqrts[kind.index()]
    }
}

/// ς = G(d)·σ_i·σ_ν·√(2/π).
pub fn rayleigh_scale(sigma_i: f64, distance: f64, sigma_nu: f64, budget: &LinkBudget) -> Result<f64> {
    Ok(budget.amplitude(distance)? * sigma_i * sigma_nu * (2.0 / PI).sqrt())
}

/// Density of |β̂| under a hypothesis with Rayleigh scale ς.
pub fn likelihood_conditional(beta_hat_mag: f64, scale: f64, estimator_var: f64) -> f64 {
    let s2 = 2.0 * scale * scale + estimator_var;
    2.0 * beta_hat_mag / s2 * (-beta_hat_mag * beta_hat_mag / s2).exp()
}

/// Per-path class model: the Rayleigh scale of each hypothesis and the
/// estimator variance of that path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathModel {
    scales: [f64; 3],
    estimator_var: f64,
}

impl PathModel {
    pub fn from_scales(scales: [f64; 3], estimator_var: f64) -> Result<Self> {
        if !(estimator_var > 0.0) {
            return Err(Error::OutOfRange { name: "estimator variance", value: estimator_var });
        }
        if scales.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidConfig(format!("negative Rayleigh scale in {scales:?}")));
        }
        Ok(Self { scales, estimator_var })
    }

    pub fn new(
        hypotheses: &HypothesisSet,
        distance: f64,
        sigma_nu: f64,
        budget: &LinkBudget,
        estimator_var: f64,
    ) -> Result<Self> {
        let mut scales = [0.0; 3];
        for (s, sigma) in scales.iter_mut().zip(hypotheses.rcs_sqrts) {
            *s = rayleigh_scale(sigma, distance, sigma_nu, budget)?;
        }
        Self::from_scales(scales, estimator_var)
    }

    pub fn scales(&self) -> [f64; 3] {
        self.scales
    }

    pub fn estimator_var(&self) -> f64 {
        self.estimator_var
    }

    /// s_i² = 2ς_i² + σ_β̂².
    pub fn combined_powers(&self) -> [f64; 3] {
        self.scales.map(|s| 2.0 * s * s + self.estimator_var)
    }

    /// ln of the |β̂| densities up to the common ln(2|β̂|) term.
    fn log_likelihoods(&self, t: f64) -> [f64; 3] {
        self.combined_powers().map(|s2| -s2.ln() - t / s2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassPosterior {
    pub posteriors: [f64; 3],
    pub map_label: SpKind,
    /// |β̂| of the (first) path.
    pub statistic: f64,
    pub estimator_std: f64,
}

/// Index of the largest entry, ties to the smaller index.
fn argmax(v: &[f64; 3]) -> usize {
    let mut best = 0;
    for i in 1..3 {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

fn normalize_log(weights: [f64; 3]) -> [f64; 3] {
    let top = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = weights.map(|w| (w - top).exp());
    let z: f64 = e.iter().sum();
    e.map(|x| x / z)
}

fn log_priors(h: &HypothesisSet) -> [f64; 3] {
    h.priors.map(f64::ln)
}

fn finish(weights: [f64; 3], statistic: f64, estimator_var: f64) -> ClassPosterior {
    let label = argmax(&weights);
    ClassPosterior {
        posteriors: normalize_log(weights),
        map_label: SpKind::from_index(label).unwrap(),
        statistic,
        estimator_std: estimator_var.sqrt(),
    }
}

pub fn posterior(beta_hat_mag: f64, hypotheses: &HypothesisSet, path: &PathModel) -> ClassPosterior {
    let t = beta_hat_mag * beta_hat_mag;
    let ll = path.log_likelihoods(t);
    let lp = log_priors(hypotheses);
    finish([0, 1, 2].map(|i| lp[i] + ll[i]), beta_hat_mag, path.estimator_var)
}

/// Posterior from two paths with independent fading. The reported
/// statistic and estimator spread are those of the direct path.
pub fn fuse(
    beta_hat_direct: f64,
    beta_hat_via_stcm: f64,
    hypotheses: &HypothesisSet,
    direct: &PathModel,
    via_stcm: &PathModel,
) -> ClassPosterior {
    let l1 = direct.log_likelihoods(beta_hat_direct * beta_hat_direct);
    let l2 = via_stcm.log_likelihoods(beta_hat_via_stcm * beta_hat_via_stcm);
    let lp = log_priors(hypotheses);
    finish([0, 1, 2].map(|i| lp[i] + l1[i] + l2[i]), beta_hat_direct, direct.estimator_var)
}

/// Interval of t = |β̂|² assigned to one label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub lower: f64,
    pub upper: f64,
    pub label: SpKind,
}

/// MAP decision regions on t = |β̂|² ∈ [0, ∞), ordered by t.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRegions {
    pub regions: Vec<Region>,
}

impl DecisionRegions {
    pub fn label_at(&self, t: f64) -> SpKind {
        self.regions
            .iter()
            .find(|r| t < r.upper)
            .unwrap_or_else(|| self.regions.last().unwrap())
            .label
    }

    /// Boundaries between consecutive regions, in |β̂| units.
    pub fn magnitude_thresholds(&self) -> Vec<f64> {
        self.regions.iter().skip(1).map(|r| r.lower.sqrt()).collect()
    }
}

/// Upper envelope of the lines ln p_i − ln s_i² − t/s_i².
pub fn decision_regions(hypotheses: &HypothesisSet, path: &PathModel) -> DecisionRegions {
    let s2 = path.combined_powers();
    let lp = log_priors(hypotheses);
    let offset = [0, 1, 2].map(|i| lp[i] - s2[i].ln());
    let slope = s2.map(|s| -1.0 / s);
    let value = |i: usize, t: f64| offset[i] + slope[i] * t;

    let mut cuts = vec![0.0];
    for i in 0..3 {
        for j in i + 1..3 {
            let ds = slope[i] - slope[j];
            if ds != 0.0 {
                let t = (offset[j] - offset[i]) / ds;
                if t.is_finite() && t > 0.0 {
                    cuts.push(t);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.push(f64::INFINITY);

    let mut regions: Vec<Region> = Vec::new();
    for w in cuts.windows(2) {
        let probe = if w[1].is_finite() { 0.5 * (w[0] + w[1]) } else { 2.0 * w[0] + 1.0 };
        let label = SpKind::from_index(argmax(&[0, 1, 2].map(|i| value(i, probe)))).unwrap();
        match regions.last_mut() {
            Some(r) if r.label == label => r.upper = w[1],
            _ => regions.push(Region { lower: w[0], upper: w[1], label }),
        }
    }
    DecisionRegions { regions }
}

/// Pr(Ĥ = H_i | H_j) for each truth j, given the true mean power E|β|²
/// of every hypothesis. Entry `[j][i]`.
pub fn confusion_exact(hypotheses: &HypothesisSet, path: &PathModel, truth_powers: [f64; 3]) -> [[f64; 3]; 3] {
    let regions = decision_regions(hypotheses, path);
    let mut out = [[0.0; 3]; 3];
    for j in 0..3 {
        let mean = truth_powers[j] + path.estimator_var;
        for r in &regions.regions {
            let upper = if r.upper.is_finite() { (-r.upper / mean).exp() } else { 0.0 };
            out[j][r.label.index()] += (-r.lower / mean).exp() - upper;
        }
    }
    out
}

/// One Monte Carlo confusion row.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionRow {
    pub truth: SpKind,
    pub probabilities: [f64; 3],
    pub std_errors: [f64; 3],
    pub n_trials: u64,
}

/// Monte Carlo estimate of Pr(Ĥ | H_truth). The true coefficient is
/// β ~ CN(0, truth_power) and β̂ = β + e with e ~ CN(0, σ_β̂²). Trial n
/// draws from stream n of the task key (seed, experiment, grid_index).
#[allow(clippy::too_many_arguments)]
pub fn confusion_mc(
    hypotheses: &HypothesisSet,
    path: &PathModel,
    truth: SpKind,
    truth_power: f64,
    n_trials: u64,
    seed: u64,
    experiment: &str,
    grid_index: u64,
) -> Result<ConfusionRow> {
    if n_trials == 0 {
        return Err(Error::OutOfRange { name: "n_trials", value: 0.0 });
    }
    let base = stream(seed, experiment, grid_index);
    let mut counts = [0u64; 3];
    for n in 0..n_trials {
        let mut rng = base.clone();
        rng.set_stream(n);
        let beta = complex_gaussian(&mut rng, truth_power);
        let noise = complex_gaussian(&mut rng, path.estimator_var);
        let label = posterior((beta + noise).norm(), hypotheses, path).map_label;
        counts[label.index()] += 1;
    }
    let nf = n_trials as f64;
    let probabilities = counts.map(|c| c as f64 / nf);
    let std_errors = probabilities.map(|p| (p * (1.0 - p) / nf).sqrt());
    Ok(ConfusionRow { truth, probabilities, std_errors, n_trials })
}

/// Class model of the SNR sweep. The SNR of truth j is E|β|²/σ_β̂², i.e.
/// the mean received target energy over the noise after de-spreading. It is
/// set by scaling the common factor G·σ_ν at fixed estimator variance, so
/// every hypothesis sees the same geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationScenario {
    pub path: PathModel,
    /// E|β|² under each hypothesis.
    pub truth_powers: [f64; 3],
}

impl ClassificationScenario {
    pub fn at_snr(hypotheses: &HypothesisSet, truth: SpKind, snr_db: f64, estimator_var: f64) -> Result<Self> {
        let sigma_t = hypotheses.rcs_sqrt(truth);
        if sigma_t == 0.0 {
            return Err(Error::InvalidConfig("SNR is undefined for the absent hypothesis".into()));
        }
        // (G σ_ν)²
        let k = crate::db_to_power(snr_db) * estimator_var / (sigma_t * sigma_t);
        let scales = hypotheses.rcs_sqrts.map(|s| k.sqrt() * s * (2.0 / PI).sqrt());
        Ok(Self {
            path: PathModel::from_scales(scales, estimator_var)?,
            truth_powers: hypotheses.rcs_sqrts.map(|s| k * s * s),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn i0_scaled(z: f64) -> f64 {
        // I0(z)·e^{−z} = (1/π)∫₀^π e^{z(cos θ − 1)} dθ; trapezoid is spectrally
        // accurate for this periodic integrand.
        let n = 2000;
        let h = PI / n as f64;
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * (z * ((i as f64 * h).cos() - 1.0)).exp()
            })
            .sum::<f64>()
            * h
            / PI
    }

    /// ∫ Rice(r; b, σ²) · Rayleigh(b; ς) db by composite Simpson.
    fn marginal_by_quadrature(r: f64, scale: f64, var: f64) -> f64 {
        let top = scale * 14.0;
        let n = 4000;
        let h = top / n as f64;
        let f = |b: f64| {
            let z = 2.0 * r * b / var;
            let rice = 2.0 * r / var * (-(r - b) * (r - b) / var).exp() * i0_scaled(z);
            let rayl = b / (scale * scale) * (-b * b / (2.0 * scale * scale)).exp();
            rice * rayl
        };
        let mut s = f(0.0) + f(top);
        for i in 1..n {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn rayleigh_scale_matches_direct_formula() {
        let b = LinkBudget::table_one();
        let h = HypothesisSet::table_one();
        assert_eq!(rayleigh_scale(0.0, 50.0, 1.0, &b).unwrap(), 0.0);
        let lambda = crate::SPEED_OF_LIGHT / 10e9;
        for (i, sigma) in h.rcs_sqrts().into_iter().enumerate().skip(1) {
            let direct = lambda / (4.0 * PI * 2500.0) * sigma * (2.0 / PI).sqrt();
            let got = rayleigh_scale(sigma, 50.0, 1.0, &b).unwrap();
            assert!((got - direct).abs() < 1e-14 * direct, "class {i}");
            assert!((rayleigh_scale(2.0 * sigma, 50.0, 1.0, &b).unwrap() - 2.0 * got).abs() < 1e-14 * got);
        }
        assert!(matches!(rayleigh_scale(1.0, 0.0, 1.0, &b), Err(Error::NonPositiveDistance(_))));
    }

    #[test]
    fn likelihood_is_normalized() {
        for &(scale, var) in &[(0.0, 1.0), (1.0, 0.5), (3.0, 0.01)] {
            let s2: f64 = 2.0 * scale * scale + var;
            let top = (s2 * 60.0).sqrt();
            let n = 20_000;
            let h = top / n as f64;
            let mut s = likelihood_conditional(0.0, scale, var) + likelihood_conditional(top, scale, var);
            for i in 1..n {
                s += likelihood_conditional(i as f64 * h, scale, var) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            assert!((s * h / 3.0 - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn likelihood_without_target_is_rayleigh_of_noise() {
        let var: f64 = 0.7;
        for r in [0.1, 0.5, 1.3] {
            let rayleigh = r / (var / 2.0) * (-r * r / var).exp();
            assert!((likelihood_conditional(r, 0.0, var) - rayleigh).abs() < 1e-15);
        }
    }

    #[test]
    fn likelihood_matches_bessel_marginalization() {
        let mut worst: f64 = 0.0;
        for k in 0..50 {
            let scale = 0.3 + 0.05 * k as f64;
            let var = 0.2 + 0.02 * (k % 7) as f64;
            let s2: f64 = 2.0 * scale * scale + var;
            let r = s2.sqrt() * (0.05 + 0.05 * k as f64);
            let closed = likelihood_conditional(r, scale, var);
            let quad = marginal_by_quadrature(r, scale, var);
            worst = worst.max((closed - quad).abs());
        }
        assert!(worst < 1e-6, "worst {worst}");
    }

    #[test]
    fn posterior_limits() {
        let h = HypothesisSet::table_one();
        let p = PathModel::from_scales([0.0, 1.0, 7.0], 0.1).unwrap();
        assert_eq!(posterior(0.0, &h, &p).map_label, SpKind::Absent);
        assert_eq!(posterior(1e3, &h, &p).map_label, SpKind::ObjectLike);
        let post = posterior(1.0, &h, &p);
        assert!((post.posteriors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(post.estimator_std, 0.1f64.sqrt());
    }

    #[test]
    fn equal_scales_give_equal_posteriors() {
        let h = HypothesisSet::table_one();
        let p = PathModel::from_scales([0.0, 2.0, 2.0], 0.1).unwrap();
        let post = posterior(1.7, &h, &p);
        assert_eq!(post.posteriors[1], post.posteriors[2]);
        // tie broken toward the smaller index
        assert_ne!(post.map_label, SpKind::ObjectLike);
    }

    #[test]
    fn decision_regions_match_brute_force() {
        let h = HypothesisSet::new([0.2, 0.5, 0.3], [0.0, 1.0, 6.0]).unwrap();
        for (scales, var) in [([0.0, 1.0, 8.0], 0.05), ([0.0, 0.2, 0.3], 1.0), ([0.0, 4.0, 25.0], 0.3)] {
            let p = PathModel::from_scales(scales, var).unwrap();
            let regions = decision_regions(&h, &p);
            assert!(regions.regions.len() <= 3);
            for w in regions.regions.windows(2) {
                assert!(w[0].label.index() < w[1].label.index());
                assert_eq!(w[0].upper, w[1].lower);
            }
            let top = 30.0 * p.combined_powers()[2];
            for k in 0..20_000 {
                let t = top * k as f64 / 20_000.0 + 1e-7;
                assert_eq!(regions.label_at(t), posterior(t.sqrt(), &h, &p).map_label, "t={t}");
            }
        }
    }

    #[test]
    fn exact_confusion_rows_sum_to_one() {
        let h = HypothesisSet::table_one();
        let sc = ClassificationScenario::at_snr(&h, SpKind::HumanLike, 10.0, 1e-3).unwrap();
        for row in confusion_exact(&h, &sc.path, sc.truth_powers) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_agrees_with_exact_confusion() {
        let h = HypothesisSet::table_one();
        for truth in [SpKind::HumanLike, SpKind::ObjectLike] {
            for snr in [-5.0, 5.0, 20.0] {
                let sc = ClassificationScenario::at_snr(&h, truth, snr, 2e-4).unwrap();
                let exact = confusion_exact(&h, &sc.path, sc.truth_powers)[truth.index()];
                let row =
                    confusion_mc(&h, &sc.path, truth, sc.truth_powers[truth.index()], 20_000, 9, "unit", 0).unwrap();
                for i in 0..3 {
                    let se = (exact[i] * (1.0 - exact[i]) / 20_000.0).sqrt().max(1e-4);
                    assert!((row.probabilities[i] - exact[i]).abs() < 4.0 * se, "{truth:?} {snr} {i}");
                }
            }
        }
    }

    #[test]
    fn standard_error_shrinks_with_trials() {
        let h = HypothesisSet::table_one();
        let sc = ClassificationScenario::at_snr(&h, SpKind::ObjectLike, 30.0, 1.0).unwrap();
        let a = confusion_mc(&h, &sc.path, SpKind::ObjectLike, sc.truth_powers[2], 2_000, 1, "u", 0).unwrap();
        let b = confusion_mc(&h, &sc.path, SpKind::ObjectLike, sc.truth_powers[2], 20_000, 1, "u", 0).unwrap();
        let ratio = a.std_errors[2] / b.std_errors[2];
        assert!((ratio - 10f64.sqrt()).abs() < 0.6, "ratio {ratio}");
    }

    #[test]
    fn fusion_rules() {
        let h = HypothesisSet::table_one();
        let p = PathModel::from_scales([0.0, 1.0, 6.0], 0.2).unwrap();
        let flat = PathModel::from_scales([0.0; 3], 0.2).unwrap();
        let single = posterior(1.1, &h, &p);
        let fused = fuse(1.1, 0.4, &h, &p, &flat);
        for i in 0..3 {
            assert!((fused.posteriors[i] - single.posteriors[i]).abs() < 1e-12);
        }
        // identical inputs: squared likelihoods
        let twice = fuse(1.1, 1.1, &h, &p, &p);
        let sq: Vec<f64> = (0..3)
            .map(|i| {
                let s = p.scales()[i];
                h.priors()[i] * likelihood_conditional(1.1, s, 0.2).powi(2)
            })
            .collect();
        let z: f64 = sq.iter().sum();
        for i in 0..3 {
            assert!((twice.posteriors[i] - sq[i] / z).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_hypotheses_rejected() {
        assert!(HypothesisSet::new([0.5, 0.5, 0.1], [0.0, 1.0, 2.0]).is_err());
        assert!(HypothesisSet::new([0.3, 0.3, 0.4], [0.1, 1.0, 2.0]).is_err());
        assert!(HypothesisSet::new([0.3, 0.3, 0.4], [0.0, 2.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn posteriors_are_normalized(r in 0.0f64..50.0, s1 in 0.0f64..5.0, ds in 0.01f64..20.0, var in 1e-3f64..4.0) {
            let h = HypothesisSet::table_one();
            let p = PathModel::from_scales([0.0, s1, s1 + ds], var).unwrap();
            let post = posterior(r, &h, &p);
            prop_assert!((post.posteriors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let best = post.posteriors[post.map_label.index()];
            prop_assert!(post.posteriors.iter().all(|&x| x <= best));
        }

        #[test]
        fn agreeing_paths_raise_confidence(r1 in 0.0f64..10.0, r2 in 0.0f64..10.0, s1 in 0.1f64..3.0, ds in 0.1f64..6.0) {
            let h = HypothesisSet::table_one();
            let p = PathModel::from_scales([0.0, s1, s1 + ds], 0.3).unwrap();
            let q = PathModel::from_scales([0.0, 0.5 * s1, 0.5 * (s1 + ds)], 0.3).unwrap();
            let a = posterior(r1, &h, &p);
            let b = posterior(r2, &h, &q);
            prop_assume!(a.map_label == b.map_label);
            let f = fuse(r1, r2, &h, &p, &q);
            let k = a.map_label.index();
            prop_assert_eq!(f.map_label, a.map_label);
            prop_assert!(f.posteriors[k] >= a.posteriors[k].max(b.posteriors[k]) - 1e-12);
        }
    }
}

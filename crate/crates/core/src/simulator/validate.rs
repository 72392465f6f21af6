//! Invariant suite behind the `validate` subcommand. Each check is small
//! enough that the whole suite runs in seconds on the configured model.

use rand::Rng;

use crate::bounds::{crb_alpha_closed, crb_xi_closed, fim_multi_target, BounceKind, TargetState};
use crate::channel::CVector;
use crate::classification::{decision_regions, posterior, PathModel};
use crate::detection::{pd_marginal, threshold_from_pfa};
use crate::geometry::{angles_from_position, jacobian_angles_to_position, position_from_angles, Vec3};
use crate::marcum::marcum_q1;
use crate::metasurface::{fourier_coefficient, CodingMatrix, HarmonicSet};
use crate::rng::stream;
use crate::simulator::config::ExperimentConfig;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, limit: f64) -> Check {
    Check { name, passed: worst <= limit, detail: format!("worst {worst:e}, limit {limit:e}") }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn random_point<R: Rng>(rng: &mut R, cfg: &ExperimentConfig) -> Vec3 {
    let (x, z) = (cfg.geometry.x_range, cfg.geometry.z_range);
    // keep away from the BS row and the STCM row
    Vec3::new(rng.random_range(x[0]..x[1]), 0.0, rng.random_range(z[0] + 1.0..z[1] - 1.0))
}

fn vec_rel(a: &CVector, b: &CVector) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn run_suite(cfg: &ExperimentConfig) -> Result<Vec<Check>> {
    let model = cfg.sensing_model()?;
    let g = &model.geometry;
    let mut rng = stream(cfg.seed, "validate", 0);
    let mut out = Vec::new();

    // geometry roundtrip and law of sines
    let (mut round, mut sines) = (0.0f64, 0.0f64);
    for _ in 0..2000 {
        let q = random_point(&mut rng, cfg);
        let Ok(a) = angles_from_position(&q, g) else { continue };
        let Ok(p) = position_from_angles(&a, g) else { continue };
        round = round.max((p - q).norm());
        let (d_r, d_rs) = g.distances(&q)?;
        let at_bs = (a.alpha - g.stcm_angle_at_bs()).abs();
        let at_stcm = (a.xi - g.bs_angle_at_stcm()).abs();
        let at_sp = std::f64::consts::PI - at_bs - at_stcm;
        sines = sines.max(rel(d_r / at_stcm.sin(), g.baseline() / at_sp.sin()));
        sines = sines.max(rel(d_rs / at_bs.sin(), g.baseline() / at_sp.sin()));
    }
    out.push(check("geometry_roundtrip_m", round, 1e-9));
    out.push(check("law_of_sines_rel", sines, 1e-12));

    // harmonic energy and balanced-code carrier
    let code = model.stcm.code();
    let mut worst = 0.0f64;
    for n in 0..code.n_elements() {
        let e: f64 = (-64..=64).map(|m| fourier_coefficient(code, n, m).norm_sqr()).sum();
        worst = worst.max(if e > 1.0 + 1e-12 { e - 1.0 } else { (0.99 - e).max(0.0) });
    }
    out.push(check("parseval_energy_excess", worst, 0.0));
    let balanced = CodingMatrix::balanced_progressive(model.stcm.layout(), code.code_length(), code.period())?;
    let a0 = (0..balanced.n_elements()).map(|n| fourier_coefficient(&balanced, n, 0).norm()).fold(0.0, f64::max);
    out.push(check("balanced_code_carrier", a0, 0.0));

    // analytic derivatives against central differences
    let (mut steer, mut pattern, mut jac) = (0.0f64, 0.0f64, 0.0f64);
    let h = 1e-6;
    for _ in 0..200 {
        let ang: f64 = rng.random_range(-1.3..1.3);
        let fd = (model.steering(ang + h) - model.steering(ang - h)) / crate::Complex64::new(2.0 * h, 0.0);
        steer = steer.max(vec_rel(&model.steering_derivative(ang), &fd));
        let xi_b = g.bs_angle_at_stcm();
        let m = rng.random_range(-4..=4);
        let d = model.stcm.pattern_departure_derivative(m, ang, xi_b);
        let fd = (model.stcm.pattern(m, ang + h, xi_b) - model.stcm.pattern(m, ang - h, xi_b)) / (2.0 * h);
        let scale = d.norm().max(model.stcm.pattern(m, ang, xi_b).norm());
        pattern = pattern.max((d - fd).norm() / scale);
        let q = random_point(&mut rng, cfg);
        if let Ok(t) = jacobian_angles_to_position(&q, g) {
            let hq = 1e-4;
            for (k, dq) in [Vec3::new(hq, 0.0, 0.0), Vec3::new(0.0, 0.0, hq)].iter().enumerate() {
                let (Ok(p), Ok(m)) = (angles_from_position(&(q + dq), g), angles_from_position(&(q - dq), g)) else {
                    continue;
                };
                let fa = (p.alpha - m.alpha) / (2.0 * hq);
                let fx = (p.xi - m.xi) / (2.0 * hq);
                let s = t.norm().max(1e-300);
                jac = jac.max(((t[(0, k)] - fa).abs() + (t[(1, k)] - fx).abs()) / s);
            }
        }
    }
    out.push(check("steering_derivative_rel", steer, 1e-6));
    out.push(check("pattern_derivative_rel", pattern, 1e-6));
    out.push(check("jacobian_rel", jac, 1e-6));

    // closed-form CRBs against inverted numeric FIMs
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let q = random_point(&mut rng, cfg);
        let Ok(t) = TargetState::at(&q, crate::db_to_amplitude(cfg.scene.rcs_db), &model) else { continue };
        if let (Ok(c), Ok(f)) = (crb_alpha_closed(t.alpha, t.sb_gain, &model), fim_multi_target(&[t], BounceKind::Single, &model)) {
            worst = worst.max(rel(c, f.crb(0)?));
        }
        if let (Ok(c), Ok(f)) =
            (crb_xi_closed(t.xi, t.alpha, t.db_gain, &model), fim_multi_target(&[t], BounceKind::Double, &model))
        {
            if let Ok(n) = f.crb(0) {
                worst = worst.max(rel(c, n));
            }
        }
    }
    out.push(check("closed_form_crb_rel", worst, 1e-9));

    // harmonic monotonicity at one point
    let t = TargetState::at(&Vec3::new(20.0, 0.0, 60.0), 1.0, &model)?;
    let mut prev = f64::INFINITY;
    let mut rise = 0.0f64;
    for mf in 1..=model.stcm.max_order() {
        let m = model.with_harmonics(HarmonicSet::new(mf))?;
        if let Ok(c) = crb_xi_closed(t.xi, t.alpha, t.db_gain, &m) {
            rise = rise.max(c / prev - 1.0);
            prev = c;
        }
    }
    out.push(check("crb_xi_nonincreasing_in_mf", rise.max(0.0), 1e-12));

    // Marcum Q identities and monotonicity
    let mut worst = (marcum_q1(2.0, 0.0) - 1.0).abs();
    for k in 0..20 {
        let b = 0.3 * k as f64;
        worst = worst.max((marcum_q1(0.0, b) - (-b * b / 2.0).exp()).abs());
        let mut last = 0.0;
        for j in 0..30 {
            let q = marcum_q1(0.25 * j as f64, b);
            worst = worst.max((last - q).max(0.0));
            last = q;
        }
    }
    out.push(check("marcum_q_identities", worst, 1e-12));

    // detection false-alarm limit
    let gamma = threshold_from_pfa(cfg.detection.p_fa)?;
    let pd0 = pd_marginal(0.0, 1.0, model.noise_power, gamma);
    out.push(check("pd_zero_scale_is_pfa", rel(pd0, cfg.detection.p_fa), 4.0 * f64::EPSILON));

    // posterior normalization and decision regions
    let hyps = cfg.hypotheses()?;
    let (mut norm, mut mismatch) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let s1: f64 = rng.random_range(0.1..3.0);
        let p = PathModel::from_scales([0.0, s1, s1 * rng.random_range(1.1..10.0)], rng.random_range(0.01..2.0))?;
        let regions = decision_regions(&hyps, &p);
        for k in 0..200 {
            let r = 0.05 * k as f64;
            let post = posterior(r, &hyps, &p);
            norm = norm.max((post.posteriors.iter().sum::<f64>() - 1.0).abs());
            if regions.label_at(r * r) != post.map_label {
                mismatch += 1.0;
            }
        }
    }
    out.push(check("posterior_normalization", norm, 1e-12));
    out.push(check("decision_region_mismatches", mismatch, 0.0));

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let checks = run_suite(&ExperimentConfig::table_one()).unwrap();
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        assert!(checks.len() >= 12);
    }
}

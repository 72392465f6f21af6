//! Known-position detection: ML channel estimate, threshold and detection
//! probabilities.
//!
//! The received single-bounce block at a hypothesized position is
//! Y = β·A(α)X + N. A combiner Z is applied first (Z·Y), which shapes the
//! noise as well as the signal. The detection statistic is
//! γ̃ = 2·E·|β̂|²/σ_n², where E is the white-noise-equivalent regressor
//! energy, i.e. σ_n² divided by the variance of β̂. When no combiner is in
//! play (white noise), E = ‖H‖².

use serde::{Deserialize, Serialize};

use crate::channel::{vec_of, CMatrix, CVector, SensingModel};
use crate::classification::{rayleigh_scale, HypothesisSet};
use crate::geometry::{angles_from_position, PlaneGrid, SpKind};
use crate::marcum::marcum_q1;
use crate::{Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Combiner {
    /// Z = 1 (all-ones M×M).
    AllOnes,
    /// Z = Xᴴ.
    MatchedDespread,
}

impl Combiner {
    pub const ALL: [Combiner; 2] = [Combiner::AllOnes, Combiner::MatchedDespread];

    pub fn label(self) -> &'static str {
        match self {
            Combiner::AllOnes => "all_ones",
            Combiner::MatchedDespread => "matched_despread",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    p_fa: f64,
    pub combiner: Combiner,
    pub grid: PlaneGrid,
}

impl DetectorConfig {
    pub fn new(p_fa: f64, combiner: Combiner, grid: PlaneGrid) -> Result<Self> {
        threshold_from_pfa(p_fa)?;
        Ok(Self { p_fa, combiner, grid })
    }

    pub fn p_fa(&self) -> f64 {
        self.p_fa
    }

    pub fn threshold(&self) -> f64 {
        -2.0 * self.p_fa.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionStatistic {
    pub beta_hat: Complex64,
    pub gamma_tilde: f64,
    /// μ = 2E|β|²/σ_n² for the true β, when known.
    pub noncentrality: f64,
}

impl DetectionStatistic {
    /// Statistic for a white-noise observation `y = β h + n`.
    pub fn evaluate(y: &CVector, h: &CVector, noise_power: f64, true_beta: Complex64) -> Result<Self> {
        let beta_hat = ml_beta_estimate(y, h)?;
        let e = h.norm_squared();
        Ok(Self {
            beta_hat,
            gamma_tilde: 2.0 * e * beta_hat.norm_sqr() / noise_power,
            noncentrality: 2.0 * e * true_beta.norm_sqr() / noise_power,
        })
    }
}

/// The combiner matrix for the model's pilots.
pub fn combiner_matrix(combiner: Combiner, model: &SensingModel) -> CMatrix {
    let x = model.pilots.symbols();
    match combiner {
        Combiner::AllOnes => CMatrix::from_element(x.nrows(), x.nrows(), Complex64::new(1.0, 0.0)),
        Combiner::MatchedDespread => x.adjoint(),
    }
}

fn regressor_matrix(alpha: f64, model: &SensingModel, combiner: Combiner) -> CMatrix {
    let a = model.steering(alpha);
    let ax = &a * (a.transpose() * model.pilots.symbols());
    combiner_matrix(combiner, model) * ax
}

/// vec(Z·A(α)·X) at the BS angle of the hypothesized position.
pub fn despread_regressor(alpha: f64, model: &SensingModel, combiner: Combiner) -> CVector {
    vec_of(&regressor_matrix(alpha, model, combiner))
}

/// ‖H‖⁴ / ‖Zᴴ H‖²_F: the regressor energy of the equivalent white-noise
/// problem, so that var(β̂) = σ_n² / E after combining.
pub fn effective_regressor_energy(alpha: f64, model: &SensingModel, combiner: Combiner) -> f64 {
    let h = regressor_matrix(alpha, model, combiner);
    let z = combiner_matrix(combiner, model);
    let shaped = z.adjoint() * &h;
    h.norm_squared().powi(2) / shaped.norm_squared()
}

/// β̂ = Hᴴ Y / ‖H‖².
pub fn ml_beta_estimate(y: &CVector, h: &CVector) -> Result<Complex64> {
    let e = h.norm_squared();
    if e == 0.0 {
        return Err(Error::ZeroRegressor);
    }
    if y.len() != h.len() {
        return Err(Error::DimensionMismatch { expected: h.len(), found: y.len() });
    }
    Ok(h.dotc(y) / e)
}

/// γ_th = −2 ln p_fa.
pub fn threshold_from_pfa(p_fa: f64) -> Result<f64> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::OutOfRange { name: "p_fa", value: p_fa });
    }
    Ok(-2.0 * p_fa.ln())
}

/// Q₁(√μ, √γ_th) with μ = 2E|β|²/σ_n².
pub fn pd_conditional(beta: Complex64, regressor_energy: f64, noise_power: f64, gamma_th: f64) -> f64 {
    let mu = 2.0 * regressor_energy * beta.norm_sqr() / noise_power;
    marcum_q1(mu.sqrt(), gamma_th.sqrt())
}

/// p_D averaged over a Rayleigh coefficient of scale ς.
pub fn pd_marginal(scale: f64, regressor_energy: f64, noise_power: f64, gamma_th: f64) -> f64 {
    (-gamma_th * noise_power / (4.0 * regressor_energy * scale * scale + 2.0 * noise_power)).exp()
}

/// One p_D map over the grid; `None` where the position is degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMap {
    pub kind: SpKind,
    pub combiner: Combiner,
    pub values: Vec<Option<f64>>,
}

/// Marginal p_D over the grid for both SP types and both combiners,
/// ordered combiner-major then type.
pub fn detection_map(
    model: &SensingModel,
    hypotheses: &HypothesisSet,
    sigma_nu: f64,
    p_fa: f64,
    grid: &PlaneGrid,
) -> Result<Vec<DetectionMap>> {
    use rayon::prelude::*;
    let gamma_th = threshold_from_pfa(p_fa)?;
    // per point: Option<(alpha, sb distance)>
    let geometry: Vec<Option<(f64, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let q = grid.point(i);
            let angles = angles_from_position(&q, &model.geometry).ok()?;
            let (d_r, _) = model.geometry.distances(&q).ok()?;
            Some((angles.alpha, 2.0 * d_r))
        })
        .collect();
    let mut maps = Vec::new();
    for combiner in Combiner::ALL {
        let energy: Vec<Option<f64>> = geometry
            .par_iter()
            .map(|g| g.map(|(alpha, _)| effective_regressor_energy(alpha, model, combiner)))
            .collect();
        for kind in [SpKind::HumanLike, SpKind::ObjectLike] {
            let sigma = hypotheses.rcs_sqrt(kind);
            let values = geometry
                .iter()
                .zip(&energy)
                .map(|(g, e)| {
                    let (_, dist) = (*g)?;
                    let scale = rayleigh_scale(sigma, dist, sigma_nu, &model.budget).ok()?;
                    Some(pd_marginal(scale, (*e)?, model.noise_power, gamma_th))
                })
                .collect();
            maps.push(DetectionMap { kind, combiner, values });
        }
    }
    Ok(maps)
}

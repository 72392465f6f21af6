//! Fisher information, Cramér-Rao bounds and position error bounds.
//!
//! Parameters are ordered per target as [angle, Re β, Im β]. Conditioning is
//! judged on the diagonally equilibrated matrix: angle and gain entries
//! differ by ~11 orders of magnitude, so the raw condition number says
//! nothing about identifiability.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;

use crate::channel::{vec_of, CVector, SensingModel};
use crate::geometry::{angles_from_position, jacobian_angles_to_position, ScatterPoint, Vec3};
use crate::metasurface::{ris_response, ris_response_derivative, RisProfile};
use crate::{Error, Result};

/// Equilibrated condition number above which a FIM is treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BounceKind {
    Single,
    Double,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    entries: DMatrix<f64>,
    labels: Vec<String>,
}

impl FisherMatrix {
    pub fn new(entries: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let d = entries.nrows();
        if entries.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: entries.ncols() });
        }
        if labels.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: labels.len() });
        }
        let asym = (&entries - entries.transpose()).amax();
        if asym > 1e-12 * entries.amax() {
            return Err(Error::InvalidConfig(format!("FIM not symmetric (max asymmetry {asym:e})")));
        }
        // remove rounding asymmetry
        let entries = (&entries + entries.transpose()) * 0.5;
        Ok(Self { entries, labels })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.entries.clone().symmetric_eigenvalues().min()
    }

    /// Eigenvalue floor −10⁻⁹·‖F‖.
    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -1e-9 * self.entries.norm()
    }

    fn equilibrated(&self) -> Option<(DMatrix<f64>, Vec<f64>)> {
        let d = self.dim();
        let mut s = Vec::with_capacity(d);
        for i in 0..d {
            let v = self.entries[(i, i)];
            if !(v > 0.0) || !v.is_finite() {
                return None;
            }
            s.push(1.0 / v.sqrt());
        }
        let e = DMatrix::from_fn(d, d, |i, j| self.entries[(i, j)] * s[i] * s[j]);
        Some((e, s))
    }

    /// 2-norm condition number of D^{-1/2} F D^{-1/2}; +∞ when a diagonal
    /// entry vanishes or the matrix is indefinite.
    pub fn condition_number(&self) -> f64 {
        let Some((e, _)) = self.equilibrated() else {
            return f64::INFINITY;
        };
        let ev = e.symmetric_eigenvalues();
        let (lo, hi) = (ev.min(), ev.max());
        if !(lo > 0.0) {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// Inverse under the singularity policy: never a pseudo-inverse.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let condition = self.condition_number();
        if !(condition <= CONDITION_LIMIT) {
            return Err(Error::SingularInformation { condition });
        }
        let (e, s) = self.equilibrated().expect("finite condition implies positive diagonal");
        let inv = e.cholesky().ok_or(Error::SingularInformation { condition })?.inverse();
        let d = self.dim();
        Ok(DMatrix::from_fn(d, d, |i, j| inv[(i, j)] * s[i] * s[j]))
    }

    /// [F⁻¹]_{ii}.
    pub fn crb(&self, i: usize) -> Result<f64> {
        Ok(self.inverse()?[(i, i)])
    }

    fn submatrix(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.entries[(rows[i], cols[j])])
    }

    fn principal(&self, idx: &[usize]) -> Result<FisherMatrix> {
        FisherMatrix::new(self.submatrix(idx, idx), idx.iter().map(|&i| self.labels[i].clone()).collect())
    }
}

/// F_ij = (2/σ²)·Re{c_iᴴ c_j}.
pub fn fim_generic(columns: &[CVector], noise_power: f64, labels: Vec<String>) -> Result<FisherMatrix> {
    let len = columns.first().map_or(0, |c| c.len());
    if let Some(c) = columns.iter().find(|c| c.len() != len) {
        return Err(Error::DimensionMismatch { expected: len, found: c.len() });
    }
    let d = columns.len();
    let scale = 2.0 / noise_power;
    let mut f = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = scale * columns[i].dotc(&columns[j]).re;
            f[(i, j)] = v;
            f[(j, i)] = v;
        }
    }
    FisherMatrix::new(f, labels)
}

pub fn target_labels(angle: &str, n_targets: usize) -> Vec<String> {
    (1..=n_targets)
        .flat_map(|r| [format!("{angle}_{r}"), format!("re_gain_{r}"), format!("im_gain_{r}")])
        .collect()
}

/// 3×3 FIM from its scalar building blocks: angle information `dd`, the
/// complex angle–gain cross term `cross`, and the gain information `gg`.
fn three_by_three(gain: Complex64, dd: f64, cross: Complex64, gg: f64, noise_power: f64, angle: &str) -> FisherMatrix {
    let s = 2.0 / noise_power;
    let c = gain.conj() * cross;
    let f = DMatrix::from_row_slice(
        3,
        3,
        &[
            s * gain.norm_sqr() * dd,
            s * c.re,
            -s * c.im,
            s * c.re,
            s * gg,
            0.0,
            -s * c.im,
            0.0,
            s * gg,
        ],
    );
    FisherMatrix::new(f, target_labels(angle, 1)).expect("3x3 blocks are symmetric")
}

fn trace_product(a: &crate::channel::CMatrix, g: &crate::channel::CMatrix, b: &crate::channel::CMatrix) -> Complex64 {
    (a * g * b.adjoint()).trace()
}

struct SbTraces {
    dd: f64,
    cross: Complex64,
    gg: f64,
}

fn sb_traces(alpha: f64, model: &SensingModel) -> SbTraces {
    let a = model.steering(alpha);
    let da = model.steering_derivative(alpha);
    let big_a = &a * a.transpose();
    let big_da = &da * a.transpose() + &a * da.transpose();
    let gram = model.pilots.gram();
    SbTraces {
        dd: trace_product(&big_da, &gram, &big_da).re,
        cross: trace_product(&big_a, &gram, &big_da),
        gg: trace_product(&big_a, &gram, &big_a).re,
    }
}

/// Closed-form single-bounce FIM over [α, Re β̄, Im β̄].
pub fn fim_sb_single(alpha: f64, gain: Complex64, model: &SensingModel) -> FisherMatrix {
    let t = sb_traces(alpha, model);
    // ⟨vec(ȦX), vec(AX)⟩ = tr(A G Ȧᴴ)
    three_by_three(gain, t.dd, t.cross, t.gg, model.noise_power, "alpha")
}

/// Angles must lie strictly inside (−π/2, π/2).
fn check_angle(name: &'static str, angle: f64) -> Result<()> {
    if !(angle.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(Error::OutOfRange { name, value: angle });
    }
    Ok(())
}

fn schur_crb(noise_power: f64, gain: Complex64, scale: f64, dd: f64, cross: Complex64, gg: f64) -> Result<f64> {
    let schur = dd - cross.norm_sqr() / gg;
    if !(schur > dd / CONDITION_LIMIT) {
        return Err(Error::SingularInformation { condition: dd / schur.max(0.0) });
    }
    Ok(noise_power / (2.0 * gain.norm_sqr() * scale * schur))
}

/// σ² / (2|β̄|²(tr(ȦGȦᴴ) − |tr(AGȦᴴ)|²/tr(AGAᴴ))) with G = XXᴴ.
pub fn crb_alpha_closed(alpha: f64, gain: Complex64, model: &SensingModel) -> Result<f64> {
    check_angle("alpha", alpha)?;
    let t = sb_traces(alpha, model);
    schur_crb(model.noise_power, gain, 1.0, t.dd, t.cross, t.gg)
}

struct DbTerms {
    eta_dd: f64,
    eta_cross: Complex64,
    eta_gg: f64,
    b_trace: f64,
}

fn db_terms(xi: f64, alpha: f64, model: &SensingModel) -> DbTerms {
    let xi_b = model.geometry.bs_angle_at_stcm();
    let alpha_s = model.geometry.stcm_angle_at_bs();
    let (mut dd, mut cross, mut gg) = (0.0, Complex64::new(0.0, 0.0), 0.0);
    for m in model.harmonics.members() {
        let e = model.stcm.pattern(m, xi, xi_b);
        let de = model.stcm.pattern_departure_derivative(m, xi, xi_b);
        dd += de.norm_sqr();
        cross += de.conj() * e;
        gg += e.norm_sqr();
    }
    let b = model.pair_matrix(alpha, alpha_s) + model.pair_matrix(alpha_s, alpha);
    let b_trace = trace_product(&b, &model.pilots.gram(), &b).re;
    DbTerms { eta_dd: dd, eta_cross: cross, eta_gg: gg, b_trace }
}

/// Closed-form double-bounce FIM over [ξ, Re β̄̄, Im β̄̄]; relies on the
/// swap symmetry η_m(ξ, ξ_B) = η_m(ξ_B, ξ).
pub fn fim_db_single(xi: f64, alpha: f64, gain: Complex64, model: &SensingModel) -> FisherMatrix {
    let t = db_terms(xi, alpha, model);
    three_by_three(gain, t.eta_dd * t.b_trace, t.eta_cross * t.b_trace, t.eta_gg * t.b_trace, model.noise_power, "xi")
}

/// σ² / (2|β̄̄|² tr(BGBᴴ)(η̇ᴴη̇ − |η̇ᴴη|²/ηᴴη)).
pub fn crb_xi_closed(xi: f64, alpha: f64, gain: Complex64, model: &SensingModel) -> Result<f64> {
    check_angle("xi", xi)?;
    let t = db_terms(xi, alpha, model);
    schur_crb(model.noise_power, gain, t.b_trace, t.eta_dd, t.eta_cross, t.eta_gg)
}

/// Angles and gains of one scatterer as seen by the bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub alpha: f64,
    pub xi: f64,
    pub sb_gain: Complex64,
    pub db_gain: Complex64,
}

impl TargetState {
    /// Deterministic reflectivity (ν = 1), as used for the bounds.
    pub fn at(q: &Vec3, rcs_sqrt: f64, model: &SensingModel) -> Result<Self> {
        let a = angles_from_position(q, &model.geometry)?;
        let one = Complex64::new(1.0, 0.0);
        let g = model.path_gains(q, rcs_sqrt, one, one)?;
        Ok(Self { alpha: a.alpha, xi: a.xi, sb_gain: g.sb_gain, db_gain: g.db_gain })
    }

    pub fn from_point(sp: &ScatterPoint, model: &SensingModel) -> Result<Self> {
        Self::at(&sp.position, sp.rcs_sqrt, model)
    }
}

/// Derivative columns [∂/∂angle, ∂/∂Re β, ∂/∂Im β] of one target.
pub fn derivative_columns(t: &TargetState, kind: BounceKind, model: &SensingModel) -> [CVector; 3] {
    let (h, dh, gain) = match kind {
        BounceKind::Single => (model.sb_regressor(t.alpha), model.sb_regressor_derivative(t.alpha), t.sb_gain),
        BounceKind::Double => {
            (model.db_regressor(t.alpha, t.xi), model.db_regressor_derivative(t.alpha, t.xi), t.db_gain)
        }
    };
    let jh = &h * Complex64::new(0.0, 1.0);
    [dh * gain, h, jh]
}

fn angle_name(kind: BounceKind) -> &'static str {
    match kind {
        BounceKind::Single => "alpha",
        BounceKind::Double => "xi",
    }
}

/// Numeric FIM of several targets from the stacked derivative columns.
pub fn fim_multi_target(targets: &[TargetState], kind: BounceKind, model: &SensingModel) -> Result<FisherMatrix> {
    if targets.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    let cols: Vec<CVector> = targets.iter().flat_map(|t| derivative_columns(t, kind, model)).collect();
    fim_generic(&cols, model.noise_power, target_labels(angle_name(kind), targets.len()))
}

/// FIM assembly with a fixed set of scatterers precomputed once; only the
/// moving target's columns are formed per call. The moving target occupies
/// the first parameter block.
#[derive(Debug, Clone)]
pub struct MultiTargetFim {
    kind: BounceKind,
    fixed_cols: Vec<CVector>,
    fixed_gram: DMatrix<f64>,
    noise_power: f64,
}

impl MultiTargetFim {
    pub fn new(fixed: &[TargetState], kind: BounceKind, model: &SensingModel) -> Self {
        let fixed_cols: Vec<CVector> = fixed.iter().flat_map(|t| derivative_columns(t, kind, model)).collect();
        let s = 2.0 / model.noise_power;
        let n = fixed_cols.len();
        let mut fixed_gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = s * fixed_cols[i].dotc(&fixed_cols[j]).re;
                fixed_gram[(i, j)] = v;
                fixed_gram[(j, i)] = v;
            }
        }
        Self { kind, fixed_cols, fixed_gram, noise_power: model.noise_power }
    }

    pub fn with_moving(&self, moving: &TargetState, model: &SensingModel) -> Result<FisherMatrix> {
        let mc = derivative_columns(moving, self.kind, model);
        let n = self.fixed_cols.len();
        let d = n + 3;
        let s = 2.0 / self.noise_power;
        let mut f = DMatrix::zeros(d, d);
        for i in 0..3 {
            for j in i..3 {
                let v = s * mc[i].dotc(&mc[j]).re;
                f[(i, j)] = v;
                f[(j, i)] = v;
            }
            for (j, c) in self.fixed_cols.iter().enumerate() {
                let v = s * mc[i].dotc(c).re;
                f[(i, 3 + j)] = v;
                f[(3 + j, i)] = v;
            }
        }
        f.view_mut((3, 3), (n, n)).copy_from(&self.fixed_gram);
        FisherMatrix::new(f, target_labels(angle_name(self.kind), d / 3))
    }
}

/// Equivalent information of a block of parameters after removing every
/// other parameter as nuisance (Schur complement).
pub fn efim_block(f: &FisherMatrix, keep: &[usize]) -> Result<DMatrix<f64>> {
    let nuisance: Vec<usize> = (0..f.dim()).filter(|i| !keep.contains(i)).collect();
    let kk = f.submatrix(keep, keep);
    if nuisance.is_empty() {
        return Ok(kk);
    }
    let nn_inv = f.principal(&nuisance)?.inverse().map_err(|_| Error::SingularNuisanceBlock)?;
    let kn = f.submatrix(keep, &nuisance);
    Ok(&kk - &kn * nn_inv * kn.transpose())
}

/// Scalar equivalent information of one parameter.
pub fn efim(f: &FisherMatrix, angle_index: usize) -> Result<f64> {
    Ok(efim_block(f, &[angle_index])?[(0, 0)])
}

/// Position error bound of a scatterer at `q` with reflectivity `rcs_sqrt`,
/// in the presence of fixed scatterers `others`. Angle estimates from the
/// SB and DB paths are treated as independent.
pub fn peb(q: &Vec3, rcs_sqrt: f64, others: &[ScatterPoint], model: &SensingModel) -> Result<f64> {
    let fixed = others.iter().map(|sp| TargetState::from_point(sp, model)).collect::<Result<Vec<_>>>()?;
    let sb = MultiTargetFim::new(&fixed, BounceKind::Single, model);
    let db = MultiTargetFim::new(&fixed, BounceKind::Double, model);
    let mut positions = vec![*q];
    positions.extend(others.iter().map(|sp| sp.position));
    peb_with(q, rcs_sqrt, &positions, &sb, &db, model)
}

/// Same as [`peb`] with precomputed fixed-target FIM parts; `positions`
/// lists the moving point first, then the fixed scatterers.
pub fn peb_with(
    q: &Vec3,
    rcs_sqrt: f64,
    positions: &[Vec3],
    sb: &MultiTargetFim,
    db: &MultiTargetFim,
    model: &SensingModel,
) -> Result<f64> {
    let moving = TargetState::at(q, rcs_sqrt, model)?;
    let f_sb = sb.with_moving(&moving, model)?;
    let f_db = db.with_moving(&moving, model)?;
    let r = positions.len();
    let angle_idx: Vec<usize> = (0..r).map(|k| 3 * k).collect();
    for f in [&f_sb, &f_db] {
        let condition = f.condition_number();
        if !(condition <= CONDITION_LIMIT) {
            return Err(Error::SingularInformation { condition });
        }
    }
    let e_alpha = efim_block(&f_sb, &angle_idx)?;
    let e_xi = efim_block(&f_db, &angle_idx)?;
    let jac = positions
        .iter()
        .map(|p| jacobian_angles_to_position(p, &model.geometry))
        .collect::<Result<Vec<Matrix2<f64>>>>()?;
    // J_α and J_ξ are R × 2R with target k's gradient in columns 2k, 2k+1
    let mut j_alpha = DMatrix::zeros(r, 2 * r);
    let mut j_xi = DMatrix::zeros(r, 2 * r);
    for (k, t) in jac.iter().enumerate() {
        j_alpha[(k, 2 * k)] = t[(0, 0)];
        j_alpha[(k, 2 * k + 1)] = t[(0, 1)];
        j_xi[(k, 2 * k)] = t[(1, 0)];
        j_xi[(k, 2 * k + 1)] = t[(1, 1)];
    }
    let pos = j_alpha.transpose() * e_alpha * &j_alpha + j_xi.transpose() * e_xi * &j_xi;
    let labels = (1..=r).flat_map(|k| [format!("x_{k}"), format!("z_{k}")]).collect();
    let pos = FisherMatrix::new(pos, labels)?;
    let inv = pos.inverse().map_err(|e| match e {
        Error::SingularInformation { condition } => {
            Error::DegenerateGeometry(format!("position FIM condition number {condition:e}"))
        }
        other => other,
    })?;
    Ok((inv[(0, 0)] + inv[(1, 1)]).sqrt())
}

/// CRB bundle of the linear-RIS baseline at one point.
#[derive(Debug)]
pub struct RisBound {
    pub fim: FisherMatrix,
    /// CRB(ξ) under the singularity policy.
    pub crb_xi: Result<f64>,
    /// 1/(F_ξξ − F_ξβ F_ββ⁻¹ F_βξ) without any policy; +∞ when the Schur
    /// term is not positive.
    pub raw_crb_xi: f64,
    /// CRB of Re β̄̄ with ξ known.
    pub gain_crb: f64,
}

/// FIM of the DB echo through a fixed-profile RIS over [ξ, Re β̄̄, Im β̄̄].
pub fn crb_ris(xi: f64, alpha: f64, gain: Complex64, profile: &RisProfile, model: &SensingModel) -> Result<RisBound> {
    let layout = model.stcm.layout();
    let lambda = model.budget.wavelength();
    let xi_b = model.geometry.bs_angle_at_stcm();
    let alpha_s = model.geometry.stcm_angle_at_bs();
    let x = model.pilots.symbols();
    let u3 = vec_of(&(model.pair_matrix(alpha, alpha_s) * x));
    let u4 = vec_of(&(model.pair_matrix(alpha_s, alpha) * x));
    let r3 = ris_response(profile, layout, xi, xi_b, lambda)?;
    let r4 = ris_response(profile, layout, xi_b, xi, lambda)?;
    // ∂/∂φ_A ρ(ξ_B, ξ) equals ∂/∂φ_D ρ(ξ, ξ_B) by swap symmetry
    let dr = ris_response_derivative(profile, layout, xi, xi_b, lambda)?;
    let h = &u3 * r3 + &u4 * r4;
    let dh = &u3 * dr + &u4 * dr;
    let cols = [dh * gain, h.clone(), &h * Complex64::new(0.0, 1.0)];
    let fim = fim_generic(&cols, model.noise_power, target_labels("xi", 1))?;
    let f = fim.entries();
    let schur = f[(0, 0)] - (f[(0, 1)].powi(2) + f[(0, 2)].powi(2)) / f[(1, 1)];
    let raw_crb_xi = if schur > 0.0 { 1.0 / schur } else { f64::INFINITY };
    let gain_crb = 1.0 / f[(1, 1)];
    let crb_xi = fim.crb(0);
    Ok(RisBound { fim, crb_xi, raw_crb_xi, gain_crb })
}

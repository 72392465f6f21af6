//! BS array, path gains, pilots and echo synthesis.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::{angles_from_position, ScatterPoint, SceneGeometry, Vec3};
use crate::metasurface::{HarmonicSet, Stcm};
use crate::rng::{complex_gaussian, stream};
use crate::{Error, Result, SPEED_OF_LIGHT};

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// Uniform linear array along x, centered on the BS.
#[derive(Debug, Clone, PartialEq)]
pub struct UlaLayout {
    positions: Vec<Vec3>,
    spacing: f64,
}

impl UlaLayout {
    pub fn uniform(m: usize, spacing: f64) -> Result<Self> {
        if m == 0 || !(spacing > 0.0) {
            return Err(Error::InvalidGeometry(format!("ULA with {m} antennas, spacing {spacing}")));
        }
        let c = (m as f64 - 1.0) / 2.0;
        let positions = (0..m).map(|i| Vec3::new((i as f64 - c) * spacing, 0.0, 0.0)).collect();
        Ok(Self { positions, spacing })
    }

    /// 16 antennas at half-wavelength spacing.
    pub fn table_one(carrier_wavelength: f64) -> Self {
        Self::uniform(16, carrier_wavelength / 2.0).expect("valid default ULA")
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }
}

/// exp(j Q_B k(α)) with k(α) = (2π/λ)(sin α, 0, cos α).
pub fn steering_vector(layout: &UlaLayout, angle: f64, wavelength: f64) -> CVector {
    let k = 2.0 * PI / wavelength;
    let dir = Vec3::new(angle.sin(), 0.0, angle.cos()) * k;
    CVector::from_iterator(layout.len(), layout.positions().iter().map(|q| Complex64::from_polar(1.0, dir.dot(q))))
}

pub fn steering_derivative(layout: &UlaLayout, angle: f64, wavelength: f64) -> CVector {
    let k = 2.0 * PI / wavelength;
    let dir = Vec3::new(angle.sin(), 0.0, angle.cos()) * k;
    let ddir = Vec3::new(angle.cos(), 0.0, -angle.sin()) * k;
    CVector::from_iterator(
        layout.len(),
        layout
            .positions()
            .iter()
            .map(|q| Complex64::from_polar(1.0, dir.dot(q)) * Complex64::new(0.0, ddir.dot(q))),
    )
}

/// Free-space power budget: G(d) = √E_s λ / (4π d^ι).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub carrier_hz: f64,
    pub pathloss_exponent: f64,
    /// Symbol energy; 1 when the transmit power lives in the pilots.
    pub symbol_energy: f64,
}

impl LinkBudget {
    pub fn table_one() -> Self {
        Self { carrier_hz: 10e9, pathloss_exponent: 2.0, symbol_energy: 1.0 }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn amplitude(&self, distance: f64) -> Result<f64> {
        if !(distance > 0.0) {
            return Err(Error::NonPositiveDistance(distance));
        }
        Ok(self.symbol_energy.sqrt() * self.wavelength() / (4.0 * PI * distance.powf(self.pathloss_exponent)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    /// BS → SP → BS.
    SingleBounce,
    /// BS → STCM → SP → BS and its reverse.
    DoubleBounce,
}

/// G(d)·exp(−j2πd/c)·σ_r·ν.
pub fn path_gain(distance: f64, sigma_r: f64, nu: Complex64, budget: &LinkBudget) -> Result<Complex64> {
    let g = budget.amplitude(distance)?;
    Ok(Complex64::from_polar(g * sigma_r, -2.0 * PI * distance / SPEED_OF_LIGHT) * nu)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGains {
    pub sb_gain: Complex64,
    pub db_gain: Complex64,
    pub sb_distance: f64,
    pub db_distance: f64,
}

impl PathGains {
    /// Gains of both paths of a scatterer at `q`; `nu_sb`/`nu_db` are the
    /// small-scale fading draws of each path.
    pub fn for_point(
        q: &Vec3,
        g: &SceneGeometry,
        sigma_r: f64,
        nu_sb: Complex64,
        nu_db: Complex64,
        budget: &LinkBudget,
    ) -> Result<Self> {
        let (d_r, d_rs) = g.distances(q)?;
        let sb_distance = 2.0 * d_r;
        let db_distance = g.baseline() + d_r + d_rs;
        Ok(Self {
            sb_gain: path_gain(sb_distance, sigma_r, nu_sb, budget)?,
            db_gain: path_gain(db_distance, sigma_r, nu_db, budget)?,
            sb_distance,
            db_distance,
        })
    }

    pub fn distance(&self, kind: PathKind) -> f64 {
        match kind {
            PathKind::SingleBounce => self.sb_distance,
            PathKind::DoubleBounce => self.db_distance,
        }
    }
}

/// Pilot block X (M antennas × S symbols).
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix {
    symbols: CMatrix,
    total_power: f64,
}

impl PilotMatrix {
    pub fn new(symbols: CMatrix) -> Self {
        let total_power = symbols.norm_squared();
        Self { symbols, total_power }
    }

    pub fn symbols(&self) -> &CMatrix {
        &self.symbols
    }

    /// ‖X‖²_F.
    pub fn total_power(&self) -> f64 {
        self.total_power
    }

    pub fn n_antennas(&self) -> usize {
        self.symbols.nrows()
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.ncols()
    }

    /// X Xᴴ.
    pub fn gram(&self) -> CMatrix {
        &self.symbols * self.symbols.adjoint()
    }
}

/// Kronecker product of two √M-point DFT matrices, scaled so that
/// ‖X‖²_F = `total_power`.
pub fn dft_pilots(m: usize, total_power: f64) -> Result<PilotMatrix> {
    let r = (m as f64).sqrt().round() as usize;
    if r * r != m || m == 0 {
        return Err(Error::NotPerfectSquare(m));
    }
    let dft = CMatrix::from_fn(r, r, |i, k| Complex64::from_polar(1.0, 2.0 * PI * (i * k) as f64 / r as f64));
    let scale = total_power.sqrt() / m as f64;
    Ok(PilotMatrix::new(dft.kronecker(&dft) * Complex64::new(scale, 0.0)))
}

/// Unbiased sample covariance (1/(S−1)) Σ_s x[s] x[s]ᴴ.
pub fn sample_covariance(x: &PilotMatrix) -> Result<CMatrix> {
    let s = x.n_symbols();
    if s < 2 {
        return Err(Error::TooFewSymbols(s));
    }
    Ok(x.gram() / Complex64::new((s - 1) as f64, 0.0))
}

/// Small-scale fading model of the scatterer reflectivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Fading {
    /// ν = 1.
    Deterministic,
    /// ν ~ CN(0, σ_ν²), drawn independently per path.
    Rayleigh { sigma_nu: f64 },
}

/// Per-path contributions to one harmonic.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoComponents {
    /// BS → STCM → BS.
    pub c1: CMatrix,
    /// BS → SP → BS.
    pub c2: CMatrix,
    /// BS → STCM → SP → BS.
    pub c3: CMatrix,
    /// BS → SP → STCM → BS.
    pub c4: CMatrix,
    pub noise: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoBundle {
    pub per_harmonic: BTreeMap<i32, CMatrix>,
    pub components: Option<BTreeMap<i32, EchoComponents>>,
    pub noise_power: f64,
}

/// Vectorized signal and per-target regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSignal {
    pub y: CVector,
    pub regressors: Vec<CVector>,
    pub gains: Vec<Complex64>,
}

/// Column-major vectorization.
pub fn vec_of(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

/// Everything needed to evaluate echoes and regressors at a scene point.
#[derive(Debug, Clone)]
pub struct SensingModel {
    pub geometry: SceneGeometry,
    pub ula: UlaLayout,
    pub stcm: Stcm,
    pub harmonics: HarmonicSet,
    pub pilots: PilotMatrix,
    pub budget: LinkBudget,
    pub noise_power: f64,
}

impl SensingModel {
    pub fn new(
        geometry: SceneGeometry,
        ula: UlaLayout,
        stcm: Stcm,
        harmonics: HarmonicSet,
        pilots: PilotMatrix,
        budget: LinkBudget,
        noise_power: f64,
    ) -> Result<Self> {
        if pilots.n_antennas() != ula.len() {
            return Err(Error::DimensionMismatch { expected: ula.len(), found: pilots.n_antennas() });
        }
        if stcm.max_order() < harmonics.m_f {
            return Err(Error::InvalidConfig(format!(
                "STCM caches harmonics up to {}, need {}",
                stcm.max_order(),
                harmonics.m_f
            )));
        }
        if !(noise_power > 0.0) {
            return Err(Error::OutOfRange { name: "noise power", value: noise_power });
        }
        Ok(Self { geometry, ula, stcm, harmonics, pilots, budget, noise_power })
    }

    pub fn with_harmonics(&self, harmonics: HarmonicSet) -> Result<Self> {
        let mut m = self.clone();
        if m.stcm.max_order() < harmonics.m_f {
            m.stcm = Stcm::new(
                m.stcm.layout().clone(),
                m.stcm.code().clone(),
                self.budget.carrier_hz,
                m.stcm.mode(),
                harmonics.m_f,
            )?;
        }
        m.harmonics = harmonics;
        Ok(m)
    }

    pub fn with_noise_power(&self, noise_power: f64) -> Result<Self> {
        Self::new(
            self.geometry.clone(),
            self.ula.clone(),
            self.stcm.clone(),
            self.harmonics,
            self.pilots.clone(),
            self.budget,
            noise_power,
        )
    }

    pub fn steering(&self, angle: f64) -> CVector {
        steering_vector(&self.ula, angle, self.budget.wavelength())
    }

    pub fn steering_derivative(&self, angle: f64) -> CVector {
        steering_derivative(&self.ula, angle, self.budget.wavelength())
    }

    /// A(α₁, α₂) = a(α₁) a(α₂)ᵀ.
    pub fn pair_matrix(&self, a1: f64, a2: f64) -> CMatrix {
        self.steering(a1) * self.steering(a2).transpose()
    }

    /// vec(A(α) X).
    pub fn sb_regressor(&self, alpha: f64) -> CVector {
        let a = self.steering(alpha);
        let row = a.transpose() * self.pilots.symbols();
        vec_of(&(&a * row))
    }

    /// ∂/∂α vec(A(α) X).
    pub fn sb_regressor_derivative(&self, alpha: f64) -> CVector {
        let a = self.steering(alpha);
        let da = self.steering_derivative(alpha);
        let x = self.pilots.symbols();
        let m = &da * (a.transpose() * x) + &a * (da.transpose() * x);
        vec_of(&m)
    }

    fn db_blocks(&self, alpha: f64) -> (CVector, CVector) {
        let alpha_s = self.geometry.stcm_angle_at_bs();
        let x = self.pilots.symbols();
        let a = self.steering(alpha);
        let a_s = self.steering(alpha_s);
        // c3 departs towards the SP, c4 towards the STCM
        let out_sp = vec_of(&(&a * (a_s.transpose() * x)));
        let out_stcm = vec_of(&(&a_s * (a.transpose() * x)));
        (out_sp, out_stcm)
    }

    fn db_stack<F, G>(&self, alpha: f64, f3: F, f4: G) -> CVector
    where
        F: Fn(i32) -> Complex64,
        G: Fn(i32) -> Complex64,
    {
        let (u3, u4) = self.db_blocks(alpha);
        let len = u3.len();
        let members = self.harmonics.members();
        let mut out = CVector::zeros(len * members.len());
        for (b, &m) in members.iter().enumerate() {
            let (e3, e4) = (f3(m), f4(m));
            for i in 0..len {
                out[b * len + i] = e3 * u3[i] + e4 * u4[i];
            }
        }
        out
    }

    /// Σ_m e_m ⊗ [η_m(ξ, ξ_B) vec(A(α, α_S)X) + η_m(ξ_B, ξ) vec(A(α_S, α)X)].
    pub fn db_regressor(&self, alpha: f64, xi: f64) -> CVector {
        let xi_b = self.geometry.bs_angle_at_stcm();
        self.db_stack(alpha, |m| self.stcm.pattern(m, xi, xi_b), |m| self.stcm.pattern(m, xi_b, xi))
    }

    /// ∂/∂ξ of [`SensingModel::db_regressor`].
    pub fn db_regressor_derivative(&self, alpha: f64, xi: f64) -> CVector {
        let xi_b = self.geometry.bs_angle_at_stcm();
        self.db_stack(
            alpha,
            |m| self.stcm.pattern_departure_derivative(m, xi, xi_b),
            |m| self.stcm.pattern_arrival_derivative(m, xi_b, xi),
        )
    }

    pub fn path_gains(&self, q: &Vec3, sigma_r: f64, nu_sb: Complex64, nu_db: Complex64) -> Result<PathGains> {
        PathGains::for_point(q, &self.geometry, sigma_r, nu_sb, nu_db, &self.budget)
    }

    fn fading_draws(&self, n: usize, fading: Fading, seed: u64) -> Vec<(Complex64, Complex64)> {
        match fading {
            Fading::Deterministic => vec![(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)); n],
            Fading::Rayleigh { sigma_nu } => {
                let var = sigma_nu * sigma_nu;
                (0..n)
                    .map(|r| {
                        let mut rng = stream(seed, "echo/fading", r as u64);
                        (complex_gaussian(&mut rng, var), complex_gaussian(&mut rng, var))
                    })
                    .collect()
            }
        }
    }

    /// Received echo for every analyzed harmonic.
    pub fn synthesize_echo(
        &self,
        scene: &[ScatterPoint],
        fading: Fading,
        noise_seed: u64,
        keep_components: bool,
    ) -> Result<EchoBundle> {
        let g = &self.geometry;
        let (m_ant, s) = (self.pilots.n_antennas(), self.pilots.n_symbols());
        let alpha_s = g.stcm_angle_at_bs();
        let xi_b = g.bs_angle_at_stcm();
        let x = self.pilots.symbols();
        let a_s = self.steering(alpha_s);
        let self_loop = &a_s * (a_s.transpose() * x);
        let stcm_gain = path_gain(2.0 * g.baseline(), 1.0, Complex64::new(1.0, 0.0), &self.budget)?;

        struct Target {
            sb: Complex64,
            db: Complex64,
            alpha: f64,
            xi: f64,
        }
        let draws = self.fading_draws(scene.len(), fading, noise_seed);
        let targets = scene
            .iter()
            .zip(draws)
            .map(|(sp, (nu_sb, nu_db))| {
                let ang = angles_from_position(&sp.position, g)?;
                let pg = self.path_gains(&sp.position, sp.rcs_sqrt, nu_sb, nu_db)?;
                Ok(Target { sb: pg.sb_gain, db: pg.db_gain, alpha: ang.alpha, xi: ang.xi })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut per_harmonic = BTreeMap::new();
        let mut components = BTreeMap::new();
        for (idx, m) in self.harmonics.members().into_iter().enumerate() {
            let c1 = &self_loop * (stcm_gain * self.stcm.pattern(m, xi_b, xi_b));
            let mut c2 = CMatrix::zeros(m_ant, s);
            let mut c3 = CMatrix::zeros(m_ant, s);
            let mut c4 = CMatrix::zeros(m_ant, s);
            for t in &targets {
                let a = self.steering(t.alpha);
                if m == 0 {
                    c2 += &a * (a.transpose() * x) * t.sb;
                }
                c3 += &a * (a_s.transpose() * x) * (t.db * self.stcm.pattern(m, t.xi, xi_b));
                c4 += &a_s * (a.transpose() * x) * (t.db * self.stcm.pattern(m, xi_b, t.xi));
            }
            let mut rng = stream(noise_seed, "echo/noise", idx as u64);
            let noise = CMatrix::from_fn(m_ant, s, |_, _| complex_gaussian(&mut rng, self.noise_power));
            let y = &c1 + &c2 + &c3 + &c4 + &noise;
            per_harmonic.insert(m, y);
            if keep_components {
                components.insert(m, EchoComponents { c1, c2, c3, c4, noise });
            }
        }
        Ok(EchoBundle {
            per_harmonic,
            components: keep_components.then_some(components),
            noise_power: self.noise_power,
        })
    }

    /// Single-bounce observation: vec(c2 + N) of the carrier harmonic. The
    /// STCM self-loop is assumed cancelled and the DB echoes separated in time.
    pub fn stack_sb(&self, scene: &[ScatterPoint], fading: Fading, noise_seed: u64) -> Result<StackedSignal> {
        let bundle = self.synthesize_echo(scene, fading, noise_seed, true)?;
        let comp = &bundle.components.as_ref().expect("components kept")[&0];
        let y = vec_of(&(&comp.c2 + &comp.noise));
        let draws = self.fading_draws(scene.len(), fading, noise_seed);
        let mut regressors = Vec::with_capacity(scene.len());
        let mut gains = Vec::with_capacity(scene.len());
        for (sp, (nu_sb, nu_db)) in scene.iter().zip(draws) {
            let ang = angles_from_position(&sp.position, &self.geometry)?;
            regressors.push(self.sb_regressor(ang.alpha));
            gains.push(self.path_gains(&sp.position, sp.rcs_sqrt, nu_sb, nu_db)?.sb_gain);
        }
        Ok(StackedSignal { y, regressors, gains })
    }

    /// Double-bounce observation: harmonic-major stack of vec(c3 + c4 + N).
    pub fn stack_db(&self, scene: &[ScatterPoint], fading: Fading, noise_seed: u64) -> Result<StackedSignal> {
        let bundle = self.synthesize_echo(scene, fading, noise_seed, true)?;
        let comps = bundle.components.as_ref().expect("components kept");
        let blocks: Vec<CVector> =
            comps.values().map(|c| vec_of(&(&c.c3 + &c.c4 + &c.noise))).collect();
        let len = blocks[0].len();
        let mut y = CVector::zeros(len * blocks.len());
        for (b, v) in blocks.iter().enumerate() {
            y.rows_mut(b * len, len).copy_from(v);
        }
        let draws = self.fading_draws(scene.len(), fading, noise_seed);
        let mut regressors = Vec::with_capacity(scene.len());
        let mut gains = Vec::with_capacity(scene.len());
        for (sp, (nu_sb, nu_db)) in scene.iter().zip(draws) {
            let ang = angles_from_position(&sp.position, &self.geometry)?;
            regressors.push(self.db_regressor(ang.alpha, ang.xi));
            gains.push(self.path_gains(&sp.position, sp.rcs_sqrt, nu_sb, nu_db)?.db_gain);
        }
        Ok(StackedSignal { y, regressors, gains })
    }
}

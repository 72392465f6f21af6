//! Space-time-coding metasurface: switching codes, harmonic Fourier
//! coefficients, per-harmonic far-field patterns and the fixed-profile RIS
//! response used as a baseline.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Uniform rectangular panel in its local x–y plane, centered on the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelLayout {
    n_x: usize,
    n_y: usize,
    spacing: f64,
    positions: Vec<Vec3>,
}

impl PanelLayout {
    /// Elements are ordered column by column: index = p·n_y + q, with p
    /// running along x.
    pub fn uniform(n_x: usize, n_y: usize, spacing: f64) -> Result<Self> {
        if n_x == 0 || n_y == 0 || !(spacing > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "panel {n_x}x{n_y} with spacing {spacing}"
            )));
        }
        let cx = (n_x as f64 - 1.0) / 2.0;
        let cy = (n_y as f64 - 1.0) / 2.0;
        let mut positions = Vec::with_capacity(n_x * n_y);
        for p in 0..n_x {
            for q in 0..n_y {
                positions.push(Vec3::new(
                    (p as f64 - cx) * spacing,
                    (q as f64 - cy) * spacing,
                    0.0,
                ));
            }
        }
        Ok(Self { n_x, n_y, spacing, positions })
    }

    /// 8×8 panel at half-wavelength spacing.
    pub fn table_one(carrier_wavelength: f64) -> Self {
        Self::uniform(8, 8, carrier_wavelength / 2.0).expect("valid default panel")
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn element_positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn element_index(&self, p: usize, q: usize) -> usize {
        p * self.n_y + q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodingScheme {
    /// Phase modulation, entries ±1.
    Pm,
    /// Amplitude modulation, entries 0/1.
    Am,
}

impl CodingScheme {
    fn allows(self, v: i8) -> bool {
        match self {
            CodingScheme::Pm => v == 1 || v == -1,
            CodingScheme::Am => v == 0 || v == 1,
        }
    }
}

/// Switching sequence of every element over one modulation period.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingMatrix {
    entries: Vec<Vec<i8>>,
    scheme: CodingScheme,
    period: f64,
}

/// Slot offsets of the default code, one per panel column.
pub const DEFAULT_COLUMN_OFFSETS: [usize; 8] = [0, 6, 2, 0, 0, 1, 1, 6];

impl CodingMatrix {
    pub fn new(entries: Vec<Vec<i8>>, scheme: CodingScheme, period: f64) -> Result<Self> {
        let l = entries.first().map_or(0, Vec::len);
        if l == 0 {
            return Err(Error::InvalidCode("empty code".into()));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidCode(format!("period {period}")));
        }
        for (n, row) in entries.iter().enumerate() {
            if row.len() != l {
                return Err(Error::InvalidCode(format!("row {n} has {} slots, expected {l}", row.len())));
            }
            if let Some(v) = row.iter().find(|&&v| !scheme.allows(v)) {
                return Err(Error::InvalidCode(format!("row {n} has entry {v} outside {scheme:?}")));
            }
        }
        Ok(Self { entries, scheme, period })
    }

    /// Every panel column p repeats `base` cyclically delayed by
    /// `offsets[p % offsets.len()]` slots.
    pub fn column_shifted(
        layout: &PanelLayout,
        base: &[i8],
        offsets: &[usize],
        scheme: CodingScheme,
        period: f64,
    ) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidCode("no column offsets".into()));
        }
        let l = base.len();
        let mut entries = Vec::with_capacity(layout.len());
        for p in 0..layout.n_x() {
            let row = rotate(base, offsets[p % offsets.len()]);
            for _ in 0..layout.n_y() {
                entries.push(row.clone());
            }
        }
        if l == 0 {
            return Err(Error::InvalidCode("empty base row".into()));
        }
        Self::new(entries, scheme, period)
    }

    /// Column-progressive balanced code: column p uses [+1 ×L/2, −1 ×L/2]
    /// delayed by p slots. Every row has zero mean.
    pub fn balanced_progressive(layout: &PanelLayout, l: usize, period: f64) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidCode(format!("code length {l} < 2")));
        }
        let base: Vec<i8> = (0..l).map(|i| if i < l / 2 { 1 } else { -1 }).collect();
        let offsets: Vec<usize> = (0..layout.n_x()).collect();
        Self::column_shifted(layout, &base, &offsets, CodingScheme::Pm, period)
    }

    /// Default code: base row [+1 ×(L−1), −1], each column delayed by
    /// [`DEFAULT_COLUMN_OFFSETS`]. Unlike a balanced row it keeps even and odd
    /// harmonics alive, so every added harmonic order carries information,
    /// and |a^m| decreases with |m|.
    pub fn default_for(layout: &PanelLayout, l: usize, period: f64) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidCode(format!("code length {l} < 2")));
        }
        let base: Vec<i8> = (0..l).map(|i| if i + 1 < l { 1 } else { -1 }).collect();
        let offsets: Vec<usize> = DEFAULT_COLUMN_OFFSETS.iter().map(|o| o % l).collect();
        Self::column_shifted(layout, &base, &offsets, CodingScheme::Pm, period)
    }

    pub fn entries(&self) -> &[Vec<i8>] {
        &self.entries
    }

    pub fn row(&self, element: usize) -> &[i8] {
        &self.entries[element]
    }

    pub fn n_elements(&self) -> usize {
        self.entries.len()
    }

    pub fn code_length(&self) -> usize {
        self.entries[0].len()
    }

    pub fn scheme(&self) -> CodingScheme {
        self.scheme
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Modulation frequency f0 = 1/T0.
    pub fn modulation_frequency(&self) -> f64 {
        1.0 / self.period
    }

    /// Writes one element per line, one slot per column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for row in &self.entries {
            wr.write_record(row.iter().map(|v| v.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, scheme: CodingScheme, period: f64) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut entries = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<i8>().map_err(|e| Error::InvalidCode(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            entries.push(row);
        }
        Self::new(entries, scheme, period)
    }
}

fn rotate(base: &[i8], delay: usize) -> Vec<i8> {
    let l = base.len();
    (0..l).map(|i| base[(i + l - delay % l) % l]).collect()
}

/// Analyzed harmonic orders −m_f..=m_f.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarmonicSet {
    pub m_f: u32,
}

impl HarmonicSet {
    pub fn new(m_f: u32) -> Self {
        Self { m_f }
    }

    pub fn members(&self) -> Vec<i32> {
        let m = self.m_f as i32;
        (-m..=m).collect()
    }

    pub fn len(&self) -> usize {
        2 * self.m_f as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Which wavelength the harmonic patterns use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavelengthMode {
    /// λ_m = c/(f_c + m f0).
    #[default]
    Exact,
    /// λ_c for every harmonic.
    Carrier,
}

pub fn harmonic_wavelength(carrier_hz: f64, f0: f64, m: i32, mode: WavelengthMode) -> f64 {
    match mode {
        WavelengthMode::Exact => SPEED_OF_LIGHT / (carrier_hz + m as f64 * f0),
        WavelengthMode::Carrier => SPEED_OF_LIGHT / carrier_hz,
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Fourier coefficient a^m of one element's periodic reflection coefficient.
pub fn fourier_coefficient(code: &CodingMatrix, element: usize, m: i32) -> Complex64 {
    row_coefficient(code.row(element), m)
}

fn row_coefficient(row: &[i8], m: i32) -> Complex64 {
    let l = row.len() as f64;
    let mf = m as f64;
    let envelope = sinc(PI * mf / l) / l;
    row.iter()
        .enumerate()
        .map(|(i, &g)| {
            let slot = (i + 1) as f64;
            Complex64::from_polar(g as f64 * envelope, -PI * mf * (2.0 * slot - 1.0) / l)
        })
        .sum()
}

/// In-plane wavenumber direction (sin φ, 0, cos φ) and its φ-derivative.
fn direction(phi: f64) -> (Vec3, Vec3) {
    let (s, c) = phi.sin_cos();
    (Vec3::new(s, 0.0, c), Vec3::new(c, 0.0, -s))
}

fn pattern_sum(positions: &[Vec3], coeffs: &[Complex64], k: f64, phi_d: f64, phi_a: f64) -> Complex64 {
    let kv = (direction(phi_d).0 + direction(phi_a).0) * k;
    positions
        .iter()
        .zip(coeffs)
        .map(|(q, a)| a * Complex64::from_polar(1.0, kv.dot(q)))
        .sum()
}

fn pattern_departure_derivative(
    positions: &[Vec3],
    coeffs: &[Complex64],
    k: f64,
    phi_d: f64,
    phi_a: f64,
) -> Complex64 {
    let (dir_d, ddir_d) = direction(phi_d);
    let kv = (dir_d + direction(phi_a).0) * k;
    let dk = ddir_d * k;
    positions
        .iter()
        .zip(coeffs)
        .map(|(q, a)| a * Complex64::from_polar(1.0, kv.dot(q)) * Complex64::new(0.0, dk.dot(q)))
        .sum()
}

/// Far-field pattern η_m(φ_D, φ_A) of harmonic m with isotropic elements.
pub fn harmonic_pattern(
    layout: &PanelLayout,
    code: &CodingMatrix,
    m: i32,
    phi_d: f64,
    phi_a: f64,
    carrier_hz: f64,
    mode: WavelengthMode,
) -> Complex64 {
    let coeffs = coefficient_row(code, m);
    let k = 2.0 * PI / harmonic_wavelength(carrier_hz, code.modulation_frequency(), m, mode);
    pattern_sum(layout.element_positions(), &coeffs, k, phi_d, phi_a)
}

/// dη_m(ξ, 0)/dξ: derivative with respect to the STCM-side angle, the other
/// side held at boresight.
pub fn harmonic_pattern_derivative(
    layout: &PanelLayout,
    code: &CodingMatrix,
    m: i32,
    xi: f64,
    carrier_hz: f64,
    mode: WavelengthMode,
) -> Complex64 {
    let coeffs = coefficient_row(code, m);
    let k = 2.0 * PI / harmonic_wavelength(carrier_hz, code.modulation_frequency(), m, mode);
    pattern_departure_derivative(layout.element_positions(), &coeffs, k, xi, 0.0)
}

fn coefficient_row(code: &CodingMatrix, m: i32) -> Vec<Complex64> {
    code.entries().iter().map(|row| row_coefficient(row, m)).collect()
}

/// Panel plus code with the per-harmonic coefficients cached; this is the
/// fast path used by the sweeps.
#[derive(Debug, Clone)]
pub struct Stcm {
    layout: PanelLayout,
    code: CodingMatrix,
    carrier_hz: f64,
    mode: WavelengthMode,
    max_order: i32,
    coeffs: Vec<Vec<Complex64>>,
}

impl Stcm {
    pub fn new(
        layout: PanelLayout,
        code: CodingMatrix,
        carrier_hz: f64,
        mode: WavelengthMode,
        max_order: u32,
    ) -> Result<Self> {
        if code.n_elements() != layout.len() {
            return Err(Error::DimensionMismatch { expected: layout.len(), found: code.n_elements() });
        }
        let max_order = max_order as i32;
        let coeffs = (-max_order..=max_order).map(|m| coefficient_row(&code, m)).collect();
        Ok(Self { layout, code, carrier_hz, mode, max_order, coeffs })
    }

    pub fn layout(&self) -> &PanelLayout {
        &self.layout
    }

    pub fn code(&self) -> &CodingMatrix {
        &self.code
    }

    pub fn mode(&self) -> WavelengthMode {
        self.mode
    }

    pub fn max_order(&self) -> u32 {
        self.max_order as u32
    }

    pub fn coefficients(&self, m: i32) -> &[Complex64] {
        assert!(m.abs() <= self.max_order, "harmonic {m} beyond cached order {}", self.max_order);
        &self.coeffs[(m + self.max_order) as usize]
    }

    fn wavenumber(&self, m: i32) -> f64 {
        2.0 * PI / harmonic_wavelength(self.carrier_hz, self.code.modulation_frequency(), m, self.mode)
    }

    pub fn pattern(&self, m: i32, phi_d: f64, phi_a: f64) -> Complex64 {
        pattern_sum(self.layout.element_positions(), self.coefficients(m), self.wavenumber(m), phi_d, phi_a)
    }

    /// ∂η_m/∂φ_D.
    pub fn pattern_departure_derivative(&self, m: i32, phi_d: f64, phi_a: f64) -> Complex64 {
        pattern_departure_derivative(
            self.layout.element_positions(),
            self.coefficients(m),
            self.wavenumber(m),
            phi_d,
            phi_a,
        )
    }

    /// ∂η_m/∂φ_A, obtained through swap symmetry.
    pub fn pattern_arrival_derivative(&self, m: i32, phi_d: f64, phi_a: f64) -> Complex64 {
        self.pattern_departure_derivative(m, phi_a, phi_d)
    }
}

/// Unit-modulus phase profile of a linear RIS.
#[derive(Debug, Clone, PartialEq)]
pub struct RisProfile {
    phases: Vec<Complex64>,
}

impl RisProfile {
    pub fn new(phases: Vec<Complex64>) -> Result<Self> {
        if let Some(w) = phases.iter().find(|w| (w.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::OutOfRange { name: "RIS phase modulus", value: w.norm() });
        }
        Ok(Self { phases })
    }

    pub fn all_ones(n: usize) -> Self {
        Self { phases: vec![Complex64::new(1.0, 0.0); n] }
    }

    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        let phases = (0..n)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
            .collect();
        Self { phases }
    }

    pub fn phases(&self) -> &[Complex64] {
        &self.phases
    }
}

/// a_Rᵀ(φ_D)·diag(ω)·a_R(φ_A) at wavelength `wavelength`.
pub fn ris_response(
    profile: &RisProfile,
    layout: &PanelLayout,
    phi_d: f64,
    phi_a: f64,
    wavelength: f64,
) -> Result<Complex64> {
    check_profile(profile, layout)?;
    Ok(pattern_sum(layout.element_positions(), profile.phases(), 2.0 * PI / wavelength, phi_d, phi_a))
}

/// ∂/∂φ_D of [`ris_response`].
pub fn ris_response_derivative(
    profile: &RisProfile,
    layout: &PanelLayout,
    phi_d: f64,
    phi_a: f64,
    wavelength: f64,
) -> Result<Complex64> {
    check_profile(profile, layout)?;
    Ok(pattern_departure_derivative(
        layout.element_positions(),
        profile.phases(),
        2.0 * PI / wavelength,
        phi_d,
        phi_a,
    ))
}

fn check_profile(profile: &RisProfile, layout: &PanelLayout) -> Result<()> {
    if profile.phases().len() != layout.len() {
        return Err(Error::DimensionMismatch { expected: layout.len(), found: profile.phases().len() });
    }
    Ok(())
}

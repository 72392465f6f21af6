//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{dft_pilots, LinkBudget, SensingModel, UlaLayout};
use crate::classification::HypothesisSet;
use crate::geometry::{PlaneBounds, PlaneGrid, ScatterPoint, SceneGeometry, SpKind, Vec3};
use crate::metasurface::{CodingMatrix, CodingScheme, HarmonicSet, PanelLayout, RisProfile, Stcm, WavelengthMode};
use crate::rng::stream;
use crate::{dbm_to_watts, Error, Result};

const DEFAULT_TOML: &str = include_str!("default_config.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub bs_center: [f64; 3],
    pub stcm_center: [f64; 3],
    pub x_range: [f64; 2],
    pub z_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub antennas: usize,
    pub spacing_wavelengths: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotConfig {
    pub total_power_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub power_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelConfig {
    pub n_x: usize,
    pub n_y: usize,
    pub spacing_wavelengths: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodePattern {
    Default,
    BalancedProgressive,
    ColumnShifted { base: Vec<i8>, offsets: Vec<usize>, scheme: CodingScheme },
    Csv { path: PathBuf, scheme: CodingScheme },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    pub slots: usize,
    pub modulation_hz: f64,
    pub wavelength_mode: WavelengthMode,
    pub pattern: CodePattern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicsConfig {
    pub m_f: u32,
    pub sweep: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub rcs_db: f64,
    pub double_positions: Vec<[f64; 3]>,
    pub ring_radius: f64,
    pub ring_angles_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    pub p_fa: f64,
    pub sigma_nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationConfig {
    pub priors: [f64; 3],
    pub rcs_db: [f64; 2],
    pub snr_db_start: f64,
    pub snr_db_stop: f64,
    pub snr_db_step: f64,
    pub reference_point: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RisKind {
    AllOnes,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RisConfig {
    pub profile: RisKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid_resolution: f64,
    pub n_trials: u64,
    pub geometry: GeometryConfig,
    pub link: LinkBudget,
    pub bs_array: ArrayConfig,
    pub pilots: PilotConfig,
    pub noise: NoiseConfig,
    pub panel: PanelConfig,
    pub code: CodeConfig,
    pub harmonics: HarmonicsConfig,
    pub scene: SceneConfig,
    pub detection: DetectionConfig,
    pub classification: ClassificationConfig,
    pub ris: RisConfig,
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl ExperimentConfig {
    /// The embedded default configuration text.
    pub fn default_toml() -> &'static str {
        DEFAULT_TOML
    }

    pub fn table_one() -> Self {
        Self::from_toml_str(DEFAULT_TOML).expect("embedded default config is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = toml::from_str(&text)?;
        // relative code files are resolved against the config location
        if let CodePattern::Csv { path: p, .. } = &mut cfg.code.pattern {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.grid_resolution > 0.0) {
            return bad(format!("grid_resolution {} must be positive", self.grid_resolution));
        }
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if self.harmonics.sweep.is_empty() {
            return bad("harmonics.sweep is empty".into());
        }
        if !(self.detection.p_fa > 0.0 && self.detection.p_fa < 1.0) {
            return bad(format!("detection.p_fa {} outside (0, 1)", self.detection.p_fa));
        }
        if !(self.detection.sigma_nu >= 0.0) {
            return bad("detection.sigma_nu must be non-negative".into());
        }
        let c = &self.classification;
        if !(c.snr_db_step > 0.0 && c.snr_db_stop >= c.snr_db_start) {
            return bad("classification SNR range is empty".into());
        }
        if !(self.code.modulation_hz > 0.0) {
            return bad("code.modulation_hz must be positive".into());
        }
        if self.link.carrier_hz <= 0.0 || self.link.pathloss_exponent <= 0.0 || self.link.symbol_energy <= 0.0 {
            return bad("link parameters must be positive".into());
        }
        self.hypotheses()?;
        self.sensing_model()?;
        self.double_scene()?;
        self.multi_scene()?;
        Ok(())
    }

    pub fn scene_geometry(&self) -> Result<SceneGeometry> {
        let g = &self.geometry;
        SceneGeometry::new(
            vec3(g.bs_center),
            vec3(g.stcm_center),
            PlaneBounds { x_min: g.x_range[0], x_max: g.x_range[1], z_min: g.z_range[0], z_max: g.z_range[1] },
        )
    }

    pub fn grid(&self) -> Result<PlaneGrid> {
        PlaneGrid::new(&self.scene_geometry()?.bounds(), self.grid_resolution)
    }

    pub fn coding_matrix(&self, layout: &PanelLayout) -> Result<CodingMatrix> {
        let period = 1.0 / self.code.modulation_hz;
        match &self.code.pattern {
            CodePattern::Default => CodingMatrix::default_for(layout, self.code.slots, period),
            CodePattern::BalancedProgressive => CodingMatrix::balanced_progressive(layout, self.code.slots, period),
            CodePattern::ColumnShifted { base, offsets, scheme } => {
                if base.len() != self.code.slots {
                    return Err(Error::InvalidConfig(format!(
                        "code base has {} slots, code.slots is {}",
                        base.len(),
                        self.code.slots
                    )));
                }
                CodingMatrix::column_shifted(layout, base, offsets, *scheme, period)
            }
            CodePattern::Csv { path, scheme } => {
                let file = std::fs::File::open(path)?;
                CodingMatrix::read_csv(file, *scheme, period)
            }
        }
    }

    /// Largest harmonic order any experiment will ask for.
    pub fn max_harmonic(&self) -> u32 {
        self.harmonics.sweep.iter().copied().chain([self.harmonics.m_f]).max().unwrap_or(0)
    }

    pub fn sensing_model(&self) -> Result<SensingModel> {
        let lambda = self.link.wavelength();
        let ula = UlaLayout::uniform(self.bs_array.antennas, self.bs_array.spacing_wavelengths * lambda)?;
        let panel = PanelLayout::uniform(self.panel.n_x, self.panel.n_y, self.panel.spacing_wavelengths * lambda)?;
        let code = self.coding_matrix(&panel)?;
        let stcm = Stcm::new(panel, code, self.link.carrier_hz, self.code.wavelength_mode, self.max_harmonic())?;
        let pilots = dft_pilots(self.bs_array.antennas, dbm_to_watts(self.pilots.total_power_dbm))?;
        SensingModel::new(
            self.scene_geometry()?,
            ula,
            stcm,
            HarmonicSet::new(self.harmonics.m_f),
            pilots,
            self.link,
            dbm_to_watts(self.noise.power_dbm),
        )
    }

    pub fn hypotheses(&self) -> Result<HypothesisSet> {
        let c = &self.classification;
        HypothesisSet::new(
            c.priors,
            [0.0, crate::db_to_amplitude(c.rcs_db[0]), crate::db_to_amplitude(c.rcs_db[1])],
        )
    }

    fn scene_point(&self, position: Vec3) -> Result<ScatterPoint> {
        let g = self.scene_geometry()?;
        let sp = ScatterPoint::new_in(&g, position, crate::db_to_amplitude(self.scene.rcs_db), SpKind::HumanLike)?;
        crate::geometry::angles_from_position(&sp.position, &g)?;
        Ok(sp)
    }

    /// Fixed scatterers of the two-target layout.
    pub fn double_scene(&self) -> Result<Vec<ScatterPoint>> {
        self.scene.double_positions.iter().map(|p| self.scene_point(vec3(*p))).collect()
    }

    /// Fixed scatterers of the ten-target layout, on a ring around the BS.
    pub fn multi_scene(&self) -> Result<Vec<ScatterPoint>> {
        let bs = vec3(self.geometry.bs_center);
        self.scene
            .ring_angles_deg
            .iter()
            .map(|a| {
                let a = a.to_radians();
                self.scene_point(bs + Vec3::new(a.sin(), 0.0, a.cos()) * self.scene.ring_radius)
            })
            .collect()
    }

    pub fn snr_grid(&self) -> Vec<f64> {
        let c = &self.classification;
        let n = ((c.snr_db_stop - c.snr_db_start) / c.snr_db_step + 1e-9).floor() as usize;
        (0..=n).map(|k| c.snr_db_start + k as f64 * c.snr_db_step).collect()
    }

    pub fn ris_profile(&self) -> RisProfile {
        let n = self.panel.n_x * self.panel.n_y;
        match self.ris.profile {
            RisKind::AllOnes => RisProfile::all_ones(n),
            RisKind::Random => RisProfile::random(n, &mut stream(self.seed, "ris/profile", 0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_reproduces_table_one() {
        let c = ExperimentConfig::table_one();
        let m = c.sensing_model().unwrap();
        assert_eq!(m.ula.len(), 16);
        assert_eq!(m.stcm.layout().len(), 64);
        assert_eq!(m.stcm.code().code_length(), 8);
        assert!((m.stcm.code().modulation_frequency() - 500e3).abs() < 1e-6);
        assert!((m.pilots.total_power() - dbm_to_watts(12.0)).abs() < 1e-15);
        assert!((m.noise_power - 1e-15).abs() < 1e-27);
        assert_eq!(m.harmonics.m_f, 4);
        assert_eq!(c.grid().unwrap().len(), 161 * 101);
        assert_eq!(c.multi_scene().unwrap().len(), 9);
        assert_eq!(c.double_scene().unwrap()[0].position, Vec3::new(60.0, 0.0, 40.0));
        assert_eq!(c.snr_grid(), (0..13).map(|k| -10.0 + 5.0 * k as f64).collect::<Vec<_>>());
    }

    #[test]
    fn unknown_fields_and_bad_values_are_rejected() {
        let text = ExperimentConfig::default_toml().replace("seed = 1", "seed = 1\nsead = 2");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Toml(_))));
        let text = ExperimentConfig::default_toml().replace("p_fa = 1e-4", "p_fa = 1.5");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::InvalidConfig(_))));
        let text = ExperimentConfig::default_toml().replace("antennas = 16", "antennas = 15");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::NotPerfectSquare(15))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::table_one();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn csv_code_roundtrip_through_config() {
        let dir = tempfile::tempdir().unwrap();
        let base = ExperimentConfig::table_one();
        let panel = PanelLayout::table_one(base.link.wavelength());
        let code = base.coding_matrix(&panel).unwrap();
        code.write_csv(std::fs::File::create(dir.path().join("code.csv")).unwrap()).unwrap();
        let text = ExperimentConfig::default_toml()
            .replace("kind = \"default\"", "kind = \"csv\"\npath = \"code.csv\"\nscheme = \"pm\"");
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, text).unwrap();
        let cfg = ExperimentConfig::from_path(&path).unwrap();
        assert_eq!(cfg.coding_matrix(&panel).unwrap(), code);
    }
}

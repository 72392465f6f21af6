//! Experiment orchestration and result emission.
//!
//! Every experiment renders its outputs in memory first. Grid points and
//! Monte Carlo cells are fanned out over the rayon pool and assembled by
//! index, so results do not depend on the thread count. Files are written
//! afterwards, followed by the manifest, so a manifest exists only when all
//! outputs do.

pub mod config;
pub mod validate;

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{crb_alpha_closed, crb_ris, crb_xi_closed, peb_with, BounceKind, MultiTargetFim, TargetState};
use crate::channel::SensingModel;
use crate::classification::{confusion_exact, confusion_mc, ClassificationScenario};
use crate::detection::{detection_map, effective_regressor_energy, threshold_from_pfa, Combiner};
use crate::geometry::{angles_from_position, PlaneGrid, ScatterPoint, SpKind, Vec3};
use crate::metasurface::HarmonicSet;
use crate::{power_to_db, Error, Result};
use config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CrbMap,
    PebMap,
    DetectMap,
    ClassifyMc,
    RisCompare,
    Validate,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::CrbMap,
        ExperimentKind::PebMap,
        ExperimentKind::DetectMap,
        ExperimentKind::ClassifyMc,
        ExperimentKind::RisCompare,
        ExperimentKind::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CrbMap => "crb-map",
            ExperimentKind::PebMap => "peb-map",
            ExperimentKind::DetectMap => "detect-map",
            ExperimentKind::ClassifyMc => "classify-mc",
            ExperimentKind::RisCompare => "ris-compare",
            ExperimentKind::Validate => "validate",
        }
    }
}

/// Scatterer layouts of the bounds experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Single,
    Double,
    Multi,
}

impl Layout {
    pub const ALL: [Layout; 3] = [Layout::Single, Layout::Double, Layout::Multi];

    pub fn label(self) -> &'static str {
        match self {
            Layout::Single => "single",
            Layout::Double => "double",
            Layout::Multi => "multi",
        }
    }

    pub fn fixed_points(self, cfg: &ExperimentConfig) -> Result<Vec<ScatterPoint>> {
        match self {
            Layout::Single => Ok(Vec::new()),
            Layout::Double => cfg.double_scene(),
            Layout::Multi => cfg.multi_scene(),
        }
    }
}

/// A rendered output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultManifest {
    pub tool: String,
    pub version: String,
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Numeric cell; empty when unavailable, `inf` for unbounded values.
fn cell(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) => format!("{x:e}"),
    }
}

fn coord(v: f64) -> String {
    format!("{v}")
}

fn render_csv<R: AsRef<[String]>>(name: String, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<OutputFile> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.as_ref())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(OutputFile { name, bytes })
}

/// One (x, z, value, masked) map.
fn render_map(name: String, value_name: &str, grid: &PlaneGrid, values: &[Option<f64>]) -> Result<OutputFile> {
    let rows = values.iter().enumerate().map(|(i, v)| {
        let q = grid.point(i);
        vec![coord(q.x), coord(q.z), cell(*v), v.is_none().to_string()]
    });
    render_csv(name, &["x", "z", value_name, "masked"], rows)
}

fn db(v: f64) -> f64 {
    power_to_db(v)
}

fn par_grid<F>(grid: &PlaneGrid, f: F) -> Vec<Option<f64>>
where
    F: Fn(&Vec3) -> Option<f64> + Sync,
{
    (0..grid.len()).into_par_iter().map(|i| f(&grid.point(i))).collect()
}

fn fixed_states(points: &[ScatterPoint], model: &SensingModel) -> Result<Vec<TargetState>> {
    points.iter().map(|sp| TargetState::from_point(sp, model)).collect()
}

/// CRB(α) or CRB(ξ) of a moving scatterer at every grid point, in dB.
pub fn crb_values(
    model: &SensingModel,
    grid: &PlaneGrid,
    fixed: &[ScatterPoint],
    kind: BounceKind,
    rcs_sqrt: f64,
) -> Result<Vec<Option<f64>>> {
    let states = fixed_states(fixed, model)?;
    let assembled = MultiTargetFim::new(&states, kind, model);
    Ok(par_grid(grid, |q| {
        let t = TargetState::at(q, rcs_sqrt, model).ok()?;
        let crb = if states.is_empty() {
            match kind {
                BounceKind::Single => crb_alpha_closed(t.alpha, t.sb_gain, model),
                BounceKind::Double => crb_xi_closed(t.xi, t.alpha, t.db_gain, model),
            }
        } else {
            assembled.with_moving(&t, model).and_then(|f| f.crb(0))
        };
        crb.ok().map(db)
    }))
}

/// CRB maps for every layout; CRB(ξ) for every swept harmonic count.
pub fn run_crb_map(cfg: &ExperimentConfig) -> Result<Vec<OutputFile>> {
    let model = cfg.sensing_model()?;
    let grid = cfg.grid()?;
    let rcs = crate::db_to_amplitude(cfg.scene.rcs_db);
    let mut out = Vec::new();
    for layout in Layout::ALL {
        let fixed = layout.fixed_points(cfg)?;
        let alpha = crb_values(&model, &grid, &fixed, BounceKind::Single, rcs)?;
        out.push(render_map(format!("crb_alpha_{}.csv", layout.label()), "crb_db", &grid, &alpha)?);
        for &mf in &cfg.harmonics.sweep {
            let m = model.with_harmonics(HarmonicSet::new(mf))?;
            let xi = crb_values(&m, &grid, &fixed, BounceKind::Double, rcs)?;
            out.push(render_map(format!("crb_xi_{}_mf{mf}.csv", layout.label()), "crb_db", &grid, &xi)?);
        }
    }
    Ok(out)
}

/// PEB in meters at every grid point for one layout.
pub fn peb_values(model: &SensingModel, grid: &PlaneGrid, fixed: &[ScatterPoint], rcs_sqrt: f64) -> Result<Vec<Option<f64>>> {
    let states = fixed_states(fixed, model)?;
    let sb = MultiTargetFim::new(&states, BounceKind::Single, model);
    let dbf = MultiTargetFim::new(&states, BounceKind::Double, model);
    Ok(par_grid(grid, |q| {
        let mut positions = vec![*q];
        positions.extend(fixed.iter().map(|sp| sp.position));
        peb_with(q, rcs_sqrt, &positions, &sb, &dbf, model).ok()
    }))
}

pub fn run_peb_map(cfg: &ExperimentConfig) -> Result<Vec<OutputFile>> {
    let model = cfg.sensing_model()?;
    let grid = cfg.grid()?;
    let rcs = crate::db_to_amplitude(cfg.scene.rcs_db);
    let mut out = Vec::new();
    for layout in Layout::ALL {
        let values = peb_values(&model, &grid, &layout.fixed_points(cfg)?, rcs)?;
        out.push(render_map(format!("peb_{}.csv", layout.label()), "peb_m", &grid, &values)?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct DetectionSidecar {
    p_fa: f64,
    threshold: f64,
    sigma_nu: f64,
    noise_power_w: f64,
    distance: &'static str,
    regressor_energy: &'static str,
    files: Vec<String>,
}

pub fn run_detection_map(cfg: &ExperimentConfig) -> Result<Vec<OutputFile>> {
    let model = cfg.sensing_model()?;
    let grid = cfg.grid()?;
    let hyps = cfg.hypotheses()?;
    let maps = detection_map(&model, &hyps, cfg.detection.sigma_nu, cfg.detection.p_fa, &grid)?;
    let mut out = Vec::new();
    for map in &maps {
        let rows = map.values.iter().enumerate().map(|(i, v)| {
            let q = grid.point(i);
            vec![
                coord(q.x),
                coord(q.z),
                cell(*v),
                map.kind.label().to_string(),
                map.combiner.label().to_string(),
                v.is_none().to_string(),
            ]
        });
        let name = format!("detect_{}_{}.csv", map.kind.label(), map.combiner.label());
        out.push(render_csv(name, &["x", "z", "p_d", "sp_type", "combiner", "masked"], rows)?);
    }
    let sidecar = DetectionSidecar {
        p_fa: cfg.detection.p_fa,
        threshold: threshold_from_pfa(cfg.detection.p_fa)?,
        sigma_nu: cfg.detection.sigma_nu,
        noise_power_w: model.noise_power,
        distance: "single-bounce path length 2 d_r",
        regressor_energy: "noise-whitened: |H|^4 / |Z^H H|^2",
        files: out.iter().map(|f| f.name.clone()).collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&sidecar)?;
    bytes.push(b'\n');
    out.push(OutputFile { name: "detect_maps.json".into(), bytes });
    Ok(out)
}

/// Estimator variance σ_n²/E at the configured reference position.
pub fn classification_estimator_var(cfg: &ExperimentConfig, model: &SensingModel) -> Result<f64> {
    let r = cfg.classification.reference_point;
    let alpha = angles_from_position(&Vec3::new(r[0], r[1], r[2]), &model.geometry)?.alpha;
    let e = effective_regressor_energy(alpha, model, Combiner::MatchedDespread);
    if !(e > 0.0) {
        return Err(Error::ZeroRegressor);
    }
    Ok(model.noise_power / e)
}

/// One row of the classification sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationPoint {
    pub snr_db: f64,
    pub truth: SpKind,
    pub probabilities: [f64; 3],
    pub std_errors: [f64; 3],
    pub exact: [f64; 3],
    pub n_trials: u64,
}

pub fn classification_sweep(cfg: &ExperimentConfig) -> Result<Vec<ClassificationPoint>> {
    let model = cfg.sensing_model()?;
    let hyps = cfg.hypotheses()?;
    let var = classification_estimator_var(cfg, &model)?;
    let snrs = cfg.snr_grid();
    let cells: Vec<(SpKind, usize)> =
        [SpKind::HumanLike, SpKind::ObjectLike].iter().flat_map(|&t| (0..snrs.len()).map(move |g| (t, g))).collect();
    cells
        .par_iter()
        .map(|&(truth, g)| {
            let sc = ClassificationScenario::at_snr(&hyps, truth, snrs[g], var)?;
            let experiment = format!("classify/{}", truth.label());
            let row = confusion_mc(
                &hyps,
                &sc.path,
                truth,
                sc.truth_powers[truth.index()],
                cfg.n_trials,
                cfg.seed,
                &experiment,
                g as u64,
            )?;
            let exact = confusion_exact(&hyps, &sc.path, sc.truth_powers)[truth.index()];
            Ok(ClassificationPoint {
                snr_db: snrs[g],
                truth,
                probabilities: row.probabilities,
                std_errors: row.std_errors,
                exact,
                n_trials: cfg.n_trials,
            })
        })
        .collect()
}

pub fn run_classification_mc(cfg: &ExperimentConfig) -> Result<Vec<OutputFile>> {
    let points = classification_sweep(cfg)?;
    let header = [
        "snr_db", "true_class", "p_h0", "p_h1", "p_h2", "n_trials", "seed", "se_h0", "se_h1", "se_h2", "exact_h0",
        "exact_h1", "exact_h2",
    ];
    let rows = points.iter().map(|p| {
        let mut r = vec![coord(p.snr_db), p.truth.label().to_string()];
        r.extend(p.probabilities.iter().map(|v| format!("{v}")));
        r.push(p.n_trials.to_string());
        r.push(cfg.seed.to_string());
        r.extend(p.std_errors.iter().map(|v| format!("{v:e}")));
        r.extend(p.exact.iter().map(|v| format!("{v:e}")));
        r
    });
    Ok(vec![render_csv("classification.csv".into(), &header, rows)?])
}

/// Paired RIS / STCM bounds at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RisComparison {
    /// CRB(ξ) of the RIS under the singularity policy; `None` when masked.
    pub ris_crb: Option<f64>,
    pub ris_raw_crb: f64,
    pub ris_gain_crb: f64,
    pub stcm_crb: Option<f64>,
}

pub fn ris_comparison(cfg: &ExperimentConfig) -> Result<Vec<Option<RisComparison>>> {
    let model = cfg.sensing_model()?;
    let grid = cfg.grid()?;
    let profile = cfg.ris_profile();
    let rcs = crate::db_to_amplitude(cfg.scene.rcs_db);
    Ok((0..grid.len())
        .into_par_iter()
        .map(|i| {
            let t = TargetState::at(&grid.point(i), rcs, &model).ok()?;
            let ris = crb_ris(t.xi, t.alpha, t.db_gain, &profile, &model).ok()?;
            Some(RisComparison {
                ris_crb: ris.crb_xi.ok(),
                ris_raw_crb: ris.raw_crb_xi,
                ris_gain_crb: ris.gain_crb,
                stcm_crb: crb_xi_closed(t.xi, t.alpha, t.db_gain, &model).ok(),
            })
        })
        .collect())
}

pub fn run_ris_compare(cfg: &ExperimentConfig) -> Result<Vec<OutputFile>> {
    let grid = cfg.grid()?;
    let values = ris_comparison(cfg)?;
    let header = [
        "x",
        "z",
        "crb_xi_ris_db",
        "ris_masked",
        "raw_crb_xi_ris_db",
        "gain_crb_ris_db",
        "crb_xi_stcm_db",
        "stcm_masked",
    ];
    let rows = values.iter().enumerate().map(|(i, v)| {
        let q = grid.point(i);
        let mut r = vec![coord(q.x), coord(q.z)];
        match v {
            Some(c) => r.extend([
                cell(c.ris_crb.map(db)),
                c.ris_crb.is_none().to_string(),
                cell(Some(db(c.ris_raw_crb))),
                cell(Some(db(c.ris_gain_crb))),
                cell(c.stcm_crb.map(db)),
                c.stcm_crb.is_none().to_string(),
            ]),
            None => r.extend([String::new(), "true".into(), String::new(), String::new(), String::new(), "true".into()]),
        }
        r
    });
    Ok(vec![render_csv("ris_compare.csv".into(), &header, rows)?])
}

pub fn run_validate(cfg: &ExperimentConfig) -> Result<(Vec<OutputFile>, usize)> {
    let checks = validate::run_suite(cfg)?;
    let failures = checks.iter().filter(|c| !c.passed).count();
    let rows = checks.iter().map(|c| vec![c.name.to_string(), c.passed.to_string(), c.detail.clone()]);
    Ok((vec![render_csv("validate.csv".into(), &["check", "passed", "detail"], rows)?], failures))
}

/// Renders every output of one experiment. The count is the number of
/// failed checks (non-zero only for `validate`).
pub fn render(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<(Vec<OutputFile>, usize)> {
    let files = match kind {
        ExperimentKind::CrbMap => run_crb_map(cfg)?,
        ExperimentKind::PebMap => run_peb_map(cfg)?,
        ExperimentKind::DetectMap => run_detection_map(cfg)?,
        ExperimentKind::ClassifyMc => run_classification_mc(cfg)?,
        ExperimentKind::RisCompare => run_ris_compare(cfg)?,
        ExperimentKind::Validate => return run_validate(cfg),
    };
    Ok((files, 0))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the outputs, then the manifest.
pub fn write_outputs(
    dir: &Path,
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
    files: &[OutputFile],
    started_unix: u64,
) -> Result<ResultManifest> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(files.len());
    for f in files {
        std::fs::write(dir.join(&f.name), &f.bytes)?;
        entries.push(FileEntry { name: f.name.clone(), sha256: sha256_hex(&f.bytes), bytes: f.bytes.len() as u64 });
    }
    let manifest = ResultManifest {
        tool: "stcm-lab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: kind,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        started_unix,
        finished_unix: unix_now(),
        files: entries,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    std::fs::write(dir.join(MANIFEST_NAME), bytes)?;
    Ok(manifest)
}

/// Re-hashes every file listed in a manifest.
pub fn verify_manifest(dir: &Path) -> Result<ResultManifest> {
    let manifest: ResultManifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_NAME))?)?;
    for e in &manifest.files {
        let bytes = std::fs::read(dir.join(&e.name))?;
        if sha256_hex(&bytes) != e.sha256 {
            return Err(Error::ManifestMismatch(format!("checksum of {} differs", e.name)));
        }
    }
    Ok(manifest)
}

/// Renders and writes one experiment. Fails after writing when a
/// validation check fails, so the report is still on disk.
pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig, dir: &Path) -> Result<ResultManifest> {
    let started = unix_now();
    let (files, failures) = render(kind, cfg)?;
    let manifest = write_outputs(dir, kind, cfg, &files, started)?;
    if failures > 0 {
        return Err(Error::ValidationFailed(failures));
    }
    Ok(manifest)
}

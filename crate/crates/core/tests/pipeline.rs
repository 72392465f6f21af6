use std::path::Path;

use stcm_core::geometry::SpKind;
use stcm_core::simulator::config::ExperimentConfig;
use stcm_core::simulator::{run, verify_manifest, ExperimentKind, MANIFEST_NAME};

fn coarse() -> ExperimentConfig {
    let mut c = ExperimentConfig::table_one();
    c.grid_resolution = 10.0;
    c.n_trials = 2000;
    c.harmonics.sweep = vec![3, 4, 5];
    c
}

fn read_csv(dir: &Path, name: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(dir.join(name)).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn every_subcommand_writes_a_verifiable_manifest() {
    let c = coarse();
    for kind in ExperimentKind::ALL {
        let dir = tempfile::tempdir().unwrap();
        let m = run(kind, &c, dir.path()).unwrap();
        assert_eq!(m.experiment, kind);
        assert_eq!(m.seed, c.seed);
        assert_eq!(m.config_hash, c.hash());
        assert!(!m.files.is_empty());
        assert!(dir.path().join(MANIFEST_NAME).exists());
        let again = verify_manifest(dir.path()).unwrap();
        assert_eq!(again.files, m.files);
    }
}

#[test]
fn crb_maps_cover_every_layout_and_harmonic() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(ExperimentKind::CrbMap, &coarse(), dir.path()).unwrap();
    let names: Vec<&str> = m.files.iter().map(|f| f.name.as_str()).collect();
    for layout in ["single", "double", "multi"] {
        assert!(names.contains(&format!("crb_alpha_{layout}.csv").as_str()));
        for mf in [3, 4, 5] {
            assert!(names.contains(&format!("crb_xi_{layout}_mf{mf}.csv").as_str()));
        }
    }
    let (header, rows) = read_csv(dir.path(), "crb_xi_single_mf4.csv");
    assert_eq!(header, ["x", "z", "crb_db", "masked"]);
    for r in &rows {
        // masked rows carry no number and vice versa
        assert_eq!(r[2].is_empty(), r[3] == "true", "{r:?}");
    }
    // the STCM row itself is degenerate
    assert!(rows.iter().any(|r| r[3] == "true"));
}

#[test]
fn more_harmonics_never_hurt_the_single_target_bound() {
    let dir = tempfile::tempdir().unwrap();
    run(ExperimentKind::CrbMap, &coarse(), dir.path()).unwrap();
    let col = |mf: u32| -> Vec<Option<f64>> {
        read_csv(dir.path(), &format!("crb_xi_single_mf{mf}.csv")).1.iter().map(|r| r[2].parse().ok()).collect()
    };
    let (a, b, c) = (col(3), col(4), col(5));
    for i in 0..a.len() {
        if let (Some(x), Some(y), Some(z)) = (a[i], b[i], c[i]) {
            assert!(y <= x + 1e-9 && z <= y + 1e-9, "row {i}: {x} {y} {z}");
        }
    }
}

#[test]
fn detection_maps_respect_the_rcs_and_combiner_orderings() {
    let dir = tempfile::tempdir().unwrap();
    run(ExperimentKind::DetectMap, &coarse(), dir.path()).unwrap();
    let pd = |kind: &str, comb: &str| -> Vec<Option<f64>> {
        read_csv(dir.path(), &format!("detect_{kind}_{comb}.csv")).1.iter().map(|r| r[2].parse().ok()).collect()
    };
    let human = pd("human_like", "matched_despread");
    let object = pd("object_like", "matched_despread");
    let flat = pd("human_like", "all_ones");
    for i in 0..human.len() {
        if let (Some(h), Some(o), Some(f)) = (human[i], object[i], flat[i]) {
            assert!((1e-4..=1.0).contains(&h));
            assert!(o >= h && h >= f - 1e-15, "row {i}");
        }
    }
    let sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("detect_maps.json")).unwrap()).unwrap();
    assert_eq!(sidecar["p_fa"], 1e-4);
}

#[test]
fn classification_table_rows_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let c = coarse();
    run(ExperimentKind::ClassifyMc, &c, dir.path()).unwrap();
    let (header, rows) = read_csv(dir.path(), "classification.csv");
    assert_eq!(&header[..6], ["snr_db", "true_class", "p_h0", "p_h1", "p_h2", "n_trials"]);
    assert_eq!(rows.len(), 2 * c.snr_grid().len());
    for r in &rows {
        let p: f64 = r[2..5].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((p - 1.0).abs() < 1e-12);
        let e: f64 = r[10..13].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((e - 1.0).abs() < 1e-9);
        assert!(r[1] == SpKind::HumanLike.label() || r[1] == SpKind::ObjectLike.label());
    }
}

#[test]
fn ris_is_never_better_than_the_stcm() {
    let dir = tempfile::tempdir().unwrap();
    run(ExperimentKind::RisCompare, &coarse(), dir.path()).unwrap();
    let (header, rows) = read_csv(dir.path(), "ris_compare.csv");
    let at = |n: &str| header.iter().position(|h| h == n).unwrap();
    let (raw, stcm) = (at("raw_crb_xi_ris_db"), at("crb_xi_stcm_db"));
    for r in &rows {
        if let (Ok(a), Ok(b)) = (r[raw].parse::<f64>(), r[stcm].parse::<f64>()) {
            assert!(a >= b, "{r:?}");
        }
    }
}

#[test]
fn config_files_roundtrip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    let text = ExperimentConfig::default_toml().replace("seed = 1", "seed = 99");
    std::fs::write(&path, text).unwrap();
    let c = ExperimentConfig::from_path(&path).unwrap();
    assert_eq!(c.seed, 99);
    assert_ne!(c.hash(), ExperimentConfig::table_one().hash());
}

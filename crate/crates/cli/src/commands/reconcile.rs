use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cpm_core::raster::read_pgm;
use cpm_core::reconcile::{
    build_report, MarkerObservation, QrObservation, QualityThresholds, ReconcileConfig,
    TargetWindow,
};

use crate::config::Config;
use crate::manifest::{manifest_path_for, Manifest};

use super::{read_json_file, write_json_file, Outcome};

pub struct Args<'a> {
    pub targets: PathBuf,
    pub markers: PathBuf,
    pub observations: PathBuf,
    pub out: PathBuf,
    pub images: Option<PathBuf>,
    pub coverage: Option<PathBuf>,
    pub pos_tol: Option<f64>,
    pub min_sharpness: Option<f64>,
    pub min_contrast: Option<f64>,
    pub max_clip_fraction: Option<f64>,
    pub config: &'a Config,
}

pub fn run(args: Args<'_>) -> Result<Outcome> {
    let cfg = &args.config.reconcile;
    let defaults = ReconcileConfig::default();
    let quality = QualityThresholds {
        min_sharpness: args
            .min_sharpness
            .or(cfg.min_sharpness)
            .unwrap_or(defaults.quality.min_sharpness),
        min_contrast: args
            .min_contrast
            .or(cfg.min_contrast)
            .unwrap_or(defaults.quality.min_contrast),
        max_clip_fraction: args
            .max_clip_fraction
            .or(cfg.max_clip_fraction)
            .unwrap_or(defaults.quality.max_clip_fraction),
    };
    let pos_tol_m = args.pos_tol.or(cfg.pos_tol_m).unwrap_or(defaults.pos_tol_m);

    let targets: Vec<TargetWindow> = read_json_file(&args.targets)?;
    let markers: Vec<MarkerObservation> = read_json_file(&args.markers)?;
    let observations: Vec<QrObservation> = read_json_file(&args.observations)?;
    let coverage: Option<BTreeMap<String, Vec<String>>> = match &args.coverage {
        Some(path) => Some(read_json_file(path)?),
        None => None,
    };
    let images = match &args.images {
        Some(dir) => load_images(dir)?,
        None => Vec::new(),
    };

    let config = ReconcileConfig {
        quality,
        pos_tol_m,
        coverage,
    };
    let report = build_report(&targets, &images, &markers, &observations, &config)?;
    write_json_file(&args.out, &report)?;

    let mut manifest = Manifest::new("reconcile");
    manifest.add_input("targets.json", &args.targets)?;
    manifest.add_input("markers.json", &args.markers)?;
    manifest.add_input("observations.json", &args.observations)?;
    if let Some(path) = &args.coverage {
        manifest.add_input("coverage.json", path)?;
    }
    if let Some(dir) = &args.images {
        manifest.add_input_dir("images", dir)?;
    }
    manifest.set_parameters(serde_json::json!({
        "pos_tol_m": pos_tol_m,
        "min_sharpness": quality.min_sharpness,
        "min_contrast": quality.min_contrast,
        "max_clip_fraction": quality.max_clip_fraction,
    }));
    manifest.add_output(
        args.out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    );
    manifest.write(&manifest_path_for(&args.out))?;

    println!(
        "reconciled {} targets: {} confirmed, {} position mismatches, {} pending, {} image rejections",
        targets.len(),
        report.confirmed.len(),
        report.position_mismatch.len(),
        report.pending.len(),
        report.quality_rejections.len()
    );
    Ok(if report.pending.is_empty() {
        Outcome::Clean
    } else {
        Outcome::Findings
    })
}

fn load_images(dir: &Path) -> Result<Vec<(String, cpm_core::raster::LuminanceGrid)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "pgm"))
        .collect();
    paths.sort();
    let mut images = Vec::with_capacity(paths.len());
    for path in paths {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let grid = read_pgm(&bytes).with_context(|| format!("decoding {}", path.display()))?;
        images.push((stem, grid));
    }
    Ok(images)
}

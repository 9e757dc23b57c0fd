use std::path::Path;

use anyhow::{Context, Result};
use cpm_core::annotations::{parse_label_file, scan_dataset, ValidationMode};
use cpm_core::detmetrics::{
    coco_thresholds, map_range, BoxXyxy, Detection, GroundTruth, MapOptions, PredictionRecord,
};

use crate::config::Config;
use crate::manifest::{manifest_path_for, Manifest};

use super::{read_json_file, write_json_file, Outcome};

pub fn run(
    root: &Path,
    predictions_path: &Path,
    out: &Path,
    min_confidence: Option<f64>,
    config: &Config,
) -> Result<Outcome> {
    let confidence_threshold = min_confidence
        .or(config.metrics.min_confidence)
        .unwrap_or(0.5);

    // Ground truth from the dataset layout, in normalized units.
    let scan = scan_dataset(root)?;
    let mut gts = Vec::new();
    for item in &scan.index.items {
        let Some(label_path) = &item.label_path else {
            continue;
        };
        let text = std::fs::read_to_string(label_path)
            .with_context(|| format!("reading {}", label_path.display()))?;
        let (file, _) = parse_label_file(&text, &item.stem, ValidationMode::Validate, None)
            .map_err(|e| anyhow::anyhow!("{}: {e}", label_path.display()))?;
        for ann in file.annotations {
            gts.push(GroundTruth {
                image: item.stem.clone(),
                class_id: ann.class_id,
                bbox: BoxXyxy::from(&ann.bbox),
            });
        }
    }

    let records: Vec<PredictionRecord> = read_json_file(predictions_path)?;
    let dets: Vec<Detection> = records
        .iter()
        .map(|r| r.to_detection())
        .collect::<Result<_, _>>()?;

    let opts = MapOptions {
        confidence_threshold,
        ..MapOptions::default()
    };
    let summary = map_range(&dets, &gts, &coco_thresholds(), &opts)?;
    write_json_file(out, &summary)?;

    let mut manifest = Manifest::new("eval");
    manifest.add_input_dir("dataset", root)?;
    manifest.add_input("predictions.json", predictions_path)?;
    manifest.set_parameters(serde_json::json!({
        "confidence_threshold": confidence_threshold,
        "iou_thresholds": coco_thresholds(),
    }));
    manifest.add_output(
        out.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    );
    manifest.write(&manifest_path_for(out))?;

    println!(
        "evaluated {} detections against {} ground truths: mAP50 {:.4}, mAP50-95 {:.4}, P {:.4} / R {:.4} / F1 {:.4}",
        dets.len(),
        gts.len(),
        summary.map50.unwrap_or(f64::NAN),
        summary.map50_95.unwrap_or(f64::NAN),
        summary.precision,
        summary.recall,
        summary.f1
    );
    Ok(Outcome::Clean)
}

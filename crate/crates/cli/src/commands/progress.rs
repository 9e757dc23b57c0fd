use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use cpm_core::progress::{
    infer_timeline, ObservationEvent, TimelineOptions, WindowTimeline, WindowType,
};
use serde::Serialize;

use crate::config::Config;
use crate::manifest::{manifest_path_for, Manifest};
use crate::WindowTypeArg;

use super::{read_json_file, write_json_file, Outcome};

#[derive(Debug, Serialize)]
struct ProgressReport {
    windows: Vec<WindowTimeline>,
}

pub fn run(
    events_path: &Path,
    out: &Path,
    min_confidence: Option<f64>,
    window_type: WindowTypeArg,
    config: &Config,
) -> Result<Outcome> {
    let min_confidence = min_confidence
        .or(config.progress.min_confidence)
        .unwrap_or(0.5);
    let window_type = match window_type {
        WindowTypeArg::SingleLayer => WindowType::SingleLayer,
        WindowTypeArg::DoubleLayer => WindowType::DoubleLayer,
    };
    let opts = TimelineOptions {
        min_confidence,
        window_type,
        ..TimelineOptions::default()
    };

    let events: Vec<ObservationEvent> = read_json_file(events_path)?;
    let mut by_window: BTreeMap<String, Vec<ObservationEvent>> = BTreeMap::new();
    for event in events {
        by_window
            .entry(event.window_id.clone())
            .or_default()
            .push(event);
    }

    let mut windows = Vec::with_capacity(by_window.len());
    for (window_id, events) in &by_window {
        let timeline = infer_timeline(events, &opts)
            .map_err(|e| anyhow::anyhow!("window {window_id}: {e}"))?;
        windows.push(timeline);
    }
    let anomaly_count: usize = windows.iter().map(|w| w.anomalies.len()).sum();
    write_json_file(out, &ProgressReport { windows })?;

    let mut manifest = Manifest::new("progress");
    manifest.add_input("events.json", events_path)?;
    manifest.set_parameters(serde_json::json!({
        "min_confidence": min_confidence,
        "window_type": window_type,
    }));
    manifest.add_output(
        out.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    );
    manifest.write(&manifest_path_for(out))?;

    println!(
        "inferred {} window timelines, {} anomalies",
        by_window.len(),
        anomaly_count
    );
    Ok(Outcome::Clean)
}

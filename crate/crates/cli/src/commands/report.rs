use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use cpm_core::progress::WindowTimeline;
use cpm_core::reconcile::{ReasonCode, ReconciliationReport};
use serde::{Deserialize, Serialize};

use crate::manifest::{manifest_path_for, Manifest};

use super::{read_json_file, write_json_file, Outcome};

#[derive(Debug, Deserialize)]
struct ProgressReport {
    windows: Vec<WindowTimeline>,
}

#[derive(Debug, Serialize)]
struct ProgressCell {
    current_percentage: u8,
    anomaly_count: usize,
    anomalies: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ReconcileCell {
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<ReasonCode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual_m: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SiteRow {
    window_id: String,
    needs_attention: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    progress: Option<ProgressCell>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reconcile: Option<ReconcileCell>,
    /// Sources in which this window is missing.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    missing: Vec<&'static str>,
}

#[derive(Debug, Serialize)]
struct SiteReport {
    summary: String,
    windows_total: usize,
    windows_needing_attention: usize,
    rows: Vec<SiteRow>,
}

pub fn run(
    progress_path: &Path,
    reconcile_path: &Path,
    out: &Path,
    text_out: Option<&Path>,
) -> Result<Outcome> {
    let progress: ProgressReport = read_json_file(progress_path)?;
    let reconcile: ReconciliationReport = read_json_file(reconcile_path)?;

    let mut progress_by_id: BTreeMap<&str, &WindowTimeline> = BTreeMap::new();
    for timeline in &progress.windows {
        progress_by_id.insert(&timeline.window_id, timeline);
    }
    let mut reconcile_by_id: BTreeMap<&str, ReconcileCell> = BTreeMap::new();
    for item in &reconcile.confirmed {
        reconcile_by_id.insert(
            &item.window_id,
            ReconcileCell {
                status: "confirmed".into(),
                reason: None,
                residual_m: Some(item.residual_m),
            },
        );
    }
    for item in &reconcile.position_mismatch {
        reconcile_by_id.insert(
            &item.window_id,
            ReconcileCell {
                status: "position_mismatch".into(),
                reason: Some(item.reason),
                residual_m: Some(item.residual_m),
            },
        );
    }
    for item in &reconcile.pending {
        reconcile_by_id.insert(
            &item.window_id,
            ReconcileCell {
                status: "pending".into(),
                reason: Some(item.reason),
                residual_m: None,
            },
        );
    }

    let mut ids: Vec<&str> = progress_by_id
        .keys()
        .chain(reconcile_by_id.keys())
        .copied()
        .collect();
    ids.sort_unstable();
    ids.dedup();

    let mut rows = Vec::with_capacity(ids.len());
    for id in ids {
        let progress_cell = progress_by_id.get(id).map(|tl| ProgressCell {
            current_percentage: tl.current_percentage,
            anomaly_count: tl.anomalies.len(),
            anomalies: tl
                .anomalies
                .iter()
                .map(|a| format!("{:?} at t={}: {}", a.kind, a.timestamp, a.detail))
                .collect(),
        });
        let reconcile_cell = reconcile_by_id.remove(id);
        let mut missing = Vec::new();
        if progress_cell.is_none() {
            missing.push("progress");
        }
        if reconcile_cell.is_none() {
            missing.push("reconcile");
        }
        if !missing.is_empty() {
            eprintln!(
                "warning: window {id} missing from {} input",
                missing.join(" and ")
            );
        }
        let needs_attention = progress_cell.as_ref().is_some_and(|p| p.anomaly_count > 0)
            || reconcile_cell
                .as_ref()
                .is_some_and(|r| r.status != "confirmed")
            || !missing.is_empty();
        rows.push(SiteRow {
            window_id: id.to_string(),
            needs_attention,
            progress: progress_cell,
            reconcile: reconcile_cell,
            missing,
        });
    }

    // Attention first, then by window id.
    rows.sort_by(|a, b| {
        b.needs_attention
            .cmp(&a.needs_attention)
            .then_with(|| a.window_id.cmp(&b.window_id))
    });
    let attention = rows.iter().filter(|r| r.needs_attention).count();
    let summary = if attention == 0 {
        "OK".to_string()
    } else {
        format!("ATTENTION: {attention} windows need follow-up")
    };
    let report = SiteReport {
        summary: summary.clone(),
        windows_total: rows.len(),
        windows_needing_attention: attention,
        rows,
    };
    write_json_file(out, &report)?;
    if let Some(path) = text_out {
        std::fs::write(path, render_table(&report))?;
    }

    let mut manifest = Manifest::new("report");
    manifest.add_input("progress.json", progress_path)?;
    manifest.add_input("reconcile.json", reconcile_path)?;
    manifest.set_parameters(serde_json::Value::Null);
    manifest.add_output(
        out.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    );
    if let Some(path) = text_out {
        manifest.add_output(
            path.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
    }
    manifest.write(&manifest_path_for(out))?;

    println!("{summary}");
    Ok(Outcome::Clean)
}

fn render_table(report: &SiteReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("site report: {}\n", report.summary));
    out.push_str(&format!(
        "{:<12} {:>9} {:>9} {:<18} {}\n",
        "window", "progress", "anomalies", "reconcile", "flag"
    ));
    for row in &report.rows {
        let pct = row
            .progress
            .as_ref()
            .map_or("-".to_string(), |p| format!("{}%", p.current_percentage));
        let anomalies = row
            .progress
            .as_ref()
            .map_or("-".to_string(), |p| p.anomaly_count.to_string());
        let status = row
            .reconcile
            .as_ref()
            .map_or("-".to_string(), |r| match &r.reason {
                Some(reason) => format!("{}({:?})", r.status, reason),
                None => r.status.clone(),
            });
        let flag = if row.needs_attention {
            "ATTENTION"
        } else {
            "ok"
        };
        out.push_str(&format!(
            "{:<12} {:>9} {:>9} {:<18} {}\n",
            row.window_id, pct, anomalies, status, flag
        ));
    }
    out
}

use std::path::Path;

use anyhow::{Context, Result};
use cpm_core::annotations::{scan_dataset, validate_dataset, ClassMap, ValidationMode};

use crate::config::Config;
use crate::ModeArg;

use super::Outcome;

pub fn run(
    root: &Path,
    mode: ModeArg,
    class_map_flag: Option<&Path>,
    config: &Config,
) -> Result<Outcome> {
    let mode = match mode {
        ModeArg::Validate => ValidationMode::Validate,
        ModeArg::Ingest => ValidationMode::Ingest,
    };
    let class_map = load_class_map(class_map_flag, config)?;

    let scan = scan_dataset(root)?;
    let report = validate_dataset(&scan, mode, class_map.as_ref())?;

    for (path, err) in &report.errors {
        println!("{}: {err}", path.display());
    }
    for warning in &report.warnings {
        println!("warning: {warning}");
    }
    println!(
        "checked {} label files ({} annotations): {} errors, {} warnings",
        report.files_checked,
        report.annotations,
        report.errors.len(),
        report.warnings.len()
    );
    Ok(if report.errors.is_empty() {
        Outcome::Clean
    } else {
        Outcome::Findings
    })
}

pub(crate) fn load_class_map(flag: Option<&Path>, config: &Config) -> Result<Option<ClassMap>> {
    let path = flag.or(config.class_map.as_deref());
    let Some(path) = path else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading class map {}", path.display()))?;
    let map = ClassMap::from_json(&text)
        .map_err(|e| anyhow::anyhow!("class map {}: {e}", path.display()))?;
    Ok(Some(map))
}

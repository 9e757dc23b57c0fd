use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cpm_core::annotations::{parse_label_file, scan_dataset, LabelFile, ValidationMode};
use cpm_core::augment::{apply_augment, expand_dataset, AugmentOp, Provenance};
use cpm_core::raster::{read_pgm, write_pgm};

use crate::manifest::Manifest;

use super::{read_json_file, Outcome};

pub fn run(root: &Path, out: &Path, plan_path: &Path) -> Result<Outcome> {
    let ops: Vec<AugmentOp> = read_json_file(plan_path)?;
    let scan = scan_dataset(root)?;
    let expanded = expand_dataset(&scan.index, &ops)?;

    let mut manifest = Manifest::new("augment");
    manifest.add_input("plan.json", plan_path)?;
    manifest.add_input_dir("dataset", root)?;
    manifest.set_parameters(serde_json::json!({ "ops": ops }));

    let mut written = 0usize;
    for (item, provenance) in expanded.index.items.iter().zip(&expanded.provenance) {
        let source = match provenance {
            Provenance::Original { source } | Provenance::Augmented { source, .. } => {
                &scan.index.items[*source]
            }
        };
        let image_rel = item
            .image_path
            .strip_prefix(root)
            .with_context(|| format!("image path {} outside root", item.image_path.display()))?;
        let image_out = out.join(image_rel);
        if let Some(parent) = image_out.parent() {
            fs::create_dir_all(parent)?;
        }

        match provenance {
            Provenance::Original { .. } => {
                let bytes = fs::read(&source.image_path)
                    .with_context(|| format!("reading {}", source.image_path.display()))?;
                read_pgm(&bytes)
                    .with_context(|| format!("decoding {}", source.image_path.display()))?;
                fs::write(&image_out, &bytes)?;
                if let (Some(src_label), Some(label_path)) = (&source.label_path, &item.label_path)
                {
                    let label_out = out.join(label_path.strip_prefix(root)?);
                    if let Some(parent) = label_out.parent() {
                        fs::create_dir_all(parent)?;
                    }
                    fs::copy(src_label, &label_out)?;
                    manifest.add_output(label_out.strip_prefix(out)?.display().to_string());
                    written += 1;
                }
            }
            Provenance::Augmented { op, .. } => {
                let bytes = fs::read(&source.image_path)
                    .with_context(|| format!("reading {}", source.image_path.display()))?;
                let grid = read_pgm(&bytes)
                    .with_context(|| format!("decoding {}", source.image_path.display()))?;
                let labels = match &source.label_path {
                    Some(path) => {
                        let text = fs::read_to_string(path)
                            .with_context(|| format!("reading {}", path.display()))?;
                        let (file, _) =
                            parse_label_file(&text, &source.stem, ValidationMode::Validate, None)
                                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
                        file
                    }
                    None => LabelFile {
                        image_stem: source.stem.clone(),
                        annotations: Vec::new(),
                    },
                };
                let (out_grid, out_labels) = apply_augment(&grid, &labels, op)?;
                fs::write(&image_out, write_pgm(&out_grid))?;
                if let Some(label_path) = &item.label_path {
                    let label_out = out.join(label_path.strip_prefix(root)?);
                    if let Some(parent) = label_out.parent() {
                        fs::create_dir_all(parent)?;
                    }
                    fs::write(
                        &label_out,
                        cpm_core::annotations::write_label_file(&out_labels),
                    )?;
                    manifest.add_output(label_out.strip_prefix(out)?.display().to_string());
                    written += 1;
                }
            }
        }
        manifest.add_output(image_rel.display().to_string());
        written += 1;
    }

    if expanded.index.items.is_empty() {
        bail!("dataset under {} is empty", root.display());
    }
    manifest.write(&out.join("manifest.json"))?;
    println!(
        "expanded {} items into {} items ({} files written) under {}",
        scan.index.len(),
        expanded.index.len(),
        written,
        out.display()
    );
    Ok(Outcome::Clean)
}

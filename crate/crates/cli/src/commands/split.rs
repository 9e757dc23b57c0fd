use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use cpm_core::annotations::{scan_dataset, Subset};
use cpm_core::augment::{split_dataset, SplitSpec};
use serde::Serialize;

use crate::manifest::{manifest_path_for, Manifest};

use super::{write_json_file, Outcome};

#[derive(Debug, Serialize)]
struct AssignmentEntry {
    stem: String,
    subset: Subset,
}

#[derive(Debug, Serialize)]
struct AssignmentFile {
    seed: u64,
    ratios: BTreeMap<&'static str, f64>,
    counts: BTreeMap<&'static str, usize>,
    assignments: Vec<AssignmentEntry>,
}

pub fn run(root: &Path, out: &Path, train: f64, val: f64, test: f64, seed: u64) -> Result<Outcome> {
    let scan = scan_dataset(root)?;
    let spec = SplitSpec {
        train,
        val,
        test,
        seed,
    };
    let split = split_dataset(&scan.index, &spec)?;

    let count = |s: Subset| split.items.iter().filter(|i| i.subset == s).count();
    let file = AssignmentFile {
        seed,
        ratios: BTreeMap::from([("train", train), ("val", val), ("test", test)]),
        counts: BTreeMap::from([
            ("train", count(Subset::Train)),
            ("val", count(Subset::Val)),
            ("test", count(Subset::Test)),
        ]),
        assignments: split
            .items
            .iter()
            .map(|item| AssignmentEntry {
                stem: item.stem.clone(),
                subset: item.subset,
            })
            .collect(),
    };
    write_json_file(out, &file)?;

    let mut manifest = Manifest::new("split");
    manifest.add_input_dir("dataset", root)?;
    manifest.set_parameters(serde_json::json!({
        "train": train, "val": val, "test": test, "seed": seed,
    }));
    manifest.add_output(
        out.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    );
    manifest.write(&manifest_path_for(out))?;

    println!(
        "assigned {} items: train {}, val {}, test {}",
        split.len(),
        file.counts["train"],
        file.counts["val"],
        file.counts["test"]
    );
    Ok(Outcome::Clean)
}

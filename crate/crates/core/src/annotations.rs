//! Reader, writer, and validator for the per-image TXT label format and the
//! `images/` + `labels/` dataset directory layout.
//!
//! Each label line is `<class> <cx> <cy> <w> <h>`: a zero-indexed class id
//! followed by a box center and size, all normalized to [0, 1]. One TXT file
//! corresponds to each image, sharing its stem.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerated box-extent excursion beyond [0, 1] before validation flags it.
pub const EXTENT_TOLERANCE: f64 = 1e-6;

/// Line-level parse and validation errors. Every variant carries the
/// 1-based line number.
#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("line {line}: expected 5 fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: field {field} is not numeric: {text:?}")]
    NonNumeric {
        line: usize,
        field: usize,
        text: String,
    },
    #[error("line {line}: negative class id {value}")]
    NegativeClassId { line: usize, value: i64 },
    #[error("line {line}: class id {value} too large")]
    ClassIdTooLarge { line: usize, value: i64 },
    #[error("line {line}: field {field} value {value} outside [0, 1]")]
    OutOfRange {
        line: usize,
        field: usize,
        value: f64,
    },
    #[error("line {line}: box has zero width or height")]
    DegenerateBox { line: usize },
    #[error("line {line}: box extent exceeds image bounds by {excess:.3e}")]
    ExtentOutOfBounds { line: usize, excess: f64 },
    #[error("line {line}: class id {class_id} not in class map ({size} classes)")]
    UnknownClassId {
        line: usize,
        class_id: u32,
        size: usize,
    },
}

/// Errors from scanning a dataset directory tree.
#[derive(Debug, Error)]
pub enum ScanError {
    #[error("dataset root {0} has no images/ directory")]
    MissingImagesDir(PathBuf),
    #[error("duplicate stem {stem:?} in subset {subset}")]
    DuplicateStem { stem: String, subset: Subset },
    #[error("label file {0} has no matching image")]
    OrphanLabel(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum ClassMapError {
    #[error("class map is empty")]
    Empty,
    #[error("class name {0:?} is empty")]
    EmptyName(usize),
    #[error("duplicate class name {0:?}")]
    DuplicateName(String),
}

/// A bounding box in normalized center/size form.
///
/// Invariants: `cx`, `cy` in [0, 1] and `w`, `h` in (0, 1]. The box *extent*
/// (`cx ± w/2`, `cy ± h/2`) may stick out of the unit square; validation
/// flags excursions larger than [`EXTENT_TOLERANCE`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl NormBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, String> {
        for (name, v) in [("cx", cx), ("cy", cy), ("w", w), ("h", h)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if w == 0.0 || h == 0.0 {
            return Err("zero width or height".into());
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Corner extent `(x1, y1, x2, y2)` in normalized units.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    /// How far the extent exceeds the unit square (0 when fully inside).
    pub fn excursion(&self) -> f64 {
        let (x1, y1, x2, y2) = self.extent();
        [-x1, -y1, x2 - 1.0, y2 - 1.0, 0.0]
            .into_iter()
            .fold(0.0f64, f64::max)
    }

    /// Intersects the box with the unit square. Returns `None` when nothing
    /// remains.
    pub fn clamped(&self) -> Option<NormBox> {
        let (x1, y1, x2, y2) = self.extent();
        let (x1, y1) = (x1.max(0.0), y1.max(0.0));
        let (x2, y2) = (x2.min(1.0), y2.min(1.0));
        if x2 <= x1 || y2 <= y1 {
            return None;
        }
        Some(NormBox {
            cx: (x1 + x2) / 2.0,
            cy: (y1 + y2) / 2.0,
            w: x2 - x1,
            h: y2 - y1,
        })
    }

    /// Box corners in pixel units: `x1 = (cx − w/2)·width` and so on.
    pub fn to_pixel_xyxy(&self, width: u32, height: u32) -> (f64, f64, f64, f64) {
        let (x1, y1, x2, y2) = self.extent();
        (
            x1 * width as f64,
            y1 * height as f64,
            x2 * width as f64,
            y2 * height as f64,
        )
    }

    /// Inverse of [`to_pixel_xyxy`](Self::to_pixel_xyxy).
    pub fn from_pixel_xyxy(
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, String> {
        if width == 0 || height == 0 {
            return Err("zero image dimension".into());
        }
        let (w, h) = (width as f64, height as f64);
        NormBox::new(
            (x1 + x2) / 2.0 / w,
            (y1 + y2) / 2.0 / h,
            (x2 - x1) / w,
            (y2 - y1) / h,
        )
    }
}

/// One labeled object: a zero-indexed class id plus its box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class_id: u32,
    #[serde(rename = "box")]
    pub bbox: NormBox,
}

/// The labels belonging to one image, in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFile {
    pub image_stem: String,
    pub annotations: Vec<Annotation>,
}

/// How to treat boxes whose extent exceeds the image bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMode {
    /// Excursions beyond [`EXTENT_TOLERANCE`] are hard errors.
    Validate,
    /// Excursions are clamped to the unit square and reported as warnings.
    Ingest,
}

/// Non-fatal finding while parsing in [`ValidationMode::Ingest`] mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelWarning {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LabelWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Parses one label line (`<class> <cx> <cy> <w> <h>`). Field values outside
/// [0, 1] are rejected, never clamped.
pub fn parse_label_line(text: &str, line: usize) -> Result<Annotation, LabelError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(LabelError::FieldCount {
            line,
            found: fields.len(),
        });
    }
    let class_raw: i64 = fields[0].parse().map_err(|_| LabelError::NonNumeric {
        line,
        field: 1,
        text: fields[0].to_string(),
    })?;
    if class_raw < 0 {
        return Err(LabelError::NegativeClassId {
            line,
            value: class_raw,
        });
    }
    let class_id = u32::try_from(class_raw).map_err(|_| LabelError::ClassIdTooLarge {
        line,
        value: class_raw,
    })?;

    let mut coords = [0.0f64; 4];
    for (i, slot) in coords.iter_mut().enumerate() {
        let field = i + 2;
        let value: f64 = fields[i + 1].parse().map_err(|_| LabelError::NonNumeric {
            line,
            field,
            text: fields[i + 1].to_string(),
        })?;
        if !value.is_finite() {
            return Err(LabelError::NonNumeric {
                line,
                field,
                text: fields[i + 1].to_string(),
            });
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(LabelError::OutOfRange { line, field, value });
        }
        *slot = value;
    }
    let [cx, cy, w, h] = coords;
    if w == 0.0 || h == 0.0 {
        return Err(LabelError::DegenerateBox { line });
    }
    Ok(Annotation {
        class_id,
        bbox: NormBox { cx, cy, w, h },
    })
}

/// Parses a whole label file. Blank lines are skipped; annotation order is
/// preserved. Extent handling follows `mode`; a supplied class map bounds
/// the accepted class ids.
pub fn parse_label_file(
    text: &str,
    image_stem: &str,
    mode: ValidationMode,
    class_map: Option<&ClassMap>,
) -> Result<(LabelFile, Vec<LabelWarning>), LabelError> {
    let mut annotations = Vec::new();
    let mut warnings = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut ann = parse_label_line(raw, line)?;
        if let Some(map) = class_map {
            if ann.class_id as usize >= map.len() {
                return Err(LabelError::UnknownClassId {
                    line,
                    class_id: ann.class_id,
                    size: map.len(),
                });
            }
        }
        let excess = ann.bbox.excursion();
        if excess > EXTENT_TOLERANCE {
            match mode {
                ValidationMode::Validate => {
                    return Err(LabelError::ExtentOutOfBounds { line, excess })
                }
                ValidationMode::Ingest => {
                    // A non-degenerate center inside [0,1] always leaves a
                    // nonempty intersection with the unit square.
                    let clamped = ann
                        .bbox
                        .clamped()
                        .ok_or(LabelError::DegenerateBox { line })?;
                    warnings.push(LabelWarning {
                        line,
                        message: format!(
                            "box extent exceeded image bounds by {excess:.3e}; clamped"
                        ),
                    });
                    ann.bbox = clamped;
                }
            }
        }
        annotations.push(ann);
    }
    Ok((
        LabelFile {
            image_stem: image_stem.to_string(),
            annotations,
        },
        warnings,
    ))
}

/// Serializes a label file: one line per annotation, coordinates with
/// exactly six decimal places, every line newline-terminated.
pub fn write_label_file(file: &LabelFile) -> String {
    let mut out = String::new();
    for ann in &file.annotations {
        out.push_str(&format!(
            "{} {:.6} {:.6} {:.6} {:.6}\n",
            ann.class_id, ann.bbox.cx, ann.bbox.cy, ann.bbox.w, ann.bbox.h
        ));
    }
    out
}

/// Ordered list of class names; the index is the class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassMap {
    names: Vec<String>,
}

impl ClassMap {
    pub fn new(names: Vec<String>) -> Result<Self, ClassMapError> {
        if names.is_empty() {
            return Err(ClassMapError::Empty);
        }
        let mut seen = BTreeSet::new();
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(ClassMapError::EmptyName(i));
            }
            if !seen.insert(name.clone()) {
                return Err(ClassMapError::DuplicateName(name.clone()));
            }
        }
        Ok(Self { names })
    }

    /// Default mapping: the eight installation checkpoint classes.
    pub fn checkpoint_default() -> Self {
        Self::new(
            crate::progress::CHECKPOINT_CLASS_NAMES
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .expect("checkpoint names are unique and nonempty")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let names: Vec<String> = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Self::new(names).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.names).expect("string list serializes")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.names.iter().position(|n| n == name).map(|i| i as u32)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Which split a dataset item belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Val,
    Test,
    #[serde(rename = "none")]
    Unassigned,
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Subset::Train => "train",
            Subset::Val => "val",
            Subset::Test => "test",
            Subset::Unassigned => "none",
        };
        f.write_str(s)
    }
}

/// One image/label pair in a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub stem: String,
    pub subset: Subset,
    pub image_path: PathBuf,
    /// `None` marks a background image that has no label file.
    pub label_path: Option<PathBuf>,
}

/// All image/label pairs found under a dataset root.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub items: Vec<DatasetItem>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Scan result: the index plus non-fatal findings.
#[derive(Debug, Clone)]
pub struct DatasetScan {
    pub index: DatasetIndex,
    pub warnings: Vec<String>,
}

/// Walks `root/images[/{train,val,test}]/*.pgm` and pairs each image with
/// the label file of the same stem under `root/labels`. Images without a
/// label become background items with a warning; labels without an image and
/// duplicate stems within a subset are errors. Output is sorted by
/// (subset, stem).
pub fn scan_dataset(root: &Path) -> Result<DatasetScan, ScanError> {
    let images_dir = root.join("images");
    if !images_dir.is_dir() {
        return Err(ScanError::MissingImagesDir(root.to_path_buf()));
    }
    let labels_dir = root.join("labels");

    let subdirs: [(Subset, &str); 3] = [
        (Subset::Train, "train"),
        (Subset::Val, "val"),
        (Subset::Test, "test"),
    ];

    let mut items = Vec::new();
    let mut warnings = Vec::new();

    let mut scan_one = |subset: Subset, img_dir: &Path, lbl_dir: &Path| -> Result<(), ScanError> {
        let mut stems_seen = BTreeSet::new();
        for path in sorted_files_with_ext(img_dir, "pgm")? {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            if !stems_seen.insert(stem.clone()) {
                return Err(ScanError::DuplicateStem { stem, subset });
            }
            let label_path = lbl_dir.join(format!("{stem}.txt"));
            let label_path = if label_path.is_file() {
                Some(label_path)
            } else {
                warnings.push(format!(
                    "image {} has no label file (treated as background)",
                    path.display()
                ));
                None
            };
            items.push(DatasetItem {
                stem,
                subset,
                image_path: path,
                label_path,
            });
        }
        // Labels must all correspond to an image.
        for lbl in sorted_files_with_ext(lbl_dir, "txt")? {
            let stem = lbl
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            if !stems_seen.contains(&stem) {
                return Err(ScanError::OrphanLabel(lbl));
            }
        }
        Ok(())
    };

    let mut any_subdir = false;
    for (subset, name) in subdirs {
        let img_dir = images_dir.join(name);
        if img_dir.is_dir() {
            any_subdir = true;
            scan_one(subset, &img_dir, &labels_dir.join(name))?;
        }
    }
    // Flat layout: images directly under images/.
    if !any_subdir || has_files_with_ext(&images_dir, "pgm")? {
        scan_one(Subset::Unassigned, &images_dir, &labels_dir)?;
    }

    items.sort_by(|a, b| (a.subset, &a.stem).cmp(&(b.subset, &b.stem)));
    Ok(DatasetScan {
        index: DatasetIndex { items },
        warnings,
    })
}

fn sorted_files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, ScanError> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    let entries = std::fs::read_dir(dir).map_err(|source| ScanError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| ScanError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn has_files_with_ext(dir: &Path, ext: &str) -> Result<bool, ScanError> {
    Ok(!sorted_files_with_ext(dir, ext)?.is_empty())
}

/// Per-file outcome of validating a dataset's label files.
#[derive(Debug)]
pub struct DatasetValidation {
    pub files_checked: usize,
    pub annotations: usize,
    pub errors: Vec<(PathBuf, LabelError)>,
    pub warnings: Vec<String>,
}

/// Parses every label file in a scanned dataset under the given mode.
/// I/O failures surface as [`ScanError`]; per-line findings collect into the
/// returned report.
pub fn validate_dataset(
    scan: &DatasetScan,
    mode: ValidationMode,
    class_map: Option<&ClassMap>,
) -> Result<DatasetValidation, ScanError> {
    let mut report = DatasetValidation {
        files_checked: 0,
        annotations: 0,
        errors: Vec::new(),
        warnings: scan.warnings.clone(),
    };
    for item in &scan.index.items {
        let Some(label_path) = &item.label_path else {
            continue;
        };
        let text = std::fs::read_to_string(label_path).map_err(|source| ScanError::Io {
            path: label_path.clone(),
            source,
        })?;
        report.files_checked += 1;
        match parse_label_file(&text, &item.stem, mode, class_map) {
            Ok((file, warns)) => {
                report.annotations += file.annotations.len();
                for w in warns {
                    report
                        .warnings
                        .push(format!("{}: {}", label_path.display(), w));
                }
            }
            Err(e) => report.errors.push((label_path.clone(), e)),
        }
    }
    Ok(report)
}

//! Deterministic augmentation of images and their boxes, plus the seeded
//! train/val/test partitioner.
//!
//! The operation set covers horizontal flip, 90-degree and small-angle
//! rotation, horizontal shear, brightness adjustment, and box blur. Geometric
//! operations act on normalized coordinates about the image center (0.5,
//! 0.5) and carry the labels along; photometric operations leave labels
//! untouched.

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{Annotation, DatasetIndex, DatasetItem, LabelFile, NormBox, Subset};
use crate::raster::{
    adjust_brightness, box_blur, warp_nearest, Affine2, LuminanceGrid, RasterError,
};

/// Boxes whose clamped area falls below this fraction of the image are
/// dropped rather than emitted.
pub const MIN_BOX_AREA: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("rotation angle {0} degrees outside [-15, 15]")]
    RotationOutOfRange(f64),
    #[error("shear angle {0} degrees outside [-15, 15]")]
    ShearOutOfRange(f64),
    #[error("brightness factor {0} outside [-0.25, 0.25]")]
    BrightnessOutOfRange(f64),
    #[error("blur radius must be >= 1")]
    ZeroBlurRadius,
    #[error("{0} is not a geometric operation")]
    NotGeometric(String),
    #[error("augmentation plan is empty")]
    EmptyPlan,
    #[error("derived stem collision: {0:?}")]
    StemCollision(String),
    #[error("duplicate stem across split input: {0:?}")]
    DuplicateStem(String),
    #[error("split ratios must be >= 0 and sum to 1 (sum = {sum})")]
    BadRatios { sum: f64 },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// One augmentation operation with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugmentOp {
    #[serde(rename = "hflip")]
    HFlip,
    #[serde(rename = "rot90cw")]
    Rot90Cw,
    #[serde(rename = "rot90ccw")]
    Rot90Ccw,
    /// Rotation about the image center; positive angles rotate clockwise in
    /// the y-down image frame. Limited to ±15 degrees.
    Rotate { degrees: f64 },
    /// Horizontal shear about the center: `x' = x + tan(angle)·(y − 0.5)`.
    /// Limited to ±15 degrees.
    Shear { degrees: f64 },
    /// Pixel scaling by `1 + factor`, limited to ±0.25.
    Brightness { factor: f64 },
    /// Uniform box blur of the given radius (>= 1).
    Blur { radius: u32 },
}

impl AugmentOp {
    pub fn validate(&self) -> Result<(), AugmentError> {
        match *self {
            AugmentOp::HFlip | AugmentOp::Rot90Cw | AugmentOp::Rot90Ccw => Ok(()),
            AugmentOp::Rotate { degrees } => {
                if degrees.is_finite() && degrees.abs() <= 15.0 {
                    Ok(())
                } else {
                    Err(AugmentError::RotationOutOfRange(degrees))
                }
            }
            AugmentOp::Shear { degrees } => {
                if degrees.is_finite() && degrees.abs() <= 15.0 {
                    Ok(())
                } else {
                    Err(AugmentError::ShearOutOfRange(degrees))
                }
            }
            AugmentOp::Brightness { factor } => {
                if factor.is_finite() && factor.abs() <= 0.25 {
                    Ok(())
                } else {
                    Err(AugmentError::BrightnessOutOfRange(factor))
                }
            }
            AugmentOp::Blur { radius } => {
                if radius >= 1 {
                    Ok(())
                } else {
                    Err(AugmentError::ZeroBlurRadius)
                }
            }
        }
    }

    pub fn is_geometric(&self) -> bool {
        !matches!(self, AugmentOp::Brightness { .. } | AugmentOp::Blur { .. })
    }

    /// Stable short name used in derived stems, e.g. `rot_m15`, `bright_p25`.
    pub fn name(&self) -> String {
        match *self {
            AugmentOp::HFlip => "hflip".into(),
            AugmentOp::Rot90Cw => "rot90cw".into(),
            AugmentOp::Rot90Ccw => "rot90ccw".into(),
            AugmentOp::Rotate { degrees } => format!("rot_{}", fmt_signed(degrees)),
            AugmentOp::Shear { degrees } => format!("shear_{}", fmt_signed(degrees)),
            AugmentOp::Brightness { factor } => format!("bright_{}", fmt_signed(factor * 100.0)),
            AugmentOp::Blur { radius } => format!("blur{radius}"),
        }
    }
}

fn fmt_signed(v: f64) -> String {
    let sign = if v < 0.0 { 'm' } else { 'p' };
    let a = v.abs();
    if a.fract() == 0.0 {
        format!("{sign}{}", a as i64)
    } else {
        format!("{sign}{a}").replace('.', "_")
    }
}

/// The affine map (on normalized coordinates) of a geometric operation.
/// Photometric operations are a domain error.
pub fn op_to_affine(op: &AugmentOp) -> Result<Affine2, AugmentError> {
    op.validate()?;
    match *op {
        AugmentOp::HFlip => Ok(Affine2::new([[-1.0, 0.0], [0.0, 1.0]], [1.0, 0.0])),
        AugmentOp::Rot90Cw => Ok(Affine2::new([[0.0, -1.0], [1.0, 0.0]], [1.0, 0.0])),
        AugmentOp::Rot90Ccw => Ok(Affine2::new([[0.0, 1.0], [-1.0, 0.0]], [0.0, 1.0])),
        AugmentOp::Rotate { degrees } => {
            let theta = degrees.to_radians();
            let (sin, cos) = theta.sin_cos();
            let linear = [[cos, -sin], [sin, cos]];
            Ok(about_center(linear))
        }
        AugmentOp::Shear { degrees } => {
            let t = degrees.to_radians().tan();
            Ok(Affine2::new([[1.0, t], [0.0, 1.0]], [-0.5 * t, 0.0]))
        }
        ref other => Err(AugmentError::NotGeometric(other.name())),
    }
}

/// Builds `p' = c + L(p − c)` for the center `c = (0.5, 0.5)`.
fn about_center(linear: [[f64; 2]; 2]) -> Affine2 {
    let c = [0.5, 0.5];
    let lc = [
        linear[0][0] * c[0] + linear[0][1] * c[1],
        linear[1][0] * c[0] + linear[1][1] * c[1],
    ];
    Affine2::new(linear, [c[0] - lc[0], c[1] - lc[1]])
}

/// Maps a box through an affine transform: the four corners are mapped, the
/// axis-aligned hull is taken, and the result is clamped to the unit square.
/// Returns `Ok(None)` when the clamped box falls below [`MIN_BOX_AREA`].
pub fn transform_box(bbox: &NormBox, transform: &Affine2) -> Result<Option<NormBox>, AugmentError> {
    if !transform.is_invertible() {
        return Err(AugmentError::Raster(RasterError::SingularTransform(
            transform.det().abs(),
        )));
    }
    let (x1, y1, x2, y2) = bbox.extent();
    let corners = [[x1, y1], [x2, y1], [x1, y2], [x2, y2]];
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for corner in corners {
        let p = transform.apply(corner);
        for axis in 0..2 {
            min[axis] = min[axis].min(p[axis]);
            max[axis] = max[axis].max(p[axis]);
        }
    }
    let (hx1, hy1) = (min[0].max(0.0), min[1].max(0.0));
    let (hx2, hy2) = (max[0].min(1.0), max[1].min(1.0));
    if hx2 <= hx1 || hy2 <= hy1 {
        return Ok(None);
    }
    let (w, h) = (hx2 - hx1, hy2 - hy1);
    if w * h < MIN_BOX_AREA {
        return Ok(None);
    }
    Ok(Some(NormBox {
        cx: (hx1 + hx2) / 2.0,
        cy: (hy1 + hy2) / 2.0,
        w,
        h,
    }))
}

/// Applies one operation to an image and its labels. Geometric operations
/// warp pixels and boxes together (dropped boxes are removed); photometric
/// operations transform pixels only.
pub fn apply_augment(
    image: &LuminanceGrid,
    labels: &LabelFile,
    op: &AugmentOp,
) -> Result<(LuminanceGrid, LabelFile), AugmentError> {
    op.validate()?;
    match *op {
        AugmentOp::Brightness { factor } => Ok((adjust_brightness(image, factor)?, labels.clone())),
        AugmentOp::Blur { radius } => Ok((box_blur(image, radius as usize)?, labels.clone())),
        _ => {
            let affine = op_to_affine(op)?;
            let warped = warp_nearest(image, &affine)?;
            let mut annotations = Vec::with_capacity(labels.annotations.len());
            for ann in &labels.annotations {
                if let Some(bbox) = transform_box(&ann.bbox, &affine)? {
                    annotations.push(Annotation {
                        class_id: ann.class_id,
                        bbox,
                    });
                }
            }
            Ok((
                warped,
                LabelFile {
                    image_stem: labels.image_stem.clone(),
                    annotations,
                },
            ))
        }
    }
}

/// Where an item of an expanded dataset came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    /// Carried over unchanged; index into the source dataset.
    Original { source: usize },
    /// Produced by applying `op` to the source item.
    Augmented { source: usize, op: AugmentOp },
}

/// An expanded dataset index plus per-item provenance (parallel to
/// `index.items`).
#[derive(Debug, Clone)]
pub struct ExpandedDataset {
    pub index: DatasetIndex,
    pub provenance: Vec<Provenance>,
}

/// Expands a dataset with one augmented item per (item, op) pair. Derived
/// stems are `<stem>__<opname>`, so the output cardinality is
/// `n * (1 + ops.len())`. Augmented paths sit next to their source files.
pub fn expand_dataset(
    index: &DatasetIndex,
    ops: &[AugmentOp],
) -> Result<ExpandedDataset, AugmentError> {
    if ops.is_empty() {
        return Err(AugmentError::EmptyPlan);
    }
    for op in ops {
        op.validate()?;
    }
    let mut items = Vec::with_capacity(index.items.len() * (1 + ops.len()));
    let mut provenance = Vec::with_capacity(items.capacity());
    let mut stems_by_subset: BTreeSet<(Subset, String)> = BTreeSet::new();

    let mut push = |item: DatasetItem, prov: Provenance| -> Result<(), AugmentError> {
        if !stems_by_subset.insert((item.subset, item.stem.clone())) {
            return Err(AugmentError::StemCollision(item.stem));
        }
        items.push(item);
        provenance.push(prov);
        Ok(())
    };

    for (source, item) in index.items.iter().enumerate() {
        push(item.clone(), Provenance::Original { source })?;
        for op in ops {
            let stem = format!("{}__{}", item.stem, op.name());
            let image_path = sibling_with_stem(&item.image_path, &stem);
            let label_path = item
                .label_path
                .as_ref()
                .map(|p| sibling_with_stem(p, &stem));
            push(
                DatasetItem {
                    stem,
                    subset: item.subset,
                    image_path,
                    label_path,
                },
                Provenance::Augmented { source, op: *op },
            )?;
        }
    }
    Ok(ExpandedDataset {
        index: DatasetIndex { items },
        provenance,
    })
}

fn sibling_with_stem(path: &std::path::Path, stem: &str) -> PathBuf {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = if ext.is_empty() {
        stem.to_string()
    } else {
        format!("{stem}.{ext}")
    };
    path.with_file_name(file)
}

/// Split ratios plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(AugmentError::BadRatios {
                sum: parts.iter().sum(),
            });
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(AugmentError::BadRatios { sum });
        }
        Ok(())
    }
}

/// Assigns every item to train/val/test. The assignment is a pure function
/// of the stem set, the seed, and the ratios: items are ordered by stem,
/// shuffled by a seeded Fisher-Yates pass, and cut at the
/// largest-remainder subset sizes. Output is sorted by stem.
pub fn split_dataset(index: &DatasetIndex, spec: &SplitSpec) -> Result<DatasetIndex, AugmentError> {
    spec.validate()?;
    let mut items = index.items.clone();
    items.sort_by(|a, b| a.stem.cmp(&b.stem));
    for pair in items.windows(2) {
        if pair[0].stem == pair[1].stem {
            return Err(AugmentError::DuplicateStem(pair[0].stem.clone()));
        }
    }

    let mut rng = seeded_rng(spec.seed);
    // Fisher-Yates with an explicit modulo draw, so the assignment depends
    // only on the ChaCha20 stream.
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }

    let counts = largest_remainder(items.len(), [spec.train, spec.val, spec.test]);
    for (i, item) in items.iter_mut().enumerate() {
        item.subset = if i < counts[0] {
            Subset::Train
        } else if i < counts[0] + counts[1] {
            Subset::Val
        } else {
            Subset::Test
        };
    }
    items.sort_by(|a, b| a.stem.cmp(&b.stem));
    Ok(DatasetIndex { items })
}

fn seeded_rng(seed: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&seed.to_le_bytes());
    }
    ChaCha20Rng::from_seed(key)
}

/// Largest-remainder apportionment of `n` items across the given ratios.
/// Ties in the fractional remainder resolve in ratio order.
pub fn largest_remainder(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: [usize; 3] = [
        exact[0].floor() as usize,
        exact[1].floor() as usize,
        exact[2].floor() as usize,
    ];
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut remaining = n.saturating_sub(assigned);
    for idx in order {
        if remaining == 0 {
            break;
        }
        counts[idx] += 1;
        remaining -= 1;
    }
    counts
}

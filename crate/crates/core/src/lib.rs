//! Core library for monitoring window-installation progress on construction
//! sites with an object detector in the loop.
//!
//! The pipeline stages are:
//!
//! 1. **Annotations** — read/write/validate the per-image TXT label format
//!    and the `images/` + `labels/` dataset layout.
//! 2. **Augment** — deterministic geometric and photometric augmentation of
//!    images and their boxes, plus the seeded train/val/test partitioner.
//! 3. **Detection metrics** — IoU, greedy matching, precision/recall/F1 and
//!    interpolated average precision (mAP50, mAP50-95).
//! 4. **Progress** — the eight-checkpoint installation state machine and
//!    timeline inference with anomaly flags.
//! 5. **Reconcile** — quality-gate site images, register scene coordinates to
//!    building coordinates from surveyed markers, and match QR observations
//!    against the BIM-derived target list.
//!
//! The [`raster`] module provides the minimal grayscale image representation
//! the pixel-level stages operate on.

pub mod annotations;
pub mod augment;
pub mod detmetrics;
pub mod progress;
pub mod raster;
pub mod reconcile;

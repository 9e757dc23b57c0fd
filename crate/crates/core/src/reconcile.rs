//! Outdoor as-built reconciliation: screen site images for suitability,
//! register scene coordinates to the building coordinate system from
//! surveyed markers, match decoded QR observations against the BIM-derived
//! target list, and report the residual windows with machine-checkable
//! reason codes.
//!
//! Registration is a closed-form least-squares similarity fit (scale,
//! proper rotation, translation) on marker correspondences via the centered
//! covariance SVD. Matching transforms each observed position into building
//! coordinates and compares it against the planned position at a configured
//! tolerance.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{
    exposure_clip_fraction, laplacian_variance, rms_contrast, LuminanceGrid, RasterError,
};

/// Relative singular-value cutoff for the marker degeneracy check.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ReconcileError {
    #[error("need at least 3 marker correspondences, found {0}")]
    InsufficientCorrespondences(usize),
    #[error("marker configuration is degenerate (collinear or coincident points)")]
    DegenerateConfiguration,
    #[error("correspondences require a reflection, not a proper rotation")]
    ReflectionRequired,
    #[error("invalid similarity transform: {0}")]
    InvalidTransform(String),
    #[error("duplicate target window id {0:?}")]
    DuplicateTargetId(String),
    #[error("target {id:?} normal has length {len}, expected 1")]
    NonUnitNormal { id: String, len: f64 },
    #[error("observation has empty window id")]
    EmptyObservationId,
    #[error("position tolerance must be > 0, got {0}")]
    BadTolerance(f64),
    #[error("quality threshold out of range: {0}")]
    BadThreshold(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// A planned window from the BIM-derived target list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetWindow {
    pub window_id: String,
    /// Planned position in building coordinates, meters.
    pub position: [f64; 3],
    /// Outward facade normal (unit length).
    pub normal: [f64; 3],
}

/// A surveyed coordinate-system marker: where it appears in the scene
/// reconstruction and where it is known to sit on the building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerObservation {
    pub marker_id: String,
    pub scene: [f64; 3],
    pub building: [f64; 3],
}

/// A decoded window QR sticker located in scene coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrObservation {
    pub window_id: String,
    pub scene: [f64; 3],
    pub image: String,
    pub decode_quality: f64,
}

/// Similarity transform `p -> scale * R * p + translation` from scene to
/// building coordinates. `rotation` is row-major, orthonormal with
/// determinant +1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0, 0.0, 0.0],
        }
    }

    pub fn new(
        scale: f64,
        rotation: [[f64; 3]; 3],
        translation: [f64; 3],
    ) -> Result<Self, ReconcileError> {
        let t = Self {
            scale,
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), ReconcileError> {
        if self.scale <= 0.0 || !self.scale.is_finite() {
            return Err(ReconcileError::InvalidTransform(format!(
                "scale {} not positive",
                self.scale
            )));
        }
        let r = self.rotation_matrix();
        let gram = r.transpose() * r;
        let err = (gram - Matrix3::identity()).abs().max();
        if err > 1e-9 {
            return Err(ReconcileError::InvalidTransform(format!(
                "rotation not orthonormal (max deviation {err:e})"
            )));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(ReconcileError::InvalidTransform(format!(
                "rotation determinant {det}, expected +1"
            )));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    /// Maps a scene point into building coordinates.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.scale * (self.rotation_matrix() * Vector3::from(p))
            + Vector3::from(self.translation);
        [v.x, v.y, v.z]
    }

    /// The building-to-scene inverse.
    pub fn inverse(&self) -> SimilarityTransform {
        let r_inv = self.rotation_matrix().transpose();
        let s_inv = 1.0 / self.scale;
        let t = -s_inv * (r_inv * Vector3::from(self.translation));
        SimilarityTransform {
            scale: s_inv,
            rotation: matrix_rows(&r_inv),
            translation: [t.x, t.y, t.z],
        }
    }
}

fn matrix_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

/// Registration result: the fitted transform and its RMS point residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub transform: SimilarityTransform,
    pub rms_residual: f64,
}

/// Least-squares similarity fit mapping scene points onto building points.
///
/// Requires at least three correspondences whose scene points are not
/// collinear (second singular value of the centered spread above
/// [`DEGENERACY_TOLERANCE`] relative to the first). Coplanar sets — the
/// normal case for facade markers — are fine; data that genuinely demands a
/// reflection is rejected.
pub fn estimate_similarity(
    correspondences: &[([f64; 3], [f64; 3])],
) -> Result<Registration, ReconcileError> {
    let n = correspondences.len();
    if n < 3 {
        return Err(ReconcileError::InsufficientCorrespondences(n));
    }
    let nf = n as f64;
    let scene_mean: Vector3<f64> = correspondences
        .iter()
        .map(|(s, _)| Vector3::from(*s))
        .sum::<Vector3<f64>>()
        / nf;
    let building_mean: Vector3<f64> = correspondences
        .iter()
        .map(|(_, b)| Vector3::from(*b))
        .sum::<Vector3<f64>>()
        / nf;

    let centered_scene: Vec<Vector3<f64>> = correspondences
        .iter()
        .map(|(s, _)| Vector3::from(*s) - scene_mean)
        .collect();
    let centered_building: Vec<Vector3<f64>> = correspondences
        .iter()
        .map(|(_, b)| Vector3::from(*b) - building_mean)
        .collect();

    // Spread of the scene points: collinear (or coincident) marker layouts
    // leave the rotation about the line unobservable.
    let spread = centered_scene
        .iter()
        .fold(Matrix3::zeros(), |acc, v| acc + v * v.transpose())
        / nf;
    let spread_svd = spread.svd(false, false);
    let mut spread_sv: Vec<f64> = spread_svd.singular_values.iter().copied().collect();
    spread_sv.sort_by(|a, b| b.total_cmp(a));
    // Eigenvalues of the spread are squared singular values of the point
    // matrix; compare on the sqrt scale.
    let (s0, s1) = (spread_sv[0].sqrt(), spread_sv[1].sqrt());
    if s0 <= 0.0 || s1 <= DEGENERACY_TOLERANCE * s0 {
        return Err(ReconcileError::DegenerateConfiguration);
    }

    let covariance = centered_building
        .iter()
        .zip(&centered_scene)
        .fold(Matrix3::zeros(), |acc, (b, s)| acc + b * s.transpose())
        / nf;

    let svd = covariance.svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let sigma = svd.singular_values;

    let det_uv = (u * v_t).determinant();
    let mut d = Vector3::new(1.0, 1.0, 1.0);
    if det_uv < 0.0 {
        if sigma[2] > DEGENERACY_TOLERANCE * sigma[0].max(1.0) {
            // Full-rank covariance that prefers a reflection cannot come
            // from similarity-transformed data.
            return Err(ReconcileError::ReflectionRequired);
        }
        d[2] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&d) * v_t;

    let scene_var: f64 = centered_scene.iter().map(|v| v.norm_squared()).sum::<f64>() / nf;
    let scale = (sigma[0] * d[0] + sigma[1] * d[1] + sigma[2] * d[2]) / scene_var;
    if scale.is_nan() || scale <= 0.0 {
        return Err(ReconcileError::DegenerateConfiguration);
    }
    let translation = building_mean - scale * (rotation * scene_mean);

    let transform = SimilarityTransform {
        scale,
        rotation: matrix_rows(&rotation),
        translation: [translation.x, translation.y, translation.z],
    };
    transform.validate()?;

    let mut sq_sum = 0.0;
    for (s, b) in correspondences {
        let mapped = transform.apply(*s);
        let diff = Vector3::from(*b) - Vector3::from(mapped);
        sq_sum += diff.norm_squared();
    }
    Ok(Registration {
        transform,
        rms_residual: (sq_sum / nf).sqrt(),
    })
}

/// Thresholds for the per-image suitability gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityThresholds {
    /// Minimum Laplacian-variance sharpness.
    pub min_sharpness: f64,
    /// Minimum RMS contrast (std of normalized pixels).
    pub min_contrast: f64,
    /// Maximum fraction of pixels clipped to 0 or 255.
    pub max_clip_fraction: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            min_sharpness: 10.0,
            min_contrast: 0.05,
            max_clip_fraction: 0.40,
        }
    }
}

impl QualityThresholds {
    pub fn validate(&self) -> Result<(), ReconcileError> {
        if !self.min_sharpness.is_finite() || self.min_sharpness < 0.0 {
            return Err(ReconcileError::BadThreshold(format!(
                "min_sharpness {}",
                self.min_sharpness
            )));
        }
        if !self.min_contrast.is_finite() || self.min_contrast < 0.0 {
            return Err(ReconcileError::BadThreshold(format!(
                "min_contrast {}",
                self.min_contrast
            )));
        }
        if !(0.0..=1.0).contains(&self.max_clip_fraction) {
            return Err(ReconcileError::BadThreshold(format!(
                "max_clip_fraction {}",
                self.max_clip_fraction
            )));
        }
        Ok(())
    }
}

/// Measured suitability of one image against the thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityMetrics {
    pub sharpness: f64,
    pub sharpness_pass: bool,
    pub contrast: f64,
    pub contrast_pass: bool,
    pub clip_fraction: f64,
    pub exposure_pass: bool,
    pub pass: bool,
}

/// Computes sharpness, contrast, and exposure for one image and checks them
/// against the thresholds. Passing requires all three.
pub fn assess_quality(
    grid: &LuminanceGrid,
    thresholds: &QualityThresholds,
) -> Result<QualityMetrics, ReconcileError> {
    thresholds.validate()?;
    let sharpness = laplacian_variance(grid)?;
    let contrast = rms_contrast(grid);
    let clip_fraction = exposure_clip_fraction(grid);
    let sharpness_pass = sharpness >= thresholds.min_sharpness;
    let contrast_pass = contrast >= thresholds.min_contrast;
    let exposure_pass = clip_fraction <= thresholds.max_clip_fraction;
    Ok(QualityMetrics {
        sharpness,
        sharpness_pass,
        contrast,
        contrast_pass,
        clip_fraction,
        exposure_pass,
        pass: sharpness_pass && contrast_pass && exposure_pass,
    })
}

/// Machine-checkable cause for a window needing human follow-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReasonCode {
    NoObservation,
    LowQualityImages,
    IdNotInTargets,
    PositionMismatch,
    InsufficientMarkers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfirmedWindow {
    pub window_id: String,
    /// Distance between transformed observed and planned position, meters.
    pub residual_m: f64,
    /// Extra observations of the same id beyond the best one.
    pub duplicate_observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchWindow {
    pub window_id: String,
    pub residual_m: f64,
    pub tolerance_m: f64,
    pub reason: ReasonCode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingWindow {
    pub window_id: String,
    pub reason: ReasonCode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageQualityRecord {
    pub image: String,
    pub metrics: QualityMetrics,
}

/// The reconciliation outcome. `confirmed`, `position_mismatch`, and the
/// target-list entries of `pending` partition the target list by window id;
/// `pending` additionally lists observed ids that are absent from the target
/// list, flagged `ID_NOT_IN_TARGETS`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconciliationReport {
    pub confirmed: Vec<ConfirmedWindow>,
    pub position_mismatch: Vec<MismatchWindow>,
    pub pending: Vec<PendingWindow>,
    pub quality_rejections: Vec<ImageQualityRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub registration: Option<Registration>,
}

impl ReconciliationReport {
    fn sort(&mut self) {
        self.confirmed.sort_by(|a, b| a.window_id.cmp(&b.window_id));
        self.position_mismatch
            .sort_by(|a, b| a.window_id.cmp(&b.window_id));
        self.pending.sort_by(|a, b| a.window_id.cmp(&b.window_id));
        self.quality_rejections
            .sort_by(|a, b| a.image.cmp(&b.image));
    }
}

fn validate_targets(targets: &[TargetWindow]) -> Result<(), ReconcileError> {
    let mut seen = BTreeSet::new();
    for t in targets {
        if !seen.insert(&t.window_id) {
            return Err(ReconcileError::DuplicateTargetId(t.window_id.clone()));
        }
        let len = Vector3::from(t.normal).norm();
        if (len - 1.0).abs() > 1e-9 {
            return Err(ReconcileError::NonUnitNormal {
                id: t.window_id.clone(),
                len,
            });
        }
    }
    Ok(())
}

/// Matches observations against the target list under a registration.
///
/// Each observation with a known id is transformed into building
/// coordinates; within `pos_tol` of the plan it confirms the window,
/// otherwise it records a position mismatch. Multiple observations of one
/// id keep the smallest residual. Unknown ids are flagged
/// `ID_NOT_IN_TARGETS`; targets never observed are left pending
/// `NO_OBSERVATION`.
pub fn match_observations(
    targets: &[TargetWindow],
    observations: &[QrObservation],
    transform: &SimilarityTransform,
    pos_tol: f64,
) -> Result<ReconciliationReport, ReconcileError> {
    if pos_tol <= 0.0 || !pos_tol.is_finite() {
        return Err(ReconcileError::BadTolerance(pos_tol));
    }
    validate_targets(targets)?;
    transform.validate()?;
    for obs in observations {
        if obs.window_id.is_empty() {
            return Err(ReconcileError::EmptyObservationId);
        }
    }

    let planned: BTreeMap<&str, Vector3<f64>> = targets
        .iter()
        .map(|t| (t.window_id.as_str(), Vector3::from(t.position)))
        .collect();

    // Best (smallest) residual per observed id, counting duplicates.
    let mut best: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let mut unknown: BTreeSet<&str> = BTreeSet::new();
    for obs in observations {
        let Some(plan) = planned.get(obs.window_id.as_str()) else {
            unknown.insert(&obs.window_id);
            continue;
        };
        let mapped = Vector3::from(transform.apply(obs.scene));
        let residual = (plan - mapped).norm();
        best.entry(&obs.window_id)
            .and_modify(|(r, count)| {
                *count += 1;
                if residual < *r {
                    *r = residual;
                }
            })
            .or_insert((residual, 0));
    }

    let mut report = ReconciliationReport {
        confirmed: Vec::new(),
        position_mismatch: Vec::new(),
        pending: Vec::new(),
        quality_rejections: Vec::new(),
        registration: None,
    };
    for target in targets {
        match best.get(target.window_id.as_str()) {
            Some(&(residual, duplicates)) => {
                if residual <= pos_tol {
                    report.confirmed.push(ConfirmedWindow {
                        window_id: target.window_id.clone(),
                        residual_m: residual,
                        duplicate_observations: duplicates,
                    });
                } else {
                    report.position_mismatch.push(MismatchWindow {
                        window_id: target.window_id.clone(),
                        residual_m: residual,
                        tolerance_m: pos_tol,
                        reason: ReasonCode::PositionMismatch,
                    });
                }
            }
            None => report.pending.push(PendingWindow {
                window_id: target.window_id.clone(),
                reason: ReasonCode::NoObservation,
                note: Some(
                    "not detected in available imagery (missing sticker, occlusion, \
                     or uncovered area)"
                        .into(),
                ),
            }),
        }
    }
    for id in unknown {
        report.pending.push(PendingWindow {
            window_id: id.to_string(),
            reason: ReasonCode::IdNotInTargets,
            note: Some("observed QR id missing from the target list".into()),
        });
    }
    report.sort();
    Ok(report)
}

/// Settings for [`build_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconcileConfig {
    pub quality: QualityThresholds,
    /// Position tolerance in meters.
    pub pos_tol_m: f64,
    /// Optional image -> covered window ids map. With it, a window whose
    /// covering images all failed the gate is reported `LOW_QUALITY_IMAGES`
    /// instead of `NO_OBSERVATION`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<BTreeMap<String, Vec<String>>>,
}

impl Default for ReconcileConfig {
    fn default() -> Self {
        Self {
            quality: QualityThresholds::default(),
            pos_tol_m: 0.10,
            coverage: None,
        }
    }
}

/// Runs the full reconciliation: gate images, register from markers, match
/// observations, and refine pending reasons.
///
/// Observations sourced from images that failed the gate are excluded from
/// matching. With fewer than three markers, or a degenerate or
/// reflection-forcing marker layout, every target is pending
/// `INSUFFICIENT_MARKERS`.
pub fn build_report(
    targets: &[TargetWindow],
    images: &[(String, LuminanceGrid)],
    markers: &[MarkerObservation],
    observations: &[QrObservation],
    config: &ReconcileConfig,
) -> Result<ReconciliationReport, ReconcileError> {
    if config.pos_tol_m <= 0.0 || !config.pos_tol_m.is_finite() {
        return Err(ReconcileError::BadTolerance(config.pos_tol_m));
    }
    config.quality.validate()?;
    validate_targets(targets)?;

    // Step 1: per-image suitability gate.
    let mut failed_images: BTreeSet<&str> = BTreeSet::new();
    let mut rejections = Vec::new();
    for (image, grid) in images {
        let metrics = assess_quality(grid, &config.quality)?;
        if !metrics.pass {
            failed_images.insert(image);
            rejections.push(ImageQualityRecord {
                image: image.clone(),
                metrics,
            });
        }
    }
    let usable_obs: Vec<QrObservation> = observations
        .iter()
        .filter(|o| !failed_images.contains(o.image.as_str()))
        .cloned()
        .collect();

    // Step 2: registration from markers, then id/position matching.
    let correspondences: Vec<([f64; 3], [f64; 3])> =
        markers.iter().map(|m| (m.scene, m.building)).collect();
    let registration = match estimate_similarity(&correspondences) {
        Ok(reg) => reg,
        Err(
            ReconcileError::InsufficientCorrespondences(_)
            | ReconcileError::DegenerateConfiguration
            | ReconcileError::ReflectionRequired,
        ) => {
            let mut report = ReconciliationReport {
                confirmed: Vec::new(),
                position_mismatch: Vec::new(),
                pending: targets
                    .iter()
                    .map(|t| PendingWindow {
                        window_id: t.window_id.clone(),
                        reason: ReasonCode::InsufficientMarkers,
                        note: Some(
                            "coordinate registration unavailable (too few or degenerate markers)"
                                .into(),
                        ),
                    })
                    .collect(),
                quality_rejections: rejections,
                registration: None,
            };
            report.sort();
            return Ok(report);
        }
        Err(other) => return Err(other),
    };

    let mut report = match_observations(
        targets,
        &usable_obs,
        &registration.transform,
        config.pos_tol_m,
    )?;
    report.quality_rejections = rejections;

    // Step 3: refine NO_OBSERVATION into LOW_QUALITY_IMAGES where coverage
    // hints show every covering image failed the gate.
    if let Some(coverage) = &config.coverage {
        let mut images_for_window: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (image, windows) in coverage {
            for w in windows {
                images_for_window.entry(w).or_default().push(image);
            }
        }
        for entry in &mut report.pending {
            if entry.reason != ReasonCode::NoObservation {
                continue;
            }
            if let Some(covering) = images_for_window.get(entry.window_id.as_str()) {
                if !covering.is_empty() && covering.iter().all(|img| failed_images.contains(img)) {
                    entry.reason = ReasonCode::LowQualityImages;
                    entry.note =
                        Some("all images covering this window failed the quality gate".into());
                }
            }
        }
    }
    report.registration = Some(registration);
    report.sort();
    Ok(report)
}

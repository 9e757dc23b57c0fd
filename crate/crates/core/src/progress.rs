//! The window-installation progress state machine.
//!
//! The installation splits into six parts (frame fixing, hinges/sashes,
//! sealing/insulation, inner sashes, painting, membrane removal) under a
//! partial order: sealing (P3) may happen before or after the inner-sash and
//! painting branch (P4, P5). Observable progress collapses to eight
//! checkpoints keyed by completion percentage; sealing contributes two of
//! them (65% while in progress, 70% once done).
//!
//! [`infer_timeline`] folds detector observations into a per-window timeline.
//! The detector is trusted as evidence of completed work: an observation
//! that skips ahead still advances the state, but any advance that cannot be
//! explained by completing a single part between observations is flagged as
//! an `illegal_jump`, and observations below the current state are flagged
//! as `regression` without rolling the state back.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Detector class names for the eight checkpoints, ordered by checkpoint.
pub const CHECKPOINT_CLASS_NAMES: [&str; 8] = [
    "cp20", "cp40", "cp60", "cp65", "cp70", "cp85", "cp95", "cp100",
];

#[derive(Debug, Error, PartialEq)]
pub enum ProgressError {
    #[error("{part} is active but prerequisite {needs} is not done")]
    PrecedenceViolation { part: Part, needs: Part },
    #[error("unknown checkpoint class {0:?}")]
    UnknownCheckpointClass(String),
    #[error("checkpoint class {class:?} does not apply to {window_type} windows")]
    CheckpointNotApplicable {
        class: String,
        window_type: WindowType,
    },
    #[error("events mix window ids ({expected:?} and {found:?})")]
    MixedWindowIds { expected: String, found: String },
    #[error("no events supplied")]
    NoEvents,
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("checkpoint class list must have 8 entries, found {0}")]
    BadClassList(usize),
}

/// The six installation parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Part {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
}

impl Part {
    pub const ALL: [Part; 6] = [Part::P1, Part::P2, Part::P3, Part::P4, Part::P5, Part::P6];

    pub fn index(self) -> usize {
        match self {
            Part::P1 => 0,
            Part::P2 => 1,
            Part::P3 => 2,
            Part::P4 => 3,
            Part::P5 => 4,
            Part::P6 => 5,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Part::P1 => "secure pre-assembled window frame in the wall opening",
            Part::P2 => "attach hinges, install sashes, test tightness",
            Part::P3 => "fill gaps, complete water/sound/heat insulation, seal with strips",
            Part::P4 => "install inner sashes (double-layered windows)",
            Part::P5 => "complete painting",
            Part::P6 => "remove protective membrane from glass, final tasks",
        }
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.index() + 1)
    }
}

/// Status of one part. The declaration order defines the advancement order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum PartStatus {
    #[default]
    NotStarted,
    InProgress,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowType {
    SingleLayer,
    DoubleLayer,
}

impl fmt::Display for WindowType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowType::SingleLayer => f.write_str("single_layer"),
            WindowType::DoubleLayer => f.write_str("double_layer"),
        }
    }
}

/// Part-completion precedence for a window type, as (prerequisite, part)
/// pairs: the part may be started only once the prerequisite is done.
///
/// Sealing (P3) is deliberately unordered with respect to the inner-sash
/// branch (P4, P5). Single-layer windows have no inner sashes, so P4 drops
/// out and painting hangs off P2 directly.
pub fn legal_order(window_type: WindowType) -> &'static [(Part, Part)] {
    use Part::*;
    match window_type {
        WindowType::DoubleLayer => &[
            (P1, P2),
            (P2, P3),
            (P2, P4),
            (P4, P5),
            (P3, P6),
            (P4, P6),
            (P5, P6),
        ],
        WindowType::SingleLayer => &[(P1, P2), (P2, P3), (P2, P5), (P3, P6), (P5, P6)],
    }
}

/// Per-part status of one window.
///
/// For single-layer windows the inner-sash part (P4) is not applicable and
/// is normalized to `NotStarted` on construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartStateVector {
    statuses: [PartStatus; 6],
    window_type: WindowType,
}

impl PartStateVector {
    pub fn new(
        mut statuses: [PartStatus; 6],
        window_type: WindowType,
    ) -> Result<Self, ProgressError> {
        if window_type == WindowType::SingleLayer {
            statuses[Part::P4.index()] = PartStatus::NotStarted;
        }
        check_precedence(&statuses, window_type)?;
        Ok(Self {
            statuses,
            window_type,
        })
    }

    pub fn empty(window_type: WindowType) -> Self {
        Self {
            statuses: [PartStatus::NotStarted; 6],
            window_type,
        }
    }

    /// Convenience constructor: the listed parts are done, everything else
    /// not started.
    pub fn with_done(parts: &[Part], window_type: WindowType) -> Result<Self, ProgressError> {
        let mut statuses = [PartStatus::NotStarted; 6];
        for p in parts {
            statuses[p.index()] = PartStatus::Done;
        }
        Self::new(statuses, window_type)
    }

    pub fn status(&self, part: Part) -> PartStatus {
        self.statuses[part.index()]
    }

    pub fn statuses(&self) -> &[PartStatus; 6] {
        &self.statuses
    }

    pub fn window_type(&self) -> WindowType {
        self.window_type
    }

    /// Returns a copy with one part set to the given status, revalidated.
    pub fn with_status(&self, part: Part, status: PartStatus) -> Result<Self, ProgressError> {
        let mut statuses = self.statuses;
        statuses[part.index()] = status;
        Self::new(statuses, self.window_type)
    }

    /// Pointwise status comparison (every part no further along in `self`).
    pub fn leq(&self, other: &Self) -> bool {
        self.statuses
            .iter()
            .zip(&other.statuses)
            .all(|(a, b)| a <= b)
    }
}

fn check_precedence(
    statuses: &[PartStatus; 6],
    window_type: WindowType,
) -> Result<(), ProgressError> {
    for &(needs, part) in legal_order(window_type) {
        if statuses[part.index()] > PartStatus::NotStarted
            && statuses[needs.index()] != PartStatus::Done
        {
            return Err(ProgressError::PrecedenceViolation { part, needs });
        }
    }
    Ok(())
}

/// One observable checkpoint: its ordinal, completion percentage, and the
/// minimum part statuses that realize it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub ordinal: u8,
    pub percentage: u8,
    /// Minimum status per required part; unlisted parts are unconstrained.
    pub requirements: Vec<(Part, PartStatus)>,
}

impl Checkpoint {
    /// Detector class name (`cp20` .. `cp100`).
    pub fn class_name(&self) -> String {
        format!("cp{}", self.percentage)
    }

    pub fn is_satisfied_by(&self, state: &PartStateVector) -> bool {
        self.requirements
            .iter()
            .all(|&(part, min)| state.status(part) >= min)
    }
}

/// The eight canonical checkpoints. Sealing (P3) distinguishes 65% (in
/// progress) from 70% (done); every other requirement means "done".
pub fn checkpoint_table() -> Vec<Checkpoint> {
    use Part::*;
    use PartStatus::{Done, InProgress};
    type Row = (u8, u8, Vec<(Part, PartStatus)>);
    let rows: [Row; 8] = [
        (1, 20, vec![(P1, Done)]),
        (2, 40, vec![(P1, Done), (P2, Done)]),
        (3, 60, vec![(P1, Done), (P2, Done), (P4, Done)]),
        (4, 65, vec![(P1, Done), (P2, Done), (P3, InProgress)]),
        (5, 70, vec![(P1, Done), (P2, Done), (P3, Done)]),
        (6, 85, vec![(P1, Done), (P2, Done), (P3, Done), (P4, Done)]),
        (
            7,
            95,
            vec![(P1, Done), (P2, Done), (P3, Done), (P4, Done), (P5, Done)],
        ),
        (
            8,
            100,
            vec![
                (P1, Done),
                (P2, Done),
                (P3, Done),
                (P4, Done),
                (P5, Done),
                (P6, Done),
            ],
        ),
    ];
    rows.into_iter()
        .map(|(ordinal, percentage, requirements)| Checkpoint {
            ordinal,
            percentage,
            requirements,
        })
        .collect()
}

/// The checkpoints a window of the given type can realize. Single-layer
/// windows skip the inner-sash rows (60%, 85%) entirely and drop the P4
/// requirement from the remaining rows, so {P1, P2} counts as 40%.
pub fn applicable_checkpoints(window_type: WindowType) -> Vec<Checkpoint> {
    let table = checkpoint_table();
    match window_type {
        WindowType::DoubleLayer => table,
        WindowType::SingleLayer => table
            .into_iter()
            .filter(|cp| cp.percentage != 60 && cp.percentage != 85)
            .map(|mut cp| {
                cp.requirements.retain(|&(part, _)| part != Part::P4);
                cp
            })
            .collect(),
    }
}

/// Completion percentage of a state: the highest applicable checkpoint whose
/// requirements the state satisfies, or 0 when none is reached.
pub fn completion_percentage(state: &PartStateVector) -> Result<u8, ProgressError> {
    check_precedence(&state.statuses, state.window_type)?;
    Ok(applicable_checkpoints(state.window_type)
        .iter()
        .filter(|cp| cp.is_satisfied_by(state))
        .map(|cp| cp.percentage)
        .max()
        .unwrap_or(0))
}

/// A transition is legal when it only advances part statuses and both
/// endpoints satisfy the precedence constraints for their window type.
pub fn is_legal_transition(from: &PartStateVector, to: &PartStateVector) -> bool {
    from.window_type == to.window_type
        && from.leq(to)
        && check_precedence(&from.statuses, from.window_type).is_ok()
        && check_precedence(&to.statuses, to.window_type).is_ok()
}

/// Directed edges between completion percentages that one part-status
/// advance can bridge (0 is the pre-installation state). Derived by
/// exhaustive enumeration of valid states.
///
/// A timeline advance whose (from, to) pair is not an edge here means at
/// least two distinct parts completed without any observation in between,
/// which [`infer_timeline`] flags as an `illegal_jump`.
pub fn checkpoint_graph(window_type: WindowType) -> BTreeSet<(u8, u8)> {
    let mut edges = BTreeSet::new();
    for state in enumerate_valid_states(window_type) {
        let before = completion_percentage(&state).expect("enumerated states are valid");
        for part in Part::ALL {
            if window_type == WindowType::SingleLayer && part == Part::P4 {
                continue;
            }
            for target in [PartStatus::InProgress, PartStatus::Done] {
                if target <= state.status(part) {
                    continue;
                }
                if let Ok(next) = state.with_status(part, target) {
                    let after = completion_percentage(&next).expect("advanced state is valid");
                    if after != before {
                        edges.insert((before, after));
                    }
                }
            }
        }
    }
    edges
}

/// All precedence-valid part-state vectors for a window type.
pub fn enumerate_valid_states(window_type: WindowType) -> Vec<PartStateVector> {
    let all = [
        PartStatus::NotStarted,
        PartStatus::InProgress,
        PartStatus::Done,
    ];
    let mut out = Vec::new();
    for code in 0..3usize.pow(6) {
        let mut statuses = [PartStatus::NotStarted; 6];
        let mut rest = code;
        for slot in statuses.iter_mut() {
            *slot = all[rest % 3];
            rest /= 3;
        }
        if window_type == WindowType::SingleLayer
            && statuses[Part::P4.index()] != PartStatus::NotStarted
        {
            continue; // normalized form only
        }
        if let Ok(state) = PartStateVector::new(statuses, window_type) {
            out.push(state);
        }
    }
    out
}

/// One detector observation of a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationEvent {
    pub window_id: String,
    pub timestamp: i64,
    pub checkpoint_class: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    Regression,
    IllegalJump,
    LowConfidenceGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub kind: AnomalyKind,
    pub timestamp: i64,
    pub detail: String,
}

/// An observation the timeline accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptedState {
    pub timestamp: i64,
    pub percentage: u8,
}

/// Inferred installation timeline of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTimeline {
    pub window_id: String,
    pub current_percentage: u8,
    pub history: Vec<AcceptedState>,
    pub anomalies: Vec<Anomaly>,
}

/// Settings for [`infer_timeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineOptions {
    pub min_confidence: f64,
    pub window_type: WindowType,
    /// Detector class names mapped to checkpoints by position (8 entries).
    pub checkpoint_classes: Vec<String>,
}

impl Default for TimelineOptions {
    fn default() -> Self {
        Self {
            min_confidence: 0.5,
            window_type: WindowType::DoubleLayer,
            checkpoint_classes: CHECKPOINT_CLASS_NAMES
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// Folds one window's observations (stably sorted by timestamp) into a
/// timeline.
///
/// Events below `min_confidence` are ignored, recorded as a
/// `low_confidence_gap` anomaly when they would have advanced the state.
/// Accepted percentages never decrease: observations behind the current
/// state record a `regression` anomaly, and advances that skip over an
/// intermediate checkpoint advance anyway but record an `illegal_jump`.
pub fn infer_timeline(
    events: &[ObservationEvent],
    opts: &TimelineOptions,
) -> Result<WindowTimeline, ProgressError> {
    if events.is_empty() {
        return Err(ProgressError::NoEvents);
    }
    if opts.checkpoint_classes.len() != 8 {
        return Err(ProgressError::BadClassList(opts.checkpoint_classes.len()));
    }
    let window_id = events[0].window_id.clone();
    for ev in events {
        if ev.window_id != window_id {
            return Err(ProgressError::MixedWindowIds {
                expected: window_id,
                found: ev.window_id.clone(),
            });
        }
        if !(0.0..=1.0).contains(&ev.confidence) || ev.confidence.is_nan() {
            return Err(ProgressError::InvalidConfidence(ev.confidence));
        }
    }

    let table = checkpoint_table();
    let applicable: BTreeSet<u8> = applicable_checkpoints(opts.window_type)
        .iter()
        .map(|cp| cp.percentage)
        .collect();
    let resolve = |class: &str| -> Result<u8, ProgressError> {
        let idx = opts
            .checkpoint_classes
            .iter()
            .position(|n| n == class)
            .ok_or_else(|| ProgressError::UnknownCheckpointClass(class.to_string()))?;
        let pct = table[idx].percentage;
        if !applicable.contains(&pct) {
            return Err(ProgressError::CheckpointNotApplicable {
                class: class.to_string(),
                window_type: opts.window_type,
            });
        }
        Ok(pct)
    };

    let mut sorted: Vec<&ObservationEvent> = events.iter().collect();
    sorted.sort_by_key(|ev| ev.timestamp);

    let graph = checkpoint_graph(opts.window_type);
    let mut timeline = WindowTimeline {
        window_id,
        current_percentage: 0,
        history: Vec::new(),
        anomalies: Vec::new(),
    };

    for ev in sorted {
        let pct = resolve(&ev.checkpoint_class)?;
        let cur = timeline.current_percentage;
        if ev.confidence < opts.min_confidence {
            if pct > cur {
                timeline.anomalies.push(Anomaly {
                    kind: AnomalyKind::LowConfidenceGap,
                    timestamp: ev.timestamp,
                    detail: format!(
                        "{}% observed at confidence {:.3} (below {:.3}); state kept at {}%",
                        pct, ev.confidence, opts.min_confidence, cur
                    ),
                });
            }
            continue;
        }
        if pct < cur {
            timeline.anomalies.push(Anomaly {
                kind: AnomalyKind::Regression,
                timestamp: ev.timestamp,
                detail: format!("{pct}% observed after state already reached {cur}%"),
            });
            continue;
        }
        // The first accepted observation is free: monitoring may begin with
        // the installation already underway. After that, advances must be
        // bridgeable by a single part completion.
        if pct > cur && cur != 0 && !graph.contains(&(cur, pct)) {
            timeline.anomalies.push(Anomaly {
                kind: AnomalyKind::IllegalJump,
                timestamp: ev.timestamp,
                detail: format!(
                    "jump from {cur}% to {pct}% skips at least one observable checkpoint"
                ),
            });
        }
        timeline.current_percentage = pct;
        timeline.history.push(AcceptedState {
            timestamp: ev.timestamp,
            percentage: pct,
        });
    }
    Ok(timeline)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(parts: &[Part]) -> PartStateVector {
        PartStateVector::with_done(parts, WindowType::DoubleLayer).unwrap()
    }

    #[test]
    fn table_shape() {
        let table = checkpoint_table();
        assert_eq!(table.len(), 8);
        let pcts: Vec<u8> = table.iter().map(|c| c.percentage).collect();
        assert_eq!(pcts, vec![20, 40, 60, 65, 70, 85, 95, 100]);
        assert!(table[7]
            .requirements
            .iter()
            .any(|&(p, s)| p == Part::P6 && s == PartStatus::Done));
        for pair in table.windows(2) {
            assert!(pair[0].percentage < pair[1].percentage);
            assert!(pair[0].ordinal < pair[1].ordinal);
        }
    }

    #[test]
    fn completion_examples() {
        use Part::*;
        assert_eq!(completion_percentage(&vector(&[P1])).unwrap(), 20);
        assert_eq!(completion_percentage(&vector(&[P1, P2])).unwrap(), 40);
        assert_eq!(completion_percentage(&vector(&[P1, P2, P4])).unwrap(), 60);

        let p3_ip = vector(&[P1, P2])
            .with_status(P3, PartStatus::InProgress)
            .unwrap();
        assert_eq!(completion_percentage(&p3_ip).unwrap(), 65);
        assert_eq!(completion_percentage(&vector(&[P1, P2, P3])).unwrap(), 70);
        assert_eq!(
            completion_percentage(&vector(&[P1, P2, P3, P4])).unwrap(),
            85
        );
        assert_eq!(
            completion_percentage(&vector(&[P1, P2, P3, P4, P5])).unwrap(),
            95
        );
        assert_eq!(
            completion_percentage(&vector(&[P1, P2, P3, P4, P5, P6])).unwrap(),
            100
        );

        // No exact row: max satisfied subset wins.
        assert_eq!(
            completion_percentage(&vector(&[P1, P2, P4, P5])).unwrap(),
            60
        );
    }

    #[test]
    fn single_layer_semantics() {
        use Part::*;
        let s = PartStateVector::with_done(&[P1, P2], WindowType::SingleLayer).unwrap();
        assert_eq!(completion_percentage(&s).unwrap(), 40);

        // P4 is normalized away for single-layer windows.
        let with_p4 = PartStateVector::with_done(&[P1, P2, P4], WindowType::SingleLayer).unwrap();
        assert_eq!(with_p4.status(P4), PartStatus::NotStarted);
        assert_eq!(completion_percentage(&with_p4).unwrap(), 40);

        // Painting may run off P2 directly; completion skips 60 and 85.
        let painted =
            PartStateVector::with_done(&[P1, P2, P3, P5], WindowType::SingleLayer).unwrap();
        assert_eq!(completion_percentage(&painted).unwrap(), 95);
        let done =
            PartStateVector::with_done(&[P1, P2, P3, P5, P6], WindowType::SingleLayer).unwrap();
        assert_eq!(completion_percentage(&done).unwrap(), 100);

        for state in enumerate_valid_states(WindowType::SingleLayer) {
            let pct = completion_percentage(&state).unwrap();
            assert!(pct != 60 && pct != 85, "single-layer reached {pct}%");
        }
    }

    #[test]
    fn precedence_violations_rejected() {
        use Part::*;
        // P3 without P2.
        let err = PartStateVector::with_done(&[P1, P3], WindowType::DoubleLayer).unwrap_err();
        assert_eq!(
            err,
            ProgressError::PrecedenceViolation {
                part: P3,
                needs: P2
            }
        );
        // P5 without P4 (double-layer).
        assert!(PartStateVector::with_done(&[P1, P2, P5], WindowType::DoubleLayer).is_err());
        // ... but fine for single-layer.
        assert!(PartStateVector::with_done(&[P1, P2, P5], WindowType::SingleLayer).is_ok());
    }

    #[test]
    fn transition_rules() {
        use Part::*;
        let a = vector(&[P1, P2]);
        let b = vector(&[P1, P2, P4]);
        assert!(is_legal_transition(&a, &b));
        assert!(is_legal_transition(&a, &a));
        assert!(!is_legal_transition(&b, &a)); // no going backwards
    }

    #[test]
    fn graph_edges_double_layer() {
        let edges = checkpoint_graph(WindowType::DoubleLayer);
        let expected: BTreeSet<(u8, u8)> = [
            (0, 20),
            (20, 40),
            (40, 60),
            (40, 65),
            (40, 70),
            (60, 65),
            (60, 85),
            (60, 95),
            (65, 70),
            (65, 85),
            (65, 95),
            (70, 85),
            (85, 95),
            (95, 100),
        ]
        .into_iter()
        .collect();
        assert_eq!(edges, expected);
    }

    #[test]
    fn graph_edges_single_layer() {
        let edges = checkpoint_graph(WindowType::SingleLayer);
        let expected: BTreeSet<(u8, u8)> = [
            (0, 20),
            (20, 40),
            (40, 65),
            (40, 70),
            (40, 95),
            (65, 70),
            (65, 95),
            (70, 95),
            (95, 100),
        ]
        .into_iter()
        .collect();
        assert_eq!(edges, expected);
    }

    fn ev(window: &str, t: i64, class: &str, conf: f64) -> ObservationEvent {
        ObservationEvent {
            window_id: window.into(),
            timestamp: t,
            checkpoint_class: class.into(),
            confidence: conf,
        }
    }

    #[test]
    fn timeline_clean_sequence() {
        let events: Vec<ObservationEvent> = ["cp20", "cp40", "cp70", "cp85", "cp95", "cp100"]
            .iter()
            .enumerate()
            .map(|(i, c)| ev("w1", i as i64, c, 0.9))
            .collect();
        let tl = infer_timeline(&events, &TimelineOptions::default()).unwrap();
        assert_eq!(tl.current_percentage, 100);
        assert!(tl.anomalies.is_empty());
        assert_eq!(tl.history.len(), 6);
        for pair in tl.history.windows(2) {
            assert!(pair[0].percentage <= pair[1].percentage);
        }
    }

    #[test]
    fn timeline_regression() {
        let events = vec![ev("w1", 0, "cp40", 0.9), ev("w1", 1, "cp20", 0.9)];
        let tl = infer_timeline(&events, &TimelineOptions::default()).unwrap();
        assert_eq!(tl.current_percentage, 40);
        assert_eq!(tl.anomalies.len(), 1);
        assert_eq!(tl.anomalies[0].kind, AnomalyKind::Regression);
    }

    #[test]
    fn timeline_illegal_jump_advances() {
        let events = vec![ev("w1", 0, "cp20", 0.9), ev("w1", 1, "cp85", 0.9)];
        let tl = infer_timeline(&events, &TimelineOptions::default()).unwrap();
        assert_eq!(tl.current_percentage, 85);
        assert_eq!(tl.anomalies.len(), 1);
        assert_eq!(tl.anomalies[0].kind, AnomalyKind::IllegalJump);
    }

    #[test]
    fn timeline_low_confidence_gap() {
        let events = vec![ev("w1", 0, "cp20", 0.9), ev("w1", 1, "cp40", 0.2)];
        let tl = infer_timeline(&events, &TimelineOptions::default()).unwrap();
        assert_eq!(tl.current_percentage, 20);
        assert_eq!(tl.anomalies.len(), 1);
        assert_eq!(tl.anomalies[0].kind, AnomalyKind::LowConfidenceGap);

        // A low-confidence observation that would not advance is silent.
        let events = vec![ev("w1", 0, "cp40", 0.9), ev("w1", 1, "cp20", 0.2)];
        let tl = infer_timeline(&events, &TimelineOptions::default()).unwrap();
        assert!(tl.anomalies.is_empty());
    }

    #[test]
    fn timeline_sorts_by_timestamp() {
        let events = vec![ev("w1", 5, "cp40", 0.9), ev("w1", 1, "cp20", 0.9)];
        let tl = infer_timeline(&events, &TimelineOptions::default()).unwrap();
        assert_eq!(tl.current_percentage, 40);
        assert!(tl.anomalies.is_empty());
    }

    #[test]
    fn timeline_errors() {
        assert_eq!(
            infer_timeline(&[], &TimelineOptions::default()),
            Err(ProgressError::NoEvents)
        );
        let events = vec![ev("w1", 0, "nonsense", 0.9)];
        assert!(matches!(
            infer_timeline(&events, &TimelineOptions::default()),
            Err(ProgressError::UnknownCheckpointClass(_))
        ));
        let mixed = vec![ev("w1", 0, "cp20", 0.9), ev("w2", 1, "cp40", 0.9)];
        assert!(matches!(
            infer_timeline(&mixed, &TimelineOptions::default()),
            Err(ProgressError::MixedWindowIds { .. })
        ));
        // cp60 cannot apply to a single-layer window.
        let single = TimelineOptions {
            window_type: WindowType::SingleLayer,
            ..TimelineOptions::default()
        };
        let events = vec![ev("w1", 0, "cp60", 0.9)];
        assert!(matches!(
            infer_timeline(&events, &single),
            Err(ProgressError::CheckpointNotApplicable { .. })
        ));
    }
}

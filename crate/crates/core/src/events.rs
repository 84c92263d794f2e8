//! Step detection from the inter-ankle distance signal.
//!
//! The distance between the two ankles peaks each time the swinging foot
//! lands one step length ahead, and dips while it passes the stance foot.
//! Detected skeletons are noisy, so a raw peak picker sees several local
//! extrema per true step, especially while both feet are on the ground. The
//! detector therefore works in three stages:
//!
//! 1. candidate extrema: strict local extrema (flat tops count once) that
//!    stand out by a minimum prominence and are spaced by a minimum time;
//! 2. clustering: nearby same-kind candidates of similar value merge into
//!    one cluster whose best member represents it, and the cluster sequence
//!    is forced to alternate between maxima and minima by dropping the less
//!    prominent of two neighbors of the same kind;
//! 3. one step event per maximum cluster, with the step length read from the
//!    ankle separation along the walking direction.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::optimizer::OptimizedSequence;
use crate::skeleton::{Foot, JointId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EventError {
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("frame {frame} lacks {joint}")]
    MissingJoint { frame: usize, joint: JointId },
    #[error("signal has {0} samples, at least 3 are needed")]
    SignalTooShort(usize),
    #[error("NoStepsDetected: found {found} step maxima, at least 2 are needed")]
    NoStepsDetected { found: usize },
    #[error("AmbiguousWalkingDirection: root travels only {travel:.3} m")]
    AmbiguousWalkingDirection { travel: f64 },
    #[error("detector config: {0}")]
    InvalidConfig(String),
}

/// Detector thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Joint whose distance to the left ankle forms the signal.
    pub reference: JointId,
    /// Minimum prominence of a candidate extremum (m).
    pub min_prominence: f64,
    /// Minimum time between two candidates of the same kind (s).
    pub min_separation: f64,
    /// Maximum time between neighboring members of one cluster (s).
    pub cluster_window: f64,
    /// Maximum value difference between a member and the cluster's best (m).
    pub value_tolerance: f64,
    /// Minimum root travel along the walking direction (m).
    pub min_travel: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            reference: JointId::RightAnkle,
            min_prominence: 0.05,
            min_separation: 0.2,
            cluster_window: 0.15,
            value_tolerance: 0.02,
            min_travel: 0.5,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), EventError> {
        let bad = |field: &str, why: &str| Err(EventError::InvalidConfig(format!("{field} {why}")));
        if self.reference == JointId::LeftAnkle {
            return bad("reference", "must differ from the left ankle");
        }
        for (name, v) in [
            ("min_prominence", self.min_prominence),
            ("min_separation", self.min_separation),
            ("cluster_window", self.cluster_window),
            ("value_tolerance", self.value_tolerance),
            ("min_travel", self.min_travel),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(name, "must be a finite non-negative number");
            }
        }
        Ok(())
    }
}

/// Per-frame distance between the left ankle and a reference joint.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSignal {
    pub values: Vec<f64>,
    pub times: Vec<f64>,
    pub reference: JointId,
}

impl StepSignal {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn build_signal(seq: &OptimizedSequence, reference: JointId) -> Result<StepSignal, EventError> {
    if seq.is_empty() {
        return Err(EventError::EmptySequence);
    }
    let mut values = Vec::with_capacity(seq.len());
    for (i, f) in seq.frames.iter().enumerate() {
        let get = |joint| f.get(joint).ok_or(EventError::MissingJoint { frame: i, joint });
        values.push((get(JointId::LeftAnkle)? - get(reference)?).norm());
    }
    Ok(StepSignal {
        values,
        times: seq.times(),
        reference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    Maximum,
    Minimum,
}

/// A local extremum of the signal. A flat top spanning several frames is a
/// single candidate located at its middle frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub kind: ExtremumKind,
    pub frame: usize,
    /// First and last frame of the flat top.
    pub left: usize,
    pub right: usize,
    pub value: f64,
    pub prominence: f64,
}

/// Local maxima of `x` as (left edge, middle, right edge) of each flat top.
fn local_maxima(x: &[f64]) -> Vec<(usize, usize, usize)> {
    let n = x.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                out.push((i, (i + ahead - 1) / 2, ahead - 1));
                i = ahead;
                continue;
            }
            i = ahead;
            continue;
        }
        i += 1;
    }
    out
}

/// Height of a peak above the higher of the two lowest points that separate
/// it from higher terrain (or the signal ends) on either side.
fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    for &v in x[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Keeps the highest peaks, removing any peak closer than `separation`
/// seconds to an already kept, higher one.
fn enforce_separation(peaks: Vec<(usize, usize, usize)>, x: &[f64], times: &[f64], separation: f64) -> Vec<(usize, usize, usize)> {
    let mut order: Vec<usize> = (0..peaks.len()).collect();
    order.sort_by(|&a, &b| x[peaks[b].1].total_cmp(&x[peaks[a].1]).then(a.cmp(&b)));
    let mut keep = vec![true; peaks.len()];
    for &i in &order {
        if !keep[i] {
            continue;
        }
        for j in 0..peaks.len() {
            if j != i && keep[j] && (times[peaks[j].1] - times[peaks[i].1]).abs() < separation {
                keep[j] = false;
            }
        }
    }
    peaks.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).collect()
}

/// Candidate maxima and minima sorted by frame.
pub fn find_extrema_candidates(
    signal: &StepSignal,
    min_prominence: f64,
    min_separation: f64,
) -> Result<Vec<Candidate>, EventError> {
    if signal.len() < 3 {
        return Err(EventError::SignalTooShort(signal.len()));
    }
    let mut out = Vec::new();
    for kind in [ExtremumKind::Maximum, ExtremumKind::Minimum] {
        let x: Vec<f64> = match kind {
            ExtremumKind::Maximum => signal.values.clone(),
            ExtremumKind::Minimum => signal.values.iter().map(|v| -v).collect(),
        };
        let peaks = enforce_separation(local_maxima(&x), &x, &signal.times, min_separation);
        for (left, frame, right) in peaks {
            let p = prominence(&x, frame);
            if p >= min_prominence {
                out.push(Candidate {
                    kind,
                    frame,
                    left,
                    right,
                    value: signal.values[frame],
                    prominence: p,
                });
            }
        }
    }
    out.sort_by_key(|c| c.frame);
    Ok(out)
}

/// A group of candidates that stand for one honest extremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremaCluster {
    pub kind: ExtremumKind,
    /// Contiguous frame range covered by the members.
    pub first: usize,
    pub last: usize,
    pub representative: usize,
    pub value: f64,
    pub prominence: f64,
}

impl ExtremaCluster {
    pub fn members(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }
}

fn better(kind: ExtremumKind, a: f64, b: f64) -> bool {
    match kind {
        ExtremumKind::Maximum => a > b,
        ExtremumKind::Minimum => a < b,
    }
}

fn close_cluster(kind: ExtremumKind, members: &[Candidate], signal: &StepSignal) -> ExtremaCluster {
    let first = members.iter().map(|c| c.left).min().expect("non-empty");
    let last = members.iter().map(|c| c.right).max().expect("non-empty");
    let mut best = signal.values[first];
    for &v in &signal.values[first..=last] {
        if better(kind, v, best) {
            best = v;
        }
    }
    // Middle of the best-valued frames, so a flat top is represented by its center.
    let ties: Vec<usize> = (first..=last).filter(|&i| signal.values[i] == best).collect();
    ExtremaCluster {
        kind,
        first,
        last,
        representative: ties[(ties.len() - 1) / 2],
        value: best,
        prominence: members.iter().map(|c| c.prominence).fold(0.0, f64::max),
    }
}

/// Merges candidates into clusters and enforces max/min alternation.
pub fn cluster_honest_extrema(
    candidates: &[Candidate],
    signal: &StepSignal,
    cluster_window: f64,
    value_tolerance: f64,
) -> Vec<ExtremaCluster> {
    let mut clusters = Vec::new();
    for kind in [ExtremumKind::Maximum, ExtremumKind::Minimum] {
        let mut current: Vec<Candidate> = Vec::new();
        let mut best = 0.0;
        for c in candidates.iter().filter(|c| c.kind == kind) {
            if let Some(prev) = current.last() {
                let near = signal.times[c.frame] - signal.times[prev.frame] <= cluster_window + 1e-12;
                if near && (c.value - best).abs() <= value_tolerance {
                    if better(kind, c.value, best) {
                        best = c.value;
                    }
                    current.push(*c);
                    continue;
                }
                clusters.push(close_cluster(kind, &current, signal));
                current.clear();
            }
            best = c.value;
            current.push(*c);
        }
        if !current.is_empty() {
            clusters.push(close_cluster(kind, &current, signal));
        }
    }
    // A weaker opposite extremum inside a merged cluster is a wiggle on its top.
    let enclosed: Vec<bool> = clusters
        .iter()
        .map(|c| {
            clusters.iter().any(|d| {
                d.kind != c.kind && d.first < c.representative && c.representative < d.last && d.prominence >= c.prominence
            })
        })
        .collect();
    let mut clusters: Vec<ExtremaCluster> = clusters
        .into_iter()
        .zip(enclosed)
        .filter(|(_, e)| !e)
        .map(|(c, _)| c)
        .collect();
    clusters.sort_by_key(|c| c.representative);

    let mut out: Vec<ExtremaCluster> = Vec::with_capacity(clusters.len());
    for c in clusters {
        match out.last_mut() {
            Some(prev) if prev.kind == c.kind => {
                if c.prominence > prev.prominence {
                    *prev = c;
                }
            }
            _ => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    /// The foot that has just landed, i.e. the one ahead.
    pub foot: Foot,
    /// Sub-frame event time (s).
    pub time: f64,
    pub frame: usize,
    /// Ankle separation along the walking direction (m).
    pub length: f64,
    pub cluster: ExtremaCluster,
}

/// Everything the detector derived from one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub signal: StepSignal,
    pub candidates: Vec<Candidate>,
    pub clusters: Vec<ExtremaCluster>,
    /// Unit walking direction, oriented from the first to the last frame.
    pub direction: Vector3<f64>,
    pub events: Vec<StepEvent>,
}

/// Principal direction of root travel, pointing from the start to the end
/// of the walk, and the travel distance along it.
pub fn walking_direction(seq: &OptimizedSequence) -> Result<(Vector3<f64>, f64), EventError> {
    let roots: Vec<Vector3<f64>> = seq
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            f.get(JointId::ROOT).copied().ok_or(EventError::MissingJoint {
                frame: i,
                joint: JointId::ROOT,
            })
        })
        .collect::<Result<_, _>>()?;
    if roots.is_empty() {
        return Err(EventError::EmptySequence);
    }
    let mean = roots.iter().sum::<Vector3<f64>>() / roots.len() as f64;
    let mut cov = Matrix3::zeros();
    for r in &roots {
        let d = r - mean;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut dir: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
    let net = roots[roots.len() - 1] - roots[0];
    if dir.dot(&net) < 0.0 {
        dir = -dir;
    }
    let travel = dir.dot(&net);
    Ok((dir, travel))
}

/// Time at which the signal around `cluster` is half a prominence below
/// the peak, averaged over the rising and falling side.
fn event_time(signal: &StepSignal, cluster: &ExtremaCluster) -> f64 {
    let r = cluster.representative;
    let v = &signal.values;
    let t = &signal.times;
    let level = cluster.value - cluster.prominence / 2.0;
    let cross = |i: usize, j: usize| t[i] + (t[j] - t[i]) * (level - v[i]) / (v[j] - v[i]);
    let left = (0..r).rev().find(|&i| v[i] < level).map(|i| cross(i, i + 1));
    let right = (r + 1..v.len()).find(|&i| v[i] < level).map(|i| cross(i - 1, i));
    match (left, right) {
        (Some(a), Some(b)) => (a + b) / 2.0,
        _ => t[r],
    }
}

pub fn detect(seq: &OptimizedSequence, cfg: &DetectorConfig) -> Result<Detection, EventError> {
    cfg.validate()?;
    let signal = build_signal(seq, cfg.reference)?;
    let candidates = find_extrema_candidates(&signal, cfg.min_prominence, cfg.min_separation)?;
    let clusters = cluster_honest_extrema(&candidates, &signal, cfg.cluster_window, cfg.value_tolerance);
    let maxima: Vec<&ExtremaCluster> = clusters.iter().filter(|c| c.kind == ExtremumKind::Maximum).collect();
    if maxima.len() < 2 {
        return Err(EventError::NoStepsDetected { found: maxima.len() });
    }
    let (direction, travel) = walking_direction(seq)?;
    if travel < cfg.min_travel {
        return Err(EventError::AmbiguousWalkingDirection { travel });
    }
    let events = maxima
        .iter()
        .map(|c| {
            let f = &seq.frames[c.representative];
            let along = (f.get(JointId::LeftAnkle).expect("checked") - f.get(JointId::RightAnkle).ok_or(
                EventError::MissingJoint {
                    frame: c.representative,
                    joint: JointId::RightAnkle,
                },
            )?)
            .dot(&direction);
            Ok(StepEvent {
                foot: if along >= 0.0 { Foot::Left } else { Foot::Right },
                time: event_time(&signal, c),
                frame: c.representative,
                length: along.abs(),
                cluster: (*c).clone(),
            })
        })
        .collect::<Result<Vec<_>, EventError>>()?;
    Ok(Detection {
        signal,
        candidates,
        clusters,
        direction,
        events,
    })
}

/// Step events of a walk, time-ordered.
pub fn detect_steps(seq: &OptimizedSequence, cfg: &DetectorConfig) -> Result<Vec<StepEvent>, EventError> {
    detect(seq, cfg).map(|d| d.events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{SkeletonFrame3D, SubjectInfo};
    use approx::assert_abs_diff_eq;

    fn signal(values: Vec<f64>, fps: f64) -> StepSignal {
        let times = (0..values.len()).map(|i| i as f64 / fps).collect();
        StepSignal {
            values,
            times,
            reference: JointId::RightAnkle,
        }
    }

    fn ankles_only(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> OptimizedSequence {
        let frames = pairs
            .iter()
            .enumerate()
            .map(|(i, (l, r))| {
                let mut f = SkeletonFrame3D::empty(i, i as f64 / 30.0);
                f.set(JointId::LeftAnkle, *l);
                f.set(JointId::RightAnkle, *r);
                f.set(JointId::Pelvis, (l + r) / 2.0 + Vector3::new(0.0, 1.0, 0.0));
                f
            })
            .collect();
        OptimizedSequence::from_frames(frames, 30.0, SubjectInfo { id: None, height_m: 1.75 })
    }

    #[test]
    fn signal_is_the_ankle_distance() {
        let seq = ankles_only(&[
            (Vector3::new(0.0, 0.0, 4.0), Vector3::new(0.7, 0.0, 4.0)),
            (Vector3::new(0.0, 0.0, 4.0), Vector3::new(0.0, 0.0, 4.0)),
        ]);
        let s = build_signal(&seq, JointId::RightAnkle).unwrap();
        assert_eq!(s.values, vec![0.7, 0.0]);
    }

    #[test]
    fn missing_reference_is_an_error() {
        let seq = ankles_only(&[(Vector3::new(0.0, 0.0, 4.0), Vector3::new(0.7, 0.0, 4.0))]);
        assert_eq!(
            build_signal(&seq, JointId::Head),
            Err(EventError::MissingJoint {
                frame: 0,
                joint: JointId::Head
            })
        );
    }

    #[test]
    fn standing_signal_is_constant() {
        let p = (Vector3::new(-0.1, -1.0, 4.0), Vector3::new(0.1, -1.0, 4.0));
        let seq = ankles_only(&[p; 40]);
        let s = build_signal(&seq, JointId::RightAnkle).unwrap();
        assert!(s.values.iter().all(|v| *v == s.values[0]));
        assert!(find_extrema_candidates(&s, 0.0, 0.0).unwrap().is_empty());
        assert_eq!(
            detect_steps(&seq, &DetectorConfig::default()),
            Err(EventError::NoStepsDetected { found: 0 })
        );
    }

    #[test]
    fn monotone_signal_has_no_candidates() {
        let s = signal((0..50).map(|i| i as f64 * 0.01).collect(), 30.0);
        assert!(find_extrema_candidates(&s, 0.0, 0.0).unwrap().is_empty());
    }

    #[test]
    fn short_signal_is_rejected() {
        assert_eq!(
            find_extrema_candidates(&signal(vec![0.0, 1.0], 30.0), 0.0, 0.0),
            Err(EventError::SignalTooShort(2))
        );
    }

    /// Exhaustive oracle: strict extrema with explicit flat-top scan and a
    /// two-sided prominence search, no separation constraint.
    fn scan_oracle(x: &[f64], min_prominence: f64) -> Vec<(ExtremumKind, usize, f64)> {
        let mut out = Vec::new();
        for (kind, sign) in [(ExtremumKind::Maximum, 1.0), (ExtremumKind::Minimum, -1.0)] {
            let y: Vec<f64> = x.iter().map(|v| sign * v).collect();
            for i in 1..y.len() - 1 {
                if !(y[i - 1] < y[i]) {
                    continue;
                }
                let mut j = i;
                while j + 1 < y.len() && y[j + 1] == y[i] {
                    j += 1;
                }
                if j + 1 >= y.len() || !(y[j + 1] < y[i]) {
                    continue;
                }
                let mid = (i + j) / 2;
                let mut lo_left = y[mid];
                let mut k = mid;
                while k > 0 && y[k - 1] <= y[mid] {
                    k -= 1;
                    lo_left = lo_left.min(y[k]);
                }
                let mut lo_right = y[mid];
                let mut k = mid;
                while k + 1 < y.len() && y[k + 1] <= y[mid] {
                    k += 1;
                    lo_right = lo_right.min(y[k]);
                }
                let prom = y[mid] - lo_left.max(lo_right);
                if prom >= min_prominence {
                    out.push((kind, mid, prom));
                }
            }
        }
        out.sort_by_key(|e| e.1);
        out
    }

    #[test]
    fn rectified_sine_matches_scan_oracle() {
        let x: Vec<f64> = (0..=90)
            .map(|i| (std::f64::consts::TAU * i as f64 / 30.0).sin().abs())
            .collect();
        let s = signal(x.clone(), 30.0);
        let found = find_extrema_candidates(&s, 0.05, 0.0).unwrap();
        let expected = scan_oracle(&x, 0.05);
        assert_eq!(found.len(), expected.len());
        for (c, (kind, frame, prom)) in found.iter().zip(&expected) {
            assert_eq!((c.kind, c.frame), (*kind, *frame));
            assert_abs_diff_eq!(c.prominence, *prom, epsilon = 1e-15);
        }
        // |sin| over three seconds peaks twice per second.
        let maxima: Vec<_> = found.iter().filter(|c| c.kind == ExtremumKind::Maximum).map(|c| c.frame).collect();
        let minima: Vec<_> = found.iter().filter(|c| c.kind == ExtremumKind::Minimum).map(|c| c.frame).collect();
        assert_eq!(maxima.len(), 6);
        assert_eq!(minima, vec![15, 30, 45, 60, 75]);
    }

    #[test]
    fn flat_top_is_one_candidate_at_its_middle() {
        let s = signal(vec![0.0, 0.5, 0.7, 0.7, 0.7, 0.7, 0.7, 0.4, 0.0], 30.0);
        let c = find_extrema_candidates(&s, 0.0, 0.0).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].left, c[0].frame, c[0].right), (2, 4, 6));
        assert_abs_diff_eq!(c[0].prominence, 0.7);
    }

    #[test]
    fn separation_keeps_the_higher_peak() {
        let s = signal(vec![0.0, 0.6, 0.3, 0.7, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.8, 0.0], 10.0);
        let c = find_extrema_candidates(&s, 0.0, 0.25).unwrap();
        let maxima: Vec<_> = c.iter().filter(|c| c.kind == ExtremumKind::Maximum).map(|c| c.frame).collect();
        assert_eq!(maxima, vec![3, 10]);
    }

    #[test]
    fn nearby_similar_maxima_merge() {
        let s = signal(vec![0.0, 0.3, 0.700, 0.69, 0.698, 0.3, 0.0], 30.0);
        let candidates = find_extrema_candidates(&s, 0.0, 0.0).unwrap();
        let maxima = candidates.iter().filter(|c| c.kind == ExtremumKind::Maximum).count();
        assert_eq!(maxima, 2);
        let clusters = cluster_honest_extrema(&candidates, &s, 0.2, 0.01);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].kind, ExtremumKind::Maximum);
        assert_eq!(clusters[0].value, 0.700);
        assert_eq!(clusters[0].representative, 2);
        assert_eq!(clusters[0].members(), 2..=4);
    }

    #[test]
    fn alternating_extrema_stay_separate() {
        let x: Vec<f64> = (0..=60).map(|i| 0.4 + 0.3 * (i as f64 * 0.3).sin()).collect();
        let s = signal(x, 30.0);
        let candidates = find_extrema_candidates(&s, 0.05, 0.0).unwrap();
        let clusters = cluster_honest_extrema(&candidates, &s, 0.15, 0.02);
        assert_eq!(clusters.len(), candidates.len());
        for (c, k) in clusters.iter().zip(&candidates) {
            assert_eq!((c.kind, c.representative), (k.kind, k.frame));
        }
        assert!(clusters.windows(2).all(|w| w[0].kind != w[1].kind));
    }

    #[test]
    fn weaker_of_two_same_kind_neighbors_is_dropped() {
        let mk = |kind, frame, value, prominence| Candidate {
            kind,
            frame,
            left: frame,
            right: frame,
            value,
            prominence,
        };
        let s = signal(vec![0.0; 40], 30.0);
        let candidates = [
            mk(ExtremumKind::Maximum, 5, 0.7, 0.6),
            mk(ExtremumKind::Maximum, 20, 0.5, 0.2),
            mk(ExtremumKind::Minimum, 30, 0.1, 0.5),
        ];
        let clusters = cluster_honest_extrema(&candidates, &s, 0.15, 0.02);
        let reps: Vec<_> = clusters.iter().map(|c| c.representative).collect();
        assert_eq!(reps, vec![5, 30]);
    }

    #[test]
    fn empty_candidates_give_no_clusters() {
        let s = signal(vec![0.0; 5], 30.0);
        assert!(cluster_honest_extrema(&[], &s, 0.15, 0.02).is_empty());
    }

    #[test]
    fn short_travel_is_ambiguous() {
        // Ankles scissor in place: plenty of maxima but no progression.
        let pairs: Vec<_> = (0..90)
            .map(|i| {
                let a = 0.35 * (i as f64 * std::f64::consts::TAU / 30.0).sin();
                (Vector3::new(0.0, -1.0, 4.0 + a), Vector3::new(0.0, -1.0, 4.0 - a))
            })
            .collect();
        let seq = ankles_only(&pairs);
        assert!(matches!(
            detect_steps(&seq, &DetectorConfig::default()),
            Err(EventError::AmbiguousWalkingDirection { .. })
        ));
    }

    #[test]
    fn config_rejects_bad_values() {
        let cfg = DetectorConfig {
            min_prominence: -0.1,
            ..DetectorConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("min_prominence"));
        let cfg = DetectorConfig {
            reference: JointId::LeftAnkle,
            ..DetectorConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}

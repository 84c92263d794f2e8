//! Walk documents (`.poses.json`) and report exports (`.gait.csv`).
//!
//! A walk document is a JSON object with a `header` and a `frames` array.
//! Joint maps are keyed by joint name and a missing joint is simply absent:
//!
//! ```json
//! {"header": {"fps": 30, "height_m": 1.75, "source": "stand"},
//!  "frames": [{"index": 0, "2d": {"Neck": {"x": 150, "y": 50}},
//!              "3d": {"Neck": {"x": 0.1, "y": 0.5, "z": 3.0}}}]}
//! ```
//!
//! Bare keys such as `{Neck: {x: 150, y: 50}}` are accepted on input.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::Vector3;
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::events::StepEvent;
use crate::params::GaitReport;
use crate::skeleton::{
    CameraModel, Canonical, JointId, Keypoint2D, SkeletonError, SkeletonFrame2D, SkeletonFrame3D, SkeletonSequence,
    SubjectInfo,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoseIoError {
    #[error("MalformedDocument: {0}")]
    MalformedDocument(String),
    #[error("UnknownJoint: frame {frame} uses unrecognized joint name {name:?}")]
    UnknownJoint { frame: usize, name: String },
    #[error("NonMonotonicFrames: frame index {index} does not follow {previous}")]
    NonMonotonicFrames { index: usize, previous: usize },
    #[error("MissingHeaderField: {0}")]
    MissingHeaderField(&'static str),
    #[error("invalid sequence: {0}")]
    InvalidSequence(#[from] SkeletonError),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for PoseIoError {
    fn from(e: csv::Error) -> Self {
        PoseIoError::Csv(e.to_string())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    header: Option<RawHeader>,
    frames: Option<Vec<RawFrame>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeader {
    fps: Option<f64>,
    height_m: Option<f64>,
    subject_id: Option<String>,
    walk_id: Option<String>,
    source: Option<String>,
    camera: Option<CameraModel>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    index: usize,
    time: Option<f64>,
    #[serde(rename = "2d")]
    joints_2d: Option<BTreeMap<String, RawPoint2>>,
    #[serde(rename = "3d")]
    joints_3d: Option<BTreeMap<String, RawPoint3>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint2 {
    x: f64,
    y: f64,
    confidence: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint3 {
    x: f64,
    y: f64,
    z: f64,
}

/// Quotes bare object keys so the relaxed notation parses as JSON.
/// Anything that is not a plain bare key passes through untouched.
fn quote_bare_keys(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 64);
    let mut i = 0;
    let mut in_string = false;
    let mut expect_key = false;
    while i < chars.len() {
        let c = chars[i];
        if in_string {
            out.push(c);
            if c == '\\' && i + 1 < chars.len() {
                out.push(chars[i + 1]);
                i += 1;
            } else if c == '"' {
                in_string = false;
            }
            i += 1;
            continue;
        }
        if expect_key && !c.is_whitespace() {
            expect_key = false;
            if c.is_alphanumeric() || c == '_' {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || matches!(chars[j], ' ' | '_' | '-' | '.')) {
                    j += 1;
                }
                if j < chars.len() && chars[j] == ':' {
                    let key: String = chars[start..j].iter().collect();
                    out.push('"');
                    out.push_str(key.trim_end());
                    out.push('"');
                    i = j;
                    continue;
                }
            }
        }
        match c {
            '"' => in_string = true,
            '{' | ',' => expect_key = true,
            _ => {}
        }
        out.push(c);
        i += 1;
    }
    out
}

fn joint_of(name: &str, frame: usize) -> Result<Option<JointId>, PoseIoError> {
    match JointId::canonicalize(name) {
        Canonical::Joint(j) => Ok(Some(j)),
        Canonical::Dropped => Ok(None),
        Canonical::Unknown => Err(PoseIoError::UnknownJoint {
            frame,
            name: name.to_string(),
        }),
    }
}

/// Parses a walk document. A modality is present when any frame carries it;
/// frames without it then hold no joints of that modality.
pub fn parse_stream(bytes: &[u8]) -> Result<SkeletonSequence, PoseIoError> {
    let text = std::str::from_utf8(bytes).map_err(|e| PoseIoError::MalformedDocument(e.to_string()))?;
    let doc: RawDocument = serde_json::from_str(text)
        .or_else(|_| serde_json::from_str(&quote_bare_keys(text)))
        .map_err(|e: serde_json::Error| PoseIoError::MalformedDocument(e.to_string()))?;
    let header = doc.header.ok_or(PoseIoError::MissingHeaderField("header"))?;
    let fps = header.fps.ok_or(PoseIoError::MissingHeaderField("fps"))?;
    let height_m = header.height_m.ok_or(PoseIoError::MissingHeaderField("height_m"))?;
    let raw_frames = doc
        .frames
        .ok_or_else(|| PoseIoError::MalformedDocument("missing field `frames`".into()))?;

    for w in raw_frames.windows(2) {
        if w[1].index <= w[0].index {
            return Err(PoseIoError::NonMonotonicFrames {
                index: w[1].index,
                previous: w[0].index,
            });
        }
    }
    let any_2d = raw_frames.iter().any(|f| f.joints_2d.is_some());
    let any_3d = raw_frames.iter().any(|f| f.joints_3d.is_some());
    let mut frames2d = Vec::new();
    let mut frames3d = Vec::new();
    for f in &raw_frames {
        let time = f.time.unwrap_or(f.index as f64 / fps);
        if any_2d {
            let mut frame = SkeletonFrame2D::empty(f.index, time);
            for (name, p) in f.joints_2d.iter().flatten() {
                if let Some(j) = joint_of(name, f.index)? {
                    frame.set(j, Keypoint2D::new(p.x, p.y, p.confidence.unwrap_or(1.0)));
                }
            }
            frames2d.push(frame);
        }
        if any_3d {
            let mut frame = SkeletonFrame3D::empty(f.index, time);
            for (name, p) in f.joints_3d.iter().flatten() {
                if let Some(j) = joint_of(name, f.index)? {
                    frame.set(j, Vector3::new(p.x, p.y, p.z));
                }
            }
            frames3d.push(frame);
        }
    }
    let mut seq = SkeletonSequence::new(
        fps,
        SubjectInfo {
            id: header.subject_id,
            height_m,
        },
        frames2d,
        frames3d,
    )?;
    seq.walk_id = header.walk_id;
    seq.source = header.source;
    seq.camera = header.camera;
    Ok(seq)
}

/// Rounds to ten significant digits, which keeps the relative round-trip
/// error below 1e-9.
fn sig(v: f64) -> f64 {
    format!("{v:.9e}").parse().unwrap_or(v)
}

struct Joints2<'a>(&'a SkeletonFrame2D);
struct Joints3<'a>(&'a SkeletonFrame3D);

#[derive(Serialize)]
struct P2 {
    x: f64,
    y: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
}

#[derive(Serialize)]
struct P3 {
    x: f64,
    y: f64,
    z: f64,
}

impl Serialize for Joints2<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(None)?;
        for (j, k) in self.0.present() {
            let p = P2 {
                x: sig(k.position.x),
                y: sig(k.position.y),
                confidence: (k.confidence != 1.0).then(|| sig(k.confidence)),
            };
            map.serialize_entry(j.name(), &p)?;
        }
        map.end()
    }
}

impl Serialize for Joints3<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(None)?;
        for (j, p) in self.0.present() {
            map.serialize_entry(
                j.name(),
                &P3 {
                    x: sig(p.x),
                    y: sig(p.y),
                    z: sig(p.z),
                },
            )?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct OutHeader<'a> {
    fps: f64,
    height_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    subject_id: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    walk_id: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    camera: Option<&'a CameraModel>,
}

#[derive(Serialize)]
struct OutFrame<'a> {
    index: usize,
    time: f64,
    #[serde(rename = "2d", skip_serializing_if = "Option::is_none")]
    joints_2d: Option<Joints2<'a>>,
    #[serde(rename = "3d", skip_serializing_if = "Option::is_none")]
    joints_3d: Option<Joints3<'a>>,
}

/// Serializes a sequence with one frame per line and a fixed key order.
pub fn write_stream(seq: &SkeletonSequence) -> Vec<u8> {
    let header = OutHeader {
        fps: seq.fps,
        height_m: seq.subject.height_m,
        subject_id: seq.subject.id.as_deref(),
        walk_id: seq.walk_id.as_deref(),
        source: seq.source.as_deref(),
        camera: seq.camera.as_ref(),
    };
    let mut out = String::from("{\"header\":");
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push_str(",\n\"frames\":[");
    for i in 0..seq.len() {
        let f2 = seq.frames2d.get(i);
        let f3 = seq.frames3d.get(i);
        let (index, time) = f3.map(|f| (f.index, f.time)).or(f2.map(|f| (f.index, f.time))).unwrap();
        let frame = OutFrame {
            index,
            time,
            joints_2d: f2.map(Joints2),
            joints_3d: f3.map(Joints3),
        };
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        out.push_str(&serde_json::to_string(&frame).expect("frame serializes"));
    }
    out.push_str("\n]}\n");
    out.into_bytes()
}

/// One `.gait.csv` row: a walk's parameters, or its failure code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitRow {
    pub walk_id: String,
    pub source: String,
    pub gait_speed_m_s: Option<f64>,
    pub cadence_steps_min: Option<f64>,
    pub step_length_cm: Option<f64>,
    pub step_time_s: Option<f64>,
    /// `ok` or the error code of the failed stage.
    pub status: String,
}

impl GaitRow {
    pub fn from_report(walk_id: &str, report: &GaitReport) -> Self {
        GaitRow {
            walk_id: walk_id.to_string(),
            source: report.source.clone().unwrap_or_default(),
            gait_speed_m_s: Some(report.gait_speed),
            cadence_steps_min: Some(report.cadence),
            step_length_cm: Some(report.step_length_cm),
            step_time_s: Some(report.step_time),
            status: "ok".into(),
        }
    }

    pub fn failed(walk_id: &str, source: Option<&str>, code: &str) -> Self {
        GaitRow {
            walk_id: walk_id.to_string(),
            source: source.unwrap_or_default().to_string(),
            gait_speed_m_s: None,
            cadence_steps_min: None,
            step_length_cm: None,
            step_time_s: None,
            status: code.to_string(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Parameter values keyed by the names used in matched-walk files.
    pub fn parameters(&self) -> [(&'static str, Option<f64>); 4] {
        [
            ("gait_speed", self.gait_speed_m_s),
            ("cadence", self.cadence_steps_min),
            ("step_length", self.step_length_cm),
            ("step_time", self.step_time_s),
        ]
    }
}

pub fn write_gait_csv<W: Write>(writer: W, rows: &[GaitRow]) -> Result<(), PoseIoError> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record([
            "walk_id",
            "source",
            "gait_speed_m_s",
            "cadence_steps_min",
            "step_length_cm",
            "step_time_s",
            "status",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| PoseIoError::Csv(e.to_string()))
}

pub fn read_gait_csv<R: Read>(reader: R) -> Result<Vec<GaitRow>, PoseIoError> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(PoseIoError::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub walk_id: String,
    pub foot: crate::skeleton::Foot,
    pub time_s: f64,
    pub frame: usize,
    pub length_cm: f64,
}

pub fn write_events_csv<W: Write>(writer: W, walk_id: &str, events: &[StepEvent]) -> Result<(), PoseIoError> {
    let mut w = csv::Writer::from_writer(writer);
    if events.is_empty() {
        w.write_record(["walk_id", "foot", "time_s", "frame", "length_cm"])?;
    }
    for e in events {
        w.serialize(EventRow {
            walk_id: walk_id.to_string(),
            foot: e.foot,
            time_s: e.time,
            frame: e.frame,
            length_cm: e.length * 100.0,
        })?;
    }
    w.flush().map_err(|e| PoseIoError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walker::{generate, WalkerSpec};
    use proptest::prelude::*;

    const HEADER: &str = r#""header": {"fps": 30, "height_m": 1.75, "source": "hand"}"#;

    #[test]
    fn relaxed_sample_frame_parses() {
        let doc = format!(
            "{{{HEADER}, \"frames\": [{{index: 0, 2d: {{Neck: {{x: 150, y: 50}}, Left Hip: {{x: 170, y: 600}}, Left Ankle: {{x: 175, y: 1000}}}}}}]}}"
        );
        let seq = parse_stream(doc.as_bytes()).unwrap();
        assert_eq!(seq.frames2d.len(), 1);
        assert!(!seq.has_3d());
        let f = &seq.frames2d[0];
        assert_eq!(f.present().count(), 3);
        assert_eq!(f.get(JointId::Neck).unwrap().position.x, 150.0);
        assert_eq!(f.get(JointId::LeftHip).unwrap().position.y, 600.0);
        assert_eq!(f.get(JointId::LeftAnkle).unwrap().position.y, 1000.0);
        assert_eq!(seq.source.as_deref(), Some("hand"));
    }

    #[test]
    fn empty_frame_list_is_an_empty_sequence() {
        let seq = parse_stream(format!("{{{HEADER}, \"frames\": []}}").as_bytes()).unwrap();
        assert!(seq.is_empty());
        let again = parse_stream(&write_stream(&seq)).unwrap();
        assert_eq!(again, seq);
    }

    #[test]
    fn typed_errors() {
        let frames = |idx: &str| format!("{{{HEADER}, \"frames\": [{idx}]}}");
        let out_of_order = frames(r#"{"index": 0}, {"index": 2}, {"index": 1}"#);
        assert_eq!(
            parse_stream(out_of_order.as_bytes()),
            Err(PoseIoError::NonMonotonicFrames { index: 1, previous: 2 })
        );
        let unknown = frames(r#"{"index": 0, "2d": {"Tail": {"x": 1, "y": 2}}}"#);
        assert!(matches!(
            parse_stream(unknown.as_bytes()),
            Err(PoseIoError::UnknownJoint { frame: 0, .. })
        ));
        assert_eq!(
            parse_stream(br#"{"header": {"height_m": 1.7}, "frames": []}"#),
            Err(PoseIoError::MissingHeaderField("fps"))
        );
        assert_eq!(
            parse_stream(br#"{"header": {"fps": 30}, "frames": []}"#),
            Err(PoseIoError::MissingHeaderField("height_m"))
        );
        assert!(matches!(parse_stream(b"{\"header\": "), Err(PoseIoError::MalformedDocument(_))));
        assert!(matches!(parse_stream(&[0xff, 0xfe]), Err(PoseIoError::MalformedDocument(_))));
    }

    #[test]
    fn detector_only_joints_are_dropped() {
        let doc = format!(r#"{{{HEADER}, "frames": [{{"index": 0, "2d": {{"Nose": {{"x": 1, "y": 2}}, "RHip": {{"x": 3, "y": 4}}}}}}]}}"#);
        let seq = parse_stream(doc.as_bytes()).unwrap();
        let joints: Vec<JointId> = seq.frames2d[0].present().map(|(j, _)| j).collect();
        assert_eq!(joints, vec![JointId::RightHip]);
    }

    #[test]
    fn walker_fixture_round_trips_and_writes_stably() {
        let (seq, _) = generate(&WalkerSpec::default()).unwrap();
        let bytes = write_stream(&seq);
        assert_eq!(bytes, write_stream(&seq));
        let back = parse_stream(&bytes).unwrap();
        assert_eq!(back.len(), seq.len());
        assert_eq!(back.camera, seq.camera);
        for (a, b) in back.frames3d.iter().zip(&seq.frames3d) {
            for ((_, p), (_, q)) in a.present().zip(b.present()) {
                assert!((p - q).norm() <= 1e-9 * q.norm());
            }
        }
        for (a, b) in back.frames2d.iter().zip(&seq.frames2d) {
            for ((_, p), (_, q)) in a.present().zip(b.present()) {
                assert!((p.position - q.position).norm() <= 1e-9 * q.position.norm());
            }
        }
    }

    #[test]
    fn gait_csv_round_trip_with_failed_rows() {
        let rows = vec![
            GaitRow {
                walk_id: "w1".into(),
                source: "stand".into(),
                gait_speed_m_s: Some(1.42),
                cadence_steps_min: Some(121.77),
                step_length_cm: Some(69.22),
                step_time_s: Some(0.4927),
                status: "ok".into(),
            },
            GaitRow::failed("w2", Some("stand"), "NoStepsDetected"),
        ];
        let mut buf = Vec::new();
        write_gait_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "walk_id,source,gait_speed_m_s,cadence_steps_min,step_length_cm,step_time_s,status\n"
        ));
        assert!(text.contains("w2,stand,,,,,NoStepsDetected"));
        assert_eq!(read_gait_csv(buf.as_slice()).unwrap(), rows);
    }

    fn sequence_strategy() -> impl Strategy<Value = SkeletonSequence> {
        let joint3 = prop::option::weighted(0.8, (-2.0f64..2.0, -1.0f64..1.0, 0.5f64..8.0));
        let joint2 = prop::option::weighted(0.8, (0.0f64..1080.0, 0.0f64..1920.0, 0.0f64..=1.0));
        let frame = (
            prop::collection::vec(joint3, 21),
            prop::collection::vec(joint2, 21),
            1usize..4,
        );
        (prop::collection::vec(frame, 0..6), 10.0f64..120.0, 1.0f64..2.2, any::<bool>(), any::<bool>()).prop_map(
            |(frames, fps, height, with2, with3)| {
                let mut index = 0;
                let mut f2 = Vec::new();
                let mut f3 = Vec::new();
                for (j3, j2, gap) in frames {
                    index += gap;
                    let t = index as f64 / fps;
                    let mut a = SkeletonFrame2D::empty(index, t);
                    let mut b = SkeletonFrame3D::empty(index, t);
                    for (i, j) in JointId::ALL.iter().enumerate() {
                        if let Some((x, y, c)) = j2[i] {
                            a.set(*j, Keypoint2D::new(x, y, c));
                        }
                        if let Some((x, y, z)) = j3[i] {
                            b.set(*j, Vector3::new(x, y, z));
                        }
                    }
                    f2.push(a);
                    f3.push(b);
                }
                if !with2 {
                    f2.clear();
                }
                if !with3 && with2 {
                    f3.clear();
                }
                let mut seq = SkeletonSequence::new(fps, SubjectInfo { id: Some("s".into()), height_m: height }, f2, f3)
                    .unwrap();
                seq.walk_id = Some("w".into());
                seq
            },
        )
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1e-300)
    }

    proptest! {
        #[test]
        fn parse_inverts_write(seq in sequence_strategy()) {
            let back = parse_stream(&write_stream(&seq)).unwrap();
            prop_assert_eq!(back.len(), seq.len());
            prop_assert_eq!(back.has_2d(), seq.has_2d());
            prop_assert_eq!(back.has_3d(), seq.has_3d());
            prop_assert_eq!(&back.subject, &seq.subject);
            prop_assert_eq!(&back.walk_id, &seq.walk_id);
            for (a, b) in back.frames3d.iter().zip(&seq.frames3d) {
                prop_assert_eq!(a.index, b.index);
                prop_assert_eq!(a.time, b.time);
                for j in JointId::ALL {
                    match (a.get(j), b.get(j)) {
                        (Some(p), Some(q)) => prop_assert!((0..3).all(|k| close(p[k], q[k]))),
                        (None, None) => {}
                        _ => prop_assert!(false, "presence differs at {}", j),
                    }
                }
            }
            for (a, b) in back.frames2d.iter().zip(&seq.frames2d) {
                for j in JointId::ALL {
                    match (a.get(j), b.get(j)) {
                        (Some(p), Some(q)) => {
                            prop_assert!(close(p.position.x, q.position.x) && close(p.position.y, q.position.y));
                            prop_assert!(close(p.confidence, q.confidence));
                        }
                        (None, None) => {}
                        _ => prop_assert!(false, "presence differs at {}", j),
                    }
                }
            }
        }

        #[test]
        fn parsing_arbitrary_bytes_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let _ = parse_stream(&bytes);
        }

        #[test]
        fn parsing_mutated_documents_never_panics(cut in 0usize..400, byte in any::<u8>()) {
            let doc = format!(r#"{{{HEADER}, "frames": [{{"index": 0, "3d": {{"Neck": {{"x": 0.1, "y": 0.5, "z": 3.0}}}}}}]}}"#);
            let mut bytes = doc.into_bytes();
            let at = cut % bytes.len();
            bytes[at] = byte;
            let _ = parse_stream(&bytes);
        }
    }
}

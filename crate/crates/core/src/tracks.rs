//! Ingestion of egocentric track sources: snapshot descriptors, segmentation
//! tracks, and spatial-audio tracks, normalized into one bundle.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::audio::cdr::{estimate_cdr, distance_from_cdr, RangeCalibration, WelchConfig};
use crate::audio::doa::{discard_forward, srp_phat, DoaConfig, DoaGrid, FORWARD_BAND_DEG};
use crate::audio::{AudioClip, MicArray};
use crate::error::{Error, Result};
use crate::geometry::EgoObservation;

/// Which track a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Target,
    Reference,
    Facing,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Target => "target",
            Role::Reference => "reference",
            Role::Facing => "facing",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "target" => Ok(Role::Target),
            "reference" => Ok(Role::Reference),
            "facing" => Ok(Role::Facing),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Egocentric,
    Allocentric,
}

/// One described object with optional visual keyframes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub name: Option<String>,
    pub description: String,
    pub is_static: bool,
    pub keyframes: Vec<EgoObservation>,
}

impl ObjectEntry {
    /// Sentinel for "the reference is the camera itself".
    pub fn camera() -> Self {
        ObjectEntry {
            name: Some("camera".into()),
            description: "camera".into(),
            is_static: false,
            keyframes: Vec::new(),
        }
    }

    pub fn is_camera(&self) -> bool {
        self.name.as_deref() == Some("camera")
    }
}

/// Normalized snapshot descriptor: the event span, reasoning mode, and the
/// objects the question is about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDescriptor {
    pub event: String,
    /// (start, end) seconds; start < end.
    pub span: (f64, f64),
    pub mode: Mode,
    pub target: ObjectEntry,
    pub reference: Option<ObjectEntry>,
    pub facing: Option<ObjectEntry>,
}

impl SnapshotDescriptor {
    pub fn validate(&self) -> Result<()> {
        if !(self.span.0 < self.span.1) {
            return Err(Error::parse(
                "start_time",
                format!("span start {} must precede end {}", self.span.0, self.span.1),
            ));
        }
        if self.mode == Mode::Allocentric && (self.reference.is_none() || self.facing.is_none()) {
            return Err(Error::parse(
                "mode",
                "allocentric descriptor requires reference and facing objects",
            ));
        }
        Ok(())
    }
}

/// "minutes:seconds" (seconds may be fractional, must be < 60). Bare numbers
/// are also accepted as plain seconds.
fn parse_clock(path: &str, raw: &Value) -> Result<f64> {
    match raw {
        Value::Number(n) => n
            .as_f64()
            .filter(|v| *v >= 0.0)
            .ok_or_else(|| Error::parse(path, "negative time")),
        Value::String(s) => {
            let s = s.trim();
            if let Some((m, sec)) = s.split_once(':') {
                let minutes: f64 = m
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(path, format!("bad minutes in {s:?}")))?;
                let seconds: f64 = sec
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(path, format!("bad seconds in {s:?}")))?;
                if !(0.0..60.0).contains(&seconds) {
                    return Err(Error::parse(
                        path,
                        format!("seconds field {seconds} out of range in {s:?}"),
                    ));
                }
                if minutes < 0.0 {
                    return Err(Error::parse(path, format!("negative minutes in {s:?}")));
                }
                Ok(minutes * 60.0 + seconds)
            } else {
                s.parse()
                    .map_err(|_| Error::parse(path, format!("unparseable time {s:?}")))
            }
        }
        other => Err(Error::parse(path, format!("expected time, got {other}"))),
    }
}

/// Numeric field that may be a number or a string with a unit suffix
/// ("3.2 m", "120 degrees").
fn parse_measure(path: &str, raw: &Value) -> Result<f64> {
    match raw {
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| Error::parse(path, "non-finite number")),
        Value::String(s) => {
            let trimmed = s.trim();
            let numeric: String = trimmed
                .chars()
                .take_while(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E'))
                .collect();
            numeric
                .parse()
                .map_err(|_| Error::parse(path, format!("unparseable measure {s:?}")))
        }
        other => Err(Error::parse(path, format!("expected number, got {other}"))),
    }
}

fn parse_keyframes(path: &str, raw: Option<&Value>) -> Result<Vec<EgoObservation>> {
    let Some(Value::Object(map)) = raw else {
        return Ok(Vec::new());
    };
    // BTreeMap keyed by time keeps keyframes sorted regardless of file order.
    let mut by_time: BTreeMap<i64, EgoObservation> = BTreeMap::new();
    for (clock, entry) in map {
        let kf_path = format!("{path}.key_frames.{clock}");
        let t = parse_clock(&kf_path, &Value::String(clock.clone()))?;
        let obj = entry
            .as_object()
            .ok_or_else(|| Error::parse(&kf_path, "keyframe entry must be an object"))?;
        let r = parse_measure(
            &format!("{kf_path}.distance"),
            obj.get("distance")
                .ok_or_else(|| Error::parse(&kf_path, "missing distance"))?,
        )?;
        let theta = parse_measure(
            &format!("{kf_path}.direction"),
            obj.get("direction")
                .ok_or_else(|| Error::parse(&kf_path, "missing direction"))?,
        )?;
        if theta.abs() > 90.0 {
            log::warn!("{kf_path}: direction {theta}° outside the nominal ±90° window");
        }
        if r <= 0.0 {
            return Err(Error::parse(&kf_path, format!("non-positive distance {r}")));
        }
        by_time.insert((t * 1e6).round() as i64, EgoObservation::new(t, theta, r));
    }
    Ok(by_time.into_values().collect())
}

fn parse_object(path: &str, raw: &Value, want_static: bool) -> Result<ObjectEntry> {
    let obj = raw
        .as_object()
        .ok_or_else(|| Error::parse(path, "expected an object"))?;
    let name = obj
        .get("object_name")
        .and_then(Value::as_str)
        .map(str::to_owned);
    let description = obj
        .get("description")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_owned();
    let is_static = if want_static {
        obj.get("is_static")
            .and_then(Value::as_bool)
            .ok_or_else(|| Error::parse(&format!("{path}.is_static"), "missing boolean"))?
    } else {
        // Reference and facing objects are static by construction.
        obj.get("is_static").and_then(Value::as_bool).unwrap_or(true)
    };
    let keyframes = parse_keyframes(path, obj.get("key_frames"))?;
    Ok(ObjectEntry {
        name,
        description,
        is_static,
        keyframes,
    })
}

/// Parse either published descriptor schema: the richer one uses
/// `reference_object`/`facing_object` with `key_frames`; the lighter one uses
/// `stand_by_object`/`facing_direction` and carries no keyframes.
pub fn parse_snapshot(bytes: &[u8]) -> Result<SnapshotDescriptor> {
    let root: Value = serde_json::from_slice(bytes)?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::parse("$", "descriptor must be a JSON object"))?;

    let event = obj
        .get("event")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_owned();
    let start = parse_clock(
        "start_time",
        obj.get("start_time")
            .ok_or_else(|| Error::parse("start_time", "missing"))?,
    )?;
    let end = parse_clock(
        "end_time",
        obj.get("end_time")
            .ok_or_else(|| Error::parse("end_time", "missing"))?,
    )?;
    let mode = match obj.get("mode").and_then(Value::as_str) {
        Some("egocentric") => Mode::Egocentric,
        Some("allocentric") => Mode::Allocentric,
        Some(other) => return Err(Error::parse("mode", format!("unknown mode {other:?}"))),
        None => return Err(Error::parse("mode", "missing")),
    };
    let target = parse_object(
        "sounding_object",
        obj.get("sounding_object")
            .ok_or_else(|| Error::parse("sounding_object", "missing"))?,
        true,
    )?;

    let (ref_key, facing_key) = if obj.contains_key("stand_by_object") {
        ("stand_by_object", "facing_direction")
    } else {
        ("reference_object", "facing_object")
    };
    let reference = match obj.get(ref_key) {
        Some(v) if !v.is_null() => {
            let entry = parse_object(ref_key, v, false)?;
            // An explicit "camera" reference is the egocentric sentinel.
            Some(entry)
        }
        _ => None,
    };
    let facing = match obj.get(facing_key) {
        Some(v) if !v.is_null() && v.as_object().map_or(true, |m| !m.is_empty()) => {
            Some(parse_object(facing_key, v, false)?)
        }
        _ => None,
    };

    let known = [
        "event",
        "start_time",
        "end_time",
        "mode",
        "sounding_object",
        "stand_by_object",
        "facing_direction",
        "reference_object",
        "facing_object",
    ];
    for key in obj.keys() {
        if !known.contains(&key.as_str()) {
            log::warn!("descriptor field {key:?} is not recognized and was ignored");
        }
    }

    let descriptor = SnapshotDescriptor {
        event,
        span: (start, end),
        mode,
        // Egocentric descriptors may omit the reference entirely; that means
        // "relative to the camera".
        reference: reference.or_else(|| {
            (mode == Mode::Egocentric).then(ObjectEntry::camera)
        }),
        facing,
        target,
    };
    descriptor.validate()?;
    Ok(descriptor)
}

fn clock_string(t: f64) -> String {
    let minutes = (t / 60.0).floor();
    let seconds = t - minutes * 60.0;
    if (seconds - seconds.round()).abs() < 1e-9 {
        format!("{}:{:02}", minutes as i64, seconds.round() as i64)
    } else {
        format!("{}:{:06.3}", minutes as i64, seconds)
    }
}

fn object_json(entry: &ObjectEntry) -> Value {
    let mut map = serde_json::Map::new();
    if let Some(name) = &entry.name {
        map.insert("object_name".into(), Value::String(name.clone()));
    }
    map.insert("description".into(), Value::String(entry.description.clone()));
    map.insert("is_static".into(), Value::Bool(entry.is_static));
    let mut frames = serde_json::Map::new();
    for kf in &entry.keyframes {
        frames.insert(
            clock_string(kf.t),
            serde_json::json!({ "distance": kf.r, "direction": kf.theta }),
        );
    }
    map.insert("key_frames".into(), Value::Object(frames));
    Value::Object(map)
}

/// Serialize a normalized descriptor in the keyframe-carrying schema;
/// `parse_snapshot` on the output reproduces the descriptor.
pub fn snapshot_to_json(sd: &SnapshotDescriptor) -> Value {
    let mut map = serde_json::Map::new();
    map.insert("event".into(), Value::String(sd.event.clone()));
    map.insert("start_time".into(), Value::String(clock_string(sd.span.0)));
    map.insert("end_time".into(), Value::String(clock_string(sd.span.1)));
    map.insert(
        "mode".into(),
        Value::String(
            match sd.mode {
                Mode::Egocentric => "egocentric",
                Mode::Allocentric => "allocentric",
            }
            .into(),
        ),
    );
    map.insert("sounding_object".into(), object_json(&sd.target));
    if let Some(reference) = &sd.reference {
        map.insert("reference_object".into(), object_json(reference));
    }
    if let Some(facing) = &sd.facing {
        map.insert("facing_object".into(), object_json(facing));
    }
    Value::Object(map)
}

/// Horizontal bearing of a mask centroid under a pinhole camera.
pub fn centroid_to_observation(
    cx: f64,
    image_width: f64,
    hfov_deg: f64,
    depth: f64,
    t: f64,
) -> EgoObservation {
    let half = image_width / 2.0;
    let tan_half = (hfov_deg.to_radians() / 2.0).tan();
    let theta = ((cx - half) / half * tan_half).atan().to_degrees();
    EgoObservation::new(t, theta, depth)
}

/// One segmentation-track record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegObservation {
    pub t: f64,
    pub theta_deg: f64,
    pub r_m: f64,
    pub confidence: f64,
}

/// Per-role segmentation track with its sampling frame count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegTrackFile {
    pub role: Role,
    pub observations: Vec<SegObservation>,
    pub frame_count: usize,
}

pub const DEFAULT_FRAME_COUNT: usize = 128;

impl SegTrackFile {
    pub fn new(role: Role, observations: Vec<SegObservation>) -> Result<Self> {
        for pair in observations.windows(2) {
            if pair[1].t < pair[0].t {
                return Err(Error::parse(
                    "t",
                    format!("timestamps must be non-decreasing ({} after {})", pair[1].t, pair[0].t),
                ));
            }
        }
        Ok(SegTrackFile {
            role,
            observations,
            frame_count: DEFAULT_FRAME_COUNT,
        })
    }

    /// CSV records `role,t,theta_deg,r_m,confidence`; may hold several roles.
    pub fn parse_csv(text: &str) -> Result<Vec<SegTrackFile>> {
        let mut per_role: Vec<(Role, Vec<SegObservation>)> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("role,") || line.starts_with('#') {
                continue;
            }
            let path = format!("line {}", idx + 1);
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::parse(&path, format!("expected 5 fields, got {}", fields.len())));
            }
            let role: Role = fields[0]
                .parse()
                .map_err(|e: String| Error::parse(&path, e))?;
            let mut nums = [0.0f64; 4];
            for (slot, raw) in nums.iter_mut().zip(&fields[1..]) {
                *slot = raw
                    .parse()
                    .map_err(|_| Error::parse(&path, format!("bad number {raw:?}")))?;
            }
            let obs = SegObservation {
                t: nums[0],
                theta_deg: nums[1],
                r_m: nums[2],
                confidence: nums[3],
            };
            if !(0.0..=1.0).contains(&obs.confidence) {
                return Err(Error::parse(&path, format!("confidence {} out of [0,1]", obs.confidence)));
            }
            match per_role.iter_mut().find(|(r, _)| *r == role) {
                Some((_, list)) => list.push(obs),
                None => per_role.push((role, vec![obs])),
            }
        }
        per_role
            .into_iter()
            .map(|(role, observations)| SegTrackFile::new(role, observations))
            .collect()
    }

    pub fn to_csv(files: &[SegTrackFile]) -> String {
        let mut out = String::from("role,t,theta_deg,r_m,confidence\n");
        for file in files {
            for o in &file.observations {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    file.role, o.t, o.theta_deg, o.r_m, o.confidence
                ));
            }
        }
        out
    }
}

/// Confidence gates per role; sounding targets tolerate lower-confidence
/// masks than the static anchors.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SegThresholds {
    pub target: f64,
    pub anchor: f64,
}

impl Default for SegThresholds {
    fn default() -> Self {
        SegThresholds {
            target: 0.5,
            anchor: 0.6,
        }
    }
}

/// Keep observations at or above the role's confidence gate; order preserved.
pub fn filter_seg_confidence(
    observations: &[SegObservation],
    role: Role,
    thresholds: &SegThresholds,
) -> Vec<SegObservation> {
    let gate = match role {
        Role::Target => thresholds.target,
        Role::Reference | Role::Facing => thresholds.anchor,
    };
    observations
        .iter()
        .copied()
        .filter(|o| o.confidence >= gate)
        .collect()
}

/// Spatial-audio track entry; range is absent when uncalibrated or when the
/// window's coherence was unusable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudioTrackPoint {
    pub t: f64,
    pub theta_deg: f64,
    pub r_m: Option<f64>,
}

/// Windowed direction (and optionally range) estimation over a whole clip.
/// Windows without a usable estimate become gaps, never zero entries.
pub fn build_audio_track(
    clip: &AudioClip,
    array: &MicArray,
    calib: Option<&RangeCalibration>,
    hop: f64,
) -> Result<Vec<AudioTrackPoint>> {
    if hop <= 0.0 {
        return Err(Error::InvalidClip(format!("non-positive hop {hop}")));
    }
    let grid = DoaGrid::default();
    let doa_cfg = DoaConfig::default();
    let welch_cfg = WelchConfig::default();
    let total = clip.duration();
    let mut points = Vec::new();
    let mut start = 0.0;
    while start + hop <= total + 1e-9 {
        let duration = hop.min(total - start);
        let estimate = srp_phat(clip, (start, duration), array, &grid, &doa_cfg)?;
        let kept = discard_forward(estimate.into_iter().collect(), FORWARD_BAND_DEG);
        if let Some(est) = kept.into_iter().next() {
            let r_m = calib.and_then(|cal| {
                estimate_cdr(clip, (start, duration), array, &welch_cfg)
                    .ok()
                    .and_then(|frame| distance_from_cdr(frame.cdr, cal))
            });
            points.push(AudioTrackPoint {
                t: est.t,
                theta_deg: est.phi_hat,
                r_m,
            });
        }
        start += hop;
    }
    Ok(points)
}

/// The three egocentric sources for one question, ready for fusion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackBundle {
    pub sd: SnapshotDescriptor,
    pub seg: Vec<SegTrackFile>,
    pub audio: Vec<AudioTrackPoint>,
}

impl TrackBundle {
    pub fn new(
        sd: SnapshotDescriptor,
        seg: Vec<SegTrackFile>,
        audio: Vec<AudioTrackPoint>,
    ) -> Result<Self> {
        if sd.mode == Mode::Allocentric {
            for role in [Role::Reference, Role::Facing] {
                let in_seg = seg.iter().any(|s| s.role == role);
                let in_sd = match role {
                    Role::Reference => sd.reference.is_some(),
                    Role::Facing => sd.facing.is_some(),
                    Role::Target => true,
                };
                if !in_seg && !in_sd {
                    return Err(Error::parse(
                        "mode",
                        format!("allocentric bundle lacks any {role} track"),
                    ));
                }
            }
        }
        Ok(TrackBundle { sd, seg, audio })
    }

    pub fn seg_for(&self, role: Role) -> Option<&SegTrackFile> {
        self.seg.iter().find(|s| s.role == role)
    }
}

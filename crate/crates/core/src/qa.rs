//! Question resolution against a built map, and the benchmark's question
//! templates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::GlobalMap;
use crate::geometry::{
    allocentric_observation, global_to_ego, horizontal_distance, quantize_quadrant,
    quantize_simple, AlloFrame, CameraTrajectory, GlobalPoint,
};
use crate::tracks::Mode;

/// The six question families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    EgoDirSimple,
    EgoDirHard,
    EgoDist,
    AlloDirSimple,
    AlloDirHard,
    AlloDist,
}

impl QuestionKind {
    pub fn is_allocentric(self) -> bool {
        matches!(
            self,
            QuestionKind::AlloDirSimple | QuestionKind::AlloDirHard | QuestionKind::AlloDist
        )
    }

    pub fn is_direction(self) -> bool {
        !matches!(self, QuestionKind::EgoDist | QuestionKind::AlloDist)
    }
}

/// One labeled multiple-choice option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub letter: String,
    pub text: String,
}

/// One benchmark question record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub kind: QuestionKind,
    pub event: String,
    /// Overrides the descriptor span when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<Choice>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facing: Option<String>,
}

impl Question {
    pub fn validate(&self) -> Result<()> {
        if self.kind.is_allocentric() && self.reference.is_none() {
            return Err(Error::ModeViolation(format!(
                "question {} is allocentric but names no reference object",
                self.id
            )));
        }
        if let Some((s, e)) = self.span {
            if !(s < e) {
                return Err(Error::parse("span", format!("start {s} must precede end {e}")));
            }
        }
        Ok(())
    }
}

/// A resolved answer: a choice label or a distance, never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meters: Option<f64>,
    pub eval_time: f64,
}

/// Answer a question from the map: egocentric kinds go through the camera
/// pose at the evaluation time; allocentric kinds through the anchor frame.
/// The evaluation time is the midpoint of the grounded span.
pub fn resolve(map: &GlobalMap, q: &Question, traj: &CameraTrajectory) -> Result<Answer> {
    q.validate()?;
    if q.kind.is_allocentric() && map.mode != Mode::Allocentric {
        return Err(Error::ModeViolation(format!(
            "question {} is allocentric but the map is egocentric",
            q.id
        )));
    }
    let span = q.span.unwrap_or(map.span);
    let t_star = 0.5 * (span.0 + span.1);
    let target = map.target.position_at(t_star).ok_or_else(|| {
        Error::Unanswerable(format!("no target trajectory at t = {t_star:.2}"))
    })?;

    let (label, meters) = if q.kind.is_allocentric() {
        let reference = map
            .reference
            .ok_or_else(|| Error::ModeViolation("map lacks a reference anchor".into()))?;
        match q.kind {
            QuestionKind::AlloDist => {
                (None, Some(horizontal_distance(&target, &reference.position)))
            }
            _ => {
                let facing = map
                    .facing
                    .ok_or_else(|| Error::ModeViolation("map lacks a facing anchor".into()))?;
                let frame = AlloFrame::new(reference.position, facing.position)?;
                if horizontal_distance(&target, &reference.position) <= 1e-9 {
                    return Err(Error::Unanswerable(
                        "target coincides with the reference anchor; direction undefined".into(),
                    ));
                }
                let (theta, _r) = allocentric_observation(&target, &frame)?;
                (Some(direction_label(q.kind, theta)), None)
            }
        }
    } else {
        let pose = traj.interpolate(t_star);
        match q.kind {
            QuestionKind::EgoDist => {
                let camera = GlobalPoint::new(pose.position.x, pose.position.y);
                (None, Some(horizontal_distance(&target, &camera)))
            }
            _ => {
                let obs = global_to_ego(&target, &pose)?;
                (Some(direction_label(q.kind, obs.theta)), None)
            }
        }
    };
    Ok(Answer {
        id: q.id.clone(),
        label,
        meters,
        eval_time: t_star,
    })
}

fn direction_label(kind: QuestionKind, theta: f64) -> String {
    match kind {
        QuestionKind::EgoDirSimple | QuestionKind::AlloDirSimple => {
            quantize_simple(theta).as_str().to_owned()
        }
        _ => quantize_quadrant(theta).as_str().to_owned(),
    }
}

/// Placeholder values for template rendering.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TemplateMeta {
    pub sound_event: Option<String>,
    pub speech_topic: Option<String>,
    pub reference: Option<String>,
    pub facing: Option<String>,
}

const EGO_DIR_SIMPLE_SOUND: &str = "Imagine you are the camera wearer, when the {sound_event} sound comes up, relative to where you are facing, where is the sound source: left, right, or back? If the object is generally to your left and facing it requires turning less than 120 degrees left, choose 'left'. If the object is generally to your right and facing it requires turning less than 120 degrees right, choose 'right'. If the object is generally behind you and facing it requires turning 120 degrees or more, choose 'back'.";
const EGO_DIR_SIMPLE_SPEECH: &str = "Imagine you are the camera wearer, when the speech topic {speech_topic} comes up, relative to where you are facing, where is the other person : left, right, or back? If the object is generally to your left and facing it requires turning less than 120 degrees left, choose 'left'. If the object is generally to your right and facing it requires turning less than 120 degrees right, choose 'right'. If the object is generally behind you and facing it requires turning 120 degrees or more, choose 'back'.";
const EGO_DIR_HARD_SOUND: &str = "Imagine you are the camera wearer, when the {sound_event} sound comes up, relative to where you are facing, where is the sound source: front-left, front-right, back-left, or back-right? The directions refer to the quadrants of a Cartesian plane (if you are standing at the origin and facing along the positive y-axis). Consider the center point location of the object as the its location.";
const EGO_DIR_HARD_SPEECH: &str = "Imagine you are the camera wearer, when the speech topic {speech_topic} comes up, relative to where you are facing, where is the other person: front-left, front-right, back-left, or back-right? The directions refer to the quadrants of a Cartesian plane (if you are standing at the origin and facing along the positive y-axis). Consider the center point location of the object as the its location.";
const EGO_DIST_SOUND: &str = "Imagine you are the camera wearer, when the {sound_event} sound comes up, relative to where you are standing, what is the distance between you and the sound source in meters? Consider the center point location of the object as the its location. Calculate the Euclidean distance between the two points in the horizontal plane. Answer in numeric format.";
const EGO_DIST_SPEECH: &str = "Imagine you are the camera wearer, when the speech topic: {speech_topic} comes up, relative to where you are standing, what is the distance between you and the other person in meters? Consider the center point location of the object as the its location. Calculate the Euclidean distance between the two points in the horizontal plane. Answer in numeric format.";
const ALLO_DIR_SIMPLE_SOUND: &str = "Imagine you are a robot standing by the {reference} and facing the {facing}, when the {sound_event} sound comes up, relative to where you are facing, where is the sounding object: left, right, or back? If the object is generally to your left and facing it requires turning less than 120 degrees left, choose 'left'. If the object is generally to your right and facing it requires turning less than 120 degrees right, choose 'right'. If the object is generally behind you and facing it requires turning 120 degrees or more, choose 'back'.";
const ALLO_DIR_SIMPLE_SPEECH: &str = "Imagine you are a robot standing by the {reference} and facing the {facing}, when the speech topic: {speech_topic} comes up, relative to where you are facing, where is the speaker: left, right, or back? If the object is generally to your left and facing it requires turning less than 120 degrees left, choose 'left'. If the object is generally to your right and facing it requires turning less than 120 degrees right, choose 'right'. If the object is generally behind you and facing it requires turning 120 degrees or more, choose 'back'.";
const ALLO_DIR_HARD_SOUND: &str = "Imagine you are a robot standing by the {reference} and facing the {facing}, when the {sound_event} sound comes up, relative to where you are facing, where is the sounding object: front-left, front-right, back-left, or back-right? The directions refer to the quadrants of a Cartesian plane (if you are standing at the origin and facing along the positive y-axis). Consider the center point location of the object as the its location.";
const ALLO_DIR_HARD_SPEECH: &str = "Imagine you are a robot standing by the {reference} and facing the {facing}, when the speech topic: {speech_topic} comes up, relative to where you are facing, where is the speaker: front-left, front-right, back-left, or back-right? The directions refer to the quadrants of a Cartesian plane (if you are standing at the origin and facing along the positive y-axis). Consider the center point location of the object as the its location.";
const ALLO_DIST_SOUND: &str = "When the {sound_event} sound is happening, what is the distance between the {reference} and the sounding object in meters? Consider the center point location of the object as the its location. Calculate the Euclidean distance between the two points in the horizontal plane. Answer in numeric format.";
const ALLO_DIST_SPEECH: &str = "When the speech topic: {speech_topic} is mentioned, what is the distance between the {reference} and the speech sound source in meters? Consider the center point location of the object as the its location. Calculate the Euclidean distance between the two points in the horizontal plane. Answer in numeric format.";

fn template_text(kind: QuestionKind, speech: bool) -> &'static str {
    match (kind, speech) {
        (QuestionKind::EgoDirSimple, false) => EGO_DIR_SIMPLE_SOUND,
        (QuestionKind::EgoDirSimple, true) => EGO_DIR_SIMPLE_SPEECH,
        (QuestionKind::EgoDirHard, false) => EGO_DIR_HARD_SOUND,
        (QuestionKind::EgoDirHard, true) => EGO_DIR_HARD_SPEECH,
        (QuestionKind::EgoDist, false) => EGO_DIST_SOUND,
        (QuestionKind::EgoDist, true) => EGO_DIST_SPEECH,
        (QuestionKind::AlloDirSimple, false) => ALLO_DIR_SIMPLE_SOUND,
        (QuestionKind::AlloDirSimple, true) => ALLO_DIR_SIMPLE_SPEECH,
        (QuestionKind::AlloDirHard, false) => ALLO_DIR_HARD_SOUND,
        (QuestionKind::AlloDirHard, true) => ALLO_DIR_HARD_SPEECH,
        (QuestionKind::AlloDist, false) => ALLO_DIST_SOUND,
        (QuestionKind::AlloDist, true) => ALLO_DIST_SPEECH,
    }
}

/// Substitute the template's placeholders; every placeholder the template
/// uses must be supplied.
pub fn render_question(kind: QuestionKind, speech: bool, meta: &TemplateMeta) -> Result<String> {
    let mut text = template_text(kind, speech).to_owned();
    let slots = [
        ("{sound_event}", meta.sound_event.as_deref()),
        ("{speech_topic}", meta.speech_topic.as_deref()),
        ("{reference}", meta.reference.as_deref()),
        ("{facing}", meta.facing.as_deref()),
    ];
    for (slot, value) in slots {
        if text.contains(slot) {
            let value = value.ok_or_else(|| {
                Error::MissingPlaceholder(slot.trim_matches(['{', '}']).to_owned())
            })?;
            text = text.replace(slot, value);
        }
    }
    Ok(text)
}

/// Default options for the two direction families.
pub fn direction_choices(kind: QuestionKind) -> Option<Vec<Choice>> {
    let texts: &[&str] = match kind {
        QuestionKind::EgoDirSimple | QuestionKind::AlloDirSimple => &["left", "right", "back"],
        QuestionKind::EgoDirHard | QuestionKind::AlloDirHard => {
            &["front-left", "front-right", "back-left", "back-right"]
        }
        _ => return None,
    };
    Some(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Choice {
                letter: char::from(b'A' + i as u8).to_string(),
                text: (*t).to_owned(),
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{GlobalTrack, Source, StaticAnchor, TrackPoint};
    use crate::geometry::{CameraPose, FrameConfig};

    fn map_with_target(x: f64, y: f64, mode: Mode) -> GlobalMap {
        GlobalMap {
            mode,
            span: (0.0, 2.0),
            target: GlobalTrack {
                points: vec![TrackPoint {
                    t: 1.0,
                    p: GlobalPoint::new(x, y),
                    source: Source::Smoothed,
                    confidence: 1.0,
                    ego_theta: None,
                    camera_xy: None,
                }],
            },
            reference: Some(StaticAnchor {
                position: GlobalPoint::new(0.0, 0.0),
                support: 3,
                source: Source::Sd,
            }),
            facing: Some(StaticAnchor {
                position: GlobalPoint::new(0.0, 1.0),
                support: 3,
                source: Source::Sd,
            }),
        }
    }

    fn origin_traj() -> CameraTrajectory {
        let frame = FrameConfig::y_forward();
        CameraTrajectory::new(vec![
            CameraPose::from_heading(0.0, 0.0, 0.0, 0.0, frame),
            CameraPose::from_heading(10.0, 0.0, 0.0, 0.0, frame),
        ])
        .unwrap()
    }

    fn question(kind: QuestionKind) -> Question {
        Question {
            id: "q1".into(),
            kind,
            event: "a dog barking".into(),
            span: None,
            options: direction_choices(kind),
            reference: kind.is_allocentric().then(|| "sofa".into()),
            facing: kind.is_allocentric().then(|| "tv".into()),
        }
    }

    #[test]
    fn ego_dir_hard_130_is_back_right() {
        // target bearing 130 degrees from a +y-facing camera at the origin
        let th = 130f64.to_radians();
        let map = map_with_target(th.sin() * 2.0, th.cos() * 2.0, Mode::Egocentric);
        let a = resolve(&map, &question(QuestionKind::EgoDirHard), &origin_traj()).unwrap();
        assert_eq!(a.label.as_deref(), Some("back-right"));
        assert_eq!(a.eval_time, 1.0);
    }

    #[test]
    fn ego_dist_euclidean() {
        let map = map_with_target(3.0, 4.0, Mode::Egocentric);
        let a = resolve(&map, &question(QuestionKind::EgoDist), &origin_traj()).unwrap();
        assert!((a.meters.unwrap() - 5.0).abs() < 1e-12);
        assert!(a.label.is_none());
    }

    #[test]
    fn allo_dist_from_reference() {
        let map = map_with_target(0.0, 3.0, Mode::Allocentric);
        let a = resolve(&map, &question(QuestionKind::AlloDist), &origin_traj()).unwrap();
        assert!((a.meters.unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn allo_dist_coincident_is_zero() {
        let map = map_with_target(0.0, 0.0, Mode::Allocentric);
        let a = resolve(&map, &question(QuestionKind::AlloDist), &origin_traj()).unwrap();
        assert_eq!(a.meters, Some(0.0));
    }

    #[test]
    fn allo_dir_uses_anchor_frame() {
        // Anchors put the frame's +y along world +y; a target due east of
        // the reference is "right".
        let map = map_with_target(2.0, 0.0, Mode::Allocentric);
        let a = resolve(&map, &question(QuestionKind::AlloDirSimple), &origin_traj()).unwrap();
        assert_eq!(a.label.as_deref(), Some("right"));
    }

    #[test]
    fn mode_mismatch_is_error() {
        let map = map_with_target(1.0, 1.0, Mode::Egocentric);
        assert!(matches!(
            resolve(&map, &question(QuestionKind::AlloDirHard), &origin_traj()),
            Err(Error::ModeViolation(_))
        ));
    }

    #[test]
    fn question_span_overrides_map_span() {
        let mut map = map_with_target(1.0, 1.0, Mode::Egocentric);
        map.target.points.push(TrackPoint {
            t: 9.0,
            p: GlobalPoint::new(-1.0, 1.0),
            source: Source::Smoothed,
            confidence: 1.0,
            ego_theta: None,
            camera_xy: None,
        });
        let mut q = question(QuestionKind::EgoDirSimple);
        q.span = Some((8.0, 10.0));
        let a = resolve(&map, &q, &origin_traj()).unwrap();
        assert_eq!(a.eval_time, 9.0);
        assert_eq!(a.label.as_deref(), Some("left"));
    }

    #[test]
    fn empty_track_unanswerable() {
        let mut map = map_with_target(1.0, 1.0, Mode::Egocentric);
        map.target.points.clear();
        assert!(matches!(
            resolve(&map, &question(QuestionKind::EgoDist), &origin_traj()),
            Err(Error::Unanswerable(_))
        ));
    }

    #[test]
    fn resolve_is_pure() {
        let map = map_with_target(1.0, 1.0, Mode::Allocentric);
        let q = question(QuestionKind::AlloDirHard);
        let a = resolve(&map, &q, &origin_traj()).unwrap();
        let b = resolve(&map, &q, &origin_traj()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scaling_map_scales_distance_keeps_direction() {
        let map = map_with_target(3.0, 4.0, Mode::Egocentric);
        let mut scaled = map.clone();
        for p in &mut scaled.target.points {
            p.p = GlobalPoint::new(p.p.x * 2.5, p.p.y * 2.5);
        }
        let traj = origin_traj();
        let d1 = resolve(&map, &question(QuestionKind::EgoDist), &traj).unwrap();
        let d2 = resolve(&scaled, &question(QuestionKind::EgoDist), &traj).unwrap();
        assert!((d2.meters.unwrap() - 2.5 * d1.meters.unwrap()).abs() < 1e-9);
        let l1 = resolve(&map, &question(QuestionKind::EgoDirHard), &traj).unwrap();
        let l2 = resolve(&scaled, &question(QuestionKind::EgoDirHard), &traj).unwrap();
        assert_eq!(l1.label, l2.label);
    }

    #[test]
    fn templates_render() {
        let meta = TemplateMeta {
            sound_event: Some("blender".into()),
            speech_topic: Some("the weekend trip".into()),
            reference: Some("grey sofa".into()),
            facing: Some("wall-mounted tv".into()),
        };
        let t = render_question(QuestionKind::EgoDirSimple, true, &meta).unwrap();
        assert!(t.contains("where is the other person : left, right, or back?"));
        let t = render_question(QuestionKind::AlloDirHard, false, &meta).unwrap();
        assert!(t.contains("quadrants of a Cartesian plane"));
        assert!(t.contains("grey sofa"));
        let t = render_question(QuestionKind::EgoDirSimple, false, &meta).unwrap();
        assert!(t.contains("when the blender sound comes up"));
        assert!(!t.contains('{'));
    }

    #[test]
    fn missing_placeholder_is_named() {
        let meta = TemplateMeta {
            sound_event: Some("blender".into()),
            ..Default::default()
        };
        let err = render_question(QuestionKind::AlloDirSimple, false, &meta).unwrap_err();
        assert!(matches!(err, Error::MissingPlaceholder(ref p) if p == "reference"));
    }

    #[test]
    fn all_twelve_templates_resolve_placeholders() {
        let meta = TemplateMeta {
            sound_event: Some("a".into()),
            speech_topic: Some("b".into()),
            reference: Some("c".into()),
            facing: Some("d".into()),
        };
        for kind in [
            QuestionKind::EgoDirSimple,
            QuestionKind::EgoDirHard,
            QuestionKind::EgoDist,
            QuestionKind::AlloDirSimple,
            QuestionKind::AlloDirHard,
            QuestionKind::AlloDist,
        ] {
            for speech in [false, true] {
                let t = render_question(kind, speech, &meta).unwrap();
                assert!(!t.contains('{') && !t.contains('}'), "{kind:?} {speech}");
            }
        }
    }
}

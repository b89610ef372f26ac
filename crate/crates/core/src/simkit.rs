//! Synthetic acoustic-scene oracle: renders multi-channel audio for known
//! source geometry and emits every fixture format the pipeline consumes,
//! with ground-truth answers computed from the true geometry.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, MicArray};
use crate::error::{Error, Result};
use crate::fusion::{GlobalMap, GlobalTrack, Source, StaticAnchor, TrackPoint};
use crate::geometry::{
    global_to_ego, CameraPose, CameraTrajectory, EgoObservation, FrameConfig, GlobalPoint,
};
use crate::qa::{direction_choices, resolve, Answer, Question, QuestionKind};
use crate::tracks::{
    snapshot_to_json, Mode, ObjectEntry, Role, SegObservation, SegTrackFile, SnapshotDescriptor,
};

/// A camera waypoint: planar position plus heading (degrees clockwise from
/// world +y).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraWaypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
}

/// A source waypoint in world coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
}

/// What the source emits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SignalSpec {
    /// Seeded white Gaussian noise (broadband; best case for correlation).
    Noise,
    /// Pure tone at `freq` Hz.
    Tone { freq: f64 },
}

/// One sound source: a world-frame path and a signal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    pub path: Vec<PathPoint>,
    pub signal: SignalSpec,
    /// Linear gain applied before propagation loss.
    pub level: f64,
}

/// A named static scene object (world frame).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

/// Full scenario description; deterministic given `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub sample_rate: u32,
    pub duration: f64,
    pub seed: u64,
    /// Std-dev of independent per-channel noise (the diffuse stand-in).
    pub diffuse_sigma: f64,
    pub camera: Vec<CameraWaypoint>,
    pub sources: Vec<SourceSpec>,
    /// Static anchor objects; both present => allocentric fixtures.
    #[serde(default)]
    pub reference: Option<SceneObject>,
    #[serde(default)]
    pub facing: Option<SceneObject>,
    /// Event span for the descriptor and questions; defaults to the clip.
    #[serde(default)]
    pub span: Option<(f64, f64)>,
    /// Camera horizontal field of view; segmentation only sees inside it.
    #[serde(default = "default_fov")]
    pub fov_deg: f64,
    /// Fraction of visible segmentation frames randomly dropped.
    #[serde(default)]
    pub seg_dropout: f64,
    /// Std-dev of angular (degrees) and range (meters) segmentation noise.
    #[serde(default)]
    pub seg_noise: (f64, f64),
    /// Seconds between descriptor keyframes.
    #[serde(default = "default_sd_interval")]
    pub sd_interval: f64,
}

fn default_fov() -> f64 {
    110.0
}

fn default_sd_interval() -> f64 {
    2.0
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.duration <= 0.0 || self.sample_rate == 0 {
            return Err(Error::InvalidScenario(
                "duration and sample rate must be positive".into(),
            ));
        }
        if self.camera.len() < 2 {
            return Err(Error::InvalidScenario(
                "camera path needs at least two waypoints".into(),
            ));
        }
        if self.sources.is_empty() {
            return Err(Error::InvalidScenario("no sources".into()));
        }
        for src in &self.sources {
            if src.path.is_empty() {
                return Err(Error::InvalidScenario(format!(
                    "source {:?} has an empty path",
                    src.name
                )));
            }
        }
        if let Some((s, e)) = self.span {
            if !(s < e) {
                return Err(Error::InvalidScenario(format!("bad span ({s}, {e})")));
            }
        }
        Ok(())
    }

    pub fn trajectory(&self) -> Result<CameraTrajectory> {
        let frame = crate::geometry::FrameConfig::y_forward();
        CameraTrajectory::new(
            self.camera
                .iter()
                .map(|w| CameraPose::from_heading(w.t, w.x, w.y, w.heading_deg, frame))
                .collect(),
        )
    }

    pub fn mode(&self) -> Mode {
        if self.reference.is_some() && self.facing.is_some() {
            Mode::Allocentric
        } else {
            Mode::Egocentric
        }
    }

    pub fn event_span(&self) -> (f64, f64) {
        self.span.unwrap_or((0.0, self.duration))
    }
}

/// Piecewise-linear world position of a source path at time `t` (clamped).
pub fn path_position(path: &[PathPoint], t: f64) -> Vector3<f64> {
    let first = &path[0];
    if t <= first.t || path.len() == 1 {
        return Vector3::new(first.x, first.y, first.z);
    }
    let last = &path[path.len() - 1];
    if t >= last.t {
        return Vector3::new(last.x, last.y, last.z);
    }
    let hi = path.partition_point(|p| p.t < t);
    let (a, b) = (&path[hi - 1], &path[hi]);
    let w = (t - a.t) / (b.t - a.t).max(1e-12);
    Vector3::new(
        a.x + w * (b.x - a.x),
        a.y + w * (b.y - a.y),
        a.z + w * (b.z - a.z),
    )
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller from two open-interval uniforms.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn render_signal(spec: &SignalSpec, n: usize, fs: f64, seed: u64) -> Vec<f64> {
    match spec {
        SignalSpec::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| 0.3 * gaussian(&mut rng)).collect()
        }
        SignalSpec::Tone { freq } => (0..n)
            .map(|i| 0.3 * (2.0 * PI * freq * i as f64 / fs).sin())
            .collect(),
    }
}

/// Windowed-sinc fractional read of `signal` at real index `pos`.
fn frac_read(signal: &[f64], pos: f64) -> f64 {
    const HALF: i64 = 15; // 31-tap kernel
    let center = pos.floor() as i64;
    let frac = pos - center as f64;
    let mut acc = 0.0;
    for k in -HALF..=HALF {
        let idx = center + k;
        if idx < 0 || idx as usize >= signal.len() {
            continue;
        }
        let x = k as f64 - frac;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            (PI * x).sin() / (PI * x)
        };
        // Hann window over the kernel support.
        let w = 0.5 * (1.0 + (PI * x / (HALF as f64 + 1.0)).cos());
        acc += signal[idx as usize] * sinc * w;
    }
    acc
}

const DELAY_BLOCK: usize = 256;
const MIN_RANGE: f64 = 0.1;

/// Render one moving source into a multi-channel clip: per-mic propagation
/// delay (band-limited fractional interpolation) and 1/r amplitude, plus
/// seeded independent per-channel noise. `path` is in the device frame.
pub fn simulate_source(
    array: &MicArray,
    path: &[(f64, Vector3<f64>)],
    signal: &SignalSpec,
    sample_rate: u32,
    level: f64,
    noise_sigma: f64,
    seed: u64,
    duration: f64,
) -> Result<AudioClip> {
    if path.is_empty() {
        return Err(Error::InvalidScenario("empty source path".into()));
    }
    let fs = sample_rate as f64;
    let n = (duration * fs).round() as usize;
    let aperture = array.aperture();
    let path_pts: Vec<PathPoint> = path
        .iter()
        .map(|(t, p)| PathPoint {
            t: *t,
            x: p.x,
            y: p.y,
            z: p.z,
        })
        .collect();
    // Reject positions inside (or touching) the array.
    for (t, p) in path {
        for m in &array.positions {
            if (p - m).norm() <= aperture.max(MIN_RANGE) {
                return Err(Error::InvalidScenario(format!(
                    "source at t={t} is inside the array ({:.2} m from a microphone)",
                    (p - m).norm()
                )));
            }
        }
    }

    // Pre-pad so the earliest sample still has history to read from.
    let max_delay_s = path
        .iter()
        .flat_map(|(_, p)| array.positions.iter().map(move |m| (p - m).norm()))
        .fold(0.0f64, f64::max)
        / array.c;
    let margin = (max_delay_s * fs).ceil() as usize + 32;
    let base = render_signal(signal, n + margin, fs, seed);

    let mut channels = Vec::with_capacity(array.len());
    for (ch, mic) in array.positions.iter().enumerate() {
        let mut out = vec![0.0f64; n];
        let mut block_start = 0usize;
        while block_start < n {
            let block_end = (block_start + DELAY_BLOCK).min(n);
            let t0 = block_start as f64 / fs;
            let t1 = block_end as f64 / fs;
            let p0 = path_position(&path_pts, t0);
            let p1 = path_position(&path_pts, t1);
            let r0 = (p0 - mic).norm();
            let r1 = (p1 - mic).norm();
            let d0 = r0 / array.c * fs;
            let d1 = r1 / array.c * fs;
            for i in block_start..block_end {
                let w = (i - block_start) as f64 / (block_end - block_start) as f64;
                let delay = d0 + w * (d1 - d0);
                let r = r0 + w * (r1 - r0);
                let gain = level / r.max(MIN_RANGE);
                out[i] = gain * frac_read(&base, i as f64 + margin as f64 - delay);
            }
            block_start = block_end;
        }
        if noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e3779b9 + ch as u64));
            for v in &mut out {
                *v += noise_sigma * gaussian(&mut rng);
            }
        }
        channels.push(out);
    }
    AudioClip::new(sample_rate, channels)
}

/// True egocentric observation of a world point from the interpolated pose.
fn true_ego(traj: &CameraTrajectory, world: &GlobalPoint, t: f64) -> Result<EgoObservation> {
    global_to_ego(world, &traj.interpolate(t))
}

/// Everything a pipeline run consumes, all derived from one scenario.
#[derive(Debug, Clone)]
pub struct FixtureBundle {
    pub audio: AudioClip,
    pub trajectory: CameraTrajectory,
    pub descriptor: SnapshotDescriptor,
    pub seg: Vec<SegTrackFile>,
    pub gt_map: GlobalMap,
    pub questions: Vec<Question>,
    pub answers: Vec<Answer>,
}

const GT_SAMPLE_PERIOD: f64 = 0.1;
const SEG_FRAMES: usize = 128;

fn seg_track_for(
    role: Role,
    world_at: impl Fn(f64) -> GlobalPoint,
    scenario: &Scenario,
    traj: &CameraTrajectory,
    rng: &mut ChaCha8Rng,
) -> Result<SegTrackFile> {
    let mut obs = Vec::new();
    for i in 0..SEG_FRAMES {
        let t = scenario.duration * (i as f64 + 0.5) / SEG_FRAMES as f64;
        let Ok(ego) = true_ego(traj, &world_at(t), t) else {
            continue;
        };
        // A camera can only segment what it sees.
        if ego.theta.abs() > scenario.fov_deg / 2.0 {
            continue;
        }
        if scenario.seg_dropout > 0.0 && rng.gen_range(0.0..1.0) < scenario.seg_dropout {
            continue;
        }
        let (ang_sigma, r_sigma) = scenario.seg_noise;
        let theta = ego.theta + if ang_sigma > 0.0 { ang_sigma * gaussian(rng) } else { 0.0 };
        let r = (ego.r + if r_sigma > 0.0 { r_sigma * gaussian(rng) } else { 0.0 }).max(0.05);
        obs.push(SegObservation {
            t,
            theta_deg: theta,
            r_m: r,
            confidence: 1.0,
        });
    }
    SegTrackFile::new(role, obs)
}

/// Generate the full fixture set for a scenario. The first source is the
/// question target; answers come from the ground-truth map via the same
/// resolver the pipeline uses.
pub fn simulate_walkthrough(scenario: &Scenario) -> Result<FixtureBundle> {
    scenario.validate()?;
    let traj = scenario.trajectory()?;
    let fs = scenario.sample_rate;
    let span = scenario.event_span();
    let mode = scenario.mode();

    // Audio: render each source along its device-frame path and mix.
    let array = MicArray::aria();
    let n = (scenario.duration * fs as f64).round() as usize;
    let mut mixed = vec![vec![0.0f64; n]; array.len()];
    for (si, src) in scenario.sources.iter().enumerate() {
        let steps = (scenario.duration / 0.02).ceil() as usize;
        // The trajectory is in the y-forward camera frame; the mic array is
        // in its own frame, so re-express along (right, forward, up).
        let to_array_frame = |dev: Vector3<f64>, cam: FrameConfig| -> Vector3<f64> {
            let (rc, fc) = (cam.right.vector(), cam.forward.vector());
            let uc = rc.cross(&fc);
            let (ra, fa) = (array.frame.right.vector(), array.frame.forward.vector());
            let ua = ra.cross(&fa);
            ra * dev.dot(&rc) + fa * dev.dot(&fc) + ua * dev.dot(&uc)
        };
        let device_path: Vec<(f64, Vector3<f64>)> = (0..=steps)
            .map(|i| {
                let t = scenario.duration * i as f64 / steps as f64;
                let world = path_position(&src.path, t);
                let pose = traj.interpolate(t);
                let dev = pose.orientation.inverse() * (world - pose.position);
                (t, to_array_frame(dev, pose.frame))
            })
            .collect();
        let clip = simulate_source(
            &array,
            &device_path,
            &src.signal,
            fs,
            src.level,
            0.0,
            scenario.seed.wrapping_add(si as u64 * 7919),
            scenario.duration,
        )?;
        for (mix, ch) in mixed.iter_mut().zip(clip.channels()) {
            for (a, b) in mix.iter_mut().zip(ch) {
                *a += b;
            }
        }
    }
    if scenario.diffuse_sigma > 0.0 {
        for (ch, mix) in mixed.iter_mut().enumerate() {
            let mut rng =
                ChaCha8Rng::seed_from_u64(scenario.seed ^ (0xD1FF ^ (ch as u64) << 16));
            for v in mix.iter_mut() {
                *v += scenario.diffuse_sigma * gaussian(&mut rng);
            }
        }
    }
    let audio = AudioClip::new(fs, mixed)?;

    let target_src = &scenario.sources[0];
    let target_at = |t: f64| {
        let p = path_position(&target_src.path, t);
        GlobalPoint::new(p.x, p.y)
    };

    // Segmentation fixtures.
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x5E6);
    let mut seg = vec![seg_track_for(Role::Target, target_at, scenario, &traj, &mut rng)?];
    if let Some(obj) = &scenario.reference {
        let p = GlobalPoint::new(obj.x, obj.y);
        seg.push(seg_track_for(Role::Reference, |_| p, scenario, &traj, &mut rng)?);
    }
    if let Some(obj) = &scenario.facing {
        let p = GlobalPoint::new(obj.x, obj.y);
        seg.push(seg_track_for(Role::Facing, |_| p, scenario, &traj, &mut rng)?);
    }

    // Snapshot descriptor with sparse keyframes (visible frames only).
    let keyframes_for = |world_at: &dyn Fn(f64) -> GlobalPoint| -> Vec<EgoObservation> {
        let mut out = Vec::new();
        let mut t = scenario.sd_interval / 2.0;
        while t < scenario.duration {
            if let Ok(ego) = true_ego(&traj, &world_at(t), t) {
                if ego.theta.abs() <= scenario.fov_deg / 2.0 {
                    out.push(ego);
                }
            }
            t += scenario.sd_interval;
        }
        out
    };
    let object_entry = |name: &str, is_static: bool, kfs: Vec<EgoObservation>| ObjectEntry {
        name: Some(name.to_owned()),
        description: name.to_owned(),
        is_static,
        keyframes: kfs,
    };
    let descriptor = SnapshotDescriptor {
        event: format!("{} sound", target_src.name),
        span,
        mode,
        target: object_entry(&target_src.name, false, keyframes_for(&|t| target_at(t))),
        reference: match &scenario.reference {
            Some(obj) => {
                let p = GlobalPoint::new(obj.x, obj.y);
                Some(object_entry(&obj.name, true, keyframes_for(&|_| p)))
            }
            None => Some(ObjectEntry::camera()),
        },
        facing: scenario.facing.as_ref().map(|obj| {
            let p = GlobalPoint::new(obj.x, obj.y);
            object_entry(&obj.name, true, keyframes_for(&|_| p))
        }),
    };
    descriptor.validate()?;

    // Ground-truth map: the true target path sampled densely plus the true
    // anchors; no estimation anywhere.
    let mut points = Vec::new();
    let mut t = span.0;
    while t <= span.1 + 1e-9 {
        points.push(TrackPoint {
            t,
            p: target_at(t),
            source: Source::Smoothed,
            confidence: 1.0,
            ego_theta: None,
            camera_xy: None,
        });
        t += GT_SAMPLE_PERIOD;
    }
    let anchor = |obj: &SceneObject| StaticAnchor {
        position: GlobalPoint::new(obj.x, obj.y),
        support: 1,
        source: Source::Sd,
    };
    let gt_map = GlobalMap {
        mode,
        span,
        target: GlobalTrack { points },
        reference: scenario.reference.as_ref().map(anchor),
        facing: scenario.facing.as_ref().map(anchor),
    };

    // Questions for every kind the mode supports; answers from ground truth.
    let mut questions = Vec::new();
    let kinds: &[QuestionKind] = match mode {
        Mode::Egocentric => &[
            QuestionKind::EgoDirSimple,
            QuestionKind::EgoDirHard,
            QuestionKind::EgoDist,
        ],
        Mode::Allocentric => &[
            QuestionKind::EgoDirSimple,
            QuestionKind::EgoDirHard,
            QuestionKind::EgoDist,
            QuestionKind::AlloDirSimple,
            QuestionKind::AlloDirHard,
            QuestionKind::AlloDist,
        ],
    };
    for (i, &kind) in kinds.iter().enumerate() {
        questions.push(Question {
            id: format!("q{:02}", i + 1),
            kind,
            event: descriptor.event.clone(),
            span: Some(span),
            options: direction_choices(kind),
            reference: scenario.reference.as_ref().map(|o| o.name.clone()),
            facing: scenario.facing.as_ref().map(|o| o.name.clone()),
        });
    }
    let answers: Vec<Answer> = questions
        .iter()
        .map(|q| resolve(&gt_map, q, &traj))
        .collect::<Result<_>>()?;

    Ok(FixtureBundle {
        audio,
        trajectory: traj,
        descriptor,
        seg,
        gt_map,
        questions,
        answers,
    })
}

impl FixtureBundle {
    /// Write every artifact under `dir` in the formats the pipeline reads.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.audio.write_wav(&dir.join("audio.wav"))?;
        std::fs::write(dir.join("trajectory.csv"), self.trajectory.to_csv())?;
        std::fs::write(
            dir.join("descriptor.json"),
            serde_json::to_string_pretty(&snapshot_to_json(&self.descriptor))?,
        )?;
        std::fs::write(dir.join("seg_tracks.csv"), SegTrackFile::to_csv(&self.seg))?;
        std::fs::write(
            dir.join("gt_map.json"),
            serde_json::to_string_pretty(&self.gt_map)?,
        )?;
        let jsonl = |records: Vec<String>| records.join("\n") + "\n";
        std::fs::write(
            dir.join("questions.jsonl"),
            jsonl(
                self.questions
                    .iter()
                    .map(|q| serde_json::to_string(q))
                    .collect::<std::result::Result<_, _>>()?,
            ),
        )?;
        std::fs::write(
            dir.join("answers.jsonl"),
            jsonl(
                self.answers
                    .iter()
                    .map(|a| serde_json::to_string(a))
                    .collect::<std::result::Result<_, _>>()?,
            ),
        )?;
        Ok(())
    }
}

/// The bundled moving-speaker scenario: the camera stands still near the
/// origin while a speaker circles around it, ending up behind; a table and a
/// TV serve as static anchors.
pub fn moving_speaker_scenario(seed: u64) -> Scenario {
    let duration = 12.0;
    // Speaker circles the camera at 2 m: starts ahead, ends behind-right.
    let steps = 48;
    let path: Vec<PathPoint> = (0..=steps)
        .map(|i| {
            let t = duration * i as f64 / steps as f64;
            // bearing sweeps clockwise from +y, hitting 130 degrees at the
            // event-span midpoint (t = 11 s)
            let bearing = (130.0 / 11.0 * t).to_radians();
            PathPoint {
                t,
                x: 2.0 * bearing.sin(),
                y: 2.0 * bearing.cos(),
                z: 0.0,
            }
        })
        .collect();
    Scenario {
        sample_rate: 48_000,
        duration,
        seed,
        // loud enough that coherence sits clearly below 1 and the
        // coherent-to-diffuse ratio is numerically stable per window
        diffuse_sigma: 0.02,
        camera: vec![
            CameraWaypoint { t: 0.0, x: 0.0, y: 0.0, heading_deg: 0.0 },
            CameraWaypoint { t: duration, x: 0.0, y: 0.0, heading_deg: 0.0 },
        ],
        sources: vec![SourceSpec {
            name: "speaker".into(),
            path,
            signal: SignalSpec::Noise,
            level: 1.0,
        }],
        // both anchors sit inside the camera's field of view so segmentation
        // and descriptor keyframes exist for them
        reference: Some(SceneObject { name: "table".into(), x: -1.2, y: 1.5 }),
        facing: Some(SceneObject { name: "tv".into(), x: -1.5, y: 3.0 }),
        span: Some((10.0, 12.0)),
        fov_deg: 110.0,
        seg_dropout: 0.0,
        seg_noise: (0.5, 0.05),
        sd_interval: 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::doa::{expected_lag, gcc_phat, DoaConfig};
    use crate::geometry::FrameConfig;

    fn two_mic_array(spacing: f64) -> MicArray {
        MicArray::new(
            vec![
                Vector3::new(0.0, spacing / 2.0, 0.0),
                Vector3::new(0.0, -spacing / 2.0, 0.0),
            ],
            FrameConfig::y_forward(),
            343.0,
        )
        .unwrap()
    }

    fn static_path(p: Vector3<f64>) -> Vec<(f64, Vector3<f64>)> {
        vec![(0.0, p)]
    }

    fn broadside_array(spacing: f64) -> MicArray {
        MicArray::new(
            vec![
                Vector3::new(spacing / 2.0, 0.0, 0.0),
                Vector3::new(-spacing / 2.0, 0.0, 0.0),
            ],
            FrameConfig::y_forward(),
            343.0,
        )
        .unwrap()
    }

    #[test]
    fn forward_source_symmetric_delays() {
        // Source on the +y axis is equidistant from mics mirrored across it.
        let array = broadside_array(0.14);
        let clip = simulate_source(
            &array,
            &static_path(Vector3::new(0.0, 3.0, 0.0)),
            &SignalSpec::Noise,
            48_000,
            1.0,
            0.0,
            7,
            0.5,
        )
        .unwrap();
        let corr = gcc_phat(&clip.channels()[0], &clip.channels()[1], 30, &DoaConfig::default())
            .unwrap();
        let peak = corr
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0 as i64
            - 30;
        assert!(peak.abs() <= 1, "lag {peak}");
    }

    #[test]
    fn endfire_lag_matches_geometry() {
        // 0.14 m endfire at 48 kHz: |lag| = 0.14/343*48000 ~ 19.6 samples.
        let array = two_mic_array(0.14);
        let clip = simulate_source(
            &array,
            &static_path(Vector3::new(0.0, 50.0, 0.0)),
            &SignalSpec::Noise,
            48_000,
            1.0,
            0.0,
            9,
            0.5,
        )
        .unwrap();
        let corr = gcc_phat(&clip.channels()[0], &clip.channels()[1], 40, &DoaConfig::default())
            .unwrap();
        let peak = corr
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0 as i64
            - 40;
        let expect = expected_lag((0, 1), 0.0, &array, 48_000);
        assert!((peak - expect).abs() <= 1, "lag {peak}, expected {expect}");
        assert_eq!(expect.abs(), 20);
    }

    #[test]
    fn doubling_range_halves_amplitude() {
        let array = two_mic_array(0.1);
        let near = simulate_source(
            &array,
            &static_path(Vector3::new(0.0, 2.0, 0.0)),
            &SignalSpec::Tone { freq: 1000.0 },
            48_000,
            1.0,
            0.0,
            1,
            0.25,
        )
        .unwrap();
        let far = simulate_source(
            &array,
            &static_path(Vector3::new(0.0, 4.0, 0.0)),
            &SignalSpec::Tone { freq: 1000.0 },
            48_000,
            1.0,
            0.0,
            1,
            0.25,
        )
        .unwrap();
        let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        let ratio = rms(&near.channels()[0][2000..]) / rms(&far.channels()[0][2000..]);
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn source_inside_array_rejected() {
        let array = two_mic_array(0.14);
        let err = simulate_source(
            &array,
            &static_path(Vector3::new(0.0, 0.05, 0.0)),
            &SignalSpec::Noise,
            48_000,
            1.0,
            0.0,
            1,
            0.1,
        );
        assert!(matches!(err, Err(Error::InvalidScenario(_))));
    }

    #[test]
    fn deterministic_per_seed() {
        let s = moving_speaker_scenario(42);
        let a = simulate_walkthrough(&s).unwrap();
        let b = simulate_walkthrough(&s).unwrap();
        assert_eq!(a.audio.channels(), b.audio.channels());
        assert_eq!(a.answers, b.answers);
        assert_eq!(SegTrackFile::to_csv(&a.seg), SegTrackFile::to_csv(&b.seg));
        let c = simulate_walkthrough(&moving_speaker_scenario(43)).unwrap();
        assert_ne!(a.audio.channels(), c.audio.channels());
    }

    #[test]
    fn answers_equal_resolver_on_gt_map() {
        let bundle = simulate_walkthrough(&moving_speaker_scenario(5)).unwrap();
        for (q, a) in bundle.questions.iter().zip(&bundle.answers) {
            let again = resolve(&bundle.gt_map, q, &bundle.trajectory).unwrap();
            assert_eq!(a, &again);
        }
    }

    #[test]
    fn stationary_scene_ground_truth_closed_form() {
        // Stationary camera at origin facing +y, stationary source at
        // bearing 45 degrees, 2 m: ego_dir answers follow directly.
        let mut s = moving_speaker_scenario(1);
        let p = PathPoint {
            t: 0.0,
            x: 2.0 * 45f64.to_radians().sin(),
            y: 2.0 * 45f64.to_radians().cos(),
            z: 0.0,
        };
        s.sources[0].path = vec![p];
        s.span = Some((2.0, 4.0));
        let bundle = simulate_walkthrough(&s).unwrap();
        let by_kind = |k: QuestionKind| {
            bundle
                .questions
                .iter()
                .zip(&bundle.answers)
                .find(|(q, _)| q.kind == k)
                .unwrap()
                .1
        };
        assert_eq!(by_kind(QuestionKind::EgoDirSimple).label.as_deref(), Some("right"));
        assert_eq!(by_kind(QuestionKind::EgoDirHard).label.as_deref(), Some("front-right"));
        assert!((by_kind(QuestionKind::EgoDist).meters.unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_noise_seg_matches_ground_truth() {
        let mut s = moving_speaker_scenario(3);
        s.seg_noise = (0.0, 0.0);
        s.seg_dropout = 0.0;
        let bundle = simulate_walkthrough(&s).unwrap();
        let seg = &bundle.seg[0];
        for o in &seg.observations {
            let truth = true_ego(
                &bundle.trajectory,
                &GlobalPoint::new(
                    path_position(&s.sources[0].path, o.t).x,
                    path_position(&s.sources[0].path, o.t).y,
                ),
                o.t,
            )
            .unwrap();
            assert!((o.theta_deg - truth.theta).abs() < 1e-9);
            assert!((o.r_m - truth.r).abs() < 1e-9);
        }
        // and the track never sees behind the camera
        assert!(seg
            .observations
            .iter()
            .all(|o| o.theta_deg.abs() <= s.fov_deg / 2.0));
    }

    #[test]
    fn walkthrough_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = simulate_walkthrough(&moving_speaker_scenario(2)).unwrap();
        bundle.write_to(dir.path()).unwrap();
        for f in [
            "audio.wav",
            "trajectory.csv",
            "descriptor.json",
            "seg_tracks.csv",
            "gt_map.json",
            "questions.jsonl",
            "answers.jsonl",
        ] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
        // descriptor round-trips through the parser
        let text = std::fs::read(dir.path().join("descriptor.json")).unwrap();
        let parsed = crate::tracks::parse_snapshot(&text).unwrap();
        assert_eq!(parsed.span, bundle.descriptor.span);
        assert_eq!(parsed.mode, bundle.descriptor.mode);
    }
}

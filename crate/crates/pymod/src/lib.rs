//! Python bindings for the spatial-audio pipeline. Structured data crosses
//! the boundary as JSON strings (maps, bundles, questions, reports); scalars
//! and small tuples cross natively.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use audiomap::audio::cdr::{
    calibrate_k, distance_from_cdr, estimate_cdr, CalibrationConfig, RangeCalibration, WelchConfig,
};
use audiomap::audio::doa::{srp_phat, DoaConfig, DoaGrid};
use audiomap::audio::{AudioClip, MicArray};
use audiomap::fusion::{build_global_map, GlobalMap, MapConfig};
use audiomap::geometry::{
    self, AlloFrame, CameraPose, CameraTrajectory, EgoObservation, FrameConfig, GlobalPoint,
};
use audiomap::metrics::{evaluate_run, MetricsConfig};
use audiomap::qa::{self, Answer, Question};
use audiomap::simkit::{moving_speaker_scenario, simulate_walkthrough, Scenario};
use audiomap::tracks::{
    self, build_audio_track, SegTrackFile, SnapshotDescriptor, TrackBundle,
};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Azimuth wrapped into [-180, 180).
#[pyfunction]
fn wrap_deg(theta: f64) -> f64 {
    geometry::wrap_deg(theta)
}

/// Three-way direction label for an azimuth: "left", "right", or "back".
#[pyfunction]
fn quantize_simple(theta: f64) -> &'static str {
    geometry::quantize_simple(theta).as_str()
}

/// Quadrant label for an azimuth, e.g. "back-right".
#[pyfunction]
fn quantize_quadrant(theta: f64) -> &'static str {
    geometry::quantize_quadrant(theta).as_str()
}

fn pose_from(x: f64, y: f64, heading_deg: f64) -> CameraPose {
    CameraPose::from_heading(0.0, x, y, heading_deg, FrameConfig::y_forward())
}

/// World (x, y) of an egocentric observation seen from a camera at
/// (cam_x, cam_y) with the given heading.
#[pyfunction]
fn ego_to_global(
    theta_deg: f64,
    r_m: f64,
    cam_x: f64,
    cam_y: f64,
    heading_deg: f64,
) -> PyResult<(f64, f64)> {
    let obs = EgoObservation::new(0.0, theta_deg, r_m);
    let p = geometry::ego_to_global(&obs, &pose_from(cam_x, cam_y, heading_deg)).map_err(err)?;
    Ok((p.x, p.y))
}

/// Egocentric (theta_deg, r_m) of a world point seen from a camera pose.
#[pyfunction]
fn global_to_ego(
    x: f64,
    y: f64,
    cam_x: f64,
    cam_y: f64,
    heading_deg: f64,
) -> PyResult<(f64, f64)> {
    let obs = geometry::global_to_ego(
        &GlobalPoint::new(x, y),
        &pose_from(cam_x, cam_y, heading_deg),
    )
    .map_err(err)?;
    Ok((obs.theta, obs.r))
}

/// (theta_deg, r_m) of a target in the object-centered frame defined by a
/// reference point and the point it faces.
#[pyfunction]
fn allocentric_observation(
    x: f64,
    y: f64,
    ref_x: f64,
    ref_y: f64,
    face_x: f64,
    face_y: f64,
) -> PyResult<(f64, f64)> {
    let frame = AlloFrame::new(
        GlobalPoint::new(ref_x, ref_y),
        GlobalPoint::new(face_x, face_y),
    )
    .map_err(err)?;
    geometry::allocentric_observation(&GlobalPoint::new(x, y), &frame).map_err(err)
}

/// Parse a snapshot-descriptor JSON document (either accepted schema) and
/// return it re-serialized in the rich schema.
#[pyfunction]
fn parse_snapshot(text: &str) -> PyResult<String> {
    let sd = tracks::parse_snapshot(text.as_bytes()).map_err(err)?;
    serde_json::to_string_pretty(&tracks::snapshot_to_json(&sd)).map_err(err)
}

/// Dominant direction of arrival for one multichannel segment, using the
/// built-in glasses array. Returns (azimuth_deg, peak_power), or None for a
/// silent segment.
#[pyfunction]
fn doa_segment(channels: Vec<Vec<f64>>, sample_rate: u32) -> PyResult<Option<(f64, f64)>> {
    let clip = AudioClip::new(sample_rate, channels).map_err(err)?;
    let dur = clip.duration();
    let est = srp_phat(
        &clip,
        (0.0, dur),
        &MicArray::aria(),
        &DoaGrid::default(),
        &DoaConfig::default(),
    )
    .map_err(err)?;
    Ok(est.map(|e| (e.phi_hat, e.peak_power)))
}

/// Coherent-to-diffuse ratio of one multichannel segment.
#[pyfunction]
fn cdr_segment(channels: Vec<Vec<f64>>, sample_rate: u32) -> PyResult<f64> {
    let clip = AudioClip::new(sample_rate, channels).map_err(err)?;
    let dur = clip.duration();
    let frame = estimate_cdr(&clip, (0.0, dur), &MicArray::aria(), &WelchConfig::default())
        .map_err(err)?;
    Ok(frame.cdr)
}

/// Fit the ranging constant K from (distance_m, cdr) samples; returns
/// (k, inlier_count).
#[pyfunction]
fn calibrate_range(samples: Vec<(f64, f64)>) -> PyResult<(f64, usize)> {
    let c = calibrate_k(&samples, &CalibrationConfig::default()).map_err(err)?;
    Ok((c.k, c.inlier_count))
}

/// Distance in meters from a CDR value under a fitted constant K.
#[pyfunction]
fn range_from_cdr(cdr: f64, k: f64) -> Option<f64> {
    distance_from_cdr(
        cdr,
        &RangeCalibration {
            k,
            inlier_count: 0,
        },
    )
}

/// Fraction of distance thresholds satisfied by |pred - gt|.
#[pyfunction]
fn distance_score(pred: f64, gt: f64) -> f64 {
    audiomap::metrics::distance_score(pred, gt, &MetricsConfig::default())
}

/// Intersection-over-union of two time intervals.
#[pyfunction]
fn interval_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    audiomap::metrics::interval_iou(a, b)
}

/// Score a run: questions, predictions, and ground truth as JSONL strings;
/// returns the evaluation report as JSON.
#[pyfunction]
fn evaluate(questions: &str, predictions: &str, ground_truth: &str) -> PyResult<String> {
    let parse_lines = |text: &str| -> PyResult<Vec<serde_json::Value>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(err))
            .collect()
    };
    let qs: Vec<Question> = parse_lines(questions)?
        .into_iter()
        .map(|v| serde_json::from_value(v).map_err(err))
        .collect::<PyResult<_>>()?;
    let ps: Vec<Answer> = parse_lines(predictions)?
        .into_iter()
        .map(|v| serde_json::from_value(v).map_err(err))
        .collect::<PyResult<_>>()?;
    let gs: Vec<Answer> = parse_lines(ground_truth)?
        .into_iter()
        .map(|v| serde_json::from_value(v).map_err(err))
        .collect::<PyResult<_>>()?;
    let report = evaluate_run(&qs, &ps, &gs, &MetricsConfig::default()).map_err(err)?;
    serde_json::to_string_pretty(&report).map_err(err)
}

/// The bundled moving-speaker scenario as a JSON document.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn bundled_scenario(seed: u64) -> PyResult<String> {
    serde_json::to_string_pretty(&moving_speaker_scenario(seed)).map_err(err)
}

/// Run a scenario end to end: simulate, build tracks and the global map,
/// resolve the questions, and score against the simulated ground truth.
/// Returns a JSON object with the map, predictions, answers, and report.
#[pyfunction]
#[pyo3(signature = (scenario_json, known_distance = None))]
fn run_scenario(scenario_json: &str, known_distance: Option<f64>) -> PyResult<String> {
    let scenario: Scenario = serde_json::from_str(scenario_json).map_err(err)?;
    let fixtures = simulate_walkthrough(&scenario).map_err(err)?;
    let array = MicArray::aria();

    // Range calibration from early windows at a known source distance.
    let calib = known_distance
        .map(|d| {
            let welch = WelchConfig::default();
            let windows = (scenario.duration.floor() as usize).saturating_sub(1).min(6);
            let samples: Vec<(f64, f64)> = (0..windows)
                .filter_map(|w| {
                    estimate_cdr(&fixtures.audio, (w as f64 + 0.5, 1.0), &array, &welch)
                        .ok()
                        .map(|f| (d, f.cdr))
                })
                .collect();
            calibrate_k(&samples, &CalibrationConfig::default()).map_err(err)
        })
        .transpose()?;

    let audio = build_audio_track(&fixtures.audio, &array, calib.as_ref(), 0.25).map_err(err)?;
    let bundle = TrackBundle::new(fixtures.descriptor.clone(), fixtures.seg.clone(), audio)
        .map_err(err)?;
    let map = build_global_map(&bundle, &fixtures.trajectory, &MapConfig::default()).map_err(err)?;

    let mut predictions = Vec::new();
    for q in &fixtures.questions {
        predictions.push(qa::resolve(&map, q, &fixtures.trajectory).map_err(err)?);
    }
    let report = evaluate_run(
        &fixtures.questions,
        &predictions,
        &fixtures.answers,
        &MetricsConfig::default(),
    )
    .map_err(err)?;

    let out = serde_json::json!({
        "map": map,
        "predictions": predictions,
        "ground_truth": fixtures.answers,
        "report": report,
    });
    serde_json::to_string_pretty(&out).map_err(err)
}

/// Build a global map from fixture files on disk (descriptor JSON,
/// segmentation CSV, trajectory CSV, audio WAV); returns the map as JSON.
#[pyfunction]
#[pyo3(signature = (descriptor_path, seg_path, trajectory_path, audio_path = None, k = None))]
fn build_map(
    descriptor_path: &str,
    seg_path: &str,
    trajectory_path: &str,
    audio_path: Option<&str>,
    k: Option<f64>,
) -> PyResult<String> {
    let sd: SnapshotDescriptor =
        tracks::parse_snapshot(&std::fs::read(descriptor_path)?).map_err(err)?;
    let seg: Vec<SegTrackFile> =
        SegTrackFile::parse_csv(&std::fs::read_to_string(seg_path)?).map_err(err)?;
    let traj: CameraTrajectory = CameraTrajectory::from_csv(
        &std::fs::read_to_string(trajectory_path)?,
        FrameConfig::y_forward(),
    )
    .map_err(err)?;
    let audio = match audio_path {
        Some(path) => {
            let clip = AudioClip::read_wav(std::path::Path::new(path)).map_err(err)?;
            let calib = k.map(|k| RangeCalibration { k, inlier_count: 0 });
            build_audio_track(&clip, &MicArray::aria(), calib.as_ref(), 0.25).map_err(err)?
        }
        None => Vec::new(),
    };
    let bundle = TrackBundle::new(sd, seg, audio).map_err(err)?;
    let map: GlobalMap = build_global_map(&bundle, &traj, &MapConfig::default()).map_err(err)?;
    serde_json::to_string_pretty(&map).map_err(err)
}

#[pymodule]
fn audiomap_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(wrap_deg, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_simple, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_quadrant, m)?)?;
    m.add_function(wrap_pyfunction!(ego_to_global, m)?)?;
    m.add_function(wrap_pyfunction!(global_to_ego, m)?)?;
    m.add_function(wrap_pyfunction!(allocentric_observation, m)?)?;
    m.add_function(wrap_pyfunction!(parse_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(doa_segment, m)?)?;
    m.add_function(wrap_pyfunction!(cdr_segment, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_range, m)?)?;
    m.add_function(wrap_pyfunction!(range_from_cdr, m)?)?;
    m.add_function(wrap_pyfunction!(distance_score, m)?)?;
    m.add_function(wrap_pyfunction!(interval_iou, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(bundled_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(build_map, m)?)?;
    Ok(())
}

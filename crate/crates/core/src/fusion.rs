//! Stage 2: lift egocentric tracks into world coordinates, anchor static
//! objects, fuse the dynamic target from all three sources, and smooth.

use serde::{Deserialize, Serialize};

use crate::cluster;
use crate::error::{Error, Result};
use crate::geometry::{
    ego_to_global, horizontal_distance, CameraTrajectory, EgoObservation, GlobalPoint,
};
use crate::tracks::{
    filter_seg_confidence, Mode, Role, SegThresholds, TrackBundle,
};

/// Where a fused point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Seg,
    Sd,
    Audio,
    Smoothed,
}

/// One world-frame track point. `ego_theta` and `camera_xy` keep the
/// egocentric context a fused audio point needs for the behind-camera rule
/// and frustum sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub t: f64,
    pub p: GlobalPoint,
    pub source: Source,
    pub confidence: f64,
    pub ego_theta: Option<f64>,
    pub camera_xy: Option<GlobalPoint>,
}

/// Time-sorted world-frame track.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalTrack {
    pub points: Vec<TrackPoint>,
}

impl GlobalTrack {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point with timestamp nearest to `t` (earlier wins ties).
    pub fn nearest(&self, t: f64) -> Option<&TrackPoint> {
        self.points.iter().min_by(|a, b| {
            ((a.t - t).abs(), a.t)
                .partial_cmp(&((b.t - t).abs(), b.t))
                .unwrap()
        })
    }

    /// Linear interpolation on (x, y); clamps outside the covered span.
    pub fn position_at(&self, t: f64) -> Option<GlobalPoint> {
        let pts = &self.points;
        if pts.is_empty() {
            return None;
        }
        if t <= pts[0].t {
            return Some(pts[0].p);
        }
        if t >= pts[pts.len() - 1].t {
            return Some(pts[pts.len() - 1].p);
        }
        let hi = pts.partition_point(|p| p.t < t);
        let (a, b) = (&pts[hi - 1], &pts[hi]);
        if (b.t - a.t).abs() < 1e-12 {
            return Some(a.p);
        }
        let w = (t - a.t) / (b.t - a.t);
        Some(GlobalPoint::new(
            a.p.x + w * (b.p.x - a.p.x),
            a.p.y + w * (b.p.y - a.p.y),
        ))
    }
}

/// Audio refinement frustum: a polar grid around the current estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FrustumConfig {
    /// Range half-width in meters.
    pub range_margin: f64,
    /// Full angular width in degrees, centered.
    pub angular_span: f64,
    pub angular_bins: usize,
    pub range_bins: usize,
    /// Audio overrides vision when ego |theta| exceeds this (strict).
    pub behind_threshold: f64,
}

impl Default for FrustumConfig {
    fn default() -> Self {
        FrustumConfig {
            range_margin: 1.0,
            angular_span: 45.0,
            angular_bins: 10,
            range_bins: 5,
            behind_threshold: 90.0,
        }
    }
}

/// Gate for sparse keyframe points against the accepted track.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SdGateConfig {
    /// Max distance in meters to the temporally nearest accepted point.
    pub radius: f64,
    /// Temporal window in seconds for the gate; isolated points pass.
    pub window: f64,
}

impl Default for SdGateConfig {
    fn default() -> Self {
        SdGateConfig {
            radius: 1.5,
            window: 2.0,
        }
    }
}

/// Constant-velocity 2D smoother settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KalmanConfig {
    /// Process noise intensity, m^2/s^3.
    pub process_noise: f64,
    /// Position measurement variance, m^2.
    pub measurement_noise: f64,
    /// Output sampling period, seconds.
    pub period: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            process_noise: 1.0,
            measurement_noise: 0.25,
            period: 0.1,
        }
    }
}

/// A static object's fused world position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticAnchor {
    pub position: GlobalPoint,
    pub support: usize,
    pub source: Source,
}

/// The per-question world model: the target's trajectory over the grounded
/// span plus optional static anchors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalMap {
    pub mode: Mode,
    pub span: (f64, f64),
    pub target: GlobalTrack,
    pub reference: Option<StaticAnchor>,
    pub facing: Option<StaticAnchor>,
}

/// Map egocentric observations through the interpolated camera pose.
pub fn globalize(
    ego: &[EgoObservation],
    traj: &CameraTrajectory,
    source: Source,
    confidence: f64,
) -> Result<GlobalTrack> {
    let mut points = Vec::with_capacity(ego.len());
    for obs in ego {
        let pose = traj.interpolate(obs.t);
        let p = ego_to_global(obs, &pose)?;
        points.push(TrackPoint {
            t: obs.t,
            p,
            source,
            confidence,
            ego_theta: Some(obs.theta),
            camera_xy: Some(GlobalPoint::new(pose.position.x, pose.position.y)),
        });
    }
    points.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    Ok(GlobalTrack { points })
}

/// DBSCAN over world points; the anchor is the centroid of the dominant
/// cluster. All-noise input falls back to the highest-confidence point.
pub fn cluster_static(
    points: &[(GlobalPoint, f64)],
    eps: f64,
    min_pts: usize,
    source: Source,
) -> Result<StaticAnchor> {
    if points.is_empty() {
        return Err(Error::EmptyTrack);
    }
    let clusters = cluster::dbscan(points.len(), eps, min_pts, |i, j| {
        horizontal_distance(&points[i].0, &points[j].0)
    });
    if let Some(dominant) = cluster::dominant(&clusters) {
        let n = dominant.len() as f64;
        let (sx, sy) = dominant.iter().fold((0.0, 0.0), |(sx, sy), &i| {
            (sx + points[i].0.x, sy + points[i].0.y)
        });
        return Ok(StaticAnchor {
            position: GlobalPoint::new(sx / n, sy / n),
            support: dominant.len(),
            source,
        });
    }
    let best = points
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            // Highest confidence; ties go to the earliest point.
            a.1.partial_cmp(&b.1)
                .unwrap()
                .then(ib.cmp(ia))
        })
        .map(|(_, p)| p);
    match best {
        Some((p, _)) if points.iter().any(|(_, c)| *c > 0.0) => Ok(StaticAnchor {
            position: *p,
            support: 1,
            source,
        }),
        _ => Err(Error::ClusterFailure),
    }
}

const T_EPS: f64 = 1e-9;

/// Candidate positions: centers of `angular_bins x range_bins` polar cells
/// around `center` as seen from `camera`; the cell center closest to `raw`
/// wins (first index on ties).
fn frustum_refine(
    raw: GlobalPoint,
    center: GlobalPoint,
    camera: GlobalPoint,
    cfg: &FrustumConfig,
) -> GlobalPoint {
    let dx = center.x - camera.x;
    let dy = center.y - camera.y;
    let r0 = dx.hypot(dy);
    if r0 < 1e-9 {
        return raw;
    }
    let phi0 = dy.atan2(dx);
    let mut best = raw;
    let mut best_d = f64::INFINITY;
    for ai in 0..cfg.angular_bins {
        // Bin centers: offset by half a bin from the lower edge.
        let frac = (ai as f64 + 0.5) / cfg.angular_bins as f64 - 0.5;
        let phi = phi0 + frac * cfg.angular_span.to_radians();
        for ri in 0..cfg.range_bins {
            let rfrac = (ri as f64 + 0.5) / cfg.range_bins as f64 - 0.5;
            let r = r0 + rfrac * 2.0 * cfg.range_margin;
            if r <= 0.0 {
                continue;
            }
            let cand = GlobalPoint::new(camera.x + r * phi.cos(), camera.y + r * phi.sin());
            let d = horizontal_distance(&cand, &raw);
            if d < best_d - 1e-12 {
                best_d = d;
                best = cand;
            }
        }
    }
    best
}

/// Source-priority fusion over the grounded span.
///
/// Single pass over the ascending union of timestamps:
/// 1. a Seg point at t always wins;
/// 2. an SD point at an uncovered t is admitted when within `gate.radius`
///    of the temporally nearest point (Seg or already accepted) inside
///    `gate.window`, or when no such neighbor exists;
/// 3. an Audio point is admitted when it indicates behind-camera
///    (|ego theta| > behind threshold, replacing any SD point at t) or when
///    t is otherwise uncovered; the admitted position is the frustum cell
///    center nearest the raw audio point, sampled around the current fused
///    estimate (or the raw point when no estimate exists yet).
pub fn fuse_dynamic(
    seg: &GlobalTrack,
    sd: &GlobalTrack,
    audio: &GlobalTrack,
    span: (f64, f64),
    frustum: &FrustumConfig,
    gate: &SdGateConfig,
) -> Result<GlobalTrack> {
    let in_span = |p: &&TrackPoint| p.t >= span.0 - T_EPS && p.t <= span.1 + T_EPS;
    let seg_pts: Vec<&TrackPoint> = seg.points.iter().filter(in_span).collect();
    let sd_pts: Vec<&TrackPoint> = sd.points.iter().filter(in_span).collect();
    let audio_pts: Vec<&TrackPoint> = audio.points.iter().filter(in_span).collect();
    if seg_pts.is_empty() && sd_pts.is_empty() && audio_pts.is_empty() {
        return Err(Error::EmptyTrack);
    }

    // Ascending union of timestamps, deduplicated.
    let mut times: Vec<f64> = seg_pts
        .iter()
        .chain(&sd_pts)
        .chain(&audio_pts)
        .map(|p| p.t)
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() < T_EPS);

    let at = |pts: &[&TrackPoint], t: f64| -> Option<TrackPoint> {
        pts.iter().find(|p| (p.t - t).abs() < T_EPS).map(|p| **p)
    };

    let mut fused: Vec<TrackPoint> = Vec::new();
    for &t in &times {
        if let Some(s) = at(&seg_pts, t) {
            fused.push(s);
            // Seg has priority; audio may not override it, so skip the rest.
            continue;
        }
        let mut accepted_at_t: Option<TrackPoint> = None;
        if let Some(k) = at(&sd_pts, t) {
            // Gate against Seg points and everything accepted so far.
            let neighbor = seg_pts
                .iter()
                .map(|p| **p)
                .chain(fused.iter().copied())
                .filter(|p| (p.t - t).abs() <= gate.window + T_EPS && (p.t - t).abs() > T_EPS)
                .min_by(|a, b| {
                    ((a.t - t).abs(), a.t)
                        .partial_cmp(&((b.t - t).abs(), b.t))
                        .unwrap()
                });
            let ok = match neighbor {
                Some(n) => horizontal_distance(&n.p, &k.p) <= gate.radius,
                None => true,
            };
            if ok {
                accepted_at_t = Some(k);
            }
        }
        if let Some(a) = at(&audio_pts, t) {
            let behind = a
                .ego_theta
                .map(|th| th.abs() > frustum.behind_threshold)
                .unwrap_or(false);
            if behind || accepted_at_t.is_none() {
                let current = GlobalTrack {
                    points: seg_pts
                        .iter()
                        .map(|p| **p)
                        .chain(fused.iter().copied())
                        .collect(),
                };
                let center = current
                    .nearest(t)
                    .map(|p| p.p)
                    .unwrap_or(a.p);
                let camera = a.camera_xy.unwrap_or(GlobalPoint::new(0.0, 0.0));
                let refined = frustum_refine(a.p, center, camera, frustum);
                accepted_at_t = Some(TrackPoint { p: refined, ..a });
            }
        }
        if let Some(p) = accepted_at_t {
            fused.push(p);
        }
    }
    fused.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    if fused.is_empty() {
        return Err(Error::EmptyTrack);
    }
    Ok(GlobalTrack { points: fused })
}

/// Constant-velocity Kalman filter with fixed-interval (RTS) smoothing,
/// resampled on a regular grid over `span`. A single input point yields a
/// constant track.
pub fn kalman_smooth(
    track: &GlobalTrack,
    cfg: &KalmanConfig,
    span: (f64, f64),
) -> Result<GlobalTrack> {
    if track.points.is_empty() {
        return Err(Error::EmptyTrack);
    }
    if !(cfg.process_noise > 0.0 && cfg.measurement_noise > 0.0 && cfg.period > 0.0) {
        return Err(Error::InvalidScenario(
            "Kalman noise and period must be positive".into(),
        ));
    }
    let mut out_times = Vec::new();
    let mut t = span.0;
    while t <= span.1 + T_EPS {
        out_times.push(t);
        t += cfg.period;
    }
    if track.points.len() == 1 {
        let p = track.points[0];
        return Ok(GlobalTrack {
            points: out_times
                .into_iter()
                .map(|t| TrackPoint {
                    t,
                    source: Source::Smoothed,
                    ego_theta: None,
                    camera_xy: None,
                    ..p
                })
                .collect(),
        });
    }

    // Timeline: union of measurement and output times; measurements attach
    // to their exact timestamps, output times are predict-only.
    #[derive(Clone, Copy)]
    struct Node {
        t: f64,
        meas: Option<GlobalPoint>,
        emit: bool,
    }
    let mut nodes: Vec<Node> = track
        .points
        .iter()
        .map(|p| Node {
            t: p.t,
            meas: Some(p.p),
            emit: false,
        })
        .collect();
    for &ot in &out_times {
        match nodes.iter_mut().find(|n| (n.t - ot).abs() < T_EPS) {
            Some(n) => n.emit = true,
            None => nodes.push(Node {
                t: ot,
                meas: None,
                emit: true,
            }),
        }
    }
    nodes.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());

    use nalgebra::{Matrix2x4, Matrix4, Vector2, Vector4};
    let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    let rm = nalgebra::Matrix2::identity() * cfg.measurement_noise;

    let first = track.points[0].p;
    let mut x = Vector4::new(first.x, first.y, 0.0, 0.0);
    let mut pcov: Matrix4<f64> = Matrix4::identity() * 100.0;

    let n = nodes.len();
    let mut pred_x = vec![x; n];
    let mut pred_p = vec![pcov; n];
    let mut filt_x = vec![x; n];
    let mut filt_p = vec![pcov; n];
    let mut trans = vec![Matrix4::identity(); n];

    let mut prev_t = nodes[0].t;
    for (i, node) in nodes.iter().enumerate() {
        let dt = node.t - prev_t;
        let f = if dt > 0.0 {
            let mut f = Matrix4::identity();
            f[(0, 2)] = dt;
            f[(1, 3)] = dt;
            f
        } else {
            Matrix4::identity()
        };
        let q = if dt > 0.0 {
            // White-noise-acceleration discretization.
            let q3 = dt.powi(3) / 3.0 * cfg.process_noise;
            let q2 = dt.powi(2) / 2.0 * cfg.process_noise;
            let q1 = dt * cfg.process_noise;
            let mut q = Matrix4::zeros();
            q[(0, 0)] = q3;
            q[(1, 1)] = q3;
            q[(0, 2)] = q2;
            q[(2, 0)] = q2;
            q[(1, 3)] = q2;
            q[(3, 1)] = q2;
            q[(2, 2)] = q1;
            q[(3, 3)] = q1;
            q
        } else {
            Matrix4::zeros()
        };
        x = f * x;
        pcov = f * pcov * f.transpose() + q;
        trans[i] = f;
        pred_x[i] = x;
        pred_p[i] = pcov;

        if let Some(z) = node.meas {
            let y = Vector2::new(z.x, z.y) - h * x;
            let s = h * pcov * h.transpose() + rm;
            let k = pcov * h.transpose()
                * s.try_inverse().ok_or_else(|| {
                    Error::InvalidScenario("singular innovation covariance".into())
                })?;
            x += k * y;
            pcov = (Matrix4::identity() - k * h) * pcov;
        }
        filt_x[i] = x;
        filt_p[i] = pcov;
        prev_t = node.t;
    }

    // Rauch-Tung-Striebel backward pass.
    let mut smooth_x = filt_x.clone();
    let mut smooth_p = filt_p.clone();
    for i in (0..n - 1).rev() {
        let Some(pinv) = pred_p[i + 1].try_inverse() else {
            continue;
        };
        let g = filt_p[i] * trans[i + 1].transpose() * pinv;
        smooth_x[i] = filt_x[i] + g * (smooth_x[i + 1] - pred_x[i + 1]);
        smooth_p[i] = filt_p[i] + g * (smooth_p[i + 1] - pred_p[i + 1]) * g.transpose();
    }

    let points = nodes
        .iter()
        .enumerate()
        .filter(|(_, node)| node.emit)
        .map(|(i, node)| TrackPoint {
            t: node.t,
            p: GlobalPoint::new(smooth_x[i][0], smooth_x[i][1]),
            source: Source::Smoothed,
            confidence: 1.0,
            ego_theta: None,
            camera_xy: None,
        })
        .collect();
    Ok(GlobalTrack { points })
}

/// Settings for the full Stage-2 assembly.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MapConfig {
    pub frustum: FrustumConfig,
    pub gate: SdGateConfig,
    pub kalman: KalmanConfig,
    pub thresholds: SegThresholds,
    pub anchor_eps: f64,
    pub anchor_min_pts: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            frustum: FrustumConfig::default(),
            gate: SdGateConfig::default(),
            kalman: KalmanConfig::default(),
            thresholds: SegThresholds::default(),
            anchor_eps: 1.0,
            anchor_min_pts: 2,
        }
    }
}

fn anchor_for_role(
    bundle: &TrackBundle,
    traj: &CameraTrajectory,
    role: Role,
    cfg: &MapConfig,
) -> Result<Option<StaticAnchor>> {
    // Descriptor keyframes take priority over segmentation observations.
    let entry = match role {
        Role::Reference => bundle.sd.reference.as_ref(),
        Role::Facing => bundle.sd.facing.as_ref(),
        Role::Target => None,
    };
    if let Some(entry) = entry.filter(|e| !e.keyframes.is_empty() && !e.is_camera()) {
        let track = globalize(&entry.keyframes, traj, Source::Sd, 1.0)?;
        let pts: Vec<(GlobalPoint, f64)> = track.points.iter().map(|p| (p.p, 1.0)).collect();
        return cluster_static(&pts, cfg.anchor_eps, cfg.anchor_min_pts, Source::Sd).map(Some);
    }
    let Some(seg) = bundle.seg_for(role) else {
        return Ok(None);
    };
    let kept = filter_seg_confidence(&seg.observations, role, &cfg.thresholds);
    if kept.is_empty() {
        return Ok(None);
    }
    let ego: Vec<EgoObservation> = kept
        .iter()
        .map(|o| EgoObservation::new(o.t, o.theta_deg, o.r_m))
        .collect();
    let track = globalize(&ego, traj, Source::Seg, 1.0)?;
    let pts: Vec<(GlobalPoint, f64)> = track
        .points
        .iter()
        .zip(&kept)
        .map(|(p, o)| (p.p, o.confidence))
        .collect();
    cluster_static(&pts, cfg.anchor_eps, cfg.anchor_min_pts, Source::Seg).map(Some)
}

/// Assemble the world model for one question: static anchors, then the
/// fused and smoothed target trajectory over the descriptor's span.
pub fn build_global_map(
    bundle: &TrackBundle,
    traj: &CameraTrajectory,
    cfg: &MapConfig,
) -> Result<GlobalMap> {
    let span = bundle.sd.span;

    let reference = anchor_for_role(bundle, traj, Role::Reference, cfg)?;
    let facing = anchor_for_role(bundle, traj, Role::Facing, cfg)?;
    if bundle.sd.mode == Mode::Allocentric {
        let ref_ok = reference.is_some()
            || bundle
                .sd
                .reference
                .as_ref()
                .map_or(false, |r| r.is_camera());
        if !ref_ok || facing.is_none() {
            return Err(Error::ModeViolation(
                "allocentric map requires reference and facing anchors".into(),
            ));
        }
    }

    let seg_track = match bundle.seg_for(Role::Target) {
        Some(seg) => {
            let kept = filter_seg_confidence(&seg.observations, Role::Target, &cfg.thresholds);
            let ego: Vec<EgoObservation> = kept
                .iter()
                .map(|o| EgoObservation::new(o.t, o.theta_deg, o.r_m))
                .collect();
            globalize(&ego, traj, Source::Seg, 1.0)?
        }
        None => GlobalTrack::default(),
    };
    let sd_track = globalize(&bundle.sd.target.keyframes, traj, Source::Sd, 1.0)?;
    let audio_ego: Vec<EgoObservation> = bundle
        .audio
        .iter()
        .filter_map(|a| a.r_m.map(|r| EgoObservation::new(a.t, a.theta_deg, r)))
        .collect();
    let audio_track = globalize(&audio_ego, traj, Source::Audio, 1.0)?;

    let fused = fuse_dynamic(
        &seg_track,
        &sd_track,
        &audio_track,
        span,
        &cfg.frustum,
        &cfg.gate,
    )?;
    let target = kalman_smooth(&fused, &cfg.kalman, span)?;

    Ok(GlobalMap {
        mode: bundle.sd.mode,
        span,
        target,
        reference,
        facing,
    })
}

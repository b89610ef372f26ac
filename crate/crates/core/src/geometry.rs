//! Coordinate conventions and transforms.
//!
//! World frame: right-handed, z up, with all map reasoning on the horizontal
//! (x, y) plane. Egocentric azimuth is measured from the camera forward axis,
//! 0 deg forward, negative left, positive right, normalized into [-180, 180).

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wrap an angle in degrees into [-180, 180).
pub fn wrap_deg(theta: f64) -> f64 {
    let mut t = theta % 360.0;
    if t < -180.0 {
        t += 360.0;
    } else if t >= 180.0 {
        t -= 360.0;
    }
    // -0.0 keeps comparisons tidy
    if t == 0.0 {
        0.0
    } else {
        t
    }
}

/// One egocentric sample: time, azimuth and range relative to the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoObservation {
    /// Seconds from the start of the recording.
    pub t: f64,
    /// Azimuth in degrees, [-180, 180), 0 = forward, positive = right.
    pub theta: f64,
    /// Range in meters, strictly positive.
    pub r: f64,
}

impl EgoObservation {
    pub fn new(t: f64, theta: f64, r: f64) -> Self {
        debug_assert!(r > 0.0, "range must be positive");
        EgoObservation {
            t,
            theta: wrap_deg(theta),
            r,
        }
    }
}

/// A signed coordinate axis of the device frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "+x")]
    Xp,
    #[serde(rename = "-x")]
    Xn,
    #[serde(rename = "+y")]
    Yp,
    #[serde(rename = "-y")]
    Yn,
    #[serde(rename = "+z")]
    Zp,
    #[serde(rename = "-z")]
    Zn,
}

impl Axis {
    pub fn vector(self) -> Vector3<f64> {
        match self {
            Axis::Xp => Vector3::x(),
            Axis::Xn => -Vector3::x(),
            Axis::Yp => Vector3::y(),
            Axis::Yn => -Vector3::y(),
            Axis::Zp => Vector3::z(),
            Axis::Zn => -Vector3::z(),
        }
    }
}

/// Designation of the device's forward and right axes.
///
/// The device frame of the Aria-style glasses has x to the wearer's right,
/// y up and z forward (the rear temple mics sit at negative z), so the
/// default is forward = +z, right = +x. Toy fixtures often use a y-forward,
/// x-right frame instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub forward: Axis,
    pub right: Axis,
}

impl FrameConfig {
    /// Aria-style device frame: x right, y up, z forward.
    pub fn aria() -> Self {
        FrameConfig {
            forward: Axis::Zp,
            right: Axis::Xp,
        }
    }

    /// y-forward, x-right frame; identity orientation faces world +y.
    pub fn y_forward() -> Self {
        FrameConfig {
            forward: Axis::Yp,
            right: Axis::Xp,
        }
    }
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig::aria()
    }
}

/// A timestamped 6-DoF camera pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub t: f64,
    /// Position in meters, world frame. Only x, y enter map reasoning.
    pub position: Vector3<f64>,
    /// World-from-device rotation.
    pub orientation: UnitQuaternion<f64>,
    pub frame: FrameConfig,
}

impl CameraPose {
    pub fn new(
        t: f64,
        position: Vector3<f64>,
        orientation: UnitQuaternion<f64>,
        frame: FrameConfig,
    ) -> Self {
        CameraPose {
            t,
            position,
            orientation,
            frame,
        }
    }

    /// Pose on the horizontal plane from a heading in degrees (clockwise from
    /// world +y), using the given frame config.
    pub fn from_heading(t: f64, x: f64, y: f64, heading_deg: f64, frame: FrameConfig) -> Self {
        let psi = heading_deg.to_radians();
        // World images of the device forward / right / up axes for the
        // requested heading.
        let f_w = Vector3::new(psi.sin(), psi.cos(), 0.0);
        let r_w = Vector3::new(psi.cos(), -psi.sin(), 0.0);
        let u_w = Vector3::z();
        let f_d = frame.forward.vector();
        let r_d = frame.right.vector();
        // Completing axis by the same rule as (forward, right, up) in the
        // world frame, so the matrix below is a proper rotation.
        let u_d = r_d.cross(&f_d);
        // R maps device to world: R * f_d = f_w etc.
        let device = Matrix3::from_columns(&[f_d, r_d, u_d]);
        let world = Matrix3::from_columns(&[f_w, r_w, u_w]);
        let m = world * device.transpose();
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
        CameraPose::new(t, Vector3::new(x, y, 0.0), q, frame)
    }
}

/// Time-sorted sequence of camera poses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraTrajectory {
    poses: Vec<CameraPose>,
}

impl CameraTrajectory {
    /// Build from poses; timestamps must be strictly increasing.
    pub fn new(poses: Vec<CameraPose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        for w in poses.windows(2) {
            if w[1].t <= w[0].t {
                return Err(Error::parse(
                    "trajectory",
                    format!("timestamps not strictly increasing at t={}", w[1].t),
                ));
            }
        }
        Ok(CameraTrajectory { poses })
    }

    pub fn poses(&self) -> &[CameraPose] {
        &self.poses
    }

    pub fn span(&self) -> (f64, f64) {
        (self.poses[0].t, self.poses[self.poses.len() - 1].t)
    }

    /// Pose at time `t`: linear position interpolation, shortest-arc slerp of
    /// orientation. Times outside the stored range clamp to the endpoints.
    pub fn interpolate(&self, t: f64) -> CameraPose {
        let poses = &self.poses;
        if t <= poses[0].t {
            let mut p = poses[0];
            p.t = t;
            return p;
        }
        let last = poses[poses.len() - 1];
        if t >= last.t {
            let mut p = last;
            p.t = t;
            return p;
        }
        let idx = poses.partition_point(|p| p.t <= t);
        let a = poses[idx - 1];
        let b = poses[idx];
        if (t - a.t).abs() < 1e-12 {
            return a;
        }
        let alpha = (t - a.t) / (b.t - a.t);
        let position = a.position.lerp(&b.position, alpha);
        let orientation = slerp_shortest(a.orientation, b.orientation, alpha);
        CameraPose::new(t, position, orientation, a.frame)
    }

    /// Serialize as one `t, x, y, z, qw, qx, qy, qz` record per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for p in &self.poses {
            let q = p.orientation.quaternion();
            out.push_str(&format!(
                "{:.6},{:.9},{:.9},{:.9},{:.12},{:.12},{:.12},{:.12}\n",
                p.t, p.position.x, p.position.y, p.position.z, q.w, q.i, q.j, q.k
            ));
        }
        out
    }

    /// Parse the CSV trajectory format.
    pub fn from_csv(text: &str, frame: FrameConfig) -> Result<Self> {
        let mut poses = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
            if fields.len() != 8 {
                return Err(Error::parse(
                    format!("trajectory:{}", lineno + 1),
                    format!("expected 8 fields, got {}", fields.len()),
                ));
            }
            let nums: Vec<f64> = fields
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| {
                        Error::parse(format!("trajectory:{}", lineno + 1), "bad number")
                    })
                })
                .collect::<Result<_>>()?;
            let q = nalgebra::Quaternion::new(nums[4], nums[5], nums[6], nums[7]);
            if (q.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::parse(
                    format!("trajectory:{}", lineno + 1),
                    "quaternion not unit norm",
                ));
            }
            poses.push(CameraPose::new(
                nums[0],
                Vector3::new(nums[1], nums[2], nums[3]),
                UnitQuaternion::from_quaternion(q),
                frame,
            ));
        }
        CameraTrajectory::new(poses)
    }
}

fn slerp_shortest(
    a: UnitQuaternion<f64>,
    b: UnitQuaternion<f64>,
    alpha: f64,
) -> UnitQuaternion<f64> {
    let b = if a.quaternion().dot(b.quaternion()) < 0.0 {
        UnitQuaternion::from_quaternion(-b.quaternion())
    } else {
        b
    };
    a.try_slerp(&b, alpha, 1e-9)
        .unwrap_or(if alpha < 0.5 { a } else { b })
}

/// A point on the world horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalPoint {
    pub x: f64,
    pub y: f64,
}

impl GlobalPoint {
    pub fn new(x: f64, y: f64) -> Self {
        GlobalPoint { x, y }
    }

    pub fn vector(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

///// Object-centered frame: `reference` is the origin, `facing` defines +y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlloFrame {
    pub reference: GlobalPoint,
    pub facing: GlobalPoint,
}

impl AlloFrame {
    pub fn new(reference: GlobalPoint, facing: GlobalPoint) -> Result<Self> {
        if horizontal_distance(&reference, &facing) <= 1e-9 {
            return Err(Error::DegenerateFrame);
        }
        Ok(AlloFrame { reference, facing })
    }
}

/// Horizontal forward and right unit vectors of a pose.
fn horizontal_basis(pose: &CameraPose) -> Result<(Vector2<f64>, Vector2<f64>)> {
    let f_w = pose.orientation * pose.frame.forward.vector();
    let horiz = Vector2::new(f_w.x, f_w.y);
    let n = horiz.norm();
    // Forward within 1 degree of vertical has no usable heading.
    if n < (1.0f64).to_radians().sin() {
        return Err(Error::DegenerateHeading);
    }
    let f = horiz / n;
    // Right candidate: forward rotated 90 deg clockwise in the world plane.
    let mut r = Vector2::new(f.y, -f.x);
    let r_w = pose.orientation * pose.frame.right.vector();
    let r_h = Vector2::new(r_w.x, r_w.y);
    if r_h.norm() > 1e-6 && r.dot(&r_h) < 0.0 {
        r = -r;
    }
    Ok((f, r))
}

/// World-frame heading of the device forward axis, degrees in [-180, 180),
/// measured clockwise from world +y.
pub fn yaw_of(pose: &CameraPose) -> Result<f64> {
    let (f, _) = horizontal_basis(pose)?;
    Ok(wrap_deg(f.x.atan2(f.y).to_degrees()))
}

/// Project an egocentric observation into world coordinates.
pub fn ego_to_global(obs: &EgoObservation, pose: &CameraPose) -> Result<GlobalPoint> {
    let (f, r) = horizontal_basis(pose)?;
    let th = obs.theta.to_radians();
    let d = f * (obs.r * th.cos()) + r * (obs.r * th.sin());
    Ok(GlobalPoint::new(
        pose.position.x + d.x,
        pose.position.y + d.y,
    ))
}

/// Exact inverse of [`ego_to_global`] at the same pose.
pub fn global_to_ego(point: &GlobalPoint, pose: &CameraPose) -> Result<EgoObservation> {
    let (f, r) = horizontal_basis(pose)?;
    let d = Vector2::new(point.x - pose.position.x, point.y - pose.position.y);
    let range = d.norm();
    if range <= 1e-12 {
        return Err(Error::ZeroRange);
    }
    let theta = wrap_deg(d.dot(&r).atan2(d.dot(&f)).to_degrees());
    Ok(EgoObservation {
        t: pose.t,
        theta,
        r: range,
    })
}

/// Bearing and range of `target` in the allocentric frame: the reference is
/// the origin and the reference-to-facing direction is +y. Same azimuth
/// convention as egocentric observations (0 = ahead, positive = right).
pub fn allocentric_observation(target: &GlobalPoint, frame: &AlloFrame) -> Result<(f64, f64)> {
    let fwd = frame.facing.vector() - frame.reference.vector();
    let n = fwd.norm();
    if n <= 1e-9 {
        return Err(Error::DegenerateFrame);
    }
    let yhat = fwd / n;
    let xhat = Vector2::new(yhat.y, -yhat.x);
    let d = target.vector() - frame.reference.vector();
    let theta = wrap_deg(d.dot(&xhat).atan2(d.dot(&yhat)).to_degrees());
    let range = horizontal_distance(target, &frame.reference);
    Ok((theta, range))
}

/// Three-way direction label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimpleDirection {
    Left,
    Right,
    Back,
}

impl SimpleDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            SimpleDirection::Left => "left",
            SimpleDirection::Right => "right",
            SimpleDirection::Back => "back",
        }
    }
}

/// Quadrant direction label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadrantDirection {
    FrontLeft,
    FrontRight,
    BackLeft,
    BackRight,
}

impl QuadrantDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            QuadrantDirection::FrontLeft => "front-left",
            QuadrantDirection::FrontRight => "front-right",
            QuadrantDirection::BackLeft => "back-left",
            QuadrantDirection::BackRight => "back-right",
        }
    }
}

/// left for [-120, 0), right for [0, 120), back otherwise.
pub fn quantize_simple(theta: f64) -> SimpleDirection {
    let t = wrap_deg(theta);
    if (-120.0..0.0).contains(&t) {
        SimpleDirection::Left
    } else if (0.0..120.0).contains(&t) {
        SimpleDirection::Right
    } else {
        SimpleDirection::Back
    }
}

/// front-left [-90, 0), front-right [0, 90), back-right [90, 180),
/// back-left [-180, -90).
pub fn quantize_quadrant(theta: f64) -> QuadrantDirection {
    let t = wrap_deg(theta);
    if (-90.0..0.0).contains(&t) {
        QuadrantDirection::FrontLeft
    } else if (0.0..90.0).contains(&t) {
        QuadrantDirection::FrontRight
    } else if (90.0..180.0).contains(&t) {
        QuadrantDirection::BackRight
    } else {
        QuadrantDirection::BackLeft
    }
}

/// Euclidean distance on the horizontal plane.
pub fn horizontal_distance(a: &GlobalPoint, b: &GlobalPoint) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

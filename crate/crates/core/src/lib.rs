//! Spatial reasoning over egocentric audio-visual recordings.
//!
//! The pipeline runs in two stages. Stage 1 estimates egocentric tracks
//! `(t, theta, r)` of query-relevant objects from three sources: structured
//! snapshot descriptors, segmentation tracks, and multi-channel spatial
//! audio (SRP-PHAT direction, CDR-based ranging). Stage 2 projects those
//! tracks into a world frame along the camera trajectory, clusters static
//! anchors, fuses the dynamic target track with per-source priority and
//! frustum-based audio refinement, and Kalman-smooths the result into a
//! global map. Questions are then resolved against the map and scored by
//! the metric suite. A deterministic synthetic scene generator ([`simkit`])
//! provides ground truth for all of it.

pub mod audio;
pub mod cluster;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod metrics;
pub mod providers;
pub mod qa;
pub mod simkit;
pub mod tracks;

pub use error::{Error, Result};
pub use geometry::{
    AlloFrame, CameraPose, CameraTrajectory, EgoObservation, FrameConfig, GlobalPoint,
};

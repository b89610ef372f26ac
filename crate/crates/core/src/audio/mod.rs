//! Multi-channel audio containers and spatial estimators.

pub mod cdr;
pub mod doa;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::FrameConfig;

/// Speed of sound default, m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Microphone positions in the device frame plus the azimuth-plane axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MicArray {
    /// Positions in meters, device frame.
    pub positions: Vec<Vector3<f64>>,
    /// Which two device axes span the azimuth plane (forward, right).
    pub frame: FrameConfig,
    /// Speed of sound, m/s.
    pub c: f64,
}

impl MicArray {
    pub fn new(positions: Vec<Vector3<f64>>, frame: FrameConfig, c: f64) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::InvalidArray("need at least 2 microphones".into()));
        }
        if c <= 0.0 {
            return Err(Error::InvalidArray("speed of sound must be positive".into()));
        }
        for (i, a) in positions.iter().enumerate() {
            for b in positions.iter().skip(i + 1) {
                if (a - b).norm() < 1e-9 {
                    return Err(Error::InvalidArray(format!(
                        "duplicate microphone position at index {i}"
                    )));
                }
            }
        }
        Ok(MicArray { positions, frame, c })
    }

    /// The seven-microphone glasses array. Device frame: x right, y up,
    /// z forward; rear temple mics sit at z = -0.10.
    pub fn aria() -> Self {
        MicArray::new(
            vec![
                Vector3::new(0.05, -0.04, 0.00),
                Vector3::new(-0.005, 0.00, 0.00),
                Vector3::new(-0.05, -0.04, 0.00),
                Vector3::new(-0.07, 0.00, 0.00),
                Vector3::new(0.07, 0.00, 0.00),
                Vector3::new(-0.07, 0.00, -0.10),
                Vector3::new(0.07, 0.00, -0.10),
            ],
            FrameConfig::aria(),
            SPEED_OF_SOUND,
        )
        .expect("static geometry")
    }

    /// Restrict to a subset of channels (indices into `positions`).
    pub fn subset(&self, indices: &[usize]) -> Result<MicArray> {
        let positions = indices
            .iter()
            .map(|&i| {
                self.positions
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::InvalidArray(format!("mic index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        MicArray::new(positions, self.frame, self.c)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Unit direction at azimuth `phi` (degrees) in the azimuth plane.
    pub fn direction(&self, phi_deg: f64) -> Vector3<f64> {
        let phi = phi_deg.to_radians();
        self.frame.forward.vector() * phi.cos() + self.frame.right.vector() * phi.sin()
    }

    /// Largest pairwise spacing in meters.
    pub fn aperture(&self) -> f64 {
        let mut max = 0.0f64;
        for (i, a) in self.positions.iter().enumerate() {
            for b in self.positions.iter().skip(i + 1) {
                max = max.max((a - b).norm());
            }
        }
        max
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parsed: MicArray = serde_json::from_str(text)?;
        MicArray::new(parsed.positions, parsed.frame, parsed.c)
    }
}

/// Synchronized multi-channel samples at a common rate.
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub sample_rate: u32,
    channels: Vec<Vec<f64>>,
}

impl AudioClip {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidClip("sample rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::InvalidClip("no channels".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidClip("channel lengths differ".into()));
        }
        Ok(AudioClip {
            sample_rate,
            channels,
        })
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len_samples(&self) -> usize {
        self.channels[0].len()
    }

    pub fn duration(&self) -> f64 {
        self.len_samples() as f64 / self.sample_rate as f64
    }

    /// Per-channel slices for `[start, start + duration)` seconds.
    pub fn segment(&self, start: f64, duration: f64) -> Result<Vec<&[f64]>> {
        let s = (start * self.sample_rate as f64).round() as i64;
        let n = (duration * self.sample_rate as f64).round() as i64;
        if s < 0 || n <= 0 || (s + n) as usize > self.len_samples() {
            return Err(Error::SegmentOutOfBounds {
                start,
                duration,
                clip: self.duration(),
            });
        }
        Ok(self
            .channels
            .iter()
            .map(|c| &c[s as usize..(s + n) as usize])
            .collect())
    }

    /// Keep a subset of channels, matching [`MicArray::subset`].
    pub fn subset(&self, indices: &[usize]) -> Result<AudioClip> {
        let channels = indices
            .iter()
            .map(|&i| {
                self.channels
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidClip(format!("channel {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        AudioClip::new(self.sample_rate, channels)
    }

    /// Read an uncompressed multi-channel WAV file (integer or float).
    pub fn read_wav(path: &Path) -> Result<AudioClip> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        let nch = spec.channels as usize;
        let mut channels = vec![Vec::new(); nch];
        match spec.sample_format {
            hound::SampleFormat::Float => {
                for (i, s) in reader.samples::<f32>().enumerate() {
                    channels[i % nch].push(s? as f64);
                }
            }
            hound::SampleFormat::Int => {
                let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
                for (i, s) in reader.samples::<i32>().enumerate() {
                    channels[i % nch].push(s? as f64 / scale);
                }
            }
        }
        AudioClip::new(spec.sample_rate, channels)
    }

    /// Write as 32-bit float WAV; bit-exact round trip.
    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: self.num_channels() as u16,
            sample_rate: self.sample_rate,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for i in 0..self.len_samples() {
            for ch in &self.channels {
                writer.write_sample(ch[i] as f32)?;
            }
        }
        writer.finalize()?;
        Ok(())
    }
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aria_array_has_seven_mics() {
        let a = MicArray::aria();
        assert_eq!(a.len(), 7);
        assert!((a.aperture() - 0.2f64.hypot(0.1)).abs() < 0.06);
    }

    #[test]
    fn direction_vectors() {
        let a = MicArray::aria();
        let f = a.direction(0.0);
        assert!((f - Vector3::z()).norm() < 1e-12);
        let r = a.direction(90.0);
        assert!((r - Vector3::x()).norm() < 1e-12);
    }

    #[test]
    fn clip_segment_bounds() {
        let clip = AudioClip::new(10, vec![vec![0.0; 20], vec![0.0; 20]]).unwrap();
        assert!(clip.segment(0.0, 1.0).is_ok());
        assert!(clip.segment(1.5, 1.0).is_err());
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let clip = AudioClip::new(
            48000,
            vec![vec![0.25f32 as f64, -0.5, 0.125], vec![0.0, 1.0, -1.0]],
        )
        .unwrap();
        clip.write_wav(&path).unwrap();
        let back = AudioClip::read_wav(&path).unwrap();
        assert_eq!(back.num_channels(), 2);
        assert_eq!(back.channels()[0], clip.channels()[0]);
    }

    #[test]
    fn rejects_duplicate_positions() {
        assert!(MicArray::new(
            vec![Vector3::zeros(), Vector3::zeros()],
            FrameConfig::aria(),
            343.0
        )
        .is_err());
    }
}

//! Direction-of-arrival estimation: GCC-PHAT pairwise correlation summed
//! over geometry-implied integer lags across a candidate azimuth grid
//! (SRP-PHAT).

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{rms, AudioClip, MicArray};
use crate::error::{Error, Result};

/// Candidate azimuth grid over [-180, 180).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DoaGrid {
    pub start: f64,
    pub stop: f64,
    /// Degrees, default 1.
    pub step: f64,
}

impl Default for DoaGrid {
    fn default() -> Self {
        DoaGrid {
            start: -180.0,
            stop: 180.0,
            step: 1.0,
        }
    }
}

impl DoaGrid {
    pub fn angles(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step).round() as usize;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// Tunables for segment-level estimation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DoaConfig {
    /// Segment RMS below this (full scale) yields no estimate.
    pub energy_floor: f64,
    /// PHAT magnitude floor as a fraction of the peak cross-spectral
    /// magnitude.
    pub phat_floor: f64,
}

impl Default for DoaConfig {
    fn default() -> Self {
        DoaConfig {
            energy_floor: 1e-6,
            phat_floor: 1e-12,
        }
    }
}

/// Steered-response result for one segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoaEstimate {
    /// Segment center time, seconds.
    pub t: f64,
    /// Argmax azimuth, degrees in [-180, 180).
    pub phi_hat: f64,
    /// Steered response power over the grid angles.
    pub power: Vec<f64>,
    pub peak_power: f64,
}

/// GCC-PHAT correlation for lags in [-max_lag, max_lag].
///
/// Positive lag means `y` lags `x`. Returns `None` when either channel is
/// below the configured energy floor.
pub fn gcc_phat(x: &[f64], y: &[f64], max_lag: usize, config: &DoaConfig) -> Option<Vec<f64>> {
    assert_eq!(x.len(), y.len(), "segments must be equal length");
    assert!(max_lag < x.len(), "max_lag must be below the segment length");
    if rms(x) < config.energy_floor || rms(y) < config.energy_floor {
        return None;
    }
    let fft_len = (2 * x.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(fft_len);
    let ifft = planner.plan_fft_inverse(fft_len);

    let mut xs: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    xs.resize(fft_len, Complex::new(0.0, 0.0));
    let mut ys: Vec<Complex<f64>> = y.iter().map(|&v| Complex::new(v, 0.0)).collect();
    ys.resize(fft_len, Complex::new(0.0, 0.0));
    fft.process(&mut xs);
    fft.process(&mut ys);

    // conj(X) * Y peaks at the delay of y relative to x.
    let mut g: Vec<Complex<f64>> = xs
        .iter()
        .zip(ys.iter())
        .map(|(a, b)| a.conj() * b)
        .collect();
    let max_mag = g.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    let floor = config.phat_floor * max_mag.max(f64::MIN_POSITIVE);
    for v in &mut g {
        let mag = v.norm();
        *v /= mag.max(floor);
    }
    ifft.process(&mut g);
    let scale = 1.0 / fft_len as f64;

    let mut out = Vec::with_capacity(2 * max_lag + 1);
    for lag in -(max_lag as i64)..=(max_lag as i64) {
        let idx = lag.rem_euclid(fft_len as i64) as usize;
        out.push(g[idx].re * scale);
    }
    Some(out)
}

/// Geometry-implied integer lag for a mic pair at azimuth `phi` degrees.
pub fn expected_lag(pair: (usize, usize), phi: f64, array: &MicArray, sample_rate: u32) -> i64 {
    let u = array.direction(phi);
    let baseline = array.positions[pair.0] - array.positions[pair.1];
    let tau = baseline.dot(&u) / array.c;
    (tau * sample_rate as f64).round() as i64
}

/// SRP-PHAT over all mic pairs for one segment of the clip.
///
/// Returns `Ok(None)` for all-silent segments (energy gate).
pub fn srp_phat(
    clip: &AudioClip,
    segment: (f64, f64),
    array: &MicArray,
    grid: &DoaGrid,
    config: &DoaConfig,
) -> Result<Option<DoaEstimate>> {
    if clip.num_channels() != array.len() {
        return Err(Error::InvalidClip(format!(
            "clip has {} channels but array has {} microphones",
            clip.num_channels(),
            array.len()
        )));
    }
    let (start, duration) = segment;
    let chans = clip.segment(start, duration)?;
    let fs = clip.sample_rate;
    let max_lag = ((array.aperture() / array.c) * fs as f64).ceil() as usize + 2;

    // Pairwise PHAT correlations; any silent channel gates the segment.
    let m = array.len();
    let mut corr: Vec<Option<Vec<f64>>> = Vec::with_capacity(m * (m - 1) / 2);
    let mut any_energy = false;
    for i in 0..m {
        for j in (i + 1)..m {
            let c = gcc_phat(chans[i], chans[j], max_lag, config);
            any_energy |= c.is_some();
            corr.push(c);
        }
    }
    if !any_energy {
        return Ok(None);
    }

    let angles = grid.angles();
    let mut power = vec![0.0f64; angles.len()];
    for (k, &phi) in angles.iter().enumerate() {
        let mut pair_idx = 0;
        let mut p = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                if let Some(c) = &corr[pair_idx] {
                    let lag = expected_lag((i, j), phi, array, fs);
                    let idx = (lag + max_lag as i64) as usize;
                    p += c[idx];
                }
                pair_idx += 1;
            }
        }
        power[k] = p;
    }

    // Argmax; ties broken by the smallest angle (ascending scan, strict >).
    let mut best = 0;
    for k in 1..power.len() {
        if power[k] > power[best] {
            best = k;
        }
    }
    Ok(Some(DoaEstimate {
        t: start + duration / 2.0,
        phi_hat: angles[best],
        peak_power: power[best],
        power,
    }))
}

/// Drop estimates within the forward exclusion band [-5, 5] degrees
/// (inclusive), which is dominated by the wearer's own voice.
pub fn discard_forward(estimates: Vec<DoaEstimate>, band_deg: f64) -> Vec<DoaEstimate> {
    estimates
        .into_iter()
        .filter(|e| !(-band_deg..=band_deg).contains(&e.phi_hat))
        .collect()
}

/// Default forward exclusion half-width, degrees.
pub const FORWARD_BAND_DEG: f64 = 5.0;

//! Distance cues from multi-channel coherence.
//!
//! The coherent-to-diffuse ratio (CDR) of a mic pair falls with source
//! distance; in a fixed environment `D^2 * CDR` stays roughly constant, so a
//! calibration constant `K` fitted against visually estimated distances
//! turns CDR frames into ranges via `d = sqrt(K / CDR)`.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{rms, AudioClip, MicArray};
use crate::cluster;
use crate::error::{Error, Result};

/// Coherence model assumed for the non-coherent field component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffuseModel {
    /// Spatially uncorrelated noise (zero coherence). The estimator reduces
    /// to |G| / (1 - |G|) for measured coherence G.
    Uncorrelated,
    /// Ideal isotropic diffuse field: sinc coherence over the pair spacing.
    SincSpacing,
}

/// Welch spectral-estimation settings for CDR.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WelchConfig {
    /// Window length in samples (default 1536, about 32 ms at 48 kHz).
    pub segment_length: usize,
    /// Window overlap fraction in [0, 1).
    pub overlap: f64,
    /// Analysis band in Hz.
    pub band: (f64, f64),
    pub diffuse_model: DiffuseModel,
    /// Upper clamp keeping sqrt(K / cdr) numerically sane.
    pub cdr_max: f64,
    /// RMS floor below which the segment is treated as silent.
    pub energy_floor: f64,
}

impl Default for WelchConfig {
    fn default() -> Self {
        WelchConfig {
            segment_length: 1536,
            overlap: 0.5,
            band: (500.0, 2000.0),
            diffuse_model: DiffuseModel::Uncorrelated,
            cdr_max: 1e6,
            energy_floor: 1e-6,
        }
    }
}

/// One CDR sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CdrFrame {
    pub t: f64,
    /// Non-negative; negatives are clipped to zero.
    pub cdr: f64,
}

/// Calibrated environment constant.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RangeCalibration {
    /// K in meters^2 (dimensionless CDR), strictly positive.
    pub k: f64,
    pub inlier_count: usize,
}

/// DBSCAN settings for calibration outlier removal.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Absolute eps; when `None`, 0.25 x median product is used.
    pub eps: Option<f64>,
    pub min_pts: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            eps: None,
            min_pts: 3,
        }
    }
}

/// CDR from measured complex coherence and the model coherence of the
/// non-coherent component. DoA-independent: uses only coherence magnitude
/// and real part.
fn cdr_from_coherence(gx: Complex<f64>, gn: f64, cdr_max: f64) -> f64 {
    let mag2 = gx.norm_sqr();
    let denom = mag2 - 1.0;
    let cdr = if gn.abs() < 1e-12 {
        let mag = mag2.sqrt();
        if mag >= 1.0 {
            cdr_max
        } else {
            mag / (1.0 - mag)
        }
    } else if denom.abs() < 1e-12 {
        cdr_max
    } else {
        let re = gx.re;
        let disc = gn * gn * re * re - gn * gn * mag2 + gn * gn - 2.0 * gn * re + mag2;
        (gn * re - mag2 - disc.max(0.0).sqrt()) / denom
    };
    cdr.max(0.0).min(cdr_max)
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = std::f64::consts::PI * i as f64 / n as f64;
            x.sin() * x.sin()
        })
        .collect()
}

/// Averaged auto/cross spectra for one channel pair over Welch windows.
fn welch_spectra(
    x: &[f64],
    y: &[f64],
    cfg: &WelchConfig,
) -> Option<(Vec<f64>, Vec<f64>, Vec<Complex<f64>>)> {
    let n = cfg.segment_length;
    let hop = ((n as f64) * (1.0 - cfg.overlap)).max(1.0) as usize;
    if x.len() < n + hop {
        return None;
    }
    let window = hann(n);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);

    let bins = n / 2 + 1;
    let mut sxx = vec![0.0f64; bins];
    let mut syy = vec![0.0f64; bins];
    let mut sxy = vec![Complex::new(0.0, 0.0); bins];
    let mut count = 0usize;
    let mut start = 0usize;
    while start + n <= x.len() {
        let mut xs: Vec<Complex<f64>> = x[start..start + n]
            .iter()
            .zip(&window)
            .map(|(&v, &w)| Complex::new(v * w, 0.0))
            .collect();
        let mut ys: Vec<Complex<f64>> = y[start..start + n]
            .iter()
            .zip(&window)
            .map(|(&v, &w)| Complex::new(v * w, 0.0))
            .collect();
        fft.process(&mut xs);
        fft.process(&mut ys);
        for b in 0..bins {
            sxx[b] += xs[b].norm_sqr();
            syy[b] += ys[b].norm_sqr();
            sxy[b] += xs[b].conj() * ys[b];
        }
        count += 1;
        start += hop;
    }
    if count < 2 {
        return None;
    }
    let scale = 1.0 / count as f64;
    for b in 0..bins {
        sxx[b] *= scale;
        syy[b] *= scale;
        sxy[b] *= scale;
    }
    Some((sxx, syy, sxy))
}

/// Band-averaged, pair-averaged CDR for one clip segment.
pub fn estimate_cdr(
    clip: &AudioClip,
    segment: (f64, f64),
    array: &MicArray,
    cfg: &WelchConfig,
) -> Result<CdrFrame> {
    if clip.num_channels() != array.len() {
        return Err(Error::InvalidClip(format!(
            "clip has {} channels but array has {} microphones",
            clip.num_channels(),
            array.len()
        )));
    }
    let (start, duration) = segment;
    let chans = clip.segment(start, duration)?;
    if chans.iter().all(|c| rms(c) < cfg.energy_floor) {
        return Err(Error::SilentSegment);
    }
    let fs = clip.sample_rate as f64;
    let bin_hz = fs / cfg.segment_length as f64;
    let b_lo = (cfg.band.0 / bin_hz).ceil() as usize;
    let b_hi = ((cfg.band.1 / bin_hz).floor() as usize).min(cfg.segment_length / 2);
    if b_lo >= b_hi {
        return Err(Error::UndefinedCdr("analysis band is empty".into()));
    }

    let m = array.len();
    let mut pair_sum = 0.0f64;
    let mut pair_count = 0usize;
    for i in 0..m {
        for j in (i + 1)..m {
            let spacing = (array.positions[i] - array.positions[j]).norm();
            if spacing < 1e-9 {
                continue;
            }
            let Some((sxx, syy, sxy)) = welch_spectra(chans[i], chans[j], cfg) else {
                return Err(Error::UndefinedCdr(
                    "segment too short for two Welch windows".into(),
                ));
            };
            let mut band_sum = 0.0f64;
            let mut band_count = 0usize;
            for b in b_lo..=b_hi {
                let denom = (sxx[b] * syy[b]).sqrt();
                if denom <= 0.0 {
                    continue;
                }
                let gx = sxy[b] / denom;
                let gn = match cfg.diffuse_model {
                    DiffuseModel::Uncorrelated => 0.0,
                    DiffuseModel::SincSpacing => {
                        let f = b as f64 * bin_hz;
                        let x = 2.0 * std::f64::consts::PI * f * spacing / array.c;
                        if x.abs() < 1e-12 {
                            1.0
                        } else {
                            x.sin() / x
                        }
                    }
                };
                band_sum += cdr_from_coherence(gx, gn, cfg.cdr_max);
                band_count += 1;
            }
            if band_count > 0 {
                pair_sum += band_sum / band_count as f64;
                pair_count += 1;
            }
        }
    }
    if pair_count == 0 {
        return Err(Error::UndefinedCdr("no usable microphone pairs".into()));
    }
    Ok(CdrFrame {
        t: start + duration / 2.0,
        cdr: pair_sum / pair_count as f64,
    })
}

/// Fit K from (distance, cdr) samples: products `D^2 * cdr` are cleaned up
/// with 1-D DBSCAN and K is the mean of the dominant inlier cluster, which
/// minimizes the summed squared error over the inliers.
pub fn calibrate_k(samples: &[(f64, f64)], cfg: &CalibrationConfig) -> Result<RangeCalibration> {
    let usable: Vec<f64> = samples
        .iter()
        .filter(|(_, cdr)| *cdr > 0.0)
        .map(|(d, cdr)| d * d * cdr)
        .collect();
    if usable.len() < 3 {
        return Err(Error::CalibrationFailed(format!(
            "need at least 3 samples with positive cdr, got {}",
            usable.len()
        )));
    }
    let eps = cfg.eps.unwrap_or_else(|| {
        let mut sorted = usable.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        0.25 * sorted[sorted.len() / 2]
    });
    let clusters = cluster::dbscan(usable.len(), eps, cfg.min_pts, |i, j| {
        (usable[i] - usable[j]).abs()
    });
    let Some(dominant) = cluster::dominant(&clusters) else {
        return Err(Error::CalibrationFailed(
            "no inlier cluster found".into(),
        ));
    };
    let k = dominant.iter().map(|&i| usable[i]).sum::<f64>() / dominant.len() as f64;
    if k <= 0.0 {
        return Err(Error::CalibrationFailed("non-positive K".into()));
    }
    Ok(RangeCalibration {
        k,
        inlier_count: dominant.len(),
    })
}

/// `sqrt(K / cdr)`; `None` when cdr is non-positive.
pub fn distance_from_cdr(cdr: f64, calib: &RangeCalibration) -> Option<f64> {
    if cdr <= 0.0 {
        return None;
    }
    Some((calib.k / cdr).sqrt())
}

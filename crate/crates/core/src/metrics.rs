//! Intrusive quality metrics against a ground-truth reference:
//! frequency-weighted segmental SNR, segmental SNR, scale-invariant SDR and
//! a spectral-flux proxy for musical noise.
//!
//! Segmental metrics use 16 ms frames with an 8 ms hop and average only over
//! frames whose reference energy lies within 40 dB of the loudest frame.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SI_SDR_CAP_DB: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentalConfig {
    pub sample_rate_hz: f64,
    pub frame_s: f64,
    pub hop_s: f64,
    pub clip_db: (f64, f64),
    /// Frames quieter than the loudest by more than this are skipped.
    pub activity_range_db: f64,
    pub num_bands: usize,
    /// Band weight exponent on the reference band magnitude.
    pub weight_exponent: f64,
    pub fft_len: usize,
}

impl SegmentalConfig {
    pub fn new(sample_rate_hz: f64) -> Self {
        SegmentalConfig {
            sample_rate_hz,
            frame_s: 0.016,
            hop_s: 0.008,
            clip_db: (-10.0, 35.0),
            activity_range_db: 40.0,
            num_bands: 25,
            weight_exponent: 0.2,
            fft_len: 512,
        }
    }

    fn frame_len(&self) -> usize {
        (self.frame_s * self.sample_rate_hz).round() as usize
    }

    fn hop(&self) -> usize {
        (self.hop_s * self.sample_rate_hz).round() as usize
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.clip_db;
        if !(self.sample_rate_hz > 0.0) || self.frame_len() < 2 || self.hop() == 0 || !(lo < hi) {
            return Err(Error::InvalidParameter("bad segmental metric configuration".into()));
        }
        if self.fft_len < self.frame_len() || self.num_bands == 0 {
            return Err(Error::InvalidParameter("FFT shorter than the frame or no bands".into()));
        }
        Ok(())
    }
}

fn check_pair(reference: &[f64], estimate: &[f64]) -> Result<()> {
    if reference.len() != estimate.len() {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.iter().chain(estimate).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric input"));
    }
    if reference.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidParameter("reference is silent".into()));
    }
    Ok(())
}

/// Start indices of the frames whose reference energy passes the activity
/// threshold.
fn active_frames(reference: &[f64], frame: usize, hop: usize, range_db: f64) -> Result<Vec<usize>> {
    if reference.len() < frame {
        return Err(Error::InvalidParameter(format!(
            "signal of {} samples is shorter than one metric frame ({frame})",
            reference.len()
        )));
    }
    let starts: Vec<usize> = (0..=(reference.len() - frame) / hop).map(|i| i * hop).collect();
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| reference[s..s + frame].iter().map(|v| v * v).sum())
        .collect();
    let peak = energy.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::InvalidParameter("reference is silent in every frame".into()));
    }
    let floor = peak * 10f64.powf(-range_db / 10.0);
    Ok(starts
        .into_iter()
        .zip(energy)
        .filter(|&(_, e)| e > floor)
        .map(|(s, _)| s)
        .collect())
}

fn ratio_db(signal: f64, error: f64, clip: (f64, f64)) -> f64 {
    let v = if error == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal / error).log10()
    };
    v.clamp(clip.0, clip.1)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank, `[band][bin]` over `fft_len / 2 + 1` bins.
pub fn mel_filterbank(num_bands: usize, fft_len: usize, sample_rate_hz: f64) -> Vec<Vec<f64>> {
    let bins = fft_len / 2 + 1;
    let top = hz_to_mel(sample_rate_hz / 2.0);
    let edges: Vec<f64> = (0..num_bands + 2)
        .map(|i| mel_to_hz(top * i as f64 / (num_bands + 1) as f64))
        .collect();
    (0..num_bands)
        .map(|j| {
            let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate_hz / fft_len as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Frequency-weighted segmental SNR in dB.
///
/// Per frame and mel band `j`, `S_j` is the filtered reference power and
/// `E_j` the filtered power of `reference - estimate`. Band SNRs are clipped
/// to the configured range and combined with weights `S_j^(gamma/2)`.
pub fn fw_seg_snr(reference: &[f64], estimate: &[f64], cfg: &SegmentalConfig) -> Result<f64> {
    cfg.validate()?;
    check_pair(reference, estimate)?;
    let frame = cfg.frame_len();
    let hop = cfg.hop();
    let active = active_frames(reference, frame, hop, cfg.activity_range_db)?;
    let bank = mel_filterbank(cfg.num_bands, cfg.fft_len, cfg.sample_rate_hz);
    let window: Vec<f64> = (0..frame)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / frame as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_len);
    let bins = cfg.fft_len / 2 + 1;
    let spectrum = |x: &[f64]| -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_len];
        for (n, (b, w)) in buf.iter_mut().zip(&window).enumerate() {
            *b = Complex64::new(x[n] * w, 0.0);
        }
        fft.process(&mut buf);
        buf[..bins].iter().map(|z| z.norm_sqr()).collect()
    };

    let mut total = 0.0;
    for &s in &active {
        let r = &reference[s..s + frame];
        let err: Vec<f64> = r.iter().zip(&estimate[s..s + frame]).map(|(a, b)| a - b).collect();
        let pr = spectrum(r);
        let pe = spectrum(&err);
        let mut num = 0.0;
        let mut den = 0.0;
        for h in &bank {
            let sj: f64 = h.iter().zip(&pr).map(|(a, b)| a * b).sum();
            if sj <= 0.0 {
                continue;
            }
            let ej: f64 = h.iter().zip(&pe).map(|(a, b)| a * b).sum();
            let w = sj.powf(cfg.weight_exponent / 2.0);
            num += w * ratio_db(sj, ej, cfg.clip_db);
            den += w;
        }
        let v = if den > 0.0 { num / den } else { cfg.clip_db.0 };
        total += v.clamp(cfg.clip_db.0, cfg.clip_db.1);
    }
    Ok(total / active.len() as f64)
}

/// Time-domain segmental SNR in dB.
pub fn seg_snr(reference: &[f64], estimate: &[f64], cfg: &SegmentalConfig) -> Result<f64> {
    cfg.validate()?;
    check_pair(reference, estimate)?;
    let frame = cfg.frame_len();
    let active = active_frames(reference, frame, cfg.hop(), cfg.activity_range_db)?;
    let total: f64 = active
        .iter()
        .map(|&s| {
            let r = &reference[s..s + frame];
            let e = &estimate[s..s + frame];
            let sig: f64 = r.iter().map(|v| v * v).sum();
            let err: f64 = r.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum();
            ratio_db(sig, err, cfg.clip_db)
        })
        .sum();
    Ok(total / active.len() as f64)
}

/// Scale-invariant SDR in dB, limited to `[-60, 60]`.
pub fn si_sdr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    check_pair(reference, estimate)?;
    let rr: f64 = reference.iter().map(|v| v * v).sum();
    let er: f64 = reference.iter().zip(estimate).map(|(r, e)| r * e).sum();
    let alpha = er / rr;
    let mut target = 0.0;
    let mut residual = 0.0;
    for (r, e) in reference.iter().zip(estimate) {
        let t = alpha * r;
        target += t * t;
        residual += (e - t) * (e - t);
    }
    let v = if target == 0.0 {
        f64::NEG_INFINITY
    } else if residual == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (target / residual).log10()
    };
    Ok(v.clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// Normalized frame-to-frame spectral flux of a single-channel spectrum:
/// `sum_t sum_f (|Y_t| - |Y_{t-1}|)^2 / sum_t sum_f |Y_t|^2`. The ratio is
/// invariant to overall gain, so it measures fluctuation and not level.
pub fn spectral_flux(frames: &[Vec<Complex64>]) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::InvalidParameter(
            "spectral flux needs at least two frames".into(),
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for pair in frames.windows(2) {
        if pair[0].len() != pair[1].len() {
            return Err(Error::DimensionMismatch("frames differ in band count".into()));
        }
        for (a, b) in pair[0].iter().zip(&pair[1]) {
            let d = b.norm() - a.norm();
            num += d * d;
            den += b.norm_sqr();
        }
    }
    if !num.is_finite() || !den.is_finite() {
        return Err(Error::NonFinite("spectral flux input"));
    }
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub fw_seg_snr: f64,
    pub seg_snr: f64,
    pub si_sdr: f64,
}

impl MetricSet {
    pub const NAMES: [&'static str; 3] = ["fw_seg_snr", "seg_snr", "si_sdr"];

    pub fn values(&self) -> [f64; 3] {
        [self.fw_seg_snr, self.seg_snr, self.si_sdr]
    }
}

pub fn evaluate(reference: &[f64], estimate: &[f64], sample_rate_hz: f64) -> Result<MetricSet> {
    let cfg = SegmentalConfig::new(sample_rate_hz);
    Ok(MetricSet {
        fw_seg_snr: fw_seg_snr(reference, estimate, &cfg)?,
        seg_snr: seg_snr(reference, estimate, &cfg)?,
        si_sdr: si_sdr(reference, estimate)?,
    })
}

/// One line of a results table. `delta` is the value minus the baseline
/// method's value for the same trial and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub trial: String,
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub delta: Option<f64>,
}

/// Expands per-method metric sets into rows with deltas against `baseline`.
/// Rows of a trial without the baseline method carry no delta.
pub fn metric_rows(results: &[(String, String, MetricSet)], baseline: Option<&str>) -> Vec<MetricRow> {
    let mut rows = Vec::with_capacity(results.len() * 3);
    for (trial, method, set) in results {
        let base = baseline.and_then(|b| {
            results
                .iter()
                .find(|(t, m, _)| t == trial && m == b)
                .map(|(_, _, s)| s.values())
        });
        for (k, name) in MetricSet::NAMES.iter().enumerate() {
            let value = set.values()[k];
            rows.push(MetricRow {
                trial: trial.clone(),
                method: method.clone(),
                metric: name.to_string(),
                value,
                delta: base.map(|b| value - b[k]),
            });
        }
    }
    rows
}

/// CSV with header `trial,method,metric,value,delta`.
pub fn write_metrics_csv(rows: &[MetricRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<metrics csv>", e))?;
    Ok(())
}

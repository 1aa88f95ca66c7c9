//! Short-time Fourier analysis and overlap-add synthesis.
//!
//! Frames are windowed with a square-root periodic Hann window on both sides
//! at 50% overlap, so the squared window sums to exactly one and
//! `synthesize(analyze(x))` reproduces `x` everywhere two frames overlap.
//! The first and last hop of a signal are covered by a single frame only and
//! are not reconstructed; callers trim them.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub sample_rate_hz: u32,
    pub frame_len_samples: usize,
    pub hop_samples: usize,
    pub fft_len: usize,
}

impl Default for StftConfig {
    /// 10 kHz, 16 ms window, 8 ms hop, no zero padding (81 bands).
    fn default() -> Self {
        StftConfig {
            sample_rate_hz: 10_000,
            frame_len_samples: 160,
            hop_samples: 80,
            fft_len: 160,
        }
    }
}

impl StftConfig {
    pub fn new(sample_rate_hz: u32, frame_len_samples: usize, hop_samples: usize, fft_len: usize) -> Result<Self> {
        let cfg = StftConfig {
            sample_rate_hz,
            frame_len_samples,
            hop_samples,
            fft_len,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds a configuration from window and hop durations, with
    /// `fft_len` equal to the window length.
    pub fn from_durations(sample_rate_hz: u32, window_s: f64, hop_s: f64) -> Result<Self> {
        let frame = (window_s * sample_rate_hz as f64).round() as usize;
        let hop = (hop_s * sample_rate_hz as f64).round() as usize;
        Self::new(sample_rate_hz, frame, hop, frame)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 || self.frame_len_samples == 0 || self.hop_samples == 0 || self.fft_len == 0 {
            return Err(Error::InvalidParameter(
                "STFT sizes and sample rate must be positive".into(),
            ));
        }
        if self.hop_samples > self.frame_len_samples {
            return Err(Error::InvalidParameter(format!(
                "hop {} exceeds frame length {}",
                self.hop_samples, self.frame_len_samples
            )));
        }
        if self.fft_len < self.frame_len_samples {
            return Err(Error::InvalidParameter(format!(
                "fft_len {} shorter than frame length {}",
                self.fft_len, self.frame_len_samples
            )));
        }
        if self.frame_len_samples != 2 * self.hop_samples {
            return Err(Error::InvalidParameter(format!(
                "square-root-Hann overlap-add needs frame_len = 2*hop (got {} and {})",
                self.frame_len_samples, self.hop_samples
            )));
        }
        Ok(())
    }

    /// Number of one-sided frequency bands, `fft_len / 2 + 1`.
    pub fn num_bands(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Time between frames in seconds.
    pub fn frame_period_s(&self) -> f64 {
        self.hop_samples as f64 / self.sample_rate_hz as f64
    }

    pub fn bin_frequencies(&self) -> Vec<f64> {
        let df = self.sample_rate_hz as f64 / self.fft_len as f64;
        (0..self.num_bands()).map(|k| k as f64 * df).collect()
    }

    pub fn num_frames(&self, num_samples: usize) -> usize {
        if num_samples < self.frame_len_samples {
            0
        } else {
            (num_samples - self.frame_len_samples) / self.hop_samples + 1
        }
    }

    /// Length of the overlap-add output for a given number of frames.
    pub fn synthesized_len(&self, num_frames: usize) -> usize {
        if num_frames == 0 {
            0
        } else {
            (num_frames - 1) * self.hop_samples + self.frame_len_samples
        }
    }

    /// Square-root periodic Hann window, `sin(pi n / L)`.
    pub fn window(&self) -> Vec<f64> {
        let l = self.frame_len_samples as f64;
        (0..self.frame_len_samples).map(|n| (PI * n as f64 / l).sin()).collect()
    }
}

/// A multichannel time-frequency signal: one `Q x F` matrix per frame, so
/// column `f` of frame `t` is the array snapshot `x(t, f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSpectrum {
    pub frames: Vec<DMatrix<Complex64>>,
    pub config: StftConfig,
}

impl MultichannelSpectrum {
    pub fn zeros(num_channels: usize, num_frames: usize, config: StftConfig) -> Self {
        let bands = config.num_bands();
        MultichannelSpectrum {
            frames: vec![DMatrix::zeros(num_channels, bands); num_frames],
            config,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_channels(&self) -> usize {
        self.frames.first().map_or(0, |f| f.nrows())
    }

    pub fn num_bands(&self) -> usize {
        self.config.num_bands()
    }

    /// Frames of a single channel (`[frame][band]`).
    pub fn channel(&self, q: usize) -> Vec<Vec<Complex64>> {
        self.frames
            .iter()
            .map(|fr| fr.row(q).iter().copied().collect())
            .collect()
    }

    /// Element-wise sum; both spectra must have identical shape.
    pub fn add_assign(&mut self, other: &MultichannelSpectrum) -> Result<()> {
        if self.frames.len() != other.frames.len()
            || self.num_channels() != other.num_channels()
            || self.config != other.config
        {
            return Err(Error::DimensionMismatch(
                "spectra differ in frames, channels or configuration".into(),
            ));
        }
        for (a, b) in self.frames.iter_mut().zip(&other.frames) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, gain: f64) {
        for fr in &mut self.frames {
            *fr *= Complex64::new(gain, 0.0);
        }
    }
}

/// Reusable transform state for one configuration.
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Stft {
            cfg,
            window: cfg.window(),
            forward: planner.plan_fft_forward(cfg.fft_len),
            inverse: planner.plan_fft_inverse(cfg.fft_len),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// One-sided spectra of every frame of a single channel.
    pub fn analyze_channel(&self, samples: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        let c = &self.cfg;
        if samples.is_empty() {
            return Err(Error::Empty("audio"));
        }
        if samples.len() < c.frame_len_samples {
            return Err(Error::InvalidParameter(format!(
                "signal of {} samples is shorter than one frame ({})",
                samples.len(),
                c.frame_len_samples
            )));
        }
        let frames = c.num_frames(samples.len());
        let bands = c.num_bands();
        let mut buf = vec![Complex64::new(0.0, 0.0); c.fft_len];
        let mut out = Vec::with_capacity(frames);
        for t in 0..frames {
            let start = t * c.hop_samples;
            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for (n, (z, w)) in buf.iter_mut().zip(&self.window).enumerate() {
                *z = Complex64::new(samples[start + n] * w, 0.0);
            }
            self.forward.process(&mut buf);
            out.push(buf[..bands].to_vec());
        }
        Ok(out)
    }

    pub fn analyze(&self, audio: &[Vec<f64>]) -> Result<MultichannelSpectrum> {
        let first = audio.first().ok_or(Error::Empty("audio channels"))?;
        if audio.iter().any(|ch| ch.len() != first.len()) {
            return Err(Error::DimensionMismatch("all channels must have equal length".into()));
        }
        let per_channel = audio
            .iter()
            .map(|ch| self.analyze_channel(ch))
            .collect::<Result<Vec<_>>>()?;
        let frames = per_channel[0].len();
        let bands = self.cfg.num_bands();
        let q = audio.len();
        let frames = (0..frames)
            .map(|t| DMatrix::from_fn(q, bands, |ch, f| per_channel[ch][t][f]))
            .collect();
        Ok(MultichannelSpectrum {
            frames,
            config: self.cfg,
        })
    }

    /// Overlap-add synthesis of a single-channel spectrum.
    pub fn synthesize(&self, frames: &[Vec<Complex64>]) -> Result<Vec<f64>> {
        let c = &self.cfg;
        if frames.is_empty() {
            return Err(Error::Empty("spectrum frames"));
        }
        let bands = c.num_bands();
        if let Some(bad) = frames.iter().find(|fr| fr.len() != bands) {
            return Err(Error::DimensionMismatch(format!(
                "frame has {} bands, configuration expects {}",
                bad.len(),
                bands
            )));
        }
        let n = c.fft_len;
        let scale = 1.0 / n as f64;
        let mut out = vec![0.0; c.synthesized_len(frames.len())];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (t, fr) in frames.iter().enumerate() {
            buf[..bands].copy_from_slice(fr);
            // Hermitian completion of the negative frequencies.
            for k in bands..n {
                buf[k] = fr[n - k].conj();
            }
            buf[0].im = 0.0;
            if n.is_multiple_of(2) {
                buf[n / 2].im = 0.0;
            }
            self.inverse.process(&mut buf);
            let start = t * c.hop_samples;
            for (i, w) in self.window.iter().enumerate() {
                out[start + i] += buf[i].re * scale * w;
            }
        }
        Ok(out)
    }
}

pub fn analyze(audio: &[Vec<f64>], cfg: StftConfig) -> Result<MultichannelSpectrum> {
    Stft::new(cfg)?.analyze(audio)
}

pub fn synthesize(frames: &[Vec<Complex64>], cfg: StftConfig) -> Result<Vec<f64>> {
    Stft::new(cfg)?.synthesize(frames)
}

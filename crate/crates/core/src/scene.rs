//! Ground-truthed synthetic cocktail-party scenes.
//!
//! Every source is a point source rendered through the ATF of its nearest
//! grid node by multiplying its STFT with the per-band gains, then
//! synthesizing each microphone. Diffuse noise is a sum of independent
//! white-noise plane waves whose directions are drawn in proportion to the
//! quadrature weights. Stems are rendered separately and summed, so the
//! mixture and its spectrum are exact sums of the stems.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::{AtfSet, Direction};
use crate::stft::{MultichannelSpectrum, Stft, StftConfig};

/// Smallest plane-wave count accepted for a diffuse field.
pub const MIN_DIFFUSE_WAVES: usize = 32;

/// RMS of the target's clean signal over its active span.
const TARGET_RMS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub azimuth_deg: f64,
    #[serde(default = "horizon")]
    pub inclination_deg: f64,
    #[serde(default = "default_onset")]
    pub onset_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfererSpec {
    pub azimuth_deg: f64,
    #[serde(default = "horizon")]
    pub inclination_deg: f64,
    /// Power relative to the target at the reference microphone over the
    /// target's active span.
    pub level_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffuseSpec {
    /// Power relative to the target, as for interferers.
    pub level_db: f64,
    #[serde(default = "default_waves")]
    pub num_waves: usize,
}

fn horizon() -> f64 {
    90.0
}

fn default_onset() -> f64 {
    2.0
}

fn default_waves() -> usize {
    64
}

fn default_duration() -> f64 {
    6.0
}

/// Scene description, also the schema of scene files (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stft: StftConfig,
    pub target: TargetSpec,
    #[serde(default)]
    pub interferers: Vec<InterfererSpec>,
    #[serde(default)]
    pub diffuse: Option<DiffuseSpec>,
}

impl Scene {
    /// Target alone, no noise.
    pub fn clean(target: Direction, seed: u64) -> Self {
        Scene {
            duration_s: default_duration(),
            seed,
            stft: StftConfig::default(),
            target: TargetSpec {
                azimuth_deg: target.azimuth_rad.to_degrees(),
                inclination_deg: target.inclination_rad.to_degrees(),
                onset_s: default_onset(),
            },
            interferers: Vec::new(),
            diffuse: None,
        }
    }

    /// Preset with `n_sources` active talkers (the target plus
    /// `n_sources - 1` interferers) at 0 dB total input SNR:
    ///
    /// * 1: diffuse noise at 0 dB
    /// * 2: one interferer at -3 dB, diffuse at -3 dB
    /// * 3: two interferers at -6 dB each, diffuse at -3 dB
    ///
    /// The target sits on a random 6 degree horizontal node; interferers are
    /// at least 30 degrees away from it with inclinations in 75..105 degrees.
    pub fn preset(n_sources: usize, seed: u64) -> Result<Self> {
        let (levels, diffuse_db): (&[f64], f64) = match n_sources {
            1 => (&[], 0.0),
            2 => (&[-3.0], -3.0),
            3 => (&[-6.0, -6.0], -3.0),
            n => return Err(Error::InvalidParameter(format!("no preset for {n} sources"))),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
        let target_az = 6.0 * rng.gen_range(0..60) as f64;
        let interferers = levels
            .iter()
            .map(|&level_db| InterfererSpec {
                azimuth_deg: target_az + rng.gen_range(30.0..330.0),
                inclination_deg: rng.gen_range(75.0..105.0),
                level_db,
            })
            .collect();
        let mut scene = Scene::clean(Direction::horizontal_deg(target_az), seed);
        scene.interferers = interferers;
        scene.diffuse = Some(DiffuseSpec {
            level_db: diffuse_db,
            num_waves: default_waves(),
        });
        Ok(scene)
    }

    /// Preset by name: `n1`, `n2`, `n3` or `nSources=K`.
    pub fn named_preset(name: &str, seed: u64) -> Result<Self> {
        let lower = name.to_ascii_lowercase();
        let digits = lower
            .strip_prefix("nsources=")
            .or_else(|| lower.strip_prefix('n'))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown preset {name:?}")))?;
        let n = digits
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("unknown preset {name:?}")))?;
        Self::preset(n, seed)
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.stft.sample_rate_hz as f64).round() as usize
    }

    pub fn onset_sample(&self) -> usize {
        (self.target.onset_s * self.stft.sample_rate_hz as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        let finite = [
            self.duration_s,
            self.target.onset_s,
            self.target.azimuth_deg,
            self.target.inclination_deg,
        ]
        .into_iter()
        .chain(
            self.interferers
                .iter()
                .flat_map(|i| [i.azimuth_deg, i.inclination_deg, i.level_db]),
        )
        .chain(self.diffuse.iter().map(|d| d.level_db));
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scene parameters"));
        }
        if self.num_samples() < self.stft.frame_len_samples {
            return Err(Error::InvalidParameter(format!(
                "scene of {} s is too short",
                self.duration_s
            )));
        }
        if self.target.onset_s < 0.0 || self.onset_sample() + self.stft.frame_len_samples > self.num_samples() {
            return Err(Error::InvalidParameter(format!(
                "target onset {} s leaves no active span in a {} s scene",
                self.target.onset_s, self.duration_s
            )));
        }
        if let Some(d) = &self.diffuse {
            if d.num_waves < MIN_DIFFUSE_WAVES {
                return Err(Error::InvalidParameter(format!(
                    "diffuse field needs at least {MIN_DIFFUSE_WAVES} plane waves, got {}",
                    d.num_waves
                )));
            }
        }
        Direction::from_degrees(self.target.azimuth_deg, self.target.inclination_deg)?;
        for i in &self.interferers {
            Direction::from_degrees(i.azimuth_deg, i.inclination_deg)?;
        }
        Ok(())
    }

    pub fn target_direction(&self) -> Result<Direction> {
        Direction::from_degrees(self.target.azimuth_deg, self.target.inclination_deg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scene: Scene = toml::from_str(text).map_err(|e| Error::Config {
            path: "<string>".into(),
            reason: e.to_string(),
        })?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config {
            path: "<string>".into(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config {
            path: path.into(),
            reason: e.to_string(),
        })
    }
}

/// Speech-like test signal: voiced syllables (harmonics of a gliding pitch
/// shaped by three formants) with occasional fricatives, separated by short
/// pauses. Normalized to unit RMS.
pub fn speech_like(num_samples: usize, sample_rate_hz: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = vec![0.0; num_samples];
    let f0_base: f64 = rng.gen_range(100.0..220.0);
    let nyq = 0.45 * sample_rate_hz;
    let mut start = (rng.gen_range(0.0..0.05) * sample_rate_hz) as usize;
    while start < num_samples {
        let len = (rng.gen_range(0.12..0.30) * sample_rate_hz) as usize;
        let end = (start + len).min(num_samples);
        let amp = rng.gen_range(0.5..1.0);
        if rng.gen_bool(0.2) {
            let mut prev = 0.0;
            for (k, n) in (start..end).enumerate() {
                let env = (PI * k as f64 / len as f64).sin().powi(2);
                let w: f64 = StandardNormal.sample(rng);
                out[n] += 0.3 * amp * env * (w - prev);
                prev = w;
            }
        } else {
            let f0_start = f0_base * rng.gen_range(0.9..1.1);
            let f0_end = f0_base * rng.gen_range(0.85..1.15);
            let formants = [
                (rng.gen_range(300.0..800.0), 90.0, 1.0),
                (rng.gen_range(900.0..2300.0), 130.0, 0.6),
                (rng.gen_range(2400.0..3300.0), 180.0, 0.3),
            ];
            let n_harm = (nyq / f0_start.min(f0_end)).floor() as usize;
            let mut phases = vec![0.0f64; n_harm + 1];
            for (k, n) in (start..end).enumerate() {
                let frac = k as f64 / len as f64;
                let env = (PI * frac).sin().powi(2);
                let f0 = f0_start + (f0_end - f0_start) * frac;
                let mut s = 0.0;
                for (h, ph) in phases.iter_mut().enumerate().skip(1) {
                    let fh = h as f64 * f0;
                    if fh >= nyq {
                        break;
                    }
                    *ph += 2.0 * PI * fh / sample_rate_hz;
                    let gain: f64 = formants
                        .iter()
                        .map(|&(fc, bw, g)| g * (-0.5 * ((fh - fc) / bw).powi(2)).exp())
                        .sum::<f64>()
                        + 0.05 / h as f64;
                    s += gain * ph.sin();
                }
                out[n] += amp * env * s;
            }
        }
        start = end + (rng.gen_range(0.03..0.15) * sample_rate_hz) as usize;
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / num_samples.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

/// Grid indices for `count` diffuse plane waves, drawn by systematic
/// sampling of the quadrature weights in inclination-major order with one
/// random offset.
pub fn diffuse_directions(atf: &AtfSet, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    let w = atf.quadrature_weights().w;
    let grid = atf.grid;
    let order: Vec<usize> = (0..grid.n_inclination)
        .flat_map(|ii| (0..grid.n_azimuth).map(move |ia| grid.index(ia, ii)))
        .collect();
    let total: f64 = order.iter().map(|&i| w[i]).sum();
    let offset: f64 = rng.gen_range(0.0..1.0);
    let mut picks = Vec::with_capacity(count);
    let mut acc = 0.0;
    let mut k = 0;
    for &i in &order {
        acc += w[i];
        while k < count && (offset + k as f64) / count as f64 * total < acc {
            picks.push(i);
            k += 1;
        }
    }
    // Rounding can leave the last strata unfilled.
    while picks.len() < count {
        picks.push(*order.iter().rev().find(|&&i| w[i] > 0.0).expect("positive weights"));
    }
    picks
}

/// One rendered component at every microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct Stem {
    pub name: String,
    /// `[mic][sample]`.
    pub audio: Vec<Vec<f64>>,
    pub spectrum: MultichannelSpectrum,
}

impl Stem {
    fn scale(&mut self, gain: f64) {
        self.spectrum.scale(gain);
        for ch in &mut self.audio {
            ch.iter_mut().for_each(|v| *v *= gain);
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub scene: Scene,
    pub mixture: Vec<Vec<f64>>,
    pub mixture_spectrum: MultichannelSpectrum,
    pub target: Stem,
    /// Interferers (`interferer_k`) then `diffuse`.
    pub noise_components: Vec<Stem>,
    pub noise: Stem,
    /// Target at the reference microphone.
    pub ground_truth: Vec<f64>,
    pub onset_sample: usize,
}

impl RenderedScene {
    pub fn sample_rate_hz(&self) -> u32 {
        self.scene.stft.sample_rate_hz
    }

    pub fn num_samples(&self) -> usize {
        self.ground_truth.len()
    }
}

fn render_point(stft: &Stft, atf: &AtfSet, node: usize, clean: &[f64], name: String) -> Result<Stem> {
    let s = stft.analyze_channel(clean)?;
    let q = atf.num_mics();
    let mut spec = MultichannelSpectrum::zeros(q, s.len(), *stft.config());
    for (frame, sf) in spec.frames.iter_mut().zip(&s) {
        for (f, &v) in sf.iter().enumerate() {
            let g = atf.gain(node, f);
            for m in 0..q {
                frame[(m, f)] = g[m] * v;
            }
        }
    }
    Ok(Stem {
        name,
        audio: Vec::new(),
        spectrum: spec,
    })
}

fn synthesize_stem(stft: &Stft, stem: &mut Stem, len: usize) -> Result<()> {
    stem.audio = (0..stem.spectrum.num_channels())
        .map(|q| {
            let mut y = stft.synthesize(&stem.spectrum.channel(q))?;
            y.resize(len, 0.0);
            Ok(y)
        })
        .collect::<Result<_>>()?;
    Ok(())
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Renders `scene` through `atf`. Noise levels are set against the target
/// power at the reference microphone from the onset to the end.
pub fn render(scene: &Scene, atf: &AtfSet) -> Result<RenderedScene> {
    scene.validate()?;
    atf.check_compatible(&scene.stft)?;
    let stft = Stft::new(scene.stft)?;
    let fs = scene.stft.sample_rate_hz as f64;
    let n = scene.num_samples();
    let onset = scene.onset_sample();
    let q = atf.num_mics();

    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    rng.set_stream(0);
    let mut clean = vec![0.0; n];
    let talk = speech_like(n - onset, fs, &mut rng);
    clean[onset..]
        .iter_mut()
        .zip(&talk)
        .for_each(|(c, t)| *c = TARGET_RMS * t);
    let node = atf.nearest_direction(&scene.target_direction()?)?;
    let mut target = render_point(&stft, atf, node, &clean, "target".into())?;
    synthesize_stem(&stft, &mut target, n)?;
    let target_power = power(&target.audio[0][onset..]);

    let mut components = Vec::new();
    let mut levels = Vec::new();
    for (k, spec) in scene.interferers.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        rng.set_stream(1 + k as u64);
        let sig = speech_like(n, fs, &mut rng);
        let dir = Direction::from_degrees(spec.azimuth_deg, spec.inclination_deg)?;
        let node = atf.nearest_direction(&dir)?;
        components.push(render_point(&stft, atf, node, &sig, format!("interferer_{k}"))?);
        levels.push(spec.level_db);
    }
    if let Some(d) = &scene.diffuse {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        rng.set_stream(u64::MAX);
        let dirs = diffuse_directions(atf, d.num_waves, &mut rng);
        let frames = scene.stft.num_frames(n);
        let mut total = MultichannelSpectrum::zeros(q, frames, scene.stft);
        for &dir in &dirs {
            let sig: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let wave = render_point(&stft, atf, dir, &sig, String::new())?;
            total.add_assign(&wave.spectrum)?;
        }
        components.push(Stem {
            name: "diffuse".into(),
            audio: Vec::new(),
            spectrum: total,
        });
        levels.push(d.level_db);
    }
    for (stem, level) in components.iter_mut().zip(&levels) {
        synthesize_stem(&stft, stem, n)?;
        let p = power(&stem.audio[0][onset..]);
        if p == 0.0 {
            return Err(Error::InvalidParameter(format!("{} is silent", stem.name)));
        }
        stem.scale((target_power * 10f64.powf(level / 10.0) / p).sqrt());
    }

    let frames = target.spectrum.num_frames();
    let mut noise = Stem {
        name: "noise".into(),
        audio: vec![vec![0.0; n]; q],
        spectrum: MultichannelSpectrum::zeros(q, frames, scene.stft),
    };
    for c in &components {
        noise.spectrum.add_assign(&c.spectrum)?;
        for (acc, ch) in noise.audio.iter_mut().zip(&c.audio) {
            acc.iter_mut().zip(ch).for_each(|(a, b)| *a += b);
        }
    }
    let mut mixture_spectrum = target.spectrum.clone();
    mixture_spectrum.add_assign(&noise.spectrum)?;
    let mixture = target
        .audio
        .iter()
        .zip(&noise.audio)
        .map(|(t, v)| t.iter().zip(v).map(|(a, b)| a + b).collect())
        .collect();
    Ok(RenderedScene {
        scene: scene.clone(),
        mixture,
        mixture_spectrum,
        ground_truth: target.audio[0].clone(),
        target,
        noise_components: components,
        noise,
        onset_sample: onset,
    })
}

/// Complex coherence between channels `i` and `j` per band, averaged over
/// all frames.
pub fn spatial_coherence(spec: &MultichannelSpectrum, i: usize, j: usize) -> Vec<Complex64> {
    (0..spec.num_bands())
        .map(|f| {
            let mut cross = Complex64::new(0.0, 0.0);
            let mut pi = 0.0;
            let mut pj = 0.0;
            for fr in &spec.frames {
                let (a, b) = (fr[(i, f)], fr[(j, f)]);
                cross += a * b.conj();
                pi += a.norm_sqr();
                pj += b.norm_sqr();
            }
            if pi == 0.0 || pj == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                cross / (pi * pj).sqrt()
            }
        })
        .collect()
}

/// Writes `[channel][sample]` audio as 32-bit float PCM.
pub fn write_wav(path: impl AsRef<Path>, channels: &[Vec<f64>], sample_rate_hz: u32) -> Result<()> {
    let path = path.as_ref();
    let first = channels.first().ok_or(Error::Empty("audio channels"))?;
    if channels.iter().any(|c| c.len() != first.len()) {
        return Err(Error::DimensionMismatch("channels differ in length".into()));
    }
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate: sample_rate_hz,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let wav_err = |source| Error::Wav {
        path: path.into(),
        source,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for n in 0..first.len() {
        for c in channels {
            w.write_sample(c[n] as f32).map_err(wav_err)?;
        }
    }
    w.finalize().map_err(wav_err)
}

/// Reads 16/24/32-bit integer or 32-bit float PCM as `[channel][sample]`
/// in `[-1, 1]` full scale.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(Vec<Vec<f64>>, u32)> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.into(),
        source,
    };
    let mut r = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = r.spec();
    let q = spec.channels as usize;
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        hound::SampleFormat::Int => {
            let full = (1i64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 / full))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?
        }
    };
    let mut channels = vec![Vec::with_capacity(samples.len() / q.max(1)); q];
    for (k, v) in samples.into_iter().enumerate() {
        channels[k % q].push(v);
    }
    Ok((channels, spec.sample_rate))
}

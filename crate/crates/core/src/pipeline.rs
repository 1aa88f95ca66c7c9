//! End-to-end enhancement: STFT, Hybrid and Iso beamforming per bin,
//! frame-wise PCA denoising and overlap-add synthesis. Baseline methods run
//! through the same STFT chain.
//!
//! The target direction is read per frame from a piecewise-constant track
//! (the latest point whose time does not exceed the frame start) and snapped
//! to the ATF grid. Dictionaries are cached per snapped node. Adaptive state
//! (PCA and MPDR covariances) survives dictionary swaps.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamform::{apply_slice, mpdr_step, EmaCovTracker};
use crate::error::{Error, Result};
use crate::hybrid::hybrid_frame;
use crate::noise_fields::{DictionaryConfig, DictionaryVariant, ModelKind, NoiseFieldLibrary, WeightDictionary};
use crate::spatial::{AtfSet, Direction};
use crate::stft::{MultichannelSpectrum, Stft, StftConfig};
use crate::subspace::{pca_step, FramePair, PcaTracker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Passthrough,
    Iso,
    Mpdr,
    Hyb,
    SsHyb,
    #[serde(rename = "ss-hybx")]
    SsHybX,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Passthrough,
        Method::Iso,
        Method::Mpdr,
        Method::Hyb,
        Method::SsHyb,
        Method::SsHybX,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Passthrough => "passthrough",
            Method::Iso => "iso",
            Method::Mpdr => "mpdr",
            Method::Hyb => "hyb",
            Method::SsHyb => "ss-hyb",
            Method::SsHybX => "ss-hybx",
        }
    }

    /// Dictionary variant this method needs, if any. `Hyb` follows the
    /// configured variant; `Iso` only uses the isotropic entry.
    pub fn dictionary_variant(&self, configured: DictionaryVariant) -> Option<DictionaryVariant> {
        match self {
            Method::Passthrough | Method::Mpdr => None,
            Method::Iso | Method::SsHyb => Some(DictionaryVariant::SsHyb),
            Method::Hyb => Some(configured),
            Method::SsHybX => Some(DictionaryVariant::SsHybX),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.label() == norm || m.label().replace('-', "") == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub time_s: f64,
    pub azimuth_deg: f64,
    #[serde(default = "horizon")]
    pub inclination_deg: f64,
}

fn horizon() -> f64 {
    90.0
}

impl TrackPoint {
    pub fn new(time_s: f64, azimuth_deg: f64, inclination_deg: f64) -> Self {
        TrackPoint {
            time_s,
            azimuth_deg,
            inclination_deg,
        }
    }

    pub fn direction(&self) -> Result<Direction> {
        Direction::from_degrees(self.azimuth_deg, self.inclination_deg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stft: StftConfig,
    pub t_mpdr_s: f64,
    pub t_pca_s: f64,
    pub dict_variant: DictionaryVariant,
    pub pw_condition_cap: f64,
    pub dynamic_ranges_db: Vec<f64>,
    pub anisotropic_step_deg: f64,
    pub method: Method,
    pub target_track: Vec<TrackPoint>,
    pub cache_capacity: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let dict = DictionaryConfig::default();
        PipelineConfig {
            stft: StftConfig::default(),
            t_mpdr_s: 0.050,
            t_pca_s: 0.080,
            dict_variant: DictionaryVariant::SsHyb,
            pw_condition_cap: dict.pw_condition_cap,
            dynamic_ranges_db: dict.dynamic_ranges_db,
            anisotropic_step_deg: dict.anisotropic_step_deg,
            method: Method::SsHyb,
            target_track: vec![TrackPoint::new(0.0, 0.0, 90.0)],
            cache_capacity: 8,
        }
    }
}

impl PipelineConfig {
    pub fn with_method(method: Method) -> Self {
        PipelineConfig {
            method,
            ..Default::default()
        }
    }

    /// Fixed target for the whole signal.
    pub fn steered_to(mut self, target: Direction) -> Self {
        self.target_track = vec![TrackPoint::new(
            0.0,
            target.azimuth_rad.to_degrees(),
            target.inclination_rad.to_degrees(),
        )];
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if !(self.t_mpdr_s > 0.0) || !(self.t_pca_s > 0.0) {
            return Err(Error::InvalidParameter("time constants must be positive".into()));
        }
        if !(self.pw_condition_cap >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "condition cap {} must be >= 1",
                self.pw_condition_cap
            )));
        }
        if self.cache_capacity == 0 {
            return Err(Error::InvalidParameter("cache capacity must be positive".into()));
        }
        let first = self.target_track.first().ok_or(Error::Empty("target track"))?;
        if first.time_s > 0.0 {
            return Err(Error::InvalidParameter(format!(
                "target track starts at {} s and does not cover the signal start",
                first.time_s
            )));
        }
        for p in &self.target_track {
            if !p.time_s.is_finite() {
                return Err(Error::NonFinite("target track time"));
            }
            p.direction()?;
        }
        if self.target_track.windows(2).any(|w| w[1].time_s < w[0].time_s) {
            return Err(Error::InvalidParameter(
                "target track times must be non-decreasing".into(),
            ));
        }
        Ok(())
    }

    pub fn dictionary_config(&self, variant: DictionaryVariant) -> DictionaryConfig {
        DictionaryConfig {
            variant,
            dynamic_ranges_db: self.dynamic_ranges_db.clone(),
            anisotropic_step_deg: self.anisotropic_step_deg,
            pw_condition_cap: self.pw_condition_cap,
        }
    }

    /// Track point in force at `time_s`.
    pub fn target_at(&self, time_s: f64) -> Result<Direction> {
        let i = self.target_track.partition_point(|p| p.time_s <= time_s);
        self.target_track[i.saturating_sub(1)].direction()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: "<string>".into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
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
        let cfg: PipelineConfig = toml::from_str(&text).map_err(|e| Error::Config {
            path: path.into(),
            reason: e.to_string(),
        })?;
        cfg.validate().map_err(|e| Error::Config {
            path: path.into(),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }
}

/// Per-frame byproducts of an enhancement run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Selected model per frame and band (Hybrid methods only).
    pub selections: Vec<Vec<u32>>,
    /// Descending eigenvalues of the PCA covariance per frame (SS methods only).
    pub eigvals: Vec<[f64; 2]>,
    /// Snapped grid node per frame.
    pub target_nodes: Vec<usize>,
    /// Dictionary size, 0 for methods without one.
    pub num_models: usize,
    /// Frames at which the snapped node changed.
    pub rebuilds: usize,
    /// Dictionary cache misses, including the first build.
    pub dictionary_builds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOutput {
    pub method: Method,
    /// `[frame][band]`.
    pub spectrum: Vec<Vec<Complex64>>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancementResult {
    pub method: Method,
    /// `(T - 1) * hop + frame_len` samples.
    pub audio_out: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// Small most-recently-used-first cache of dictionaries keyed by grid node.
struct DictionaryCache {
    capacity: usize,
    entries: Vec<(usize, Arc<WeightDictionary>)>,
}

impl DictionaryCache {
    fn get_or_build(
        &mut self,
        node: usize,
        build: impl FnOnce() -> Result<WeightDictionary>,
    ) -> Result<(Arc<WeightDictionary>, bool)> {
        if let Some(pos) = self.entries.iter().position(|(n, _)| *n == node) {
            let entry = self.entries.remove(pos);
            let dict = entry.1.clone();
            self.entries.insert(0, entry);
            return Ok((dict, false));
        }
        let dict = Arc::new(build()?);
        self.entries.insert(0, (node, dict.clone()));
        self.entries.truncate(self.capacity);
        Ok((dict, true))
    }
}

/// Reusable enhancer for one ATF set and configuration.
pub struct Pipeline {
    cfg: PipelineConfig,
    atf: Arc<AtfSet>,
    stft: Stft,
    library: Option<Arc<NoiseFieldLibrary>>,
    cache: DictionaryCache,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, atf: Arc<AtfSet>) -> Result<Self> {
        cfg.validate()?;
        let library = match cfg.method.dictionary_variant(cfg.dict_variant) {
            Some(v) => Some(Arc::new(NoiseFieldLibrary::new(atf.clone(), cfg.dictionary_config(v))?)),
            None => None,
        };
        Self::assemble(cfg, atf, library)
    }

    /// Reuses a prebuilt library, which must match the method's variant.
    pub fn with_library(cfg: PipelineConfig, library: Arc<NoiseFieldLibrary>) -> Result<Self> {
        cfg.validate()?;
        let atf = library.atf().clone();
        let library = match cfg.method.dictionary_variant(cfg.dict_variant) {
            Some(v) => {
                if *library.config() != cfg.dictionary_config(v) {
                    return Err(Error::InvalidParameter(format!(
                        "library was built for {:?}, method {} needs {:?}",
                        library.config().variant,
                        cfg.method,
                        v
                    )));
                }
                Some(library)
            }
            None => None,
        };
        Self::assemble(cfg, atf, library)
    }

    fn assemble(cfg: PipelineConfig, atf: Arc<AtfSet>, library: Option<Arc<NoiseFieldLibrary>>) -> Result<Self> {
        atf.check_compatible(&cfg.stft)?;
        let stft = Stft::new(cfg.stft)?;
        let cache = DictionaryCache {
            capacity: cfg.cache_capacity,
            entries: Vec::new(),
        };
        Ok(Pipeline {
            cfg,
            atf,
            stft,
            library,
            cache,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn atf(&self) -> &Arc<AtfSet> {
        &self.atf
    }

    pub fn stft(&self) -> &Stft {
        &self.stft
    }

    /// Dictionary for the node nearest to `target`, from the cache when
    /// possible.
    pub fn dictionary_for(&mut self, target: &Direction) -> Result<Arc<WeightDictionary>> {
        let node = self.atf.nearest_direction(target)?;
        Ok(self.fetch(node)?.0)
    }

    fn fetch(&mut self, node: usize) -> Result<(Arc<WeightDictionary>, bool)> {
        let lib = self
            .library
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter(format!("method {} uses no dictionary", self.cfg.method)))?;
        let target = self.atf.directions[node];
        self.cache.get_or_build(node, || lib.build_dictionary(&target))
    }

    /// Enhances a time-domain multichannel signal.
    pub fn enhance(&mut self, audio: &[Vec<f64>]) -> Result<EnhancementResult> {
        if audio.len() != self.atf.num_mics() {
            return Err(Error::DimensionMismatch(format!(
                "{}-channel input for a {}-microphone ATF set",
                audio.len(),
                self.atf.num_mics()
            )));
        }
        let spec = self.stft.analyze(audio)?;
        let out = self.enhance_spectrum(&spec)?;
        Ok(EnhancementResult {
            method: out.method,
            audio_out: self.stft.synthesize(&out.spectrum)?,
            diagnostics: out.diagnostics,
        })
    }

    /// Enhances a multichannel spectrum, returning the single-channel output
    /// spectrum. Adaptive state starts fresh on every call.
    pub fn enhance_spectrum(&mut self, x: &MultichannelSpectrum) -> Result<SpectralOutput> {
        if x.config != self.cfg.stft {
            return Err(Error::DimensionMismatch(
                "spectrum was analyzed with a different STFT configuration".into(),
            ));
        }
        if x.num_frames() == 0 {
            return Err(Error::Empty("spectrum frames"));
        }
        let q = self.atf.num_mics();
        if x.num_channels() != q {
            return Err(Error::DimensionMismatch(format!(
                "{}-channel spectrum for a {}-microphone ATF set",
                x.num_channels(),
                q
            )));
        }
        let method = self.cfg.method;
        let bands = x.num_bands();
        let dt = self.cfg.stft.frame_period_s();
        let mut pca = PcaTracker::new(self.cfg.t_pca_s, dt)?;
        let mut mpdr = match method {
            Method::Mpdr => Some(EmaCovTracker::new(bands, q, self.cfg.t_mpdr_s, dt)?),
            _ => None,
        };
        let mut diag = Diagnostics::default();
        let mut spectrum = Vec::with_capacity(x.num_frames());
        let mut node = usize::MAX;
        let mut dict: Option<Arc<WeightDictionary>> = None;
        let mut steering: Vec<DVector<Complex64>> = Vec::new();

        for (t, frame) in x.frames.iter().enumerate() {
            let target = self.cfg.target_at(t as f64 * dt)?;
            let snapped = self.atf.nearest_direction(&target)?;
            if snapped != node {
                if node != usize::MAX {
                    diag.rebuilds += 1;
                }
                node = snapped;
                if self.library.is_some() {
                    let (d, built) = self.fetch(node)?;
                    diag.num_models = d.num_models();
                    diag.dictionary_builds += built as usize;
                    dict = Some(d);
                }
                if mpdr.is_some() {
                    steering = (0..bands)
                        .map(|f| self.atf.steering_at(node, f))
                        .collect::<Result<_>>()?;
                }
            }
            diag.target_nodes.push(node);

            let y = match method {
                Method::Passthrough => frame.row(0).iter().copied().collect(),
                Method::Mpdr => {
                    let tracker = mpdr.as_mut().expect("tracker for MPDR");
                    let data = frame.as_slice();
                    (0..bands)
                        .map(|f| Ok(mpdr_step(tracker, f, &data[f * q..(f + 1) * q], &steering[f])?.1))
                        .collect::<Result<Vec<_>>>()?
                }
                Method::Iso => iso_spectrum(dict.as_deref().expect("dictionary"), frame.as_slice(), q),
                Method::Hyb | Method::SsHyb | Method::SsHybX => {
                    let d = dict.as_deref().expect("dictionary");
                    let (y_hyb, sel) = hybrid_frame(d, frame)?;
                    diag.selections.push(sel);
                    if method == Method::Hyb {
                        y_hyb
                    } else {
                        let y_iso = iso_spectrum(d, frame.as_slice(), q);
                        let res = pca_step(&mut pca, &FramePair::new(y_hyb, y_iso)?)?;
                        diag.eigvals.push(res.eigvals);
                        res.y_out
                    }
                }
            };
            spectrum.push(y);
        }
        Ok(SpectralOutput {
            method,
            spectrum,
            diagnostics: diag,
        })
    }
}

fn iso_spectrum(dict: &WeightDictionary, data: &[Complex64], q: usize) -> Vec<Complex64> {
    let iso = dict
        .model_index(&ModelKind::Isotropic)
        .expect("every dictionary holds the isotropic model");
    (0..dict.num_bands())
        .map(|f| apply_slice(dict.weight(iso, f), &data[f * q..(f + 1) * q]))
        .collect()
}

/// One-shot enhancement with a freshly built pipeline.
pub fn enhance(audio: &[Vec<f64>], atf: Arc<AtfSet>, cfg: PipelineConfig) -> Result<EnhancementResult> {
    Pipeline::new(cfg, atf)?.enhance(audio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::{freefield_atf_for, glasses_array, GridDims};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_atf() -> Arc<AtfSet> {
        Arc::new(freefield_atf_for(&glasses_array(), GridDims::new(12, 6).unwrap(), &StftConfig::default()).unwrap())
    }

    fn noise(q: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..q)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert_eq!("SSHybX".parse::<Method>().unwrap(), Method::SsHybX);
        assert!("foo".parse::<Method>().is_err());
    }

    #[test]
    fn config_defaults_and_toml() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.stft.num_bands(), 81);
        assert_eq!(cfg.pw_condition_cap, 100.0);
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), cfg);
        let partial = PipelineConfig::from_toml_str("method = \"ss-hybx\"\nt_pca_s = 0.1\n").unwrap();
        assert_eq!(partial.method, Method::SsHybX);
        assert_eq!(partial.t_pca_s, 0.1);
        assert_eq!(partial.t_mpdr_s, 0.05);
        assert!(PipelineConfig::from_toml_str("t_pca_s = -1.0").is_err());
        assert!(PipelineConfig::from_toml_str("pw_condition_cap = 0.5").is_err());
        assert!(PipelineConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn track_lookup() {
        let mut cfg = PipelineConfig {
            target_track: vec![TrackPoint::new(0.0, 0.0, 90.0), TrackPoint::new(1.0, 30.0, 90.0)],
            ..Default::default()
        };
        assert_eq!(cfg.target_at(0.5).unwrap(), Direction::horizontal_deg(0.0));
        assert_eq!(cfg.target_at(1.0).unwrap(), Direction::horizontal_deg(30.0));
        cfg.target_track = vec![TrackPoint::new(0.5, 0.0, 90.0)];
        assert!(cfg.validate().is_err());
        cfg.target_track = vec![];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn passthrough_reproduces_reference_channel() {
        let atf = small_atf();
        let x = noise(6, 2000, 3);
        let out = enhance(&x, atf, PipelineConfig::with_method(Method::Passthrough)).unwrap();
        let (l, h) = (160, 80);
        assert_eq!(out.audio_out.len(), 23 * h + l);
        let n = out.audio_out.len();
        for (y, x) in out.audio_out[h..n - h].iter().zip(&x[0][h..]) {
            assert!((y - x).abs() < 1e-10);
        }
    }

    #[test]
    fn hybrid_never_exceeds_iso_power() {
        let atf = small_atf();
        let x = noise(6, 1600, 5);
        let spec = Stft::new(StftConfig::default()).unwrap().analyze(&x).unwrap();
        let hyb = Pipeline::new(PipelineConfig::with_method(Method::Hyb), atf.clone())
            .unwrap()
            .enhance_spectrum(&spec)
            .unwrap();
        let iso = Pipeline::new(PipelineConfig::with_method(Method::Iso), atf)
            .unwrap()
            .enhance_spectrum(&spec)
            .unwrap();
        for (a, b) in hyb.spectrum.iter().zip(&iso.spectrum) {
            for (ya, yb) in a.iter().zip(b) {
                assert!(ya.norm_sqr() <= yb.norm_sqr());
            }
        }
        assert_eq!(hyb.diagnostics.num_models, 302);
    }

    #[test]
    fn rebuild_counting_and_cache() {
        let atf = small_atf();
        let x = noise(6, 4000, 9);
        let mut cfg = PipelineConfig::with_method(Method::SsHyb);
        let mut p = Pipeline::new(cfg.clone(), atf.clone()).unwrap();
        let out = p.enhance(&x).unwrap();
        assert_eq!(out.diagnostics.rebuilds, 0);
        assert_eq!(out.diagnostics.dictionary_builds, 1);
        // The 12-azimuth grid has nodes every 30 degrees; 10 -> 20 crosses the 15 degree midpoint.
        cfg.target_track = vec![TrackPoint::new(0.0, 10.0, 90.0), TrackPoint::new(0.2, 20.0, 90.0)];
        let mut p = Pipeline::new(cfg.clone(), atf.clone()).unwrap();
        let out = p.enhance(&x).unwrap();
        assert_eq!(out.diagnostics.rebuilds, 1);
        assert_eq!(out.diagnostics.dictionary_builds, 2);
        assert!(out.audio_out.iter().all(|v| v.is_finite()));
        // Back and forth: cached, so no new builds.
        cfg.target_track.push(TrackPoint::new(0.3, 0.0, 90.0));
        cfg.target_track.push(TrackPoint::new(0.35, 30.0, 90.0));
        let mut p = Pipeline::new(cfg, atf).unwrap();
        let out = p.enhance(&x).unwrap();
        assert_eq!(out.diagnostics.rebuilds, 3);
        assert_eq!(out.diagnostics.dictionary_builds, 2);
    }

    #[test]
    fn deterministic_and_finite() {
        let atf = small_atf();
        let x = noise(6, 1200, 1);
        for m in Method::ALL {
            let a = enhance(&x, atf.clone(), PipelineConfig::with_method(m)).unwrap();
            let b = enhance(&x, atf.clone(), PipelineConfig::with_method(m)).unwrap();
            assert_eq!(a.audio_out, b.audio_out, "{m}");
            assert!(a.audio_out.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let atf = small_atf();
        assert!(enhance(&noise(4, 1000, 0), atf.clone(), PipelineConfig::default()).is_err());
        let cfg = PipelineConfig {
            stft: StftConfig::new(16_000, 256, 128, 256).unwrap(),
            ..Default::default()
        };
        assert!(Pipeline::new(cfg, atf.clone()).is_err());
        let lib =
            Arc::new(NoiseFieldLibrary::new(atf, DictionaryConfig::with_variant(DictionaryVariant::SsHyb)).unwrap());
        assert!(Pipeline::with_library(PipelineConfig::with_method(Method::SsHybX), lib.clone()).is_err());
        assert!(Pipeline::with_library(PipelineConfig::with_method(Method::SsHyb), lib).is_ok());
    }
}

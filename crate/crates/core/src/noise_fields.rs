//! Noise covariance models and the Hybrid weight dictionary.
//!
//! Every model is a per-band `Q x Q` spatial covariance built from the ATF
//! grid. The dictionary stores one MVDR weight vector per model and band for
//! a single steering direction, in a fixed order:
//!
//! 1. identity (spatially white)
//! 2. spherically isotropic
//! 3. unimodal anisotropic, grouped by dynamic range, then peak azimuth
//! 4. plane waves (SS-HybX only), by grid direction index

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
#[cfg(test)]
use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::beamform::mvdr_solve;
use crate::error::{Error, Result};
use crate::spatial::{azimuth_distance, AtfSet, Direction};

const WDC_MAGIC: &[u8; 4] = b"WDC1";

/// Hermitian positive semi-definite `Q x Q` matrix with conditioning metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianCovariance {
    m: DMatrix<Complex64>,
    /// Diagonal loading already added to `m`.
    pub loading_applied: f64,
    /// `lambda_max / lambda_min`; infinite for singular matrices.
    pub condition_estimate: f64,
}

impl HermitianCovariance {
    /// Symmetrizes `m` and checks that it is (numerically) PSD.
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        Self::with_loading(m, 0.0)
    }

    fn with_loading(m: DMatrix<Complex64>, loading_applied: f64) -> Result<Self> {
        let m = hermitian_part(m)?;
        let eig = eigenvalues_desc(&m);
        let max = eig[0];
        let min = *eig.last().unwrap();
        if min < -1e-10 * max.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidParameter(format!(
                "covariance is not PSD (eigenvalues {max:e} .. {min:e})"
            )));
        }
        Ok(HermitianCovariance {
            m,
            loading_applied,
            condition_estimate: condition_from(max, min),
        })
    }

    /// Identity matrix of dimension `q`.
    pub fn identity(q: usize) -> Self {
        HermitianCovariance {
            m: DMatrix::identity(q, q),
            loading_applied: 0.0,
            condition_estimate: 1.0,
        }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.m[(i, i)].re).sum()
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        eigenvalues_desc(&self.m)
    }

    /// `R + delta I`.
    pub fn loaded(&self, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::InvalidParameter(format!("loading {delta} must be >= 0")));
        }
        let mut m = self.m.clone();
        for i in 0..self.dim() {
            m[(i, i)] += delta;
        }
        Self::with_loading(m, self.loading_applied + delta)
    }

    pub fn scaled(&self, c: f64) -> Self {
        HermitianCovariance {
            m: &self.m * Complex64::new(c, 0.0),
            loading_applied: self.loading_applied * c,
            condition_estimate: self.condition_estimate,
        }
    }
}

fn condition_from(max: f64, min: f64) -> f64 {
    if min <= 0.0 {
        f64::INFINITY
    } else {
        (max / min).max(1.0)
    }
}

fn hermitian_part(m: DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "covariance must be square and nonempty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    let ah = m.adjoint();
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let dev = (&m - &ah).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if dev > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotHermitian(dev));
    }
    let mut h = (m + ah) * Complex64::new(0.5, 0.0);
    for i in 0..h.nrows() {
        h[(i, i)].im = 0.0;
    }
    Ok(h)
}

pub(crate) fn eigenvalues_desc(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut e: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(|a, b| b.total_cmp(a));
    e
}

fn outer_accumulate(acc: &mut DMatrix<Complex64>, a: &[Complex64], weight: f64) {
    let q = a.len();
    for j in 0..q {
        let cj = a[j].conj() * weight;
        for i in 0..q {
            acc[(i, j)] += a[i] * cj;
        }
    }
}

/// Discrete isotropic NCM `sum_i w_i a(Omega_i) a(Omega_i)^H`.
pub fn ncm_isotropic(atf: &AtfSet, band: usize) -> Result<HermitianCovariance> {
    if atf.quadrature_weights().total() <= 0.0 {
        return Err(Error::InvalidParameter("degenerate grid: zero total weight".into()));
    }
    // Same summation order as the dictionary library, so both agree bitwise.
    let r: DMatrix<Complex64> = column_covariances(atf, band).iter().sum();
    HermitianCovariance::new(r)
}

/// Relative power of the unimodal anisotropic field at wrapped azimuth
/// distance `delta_phi` from its peak: linear in power from 1 at the peak to
/// `10^(-dr/10)` at the antipode.
pub fn anisotropic_power(delta_phi: f64, dynamic_range_db: f64) -> f64 {
    let floor = 10f64.powf(-dynamic_range_db / 10.0);
    1.0 - (1.0 - floor) * (delta_phi / std::f64::consts::PI)
}

/// Unimodal anisotropic NCM `sum_i w_i P(dphi_i) a a^H`, the same azimuth
/// profile applied at every inclination.
pub fn ncm_anisotropic(
    atf: &AtfSet,
    band: usize,
    peak_azimuth_rad: f64,
    dynamic_range_db: f64,
) -> Result<HermitianCovariance> {
    check_dynamic_range(dynamic_range_db)?;
    let cols = column_covariances(atf, band);
    anisotropic_from_columns(atf, &cols, peak_azimuth_rad, dynamic_range_db)
}

fn check_dynamic_range(dr: f64) -> Result<()> {
    if !(dr > 0.0) || !dr.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "dynamic range must be a positive dB value, got {dr}"
        )));
    }
    Ok(())
}

/// Quadrature-weighted covariance of every azimuth column at one band.
fn column_covariances(atf: &AtfSet, band: usize) -> Vec<DMatrix<Complex64>> {
    let grid = atf.grid;
    let q = atf.quadrature_weights();
    (0..grid.n_azimuth)
        .map(|ia| {
            let mut c = DMatrix::zeros(atf.num_mics(), atf.num_mics());
            for ii in 0..grid.n_inclination {
                let i = grid.index(ia, ii);
                if q.w[i] != 0.0 {
                    outer_accumulate(&mut c, atf.gain(i, band), q.w[i]);
                }
            }
            c
        })
        .collect()
}

fn anisotropic_from_columns(
    atf: &AtfSet,
    cols: &[DMatrix<Complex64>],
    peak: f64,
    dr: f64,
) -> Result<HermitianCovariance> {
    let mut r = DMatrix::zeros(atf.num_mics(), atf.num_mics());
    for (ia, c) in cols.iter().enumerate() {
        let p = anisotropic_power(azimuth_distance(atf.grid.azimuth(ia), peak), dr);
        r += c * Complex64::new(p, 0.0);
    }
    HermitianCovariance::new(r)
}

/// Smallest diagonal loading that brings the condition number to at most
/// `max_condition`.
pub fn limit_condition(cov: &HermitianCovariance, max_condition: f64) -> Result<HermitianCovariance> {
    if !(max_condition >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "condition cap must be >= 1, got {max_condition}"
        )));
    }
    let eig = cov.eigenvalues();
    let (max, min) = (eig[0], *eig.last().unwrap());
    if max <= 0.0 || condition_from(max, min) <= max_condition {
        return Ok(cov.clone());
    }
    if max_condition == 1.0 || max_condition.is_infinite() {
        return if max_condition.is_infinite() {
            Ok(cov.clone())
        } else {
            Err(Error::InvalidParameter(
                "condition cap of 1 needs infinite loading for a non-white matrix".into(),
            ))
        };
    }
    let delta = (max - max_condition * min) / (max_condition - 1.0);
    cov.loaded(delta.max(0.0))
}

/// Plane-wave NCM `a a^H + delta I`, with `delta = |a|^2 / (cap - 1)` so the
/// condition number equals the cap.
pub fn ncm_planewave(atf: &AtfSet, band: usize, dir_index: usize, max_condition: f64) -> Result<HermitianCovariance> {
    if !(max_condition >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "condition cap must be >= 1, got {max_condition}"
        )));
    }
    if dir_index >= atf.num_directions() {
        return Err(Error::InvalidParameter(format!("direction {dir_index} out of range")));
    }
    let (m, delta, cond) = planewave_matrix(atf.gain(dir_index, band), max_condition)?;
    Ok(HermitianCovariance {
        m,
        loading_applied: delta,
        condition_estimate: cond,
    })
}

fn planewave_matrix(a: &[Complex64], cap: f64) -> Result<(DMatrix<Complex64>, f64, f64)> {
    let q = a.len();
    let norm2: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let mut m = DMatrix::zeros(q, q);
    outer_accumulate(&mut m, a, 1.0);
    // Rank one: eigenvalues |a|^2 and 0 (q - 1 times).
    let (delta, cond) = if q == 1 || norm2 == 0.0 || cap.is_infinite() {
        (0.0, if q == 1 && norm2 > 0.0 { 1.0 } else { f64::INFINITY })
    } else if cap == 1.0 {
        return Err(Error::InvalidParameter(
            "condition cap of 1 needs infinite loading for a plane wave".into(),
        ));
    } else {
        let delta = norm2 / (cap - 1.0);
        (delta, (norm2 + delta) / delta)
    };
    for i in 0..q {
        m[(i, i)] += delta;
        m[(i, i)].im = 0.0;
    }
    Ok((m, delta, cond))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    Identity,
    Isotropic,
    UnimodalAnisotropic {
        peak_azimuth_rad: f64,
        dynamic_range_db: f64,
    },
    PlaneWave {
        direction_index: usize,
    },
}

impl ModelKind {
    fn tag(&self) -> u8 {
        match self {
            ModelKind::Identity => 0,
            ModelKind::Isotropic => 1,
            ModelKind::UnimodalAnisotropic { .. } => 2,
            ModelKind::PlaneWave { .. } => 3,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Identity => write!(f, "identity"),
            ModelKind::Isotropic => write!(f, "isotropic"),
            ModelKind::UnimodalAnisotropic {
                peak_azimuth_rad,
                dynamic_range_db,
            } => write!(
                f,
                "anisotropic(peak={:.1}deg, dr={dynamic_range_db}dB)",
                peak_azimuth_rad.to_degrees()
            ),
            ModelKind::PlaneWave { direction_index } => write!(f, "plane-wave({direction_index})"),
        }
    }
}

/// A noise field model materialized for every band.
#[derive(Debug, Clone)]
pub struct NoiseFieldModel {
    pub kind: ModelKind,
    pub ncm_per_band: Vec<HermitianCovariance>,
}

impl NoiseFieldModel {
    pub fn build(kind: ModelKind, atf: &AtfSet, pw_condition_cap: f64) -> Result<Self> {
        let ncm_per_band = (0..atf.num_bands())
            .map(|f| match kind {
                ModelKind::Identity => Ok(HermitianCovariance::identity(atf.num_mics())),
                ModelKind::Isotropic => ncm_isotropic(atf, f),
                ModelKind::UnimodalAnisotropic {
                    peak_azimuth_rad,
                    dynamic_range_db,
                } => ncm_anisotropic(atf, f, peak_azimuth_rad, dynamic_range_db),
                ModelKind::PlaneWave { direction_index } => ncm_planewave(atf, f, direction_index, pw_condition_cap),
            })
            .collect::<Result<_>>()?;
        Ok(NoiseFieldModel { kind, ncm_per_band })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum DictionaryVariant {
    #[serde(rename = "ss-hyb")]
    SsHyb,
    #[serde(rename = "ss-hybx")]
    SsHybX,
}

impl std::str::FromStr for DictionaryVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ss-hyb" | "sshyb" => Ok(DictionaryVariant::SsHyb),
            "ss-hybx" | "sshybx" => Ok(DictionaryVariant::SsHybX),
            other => Err(Error::InvalidParameter(format!("unknown dictionary variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryConfig {
    pub variant: DictionaryVariant,
    pub dynamic_ranges_db: Vec<f64>,
    pub anisotropic_step_deg: f64,
    pub pw_condition_cap: f64,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            variant: DictionaryVariant::SsHyb,
            dynamic_ranges_db: vec![8.0, 16.0, 24.0, 32.0, 40.0],
            anisotropic_step_deg: 6.0,
            pw_condition_cap: 100.0,
        }
    }
}

impl DictionaryConfig {
    pub fn with_variant(variant: DictionaryVariant) -> Self {
        DictionaryConfig {
            variant,
            ..Default::default()
        }
    }

    /// Model list in dictionary order.
    pub fn model_kinds(&self, atf: &AtfSet) -> Result<Vec<ModelKind>> {
        if !(self.anisotropic_step_deg > 0.0) {
            return Err(Error::InvalidParameter("anisotropic step must be positive".into()));
        }
        for &dr in &self.dynamic_ranges_db {
            check_dynamic_range(dr)?;
        }
        let peaks = (360.0 / self.anisotropic_step_deg).round() as usize;
        let mut kinds = vec![ModelKind::Identity, ModelKind::Isotropic];
        for &dr in &self.dynamic_ranges_db {
            for p in 0..peaks {
                kinds.push(ModelKind::UnimodalAnisotropic {
                    peak_azimuth_rad: (p as f64 * self.anisotropic_step_deg).to_radians(),
                    dynamic_range_db: dr,
                });
            }
        }
        if self.variant == DictionaryVariant::SsHybX {
            kinds.extend((0..atf.num_directions()).map(|direction_index| ModelKind::PlaneWave { direction_index }));
        }
        Ok(kinds)
    }
}

/// Target-independent NCMs for every dictionary model, shared by all
/// dictionaries built on the same ATF set. Plane-wave models are generated
/// on demand since they are cheap and numerous.
pub struct NoiseFieldLibrary {
    atf: Arc<AtfSet>,
    config: DictionaryConfig,
    kinds: Vec<ModelKind>,
    // [band][model] for the non-plane-wave models.
    stored: Vec<Vec<DMatrix<Complex64>>>,
}

impl NoiseFieldLibrary {
    pub fn new(atf: Arc<AtfSet>, config: DictionaryConfig) -> Result<Self> {
        let kinds = config.model_kinds(&atf)?;
        if !(config.pw_condition_cap >= 1.0) {
            return Err(Error::InvalidParameter("condition cap must be >= 1".into()));
        }
        let stored = (0..atf.num_bands())
            .into_par_iter()
            .map(|band| {
                let cols = column_covariances(&atf, band);
                let iso: DMatrix<Complex64> = cols.iter().sum();
                let iso = HermitianCovariance::new(iso)?.into_matrix();
                kinds
                    .iter()
                    .filter(|k| !matches!(k, ModelKind::PlaneWave { .. }))
                    .map(|k| match *k {
                        ModelKind::Identity => Ok(DMatrix::identity(atf.num_mics(), atf.num_mics())),
                        ModelKind::Isotropic => Ok(iso.clone()),
                        ModelKind::UnimodalAnisotropic {
                            peak_azimuth_rad,
                            dynamic_range_db,
                        } => Ok(
                            anisotropic_from_columns(&atf, &cols, peak_azimuth_rad, dynamic_range_db)?.into_matrix(),
                        ),
                        ModelKind::PlaneWave { .. } => unreachable!(),
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NoiseFieldLibrary {
            atf,
            config,
            kinds,
            stored,
        })
    }

    pub fn atf(&self) -> &Arc<AtfSet> {
        &self.atf
    }

    pub fn config(&self) -> &DictionaryConfig {
        &self.config
    }

    pub fn kinds(&self) -> &[ModelKind] {
        &self.kinds
    }

    pub fn num_models(&self) -> usize {
        self.kinds.len()
    }

    /// NCM of model `m` at `band`.
    pub fn ncm(&self, m: usize, band: usize) -> Result<DMatrix<Complex64>> {
        match self.kinds[m] {
            ModelKind::PlaneWave { direction_index } => {
                Ok(planewave_matrix(self.atf.gain(direction_index, band), self.config.pw_condition_cap)?.0)
            }
            _ => Ok(self.stored[band][m].clone()),
        }
    }

    /// Precomputes MVDR weights of every model for the grid node nearest to
    /// `target`.
    pub fn build_dictionary(&self, target: &Direction) -> Result<WeightDictionary> {
        let atf = &self.atf;
        let target_index = atf.nearest_direction(target)?;
        let snapped = atf.directions[target_index];
        let q = atf.num_mics();
        let m_total = self.kinds.len();
        let per_band = (0..atf.num_bands())
            .into_par_iter()
            .map(|band| {
                let d = atf.steering_at(target_index, band)?;
                let mut out = Vec::with_capacity(m_total * q);
                for m in 0..m_total {
                    let w = mvdr_solve(&self.ncm(m, band)?, &d)?;
                    out.extend(w.iter().copied());
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WeightDictionary {
            kinds: self.kinds.clone(),
            target: snapped,
            target_index,
            num_bands: atf.num_bands(),
            num_mics: q,
            weights: per_band.concat(),
        })
    }
}

/// Builds a dictionary in one call (library construction plus weight solve).
pub fn build_dictionary(atf: &AtfSet, target: &Direction, config: &DictionaryConfig) -> Result<WeightDictionary> {
    NoiseFieldLibrary::new(Arc::new(atf.clone()), config.clone())?.build_dictionary(target)
}

/// Precomputed MVDR weights of `M` models for one steering direction.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDictionary {
    pub kinds: Vec<ModelKind>,
    /// Snapped grid direction the weights are steered to.
    pub target: Direction,
    pub target_index: usize,
    num_bands: usize,
    num_mics: usize,
    // [band][model][mic]
    weights: Vec<Complex64>,
}

impl WeightDictionary {
    pub fn from_parts(
        kinds: Vec<ModelKind>,
        target: Direction,
        target_index: usize,
        num_bands: usize,
        num_mics: usize,
        weights_model_major: &[Complex64],
    ) -> Result<Self> {
        let m = kinds.len();
        if m == 0 {
            return Err(Error::Empty("dictionary models"));
        }
        if weights_model_major.len() != m * num_bands * num_mics {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {m} models x {num_bands} bands x {num_mics} mics",
                weights_model_major.len()
            )));
        }
        let mut weights = vec![Complex64::new(0.0, 0.0); weights_model_major.len()];
        for mi in 0..m {
            for f in 0..num_bands {
                let src = (mi * num_bands + f) * num_mics;
                let dst = (f * m + mi) * num_mics;
                weights[dst..dst + num_mics].copy_from_slice(&weights_model_major[src..src + num_mics]);
            }
        }
        Ok(WeightDictionary {
            kinds,
            target,
            target_index,
            num_bands,
            num_mics,
            weights,
        })
    }

    pub fn num_models(&self) -> usize {
        self.kinds.len()
    }

    pub fn num_bands(&self) -> usize {
        self.num_bands
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    /// `w_m(f)`.
    pub fn weight(&self, m: usize, band: usize) -> &[Complex64] {
        let start = (band * self.kinds.len() + m) * self.num_mics;
        &self.weights[start..start + self.num_mics]
    }

    /// All weights of one band, model after model.
    pub fn band_weights(&self, band: usize) -> &[Complex64] {
        let stride = self.kinds.len() * self.num_mics;
        &self.weights[band * stride..(band + 1) * stride]
    }

    pub fn model_index(&self, kind: &ModelKind) -> Option<usize> {
        self.kinds.iter().position(|k| k == kind)
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(WDC_MAGIC)?;
        w.write_u32::<LittleEndian>(self.num_models() as u32)?;
        w.write_u32::<LittleEndian>(self.num_bands as u32)?;
        w.write_u32::<LittleEndian>(self.num_mics as u32)?;
        w.write_f64::<LittleEndian>(self.target.azimuth_rad)?;
        w.write_f64::<LittleEndian>(self.target.inclination_rad)?;
        w.write_u32::<LittleEndian>(self.target_index as u32)?;
        for k in &self.kinds {
            let (index, a, b) = match *k {
                ModelKind::UnimodalAnisotropic {
                    peak_azimuth_rad,
                    dynamic_range_db,
                } => (0, peak_azimuth_rad, dynamic_range_db),
                ModelKind::PlaneWave { direction_index } => (direction_index as u32, 0.0, 0.0),
                _ => (0, 0.0, 0.0),
            };
            w.write_u8(k.tag())?;
            w.write_u32::<LittleEndian>(index)?;
            w.write_f64::<LittleEndian>(a)?;
            w.write_f64::<LittleEndian>(b)?;
        }
        for m in 0..self.num_models() {
            for f in 0..self.num_bands {
                for z in self.weight(m, f) {
                    w.write_f64::<LittleEndian>(z.re)?;
                    w.write_f64::<LittleEndian>(z.im)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |e: std::io::Error| Error::format("WDC1", format!("truncated: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != WDC_MAGIC {
            return Err(Error::format("WDC1", format!("bad magic {magic:?}")));
        }
        let m = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        let f = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        let q = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        let count = m
            .checked_mul(f)
            .and_then(|v| v.checked_mul(q))
            .filter(|&v| v > 0 && v < (1 << 31))
            .ok_or_else(|| Error::format("WDC1", "implausible dimensions"))?;
        let az = r.read_f64::<LittleEndian>().map_err(bad)?;
        let incl = r.read_f64::<LittleEndian>().map_err(bad)?;
        let target = Direction::new(az, incl).map_err(|e| Error::format("WDC1", e.to_string()))?;
        let target_index = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        let mut kinds = Vec::with_capacity(m);
        for _ in 0..m {
            let tag = r.read_u8().map_err(bad)?;
            let index = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
            let a = r.read_f64::<LittleEndian>().map_err(bad)?;
            let b = r.read_f64::<LittleEndian>().map_err(bad)?;
            kinds.push(match tag {
                0 => ModelKind::Identity,
                1 => ModelKind::Isotropic,
                2 => ModelKind::UnimodalAnisotropic {
                    peak_azimuth_rad: a,
                    dynamic_range_db: b,
                },
                3 => ModelKind::PlaneWave { direction_index: index },
                t => return Err(Error::format("WDC1", format!("unknown model tag {t}"))),
            });
        }
        let mut weights = Vec::with_capacity(count);
        for _ in 0..count {
            let re = r.read_f64::<LittleEndian>().map_err(bad)?;
            let im = r.read_f64::<LittleEndian>().map_err(bad)?;
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::format("WDC1", "non-finite weight"));
            }
            weights.push(Complex64::new(re, im));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(bad)? != 0 {
            return Err(Error::format("WDC1", "trailing bytes after weights"));
        }
        WeightDictionary::from_parts(kinds, target, target_index, f, q, &weights)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

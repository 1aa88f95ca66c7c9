//! MVDR weights, the signal-independent Iso-MVDR baseline and the adaptive
//! MPDR baseline.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::noise_fields::{ncm_isotropic, HermitianCovariance};
use crate::spatial::{AtfSet, Direction};

/// Relative diagonal loading used only when the plain solve is singular.
pub const FALLBACK_LOADING: f64 = 1e-8;

/// Smallest Cholesky pivot (relative to the largest diagonal entry) that is
/// still treated as nonsingular.
const PIVOT_FLOOR: f64 = 1e-13;

/// Initial covariance of the adaptive trackers, `eps * I`.
pub const TRACKER_INIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamWeights {
    pub w: DVector<Complex64>,
    pub band: Option<usize>,
    pub target: Option<Direction>,
}

impl BeamWeights {
    pub fn new(w: DVector<Complex64>) -> Self {
        BeamWeights {
            w,
            band: None,
            target: None,
        }
    }

    /// `w^H d`.
    pub fn response(&self, d: &DVector<Complex64>) -> Complex64 {
        self.w.dotc(d)
    }
}

fn cholesky_solve(r: &DMatrix<Complex64>, d: &DVector<Complex64>) -> Option<DVector<Complex64>> {
    let q = r.nrows();
    let scale = (0..q).map(|i| r[(i, i)].re).fold(0.0, f64::max);
    if !scale.is_normal() {
        return None;
    }
    // MVDR weights are invariant to the scale of R.
    let chol = Cholesky::new(r.unscale(scale))?;
    let l = chol.l_dirty();
    let min_pivot = (0..q).map(|i| l[(i, i)].re.powi(2)).fold(f64::INFINITY, f64::min);
    if min_pivot <= PIVOT_FLOOR {
        return None;
    }
    let v = chol.solve(d);
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(v)
}

/// `w = R^{-1} d / (d^H R^{-1} d)` through a Hermitian (Cholesky) solve,
/// with a `1e-8 trace(R)/Q` loading fallback for singular `R`.
pub fn mvdr_solve(r: &DMatrix<Complex64>, d: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    let q = r.nrows();
    if r.ncols() != q || d.len() != q {
        return Err(Error::DimensionMismatch(format!(
            "covariance {}x{} vs steering of length {}",
            r.nrows(),
            r.ncols(),
            d.len()
        )));
    }
    if d.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Err(Error::InvalidParameter("steering vector is zero".into()));
    }
    let v = match cholesky_solve(r, d) {
        Some(v) => v,
        None => {
            let trace: f64 = (0..q).map(|i| r[(i, i)].re).sum();
            let mean = trace / q as f64;
            let base = if mean.is_normal() && mean > 0.0 { mean } else { 1.0 };
            let mut loaded = r.clone();
            for i in 0..q {
                loaded[(i, i)] += FALLBACK_LOADING * base;
            }
            cholesky_solve(&loaded, d)
                .ok_or_else(|| Error::SingularModel("covariance singular even after loading".into()))?
        }
    };
    let den = d.dotc(&v);
    if !(den.re > 0.0) || !den.re.is_finite() || !den.im.is_finite() {
        return Err(Error::SingularModel(format!("d^H R^-1 d = {den}")));
    }
    Ok(v / den)
}

pub fn mvdr_weights(r: &HermitianCovariance, d: &DVector<Complex64>) -> Result<BeamWeights> {
    Ok(BeamWeights::new(mvdr_solve(r.matrix(), d)?))
}

/// `w^H x` on raw slices.
#[inline]
pub fn apply_slice(w: &[Complex64], x: &[Complex64]) -> Complex64 {
    w.iter().zip(x).map(|(w, x)| w.conj() * x).sum()
}

/// Beamformer output `Y = w^H x`.
pub fn apply(w: &BeamWeights, x: &[Complex64]) -> Result<Complex64> {
    if w.w.len() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for a {}-channel snapshot",
            w.w.len(),
            x.len()
        )));
    }
    Ok(apply_slice(w.w.as_slice(), x))
}

/// Superdirective weights: MVDR against the discrete isotropic NCM.
pub fn iso_mvdr_weights(atf: &AtfSet, target: &Direction, band: usize) -> Result<BeamWeights> {
    let d = atf.steer(target, band)?;
    let r = ncm_isotropic(atf, band)?;
    let mut w = mvdr_weights(&r, &d)?;
    w.band = Some(band);
    w.target = Some(atf.directions[atf.nearest_direction(target)?]);
    Ok(w)
}

/// `alpha = exp(-dt / T)`.
pub fn smoothing_factor(frame_period_s: f64, time_constant_s: f64) -> Result<f64> {
    if !(frame_period_s > 0.0) || !(time_constant_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "frame period {frame_period_s} and time constant {time_constant_s} must be positive"
        )));
    }
    Ok((-frame_period_s / time_constant_s).exp())
}

/// Exponentially smoothed spatial covariance, one `Q x Q` state per band.
#[derive(Debug, Clone)]
pub struct EmaCovTracker {
    states: Vec<DMatrix<Complex64>>,
    alpha: f64,
    pub time_constant_s: f64,
    pub frame_period_s: f64,
}

impl EmaCovTracker {
    pub fn new(num_bands: usize, num_mics: usize, time_constant_s: f64, frame_period_s: f64) -> Result<Self> {
        let alpha = smoothing_factor(frame_period_s, time_constant_s)?;
        let init = DMatrix::identity(num_mics, num_mics) * Complex64::new(TRACKER_INIT, 0.0);
        Ok(EmaCovTracker {
            states: vec![init; num_bands],
            alpha,
            time_constant_s,
            frame_period_s,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn num_bands(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, band: usize) -> &DMatrix<Complex64> {
        &self.states[band]
    }

    pub fn covariance(&self, band: usize) -> Result<HermitianCovariance> {
        HermitianCovariance::new(self.states[band].clone())
    }

    /// `R <- alpha R + (1 - alpha) x x^H`.
    pub fn update(&mut self, band: usize, x: &[Complex64]) -> Result<()> {
        let r = &mut self.states[band];
        if x.len() != r.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{}-channel snapshot for a {}-channel tracker",
                x.len(),
                r.nrows()
            )));
        }
        let a = self.alpha;
        let b = 1.0 - a;
        let q = x.len();
        for j in 0..q {
            let cj = x[j].conj() * b;
            for i in 0..q {
                r[(i, j)] = r[(i, j)] * a + x[i] * cj;
            }
        }
        Ok(())
    }
}

/// One MPDR step for a band: update the covariance with `x`, solve the
/// MVDR weights against it and apply them to `x`.
pub fn mpdr_step(
    tracker: &mut EmaCovTracker,
    band: usize,
    x: &[Complex64],
    d: &DVector<Complex64>,
) -> Result<(BeamWeights, Complex64)> {
    tracker.update(band, x)?;
    let mut w = BeamWeights::new(mvdr_solve(tracker.state(band), d)?);
    w.band = Some(band);
    let y = apply(&w, x)?;
    Ok((w, y))
}

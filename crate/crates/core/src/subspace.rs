//! Two-channel spectral PCA denoising.
//!
//! Each frame pairs the Hybrid and Iso spectra as the columns of an `F x 2`
//! matrix `Z`. Their `2 x 2` inter-channel covariance is smoothed over
//! frames, and `Z` is projected onto its dominant eigenvector. Column 0 of
//! the projection is the enhanced spectrum.

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::beamform::{smoothing_factor, TRACKER_INIT};
use crate::error::{Error, Result};

/// Relative eigenvalue gap below which the two eigenvalues count as equal.
const DEGENERACY: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `Z(t) = [y_hyb(t), y_iso(t)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    hyb: Vec<Complex64>,
    iso: Vec<Complex64>,
}

impl FramePair {
    pub fn new(hyb: Vec<Complex64>, iso: Vec<Complex64>) -> Result<Self> {
        if hyb.len() != iso.len() {
            return Err(Error::DimensionMismatch(format!(
                "hybrid spectrum has {} bands, iso {}",
                hyb.len(),
                iso.len()
            )));
        }
        Ok(FramePair { hyb, iso })
    }

    pub fn hyb(&self) -> &[Complex64] {
        &self.hyb
    }

    pub fn iso(&self) -> &[Complex64] {
        &self.iso
    }

    pub fn num_bands(&self) -> usize {
        self.hyb.len()
    }

    /// `Z^H Z`.
    pub fn gram(&self) -> Matrix2<Complex64> {
        let mut hh = 0.0;
        let mut ii = 0.0;
        let mut hi = ZERO;
        for (h, i) in self.hyb.iter().zip(&self.iso) {
            hh += h.norm_sqr();
            ii += i.norm_sqr();
            hi += h.conj() * i;
        }
        Matrix2::new(Complex64::new(hh, 0.0), hi, hi.conj(), Complex64::new(ii, 0.0))
    }

    /// `Z u u^H` for a unit vector `u`, returned as its two columns.
    pub fn project(&self, u: [Complex64; 2]) -> (Vec<Complex64>, Vec<Complex64>) {
        let (c0, c1) = (u[0].conj(), u[1].conj());
        self.hyb
            .iter()
            .zip(&self.iso)
            .map(|(h, i)| {
                let coef = h * u[0] + i * u[1];
                (coef * c0, coef * c1)
            })
            .unzip()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.hyb
            .iter()
            .chain(&self.iso)
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Eigendecomposition of a `2 x 2` Hermitian matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen2 {
    /// Descending.
    pub values: [f64; 2],
    /// Orthonormal eigenvectors, `vectors[k]` belongs to `values[k]`.
    pub vectors: [[Complex64; 2]; 2],
}

impl Eigen2 {
    /// `U diag(values) U^H`.
    pub fn reconstruct(&self) -> Matrix2<Complex64> {
        let mut m = Matrix2::zeros();
        for k in 0..2 {
            let v = self.vectors[k];
            for i in 0..2 {
                for j in 0..2 {
                    m[(i, j)] += v[i] * v[j].conj() * self.values[k];
                }
            }
        }
        m
    }
}

/// Closed-form Hermitian `2 x 2` eigendecomposition with eigenvalues in
/// descending order. The leading eigenvector's first nonzero component is
/// real positive; degenerate eigenvalues return the identity basis.
pub fn eig2x2_hermitian(r: &Matrix2<Complex64>) -> Result<Eigen2> {
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("2x2 covariance"));
    }
    let scale = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let dev = (r[(0, 1)] - r[(1, 0)].conj())
        .norm()
        .max(r[(0, 0)].im.abs())
        .max(r[(1, 1)].im.abs());
    if dev > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotHermitian(dev));
    }
    let a = r[(0, 0)].re;
    let c = r[(1, 1)].re;
    let b = (r[(0, 1)] + r[(1, 0)].conj()) * 0.5;
    let mean = 0.5 * (a + c);
    let half = 0.5 * (a - c);
    let rad = half.hypot(b.norm());
    let l1 = mean + rad;
    let l2 = mean - rad;

    if 2.0 * rad <= DEGENERACY * l1.abs() || rad == 0.0 {
        return Ok(Eigen2 {
            values: [l1, l2],
            vectors: [[ONE, ZERO], [ZERO, ONE]],
        });
    }

    // Pick the better-conditioned of the two null vectors of R - l1 I.
    let v = if half >= 0.0 {
        [Complex64::new(rad + half, 0.0), b.conj()]
    } else if b.norm() > 0.0 {
        let phase = b.conj() / b.norm();
        [Complex64::new(b.norm(), 0.0), Complex64::new(rad - half, 0.0) * phase]
    } else {
        [ZERO, Complex64::new(rad - half, 0.0)]
    };
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let u = [v[0] / n, v[1] / n];
    let un = [-u[1].conj(), u[0].conj()];
    Ok(Eigen2 {
        values: [l1, l2],
        vectors: [u, un],
    })
}

/// Smoothed `2 x 2` covariance of the Hybrid/Iso frame pair.
#[derive(Debug, Clone)]
pub struct PcaTracker {
    rz: Matrix2<Complex64>,
    alpha: f64,
}

impl PcaTracker {
    pub fn new(time_constant_s: f64, frame_period_s: f64) -> Result<Self> {
        Self::with_alpha(smoothing_factor(frame_period_s, time_constant_s)?)
    }

    pub fn with_alpha(alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "smoothing factor {alpha} outside [0, 1)"
            )));
        }
        Ok(PcaTracker {
            rz: Matrix2::identity() * Complex64::new(TRACKER_INIT, 0.0),
            alpha,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn covariance(&self) -> &Matrix2<Complex64> {
        &self.rz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceResult {
    /// Column 0 of `Z_SS`, the system output.
    pub y_out: Vec<Complex64>,
    /// Column 1 of `Z_SS`, kept for diagnostics.
    pub y_ss_iso: Vec<Complex64>,
    pub eigvals: [f64; 2],
    pub u_s: [Complex64; 2],
}

/// Updates the tracker with `Z(t)`, decomposes it and projects `Z(t)` onto
/// the signal eigenvector.
pub fn pca_step(tracker: &mut PcaTracker, z: &FramePair) -> Result<SubspaceResult> {
    if z.hyb
        .iter()
        .chain(&z.iso)
        .any(|v| !v.re.is_finite() || !v.im.is_finite())
    {
        return Err(Error::NonFinite("PCA frame"));
    }
    let a = Complex64::new(tracker.alpha, 0.0);
    let b = Complex64::new(1.0 - tracker.alpha, 0.0);
    tracker.rz = tracker.rz * a + z.gram() * b;
    let eig = eig2x2_hermitian(&tracker.rz)?;
    let u_s = eig.vectors[0];
    let (y_out, y_ss_iso) = z.project(u_s);
    Ok(SubspaceResult {
        y_out,
        y_ss_iso,
        eigvals: [eig.values[0].max(0.0), eig.values[1].max(0.0)],
        u_s,
    })
}

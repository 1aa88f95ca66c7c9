//! Directions, uniform spherical grids, quadrature weights and array
//! transfer functions (ATFs).
//!
//! The grid samples azimuth uniformly on `[0, 2pi)` and inclination on
//! `theta_k = pi k / N_theta`, `k = 0..N_theta` (north pole included, south
//! pole excluded). Directions are stored azimuth-major: index
//! `i = ia * N_theta + ii`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stft::StftConfig;

pub const SPEED_OF_SOUND: f64 = 343.0;

const TWO_PI: f64 = 2.0 * PI;
const ATF_MAGIC: &[u8; 4] = b"ATF1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub azimuth_rad: f64,
    pub inclination_rad: f64,
}

impl Direction {
    /// Azimuth is wrapped into `[0, 2pi)`; inclination must lie in `[0, pi]`.
    pub fn new(azimuth_rad: f64, inclination_rad: f64) -> Result<Self> {
        if !azimuth_rad.is_finite() || !inclination_rad.is_finite() {
            return Err(Error::NonFinite("direction"));
        }
        if !(0.0..=PI).contains(&inclination_rad) {
            return Err(Error::InvalidParameter(format!(
                "inclination {inclination_rad} outside [0, pi]"
            )));
        }
        Ok(Direction {
            azimuth_rad: wrap_azimuth(azimuth_rad),
            inclination_rad,
        })
    }

    pub fn from_degrees(azimuth_deg: f64, inclination_deg: f64) -> Result<Self> {
        Self::new(azimuth_deg.to_radians(), inclination_deg.to_radians())
    }

    /// A horizontal direction (inclination 90 degrees).
    pub fn horizontal_deg(azimuth_deg: f64) -> Self {
        Self::from_degrees(azimuth_deg, 90.0).expect("horizontal direction is valid")
    }

    /// Unit vector pointing from the array towards the source.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.inclination_rad.sin_cos();
        let (sp, cp) = self.azimuth_rad.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Great-circle angle to `other` in radians.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        let a = self.unit_vector();
        let b = other.unit_vector();
        let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let cross = [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ];
        let cn = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
        cn.atan2(dot)
    }
}

pub fn wrap_azimuth(az: f64) -> f64 {
    let w = az.rem_euclid(TWO_PI);
    if w >= TWO_PI {
        0.0
    } else {
        w
    }
}

/// Wrapped azimuth distance in `[0, pi]`.
pub fn azimuth_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TWO_PI);
    d.min(TWO_PI - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridDims {
    pub n_azimuth: usize,
    pub n_inclination: usize,
}

impl Default for GridDims {
    /// 60 x 30: 6 degree steps in both azimuth and inclination.
    fn default() -> Self {
        GridDims {
            n_azimuth: 60,
            n_inclination: 30,
        }
    }
}

impl GridDims {
    pub fn new(n_azimuth: usize, n_inclination: usize) -> Result<Self> {
        let g = GridDims {
            n_azimuth,
            n_inclination,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_azimuth == 0 {
            return Err(Error::InvalidParameter("grid needs at least one azimuth".into()));
        }
        if self.n_inclination < 2 || !self.n_inclination.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "inclination count must be even and >= 2, got {}",
                self.n_inclination
            )));
        }
        Ok(())
    }

    pub fn num_directions(&self) -> usize {
        self.n_azimuth * self.n_inclination
    }

    pub fn azimuth(&self, ia: usize) -> f64 {
        TWO_PI * ia as f64 / self.n_azimuth as f64
    }

    pub fn inclination(&self, ii: usize) -> f64 {
        PI * ii as f64 / self.n_inclination as f64
    }

    pub fn index(&self, ia: usize, ii: usize) -> usize {
        ia * self.n_inclination + ii
    }

    /// `(azimuth index, inclination index)` of a direction index.
    pub fn split(&self, index: usize) -> (usize, usize) {
        (index / self.n_inclination, index % self.n_inclination)
    }

    pub fn direction(&self, index: usize) -> Direction {
        let (ia, ii) = self.split(index);
        Direction {
            azimuth_rad: self.azimuth(ia),
            inclination_rad: self.inclination(ii),
        }
    }

    pub fn directions(&self) -> Vec<Direction> {
        (0..self.num_directions()).map(|i| self.direction(i)).collect()
    }

    /// Weight of a single inclination ring member.
    pub fn inclination_weight(&self, theta: f64) -> f64 {
        let n_theta = self.n_inclination;
        let sum: f64 = (0..n_theta / 2)
            .map(|m| {
                let k = (2 * m + 1) as f64;
                (k * theta).sin() / k
            })
            .sum();
        2.0 * theta.sin() / (self.n_azimuth as f64 * n_theta as f64) * sum
    }
}

/// One quadrature weight per grid direction.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureWeights {
    pub w: Vec<f64>,
}

impl QuadratureWeights {
    pub fn total(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// Driscoll-Healy style weights that compensate the dense sampling near the
/// poles of a uniform azimuth x inclination grid:
///
/// `w_i = 2 sin(theta_i) / (N_phi N_theta) * sum_{m=0}^{N_theta/2-1} sin((2m+1) theta_i) / (2m+1)`
pub fn quadrature_weights(grid: GridDims, directions: &[Direction]) -> Result<QuadratureWeights> {
    grid.validate()?;
    if directions.len() != grid.num_directions() {
        return Err(Error::NonUniformGrid(format!(
            "{} directions for a {}x{} grid",
            directions.len(),
            grid.n_azimuth,
            grid.n_inclination
        )));
    }
    let ring: Vec<f64> = (0..grid.n_inclination)
        .map(|ii| grid.inclination_weight(grid.inclination(ii)))
        .collect();
    let mut w = Vec::with_capacity(directions.len());
    for (i, d) in directions.iter().enumerate() {
        let expected = grid.direction(i);
        let off_az = azimuth_distance(d.azimuth_rad, expected.azimuth_rad);
        let off_in = (d.inclination_rad - expected.inclination_rad).abs();
        if off_az > 1e-9 || off_in > 1e-9 {
            return Err(Error::NonUniformGrid(format!(
                "direction {i} at ({:.6}, {:.6}) rad is off the uniform grid",
                d.azimuth_rad, d.inclination_rad
            )));
        }
        w.push(ring[grid.split(i).1]);
    }
    Ok(QuadratureWeights { w })
}

/// Array transfer functions on a uniform grid.
///
/// `gains` is laid out direction-major, then frequency, then microphone,
/// which is also the on-disk order of the `ATF1` container.
#[derive(Debug, Clone, PartialEq)]
pub struct AtfSet {
    pub grid: GridDims,
    pub directions: Vec<Direction>,
    pub frequencies_hz: Vec<f64>,
    pub sample_rate_hz: f64,
    num_mics: usize,
    gains: Vec<Complex64>,
}

impl AtfSet {
    pub fn new(
        grid: GridDims,
        frequencies_hz: Vec<f64>,
        sample_rate_hz: f64,
        num_mics: usize,
        gains: Vec<Complex64>,
    ) -> Result<Self> {
        grid.validate()?;
        if num_mics == 0 {
            return Err(Error::InvalidParameter("ATF set needs at least one microphone".into()));
        }
        if frequencies_hz.is_empty() {
            return Err(Error::Empty("ATF frequencies"));
        }
        check_distinct(&frequencies_hz)?;
        let expected = grid.num_directions() * frequencies_hz.len() * num_mics;
        if gains.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} gains, expected {expected}",
                gains.len()
            )));
        }
        if gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::NonFinite("ATF gains"));
        }
        Ok(AtfSet {
            grid,
            directions: grid.directions(),
            frequencies_hz,
            sample_rate_hz,
            num_mics,
            gains,
        })
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn num_bands(&self) -> usize {
        self.frequencies_hz.len()
    }

    pub fn num_directions(&self) -> usize {
        self.directions.len()
    }

    /// Array response `a(Omega_i, f)` across microphones.
    pub fn gain(&self, dir: usize, band: usize) -> &[Complex64] {
        let q = self.num_mics;
        let start = (dir * self.num_bands() + band) * q;
        &self.gains[start..start + q]
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn quadrature_weights(&self) -> QuadratureWeights {
        quadrature_weights(self.grid, &self.directions).expect("AtfSet grid is uniform by construction")
    }

    /// Grid node nearest to `target` by great-circle angle; ties go to the
    /// lower index.
    pub fn nearest_direction(&self, target: &Direction) -> Result<usize> {
        if self.directions.is_empty() {
            return Err(Error::Unsteerable("empty ATF set".into()));
        }
        let mut best = 0;
        let mut best_angle = f64::INFINITY;
        for (i, d) in self.directions.iter().enumerate() {
            let a = d.angle_to(target);
            if a < best_angle - 1e-12 {
                best = i;
                best_angle = a;
            }
        }
        Ok(best)
    }

    /// Relative transfer function of grid direction `dir` at `band`,
    /// normalized so the reference microphone (index 0) entry is exactly 1.
    pub fn steering_at(&self, dir: usize, band: usize) -> Result<DVector<Complex64>> {
        let a = self.gain(dir, band);
        let r = a[0];
        if r.norm() == 0.0 {
            return Err(Error::Unsteerable(format!(
                "reference microphone gain is zero at direction {dir}, band {band}"
            )));
        }
        Ok(DVector::from_iterator(a.len(), a.iter().map(|g| g / r)))
    }

    /// Steering vector `d` for `target` snapped to the nearest grid node.
    pub fn steer(&self, target: &Direction, band: usize) -> Result<DVector<Complex64>> {
        if band >= self.num_bands() {
            return Err(Error::InvalidParameter(format!("band {band} out of range")));
        }
        let dir = self.nearest_direction(target)?;
        self.steering_at(dir, band)
    }

    /// Copy of this set with the array rotated so that the response of
    /// azimuth column `ia` becomes that of column `ia + shift`.
    pub fn rotated_azimuth(&self, shift: usize) -> AtfSet {
        let n_az = self.grid.n_azimuth;
        let n_in = self.grid.n_inclination;
        let block = self.num_bands() * self.num_mics;
        let mut gains = Vec::with_capacity(self.gains.len());
        for ia in 0..n_az {
            let src_ia = (ia + shift) % n_az;
            for ii in 0..n_in {
                let src = self.grid.index(src_ia, ii) * block;
                gains.extend_from_slice(&self.gains[src..src + block]);
            }
        }
        AtfSet { gains, ..self.clone() }
    }

    pub fn check_compatible(&self, cfg: &StftConfig) -> Result<()> {
        if self.num_bands() != cfg.num_bands() {
            return Err(Error::DimensionMismatch(format!(
                "ATF has {} bands, STFT produces {}",
                self.num_bands(),
                cfg.num_bands()
            )));
        }
        Ok(())
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(ATF_MAGIC)?;
        w.write_u32::<LittleEndian>(self.num_mics as u32)?;
        w.write_u32::<LittleEndian>(self.grid.n_azimuth as u32)?;
        w.write_u32::<LittleEndian>(self.grid.n_inclination as u32)?;
        w.write_u32::<LittleEndian>(self.num_bands() as u32)?;
        w.write_f64::<LittleEndian>(self.sample_rate_hz)?;
        for &f in &self.frequencies_hz {
            w.write_f64::<LittleEndian>(f)?;
        }
        for g in &self.gains {
            w.write_f64::<LittleEndian>(g.re)?;
            w.write_f64::<LittleEndian>(g.im)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |e: std::io::Error| Error::format("ATF1", format!("truncated: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != ATF_MAGIC {
            return Err(Error::format("ATF1", format!("bad magic {magic:?}")));
        }
        let q = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        let n_az = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        let n_in = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        let bands = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        let sample_rate = r.read_f64::<LittleEndian>().map_err(bad)?;
        let grid = GridDims::new(n_az, n_in).map_err(|e| Error::format("ATF1", e.to_string()))?;
        let count = grid
            .num_directions()
            .checked_mul(bands)
            .and_then(|v| v.checked_mul(q))
            .filter(|&v| v > 0 && v < (1 << 31))
            .ok_or_else(|| Error::format("ATF1", "implausible dimensions"))?;
        if !sample_rate.is_finite() || sample_rate <= 0.0 {
            return Err(Error::format("ATF1", "sample rate must be positive"));
        }
        let mut freqs = Vec::with_capacity(bands);
        for _ in 0..bands {
            freqs.push(r.read_f64::<LittleEndian>().map_err(bad)?);
        }
        if freqs.iter().any(|f| !f.is_finite()) {
            return Err(Error::format("ATF1", "non-finite frequency"));
        }
        let mut gains = Vec::with_capacity(count);
        for _ in 0..count {
            let re = r.read_f64::<LittleEndian>().map_err(bad)?;
            let im = r.read_f64::<LittleEndian>().map_err(bad)?;
            gains.push(Complex64::new(re, im));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(bad)? != 0 {
            return Err(Error::format("ATF1", "trailing bytes after gains"));
        }
        AtfSet::new(grid, freqs, sample_rate, q, gains).map_err(|e| Error::format("ATF1", e.to_string()))
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

fn check_distinct(freqs: &[f64]) -> Result<()> {
    let mut sorted = freqs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("coincident frequencies".into()));
    }
    Ok(())
}

/// Plane-wave free-field ATFs: `a_q(Omega, f) = exp(-i 2 pi f tau_q)` with
/// `tau_q = -(r_q . u(Omega)) / c`. Microphone 0 is the reference and should
/// sit at the origin.
pub fn freefield_atf(
    mic_positions: &[[f64; 3]],
    grid: GridDims,
    frequencies_hz: &[f64],
    speed_of_sound: f64,
    sample_rate_hz: f64,
) -> Result<AtfSet> {
    if mic_positions.is_empty() {
        return Err(Error::InvalidParameter("no microphones".into()));
    }
    if !(speed_of_sound > 0.0) {
        return Err(Error::InvalidParameter("speed of sound must be positive".into()));
    }
    grid.validate()?;
    check_distinct(frequencies_hz)?;
    let q = mic_positions.len();
    let mut gains = Vec::with_capacity(grid.num_directions() * frequencies_hz.len() * q);
    for dir in grid.directions() {
        let u = dir.unit_vector();
        let delays: Vec<f64> = mic_positions
            .iter()
            .map(|r| -(r[0] * u[0] + r[1] * u[1] + r[2] * u[2]) / speed_of_sound)
            .collect();
        for &f in frequencies_hz {
            for &tau in &delays {
                gains.push(Complex64::from_polar(1.0, -TWO_PI * f * tau));
            }
        }
    }
    AtfSet::new(grid, frequencies_hz.to_vec(), sample_rate_hz, q, gains)
}

/// Free-field ATFs sampled at the bin frequencies of an STFT configuration.
pub fn freefield_atf_for(mic_positions: &[[f64; 3]], grid: GridDims, stft: &StftConfig) -> Result<AtfSet> {
    freefield_atf(
        mic_positions,
        grid,
        &stft.bin_frequencies(),
        SPEED_OF_SOUND,
        stft.sample_rate_hz as f64,
    )
}

/// Six microphones on a pair of glasses (four on the frame, two at the
/// ears), in metres, x forward, y left, z up, relative to the front-left
/// reference microphone.
pub fn glasses_array() -> Vec<[f64; 3]> {
    let raw = [
        [0.080, 0.070, 0.020],
        [0.080, -0.070, 0.020],
        [0.020, 0.080, 0.025],
        [0.020, -0.080, 0.025],
        [-0.010, 0.085, -0.010],
        [-0.010, -0.085, -0.010],
    ];
    let r0 = raw[0];
    raw.iter().map(|p| [p[0] - r0[0], p[1] - r0[1], p[2] - r0[2]]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_atf() -> AtfSet {
        let mics = [[0.0, 0.0, 0.0], [0.05, 0.0, 0.0], [0.0, 0.04, 0.01]];
        freefield_atf(
            &mics,
            GridDims::new(12, 6).unwrap(),
            &[0.0, 500.0, 1500.0],
            343.0,
            8000.0,
        )
        .unwrap()
    }

    #[test]
    fn pole_weight_is_zero_and_symmetric() {
        let g = GridDims::default();
        let q = quadrature_weights(g, &g.directions()).unwrap();
        for ia in 0..g.n_azimuth {
            assert_eq!(q.w[g.index(ia, 0)], 0.0);
        }
        for ii in 1..g.n_inclination {
            let a = q.w[g.index(0, ii)];
            let b = q.w[g.index(0, g.n_inclination - ii)];
            assert!((a - b).abs() < 1e-15);
            assert!(a >= 0.0);
        }
    }

    #[test]
    fn quadrature_rejects_bad_grids() {
        assert!(GridDims::new(8, 5).is_err());
        assert!(GridDims::new(8, 0).is_err());
        let g = GridDims::new(8, 4).unwrap();
        let mut dirs = g.directions();
        dirs[3].inclination_rad += 0.01;
        assert!(matches!(quadrature_weights(g, &dirs), Err(Error::NonUniformGrid(_))));
        assert!(quadrature_weights(g, &dirs[..5]).is_err());
    }

    #[test]
    fn reference_mic_has_unit_gain() {
        let atf = small_atf();
        for d in 0..atf.num_directions() {
            for f in 0..atf.num_bands() {
                assert_eq!(atf.gain(d, f)[0], Complex64::new(1.0, 0.0));
                for g in atf.gain(d, f) {
                    assert!((g.norm() - 1.0).abs() < 1e-15);
                }
            }
            // f = 0 is a flat response.
            assert!(atf.gain(d, 0).iter().all(|g| *g == Complex64::new(1.0, 0.0)));
        }
    }

    #[test]
    fn half_wavelength_spacing_gives_pi_phase() {
        let c = 343.0;
        let f = c / (2.0 * 0.1);
        let grid = GridDims::new(4, 2).unwrap();
        let atf = freefield_atf(&[[0.0; 3], [0.1, 0.0, 0.0]], grid, &[f], c, 2.0 * f + 1.0).unwrap();
        let along_x = grid.index(0, 1);
        assert_eq!(grid.direction(along_x).unit_vector()[0], 1.0);
        let g = atf.gain(along_x, 0);
        let dphi = (g[1] / g[0]).arg().abs();
        assert!((dphi - PI).abs() < 1e-12);
    }

    #[test]
    fn freefield_errors() {
        let g = GridDims::new(4, 2).unwrap();
        assert!(freefield_atf(&[], g, &[1.0], 343.0, 8000.0).is_err());
        assert!(freefield_atf(&[[0.0; 3]], g, &[1.0, 1.0], 343.0, 8000.0).is_err());
        assert!(freefield_atf(&[[0.0; 3]], g, &[1.0], 0.0, 8000.0).is_err());
    }

    #[test]
    fn steer_on_node_and_flat_band() {
        let atf = small_atf();
        let node = 17;
        let d = atf.steer(&atf.directions[node], 2).unwrap();
        for (a, b) in d.iter().zip(atf.gain(node, 2)) {
            assert!((a - b).norm() < 1e-15);
        }
        let d0 = atf.steer(&Direction::horizontal_deg(33.0), 0).unwrap();
        assert!(d0.iter().all(|z| *z == Complex64::new(1.0, 0.0)));
        assert!(atf.steer(&atf.directions[0], 3).is_err());
    }

    #[test]
    fn steer_snaps_to_nearest_with_low_index_ties() {
        let atf = small_atf();
        let g = atf.grid;
        // Midway between azimuth columns 2 and 3 on the equator.
        let mid = Direction::new((g.azimuth(2) + g.azimuth(3)) / 2.0, PI / 2.0).unwrap();
        let oracle = {
            let angles: Vec<f64> = atf.directions.iter().map(|d| d.angle_to(&mid)).collect();
            let min = angles.iter().cloned().fold(f64::INFINITY, f64::min);
            angles.iter().position(|&a| a <= min + 1e-12).unwrap()
        };
        assert_eq!(atf.nearest_direction(&mid).unwrap(), oracle);
        assert_eq!(oracle, g.index(2, 3));
        // Snapping is idempotent.
        let snapped = atf.directions[oracle];
        assert_eq!(atf.nearest_direction(&snapped).unwrap(), oracle);
    }

    #[test]
    fn atf_container_round_trip_and_validation() {
        let atf = small_atf();
        let mut buf = Vec::new();
        atf.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"ATF1");
        let back = AtfSet::read_from(&buf[..]).unwrap();
        assert_eq!(back, atf);

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(AtfSet::read_from(&bad_magic[..]).is_err());
        assert!(AtfSet::read_from(&buf[..buf.len() - 3]).is_err());
        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(AtfSet::read_from(&trailing[..]).is_err());
        let mut nan = buf.clone();
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(AtfSet::read_from(&nan[..]).is_err());
    }

    #[test]
    fn rotation_moves_columns() {
        let atf = small_atf();
        let rot = atf.rotated_azimuth(3);
        let g = atf.grid;
        assert_eq!(rot.gain(g.index(1, 2), 1), atf.gain(g.index(4, 2), 1));
    }
}

//! Hybrid-MVDR: per time-frequency bin, run every beamformer in the
//! dictionary and keep the output with the least power.
//!
//! Ties go to the lowest model index, so selection is deterministic and
//! follows the dictionary order (identity, isotropic, anisotropic, plane
//! waves). There is no smoothing of the selection across bins or frames.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::beamform::apply_slice;
use crate::error::{Error, Result};
use crate::noise_fields::WeightDictionary;

#[derive(Debug, Clone, PartialEq)]
pub struct HybridOutput {
    pub y: Complex64,
    pub selected_model: usize,
    /// `|w_m^H x|^2` for every model, when requested.
    pub powers: Option<Vec<f64>>,
}

fn check(dict: &WeightDictionary, x: &[Complex64], band: usize) -> Result<()> {
    if dict.num_models() == 0 {
        return Err(Error::Empty("dictionary"));
    }
    if band >= dict.num_bands() {
        return Err(Error::InvalidParameter(format!("band {band} out of range")));
    }
    if x.len() != dict.num_mics() {
        return Err(Error::DimensionMismatch(format!(
            "{}-channel snapshot for a {}-microphone dictionary",
            x.len(),
            dict.num_mics()
        )));
    }
    Ok(())
}

#[inline]
fn select_unchecked(dict: &WeightDictionary, x: &[Complex64], band: usize) -> (Complex64, usize) {
    let q = dict.num_mics();
    let mut best = (Complex64::new(0.0, 0.0), 0usize);
    let mut best_p = f64::INFINITY;
    for (m, w) in dict.band_weights(band).chunks_exact(q).enumerate() {
        let y = apply_slice(w, x);
        let p = y.norm_sqr();
        if p < best_p {
            best_p = p;
            best = (y, m);
        }
    }
    best
}

pub fn hybrid_select(dict: &WeightDictionary, x: &[Complex64], band: usize) -> Result<HybridOutput> {
    check(dict, x, band)?;
    let (y, selected_model) = select_unchecked(dict, x, band);
    Ok(HybridOutput {
        y,
        selected_model,
        powers: None,
    })
}

/// Same as [`hybrid_select`] but also returns every model's output power.
pub fn hybrid_select_with_powers(dict: &WeightDictionary, x: &[Complex64], band: usize) -> Result<HybridOutput> {
    check(dict, x, band)?;
    let powers: Vec<f64> = (0..dict.num_models())
        .map(|m| apply_slice(dict.weight(m, band), x).norm_sqr())
        .collect();
    let (y, selected_model) = select_unchecked(dict, x, band);
    Ok(HybridOutput {
        y,
        selected_model,
        powers: Some(powers),
    })
}

/// Hybrid output for every band of a `Q x F` frame, with the selected model
/// per band.
pub fn hybrid_frame(dict: &WeightDictionary, frame: &DMatrix<Complex64>) -> Result<(Vec<Complex64>, Vec<u32>)> {
    if frame.ncols() != dict.num_bands() {
        return Err(Error::DimensionMismatch(format!(
            "frame has {} bands, dictionary {}",
            frame.ncols(),
            dict.num_bands()
        )));
    }
    let q = frame.nrows();
    let data = frame.as_slice();
    let mut y = Vec::with_capacity(frame.ncols());
    let mut sel = Vec::with_capacity(frame.ncols());
    for f in 0..frame.ncols() {
        let x = &data[f * q..(f + 1) * q];
        check(dict, x, f)?;
        let (out, m) = select_unchecked(dict, x, f);
        y.push(out);
        sel.push(m as u32);
    }
    Ok((y, sel))
}

/// Writes `(frame, band, selected_model)` rows for beam-switching analysis.
pub fn write_selections_csv(selections: &[Vec<u32>], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["frame", "band", "selected_model"])?;
    for (t, row) in selections.iter().enumerate() {
        for (f, m) in row.iter().enumerate() {
            out.write_record([t.to_string(), f.to_string(), m.to_string()])?;
        }
    }
    out.flush().map_err(|e| Error::io("<selections csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise_fields::{build_dictionary, DictionaryConfig, DictionaryVariant, ModelKind};
    use crate::spatial::{freefield_atf, glasses_array, Direction, GridDims};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dict(variant: DictionaryVariant) -> (crate::spatial::AtfSet, WeightDictionary) {
        let atf = freefield_atf(
            &glasses_array(),
            GridDims::new(12, 6).unwrap(),
            &[0.0, 600.0, 1800.0, 3000.0],
            343.0,
            10_000.0,
        )
        .unwrap();
        let target = Direction::horizontal_deg(0.0);
        let d = build_dictionary(&atf, &target, &DictionaryConfig::with_variant(variant)).unwrap();
        (atf, d)
    }

    fn rand_x(rng: &mut ChaCha8Rng, q: usize) -> Vec<Complex64> {
        (0..q)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn single_model_dictionary() {
        let (_, full) = dict(DictionaryVariant::SsHyb);
        let w: Vec<Complex64> = (0..full.num_bands()).flat_map(|f| full.weight(1, f).to_vec()).collect();
        let one = WeightDictionary::from_parts(
            vec![ModelKind::Isotropic],
            full.target,
            full.target_index,
            full.num_bands(),
            full.num_mics(),
            &w,
        )
        .unwrap();
        let x = vec![Complex64::new(0.4, -0.1); 6];
        let out = hybrid_select(&one, &x, 2).unwrap();
        assert_eq!(out.selected_model, 0);
        assert_eq!(out.y, apply_slice(full.weight(1, 2), &x));
    }

    #[test]
    fn matches_exhaustive_scan() {
        let (_, d) = dict(DictionaryVariant::SsHyb);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x = rand_x(&mut rng, 6);
            for f in 0..d.num_bands() {
                let out = hybrid_select_with_powers(&d, &x, f).unwrap();
                let powers = out.powers.as_ref().unwrap();
                let mut j = 0;
                for m in 1..powers.len() {
                    if powers[m] < powers[j] {
                        j = m;
                    }
                }
                assert_eq!(out.selected_model, j);
                assert!(powers[j] <= powers[1]);
                assert!(powers[j] <= powers[0]);
            }
        }
    }

    #[test]
    fn pure_target_is_preserved() {
        let (atf, d) = dict(DictionaryVariant::SsHybX);
        let s = Complex64::new(0.7, -1.2);
        for f in 0..d.num_bands() {
            let steer = atf.steering_at(d.target_index, f).unwrap();
            let x: Vec<_> = steer.iter().map(|z| z * s).collect();
            let out = hybrid_select(&d, &x, f).unwrap();
            assert!((out.y - s).norm() < 1e-8 * s.norm());
        }
    }

    #[test]
    fn zero_frame_selects_model_zero() {
        let (_, d) = dict(DictionaryVariant::SsHyb);
        let frame = DMatrix::zeros(6, d.num_bands());
        let (y, sel) = hybrid_frame(&d, &frame).unwrap();
        assert!(y.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        assert!(sel.iter().all(|&m| m == 0));
    }

    #[test]
    fn errors() {
        let (_, d) = dict(DictionaryVariant::SsHyb);
        assert!(hybrid_select(&d, &[Complex64::new(0.0, 0.0); 3], 0).is_err());
        assert!(hybrid_select(&d, &[Complex64::new(0.0, 0.0); 6], 99).is_err());
        assert!(hybrid_frame(&d, &DMatrix::zeros(6, 2)).is_err());
    }

    #[test]
    fn selections_csv_layout() {
        let mut buf = Vec::new();
        write_selections_csv(&[vec![0, 5], vec![2, 1]], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "frame,band,selected_model\n0,0,0\n0,1,5\n1,0,2\n1,1,1\n");
    }
}

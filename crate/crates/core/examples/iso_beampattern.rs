//! Horizontal beampattern of the superdirective (isotropic-noise MVDR)
//! beamformer steered to the front.

use hybss::beamform::iso_mvdr_weights;
use hybss::spatial::{freefield_atf_for, glasses_array, Direction, GridDims};
use hybss::stft::StftConfig;

fn main() -> hybss::Result<()> {
    let atf = freefield_atf_for(&glasses_array(), GridDims::default(), &StftConfig::default())?;
    let target = Direction::horizontal_deg(0.0);
    let bands = [8, 20, 40, 64];
    let weights = bands
        .iter()
        .map(|&f| iso_mvdr_weights(&atf, &target, f))
        .collect::<hybss::Result<Vec<_>>>()?;
    print!("azimuth");
    for &f in &bands {
        print!("  {:>7.0}Hz", atf.frequencies_hz[f]);
    }
    println!();
    for step in 0..24 {
        let az = 15.0 * step as f64;
        print!("{az:>7.0}");
        for (w, &f) in weights.iter().zip(&bands) {
            let d = atf.steer(&Direction::horizontal_deg(az), f)?;
            print!("  {:>7.1} dB", 10.0 * w.response(&d).norm_sqr().log10());
        }
        println!();
    }
    Ok(())
}

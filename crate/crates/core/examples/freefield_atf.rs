//! Builds the free-field glasses ATF set, saves it and prints the
//! inter-microphone delays for a frontal and a lateral source.

use hybss::spatial::{freefield_atf_for, glasses_array, AtfSet, Direction, GridDims};
use hybss::stft::StftConfig;

fn main() -> hybss::Result<()> {
    let cfg = StftConfig::default();
    let atf = freefield_atf_for(&glasses_array(), GridDims::default(), &cfg)?;
    println!(
        "{} directions x {} bands x {} mics",
        atf.num_directions(),
        atf.num_bands(),
        atf.num_mics()
    );
    let band = 16;
    let f = atf.frequencies_hz[band];
    for az in [0.0, 90.0] {
        let node = atf.nearest_direction(&Direction::horizontal_deg(az))?;
        let delays: Vec<String> = atf
            .gain(node, band)
            .iter()
            .map(|g| format!("{:+.1}", -g.arg() / (2.0 * std::f64::consts::PI * f) * 1e6))
            .collect();
        println!("azimuth {az:>4}: delays at {f:.0} Hz (us) [{}]", delays.join(", "));
    }
    let path = std::env::temp_dir().join("glasses.atf");
    atf.save(&path)?;
    let back = AtfSet::load(&path)?;
    println!("saved to {} and reloaded: identical = {}", path.display(), back == atf);
    Ok(())
}

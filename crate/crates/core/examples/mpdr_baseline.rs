//! The adaptive MPDR baseline against the fixed isotropic beamformer for
//! several covariance time constants.

use std::sync::Arc;

use hybss::metrics::evaluate;
use hybss::pipeline::{Method, Pipeline, PipelineConfig};
use hybss::scene::{render, Scene};
use hybss::spatial::{freefield_atf_for, glasses_array, GridDims};
use hybss::stft::StftConfig;

fn main() -> hybss::Result<()> {
    let atf = Arc::new(freefield_atf_for(
        &glasses_array(),
        GridDims::default(),
        &StftConfig::default(),
    )?);
    let scene = Scene::preset(2, 11)?;
    let rendered = render(&scene, &atf)?;
    let fs = scene.stft.sample_rate_hz as f64;
    let run = |cfg: PipelineConfig| -> hybss::Result<[f64; 3]> {
        let y = Pipeline::new(cfg, atf.clone())?.enhance(&rendered.mixture)?.audio_out;
        Ok(evaluate(&rendered.ground_truth, &y, fs)?.values())
    };
    let target = scene.target_direction()?;
    let iso = run(PipelineConfig::with_method(Method::Iso).steered_to(target))?;
    println!(
        "{:<14} fwSegSNR {:6.2}  segSNR {:6.2}  SI-SDR {:6.2}",
        "iso", iso[0], iso[1], iso[2]
    );
    for t in [0.02, 0.05, 0.2, 1.0] {
        let mut cfg = PipelineConfig::with_method(Method::Mpdr).steered_to(target);
        cfg.t_mpdr_s = t;
        let v = run(cfg)?;
        println!(
            "{:<14} fwSegSNR {:6.2}  segSNR {:6.2}  SI-SDR {:6.2}",
            format!("mpdr T={t}s"),
            v[0],
            v[1],
            v[2]
        );
    }
    Ok(())
}

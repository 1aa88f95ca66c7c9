//! Compares the hybrid output with its PCA-denoised version: spectral flux
//! of the noise-only lead-in and the tracked eigenvalue spread.

use std::sync::Arc;

use hybss::metrics::{evaluate, spectral_flux};
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
    let scene = Scene::preset(1, 3)?;
    let rendered = render(&scene, &atf)?;
    let lead_in = (rendered.onset_sample - scene.stft.frame_len_samples) / scene.stft.hop_samples + 1;
    for m in [Method::Iso, Method::Hyb, Method::SsHyb] {
        let mut p = Pipeline::new(
            PipelineConfig::with_method(m).steered_to(scene.target_direction()?),
            atf.clone(),
        )?;
        let out = p.enhance_spectrum(&rendered.mixture_spectrum)?;
        let mut y = p.stft().synthesize(&out.spectrum)?;
        y.resize(rendered.num_samples(), 0.0);
        let scores = evaluate(&rendered.ground_truth, &y, scene.stft.sample_rate_hz as f64)?;
        print!(
            "{:<8} noise-only flux {:.4}  fwSegSNR {:6.2} dB  SI-SDR {:6.2} dB",
            m.label(),
            spectral_flux(&out.spectrum[..lead_in])?,
            scores.fw_seg_snr,
            scores.si_sdr
        );
        let ev = &out.diagnostics.eigvals;
        if !ev.is_empty() {
            let spread: f64 =
                ev.iter().map(|e| 10.0 * (e[0] / e[1].max(1e-300)).log10()).sum::<f64>() / ev.len() as f64;
            print!("  mean eigenvalue spread {spread:.1} dB");
        }
        println!();
    }
    Ok(())
}

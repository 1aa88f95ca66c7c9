//! Runs the hybrid beamformer on a scene with one interferer and reports
//! which kinds of noise-field models win the per-bin minimum-power vote.

use std::collections::BTreeMap;
use std::sync::Arc;

use hybss::noise_fields::{DictionaryConfig, DictionaryVariant, ModelKind, NoiseFieldLibrary};
use hybss::pipeline::{Method, Pipeline, PipelineConfig};
use hybss::scene::{render, Scene};
use hybss::spatial::{freefield_atf_for, glasses_array, GridDims};
use hybss::stft::StftConfig;

fn kind_name(k: &ModelKind) -> &'static str {
    match k {
        ModelKind::Identity => "identity",
        ModelKind::Isotropic => "isotropic",
        ModelKind::UnimodalAnisotropic { .. } => "anisotropic",
        ModelKind::PlaneWave { .. } => "plane wave",
    }
}

fn main() -> hybss::Result<()> {
    let atf = Arc::new(freefield_atf_for(
        &glasses_array(),
        GridDims::default(),
        &StftConfig::default(),
    )?);
    let scene = Scene::preset(2, 4)?;
    let rendered = render(&scene, &atf)?;
    println!(
        "target {:.0} deg, interferer {:.0} deg",
        scene.target.azimuth_deg,
        scene.interferers[0].azimuth_deg.rem_euclid(360.0)
    );
    for variant in [DictionaryVariant::SsHyb, DictionaryVariant::SsHybX] {
        let lib = Arc::new(NoiseFieldLibrary::new(
            atf.clone(),
            DictionaryConfig::with_variant(variant),
        )?);
        let mut cfg = PipelineConfig::with_method(Method::Hyb).steered_to(scene.target_direction()?);
        cfg.dict_variant = variant;
        let mut p = Pipeline::with_library(cfg, lib.clone())?;
        let out = p.enhance_spectrum(&rendered.mixture_spectrum)?;
        let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
        let mut total = 0;
        for frame in &out.diagnostics.selections[rendered.onset_sample / scene.stft.hop_samples..] {
            for &m in frame {
                *tally.entry(kind_name(&lib.kinds()[m as usize])).or_default() += 1;
                total += 1;
            }
        }
        println!("{variant:?} dictionary ({} models):", lib.num_models());
        for (k, n) in tally {
            println!("  {k:<12} {:5.1}%", 100.0 * n as f64 / total as f64);
        }
    }
    Ok(())
}

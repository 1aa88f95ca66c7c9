//! Every method on a few preset scenes, scored against the ground truth and
//! written as a results table with deltas relative to passthrough.
//!
//! `cargo run --release --example cocktail_party -- [num_scenes]`

use std::sync::Arc;

use hybss::metrics::{evaluate, metric_rows, write_metrics_csv, MetricSet};
use hybss::pipeline::{Method, Pipeline, PipelineConfig};
use hybss::scene::{render, Scene};
use hybss::spatial::{freefield_atf_for, glasses_array, GridDims};
use hybss::stft::StftConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let atf = Arc::new(freefield_atf_for(
        &glasses_array(),
        GridDims::default(),
        &StftConfig::default(),
    )?);
    let mut results = Vec::new();
    let mut sums = vec![[0.0; 3]; Method::ALL.len()];
    for seed in 0..n {
        let scene = Scene::preset(1 + (seed % 3) as usize, seed)?;
        let rendered = render(&scene, &atf)?;
        let fs = scene.stft.sample_rate_hz as f64;
        for (k, m) in Method::ALL.into_iter().enumerate() {
            let mut p = Pipeline::new(
                PipelineConfig::with_method(m).steered_to(scene.target_direction()?),
                atf.clone(),
            )?;
            let y = p.enhance(&rendered.mixture)?.audio_out;
            let s: MetricSet = evaluate(&rendered.ground_truth, &y, fs)?;
            for (acc, v) in sums[k].iter_mut().zip(s.values()) {
                *acc += v / n as f64;
            }
            results.push((format!("seed{seed}"), m.label().to_string(), s));
        }
    }
    println!("{:<12} {:>10} {:>10} {:>10}", "method", "fwSegSNR", "segSNR", "SI-SDR");
    for (m, s) in Method::ALL.iter().zip(&sums) {
        println!("{:<12} {:>10.2} {:>10.2} {:>10.2}", m.label(), s[0], s[1], s[2]);
    }
    let path = std::env::temp_dir().join("cocktail_party.csv");
    write_metrics_csv(
        &metric_rows(&results, Some("passthrough")),
        std::fs::File::create(&path)?,
    )?;
    println!("table written to {}", path.display());
    Ok(())
}

//! A target track that sweeps across grid nodes: per-frame snapping,
//! dictionary rebuilds and cache reuse when the head turns back.

use std::sync::Arc;

use hybss::pipeline::{enhance, Method, PipelineConfig, TrackPoint};
use hybss::scene::{render, Scene};
use hybss::spatial::{freefield_atf_for, glasses_array, Direction, GridDims};
use hybss::stft::StftConfig;

fn main() -> hybss::Result<()> {
    let atf = Arc::new(freefield_atf_for(
        &glasses_array(),
        GridDims::default(),
        &StftConfig::default(),
    )?);
    let mut scene = Scene::preset(2, 6)?;
    scene.target = Scene::clean(Direction::horizontal_deg(0.0), 6).target;
    let rendered = render(&scene, &atf)?;

    let mut cfg = PipelineConfig::with_method(Method::SsHyb);
    cfg.target_track = [0.0, 4.0, 8.0, 12.0, 8.0, 4.0, 0.0]
        .iter()
        .enumerate()
        .map(|(k, &az)| TrackPoint::new(0.8 * k as f64, az, 90.0))
        .collect();
    let out = enhance(&rendered.mixture, atf.clone(), cfg)?;
    let d = &out.diagnostics;
    println!(
        "{} frames, {} node changes, {} dictionary builds",
        d.target_nodes.len(),
        d.rebuilds,
        d.dictionary_builds
    );
    let mut last = usize::MAX;
    for (t, &node) in d.target_nodes.iter().enumerate() {
        if node != last {
            let dir = atf.grid.direction(node);
            println!(
                "  frame {t:>4} ({:.2} s): node {node} at {:.0} deg",
                t as f64 * scene.stft.frame_period_s(),
                dir.azimuth_rad.to_degrees()
            );
            last = node;
        }
    }
    println!("output finite: {}", out.audio_out.iter().all(|v| v.is_finite()));
    Ok(())
}

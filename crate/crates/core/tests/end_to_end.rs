use std::sync::{Arc, OnceLock};

use hybss::metrics::{evaluate, metric_rows, seg_snr, write_metrics_csv, SegmentalConfig};
use hybss::noise_fields::{DictionaryConfig, DictionaryVariant, NoiseFieldLibrary, WeightDictionary};
use hybss::pipeline::{enhance, Method, Pipeline, PipelineConfig, TrackPoint};
use hybss::scene::{render, InterfererSpec, Scene};
use hybss::spatial::{freefield_atf_for, glasses_array, AtfSet, Direction, GridDims};
use hybss::stft::StftConfig;

fn atf() -> Arc<AtfSet> {
    static ATF: OnceLock<Arc<AtfSet>> = OnceLock::new();
    ATF.get_or_init(|| {
        Arc::new(freefield_atf_for(&glasses_array(), GridDims::default(), &StftConfig::default()).unwrap())
    })
    .clone()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let e: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let n: f64 = b.iter().map(|y| y * y).sum();
    (e / n).sqrt()
}

#[test]
fn pure_target_passes_through_every_distortionless_method() {
    let a = atf();
    let target = Direction::horizontal_deg(132.0);
    let mut scene = Scene::clean(target, 4);
    scene.duration_s = 3.0;
    let r = render(&scene, &a).unwrap();
    for m in [Method::Iso, Method::Hyb, Method::SsHyb, Method::SsHybX] {
        let mut p = Pipeline::new(PipelineConfig::with_method(m).steered_to(target), a.clone()).unwrap();
        let out = p.enhance_spectrum(&r.mixture_spectrum).unwrap();
        let mut y = p.stft().synthesize(&out.spectrum).unwrap();
        y.resize(r.num_samples(), 0.0);
        let err = rel_err(&y, &r.ground_truth);
        assert!(err < 1e-6, "{m}: {err}");
    }
}

#[test]
fn noisy_scene_orders_methods_by_output_snr() {
    let a = atf();
    let lib = Arc::new(NoiseFieldLibrary::new(a.clone(), DictionaryConfig::default()).unwrap());
    let mut totals = [0.0; 3];
    for seed in 0..3 {
        let mut scene = Scene::preset(2, 100 + seed).unwrap();
        scene.duration_s = 4.0;
        let r = render(&scene, &a).unwrap();
        let fs = r.sample_rate_hz() as f64;
        for (k, m) in [Method::Passthrough, Method::Iso, Method::SsHyb]
            .into_iter()
            .enumerate()
        {
            let cfg = PipelineConfig::with_method(m).steered_to(scene.target_direction().unwrap());
            let mut p = if m == Method::Passthrough {
                Pipeline::new(cfg, a.clone()).unwrap()
            } else {
                Pipeline::with_library(cfg, lib.clone()).unwrap()
            };
            let y = p.enhance(&r.mixture).unwrap().audio_out;
            totals[k] += seg_snr(&r.ground_truth, &y, &SegmentalConfig::new(fs)).unwrap();
        }
    }
    assert!(totals[2] >= totals[1] && totals[1] >= totals[0], "{totals:?}");
}

#[test]
fn head_rotation_rebuilds_once_per_boundary_and_stays_finite() {
    let a = atf();
    let mut scene = Scene::clean(Direction::horizontal_deg(30.0), 8);
    scene.duration_s = 2.5;
    scene.target.onset_s = 0.2;
    let r = render(&scene, &a).unwrap();
    let mut cfg = PipelineConfig::with_method(Method::SsHyb);
    cfg.target_track = vec![TrackPoint::new(0.0, 30.0, 90.0)];
    let steady = enhance(&r.mixture, a.clone(), cfg.clone()).unwrap();
    assert_eq!(steady.diagnostics.rebuilds, 0);

    cfg.target_track = vec![TrackPoint::new(0.0, 31.0, 90.0), TrackPoint::new(1.2, 34.0, 90.0)];
    let turned = enhance(&r.mixture, a.clone(), cfg).unwrap();
    assert_eq!(turned.diagnostics.rebuilds, 1);
    assert_eq!(turned.diagnostics.dictionary_builds, 2);
    let nodes = &turned.diagnostics.target_nodes;
    let swap = nodes.windows(2).position(|w| w[0] != w[1]).unwrap() + 1;
    let hop = r.scene.stft.hop_samples;
    assert!(swap * hop >= 12_000 && (swap - 1) * hop < 12_000);
    let y = &turned.audio_out;
    assert!(y.iter().all(|v| v.is_finite()));
    let around = &y[(swap - 10) * hop..(swap + 10) * hop];
    let peak = around.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let input_peak = r.mixture[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(peak <= 4.0 * input_peak);
}

#[test]
fn enhancement_is_deterministic() {
    let a = atf();
    let mut scene = Scene::preset(3, 2).unwrap();
    scene.duration_s = 2.5;
    let r = render(&scene, &a).unwrap();
    let cfg = PipelineConfig::with_method(Method::SsHybX).steered_to(scene.target_direction().unwrap());
    let y1 = enhance(&r.mixture, a.clone(), cfg.clone()).unwrap();
    let y2 = enhance(&r.mixture, a.clone(), cfg).unwrap();
    assert_eq!(y1.audio_out, y2.audio_out);
    assert_eq!(y1.diagnostics.selections, y2.diagnostics.selections);
}

#[test]
fn clean_mixture_equals_ground_truth() {
    let r = render(&Scene::clean(Direction::horizontal_deg(6.0), 1), &atf()).unwrap();
    let err = r.mixture[0]
        .iter()
        .zip(&r.ground_truth)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-10);
}

#[test]
fn interferer_at_90_degrees_sets_per_channel_sir() {
    let a = atf();
    let mut scene = Scene::clean(Direction::horizontal_deg(0.0), 12);
    scene.interferers = vec![InterfererSpec {
        azimuth_deg: 90.0,
        inclination_deg: 90.0,
        level_db: 0.0,
    }];
    let r = render(&scene, &a).unwrap();
    let on = r.onset_sample;
    for q in 0..a.num_mics() {
        let pt: f64 = r.target.audio[q][on..].iter().map(|v| v * v).sum();
        let pi: f64 = r.noise_components[0].audio[q][on..].iter().map(|v| v * v).sum();
        let sir = 10.0 * (pt / pi).log10();
        assert!(sir.abs() <= 0.5, "mic {q}: {sir} dB");
    }
}

#[test]
fn atf_container_round_trips() {
    let a = atf();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.atf");
    a.save(&path).unwrap();
    assert_eq!(AtfSet::load(&path).unwrap(), *a);
}

#[test]
fn dictionary_container_round_trips() {
    let a = atf();
    let lib = NoiseFieldLibrary::new(a, DictionaryConfig::with_variant(DictionaryVariant::SsHyb)).unwrap();
    let d = lib.build_dictionary(&Direction::horizontal_deg(72.0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.wdc");
    d.save(&path).unwrap();
    let back = WeightDictionary::load(&path).unwrap();
    assert_eq!(back.num_models(), d.num_models());
    for m in [0, 1, 150, 301] {
        for f in [0, 40, 80] {
            assert_eq!(back.weight(m, f), d.weight(m, f));
        }
    }
}

#[test]
fn configuration_files_round_trip() {
    let mut cfg = PipelineConfig::with_method(Method::Hyb);
    cfg.target_track = vec![TrackPoint::new(0.0, 12.0, 90.0), TrackPoint::new(2.5, 18.0, 84.0)];
    assert_eq!(
        PipelineConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap(),
        cfg
    );
    let scene = Scene::preset(3, 9).unwrap();
    assert_eq!(Scene::from_toml_str(&scene.to_toml_string().unwrap()).unwrap(), scene);
    assert!(PipelineConfig::from_toml_str("bogus_key = 1").is_err());
}

#[test]
fn metrics_table_has_fixed_columns() {
    let x: Vec<f64> = (0..4000).map(|i| (i as f64 * 0.05).sin()).collect();
    let y: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| v + 0.1 * ((i * 7919) % 13) as f64 / 13.0)
        .collect();
    let results = vec![
        ("t0".to_string(), "a".to_string(), evaluate(&x, &x, 10_000.0).unwrap()),
        ("t0".to_string(), "b".to_string(), evaluate(&x, &y, 10_000.0).unwrap()),
    ];
    let rows = metric_rows(&results, Some("b"));
    let mut buf = Vec::new();
    write_metrics_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("trial,method,metric,value,delta\n"));
    assert_eq!(text.lines().count(), 1 + 6);
}

//! Command-line front end: `simulate`, `atf-gen`, `build-dict`, `enhance`
//! and `evaluate`.
//!
//! Exit codes: 0 on success, 2 for usage errors and unreadable or missing
//! inputs, 1 for any other failure. Diagnostics go to standard error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{ArgAction, Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hybrid::write_selections_csv;
use crate::metrics::{evaluate, metric_rows, write_metrics_csv, MetricSet};
use crate::noise_fields::{DictionaryVariant, NoiseFieldLibrary};
use crate::pipeline::{Diagnostics, Method, Pipeline, PipelineConfig, TrackPoint};
use crate::scene::{read_wav, render, write_wav, Scene};
use crate::spatial::{freefield_atf_for, glasses_array, AtfSet, Direction, GridDims, SPEED_OF_SOUND};
use crate::stft::StftConfig;

#[derive(Debug, Parser)]
#[command(
    name = "hybss",
    about = "Hybrid-MVDR beamforming with spectral PCA denoising",
    disable_help_flag = true,
    disable_help_subcommand = true
)]
pub struct Cli {
    /// Worker threads for batch work over input files.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// Print help.
    #[arg(long, global = true, action = ArgAction::Help)]
    help: Option<bool>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic scene to wave files plus a manifest.
    Simulate(SimulateArgs),
    /// Generate a free-field ATF container for the glasses array.
    AtfGen(AtfGenArgs),
    /// Precompute a weight dictionary for one steering direction.
    BuildDict(BuildDictArgs),
    /// Enhance multichannel recordings.
    Enhance(EnhanceArgs),
    /// Score estimates against a reference and write a metrics table.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene description file (TOML).
    #[arg(long, conflicts_with = "preset")]
    pub scene: Option<PathBuf>,
    /// Built-in preset: n1, n2, n3 or nSources=K.
    #[arg(long)]
    pub preset: Option<String>,
    /// Seed for presets; overrides the scene file's seed when given.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scene length in seconds, overriding the scene's value.
    #[arg(long)]
    pub duration_s: Option<f64>,
    /// ATF container; defaults to the free-field glasses array on a 60x30 grid.
    #[arg(long)]
    pub atf: Option<PathBuf>,
    /// Directory for the wave files and manifest.toml.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AtfGenArgs {
    /// Output ATF1 container.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of azimuth columns.
    #[arg(long, default_value_t = 60)]
    pub grid_azimuth: usize,
    /// Number of inclination rings (even).
    #[arg(long, default_value_t = 30)]
    pub grid_inclination: usize,
    /// Speed of sound in m/s.
    #[arg(long, default_value_t = SPEED_OF_SOUND)]
    pub speed_of_sound: f64,
    /// Pipeline configuration supplying the STFT settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildDictArgs {
    /// ATF1 container.
    #[arg(long)]
    pub atf: PathBuf,
    /// Output WDC1 container.
    #[arg(long)]
    pub out: PathBuf,
    /// Steering azimuth in degrees.
    #[arg(long)]
    pub azimuth_deg: f64,
    /// Steering inclination in degrees from the zenith.
    #[arg(long, default_value_t = 90.0)]
    pub inclination_deg: f64,
    /// ss-hyb or ss-hybx; defaults to the configuration's variant.
    #[arg(long)]
    pub variant: Option<DictionaryVariant>,
    /// Pipeline configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    /// Input wave file(s), one channel per microphone.
    #[arg(long = "input", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// ATF1 container matching the recording array.
    #[arg(long)]
    pub atf: PathBuf,
    /// Pipeline configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// passthrough, iso, mpdr, hyb, ss-hyb or ss-hybx; overrides the config.
    #[arg(long)]
    pub method: Option<Method>,
    /// Fixed target azimuth; overrides the configured track.
    #[arg(long)]
    pub azimuth_deg: Option<f64>,
    /// Target inclination in degrees from the zenith, with --azimuth-deg.
    #[arg(long, default_value_t = 90.0, requires = "azimuth_deg")]
    pub inclination_deg: f64,
    /// Output file for a single input.
    #[arg(long, conflicts_with = "out_dir")]
    pub output: Option<PathBuf>,
    /// Output directory for any number of inputs; files keep their names.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write per-bin model selections next to each output.
    #[arg(long)]
    pub selections: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Clean reference; channel 0 is used.
    #[arg(long)]
    pub reference: PathBuf,
    /// Estimates as NAME=PATH or PATH (named after the file stem).
    #[arg(long = "estimate", required = true, num_args = 1..)]
    pub estimates: Vec<String>,
    /// Method name that deltas are computed against.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Trial label written to every row.
    #[arg(long, default_value = "trial")]
    pub trial: String,
    /// Output table with columns trial,method,metric,value,delta.
    #[arg(long)]
    pub out_csv: PathBuf,
}

/// Entry point shared by the binary and tests.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Wav { .. } | Error::Config { .. } => 2,
        _ => 1,
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::AtfGen(a) => atf_gen(a),
        Command::BuildDict(a) => build_dict(a),
        Command::Enhance(a) => enhance(a),
        Command::Evaluate(a) => evaluate_cmd(a),
    })
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn default_atf(stft: &StftConfig) -> Result<AtfSet> {
    freefield_atf_for(&glasses_array(), GridDims::default(), stft)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Serialize)]
struct ManifestFile {
    name: String,
    path: String,
    channels: usize,
}

#[derive(Debug, Serialize)]
struct Manifest {
    sample_rate_hz: u32,
    num_samples: usize,
    onset_sample: usize,
    reference_mic: usize,
    files: Vec<ManifestFile>,
    scene: Scene,
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut scene = match (&a.scene, &a.preset) {
        (Some(path), _) => Scene::load(path)?,
        (None, Some(name)) => Scene::named_preset(name, a.seed.unwrap_or(0))?,
        (None, None) => return Err(Error::InvalidParameter("either --scene or --preset is required".into())),
    };
    if let Some(seed) = a.seed {
        scene.seed = seed;
    }
    if let Some(d) = a.duration_s {
        scene.duration_s = d;
    }
    scene.validate()?;
    let atf = match &a.atf {
        Some(p) => AtfSet::load(p)?,
        None => default_atf(&scene.stft)?,
    };
    let r = render(&scene, &atf)?;
    create_dir(&a.out_dir)?;
    let fs_hz = r.sample_rate_hz();
    let mut files = Vec::new();
    let mut put = |name: &str, audio: &[Vec<f64>]| -> Result<()> {
        let file = format!("{name}.wav");
        write_wav(a.out_dir.join(&file), audio, fs_hz)?;
        files.push(ManifestFile {
            name: name.to_string(),
            path: file,
            channels: audio.len(),
        });
        Ok(())
    };
    put("mixture", &r.mixture)?;
    put("target", &r.target.audio)?;
    put("noise", &r.noise.audio)?;
    if r.noise_components.len() > 1 {
        for c in &r.noise_components {
            put(&c.name, &c.audio)?;
        }
    }
    let manifest = Manifest {
        sample_rate_hz: fs_hz,
        num_samples: r.num_samples(),
        onset_sample: r.onset_sample,
        reference_mic: 0,
        files,
        scene,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let path = a.out_dir.join("manifest.toml");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    eprintln!("wrote {} files to {}", manifest.files.len() + 1, a.out_dir.display());
    Ok(())
}

fn atf_gen(a: AtfGenArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let grid = GridDims::new(a.grid_azimuth, a.grid_inclination)?;
    let atf = crate::spatial::freefield_atf(
        &glasses_array(),
        grid,
        &cfg.stft.bin_frequencies(),
        a.speed_of_sound,
        cfg.stft.sample_rate_hz as f64,
    )?;
    atf.save(&a.out)?;
    eprintln!(
        "wrote {} directions x {} bands x {} mics to {}",
        atf.num_directions(),
        atf.num_bands(),
        atf.num_mics(),
        a.out.display()
    );
    Ok(())
}

fn build_dict(a: BuildDictArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let atf = Arc::new(AtfSet::load(&a.atf)?);
    atf.check_compatible(&cfg.stft)?;
    let variant = a.variant.unwrap_or(cfg.dict_variant);
    let lib = NoiseFieldLibrary::new(atf, cfg.dictionary_config(variant))?;
    let dict = lib.build_dictionary(&Direction::from_degrees(a.azimuth_deg, a.inclination_deg)?)?;
    dict.save(&a.out)?;
    eprintln!(
        "wrote {} models x {} bands to {} (node {})",
        dict.num_models(),
        dict.num_bands(),
        a.out.display(),
        dict.target_index
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct DiagnosticsFile {
    input: String,
    method: String,
    num_models: usize,
    num_frames: usize,
    rebuilds: usize,
    dictionary_builds: usize,
    sample_rate_hz: u32,
    num_samples: usize,
}

fn enhance_one(input: &Path, output: &Path, pipeline: &mut Pipeline, selections: bool) -> Result<Diagnostics> {
    let (audio, fs_hz) = read_wav(input)?;
    if fs_hz != pipeline.config().stft.sample_rate_hz {
        return Err(Error::InvalidParameter(format!(
            "{} is sampled at {fs_hz} Hz, configuration expects {} Hz",
            input.display(),
            pipeline.config().stft.sample_rate_hz
        )));
    }
    let out = pipeline.enhance(&audio)?;
    write_wav(output, std::slice::from_ref(&out.audio_out), fs_hz)?;
    let d = out.diagnostics;
    let diag = DiagnosticsFile {
        input: input.display().to_string(),
        method: out.method.to_string(),
        num_models: d.num_models,
        num_frames: d.target_nodes.len(),
        rebuilds: d.rebuilds,
        dictionary_builds: d.dictionary_builds,
        sample_rate_hz: fs_hz,
        num_samples: out.audio_out.len(),
    };
    let text = toml::to_string(&diag).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let diag_path = output.with_extension("diag.toml");
    fs::write(&diag_path, text).map_err(|e| Error::io(&diag_path, e))?;
    if selections && !d.selections.is_empty() {
        let p = output.with_extension("selections.csv");
        let f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        write_selections_csv(&d.selections, std::io::BufWriter::new(f))?;
    }
    eprintln!(
        "{} -> {} ({}, M={}, rebuilds={})",
        input.display(),
        output.display(),
        diag.method,
        diag.num_models,
        diag.rebuilds
    );
    Ok(d)
}

fn enhance(a: EnhanceArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(m) = a.method {
        cfg.method = m;
    }
    if let Some(az) = a.azimuth_deg {
        cfg.target_track = vec![TrackPoint::new(0.0, az, a.inclination_deg)];
    }
    cfg.validate()?;
    let atf = Arc::new(AtfSet::load(&a.atf)?);
    let outputs: Vec<PathBuf> = match (&a.output, &a.out_dir) {
        (Some(o), _) if a.inputs.len() == 1 => {
            if let Some(parent) = o.parent().filter(|p| !p.as_os_str().is_empty()) {
                create_dir(parent)?;
            }
            vec![o.clone()]
        }
        (Some(_), _) => {
            return Err(Error::InvalidParameter(
                "--output takes a single --input; use --out-dir".into(),
            ))
        }
        (None, Some(dir)) => {
            create_dir(dir)?;
            a.inputs
                .iter()
                .map(|p| dir.join(p.file_name().unwrap_or(p.as_os_str())))
                .collect()
        }
        (None, None) => {
            return Err(Error::InvalidParameter(
                "either --output or --out-dir is required".into(),
            ))
        }
    };
    // One library is shared by every worker; each worker owns its pipeline.
    atf.check_compatible(&cfg.stft)?;
    let library = match cfg.method.dictionary_variant(cfg.dict_variant) {
        Some(v) => Some(Arc::new(NoiseFieldLibrary::new(atf.clone(), cfg.dictionary_config(v))?)),
        None => None,
    };
    let make = || match &library {
        Some(l) => Pipeline::with_library(cfg.clone(), l.clone()),
        None => Pipeline::new(cfg.clone(), atf.clone()),
    };
    a.inputs
        .par_iter()
        .zip(outputs.par_iter())
        .map_init(make, |p, (input, output)| {
            let p = p.as_mut().map_err(|e| Error::InvalidParameter(e.to_string()))?;
            enhance_one(input, output, p, a.selections).map(|_| ())
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(())
}

fn parse_estimate(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(spec);
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string());
            (name, p)
        }
    }
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let (reference, fs_ref) = read_wav(&a.reference)?;
    let reference = &reference[0];
    let scored = a
        .estimates
        .par_iter()
        .map(|spec| {
            let (name, path) = parse_estimate(spec);
            let (est, fs_est) = read_wav(&path)?;
            if fs_est != fs_ref {
                return Err(Error::InvalidParameter(format!(
                    "{} is sampled at {fs_est} Hz, reference at {fs_ref} Hz",
                    path.display()
                )));
            }
            // Enhanced files may be shorter than the reference by a partial frame.
            let n = reference.len().min(est[0].len());
            let m: MetricSet = evaluate(&reference[..n], &est[0][..n], fs_ref as f64)?;
            Ok((a.trial.clone(), name, m))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(b) = &a.baseline {
        if !scored.iter().any(|(_, m, _)| m == b) {
            return Err(Error::InvalidParameter(format!(
                "baseline {b:?} is not among the estimates"
            )));
        }
    }
    let rows = metric_rows(&scored, a.baseline.as_deref());
    let f = fs::File::create(&a.out_csv).map_err(|e| Error::io(&a.out_csv, e))?;
    write_metrics_csv(&rows, std::io::BufWriter::new(f))?;
    for r in &rows {
        match r.delta {
            Some(d) => eprintln!("{:>12} {:>10} {:8.3} dB ({:+.3})", r.method, r.metric, r.value, d),
            None => eprintln!("{:>12} {:>10} {:8.3} dB", r.method, r.metric, r.value),
        }
    }
    Ok(())
}

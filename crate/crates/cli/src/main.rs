#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fsid::calibration::{fit_noise_profile, BurstAccumulator, NoiseProfile};
use fsid::dataset::{self, BuildConfig};
use fsid::diversity::{self, DiversityReport};
use fsid::metrics::{evaluate_set, EvalPair, Frame, SsimParams};
use fsid::noise::{self, ClampPolicy, InjectionConfig};
use fsid::rawio::{self, RawLevels};
use fsid::scene::{self, GeneratorConfig};
use fsid::unprocess::{self, IspParams};
use fsid::{CfaPattern, Rng};

const RGB_EXT: &str = "fsrgb";
const RAW_EXT: &str = "fsraw";

#[derive(Parser)]
#[command(name = "fsidgen", version, about = "Synthetic clean/noisy RAW pair generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample and render scenes to linear RGB frames.
    Generate(GenerateArgs),
    /// Edge-ratio diversity gate over a directory of rendered frames.
    Analyze(AnalyzeArgs),
    /// Fit a noise profile to a burst of RAW frames of a static scene.
    Calibrate(CalibrateArgs),
    /// Convert linear RGB frames to mosaicked RAW.
    Unprocess(UnprocessArgs),
    /// Add calibrated noise to clean RAW frames.
    Inject(InjectArgs),
    /// Build a sharded pair dataset.
    BuildDataset(BuildArgs),
    /// Re-check a dataset against its manifest.
    Verify(VerifyArgs),
    /// PSNR/SSIM table over a list of output/ground-truth pairs.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct LevelArgs {
    #[arg(long, default_value_t = 0)]
    black: u16,
    #[arg(long, default_value_t = u16::MAX)]
    white: u16,
}

impl LevelArgs {
    fn levels(&self) -> Result<RawLevels> {
        let levels = RawLevels {
            black: self.black,
            white: self.white,
        };
        levels.validate()?;
        Ok(levels)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// Generator config JSON; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_preview: bool,
    #[command(flatten)]
    levels: LevelArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = diversity::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, value_parser = parse_range, default_value = "0.08:0.45")]
    band: (f64, f64),
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    burst: PathBuf,
    #[arg(long)]
    camera: String,
    #[arg(long)]
    gain: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct UnprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// ISP parameter JSON; identity parameters when omitted.
    #[arg(long)]
    isp: Option<PathBuf>,
    #[arg(long, default_value = "RGGB")]
    pattern: CfaPattern,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    levels: LevelArgs,
}

#[derive(Args)]
struct InjectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, value_parser = parse_range, default_value = "0.25:4")]
    gain_range: (f64, f64),
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    levels: LevelArgs,
}

#[derive(Args)]
struct BuildArgs {
    /// Build config JSON; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Overrides the config's pair count.
    #[arg(long)]
    count: Option<usize>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Path to manifest.jsonl, or the dataset directory holding it.
    manifest: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// JSON Lines: {"pair_id", "output", "ground_truth", "label", "lux"};
    /// relative paths resolve against this file's directory.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Use the 8×8 block SSIM instead of the 11×11 Gaussian window.
    #[arg(long)]
    block_ssim: bool,
    #[arg(long, default_value_t = 1.0)]
    peak: f64,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{lo:?}: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{hi:?}: {e}"))?;
    if !(lo <= hi) {
        return Err(format!("lower bound {lo} exceeds upper bound {hi}"));
    }
    Ok((lo, hi))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    rawio::write_atomic(path, text.as_bytes())?;
    Ok(())
}

/// Files in `dir` with extension `ext`, sorted by name.
fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        bail!("no .{ext} files in {}", dir.display());
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn generate(a: GenerateArgs) -> Result<ExitCode> {
    let cfg: GeneratorConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => GeneratorConfig::default(),
    };
    cfg.validate()?;
    let levels = a.levels.levels()?;
    create_dir(&a.out)?;
    for id in 0..a.count {
        let seed = scene::batch_scene_seed(a.seed, id);
        let spec = scene::scene_from_seed(seed, id, &cfg)?;
        let img = scene::render(&spec);
        let stem = a.out.join(format!("scene_{id:06}"));
        rawio::write_atomic(&stem.with_extension("json"), (spec.to_json()? + "\n").as_bytes())?;
        rawio::write_rgb(&stem.with_extension(RGB_EXT), &img, levels)?;
        if !a.no_preview {
            rawio::write_png_preview(&stem.with_extension("png"), &img)?;
        }
        log::info!("scene {id}: seed {seed}, {} objects", spec.objects.len());
    }
    println!("wrote {} scenes to {}", a.count, a.out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct AnalyzeReport {
    files: Vec<String>,
    #[serde(flatten)]
    report: DiversityReport,
}

fn analyze(a: AnalyzeArgs) -> Result<ExitCode> {
    let files = files_with_ext(&a.input, RGB_EXT)?;
    let imgs = files
        .iter()
        .map(|p| Ok(rawio::read_rgb(p)?.0))
        .collect::<Result<Vec<_>>>()?;
    let report = diversity::validate_batch(&imgs, a.band, a.threshold)?;
    println!(
        "{} frames: mean edge ratio {:.4} (std {:.4}), mean color entropy {:.3} bits, band [{}, {}]: {}",
        imgs.len(),
        report.mean_edge_ratio,
        report.std_edge_ratio,
        report.mean_color_entropy,
        a.band.0,
        a.band.1,
        if report.accepted { "accepted" } else { "rejected" }
    );
    let accepted = report.accepted;
    if let Some(path) = &a.report {
        let files = files.iter().map(|p| file_name(p)).collect();
        write_json(path, &AnalyzeReport { files, report })?;
    }
    Ok(if accepted { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn calibrate(a: CalibrateArgs) -> Result<ExitCode> {
    let files = files_with_ext(&a.burst, RAW_EXT)?;
    let mut acc: Option<BurstAccumulator> = None;
    for path in &files {
        let (frame, _) = rawio::read_bayer(path)?;
        acc.get_or_insert_with(|| BurstAccumulator::for_frame(&frame))
            .push(&frame)
            .with_context(|| format!("adding {}", path.display()))?;
    }
    let acc = acc.expect("at least one frame");
    let profile = fit_noise_profile(&acc.samples()?, &a.camera, &a.gain)?;
    for (name, ch) in [("R", &profile.channels.r), ("G", &profile.channels.g), ("B", &profile.channels.b)] {
        println!("{name}: k = {:.6e}, sigma2 = {:.6e}", ch.k, ch.sigma2);
    }
    write_json(&a.out, &profile)?;
    println!("{} frames -> {}", files.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn unprocess_cmd(a: UnprocessArgs) -> Result<ExitCode> {
    let params: IspParams = match &a.isp {
        Some(p) => read_json(p)?,
        None => IspParams::identity(),
    };
    params.validate()?;
    let levels = a.levels.levels()?;
    let files = files_with_ext(&a.input, RGB_EXT)?;
    create_dir(&a.out)?;
    for path in &files {
        let (rgb, _) = rawio::read_rgb(path)?;
        let raw = unprocess::unprocess(&rgb, &params, a.pattern)?;
        let target = a.out.join(Path::new(&file_name(path)).with_extension(RAW_EXT));
        rawio::write_bayer(&target, &raw, levels)?;
    }
    println!("unprocessed {} frames into {}", files.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct InjectLog<'a> {
    file: &'a str,
    gain_scale: f64,
}

fn inject(a: InjectArgs) -> Result<ExitCode> {
    let profile = NoiseProfile::from_json(
        &fs::read_to_string(&a.profile).with_context(|| format!("reading {}", a.profile.display()))?,
    )?;
    noise::validate_gain_range(a.gain_range)?;
    let levels = a.levels.levels()?;
    let cfg = InjectionConfig {
        profile,
        gain_range: a.gain_range,
        clamp: ClampPolicy::Clamp,
        seed: a.seed,
    };
    let files = files_with_ext(&a.input, RAW_EXT)?;
    create_dir(&a.out)?;
    let root = Rng::from_seed(a.seed).derive("inject");
    let mut log = String::new();
    for path in &files {
        let name = file_name(path);
        let (clean, _) = rawio::read_bayer(path)?;
        // keyed by file name so results do not depend on which other files are present
        let noisy = noise::inject(&clean, &cfg, &root.derive(&name))?;
        rawio::write_bayer(&a.out.join(&name), &noisy.image, levels)?;
        log.push_str(&serde_json::to_string(&InjectLog {
            file: &name,
            gain_scale: noisy.gain_scale,
        })?);
        log.push('\n');
    }
    rawio::write_atomic(&a.out.join("inject.jsonl"), log.as_bytes())?;
    println!("injected {} frames into {}", files.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn build_dataset(a: BuildArgs) -> Result<ExitCode> {
    let mut cfg: BuildConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => BuildConfig::default(),
    };
    if let Some(n) = a.count {
        cfg.count = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let started = std::time::Instant::now();
    let m = dataset::build(&cfg, &a.out, a.workers)?;
    let secs = started.elapsed().as_secs_f64();
    println!(
        "{} pairs ({} skipped, {} bytes) in {:.1} s ({:.1} pairs/s) -> {}",
        m.totals.pairs,
        m.totals.skipped,
        m.totals.bytes,
        secs,
        m.totals.pairs as f64 / secs.max(1e-9),
        a.out.join(dataset::MANIFEST_FILE).display()
    );
    Ok(ExitCode::SUCCESS)
}

fn verify(a: VerifyArgs) -> Result<ExitCode> {
    let path = if a.manifest.is_dir() {
        a.manifest.join(dataset::MANIFEST_FILE)
    } else {
        a.manifest
    };
    let report = dataset::verify(&path)?;
    println!("{report}");
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

#[derive(Deserialize)]
struct PairLine {
    pair_id: String,
    output: PathBuf,
    ground_truth: PathBuf,
    label: String,
    lux: f64,
}

fn evaluate(a: EvaluateArgs) -> Result<ExitCode> {
    let base = a.pairs.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(&a.pairs).with_context(|| format!("reading {}", a.pairs.display()))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let p: PairLine =
            serde_json::from_str(line).with_context(|| format!("{} line {}", a.pairs.display(), i + 1))?;
        pairs.push(EvalPair {
            output: Frame::read(&base.join(&p.output))?,
            ground_truth: Frame::read(&base.join(&p.ground_truth))?,
            pair_id: p.pair_id,
            label: p.label,
            lux: p.lux,
        });
    }
    let mut params = if a.block_ssim { SsimParams::block8() } else { SsimParams::default() };
    params.peak = a.peak;
    let table = evaluate_set(&pairs, &params)?;
    let csv = table.to_csv();
    rawio::write_atomic(&a.out, csv.as_bytes())?;
    print!("{csv}");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Analyze(a) => analyze(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Unprocess(a) => unprocess_cmd(a),
        Command::Inject(a) => inject(a),
        Command::BuildDataset(a) => build_dataset(a),
        Command::Verify(a) => verify(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

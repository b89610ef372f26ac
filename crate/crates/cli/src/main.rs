//! Batch pipeline front end: generate fixtures, run the estimators, build
//! maps, answer questions, and score runs. Every command writes a manifest
//! (arguments, seed, input digests) sufficient to reproduce its outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use audiomap::audio::cdr::{
    calibrate_k, estimate_cdr, CalibrationConfig, RangeCalibration, WelchConfig,
};
use audiomap::audio::{AudioClip, MicArray};
use audiomap::fusion::{build_global_map, GlobalMap, MapConfig};
use audiomap::geometry::{CameraTrajectory, FrameConfig, GlobalPoint};
use audiomap::metrics::{evaluate_run, MetricsConfig};
use audiomap::qa::{resolve, Answer, Question};
use audiomap::simkit::{moving_speaker_scenario, simulate_walkthrough, Scenario};
use audiomap::tracks::{build_audio_track, parse_snapshot, SegTrackFile, TrackBundle};
use audiomap::Error;

#[derive(Parser)]
#[command(name = "audiomap", version, about = "Spatial-audio track and map pipeline")]
struct Cli {
    /// Seed for anything stochastic (simulation, fixtures).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for per-window audio analysis.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// -v for debug, -vv for trace.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the fixture bundle for a scenario (bundled one by default).
    Simulate(SimulateArgs),
    /// Estimate a direction-of-arrival track from multi-channel audio.
    Doa(DoaArgs),
    /// Range estimation: fit or apply a distance calibration.
    Range {
        #[command(subcommand)]
        command: RangeCommand,
    },
    /// Assemble a track bundle (descriptor + segmentation + audio track).
    Track(TrackArgs),
    /// Build the fused global map from a bundle, optionally plotting it.
    Map(MapArgs),
    /// Answer questions against a built map.
    Answer(AnswerArgs),
    /// Score predicted answers against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON; omitted = the bundled moving-speaker scene.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DoaArgs {
    #[arg(long)]
    audio: PathBuf,
    /// Microphone array JSON; omitted = the built-in 7-mic glasses array.
    #[arg(long)]
    array: Option<PathBuf>,
    /// Analysis window and hop, seconds.
    #[arg(long, default_value_t = 0.25)]
    hop: f64,
    /// Range calibration JSON to attach distances.
    #[arg(long)]
    calib: Option<PathBuf>,
    /// Output JSON track.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum RangeCommand {
    /// Fit the calibration constant from labeled audio segments.
    Calibrate(CalibrateArgs),
    /// Per-window distance estimates for a whole clip.
    Apply(ApplyArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    audio: PathBuf,
    /// CSV of labeled segments: `start,duration,distance_m` per line.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    array: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    audio: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    #[arg(long)]
    array: Option<PathBuf>,
    #[arg(long, default_value_t = 0.25)]
    hop: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    descriptor: PathBuf,
    #[arg(long)]
    seg: Option<PathBuf>,
    #[arg(long)]
    audio: Option<PathBuf>,
    #[arg(long)]
    array: Option<PathBuf>,
    #[arg(long)]
    calib: Option<PathBuf>,
    #[arg(long, default_value_t = 0.25)]
    hop: f64,
    /// Output bundle JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MapArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also render the map to this PNG.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct AnswerArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn sha256_file(path: &Path) -> audiomap::Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Provider(format!("cannot read {}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Reproducibility record written next to every command's outputs.
fn write_manifest(
    out: &Path,
    command: &str,
    seed: u64,
    config: serde_json::Value,
    inputs: &[&Path],
) -> audiomap::Result<()> {
    let mut digests = BTreeMap::new();
    for path in inputs {
        digests.insert(path.display().to_string(), sha256_file(path)?);
    }
    let manifest = serde_json::json!({
        "command": command,
        "seed": seed,
        "config": config,
        "inputs": digests,
    });
    let path = if out.extension().is_some() {
        out.with_extension("manifest.json")
    } else {
        out.join("manifest.json")
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn load_array(path: &Option<PathBuf>) -> audiomap::Result<MicArray> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Provider(format!("cannot read {}: {e}", p.display())))?;
            MicArray::from_json(&text)
        }
        None => Ok(MicArray::aria()),
    }
}

fn load_calib(path: &Path) -> audiomap::Result<RangeCalibration> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Provider(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> audiomap::Result<Vec<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Provider(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> audiomap::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn run(cli: &Cli) -> audiomap::Result<()> {
    match &cli.command {
        Command::Simulate(args) => {
            let scenario: Scenario = match &args.scenario {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| {
                        Error::Provider(format!("cannot read {}: {e}", path.display()))
                    })?;
                    serde_json::from_str(&text)?
                }
                None => moving_speaker_scenario(cli.seed),
            };
            let bundle = simulate_walkthrough(&scenario)?;
            bundle.write_to(&args.out)?;
            write_json(&args.out.join("scenario.json"), &scenario)?;
            let inputs: Vec<&Path> = args.scenario.iter().map(PathBuf::as_path).collect();
            write_manifest(
                &args.out,
                "simulate",
                cli.seed,
                serde_json::to_value(&scenario)?,
                &inputs,
            )?;
            log::info!("fixtures written to {}", args.out.display());
            Ok(())
        }
        Command::Doa(args) => {
            let array = load_array(&args.array)?;
            let clip = AudioClip::read_wav(&args.audio)?;
            let calib = args.calib.as_deref().map(load_calib).transpose()?;
            let track = build_audio_track_parallel(
                &clip,
                &array,
                calib.as_ref(),
                args.hop,
                cli.jobs,
            )?;
            write_json(&args.out, &track)?;
            let mut inputs: Vec<&Path> = vec![&args.audio];
            inputs.extend(args.array.as_deref());
            inputs.extend(args.calib.as_deref());
            write_manifest(
                &args.out,
                "doa",
                cli.seed,
                serde_json::json!({"hop": args.hop, "jobs": cli.jobs}),
                &inputs,
            )?;
            log::info!("{} track points -> {}", track.len(), args.out.display());
            Ok(())
        }
        Command::Range { command } => match command {
            RangeCommand::Calibrate(args) => {
                let array = load_array(&args.array)?;
                let clip = AudioClip::read_wav(&args.audio)?;
                let labels = std::fs::read_to_string(&args.labels).map_err(|e| {
                    Error::Provider(format!("cannot read {}: {e}", args.labels.display()))
                })?;
                let welch = WelchConfig::default();
                let mut samples = Vec::new();
                for (idx, line) in labels.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') || line.starts_with("start,") {
                        continue;
                    }
                    let fields: Vec<f64> = line
                        .split(',')
                        .map(|f| f.trim().parse::<f64>())
                        .collect::<std::result::Result<_, std::num::ParseFloatError>>()
                        .map_err(|e| {
                            Error::parse(format!("{} line {}", args.labels.display(), idx + 1), e.to_string())
                        })?;
                    if fields.len() != 3 {
                        return Err(Error::parse(
                            format!("{} line {}", args.labels.display(), idx + 1),
                            "expected start,duration,distance_m",
                        ));
                    }
                    let frame = estimate_cdr(&clip, (fields[0], fields[1]), &array, &welch)?;
                    samples.push((fields[2], frame.cdr));
                }
                let calibration = calibrate_k(&samples, &CalibrationConfig::default())?;
                write_json(&args.out, &calibration)?;
                let mut inputs: Vec<&Path> = vec![&args.audio, &args.labels];
                inputs.extend(args.array.as_deref());
                write_manifest(
                    &args.out,
                    "range calibrate",
                    cli.seed,
                    serde_json::json!({"samples": samples.len()}),
                    &inputs,
                )?;
                log::info!(
                    "K = {:.4} from {} inliers -> {}",
                    calibration.k,
                    calibration.inlier_count,
                    args.out.display()
                );
                Ok(())
            }
            RangeCommand::Apply(args) => {
                let array = load_array(&args.array)?;
                let clip = AudioClip::read_wav(&args.audio)?;
                let calib = load_calib(&args.calib)?;
                let track =
                    build_audio_track_parallel(&clip, &array, Some(&calib), args.hop, cli.jobs)?;
                write_json(&args.out, &track)?;
                let mut inputs: Vec<&Path> = vec![&args.audio, &args.calib];
                inputs.extend(args.array.as_deref());
                write_manifest(
                    &args.out,
                    "range apply",
                    cli.seed,
                    serde_json::json!({"hop": args.hop}),
                    &inputs,
                )?;
                Ok(())
            }
        },
        Command::Track(args) => {
            let descriptor_bytes = std::fs::read(&args.descriptor).map_err(|e| {
                Error::Provider(format!("cannot read {}: {e}", args.descriptor.display()))
            })?;
            let sd = parse_snapshot(&descriptor_bytes)?;
            let seg = match &args.seg {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| {
                        Error::Provider(format!("cannot read {}: {e}", path.display()))
                    })?;
                    SegTrackFile::parse_csv(&text)?
                }
                None => Vec::new(),
            };
            let audio = match &args.audio {
                Some(path) => {
                    let array = load_array(&args.array)?;
                    let clip = AudioClip::read_wav(path)?;
                    let calib = args.calib.as_deref().map(load_calib).transpose()?;
                    build_audio_track_parallel(&clip, &array, calib.as_ref(), args.hop, cli.jobs)?
                }
                None => Vec::new(),
            };
            let bundle = TrackBundle::new(sd, seg, audio)?;
            write_json(&args.out, &bundle)?;
            let mut inputs: Vec<&Path> = vec![&args.descriptor];
            inputs.extend(args.seg.as_deref());
            inputs.extend(args.audio.as_deref());
            inputs.extend(args.calib.as_deref());
            write_manifest(
                &args.out,
                "track",
                cli.seed,
                serde_json::json!({"hop": args.hop}),
                &inputs,
            )?;
            Ok(())
        }
        Command::Map(args) => {
            let bundle: TrackBundle = serde_json::from_str(
                &std::fs::read_to_string(&args.bundle).map_err(|e| {
                    Error::Provider(format!("cannot read {}: {e}", args.bundle.display()))
                })?,
            )?;
            let traj = load_trajectory(&args.trajectory)?;
            let map = build_global_map(&bundle, &traj, &MapConfig::default())?;
            write_json(&args.out, &map)?;
            if let Some(plot) = &args.plot {
                render_map_png(&map, plot)?;
            }
            write_manifest(
                &args.out,
                "map",
                cli.seed,
                serde_json::to_value(MapConfig::default())?,
                &[&args.bundle, &args.trajectory],
            )?;
            Ok(())
        }
        Command::Answer(args) => {
            let map: GlobalMap = serde_json::from_str(
                &std::fs::read_to_string(&args.map).map_err(|e| {
                    Error::Provider(format!("cannot read {}: {e}", args.map.display()))
                })?,
            )?;
            let traj = load_trajectory(&args.trajectory)?;
            let questions: Vec<Question> = read_jsonl(&args.questions)?;
            let mut lines = Vec::new();
            for q in &questions {
                let mut answer = resolve(&map, q, &traj)?;
                // serialized distances carry 2 decimals; precision is an
                // output concern only
                if let Some(m) = answer.meters {
                    answer.meters = Some((m * 100.0).round() / 100.0);
                }
                lines.push(serde_json::to_string(&answer)?);
            }
            if let Some(parent) = args.out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&args.out, lines.join("\n") + "\n")?;
            write_manifest(
                &args.out,
                "answer",
                cli.seed,
                serde_json::json!({"questions": questions.len()}),
                &[&args.map, &args.questions, &args.trajectory],
            )?;
            Ok(())
        }
        Command::Eval(args) => {
            let questions: Vec<Question> = read_jsonl(&args.questions)?;
            let preds: Vec<Answer> = read_jsonl(&args.pred)?;
            let gts: Vec<Answer> = read_jsonl(&args.gt)?;
            let report = evaluate_run(&questions, &preds, &gts, &MetricsConfig::default())?;
            write_json(&args.out, &report)?;
            write_manifest(
                &args.out,
                "eval",
                cli.seed,
                serde_json::to_value(MetricsConfig::default())?,
                &[&args.questions, &args.pred, &args.gt],
            )?;
            log::info!("overall accuracy {:.3}", report.overall);
            for (kind, acc) in &report.per_kind {
                log::info!("  {kind}: {acc:.3} (n={})", report.counts[kind]);
            }
            Ok(())
        }
    }
}

fn load_trajectory(path: &Path) -> audiomap::Result<CameraTrajectory> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Provider(format!("cannot read {}: {e}", path.display())))?;
    CameraTrajectory::from_csv(&text, FrameConfig::y_forward())
}

/// Window-parallel audio track building; output order is by window index
/// regardless of thread count.
fn build_audio_track_parallel(
    clip: &AudioClip,
    array: &MicArray,
    calib: Option<&RangeCalibration>,
    hop: f64,
    jobs: usize,
) -> audiomap::Result<Vec<audiomap::tracks::AudioTrackPoint>> {
    if jobs <= 1 {
        return build_audio_track(clip, array, calib, hop);
    }
    let total = clip.duration();
    let n_windows = (total / hop).floor() as usize;
    let results: Vec<audiomap::Result<Vec<audiomap::tracks::AudioTrackPoint>>> =
        std::thread::scope(|scope| {
            let chunk = n_windows.div_ceil(jobs);
            let mut handles = Vec::new();
            for w in 0..jobs {
                let lo = w * chunk;
                let hi = ((w + 1) * chunk).min(n_windows);
                if lo >= hi {
                    continue;
                }
                handles.push(scope.spawn(move || {
                    // Sub-clip covering this worker's windows, re-offset.
                    let start = lo as f64 * hop;
                    let duration = (hi - lo) as f64 * hop;
                    let seg = clip.segment(start, duration)?;
                    let sub = AudioClip::new(
                        clip.sample_rate,
                        seg.iter().map(|c| c.to_vec()).collect(),
                    )?;
                    let mut points = build_audio_track(&sub, array, calib, hop)?;
                    for p in &mut points {
                        p.t += start;
                    }
                    Ok(points)
                }));
            }
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

const PLOT_SIZE: u32 = 800;

/// Static top-down rendering: target track as a line fading with time,
/// anchors as crosses, camera path in grey.
fn render_map_png(map: &GlobalMap, path: &Path) -> audiomap::Result<()> {
    use image::{Rgb, RgbImage};
    let mut img = RgbImage::from_pixel(PLOT_SIZE, PLOT_SIZE, Rgb([255, 255, 255]));

    let mut xs: Vec<f64> = map.target.points.iter().map(|p| p.p.x).collect();
    let mut ys: Vec<f64> = map.target.points.iter().map(|p| p.p.y).collect();
    for a in [&map.reference, &map.facing].into_iter().flatten() {
        xs.push(a.position.x);
        ys.push(a.position.y);
    }
    if xs.is_empty() {
        return Err(Error::EmptyTrack);
    }
    let (min_x, max_x) = bounds(&xs);
    let (min_y, max_y) = bounds(&ys);
    let span = (max_x - min_x).max(max_y - min_y).max(1.0);
    let margin = 60.0;
    let scale = (PLOT_SIZE as f64 - 2.0 * margin) / span;
    let to_px = |p: &GlobalPoint| -> (i64, i64) {
        let x = margin + (p.x - min_x) * scale;
        // +y up
        let y = PLOT_SIZE as f64 - margin - (p.y - min_y) * scale;
        (x.round() as i64, y.round() as i64)
    };
    let mut put = |x: i64, y: i64, c: Rgb<u8>| {
        if (0..PLOT_SIZE as i64).contains(&x) && (0..PLOT_SIZE as i64).contains(&y) {
            img.put_pixel(x as u32, y as u32, c);
        }
    };
    let n = map.target.points.len().max(1);
    for (i, p) in map.target.points.iter().enumerate() {
        let (x, y) = to_px(&p.p);
        let shade = 220 - (160 * i / n) as u8;
        let color = Rgb([shade, 40, 40]);
        for dx in -1..=1 {
            for dy in -1..=1 {
                put(x + dx, y + dy, color);
            }
        }
    }
    for (anchor, color) in [
        (&map.reference, Rgb([30, 80, 200])),
        (&map.facing, Rgb([30, 160, 60])),
    ] {
        if let Some(a) = anchor {
            let (x, y) = to_px(&a.position);
            for d in -6i64..=6 {
                put(x + d, y, color);
                put(x, y + d, color);
            }
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    img.save(path)
        .map_err(|e| Error::Provider(format!("cannot write plot: {e}")))?;
    Ok(())
}

fn bounds(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

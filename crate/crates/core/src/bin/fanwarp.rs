//! `fanwarp` command-line tool.
//!
//! Every subcommand prints one JSON document on stdout when it succeeds.
//! Diagnostics go to stderr. Exit codes: 0 success, 1 usage error, 2 data error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use fanwarp::augment::{augment, plan_convex, plan_linear, AugmentPolicy};
use fanwarp::baseline::{
    evaluate_samples, train, LinearModel, Sample, TrainConfig, DEFAULT_FEATURE_SPEC,
};
use fanwarp::dataset::{self, load_manifest, stream, DiskSource, GroupBy, Split, SplitAssignment};
use fanwarp::geometry::{ProbeKind, ViewingWindow};
use fanwarp::raster::{load_image, save_image};
use fanwarp::rng::ItemRng;
use fanwarp::windowfit::{estimate_window, DEFAULT_THRESHOLD};
use fanwarp::{phantom, Error};

#[derive(Parser)]
#[command(
    name = "fanwarp",
    version,
    about = "Projective viewing-window augmentation for ultrasound frames"
)]
struct Cli {
    /// Worker threads for parallel stages (results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic phantom frames and a manifest.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        convex_fraction: f64,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the viewing window of one frame.
    EstimateWindow {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f32,
    },
    /// Stratified, video-aware train/val/test split.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value = "0.72,0.14,0.14")]
        fractions: String,
        /// Keep videos together (`video`) or split frame by frame (`item`).
        #[arg(long, default_value = "video")]
        group_by: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count records by probe kind and label.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Augment a single frame.
    Augment {
        #[arg(long)]
        image: PathBuf,
        /// Window annotation: 8 numbers p1lx,p1ly,p2lx,p2ly,p1rx,p1ry,p2rx,p2ry.
        #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["manifest", "id"])]
        window: Option<String>,
        /// Probe kind for --window.
        #[arg(long, requires = "window")]
        probe: Option<String>,
        /// Take the window (and item id) from this manifest record.
        #[arg(long, requires = "id")]
        manifest: Option<PathBuf>,
        #[arg(long, requires = "manifest")]
        id: Option<String>,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value_t = 0)]
        epoch: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the logistic baseline on the train split.
    TrainBaseline {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        epochs: u64,
        #[arg(long)]
        lr: f64,
        #[arg(long)]
        out: PathBuf,
        /// Leave linear frames untransformed.
        #[arg(long)]
        no_linear_transform: bool,
        /// Leave convex frames unjittered.
        #[arg(long)]
        no_augment: bool,
    },
    /// Score a split with a trained model.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also write the metrics JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SeedArg {
    /// Seed; falls back to FANWARP_SEED.
    #[arg(long = "seed", env = "FANWARP_SEED")]
    value: u64,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    splits: PathBuf,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = Result<Value, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    let result = match cli.workers {
        Some(0) => Err(usage("--workers must be >= 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli.command)),
            Err(e) => Err(usage(format!("cannot start {n} workers: {e}"))),
        },
        None => run(cli.command),
    };

    match result {
        Ok(value) => {
            let text = serde_json::to_string_pretty(&value).expect("JSON output serializes");
            // a closed pipe downstream is not our failure
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Synth {
            n,
            convex_fraction,
            seed,
            out,
        } => synth(n, convex_fraction, seed.value, &out),
        Command::EstimateWindow { image, threshold } => {
            let img = load_image(&image)?;
            let w = estimate_window(&img, threshold)?;
            Ok(json!({ "window": w.to_annotation(), "probe": w.probe }))
        }
        Command::Split {
            manifest,
            seed,
            fractions,
            group_by,
            out,
        } => {
            let group_by: GroupBy = group_by.parse().map_err(usage)?;
            split(&manifest, seed.value, &fractions, group_by, &out)
        }
        Command::Stats { manifest } => {
            let records = load_manifest(&manifest)?;
            let s = dataset::stats(&records);
            eprint!("{}", s.table());
            Ok(serde_json::to_value(&s).expect("stats serialize"))
        }
        Command::Augment {
            image,
            window,
            probe,
            manifest,
            id,
            policy,
            seed,
            epoch,
            out,
        } => augment_one(AugmentArgs {
            image,
            window,
            probe,
            manifest,
            id,
            policy,
            seed: seed.value,
            epoch,
            out,
        }),
        Command::TrainBaseline {
            data,
            policy,
            seed,
            epochs,
            lr,
            out,
            no_linear_transform,
            no_augment,
        } => {
            let mut policy = load_policy(policy.as_deref())?;
            if no_linear_transform {
                policy.apply_linear_transform = false;
            }
            if no_augment {
                policy.apply_convex_jitter = false;
            }
            train_baseline(&data, &policy, seed.value, epochs, lr, &out)
        }
        Command::Evaluate {
            data,
            model,
            split,
            out,
        } => {
            let split: Split = split.parse().map_err(usage)?;
            evaluate(&data, &model, split, out.as_deref())
        }
    }
}

fn synth(n: usize, convex_fraction: f64, seed: u64, out: &Path) -> CmdResult {
    if n == 0 {
        return Err(usage("--n must be >= 1"));
    }
    if !(0.0..=1.0).contains(&convex_fraction) {
        return Err(usage("--convex-fraction must be within [0, 1]"));
    }
    let records = phantom::generate(n, convex_fraction, seed, out)?;
    let s = dataset::stats(&records);
    let videos: std::collections::BTreeSet<_> = records
        .iter()
        .filter_map(|r| r.video_id.as_deref())
        .collect();
    Ok(json!({
        "manifest": out.join(phantom::MANIFEST_NAME),
        "n": s.total,
        "convex": s.by_probe[&ProbeKind::Convex],
        "linear": s.by_probe[&ProbeKind::Linear],
        "positive": s.by_label[&dataset::Label::Positive],
        "negative": s.by_label[&dataset::Label::Negative],
        "videos": videos.len(),
    }))
}

fn parse_fractions(text: &str) -> Result<[f64; 3], Failure> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--fractions {text:?}: {e}")))?;
    <[f64; 3]>::try_from(parts)
        .map_err(|_| usage(format!("--fractions needs 3 values, got {text:?}")))
}

fn split(manifest: &Path, seed: u64, fractions: &str, group_by: GroupBy, out: &Path) -> CmdResult {
    let fractions = parse_fractions(fractions)?;
    let records = load_manifest(manifest)?;
    let report = dataset::split_by(&records, fractions, seed, group_by).map_err(|e| match e {
        Error::InvalidFractions(m) => usage(m),
        other => Failure::Data(other),
    })?;
    report.assignment.save(out)?;
    let groups = match group_by {
        GroupBy::Video => records
            .iter()
            .map(|r| r.group_key())
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        GroupBy::Item => records.len(),
    };
    let sizes = report.assignment.sizes();
    Ok(json!({
        "out": out,
        "sizes": {
            "train": sizes[&Split::Train],
            "val": sizes[&Split::Val],
            "test": sizes[&Split::Test],
        },
        "group_by": group_by,
        "groups": groups,
        "leaked_videos": dataset::leaked_videos(&records, &report.assignment),
        "warnings": report.warnings,
    }))
}

fn load_policy(path: Option<&Path>) -> Result<AugmentPolicy, Failure> {
    Ok(match path {
        Some(p) => AugmentPolicy::load(p)?,
        None => AugmentPolicy::default(),
    })
}

fn parse_window(text: &str) -> Result<[f64; 8], Failure> {
    let cleaned = text.trim().trim_start_matches('[').trim_end_matches(']');
    let values: Vec<f64> = cleaned
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--window {text:?}: {e}")))?;
    <[f64; 8]>::try_from(values)
        .map_err(|_| usage(format!("--window needs 8 numbers, got {text:?}")))
}

struct AugmentArgs {
    image: PathBuf,
    window: Option<String>,
    probe: Option<String>,
    manifest: Option<PathBuf>,
    id: Option<String>,
    policy: Option<PathBuf>,
    seed: u64,
    epoch: u64,
    out: PathBuf,
}

fn augment_one(args: AugmentArgs) -> CmdResult {
    let policy = load_policy(args.policy.as_deref())?;
    let (window, item_id) = match (&args.window, &args.manifest, &args.id) {
        (Some(text), None, None) => {
            let probe: ProbeKind = args
                .probe
                .as_deref()
                .ok_or_else(|| usage("--window requires --probe convex|linear"))?
                .parse()
                .map_err(usage)?;
            let window = ViewingWindow::from_annotation(parse_window(text)?, probe)?;
            let id = args
                .image
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            (window, id)
        }
        (None, Some(manifest), Some(id)) => {
            let records = load_manifest(manifest)?;
            let record = records
                .iter()
                .find(|r| &r.id == id)
                .ok_or_else(|| Error::Unassigned(id.clone()))?;
            let window = record
                .viewing_window()?
                .ok_or_else(|| Error::MissingWindow(id.clone()))?;
            (window, id.clone())
        }
        _ => {
            return Err(usage(
                "give either --window with --probe, or --manifest with --id",
            ))
        }
    };

    let img = load_image(&args.image)?;
    let plan = match window.probe {
        ProbeKind::Convex if policy.apply_convex_jitter => Some(plan_convex(
            &window,
            &policy,
            &mut ItemRng::derive(args.seed, &item_id, args.epoch),
        )?),
        ProbeKind::Linear if policy.apply_linear_transform => Some(plan_linear(
            &window,
            &policy,
            &mut ItemRng::derive(args.seed, &item_id, args.epoch),
        )?),
        _ => None,
    };
    let mut rng = ItemRng::derive(args.seed, &item_id, args.epoch);
    let (out_img, out_window) = augment(&img, &window, &policy, &mut rng)?;
    save_image(&out_img, &args.out)?;
    Ok(json!({
        "out": args.out,
        "id": item_id,
        "probe": window.probe,
        "slope": plan.map(|p| p.slope.value()),
        "homography": plan.map(|p| p.homography.to_row_major()),
        "window": out_window.to_annotation(),
    }))
}

fn epoch_samples(
    records: &[dataset::ManifestRecord],
    assignment: &SplitAssignment,
    split: Split,
    policy: &AugmentPolicy,
    seed: u64,
    epoch: u64,
    source: &DiskSource,
    feature_spec: [usize; 2],
) -> fanwarp::Result<Vec<Sample>> {
    stream(records, assignment, split, policy, seed, epoch, source)?
        .map(|item| item.and_then(|it| Sample::from_image(&it.image, it.label, feature_spec)))
        .collect()
}

fn train_baseline(
    data: &DataArgs,
    policy: &AugmentPolicy,
    seed: u64,
    epochs: u64,
    lr: f64,
    out: &Path,
) -> CmdResult {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(usage("--lr must be > 0"));
    }
    let records = load_manifest(&data.manifest)?;
    let assignment = SplitAssignment::load(&data.splits)?;
    let source = DiskSource::for_manifest(&data.manifest);
    let config = TrainConfig {
        epochs,
        learning_rate: lr,
        seed,
        ..TrainConfig::default()
    };
    let mut samples = |epoch: u64| {
        epoch_samples(
            &records,
            &assignment,
            Split::Train,
            policy,
            seed,
            epoch,
            &source,
            config.feature_spec,
        )
    };
    let model = train(&mut samples, &config)?;
    model.save(out)?;
    Ok(json!({
        "model": out,
        "epochs": epochs,
        "learning_rate": lr,
        "train_size": assignment.ids(Split::Train).len(),
        "policy": policy,
    }))
}

fn evaluate(data: &DataArgs, model_path: &Path, split: Split, out: Option<&Path>) -> CmdResult {
    let records = load_manifest(&data.manifest)?;
    let assignment = SplitAssignment::load(&data.splits)?;
    let model = LinearModel::load(model_path)?;
    if model.feature_spec != DEFAULT_FEATURE_SPEC {
        log::info!("model uses feature spec {:?}", model.feature_spec);
    }
    let source = DiskSource::for_manifest(&data.manifest);
    let samples = epoch_samples(
        &records,
        &assignment,
        split,
        &AugmentPolicy::disabled(),
        0,
        0,
        &source,
        model.feature_spec,
    )?;
    let metrics = evaluate_samples(&model, &samples)?;
    let value = serde_json::to_value(metrics).expect("metrics serialize");
    if let Some(path) = out {
        let mut text = serde_json::to_string_pretty(&value).expect("metrics serialize");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    Ok(value)
}

//! `pedradar`: simulate radar target logs, extract features, train, predict
//! and cross-validate the height and motion pipelines.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 model or bundle
//! version error.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use pedradar_core::bundle::{ModelBundle, TrainedModel};
use pedradar_core::data::{assemble_windows, TargetWindow};
use pedradar_core::dataset::{flatten_recordings, Manifest};
use pedradar_core::eval::{cross_validate_height, cross_validate_motion, HeightEvaluation, MotionEvaluation};
use pedradar_core::io::{self as logio, Format};
use pedradar_core::pipeline::{
    extract_all, height_sample, motion_sample, HeightModel, MotionModel, PipelineConfig, SampleId, Skipped,
};
use pedradar_core::report;
use pedradar_core::sim::{HeightPopulation, Scenario, StudySpec};

#[derive(Parser)]
#[command(name = "pedradar", version, about = "Pedestrian height and motion estimation from radar targets")]
struct Cli {
    /// Seed for every random choice; the same seed gives the same output.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Pipeline config JSON; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Abort on the first malformed log record instead of skipping it.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write labeled target logs and their manifest from a scenario.
    Simulate(SimulateArgs),
    /// Per-window feature table (CSV).
    Extract(ExtractArgs),
    /// Train a model on labeled logs and save it as a bundle.
    Train(TrainArgs),
    /// Per-window predictions of a saved model (JSONL).
    Predict(PredictArgs),
    /// Grouped k-fold cross-validation report.
    Evaluate(EvaluateArgs),
    /// CSV and SVG artifacts from a saved evaluation.
    Report(ReportArgs),
    /// Cross-validate every combination of a config grid.
    Sweep(SweepArgs),
    /// Print the effective pipeline config.
    Config,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Task {
    Height,
    Motion,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Height,
    Motion,
}

#[derive(Args)]
struct LogArgs {
    /// Target log (.jsonl or .csv).
    #[arg(long, short)]
    input: PathBuf,
    /// Log format; taken from the file extension when omitted.
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
    /// Track manifest; defaults to manifest.json next to the log.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file: a study description or explicit recordings.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in study used without a scenario file.
    #[arg(long, value_enum, default_value = "motion")]
    preset: Preset,
    #[arg(long)]
    subjects: Option<usize>,
    /// Windows per recording.
    #[arg(long)]
    windows: Option<usize>,
    /// Output directory for the log and manifest.json.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_parser = parse_format, default_value = "jsonl")]
    format: Format,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    log: LogArgs,
    #[arg(long, value_enum)]
    task: Task,
    /// CSV output; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    log: LogArgs,
    #[arg(long, value_enum)]
    task: Task,
    /// Bundle file to write.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    log: LogArgs,
    /// Bundle written by `train`.
    #[arg(long, short)]
    model: PathBuf,
    /// JSONL output; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    log: LogArgs,
    #[arg(long, value_enum)]
    task: Task,
    /// Overrides the configured fold count.
    #[arg(long)]
    folds: Option<usize>,
    /// Directory for report.json and report.txt; the text table always
    /// goes to stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// report.json written by `evaluate`.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    log: LogArgs,
    #[arg(long, value_enum)]
    task: Task,
    /// JSON object mapping config pointers such as "/motion_forest/trees"
    /// to lists of values.
    #[arg(long)]
    grid: PathBuf,
    /// JSON results; a table goes to stdout either way.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    s.parse().map_err(|e: logio::IoError| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Model(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Model(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Model(m) => m,
        }
    }
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn model(e: impl std::fmt::Display) -> Failure {
    Failure::Model(e.to_string())
}

type Result<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let ctx = Context { cfg, seed: cli.seed, strict: cli.strict };
    match cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Extract(a) => extract(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Predict(a) => predict(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Report(a) => write_report(a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Config => {
            println!("{}", ctx.cfg.to_json());
            Ok(())
        }
    }
}

struct Context {
    cfg: PipelineConfig,
    seed: u64,
    strict: bool,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else { return Ok(PipelineConfig::default()) };
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let cfg: PipelineConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if cfg.folds < 2 {
        return Err(Failure::Usage("config: folds must be at least 2".into()));
    }
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p).map_err(|e| data(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn report_skipped(skipped: &[Skipped]) {
    if skipped.is_empty() {
        return;
    }
    eprintln!("{} windows skipped", skipped.len());
    for s in skipped.iter().take(5) {
        eprintln!("  {}: {}", s.key, s.reason);
    }
}

/// Log windows with labels from the manifest, if one is found.
fn load_windows(ctx: &Context, log: &LogArgs) -> Result<(Vec<TargetWindow>, Manifest)> {
    let format = match log.format {
        Some(f) => f,
        None => Format::from_path(&log.input).map_err(|e| Failure::Usage(e.to_string()))?,
    };
    let ingested = logio::ingest(&log.input, format, ctx.strict).map_err(data)?;
    if !ingested.rejected.is_empty() {
        eprintln!("{}", ingested.summary());
    }
    let manifest_path = match &log.manifest {
        Some(p) => Some(p.clone()),
        None => {
            let sibling = log.input.with_file_name("manifest.json");
            sibling.exists().then_some(sibling)
        }
    };
    let manifest = match manifest_path {
        Some(p) => logio::read_manifest(&p).map_err(data)?,
        None => Manifest::default(),
    };
    let mut assembly = assemble_windows(&ingested.targets, &ctx.cfg.windows).map_err(data)?;
    if assembly.dropped_sparse > 0 {
        eprintln!("{} windows dropped with fewer than {} targets", assembly.dropped_sparse, ctx.cfg.windows.min_targets);
    }
    manifest.label_windows(&mut assembly.windows);
    if assembly.windows.is_empty() {
        return Err(data("no complete windows in the log"));
    }
    Ok((assembly.windows, manifest))
}

fn simulate(ctx: &Context, a: SimulateArgs) -> Result<()> {
    let scenario = match &a.scenario {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            if let Ok(study) = serde_json::from_str::<StudySpec>(&text) {
                study.build(ctx.seed)
            } else {
                serde_json::from_str::<Scenario>(&text)
                    .map_err(|e| Failure::Usage(format!("{}: not a study or scenario: {e}", path.display())))?
            }
        }
        None => match a.preset {
            Preset::Motion => StudySpec::Motion {
                subjects: a.subjects.unwrap_or(12),
                recordings_per_class: 1,
                windows_per_recording: a.windows.unwrap_or(40),
                config: Default::default(),
            }
            .build(ctx.seed),
            Preset::Height => StudySpec::Height {
                subjects: a.subjects.unwrap_or(50),
                recordings_per_subject: 1,
                windows_per_recording: a.windows.unwrap_or(30),
                heights: HeightPopulation::adult_test_group(),
                speeds: (0.8, 1.8),
                config: Default::default(),
            }
            .build(ctx.seed),
        },
    };
    let recordings = scenario.run().map_err(|e| Failure::Usage(e.to_string()))?;
    let (targets, manifest) = flatten_recordings(&recordings);
    fs::create_dir_all(&a.out).map_err(|e| data(format!("{}: {e}", a.out.display())))?;
    let log = a.out.join(format!("targets.{}", a.format));
    logio::write_targets(&log, a.format, &targets).map_err(data)?;
    logio::write_manifest(&a.out.join("manifest.json"), &manifest).map_err(data)?;
    eprintln!("{} targets in {} recordings written to {}", targets.len(), recordings.len(), log.display());
    Ok(())
}

fn label_columns(manifest: &Manifest, w: &SampleId) -> String {
    let info = manifest.info(&w.track);
    let label = w.label.unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{}",
        w.key,
        w.track,
        w.index,
        w.start,
        info.subject_id,
        info.recording_id,
        label.height.map(|h| h.to_string()).unwrap_or_default(),
        label.motion.map(|m| m.to_string()).unwrap_or_default()
    )
}

fn extract(ctx: &Context, a: ExtractArgs) -> Result<()> {
    let (windows, manifest) = load_windows(ctx, &a.log)?;
    let mut out = output(a.out.as_deref())?;
    let mut text = String::from("key,track,index,start,subject_id,recording_id,height,motion,speed");
    match a.task {
        Task::Height => {
            let (samples, skipped) = extract_all(&windows, |w| height_sample(w, &ctx.cfg, ctx.seed));
            report_skipped(&skipped);
            text.push_str(",l_s,f_step,low_confidence");
            for n in HeightModel::feature_names() {
                let _ = write!(text, ",{n}");
            }
            text.push_str(",baseline\n");
            for s in &samples {
                let _ = write!(
                    text,
                    "{},{},{},{},{}",
                    label_columns(&manifest, &s.id),
                    s.speed,
                    s.stride.l_s,
                    s.stride.f_step,
                    s.stride.low_confidence
                );
                for f in s.features.0 {
                    let _ = write!(text, ",{f}");
                }
                let _ = writeln!(text, ",{}", s.baseline);
            }
        }
        Task::Motion => {
            let (samples, skipped) = extract_all(&windows, |w| motion_sample(w, &ctx.cfg, ctx.seed));
            report_skipped(&skipped);
            // Dictionary votes need trained dictionaries, so only the
            // window-local features are listed.
            let names = MotionModel::feature_names(false, ctx.cfg.hog_bins);
            for n in names.iter().take(4 + ctx.cfg.hog_bins) {
                let _ = write!(text, ",{n}");
            }
            text.push('\n');
            for s in &samples {
                let _ = write!(text, "{},{}", label_columns(&manifest, &s.id), s.speed);
                for f in s.moments.to_array().iter().chain(&s.hog) {
                    let _ = write!(text, ",{f}");
                }
                text.push('\n');
            }
        }
    }
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(data)
}

fn train(ctx: &Context, a: TrainArgs) -> Result<()> {
    let (windows, _) = load_windows(ctx, &a.log)?;
    let bundle = match a.task {
        Task::Height => {
            let (samples, skipped) = extract_all(&windows, |w| height_sample(w, &ctx.cfg, ctx.seed));
            report_skipped(&skipped);
            let labeled: Vec<_> = samples.iter().filter(|s| s.truth().is_some()).collect();
            if labeled.is_empty() {
                return Err(data("no windows with a height label"));
            }
            let m = HeightModel::train(&labeled, &ctx.cfg, ctx.seed).map_err(data)?;
            eprintln!("trained height model on {} windows", labeled.len());
            ModelBundle::height(m, ctx.cfg.clone())
        }
        Task::Motion => {
            let (samples, skipped) = extract_all(&windows, |w| motion_sample(w, &ctx.cfg, ctx.seed));
            report_skipped(&skipped);
            let labeled: Vec<_> = samples.iter().filter(|s| s.truth().is_some()).collect();
            if labeled.is_empty() {
                return Err(data("no windows with a motion label"));
            }
            let (m, info) = MotionModel::train(&labeled, &ctx.cfg, ctx.seed).map_err(data)?;
            if !info.missing_classes.is_empty() {
                let names: Vec<String> = info.missing_classes.iter().map(|c| c.to_string()).collect();
                eprintln!("no training data for {}", names.join(", "));
            }
            eprintln!("trained motion model on {} windows", labeled.len());
            ModelBundle::motion(m, ctx.cfg.clone())
        }
    };
    bundle.save(&a.out).map_err(model)
}

fn predict(ctx: &Context, a: PredictArgs) -> Result<()> {
    let bundle = ModelBundle::load(&a.model).map_err(model)?;
    // The bundle's own config reproduces its training-time preprocessing.
    let ctx = Context { cfg: bundle.config.clone(), seed: ctx.seed, strict: ctx.strict };
    let (windows, _) = load_windows(&ctx, &a.log)?;
    let mut lines = String::new();
    let mut push = |id: &SampleId, prediction: Value, truth: Option<Value>| {
        let mut rec = json!({ "key": id.key, "track": id.track, "index": id.index, "start": id.start, "prediction": prediction });
        if let Some(t) = truth {
            rec["truth"] = t;
        }
        lines.push_str(&rec.to_string());
        lines.push('\n');
    };
    match &bundle.model {
        TrainedModel::Height(m) => {
            let (samples, skipped) = extract_all(&windows, |w| height_sample(w, &ctx.cfg, ctx.seed));
            report_skipped(&skipped);
            for s in &samples {
                let h = m.predict(s).map_err(model)?;
                push(&s.id, json!(h), s.truth().map(|t| json!(t)));
            }
        }
        TrainedModel::Motion(m) => {
            let (samples, skipped) = extract_all(&windows, |w| motion_sample(w, &ctx.cfg, ctx.seed));
            report_skipped(&skipped);
            let refs: Vec<_> = samples.iter().collect();
            let classes = m.predict_batch(&refs).map_err(model)?;
            for (s, c) in samples.iter().zip(classes) {
                push(&s.id, json!(c), s.truth().map(|t| json!(t)));
            }
        }
    }
    let mut out = output(a.out.as_deref())?;
    out.write_all(lines.as_bytes()).and_then(|_| out.flush()).map_err(data)
}

fn evaluation_json(ctx: &Context, task: Task, windows: &[TargetWindow], manifest: &Manifest) -> Result<(Value, String)> {
    match task {
        Task::Height => {
            let (samples, skipped) = extract_all(windows, |w| height_sample(w, &ctx.cfg, ctx.seed));
            let mut e = cross_validate_height(&samples, manifest, &ctx.cfg, ctx.seed).map_err(data)?;
            e.skipped = skipped;
            Ok((serde_json::to_value(&e).expect("serializes"), report::height_summary(&e)))
        }
        Task::Motion => {
            let (samples, skipped) = extract_all(windows, |w| motion_sample(w, &ctx.cfg, ctx.seed));
            let mut e = cross_validate_motion(&samples, manifest, &ctx.cfg, ctx.seed).map_err(data)?;
            e.skipped = skipped;
            Ok((serde_json::to_value(&e).expect("serializes"), report::motion_summary(&e)))
        }
    }
}

fn evaluate(ctx: &Context, a: EvaluateArgs) -> Result<()> {
    let mut cfg = ctx.cfg.clone();
    if let Some(k) = a.folds {
        if k < 2 {
            return Err(Failure::Usage("--folds must be at least 2".into()));
        }
        cfg.folds = k;
    }
    let ctx = Context { cfg, ..*ctx };
    let (windows, manifest) = load_windows(&ctx, &a.log)?;
    let (value, text) = evaluation_json(&ctx, a.task, &windows, &manifest)?;
    print!("{text}");
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
        write_file(&dir.join("report.json"), &report::to_json(&value))?;
        write_file(&dir.join("report.txt"), &text)?;
    }
    Ok(())
}

fn write_report(a: ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input).map_err(|e| data(format!("{}: {e}", a.input.display())))?;
    fs::create_dir_all(&a.out).map_err(|e| data(format!("{}: {e}", a.out.display())))?;
    let mut written = Vec::new();
    let mut put = |name: &str, contents: String| -> Result<()> {
        write_file(&a.out.join(name), &contents)?;
        written.push(name.to_string());
        Ok(())
    };
    if let Ok(e) = serde_json::from_str::<MotionEvaluation>(&text) {
        put("confusion.csv", report::confusion_csv(&e.report, false))?;
        put("confusion_normalized.csv", report::confusion_csv(&e.report, true))?;
        put("confusion.svg", report::confusion_svg(&e.report))?;
        put("report.txt", report::motion_summary(&e))?;
    } else if let Ok(e) = serde_json::from_str::<HeightEvaluation>(&text) {
        put("binned_mae.csv", report::binned_csv(&e.forest))?;
        put("binned_mae.svg", report::binned_svg(&e.forest))?;
        put("binned_mae_baseline.csv", report::binned_csv(&e.baseline))?;
        put("binned_mae_baseline.svg", report::binned_svg(&e.baseline))?;
        put("report.txt", report::height_summary(&e))?;
    } else {
        return Err(data(format!("{}: not an evaluation report", a.input.display())));
    }
    eprintln!("wrote {} to {}", written.join(", "), a.out.display());
    Ok(())
}

/// Every combination of the grid's values, in key order then value order.
fn grid_points(grid: &serde_json::Map<String, Value>) -> Result<Vec<Vec<(String, Value)>>> {
    let mut points = vec![Vec::new()];
    for (key, values) in grid {
        let values = values.as_array().ok_or_else(|| Failure::Usage(format!("grid entry {key} is not a list")))?;
        if values.is_empty() {
            return Err(Failure::Usage(format!("grid entry {key} is empty")));
        }
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut p = p.clone();
                    p.push((key.clone(), v.clone()));
                    p
                })
            })
            .collect();
    }
    Ok(points)
}

fn sweep(ctx: &Context, a: SweepArgs) -> Result<()> {
    let text = fs::read_to_string(&a.grid).map_err(|e| Failure::Usage(format!("{}: {e}", a.grid.display())))?;
    let grid: serde_json::Map<String, Value> =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", a.grid.display())))?;
    let points = grid_points(&grid)?;
    let (windows, manifest) = load_windows(ctx, &a.log)?;
    let base = serde_json::to_value(&ctx.cfg).expect("config serializes");
    let mut results = Vec::new();
    let mut table = String::new();
    for point in points {
        let mut value = base.clone();
        for (pointer, v) in &point {
            let slot = value.pointer_mut(pointer).ok_or_else(|| Failure::Usage(format!("no config field {pointer}")))?;
            *slot = v.clone();
        }
        let cfg: PipelineConfig =
            serde_json::from_value(value).map_err(|e| Failure::Usage(format!("grid point {point:?}: {e}")))?;
        let run = Context { cfg, seed: ctx.seed, strict: ctx.strict };
        let (eval, _) = evaluation_json(&run, a.task, &windows, &manifest)?;
        let score = match a.task {
            Task::Height => json!({ "mae": eval["forest"]["mae"], "baseline_mae": eval["baseline"]["mae"] }),
            Task::Motion => json!({
                "macro_f1": eval["report"]["macro_f1"],
                "macro_precision": eval["report"]["macro_precision"],
                "macro_recall": eval["report"]["macro_recall"],
            }),
        };
        let settings: serde_json::Map<String, Value> = point.into_iter().collect();
        let _ = writeln!(table, "{}  {}", Value::Object(settings.clone()), score);
        results.push(json!({ "settings": settings, "score": score }));
    }
    print!("{table}");
    if let Some(path) = &a.out {
        write_file(path, &report::to_json(&results))?;
    }
    Ok(())
}

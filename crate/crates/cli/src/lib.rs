//! Command-line front end: dataset generation and preparation, both training
//! stages, evaluation, comparison, heatmaps and summary tables.
//!
//! Every command writes a `<output>.manifest.json` run record next to its
//! primary output.

mod manifest;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use histo_adapt::checkpoint::Checkpoint;
use histo_adapt::config::{fmt_f64, load_config, render_config};
use histo_adapt::eval::{
    compare, evaluate, predict_slides, render_heatmap, slide_thumbnail, EvalReport, ResultsTable,
};
use histo_adapt::ingest::layout::{read_dataset, read_slide_dir, read_split_manifest, write_dataset, write_split_manifest};
use histo_adapt::ingest::{extract_patches, gleason_to_grade, split_patient_disjoint, Slide, DEFAULT_MIN_TISSUE};
use histo_adapt::losses::{read_log, write_log, LossReport};
use histo_adapt::synth::{generate_dataset, Domain, SynthConfig};
use histo_adapt::training::{adapt_target, train_source, AdaptMode, MapperChoice, TrainConfig};
use histo_adapt::{Error, Result};

pub use manifest::{manifest_path, sha256_file, Artifact, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_CONFIG: i32 = 5;

#[derive(Parser, Debug)]
#[command(name = "histo-adapt", version, about = "Adversarial domain adaptation for slide grading")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic slide dataset.
    Synth(SynthArgs),
    /// Tile a slide image into a dataset, or write a patient-disjoint split.
    Prepare(PrepareArgs),
    /// Stage one: supervised training on labeled source slides.
    TrainSource(TrainSourceArgs),
    /// Stage two: adapt a target mapper on unlabeled target slides.
    Adapt(AdaptArgs),
    /// Slide-level evaluation of a checkpoint on labeled slides.
    Evaluate(EvaluateArgs),
    /// Paired McNemar comparison of two evaluation reports.
    Compare(CompareArgs),
    /// Render a probability heatmap over one slide.
    Heatmap(HeatmapArgs),
    /// Summary table over baseline and adapted evaluations.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DomainArg {
    Source,
    Target,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Adv,
    #[value(name = "adv+siamese")]
    AdvSiamese,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MapperArg {
    Source,
    Target,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
enum Side {
    All,
    Train,
    Test,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Key-value synthetic-data config; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    domain: DomainArg,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    /// Existing dataset to split.
    #[arg(long, conflicts_with = "slide_image")]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Whole slide image to tile into the dataset at `--out`.
    #[arg(long, requires_all = ["slide_id", "patient_id"])]
    slide_image: Option<PathBuf>,
    #[arg(long)]
    slide_id: Option<String>,
    #[arg(long)]
    patient_id: Option<String>,
    #[arg(long)]
    gleason: Option<u8>,
    #[arg(long, default_value_t = histo_adapt::ingest::DEFAULT_PATCH_SIZE)]
    patch_size: u32,
    #[arg(long, default_value_t = DEFAULT_MIN_TISSUE)]
    min_tissue: f64,
    /// Split manifest (with `--data`) or dataset directory (with `--slide-image`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainSourceArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use this split manifest instead of splitting with the config's ratio and seed.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AdaptArgs {
    #[arg(long)]
    source_ckpt: PathBuf,
    /// Source dataset; batches are drawn from its training split.
    #[arg(long)]
    source_data: PathBuf,
    #[arg(long)]
    source_split: Option<PathBuf>,
    #[arg(long)]
    target_data: PathBuf,
    /// Restrict adaptation to the training side of this split.
    #[arg(long)]
    target_split: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Overrides the configuration stored in the source checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    mapper: MapperArg,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Side::All)]
    side: Side,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct HeatmapArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// One slide directory of a dataset.
    #[arg(long)]
    slide: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = histo_adapt::eval::DEFAULT_SIGMA)]
    sigma: f64,
    /// Defaults to the target mapper when the checkpoint has one.
    #[arg(long, value_enum)]
    mapper: Option<MapperArg>,
    /// Thumbnail pixels per grid cell.
    #[arg(long, default_value_t = 32)]
    cell_px: u32,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    baseline: PathBuf,
    #[arg(long)]
    adv: PathBuf,
    #[arg(long)]
    adv_siamese: PathBuf,
    #[arg(long)]
    adv_log: Option<PathBuf>,
    #[arg(long)]
    adv_siamese_log: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Exit status for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Data { .. } | Error::Io { .. } | Error::Image { .. } | Error::Checkpoint(_) => EXIT_DATA,
        Error::Numeric(_) => EXIT_NUMERIC,
        Error::Config { .. } | Error::Parse { .. } => EXIT_CONFIG,
        _ => EXIT_OTHER,
    }
}

/// Parse `args` (program name first) and execute; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let text_args = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli.command, text_args) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Recorder {
    manifest: RunManifest,
}

impl Recorder {
    fn new(command: &str, args: Vec<String>) -> Self {
        Recorder {
            manifest: RunManifest {
                command: command.to_string(),
                args,
                config: None,
                seed: None,
                inputs: Vec::new(),
                artifacts: Vec::new(),
                started_unix_ms: manifest::now_ms(),
                finished_unix_ms: 0,
            },
        }
    }

    fn input(&mut self, p: &Path) {
        self.manifest.inputs.push(p.to_path_buf());
    }

    fn finish(mut self, primary: &Path, outputs: &[PathBuf]) -> Result<()> {
        self.manifest.artifacts = manifest::artifacts(outputs)?;
        self.manifest.finished_unix_ms = manifest::now_ms();
        self.manifest.write(primary)?;
        Ok(())
    }
}

fn dispatch(cmd: Command, args: Vec<String>) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a, args),
        Command::Prepare(a) => prepare(a, args),
        Command::TrainSource(a) => train(a, args),
        Command::Adapt(a) => adapt(a, args),
        Command::Evaluate(a) => eval_cmd(a, args),
        Command::Compare(a) => compare_cmd(a, args),
        Command::Heatmap(a) => heatmap(a, args),
        Command::Report(a) => report(a, args),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    }
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Data { path: path.to_path_buf(), message: format!("cannot read: {e}") })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn synth(a: SynthArgs, args: Vec<String>) -> Result<()> {
    let mut rec = Recorder::new("synth", args);
    let cfg: SynthConfig = match &a.config {
        Some(p) => {
            rec.input(p);
            load_config(p)?
        }
        None => SynthConfig::default(),
    };
    rec.manifest.config = Some(render_config(&cfg));
    rec.manifest.seed = Some(cfg.seed);
    let domain = match a.domain {
        DomainArg::Source => Domain::Source,
        DomainArg::Target => Domain::Target,
    };
    let slides = generate_dataset(&cfg, domain)?;
    write_dataset(&a.out, &slides)?;
    rec.finish(&a.out, &[a.out.clone()])
}

fn prepare(a: PrepareArgs, args: Vec<String>) -> Result<()> {
    let mut rec = Recorder::new("prepare", args);
    if let Some(image_path) = &a.slide_image {
        rec.input(image_path);
        let img = image::open(image_path)
            .map_err(|source| Error::Image { path: image_path.clone(), source })?
            .to_rgb8();
        let slide_id = a.slide_id.clone().expect("required by clap");
        let patches = extract_patches(&img, a.patch_size, a.min_tissue, &slide_id)?;
        let grade = a.gleason.map(gleason_to_grade).transpose()?;
        let slide = Slide {
            slide_id,
            patient_id: a.patient_id.clone().expect("required by clap"),
            gleason_score: a.gleason,
            grade,
            patches,
        };
        let mut slides = if a.out.join(histo_adapt::ingest::layout::MANIFEST_FILE).exists() {
            read_dataset(&a.out)?
        } else {
            Vec::new()
        };
        if slides.iter().any(|s| s.slide_id == slide.slide_id) {
            return Err(Error::InvalidInput(format!("slide {} already in {}", slide.slide_id, a.out.display())));
        }
        slides.push(slide);
        write_dataset(&a.out, &slides)?;
        return rec.finish(&a.out, &[a.out.clone()]);
    }
    let data = a
        .data
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("prepare needs --data or --slide-image".into()))?;
    rec.input(data);
    rec.manifest.seed = Some(a.seed);
    let split = split_patient_disjoint(read_dataset(data)?, a.ratio, a.seed)?;
    write_split_manifest(&a.out, &split.assignments())?;
    rec.finish(&a.out, &[a.out.clone()])
}

/// Slides of `data` on the requested side of a split manifest.
fn select(slides: Vec<Slide>, split: &Path, side: Side) -> Result<Vec<Slide>> {
    let assignments = read_split_manifest(split)?;
    if side == Side::All {
        return Ok(slides);
    }
    let keep: BTreeSet<String> = assignments
        .into_iter()
        .filter(|a| a.train == (side == Side::Train))
        .map(|a| a.slide_id)
        .collect();
    let out: Vec<Slide> = slides.into_iter().filter(|s| keep.contains(&s.slide_id)).collect();
    if out.len() != keep.len() {
        return Err(Error::Data {
            path: split.to_path_buf(),
            message: "split manifest names slides missing from the dataset".into(),
        });
    }
    Ok(out)
}

fn train(a: TrainSourceArgs, args: Vec<String>) -> Result<()> {
    let mut rec = Recorder::new("train-source", args);
    rec.input(&a.data);
    let cfg: TrainConfig = match &a.config {
        Some(p) => {
            rec.input(p);
            load_config(p)?
        }
        None => TrainConfig::default(),
    };
    rec.manifest.config = Some(render_config(&cfg));
    rec.manifest.seed = Some(cfg.seed);
    let slides = read_dataset(&a.data)?;
    let split = match &a.split {
        Some(p) => {
            rec.input(p);
            let train = select(slides.clone(), p, Side::Train)?;
            let test = select(slides, p, Side::Test)?;
            histo_adapt::ingest::DatasetSplit { train, test, ratio: cfg.split_ratio, seed: cfg.seed }
        }
        None => split_patient_disjoint(slides, cfg.split_ratio, cfg.seed)?,
    };
    let run = train_source(&split, &cfg)?;
    run.checkpoint.save(&a.out)?;
    let log_path = sibling(&a.out, ".log");
    write_log(&log_path, &run.log)?;
    let split_path = sibling(&a.out, ".split.txt");
    write_split_manifest(&split_path, &split.assignments())?;
    rec.finish(&a.out, &[a.out.clone(), log_path, split_path])
}

fn adapt(a: AdaptArgs, args: Vec<String>) -> Result<()> {
    let mut rec = Recorder::new("adapt", args);
    for p in [&a.source_ckpt, &a.source_data, &a.target_data] {
        rec.input(p);
    }
    let ckpt = Checkpoint::load(&a.source_ckpt)?;
    let cfg: TrainConfig = match &a.config {
        Some(p) => {
            rec.input(p);
            load_config(p)?
        }
        None => ckpt.config.clone(),
    };
    rec.manifest.config = Some(render_config(&cfg));
    rec.manifest.seed = Some(cfg.seed);
    let source_all = read_dataset(&a.source_data)?;
    let source_train = match &a.source_split {
        Some(p) => select(source_all, p, Side::Train)?,
        None => split_patient_disjoint(source_all, ckpt.config.split_ratio, ckpt.config.seed)?.train,
    };
    let target_all = read_dataset(&a.target_data)?;
    let target = match &a.target_split {
        Some(p) => select(target_all, p, Side::Train)?,
        None => target_all,
    };
    let target: Vec<Slide> = target.iter().map(Slide::unlabeled).collect();
    let mode = match a.mode {
        ModeArg::Adv => AdaptMode::AdvOnly,
        ModeArg::AdvSiamese => AdaptMode::AdvPlusSiamese,
    };
    let (out, log) = adapt_target(&ckpt, &source_train, &target, &cfg, mode)?;
    out.save(&a.out)?;
    let log_path = sibling(&a.out, ".log");
    write_log(&log_path, &log)?;
    rec.finish(&a.out, &[a.out.clone(), log_path])
}

fn mapper_choice(m: MapperArg) -> MapperChoice {
    match m {
        MapperArg::Source => MapperChoice::Source,
        MapperArg::Target => MapperChoice::Target,
    }
}

fn eval_cmd(a: EvaluateArgs, args: Vec<String>) -> Result<()> {
    let mut rec = Recorder::new("evaluate", args);
    rec.input(&a.ckpt);
    rec.input(&a.data);
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let mut slides = read_dataset(&a.data)?;
    if let Some(p) = &a.split {
        rec.input(p);
        slides = select(slides, p, a.side)?;
    }
    let report = evaluate(&ckpt.bundle, mapper_choice(a.mapper), &slides, &ckpt.config.input)?;
    write_text(&a.report, &report.to_text())?;
    rec.finish(&a.report, &[a.report.clone()])
}

fn compare_cmd(a: CompareArgs, args: Vec<String>) -> Result<()> {
    let mut rec = Recorder::new("compare", args);
    rec.input(&a.a);
    rec.input(&a.b);
    let ra = EvalReport::parse(&read_text(&a.a)?)?;
    let rb = EvalReport::parse(&read_text(&a.b)?)?;
    let c = compare(&ra, &rb)?;
    write_text(&a.out, &c.to_text())?;
    rec.finish(&a.out, &[a.out.clone()])
}

fn heatmap(a: HeatmapArgs, args: Vec<String>) -> Result<()> {
    let mut rec = Recorder::new("heatmap", args);
    rec.input(&a.ckpt);
    rec.input(&a.slide);
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let dir_name = a
        .slide
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Data { path: a.slide.clone(), message: "not a slide directory".into() })?;
    let (patient_id, slide_id) = dir_name.split_once("__").unwrap_or(("unknown", dir_name.as_str()));
    let patches = read_slide_dir(&a.slide, slide_id)?;
    let slide = Slide {
        slide_id: slide_id.to_string(),
        patient_id: patient_id.to_string(),
        gleason_score: None,
        grade: None,
        patches,
    };
    let which = match a.mapper {
        Some(m) => mapper_choice(m),
        None if ckpt.bundle.target.is_some() => MapperChoice::Target,
        None => MapperChoice::Source,
    };
    let pred = predict_slides(&ckpt.bundle, which, std::slice::from_ref(&slide), &ckpt.config.input)?.remove(0);
    let thumb = slide_thumbnail(&slide, a.cell_px)?;
    let hm = render_heatmap(&pred, &thumb, a.sigma)?;
    hm.rendered
        .save(&a.out)
        .map_err(|source| Error::Image { path: a.out.clone(), source })?;
    rec.finish(&a.out, &[a.out.clone()])
}

/// Mean of one loss over the final `n` log records.
fn tail_mean(log: &[LossReport], n: usize, pick: fn(&LossReport) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = log.iter().rev().take(n).filter_map(pick).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

fn report(a: ReportArgs, args: Vec<String>) -> Result<()> {
    const TAIL: usize = 50;
    let mut rec = Recorder::new("report", args);
    let mut table = ResultsTable::default();
    let rows = [
        ("Baseline", &a.baseline, None),
        ("adv-only", &a.adv, a.adv_log.as_ref()),
        ("adv+siamese", &a.adv_siamese, a.adv_siamese_log.as_ref()),
    ];
    for (name, path, log) in rows {
        rec.input(path);
        let r = EvalReport::parse(&read_text(path)?)?;
        let log = match log {
            Some(p) => {
                rec.input(p);
                read_log(p)?
            }
            None => Vec::new(),
        };
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let extra = vec![
            ("Patch accuracy (%)".to_string(), format!("{:.1}", 100.0 * r.patch_accuracy)),
            ("L_a (last 50)".to_string(), cell(tail_mean(&log, TAIL, |l| l.l_a))),
            ("L_s (last 50)".to_string(), cell(tail_mean(&log, TAIL, |l| l.l_s))),
        ];
        table.push(name, r.slide_accuracy, extra);
    }
    let mut text = table.to_markdown();
    text.push_str(&format!("\nslide accuracies (full precision): {}\n", {
        table.rows.iter().map(|(m, acc, _)| format!("{m}={}", fmt_f64(*acc))).collect::<Vec<_>>().join(" ")
    }));
    write_text(&a.out, &text)?;
    rec.finish(&a.out, &[a.out.clone()])
}

//! `fairkit` command line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use fairkit::curation::sparql::{FEMALE_QID, MALE_QID};
use fairkit::curation::{self, Detection, FilterThresholds, FilterVerdict, StubDetector};
use fairkit::embedset::{load_concepts, load_embeddings, prefixed_paths, save_concepts, save_embeddings};
use fairkit::pipeline::{cmd_audit, cmd_debias, cmd_split, debias_with_transform, DebiasConfig};
use fairkit::prompts::PromptSet;
use fairkit::report::{self, FairnessReport};
use fairkit::synth::{generate, SynthSpec};
use fairkit::{
    fit_inlp, normalize_rows, CompensationMode, ConceptVector, DebiasTransform, EmbeddingSet, InlpConfig, Strategy,
};

#[derive(Parser)]
#[command(name = "fairkit", version, about = "Audit and remove group bias in image-text embedding spaces")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a labelled set into equal train/eval halves per (group, gender) cell.
    Split(SplitArgs),
    /// Fit the INLP projection chain and write it as JSON.
    Fit(FitArgs),
    /// Fit (or load) a transform, debias the eval set and report before/after.
    Debias(DebiasArgs),
    /// Report similarity dispersion, top-k histograms and JSD for a set.
    Audit(AuditArgs),
    /// Re-render saved report JSON.
    Report(ReportArgs),
    /// Generate a synthetic set with planted bias.
    Synth(SynthArgs),
    /// Run the image quality filter chain and write a manifest.
    Filter(FilterArgs),
    /// Print the Wikidata query for a state and gender.
    Sparql(SparqlArgs),
}

#[derive(Args)]
struct Input {
    /// EMB1 embedding file.
    #[arg(long)]
    embeddings: PathBuf,
    /// Labels CSV; defaults to the embeddings path with `.labels.csv`.
    #[arg(long)]
    labels: Option<PathBuf>,
}

impl Input {
    fn load(&self) -> Result<EmbeddingSet> {
        let labels = self.labels.clone().unwrap_or_else(|| self.embeddings.with_extension("labels.csv"));
        load_embeddings(&self.embeddings, &labels).with_context(|| format!("loading {}", self.embeddings.display()))
    }
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    input: Input,
    /// Output prefix; writes `<out>.train.*` and `<out>.eval.*`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct InlpArgs {
    #[arg(long, value_enum, default_value_t = StrategyArg::OneVsRestMax)]
    strategy: StrategyArg,
    /// Class-1 group for the binary strategy.
    #[arg(long)]
    positive_group: Option<String>,
    #[arg(long, default_value_t = 20)]
    max_iterations: usize,
    #[arg(long, default_value_t = 0.02)]
    stop_tolerance: f64,
}

impl InlpArgs {
    fn config(&self, seed: u64) -> InlpConfig {
        let mut cfg = InlpConfig {
            strategy: self.strategy.into(),
            positive_group: self.positive_group.clone(),
            max_iterations: self.max_iterations,
            stop_tolerance: self.stop_tolerance,
            ..Default::default()
        };
        cfg.classifier.seed = seed;
        cfg
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum StrategyArg {
    Binary,
    OneVsRestMax,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Binary => Strategy::Binary,
            StrategyArg::OneVsRestMax => Strategy::OneVsRestMax,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    inlp: InlpArgs,
    /// Transform JSON output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PromptArgs {
    /// Concepts JSON: prompt text -> embedding.
    #[arg(long)]
    concepts: PathBuf,
    /// Restrict to a built-in prompt set.
    #[arg(long, value_enum)]
    prompt_set: Option<PromptSetArg>,
    /// Restrict to these prompts (repeatable).
    #[arg(long)]
    prompt: Vec<String>,
}

impl PromptArgs {
    /// Selected concepts in request order, falling back to file order.
    fn load(&self) -> Result<Vec<ConceptVector>> {
        let all = load_concepts(&self.concepts).with_context(|| format!("loading {}", self.concepts.display()))?;
        let mut wanted: Vec<String> = self.prompt.clone();
        if let Some(set) = self.prompt_set {
            wanted.extend(PromptSet::from(set).prompts().iter().map(|s| s.to_string()));
        }
        if wanted.is_empty() {
            return Ok(all);
        }
        let by_text: BTreeMap<&str, &ConceptVector> = all.iter().map(|c| (c.text.as_str(), c)).collect();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for w in &wanted {
            let c = by_text
                .get(w.as_str())
                .ok_or_else(|| fairkit::Error::UnknownConcept(w.clone()))?;
            if seen.insert(w.clone()) {
                out.push((*c).clone());
            }
        }
        // Keep the zero-shot pair available for per-group accuracies.
        for extra in [fairkit::prompts::ZERO_SHOT_POSITIVE, fairkit::prompts::ZERO_SHOT_NEGATIVE] {
            if let Some(c) = by_text.get(extra) {
                if seen.insert(extra.to_string()) {
                    out.push((*c).clone());
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PromptSetArg {
    Neutral,
    Male,
    Female,
}

impl From<PromptSetArg> for PromptSet {
    fn from(p: PromptSetArg) -> Self {
        match p {
            PromptSetArg::Neutral => PromptSet::Neutral,
            PromptSetArg::Male => PromptSet::Male,
            PromptSetArg::Female => PromptSet::Female,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "kebab-case")]
enum Table {
    Summary,
    TopK,
    ZeroShot,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// CSV layout.
    #[arg(long, value_enum, default_value_t = Table::Summary)]
    table: Table,
    #[arg(long, default_value = "unknown")]
    model_tag: String,
}

#[derive(Args)]
struct DebiasArgs {
    /// Training set the transform is fitted on.
    #[command(flatten)]
    input: Input,
    /// Set to debias and report on; defaults to the training set.
    #[arg(long)]
    eval_embeddings: Option<PathBuf>,
    #[arg(long)]
    eval_labels: Option<PathBuf>,
    /// Use a saved transform instead of fitting.
    #[arg(long)]
    transform: Option<PathBuf>,
    #[command(flatten)]
    prompts: PromptArgs,
    #[command(flatten)]
    inlp: InlpArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = fairkit::metrics::DEFAULT_TOP_K)]
    k: usize,
    #[arg(long, value_enum, default_value_t = CompensationArg::Aggregate)]
    compensation: CompensationArg,
    /// Output prefix: `<out>.emb1`, `<out>.labels.csv`, `<out>.transform.json`
    /// and `<out>.report.{json,csv}`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "kebab-case")]
enum CompensationArg {
    PerRow,
    Aggregate,
    None,
}

impl From<CompensationArg> for CompensationMode {
    fn from(c: CompensationArg) -> Self {
        match c {
            CompensationArg::PerRow => CompensationMode::PerRow,
            CompensationArg::Aggregate => CompensationMode::Aggregate,
            CompensationArg::None => CompensationMode::None,
        }
    }
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    prompts: PromptArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, default_value_t = fairkit::metrics::DEFAULT_TOP_K)]
    k: usize,
    /// Report file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON written by `audit` or `debias`.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output prefix: `<out>.emb1`, `<out>.labels.csv`, `<out>.concepts.json`,
    /// `<out>.truth.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of planted bias axes (1 or 2).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    axes: u8,
    /// Zero every planted offset.
    #[arg(long)]
    unbiased: bool,
}

#[derive(Args)]
struct FilterArgs {
    /// Image files or directories (searched one level deep).
    #[arg(required = true)]
    images: Vec<PathBuf>,
    /// JSON object: image path -> [{"bbox": {x, y, w, h}, "confidence": c}].
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Manifest CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write padded, resized crops of passing images here.
    #[arg(long)]
    crops: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    color_delta_min: f64,
    #[arg(long, default_value_t = 100.0)]
    laplacian_var_min: f64,
    #[arg(long, default_value_t = 0.15)]
    skin_ratio_min: f64,
    #[arg(long, default_value_t = 0.5)]
    face_confidence_min: f64,
    #[arg(long, default_value_t = 0.20)]
    pad_fraction: f64,
    #[arg(long, default_value_t = 512)]
    out_size: u32,
}

#[derive(Args)]
struct SparqlArgs {
    /// State Q-id, e.g. Q1498.
    #[arg(long)]
    state: String,
    /// `male`, `female` or a Q-id.
    #[arg(long)]
    gender: String,
    /// Run the query and print the hits as JSON.
    #[cfg(feature = "wdqs")]
    #[arg(long)]
    fetch: bool,
    #[cfg(feature = "wdqs")]
    #[arg(long, default_value = curation::sparql::DEFAULT_ENDPOINT)]
    endpoint: String,
}

fn write_out(path: Option<&Path>, body: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, body).map_err(|e| fairkit::Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?,
        None => io::stdout().write_all(body)?,
    }
    Ok(())
}

fn render(reports: &[FairnessReport], o: &OutputArgs) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match (o.format, o.table) {
        (Format::Json, _) => buf.extend(report::reports_to_json(reports)?.into_bytes()),
        (Format::Csv, Table::Summary) => {
            let rows: Vec<_> = reports.iter().map(FairnessReport::table3_row).collect();
            report::write_table3_csv(&mut buf, &rows)?
        }
        (Format::Csv, Table::TopK) => report::write_top_k_csv(&mut buf, reports)?,
        (Format::Csv, Table::ZeroShot) => match reports.first() {
            Some(r) => report::write_zero_shot_csv(&mut buf, r)?,
            None => bail!("no reports to render"),
        },
    }
    Ok(buf)
}

fn with_model_tag(mut reports: Vec<FairnessReport>, tag: &str) -> Vec<FairnessReport> {
    if tag != "unknown" {
        reports.iter_mut().for_each(|r| r.model_tag = tag.to_string());
    }
    reports
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn save_prefixed(set: &EmbeddingSet, prefix: &Path) -> Result<()> {
    let (emb, labels) = prefixed_paths(prefix);
    save_embeddings(set, &emb, &labels)?;
    log::info!("wrote {} and {}", emb.display(), labels.display());
    Ok(())
}

fn run_split(a: &SplitArgs) -> Result<()> {
    let set = a.input.load()?;
    let (train, eval) = cmd_split(&set, a.seed)?;
    save_prefixed(&train, &suffixed(&a.out, ".train"))?;
    save_prefixed(&eval, &suffixed(&a.out, ".eval"))?;
    Ok(())
}

fn run_fit(a: &FitArgs) -> Result<()> {
    let set = normalize_rows(&a.input.load()?)?;
    let t = fit_inlp(&set, &a.inlp.config(a.seed))?;
    if !t.converged {
        log::warn!("transform did not converge within {} iterations", a.inlp.max_iterations);
    }
    t.save(&a.out)?;
    Ok(())
}

fn run_debias(a: &DebiasArgs) -> Result<()> {
    let train = a.input.load()?;
    let eval = match &a.eval_embeddings {
        Some(e) => Input {
            embeddings: e.clone(),
            labels: a.eval_labels.clone(),
        }
        .load()?,
        None => train.clone(),
    };
    let concepts = a.prompts.load()?;
    let cfg = DebiasConfig {
        model_tag: a.output.model_tag.clone(),
        inlp: a.inlp.config(a.seed),
        alpha: a.alpha,
        compensation: a.compensation.into(),
        k: a.k,
    };
    let out = match &a.transform {
        Some(p) => debias_with_transform(DebiasTransform::load(p)?, &eval, &concepts, &cfg)?,
        None => cmd_debias(&train, &eval, &concepts, &cfg)?,
    };
    save_prefixed(&out.debiased, &a.out)?;
    out.transform.save(suffixed(&a.out, ".transform.json"))?;
    let ext = if a.output.format == Format::Json { ".report.json" } else { ".report.csv" };
    write_out(Some(&suffixed(&a.out, ext)), &render(&out.reports, &a.output)?)?;
    for r in &out.reports {
        for w in &r.warnings {
            log::warn!("{}: {w}", r.prompt);
        }
    }
    Ok(())
}

fn run_audit(a: &AuditArgs) -> Result<()> {
    let set = a.input.load()?;
    let concepts = a.prompts.load()?;
    let reports = cmd_audit(&a.output.model_tag, &set, &concepts, a.k)?;
    write_out(a.out.as_deref(), &render(&reports, &a.output)?)
}

fn run_report(a: &ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input).map_err(|e| fairkit::Error::Io {
        path: a.input.clone(),
        source: e,
    })?;
    let reports = with_model_tag(report::reports_from_json(&text)?, &a.output.model_tag);
    write_out(a.out.as_deref(), &render(&reports, &a.output)?)
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match a.axes {
        1 => SynthSpec::single_axis(a.seed),
        _ => SynthSpec::desk_default(a.seed),
    };
    if a.unbiased {
        spec = spec.unbiased();
    }
    let data = generate(&spec)?;
    save_prefixed(&data.set, &a.out)?;
    save_concepts(&spec.concepts()?, suffixed(&a.out, ".concepts.json"))?;
    write_out(Some(&suffixed(&a.out, ".truth.json")), data.ground_truth_json()?.as_bytes())
}

#[derive(Deserialize)]
struct DetectionsFile(BTreeMap<String, Vec<Detection>>);

fn collect_images(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| fairkit::Error::Io {
                    path: p.clone(),
                    source: e,
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| {
                    e.extension()
                        .and_then(|x| x.to_str())
                        .is_some_and(|x| matches!(x.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
                })
                .collect();
            entries.sort();
            out.extend(entries);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn run_filter(a: &FilterArgs) -> Result<()> {
    let th = FilterThresholds {
        color_delta_min: a.color_delta_min,
        laplacian_var_min: a.laplacian_var_min,
        skin_ratio_min: a.skin_ratio_min,
        face_confidence_min: a.face_confidence_min,
        pad_fraction: a.pad_fraction,
        out_size: a.out_size,
    };
    th.validate()?;
    let detections = match &a.detections {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| fairkit::Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str::<DetectionsFile>(&text)
                .map_err(fairkit::Error::from)?
                .0
        }
        None => BTreeMap::new(),
    };
    if let Some(dir) = &a.crops {
        fs::create_dir_all(dir).map_err(|e| fairkit::Error::Io {
            path: dir.clone(),
            source: e,
        })?;
    }
    let images = collect_images(&a.images)?;
    let rows: Vec<(String, FilterVerdict)> = images
        .par_iter()
        .map(|path| {
            let key = path.to_string_lossy().into_owned();
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let found = detections.get(&key).or_else(|| detections.get(&name)).cloned().unwrap_or_default();
            let (img, v) = curation::filter_file(path, &StubDetector::new(found), &th)?;
            if let (Some(dir), Some(face)) = (&a.crops, v.face_box) {
                let crop = curation::crop_face(&img, face, &th)?;
                let out = dir.join(Path::new(&name).with_extension("png"));
                crop.save(&out).map_err(fairkit::Error::from)?;
            }
            Ok((key, v))
        })
        .collect::<fairkit::Result<_>>()?;
    let mut buf = Vec::new();
    curation::write_manifest(&mut buf, &rows)?;
    write_out(a.out.as_deref(), &buf)
}

fn run_sparql(a: &SparqlArgs) -> Result<()> {
    let gender = match a.gender.as_str() {
        "male" => MALE_QID.to_string(),
        "female" => FEMALE_QID.to_string(),
        q => q.to_string(),
    };
    let req = curation::SparqlRequest::new(&a.state, gender)?;
    #[cfg(feature = "wdqs")]
    if a.fetch {
        let hits = curation::sparql::fetch(&a.endpoint, &req, concat!("fairkit/", env!("CARGO_PKG_VERSION")))?;
        return write_out(None, report::to_canonical_json(&hits)?.as_bytes());
    }
    write_out(None, curation::build_sparql(&req)?.as_bytes())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("FAIRKIT_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| fairkit::Error::InvalidConfig(format!("FAIRKIT_THREADS={v:?} is not a number")))?;
        if n > 0 {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Split(a) => run_split(a),
        Command::Fit(a) => run_fit(a),
        Command::Debias(a) => run_debias(a),
        Command::Audit(a) => run_audit(a),
        Command::Report(a) => run_report(a),
        Command::Synth(a) => run_synth(a),
        Command::Filter(a) => run_filter(a),
        Command::Sparql(a) => run_sparql(a),
    }
}

/// 3 for I/O failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<fairkit::Error>() {
            return if e.is_io() { 3 } else { 2 };
        }
        if cause.is::<io::Error>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

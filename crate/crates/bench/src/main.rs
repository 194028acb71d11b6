use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mdbench_core::runner::{
    aggregate, load_candidates, load_tests, render_report, run_suite, Aggregation, DocStatus, ReportFormat,
};
use mdbench_core::sampler::{rank_pages, PagePair};
use mdbench_core::NormalizationProfile;
use mdbench_gateway::{
    convert_corpus, dpi_sweep, pages_for_tests, write_sweep_csv, ConvertConfig, Rasterizer, ReasoningEffort,
    DEFAULT_RASTER_COMMAND,
};
use mdbench_review::{AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "bench", version, about = "PDF-to-Markdown benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score candidate outputs against a test suite.
    Run(RunArgs),
    /// Shortlist the pages on which two converters disagree most.
    Sample(SampleArgs),
    /// Convert PDF pages with a vision model behind a chat-completions endpoint.
    Convert(ConvertArgs),
    /// Serve the review API.
    ReviewServe(ServeArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    tests: PathBuf,
    /// Directory holding one subdirectory of outputs per model.
    #[arg(long)]
    candidates: PathBuf,
    /// Comma-separated model ids; defaults to every subdirectory.
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    #[arg(long, default_value = "macro")]
    agg: Aggregation,
    /// Report path; the extension picks csv, json or md.
    #[arg(long)]
    out: PathBuf,
    /// Also write every test result as JSONL.
    #[arg(long)]
    results: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    markup_cleanup: bool,
    #[arg(long)]
    unicode_harmonize: bool,
    #[arg(long)]
    ascii_projection: bool,
    #[arg(long)]
    alnum_filter: bool,
    #[arg(long)]
    drop_intraline_spaces: bool,
    #[arg(long)]
    drop_linebreaks: bool,
    /// Every normalization stage.
    #[arg(long)]
    all_stages: bool,
}

impl ProfileArgs {
    fn profile(&self) -> NormalizationProfile {
        if self.all_stages {
            return NormalizationProfile::all_stages();
        }
        NormalizationProfile {
            markup_cleanup: self.markup_cleanup,
            unicode_harmonize: self.unicode_harmonize,
            ascii_projection: self.ascii_projection,
            alnum_filter: self.alnum_filter,
            drop_intraline_spaces: self.drop_intraline_spaces,
            drop_linebreaks: self.drop_linebreaks,
            masks: Vec::new(),
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    /// Output directory of the first converter.
    #[arg(long)]
    a: PathBuf,
    /// Output directory of the second converter.
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    #[command(flatten)]
    profile: ProfileArgs,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    pdf_dir: PathBuf,
    #[arg(long)]
    tests: PathBuf,
    /// Model name sent to the endpoint.
    #[arg(long)]
    model: String,
    /// Output directory name; defaults to the model name made path-safe.
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long)]
    endpoint: String,
    /// One resolution, or several for a sweep.
    #[arg(long, value_delimiter = ',', default_value = "200")]
    dpi: Vec<u32>,
    #[arg(long, default_value_t = 32)]
    workers: usize,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 500.0)]
    timeout: f64,
    #[arg(long)]
    out: PathBuf,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    /// Rasterizer command template.
    #[arg(long, default_value = DEFAULT_RASTER_COMMAND)]
    rasterizer: String,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    max_retries: u32,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    reasoning_effort: Option<ReasoningEffort>,
    /// File holding a replacement prompt.
    #[arg(long)]
    prompt_file: Option<PathBuf>,
    /// Where to write the sweep summary; defaults to `<out>/dpi_sweep.csv`.
    #[arg(long)]
    sweep_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    tests: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    pdf_dir: Option<PathBuf>,
    #[arg(long)]
    rasterizer: Option<String>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(4, |n| n.get())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Sample(args) => sample(args),
        Command::Convert(args) => runtime()?.block_on(convert(args)),
        Command::ReviewServe(args) => runtime()?.block_on(review_serve(args)),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().context("starting the async runtime")
}

fn model_dirs(root: &Path) -> Result<Vec<String>> {
    let mut models = Vec::new();
    for entry in fs::read_dir(root).with_context(|| format!("reading {}", root.display()))? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            models.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    models.sort();
    Ok(models)
}

fn run(args: RunArgs) -> Result<()> {
    let format = ReportFormat::from_path(&args.out)?;
    let tests = load_tests(&args.tests)?;
    let models = if args.models.is_empty() { model_dirs(&args.candidates)? } else { args.models };
    if models.is_empty() {
        bail!("no model outputs under {}", args.candidates.display());
    }
    let mut results = Vec::new();
    let mut candidates = Vec::new();
    for model in &models {
        let docs = load_candidates(&args.candidates, model)?;
        log::info!("{model}: {} candidate pages", docs.len());
        results.extend(run_suite(&tests, &docs, model, args.workers));
        candidates.extend(docs.into_values());
    }
    let report = aggregate(&results, &candidates, args.agg);
    render_report(&report, format, &args.out)?;
    if let Some(path) = &args.results {
        let mut file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        for r in &results {
            writeln!(file, "{}", serde_json::to_string(r)?)?;
        }
    }
    for m in &report.models {
        let score = m.all_categories.map_or("n/a".to_string(), |s| format!("{s:.3}"));
        println!("{}\t{}", m.model_id, score);
    }
    Ok(())
}

fn split_dir(dir: &Path) -> Result<(PathBuf, String)> {
    let name = dir.file_name().with_context(|| format!("{} has no directory name", dir.display()))?;
    let parent = dir.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((parent, name.to_string_lossy().into_owned()))
}

fn sample(args: SampleArgs) -> Result<()> {
    let (root_a, model_a) = split_dir(&args.a)?;
    let (root_b, model_b) = split_dir(&args.b)?;
    let docs_a = load_candidates(&root_a, &model_a)?;
    let docs_b = load_candidates(&root_b, &model_b)?;
    let pairs: Vec<PagePair> = docs_a
        .values()
        .filter(|a| a.status == DocStatus::Ok)
        .filter_map(|a| {
            let b = docs_b.get(&a.doc_id).filter(|b| b.status == DocStatus::Ok)?;
            Some(PagePair { doc_id: a.doc_id.clone(), out_a: a.markdown.clone(), out_b: b.markdown.clone() })
        })
        .collect();
    log::info!("{} pages converted by both", pairs.len());
    let shortlist = rank_pages(&pairs, args.k, &args.profile.profile(), args.workers)?;
    let mut file = fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for r in &shortlist.records {
        writeln!(file, "{}", serde_json::to_string(r)?)?;
    }
    println!("wrote {} of {} pages to {}", shortlist.records.len(), shortlist.population, args.out.display());
    Ok(())
}

async fn convert(args: ConvertArgs) -> Result<()> {
    let tests = load_tests(&args.tests)?;
    let jobs = pages_for_tests(&tests, &args.pdf_dir);
    let mut config = ConvertConfig::new(args.endpoint, args.model);
    config.model_id = args.model_id;
    config.api_key_env = args.api_key_env;
    config.workers = args.workers;
    config.timeout_seconds = args.timeout;
    config.max_retries = args.max_retries;
    config.temperature = args.temperature;
    config.reasoning_effort = args.reasoning_effort;
    if let Some(path) = &args.prompt_file {
        config.prompt = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    }
    let cache = args.cache_dir.unwrap_or_else(|| args.out.join(".raster-cache"));
    let rasterizer = Arc::new(Rasterizer::new(&args.rasterizer, cache)?);

    if let [dpi] = args.dpi[..] {
        config.dpi = dpi;
        let summary = convert_corpus(&jobs, &config, rasterizer, &args.out).await?;
        println!(
            "{}: {} pages, {} skipped, {} ok, {} timeout, {} error",
            config.model_id(),
            summary.total,
            summary.skipped,
            summary.ok,
            summary.timeout,
            summary.error
        );
    } else {
        let rows = dpi_sweep(&jobs, &config, rasterizer, &args.out, &args.dpi).await?;
        let csv = args.sweep_csv.unwrap_or_else(|| args.out.join("dpi_sweep.csv"));
        write_sweep_csv(&rows, &csv)?;
        println!("sweep over {} resolutions written to {}", rows.len(), csv.display());
    }
    Ok(())
}

async fn review_serve(args: ServeArgs) -> Result<()> {
    let mut config = ServiceConfig::new(args.tests, args.candidates);
    config.pdf_dir = args.pdf_dir;
    config.raster_command = match (&config.pdf_dir, args.rasterizer) {
        (_, Some(command)) => Some(command),
        (Some(_), None) => Some(DEFAULT_RASTER_COMMAND.to_string()),
        (None, None) => None,
    };
    config.raster_cache = args.cache_dir;
    let state = AppState::open(&config)?;
    let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
        .await
        .with_context(|| format!("binding {}:{}", args.host, args.port))?;
    log::info!("review API on http://{}", listener.local_addr()?);
    mdbench_review::serve(listener, state).await?;
    Ok(())
}

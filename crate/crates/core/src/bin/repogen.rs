//! Command-line surface binding the pipeline together.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use repogen_core::config::Config;
use repogen_core::error::{Error, Result};
use repogen_core::evaluator::{self, EvalContext, EvalSample};
use repogen_core::extractor::{self, LocalKnowledgeConfig};
use repogen_core::model::{
    self, load_function_base, load_library_base, FunctionBase, LibraryBase, Requirement,
};
use repogen_core::promptgen::{self, AblationFlags};
use repogen_core::retrieval::{self, RetrievalHit};
use repogen_core::semantic::{
    build_function_base, BuildOptions, ChatProvider, EmbeddingProvider, HttpChatProvider,
    HttpEmbedder, OfflineChatProvider, OfflineEmbedder, SummaryCache, TranscriptChatProvider,
};

#[derive(Parser)]
#[command(
    name = "repogen",
    about = "Mine a Python repository into knowledge bases and generate repository-aware code"
)]
struct Cli {
    /// Configuration file (key=value lines)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Force deterministic offline providers
    #[arg(long, global = true)]
    offline: bool,

    /// Number of candidates per retrieval channel
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Comma-separated directory names to skip while walking the repository
    #[arg(long, global = true)]
    exclude: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the function and library knowledge bases for a repository
    Index(IndexArgs),
    /// Rank global functions for a requirement
    Retrieve(RetrieveArgs),
    /// Generate code for a requirement using the three knowledge blocks
    Generate(GenerateArgs),
    /// Score generated code against references
    Evaluate(EvaluateArgs),
    /// Summarize a single function (debugging passthrough)
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct IndexArgs {
    /// Repository root to mine
    #[arg(long)]
    repo: PathBuf,
    /// Output directory for the knowledge bases
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RetrieveArgs {
    /// Knowledge-base directory written by `index`
    #[arg(long)]
    kb: PathBuf,
    /// Requirement JSON file (description, definition, target_file)
    #[arg(long)]
    requirement: PathBuf,
    /// Also draft what-if code and merge the code-vector channel
    #[arg(long)]
    what_if: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// Knowledge-base directory written by `index`
    #[arg(long)]
    kb: PathBuf,
    /// Repository root (the requirement's target file is read from here)
    #[arg(long)]
    repo: PathBuf,
    /// Requirement JSON file
    #[arg(long)]
    requirement: PathBuf,
    /// Output file for the generated code; a `.trace.json` sidecar is
    /// written next to it
    #[arg(long)]
    out: PathBuf,
    /// Replace the local knowledge block with None
    #[arg(long)]
    no_local: bool,
    /// Replace the global knowledge block with None
    #[arg(long)]
    no_global: bool,
    /// Replace the library knowledge block with None
    #[arg(long)]
    no_libs: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Knowledge-base directory written by `index`
    #[arg(long)]
    kb: PathBuf,
    /// Directory of generated .py files
    #[arg(long)]
    pred: PathBuf,
    /// Directory of reference .py files with matching names
    #[arg(long)]
    refs: PathBuf,
    /// Optional label file: one `local global library` 0/1 line per sample
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Repository root holding the target file
    #[arg(long)]
    repo: Option<PathBuf>,
    /// Target file (repository-relative) whose local context applies
    #[arg(long)]
    target_file: Option<String>,
    /// Directory for report.txt and summary.txt
    #[arg(long)]
    report: PathBuf,
    /// Print undefined ratios as 0, matching the published tables
    #[arg(long)]
    paper_convention: bool,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Python file containing the function
    #[arg(long)]
    file: PathBuf,
    /// Function to summarize (FQN suffix); defaults to the only function
    #[arg(long)]
    name: Option<String>,
}

struct Providers {
    chat: Box<dyn ChatProvider>,
    embedder: Box<dyn EmbeddingProvider>,
}

fn make_providers(config: &Config) -> Result<Providers> {
    if config.offline {
        let chat: Box<dyn ChatProvider> = match &config.chat_transcript {
            Some(path) => Box::new(TranscriptChatProvider::load(path)?),
            None => Box::new(OfflineChatProvider),
        };
        Ok(Providers {
            chat,
            embedder: Box::new(OfflineEmbedder::new(config.embed_dim)),
        })
    } else {
        Ok(Providers {
            chat: Box::new(HttpChatProvider::new(config.chat.clone())?),
            embedder: Box::new(HttpEmbedder::new(config.embed.clone(), config.embed_dim)?),
        })
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => {
            let mut config = Config::default();
            config.apply_env()?;
            config
        }
    };
    if cli.offline {
        config.offline = true;
    }
    if let Some(k) = cli.k {
        config.k = k;
    }
    if let Some(exclude) = &cli.exclude {
        config.exclude = exclude
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
    }
    Ok(config)
}

fn load_kb(dir: &Path) -> Result<(FunctionBase, LibraryBase)> {
    Ok((load_function_base(dir)?, load_library_base(dir)?))
}

fn print_hits(hits: &[RetrievalHit]) {
    for hit in hits {
        println!("{}\t{:.4}\t{}", hit.fqn, hit.score, hit.channel);
    }
}

fn cmd_index(config: &Config, args: &IndexArgs) -> Result<()> {
    let providers = make_providers(config)?;
    let cache = match &config.summary_cache {
        Some(path) => SummaryCache::load(path)?,
        None => SummaryCache::new(),
    };
    let options = BuildOptions {
        exclude: config.exclude.clone(),
        in_flight: config.in_flight,
        retry: config.retry_policy(),
    };
    let output = build_function_base(
        &args.repo,
        providers.chat.as_ref(),
        providers.embedder.as_ref(),
        &cache,
        &options,
    )?;
    for skip in &output.skipped {
        eprintln!("skipped {}: {}", skip.path, skip.reason);
    }
    let libs = repogen_core::extractor::build_library_base(&args.repo, &config.exclude)?;
    model::save_function_base(&output.base, &args.out)?;
    model::save_library_base(&libs, &args.out)?;
    if let Some(path) = &config.summary_cache {
        cache.save(path)?;
    }
    println!("files parsed: {}", output.files_parsed);
    println!("functions indexed: {}", output.base.records.len());
    println!("libraries found: {}", libs.names.len());
    Ok(())
}

fn cmd_retrieve(config: &Config, args: &RetrieveArgs) -> Result<()> {
    let (base, _libs) = load_kb(&args.kb)?;
    let requirement = Requirement::load(&args.requirement)?;
    let providers = make_providers(config)?;
    let exclude = Some(requirement.target_file.as_str());

    let description_hits = retrieval::retrieve_by_summary(
        &requirement.description,
        &base,
        config.k,
        providers.embedder.as_ref(),
        exclude,
    )?;
    let hits = if args.what_if {
        let draft = retrieval::generate_what_if_code(
            &requirement,
            providers.chat.as_ref(),
            config.retry_policy(),
        )?;
        let code_hits = retrieval::retrieve_by_code(
            &draft,
            &base,
            config.k,
            providers.embedder.as_ref(),
            exclude,
        )?;
        retrieval::merge_retrievals(&description_hits, &code_hits)
    } else {
        description_hits
    };
    print_hits(&hits);
    Ok(())
}

fn local_context_for(
    repo: &Path,
    requirement: &Requirement,
    base: &FunctionBase,
    knowledge: LocalKnowledgeConfig,
) -> Result<extractor::LocalContext> {
    let target_path = repo.join(&requirement.target_file);
    if !target_path.exists() {
        return Err(Error::NotFound(target_path));
    }
    let text = std::fs::read_to_string(&target_path).map_err(|e| Error::io(&target_path, e))?;
    let file = extractor::parse_file_text(&requirement.target_file, &text)?;
    extractor::mine_local_context(&file, base, knowledge)
}

fn cmd_generate(config: &Config, args: &GenerateArgs) -> Result<()> {
    let (base, libs) = load_kb(&args.kb)?;
    let requirement = Requirement::load(&args.requirement)?;
    let providers = make_providers(config)?;
    let retry = config.retry_policy();

    let local_ctx = local_context_for(&args.repo, &requirement, &base, config.local_knowledge)?;
    let local_block = promptgen::render_local_block(&local_ctx);

    let exclude = Some(requirement.target_file.as_str());
    let description_hits = retrieval::retrieve_by_summary(
        &requirement.description,
        &base,
        config.k,
        providers.embedder.as_ref(),
        exclude,
    )?;
    let draft = retrieval::generate_what_if_code(&requirement, providers.chat.as_ref(), retry)?;
    let code_hits = retrieval::retrieve_by_code(
        &draft,
        &base,
        config.k,
        providers.embedder.as_ref(),
        exclude,
    )?;
    let merged = retrieval::merge_retrievals(&description_hits, &code_hits);
    let global_block = retrieval::unify_global_knowledge(&merged, &base)?;
    let lib_block = promptgen::render_library_block(&libs);

    let flags = AblationFlags {
        no_local: args.no_local,
        no_global: args.no_global,
        no_libs: args.no_libs,
    };
    let bundle = promptgen::assemble_a3_prompt(
        &requirement,
        &local_block,
        &global_block.rendered_text,
        &lib_block,
        flags,
        config.max_prompt_chars,
    )?;
    let result = promptgen::generate_code(&bundle, providers.chat.as_ref(), retry)?;

    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut code = result.code.clone();
    if !code.ends_with('\n') {
        code.push('\n');
    }
    std::fs::write(&args.out, &code).map_err(|e| Error::io(&args.out, e))?;

    let trace_path = args.out.with_extension("trace.json");
    let trace_json = serde_json::to_string_pretty(&result.trace).expect("trace serializes");
    std::fs::write(&trace_path, trace_json + "\n").map_err(|e| Error::io(&trace_path, e))?;

    println!("wrote {}", args.out.display());
    println!("trace {}", trace_path.display());
    Ok(())
}

fn read_sorted_py_files(dir: &Path) -> Result<Vec<(String, String)>> {
    if !dir.exists() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.path().extension().is_some_and(|ext| ext == "py"))
        .map(|entry| entry.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let path = dir.join(&name);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        out.push((name, text));
    }
    Ok(out)
}

fn cmd_evaluate(config: &Config, args: &EvaluateArgs) -> Result<()> {
    let (base, libs) = load_kb(&args.kb)?;

    let local_ctx = match (&args.repo, &args.target_file) {
        (Some(repo), Some(target)) => {
            let req = Requirement {
                description: "evaluation context".into(),
                definition: "def _evaluation_context():".into(),
                target_file: target.clone(),
            };
            local_context_for(repo, &req, &base, config.local_knowledge)?
        }
        _ => extractor::LocalContext::empty(args.target_file.as_deref().unwrap_or("")),
    };

    let predictions = read_sorted_py_files(&args.pred)?;
    let references = read_sorted_py_files(&args.refs)?;
    if predictions.len() != references.len() {
        return Err(Error::Contract(format!(
            "prediction count {} does not match reference count {}",
            predictions.len(),
            references.len()
        )));
    }

    let labels = match &args.labels {
        Some(path) => {
            if !path.exists() {
                return Err(Error::NotFound(path.clone()));
            }
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let labels = evaluator::parse_label_lines(&text)?;
            if labels.len() != predictions.len() {
                return Err(Error::Contract(format!(
                    "label count {} does not match sample count {}",
                    labels.len(),
                    predictions.len()
                )));
            }
            Some(labels)
        }
        None => None,
    };

    let samples: Vec<EvalSample> = predictions
        .into_iter()
        .zip(references)
        .enumerate()
        .map(|(idx, ((_, generated), (_, reference)))| EvalSample {
            generated,
            reference,
            labels: labels.as_ref().map(|l| l[idx]),
        })
        .collect();

    let ctx = EvalContext {
        local_ctx: &local_ctx,
        base: &base,
        libs: &libs,
    };
    let report =
        evaluator::evaluate_batch(&samples, &ctx, repogen_core::codebleu::DEFAULT_WEIGHTS)?;

    std::fs::create_dir_all(&args.report).map_err(|e| Error::io(&args.report, e))?;
    let summary = evaluator::render_summary(&report, args.paper_convention);
    let summary_path = args.report.join("summary.txt");
    std::fs::write(&summary_path, &summary).map_err(|e| Error::io(&summary_path, e))?;

    let mut text = String::new();
    text.push_str(&format!("samples: {}\n", report.n_samples));
    text.push_str(&format!("avg_loc: {:.3}\n", report.avg_loc));
    text.push_str(&format!(
        "library_coverage: {}\n",
        evaluator::render_ratio(report.library_coverage, args.paper_convention)
    ));
    text.push_str(&format!(
        "codebleu: {:.4} (ngram {:.4}, weighted {:.4}, syntax {:.4}, dataflow {:.4})\n",
        report.codebleu.score,
        report.codebleu.ngram,
        report.codebleu.weighted_ngram,
        report.codebleu.syntax,
        report.codebleu.dataflow
    ));
    if !report.unparsed_samples.is_empty() {
        text.push_str(&format!(
            "unparsed samples: {:?}\n",
            report.unparsed_samples
        ));
    }
    text.push_str("predictions (local global library):\n");
    for (idx, vector) in report.predictions.iter().enumerate() {
        text.push_str(&format!(
            "  {idx}: {} {} {}\n",
            vector.local as u8, vector.global as u8, vector.library as u8
        ));
    }
    if let Some(reuse) = &report.reuse {
        for (name, metrics) in [
            ("local", &reuse.local),
            ("global", &reuse.global),
            ("library", &reuse.library),
        ] {
            text.push_str(&format!(
                "{name}: tp={} fp={} tn={} fn={} precision={} recall={} f1={} accuracy={}\n",
                metrics.counts.tp,
                metrics.counts.fp,
                metrics.counts.tn,
                metrics.counts.fn_,
                evaluator::render_ratio(metrics.precision, args.paper_convention),
                evaluator::render_ratio(metrics.recall, args.paper_convention),
                evaluator::render_ratio(metrics.f1, args.paper_convention),
                evaluator::render_ratio(metrics.accuracy, args.paper_convention),
            ));
        }
    }
    let report_path = args.report.join("report.txt");
    std::fs::write(&report_path, &text).map_err(|e| Error::io(&report_path, e))?;

    print!("{summary}");
    Ok(())
}

fn cmd_summarize(config: &Config, args: &SummarizeArgs) -> Result<()> {
    if !args.file.exists() {
        return Err(Error::NotFound(args.file.clone()));
    }
    let text = std::fs::read_to_string(&args.file).map_err(|e| Error::io(&args.file, e))?;
    let rel = args
        .file
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input.py".to_string());
    let file = extractor::parse_file_text(&rel, &text)?;
    let functions = extractor::extract_functions(&file);
    let target = match &args.name {
        Some(name) => functions
            .into_iter()
            .find(|f| f.fqn.ends_with(name))
            .ok_or_else(|| Error::Contract(format!("no function named {name:?} in file")))?,
        None => {
            let mut functions = functions;
            if functions.len() != 1 {
                return Err(Error::Contract(format!(
                    "file has {} functions; pass --name to pick one",
                    functions.len()
                )));
            }
            functions.remove(0)
        }
    };
    let providers = make_providers(config)?;
    let cache = SummaryCache::new();
    let summary = repogen_core::semantic::summarize_function(
        &target,
        providers.chat.as_ref(),
        &cache,
        config.retry_policy(),
    )?;
    println!("{}\t{}", target.fqn, summary);
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Index(args) => cmd_index(&config, args),
        Command::Retrieve(args) => cmd_retrieve(&config, args),
        Command::Generate(args) => cmd_generate(&config, args),
        Command::Evaluate(args) => cmd_evaluate(&config, args),
        Command::Summarize(args) => cmd_summarize(&config, args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::FAILURE
        }
    }
}

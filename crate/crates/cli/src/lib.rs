//! `jarvis` command-line front end.

pub mod eval;

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use jarvis_core::agents::{refine, transcript_jsonl, RunConfig, Toolbox};
use jarvis_core::api_graph::{load_graph, render_path, shortest_path, ApiGraph, ApiMember};
use jarvis_core::checker::{process_sim, render_feedback, simulate};
use jarvis_core::llm::{read_replay, Clock, EndpointConfig, HttpLlm, LlmClient, ScriptedLlm, StepClock, SystemClock};
use jarvis_core::retrieval::{api_doc_corpus, Document, FeatureHashEmbedder, HybridIndex, SearchMode};
use jarvis_core::rules::{extract_rules_offline, load_rules, rules_to_json, RuleStore};
use jarvis_core::script_lang::{ast_dump, parse};
use jarvis_core::sdg::{generate_dataset, GenConfig};
use serde::Deserialize;

use crate::eval::{parse_bench, run_eval, Pipeline};

const LLM_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Parser)]
#[command(name = "jarvis", version, about = "Check, generate and refine EDA tool scripts against an API graph")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inspect an API graph manifest or find a path to a member
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Simulate a script against an API graph and report hallucinated APIs
    Check(CheckArgs),
    /// Generate a synthetic, checker-clean script dataset (JSON Lines)
    Sdg(SdgArgs),
    /// Extract rules from question/answer pairs
    #[command(subcommand)]
    Rules(RulesCmd),
    /// Build or query a hybrid lexical/dense retrieval index
    #[command(subcommand)]
    Index(IndexCmd),
    /// Answer one question with the full refinement pipeline
    Ask(AskArgs),
    /// Run a pass@1 evaluation over a benchmark file
    Eval(EvalArgs),
}

#[derive(Debug, Subcommand)]
enum GraphCmd {
    /// List object types, members, globals and context variables
    Inspect { manifest: PathBuf },
    /// Shortest member path from an object type to a member name
    Path { manifest: PathBuf, object: String, member: String },
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// API graph manifest (JSON)
    #[arg(required_unless_present = "dump_ast")]
    manifest: Option<PathBuf>,
    /// Script to check
    #[arg(required_unless_present = "dump_ast")]
    script: Option<PathBuf>,
    /// Emit diagnostics and repair hints as JSON
    #[arg(long)]
    json: bool,
    /// Print the parsed syntax tree of FILE instead of checking
    #[arg(long, value_name = "FILE", conflicts_with_all = ["manifest", "script", "json"])]
    dump_ast: Option<PathBuf>,
    /// Valid attributes suggested per diagnostic
    #[arg(long, default_value_t = 3)]
    attr_limit: usize,
}

#[derive(Debug, Args)]
struct SdgArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Number of samples
    #[arg(short = 'n', long = "count")]
    count: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Chat-completions endpoint used to comment samples; template comments when absent
    #[arg(long, value_name = "ENDPOINT")]
    llm: Option<String>,
    #[arg(short = 'o', long)]
    output: PathBuf,
}

#[derive(Debug, Subcommand)]
enum RulesCmd {
    /// Propose rules from QnA pairs and keep those the checker confirms
    Extract(ExtractArgs),
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// JSON Lines of {"query": ..., "code": ...}
    #[arg(long)]
    qna: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    llm: LlmArgs,
    #[arg(long, default_value_t = 3)]
    max_per_pair: usize,
    #[arg(short = 'o', long)]
    output: PathBuf,
}

#[derive(Debug, Subcommand)]
enum IndexCmd {
    /// Build an index directory from documents and/or a manifest's API docs
    Build {
        /// JSON Lines of {"id", "text", "kind"} documents
        #[arg(long, required_unless_present = "manifest")]
        docs: Option<PathBuf>,
        /// Add one document per API member of this graph
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        dimension: usize,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
    /// Print the top-k documents for a query
    Query {
        index: PathBuf,
        query: String,
        #[arg(short = 'k', default_value_t = 5)]
        k: usize,
        /// lexical, dense or hybrid
        #[arg(long, default_value = "hybrid")]
        mode: SearchMode,
    },
}

#[derive(Debug, Args)]
struct LlmArgs {
    /// Replay file (JSON Lines of {fingerprint, reply}) answering every model call;
    /// unknown prompts are errors
    #[arg(long, value_name = "REPLAY", conflicts_with = "llm")]
    mock: Option<PathBuf>,
    /// Chat-completions endpoint; defaults to JARVIS_LLM_URL
    #[arg(long, value_name = "ENDPOINT")]
    llm: Option<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Rule file (JSON array)
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Index directory with API documentation
    #[arg(long)]
    index: Option<PathBuf>,
    #[command(flatten)]
    llm: LlmArgs,
    #[arg(long, default_value_t = 2)]
    episodes: usize,
    #[arg(long, default_value_t = 5)]
    itr_limit: usize,
    /// Seconds per episode
    #[arg(long, default_value_t = 120.0)]
    time_limit: f64,
}

#[derive(Debug, Args)]
struct AskArgs {
    #[command(flatten)]
    run: RunArgs,
    query: String,
    /// Write the tool-call transcript (JSON Lines) here
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(after_help = "A case passes when the guardrail accepts the final code and every required API \
literal occurs in it. Matching is a plain substring test after collapsing each whitespace run \
to a single space in both the code and the literal; case is significant.")]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Benchmark cases, JSON Lines of {id, question, required_apis, tier}
    #[arg(long)]
    bench: PathBuf,
    /// Cases run concurrently
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the JSON report here
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for one transcript file per case
    #[arg(long)]
    transcripts: Option<PathBuf>,
}

/// Runs the CLI; returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return e.exit_code();
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn graph_from(path: &Path) -> Result<ApiGraph> {
    load_graph(&read(path)?).with_context(|| format!("loading graph {}", path.display()))
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Graph(GraphCmd::Inspect { manifest }) => {
            out.write_all(inspect(&graph_from(&manifest)?).as_bytes())?;
            Ok(0)
        }
        Command::Graph(GraphCmd::Path { manifest, object, member }) => {
            let graph = graph_from(&manifest)?;
            match shortest_path(&graph, &object, &member)? {
                Some(p) => {
                    writeln!(out, "{}", render_path(&p))?;
                    Ok(0)
                }
                None => {
                    writeln!(err, "no path from {object} to {member}")?;
                    Ok(1)
                }
            }
        }
        Command::Check(args) => check(args, out),
        Command::Sdg(args) => sdg(args, out),
        Command::Rules(RulesCmd::Extract(args)) => extract(args, out),
        Command::Index(cmd) => index(cmd, out),
        Command::Ask(args) => ask(args, out, err),
        Command::Eval(args) => evaluate(args, out),
    }
}

fn signature(m: &ApiMember) -> String {
    let params: Vec<String> = m
        .params
        .iter()
        .map(|p| {
            let mut s = format!("{}: {}", p.name, p.ty);
            if !p.flags.is_empty() {
                s.push_str(&format!(" [{}]", p.flags.join("|")));
            }
            if p.default.is_some() {
                s.push_str(" = ...");
            }
            s
        })
        .collect();
    format!("{}({}) -> {}", m.name, params.join(", "), m.returns)
}

fn inspect(graph: &ApiGraph) -> String {
    let mut out = format!(
        "version {}: {} object types, {} globals, {} members\n",
        if graph.version.is_empty() { "-" } else { &graph.version },
        graph.objects.len(),
        graph.globals.len(),
        graph.member_count()
    );
    out.push_str("\nglobals:\n");
    for g in graph.globals.values() {
        out.push_str(&format!("  {}  {}\n", signature(g), g.doc));
    }
    for obj in graph.objects.values() {
        let mut header = obj.name.clone();
        if let Some(e) = &obj.element {
            header.push_str(&format!(" (iterable of {e})"));
        }
        if obj.opaque {
            header.push_str(" (opaque)");
        }
        out.push_str(&format!("\n{header}: {}\n", obj.doc));
        for m in obj.members.values() {
            out.push_str(&format!("  {}  {}\n", signature(m), m.doc));
        }
    }
    if !graph.context.is_empty() {
        out.push_str("\ncontext:\n");
        for (name, ty) in &graph.context {
            out.push_str(&format!("  {name}: {ty}\n"));
        }
    }
    out
}

fn check(args: CheckArgs, out: &mut dyn Write) -> Result<i32> {
    if let Some(path) = args.dump_ast {
        let module = parse(&read(&path)?).with_context(|| format!("parsing {}", path.display()))?;
        out.write_all(ast_dump(&module).as_bytes())?;
        return Ok(0);
    }
    let (manifest, script) = (args.manifest.expect("clap enforces"), args.script.expect("clap enforces"));
    let graph = graph_from(&manifest)?;
    let module = parse(&read(&script)?).with_context(|| format!("parsing {}", script.display()))?;
    let report = simulate(&graph, &module);
    let feedback = process_sim(&graph, &report, args.attr_limit);
    if args.json {
        let value = serde_json::json!({
            "clean": report.clean,
            "checked_calls": report.checked_calls,
            "valid_calls": report.valid_calls,
            "score": report.score(),
            "diagnostics": report.diagnostics,
            "feedback": feedback,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?;
    } else if report.clean {
        writeln!(out, "clean: {} of {} API calls valid", report.valid_calls, report.checked_calls)?;
    } else {
        out.write_all(render_feedback(&report, &feedback).as_bytes())?;
    }
    Ok(if report.clean { 0 } else { 1 })
}

fn endpoint(role: &str, url: Option<&str>) -> Option<EndpointConfig> {
    match (EndpointConfig::from_env(role), url) {
        (Some(mut c), Some(u)) => {
            c.url = u.to_string();
            Some(c)
        }
        (c, None) => c,
        (None, Some(u)) => Some(EndpointConfig {
            url: u.to_string(),
            model: std::env::var("JARVIS_LLM_MODEL").unwrap_or_else(|_| "default".into()),
            key: std::env::var("JARVIS_LLM_KEY").ok(),
        }),
    }
}

type Client = Arc<dyn LlmClient>;

/// Generator and assistant clients, plus whether they are a replay.
fn models(args: &LlmArgs) -> Result<(Client, Client, bool)> {
    if let Some(path) = &args.mock {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let replay: Client = Arc::new(ScriptedLlm::strict("replay", read_replay(BufReader::new(file))?));
        return Ok((replay.clone(), replay, true));
    }
    let client = |role: &str| -> Result<Client> {
        let Some(cfg) = endpoint(role, args.llm.as_deref()) else {
            bail!("no model configured for {role}: pass --mock <replay> or --llm <endpoint>, or set JARVIS_LLM_URL");
        };
        Ok(Arc::new(HttpLlm::new(role, cfg, LLM_TIMEOUT)))
    };
    Ok((client("generator")?, client("assistant")?, false))
}

fn sdg(args: SdgArgs, out: &mut dyn Write) -> Result<i32> {
    let graph = graph_from(&args.manifest)?;
    let annotator = args
        .llm
        .as_deref()
        .map(|url| HttpLlm::new("annotator", endpoint("annotator", Some(url)).expect("url given"), LLM_TIMEOUT));
    let file = fs::File::create(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    let mut sink = std::io::BufWriter::new(file);
    let config = GenConfig::with_seed(args.seed);
    let summary = generate_dataset(&graph, &config, args.count, annotator.as_ref().map(|a| a as &dyn LlmClient), &mut sink)?;
    writeln!(
        out,
        "wrote {} records to {}; member coverage {:.3} ({} of {}); duplicates regenerated {}, kept {}",
        summary.records,
        args.output.display(),
        summary.coverage,
        summary.members_covered,
        summary.members_total,
        summary.duplicates_dropped,
        summary.duplicates_kept
    )?;
    if !summary.uncovered.is_empty() {
        writeln!(out, "uncovered: {}", summary.uncovered.join(", "))?;
    }
    Ok(0)
}

#[derive(Deserialize)]
struct QnaPair {
    query: String,
    code: String,
}

fn extract(args: ExtractArgs, out: &mut dyn Write) -> Result<i32> {
    let graph = graph_from(&args.manifest)?;
    let mut pairs = Vec::new();
    for (i, line) in read(&args.qna)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: QnaPair = serde_json::from_str(line).with_context(|| format!("qna line {}", i + 1))?;
        pairs.push((p.query, p.code));
    }
    let (_, assistant, _) = models(&args.llm)?;
    let extraction = extract_rules_offline(&pairs, assistant.as_ref(), &graph, args.max_per_pair)?;
    fs::write(&args.output, rules_to_json(&extraction.rules) + "\n")
        .with_context(|| format!("writing {}", args.output.display()))?;
    writeln!(
        out,
        "{} pairs: proposed {}, accepted {} ({:.3}); wrote {}",
        pairs.len(),
        extraction.proposed,
        extraction.accepted,
        extraction.acceptance_rate(),
        args.output.display()
    )?;
    Ok(0)
}

fn index(cmd: IndexCmd, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        IndexCmd::Build { docs, manifest, dimension, output } => {
            if dimension == 0 {
                bail!("--dimension must be positive");
            }
            let mut corpus: Vec<Document> = Vec::new();
            if let Some(path) = manifest {
                corpus.extend(api_doc_corpus(&graph_from(&path)?));
            }
            if let Some(path) = docs {
                for (i, line) in read(&path)?.lines().enumerate() {
                    if !line.trim().is_empty() {
                        corpus.push(serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
                    }
                }
            }
            let n = corpus.len();
            let index = HybridIndex::build(corpus, Box::new(FeatureHashEmbedder::new(dimension)))?;
            index.save(&output)?;
            writeln!(out, "indexed {n} documents into {}", output.display())?;
            Ok(0)
        }
        IndexCmd::Query { index, query, k, mode } => {
            let index = HybridIndex::load(&index)?;
            for (rank, hit) in index.search(&query, k, mode)?.iter().enumerate() {
                writeln!(out, "{:>2}. {:.6}  {}  {}", rank + 1, hit.score, hit.doc.id, hit.doc.text)?;
            }
            Ok(0)
        }
    }
}

struct Resources {
    graph: ApiGraph,
    rules: RuleStore,
    index: Option<HybridIndex>,
    generator: Arc<dyn LlmClient>,
    assistant: Arc<dyn LlmClient>,
    replay: bool,
    config: RunConfig,
}

fn resources(args: &RunArgs) -> Result<Resources> {
    let config =
        RunConfig { episodes: args.episodes, itr_limit: args.itr_limit, time_limit_s: args.time_limit, ..RunConfig::default() };
    config.validate()?;
    let rules = match &args.rules {
        Some(p) => load_rules(p).with_context(|| format!("loading rules {}", p.display()))?,
        None => RuleStore::empty(),
    };
    let index = match &args.index {
        Some(dir) => Some(HybridIndex::load(dir).with_context(|| format!("loading index {}", dir.display()))?),
        None => None,
    };
    let (generator, assistant, replay) = models(&args.llm)?;
    Ok(Resources { graph: graph_from(&args.manifest)?, rules, index, generator, assistant, replay, config })
}

fn ask(args: AskArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let res = resources(&args.run)?;
    // a replay run is judged on its transcript, so make time deterministic too
    let step = StepClock::new(1);
    let wall = SystemClock::default();
    let clock: &dyn Clock = if res.replay { &step } else { &wall };
    let tools = Toolbox {
        graph: &res.graph,
        rules: &res.rules,
        retriever: res.index.as_ref(),
        generator: res.generator.as_ref(),
        assistant: res.assistant.as_ref(),
        clock,
    };
    let outcome = refine(&args.query, &res.config, &tools)?;
    if let Some(path) = &args.transcript {
        fs::write(path, transcript_jsonl(&outcome.transcript)).with_context(|| format!("writing {}", path.display()))?;
    }
    for note in &outcome.notes {
        writeln!(err, "note: {note}")?;
    }
    let answer = outcome.answer.trim_end();
    writeln!(out, "{answer}")?;
    Ok(0)
}

fn evaluate(args: EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let cases = parse_bench(&read(&args.bench)?)?;
    let res = resources(&args.run)?;
    let pipeline = Pipeline {
        graph: &res.graph,
        rules: &res.rules,
        retriever: res.index.as_ref(),
        generator: res.generator.as_ref(),
        assistant: res.assistant.as_ref(),
        config: res.config.clone(),
        step_clock: res.replay,
    };
    let report = run_eval(&cases, &pipeline, args.jobs, args.transcripts.as_deref())?;
    if let Some(path) = &args.report {
        fs::write(path, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    out.write_all(report.table().as_bytes())?;
    Ok(0)
}

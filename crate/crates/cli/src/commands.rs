//! Subcommand definitions and handlers.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use wikirace_core::agents::{make_baseline, BaselineKind, LlmAgent, LlmAgentConfig, PriceTable, ProbeResponder};
use wikirace_core::game::{load_log_dir, SYSTEM_PROMPT};
use wikirace_core::graph::{load_graph, save_graph, strongly_connected_components};
use wikirace_core::ingest::{ingest, snapshot_hex, stats, EdgeFormat, EdgeListSource};
use wikirace_core::metrics::{build_report, exclude_abandoned, parse_group_fields, probe_f1, render_jsonl, render_table};
use wikirace_core::synth::{synthetic_graph, SynthParams};
use wikirace_core::tasks::{
    export_training_pairs, generate_probe_set, generate_split, import_pairs, load_tasks, parse_probe_answer,
    probe_prompt, write_tasks, ProbeRecord, PROBE_PER_CATEGORY,
};
use wikirace_core::{
    Agent, DistanceCache, GameConfig, Observation, PageGraph, PageId, SessionManager, Split, SplitSpec, TaskInstance,
};

use crate::config::Settings;
use crate::manifest::{RunManifest, RunStatus};
use crate::play::run_batch;
use crate::server;

#[derive(Debug, Parser)]
#[command(name = "wikirace", version, about = "Link-navigation games over a hyperlink graph")]
pub struct Cli {
    /// Settings file with `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Graph file (.wkrg).
    #[arg(long, global = true, value_name = "PATH")]
    pub graph: Option<PathBuf>,
    /// Where to write the run manifest. Defaults to next to the primary
    /// output; commands that only print write none unless this is set.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a graph file from a TSV edge list (largest SCC only).
    Ingest(IngestArgs),
    /// Component and degree statistics for a graph file or raw edge list.
    SccStats(SccStatsArgs),
    /// Compute and store distance fields for every target in task files.
    PrecomputeDistances(PrecomputeArgs),
    /// Sample an evaluation split.
    GenTasks(GenTasksArgs),
    /// Sample the link-existence probe set.
    GenProbe(GenProbeArgs),
    /// Export single-step training pairs disjoint from evaluation tasks.
    ExportTrain(ExportTrainArgs),
    /// Turn a `source,target` CSV into a task file.
    ImportPairs(ImportPairsArgs),
    /// Play a batch of games and write trajectories.
    Play(PlayArgs),
    /// Ask an agent the probe questions and score the answers.
    RunProbe(RunProbeArgs),
    /// HTTP session service for interactive play.
    Serve(ServeArgs),
    /// Aggregate trajectory logs into a metrics table.
    Analyze(AnalyzeArgs),
    /// Write table, JSONL and regression points for a log directory.
    Report(ReportArgs),
    /// Generate a synthetic wiki-like graph file.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub edges: PathBuf,
    /// tsv-titles or tsv-ids
    #[arg(long, default_value = "tsv-titles")]
    pub format: String,
    /// Output graph file; defaults to the `graph` setting.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SccStatsArgs {
    /// Analyse a raw edge list instead of the graph file.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long, default_value = "tsv-titles")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    /// Task files whose targets to precompute.
    #[arg(required = true)]
    pub tasks: Vec<PathBuf>,
    /// Store directory; defaults to the `distances_dir` setting.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenTasksArgs {
    /// easy, medium, hard, or all (split k of all uses seed + k)
    #[arg(long)]
    pub split: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file, or directory for `--split all`. Defaults under `tasks_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Task files whose pairs must not be drawn again.
    #[arg(long)]
    pub exclude: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenProbeArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = PROBE_PER_CATEGORY)]
    pub per_category: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportTrainArgs {
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluation task files to exclude. Defaults to the easy, medium and
    /// hard files present in `tasks_dir`.
    #[arg(long)]
    pub exclude: Vec<PathBuf>,
    #[arg(long)]
    pub link_cap: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportPairsArgs {
    pub csv: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlayArgs {
    /// random, first_link, oracle_greedy, hub_greedy, or llm:MODEL
    #[arg(long)]
    pub agent: String,
    /// Split name; reads `<tasks_dir>/<split>.jsonl`.
    #[arg(long, conflicts_with = "tasks", required_unless_present = "tasks")]
    pub split: Option<String>,
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    #[arg(long)]
    pub max_steps: Option<u32>,
    #[arg(long)]
    pub link_cap: Option<usize>,
    #[arg(long)]
    pub parallel: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Play only the first N tasks.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Trajectory file; defaults to a name under `log_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunProbeArgs {
    /// always_yes, always_no, or llm:MODEL
    #[arg(long)]
    pub agent: String,
    /// Probe file; defaults to `<tasks_dir>/probe.jsonl`.
    #[arg(long)]
    pub probe: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<String>,
    /// Directory of static UI files served at `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    #[arg(long)]
    pub tasks_dir: Option<PathBuf>,
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
    #[arg(long)]
    pub idle_timeout_secs: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Log directory; defaults to the `log_dir` setting.
    #[arg(long)]
    pub logs: Option<PathBuf>,
    /// Comma-separated: split, agent, player, max_steps, link_cap
    #[arg(long, default_value = "split,agent")]
    pub by: String,
    /// table or jsonl
    #[arg(long, default_value = "table")]
    pub format: String,
    /// Count abandoned human sessions in the metrics.
    #[arg(long)]
    pub include_abandoned: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub logs: Option<PathBuf>,
    #[arg(long, default_value = "split,agent")]
    pub by: String,
    #[arg(long)]
    pub include_abandoned: bool,
    #[arg(long, default_value = "report")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10_000)]
    pub nodes: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::SccStats(_) => "scc-stats",
            Command::PrecomputeDistances(_) => "precompute-distances",
            Command::GenTasks(_) => "gen-tasks",
            Command::GenProbe(_) => "gen-probe",
            Command::ExportTrain(_) => "export-train",
            Command::ImportPairs(_) => "import-pairs",
            Command::Play(_) => "play",
            Command::RunProbe(_) => "run-probe",
            Command::Serve(_) => "serve",
            Command::Analyze(_) => "analyze",
            Command::Report(_) => "report",
            Command::Synth(_) => "synth",
        }
    }

    /// Flag values that override settings of the same name.
    fn setting_flags(&self) -> Vec<(&'static str, Option<String>)> {
        fn s<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(ToString::to_string)
        }
        fn p(v: &Option<PathBuf>) -> Option<String> {
            v.as_ref().map(|p| p.display().to_string())
        }
        match self {
            Command::GenTasks(a) => vec![("seed", s(&a.seed))],
            Command::GenProbe(a) => vec![("seed", s(&a.seed))],
            Command::ExportTrain(a) => vec![("seed", s(&a.seed)), ("link_cap", s(&a.link_cap))],
            Command::Synth(a) => vec![("seed", s(&a.seed))],
            Command::Play(a) => vec![
                ("seed", s(&a.seed)),
                ("max_steps", s(&a.max_steps)),
                ("link_cap", s(&a.link_cap)),
                ("parallel", s(&a.parallel)),
            ],
            Command::Serve(a) => vec![
                ("bind", s(&a.bind)),
                ("ui_dir", p(&a.ui_dir)),
                ("tasks_dir", p(&a.tasks_dir)),
                ("log_dir", p(&a.log_dir)),
                ("idle_timeout_secs", s(&a.idle_timeout_secs)),
            ],
            Command::PrecomputeDistances(a) => vec![("distances_dir", p(&a.out))],
            _ => Vec::new(),
        }
    }
}

/// An input file or directory that does not exist. Maps to exit status 2.
#[derive(Debug)]
pub struct MissingInput(pub PathBuf);

impl fmt::Display for MissingInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "input not found: {}", self.0.display())
    }
}

impl std::error::Error for MissingInput {}

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MISSING_INPUT: i32 = 2;

fn require(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(MissingInput(path.to_path_buf()).into())
    }
}

struct Ctx {
    settings: Settings,
    manifest: RunManifest,
    stop: Arc<AtomicBool>,
}

impl Ctx {
    fn path_setting(&self, key: &str) -> PathBuf {
        PathBuf::from(self.settings.raw(key))
    }

    fn seed(&mut self) -> Result<u64> {
        let seed = self.settings.get("seed")?;
        self.manifest.seed = Some(seed);
        Ok(seed)
    }

    fn load_graph(&mut self) -> Result<(Arc<PageGraph>, String)> {
        let path = self.path_setting("graph");
        require(&path)?;
        let g = load_graph(&path).with_context(|| format!("loading graph {}", path.display()))?;
        let snapshot = snapshot_hex(&g);
        self.manifest.input(&path);
        self.manifest.snapshot_checksum = Some(snapshot.clone());
        Ok((Arc::new(g), snapshot))
    }

    fn cache(&self, g: &PageGraph) -> DistanceCache {
        let cache = DistanceCache::new(g);
        match self.settings.opt_str("distances_dir") {
            Some(dir) => cache.with_store(dir),
            None => cache,
        }
    }

    fn load_tasks(&mut self, path: &Path, g: &PageGraph, snapshot: &str) -> Result<Vec<TaskInstance>> {
        require(path)?;
        self.manifest.input(path);
        load_tasks(path, g, snapshot).with_context(|| format!("loading tasks {}", path.display()))
    }

    fn game_config(&self) -> Result<GameConfig> {
        Ok(GameConfig {
            max_steps: self.settings.get("max_steps")?,
            link_cap: self.settings.get("link_cap")?,
            rng_seed: self.settings.get("seed")?,
            parse_retries: self.settings.get("parse_retries")?,
        })
    }

    fn llm_config(&self, model: &str) -> Result<LlmAgentConfig> {
        let s = &self.settings;
        let prices = match (
            s.get_opt::<f64>("price_input_per_million")?,
            s.get_opt::<f64>("price_output_per_million")?,
        ) {
            (Some(i), Some(o)) => Some(PriceTable {
                input_per_million: i,
                output_per_million: o,
            }),
            (None, None) => None,
            _ => bail!("set both price_input_per_million and price_output_per_million, or neither"),
        };
        Ok(LlmAgentConfig {
            base_url: s.raw("api_base").to_owned(),
            model: model.to_owned(),
            temperature: s.get("temperature")?,
            max_tokens: s.get_opt("max_tokens")?,
            timeout: Duration::from_secs(s.get("timeout_secs")?),
            retries: s.get("retries")?,
            backoff: Duration::from_millis(s.get("backoff_ms")?),
            requests_per_minute: s.get("requests_per_minute")?,
            api_key: s.opt_str("api_key").map(str::to_owned),
            prices,
        })
    }

    fn agent(&self, spec: &str, seed: u64) -> Result<Box<dyn Agent>> {
        if let Some(model) = spec.strip_prefix("llm:") {
            if model.is_empty() {
                bail!("llm agent needs a model name, e.g. llm:gpt-4o");
            }
            return Ok(Box::new(LlmAgent::new(self.llm_config(model)?)?));
        }
        match spec {
            "always_yes" => Ok(Box::new(ProbeResponder { answer: true })),
            "always_no" => Ok(Box::new(ProbeResponder { answer: false })),
            other => Ok(make_baseline(other.parse::<BaselineKind>()?, seed)),
        }
    }

    fn create(&mut self, path: &Path) -> Result<BufWriter<File>> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        self.manifest.output(path);
        Ok(BufWriter::new(f))
    }
}

fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_jsonl<T: Serialize>(w: &mut impl Write, items: impl IntoIterator<Item = T>) -> Result<usize> {
    let mut n = 0;
    for item in items {
        serde_json::to_writer(&mut *w, &item)?;
        w.write_all(b"\n")?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

fn pair_set(ctx: &mut Ctx, files: &[PathBuf], g: &PageGraph, snapshot: &str) -> Result<HashSet<(PageId, PageId)>> {
    let mut out = HashSet::new();
    for f in files {
        out.extend(ctx.load_tasks(f, g, snapshot)?.iter().map(TaskInstance::pair));
    }
    Ok(out)
}

/// Parses argv, runs the command, writes the manifest, and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut flags = vec![("graph", cli.graph.as_ref().map(|p| p.display().to_string()))];
    flags.extend(cli.command.setting_flags());
    let settings = match Settings::resolve(cli.config.as_deref(), |k| std::env::var(k).ok(), &flags) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            let missing = cli.config.as_ref().is_some_and(|p| !p.exists());
            return if missing { EXIT_MISSING_INPUT } else { EXIT_FAILURE };
        }
    };
    let command_line = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut ctx = Ctx {
        manifest: RunManifest::start(cli.command.name(), command_line, &settings),
        settings,
        stop: Arc::new(AtomicBool::new(false)),
    };

    let result = dispatch(&mut ctx, &cli.command);
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            ctx.manifest.status = RunStatus::Failed;
            ctx.manifest.error = Some(format!("{e:#}"));
            ctx.manifest.partial = !ctx.manifest.outputs.is_empty();
            if e.chain().any(|c| c.is::<MissingInput>()) {
                EXIT_MISSING_INPUT
            } else {
                EXIT_FAILURE
            }
        }
    };
    if let Some(path) = ctx.manifest.default_path(cli.manifest.as_deref()) {
        if let Err(e) = ctx.manifest.write(&path) {
            eprintln!("error: {e:#}");
            return EXIT_FAILURE;
        }
    }
    code
}

fn dispatch(ctx: &mut Ctx, cmd: &Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => cmd_ingest(ctx, a),
        Command::SccStats(a) => cmd_scc_stats(ctx, a),
        Command::PrecomputeDistances(a) => cmd_precompute(ctx, a),
        Command::GenTasks(a) => cmd_gen_tasks(ctx, a),
        Command::GenProbe(a) => cmd_gen_probe(ctx, a),
        Command::ExportTrain(a) => cmd_export_train(ctx, a),
        Command::ImportPairs(a) => cmd_import_pairs(ctx, a),
        Command::Play(a) => cmd_play(ctx, a),
        Command::RunProbe(a) => cmd_run_probe(ctx, a),
        Command::Serve(_) => cmd_serve(ctx),
        Command::Analyze(a) => cmd_analyze(ctx, a),
        Command::Report(a) => cmd_report(ctx, a),
        Command::Synth(a) => cmd_synth(ctx, a),
    }
}

fn cmd_ingest(ctx: &mut Ctx, a: &IngestArgs) -> Result<()> {
    let format: EdgeFormat = a.format.parse()?;
    require(&a.edges)?;
    ctx.manifest.input(&a.edges);
    let (g, report) = ingest(&EdgeListSource {
        path: a.edges.clone(),
        format,
    })?;
    let out = a.out.clone().unwrap_or_else(|| ctx.path_setting("graph"));
    drop(ctx.create(&out)?);
    save_graph(&g, &out).with_context(|| format!("writing {}", out.display()))?;
    ctx.manifest.snapshot_checksum = Some(report.snapshot_checksum.clone());
    ctx.manifest.note("ingest", &report);
    print_json(&report)
}

#[derive(Serialize)]
struct SccSummary {
    snapshot: String,
    components: usize,
    largest_component: usize,
    singleton_components: usize,
    degrees: wikirace_core::ingest::DegreeStats,
}

fn cmd_scc_stats(ctx: &mut Ctx, a: &SccStatsArgs) -> Result<()> {
    if let Some(edges) = &a.edges {
        require(edges)?;
        ctx.manifest.input(edges);
        let (_, report) = ingest(&EdgeListSource {
            path: edges.clone(),
            format: a.format.parse()?,
        })?;
        ctx.manifest.note("ingest", &report);
        return print_json(&report);
    }
    let (g, snapshot) = ctx.load_graph()?;
    let (ids, count) = strongly_connected_components(&g);
    let mut sizes = vec![0usize; count];
    for c in ids {
        sizes[c as usize] += 1;
    }
    let summary = SccSummary {
        snapshot,
        components: count,
        largest_component: sizes.iter().copied().max().unwrap_or(0),
        singleton_components: sizes.iter().filter(|&&s| s == 1).count(),
        degrees: stats(&g, ctx.settings.get("link_cap")?),
    };
    ctx.manifest.note("scc", &summary);
    print_json(&summary)
}

fn cmd_precompute(ctx: &mut Ctx, a: &PrecomputeArgs) -> Result<()> {
    let dir = ctx
        .settings
        .opt_str("distances_dir")
        .map(PathBuf::from)
        .ok_or_else(|| anyhow!("no store directory: pass --out or set distances_dir"))?;
    let (g, snapshot) = ctx.load_graph()?;
    let mut targets = Vec::new();
    for f in &a.tasks {
        targets.extend(ctx.load_tasks(f, &g, &snapshot)?.iter().map(|t| t.target));
    }
    let cache = DistanceCache::new(&g).with_store(&dir);
    let fields = cache.populate(targets)?;
    ctx.manifest.output(&dir);
    ctx.manifest.note("targets", fields.len());
    ctx.manifest.note("computed", cache.computations());
    println!(
        "{} distance fields in {} ({} computed, {} reused)",
        fields.len(),
        dir.display(),
        cache.computations(),
        fields.len() - cache.computations()
    );
    Ok(())
}

fn cmd_gen_tasks(ctx: &mut Ctx, a: &GenTasksArgs) -> Result<()> {
    let seed = ctx.seed()?;
    let (g, snapshot) = ctx.load_graph()?;
    let cache = ctx.cache(&g);
    let mut exclude = pair_set(ctx, &a.exclude, &g, &snapshot)?;
    let tasks_dir = ctx.path_setting("tasks_dir");

    let plan: Vec<(Split, u64, PathBuf)> = if a.split == "all" {
        let dir = a.out.clone().unwrap_or(tasks_dir);
        Split::EVALUATION
            .iter()
            .enumerate()
            .map(|(k, &s)| (s, seed + k as u64, dir.join(format!("{s}.jsonl"))))
            .collect()
    } else {
        let split: Split = a.split.parse()?;
        let out = a.out.clone().unwrap_or_else(|| tasks_dir.join(format!("{split}.jsonl")));
        vec![(split, seed, out)]
    };
    for (split, seed, out) in plan {
        let spec = SplitSpec::for_split(split).ok_or_else(|| anyhow!("split {split} has no generation spec"))?;
        let tasks = generate_split(&g, &cache, &spec, seed, &exclude, &snapshot)?;
        exclude.extend(tasks.iter().map(TaskInstance::pair));
        let mut w = ctx.create(&out)?;
        write_tasks(&mut w, &tasks, &g)?;
        ctx.manifest.note(split.as_str(), tasks.len());
        println!("{} {split} tasks -> {}", tasks.len(), out.display());
    }
    Ok(())
}

fn cmd_gen_probe(ctx: &mut Ctx, a: &GenProbeArgs) -> Result<()> {
    let seed = ctx.seed()?;
    let (g, snapshot) = ctx.load_graph()?;
    let probes = generate_probe_set(&g, seed, a.per_category)?;
    let out = a.out.clone().unwrap_or_else(|| ctx.path_setting("tasks_dir").join("probe.jsonl"));
    let mut w = ctx.create(&out)?;
    let n = write_jsonl(&mut w, probes.iter().map(|p| p.to_record(&g, &snapshot)))?;
    ctx.manifest.note("samples", n);
    println!("{n} probe samples -> {}", out.display());
    Ok(())
}

fn cmd_export_train(ctx: &mut Ctx, a: &ExportTrainArgs) -> Result<()> {
    let seed = ctx.seed()?;
    let (g, snapshot) = ctx.load_graph()?;
    let cache = ctx.cache(&g);
    let tasks_dir = ctx.path_setting("tasks_dir");
    let files: Vec<PathBuf> = if a.exclude.is_empty() {
        Split::EVALUATION
            .iter()
            .map(|s| tasks_dir.join(format!("{s}.jsonl")))
            .filter(|p| p.exists())
            .collect()
    } else {
        a.exclude.clone()
    };
    let exclude = pair_set(ctx, &files, &g, &snapshot)?;
    let link_cap = ctx.settings.get("link_cap")?;
    let pairs = export_training_pairs(&g, &cache, seed, a.count, &exclude, link_cap, &snapshot)?;
    let out = a.out.clone().unwrap_or_else(|| tasks_dir.join("train.jsonl"));
    let mut w = ctx.create(&out)?;
    let n = write_jsonl(&mut w, pairs.iter().map(|p| p.to_record(&g)))?;
    ctx.manifest.note("pairs", n);
    ctx.manifest.note("excluded_pairs", exclude.len());
    println!("{n} training pairs ({} evaluation pairs excluded) -> {}", exclude.len(), out.display());
    Ok(())
}

fn cmd_import_pairs(ctx: &mut Ctx, a: &ImportPairsArgs) -> Result<()> {
    require(&a.csv)?;
    let (g, snapshot) = ctx.load_graph()?;
    let cache = ctx.cache(&g);
    ctx.manifest.input(&a.csv);
    let file = File::open(&a.csv).with_context(|| format!("opening {}", a.csv.display()))?;
    let (tasks, report) = import_pairs(file, &g, &cache, &snapshot)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| ctx.path_setting("tasks_dir").join("imported.jsonl"));
    let mut w = ctx.create(&out)?;
    write_tasks(&mut w, &tasks, &g)?;
    ctx.manifest.note("import", &report);
    print_json(&report)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn install_interrupt(stop: &Arc<AtomicBool>) {
    let flag = Arc::clone(stop);
    let installed = ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
        eprintln!("interrupt: finishing in-flight games (press again to abort)");
    });
    if let Err(e) = installed {
        tracing::warn!("interrupt handler not installed: {e}");
    }
}

fn cmd_play(ctx: &mut Ctx, a: &PlayArgs) -> Result<()> {
    let config = ctx.game_config()?;
    let parallel: usize = ctx.settings.get("parallel")?;
    ctx.manifest.seed = Some(config.rng_seed);
    let (g, snapshot) = ctx.load_graph()?;
    let (label, path) = match (&a.split, &a.tasks) {
        (Some(split), _) => {
            let split: Split = split.parse()?;
            (split.to_string(), ctx.path_setting("tasks_dir").join(format!("{split}.jsonl")))
        }
        (None, Some(p)) => (
            p.file_stem().map_or("tasks".into(), |s| s.to_string_lossy().into_owned()),
            p.clone(),
        ),
        (None, None) => bail!("pass --split or --tasks"),
    };
    let mut tasks = ctx.load_tasks(&path, &g, &snapshot)?;
    if let Some(n) = a.limit {
        tasks.truncate(n);
    }
    let agent = ctx.agent(&a.agent, config.rng_seed)?;
    let cache = ctx.cache(&g);
    let out = a.out.clone().unwrap_or_else(|| {
        ctx.path_setting("log_dir").join(format!(
            "{}-{}-seed{}-T{}-K{}.jsonl",
            sanitize(&a.agent),
            sanitize(&label),
            config.rng_seed,
            config.max_steps,
            config.link_cap
        ))
    });
    let mut w = ctx.create(&out)?;
    install_interrupt(&ctx.stop);
    let summary = run_batch(&tasks, agent.as_ref(), &g, &cache, &config, parallel, &ctx.stop, &mut w)?;

    ctx.manifest.note("agent", agent.descriptor());
    ctx.manifest.note("games", summary.written);
    ctx.manifest.note("tasks", summary.total);
    ctx.manifest.note("successes", summary.successes);
    ctx.manifest.note("max_steps_taken", summary.max_steps_taken);
    let rate = if summary.written == 0 {
        0.0
    } else {
        summary.successes as f64 / summary.written as f64
    };
    println!(
        "{}/{} games, success {:.1}% -> {}",
        summary.written,
        summary.total,
        100.0 * rate,
        out.display()
    );
    if let Some(e) = summary.error {
        bail!(e);
    }
    if summary.interrupted {
        ctx.manifest.status = RunStatus::Interrupted;
        ctx.manifest.partial = true;
    }
    Ok(())
}

#[derive(Serialize)]
struct ProbeResponse<'a> {
    #[serde(flatten)]
    record: &'a ProbeRecord,
    raw: String,
    answer: Option<bool>,
}

fn cmd_run_probe(ctx: &mut Ctx, a: &RunProbeArgs) -> Result<()> {
    let path = a
        .probe
        .clone()
        .unwrap_or_else(|| ctx.path_setting("tasks_dir").join("probe.jsonl"));
    require(&path)?;
    ctx.manifest.input(&path);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let records: Vec<ProbeRecord> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect::<Result<_>>()?;
    let agent = ctx.agent(&a.agent, ctx.settings.get("seed")?)?;
    if agent.descriptor().privileged {
        bail!("{} needs engine state and cannot answer probe questions", a.agent);
    }
    let out = a.out.clone().unwrap_or_else(|| {
        ctx.path_setting("log_dir")
            .join(format!("probe-{}.jsonl", sanitize(&a.agent)))
    });
    let mut w = ctx.create(&out)?;
    let mut items = Vec::with_capacity(records.len());
    for r in &records {
        let obs = Observation {
            system_text: SYSTEM_PROMPT.to_owned(),
            user_text: probe_prompt(&r.source, &r.target),
            max_index: 0,
            links: Vec::new(),
        };
        let raw = agent.decide(&obs, None)?.raw_text;
        let answer = parse_probe_answer(&raw);
        items.push((r.label, answer));
        write_jsonl(&mut w, [ProbeResponse { record: r, raw, answer }])?;
    }
    let score = probe_f1(&items)?;
    ctx.manifest.note("score", score);
    println!(
        "F1 {:.4} (precision {:.4}, recall {:.4}, {} unparsed) over {} samples",
        score.f1,
        score.precision,
        score.recall,
        score.discarded,
        items.len()
    );
    Ok(())
}

fn cmd_serve(ctx: &mut Ctx) -> Result<()> {
    let (g, snapshot) = ctx.load_graph()?;
    let cache = Arc::new(ctx.cache(&g));
    let tasks_dir = ctx.path_setting("tasks_dir");
    let log_dir = ctx.path_setting("log_dir");
    let mut manager = SessionManager::new(Arc::clone(&g), cache, ctx.game_config()?, snapshot.clone()).with_log_dir(&log_dir);
    for split in [Split::Easy, Split::Medium, Split::Hard, Split::Imported, Split::Custom] {
        let path = tasks_dir.join(format!("{split}.jsonl"));
        if path.exists() {
            let tasks = ctx.load_tasks(&path, &g, &snapshot)?;
            tracing::info!("{} {split} tasks from {}", tasks.len(), path.display());
            manager = manager.with_tasks(split, tasks);
        }
    }
    let ui_dir = ctx.settings.opt_str("ui_dir").map(PathBuf::from);
    if let Some(dir) = &ui_dir {
        require(dir)?;
    }
    let idle = Duration::from_secs(ctx.settings.get("idle_timeout_secs")?);
    let sweep = idle.clamp(Duration::from_secs(1), Duration::from_secs(60));
    let bind = ctx.settings.raw("bind").to_owned();
    ctx.manifest.output(&log_dir);

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .with_context(|| format!("binding {bind}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        let manager = Arc::new(manager);
        server::serve(listener, Arc::clone(&manager), ui_dir, idle, sweep, shutdown).await?;
        // Games still running at shutdown are logged as abandoned.
        let closed = tokio::task::spawn_blocking(move || manager.expire_idle(Duration::ZERO)).await?;
        Ok::<_, anyhow::Error>(closed.len())
    })
    .map(|closed| ctx.manifest.note("sessions_closed_at_shutdown", closed))
}

fn load_logs(ctx: &mut Ctx, logs: &Option<PathBuf>, include_abandoned: bool) -> Result<Vec<wikirace_core::GameTrajectory>> {
    let dir = logs.clone().unwrap_or_else(|| ctx.path_setting("log_dir"));
    require(&dir)?;
    ctx.manifest.input(&dir);
    let all = load_log_dir(&dir)?;
    ctx.manifest.note("trajectories", all.len());
    Ok(if include_abandoned { all } else { exclude_abandoned(&all) })
}

fn cmd_analyze(ctx: &mut Ctx, a: &AnalyzeArgs) -> Result<()> {
    let by = parse_group_fields(&a.by)?;
    let trajs = load_logs(ctx, &a.logs, a.include_abandoned)?;
    let report = build_report(&trajs, &by);
    let text = match a.format.as_str() {
        "table" => render_table(&report),
        "jsonl" => render_jsonl(&report),
        other => bail!("unknown format {other:?} (expected table or jsonl)"),
    };
    match &a.out {
        Some(out) => ctx.create(out)?.write_all(text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_report(ctx: &mut Ctx, a: &ReportArgs) -> Result<()> {
    let by = parse_group_fields(&a.by)?;
    let trajs = load_logs(ctx, &a.logs, a.include_abandoned)?;
    let report = build_report(&trajs, &by);
    let dir = &a.out_dir;
    ctx.create(&dir.join("report.txt"))?
        .write_all(render_table(&report).as_bytes())?;
    ctx.create(&dir.join("report.jsonl"))?
        .write_all(render_jsonl(&report).as_bytes())?;
    let mut points = ctx.create(&dir.join("loop_points.csv"))?;
    writeln!(points, "agent,loop_frequency,success_rate")?;
    for (agent, x, y) in &report.regression_points {
        writeln!(points, "{agent},{x},{y}")?;
    }
    points.flush()?;
    ctx.manifest.note("rows", report.rows.len());
    println!("report for {} trajectories -> {}", trajs.len(), dir.display());
    Ok(())
}

fn cmd_synth(ctx: &mut Ctx, a: &SynthArgs) -> Result<()> {
    let seed = ctx.seed()?;
    let g = synthetic_graph(&SynthParams::wiki_like(a.nodes), seed);
    let out = a.out.clone().unwrap_or_else(|| ctx.path_setting("graph"));
    drop(ctx.create(&out)?);
    save_graph(&g, &out).with_context(|| format!("writing {}", out.display()))?;
    let snapshot = snapshot_hex(&g);
    ctx.manifest.snapshot_checksum = Some(snapshot.clone());
    println!(
        "{} pages, {} links, snapshot {snapshot} -> {}",
        g.num_nodes(),
        g.nnz(),
        out.display()
    );
    Ok(())
}

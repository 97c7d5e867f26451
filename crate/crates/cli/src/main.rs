use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use transrepair_core::analytics::{ComparisonReport, EmptyListPolicy, MetricsReport};
use transrepair_core::config::{BackendKind, EngineConfig};
use transrepair_core::corpus::{load_corpus, validate_corpus};
use transrepair_core::model::LanguageSet;
use transrepair_core::rundir::{default_metrics_dir, execute_run, load_run};
use transrepair_core::strategy::StrategyKind;

#[derive(Parser)]
#[command(
    name = "transrepair",
    version,
    about = "Cross-language program repair campaigns: run, measure, compare",
    after_help = "The http backend reads its bearer token from the variable named by \
                  backend.http.api_key_env (default TRANSREPAIR_API_KEY)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a corpus, then print its manifest
    Ingest(IngestArgs),
    /// Run a repair campaign into a fresh run directory
    Run(RunArgs),
    /// Compute metrics for a completed run directory
    Metrics(MetricsArgs),
    /// Compare 2 or 3 runs over the same corpus
    Analyze(AnalyzeArgs),
    /// Render a metrics bundle as a Markdown summary
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Corpus root (problems.jsonl, bugs/*.jsonl); defaults to the config's corpus
    corpus: Option<PathBuf>,
    /// Campaign config supplying the corpus path and language set
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Campaign config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Run directory to create; must not exist or be empty
    #[arg(long)]
    out: PathBuf,
    /// Override the target-selection strategy
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Override the run seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the model backend
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Repeat direct repair instead of translating
    #[arg(long)]
    no_translation: bool,
    /// Disable history retrieval and writes
    #[arg(long)]
    no_history: bool,
    /// Bugs processed concurrently within an iteration
    #[arg(long, value_name = "N")]
    parallel: Option<usize>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Completed run directory
    run: PathBuf,
    /// Output directory [default: <run>.metrics next to the run]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ranking cutoffs, e.g. --k 1,3,5 [default: every iteration]
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    k: Vec<usize>,
    /// Samples considered by Pass@k [default: the run's setting]
    #[arg(long)]
    pass_k: Option<u32>,
    /// How languages without valid iterations enter MAP
    #[arg(long, value_enum, default_value_t = MapEmpty::Exclude)]
    map_empty: MapEmpty,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Two or three completed run directories; later runs are tested against the first
    #[arg(num_args = 2..=3, required = true)]
    runs: Vec<PathBuf>,
    /// Output directory for comparison.json and comparison.csv
    #[arg(long)]
    out: PathBuf,
    /// Ranking cutoffs, e.g. --k 1,3,5 [default: every iteration]
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    k: Vec<usize>,
    /// Samples considered by Pass@k [default: each run's setting]
    #[arg(long)]
    pass_k: Option<u32>,
}

#[derive(Args)]
struct ReportArgs {
    /// Metrics bundle directory (holding report.json)
    bundle: PathBuf,
    /// Write the summary here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Greedy,
    Random,
    Reasoning,
    ReasoningNoHistory,
}

impl From<StrategyArg> for StrategyKind {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Greedy => StrategyKind::Greedy,
            StrategyArg::Random => StrategyKind::Random,
            StrategyArg::Reasoning => StrategyKind::Reasoning,
            StrategyArg::ReasoningNoHistory => StrategyKind::ReasoningNoHistory,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Scripted,
    Stochastic,
    Http,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Scripted => BackendKind::Scripted,
            BackendArg::Stochastic => BackendKind::Stochastic,
            BackendArg::Http => BackendKind::Http,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MapEmpty {
    Exclude,
    Zero,
}

impl From<MapEmpty> for EmptyListPolicy {
    fn from(m: MapEmpty) -> Self {
        match m {
            MapEmpty::Exclude => EmptyListPolicy::Exclude,
            MapEmpty::Zero => EmptyListPolicy::CountAsZero,
        }
    }
}

type CliResult = Result<(), String>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Run(a) => run(a),
        Command::Metrics(a) => metrics(a),
        Command::Analyze(a) => analyze(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn ingest(a: IngestArgs) -> CliResult {
    let cfg = a.config.as_deref().map(EngineConfig::load).transpose().map_err(|e| e.to_string())?;
    let root = match (&a.corpus, &cfg) {
        (Some(p), _) => p.clone(),
        (None, Some(c)) => c.corpus.clone(),
        (None, None) => return Err("give a corpus path or --config".into()),
    };
    let languages = cfg.map(|c| c.run.languages).unwrap_or_default();
    let (corpus, manifest) = load_corpus(&root).map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serializes"));
    println!("fingerprint: {}", corpus.fingerprint());
    let diags = validate_corpus(&corpus, &languages);
    for d in &diags {
        eprintln!("{}: {}", d.subject, d.message);
    }
    if diags.is_empty() {
        Ok(())
    } else {
        Err(format!("{} problem(s) found in {}", diags.len(), root.display()))
    }
}

fn run(a: RunArgs) -> CliResult {
    let mut cfg = EngineConfig::load(&a.config).map_err(|e| e.to_string())?;
    if let Some(s) = a.strategy {
        cfg.run.strategy = s.into();
    }
    if let Some(s) = a.seed {
        cfg.run.seed = s;
    }
    if let Some(b) = a.backend {
        cfg.backend.kind = b.into();
    }
    if a.no_translation {
        cfg.run.translation_enabled = false;
    }
    if a.no_history {
        cfg.run.history_enabled = false;
    }
    if let Some(p) = a.parallel {
        cfg.run.parallelism = p;
    }
    let summary = execute_run(&cfg, &a.out).map_err(|e| e.to_string())?;
    println!("{}", summary.message);
    println!(
        "fixed {}/{} after iteration {}; run directory {}",
        summary.bugs_fixed,
        summary.bugs_total,
        summary.last_iteration,
        a.out.display()
    );
    Ok(())
}

fn ranking_ks(k: &[usize], iterations: u32) -> Vec<usize> {
    if k.is_empty() {
        (1..iterations as usize).collect()
    } else {
        k.to_vec()
    }
}

fn compute(run_dir: &Path, k: &[usize], pass_k: Option<u32>, policy: EmptyListPolicy) -> Result<MetricsReport, String> {
    let run = load_run(run_dir).map_err(|e| e.to_string())?;
    let ks = ranking_ks(k, run.state.max_iterations);
    let last = run.state.max_iterations.saturating_sub(1) as usize;
    if let Some(bad) = ks.iter().find(|k| **k == 0 || **k > last) {
        return Err(format!("--k {bad} outside 1..={last} for {}", run_dir.display()));
    }
    run.metrics(pass_k, &ks, policy).map_err(|e| e.to_string())
}

fn metrics(a: MetricsArgs) -> CliResult {
    let report = compute(&a.run, &a.k, a.pass_k, a.map_empty.into())?;
    let out = a.out.unwrap_or_else(|| default_metrics_dir(&a.run));
    report.write_bundle(&out).map_err(|e| e.to_string())?;
    println!("metrics written to {}", out.display());
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> CliResult {
    let mut runs = Vec::new();
    for (i, dir) in a.runs.iter().enumerate() {
        let report = compute(dir, &a.k, a.pass_k, EmptyListPolicy::Exclude)?;
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let label = if runs.iter().any(|(l, _): &(String, MetricsReport)| *l == name) {
            format!("{name}#{i}")
        } else {
            name
        };
        runs.push((label, report));
    }
    let cmp = ComparisonReport::compute(&runs).map_err(|e| e.to_string())?;
    cmp.write(&a.out).map_err(|e| e.to_string())?;
    for t in &cmp.tests {
        println!(
            "{} vs {}: U={:.1} p={:.4} delta={:.4} ({})",
            t.x, t.y, t.u, t.p_value, t.cliffs_delta, t.magnitude
        );
    }
    println!("comparison written to {}", a.out.display());
    Ok(())
}

fn render(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Campaign report ({})\n", r.strategy);
    let _ = writeln!(s, "Bugs fixed: {}/{}\n", r.paths.fixed_bugs, r.paths.total_bugs);
    let _ = writeln!(s, "## Pass@{} per iteration\n", r.k);
    let iterations: Vec<u32> = (0..r.iterations).collect();
    let head: Vec<String> = iterations.iter().map(|i| i.to_string()).collect();
    let _ = writeln!(s, "| language | {} |", head.join(" | "));
    let _ = writeln!(s, "|---|{}", "---|".repeat(iterations.len()));
    let langs: LanguageSet = LanguageSet::default();
    for lang in langs.iter() {
        let row: Vec<String> = r
            .pass_at_k
            .iter()
            .filter(|p| p.language == lang)
            .map(|p| format!("{:.4}", p.pass_at_k))
            .collect();
        if !row.is_empty() {
            let _ = writeln!(s, "| {} | {} |", lang.name(), row.join(" | "));
        }
    }
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
    let _ = writeln!(s, "\n## Translation paths\n");
    let _ = writeln!(s, "Mean length over fixed bugs: {}", fmt(r.paths.mean_all_fixed));
    let _ = writeln!(
        s,
        "Mean length over bugs fixed through translation: {}",
        fmt(r.paths.mean_translation_fixed)
    );
    let _ = writeln!(s, "\n## Ranking (all languages)\n");
    let _ = writeln!(s, "| k | precision | recall | f1 | map | ndcg |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for row in r.ranking.iter().filter(|x| x.scope == "ALL") {
        let _ = writeln!(
            s,
            "| {} | {:.4} | {} | {} | {} | {:.4} |",
            row.k,
            row.precision,
            fmt(row.recall),
            fmt(row.f1),
            fmt(row.map),
            row.ndcg
        );
    }
    let _ = writeln!(s, "\n## Back-translation\n");
    let _ = writeln!(s, "| language | preserved | lost | samples before | samples after |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for (l, t) in &r.back_translation {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} |",
            l.name(),
            t.bugs_preserved,
            t.bugs_lost,
            t.samples_before,
            t.samples_after
        );
    }
    s
}

fn report(a: ReportArgs) -> CliResult {
    let r = MetricsReport::load(&a.bundle).map_err(|e| e.to_string())?;
    let text = render(&r);
    match a.out {
        Some(p) => std::fs::write(&p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

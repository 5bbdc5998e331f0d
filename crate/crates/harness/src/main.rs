use std::io::{BufRead, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use xdialect_core::gapscope::{RuleJudge, DEFAULT_JUDGE_TEMPLATE};
use xdialect_core::{BenchmarkFormat, Dialect, EvalRecord};
use xdialect_harness::agreement::agreement_report;
use xdialect_harness::client::{ChatClient, HttpJudge, RetryPolicy};
use xdialect_harness::run::{read_jsonl, RunDir, VERDICTS};
use xdialect_harness::transpile::{Coverage, TranspileOutcome, Transpiler};
use xdialect_harness::{BenchmarkSource, DialectGuidelines, HarnessConfig, Workspace};

#[derive(Parser)]
#[command(name = "xdialect", version, about = "Evaluate text-to-SQL models across SQL dialects")]
struct Cli {
    /// Run id; the run lives in <runs_dir>/<run>.
    #[arg(long, global = true, env = "XDIALECT_RUN")]
    run: Option<String>,
    /// JSON configuration file.
    #[arg(long, global = true, env = "XDIALECT_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides `runs_dir` from the configuration.
    #[arg(long, global = true)]
    runs_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Copy the benchmark databases onto a target engine and verify them.
    /// Creates the run on first use.
    Migrate {
        #[arg(long)]
        dialect: Dialect,
        /// Benchmark JSON file (needed when the run does not exist yet).
        #[arg(long)]
        benchmark: Option<PathBuf>,
        /// Directory holding the source SQLite databases.
        #[arg(long)]
        db_root: Option<PathBuf>,
        #[arg(long, default_value = "spider")]
        format: BenchmarkFormat,
        /// Benchmark name used in target namespaces.
        #[arg(long)]
        name: Option<String>,
    },
    /// Ask one model for a query per example.
    Generate {
        #[arg(long)]
        dialect: Dialect,
        #[arg(long)]
        model: String,
        /// Guideline file replacing the built-in rules for the dialect.
        #[arg(long)]
        guidelines: Option<PathBuf>,
    },
    /// Execute predictions and record verdicts.
    Evaluate {
        #[arg(long)]
        dialect: Dialect,
    },
    /// Classify predictions that are right on the source but wrong on a target.
    Classify {
        /// `rules` for the offline classifier, or an endpoint model id.
        #[arg(long)]
        judge: String,
        /// Target dialects to classify; defaults to all evaluated ones.
        #[arg(long)]
        dialect: Vec<Dialect>,
        /// Judge prompt template with a {prediction_json} placeholder.
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Write report.md and report.csv.
    Report,
    /// Agreement between the verdicts of two runs, per dialect.
    Agreement {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Compare every dialect of `b` against this dialect of `a`
        /// (e.g. sqlite, for the source-as-proxy question).
        #[arg(long)]
        a_dialect: Option<Dialect>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Rewrite queries with an external transpiler plugin, one per line.
    Transpile {
        #[arg(long)]
        from: Dialect,
        #[arg(long)]
        to: Dialect,
        /// Command invoked as `<plugin> --from <d> --to <d>`.
        #[arg(long)]
        plugin: String,
        /// File with one query per line; stdin when absent.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<HarnessConfig> {
    let mut cfg = match &cli.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    };
    if let Some(dir) = &cli.runs_dir {
        cfg.runs_dir = dir.clone();
    }
    Ok(cfg)
}

fn run_id(cli: &Cli) -> Result<&str> {
    cli.run.as_deref().context("--run <id> is required for this command")
}

fn read_template(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(DEFAULT_JUDGE_TEMPLATE.to_string()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Migrate { dialect, benchmark, db_root, format, name } => {
            let source = match (benchmark, db_root) {
                (Some(b), Some(d)) => {
                    Some(BenchmarkSource { path: b.clone(), format: *format, db_root: d.clone(), name: name.clone() })
                }
                (None, None) => None,
                _ => bail!("--benchmark and --db-root go together"),
            };
            let source_dialect = Dialect::Sqlite;
            let ws = Workspace::open_or_create(cfg, run_id(&cli)?, source.as_ref(), vec![source_dialect, dialect.clone()])?;
            let target = ws.connect_target(dialect)?;
            let summary = ws.migrate(dialect, target.as_ref())?;
            for r in summary.reports.values() {
                let status = if r.verified { "verified".to_string() } else { format!("NOT verified: {}", r.mismatches().join("; ")) };
                println!("{} -> {} ({}): {} tables, {:.0} ms, {status}", r.db_id, dialect, r.namespace, r.tables.len(), r.elapsed_ms);
            }
            for (db, err) in &summary.failures {
                println!("{db} -> {dialect}: FAILED: {err}");
            }
            if !summary.all_verified() {
                bail!("migration to {dialect} is incomplete; see incomplete.json in the run directory");
            }
        }
        Command::Generate { dialect, model, guidelines } => {
            let ws = Workspace::open(cfg, run_id(&cli)?)?;
            let guidelines = match guidelines {
                Some(p) => DialectGuidelines::parse(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
                None => DialectGuidelines::builtin(dialect)?,
            };
            let endpoint = ws.config.endpoint(model)?;
            let retry = RetryPolicy { backoff: std::time::Duration::from_millis(ws.config.retry_backoff_ms), ..RetryPolicy::default() };
            let client = ChatClient::new(endpoint, retry)?;
            let s = ws.generate(dialect, &client, &guidelines)?;
            println!("{model} on {dialect}: {} new, {} already done, {} failed", s.written, s.skipped, s.failures.len());
            if let Some(reason) = &s.aborted {
                bail!("generation stopped: {reason}");
            }
            if !s.is_complete() {
                bail!("{} examples have no prediction yet; rerun to retry them", s.pending().len());
            }
        }
        Command::Evaluate { dialect } => {
            let ws = Workspace::open(cfg, run_id(&cli)?)?;
            let target = if dialect == ws.source_dialect() { None } else { Some(ws.connect_target(dialect)?) };
            let s = ws.evaluate(dialect, target.as_deref())?;
            let correct = s.records.iter().filter(|r| r.verdict.is_correct()).count();
            println!("{dialect}: {} new verdicts ({correct} correct), {} already done", s.records.len(), s.skipped);
            if !s.errors.is_empty() {
                for e in &s.errors {
                    eprintln!("  {} #{}: {}", e.model_id, e.example_id, e.message);
                }
                bail!("{} predictions produced no verdict", s.errors.len());
            }
        }
        Command::Classify { judge, dialect, template } => {
            let ws = Workspace::open(cfg, run_id(&cli)?)?;
            let template = read_template(template.as_deref())?;
            let dialects: Vec<Dialect> = if dialect.is_empty() {
                let mut ds: Vec<Dialect> = ws.verdicts()?.into_iter().map(|r| r.dialect).filter(|d| d != ws.source_dialect()).collect();
                ds.sort_by_key(|d| (d.report_rank(), d.id().to_string()));
                ds.dedup();
                ds
            } else {
                dialect.clone()
            };
            let http;
            let judge: &dyn xdialect_core::gapscope::Judge = if judge == "rules" {
                &RuleJudge
            } else {
                let endpoint = match &ws.config.judge {
                    Some(j) if j.model_id == *judge => j,
                    _ => ws.config.endpoint(judge)?,
                };
                http = HttpJudge::new(endpoint)?;
                &http
            };
            for d in &dialects {
                let new = ws.classify(d, judge, &template)?;
                println!("{d}: {} gaps classified", new.len());
            }
        }
        Command::Report => {
            let ws = Workspace::open(cfg, run_id(&cli)?)?;
            let (md, csv) = ws.report()?;
            println!("{}\n{}", md.display(), csv.display());
        }
        Command::Agreement { a, b, a_dialect, csv } => {
            let load = |id: &str| -> Result<Vec<EvalRecord>> {
                let run = RunDir::new(&cfg.runs_dir, id)?;
                run.manifest()?;
                Ok(read_jsonl(&run.path(VERDICTS))?)
            };
            let report = agreement_report(&load(a)?, &load(b)?, a_dialect.as_ref())?;
            print!("{}", report.to_markdown());
            if let Some(path) = csv {
                std::fs::write(path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Transpile { from, to, plugin, input } => {
            let t = Transpiler::parse(plugin)?;
            let mut text = String::new();
            match input {
                Some(p) => text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                None => {
                    std::io::stdin().lock().read_to_string(&mut text)?;
                }
            }
            let mut coverage = Coverage::default();
            for line in text.as_bytes().lines() {
                let sql = line?;
                if sql.trim().is_empty() {
                    continue;
                }
                let out = t.transpile(&sql, from, to)?;
                coverage.record(&out);
                match out {
                    TranspileOutcome::Ok(s) => println!("{}", s.replace('\n', " ")),
                    TranspileOutcome::Failed(m) => {
                        println!();
                        eprintln!("failed: {sql}: {m}");
                    }
                }
            }
            eprintln!(
                "coverage: {}/{} ({:.1}%)",
                coverage.succeeded,
                coverage.attempted,
                100.0 * coverage.fraction().unwrap_or(0.0)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

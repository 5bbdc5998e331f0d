//! A run directory bound to its configuration and benchmark: the stages a
//! CLI command drives.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use sha2::{Digest, Sha256};
use xdialect_core::benchmark::parse_benchmark;
use xdialect_core::gapscope::{
    classify_gap_errors, extract_gap_errors, ClassifiedGap, ClassifyOptions, GapContext, GapError, GapKey, Judge,
};
use xdialect_core::{BenchmarkFormat, BenchmarkSpec, Dialect, EvalRecord, Prediction, RunManifest};
use xdialect_engines::migration::{
    migrate_database, namespace_for, render_target_ddl, DdlMode, MigrationConfig, MigrationReport, MigrationSummary,
    SourceDb, TypeMappingTable,
};
use xdialect_engines::{Engine, EngineRegistry, PoolOptions};

use crate::client::Completer;
use crate::config::HarnessConfig;
use crate::error::{HarnessError, Result};
use crate::evaluate::{run_evaluation, EvalErrorEntry, EvalPlan, EvalSummary};
use crate::generate::{generate_predictions, GenerateRequest, GenerateSummary};
use crate::prompt::DialectGuidelines;
use crate::report::{render_report, ReportInput};
use crate::run::{self, read_jsonl, IncompleteStage, JsonlLog, RunDir};

/// What `create` needs to know about the benchmark.
#[derive(Debug, Clone)]
pub struct BenchmarkSource {
    pub path: PathBuf,
    pub format: BenchmarkFormat,
    /// Directory holding `<db_id>.sqlite` or `<db_id>/<db_id>.sqlite`.
    pub db_root: PathBuf,
    /// Overrides the format's default name (used in target namespaces).
    pub name: Option<String>,
}

pub struct Workspace {
    pub config: HarnessConfig,
    pub run: RunDir,
    pub manifest: RunManifest,
    pub benchmark: BenchmarkSpec,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load_benchmark(path: &Path, format: BenchmarkFormat, db_root: &Path, name: &str) -> Result<(BenchmarkSpec, String)> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::file(path, e))?;
    let mut spec = parse_benchmark(&bytes, format).map_err(|e| HarnessError::file(path, e))?.with_name(name);
    let issues = xdialect_core::benchmark::validate_benchmark(&spec, db_root);
    if !issues.is_empty() {
        let list: Vec<String> = issues.iter().map(ToString::to_string).collect();
        return Err(HarnessError::file(path, format!("invalid benchmark: {}", list.join("; "))));
    }
    spec.attach_registry(db_root, "sqlite");
    Ok((spec, sha256_hex(&bytes)))
}

impl Workspace {
    /// Start a new run: validate the benchmark and write the manifest.
    pub fn create(config: HarnessConfig, run_id: &str, source: &BenchmarkSource, dialects: Vec<Dialect>) -> Result<Self> {
        config.validate()?;
        let run = RunDir::new(&config.runs_dir, run_id)?;
        let name = source.name.clone().unwrap_or_else(|| source.format.default_name().to_string());
        let (benchmark, sha) = load_benchmark(&source.path, source.format, &source.db_root, &name)?;
        let manifest = RunManifest {
            run_id: run_id.to_string(),
            benchmark_name: name,
            benchmark_sha256: sha,
            benchmark_path: absolute(&source.path).display().to_string(),
            benchmark_format: source.format,
            db_root: absolute(&source.db_root).display().to_string(),
            dialects,
            endpoints: config.endpoints.iter().map(|e| e.summary()).collect(),
            rtol: config.rtol,
            atol: config.atol,
            timeout_ms: config.timeout_ms,
            parallelism: config.parallelism,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        run.create(&manifest)?;
        Ok(Workspace { config, run, manifest, benchmark })
    }

    /// Reopen a run. The benchmark file must still hash to the recorded
    /// digest, and the manifest's tolerances win over the config's.
    pub fn open(mut config: HarnessConfig, run_id: &str) -> Result<Self> {
        let run = RunDir::new(&config.runs_dir, run_id)?;
        let manifest = run.manifest()?;
        let path = PathBuf::from(&manifest.benchmark_path);
        let (benchmark, sha) =
            load_benchmark(&path, manifest.benchmark_format, Path::new(&manifest.db_root), &manifest.benchmark_name)?;
        if sha != manifest.benchmark_sha256 {
            return Err(HarnessError::file(
                &path,
                format!("benchmark changed since run '{run_id}' was created (sha256 {sha}, recorded {})", manifest.benchmark_sha256),
            ));
        }
        config.rtol = manifest.rtol;
        config.atol = manifest.atol;
        config.timeout_ms = manifest.timeout_ms;
        Ok(Workspace { config, run, manifest, benchmark })
    }

    /// `open` if the run exists, otherwise `create` from `source`.
    pub fn open_or_create(
        config: HarnessConfig,
        run_id: &str,
        source: Option<&BenchmarkSource>,
        dialects: Vec<Dialect>,
    ) -> Result<Self> {
        let run = RunDir::new(&config.runs_dir, run_id)?;
        if run.exists() {
            return Self::open(config, run_id);
        }
        let source = source.ok_or_else(|| {
            HarnessError::Config(format!("run '{run_id}' does not exist; pass --benchmark and --db-root to create it"))
        })?;
        Self::create(config, run_id, source, dialects)
    }

    pub fn source_dialect(&self) -> &Dialect {
        &self.benchmark.source_dialect
    }

    fn pool(&self) -> PoolOptions {
        PoolOptions::with_size(self.config.pool_size)
    }

    /// Connect to a target. Quirk lives inside the run directory unless a
    /// DSN is set; every other dialect needs its DSN variable.
    pub fn connect_target(&self, dialect: &Dialect) -> Result<Arc<dyn Engine>> {
        let var = self.config.dsn_env_var(dialect);
        let dsn = match std::env::var(&var) {
            Ok(v) if !v.is_empty() => v,
            _ if *dialect == Dialect::Quirk => format!("quirk:{}", self.run.quirk_dir().display()),
            _ => return Err(HarnessError::Config(format!("{var} is not set; it must hold the {dialect} DSN"))),
        };
        Ok(EngineRegistry::with_builtin().connect(dialect, &dsn, self.pool())?)
    }

    fn migration_config(&self) -> MigrationConfig {
        MigrationConfig {
            batch_size: self.config.batch_size,
            sample_limit: self.config.sample_limit,
            mapping: TypeMappingTable::builtin(),
            workers: self.config.migration_workers,
        }
    }

    /// Copy every benchmark database onto `target` and record a report per
    /// database. Databases that fail or do not verify are left in the
    /// incomplete marker; the others are usable.
    pub fn migrate(&self, dialect: &Dialect, target: &dyn Engine) -> Result<MigrationSummary> {
        if dialect == self.source_dialect() {
            return Err(HarnessError::Config(format!("{dialect} is the source dialect; nothing to migrate")));
        }
        let cfg = self.migration_config();
        let mut summary = MigrationSummary::default();
        for (db_id, path) in &self.benchmark.db_registry {
            let ns = namespace_for(&self.benchmark.name, db_id);
            match migrate_database(db_id, path, target, &ns, &cfg) {
                Ok(report) => {
                    self.run.write_migration(&report)?;
                    summary.reports.insert(db_id.clone(), report);
                }
                Err(e) => {
                    tracing::error!(db_id, %dialect, error = %e, "migration failed");
                    summary.failures.insert(db_id.clone(), e.to_string());
                }
            }
        }
        let mut pending: Vec<String> = summary.failures.keys().cloned().collect();
        pending.extend(summary.reports.values().filter(|r| !r.verified).map(|r| r.db_id.clone()));
        pending.sort();
        let stage = format!("migrate:{}", dialect.id());
        let state = (!pending.is_empty()).then(|| IncompleteStage {
            message: format!("{} of {} databases failed or did not verify", pending.len(), self.benchmark.db_registry.len()),
            pending,
        });
        self.run.set_incomplete(&stage, state)?;
        Ok(summary)
    }

    /// Recorded migrations onto `dialect`, by db_id.
    pub fn migrations(&self, dialect: &Dialect) -> Result<BTreeMap<String, MigrationReport>> {
        let mut out = BTreeMap::new();
        for db_id in self.benchmark.db_ids() {
            if let Some(r) = self.run.read_migration(dialect, db_id)? {
                out.insert(db_id.to_string(), r);
            }
        }
        Ok(out)
    }

    /// Schema text shown to models, by db_id: the original DDL for the
    /// source, the rendered target DDL otherwise.
    pub fn prompt_ddl(&self, dialect: &Dialect) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        if dialect == self.source_dialect() {
            for (db_id, path) in &self.benchmark.db_registry {
                out.insert(db_id.clone(), SourceDb::open(path)?.original_ddl()?);
            }
            return Ok(out);
        }
        let migrations = self.migrations(dialect)?;
        let mapping = TypeMappingTable::builtin();
        for db_id in self.benchmark.db_ids() {
            let report = migrations
                .get(db_id)
                .ok_or_else(|| HarnessError::Unmigrated { db_id: db_id.to_string(), dialect: dialect.clone() })?;
            out.insert(db_id.to_string(), render_target_ddl(&report.schema, dialect, &mapping, DdlMode::Prompt)?);
        }
        Ok(out)
    }

    pub fn predictions(&self) -> Result<Vec<Prediction>> {
        read_jsonl(&self.run.path(run::PREDICTIONS))
    }

    pub fn verdicts(&self) -> Result<Vec<EvalRecord>> {
        read_jsonl(&self.run.path(run::VERDICTS))
    }

    pub fn classifications(&self) -> Result<Vec<ClassifiedGap>> {
        read_jsonl(&self.run.path(run::GAP_CLASSIFICATIONS))
    }

    /// Ask one model for a prediction per example on `dialect`, skipping
    /// examples it already answered in this run.
    pub fn generate(
        &self,
        dialect: &Dialect,
        completer: &dyn Completer,
        guidelines: &DialectGuidelines,
    ) -> Result<GenerateSummary> {
        let ddl = self.prompt_ddl(dialect)?;
        let model = completer.model_id();
        let done: BTreeSet<i64> = self
            .predictions()?
            .into_iter()
            .filter(|p| p.model_id == model && p.dialect == *dialect)
            .map(|p| p.example_id)
            .collect();
        let log = JsonlLog::open(&self.run.path(run::PREDICTIONS))?;
        let req = GenerateRequest {
            benchmark: &self.benchmark,
            dialect,
            ddl: &ddl,
            guidelines,
            parallelism: self.config.parallelism,
        };
        let summary = generate_predictions(&req, completer, &log, &done)?;
        let stage = format!("generate:{model}:{}", dialect.id());
        let state = (!summary.is_complete()).then(|| IncompleteStage {
            message: summary
                .aborted
                .clone()
                .or_else(|| summary.failures.values().next().cloned())
                .unwrap_or_else(|| "unfinished".into()),
            pending: summary.pending().iter().map(ToString::to_string).collect(),
        });
        self.run.set_incomplete(&stage, state)?;
        Ok(summary)
    }

    /// Execute every prediction for `dialect` that has no verdict yet.
    /// `target` is required for every dialect but the source.
    pub fn evaluate(&self, dialect: &Dialect, target: Option<&dyn Engine>) -> Result<EvalSummary> {
        let migrations = if dialect == self.source_dialect() { BTreeMap::new() } else { self.migrations(dialect)? };
        let done: BTreeSet<(String, i64)> = self
            .verdicts()?
            .into_iter()
            .filter(|r| r.dialect == *dialect)
            .map(|r| (r.model_id, r.example_id))
            .collect();
        let verdicts = JsonlLog::open(&self.run.path(run::VERDICTS))?;
        let errors: JsonlLog<EvalErrorEntry> = JsonlLog::open(&self.run.path(run::EVAL_ERRORS))?;
        let comparator = self.config.comparator();
        let plan = EvalPlan {
            run_id: self.run.id(),
            benchmark: &self.benchmark,
            dialect,
            target,
            migrations: &migrations,
            comparator: &comparator,
            timeout_ms: self.config.timeout_ms,
            parallelism: self.config.parallelism,
            pool_size: self.config.pool_size,
        };
        let summary = run_evaluation(&plan, &self.predictions()?, &done, &verdicts, &errors)?;
        let stage = format!("evaluate:{}", dialect.id());
        let state = (!summary.errors.is_empty()).then(|| IncompleteStage {
            message: format!("{} predictions produced no verdict; see {}", summary.errors.len(), run::EVAL_ERRORS),
            pending: summary.errors.iter().map(|e| format!("{}:{}", e.model_id, e.example_id)).collect(),
        });
        self.run.set_incomplete(&stage, state)?;
        Ok(summary)
    }

    /// Predictions correct on the source dialect but wrong on `dialect`.
    pub fn gap_errors(&self, dialect: &Dialect) -> Result<Vec<GapError>> {
        let records = self.verdicts()?;
        let (source, target): (Vec<EvalRecord>, Vec<EvalRecord>) =
            records.into_iter().filter(|r| r.dialect == *dialect || r.dialect == *self.source_dialect()).partition(|r| r.dialect == *self.source_dialect());
        let mut ctx = GapContext {
            examples: self.benchmark.examples.iter().map(|e| (e.id, e.clone())).collect(),
            schemas: BTreeMap::new(),
        };
        // schema text is best effort; a gap is still worth judging without it
        if let Ok(ddl) = self.prompt_ddl(dialect) {
            ctx.schemas = ddl.into_iter().map(|(db, text)| ((db, dialect.clone()), text)).collect();
        }
        Ok(extract_gap_errors(&source, &target, &ctx))
    }

    /// Classify the gaps on `dialect` that have no classification yet and
    /// append the results. Returns the newly classified gaps.
    pub fn classify(&self, dialect: &Dialect, judge: &dyn Judge, template: &str) -> Result<Vec<ClassifiedGap>> {
        let done: BTreeSet<GapKey> = self.classifications()?.into_iter().map(|c| c.key).collect();
        let todo: Vec<GapError> = self.gap_errors(dialect)?.into_iter().filter(|g| !done.contains(&g.key())).collect();
        let opts = ClassifyOptions {
            retries: self.config.judge_retries,
            max_in_flight: self.config.judge_in_flight,
            backoff: Duration::from_millis(self.config.retry_backoff_ms),
        };
        let log = JsonlLog::open(&self.run.path(run::GAP_CLASSIFICATIONS))?;
        let stage = format!("classify:{}", dialect.id());
        match classify_gap_errors(&todo, judge, template, &opts) {
            Ok(classified) => {
                for c in &classified {
                    log.append(c)?;
                }
                self.run.set_incomplete(&stage, None)?;
                Ok(classified)
            }
            Err(e) => {
                for c in &e.classified {
                    log.append(c)?;
                }
                self.run.set_incomplete(
                    &stage,
                    Some(IncompleteStage {
                        message: e.message.clone(),
                        pending: e.unclassified.iter().map(ToString::to_string).collect(),
                    }),
                )?;
                Err(HarnessError::Config(e.to_string()))
            }
        }
    }

    /// Write `report.md` and `report.csv` from everything recorded so far.
    pub fn report(&self) -> Result<(PathBuf, PathBuf)> {
        let verdicts = self.verdicts()?;
        let classifications = self.classifications()?;
        let incomplete = self.run.incomplete()?;
        let input = ReportInput {
            manifest: &self.manifest,
            records: &verdicts,
            classifications: &classifications,
            incomplete: &incomplete,
        };
        let (md, csv) = render_report(&input)?;
        let md_path = self.run.path(run::REPORT_MD);
        let csv_path = self.run.path(run::REPORT_CSV);
        run::write_atomic(&md_path, md.as_bytes())?;
        run::write_atomic(&csv_path, csv.as_bytes())?;
        Ok((md_path, csv_path))
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

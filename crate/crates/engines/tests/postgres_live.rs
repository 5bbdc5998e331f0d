//! Tests against a real PostgreSQL server. They need POLY_POSTGRES_DSN
//! pointing at a database the user may create schemas in; without it each
//! test prints SKIP and returns.

use std::time::{Duration, Instant};

use xdialect_core::{Cell, ComparatorConfig, Decimal, Dialect, ErrorKind, ExecutionOutcome, Prediction};
use xdialect_engines::adapters::postgres::PostgresEngine;
use xdialect_engines::adapters::{SqliteEngine, TypeHints, TIMEOUT_GRACE};
use xdialect_engines::evaluate::{evaluate_example, EvalContext};
use xdialect_engines::fixtures::{write_fk_dirty_db, write_iso_dates_db, write_mini_benchmark, MINI_CASES, MINI_DB, MINI_WRONG};
use xdialect_engines::migration::{migrate_database, MigrationConfig, MigrationReport};
use xdialect_engines::{Engine, EngineError, PoolOptions};

fn dsn(test: &str) -> Option<String> {
    match std::env::var("POLY_POSTGRES_DSN") {
        Ok(d) if !d.trim().is_empty() => Some(d),
        _ => {
            println!("SKIP {test}: POLY_POSTGRES_DSN is not set");
            None
        }
    }
}

fn engine(dsn: &str) -> PostgresEngine {
    PostgresEngine::connect(dsn, PoolOptions::with_size(4)).expect("server reachable")
}

fn cell(out: &ExecutionOutcome) -> Cell {
    let rs = out.result().unwrap_or_else(|| panic!("{out:?}"));
    rs.rows()[0][0].clone()
}

fn assert_clean(report: &MigrationReport) {
    assert!(report.verified, "{:?}", report.mismatches());
    assert_eq!(report.total_source_rows(), report.total_target_rows());
}

#[test]
fn dirty_and_temporal_databases_migrate_verified() {
    let Some(dsn) = dsn("dirty_and_temporal_databases_migrate_verified") else { return };
    let pg = engine(&dsn);
    let dir = tempfile::tempdir().unwrap();
    let dirty = dir.path().join("dirty.sqlite");
    let dates = dir.path().join("dates.sqlite");
    write_fk_dirty_db(&dirty).unwrap();
    write_iso_dates_db(&dates).unwrap();
    let cfg = MigrationConfig { batch_size: 7, ..Default::default() };

    let report = migrate_database("dirty", &dirty, &pg, "it__dirty", &cfg).unwrap();
    assert_clean(&report);
    // dangling child rows arrive because the target declares no foreign keys
    let mut s = pg.session(Some("it__dirty")).unwrap();
    let out = s.execute("SELECT count(*) FROM child WHERE parent_id NOT IN (SELECT id FROM parent)", 5_000);
    assert_eq!(cell(&out), Cell::Int(6));
    // mixed-case source names are stored folded, so unquoted references resolve
    let out = s.execute("SELECT count(*) FROM MixedCase WHERE Value IS NOT NULL", 5_000);
    assert!(out.is_ok(), "{out:?}");
    assert!(!s.execute("SELECT count(*) FROM \"MixedCase\"", 5_000).is_ok());

    let report = migrate_database("dates", &dates, &pg, "it__dates", &cfg).unwrap();
    assert_clean(&report);
    assert_eq!(report.promoted, ["events.day", "events.at"]);
    let mut s = pg.session(Some("it__dates")).unwrap();
    let out = s.execute("SELECT pg_typeof(day)::text, pg_typeof(at)::text FROM events LIMIT 1", 5_000);
    let row = out.result().unwrap().rows()[0].clone();
    assert_eq!(row, vec![Cell::text("date"), Cell::text("timestamp without time zone")]);
}

#[test]
fn gold_queries_agree_with_their_postgres_equivalents() {
    let Some(dsn) = dsn("gold_queries_agree_with_their_postgres_equivalents") else { return };
    let pg = engine(&dsn);
    let dir = tempfile::tempdir().unwrap();
    let bench = write_mini_benchmark(dir.path()).unwrap();
    let report = migrate_database(MINI_DB, &bench.db_registry[MINI_DB], &pg, "it__mini", &MigrationConfig::default()).unwrap();
    assert_clean(&report);
    let source = SqliteEngine::open(&bench.db_registry[MINI_DB], PoolOptions::default())
        .unwrap()
        .with_hints(TypeHints::from_snapshot(&report.schema));
    let comparator = ComparatorConfig::default();
    let ctx = EvalContext {
        run_id: "it",
        source: &source,
        target: &pg,
        namespace: "it__mini",
        timeout_ms: 10_000,
        comparator: &comparator,
    };
    let predict = |id: i64, sql: &str| Prediction {
        example_id: id,
        model_id: "hand".into(),
        dialect: Dialect::Postgres,
        sql: sql.into(),
        raw_completion: sql.into(),
        latency_ms: 0.0,
        extraction_error: None,
    };

    for (case, example) in MINI_CASES.iter().zip(&bench.examples) {
        let rec = evaluate_example(example, &predict(case.id, case.postgres), &ctx).unwrap();
        assert!(rec.verdict.is_correct(), "case {}: {:?} {:?}", case.id, rec.verdict, rec.detail);
    }
    for (id, sql) in MINI_WRONG {
        let example = &bench.examples[id as usize];
        let rec = evaluate_example(example, &predict(id, sql), &ctx).unwrap();
        assert!(!rec.verdict.is_correct() && !rec.verdict.is_gold_failure(), "wrong query for case {id} was accepted");
    }
}

#[test]
fn numeric_and_temporal_values_decode_exactly() {
    let Some(dsn) = dsn("numeric_and_temporal_values_decode_exactly") else { return };
    let pg = engine(&dsn);
    let mut s = pg.session(None).unwrap();
    let cases: [(&str, Cell); 8] = [
        ("SELECT 1.50::numeric(10,2)", Cell::decimal("1.50").unwrap()),
        ("SELECT 0.000123::numeric", Cell::decimal("0.000123").unwrap()),
        ("SELECT -98765432109876543210.5::numeric", Cell::decimal("-98765432109876543210.5").unwrap()),
        ("SELECT 10000::numeric", Cell::decimal("10000").unwrap()),
        ("SELECT 2::int2 + 0", Cell::Int(2)),
        ("SELECT true", Cell::Bool(true)),
        ("SELECT DATE '2020-02-29'", Cell::Date(chrono::NaiveDate::from_ymd_opt(2020, 2, 29).unwrap())),
        ("SELECT NULL::text", Cell::Null),
    ];
    for (sql, want) in cases {
        assert_eq!(cell(&s.execute(sql, 5_000)), want, "{sql}");
    }
    let Cell::Decimal(d) = cell(&s.execute("SELECT 1.50::numeric(10,2)", 5_000)) else { panic!() };
    assert_eq!(d.scale(), 2);
    assert_ne!(d, "1.5".parse::<Decimal>().unwrap());
    assert_eq!(d.normalized_string(), "1.5");
    let Cell::Timestamp(t) = cell(&s.execute("SELECT TIMESTAMP '2021-01-05 10:30:00.123456'", 5_000)) else { panic!() };
    assert_eq!(t.to_rfc3339(), "2021-01-05T10:30:00.123456+00:00");
    assert!(matches!(cell(&s.execute("SELECT 'NaN'::float8", 5_000)), Cell::Float(f) if f.is_nan()));
}

#[test]
fn failures_are_outcomes_with_kinds() {
    let Some(dsn) = dsn("failures_are_outcomes_with_kinds") else { return };
    let pg = engine(&dsn);
    let mut s = pg.session(None).unwrap();

    let started = Instant::now();
    let out = s.execute("SELECT pg_sleep(5)", 300);
    assert_eq!(out, ExecutionOutcome::Timeout { limit_ms: 300 });
    assert!(started.elapsed() < Duration::from_millis(300) + TIMEOUT_GRACE * 2, "{:?}", started.elapsed());
    // the connection is still usable afterwards
    assert_eq!(cell(&s.execute("SELECT 1", 5_000)), Cell::Int(1));

    let kind = |out: ExecutionOutcome| match out {
        ExecutionOutcome::EngineError { kind, .. } => kind,
        other => panic!("{other:?}"),
    };
    assert_eq!(kind(s.execute("SELEC 1", 5_000)), ErrorKind::Syntax);
    assert_eq!(kind(s.execute("SELECT * FROM no_such_table_here", 5_000)), ErrorKind::Semantic);
    assert_eq!(kind(s.execute("SELECT no_such_fn(1)", 5_000)), ErrorKind::Syntax);
    // sessions are read-only
    assert!(!s.execute("CREATE TABLE should_not_exist(a int)", 5_000).is_ok());
}

#[test]
fn bad_credentials_are_not_echoed() {
    let Some(dsn) = dsn("bad_credentials_are_not_echoed") else { return };
    let mut url = url::Url::parse(&dsn).unwrap();
    url.set_username("no_such_role_x").unwrap();
    url.set_password(Some("s3cret-pw")).unwrap();
    let err = match PostgresEngine::connect(url.as_str(), PoolOptions::default()) {
        Err(e) => e,
        Ok(_) => panic!("unknown role was accepted"),
    };
    assert!(matches!(err, EngineError::Connection { .. }), "{err:?}");
    assert!(!err.to_string().contains("s3cret-pw"), "{err}");
}

#[test]
fn pool_bounds_concurrent_sessions() {
    let Some(dsn) = dsn("pool_bounds_concurrent_sessions") else { return };
    let opts = PoolOptions { size: 1, checkout_timeout: Duration::from_millis(300) };
    let pg = PostgresEngine::connect(&dsn, opts).unwrap();
    let held = pg.session(None).unwrap();
    assert!(pg.session(None).is_err());
    drop(held);
    assert!(pg.session(None).is_ok());
}

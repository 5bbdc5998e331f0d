use xdialect_core::{compare, ComparatorConfig};
use xdialect_engines::adapters::{QuirkEngine, SqliteEngine, TypeHints};
use xdialect_engines::fixtures::{shop_query_corpus, write_shop_db};
use xdialect_engines::migration::{migrate_database, MigrationConfig};
use xdialect_engines::{Engine, PoolOptions};

// Each corpus query run on the source and on the quirk copy must compare
// equal: every perturbation the quirk engine applies is representational.
#[test]
fn corpus_results_compare_equal_through_the_quirk_engine() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("shop.sqlite");
    write_shop_db(&src).unwrap();
    let quirk = QuirkEngine::open(&dir.path().join("q"), PoolOptions::default()).unwrap();
    let report = migrate_database("shop", &src, &quirk, "mini__shop", &MigrationConfig::default()).unwrap();
    assert!(report.verified);
    let source = SqliteEngine::open(&src, PoolOptions::default()).unwrap().with_hints(TypeHints::from_snapshot(&report.schema));

    let cfg = ComparatorConfig::default();
    let mut gold_session = source.session(None).unwrap();
    let mut quirk_session = quirk.session(Some("mini__shop")).unwrap();
    let corpus = shop_query_corpus();
    let mut failures = Vec::new();
    let mut rows_seen = 0;
    for q in &corpus {
        let gold = gold_session.execute(q, 5_000);
        let pred = quirk_session.execute(q, 5_000);
        let (Some(g), Some(p)) = (gold.result(), pred.result()) else {
            failures.push(format!("{q}: {gold:?} / {pred:?}"));
            continue;
        };
        rows_seen += g.row_count();
        if !compare(g, p, q, &cfg).is_equal() {
            failures.push(q.clone());
        }
    }
    assert!(failures.is_empty(), "{} of {} differ: {failures:#?}", failures.len(), corpus.len());
    assert!(rows_seen > 1000, "corpus should exercise real data, saw {rows_seen} rows");
}

use super::*;
use crate::record::{IncorrectReason, OutcomeSummary};
use proptest::prelude::*;
use std::collections::BTreeSet;
use std::sync::atomic::AtomicU32;

const TABLE3: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/published/table3_categories.csv"));

const SCHEMA: &str = r#"CREATE TABLE "employee" (
  "id" BIGINT,
  "name" TEXT,
  "salary" DOUBLE PRECISION,
  "dept_id" BIGINT,
  "hired" DATE,
  PRIMARY KEY ("id"),
  FOREIGN KEY ("dept_id") REFERENCES "dept" ("id")
);
CREATE TABLE "dept" (
  "id" BIGINT,
  "title" TEXT
);"#;

fn gap(pred: &str, gold: &str, err: Option<(&str, ErrorKind)>) -> GapError {
    GapError {
        example_id: 7,
        model_id: "m".into(),
        dialect: Dialect::Postgres,
        pred_sql: pred.into(),
        gold_sql: gold.into(),
        question: "q".into(),
        schema: SCHEMA.into(),
        pred_error: err.map(|e| e.0.to_string()),
        pred_error_kind: err.map(|e| e.1),
        results_equal: false,
    }
}

#[test]
fn schema_ddl_parsing() {
    let s = parse_schema_ddl(SCHEMA);
    assert_eq!(s.keys().collect::<Vec<_>>(), ["dept", "employee"]);
    assert_eq!(s["employee"].len(), 5);
    assert!(!s["employee"].contains("primary"));
    let ch = parse_schema_ddl("CREATE TABLE `db`.`t` (`a` Nullable(Int64), `b` Nullable(Decimal(10, 2))) ENGINE = MergeTree -- PRIMARY KEY (a)\n");
    assert_eq!(ch["t"], ["a", "b"].into_iter().map(String::from).collect());
}

#[test]
fn identifier_resolution() {
    let s = parse_schema_ddl(SCHEMA);
    assert_eq!(unknown_identifiers("SELECT salaryy FROM employee", &s), ["salaryy"]);
    assert!(unknown_identifiers(
        "WITH top AS (SELECT e.name, COUNT(*) AS n FROM employee e JOIN dept AS d ON e.dept_id = d.id GROUP BY e.name) \
         SELECT name, n total FROM top WHERE EXTRACT(YEAR FROM CAST('2020-01-01' AS DATE)) > 1 ORDER BY n DESC",
        &s
    )
    .is_empty());
    assert_eq!(unknown_identifiers("SELECT e.bonus FROM employee e", &s), ["bonus"]);
    assert_eq!(unknown_identifiers("SELECT * FROM employees", &s), ["employees"]);
    assert!(unknown_identifiers("SELECT \"name\" FROM \"Employee\"", &s).is_empty());
}

#[test]
fn rule_judge_vectors() {
    let j = RuleJudge;
    let g = gap("SELECT salaryy FROM employee", "SELECT salary FROM employee", Some(("column \"salaryy\" does not exist", ErrorKind::Semantic)));
    assert_eq!(j.classify(&g).category, ErrorCategory::SchemaLinkingError);
    let g = gap(
        "SELECT strftime('%Y', hired) FROM employee",
        "SELECT strftime('%Y', hired) FROM employee",
        Some(("function strftime(unknown, date) does not exist", ErrorKind::Syntax)),
    );
    assert_eq!(j.classify(&g).category, ErrorCategory::DialectError);
    let g = gap("SELECT name FROM employee WHERE salary > 100", "SELECT name FROM employee WHERE salary >= 100", None);
    assert_eq!(j.classify(&g).category, ErrorCategory::FilteringError);
    let g = gap("SELECT dept_id, SUM(salary) FROM employee GROUP BY dept_id", "SELECT dept_id, AVG(salary) FROM employee GROUP BY dept_id", None);
    assert_eq!(j.classify(&g).category, ErrorCategory::AggregationError);
    let g = gap(
        "SELECT name, COUNT(*) FROM employee",
        "SELECT name, COUNT(*) FROM employee GROUP BY name",
        Some(("column \"employee.name\" must appear in the GROUP BY clause or be used in an aggregate function", ErrorKind::Semantic)),
    );
    assert_eq!(j.classify(&g).category, ErrorCategory::AggregationError);
}

#[test]
fn rule_judge_output_parses_back() {
    let g = gap("SELECT name FROM employee", "SELECT title FROM dept", None);
    let reply = RuleJudge.judge(&g, "").unwrap();
    let c = parse_judge_output(&reply).unwrap().unwrap();
    assert_eq!(c.question_id, 7);
}

#[test]
fn prompt_rendering() {
    let g = gap("SELECT 1", "SELECT 2", None);
    let p = build_judge_prompt(&g, DEFAULT_JUDGE_TEMPLATE).unwrap();
    assert!(p.contains("DECISION PROCEDURE (STRICT ORDER)"));
    assert!(p.contains("\"pred_error\": null"));
    assert!(p.contains("\"gen_type\": \"postgres\""));
    assert!(p.contains("\"results_equal\": false"));
    // doubled braces in the protocol become single braces
    assert!(p.contains("{\n    \"question_id\": <int>,"));
    assert!(!p.contains("{prediction_json}"));
    let g = gap("SELECT 1", "SELECT 2", Some(("boom", ErrorKind::Other)));
    assert!(build_judge_prompt(&g, DEFAULT_JUDGE_TEMPLATE).unwrap().contains("\"pred_error\": \"boom\""));
    assert_eq!(build_judge_prompt(&g, "no placeholder"), Err(GapscopeError::MissingPlaceholder));
    assert_eq!(build_judge_prompt(&g, "a {x} {prediction_json}").unwrap().lines().next().unwrap(), "a {x} {");
}

#[test]
fn judge_output_parsing() {
    let ok = r#"{"question_id": 3, "category": "dialect_error", "explanation": "e", "evidence": "strftime"}"#;
    assert_eq!(parse_judge_output(ok).unwrap().unwrap().category, ErrorCategory::DialectError);
    assert!(parse_judge_output(&format!("```json\n{ok}\n```")).unwrap().is_some());
    assert_eq!(parse_judge_output(" null \n"), Ok(None));
    assert!(parse_judge_output(r#"{"question_id": 3, "category": "other", "explanation": "e", "evidence": ""}"#).is_err());
    assert!(parse_judge_output(r#"{"question_id": 3, "category": "dialect_error", "explanation": "e"}"#).is_err());
    assert!(parse_judge_output(r#"{"question_id": 3, "category": "dialect_error", "explanation": "e", "evidence": "", "x": 1}"#).is_err());
    assert!(parse_judge_output("The answer is dialect_error").is_err());
}

struct Scripted {
    replies: Mutex<Vec<Result<String, JudgeError>>>,
    calls: AtomicU32,
}

impl Judge for Scripted {
    fn judge(&self, _gap: &GapError, _prompt: &str) -> Result<String, JudgeError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut r = self.replies.lock().unwrap();
        if r.is_empty() {
            Err(JudgeError::Transient("exhausted".into()))
        } else {
            r.remove(0)
        }
    }
}

fn fast() -> ClassifyOptions {
    ClassifyOptions { retries: 2, max_in_flight: 1, backoff: Duration::from_millis(1) }
}

#[test]
fn malformed_output_is_retried_then_recorded() {
    let g = gap("SELECT 1", "SELECT 2", None);
    let good = r#"{"question_id": 7, "category": "filtering_error", "explanation": "e", "evidence": ""}"#;
    let judge = Scripted { replies: Mutex::new(vec![Ok("garbage".into()), Ok(good.into())]), calls: AtomicU32::new(0) };
    let out = classify_gap_errors(std::slice::from_ref(&g), &judge, DEFAULT_JUDGE_TEMPLATE, &fast()).unwrap();
    assert_eq!(out[0].classification.category, ErrorCategory::FilteringError);
    assert_eq!(out[0].attempts, 2);

    let judge = Scripted { replies: Mutex::new(vec![Ok("x".into()), Ok("null".into()), Ok("y".into())]), calls: AtomicU32::new(0) };
    let out = classify_gap_errors(&[g], &judge, DEFAULT_JUDGE_TEMPLATE, &fast()).unwrap();
    assert_eq!(out[0].classification.category, ErrorCategory::InvalidEvaluation);
    assert_eq!(out[0].classification.explanation, UNPARSEABLE);
    assert_eq!(judge.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn unreachable_judge_lists_unclassified_gaps() {
    let mut a = gap("SELECT 1", "SELECT 2", None);
    let mut b = a.clone();
    a.example_id = 1;
    b.example_id = 2;
    let judge = Scripted { replies: Mutex::new(vec![]), calls: AtomicU32::new(0) };
    let err = classify_gap_errors(&[b, a], &judge, DEFAULT_JUDGE_TEMPLATE, &fast()).unwrap_err();
    assert_eq!(err.unclassified.iter().map(|k| k.example_id).collect::<Vec<_>>(), [1, 2]);
    assert!(err.to_string().contains("m/postgres/1"));
    assert_eq!(judge.calls.load(Ordering::SeqCst), 3);
}

/// Replies after a delay that shrinks with the id, so completion order is
/// the reverse of submission order.
struct Slow {
    in_flight: AtomicU32,
    peak: AtomicU32,
}

impl Judge for Slow {
    fn judge(&self, gap: &GapError, _prompt: &str) -> Result<String, JudgeError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(40 - 2 * gap.example_id as u64));
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        RuleJudge.judge(gap, "")
    }
}

#[test]
fn bounded_concurrency_and_stable_order() {
    let gaps: Vec<GapError> = (0..12)
        .rev()
        .map(|i| GapError { example_id: i, ..gap("SELECT name FROM employee", "SELECT name FROM employee", None) })
        .collect();
    let judge = Slow { in_flight: AtomicU32::new(0), peak: AtomicU32::new(0) };
    let opts = ClassifyOptions { max_in_flight: 4, ..fast() };
    let out = classify_gap_errors(&gaps, &judge, DEFAULT_JUDGE_TEMPLATE, &opts).unwrap();
    assert_eq!(out.iter().map(|c| c.key.example_id).collect::<Vec<_>>(), (0..12).collect::<Vec<_>>());
    let peak = judge.peak.load(Ordering::SeqCst);
    assert!((2..=4).contains(&peak), "peak {peak}");
}

#[test]
fn half_even_rounding() {
    assert_eq!(percent_half_even(1, 8, 1), 12.5);
    assert_eq!(percent_half_even(1, 16, 1), 6.2); // 6.25 -> 6.2
    assert_eq!(percent_half_even(3, 16, 1), 18.8); // 18.75 -> 18.8
    assert_eq!(percent_half_even(2, 3, 1), 66.7);
    assert_eq!(percent_half_even(0, 3, 1), 0.0);
}

fn table3_counts() -> (BTreeMap<ErrorCategory, u64>, BTreeMap<ErrorCategory, f64>) {
    let mut counts = BTreeMap::new();
    let mut published = BTreeMap::new();
    for line in TABLE3.lines().skip(1) {
        let p: Vec<&str> = line.split(',').collect();
        let cat: ErrorCategory = serde_json::from_value(serde_json::Value::String(p[0].into())).unwrap();
        published.insert(cat, p[1].parse().unwrap());
        counts.insert(cat, p[2].parse().unwrap());
    }
    (counts, published)
}

#[test]
fn table3_distribution_and_renormalization() {
    let (counts, published) = table3_counts();
    let d = distribution_from_counts(&counts).unwrap();
    for (cat, pct) in d.rounded() {
        assert_eq!(pct, published[&cat], "{cat:?}");
    }
    let f = d.share(ErrorCategory::FilteringError).determinate_pct.unwrap();
    assert!((f - 68.8).abs() <= 0.1, "{f}");
    // renormalizing the published percentages directly agrees
    assert!((61.2 / (100.0 - 11.1) * 100.0 - 68.8f64).abs() <= 0.1);
    assert!(d.share(ErrorCategory::InvalidEvaluation).determinate_pct.is_none());
}

#[test]
fn distribution_vectors() {
    let mk = |cat| Classification { question_id: 0, category: cat, explanation: String::new(), evidence: String::new() };
    let mut cs: Vec<Classification> = (0..61).map(|_| mk(ErrorCategory::FilteringError)).collect();
    cs.extend((0..39).map(|_| mk(ErrorCategory::DialectError)));
    let d = category_distribution(&cs).unwrap();
    assert_eq!(d.share(ErrorCategory::FilteringError).pct, 61.0);
    assert_eq!(category_distribution(&[]), Err(GapscopeError::Empty));
}

fn rec(model: &str, dialect: Dialect, id: i64, v: u8) -> EvalRecord {
    EvalRecord {
        run_id: "r".into(),
        example_id: id,
        model_id: model.into(),
        dialect,
        pred_sql: "SELECT 1".into(),
        gold: OutcomeSummary::skipped(""),
        pred: OutcomeSummary::skipped(""),
        verdict: match v {
            0 => Verdict::Correct,
            1 => Verdict::Incorrect { reason: IncorrectReason::ResultMismatch },
            _ => Verdict::GoldFailure { message: "g".into() },
        },
        detail: None,
    }
}

#[test]
fn gap_extraction_vectors() {
    let ctx = GapContext::default();
    let s = [rec("m", Dialect::Sqlite, 1, 0), rec("m", Dialect::Sqlite, 2, 0), rec("m", Dialect::Sqlite, 3, 1)];
    let t = [rec("m", Dialect::Postgres, 1, 1), rec("m", Dialect::Postgres, 2, 0), rec("m", Dialect::Postgres, 3, 1)];
    let gaps = extract_gap_errors(&s, &t, &ctx);
    assert_eq!(gaps.len(), 1);
    assert_eq!(gaps[0].example_id, 1);
    assert!(!gaps[0].results_equal);
}

#[test]
fn gap_context_fills_prompt_fields() {
    let mut ctx = GapContext::default();
    ctx.examples.insert(
        1,
        Example { id: 1, question: "How many?".into(), gold_sql: "SELECT 1".into(), db_id: "d".into(), evidence: None },
    );
    ctx.schemas.insert(("d".into(), Dialect::Postgres), "CREATE TABLE x (a BIGINT);".into());
    let gaps = extract_gap_errors(&[rec("m", Dialect::Sqlite, 1, 0)], &[rec("m", Dialect::Postgres, 1, 1)], &ctx);
    assert_eq!(gaps[0].question, "How many?");
    assert_eq!(gaps[0].schema, "CREATE TABLE x (a BIGINT);");
}

proptest! {
    #[test]
    fn gap_extraction_is_antisymmetric(vs in proptest::collection::vec((0u8..3, 0u8..3), 0..30)) {
        let ctx = GapContext::default();
        let s: Vec<EvalRecord> = vs.iter().enumerate().map(|(i, (a, _))| rec("m", Dialect::Sqlite, i as i64, *a)).collect();
        let t: Vec<EvalRecord> = vs.iter().enumerate().map(|(i, (_, b))| rec("m", Dialect::Postgres, i as i64, *b)).collect();
        let fwd: BTreeSet<i64> = extract_gap_errors(&s, &t, &ctx).iter().map(|g| g.example_id).collect();
        let back: BTreeSet<i64> = extract_gap_errors(&t, &s, &ctx).iter().map(|g| g.example_id).collect();
        let want_fwd: BTreeSet<i64> = vs.iter().enumerate().filter(|(_, p)| **p == (0, 1)).map(|(i, _)| i as i64).collect();
        let want_back: BTreeSet<i64> = vs.iter().enumerate().filter(|(_, p)| **p == (1, 0)).map(|(i, _)| i as i64).collect();
        prop_assert_eq!(&fwd, &want_fwd);
        prop_assert_eq!(&back, &want_back);
        prop_assert!(fwd.is_disjoint(&back));
    }

    #[test]
    fn rule_judge_is_deterministic(pred in "SELECT [a-z]{1,8} FROM (employee|dept|x)( WHERE id > [0-9])?") {
        let g = gap(&pred, "SELECT name FROM employee", None);
        prop_assert_eq!(RuleJudge.classify(&g), RuleJudge.classify(&g.clone()));
    }

    #[test]
    fn rounded_shares_sum_to_100(counts in proptest::collection::vec(0u64..500, 5)) {
        let total: u64 = counts.iter().sum();
        prop_assume!(total > 0);
        let m: BTreeMap<ErrorCategory, u64> = ErrorCategory::ALL.iter().copied().zip(counts).collect();
        let d = distribution_from_counts(&m).unwrap();
        let sum: f64 = d.rounded().iter().map(|(_, p)| p).sum();
        prop_assert!((sum - 100.0).abs() <= 0.2 + 1e-9, "{}", sum);
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xdialect_core::record::{OutcomeSummary, Verdict};
use xdialect_core::{Dialect, EvalRecord, IncorrectReason};
use xdialect_harness::agreement::{agreement_report, AgreementReport};

fn rec(model: &str, dialect: Dialect, id: i64, ok: bool) -> EvalRecord {
    EvalRecord {
        run_id: "sim".into(),
        example_id: id,
        model_id: model.into(),
        dialect,
        pred_sql: String::new(),
        gold: OutcomeSummary::skipped("-"),
        pred: OutcomeSummary::skipped("-"),
        verdict: if ok { Verdict::Correct } else { Verdict::Incorrect { reason: IncorrectReason::PredError } },
        detail: None,
    }
}

// Two raters drawing verdicts independently with the same marginal rate
// agree only by chance, so kappa sits near zero. With 10,000 pooled pairs
// its sampling standard deviation is about 0.01.
#[test]
fn independent_verdicts_have_kappa_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for m in 0..20 {
        let model = format!("m{m}");
        let rate = 0.2 + 0.03 * m as f64;
        for id in 0..500 {
            a.push(rec(&model, Dialect::Sqlite, id, rng.gen_bool(rate)));
            b.push(rec(&model, Dialect::Postgres, id, rng.gen_bool(rate)));
        }
    }
    let report = agreement_report(&a, &b, Some(&Dialect::Sqlite)).unwrap();
    let row = &report.rows[0];
    assert_eq!((row.pairs, row.models), (10_000, 20));
    let kappa = row.kappa.unwrap();
    // pooled marginals differ across models, which adds a small positive
    // bias: the pooled chance term ignores that both raters share each
    // model's rate
    let within_model_rates: Vec<f64> = (0..20).map(|m| 0.2 + 0.03 * m as f64).collect();
    let p: f64 = within_model_rates.iter().sum::<f64>() / 20.0;
    let agree_chance_pooled = p * p + (1.0 - p) * (1.0 - p);
    let agree_expected: f64 =
        within_model_rates.iter().map(|r| r * r + (1.0 - r) * (1.0 - r)).sum::<f64>() / 20.0;
    let expected = (agree_expected - agree_chance_pooled) / (1.0 - agree_chance_pooled);
    assert!((kappa - expected).abs() < 0.04, "kappa {kappa}, expected {expected}");
    // per-model accuracy still tracks the shared rate closely
    assert!(row.spearman.unwrap() > 0.9 && row.pearson.unwrap() > 0.9, "{row:?}");
}

#[test]
fn same_rate_same_model_independent_raters() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for id in 0..10_000 {
        a.push(rec("m", Dialect::Postgres, id, rng.gen_bool(0.4)));
        b.push(rec("m", Dialect::Postgres, id, rng.gen_bool(0.4)));
    }
    let kappa = agreement_report(&a, &b, None).unwrap().rows[0].kappa.unwrap();
    assert!(kappa.abs() < 0.04, "{kappa}");
}

#[test]
fn published_proxy_table_renders_verbatim() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/published/table1_proxy.csv")).unwrap();
    let report = AgreementReport::from_csv(text.as_bytes()).unwrap();
    assert_eq!(report.rows.len(), 5);
    assert_eq!(report.to_csv(), text);
    let md = report.to_markdown();
    assert!(md.contains("| snowflake | 0.31 | 0.49 | 0.58 |"), "{md}");
    assert!(md.contains("| average | 0.39 | 0.64 | 0.75 |"), "{md}");
}

#[test]
fn coverage_column_appears_only_when_present() {
    let mut report = AgreementReport::from_csv("dialect,kappa,spearman,pearson\npostgres,0.5,0.6,0.7\n".as_bytes()).unwrap();
    assert!(!report.to_csv().contains("coverage"));
    report.rows[0].coverage = Some(0.875);
    assert_eq!(report.to_csv(), "dialect,kappa,spearman,pearson,coverage\npostgres,0.50,0.60,0.70,0.88\n");
}

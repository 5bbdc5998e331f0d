use super::*;
use crate::record::{IncorrectReason, OutcomeSummary};
use proptest::prelude::*;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, StudentsT};

const TABLE4: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/published/table4_accuracy.csv"));

fn vv(bits: &[bool]) -> VerdictVector {
    VerdictVector::from_pairs(bits.iter().enumerate().map(|(i, b)| (i as i64, *b))).unwrap()
}

fn record(model: &str, dialect: Dialect, id: i64, verdict: Verdict) -> EvalRecord {
    EvalRecord {
        run_id: "r".into(),
        example_id: id,
        model_id: model.into(),
        dialect,
        pred_sql: String::new(),
        gold: OutcomeSummary::skipped(""),
        pred: OutcomeSummary::skipped(""),
        verdict,
        detail: None,
    }
}

fn wrong() -> Verdict {
    Verdict::Incorrect { reason: IncorrectReason::ResultMismatch }
}

/// (models, sqlite..clickhouse grid, published avg)
fn table4() -> (Vec<String>, Vec<Vec<f64>>, Vec<f64>) {
    let mut models = Vec::new();
    let mut grid = Vec::new();
    let mut avg = Vec::new();
    for line in TABLE4.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        models.push(parts[0].to_string());
        let nums: Vec<f64> = parts[1..].iter().map(|p| p.trim().parse().unwrap()).collect();
        grid.push(nums[..6].to_vec());
        avg.push(nums[6]);
    }
    (models, grid, avg)
}

const TABLE4_DIALECTS: [Dialect; 6] =
    [Dialect::Sqlite, Dialect::Postgres, Dialect::Mysql, Dialect::Snowflake, Dialect::Bigquery, Dialect::Clickhouse];

fn table4_matrix() -> AccuracyMatrix {
    let (models, grid, _) = table4();
    AccuracyMatrix::from_grid(
        models,
        TABLE4_DIALECTS.to_vec(),
        grid.into_iter().map(|r| r.into_iter().map(Some).collect()).collect(),
    )
}

#[test]
fn kappa_vectors() {
    let a = vv(&[true, true, false, false]);
    assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);
    assert_eq!(cohens_kappa(&a, &vv(&[true, false, true, false])).unwrap(), 0.0);
    // table (2,1,0,1): p_o = 0.75, p_e = 0.75*0.5 + 0.25*0.5 = 0.5
    let k = cohens_kappa(&vv(&[true, true, true, false]), &vv(&[true, true, false, false])).unwrap();
    assert_eq!(k, 0.5);
    let all = vv(&[true, true]);
    assert_eq!(cohens_kappa(&all, &all).unwrap(), 1.0);
    let empty = VerdictVector::<i64>::from_pairs([(9, true)]).unwrap();
    assert_eq!(cohens_kappa(&a, &empty), Err(MetricsError::EmptyIntersection));
}

#[test]
fn kappa_uses_only_shared_ids() {
    let a = VerdictVector::from_pairs([(1, true), (2, false), (3, true)]).unwrap();
    let b = VerdictVector::from_pairs([(2, false), (3, true), (4, false)]).unwrap();
    assert_eq!(a.paired(&b), vec![(false, false), (true, true)]);
    assert_eq!(cohens_kappa(&a, &b).unwrap(), 1.0);
}

#[test]
fn duplicate_ids_rejected() {
    assert_eq!(VerdictVector::from_pairs([(1, true), (1, false)]), Err(MetricsError::DuplicateId));
}

#[test]
fn spearman_and_pearson_vectors() {
    assert!((spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    assert!((spearman_rho(&[1.0, 5.0, 9.0], &[1.0, 5.0, 9.0]).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
    let r = spearman_rho(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    // ranks (1, 2.5, 2.5, 4) vs (1,2,3,4): sxy = 4.5, sxx = 4.5, syy = 5
    assert!((r - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-15);
    let xs = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(pearson_r(&xs, &xs).unwrap(), 1.0);
    assert_eq!(pearson_r(&xs, &xs.map(|x| -2.0 * x)).unwrap(), -1.0);
    let r = pearson_r(&xs, &[1.0, 3.0, 2.0, 5.0]).unwrap();
    assert!((r - 5.5 / 43.75f64.sqrt()).abs() < 1e-15);
    assert_eq!(pearson_r(&[1.0, 1.0], &[1.0, 2.0]), Err(MetricsError::ZeroVariance("xs")));
    assert_eq!(spearman_rho(&[1.0], &[1.0]), Err(MetricsError::TooShort { needed: 2, got: 1 }));
}

#[test]
fn mcnemar_vectors() {
    assert_eq!(mcnemar_p(0, 0), 1.0);
    assert!((mcnemar_p(10, 2) - 158.0 / 4096.0).abs() < 1e-12);
    assert_eq!(mcnemar_p(2, 10), mcnemar_p(10, 2));
    assert_eq!(mcnemar_p(5, 5), 1.0);
    let a = vv(&[true; 4]);
    assert_eq!(mcnemar_test(&a, &a).unwrap(), 1.0);
}

#[test]
fn mcnemar_matches_reference_distributions() {
    for n in 1..25u64 {
        for b10 in 0..=n {
            let k = b10.min(n - b10);
            let want = (2.0 * Binomial::new(0.5, n).unwrap().cdf(k)).min(1.0);
            assert!((mcnemar_p(b10, n - b10) - want).abs() < 1e-12, "{b10}/{n}");
        }
    }
    let chi = ChiSquared::new(1.0).unwrap();
    for (a, b) in [(20u64, 5u64), (13, 12), (40, 10), (100, 3)] {
        let stat = ((a.abs_diff(b) as f64 - 1.0).max(0.0)).powi(2) / (a + b) as f64;
        assert!((mcnemar_p(a, b) - (1.0 - chi.cdf(stat))).abs() < 1e-12);
    }
}

#[test]
fn paired_t_vectors() {
    let xs = [3.0, 4.0, 5.0];
    assert_eq!(paired_t_test(&xs, &xs).unwrap().p, 1.0);
    assert_eq!(paired_t_test(&[2.0; 4], &[1.0; 4]).unwrap().p, 0.0);
    let d = [1.0, 2.0, 3.0, 4.0, -1.0];
    let t = paired_t_test(&d, &[0.0; 5]).unwrap();
    // mean 1.8, sample variance 3.7: t = 1.8 / sqrt(3.7 / 5)
    assert!((t.t - 1.8 / (3.7f64 / 5.0).sqrt()).abs() < 1e-12, "{}", t.t);
    assert!((t.t - 2.0925).abs() < 1e-4);
    let want = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, 4.0).unwrap().cdf(t.t));
    assert!((t.p - want).abs() < 1e-6);
    assert!(paired_t_test(&[1.0], &[1.0]).is_err());
}

#[test]
fn robustness_vectors() {
    let claude = dialect_robustness(63.1, &[50.0, 48.8, 45.2, 47.2, 48.4]).unwrap();
    assert!((claude - 0.7594).abs() < 5e-4, "{claude}");
    let granite = dialect_robustness(27.8, &[20.6, 23.8, 23.8, 24.2, 6.3]).unwrap();
    assert!((granite - 0.7101).abs() < 5e-4, "{granite}");
    assert_eq!(dialect_robustness(40.0, &[40.0, 40.0]).unwrap(), 1.0);
    assert!(dialect_robustness(0.0, &[1.0]).is_err());
    assert!(dialect_robustness(1.0, &[]).is_err());
}

#[test]
fn execution_accuracy_vectors() {
    let rec = |v| record("m", Dialect::Postgres, 0, v);
    let r = [rec(Verdict::Correct), rec(Verdict::Correct), rec(Verdict::Correct), rec(wrong())];
    assert_eq!(execution_accuracy(&r).unwrap(), 75.0);
    let gf = || Verdict::GoldFailure { message: "x".into() };
    let r = [rec(Verdict::Correct), rec(Verdict::Correct), rec(gf()), rec(wrong())];
    assert!((execution_accuracy(&r).unwrap() - 66.67).abs() < 0.01);
    assert_eq!(execution_accuracy(&[rec(gf())]), Err(MetricsError::NoCountedRecords));
}

#[test]
fn table4_means_reproduce_published_avg() {
    let (models, _, avg) = table4();
    let m = table4_matrix();
    assert_eq!(models.len(), 16);
    for (model, published) in models.iter().zip(avg) {
        let mean = m.model_mean(model).unwrap();
        // Two rows sit exactly on a .x5 boundary in exact arithmetic; allow
        // for binary representation error of the summed cells.
        assert!((mean - published).abs() <= 0.05 + 1e-9, "{model}: {mean} vs {published}");
    }
    assert!((m.model_mean("GPT-OSS-120B").unwrap() - 43.8167).abs() < 1e-3);
    assert!((m.model_mean("Claude 3.5 Sonnet").unwrap() - 50.45).abs() < 1e-9);
    assert_eq!(m.models()[0], "Claude 3.5 Sonnet");
    assert_eq!(m.models()[15], "Granite 3.3 8B");
    let r = m.robustness("Claude 3.5 Sonnet").unwrap().unwrap();
    assert!((r - 0.7594).abs() < 5e-4);
}

#[test]
fn table4_drops_reported_every_way() {
    let d = table4_matrix().drops().unwrap();
    assert_eq!(d.per_model.len(), 16);
    // Mean point drop recomputed from the grid.
    assert!((d.mean_points - 12.3).abs() < 0.1, "{}", d.mean_points);
    assert!(d.pooled_relative_pct > 0.0 && d.mean_relative_pct > 0.0);
}

#[test]
fn matrix_from_records() {
    let mut recs = vec![];
    for (i, v) in [true, true, false, true].iter().enumerate() {
        recs.push(record("b", Dialect::Sqlite, i as i64, if *v { Verdict::Correct } else { wrong() }));
        recs.push(record("a", Dialect::Sqlite, i as i64, if *v { Verdict::Correct } else { wrong() }));
        recs.push(record("a", Dialect::Postgres, i as i64, if i < 2 { Verdict::Correct } else { wrong() }));
    }
    let m = accuracy_matrix(&recs);
    assert_eq!(m.dialects(), &[Dialect::Sqlite, Dialect::Postgres]);
    // b: 75 (one dialect); a: (75 + 50)/2 = 62.5
    assert_eq!(m.models(), &["b".to_string(), "a".to_string()]);
    assert_eq!(m.get("a", &Dialect::Postgres), Some(50.0));
    assert_eq!(m.get("b", &Dialect::Postgres), None);
    assert_eq!(m.dialect_mean(&Dialect::Sqlite), Some(75.0));
    assert!(m.robustness("b").is_none());
    assert!((m.robustness("a").unwrap().unwrap() - 50.0 / 75.0).abs() < 1e-12);
    let single = accuracy_matrix(&recs[..1]);
    assert_eq!(single.cell(0, 0), Some(100.0));
}

#[test]
fn ties_in_mean_break_by_model_id() {
    let m = AccuracyMatrix::from_grid(
        vec!["zeta".into(), "alpha".into()],
        vec![Dialect::Sqlite],
        vec![vec![Some(10.0)], vec![Some(10.0)]],
    );
    assert_eq!(m.models(), &["alpha".to_string(), "zeta".to_string()]);
}

// ---- independent oracles ----

fn oracle_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let less = xs.iter().filter(|y| *y < x).count() as f64;
            let equal = xs.iter().filter(|y| *y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (sx, sy): (f64, f64) = (xs.iter().sum(), ys.iter().sum());
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn int_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec((0i32..50).prop_map(f64::from), len)
}

fn paired_ints() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| (int_vec(n), int_vec(n)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn pearson_and_spearman_match_oracles((xs, ys) in paired_ints()) {
        prop_assume!(xs.iter().any(|x| *x != xs[0]) && ys.iter().any(|y| *y != ys[0]));
        let r = pearson_r(&xs, &ys).unwrap();
        prop_assert!((r - oracle_pearson(&xs, &ys)).abs() < 1e-12);
        let rho = spearman_rho(&xs, &ys).unwrap();
        let want = oracle_pearson(&oracle_ranks(&xs), &oracle_ranks(&ys));
        prop_assert!((rho - want).abs() < 1e-12);
    }

    #[test]
    fn t_test_matches_reference_cdf((xs, ys) in paired_ints()) {
        let t = paired_t_test(&xs, &ys).unwrap();
        if t.t.is_finite() && t.t != 0.0 {
            let dist = StudentsT::new(0.0, 1.0, t.df).unwrap();
            let want = 2.0 * (1.0 - dist.cdf(t.t.abs()));
            prop_assert!((t.p - want).abs() < 1e-6, "t={} p={} want={}", t.t, t.p, want);
        }
    }

    #[test]
    fn statistics_invariant_under_joint_reordering((xs, ys) in paired_ints(), seed in any::<u64>()) {
        prop_assume!(xs.iter().any(|x| *x != xs[0]) && ys.iter().any(|y| *y != ys[0]));
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        let mut s = seed;
        for i in (1..idx.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            idx.swap(i, (s >> 33) as usize % (i + 1));
        }
        let px: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
        let py: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
        prop_assert!((pearson_r(&xs, &ys).unwrap() - pearson_r(&px, &py).unwrap()).abs() < 1e-12);
        prop_assert!((spearman_rho(&xs, &ys).unwrap() - spearman_rho(&px, &py).unwrap()).abs() < 1e-12);
        let (t1, t2) = (paired_t_test(&xs, &ys).unwrap(), paired_t_test(&px, &py).unwrap());
        prop_assert!((t1.p - t2.p).abs() < 1e-9);
        let a = VerdictVector::from_pairs(xs.iter().enumerate().map(|(i, x)| (i as i64, *x > 25.0))).unwrap();
        let b = VerdictVector::from_pairs(ys.iter().enumerate().map(|(i, y)| (i as i64, *y > 25.0))).unwrap();
        let pa = VerdictVector::from_pairs(idx.iter().enumerate().map(|(k, &i)| (k as i64, xs[i] > 25.0))).unwrap();
        let pb = VerdictVector::from_pairs(idx.iter().enumerate().map(|(k, &i)| (k as i64, ys[i] > 25.0))).unwrap();
        prop_assert_eq!(mcnemar_test(&a, &b).unwrap(), mcnemar_test(&pa, &pb).unwrap());
        match (cohens_kappa(&a, &b), cohens_kappa(&pa, &pb)) {
            (Ok(k1), Ok(k2)) => prop_assert!((k1 - k2).abs() < 1e-12),
            (e1, e2) => prop_assert_eq!(e1.is_err(), e2.is_err()),
        }
    }

    #[test]
    fn self_agreement_is_perfect(bits in proptest::collection::vec(any::<bool>(), 2..50)) {
        prop_assume!(bits.iter().any(|b| *b) && bits.iter().any(|b| !*b));
        let a = vv(&bits);
        prop_assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn increasing_pairs_correlate_perfectly(mut xs in proptest::collection::vec(-1e6f64..1e6, 2..30), scale in 0.1f64..10.0) {
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        prop_assume!(xs.len() >= 2);
        let ys: Vec<f64> = xs.iter().map(|x| x * x * x.signum() * scale).collect();
        prop_assert!((spearman_rho(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        let lin: Vec<f64> = xs.iter().map(|x| 3.0 * x + 7.0).collect();
        prop_assert!((pearson_r(&xs, &lin).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn robustness_is_scale_invariant(src in 1.0f64..100.0, tg in proptest::collection::vec(0.0f64..100.0, 1..6), c in 0.01f64..100.0) {
        let base = dialect_robustness(src, &tg).unwrap();
        let scaled: Vec<f64> = tg.iter().map(|t| t * c).collect();
        let r = dialect_robustness(src * c, &scaled).unwrap();
        prop_assert!((base - r).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn kappa_bounded(a in proptest::collection::vec(any::<bool>(), 1..40), b in proptest::collection::vec(any::<bool>(), 1..40)) {
        if let Ok(k) = cohens_kappa(&vv(&a), &vv(&b)) {
            prop_assert!((-1.0..=1.0).contains(&k));
        }
    }
}

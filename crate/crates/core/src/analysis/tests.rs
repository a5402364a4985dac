use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn parse(body: &str) -> Result<HumanRatings> {
    parse_human_ratings("r.csv", &format!("{}\n{body}", RATINGS_HEADER.join(",")))
}

#[test]
fn identical_raters_average_to_their_rating() {
    let r = parse("q1,4,3,1,2,\nq1,4,3,1,2,\nq1,4,3,1,2,\n").unwrap();
    assert_eq!(r["q1"].fluency, 4.0);
    assert_eq!(r["q1"].raters, 3);
}

#[test]
fn ratings_are_arithmetic_means() {
    let r = parse("q1,3,1,0,1,1\nq1,4,2,1,2,1\nq1,5,3,1,3,1\n").unwrap();
    assert_eq!(r["q1"].fluency, 4.0);
    assert_eq!(r["q1"].relevance, Some(2.0));
    assert!((r["q1"].answerability.unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn pre_averaged_rows_weighted_by_raters() {
    let r = parse("q1,2,,,,3\nq1,5,,,,1\n").unwrap();
    assert!((r["q1"].fluency - 11.0 / 4.0).abs() < 1e-12);
    assert_eq!(r["q1"].raters, 4);
}

#[test]
fn out_of_scale_value_names_row() {
    let e = parse("q1,4,3,1,2,\nq2,6,3,1,2,\n").unwrap_err();
    match e {
        Error::Ingestion { line, message, .. } => {
            assert_eq!(line, 3);
            assert!(message.contains("fluency"));
        }
        other => panic!("{other}"),
    }
    assert!(parse("q1,4,4,1,2,\n").is_err());
    assert!(parse("q1,4,3,2,2,\n").is_err());
    assert!(parse("q1,4,3,1,0,\n").is_err());
    assert!(parse("q1,x,3,1,1,\n").is_err());
    assert!(parse("q1,,3,1,1,\n").is_err());
    assert!(parse("q1,3,3,1,1,0\n").is_err());
}

#[test]
fn unreadable_question_keeps_only_fluency() {
    let r = parse("q9,1,,,,3\n").unwrap();
    assert_eq!(r["q9"].fluency, 1.0);
    assert_eq!(r["q9"].relevance, None);
    assert_eq!(r["q9"].complexity, None);
}

#[test]
fn wrong_header_rejected() {
    assert!(parse_human_ratings("r.csv", "id,flu\nq,1\n").is_err());
}

#[test]
fn buckets_round_half_up() {
    assert_eq!(RatingScale::Fluency.bucket(2.5), 3);
    assert_eq!(RatingScale::Fluency.bucket(2.49), 2);
    assert_eq!(RatingScale::Fluency.bucket(4.67), 5);
    assert_eq!(RatingScale::Answerability.bucket(0.5), 1);
    assert_eq!(RatingScale::Answerability.bucket(1.0 / 3.0), 0);
    assert_eq!(RatingScale::Relevance.bucket(1.0), 1);
}

fn map(items: &[(&str, f64)]) -> BTreeMap<String, f64> {
    items.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[test]
fn single_question_per_level() {
    let s = reward_rating_distribution(
        &map(&[("a", 0.3), ("b", -1.0), ("c", 2.0)]),
        &map(&[("a", 1.0), ("b", 2.0), ("c", 3.0)]),
        RatingScale::Relevance,
    )
    .unwrap();
    for (l, v) in s.levels.iter().zip([0.3, -1.0, 2.0]) {
        assert_eq!((l.count, l.min, l.median, l.max), (1, Some(v), Some(v), Some(v)));
    }
}

#[test]
fn even_bucket_median_is_central_mean() {
    let s = reward_rating_distribution(
        &map(&[("a", 1.0), ("b", 3.0)]),
        &map(&[("a", 2.0), ("b", 2.0)]),
        RatingScale::Relevance,
    )
    .unwrap();
    assert_eq!(s.levels[1].median, Some(2.0));
    assert_eq!(s.levels[0].count, 0);
    assert_eq!(s.levels[0].median, None);
    assert_eq!(s.total(), 2);
}

#[test]
fn random_buckets_match_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rewards = BTreeMap::new();
    let mut ratings = BTreeMap::new();
    for i in 0..50 {
        rewards.insert(format!("q{i}"), rng.gen_range(-3.0..3.0));
        ratings.insert(format!("q{i}"), rng.gen_range(1.0..=3.0));
    }
    let s = reward_rating_distribution(&rewards, &ratings, RatingScale::Complexity).unwrap();
    assert_eq!(s.total(), 50);
    for l in &s.levels {
        let mut v: Vec<f64> = rewards
            .iter()
            .filter(|(id, _)| {
                let x: f64 = ratings[*id];
                let lv = if x < 1.5 { 1 } else if x < 2.5 { 2 } else { 3 };
                lv == l.level
            })
            .map(|(_, &r)| r)
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(l.count, v.len());
        if v.is_empty() {
            continue;
        }
        let med = if v.len() % 2 == 1 { v[v.len() / 2] } else { (v[v.len() / 2 - 1] + v[v.len() / 2]) / 2.0 };
        assert_eq!(l.min, Some(v[0]));
        assert_eq!(l.max, Some(*v.last().unwrap()));
        assert_eq!(l.median, Some(med));
        assert!(l.min <= l.median && l.median <= l.max);
    }
}

fn some(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().copied().map(Some).collect()
}

#[test]
fn pearson_fixtures() {
    let x = some(&[1.0, 2.0, 3.0, 4.0, 5.0]);
    let neg = some(&[-1.0, -2.0, -3.0, -4.0, -5.0]);
    let y = some(&[2.0, 1.0, 4.0, 3.0, 5.0]);
    let m = pearson_matrix(&[("x".into(), x.clone()), ("neg".into(), neg), ("y".into(), y)]).unwrap();
    assert_eq!(m.get("x", "x"), Some(1.0));
    assert!((m.get("x", "neg").unwrap() + 1.0).abs() < 1e-12);
    // Means 3 and 3; deviations (-2,-1,0,1,2) and (-1,-2,1,0,2):
    // cov = 2+2+0+0+4 = 8, var_x = 10, var_y = 10.
    assert!((m.get("x", "y").unwrap() - 0.8).abs() < 1e-12);
    assert_eq!(m.get("y", "x"), m.get("x", "y"));
}

#[test]
fn zero_variance_is_undefined() {
    let m = pearson_matrix(&[
        ("x".into(), some(&[1.0, 2.0, 3.0])),
        ("c".into(), some(&[7.0, 7.0, 7.0])),
    ])
    .unwrap();
    assert_eq!(m.get("c", "c"), None);
    assert_eq!(m.get("x", "c"), None);
    assert_eq!(m.get("x", "x"), Some(1.0));
    assert!(m.to_csv().contains("c,,"));
}

#[test]
fn absent_values_excluded_pairwise() {
    let x = vec![Some(1.0), Some(2.0), Some(3.0), Some(100.0)];
    let y = vec![Some(1.0), Some(2.0), Some(3.0), None];
    assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn matrix_preconditions() {
    assert!(pearson_matrix(&[("a".into(), some(&[1.0])), ("b".into(), some(&[1.0]))]).is_err());
    assert!(pearson_matrix(&[("a".into(), some(&[1.0, 2.0])), ("b".into(), some(&[1.0]))]).is_err());
}

#[test]
fn analyze_writes_files() {
    let ratings = parse("a,5,3,1,1,3\nb,1,,,,3\nc,3,2,0,2,3\nd,4,1,1,3,3\n").unwrap();
    let mut rewards = RewardScores::new();
    rewards.insert("a".into(), [Some(-2.0), Some(1.5), Some(2.0)]);
    rewards.insert("b".into(), [Some(-30.0), Some(0.1), Some(0.2)]);
    rewards.insert("c".into(), [Some(-5.0), Some(0.9), Some(0.3)]);
    rewards.insert("d".into(), [Some(-3.0), None, Some(1.0)]);
    rewards.insert("unrated".into(), [Some(0.0); 3]);
    let rep = analyze(&ratings, &rewards).unwrap();
    assert_eq!(rep.rated_questions, 4);
    assert_eq!(rep.summaries[0].1.total(), 4);
    assert_eq!(rep.summaries[1].1.total(), 2);
    assert!(rep.correlations.get("R-FLU", "fluency").unwrap() > 0.9);
    let dir = tempfile::tempdir().unwrap();
    write_analysis(dir.path(), &rep).unwrap();
    for f in ["summary_fluency.csv", "scores_answerability.csv", "correlations.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let corr = std::fs::read_to_string(dir.path().join("correlations.csv")).unwrap();
    assert!(corr.starts_with(",R-FLU,R-REL,R-ANS,fluency,relevance,answerability,complexity\n"));
}

proptest! {
    #[test]
    fn pearson_affine_invariant(
        xs in prop::collection::vec(-10.0f64..10.0, 3..30),
        a in 0.01f64..100.0,
        b in -50.0f64..50.0,
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys: Vec<f64> = xs.iter().map(|x| x * 0.3 + rng.gen_range(-5.0..5.0)).collect();
        let x = some(&xs);
        let y = some(&ys);
        let t: Vec<Option<f64>> = ys.iter().map(|v| Some(a * v + b)).collect();
        if let (Some(r1), Some(r2)) = (pearson(&x, &y), pearson(&x, &t)) {
            prop_assert!((r1 - r2).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&r1));
        }
    }
}

use proptest::prelude::*;
use vulnscore::cvss::{MetricKind, MetricValue};
use vulnscore::metrics::{cramers_v, evaluate, misclassification_overlap};
use vulnscore::text::{
    information_content, length_stats, pearson, IcModel, HISTOGRAM_BUCKET_WORDS,
};

fn kind() -> impl Strategy<Value = MetricKind> {
    proptest::sample::select(MetricKind::ALL.to_vec())
}

/// Truth labels and `models` prediction columns (UNKNOWN allowed) for one metric.
fn labelled(
    models: usize,
) -> impl Strategy<Value = (MetricKind, Vec<MetricValue>, Vec<Vec<MetricValue>>)> {
    kind().prop_flat_map(move |k| {
        let levels = k.levels().to_vec();
        let mut with_unknown = levels.clone();
        with_unknown.push(MetricValue::Unknown);
        (1usize..60).prop_flat_map(move |n| {
            (
                Just(k),
                proptest::collection::vec(proptest::sample::select(levels.clone()), n),
                proptest::collection::vec(
                    proptest::collection::vec(proptest::sample::select(with_unknown.clone()), n),
                    models,
                ),
            )
        })
    })
}

proptest! {
    #[test]
    fn scores_are_bounded((k, truth, preds) in labelled(1)) {
        let r = evaluate(&truth, &preds[0], k).unwrap();
        for v in [r.accuracy, r.weighted_precision, r.weighted_recall, r.weighted_f1, r.baseline] {
            prop_assert!((0.0..=1.0).contains(&v), "{v}");
        }
        prop_assert!(r.mae >= 0.0 && r.mae <= k.max_ordinal_distance() as f64);
        prop_assert_eq!(r.mae == 0.0, r.accuracy == 1.0);
        prop_assert_eq!(r.confusion.total(), truth.len() as u64);
        for c in &r.per_class {
            let hm = if c.precision + c.recall > 0.0 {
                2.0 * c.precision * c.recall / (c.precision + c.recall)
            } else {
                0.0
            };
            prop_assert!((c.f1 - hm).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_predictions((k, truth, _) in labelled(0)) {
        let r = evaluate(&truth, &truth, k).unwrap();
        prop_assert_eq!(r.accuracy, 1.0);
        prop_assert_eq!(r.mae, 0.0);
        prop_assert!((r.weighted_f1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_is_a_distribution((k, truth, preds) in labelled(4)) {
        let o = misclassification_overlap(&truth, &preds, k).unwrap();
        prop_assert_eq!(o.fractions.len(), 5);
        prop_assert!((o.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn association_with_itself((_, truth, preds) in labelled(1)) {
        let distinct = |v: &[MetricValue]| {
            let mut s = v.to_vec();
            s.sort();
            s.dedup();
            s.len()
        };
        if distinct(&truth) >= 2 {
            prop_assert!((cramers_v(&truth, &truth).unwrap() - 1.0).abs() < 1e-9);
        }
        if let Ok(v) = cramers_v(&truth, &preds[0]) {
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((v - cramers_v(&preds[0], &truth).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_invariances(
        pairs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..50),
        a in 0.1f64..10.0,
        b in -100f64..100.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let Ok(base) = pearson(&x, &y) else { return Ok(()); };
        prop_assert!((-1.0..=1.0).contains(&base.r));
        prop_assert!((0.0..=1.0).contains(&base.p_value));
        let scaled: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let s = pearson(&scaled, &y).unwrap();
        prop_assert!((s.r - base.r).abs() < 1e-9);
        let neg: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
        prop_assert!((pearson(&neg, &y).unwrap().r + base.r).abs() < 1e-9);
        prop_assert!((pearson(&y, &x).unwrap().r - base.r).abs() < 1e-12);
    }

    #[test]
    fn length_histogram_partitions(texts in proptest::collection::vec("[a-z ]{0,300}", 1..30)) {
        let s = length_stats(&texts).unwrap();
        prop_assert_eq!(s.word_histogram.iter().map(|(_, c)| c).sum::<usize>(), texts.len());
        prop_assert!(s.word_histogram.iter().all(|(start, _)| start % HISTOGRAM_BUCKET_WORDS == 0));
        prop_assert!(s.min as f64 <= s.mean && s.mean <= s.max as f64);
        prop_assert!(s.min as f64 <= s.median && s.median <= s.max as f64);
    }

    #[test]
    fn information_content_is_non_negative(corpus in proptest::collection::vec("[a-e]{1,3}( [a-e]{1,3}){0,10}", 1..20)) {
        let model = IcModel::build(&corpus);
        for t in &corpus {
            prop_assert!(information_content(t, &model).unwrap() >= 0.0);
        }
    }
}

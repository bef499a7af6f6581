use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::Path;

use ktbench_core::data::{
    apply_max_attempt, encode_attempt, generate_synthetic, make_folds, parse_dataset_from_reader, read_canonical,
    write_canonical, ColumnMapping,
};
use ktbench_core::metrics::{auc, log_loss, rmse, threshold_metrics, ConfusionCounts};
use ktbench_core::{DataError, Dataset, MaxAttemptPolicy, Metric, MetricReport, StudentSequence, SyntheticConfig};
use proptest::prelude::*;

fn parse(text: &str) -> Result<(Dataset, ktbench_core::ParseReport), DataError> {
    parse_dataset_from_reader(Cursor::new(text), &ColumnMapping::default(), Path::new("inline.csv"))
}

#[test]
fn confusion_example() {
    let t = threshold_metrics(&ConfusionCounts { tp: 2, fp: 1, tn: 3, fn_: 2 });
    assert_eq!(t.accuracy, Some(0.625));
    assert!((t.precision.unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(t.recall, Some(0.5));
    assert!((t.f1.unwrap() - 0.5714).abs() < 5e-5);
    assert!((t.mcc.unwrap() - 0.2582).abs() < 5e-5);
}

#[test]
fn ranking_and_probability_examples() {
    assert_eq!(auc(&[1, 0, 1, 0], &[0.8, 0.7, 0.6, 0.2]).unwrap(), Some(0.75));
    assert!((rmse(&[1, 0, 1], &[0.9, 0.2, 0.6]).unwrap() - 0.2646).abs() < 5e-5);
    assert!((log_loss(&[1, 0], &[0.8, 0.4]).unwrap() - 0.3670).abs() < 5e-5);
    assert_eq!(auc(&[1, 1], &[0.3, 0.9]).unwrap(), None);
}

#[test]
fn constant_predictions_are_degenerate() {
    let labels = [1, 1, 0, 1, 0, 1];
    let report = MetricReport::compute(&labels, &[0.66; 6]).unwrap();
    assert_eq!(report.auc, Some(0.5));
    assert_eq!(report.mcc, None);
    assert_eq!(report.recall, Some(1.0));
    let report = MetricReport::compute(&labels, &[0.3; 6]).unwrap();
    assert_eq!(report.precision, None);
    assert_eq!(report.recall, Some(0.0));
}

#[test]
fn metric_names_and_direction() {
    for m in Metric::ALL {
        assert_eq!(m.name().parse::<Metric>().unwrap(), m);
    }
    assert!(Metric::Auc.better(0.8, 0.7));
    assert!(Metric::Rmse.better(0.3, 0.4));
    assert!(!Metric::LogLoss.higher_is_better());
    let err = "gini".parse::<Metric>().unwrap_err().to_string();
    assert!(err.contains("logloss"), "{err}");
}

#[test]
fn single_attempt_students_are_excluded() {
    let (data, report) = parse("student,skill,correct\nA,x,1\nA,y,0\nA,x,1\nB,x,1\n").unwrap();
    assert_eq!(data.sequences.len(), 1);
    assert_eq!(data.sequences[0].len(), 3);
    assert_eq!(report.dropped_students, 1);
    assert_eq!(report.dropped_student_rows, 1);
}

#[test]
fn empty_skill_field_counts_one_drop() {
    let (data, report) = parse("student,skill,correct\nA,x,1\nA,,0\nA,y,1\nA,x,0\nB,y,1\nB,y,1\n").unwrap();
    assert_eq!(report.dropped_missing_field, 1);
    assert_eq!(data.attempt_count(), 5);
}

#[test]
fn missing_students_everywhere_is_an_empty_dataset() {
    assert!(matches!(parse("student,skill,correct\n,x,1\n,y,0\n"), Err(DataError::EmptyDataset)));
}

#[test]
fn attempt_encoding() {
    assert_eq!(encode_attempt(0, 0, 5).unwrap(), 0);
    assert_eq!(encode_attempt(3, 1, 5).unwrap(), 7);
    assert!(encode_attempt(5, 0, 5).is_err());
}

fn single(len: usize) -> Dataset {
    Dataset {
        sequences: vec![StudentSequence::from_pairs(0, (0..len).map(|t| (t % 2, (t % 3 == 0) as u8)))],
        skill_count: 2,
        skill_names: vec!["p".into(), "q".into()],
        student_names: vec!["s".into()],
        metadata: BTreeMap::new(),
    }
}

#[test]
fn max_attempt_examples() {
    let len = |d: &Dataset| d.sequences.iter().map(StudentSequence::len).collect::<Vec<_>>();
    let split = apply_max_attempt(&single(950), "split:100".parse().unwrap()).unwrap();
    assert_eq!(len(&split), [vec![100; 9], vec![50]].concat());
    assert_eq!(len(&apply_max_attempt(&single(950), MaxAttemptPolicy::Cut(100)).unwrap()), vec![100]);
    assert_eq!(len(&apply_max_attempt(&single(40), MaxAttemptPolicy::Split(200)).unwrap()), vec![40]);
    assert_eq!(apply_max_attempt(&single(40), MaxAttemptPolicy::None).unwrap(), single(40));
    assert!("split:1".parse::<MaxAttemptPolicy>().is_err());
}

#[test]
fn canonical_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(&SyntheticConfig::new(30, 6, 2, 4)).unwrap();
    let summary = write_canonical(&data, dir.path()).unwrap();
    assert_eq!(summary.students, 30);
    assert_eq!(summary.attempts, 180);
    let back = read_canonical(dir.path()).unwrap();
    assert_eq!(back.sequences, data.sequences);
    assert_eq!(back.skill_count, data.skill_count);
}

#[test]
fn synthetic_correctness_rate_is_moderate() {
    let data = generate_synthetic(&SyntheticConfig::new(1000, 50, 2, 1)).unwrap();
    let rate = data.correct_count() as f64 / data.attempt_count() as f64;
    assert!((0.55..=0.75).contains(&rate), "{rate}");
}

proptest! {
    #[test]
    fn folds_partition_students(students in 5usize..80, k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(students >= k);
        let data = generate_synthetic(&SyntheticConfig::new(students, 3, 1, 2)).unwrap();
        let plan = make_folds(&data, k, seed).unwrap();
        let sizes = plan.fold_sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), students);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut seen: Vec<usize> = (0..k).flat_map(|f| plan.fold(f)).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, data.students());
    }

    #[test]
    fn metrics_stay_in_range(
        pairs in proptest::collection::vec((0u8..2, 0.0f64..1.0), 1..40),
    ) {
        let (labels, probs): (Vec<u8>, Vec<f64>) = pairs.into_iter().unzip();
        let r = MetricReport::compute(&labels, &probs).unwrap();
        for m in [Metric::Accuracy, Metric::Auc, Metric::Precision, Metric::Recall, Metric::F1, Metric::Rmse] {
            if let Some(v) = r.get(m) {
                prop_assert!((0.0..=1.0).contains(&v), "{} = {}", m, v);
            }
        }
        if let Some(v) = r.mcc {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
        }
        prop_assert!(r.log_loss.unwrap() >= 0.0);
    }
}

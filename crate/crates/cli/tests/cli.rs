use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ktbench_core::data::{generate_synthetic, write_canonical};
use ktbench_core::{Dataset, StudentSequence, SyntheticConfig};

fn ktbench(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ktbench"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("ktbench runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synthetic(dir: &Path, students: usize) {
    let data = generate_synthetic(&SyntheticConfig::new(students, 10, 2, 3)).unwrap();
    write_canonical(&data, &dir.join("synthetic")).unwrap();
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ktbench(&["selftest", "--instances", "50", "--out", "check"], dir.path());
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS gradient")).count(), 24);
    assert!(!text.contains("FAIL"));
    assert!(dir.path().join("check/manifest.json").exists());
}

#[test]
fn mean_model_table_shows_half_auc_and_undefined_mcc() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path(), 60);
    let o = ktbench(&["train", "--model", "mean", "--dataset", "synthetic", "--out", "run"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let row = text.lines().find(|l| l.starts_with("Mean")).unwrap();
    assert!(row.contains(".500±.000"), "{row}");
    assert!(row.contains('\u{2014}'), "{row}");
    for f in ["results.csv", "summary.json", "report.txt", "manifest.json", "preprocessing.log"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
}

#[test]
fn split_policy_is_logged() {
    let dir = tempfile::tempdir().unwrap();
    let mut sequences = vec![StudentSequence::from_pairs(0, (0..950).map(|t| (t % 3, u8::from(t % 4 != 0))))];
    for s in 1..10 {
        sequences.push(StudentSequence::from_pairs(s, (0..40).map(|t| ((t + s) % 3, u8::from((t + s) % 2 == 0)))));
    }
    let data = Dataset {
        sequences,
        skill_count: 3,
        skill_names: vec!["a".into(), "b".into(), "c".into()],
        student_names: (0..10).map(|s| format!("student{s}")).collect(),
        metadata: BTreeMap::new(),
    };
    write_canonical(&data, &dir.path().join("fixture")).unwrap();
    let o = ktbench(
        &["train", "--model", "nap", "--dataset", "fixture", "--max-attempt", "split:100", "--folds", "2", "--out", "run"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let log = fs::read_to_string(dir.path().join("run/preprocessing.log")).unwrap();
    assert!(log.contains("10 sequences (1310 attempts) -> 19 derived sequences"), "{log}");
    assert!(log.contains("9 x 100, 1 x 50, 9 x 40"), "{log}");
    assert!(stderr(&o).contains("19 derived sequences"));
}

#[test]
fn unknown_model_is_a_usage_error_listing_tags() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path(), 20);
    let o = ktbench(&["train", "--model", "lstm", "--dataset", "synthetic", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error[usage]"), "{err}");
    for tag in ["mean", "nap9m", "bkt", "glr", "lstm-dkt-s+", "dkvmn-paper", "sakt"] {
        assert!(err.contains(tag), "{tag} missing from {err}");
    }
}

#[test]
fn missing_required_option_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ktbench(&["train", "--model", "mean", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--dataset"));
}

#[test]
fn bad_data_exits_with_the_data_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("raw.csv"), "student,skill,correct\n,a,1\nx,b,1\n").unwrap();
    let o = ktbench(&["preprocess", "raw.csv", "--out", "clean"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = ktbench(&["train", "--model", "mean", "--dataset", "nowhere", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn config_file_supplies_options_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path(), 40);
    fs::write(
        dir.path().join("run.toml"),
        "model = \"nap3m\"\ndataset = \"synthetic\"\nseed = 4\nfolds = 4\n",
    )
    .unwrap();
    let o = ktbench(&["--config", "run.toml", "train", "--folds", "3", "--out", "run"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["settings"]["model"], "nap3m");
    assert_eq!(manifest["settings"]["folds"], "3");
    assert_eq!(manifest["master_seed"], 4);
    let csv = fs::read_to_string(dir.path().join("run/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn unknown_hyperparameter_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path(), 20);
    fs::write(dir.path().join("hp.toml"), "hidden = 10\n").unwrap();
    let o = ktbench(
        &["train", "--model", "lstm-dkt", "--dataset", "synthetic", "--hyper", "hp.toml", "--out", "x"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("recurrent-size"), "{}", stderr(&o));
}

#[test]
fn gridsearch_report_and_selection_loss_work_together() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path(), 30);
    fs::write(
        dir.path().join("grid.toml"),
        "recurrent-size = [4]\nvalue-embed-size = [4]\nsummary-size = [4]\nlearning-rate = [0.01]\nseed = [1, 2]\n",
    )
    .unwrap();
    let o = ktbench(
        &[
            "gridsearch", "--model", "vanilla-dkt", "--dataset", "synthetic", "--grid", "grid.toml", "--max-epochs", "2",
            "--folds", "2", "--out", "grid",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("8 grid points"), "{}", stdout(&o));
    assert!(dir.path().join("grid/best.json").exists());

    let o = ktbench(&["analyze", "selection-loss", "--results", "grid", "--metrics", "auc,acc,rmse", "--out", "loss"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["selection_loss.txt", "selection_loss.csv", "selection_loss.json", "manifest.json"] {
        assert!(dir.path().join("loss").join(f).exists(), "{f}");
    }

    let o = ktbench(&["report", "--results", "grid", "--format", "csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().count() >= 2);
    let o = ktbench(&["report", "--results", "grid", "--format", "yaml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_writes_a_canonical_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let o = ktbench(
        &["synth", "--students", "25", "--exercises", "8", "--concepts", "2", "--seed", "9", "--out", "s"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("25"));
    for f in ["dataset.csv", "labels.json", "manifest.json"] {
        assert!(dir.path().join("s").join(f).exists(), "{f}");
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ktbench_core::data::{
    apply_max_attempt, generate_synthetic, parse_dataset, read_canonical, write_canonical, ColumnMapping,
    DatasetSummary, DATASET_FILE, LABELS_FILE,
};
use ktbench_core::{Dataset, MaxAttemptPolicy, Metric, SyntheticConfig};
use ktbench_harness::report::{
    aggregate_report, render_csv, render_json, render_loss_matrix, render_loss_matrix_csv, render_text,
};
use ktbench_harness::store::{load_results, save_results};
use ktbench_harness::{cross_validate, grid_search, selection_loss, GridDomain, ModelKind, RunSpec, TrainConfig};
use ktbench_models::HyperParams;
use serde::Serialize;

use crate::args::{Analysis, Cli, Command, GridArgs, PreprocessArgs, ReportArgs, RunArgs, SelectionLossArgs, SynthArgs, TrainArgs};
use crate::error::{io_error, CliError, Result};
use crate::manifest::{digest_files, unix_now, RunManifest};
use crate::selftest;
use crate::settings::{overlay, read_toml, Settings};

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Data(format!("writing output: {e}")))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Check(e.to_string()))?;
    write_file(path, &(text + "\n"))
}

fn parse_metric(name: &str) -> Result<Metric> {
    name.parse::<Metric>().map_err(|e| CliError::Usage(e.to_string()))
}

fn dataset_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn dataset_digest(dir: &Path) -> Result<String> {
    digest_files(&[&dir.join(DATASET_FILE), &dir.join(LABELS_FILE)])
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let mut settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Preprocess(a) => preprocess(a, &mut settings, out),
        Command::Synth(a) => synth(a, &mut settings, out),
        Command::Train(a) => train(a, &mut settings, out),
        Command::Gridsearch(a) => gridsearch(a, &mut settings, out),
        Command::Analyze {
            analysis: Analysis::SelectionLoss(a),
        } => analyze_selection_loss(a, &mut settings, out),
        Command::Report(a) => report(a, &mut settings, out),
        Command::Selftest(a) => {
            let started = unix_now();
            let seed = settings.get_or("seed", a.seed, 20_240_601)?;
            let instances = settings.get_or("instances", a.instances, 200)?;
            let out_dir = settings.path("out", a.out)?;
            let summary = selftest::run_all(seed, instances, out)?;
            if let Some(dir) = out_dir {
                let mut m = RunManifest::new("selftest", settings.resolved(), started);
                m.master_seed = Some(seed);
                m.write(&dir)?;
            }
            if summary.failed > 0 {
                return Err(CliError::Check(format!("{} of {} self-checks failed", summary.failed, summary.total)));
            }
            Ok(())
        }
    }
}

fn summary_table(name: &str, s: &DatasetSummary) -> String {
    format!(
        "Dataset   Students  Attempts  Correct  Skills  Max attempts\n{:<9} {:>8}  {:>8}  {:>6.1}%  {:>6}  {:>12}\n",
        name, s.students, s.attempts, s.percent_correct, s.skill_count, s.max_attempts
    )
}

fn preprocess(a: PreprocessArgs, settings: &mut Settings, out: &mut dyn Write) -> Result<()> {
    let started = unix_now();
    let raw = settings.require_path("raw", a.raw)?;
    let mapping_path = settings.path("mapping", a.mapping)?;
    let out_dir = settings.require_path("out", a.out)?;
    let mapping = match &mapping_path {
        Some(p) => overlay(&ColumnMapping::default(), &read_toml(p)?, "column mapping")?,
        None => ColumnMapping::default(),
    };
    let (dataset, parse_report) = parse_dataset(&raw, &mapping)?;
    let summary = write_canonical(&dataset, &out_dir)?;
    write_json(&out_dir.join("preprocess.json"), &parse_report)?;
    let mut text = format!(
        "rows read: {}\ndropped (missing field): {}\ndropped (non-binary correctness): {}\ndropped students (single attempt): {} ({} rows)\n",
        parse_report.rows_read,
        parse_report.dropped_missing_field,
        parse_report.dropped_non_binary,
        parse_report.dropped_students,
        parse_report.dropped_student_rows
    );
    text.push_str(&summary_table(&dataset_name(&out_dir), &summary));
    emit(out, &text)?;
    let mut m = RunManifest::new("preprocess", settings.resolved(), started);
    m.dataset_digest = Some(digest_files(&[&raw])?);
    m.write(&out_dir)
}

fn synth(a: SynthArgs, settings: &mut Settings, out: &mut dyn Write) -> Result<()> {
    let started = unix_now();
    let students = settings.require("students", a.students)?;
    let exercises = settings.require("exercises", a.exercises)?;
    let concepts = settings.require("concepts", a.concepts)?;
    let seed = settings.get_or("seed", a.seed, 0)?;
    let mut cfg = SyntheticConfig::new(students, exercises, concepts, seed);
    cfg.guess = settings.get_or("guess", a.guess, cfg.guess)?;
    cfg.learning_increment = settings.get_or("learning-increment", a.learning_increment, cfg.learning_increment)?;
    cfg.ability_std = settings.get_or("ability-std", a.ability_std, cfg.ability_std)?;
    cfg.difficulty_std = settings.get_or("difficulty-std", a.difficulty_std, cfg.difficulty_std)?;
    let out_dir = settings.require_path("out", a.out)?;
    let dataset = generate_synthetic(&cfg)?;
    let summary = write_canonical(&dataset, &out_dir)?;
    emit(out, &summary_table(&dataset_name(&out_dir), &summary))?;
    let mut m = RunManifest::new("synth", settings.resolved(), started);
    m.master_seed = Some(seed);
    m.write(&out_dir)
}

/// One-line account of what a max-attempt policy does to a dataset.
pub fn describe_policy(dataset: &Dataset, policy: MaxAttemptPolicy) -> Result<String> {
    let derived = apply_max_attempt(dataset, policy)?;
    let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &derived.sequences {
        *lengths.entry(s.len()).or_default() += 1;
    }
    let shape: Vec<String> = lengths.iter().rev().map(|(len, n)| format!("{n} x {len}")).collect();
    Ok(format!(
        "max-attempt {policy}: {} sequences ({} attempts) -> {} derived sequences ({} attempts; lengths {})",
        dataset.sequences.len(),
        dataset.attempt_count(),
        derived.sequences.len(),
        derived.attempt_count(),
        shape.join(", ")
    ))
}

struct Prepared {
    model: ModelKind,
    dataset: Dataset,
    dataset_dir: PathBuf,
    spec: RunSpec,
    out_dir: PathBuf,
    log: String,
}

fn prepare_run(a: RunArgs, settings: &mut Settings) -> Result<Prepared> {
    let tag: String = settings.require("model", a.model)?;
    let model: ModelKind = tag.parse().map_err(|e: ktbench_harness::HarnessError| CliError::Usage(e.to_string()))?;
    let dataset_dir = settings.require_path("dataset", a.dataset)?;
    let policy: MaxAttemptPolicy = settings
        .get_or("max-attempt", a.max_attempt, "none".to_string())?
        .parse()
        .map_err(|e: ktbench_core::DataError| CliError::Usage(e.to_string()))?;
    let seed = settings.get_or("seed", a.seed, 0)?;
    let defaults = TrainConfig::default();
    let max_epochs = settings.get_or("max-epochs", a.max_epochs, defaults.max_epochs)?;
    // Patience must stay below the epoch budget; an unset patience follows short budgets down.
    let default_patience = defaults.patience.min(max_epochs.saturating_sub(1)).max(1);
    let train = TrainConfig {
        max_epochs,
        patience: settings.get_or("patience", a.patience, default_patience)?,
        validation_fraction: settings.get_or("validation-fraction", a.validation_fraction, defaults.validation_fraction)?,
    };
    let folds = settings.get_or("folds", a.folds, 5)?;
    let out_dir = settings.require_path("out", a.out)?;
    let dataset = read_canonical(&dataset_dir)?;
    let log = describe_policy(&dataset, policy)?;
    let mut spec = RunSpec::new(model, seed);
    spec.policy = policy;
    spec.folds = folds;
    spec.train = train;
    Ok(Prepared {
        model,
        dataset,
        dataset_dir,
        spec,
        out_dir,
        log,
    })
}

fn write_log(dir: &Path, log: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    eprintln!("{log}");
    write_file(&dir.join("preprocessing.log"), &format!("{log}\n"))
}

fn train(a: TrainArgs, settings: &mut Settings, out: &mut dyn Write) -> Result<()> {
    let started = unix_now();
    let mut p = prepare_run(a.run, settings)?;
    if let ModelKind::Deep(arch) = p.model {
        let base = HyperParams::new(arch);
        let hp = match settings.path("hyper", a.hyper)? {
            Some(path) => overlay(&base, &read_toml(&path)?, "hyperparameter")?,
            None => base,
        };
        if hp.architecture != arch {
            return Err(CliError::Usage(format!(
                "hyperparameter file names {} but --model is {arch}",
                hp.architecture
            )));
        }
        // Recorded so the manifest pins the exact configuration.
        settings.get("hyperparams", Some(hp.key()))?;
        p.spec = p.spec.with_hyper(hp);
    }
    write_log(&p.out_dir, &p.log)?;
    let name = dataset_name(&p.dataset_dir);
    let result = cross_validate(&p.spec, &p.dataset, &name)?;
    let results = vec![result];
    save_results(&results, &p.out_dir)?;
    let text = render_text(&aggregate_report(&results, Metric::Auc)?);
    write_file(&p.out_dir.join("report.txt"), &text)?;
    emit(out, &text)?;
    let mut m = RunManifest::new("train", settings.resolved(), started);
    m.master_seed = Some(p.spec.seed);
    m.dataset_digest = Some(dataset_digest(&p.dataset_dir)?);
    m.write(&p.out_dir)
}

fn gridsearch(a: GridArgs, settings: &mut Settings, out: &mut dyn Write) -> Result<()> {
    let started = unix_now();
    let p = prepare_run(a.run, settings)?;
    let ModelKind::Deep(arch) = p.model else {
        return Err(CliError::Usage(format!("{} has no hyperparameter grid", p.model)));
    };
    let select = parse_metric(&settings.get_or("select", a.select, "auc".to_string())?)?;
    let grid = match settings.path("grid", a.grid)? {
        Some(path) => overlay(&GridDomain::default(), &read_toml(&path)?, "grid")?,
        None => GridDomain::default(),
    };
    let points = grid.enumerate(arch);
    write_log(&p.out_dir, &format!("{}\ngrid points for {arch}: {}", p.log, points.len()))?;
    let name = dataset_name(&p.dataset_dir);
    let outcome = grid_search(&p.spec, &points, &p.dataset, &name, select)?;
    save_results(&outcome.results, &p.out_dir)?;
    write_json(&p.out_dir.join("best.json"), &outcome.best)?;
    let text = format!(
        "{} grid points; best by {select}: {}\n\n{}",
        points.len(),
        outcome.best.key(),
        render_text(&aggregate_report(&outcome.results, select)?)
    );
    write_file(&p.out_dir.join("report.txt"), &text)?;
    emit(out, &text)?;
    let mut m = RunManifest::new("gridsearch", settings.resolved(), started);
    m.master_seed = Some(p.spec.seed);
    m.dataset_digest = Some(dataset_digest(&p.dataset_dir)?);
    m.write(&p.out_dir)
}

fn load_all(dirs: &[PathBuf]) -> Result<Vec<ktbench_harness::RunResult>> {
    if dirs.is_empty() {
        return Err(CliError::Usage("missing required option --results".into()));
    }
    let mut all = Vec::new();
    for d in dirs {
        all.extend(load_results(d)?);
    }
    Ok(all)
}

fn results_digest(dirs: &[PathBuf]) -> Result<String> {
    let files: Vec<PathBuf> = dirs.iter().map(|d| d.join(ktbench_harness::store::SUMMARY_JSON)).collect();
    let refs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
    digest_files(&refs)
}

fn analyze_selection_loss(a: SelectionLossArgs, settings: &mut Settings, out: &mut dyn Write) -> Result<()> {
    let started = unix_now();
    let dirs: Vec<PathBuf> = settings
        .list("results", a.results.iter().map(|p| p.to_string_lossy().into_owned()).collect())?
        .into_iter()
        .map(PathBuf::from)
        .collect();
    let metrics: Vec<Metric> = match settings.list("metrics", a.metrics)? {
        names if names.is_empty() => Metric::ALL.to_vec(),
        names => names.iter().map(|n| parse_metric(n)).collect::<Result<_>>()?,
    };
    let out_dir = settings.require_path("out", a.out)?;
    let results = load_all(&dirs)?;
    let matrix = selection_loss(&results, &metrics)?;
    fs::create_dir_all(&out_dir).map_err(|e| io_error(&out_dir, e))?;
    let text = render_loss_matrix(&matrix);
    write_file(&out_dir.join("selection_loss.txt"), &text)?;
    write_file(&out_dir.join("selection_loss.csv"), &render_loss_matrix_csv(&matrix)?)?;
    write_json(&out_dir.join("selection_loss.json"), &matrix)?;
    emit(out, &text)?;
    let mut m = RunManifest::new("analyze selection-loss", settings.resolved(), started);
    m.dataset_digest = Some(results_digest(&dirs)?);
    m.write(&out_dir)
}

fn report(a: ReportArgs, settings: &mut Settings, out: &mut dyn Write) -> Result<()> {
    let started = unix_now();
    let dirs: Vec<PathBuf> = settings
        .list("results", a.results.iter().map(|p| p.to_string_lossy().into_owned()).collect())?
        .into_iter()
        .map(PathBuf::from)
        .collect();
    let format = settings.get_or("format", a.format, "text".to_string())?;
    let select = parse_metric(&settings.get_or("select", a.select, "auc".to_string())?)?;
    let out_dir = settings.path("out", a.out)?;
    let tables = aggregate_report(&load_all(&dirs)?, select)?;
    let (text, ext) = match format.as_str() {
        "text" => (render_text(&tables), "txt"),
        "csv" => (render_csv(&tables)?, "csv"),
        "json" => (render_json(&tables)? + "\n", "json"),
        other => return Err(CliError::Usage(format!("unknown format {other:?}; valid: text, csv, json"))),
    };
    emit(out, &text)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        write_file(&dir.join(format!("report.{ext}")), &text)?;
        let mut m = RunManifest::new("report", settings.resolved(), started);
        m.dataset_digest = Some(results_digest(&dirs)?);
        m.write(&dir)?;
    }
    Ok(())
}

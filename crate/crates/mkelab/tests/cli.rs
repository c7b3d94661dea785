//! End-to-end tests of the `mkelab` binary: exit codes, file outputs,
//! determinism, resume behavior.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Small enough to train in milliseconds, big enough to exercise every
/// code path.
const TINY: &[&str] = &[
    "data.n=40",
    "data.n_labeled=6",
    "data.n_unlabeled=17",
    "data.n_test=17",
    "epochs=4",
    "teacher_epochs=4",
    "seed_count=1",
];

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mkelab"));
    cmd.env_remove("MKELAB_OUT");
    cmd
}

fn run_in(out: &Path, args: &[&str]) -> Output {
    let output = bin()
        .arg(args[0])
        .arg("--out")
        .arg(out)
        .args(&args[1..])
        .output()
        .expect("binary runs");
    output
}

fn expect_code(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// results.csv rows as field vectors, header dropped.
fn results_rows(dir: &Path) -> Vec<Vec<String>> {
    read(dir.join("results.csv"))
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn generate_is_deterministic_and_validates_the_split() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    expect_code(&run_in(a.path(), &["generate", "--seed", "3"]), 0);
    expect_code(&run_in(b.path(), &["generate", "--seed", "3"]), 0);
    let text = read(a.path().join("dataset.csv"));
    assert_eq!(text, read(b.path().join("dataset.csv")));
    assert!(text.starts_with("x,y,label,split\n"));
    assert_eq!(text.lines().count(), 501);
    assert_eq!(text.lines().filter(|l| l.ends_with(",labeled")).count(), 30);
    assert_eq!(
        text.lines().filter(|l| l.ends_with(",unlabeled")).count(),
        270
    );

    let bad = run_in(a.path(), &["generate", "--split", "10,10,10"]);
    expect_code(&bad, 1);
    assert!(stderr(&bad).contains("does not sum"));
}

#[test]
fn usage_mistakes_exit_1_and_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["run", "epochz=3"]);
    expect_code(&out, 1);
    assert!(stderr(&out).contains("epochz"), "{}", stderr(&out));

    let out = run_in(dir.path(), &["run", "baseline=mega_student"]);
    expect_code(&out, 1);
    assert!(stderr(&out).contains("mega_student"));

    let out = run_in(dir.path(), &["run", "--config", "no-such-file.cfg"]);
    expect_code(&out, 1);

    let out = run_in(dir.path(), &["run", "epochs"]);
    expect_code(&out, 1);
    assert!(stderr(&out).contains("key=value"));

    let out = bin().arg("frobnicate").output().unwrap();
    expect_code(&out, 1);
}

#[test]
fn help_and_version_exit_0() {
    let help = bin().arg("--help").output().unwrap();
    expect_code(&help, 0);
    assert!(stdout(&help).contains("sweep"));
    let version = bin().arg("--version").output().unwrap();
    expect_code(&version, 0);
}

#[test]
fn run_writes_results_checkpoints_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run"];
    args.extend(TINY);
    expect_code(&run_in(dir.path(), &args), 0);

    let rows = results_rows(dir.path());
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "mm_student");
    assert_eq!(rows[0][4], "0");
    for col in [5, 6] {
        let acc: f64 = rows[0][col].parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
    let teacher = mkelab::checkpoint::load(&dir.path().join("teacher.ckpt")).unwrap();
    assert_eq!(teacher.modality(), mkelab_core::synth::Modality::Alpha);
    let student = mkelab::checkpoint::load(&dir.path().join("student.ckpt")).unwrap();
    assert_eq!(student.modality(), mkelab_core::synth::Modality::Both);
    assert_eq!(read(dir.path().join("dataset.csv")).lines().count(), 41);
    assert!(read(dir.path().join("manifest.txt")).contains("command=run"));

    // Same invocation, fresh directory: identical result bytes.
    let again = tempfile::tempdir().unwrap();
    expect_code(&run_in(again.path(), &args), 0);
    assert_eq!(
        read(dir.path().join("results.csv")),
        read(again.path().join("results.csv"))
    );
}

#[test]
fn seed_precedence_is_config_then_override_then_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lab.cfg");
    let mut text = String::from("seed=3\n");
    for pair in TINY {
        text.push_str(pair);
        text.push('\n');
    }
    std::fs::write(&cfg, text).unwrap();
    let cfg = cfg.to_str().unwrap();

    let out = run_in(dir.path(), &["run", "--config", cfg]);
    expect_code(&out, 0);
    assert_eq!(results_rows(dir.path())[0][4], "3");

    let out = run_in(dir.path(), &["run", "--config", cfg, "seed=5"]);
    expect_code(&out, 0);
    assert_eq!(results_rows(dir.path())[0][4], "5");

    let out = run_in(dir.path(), &["run", "--config", cfg, "seed=5", "--seed", "7"]);
    expect_code(&out, 0);
    assert_eq!(results_rows(dir.path())[0][4], "7");
}

const TINY_SWEEP: &[&str] = &[
    "data.n=40",
    "data.n_labeled=6",
    "data.n_unlabeled=17",
    "data.n_test=17",
    "epochs=4",
    "teacher_epochs=4",
    "seed_count=2",
    "sweep.baselines=um_teacher,mm_student",
    "sweep.input_gaussian=0,1",
    "sweep.hidden_gaussian=",
    "sweep.dropout=",
];

#[test]
fn sweep_reruns_are_free_and_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--quiet"];
    args.extend(TINY_SWEEP);
    let first = run_in(dir.path(), &args);
    expect_code(&first, 0);
    assert!(stdout(&first).contains("6 cells computed"));
    let results = read(dir.path().join("results.csv"));
    let summary = read(dir.path().join("summary.csv"));
    let state = read(dir.path().join("sweep_state.csv"));

    let second = run_in(dir.path(), &args);
    expect_code(&second, 0);
    assert!(stdout(&second).contains("0 cells computed"), "{}", stdout(&second));
    assert_eq!(read(dir.path().join("results.csv")), results);
    assert_eq!(read(dir.path().join("summary.csv")), summary);
    assert_eq!(read(dir.path().join("sweep_state.csv")), state);

    // The manifest keeps one line per invocation.
    let manifest = read(dir.path().join("manifest.txt"));
    assert_eq!(manifest.lines().count(), 2);
}

#[test]
fn zero_strength_rows_match_the_untransformed_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "sweep",
            "--quiet",
            "data.n=40",
            "data.n_labeled=6",
            "data.n_unlabeled=17",
            "data.n_test=17",
            "epochs=4",
            "teacher_epochs=4",
            "seed_count=2",
            "sweep.baselines=mm_student,mm_student_noreg",
            "sweep.input_gaussian=0",
            "sweep.hidden_gaussian=",
            "sweep.dropout=",
        ],
    );
    expect_code(&out, 0);
    let rows = results_rows(dir.path());
    assert_eq!(rows.len(), 4);
    for seed in ["0", "1"] {
        let acc_of = |baseline: &str| {
            &rows
                .iter()
                .find(|r| r[0] == baseline && r[4] == seed)
                .unwrap()[6]
        };
        // A zero-variance perturbation trains the same bits as none.
        assert_eq!(acc_of("mm_student"), acc_of("mm_student_noreg"));
    }
}

/// Two classes of mutually isolated points: every neighborhood is the
/// point itself, so no subset expands and every constant estimates to 1.
fn flat_dataset(path: &Path) {
    let mut text = String::from("x,y,label,split\n");
    for i in 0..6 {
        let split = if i < 4 { "unlabeled" } else { "test" };
        text.push_str(&format!("{0}.0e0,{0}.0e0,0,{split}\n", 2 * i));
        text.push_str(&format!("{0}.0e0,{0}.0e0,1,{split}\n", 100 + 2 * i));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn theory_without_expansion_reports_na_bounds_and_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run"];
    args.extend(TINY);
    expect_code(&run_in(dir.path(), &args), 0);
    flat_dataset(&dir.path().join("flat.csv"));

    let data = dir.path().join("flat.csv");
    let teacher = dir.path().join("teacher.ckpt");
    let out = run_in(
        dir.path(),
        &[
            "theory",
            "--data",
            data.to_str().unwrap(),
            "--teacher",
            teacher.to_str().unwrap(),
        ],
    );
    expect_code(&out, 0);
    assert!(stdout(&out).contains("bound N/A"), "{}", stdout(&out));

    let report = read(dir.path().join("theory.csv"));
    assert!(report.starts_with("# "));
    assert!(report.contains("diagnostics, not guarantees"));
    let row = report.lines().last().unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[1], "1", "c1_hat in {row}");
    assert_eq!(fields[8], "N/A", "bound_mm in {row}");
    assert_eq!(fields[9], "N/A", "bound_um in {row}");
}

#[test]
fn theory_mu_is_zero_without_a_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run"];
    args.extend(TINY);
    expect_code(&run_in(dir.path(), &args), 0);
    let student = dir.path().join("student.ckpt");
    let out = run_in(
        dir.path(),
        &["theory", "--student", student.to_str().unwrap()],
    );
    expect_code(&out, 0);
    let report = read(dir.path().join("theory.csv"));
    let fields: Vec<&str> = report.lines().last().unwrap().split(',').collect();
    assert_eq!(fields[7], "0", "mu_hat in {report}");
    // No teacher checkpoint: teacher error and bounds are unknowable.
    assert_eq!(fields[5], "N/A");
    assert_eq!(fields[8], "N/A");
}

#[test]
fn theory_checkpoint_mistakes_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run"];
    args.extend(TINY);
    expect_code(&run_in(dir.path(), &args), 0);

    let missing = dir.path().join("nope.ckpt");
    let out = run_in(
        dir.path(),
        &["theory", "--teacher", missing.to_str().unwrap()],
    );
    expect_code(&out, 1);

    // A multimodal checkpoint cannot be the pseudo-label teacher.
    let student = dir.path().join("student.ckpt");
    let out = run_in(
        dir.path(),
        &["theory", "--teacher", student.to_str().unwrap()],
    );
    expect_code(&out, 1);
    assert!(stderr(&out).contains("modality"), "{}", stderr(&out));
}

#[test]
fn theory_domain_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run"];
    args.extend(TINY);
    expect_code(&run_in(dir.path(), &args), 0);
    let out = run_in(dir.path(), &["theory", "--a-bar", "0.001"]);
    expect_code(&out, 2);
}

#[test]
fn plot_writes_svgs_with_optional_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run"];
    args.extend(TINY);
    expect_code(&run_in(dir.path(), &args), 0);
    let teacher = dir.path().join("teacher.ckpt");

    let args = [
        "plot",
        "--model",
        teacher.to_str().unwrap(),
        "--no-timestamp",
    ];
    expect_code(&run_in(dir.path(), &args), 0);
    let svg = read(dir.path().join("teacher.svg"));
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("test accuracy"));
    expect_code(&run_in(dir.path(), &args), 0);
    assert_eq!(read(dir.path().join("teacher.svg")), svg);

    expect_code(
        &run_in(dir.path(), &["plot", "--model", teacher.to_str().unwrap()]),
        0,
    );
    assert!(read(dir.path().join("teacher.svg")).starts_with("<!-- generated "));

    // No models: a scatter plot named after the dataset.
    expect_code(&run_in(dir.path(), &["plot"]), 0);
    assert!(dir.path().join("dataset.svg").exists());

    let out = run_in(dir.path(), &["plot", "--data", "no-such.csv"]);
    expect_code(&out, 1);
}

#[test]
fn output_directory_comes_from_flag_env_or_default() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from-env");
    let flag_dir = dir.path().join("from-flag");
    let out = bin()
        .args(["generate", "--n", "40", "--split", "6,17,17"])
        .env("MKELAB_OUT", &env_dir)
        .output()
        .unwrap();
    expect_code(&out, 0);
    assert!(env_dir.join("dataset.csv").exists());

    let out = bin()
        .args(["generate", "--n", "40", "--split", "6,17,17", "--out"])
        .arg(&flag_dir)
        .env("MKELAB_OUT", &env_dir)
        .output()
        .unwrap();
    expect_code(&out, 0);
    assert!(flag_dir.join("dataset.csv").exists());
}

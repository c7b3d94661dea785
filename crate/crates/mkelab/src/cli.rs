//! Command-line surface: argument parsing, dispatch, exit codes.
//!
//! Exit code contract: 0 success (including `--help`/`--version`), 1 for
//! usage and configuration mistakes, 2 for runtime failures once training
//! or estimation has started. All commands write under one output
//! directory chosen by `--out`, the `MKELAB_OUT` environment variable, or
//! `./mkelab-out`, in that order, and append what they did to its
//! manifest.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mkelab_core::mke::{evaluate, run_pipeline};
use mkelab_core::synth::{split_order, twomoon_generate, TestSet};

use crate::config::{self, Pair, ResolvedConfig};
use crate::csvio::{self, DatasetRow, ResultsRecord, SplitTag};
use crate::error::{write_err, AppError, AppResult};
use crate::theory::{TheorySettings, TEACHER_MODALITY};
use crate::{checkpoint, manifest, plot, sweep, theory};

#[derive(Parser)]
#[command(
    name = "mkelab",
    version,
    about = "Two-moon laboratory for knowledge expansion: train a unimodal \
             teacher, distill multimodal students from its pseudo-labels, and \
             check the expansion theory behind the gap."
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Base RNG seed (generate: the data seed; run/sweep/theory: applied
    /// after all other settings).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: $MKELAB_OUT, else ./mkelab-out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Concurrent seed workers for sweep.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// key=value settings file; command-line overrides apply after it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Suppress progress lines; results and warnings still print.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write a two-moon dataset CSV with split tags.
    Generate {
        /// Total sample count.
        #[arg(long, default_value_t = 500)]
        n: usize,
        /// labeled,unlabeled,test sizes; must sum to --n.
        #[arg(long, default_value = "30,270,200")]
        split: String,
        /// Standard deviation of the coordinate noise.
        #[arg(long, default_value_t = 0.35)]
        noise: f64,
        /// File name inside the output directory.
        #[arg(long, default_value = "dataset.csv")]
        file: String,
    },
    /// Train teacher and student once per seed; write results and the
    /// base seed's dataset and checkpoints.
    Run {
        /// key=value settings applied after --config.
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Train the whole baseline-by-strength grid, resuming any journaled
    /// work in the output directory.
    Sweep {
        /// key=value settings applied after --config.
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Estimate expansion constants from a dataset and report error
    /// bounds for its checkpoints.
    Theory {
        /// Dataset CSV (default: <out>/dataset.csv).
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
        /// Teacher checkpoint; supplies the misclassified set and the
        /// error the bounds start from.
        #[arg(long, value_name = "FILE")]
        teacher: Option<PathBuf>,
        /// Student checkpoint; supplies the measured error and mu.
        #[arg(long, value_name = "FILE")]
        student: Option<PathBuf>,
        /// Neighborhood radius in each modality.
        #[arg(long, default_value_t = 0.25)]
        radius: f64,
        /// Subset-measure cap when no teacher supplies one.
        #[arg(long = "a-bar", default_value_t = 0.5)]
        a_bar: f64,
        /// Random subsets per class beyond exhaustive enumeration.
        #[arg(long, default_value_t = 2000)]
        budget: usize,
        /// Perturbation draws per sample when measuring mu.
        #[arg(long = "mu-draws", default_value_t = 16)]
        mu_draws: usize,
        /// key=value settings (transform.* picks the mu perturbation).
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Render the dataset, and each model's decision regions, as SVG.
    Plot {
        /// Dataset CSV (default: <out>/dataset.csv).
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
        /// Model checkpoint to draw; repeat for several SVGs.
        #[arg(long = "model", value_name = "FILE")]
        models: Vec<PathBuf>,
        /// Omit the generation-time comment so output is byte-identical.
        #[arg(long)]
        no_timestamp: bool,
    },
}

/// Runs the program; the returned code is the process exit status.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successes; everything else is usage.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> AppResult<()> {
    let out = out_dir(&cli.global);
    std::fs::create_dir_all(&out).map_err(|e| write_err(&out, e))?;
    match cli.command {
        Command::Generate {
            n,
            split,
            noise,
            file,
        } => cmd_generate(&cli.global, &out, n, &split, noise, &file),
        Command::Run { overrides } => cmd_run(&cli.global, &out, &overrides),
        Command::Sweep { overrides } => cmd_sweep(&cli.global, &out, &overrides),
        Command::Theory {
            data,
            teacher,
            student,
            radius,
            a_bar,
            budget,
            mu_draws,
            overrides,
        } => {
            let settings = TheoryArgs {
                data,
                teacher,
                student,
                radius,
                a_bar,
                budget,
                mu_draws,
            };
            cmd_theory(&cli.global, &out, settings, &overrides)
        }
        Command::Plot {
            data,
            models,
            no_timestamp,
        } => cmd_plot(&out, data, &models, no_timestamp),
    }
}

fn out_dir(global: &Global) -> PathBuf {
    if let Some(dir) = &global.out {
        return dir.clone();
    }
    if let Some(env) = std::env::var_os("MKELAB_OUT") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("mkelab-out")
}

/// Config file, then positional overrides, then `--seed` last.
fn resolve_settings(global: &Global, overrides: &[String]) -> AppResult<ResolvedConfig> {
    let mut pairs = Vec::new();
    if let Some(path) = &global.config {
        pairs.extend(config::load_file(path)?);
    }
    pairs.extend(config::parse_overrides(overrides)?);
    if let Some(seed) = global.seed {
        pairs.push(Pair {
            key: "seed".into(),
            value: seed.to_string(),
            place: "--seed".into(),
        });
    }
    config::resolve(&pairs)
}

fn cmd_generate(
    global: &Global,
    out: &Path,
    n: usize,
    split: &str,
    noise: f64,
    file: &str,
) -> AppResult<()> {
    let seed = global.seed.unwrap_or(0);
    let sizes: Vec<usize> = split
        .split(',')
        .map(|s| {
            s.trim().parse().map_err(|_| {
                AppError::Config(format!("--split: invalid size '{}'", s.trim()))
            })
        })
        .collect::<AppResult<_>>()?;
    let [n_l, n_u, n_test] = sizes[..] else {
        return Err(AppError::Config(format!(
            "--split needs labeled,unlabeled,test; got {} sizes",
            sizes.len()
        )));
    };
    if n_l + n_u + n_test != n {
        return Err(AppError::Config(format!(
            "--split {n_l}+{n_u}+{n_test} does not sum to --n {n}"
        )));
    }
    let as_config = |e: mkelab_core::Error| AppError::Config(e.to_string());
    let data = twomoon_generate(n, noise, seed).map_err(as_config)?;
    let order = split_order(&data, n_l, n_u, seed).map_err(as_config)?;
    let rows = csvio::dataset_rows(&data, &order, n_l, n_u)?;
    let path = out.join(file);
    csvio::write_dataset(&path, &rows)?;
    let hash = config::hash_text(&format!(
        "generate.n={n}\ngenerate.noise={}\ngenerate.split={n_l},{n_u},{n_test}\n",
        config::fmt_f64(noise)
    ));
    manifest::append(out, "generate", &hash, &[seed])?;
    println!(
        "wrote {}: {n_l} labeled + {n_u} unlabeled + {n_test} test (noise {}, seed {seed})",
        path.display(),
        config::fmt_f64(noise)
    );
    Ok(())
}

fn cmd_run(global: &Global, out: &Path, overrides: &[String]) -> AppResult<()> {
    let resolved = resolve_settings(global, overrides)?;
    let cfg = &resolved.experiment;
    let (transform, strength) = config::transform_label(&cfg.transform);
    let mut records = Vec::new();
    for i in 0..cfg.seed_count {
        let mut seed_cfg = cfg.clone();
        seed_cfg.seed = cfg.seed + i as u64;
        let arts = run_pipeline(&seed_cfg).map_err(|e| {
            AppError::Runtime(format!("seed {}: {e}", seed_cfg.seed))
        })?;
        println!(
            "seed {}: teacher {:.4} student {:.4}",
            seed_cfg.seed, arts.prep.teacher_report.accuracy, arts.student_report.accuracy
        );
        records.push(ResultsRecord {
            baseline: cfg.baseline.name().to_string(),
            transform: transform.to_string(),
            strength,
            label_mode: cfg.label_mode.name().to_string(),
            seed: seed_cfg.seed,
            teacher_acc: arts.prep.teacher_report.accuracy,
            student_acc: arts.student_report.accuracy,
        });
        if i == 0 {
            // The base seed leaves reusable artifacts behind: the exact
            // dataset it trained on and both model checkpoints.
            let as_runtime = |e: mkelab_core::Error| AppError::Runtime(e.to_string());
            let data = twomoon_generate(cfg.data.n, cfg.data.noise_std, seed_cfg.seed)
                .map_err(as_runtime)?;
            let order = split_order(
                &data,
                cfg.data.n_labeled,
                cfg.data.n_unlabeled,
                seed_cfg.seed,
            )
            .map_err(as_runtime)?;
            let rows =
                csvio::dataset_rows(&data, &order, cfg.data.n_labeled, cfg.data.n_unlabeled)?;
            csvio::write_dataset(&out.join("dataset.csv"), &rows)?;
            checkpoint::save(&out.join("teacher.ckpt"), &arts.prep.teacher)?;
            checkpoint::save(&out.join("student.ckpt"), &arts.student)?;
        }
    }
    csvio::write_results(&out.join("results.csv"), &records)?;
    manifest::append(
        out,
        "run",
        &config::config_hash(cfg),
        &records.iter().map(|r| r.seed).collect::<Vec<_>>(),
    )?;
    let mean =
        records.iter().map(|r| r.student_acc).sum::<f64>() / records.len() as f64;
    println!("student mean {:.4} over {} seeds", mean, records.len());
    println!(
        "wrote {}, dataset.csv, teacher.ckpt, student.ckpt",
        out.join("results.csv").display()
    );
    Ok(())
}

fn cmd_sweep(global: &Global, out: &Path, overrides: &[String]) -> AppResult<()> {
    let resolved = resolve_settings(global, overrides)?;
    let outcome = sweep::execute(&resolved, out, global.jobs, global.quiet)?;
    println!(
        "sweep: {} cells computed, {} reused; wrote {} and summary.csv",
        outcome.computed,
        outcome.reused,
        out.join("results.csv").display()
    );
    Ok(())
}

struct TheoryArgs {
    data: Option<PathBuf>,
    teacher: Option<PathBuf>,
    student: Option<PathBuf>,
    radius: f64,
    a_bar: f64,
    budget: usize,
    mu_draws: usize,
}

fn cmd_theory(
    global: &Global,
    out: &Path,
    args: TheoryArgs,
    overrides: &[String],
) -> AppResult<()> {
    if !(args.radius.is_finite() && args.radius > 0.0) {
        return Err(AppError::Config(format!(
            "--radius must be positive, got {}",
            args.radius
        )));
    }
    if !(args.a_bar.is_finite() && 0.0 < args.a_bar && args.a_bar <= 1.0) {
        return Err(AppError::Config(format!(
            "--a-bar must lie in (0, 1], got {}",
            args.a_bar
        )));
    }
    let resolved = resolve_settings(global, overrides)?;
    let data_path = args.data.unwrap_or_else(|| out.join("dataset.csv"));
    let rows = csvio::read_dataset(&data_path)?;
    let teacher = args.teacher.as_deref().map(checkpoint::load).transpose()?;
    if let Some(t) = &teacher {
        checkpoint::require_modality(t, TEACHER_MODALITY, "teacher")?;
    }
    let student = args.student.as_deref().map(checkpoint::load).transpose()?;
    let instance = data_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let settings = TheorySettings {
        radius: args.radius,
        a_bar_fallback: args.a_bar,
        budget_subsets: args.budget,
        seed: resolved.experiment.seed,
        mu_draws: args.mu_draws,
        instance,
    };
    let outcome = theory::analyze(
        &rows,
        teacher.as_ref(),
        student.as_ref(),
        &resolved.experiment.transform,
        &settings,
    )?;
    let path = out.join("theory.csv");
    csvio::write_theory(&path, &outcome.comments, &[outcome.record])?;
    for note in &outcome.notes {
        println!("theory: {note}");
    }
    let (tname, tstrength) = config::transform_label(&resolved.experiment.transform);
    let hash = config::hash_text(&format!(
        "theory.a_bar={}\ntheory.budget={}\ntheory.data={}\ntheory.mu_draws={}\n\
         theory.radius={}\ntheory.transform={tname}:{}\n",
        config::fmt_f64(args.a_bar),
        args.budget,
        data_path.display(),
        args.mu_draws,
        config::fmt_f64(args.radius),
        config::fmt_f64(tstrength),
    ));
    manifest::append(out, "theory", &hash, &[settings.seed])?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_plot(
    out: &Path,
    data: Option<PathBuf>,
    models: &[PathBuf],
    no_timestamp: bool,
) -> AppResult<()> {
    let data_path = data.unwrap_or_else(|| out.join("dataset.csv"));
    let rows = csvio::read_dataset(&data_path)?;
    let stamp = || {
        if no_timestamp {
            None
        } else {
            Some(manifest::timestamp())
        }
    };
    let stem = |p: &Path| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "plot".to_string())
    };
    let mut wrote = Vec::new();
    if models.is_empty() {
        let title = stem(&data_path);
        let svg = plot::render(&plot::PlotInput {
            rows: &rows,
            model: None,
            test_accuracy: None,
            title: &title,
            timestamp: stamp(),
        })?;
        let path = out.join(format!("{title}.svg"));
        std::fs::write(&path, svg).map_err(|e| write_err(&path, e))?;
        wrote.push(path);
    }
    let test_set = test_set_of(&rows)?;
    for model_path in models {
        let model = checkpoint::load(model_path)?;
        let test_accuracy = match &test_set {
            Some(set) => Some(
                evaluate(&model, set)
                    .map_err(|e| AppError::Runtime(e.to_string()))?
                    .accuracy,
            ),
            None => None,
        };
        let title = stem(model_path);
        let svg = plot::render(&plot::PlotInput {
            rows: &rows,
            model: Some(&model),
            test_accuracy,
            title: &title,
            timestamp: stamp(),
        })?;
        let path = out.join(format!("{title}.svg"));
        std::fs::write(&path, svg).map_err(|e| write_err(&path, e))?;
        wrote.push(path);
    }
    let names = wrote
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>();
    let hash = config::hash_text(&format!("plot.data={}\n", data_path.display()));
    manifest::append(out, "plot", &hash, &[])?;
    println!("wrote {}", names.join(", "));
    Ok(())
}

/// Test-tagged rows as a scorable set; `None` when the file has no test
/// split (accuracy is then omitted from plots).
fn test_set_of(rows: &[DatasetRow]) -> AppResult<Option<TestSet>> {
    let test: Vec<&DatasetRow> = rows
        .iter()
        .filter(|r| r.split == SplitTag::Test)
        .collect();
    if test.is_empty() {
        return Ok(None);
    }
    TestSet::new(
        test.iter().map(|r| [r.x, r.y]).collect(),
        test.iter().map(|r| r.label).collect(),
    )
    .map(Some)
    .map_err(|e| AppError::Config(e.to_string()))
}

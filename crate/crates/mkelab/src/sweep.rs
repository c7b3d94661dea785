//! Resumable sweeps over baselines and perturbation strengths.
//!
//! A sweep is planned as a flat row grid first: one row per baseline and
//! transform-strength combination, each identified by the seed-free hash
//! of its full configuration. Completed (row, seed) cells are journaled
//! to `sweep_state.csv` as they finish, so an interrupted sweep resumes
//! where it stopped and a finished sweep re-run does no training at all.
//! Final CSVs are assembled from the plan order, never from execution
//! order, so the bytes do not depend on `--jobs` or on how many runs it
//! took to complete the grid.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;
use std::sync::Mutex;

use mkelab_core::mke::{prepare_seed, train_student_for, Baseline, ExperimentConfig};
use mkelab_core::perturb::Transform;
use rayon::prelude::*;

use crate::config::{self, ResolvedConfig};
use crate::csvio::{self, ResultsRecord, SummaryRecord};
use crate::error::{read_err, write_err, AppError, AppResult};

/// Journal of completed (row, seed) cells inside the output directory.
pub const STATE_FILE: &str = "sweep_state.csv";
const STATE_HEADER: &str = "key,baseline,transform,strength,label_mode,seed,teacher_acc,student_acc";

/// One cell of the sweep grid before seeds are crossed in: a complete
/// experiment configuration and its seed-free identity.
#[derive(Debug, Clone)]
pub struct PlannedRow {
    pub key: String,
    pub cfg: ExperimentConfig,
    /// CSV transform family column.
    pub transform: &'static str,
    pub strength: f64,
}

/// Expands the sweep axes into rows, in the order they will appear in
/// the results CSV.
///
/// The transform axes apply to the student baselines that accept a
/// transform; `um_teacher`, `naive_pl` and `mm_student_noreg` train
/// without one by definition, and `noisy_student_lite` always uses
/// dropout (the base rate when the base transform is dropout, 0.5
/// otherwise), so each contributes a single row. Per-baseline student
/// defaults apply unless `student.hidden` was set explicitly.
pub fn plan(base: &ResolvedConfig) -> AppResult<Vec<PlannedRow>> {
    let spec = &base.sweep;
    let mut rows: Vec<PlannedRow> = Vec::new();
    let push = |rows: &mut Vec<PlannedRow>, cfg: ExperimentConfig| -> AppResult<()> {
        cfg.validate().map_err(|e| {
            AppError::Config(format!(
                "sweep row (baseline {}, transform {:?}): {e}",
                cfg.baseline.name(),
                cfg.transform
            ))
        })?;
        let key = config::row_key(&cfg);
        if rows.iter().any(|r| r.key == key) {
            return Err(AppError::Config(format!(
                "sweep grid repeats a row (baseline {}, transform {:?})",
                cfg.baseline.name(),
                cfg.transform
            )));
        }
        let (transform, strength) = config::transform_label(&cfg.transform);
        rows.push(PlannedRow {
            key,
            cfg,
            transform,
            strength,
        });
        Ok(())
    };

    for &baseline in &spec.baselines {
        let mut row_cfg = base.experiment.clone();
        row_cfg.baseline = baseline;
        row_cfg.student_modality = baseline.modality();
        if !base.explicit.contains("student.hidden") {
            row_cfg.student_hidden = ExperimentConfig::defaults_for(baseline).student_hidden;
        }
        match baseline {
            Baseline::UmTeacher | Baseline::NaivePl | Baseline::MmStudentNoreg => {
                row_cfg.transform = Transform::None;
                push(&mut rows, row_cfg)?;
            }
            Baseline::NoisyStudentLite => {
                row_cfg.transform = match base.experiment.transform {
                    Transform::Dropout { rate } if rate > 0.0 => Transform::Dropout { rate },
                    _ => Transform::Dropout { rate: 0.5 },
                };
                push(&mut rows, row_cfg)?;
            }
            Baseline::UmStudent | Baseline::MmStudent | Baseline::MmStudentSup => {
                // Strength 0 keeps the family tag in the CSV; a
                // zero-strength transform trains identically to none.
                let layer_index = match base.experiment.transform {
                    Transform::HiddenGaussian { layer_index, .. } => layer_index,
                    _ => 0,
                };
                for &variance in &spec.input_gaussian {
                    let mut cfg = row_cfg.clone();
                    cfg.transform = Transform::InputGaussian { variance };
                    push(&mut rows, cfg)?;
                }
                for &variance in &spec.hidden_gaussian {
                    let mut cfg = row_cfg.clone();
                    cfg.transform = Transform::HiddenGaussian {
                        layer_index,
                        variance,
                    };
                    push(&mut rows, cfg)?;
                }
                for &rate in &spec.dropout {
                    let mut cfg = row_cfg.clone();
                    cfg.transform = Transform::Dropout { rate };
                    push(&mut rows, cfg)?;
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(AppError::Config(
            "sweep grid is empty (no baselines selected)".into(),
        ));
    }
    Ok(rows)
}

/// What a finished sweep reports back to the command layer.
#[derive(Debug)]
pub struct SweepOutcome {
    /// Cells trained in this invocation.
    pub computed: usize,
    /// Cells taken from the journal.
    pub reused: usize,
    pub results: Vec<ResultsRecord>,
    pub summary: Vec<SummaryRecord>,
}

fn state_line(key: &str, r: &ResultsRecord) -> String {
    format!("{key},{}", r.render())
}

/// Loads the journal. Unparsable lines (a torn write from a killed run)
/// are dropped; their cells simply train again.
fn read_state(path: &Path) -> AppResult<HashMap<(String, u64), ResultsRecord>> {
    let mut done = HashMap::new();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(read_err(path, e)),
    };
    for line in text.lines().skip(1) {
        let Some((key, rest)) = line.split_once(',') else {
            continue;
        };
        let Ok(record) = ResultsRecord::parse(rest, |w| AppError::Config(w.into())) else {
            continue;
        };
        done.insert((key.to_string(), record.seed), record);
    }
    Ok(done)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs the sweep into `out_dir`, resuming from its journal. Writes
/// `results.csv`, `summary.csv`, the rewritten journal, and a manifest
/// line. `jobs` seeds train concurrently; outputs are byte-identical
/// regardless.
pub fn execute(
    base: &ResolvedConfig,
    out_dir: &Path,
    jobs: usize,
    quiet: bool,
) -> AppResult<SweepOutcome> {
    let rows = plan(base)?;
    let seeds: Vec<u64> = (0..base.experiment.seed_count)
        .map(|i| base.experiment.seed + i as u64)
        .collect();
    std::fs::create_dir_all(out_dir).map_err(|e| write_err(out_dir, e))?;
    let state_path = out_dir.join(STATE_FILE);
    let prior = read_state(&state_path)?;

    // Work remaining, grouped per seed so one teacher prep serves every
    // row of that seed.
    let mut per_seed: Vec<(u64, Vec<usize>)> = Vec::new();
    let mut reused = 0usize;
    for &seed in &seeds {
        let todo: Vec<usize> = rows
            .iter()
            .enumerate()
            .filter(|(_, row)| !prior.contains_key(&(row.key.clone(), seed)))
            .map(|(i, _)| i)
            .collect();
        reused += rows.len() - todo.len();
        if !todo.is_empty() {
            per_seed.push((seed, todo));
        }
    }

    let journal = {
        let fresh = !state_path.exists();
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&state_path)
            .map_err(|e| write_err(&state_path, e))?;
        if fresh {
            writeln!(file, "{STATE_HEADER}").map_err(|e| write_err(&state_path, e))?;
        }
        Mutex::new(file)
    };
    let done: Mutex<HashMap<(String, u64), ResultsRecord>> = Mutex::new(prior);
    let failures: Mutex<Vec<String>> = Mutex::new(Vec::new());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| AppError::Runtime(format!("worker pool: {e}")))?;
    pool.install(|| {
        per_seed.par_iter().for_each(|(seed, todo)| {
            let mut prep_cfg = base.experiment.clone();
            prep_cfg.seed = *seed;
            let prep = match prepare_seed(&prep_cfg) {
                Ok(p) => p,
                Err(e) => {
                    failures.lock().unwrap().push(format!("seed {seed}: {e}"));
                    return;
                }
            };
            for &ri in todo {
                let row = &rows[ri];
                let mut cfg = row.cfg.clone();
                cfg.seed = *seed;
                match train_student_for(&prep, &cfg) {
                    Ok((_, report)) => {
                        let record = ResultsRecord {
                            baseline: cfg.baseline.name().to_string(),
                            transform: row.transform.to_string(),
                            strength: row.strength,
                            label_mode: cfg.label_mode.name().to_string(),
                            seed: *seed,
                            teacher_acc: prep.teacher_report.accuracy,
                            student_acc: report.accuracy,
                        };
                        {
                            let mut file = journal.lock().unwrap();
                            // One line per completed cell, flushed, so a
                            // kill loses at most the line in flight.
                            let _ = writeln!(file, "{}", state_line(&row.key, &record));
                            let _ = file.flush();
                        }
                        done.lock()
                            .unwrap()
                            .insert((row.key.clone(), *seed), record);
                    }
                    Err(e) => {
                        failures.lock().unwrap().push(format!(
                            "baseline {} transform {} {} seed {seed}: {e}",
                            cfg.baseline.name(),
                            row.transform,
                            config::fmt_f64(row.strength),
                        ));
                    }
                }
            }
            if !quiet {
                println!("seed {seed}: {} cells", todo.len());
            }
        });
    });

    let done = done.into_inner().unwrap();
    let failures = failures.into_inner().unwrap();
    let computed: usize = per_seed.iter().map(|(_, t)| t.len()).sum::<usize>() - failures.len();

    // Assemble outputs in plan order regardless of what just ran.
    let mut results = Vec::new();
    let mut summary = Vec::new();
    for row in &rows {
        let mut teacher = Vec::new();
        let mut student = Vec::new();
        for &seed in &seeds {
            if let Some(r) = done.get(&(row.key.clone(), seed)) {
                teacher.push(r.teacher_acc);
                student.push(r.student_acc);
                results.push(r.clone());
            }
        }
        if !teacher.is_empty() {
            let (tm, ts) = mean_std(&teacher);
            let (sm, ss) = mean_std(&student);
            summary.push(SummaryRecord {
                baseline: row.cfg.baseline.name().to_string(),
                transform: row.transform.to_string(),
                strength: row.strength,
                label_mode: row.cfg.label_mode.name().to_string(),
                seeds: teacher.len(),
                teacher_mean: tm,
                teacher_std: ts,
                student_mean: sm,
                student_std: ss,
            });
        }
    }
    csvio::write_results(&out_dir.join("results.csv"), &results)?;
    csvio::write_summary(&out_dir.join("summary.csv"), &summary)?;

    if failures.is_empty() {
        // Rewrite the journal in plan order: re-running a finished sweep
        // leaves every output byte-for-byte identical.
        let mut text = String::from(STATE_HEADER);
        text.push('\n');
        for row in &rows {
            for &seed in &seeds {
                let r = &done[&(row.key.clone(), seed)];
                text.push_str(&state_line(&row.key, r));
                text.push('\n');
            }
        }
        drop(journal);
        std::fs::write(&state_path, text).map_err(|e| write_err(&state_path, e))?;
        crate::manifest::append(
            out_dir,
            "sweep",
            &config::hash_text(&config::sweep_canonical(
                &base.experiment,
                &base.sweep,
            )),
            &seeds,
        )?;
        Ok(SweepOutcome {
            computed,
            reused,
            results,
            summary,
        })
    } else {
        Err(AppError::Runtime(format!(
            "{} of {} cells failed; completed work is journaled. First failure: {}",
            failures.len(),
            rows.len() * seeds.len(),
            failures[0]
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_pairs, resolve};

    fn resolved(text: &str) -> ResolvedConfig {
        resolve(&parse_pairs(text, "test").unwrap()).unwrap()
    }

    #[test]
    fn default_grid_has_one_row_per_cell() {
        let rows = plan(&resolved("")).unwrap();
        // 4 singleton baselines + 3 swept baselines x 9 strengths.
        assert_eq!(rows.len(), 31);
        let mm: Vec<_> = rows
            .iter()
            .filter(|r| r.cfg.baseline == Baseline::MmStudent)
            .collect();
        assert_eq!(mm.len(), 9);
        assert_eq!(mm[0].transform, "input_gaussian");
        assert_eq!(mm[0].strength, 0.0);
        assert_eq!(mm[8].transform, "dropout");
        assert_eq!(mm[8].strength, 0.8);
        // Keys are unique by construction.
        let mut keys: Vec<_> = rows.iter().map(|r| r.key.clone()).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 31);
    }

    #[test]
    fn fixed_baselines_pin_their_transform() {
        let rows =
            plan(&resolved("transform.kind=dropout\ntransform.rate=0.3\n")).unwrap();
        let one = |b: Baseline| {
            let v: Vec<_> = rows.iter().filter(|r| r.cfg.baseline == b).collect();
            assert_eq!(v.len(), 1, "{}", b.name());
            v[0].clone()
        };
        assert_eq!(one(Baseline::UmTeacher).transform, "none");
        assert_eq!(one(Baseline::NaivePl).transform, "none");
        assert_eq!(one(Baseline::MmStudentNoreg).strength, 0.0);
        // Noisy student inherits a positive base dropout rate.
        let noisy = one(Baseline::NoisyStudentLite);
        assert_eq!(noisy.transform, "dropout");
        assert_eq!(noisy.strength, 0.3);
        let rows = plan(&resolved("")).unwrap();
        let noisy = rows
            .iter()
            .find(|r| r.cfg.baseline == Baseline::NoisyStudentLite)
            .unwrap();
        assert_eq!(noisy.strength, 0.5);
    }

    #[test]
    fn student_architecture_follows_the_baseline_unless_explicit() {
        let rows = plan(&resolved("")).unwrap();
        let um = rows
            .iter()
            .find(|r| r.cfg.baseline == Baseline::UmStudent)
            .unwrap();
        let mm = rows
            .iter()
            .find(|r| r.cfg.baseline == Baseline::MmStudent)
            .unwrap();
        assert_eq!(um.cfg.student_hidden, vec![32, 32]);
        assert_eq!(mm.cfg.student_hidden, vec![16, 16]);
        let rows = plan(&resolved("student.hidden=8,8\n")).unwrap();
        assert!(rows.iter().all(|r| r.cfg.student_hidden == vec![8, 8]));
    }

    #[test]
    fn repeated_grid_values_are_rejected() {
        let err = plan(&resolved("sweep.dropout=0.4,0.4\n")).unwrap_err();
        assert!(err.to_string().contains("repeats"));
    }

    #[test]
    fn tiny_sweep_resumes_without_retraining() {
        let cfg = resolved(
            "data.n=40\ndata.n_labeled=6\ndata.n_unlabeled=17\ndata.n_test=17\n\
             epochs=3\nteacher_epochs=3\nseed_count=2\n\
             sweep.baselines=um_teacher,mm_student\n\
             sweep.input_gaussian=0\nsweep.hidden_gaussian=\nsweep.dropout=\n",
        );
        let dir = tempfile::tempdir().unwrap();
        let first = execute(&cfg, dir.path(), 1, true).unwrap();
        assert_eq!(first.computed, 4);
        assert_eq!(first.reused, 0);
        let bytes = std::fs::read(dir.path().join("results.csv")).unwrap();
        let second = execute(&cfg, dir.path(), 2, true).unwrap();
        assert_eq!(second.computed, 0);
        assert_eq!(second.reused, 4);
        assert_eq!(std::fs::read(dir.path().join("results.csv")).unwrap(), bytes);
        // Growing the seed range reuses the finished seeds.
        let mut wider = cfg.clone();
        wider.experiment.seed_count = 3;
        let third = execute(&wider, dir.path(), 1, true).unwrap();
        assert_eq!(third.computed, 2);
        assert_eq!(third.reused, 4);
        assert_eq!(third.results.len(), 6);
    }
}

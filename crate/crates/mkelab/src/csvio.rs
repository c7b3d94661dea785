//! CSV formats: datasets, per-seed results, aggregated summaries, and
//! theory reports.
//!
//! Values never contain commas or quotes, so rows are plain joins. Every
//! file has a header row with a fixed column order; theory reports carry
//! `#` comment lines above the header. Dataset coordinates are written
//! with 9 significant digits (the audit contract); everything else uses
//! shortest-roundtrip floats, so identical runs produce identical bytes.

use std::path::Path;

use mkelab_core::synth::Sample2D;

use crate::config::fmt_f64;
use crate::error::{read_err, write_err, AppError, AppResult};

/// Which part of the experiment a sample landed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Labeled,
    Unlabeled,
    Test,
}

impl SplitTag {
    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Labeled => "labeled",
            SplitTag::Unlabeled => "unlabeled",
            SplitTag::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "labeled" => Some(SplitTag::Labeled),
            "unlabeled" => Some(SplitTag::Unlabeled),
            "test" => Some(SplitTag::Test),
            _ => None,
        }
    }
}

/// One dataset CSV row: a sample plus its split assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRow {
    pub x: f64,
    pub y: f64,
    pub label: usize,
    pub split: SplitTag,
}

pub const DATASET_HEADER: &str = "x,y,label,split";

/// Tags generated samples with their split while keeping generation
/// order. `order` is the split permutation: positions `..n_l` labeled,
/// the next `n_u` unlabeled, the rest test.
pub fn dataset_rows(
    samples: &[Sample2D],
    order: &[usize],
    n_l: usize,
    n_u: usize,
) -> AppResult<Vec<DatasetRow>> {
    if order.len() != samples.len() {
        return Err(AppError::Runtime(format!(
            "split order covers {} of {} samples",
            order.len(),
            samples.len()
        )));
    }
    let mut tags = vec![SplitTag::Test; samples.len()];
    for (pos, &idx) in order.iter().enumerate() {
        tags[idx] = if pos < n_l {
            SplitTag::Labeled
        } else if pos < n_l + n_u {
            SplitTag::Unlabeled
        } else {
            SplitTag::Test
        };
    }
    Ok(samples
        .iter()
        .zip(tags)
        .map(|(s, split)| DatasetRow {
            x: s.x,
            y: s.y,
            label: s.label,
            split,
        })
        .collect())
}

/// 9 significant digits, the dataset export precision.
fn fmt_coord(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn render_dataset(rows: &[DatasetRow]) -> String {
    let mut out = String::from(DATASET_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_coord(r.x),
            fmt_coord(r.y),
            r.label,
            r.split.name()
        ));
    }
    out
}

pub fn write_dataset(path: &Path, rows: &[DatasetRow]) -> AppResult<()> {
    std::fs::write(path, render_dataset(rows)).map_err(|e| write_err(path, e))
}

pub fn read_dataset(path: &Path) -> AppResult<Vec<DatasetRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| read_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == DATASET_HEADER => {}
        _ => {
            return Err(AppError::Config(format!(
                "{}: expected header '{DATASET_HEADER}'",
                path.display()
            )));
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| {
            AppError::Config(format!(
                "{} line {}: {what} in '{line}'",
                path.display(),
                idx + 1
            ))
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let x: f64 = fields[0].trim().parse().map_err(|_| bad("invalid x"))?;
        let y: f64 = fields[1].trim().parse().map_err(|_| bad("invalid y"))?;
        let label: usize = fields[2]
            .trim()
            .parse()
            .map_err(|_| bad("invalid label"))?;
        let split =
            SplitTag::parse(fields[3].trim()).ok_or_else(|| bad("invalid split tag"))?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(bad("non-finite coordinate"));
        }
        rows.push(DatasetRow { x, y, label, split });
    }
    if rows.is_empty() {
        return Err(AppError::Config(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(rows)
}

/// One per-seed outcome in a results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsRecord {
    pub baseline: String,
    pub transform: String,
    pub strength: f64,
    pub label_mode: String,
    pub seed: u64,
    pub teacher_acc: f64,
    pub student_acc: f64,
}

pub const RESULTS_HEADER: &str =
    "baseline,transform,strength,label_mode,seed,teacher_acc,student_acc";

impl ResultsRecord {
    pub(crate) fn render(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.baseline,
            self.transform,
            fmt_f64(self.strength),
            self.label_mode,
            self.seed,
            fmt_f64(self.teacher_acc),
            fmt_f64(self.student_acc)
        )
    }

    pub(crate) fn parse(line: &str, bad: impl Fn(&str) -> AppError) -> AppResult<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(bad("expected 7 fields"));
        }
        Ok(ResultsRecord {
            baseline: fields[0].to_string(),
            transform: fields[1].to_string(),
            strength: fields[2].parse().map_err(|_| bad("invalid strength"))?,
            label_mode: fields[3].to_string(),
            seed: fields[4].parse().map_err(|_| bad("invalid seed"))?,
            teacher_acc: fields[5]
                .parse()
                .map_err(|_| bad("invalid teacher_acc"))?,
            student_acc: fields[6]
                .parse()
                .map_err(|_| bad("invalid student_acc"))?,
        })
    }
}

pub fn render_results(records: &[ResultsRecord]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.render());
        out.push('\n');
    }
    out
}

pub fn write_results(path: &Path, records: &[ResultsRecord]) -> AppResult<()> {
    std::fs::write(path, render_results(records)).map_err(|e| write_err(path, e))
}

pub fn read_results(path: &Path) -> AppResult<Vec<ResultsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| read_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == RESULTS_HEADER => {}
        _ => {
            return Err(AppError::Config(format!(
                "{}: expected header '{RESULTS_HEADER}'",
                path.display()
            )));
        }
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let path = path.display();
        records.push(ResultsRecord::parse(line, |what| {
            AppError::Config(format!("{path} line {}: {what}", idx + 1))
        })?);
    }
    Ok(records)
}

/// One aggregated sweep row: mean and sample standard deviation over the
/// seeds that completed.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub baseline: String,
    pub transform: String,
    pub strength: f64,
    pub label_mode: String,
    pub seeds: usize,
    pub teacher_mean: f64,
    pub teacher_std: f64,
    pub student_mean: f64,
    pub student_std: f64,
}

pub const SUMMARY_HEADER: &str =
    "baseline,transform,strength,label_mode,seeds,teacher_mean,teacher_std,student_mean,student_std";

pub fn render_summary(records: &[SummaryRecord]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.baseline,
            r.transform,
            fmt_f64(r.strength),
            r.label_mode,
            r.seeds,
            fmt_f64(r.teacher_mean),
            fmt_f64(r.teacher_std),
            fmt_f64(r.student_mean),
            fmt_f64(r.student_std)
        ));
    }
    out
}

pub fn write_summary(path: &Path, records: &[SummaryRecord]) -> AppResult<()> {
    std::fs::write(path, render_summary(records)).map_err(|e| write_err(path, e))
}

/// One theory-report row; `None` renders as `N/A` (bounds outside their
/// domain, measurements without a checkpoint).
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryRecord {
    pub instance: String,
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub c_prod_hat: f64,
    pub a_bar: f64,
    pub err_teacher: Option<f64>,
    pub err_student: Option<f64>,
    pub mu_hat: Option<f64>,
    pub bound_mm: Option<f64>,
    pub bound_um: Option<f64>,
}

pub const THEORY_HEADER: &str =
    "instance,c1_hat,c2_hat,c_prod_hat,a_bar,err_teacher,err_student,mu_hat,bound_mm,bound_um";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "N/A".to_string())
}

/// Renders a theory report: `#` comment lines, header, rows.
pub fn render_theory(comments: &[String], records: &[TheoryRecord]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(THEORY_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.instance,
            fmt_f64(r.c1_hat),
            fmt_f64(r.c2_hat),
            fmt_f64(r.c_prod_hat),
            fmt_f64(r.a_bar),
            fmt_opt(r.err_teacher),
            fmt_opt(r.err_student),
            fmt_opt(r.mu_hat),
            fmt_opt(r.bound_mm),
            fmt_opt(r.bound_um)
        ));
    }
    out
}

pub fn write_theory(
    path: &Path,
    comments: &[String],
    records: &[TheoryRecord],
) -> AppResult<()> {
    std::fs::write(path, render_theory(comments, records)).map_err(|e| write_err(path, e))
}

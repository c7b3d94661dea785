//! Expansion-theory reports over a dataset and optional checkpoints.
//!
//! The two modalities of a sample are its coordinates: X is modality α,
//! Y is modality β. Expansion constants are estimated on the unlabeled
//! pool (that is what the theory speaks about); the product-expansion
//! check and the error bounds come straight from the core estimators.
//! Every report states that c and μ are estimates: c-hats are sampling
//! upper bounds and μ is a measured instability proxy, so bound columns
//! are diagnostics, never guarantees.

use mkelab_core::expansion::{
    check_lemma1, measure_mu, misclassified_set, theorem1_bound, unimodal_bound,
    FinitePointSet, Lemma1Report, SubsetBudget,
};
use mkelab_core::mke::{evaluate, TrainedModel};
use mkelab_core::perturb::Transform;
use mkelab_core::synth::{Modality, OracleView, TestSet};

use crate::csvio::{DatasetRow, SplitTag, TheoryRecord};
use crate::error::{AppError, AppResult};

/// Knobs of one theory run.
#[derive(Debug, Clone)]
pub struct TheorySettings {
    /// Neighborhood radius; one scalar for both modalities.
    pub radius: f64,
    /// Measure bound when no teacher checkpoint supplies one.
    pub a_bar_fallback: f64,
    /// Random subsets per class beyond enumeration.
    pub budget_subsets: usize,
    /// Seed of the subset sampler and the μ perturbations.
    pub seed: u64,
    /// Perturbation draws per sample for μ.
    pub mu_draws: usize,
    /// Name in the report's `instance` column.
    pub instance: String,
}

/// A finished analysis: the CSV row, the raw product-lemma report, the
/// header comments, and human-readable notes for stdout.
#[derive(Debug, Clone)]
pub struct TheoryOutcome {
    pub record: TheoryRecord,
    pub lemma: Lemma1Report,
    pub comments: Vec<String>,
    pub notes: Vec<String>,
}

pub fn analyze(
    rows: &[DatasetRow],
    teacher: Option<&TrainedModel>,
    student: Option<&TrainedModel>,
    transform: &Transform,
    settings: &TheorySettings,
) -> AppResult<TheoryOutcome> {
    let mut notes = Vec::new();

    let mut pool: Vec<&DatasetRow> = rows
        .iter()
        .filter(|r| r.split == SplitTag::Unlabeled)
        .collect();
    if pool.is_empty() {
        notes.push("no unlabeled rows; estimating expansion on the full dataset".to_string());
        pool = rows.iter().collect();
    }
    let pairs: Vec<[f64; 2]> = pool.iter().map(|r| [r.x, r.y]).collect();
    let labels: Vec<usize> = pool.iter().map(|r| r.label).collect();
    let xs: Vec<f64> = pool.iter().map(|r| r.x).collect();
    let ys: Vec<f64> = pool.iter().map(|r| r.y).collect();

    let as_config_err = |e: mkelab_core::Error| AppError::Config(e.to_string());
    let alpha = FinitePointSet::from_scalars(&xs, &labels, settings.radius)
        .map_err(as_config_err)?;
    let beta = FinitePointSet::from_scalars(&ys, &labels, settings.radius)
        .map_err(as_config_err)?;

    let mut budget = SubsetBudget::random(settings.budget_subsets, settings.seed);
    let a_bar = match teacher {
        Some(t) => {
            let mis = misclassified_set(
                t,
                OracleView {
                    pairs: &pairs,
                    labels: &labels,
                },
            )
            .map_err(|e| AppError::Runtime(e.to_string()))?;
            if mis.a_bar > 0.0 {
                notes.push(format!(
                    "a_bar {} measured from the teacher's misclassified set ({} of {} pool samples)",
                    crate::config::fmt_f64(mis.a_bar),
                    mis.indices.len(),
                    pool.len()
                ));
                // The teacher's wrong sets are exactly the subsets the
                // theory reasons about; test them explicitly.
                budget.extra.push(mis.indices);
                // A hair of slack so floor(a_bar * class size) never
                // rounds the measured k/n below k.
                (mis.a_bar * (1.0 + 1e-12)).min(1.0)
            } else {
                notes.push(format!(
                    "teacher misclassifies nothing; falling back to a_bar {}",
                    crate::config::fmt_f64(settings.a_bar_fallback)
                ));
                settings.a_bar_fallback
            }
        }
        None => {
            notes.push(format!(
                "no teacher checkpoint; using configured a_bar {}",
                crate::config::fmt_f64(settings.a_bar_fallback)
            ));
            settings.a_bar_fallback
        }
    };

    let lemma = check_lemma1(&alpha, &beta, a_bar, &budget)
        .map_err(|e| AppError::Runtime(e.to_string()))?;
    notes.push(format!(
        "product expansion check: c1_hat {} * c2_hat {} vs c_prod_hat {}: {}",
        crate::config::fmt_f64(lemma.c1_hat),
        crate::config::fmt_f64(lemma.c2_hat),
        crate::config::fmt_f64(lemma.c_prod_hat),
        if lemma.pass { "pass" } else { "FAIL" }
    ));

    // Errors are measured on the test split when present, else the pool.
    let eval_rows: Vec<&DatasetRow> = {
        let test: Vec<&DatasetRow> = rows
            .iter()
            .filter(|r| r.split == SplitTag::Test)
            .collect();
        if test.is_empty() {
            notes.push("no test rows; measuring model error on the pool".to_string());
            pool.clone()
        } else {
            test
        }
    };
    let test_set = TestSet::new(
        eval_rows.iter().map(|r| [r.x, r.y]).collect(),
        eval_rows.iter().map(|r| r.label).collect(),
    )
    .map_err(as_config_err)?;
    let measure_err = |model: &TrainedModel| -> AppResult<f64> {
        Ok(evaluate(model, &test_set)
            .map_err(|e| AppError::Runtime(e.to_string()))?
            .err)
    };
    let err_teacher = teacher.map(measure_err).transpose()?;
    let err_student = student.map(measure_err).transpose()?;

    let mu_hat = student
        .map(|s| {
            measure_mu(s, &pairs, transform, settings.mu_draws, settings.seed)
                .map_err(|e| AppError::Runtime(e.to_string()))
        })
        .transpose()?;

    let bound_mm = match err_teacher {
        Some(err) if lemma.c1_hat * lemma.c2_hat > 1.0 => Some(
            theorem1_bound(err, lemma.c1_hat, lemma.c2_hat, mu_hat.unwrap_or(0.0))
                .map_err(|e| AppError::Runtime(e.to_string()))?,
        ),
        Some(_) => {
            notes.push(format!(
                "warning: multimodal bound N/A, c1_hat*c2_hat = {} is not above 1",
                crate::config::fmt_f64(lemma.c1_hat * lemma.c2_hat)
            ));
            None
        }
        None => None,
    };
    let bound_um = match err_teacher {
        Some(err) if lemma.c1_hat > 1.0 => Some(
            unimodal_bound(err, lemma.c1_hat, mu_hat.unwrap_or(0.0))
                .map_err(|e| AppError::Runtime(e.to_string()))?,
        ),
        Some(_) => {
            notes.push(format!(
                "warning: unimodal bound N/A, c1_hat = {} is not above 1",
                crate::config::fmt_f64(lemma.c1_hat)
            ));
            None
        }
        None => None,
    };
    if let (Some(b), Some(e)) = (bound_mm, err_student) {
        notes.push(format!(
            "measured student error {} vs multimodal bound {} (estimate-based diagnostic)",
            crate::config::fmt_f64(e),
            crate::config::fmt_f64(b)
        ));
    }

    let comments = vec![
        "c1_hat/c2_hat/c_prod_hat are sampling upper estimates of expansion constants and \
         mu_hat is an empirical perturbation-instability proxy, so the bound columns are \
         diagnostics, not guarantees."
            .to_string(),
        format!(
            "neighborhoods are closed balls of radius {} per modality; the product modality \
             uses the coordinate-max metric.",
            crate::config::fmt_f64(settings.radius)
        ),
    ];

    Ok(TheoryOutcome {
        record: TheoryRecord {
            instance: settings.instance.clone(),
            c1_hat: lemma.c1_hat,
            c2_hat: lemma.c2_hat,
            c_prod_hat: lemma.c_prod_hat,
            a_bar,
            err_teacher,
            err_student,
            mu_hat,
            bound_mm,
            bound_um,
        },
        lemma,
        comments,
        notes,
    })
}

/// The modality a checkpoint must have to act as the pseudo-label
/// teacher in reports.
pub const TEACHER_MODALITY: Modality = Modality::Alpha;

//! The knowledge-expansion pipeline: teacher training, pseudo-labeling,
//! student training under consistency regularization, and evaluation.
//!
//! The experiment trains a unimodal teacher on a handful of labeled α-only
//! samples, labels a larger pool where both modalities are visible, then
//! fits a student to those pseudo labels. Two student objectives are
//! supported:
//!
//! * `combined`: mean pseudo-label loss plus `gamma` times the mean
//!   clean-vs-perturbed consistency penalty, two terms backpropagated
//!   through three passes per sample;
//! * `equivalent`: a single term, the pseudo-label loss evaluated on the
//!   perturbed forward pass. One pass pair per sample, and the smoothing
//!   pressure is the same in expectation.
//!
//! Baselines cover the ablation grid: the teacher itself, unimodal and
//! multimodal students with and without regularization, a plain
//! pseudo-label cloner, a small noisy-student variant, and a supervised
//! skyline trained on the sequestered true labels.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::net::{
    cls_loss, cls_loss_grad, cls_loss_grad_into, softmax, step, Activation, Gradients, Mlp,
    OptimState, Optimizer,
    PerturbDraw, ProbVector, Workspace,
};
use crate::perturb::{reg_loss_with_draw, Transform};
use crate::stream::{derive_seed, rng, Domain};
use crate::synth::{
    split, twomoon_generate, LabeledUnimodal, Modality, OracleView, PseudoLabeledMultimodal,
    TestSet, UnlabeledMultimodal, NUM_CLASSES,
};

/// Which model of the ablation grid to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Baseline {
    /// The teacher itself; its row reports teacher accuracy twice.
    UmTeacher,
    /// Unimodal student with the configured regularization.
    UmStudent,
    /// Unimodal student, no transform, no penalty: plain label cloning.
    NaivePl,
    /// Unimodal student on labeled plus pseudo-labeled data under dropout.
    NoisyStudentLite,
    /// Multimodal student with the configured regularization.
    MmStudent,
    /// Multimodal student with transform and penalty removed.
    MmStudentNoreg,
    /// Multimodal student trained on the sequestered true labels.
    MmStudentSup,
}

impl Baseline {
    pub const ALL: [Baseline; 7] = [
        Baseline::UmTeacher,
        Baseline::UmStudent,
        Baseline::NaivePl,
        Baseline::NoisyStudentLite,
        Baseline::MmStudent,
        Baseline::MmStudentNoreg,
        Baseline::MmStudentSup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::UmTeacher => "um_teacher",
            Baseline::UmStudent => "um_student",
            Baseline::NaivePl => "naive_pl",
            Baseline::NoisyStudentLite => "noisy_student_lite",
            Baseline::MmStudent => "mm_student",
            Baseline::MmStudentNoreg => "mm_student_noreg",
            Baseline::MmStudentSup => "mm_student_sup",
        }
    }

    /// Modality the baseline's model observes.
    pub fn modality(self) -> Modality {
        match self {
            Baseline::UmTeacher
            | Baseline::UmStudent
            | Baseline::NaivePl
            | Baseline::NoisyStudentLite => Modality::Alpha,
            _ => Modality::Both,
        }
    }
}

impl core::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown baseline '{s}'")))
    }
}

impl core::fmt::Display for Baseline {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Pseudo-label representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelMode {
    /// One-hot argmax of the teacher output.
    Hard,
    /// Full teacher softmax.
    #[default]
    Soft,
}

impl LabelMode {
    pub fn name(self) -> &'static str {
        match self {
            LabelMode::Hard => "hard",
            LabelMode::Soft => "soft",
        }
    }
}

impl core::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(LabelMode::Hard),
            "soft" => Ok(LabelMode::Soft),
            other => Err(Error::InvalidConfig(format!("unknown label mode '{other}'"))),
        }
    }
}

impl core::fmt::Display for LabelMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the student objective is assembled; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossMode {
    Combined,
    #[default]
    Equivalent,
}

impl LossMode {
    pub fn name(self) -> &'static str {
        match self {
            LossMode::Combined => "combined",
            LossMode::Equivalent => "equivalent",
        }
    }
}

impl core::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(LossMode::Combined),
            "equivalent" => Ok(LossMode::Equivalent),
            other => Err(Error::InvalidConfig(format!("unknown loss mode '{other}'"))),
        }
    }
}

impl core::fmt::Display for LossMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Size and noise level of the generated dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataSpec {
    pub n: usize,
    pub noise_std: f64,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_test: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            n: 500,
            noise_std: 0.35,
            n_labeled: 30,
            n_unlabeled: 270,
            n_test: 200,
        }
    }
}

/// Everything one experiment run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    /// Hidden widths of the teacher; input is 1 (α), output 2 classes.
    pub teacher_hidden: Vec<usize>,
    /// Hidden widths of the student.
    pub student_hidden: Vec<usize>,
    pub activation: Activation,
    pub baseline: Baseline,
    /// Modality the student observes; must match the baseline family.
    pub student_modality: Modality,
    pub transform: Transform,
    pub label_mode: LabelMode,
    pub loss_mode: LossMode,
    /// Weight of the consistency penalty in combined mode.
    pub gamma: f64,
    /// Scale each sample's pseudo-label loss by 1 - H(label)/ln K.
    pub confidence_weighting: bool,
    pub optimizer: Optimizer,
    /// Full-batch steps for the student.
    pub epochs: usize,
    /// Full-batch steps for the teacher; it sees 30 samples, not 270, so
    /// it converges in far fewer steps than the student.
    pub teacher_epochs: usize,
    /// Base seed; a run uses this seed, a sweep uses `seed..seed+seed_count`.
    pub seed: u64,
    pub seed_count: usize,
}

impl ExperimentConfig {
    /// Reference settings for one baseline: 500 two-moon samples split
    /// 30/270/200, tanh nets (teacher 2x32, unimodal students 2x32,
    /// multimodal students 2x16), Adam 1e-3, soft labels, equivalent loss.
    pub fn defaults_for(baseline: Baseline) -> Self {
        let modality = baseline.modality();
        let student_hidden = match modality {
            Modality::Both => alloc::vec![16, 16],
            _ => alloc::vec![32, 32],
        };
        Self {
            data: DataSpec::default(),
            teacher_hidden: alloc::vec![32, 32],
            student_hidden,
            activation: Activation::Tanh,
            baseline,
            student_modality: modality,
            transform: Transform::None,
            label_mode: LabelMode::Soft,
            loss_mode: LossMode::Equivalent,
            gamma: 1.0,
            confidence_weighting: false,
            optimizer: Optimizer::default(),
            epochs: 4000,
            teacher_epochs: 1500,
            seed: 0,
            seed_count: 10,
        }
    }

    /// Same configuration, different base seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = seed;
        cfg
    }

    pub fn teacher_sizes(&self) -> Vec<usize> {
        let mut sizes = alloc::vec![1];
        sizes.extend_from_slice(&self.teacher_hidden);
        sizes.push(NUM_CLASSES);
        sizes
    }

    pub fn student_sizes(&self) -> Vec<usize> {
        let mut sizes = alloc::vec![self.student_modality.dim()];
        sizes.extend_from_slice(&self.student_hidden);
        sizes.push(NUM_CLASSES);
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.n_labeled + d.n_unlabeled + d.n_test != d.n {
            return Err(Error::InvalidConfig(format!(
                "split sizes {}+{}+{} do not sum to n={}",
                d.n_labeled, d.n_unlabeled, d.n_test, d.n
            )));
        }
        if d.n_labeled < 2 {
            return Err(Error::InvalidConfig(
                "need at least 2 labeled samples".into(),
            ));
        }
        if d.n_unlabeled == 0 || d.n_test == 0 {
            return Err(Error::InvalidConfig(
                "unlabeled and test splits must be non-empty".into(),
            ));
        }
        if !(d.noise_std.is_finite() && d.noise_std >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise_std {} must be finite and non-negative",
                d.noise_std
            )));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma {} must be finite and non-negative",
                self.gamma
            )));
        }
        if self.confidence_weighting && self.label_mode != LabelMode::Soft {
            return Err(Error::InvalidConfig(
                "confidence weighting requires soft labels".into(),
            ));
        }
        if self.student_modality != self.baseline.modality() {
            return Err(Error::InvalidConfig(format!(
                "baseline {} requires modality {:?}, config says {:?}",
                self.baseline,
                self.baseline.modality(),
                self.student_modality
            )));
        }
        if self.seed_count == 0 {
            return Err(Error::InvalidConfig("seed_count must be at least 1".into()));
        }
        self.optimizer.validate()?;
        self.transform.validate(&self.student_sizes())?;
        Ok(())
    }
}

/// A fitted classifier bound to the modality it observes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    mlp: Mlp,
    modality: Modality,
    loss_log: Vec<f64>,
}

impl TrainedModel {
    pub fn new(mlp: Mlp, modality: Modality, loss_log: Vec<f64>) -> Result<Self> {
        if mlp.input_dim() != modality.dim() {
            return Err(Error::DimensionMismatch {
                context: "model input vs modality",
                expected: modality.dim(),
                actual: mlp.input_dim(),
            });
        }
        Ok(Self {
            mlp,
            modality,
            loss_log,
        })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    /// Mean training objective per epoch.
    pub fn loss_log(&self) -> &[f64] {
        &self.loss_log
    }

    /// Logits on a full two-coordinate point, projected to the model's
    /// modality first.
    pub fn logits(&self, pair: [f64; 2]) -> Result<Vec<f64>> {
        let x = self.modality.project_pair(pair);
        let (logits, _) = self.mlp.forward(&x)?;
        Ok(logits)
    }

    /// Argmax class on a full two-coordinate point.
    pub fn predict(&self, pair: [f64; 2]) -> Result<usize> {
        let logits = self.logits(pair)?;
        Ok(crate::net::argmax(&logits).expect("output layer is non-empty"))
    }
}

/// Accuracy breakdown of a model over a labeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `1 - accuracy`: the empirical error rate.
    pub err: f64,
    /// Per-class accuracy; vacuously 1 for classes absent from the set.
    pub per_class: Vec<f64>,
    /// `confusion[true_label][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
}

/// Trains the unimodal teacher on the labeled set.
///
/// Plain full-batch minimization of the mean classification loss; no
/// perturbation is involved. `epochs == 0` returns the freshly initialized
/// network.
pub fn train_teacher(d_l: &LabeledUnimodal, cfg: &ExperimentConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let inputs: Vec<Vec<f64>> = d_l.entries().iter().map(|&(x, _)| alloc::vec![x]).collect();
    let targets: Vec<ProbVector> = d_l
        .entries()
        .iter()
        .map(|&(_, label)| ProbVector::one_hot(label, NUM_CLASSES))
        .collect::<Result<_>>()?;
    let weights = alloc::vec![1.0; inputs.len()];
    let mut tcfg = cfg.clone();
    tcfg.epochs = cfg.teacher_epochs;
    let (mlp, log) = fit(
        &cfg.teacher_sizes(),
        &inputs,
        &targets,
        &weights,
        &Transform::None,
        0.0,
        LossMode::Equivalent,
        &tcfg,
        derive_seed(cfg.seed, Domain::TeacherInit),
    )?;
    TrainedModel::new(mlp, Modality::Alpha, log)
}

/// Labels the unlabeled pool with the teacher.
///
/// Soft mode keeps the whole softmax; hard mode takes a one-hot at the
/// argmax, ties resolved toward the lower class index.
pub fn pseudo_label(
    teacher: &TrainedModel,
    d_u: &UnlabeledMultimodal,
    mode: LabelMode,
) -> Result<PseudoLabeledMultimodal> {
    if teacher.modality() != Modality::Alpha {
        return Err(Error::InvalidConfig(
            "pseudo-labeling teacher must observe modality α only".into(),
        ));
    }
    let mut labels = Vec::with_capacity(d_u.len());
    for &pair in d_u.pairs() {
        let logits = teacher.logits(pair)?;
        let label = match mode {
            LabelMode::Soft => softmax(&logits)?,
            LabelMode::Hard => {
                let class = crate::net::argmax(&logits).expect("non-empty logits");
                ProbVector::one_hot(class, logits.len())?
            }
        };
        labels.push(label);
    }
    PseudoLabeledMultimodal::new(d_u.pairs().to_vec(), labels)
}

/// Per-sample confidence `1 - H(label)/ln K`: 0 for a uniform label, 1 for
/// a one-hot label.
pub fn confidence_weights(labels: &[ProbVector]) -> Vec<f64> {
    labels
        .iter()
        .map(|y| {
            let k = y.len() as f64;
            let w = 1.0 - y.entropy() / libm::log(k);
            w.clamp(0.0, 1.0)
        })
        .collect()
}

/// Side inputs some baselines need beyond the pseudo-labeled pool.
#[derive(Debug, Clone, Copy, Default)]
pub struct StudentAux<'a> {
    /// Labeled set, consumed by `noisy_student_lite`.
    pub labeled: Option<&'a LabeledUnimodal>,
    /// Ground-truth view of the pool, consumed by `mm_student_sup`.
    pub oracle: Option<OracleView<'a>>,
}

/// Trains the student variant selected by `cfg.baseline`; see module docs.
pub fn train_student(
    d_u: &PseudoLabeledMultimodal,
    cfg: &ExperimentConfig,
    aux: StudentAux<'_>,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if d_u.is_empty() {
        return Err(Error::InvalidConfig("empty pseudo-labeled set".into()));
    }
    let modality = cfg.baseline.modality();
    let sizes = cfg.student_sizes();

    // Per-baseline objective: inputs, targets, transform, penalty weight.
    let mut inputs: Vec<Vec<f64>> = d_u
        .pairs
        .iter()
        .map(|&p| modality.project_pair(p))
        .collect();
    let mut targets: Vec<ProbVector> = d_u.labels.clone();
    let mut transform = cfg.transform.clone();
    let mut gamma = cfg.gamma;
    let mut loss_mode = cfg.loss_mode;

    match cfg.baseline {
        Baseline::UmTeacher => {
            return Err(Error::InvalidConfig(
                "um_teacher is not a student baseline".into(),
            ));
        }
        Baseline::UmStudent | Baseline::MmStudent => {}
        Baseline::NaivePl | Baseline::MmStudentNoreg => {
            transform = Transform::None;
            gamma = 0.0;
        }
        Baseline::NoisyStudentLite => {
            // Labeled and pseudo-labeled samples together, trained under
            // dropout injected into the label loss itself.
            let labeled = aux.labeled.ok_or_else(|| {
                Error::InvalidConfig("noisy_student_lite needs the labeled set".into())
            })?;
            for &(x, label) in labeled.entries() {
                inputs.push(alloc::vec![x]);
                targets.push(ProbVector::one_hot(label, NUM_CLASSES)?);
            }
            transform = match cfg.transform {
                Transform::Dropout { rate } if rate > 0.0 => Transform::Dropout { rate },
                _ => Transform::Dropout { rate: 0.5 },
            };
            loss_mode = LossMode::Equivalent;
        }
        Baseline::MmStudentSup => {
            let oracle = aux.oracle.ok_or_else(|| {
                Error::InvalidConfig("mm_student_sup needs the ground-truth view".into())
            })?;
            if oracle.labels.len() != d_u.len() {
                return Err(Error::DimensionMismatch {
                    context: "oracle labels",
                    expected: d_u.len(),
                    actual: oracle.labels.len(),
                });
            }
            targets = oracle
                .labels
                .iter()
                .map(|&l| ProbVector::one_hot(l, NUM_CLASSES))
                .collect::<Result<_>>()?;
        }
    }

    let weights = if cfg.confidence_weighting {
        confidence_weights(&targets)
    } else {
        alloc::vec![1.0; targets.len()]
    };

    let (mlp, log) = fit(
        &sizes,
        &inputs,
        &targets,
        &weights,
        &transform,
        gamma,
        loss_mode,
        cfg,
        derive_seed(cfg.seed, Domain::StudentInit),
    )?;
    TrainedModel::new(mlp, modality, log)
}

/// Full-batch training loop shared by teacher and student variants.
///
/// Minimizes `(1/M) Σ w_i l_cls(y_i, ·)` plus, in combined mode,
/// `gamma (1/M) Σ reg_i`. The consistency penalty reuses the clean pass of
/// the label loss, so combined mode costs one extra perturbed pass, not
/// two.
#[allow(clippy::too_many_arguments)]
fn fit(
    sizes: &[usize],
    inputs: &[Vec<f64>],
    targets: &[ProbVector],
    sample_weights: &[f64],
    transform: &Transform,
    gamma: f64,
    loss_mode: LossMode,
    cfg: &ExperimentConfig,
    init_seed: u64,
) -> Result<(Mlp, Vec<f64>)> {
    transform.validate(sizes)?;
    let mut mlp = Mlp::new(sizes, cfg.activation, init_seed)?;
    let mut state = OptimState::new();
    let mut perturb_rng = rng(cfg.seed, Domain::TrainPerturb);
    let m = inputs.len() as f64;
    let inv_m = 1.0 / m;
    let mut log = Vec::with_capacity(cfg.epochs);

    // In combined mode a transform of `none` (or gamma 0) contributes an
    // exactly-zero penalty with zero subgradient, so skip the extra pass.
    let reg_active =
        loss_mode == LossMode::Combined && gamma > 0.0 && *transform != Transform::None;

    let mut grads = Gradients::zeros_like(&mlp);
    let mut ws = Workspace::new();
    let mut draw = PerturbDraw::identity(sizes.len() - 2);
    let mut upstream = Vec::new();
    for _ in 0..cfg.epochs {
        grads.zero();
        let mut epoch_loss = 0.0;
        for ((x, y), &w) in inputs.iter().zip(targets).zip(sample_weights) {
            match loss_mode {
                LossMode::Equivalent => {
                    transform.resample_into(sizes, &mut perturb_rng, &mut draw)?;
                    let logits = mlp.forward_ws(x, &draw, &mut ws)?;
                    epoch_loss += w * inv_m * cls_loss(y, logits)?;
                    cls_loss_grad_into(y, logits, &mut upstream)?;
                    for g in &mut upstream {
                        *g *= w * inv_m;
                    }
                    mlp.backward_ws(&draw, &upstream, &mut ws, &mut grads)?;
                }
                LossMode::Combined => {
                    if reg_active {
                        let draw = transform.sample(sizes, &mut perturb_rng)?;
                        let pair = reg_loss_with_draw(&mlp, x, &draw)?;
                        epoch_loss += inv_m * (w * cls_loss(y, &pair.clean_logits)? + gamma * pair.value);

                        let mut clean_up = cls_loss_grad(y, &pair.clean_logits)?;
                        let (reg_clean, reg_pert) = pair.upstreams()?;
                        for (g, rc) in clean_up.iter_mut().zip(&reg_clean) {
                            *g = (w * *g + gamma * rc) * inv_m;
                        }
                        mlp.backward_into(&pair.clean_tape, &clean_up, &mut grads)?;

                        let pert_up: Vec<f64> =
                            reg_pert.iter().map(|g| g * gamma * inv_m).collect();
                        mlp.backward_into(&pair.perturbed_tape, &pert_up, &mut grads)?;
                    } else {
                        let (logits, tape) = mlp.forward(x)?;
                        epoch_loss += w * inv_m * cls_loss(y, &logits)?;
                        let mut upstream = cls_loss_grad(y, &logits)?;
                        for g in &mut upstream {
                            *g *= w * inv_m;
                        }
                        mlp.backward_into(&tape, &upstream, &mut grads)?;
                    }
                }
            }
        }
        if !epoch_loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        step(&mut mlp, &grads, &mut state, &cfg.optimizer)?;
        log.push(epoch_loss);
    }
    Ok((mlp, log))
}

/// Scores a model on the held-out set.
pub fn evaluate(model: &TrainedModel, test: &TestSet) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::InvalidConfig("empty test set".into()));
    }
    let mut confusion = alloc::vec![alloc::vec![0usize; NUM_CLASSES]; NUM_CLASSES];
    for (&pair, &label) in test.pairs().iter().zip(test.labels()) {
        let pred = model.predict(pair)?;
        confusion[label][pred] += 1;
    }
    let correct: usize = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
    let accuracy = correct as f64 / test.len() as f64;
    let per_class = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            // A class absent from the set is vacuously classified perfectly.
            if total == 0 {
                1.0
            } else {
                row[c] as f64 / total as f64
            }
        })
        .collect();
    Ok(EvalReport {
        accuracy,
        err: 1.0 - accuracy,
        per_class,
        confusion,
    })
}

/// Data, teacher, and teacher score for one seed; reusable across the
/// student variants that share them.
#[derive(Debug, Clone)]
pub struct SeedPrep {
    key: PrepKey,
    pub labeled: LabeledUnimodal,
    pub unlabeled: UnlabeledMultimodal,
    pub test: TestSet,
    pub teacher: TrainedModel,
    pub teacher_report: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
struct PrepKey {
    seed: u64,
    data: DataSpec,
    teacher_hidden: Vec<usize>,
    activation: Activation,
    optimizer: Optimizer,
    teacher_epochs: usize,
}

impl PrepKey {
    fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            seed: cfg.seed,
            data: cfg.data,
            teacher_hidden: cfg.teacher_hidden.clone(),
            activation: cfg.activation,
            optimizer: cfg.optimizer,
            teacher_epochs: cfg.teacher_epochs,
        }
    }
}

/// Generates data, splits it, and trains the teacher for `cfg.seed`.
pub fn prepare_seed(cfg: &ExperimentConfig) -> Result<SeedPrep> {
    cfg.validate()?;
    let data = twomoon_generate(cfg.data.n, cfg.data.noise_std, cfg.seed)?;
    let (labeled, unlabeled, test) = split(
        &data,
        cfg.data.n_labeled,
        cfg.data.n_unlabeled,
        cfg.data.n_test,
        cfg.seed,
    )?;
    let teacher = train_teacher(&labeled, cfg)?;
    let teacher_report = evaluate(&teacher, &test)?;
    Ok(SeedPrep {
        key: PrepKey::of(cfg),
        labeled,
        unlabeled,
        test,
        teacher,
        teacher_report,
    })
}

/// Pseudo-labels and trains the student of `cfg.baseline` on a prepared
/// seed. The prep must come from a config agreeing on seed, data, teacher
/// architecture, optimizer, and epochs.
pub fn train_student_for(
    prep: &SeedPrep,
    cfg: &ExperimentConfig,
) -> Result<(TrainedModel, EvalReport)> {
    if prep.key != PrepKey::of(cfg) {
        return Err(Error::InvalidConfig(
            "seed prep was built under a different data/teacher configuration".into(),
        ));
    }
    if cfg.baseline == Baseline::UmTeacher {
        return Ok((prep.teacher.clone(), prep.teacher_report.clone()));
    }
    let pseudo = pseudo_label(&prep.teacher, &prep.unlabeled, cfg.label_mode)?;
    let aux = StudentAux {
        labeled: Some(&prep.labeled),
        oracle: Some(prep.unlabeled.oracle()),
    };
    let student = train_student(&pseudo, cfg, aux)?;
    let report = evaluate(&student, &prep.test)?;
    Ok((student, report))
}

/// Everything a single-seed pipeline produces.
#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub prep: SeedPrep,
    pub pseudo: PseudoLabeledMultimodal,
    pub student: TrainedModel,
    pub student_report: EvalReport,
}

/// Runs generate → split → teacher → pseudo-label → student → evaluate
/// for `cfg.seed`.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineArtifacts> {
    let prep = prepare_seed(cfg)?;
    let pseudo = pseudo_label(&prep.teacher, &prep.unlabeled, cfg.label_mode)?;
    let (student, student_report) = train_student_for(&prep, cfg)?;
    Ok(PipelineArtifacts {
        prep,
        pseudo,
        student,
        student_report,
    })
}

/// One seed's scores inside a result row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub teacher_acc: f64,
    pub student_acc: f64,
}

/// A seed whose pipeline errored.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: Error,
}

/// Aggregated outcome of one config over `seed_count` seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub baseline: Baseline,
    pub per_seed: Vec<SeedOutcome>,
    /// Seeds that errored; a non-empty list marks the row failed.
    pub failures: Vec<SeedFailure>,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn teacher_mean(&self) -> Option<f64> {
        mean(self.per_seed.iter().map(|s| s.teacher_acc))
    }

    pub fn student_mean(&self) -> Option<f64> {
        mean(self.per_seed.iter().map(|s| s.student_acc))
    }

    /// Sample standard deviation (n-1 denominator) of student accuracy.
    pub fn student_std(&self) -> Option<f64> {
        std_dev(self.per_seed.iter().map(|s| s.student_acc))
    }

    pub fn teacher_std(&self) -> Option<f64> {
        std_dev(self.per_seed.iter().map(|s| s.teacher_acc))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let m = mean(values.clone())?;
    let mut sq = 0.0;
    let mut count = 0usize;
    for v in values {
        sq += (v - m) * (v - m);
        count += 1;
    }
    if count < 2 {
        return Some(0.0);
    }
    Some(libm::sqrt(sq / (count - 1) as f64))
}

/// Runs the pipeline over `cfg.seed .. cfg.seed + cfg.seed_count` and
/// aggregates. A failing seed is recorded on the row, never dropped.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultRow> {
    cfg.validate()?;
    let mut per_seed = Vec::with_capacity(cfg.seed_count);
    let mut failures = Vec::new();
    for k in 0..cfg.seed_count {
        let seed = cfg.seed + k as u64;
        let seed_cfg = cfg.with_seed(seed);
        match run_pipeline(&seed_cfg) {
            Ok(artifacts) => per_seed.push(SeedOutcome {
                seed,
                teacher_acc: artifacts.prep.teacher_report.accuracy,
                student_acc: artifacts.student_report.accuracy,
            }),
            Err(error) => failures.push(SeedFailure { seed, error }),
        }
    }
    Ok(ResultRow {
        baseline: cfg.baseline,
        per_seed,
        failures,
    })
}

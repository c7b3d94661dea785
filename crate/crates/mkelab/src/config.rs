//! Flat key=value experiment configuration.
//!
//! One `key = value` per line, `#` starts a comment, dotted keys group
//! related settings (`transform.kind=dropout`). Unknown keys are errors
//! naming the key, so a typo can never silently fall back to a default.
//! Command-line overrides use the same `key=value` grammar and apply
//! after the file.
//!
//! A resolved configuration serializes canonically (fixed key order,
//! shortest-roundtrip floats) and its SHA-256 is the config hash, so
//! reordering lines or adding comments never changes the hash.

use std::collections::BTreeSet;
use std::path::Path;

use mkelab_core::mke::{Baseline, ExperimentConfig};
use mkelab_core::net::{Activation, Optimizer};
use mkelab_core::perturb::Transform;
use mkelab_core::synth::Modality;
use sha2::{Digest, Sha256};

use crate::error::{read_err, AppError, AppResult};

/// One `key=value` occurrence with where it came from, for error messages.
#[derive(Debug, Clone)]
pub struct Pair {
    pub key: String,
    pub value: String,
    pub place: String,
}

/// Splits config text into ordered pairs. `origin` names the source in
/// errors ("config line 3", "override 1").
pub fn parse_pairs(text: &str, origin: &str) -> AppResult<Vec<Pair>> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let place = format!("{origin} line {}", idx + 1);
        let Some((key, value)) = line.split_once('=') else {
            return Err(AppError::Config(format!(
                "{place}: expected key=value, got '{line}'"
            )));
        };
        pairs.push(Pair {
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            place,
        });
    }
    Ok(pairs)
}

pub fn load_file(path: &Path) -> AppResult<Vec<Pair>> {
    let text = std::fs::read_to_string(path).map_err(|e| read_err(path, e))?;
    parse_pairs(&text, &path.display().to_string())
}

/// Command-line overrides: each argument must be a single `key=value`.
pub fn parse_overrides(args: &[String]) -> AppResult<Vec<Pair>> {
    let mut pairs = Vec::new();
    for (idx, arg) in args.iter().enumerate() {
        let place = format!("override {}", idx + 1);
        let Some((key, value)) = arg.split_once('=') else {
            return Err(AppError::Config(format!(
                "{place}: expected key=value, got '{arg}'"
            )));
        };
        pairs.push(Pair {
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            place,
        });
    }
    Ok(pairs)
}

/// Axes of a sweep: which baselines to include and the strength grid per
/// perturbation family. An empty strength list drops that family.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub baselines: Vec<Baseline>,
    pub input_gaussian: Vec<f64>,
    pub hidden_gaussian: Vec<f64>,
    pub dropout: Vec<f64>,
}

impl Default for SweepSpec {
    /// The reference grid: every baseline, three strengths per family
    /// with 0 meaning the perturbation is disabled.
    fn default() -> Self {
        Self {
            baselines: Baseline::ALL.to_vec(),
            input_gaussian: vec![0.0, 1.0, 2.0],
            hidden_gaussian: vec![0.0, 5.0, 10.0],
            dropout: vec![0.0, 0.4, 0.8],
        }
    }
}

/// A fully resolved invocation: the experiment settings, the sweep axes,
/// and which keys the user set explicitly (the sweep planner keeps
/// explicit architecture choices instead of per-baseline defaults).
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub experiment: ExperimentConfig,
    pub sweep: SweepSpec,
    pub explicit: BTreeSet<String>,
}

#[derive(Default)]
struct TransformKeys {
    kind: Option<(String, String)>,
    variance: Option<(String, String)>,
    layer: Option<(String, String)>,
    rate: Option<(String, String)>,
}

#[derive(Default)]
struct OptimizerKeys {
    kind: Option<(String, String)>,
    lr: Option<(String, String)>,
    beta1: Option<(String, String)>,
    beta2: Option<(String, String)>,
    eps: Option<(String, String)>,
}

/// Builds the experiment configuration and sweep axes from ordered pairs
/// (file first, overrides after; later occurrences win).
pub fn resolve(pairs: &[Pair]) -> AppResult<ResolvedConfig> {
    // The baseline decides the student defaults, so it resolves first no
    // matter where it sits in the file.
    let mut baseline = Baseline::MmStudent;
    for p in pairs {
        if p.key == "baseline" {
            baseline = parse_with::<Baseline>(p)?;
        }
    }
    let mut cfg = ExperimentConfig::defaults_for(baseline);
    let mut sweep = SweepSpec::default();
    let mut explicit = BTreeSet::new();
    let mut tkeys = TransformKeys::default();
    let mut okeys = OptimizerKeys::default();

    for p in pairs {
        explicit.insert(p.key.clone());
        let slot = (p.place.clone(), p.value.clone());
        match p.key.as_str() {
            "baseline" => {}
            "seed" => cfg.seed = parse_with(p)?,
            "seed_count" => cfg.seed_count = parse_with(p)?,
            "epochs" => cfg.epochs = parse_with(p)?,
            "teacher_epochs" => cfg.teacher_epochs = parse_with(p)?,
            "gamma" => cfg.gamma = parse_with(p)?,
            "confidence_weighting" => cfg.confidence_weighting = parse_bool(p)?,
            "label_mode" => cfg.label_mode = parse_with(p)?,
            "loss_mode" => cfg.loss_mode = parse_with(p)?,
            "activation" => cfg.activation = parse_activation_pair(p)?,
            "data.n" => cfg.data.n = parse_with(p)?,
            "data.noise_std" => cfg.data.noise_std = parse_with(p)?,
            "data.n_labeled" => cfg.data.n_labeled = parse_with(p)?,
            "data.n_unlabeled" => cfg.data.n_unlabeled = parse_with(p)?,
            "data.n_test" => cfg.data.n_test = parse_with(p)?,
            "teacher.hidden" => cfg.teacher_hidden = parse_usize_list(p)?,
            "student.hidden" => cfg.student_hidden = parse_usize_list(p)?,
            "transform.kind" => tkeys.kind = Some(slot),
            "transform.variance" => tkeys.variance = Some(slot),
            "transform.layer" => tkeys.layer = Some(slot),
            "transform.rate" => tkeys.rate = Some(slot),
            "optimizer.kind" => okeys.kind = Some(slot),
            "optimizer.lr" => okeys.lr = Some(slot),
            "optimizer.beta1" => okeys.beta1 = Some(slot),
            "optimizer.beta2" => okeys.beta2 = Some(slot),
            "optimizer.eps" => okeys.eps = Some(slot),
            "sweep.baselines" => sweep.baselines = parse_baseline_list(p)?,
            "sweep.input_gaussian" => sweep.input_gaussian = parse_f64_list(p)?,
            "sweep.hidden_gaussian" => sweep.hidden_gaussian = parse_f64_list(p)?,
            "sweep.dropout" => sweep.dropout = parse_f64_list(p)?,
            other => {
                return Err(AppError::Config(format!(
                    "{}: unknown key '{other}'",
                    p.place
                )));
            }
        }
    }

    cfg.transform = resolve_transform(&tkeys)?;
    cfg.optimizer = resolve_optimizer(&okeys)?;
    cfg.student_modality = cfg.baseline.modality();
    cfg.validate()
        .map_err(|e| AppError::Config(e.to_string()))?;
    Ok(ResolvedConfig {
        experiment: cfg,
        sweep,
        explicit,
    })
}

fn resolve_transform(keys: &TransformKeys) -> AppResult<Transform> {
    let kind = keys.kind.as_ref().map(|(_, v)| v.as_str()).unwrap_or("none");
    let reject = |slot: &Option<(String, String)>, key: &str| -> AppResult<()> {
        if let Some((place, _)) = slot {
            return Err(AppError::Config(format!(
                "{place}: key '{key}' does not apply to transform.kind={kind}"
            )));
        }
        Ok(())
    };
    let require_f64 = |slot: &Option<(String, String)>, key: &str| -> AppResult<f64> {
        let (place, value) = slot.as_ref().ok_or_else(|| {
            AppError::Config(format!("transform.kind={kind} requires key '{key}'"))
        })?;
        value.parse().map_err(|_| {
            AppError::Config(format!("{place}: key '{key}': invalid number '{value}'"))
        })
    };
    match kind {
        "none" => {
            reject(&keys.variance, "transform.variance")?;
            reject(&keys.layer, "transform.layer")?;
            reject(&keys.rate, "transform.rate")?;
            Ok(Transform::None)
        }
        "input_gaussian" => {
            reject(&keys.layer, "transform.layer")?;
            reject(&keys.rate, "transform.rate")?;
            Ok(Transform::InputGaussian {
                variance: require_f64(&keys.variance, "transform.variance")?,
            })
        }
        "hidden_gaussian" => {
            reject(&keys.rate, "transform.rate")?;
            let variance = require_f64(&keys.variance, "transform.variance")?;
            let layer_index = match &keys.layer {
                None => 0,
                Some((place, value)) => value.parse().map_err(|_| {
                    AppError::Config(format!(
                        "{place}: key 'transform.layer': invalid integer '{value}'"
                    ))
                })?,
            };
            Ok(Transform::HiddenGaussian {
                layer_index,
                variance,
            })
        }
        "dropout" => {
            reject(&keys.variance, "transform.variance")?;
            reject(&keys.layer, "transform.layer")?;
            Ok(Transform::Dropout {
                rate: require_f64(&keys.rate, "transform.rate")?,
            })
        }
        other => {
            let place = &keys.kind.as_ref().expect("kind is set").0;
            Err(AppError::Config(format!(
                "{place}: key 'transform.kind': unknown kind '{other}' \
                 (expected none, input_gaussian, hidden_gaussian, or dropout)"
            )))
        }
    }
}

fn resolve_optimizer(keys: &OptimizerKeys) -> AppResult<Optimizer> {
    let kind = keys.kind.as_ref().map(|(_, v)| v.as_str()).unwrap_or("adam");
    let get_f64 = |slot: &Option<(String, String)>, key: &str| -> AppResult<Option<f64>> {
        match slot {
            None => Ok(None),
            Some((place, value)) => value.parse().map(Some).map_err(|_| {
                AppError::Config(format!("{place}: key '{key}': invalid number '{value}'"))
            }),
        }
    };
    match kind {
        "adam" => {
            let Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } = Optimizer::default()
            else {
                unreachable!("default optimizer is adam");
            };
            Ok(Optimizer::Adam {
                lr: get_f64(&keys.lr, "optimizer.lr")?.unwrap_or(lr),
                beta1: get_f64(&keys.beta1, "optimizer.beta1")?.unwrap_or(beta1),
                beta2: get_f64(&keys.beta2, "optimizer.beta2")?.unwrap_or(beta2),
                eps: get_f64(&keys.eps, "optimizer.eps")?.unwrap_or(eps),
            })
        }
        "sgd" => {
            for (slot, key) in [
                (&keys.beta1, "optimizer.beta1"),
                (&keys.beta2, "optimizer.beta2"),
                (&keys.eps, "optimizer.eps"),
            ] {
                if let Some((place, _)) = slot {
                    return Err(AppError::Config(format!(
                        "{place}: key '{key}' does not apply to optimizer.kind=sgd"
                    )));
                }
            }
            let lr = get_f64(&keys.lr, "optimizer.lr")?.ok_or_else(|| {
                AppError::Config("optimizer.kind=sgd requires key 'optimizer.lr'".into())
            })?;
            Ok(Optimizer::Sgd { lr })
        }
        other => {
            let place = &keys.kind.as_ref().expect("kind is set").0;
            Err(AppError::Config(format!(
                "{place}: key 'optimizer.kind': unknown kind '{other}' (expected adam or sgd)"
            )))
        }
    }
}

fn parse_with<T: std::str::FromStr>(p: &Pair) -> AppResult<T>
where
    T::Err: std::fmt::Display,
{
    p.value.parse().map_err(|e| {
        AppError::Config(format!(
            "{}: key '{}': invalid value '{}': {e}",
            p.place, p.key, p.value
        ))
    })
}

fn parse_bool(p: &Pair) -> AppResult<bool> {
    match p.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(AppError::Config(format!(
            "{}: key '{}': expected true or false, got '{other}'",
            p.place, p.key
        ))),
    }
}

fn parse_usize_list(p: &Pair) -> AppResult<Vec<usize>> {
    split_list(p)
        .map(|item| {
            item.parse().map_err(|_| {
                AppError::Config(format!(
                    "{}: key '{}': invalid integer '{item}'",
                    p.place, p.key
                ))
            })
        })
        .collect()
}

fn parse_f64_list(p: &Pair) -> AppResult<Vec<f64>> {
    split_list(p)
        .map(|item| {
            item.parse().map_err(|_| {
                AppError::Config(format!(
                    "{}: key '{}': invalid number '{item}'",
                    p.place, p.key
                ))
            })
        })
        .collect()
}

fn parse_baseline_list(p: &Pair) -> AppResult<Vec<Baseline>> {
    let list: Vec<Baseline> = split_list(p)
        .map(|item| {
            item.parse().map_err(|_| {
                AppError::Config(format!(
                    "{}: key '{}': unknown baseline '{item}'",
                    p.place, p.key
                ))
            })
        })
        .collect::<AppResult<_>>()?;
    for (i, b) in list.iter().enumerate() {
        if list[..i].contains(b) {
            return Err(AppError::Config(format!(
                "{}: key '{}': baseline '{b}' listed twice",
                p.place, p.key
            )));
        }
    }
    Ok(list)
}

/// Comma-separated items, whitespace-tolerant; an empty value is an empty
/// list (used to drop a sweep family).
fn split_list<'a>(p: &'a Pair) -> impl Iterator<Item = &'a str> {
    p.value
        .split(',')
        .map(str::trim)
        .filter(|item| !item.is_empty())
}

pub fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Tanh => "tanh",
        Activation::Relu => "relu",
    }
}

fn parse_activation_pair(p: &Pair) -> AppResult<Activation> {
    match p.value.as_str() {
        "tanh" => Ok(Activation::Tanh),
        "relu" => Ok(Activation::Relu),
        other => Err(AppError::Config(format!(
            "{}: key '{}': unknown activation '{other}' (expected tanh or relu)",
            p.place, p.key
        ))),
    }
}

pub fn modality_name(m: Modality) -> &'static str {
    match m {
        Modality::Alpha => "alpha",
        Modality::Beta => "beta",
        Modality::Both => "both",
    }
}

pub fn parse_modality(s: &str) -> Option<Modality> {
    match s {
        "alpha" => Some(Modality::Alpha),
        "beta" => Some(Modality::Beta),
        "both" => Some(Modality::Both),
        _ => None,
    }
}

/// CSV-facing description of a transform: family name and its single
/// strength scalar (variance for the Gaussians, rate for dropout).
pub fn transform_label(t: &Transform) -> (&'static str, f64) {
    match t {
        Transform::None => ("none", 0.0),
        Transform::InputGaussian { variance } => ("input_gaussian", *variance),
        Transform::HiddenGaussian { variance, .. } => ("hidden_gaussian", *variance),
        Transform::Dropout { rate } => ("dropout", *rate),
        Transform::Composite(_) => ("composite", 0.0),
    }
}

/// Shortest-roundtrip float formatting; the one float syntax used across
/// canonical configs and result CSVs.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_usize_list(list: &[usize]) -> String {
    list.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Canonical serialization of a resolved configuration: every semantic
/// field, fixed alphabetical key order, one `key=value` per line. Two
/// configs are the same experiment exactly when these bytes match.
pub fn canonical(cfg: &ExperimentConfig) -> String {
    let mut lines: Vec<String> = vec![
        format!("activation={}", activation_name(cfg.activation)),
        format!("baseline={}", cfg.baseline.name()),
        format!("confidence_weighting={}", cfg.confidence_weighting),
        format!("data.n={}", cfg.data.n),
        format!("data.n_labeled={}", cfg.data.n_labeled),
        format!("data.n_test={}", cfg.data.n_test),
        format!("data.n_unlabeled={}", cfg.data.n_unlabeled),
        format!("data.noise_std={}", fmt_f64(cfg.data.noise_std)),
        format!("epochs={}", cfg.epochs),
        format!("gamma={}", fmt_f64(cfg.gamma)),
        format!("label_mode={}", cfg.label_mode.name()),
        format!("loss_mode={}", cfg.loss_mode.name()),
        format!("seed={}", cfg.seed),
        format!("seed_count={}", cfg.seed_count),
        format!("student.hidden={}", fmt_usize_list(&cfg.student_hidden)),
        format!(
            "student.modality={}",
            modality_name(cfg.student_modality)
        ),
        format!("teacher.hidden={}", fmt_usize_list(&cfg.teacher_hidden)),
        format!("teacher_epochs={}", cfg.teacher_epochs),
    ];
    match cfg.optimizer {
        Optimizer::Sgd { lr } => {
            lines.push("optimizer.kind=sgd".to_string());
            lines.push(format!("optimizer.lr={}", fmt_f64(lr)));
        }
        Optimizer::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            lines.push(format!("optimizer.beta1={}", fmt_f64(beta1)));
            lines.push(format!("optimizer.beta2={}", fmt_f64(beta2)));
            lines.push(format!("optimizer.eps={}", fmt_f64(eps)));
            lines.push("optimizer.kind=adam".to_string());
            lines.push(format!("optimizer.lr={}", fmt_f64(lr)));
        }
    }
    match &cfg.transform {
        Transform::None => lines.push("transform.kind=none".to_string()),
        Transform::InputGaussian { variance } => {
            lines.push("transform.kind=input_gaussian".to_string());
            lines.push(format!("transform.variance={}", fmt_f64(*variance)));
        }
        Transform::HiddenGaussian {
            layer_index,
            variance,
        } => {
            lines.push("transform.kind=hidden_gaussian".to_string());
            lines.push(format!("transform.layer={layer_index}"));
            lines.push(format!("transform.variance={}", fmt_f64(*variance)));
        }
        Transform::Dropout { rate } => {
            lines.push("transform.kind=dropout".to_string());
            lines.push(format!("transform.rate={}", fmt_f64(*rate)));
        }
        Transform::Composite(parts) => {
            // Not expressible in the flat format; serialized recursively
            // so hashing still distinguishes different compositions.
            lines.push(format!("transform.kind=composite[{}]", parts.len()));
            for (i, part) in parts.iter().enumerate() {
                let (name, strength) = transform_label(part);
                lines.push(format!(
                    "transform.part{i}={name}:{}",
                    fmt_f64(strength)
                ));
            }
        }
    }
    lines.sort();
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

/// Canonical form of a sweep invocation: the base config plus the axes.
pub fn sweep_canonical(cfg: &ExperimentConfig, sweep: &SweepSpec) -> String {
    let fmt_list = |list: &[f64]| {
        list.iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut out = canonical(cfg);
    out.push_str(&format!(
        "sweep.baselines={}\n",
        sweep
            .baselines
            .iter()
            .map(|b| b.name())
            .collect::<Vec<_>>()
            .join(",")
    ));
    out.push_str(&format!("sweep.dropout={}\n", fmt_list(&sweep.dropout)));
    out.push_str(&format!(
        "sweep.hidden_gaussian={}\n",
        fmt_list(&sweep.hidden_gaussian)
    ));
    out.push_str(&format!(
        "sweep.input_gaussian={}\n",
        fmt_list(&sweep.input_gaussian)
    ));
    out
}

pub fn hash_text(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of one experiment configuration, seeds included.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hash_text(&canonical(cfg))
}

/// Seed-free identity of a sweep row: the hash of the configuration with
/// the seed fields normalized away. Rows keep their key when the seed
/// range grows, so finished work is reusable.
pub fn row_key(cfg: &ExperimentConfig) -> String {
    let mut normalized = cfg.clone();
    normalized.seed = 0;
    normalized.seed_count = 1;
    config_hash(&normalized)[..16].to_string()
}

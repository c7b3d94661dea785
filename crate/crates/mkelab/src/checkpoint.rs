//! Text checkpoints for trained models.
//!
//! Layout: the `MKELAB1` magic, a short architecture header, then one
//! weight line and one bias line per layer (`w0`, `b0`, `w1`, ...),
//! row-major within a layer. Floats carry 17 fraction digits in
//! scientific notation, enough that reload is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use mkelab_core::mke::TrainedModel;
use mkelab_core::net::{Activation, Mlp};
use mkelab_core::synth::Modality;

use crate::config::{activation_name, modality_name, parse_modality};
use crate::error::{read_err, write_err, AppError, AppResult};

pub const MAGIC: &str = "MKELAB1";

pub fn render(model: &TrainedModel) -> String {
    let mlp = model.mlp();
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(out, "modality {}", modality_name(model.modality()));
    let _ = writeln!(out, "activation {}", activation_name(mlp.activation()));
    out.push_str("sizes");
    for s in mlp.sizes() {
        let _ = write!(out, " {s}");
    }
    out.push('\n');
    let _ = writeln!(out, "seed {}", mlp.seed());
    for l in 0..mlp.num_layers() {
        for (tag, values) in [("w", mlp.layer_weights(l)), ("b", mlp.layer_biases(l))] {
            let _ = write!(out, "{tag}{l}");
            for v in values {
                let _ = write!(out, " {v:.17e}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn save(path: &Path, model: &TrainedModel) -> AppResult<()> {
    std::fs::write(path, render(model)).map_err(|e| write_err(path, e))
}

pub fn load(path: &Path) -> AppResult<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| read_err(path, e))?;
    parse(&text).map_err(|msg| AppError::Config(format!("{}: {msg}", path.display())))
}

/// Parses checkpoint text; errors are bare messages for the caller to
/// prefix with the file name.
pub fn parse(text: &str) -> Result<TrainedModel, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err(format!("not an {MAGIC} checkpoint"));
    }

    let mut field = |name: &str| -> Result<String, String> {
        let line = lines.next().ok_or_else(|| format!("missing '{name}' line"))?;
        let rest = line
            .strip_prefix(name)
            .ok_or_else(|| format!("expected '{name} ...', got '{line}'"))?;
        Ok(rest.trim().to_string())
    };

    let modality = {
        let v = field("modality")?;
        parse_modality(&v).ok_or_else(|| format!("unknown modality '{v}'"))?
    };
    let activation = match field("activation")?.as_str() {
        "tanh" => Activation::Tanh,
        "relu" => Activation::Relu,
        other => return Err(format!("unknown activation '{other}'")),
    };
    let sizes: Vec<usize> = field("sizes")?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| format!("invalid size '{s}'")))
        .collect::<Result<_, _>>()?;
    if sizes.len() < 2 {
        return Err("sizes line needs at least input and output".into());
    }
    let seed: u64 = {
        let v = field("seed")?;
        v.parse().map_err(|_| format!("invalid seed '{v}'"))?
    };

    let layers = sizes.len() - 1;
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    for l in 0..layers {
        for (tag, expected, store) in [
            ("w", sizes[l] * sizes[l + 1], &mut weights),
            ("b", sizes[l + 1], &mut biases),
        ] {
            let name = format!("{tag}{l}");
            let values: Vec<f64> = field(&name)?
                .split_whitespace()
                .map(|s| {
                    s.parse()
                        .map_err(|_| format!("{name}: invalid float '{s}'"))
                })
                .collect::<Result<_, _>>()?;
            if values.len() != expected {
                return Err(format!(
                    "{name}: expected {expected} values, got {}",
                    values.len()
                ));
            }
            store.push(values);
        }
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err("trailing content after the last layer".into());
    }

    let mlp = Mlp::from_parts(sizes, activation, weights, biases, seed)
        .map_err(|e| e.to_string())?;
    TrainedModel::new(mlp, modality, Vec::new()).map_err(|e| e.to_string())
}

/// Convenience for [`Modality`] checks at call sites that need a specific
/// input shape (the pseudo-labeling teacher must be unimodal).
pub fn require_modality(
    model: &TrainedModel,
    want: Modality,
    role: &str,
) -> AppResult<()> {
    if model.modality() != want {
        return Err(AppError::Config(format!(
            "{role} checkpoint observes modality {}, expected {}",
            modality_name(model.modality()),
            modality_name(want)
        )));
    }
    Ok(())
}

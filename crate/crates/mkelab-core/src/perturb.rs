//! Stochastic perturbations and the consistency penalty built on them.
//!
//! A [`Transform`] describes how to disturb a forward pass: Gaussian noise
//! on the input, Gaussian noise on one hidden layer's activations, dropout
//! over all hidden units, or a composition. Sampling a transform yields a
//! concrete [`PerturbDraw`] that the network applies and records, so the
//! same draw can be replayed for gradient checks.
//!
//! The consistency penalty for input `x` is the Euclidean distance between
//! the softmax outputs of a clean pass and one perturbed pass. Gradients
//! flow through both branches; at zero distance the subgradient is zero.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::net::{l2_distance, softmax, softmax_vjp, HiddenOp, Mlp, PerturbDraw, Tape};

/// Specification of a stochastic perturbation.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    /// Leave the forward pass untouched.
    None,
    /// Add `N(0, variance)` to every input coordinate.
    InputGaussian { variance: f64 },
    /// Add `N(0, variance)` to one hidden layer's post-activation output.
    HiddenGaussian { layer_index: usize, variance: f64 },
    /// Zero each hidden unit with probability `rate`, rescaling survivors
    /// by `1 / (1 - rate)`. Applies to every hidden layer.
    Dropout { rate: f64 },
    /// Apply several transforms in order. Nesting is not allowed.
    Composite(Vec<Transform>),
}

impl Transform {
    /// Hidden Gaussian noise on the first hidden layer.
    pub fn hidden_gaussian(variance: f64) -> Self {
        Transform::HiddenGaussian {
            layer_index: 0,
            variance,
        }
    }

    /// Checks parameters and compatibility with a net of layer `sizes`.
    pub fn validate(&self, sizes: &[usize]) -> Result<()> {
        let hidden_layers = sizes.len().saturating_sub(2);
        match self {
            Transform::None => Ok(()),
            Transform::InputGaussian { variance } => validate_variance(*variance),
            Transform::HiddenGaussian {
                layer_index,
                variance,
            } => {
                validate_variance(*variance)?;
                if *layer_index >= hidden_layers {
                    return Err(Error::InvalidConfig(format!(
                        "hidden_gaussian layer {layer_index} out of range: net has \
                         {hidden_layers} hidden layers"
                    )));
                }
                Ok(())
            }
            Transform::Dropout { rate } => {
                if !(rate.is_finite() && (0.0..1.0).contains(rate)) {
                    return Err(Error::InvalidConfig(format!(
                        "dropout rate {rate} outside [0, 1)"
                    )));
                }
                Ok(())
            }
            Transform::Composite(parts) => {
                if parts.is_empty() {
                    return Err(Error::InvalidConfig(
                        "composite transform with no parts".into(),
                    ));
                }
                for part in parts {
                    if matches!(part, Transform::Composite(_)) {
                        return Err(Error::InvalidConfig(
                            "composite transforms cannot nest".into(),
                        ));
                    }
                    part.validate(sizes)?;
                }
                Ok(())
            }
        }
    }

    /// Draws concrete noise and masks for one forward pass through a net
    /// of layer `sizes`.
    pub fn sample<R: Rng>(&self, sizes: &[usize], rng: &mut R) -> Result<PerturbDraw> {
        self.validate(sizes)?;
        let mut draw = PerturbDraw::identity(sizes.len() - 2);
        self.sample_into(sizes, rng, &mut draw)?;
        Ok(draw)
    }

    /// Redraws `draw`'s noise values and masks in place for the next step.
    ///
    /// Consumes the generator exactly like [`Self::sample`], so a loop
    /// calling either produces the same stream. When `draw` already has
    /// this transform's op structure the buffers are refilled without
    /// allocating; any other draw (typically the first call) is rebuilt.
    /// Composite transforms always rebuild.
    pub fn resample_into<R: Rng>(
        &self,
        sizes: &[usize],
        rng: &mut R,
        draw: &mut PerturbDraw,
    ) -> Result<()> {
        let hidden_layers = sizes.len().saturating_sub(2);
        let refilled = draw.hidden.len() == hidden_layers && self.refill(sizes, rng, draw)?;
        if !refilled {
            self.validate(sizes)?;
            draw.input_noise = None;
            draw.hidden.clear();
            draw.hidden.resize_with(hidden_layers, Vec::new);
            self.sample_into(sizes, rng, draw)?;
        }
        Ok(())
    }

    /// In-place redraw; `Ok(false)` means the structure did not match.
    fn refill<R: Rng>(&self, sizes: &[usize], rng: &mut R, draw: &mut PerturbDraw) -> Result<bool> {
        match self {
            Transform::None => {
                Ok(draw.input_noise.is_none() && draw.hidden.iter().all(Vec::is_empty))
            }
            Transform::InputGaussian { variance } => {
                if !draw.hidden.iter().all(Vec::is_empty) {
                    return Ok(false);
                }
                match &mut draw.input_noise {
                    Some(buf) if buf.len() == sizes[0] => {
                        fill_gaussian(buf, *variance, rng)?;
                        Ok(true)
                    }
                    _ => Ok(false),
                }
            }
            Transform::HiddenGaussian {
                layer_index,
                variance,
            } => {
                if draw.input_noise.is_some() || *layer_index >= draw.hidden.len() {
                    return Ok(false);
                }
                for (l, ops) in draw.hidden.iter().enumerate() {
                    if l != *layer_index && !ops.is_empty() {
                        return Ok(false);
                    }
                }
                match draw.hidden[*layer_index].as_mut_slice() {
                    [HiddenOp::AddNoise(buf)] if buf.len() == sizes[*layer_index + 1] => {
                        fill_gaussian(buf, *variance, rng)?;
                        Ok(true)
                    }
                    _ => Ok(false),
                }
            }
            Transform::Dropout { rate } => {
                if draw.input_noise.is_some() {
                    return Ok(false);
                }
                let keep = 1.0 - rate;
                for (l, ops) in draw.hidden.iter_mut().enumerate() {
                    match ops.as_mut_slice() {
                        [HiddenOp::Dropout { mask, keep: k }] if mask.len() == sizes[l + 1] => {
                            for m in mask.iter_mut() {
                                *m = rng.random_bool(keep);
                            }
                            *k = keep;
                        }
                        _ => return Ok(false),
                    }
                }
                Ok(true)
            }
            Transform::Composite(_) => Ok(false),
        }
    }

    fn sample_into<R: Rng>(
        &self,
        sizes: &[usize],
        rng: &mut R,
        draw: &mut PerturbDraw,
    ) -> Result<()> {
        match self {
            Transform::None => {}
            Transform::InputGaussian { variance } => {
                let noise = gaussian_vector(sizes[0], *variance, rng)?;
                match &mut draw.input_noise {
                    Some(existing) => {
                        for (e, n) in existing.iter_mut().zip(&noise) {
                            *e += n;
                        }
                    }
                    None => draw.input_noise = Some(noise),
                }
            }
            Transform::HiddenGaussian {
                layer_index,
                variance,
            } => {
                let width = sizes[*layer_index + 1];
                let noise = gaussian_vector(width, *variance, rng)?;
                draw.hidden[*layer_index].push(HiddenOp::AddNoise(noise));
            }
            Transform::Dropout { rate } => {
                let keep = 1.0 - rate;
                for (h, ops) in draw.hidden.iter_mut().enumerate() {
                    let width = sizes[h + 1];
                    let mask = (0..width).map(|_| rng.random_bool(keep)).collect();
                    ops.push(HiddenOp::Dropout { mask, keep });
                }
            }
            Transform::Composite(parts) => {
                for part in parts {
                    part.sample_into(sizes, rng, draw)?;
                }
            }
        }
        Ok(())
    }
}

fn validate_variance(variance: f64) -> Result<()> {
    if !(variance.is_finite() && variance >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "noise variance {variance} must be finite and non-negative"
        )));
    }
    Ok(())
}

fn gaussian_vector<R: Rng>(len: usize, variance: f64, rng: &mut R) -> Result<Vec<f64>> {
    let mut buf = alloc::vec![0.0; len];
    fill_gaussian(&mut buf, variance, rng)?;
    Ok(buf)
}

fn fill_gaussian<R: Rng>(buf: &mut [f64], variance: f64, rng: &mut R) -> Result<()> {
    let normal = Normal::new(0.0, libm::sqrt(variance))
        .map_err(|_| Error::InvalidConfig(format!("bad noise variance {variance}")))?;
    for b in buf {
        *b = normal.sample(rng);
    }
    Ok(())
}

/// One forward pass under a fresh draw of `t`.
pub fn perturbed_forward<R: Rng>(
    mlp: &Mlp,
    x: &[f64],
    t: &Transform,
    rng: &mut R,
) -> Result<(Vec<f64>, Tape)> {
    let draw = t.sample(mlp.sizes(), rng)?;
    mlp.forward_perturbed(x, &draw)
}

/// Consistency penalty for one input plus everything needed to backprop it.
///
/// `value` is `‖softmax(clean) − softmax(perturbed)‖₂`. The clean branch is
/// an ordinary forward pass, so callers combining this penalty with a
/// classification loss can reuse `clean_logits`/`clean_tape` instead of
/// running a third pass.
#[derive(Debug, Clone)]
pub struct RegPair {
    pub value: f64,
    pub clean_logits: Vec<f64>,
    pub clean_tape: Tape,
    pub perturbed_logits: Vec<f64>,
    pub perturbed_tape: Tape,
}

impl RegPair {
    /// Upstream logit gradients `(d value/d clean, d value/d perturbed)`.
    ///
    /// At `value == 0` the distance is not differentiable; both upstreams
    /// are the zero subgradient there.
    pub fn upstreams(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let k = self.clean_logits.len();
        if self.value == 0.0 {
            return Ok((alloc::vec![0.0; k], alloc::vec![0.0; k]));
        }
        let zc = softmax(&self.clean_logits)?;
        let zp = softmax(&self.perturbed_logits)?;
        let unit: Vec<f64> = zc
            .values()
            .iter()
            .zip(zp.values())
            .map(|(&c, &p)| (c - p) / self.value)
            .collect();
        let neg: Vec<f64> = unit.iter().map(|&u| -u).collect();
        Ok((
            softmax_vjp(zc.values(), &unit),
            softmax_vjp(zp.values(), &neg),
        ))
    }
}

/// Clean-vs-perturbed consistency penalty with a fresh draw of `t`.
pub fn reg_loss<R: Rng>(mlp: &Mlp, x: &[f64], t: &Transform, rng: &mut R) -> Result<RegPair> {
    let draw = t.sample(mlp.sizes(), rng)?;
    reg_loss_with_draw(mlp, x, &draw)
}

/// Consistency penalty under a caller-supplied draw (frozen for replay).
pub fn reg_loss_with_draw(mlp: &Mlp, x: &[f64], draw: &PerturbDraw) -> Result<RegPair> {
    let (clean_logits, clean_tape) = mlp.forward(x)?;
    let (perturbed_logits, perturbed_tape) = mlp.forward_perturbed(x, draw)?;
    let zc = softmax(&clean_logits)?;
    let zp = softmax(&perturbed_logits)?;
    let value = l2_distance(zc.values(), zp.values())?;
    Ok(RegPair {
        value,
        clean_logits,
        clean_tape,
        perturbed_logits,
        perturbed_tape,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Activation;
    use crate::stream::{rng, Domain};
    use alloc::vec;

    fn probe_net() -> Mlp {
        // fixed non-constant net so statistical tests replay exactly
        Mlp::new(&[2, 6, 6, 2], Activation::Tanh, 424242).unwrap()
    }

    #[test]
    fn none_transform_is_identity_and_zero_penalty() {
        let net = probe_net();
        let mut r = rng(1, Domain::TrainPerturb);
        let (pert, _) = perturbed_forward(&net, &[0.3, -0.8], &Transform::None, &mut r).unwrap();
        let (clean, _) = net.forward(&[0.3, -0.8]).unwrap();
        assert_eq!(pert, clean);

        let pair = reg_loss(&net, &[0.3, -0.8], &Transform::None, &mut r).unwrap();
        assert_eq!(pair.value, 0.0);
        let (uc, up) = pair.upstreams().unwrap();
        assert!(uc.iter().chain(&up).all(|&g| g == 0.0));
    }

    #[test]
    fn zero_rate_dropout_and_zero_variance_noise_are_identity() {
        let net = probe_net();
        let x = [0.5, 0.25];
        let (clean, _) = net.forward(&x).unwrap();
        for t in [
            Transform::Dropout { rate: 0.0 },
            Transform::InputGaussian { variance: 0.0 },
            Transform::hidden_gaussian(0.0),
        ] {
            let mut r = rng(2, Domain::TrainPerturb);
            let (pert, _) = perturbed_forward(&net, &x, &t, &mut r).unwrap();
            assert_eq!(pert, clean, "{t:?}");
        }
    }

    #[test]
    fn input_noise_variance_matches_parameter() {
        let sizes = [2usize, 4, 2];
        let t = Transform::InputGaussian { variance: 1.0 };
        let mut r = rng(3, Domain::TrainPerturb);
        let n = 10_000;
        let mut sums = [0.0f64; 2];
        let mut sqs = [0.0f64; 2];
        for _ in 0..n {
            let draw = t.sample(&sizes, &mut r).unwrap();
            let noise = draw.input_noise.unwrap();
            for c in 0..2 {
                sums[c] += noise[c];
                sqs[c] += noise[c] * noise[c];
            }
        }
        for c in 0..2 {
            let mean = sums[c] / n as f64;
            let var = sqs[c] / n as f64 - mean * mean;
            assert!((var - 1.0).abs() < 0.05, "coordinate {c}: variance {var}");
        }
    }

    #[test]
    fn dropout_rescaling_preserves_expected_activation() {
        let sizes = [2usize, 8, 2];
        let t = Transform::Dropout { rate: 0.4 };
        let h: Vec<f64> = (0..8).map(|i| 0.2 + 0.1 * i as f64).collect();
        let mut r = rng(4, Domain::TrainPerturb);
        let n = 1000;
        let mut mean = vec![0.0f64; 8];
        for _ in 0..n {
            let draw = t.sample(&sizes, &mut r).unwrap();
            match &draw.hidden[0][0] {
                HiddenOp::Dropout { mask, keep } => {
                    for (m, (&kept, &hj)) in mean.iter_mut().zip(mask.iter().zip(&h)) {
                        *m += if kept { hj / keep } else { 0.0 };
                    }
                }
                other => panic!("expected dropout op, got {other:?}"),
            }
        }
        for (j, (m, &hj)) in mean.iter().zip(&h).enumerate() {
            let avg = m / n as f64;
            assert!(
                (avg - hj).abs() / hj < 0.05,
                "unit {j}: mean {avg} vs clean {hj}"
            );
        }
    }

    #[test]
    fn mean_penalty_grows_with_input_variance() {
        let net = probe_net();
        let x = [0.4, -0.2];
        let mut means = Vec::new();
        for v in [0.0, 1.0, 2.0] {
            let t = Transform::InputGaussian { variance: v };
            let mut r = rng(5, Domain::TrainPerturb);
            let total: f64 = (0..1000)
                .map(|_| reg_loss(&net, &x, &t, &mut r).unwrap().value)
                .sum();
            means.push(total / 1000.0);
        }
        assert_eq!(means[0], 0.0);
        assert!(means[0] <= means[1] && means[1] <= means[2], "{means:?}");
    }

    #[test]
    fn penalty_value_matches_recomputation_and_is_nonnegative() {
        let net = probe_net();
        let t = Transform::Composite(vec![
            Transform::InputGaussian { variance: 0.5 },
            Transform::Dropout { rate: 0.3 },
        ]);
        let mut r = rng(6, Domain::TrainPerturb);
        for i in 0..50 {
            let x = [libm::sin(i as f64), libm::cos(i as f64 * 0.7)];
            let pair = reg_loss(&net, &x, &t, &mut r).unwrap();
            assert!(pair.value >= 0.0);
            let zc = softmax(&pair.clean_logits).unwrap();
            let zp = softmax(&pair.perturbed_logits).unwrap();
            let recomputed = l2_distance(zc.values(), zp.values()).unwrap();
            assert_eq!(pair.value, recomputed);
        }
    }

    #[test]
    fn constant_classifier_has_zero_penalty() {
        // zero weights and biases: output never depends on the input
        let net = Mlp::from_parts(
            vec![2, 4, 2],
            Activation::Tanh,
            vec![vec![0.0; 8], vec![0.0; 8]],
            vec![vec![0.0; 4], vec![0.0; 2]],
            0,
        )
        .unwrap();
        let t = Transform::InputGaussian { variance: 4.0 };
        let mut r = rng(7, Domain::TrainPerturb);
        for _ in 0..20 {
            let pair = reg_loss(&net, &[1.0, -2.0], &t, &mut r).unwrap();
            assert_eq!(pair.value, 0.0);
        }
    }

    #[test]
    fn validation_rejects_bad_transforms() {
        let sizes = [2usize, 4, 4, 2];
        let bad: &[Transform] = &[
            Transform::InputGaussian { variance: -1.0 },
            Transform::InputGaussian {
                variance: f64::NAN,
            },
            Transform::HiddenGaussian {
                layer_index: 2,
                variance: 1.0,
            },
            Transform::Dropout { rate: 1.0 },
            Transform::Dropout { rate: -0.1 },
            Transform::Composite(vec![]),
            Transform::Composite(vec![Transform::Composite(vec![Transform::None])]),
        ];
        for t in bad {
            assert!(t.validate(&sizes).is_err(), "{t:?} should be rejected");
        }
        let good = Transform::Composite(vec![
            Transform::InputGaussian { variance: 2.0 },
            Transform::HiddenGaussian {
                layer_index: 1,
                variance: 5.0,
            },
            Transform::Dropout { rate: 0.8 },
        ]);
        assert!(good.validate(&sizes).is_ok());
    }

    #[test]
    fn dropout_masks_every_hidden_layer() {
        let sizes = [2usize, 16, 16, 2];
        let t = Transform::Dropout { rate: 0.5 };
        let mut r = rng(8, Domain::TrainPerturb);
        let draw = t.sample(&sizes, &mut r).unwrap();
        assert_eq!(draw.hidden.len(), 2);
        for ops in &draw.hidden {
            assert_eq!(ops.len(), 1);
        }
    }

    #[test]
    fn composite_applies_parts_in_order() {
        let sizes = [2usize, 4, 2];
        let t = Transform::Composite(vec![
            Transform::hidden_gaussian(1.0),
            Transform::Dropout { rate: 0.5 },
        ]);
        let mut r = rng(9, Domain::TrainPerturb);
        let draw = t.sample(&sizes, &mut r).unwrap();
        assert!(matches!(draw.hidden[0][0], HiddenOp::AddNoise(_)));
        assert!(matches!(draw.hidden[0][1], HiddenOp::Dropout { .. }));
    }
}

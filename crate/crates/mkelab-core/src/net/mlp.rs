//! Fully connected network with a hand-rolled reverse pass.
//!
//! A forward pass records a [`Tape`]; [`Mlp::backward`] replays it against
//! the current weights. The tape must come from the same parameters the
//! backward pass uses: run all forward/backward pairs for a step before
//! applying the optimizer update.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Elementwise nonlinearity between affine layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(x),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's own output.
    fn derivative_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One concrete noise realization for a single forward pass.
///
/// Sampling lives in the `perturb` module; the network only applies a draw.
/// Input noise is added to the input vector, hidden ops run after the
/// layer's activation in the order listed.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbDraw {
    pub input_noise: Option<Vec<f64>>,
    /// Ops per hidden layer, outermost index matching hidden-layer order.
    pub hidden: Vec<Vec<HiddenOp>>,
}

impl PerturbDraw {
    /// A draw that perturbs nothing, for a net with `hidden_layers` hidden
    /// layers.
    pub fn identity(hidden_layers: usize) -> Self {
        Self {
            input_noise: None,
            hidden: vec![Vec::new(); hidden_layers],
        }
    }
}

/// A single post-activation operation on one hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub enum HiddenOp {
    /// Add this vector elementwise.
    AddNoise(Vec<f64>),
    /// Zero masked-out units and rescale survivors by `1 / keep`.
    Dropout { mask: Vec<bool>, keep: f64 },
}

/// Record of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input to each affine layer, after any perturbation ops.
    layer_inputs: Vec<Vec<f64>>,
    /// Clean activation output per hidden layer, before perturbation ops.
    act_outputs: Vec<Vec<f64>>,
    /// Perturbation ops that ran after each hidden activation.
    ops: Vec<Vec<HiddenOp>>,
    out_dim: usize,
}

/// Reusable buffers for tight forward/backward loops.
///
/// [`Mlp::forward_ws`] and [`Mlp::backward_ws`] read and write these in
/// place, so one workspace per training loop replaces the per-sample tape
/// and gradient allocations of the plain API. A workspace carries no
/// state that outlives a forward/backward pair; reusing one across
/// networks of different shapes is fine, the buffers just regrow.
#[derive(Debug, Default)]
pub struct Workspace {
    layer_inputs: Vec<Vec<f64>>,
    act_outputs: Vec<Vec<f64>>,
    logits: Vec<f64>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Per-parameter gradients, shaped exactly like the network's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    /// All-zero gradients shaped like `mlp`.
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// `self += scale * other`; shapes must match.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) -> Result<()> {
        if self.weights.len() != other.weights.len() {
            return Err(Error::DimensionMismatch {
                context: "gradient layer count",
                expected: self.weights.len(),
                actual: other.weights.len(),
            });
        }
        for (mine, theirs) in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .zip(other.weights.iter().chain(other.biases.iter()))
        {
            if mine.len() != theirs.len() {
                return Err(Error::DimensionMismatch {
                    context: "gradient layer width",
                    expected: mine.len(),
                    actual: theirs.len(),
                });
            }
            for (m, t) in mine.iter_mut().zip(theirs) {
                *m += scale * t;
            }
        }
        Ok(())
    }

    /// `self *= scale`.
    pub fn scale(&mut self, scale: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for g in v {
                *g *= scale;
            }
        }
    }

    /// Resets every entry to zero, keeping the allocation.
    pub fn zero(&mut self) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for g in v {
                *g = 0.0;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|v| v.iter().all(|g| g.is_finite()))
    }
}

/// Multilayer perceptron with double-precision weights.
///
/// `sizes` runs input width, hidden widths, output width. Layer `l` stores
/// its weight matrix row-major as `sizes[l+1]` rows of `sizes[l]` columns.
/// Initialization is Glorot-uniform over `[-sqrt(6/(fan_in+fan_out)), ..]`
/// with zero biases, drawn from a ChaCha generator so the same seed gives
/// bit-identical weights on every platform.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
    seed: u64,
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::InvalidConfig(alloc::format!(
            "network needs an input and an output layer, got {} sizes",
            sizes.len()
        )));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "zero-width layer in {sizes:?}"
        )));
    }
    if sizes[sizes.len() - 1] < 2 {
        return Err(Error::InvalidConfig(alloc::format!(
            "output layer needs at least 2 classes, got {}",
            sizes[sizes.len() - 1]
        )));
    }
    Ok(())
}

impl Mlp {
    /// Fresh network with Glorot-uniform weights drawn from `seed`.
    pub fn new(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        validate_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            let w = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            activation,
            seed,
        })
    }

    /// Rebuilds a network from explicit parameters (e.g. a checkpoint).
    pub fn from_parts(
        sizes: Vec<usize>,
        activation: Activation,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        validate_sizes(&sizes)?;
        let layers = sizes.len() - 1;
        if weights.len() != layers {
            return Err(Error::DimensionMismatch {
                context: "weight layer count",
                expected: layers,
                actual: weights.len(),
            });
        }
        if biases.len() != layers {
            return Err(Error::DimensionMismatch {
                context: "bias layer count",
                expected: layers,
                actual: biases.len(),
            });
        }
        for l in 0..layers {
            if weights[l].len() != sizes[l] * sizes[l + 1] {
                return Err(Error::DimensionMismatch {
                    context: "weight matrix size",
                    expected: sizes[l] * sizes[l + 1],
                    actual: weights[l].len(),
                });
            }
            if biases[l].len() != sizes[l + 1] {
                return Err(Error::DimensionMismatch {
                    context: "bias vector size",
                    expected: sizes[l + 1],
                    actual: biases[l].len(),
                });
            }
            if weights[l].iter().chain(biases[l].iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("network parameters"));
            }
        }
        Ok(Self {
            sizes,
            weights,
            biases,
            activation,
            seed,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of affine layers.
    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Number of hidden (activated) layers.
    pub fn hidden_layers(&self) -> usize {
        self.sizes.len() - 2
    }

    /// Row-major weight matrix of layer `l`.
    pub fn layer_weights(&self, l: usize) -> &[f64] {
        &self.weights[l]
    }

    pub fn layer_biases(&self, l: usize) -> &[f64] {
        &self.biases[l]
    }

    /// Weights first (layer by layer, row-major), then biases.
    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    fn param_slot(&mut self, mut idx: usize) -> Option<&mut f64> {
        for w in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            if idx < w.len() {
                return Some(&mut w[idx]);
            }
            idx -= w.len();
        }
        None
    }

    /// Reads the parameter at flat index `idx` (see [`Self::param_count`]).
    pub fn get_param(&self, mut idx: usize) -> Result<f64> {
        for w in self.weights.iter().chain(self.biases.iter()) {
            if idx < w.len() {
                return Ok(w[idx]);
            }
            idx -= w.len();
        }
        Err(Error::DimensionMismatch {
            context: "parameter index",
            expected: self.param_count(),
            actual: idx,
        })
    }

    /// Overwrites the parameter at flat index `idx`.
    pub fn set_param(&mut self, idx: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite("parameter value"));
        }
        let count = self.param_count();
        match self.param_slot(idx) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(Error::DimensionMismatch {
                context: "parameter index",
                expected: count,
                actual: idx,
            }),
        }
    }

    /// Flat view of a gradient in the same order as [`Self::get_param`].
    pub fn flat_grad(grads: &Gradients, mut idx: usize) -> Result<f64> {
        for v in grads.weights.iter().chain(grads.biases.iter()) {
            if idx < v.len() {
                return Ok(v[idx]);
            }
            idx -= v.len();
        }
        Err(Error::DimensionMismatch {
            context: "gradient index",
            expected: 0,
            actual: idx,
        })
    }

    pub(crate) fn weights_mut(&mut self) -> (&mut Vec<Vec<f64>>, &mut Vec<Vec<f64>>) {
        (&mut self.weights, &mut self.biases)
    }

    /// Clean forward pass: logits plus the tape for a later backward pass.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let draw = PerturbDraw::identity(self.hidden_layers());
        self.forward_with(x, &draw)
    }

    /// Forward pass under a concrete perturbation draw.
    pub fn forward_perturbed(&self, x: &[f64], draw: &PerturbDraw) -> Result<(Vec<f64>, Tape)> {
        self.forward_with(x, draw)
    }

    fn forward_with(&self, x: &[f64], draw: &PerturbDraw) -> Result<(Vec<f64>, Tape)> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "forward input",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        if draw.hidden.len() != self.hidden_layers() {
            return Err(Error::DimensionMismatch {
                context: "perturbation draw hidden layers",
                expected: self.hidden_layers(),
                actual: draw.hidden.len(),
            });
        }

        let mut a = x.to_vec();
        if let Some(noise) = &draw.input_noise {
            if noise.len() != a.len() {
                return Err(Error::DimensionMismatch {
                    context: "input noise width",
                    expected: a.len(),
                    actual: noise.len(),
                });
            }
            for (ai, ni) in a.iter_mut().zip(noise) {
                *ai += ni;
            }
        }

        let layers = self.num_layers();
        let mut layer_inputs = Vec::with_capacity(layers);
        let mut act_outputs = Vec::with_capacity(layers - 1);
        for l in 0..layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.weights[l];
            let mut z = self.biases[l].clone();
            for (i, zi) in z.iter_mut().enumerate() {
                let row = &w[i * fan_in..(i + 1) * fan_in];
                let mut acc = *zi;
                for (wij, aj) in row.iter().zip(&a) {
                    acc += wij * aj;
                }
                *zi = acc;
            }
            layer_inputs.push(a);
            if l + 1 == layers {
                a = z;
                break;
            }
            for zi in z.iter_mut() {
                *zi = self.activation.apply(*zi);
            }
            act_outputs.push(z.clone());
            for op in &draw.hidden[l] {
                apply_hidden_op(op, &mut z, fan_out)?;
            }
            a = z;
        }

        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forward output"));
        }
        let tape = Tape {
            layer_inputs,
            act_outputs,
            ops: draw.hidden.clone(),
            out_dim: self.output_dim(),
        };
        Ok((a, tape))
    }

    /// Perturbed forward pass into workspace buffers; returns the logits.
    ///
    /// Training-loop variant of [`Self::forward_perturbed`]: nothing is
    /// allocated once the workspace has warmed up. The matching backward
    /// pass is [`Self::backward_ws`] with the same `draw`.
    pub fn forward_ws<'w>(
        &self,
        x: &[f64],
        draw: &PerturbDraw,
        ws: &'w mut Workspace,
    ) -> Result<&'w [f64]> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "forward input",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        if draw.hidden.len() != self.hidden_layers() {
            return Err(Error::DimensionMismatch {
                context: "perturbation draw hidden layers",
                expected: self.hidden_layers(),
                actual: draw.hidden.len(),
            });
        }
        let layers = self.num_layers();
        ws.layer_inputs.resize_with(layers, Vec::new);
        ws.act_outputs.resize_with(layers - 1, Vec::new);

        {
            let a = &mut ws.layer_inputs[0];
            a.clear();
            a.extend_from_slice(x);
            if let Some(noise) = &draw.input_noise {
                if noise.len() != a.len() {
                    return Err(Error::DimensionMismatch {
                        context: "input noise width",
                        expected: a.len(),
                        actual: noise.len(),
                    });
                }
                for (ai, ni) in a.iter_mut().zip(noise) {
                    *ai += ni;
                }
            }
        }

        for l in 0..layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.weights[l];
            let last = l + 1 == layers;
            // the affine output lands in the next layer's input buffer,
            // or in the logits buffer for the output layer
            let (inputs_done, inputs_rest) = ws.layer_inputs.split_at_mut(l + 1);
            let a = &inputs_done[l];
            let z = if last {
                &mut ws.logits
            } else {
                &mut inputs_rest[0]
            };
            z.clear();
            for (i, &bi) in self.biases[l].iter().enumerate() {
                let row = &w[i * fan_in..(i + 1) * fan_in];
                let mut acc = bi;
                for (wij, aj) in row.iter().zip(a.iter()) {
                    acc += wij * aj;
                }
                z.push(acc);
            }
            if last {
                break;
            }
            let act = &mut ws.act_outputs[l];
            act.clear();
            for zi in z.iter_mut() {
                *zi = self.activation.apply(*zi);
                act.push(*zi);
            }
            for op in &draw.hidden[l] {
                apply_hidden_op(op, z, fan_out)?;
            }
        }

        if ws.logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forward output"));
        }
        Ok(&ws.logits)
    }

    /// Backward pass matching the last [`Self::forward_ws`] on `ws`.
    ///
    /// `draw` must be the one that forward pass used; dropout rescaling is
    /// replayed from it. Gradients accumulate into `grads`.
    pub fn backward_ws(
        &self,
        draw: &PerturbDraw,
        upstream: &[f64],
        ws: &mut Workspace,
        grads: &mut Gradients,
    ) -> Result<()> {
        let layers = self.num_layers();
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "backward upstream",
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        if ws.layer_inputs.len() != layers
            || (0..layers).any(|l| ws.layer_inputs[l].len() != self.sizes[l])
        {
            return Err(Error::DimensionMismatch {
                context: "workspace layer widths",
                expected: layers,
                actual: ws.layer_inputs.len(),
            });
        }
        if grads.weights.len() != layers
            || (0..layers).any(|l| grads.weights[l].len() != self.sizes[l] * self.sizes[l + 1])
        {
            return Err(Error::DimensionMismatch {
                context: "gradient accumulator shape",
                expected: layers,
                actual: grads.weights.len(),
            });
        }
        ws.delta.clear();
        ws.delta.extend_from_slice(upstream);
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &ws.layer_inputs[l];
            let gw = &mut grads.weights[l];
            for i in 0..fan_out {
                let di = ws.delta[i];
                let row = &mut gw[i * fan_in..(i + 1) * fan_in];
                for (g, aj) in row.iter_mut().zip(input) {
                    *g += di * aj;
                }
            }
            for (g, di) in grads.biases[l].iter_mut().zip(&ws.delta) {
                *g += di;
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let d = &mut ws.delta_next;
            d.clear();
            d.resize(fan_in, 0.0);
            for (i, di) in ws.delta.iter().enumerate() {
                let row = &w[i * fan_in..(i + 1) * fan_in];
                for (dj, wij) in d.iter_mut().zip(row) {
                    *dj += wij * di;
                }
            }
            for op in draw.hidden[l - 1].iter().rev() {
                match op {
                    HiddenOp::AddNoise(_) => {}
                    HiddenOp::Dropout { mask, keep } => {
                        for (dj, &kept) in d.iter_mut().zip(mask) {
                            *dj = if kept { *dj / keep } else { 0.0 };
                        }
                    }
                }
            }
            let h = &ws.act_outputs[l - 1];
            for (dj, &hj) in d.iter_mut().zip(h) {
                *dj *= self.activation.derivative_from_output(hj);
            }
            core::mem::swap(&mut ws.delta, &mut ws.delta_next);
        }
        Ok(())
    }

    /// Gradients of a scalar loss with upstream derivative `upstream` in
    /// the logits, replayed through `tape`.
    ///
    /// The tape must have been produced by `self` with the current
    /// parameters; a tape recorded under a different architecture is
    /// rejected, a tape recorded before a parameter update silently yields
    /// wrong gradients, so order forward/backward/step carefully.
    pub fn backward(&self, tape: &Tape, upstream: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(tape, upstream, &mut grads)?;
        Ok(grads)
    }

    /// [`Self::backward`], accumulated into `grads` instead of allocated.
    ///
    /// Entries are added, not overwritten, so one accumulator can absorb a
    /// whole batch without a per-sample allocation.
    pub fn backward_into(&self, tape: &Tape, upstream: &[f64], grads: &mut Gradients) -> Result<()> {
        let layers = self.num_layers();
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "backward upstream",
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        if tape.out_dim != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "tape output width",
                expected: self.output_dim(),
                actual: tape.out_dim,
            });
        }
        if tape.layer_inputs.len() != layers {
            return Err(Error::DimensionMismatch {
                context: "tape layer count",
                expected: layers,
                actual: tape.layer_inputs.len(),
            });
        }
        for l in 0..layers {
            if tape.layer_inputs[l].len() != self.sizes[l] {
                return Err(Error::DimensionMismatch {
                    context: "tape layer width",
                    expected: self.sizes[l],
                    actual: tape.layer_inputs[l].len(),
                });
            }
        }

        if grads.weights.len() != layers
            || (0..layers).any(|l| grads.weights[l].len() != self.sizes[l] * self.sizes[l + 1])
        {
            return Err(Error::DimensionMismatch {
                context: "gradient accumulator shape",
                expected: layers,
                actual: grads.weights.len(),
            });
        }
        let mut delta = upstream.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &tape.layer_inputs[l];
            {
                let gw = &mut grads.weights[l];
                for i in 0..fan_out {
                    let di = delta[i];
                    let row = &mut gw[i * fan_in..(i + 1) * fan_in];
                    for (g, aj) in row.iter_mut().zip(input) {
                        *g += di * aj;
                    }
                }
                for (g, di) in grads.biases[l].iter_mut().zip(&delta) {
                    *g += di;
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let mut d = vec![0.0; fan_in];
            for (i, di) in delta.iter().enumerate() {
                let row = &w[i * fan_in..(i + 1) * fan_in];
                for (dj, wij) in d.iter_mut().zip(row) {
                    *dj += wij * di;
                }
            }
            for op in tape.ops[l - 1].iter().rev() {
                match op {
                    HiddenOp::AddNoise(_) => {}
                    HiddenOp::Dropout { mask, keep } => {
                        for (dj, &kept) in d.iter_mut().zip(mask) {
                            *dj = if kept { *dj / keep } else { 0.0 };
                        }
                    }
                }
            }
            let h = &tape.act_outputs[l - 1];
            for (dj, &hj) in d.iter_mut().zip(h) {
                *dj *= self.activation.derivative_from_output(hj);
            }
            delta = d;
        }
        Ok(())
    }
}

fn apply_hidden_op(op: &HiddenOp, h: &mut Vec<f64>, width: usize) -> Result<()> {
    match op {
        HiddenOp::AddNoise(noise) => {
            if noise.len() != width {
                return Err(Error::DimensionMismatch {
                    context: "hidden noise width",
                    expected: width,
                    actual: noise.len(),
                });
            }
            for (hi, ni) in h.iter_mut().zip(noise) {
                *hi += ni;
            }
        }
        HiddenOp::Dropout { mask, keep } => {
            if mask.len() != width {
                return Err(Error::DimensionMismatch {
                    context: "dropout mask width",
                    expected: width,
                    actual: mask.len(),
                });
            }
            if !(*keep > 0.0 && *keep <= 1.0) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "dropout keep probability {keep} outside (0, 1]"
                )));
            }
            for (hi, &kept) in h.iter_mut().zip(mask) {
                *hi = if kept { *hi / *keep } else { 0.0 };
            }
        }
    }
    Ok(())
}

//! Dense networks and the pieces needed to train them: probability-vector
//! loss, manual forward/backward passes, and first-order optimizers.

mod loss;
mod mlp;
mod optim;

pub use loss::{argmax, cls_loss, cls_loss_grad, cls_loss_grad_into, l2_distance, softmax, ProbVector};
pub(crate) use loss::softmax_vjp;
pub use mlp::{Activation, Gradients, HiddenOp, Mlp, PerturbDraw, Tape, Workspace};
pub use optim::{step, OptimState, Optimizer};

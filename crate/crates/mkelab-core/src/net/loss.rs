//! Classification loss over probability targets.
//!
//! The loss between a target distribution `y` and logits `p` is
//!
//! ```text
//! l(y, p) = -sum_k y_k ln z_k + sum_k y_k ln y_k,    z = softmax(p)
//! ```
//!
//! which is cross-entropy for one-hot `y` and the KL divergence KL(y || z)
//! for soft `y`. Its gradient in the logits is `z - y`, so the gradient
//! norm is bounded by sqrt(K) regardless of how extreme the logits get.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Entries below this are treated as zero inside `y ln y` terms.
const LOG_CLIP: f64 = 1e-12;

/// Tolerated deviation of a probability vector's sum from one.
const SUM_TOL: f64 = 1e-9;

/// A validated discrete probability distribution.
///
/// Entries lie in `[0, 1]` and sum to one within `1e-9`. Construction is
/// the only gate; once built the vector is immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates and wraps `values`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidProbability(String::from("empty vector")));
        }
        let mut sum = 0.0;
        for (k, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidProbability(format!("entry {k} is {v}")));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidProbability(format!(
                    "entry {k} = {v} outside [0, 1]"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidProbability(format!("sum {sum} not 1")));
        }
        Ok(Self(values))
    }

    /// Point mass on `class` over `len` classes.
    pub fn one_hot(class: usize, len: usize) -> Result<Self> {
        if class >= len {
            return Err(Error::InvalidProbability(format!(
                "one-hot class {class} out of range for length {len}"
            )));
        }
        let mut v = alloc::vec![0.0; len];
        v[class] = 1.0;
        Ok(Self(v))
    }

    /// Uniform distribution over `len` classes.
    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidProbability(String::from("empty vector")));
        }
        Ok(Self(alloc::vec![1.0 / len as f64; len]))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Shannon entropy in nats, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        let mut h = 0.0;
        for &v in &self.0 {
            if v > 0.0 {
                h -= v * libm::log(v.max(LOG_CLIP));
            }
        }
        h
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0).expect("ProbVector is never empty")
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Index of the largest value, ties to the lowest index; `None` if empty.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// `ln sum_k exp(p_k)`, shifted by the maximum for stability.
fn log_sum_exp(logits: &[f64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "log-sum-exp input",
            expected: 1,
            actual: 0,
        });
    }
    let mut max = f64::NEG_INFINITY;
    for &p in logits {
        if !p.is_finite() {
            return Err(Error::NonFinite("logits"));
        }
        max = max.max(p);
    }
    let mut sum = 0.0;
    for &p in logits {
        sum += libm::exp(p - max);
    }
    Ok(max + libm::log(sum))
}

/// Softmax of `logits`.
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    let lse = log_sum_exp(logits)?;
    let z = logits.iter().map(|&p| libm::exp(p - lse)).collect();
    ProbVector::new(z)
}

/// Loss of logits `p` against target distribution `y`; see module docs.
///
/// Computed as `sum_k y_k (ln y_k - ln z_k)` with `ln z_k` taken from the
/// log-sum-exp directly, so extreme logits never underflow to `ln 0`.
pub fn cls_loss(target: &ProbVector, logits: &[f64]) -> Result<f64> {
    if logits.len() != target.len() {
        return Err(Error::DimensionMismatch {
            context: "cls_loss logits",
            expected: target.len(),
            actual: logits.len(),
        });
    }
    let lse = log_sum_exp(logits)?;
    let mut loss = 0.0;
    for (&y, &p) in target.values().iter().zip(logits) {
        if y > 0.0 {
            loss += y * (libm::log(y.max(LOG_CLIP)) - (p - lse));
        }
    }
    Ok(loss)
}

/// Gradient of [`cls_loss`] in the logits: `softmax(p) - y`.
pub fn cls_loss_grad(target: &ProbVector, logits: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    cls_loss_grad_into(target, logits, &mut out)?;
    Ok(out)
}

/// [`cls_loss_grad`] written into a caller-owned buffer, for tight loops.
pub fn cls_loss_grad_into(target: &ProbVector, logits: &[f64], out: &mut Vec<f64>) -> Result<()> {
    if logits.len() != target.len() {
        return Err(Error::DimensionMismatch {
            context: "cls_loss logits",
            expected: target.len(),
            actual: logits.len(),
        });
    }
    let lse = log_sum_exp(logits)?;
    out.clear();
    for (&p, &y) in logits.iter().zip(target.values()) {
        out.push(libm::exp(p - lse) - y);
    }
    Ok(())
}

/// Euclidean distance between two equal-length vectors.
pub fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "l2_distance operands",
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut sq = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite("l2_distance operands"));
        }
        let d = x - y;
        sq += d * d;
    }
    Ok(libm::sqrt(sq))
}

/// Pulls an output-space gradient back through softmax evaluated at `z`:
/// `out_j = z_j (g_j - sum_k g_k z_k)`.
pub(crate) fn softmax_vjp(z: &[f64], upstream: &[f64]) -> Vec<f64> {
    debug_assert_eq!(z.len(), upstream.len());
    let dot: f64 = z.iter().zip(upstream).map(|(&zk, &gk)| zk * gk).sum();
    z.iter()
        .zip(upstream)
        .map(|(&zj, &gj)| zj * (gj - dot))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn softmax_matches_reference() {
        let z = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let want = [
            0.09003057317038046,
            0.24472847105479764,
            0.6652409557748218,
        ];
        for (got, want) in z.values().iter().zip(want) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_shift_invariant_and_stable() {
        let a = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let b = softmax(&[1001.0, 1002.0, 1003.0]).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
        let huge = softmax(&[-1e9, 0.0, 1e9]).unwrap();
        assert_eq!(huge.argmax(), 2);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(matches!(
            softmax(&[f64::NAN, 0.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            softmax(&[f64::INFINITY, 0.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn one_hot_loss_is_negative_log_softmax() {
        let y = ProbVector::one_hot(2, 3).unwrap();
        let loss = cls_loss(&y, &[1.0, 2.0, 3.0]).unwrap();
        assert!((loss - 0.4076059644443806).abs() < 1e-15);
    }

    #[test]
    fn soft_loss_is_kl_divergence() {
        let y = ProbVector::new(vec![0.3, 0.7]).unwrap();
        let loss = cls_loss(&y, &[0.0, 0.0]).unwrap();
        assert!((loss - 0.08228287850505178).abs() < 1e-15);
    }

    #[test]
    fn loss_vanishes_when_prediction_matches_target() {
        let y = ProbVector::new(vec![0.3, 0.7]).unwrap();
        // logits whose softmax is exactly y up to rounding
        let logits = [libm::log(0.3), libm::log(0.7)];
        let loss = cls_loss(&y, &logits).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn extreme_logits_do_not_produce_infinite_loss() {
        let y = ProbVector::new(vec![0.5, 0.5]).unwrap();
        let loss = cls_loss(&y, &[-800.0, 800.0]).unwrap();
        assert!(loss.is_finite());
        assert!(loss > 100.0);
    }

    #[test]
    fn grad_is_softmax_minus_target() {
        let y = ProbVector::new(vec![0.3, 0.7]).unwrap();
        let g = cls_loss_grad(&y, &[0.2, -0.1]).unwrap();
        assert!((g[0] - 0.27444251681165904).abs() < 1e-15);
        assert!((g[1] + 0.27444251681165893).abs() < 1e-15);
        let sum: f64 = g.iter().sum();
        assert!(sum.abs() < 1e-12, "grad entries sum to y-sum minus 1");
    }

    #[test]
    fn prob_vector_rejects_bad_input() {
        assert!(ProbVector::new(vec![]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbVector::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn entropy_convention_and_range() {
        assert_eq!(ProbVector::one_hot(0, 2).unwrap().entropy(), 0.0);
        let u = ProbVector::uniform(2).unwrap();
        assert!((u.entropy() - libm::log(2.0)).abs() < 1e-15);
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        assert_eq!(argmax(&[0.5, 0.5]), Some(0));
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn l2_distance_basics() {
        assert_eq!(l2_distance(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!((l2_distance(&[3.0, 0.0], &[0.0, 4.0]).unwrap() - 5.0).abs() < 1e-15);
        assert!(l2_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn softmax_vjp_matches_dense_jacobian() {
        let z = softmax(&[0.3, -0.2, 0.9]).unwrap();
        let z = z.values();
        let g = [0.5, -1.0, 0.25];
        let got = softmax_vjp(z, &g);
        for j in 0..3 {
            let mut want = 0.0;
            for k in 0..3 {
                let jac = if j == k {
                    z[k] * (1.0 - z[j])
                } else {
                    -z[k] * z[j]
                };
                want += g[k] * jac;
            }
            assert!((got[j] - want).abs() < 1e-15);
        }
    }
}

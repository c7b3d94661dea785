//! Two interleaving half-circles, split into the three roles the pipeline
//! needs: a small labeled unimodal set, a large unlabeled multimodal pool,
//! and a held-out test set.
//!
//! The two coordinates double as the two modalities: an observer on the
//! X-axis sees only `x` (modality α), one on the Y-axis sees only `y`
//! (modality β). The arcs overlap in their X projections, which is exactly
//! what makes the unimodal problem hard and the multimodal one easy.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::net::ProbVector;
use crate::stream::{rng, Domain};

/// Number of classes in every dataset this module produces.
pub const NUM_CLASSES: usize = 2;

/// One generated point: both coordinates plus its true class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample2D {
    pub x: f64,
    pub y: f64,
    pub label: usize,
}

/// Which coordinates a model observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    /// X coordinate only.
    Alpha,
    /// Y coordinate only.
    Beta,
    /// Both coordinates.
    Both,
}

impl Modality {
    /// Input width a model for this modality needs.
    pub fn dim(self) -> usize {
        match self {
            Modality::Alpha | Modality::Beta => 1,
            Modality::Both => 2,
        }
    }

    /// Feature vector a `(x, y)` pair presents to this modality.
    pub fn project_pair(self, pair: [f64; 2]) -> Vec<f64> {
        match self {
            Modality::Alpha => alloc::vec![pair[0]],
            Modality::Beta => alloc::vec![pair[1]],
            Modality::Both => pair.to_vec(),
        }
    }
}

/// Feature vector `sample` presents to `modality`.
pub fn project(sample: &Sample2D, modality: Modality) -> Vec<f64> {
    modality.project_pair([sample.x, sample.y])
}

/// The labeled teacher-training set: α coordinate and label only.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledUnimodal {
    entries: Vec<(f64, usize)>,
}

impl LabeledUnimodal {
    /// Validates that the set is non-empty and covers both classes.
    pub fn new(entries: Vec<(f64, usize)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidConfig("empty labeled set".into()));
        }
        for &(x, label) in &entries {
            if !x.is_finite() {
                return Err(Error::NonFinite("labeled sample coordinate"));
            }
            if label >= NUM_CLASSES {
                return Err(Error::InvalidConfig(format!(
                    "label {label} out of range for {NUM_CLASSES} classes"
                )));
            }
        }
        for class in 0..NUM_CLASSES {
            if !entries.iter().any(|&(_, l)| l == class) {
                return Err(Error::InvalidConfig(format!(
                    "labeled set has no samples of class {class}"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(f64, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// The unlabeled pool: both coordinates visible, labels sequestered.
///
/// Training code gets [`Self::pairs`] and nothing else. The true labels
/// survive only behind [`Self::oracle`], which exists for evaluation and
/// for estimating expansion constants; pipeline code must not touch it
/// when fitting models.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledMultimodal {
    pairs: Vec<[f64; 2]>,
    sequestered_labels: Vec<usize>,
}

impl UnlabeledMultimodal {
    pub fn new(pairs: Vec<[f64; 2]>, labels: Vec<usize>) -> Result<Self> {
        if pairs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "unlabeled pool labels",
                expected: pairs.len(),
                actual: labels.len(),
            });
        }
        if pairs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("unlabeled pool coordinates"));
        }
        if labels.iter().any(|&l| l >= NUM_CLASSES) {
            return Err(Error::InvalidConfig("label out of range".into()));
        }
        Ok(Self {
            pairs,
            sequestered_labels: labels,
        })
    }

    pub fn pairs(&self) -> &[[f64; 2]] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Ground-truth view for evaluation and theory checks only.
    pub fn oracle(&self) -> OracleView<'_> {
        OracleView {
            pairs: &self.pairs,
            labels: &self.sequestered_labels,
        }
    }
}

/// Read-only ground truth over a multimodal sample list.
#[derive(Debug, Clone, Copy)]
pub struct OracleView<'a> {
    pub pairs: &'a [[f64; 2]],
    pub labels: &'a [usize],
}

/// Held-out labeled multimodal samples for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pairs: Vec<[f64; 2]>,
    labels: Vec<usize>,
}

impl TestSet {
    pub fn new(pairs: Vec<[f64; 2]>, labels: Vec<usize>) -> Result<Self> {
        if pairs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "test set labels",
                expected: pairs.len(),
                actual: labels.len(),
            });
        }
        if labels.iter().any(|&l| l >= NUM_CLASSES) {
            return Err(Error::InvalidConfig("label out of range".into()));
        }
        Ok(Self { pairs, labels })
    }

    pub fn pairs(&self) -> &[[f64; 2]] {
        &self.pairs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// The unlabeled pool after a teacher has labeled it.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabeledMultimodal {
    pub pairs: Vec<[f64; 2]>,
    pub labels: Vec<ProbVector>,
}

impl PseudoLabeledMultimodal {
    pub fn new(pairs: Vec<[f64; 2]>, labels: Vec<ProbVector>) -> Result<Self> {
        if pairs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "pseudo labels",
                expected: pairs.len(),
                actual: labels.len(),
            });
        }
        Ok(Self { pairs, labels })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Parametric point on the class-0 (upper) arc.
fn upper_arc(t: f64) -> (f64, f64) {
    (libm::cos(t), libm::sin(t))
}

/// Parametric point on the class-1 (lower) arc.
fn lower_arc(t: f64) -> (f64, f64) {
    (1.0 - libm::cos(t), 0.5 - libm::sin(t))
}

/// Generates `n` points on two interleaving half-circles.
///
/// The first `ceil(n/2)` points trace the upper arc `(cos t, sin t)` with
/// label 0, the rest the lower arc `(1 - cos t, 0.5 - sin t)` with label 1,
/// `t` evenly spaced over `[0, π]`, plus isotropic Gaussian jitter of
/// standard deviation `noise_std`. Deterministic per seed.
pub fn twomoon_generate(n: usize, noise_std: f64, seed: u64) -> Result<Vec<Sample2D>> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "noise_std {noise_std} must be finite and non-negative"
        )));
    }
    let normal = Normal::new(0.0, noise_std)
        .map_err(|_| Error::InvalidConfig(format!("bad noise_std {noise_std}")))?;
    let mut r = rng(seed, Domain::DataNoise);

    let upper = n.div_ceil(2);
    let mut samples = Vec::with_capacity(n);
    for (count, arc, label) in [
        (upper, upper_arc as fn(f64) -> (f64, f64), 0usize),
        (n - upper, lower_arc as fn(f64) -> (f64, f64), 1usize),
    ] {
        for i in 0..count {
            let t = if count == 1 {
                0.0
            } else {
                core::f64::consts::PI * i as f64 / (count - 1) as f64
            };
            let (cx, cy) = arc(t);
            samples.push(Sample2D {
                x: cx + normal.sample(&mut r),
                y: cy + normal.sample(&mut r),
                label,
            });
        }
    }
    Ok(samples)
}

/// The permutation behind [`split`]: positions `..n_l` become the labeled
/// part, then `n_u` unlabeled, the rest test.
///
/// Exposed so exporters can tag samples with their split while keeping the
/// original order; consumes the seed's split stream exactly like [`split`].
pub fn split_order(data: &[Sample2D], n_l: usize, n_u: usize, seed: u64) -> Result<Vec<usize>> {
    let total = n_l
        .checked_add(n_u)
        .ok_or_else(|| Error::InvalidConfig("split sizes overflow".into()))?;
    if total > data.len() {
        return Err(Error::InvalidConfig(format!(
            "split sizes {n_l}+{n_u} exceed {} samples",
            data.len()
        )));
    }
    if n_l < 2 {
        return Err(Error::InvalidConfig(format!(
            "labeled split needs at least 2 samples, got {n_l}"
        )));
    }

    let mut r = rng(seed, Domain::Split);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut covered = false;
    for _ in 0..100 {
        order.shuffle(&mut r);
        let labeled = &order[..n_l];
        if (0..NUM_CLASSES).all(|c| labeled.iter().any(|&i| data[i].label == c)) {
            covered = true;
            break;
        }
    }
    if !covered {
        return Err(Error::InvalidConfig(
            "degenerate split: labeled part missed a class in 100 shuffles".into(),
        ));
    }
    Ok(order)
}

/// Shuffles `data` into labeled / unlabeled / test parts of the given sizes.
///
/// The labeled part keeps only the α coordinate and must contain both
/// classes; the shuffle is retried up to 100 times to make that true.
pub fn split(
    data: &[Sample2D],
    n_l: usize,
    n_u: usize,
    n_test: usize,
    seed: u64,
) -> Result<(LabeledUnimodal, UnlabeledMultimodal, TestSet)> {
    let total = n_l
        .checked_add(n_u)
        .and_then(|s| s.checked_add(n_test))
        .ok_or_else(|| Error::InvalidConfig("split sizes overflow".into()))?;
    if total != data.len() {
        return Err(Error::InvalidConfig(format!(
            "split sizes {n_l}+{n_u}+{n_test} != {} samples",
            data.len()
        )));
    }
    let order = split_order(data, n_l, n_u, seed)?;

    let labeled = LabeledUnimodal::new(
        order[..n_l]
            .iter()
            .map(|&i| (data[i].x, data[i].label))
            .collect(),
    )?;
    let unlabeled = UnlabeledMultimodal::new(
        order[n_l..n_l + n_u]
            .iter()
            .map(|&i| [data[i].x, data[i].y])
            .collect(),
        order[n_l..n_l + n_u].iter().map(|&i| data[i].label).collect(),
    )?;
    let test = TestSet::new(
        order[n_l + n_u..]
            .iter()
            .map(|&i| [data[i].x, data[i].y])
            .collect(),
        order[n_l + n_u..].iter().map(|&i| data[i].label).collect(),
    )?;
    Ok((labeled, unlabeled, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Distance from a point to the nearer of the two parametric arcs,
    /// scanned densely in t. Test-only geometric oracle.
    fn nearest_arc_label(x: f64, y: f64) -> usize {
        let mut best = (f64::INFINITY, 0usize);
        for i in 0..=2000 {
            let t = core::f64::consts::PI * i as f64 / 2000.0;
            for (arc, label) in [
                (upper_arc as fn(f64) -> (f64, f64), 0usize),
                (lower_arc, 1),
            ] {
                let (ax, ay) = arc(t);
                let d = (x - ax) * (x - ax) + (y - ay) * (y - ay);
                if d < best.0 {
                    best = (d, label);
                }
            }
        }
        best.1
    }

    #[test]
    fn balanced_classes_and_exact_count() {
        let data = twomoon_generate(500, 0.1, 3).unwrap();
        assert_eq!(data.len(), 500);
        assert_eq!(data.iter().filter(|s| s.label == 0).count(), 250);
        let odd = twomoon_generate(5, 0.0, 3).unwrap();
        assert_eq!(odd.iter().filter(|s| s.label == 0).count(), 3);
    }

    #[test]
    fn zero_noise_lands_exactly_on_the_arcs() {
        let data = twomoon_generate(4, 0.0, 9).unwrap();
        // two points per arc, t = 0 and t = pi
        assert_eq!((data[0].x, data[0].y), (1.0, 0.0));
        assert!((data[1].x + 1.0).abs() < 1e-15 && data[1].y.abs() < 1e-15);
        assert!((data[2].x - 0.0).abs() < 1e-15 && (data[2].y - 0.5).abs() < 1e-15);
        assert!((data[3].x - 2.0).abs() < 1e-15 && (data[3].y - 0.5).abs() < 1e-15);
    }

    #[test]
    fn default_noise_keeps_points_near_their_arc() {
        let data = twomoon_generate(500, 0.1, 11).unwrap();
        let correct = data
            .iter()
            .filter(|s| nearest_arc_label(s.x, s.y) == s.label)
            .count();
        assert!(
            correct >= 495,
            "nearest-arc oracle got {correct}/500 at noise 0.1"
        );
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = twomoon_generate(100, 0.1, 5).unwrap();
        let b = twomoon_generate(100, 0.1, 5).unwrap();
        let c = twomoon_generate(100, 0.1, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_degenerate_requests() {
        assert!(twomoon_generate(1, 0.1, 0).is_err());
        assert!(twomoon_generate(10, -0.5, 0).is_err());
        assert!(twomoon_generate(10, f64::NAN, 0).is_err());
    }

    #[test]
    fn split_partitions_exactly() {
        let data = twomoon_generate(500, 0.1, 7).unwrap();
        let (l, u, t) = split(&data, 30, 270, 200, 7).unwrap();
        assert_eq!((l.len(), u.len(), t.len()), (30, 270, 200));

        // the three parts reassemble the original multiset of points
        let mut seen: Vec<(u64, u64)> = u
            .pairs()
            .iter()
            .chain(t.pairs())
            .map(|p| (p[0].to_bits(), p[1].to_bits()))
            .collect();
        let mut labeled_x: Vec<u64> = l.entries().iter().map(|e| e.0.to_bits()).collect();
        let mut orig_rest: Vec<(u64, u64)> = Vec::new();
        let mut orig_x: Vec<u64> = data.iter().map(|s| s.x.to_bits()).collect();
        for s in &data {
            orig_rest.push((s.x.to_bits(), s.y.to_bits()));
        }
        seen.sort_unstable();
        orig_rest.sort_unstable();
        // every (x, y) of the unlabeled+test parts appears in the source
        for pair in &seen {
            assert!(orig_rest.binary_search(pair).is_ok());
        }
        labeled_x.sort_unstable();
        orig_x.sort_unstable();
        for x in &labeled_x {
            assert!(orig_x.binary_search(x).is_ok());
        }
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let data = twomoon_generate(500, 0.1, 1).unwrap();
        let a = split(&data, 30, 270, 200, 42).unwrap();
        let b = split(&data, 30, 270, 200, 42).unwrap();
        let c = split(&data, 30, 270, 200, 43).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.2, b.2);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn labeled_part_always_covers_both_classes() {
        let data = twomoon_generate(500, 0.1, 2).unwrap();
        for seed in 0..50 {
            let (l, _, _) = split(&data, 2, 298, 200, seed).unwrap();
            let classes: Vec<usize> = l.entries().iter().map(|e| e.1).collect();
            assert!(classes.contains(&0) && classes.contains(&1));
        }
    }

    #[test]
    fn split_rejects_inconsistent_sizes() {
        let data = twomoon_generate(100, 0.1, 0).unwrap();
        assert!(split(&data, 30, 30, 30, 0).is_err());
        assert!(split(&data, 1, 49, 50, 0).is_err());
    }

    #[test]
    fn degenerate_split_errors_out() {
        // all samples in one class: coverage is impossible
        let data: Vec<Sample2D> = (0..10)
            .map(|i| Sample2D {
                x: i as f64,
                y: 0.0,
                label: 0,
            })
            .collect();
        let err = split(&data, 2, 4, 4, 0);
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn projection_selects_coordinates() {
        let s = Sample2D {
            x: 1.0,
            y: -0.5,
            label: 0,
        };
        assert_eq!(project(&s, Modality::Alpha), vec![1.0]);
        assert_eq!(project(&s, Modality::Beta), vec![-0.5]);
        assert_eq!(project(&s, Modality::Both), vec![1.0, -0.5]);
        assert_eq!(Modality::Alpha.dim(), 1);
        assert_eq!(Modality::Both.dim(), 2);
    }

    #[test]
    fn hidden_labels_only_via_oracle() {
        let data = twomoon_generate(50, 0.1, 4).unwrap();
        let (_, u, _) = split(&data, 10, 30, 10, 4).unwrap();
        let oracle = u.oracle();
        assert_eq!(oracle.pairs.len(), oracle.labels.len());
        assert_eq!(oracle.pairs, u.pairs());
        assert!(oracle.labels.iter().all(|&l| l < NUM_CLASSES));
    }
}

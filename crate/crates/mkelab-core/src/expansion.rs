//! Empirical machinery behind the expansion story: neighborhoods on
//! finite point sets, (ā,c)-expansion estimation, the product-expansion
//! check, and the error-bound arithmetic.
//!
//! Everything here works with empirical class-conditional measures: for a
//! finite point set, `P_i` is uniform over the class-i points, and the
//! neighborhood of a subset is the union of closed metric balls of the
//! set's radius around its members. A distribution satisfies
//! (ā, c)-expansion when every subset `V` of a class with `P_i(V) ≤ ā`
//! has `P_i(N(V)) ≥ min(c · P_i(V), 1)`; the estimator reports the
//! smallest ratio `P_i(N(V))/P_i(V)` it finds, which is exact under full
//! enumeration and an upper estimate of the true constant under
//! sampling.
//!
//! The robustness constant μ reported by [`measure_mu`] is likewise an
//! empirical proxy (the fraction of points whose prediction flips under
//! repeated perturbation draws), not a certified quantity. Downstream
//! reports must label both as estimates.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mke::TrainedModel;
use crate::net::argmax;
use crate::perturb::Transform;
use crate::stream::{rng, Domain};
use crate::synth::OracleView;

/// Distance rule deciding which points fall inside a neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    /// Closed Euclidean balls of the given radius.
    Euclidean { radius: f64 },
    /// Product of two Euclidean metrics over coordinates `0..split` and
    /// `split..`. A point is within reach of another iff both parts are
    /// within their own radii, so product neighborhoods factor into the
    /// per-part neighborhoods.
    ProductMax {
        split: usize,
        r_alpha: f64,
        r_beta: f64,
    },
}

impl Metric {
    fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            Metric::Euclidean { radius } => {
                if !(radius.is_finite() && radius > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "neighborhood radius {radius} must be finite and positive"
                    )));
                }
            }
            Metric::ProductMax {
                split,
                r_alpha,
                r_beta,
            } => {
                if split == 0 || split >= dim {
                    return Err(Error::InvalidConfig(format!(
                        "product split {split} must cut a {dim}-dimensional point in two"
                    )));
                }
                for r in [r_alpha, r_beta] {
                    if !(r.is_finite() && r > 0.0) {
                        return Err(Error::InvalidConfig(format!(
                            "neighborhood radius {r} must be finite and positive"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Closed-ball membership: is `q` within reach of `p`?
    fn within(&self, p: &[f64], q: &[f64]) -> bool {
        fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
        }
        match *self {
            Metric::Euclidean { radius } => sq_dist(p, q) <= radius * radius,
            Metric::ProductMax {
                split,
                r_alpha,
                r_beta,
            } => {
                sq_dist(&p[..split], &q[..split]) <= r_alpha * r_alpha
                    && sq_dist(&p[split..], &q[split..]) <= r_beta * r_beta
            }
        }
    }
}

/// A labeled finite point set with a neighborhood metric.
///
/// Class-conditional measures are uniform: `P_i(V)` is the fraction of
/// class-i points that fall in `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePointSet {
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    metric: Metric,
    num_classes: usize,
}

impl FinitePointSet {
    /// Point set under the Euclidean metric with the given ball radius.
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<usize>, radius: f64) -> Result<Self> {
        Self::with_metric(points, labels, Metric::Euclidean { radius })
    }

    /// One-dimensional convenience: each scalar becomes a point.
    pub fn from_scalars(values: &[f64], labels: &[usize], radius: f64) -> Result<Self> {
        Self::new(
            values.iter().map(|&v| alloc::vec![v]).collect(),
            labels.to_vec(),
            radius,
        )
    }

    pub fn with_metric(
        points: Vec<Vec<f64>>,
        labels: Vec<usize>,
        metric: Metric,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfig("empty point set".into()));
        }
        if points.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "point set labels",
                expected: points.len(),
                actual: labels.len(),
            });
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidConfig("zero-dimensional points".into()));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "point dimensions",
                    expected: dim,
                    actual: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("point coordinates"));
            }
        }
        metric.validate(dim)?;
        let num_classes = labels.iter().max().copied().unwrap_or(0) + 1;
        for class in 0..num_classes {
            if !labels.contains(&class) {
                return Err(Error::InvalidConfig(format!(
                    "class {class} has no points (labels must cover 0..=max)"
                )));
            }
        }
        Ok(Self {
            points,
            labels,
            metric,
            num_classes,
        })
    }

    /// Product set pairing class-matched samples: for each class, the
    /// Cartesian product of the two modalities' class points, coordinates
    /// concatenated. Models drawing the modalities independently given
    /// the label. Neighborhoods use the product metric, so they factor
    /// into the per-modality balls.
    pub fn product(alpha: &FinitePointSet, beta: &FinitePointSet) -> Result<FinitePointSet> {
        if alpha.num_classes != beta.num_classes {
            return Err(Error::InvalidConfig(format!(
                "cannot pair {} classes with {} classes",
                alpha.num_classes, beta.num_classes
            )));
        }
        let (Metric::Euclidean { radius: r_alpha }, Metric::Euclidean { radius: r_beta }) =
            (&alpha.metric, &beta.metric)
        else {
            return Err(Error::InvalidConfig(
                "product requires two Euclidean-metric sets".into(),
            ));
        };
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for class in 0..alpha.num_classes {
            for a in alpha.class_indices(class) {
                for b in beta.class_indices(class) {
                    let mut p = alpha.points[a].clone();
                    p.extend_from_slice(&beta.points[b]);
                    points.push(p);
                    labels.push(class);
                }
            }
        }
        Self::with_metric(
            points,
            labels,
            Metric::ProductMax {
                split: alpha.dim(),
                r_alpha: *r_alpha,
                r_beta: *r_beta,
            },
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    /// Indices of the class-i points, ascending.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn class_size(&self, class: usize) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    /// Empirical class-conditional measure of an index set.
    pub fn class_measure(&self, class: usize, v: &[usize]) -> f64 {
        let hits = v.iter().filter(|&&i| self.labels[i] == class).count();
        hits as f64 / self.class_size(class) as f64
    }
}

/// Indices of all points within the set's radius of `v`: the union of
/// closed balls around `v`'s members. Always contains `v`. Returned
/// ascending.
pub fn neighborhood(v: &[usize], ps: &FinitePointSet) -> Result<Vec<usize>> {
    if v.is_empty() {
        return Err(Error::InvalidConfig(
            "neighborhood of an empty subset".into(),
        ));
    }
    for &i in v {
        if i >= ps.len() {
            return Err(Error::InvalidConfig(format!(
                "subset index {i} out of range for {} points",
                ps.len()
            )));
        }
    }
    let mut out = Vec::new();
    'points: for (x, point) in ps.points.iter().enumerate() {
        for &u in v {
            if ps.metric.within(&ps.points[u], point) {
                out.push(x);
                continue 'points;
            }
        }
    }
    Ok(out)
}

/// A teacher's mistakes on the pool, with the resulting measure bound ā.
#[derive(Debug, Clone, PartialEq)]
pub struct MisclassifiedSet {
    /// Pool indices the model labels incorrectly.
    pub indices: Vec<usize>,
    /// `max_i P_i(M)`: the largest class-conditional measure of the set.
    pub a_bar: f64,
}

/// Pool samples where the model's argmax disagrees with the true label.
pub fn misclassified_set(model: &TrainedModel, oracle: OracleView<'_>) -> Result<MisclassifiedSet> {
    if oracle.pairs.is_empty() {
        return Err(Error::InvalidConfig("empty pool".into()));
    }
    let mut indices = Vec::new();
    let mut class_total = alloc::vec![0usize; 0];
    let mut class_wrong = alloc::vec![0usize; 0];
    for (i, (&pair, &label)) in oracle.pairs.iter().zip(oracle.labels).enumerate() {
        if label >= class_total.len() {
            class_total.resize(label + 1, 0);
            class_wrong.resize(label + 1, 0);
        }
        class_total[label] += 1;
        if model.predict(pair)? != label {
            indices.push(i);
            class_wrong[label] += 1;
        }
    }
    let a_bar = class_total
        .iter()
        .zip(&class_wrong)
        .filter(|&(&total, _)| total > 0)
        .map(|(&total, &wrong)| wrong as f64 / total as f64)
        .fold(0.0, f64::max);
    Ok(MisclassifiedSet { indices, a_bar })
}

/// How much work the expansion estimator may spend beyond enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetBudget {
    /// Random subsets to draw when the class is too large to enumerate.
    pub random_subsets: usize,
    /// Extra index sets to test regardless, e.g. a teacher's
    /// misclassified set. Each is restricted to the class first; empty or
    /// over-measure restrictions are skipped.
    pub extra: Vec<Vec<usize>>,
    pub seed: u64,
}

impl Default for SubsetBudget {
    fn default() -> Self {
        Self {
            random_subsets: 200,
            extra: Vec::new(),
            seed: 0,
        }
    }
}

impl SubsetBudget {
    pub fn random(random_subsets: usize, seed: u64) -> Self {
        Self {
            random_subsets,
            extra: Vec::new(),
            seed,
        }
    }
}

/// Largest class size the estimator enumerates exhaustively.
pub const ENUMERATION_LIMIT: usize = 15;

/// Outcome of an expansion-constant estimation for one class.
///
/// Expansion demands `P_i(N(V)) ≥ min(c · P_i(V), 1)`. A subset whose
/// neighborhood covers its whole class satisfies that for every `c`, so
/// only subsets with `P_i(N(V)) < 1` constrain the constant; `c_hat` is
/// the smallest ratio among those. When every checked subset saturates
/// the class, `c_hat` is instead the largest certifiable value, the
/// ratio of the smallest checked subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionEstimate {
    pub a_bar: f64,
    /// Estimated constant; exact under enumeration, otherwise an upper
    /// estimate.
    pub c_hat: f64,
    /// Whether every admissible subset was checked.
    pub exhaustive: bool,
    /// Whether every checked subset saturated its class, putting `c_hat`
    /// in the certifiable-cap regime.
    pub capped: bool,
    pub subsets_checked: usize,
    /// The subset attaining `c_hat`, ascending global indices.
    pub witness: Vec<usize>,
}

/// `P_i(N(V))/P_i(V)` for a subset of class-i points: the factor by which
/// the neighborhood grows the subset, measured within the class.
pub fn subset_ratio(ps: &FinitePointSet, class: usize, v: &[usize]) -> Result<f64> {
    ratio_parts(ps, class, v).map(|(_, ratio)| ratio)
}

/// Class-point count of N(V) alongside the ratio.
fn ratio_parts(ps: &FinitePointSet, class: usize, v: &[usize]) -> Result<(usize, f64)> {
    for &i in v {
        if ps.labels()[i] != class {
            return Err(Error::InvalidConfig(format!(
                "subset point {i} is not in class {class}"
            )));
        }
    }
    let n = neighborhood(v, ps)?;
    let hits = n.iter().filter(|&&i| ps.labels[i] == class).count();
    Ok((hits, hits as f64 / v.len() as f64))
}

/// Estimates the class-i expansion constant at measure bound `a_bar`.
///
/// Checks every non-empty subset `V` of the class with `P_i(V) ≤ a_bar`
/// when the class has at most [`ENUMERATION_LIMIT`] points; larger
/// classes get all singletons, the budget's extra sets restricted to the
/// class, and `budget.random_subsets` random subsets of admissible sizes.
pub fn estimate_expansion(
    ps: &FinitePointSet,
    class: usize,
    a_bar: f64,
    budget: &SubsetBudget,
) -> Result<ExpansionEstimate> {
    if class >= ps.num_classes {
        return Err(Error::InvalidConfig(format!(
            "class {class} out of range ({} classes)",
            ps.num_classes
        )));
    }
    if !(a_bar > 0.0 && a_bar <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "a_bar {a_bar} must lie in (0, 1]"
        )));
    }
    let members = ps.class_indices(class);
    let n_i = members.len();
    // P_i(V) = |V|/n_i, so the measure bound caps the subset size.
    let max_size = libm::floor(a_bar * n_i as f64) as usize;
    if max_size == 0 {
        return Err(Error::InvalidConfig(format!(
            "a_bar {a_bar} is below the singleton measure 1/{n_i}"
        )));
    }

    // Subsets whose neighborhood stays strictly inside the class bound c
    // from above (track the min); saturating subsets only witness the
    // certifiable cap (track the max as a fallback).
    let mut constrained: Option<(f64, Vec<usize>)> = None;
    let mut cap: Option<(f64, Vec<usize>)> = None;
    let mut checked = 0usize;
    let mut consider = |ps: &FinitePointSet, v: &[usize]| -> Result<()> {
        let (hits, ratio) = ratio_parts(ps, class, v)?;
        checked += 1;
        if hits < n_i {
            if constrained.as_ref().is_none_or(|(b, _)| ratio < *b) {
                let mut w = v.to_vec();
                w.sort_unstable();
                constrained = Some((ratio, w));
            }
        } else if cap.as_ref().is_none_or(|(b, _)| ratio > *b) {
            let mut w = v.to_vec();
            w.sort_unstable();
            cap = Some((ratio, w));
        }
        Ok(())
    };

    let exhaustive = n_i <= ENUMERATION_LIMIT;
    if exhaustive {
        for mask in 1u32..(1u32 << n_i) {
            if (mask.count_ones() as usize) > max_size {
                continue;
            }
            let v: Vec<usize> = (0..n_i).filter(|b| mask & (1 << b) != 0).map(|b| members[b]).collect();
            consider(ps, &v)?;
        }
    } else {
        if budget.random_subsets == 0 && budget.extra.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "class of {n_i} points exceeds the enumeration limit and the budget allows no subsets"
            )));
        }
        for &i in &members {
            consider(ps, &[i])?;
        }
        for extra in &budget.extra {
            let v: Vec<usize> = extra
                .iter()
                .copied()
                .filter(|&i| i < ps.len() && ps.labels[i] == class)
                .collect();
            if !v.is_empty() && v.len() <= max_size {
                consider(ps, &v)?;
            }
        }
        let mut subset_rng = rng(budget.seed, Domain::ExpansionSubsets);
        for _ in 0..budget.random_subsets {
            let size = rand::Rng::random_range(&mut subset_rng, 1..=max_size);
            let picks = rand::seq::index::sample(&mut subset_rng, n_i, size);
            let v: Vec<usize> = picks.iter().map(|b| members[b]).collect();
            consider(ps, &v)?;
        }
    }

    let capped = constrained.is_none();
    let (c_hat, witness) = constrained
        .or(cap)
        .expect("at least the singletons were checked");
    Ok(ExpansionEstimate {
        a_bar,
        c_hat,
        exhaustive,
        capped,
        subsets_checked: checked,
        witness,
    })
}

/// Distribution-level constant: the smallest per-class estimate.
pub fn estimate_expansion_all_classes(
    ps: &FinitePointSet,
    a_bar: f64,
    budget: &SubsetBudget,
) -> Result<ExpansionEstimate> {
    let mut best: Option<ExpansionEstimate> = None;
    for class in 0..ps.num_classes {
        let est = estimate_expansion(ps, class, a_bar, budget)?;
        let replace = best.as_ref().is_none_or(|b| est.c_hat < b.c_hat);
        let checked = est.subsets_checked + best.as_ref().map_or(0, |b| b.subsets_checked);
        let exhaustive = est.exhaustive && best.as_ref().is_none_or(|b| b.exhaustive);
        if replace {
            best = Some(est);
        }
        let b = best.as_mut().expect("just set");
        b.subsets_checked = checked;
        b.exhaustive = exhaustive;
    }
    best.ok_or_else(|| Error::InvalidConfig("point set has no classes".into()))
}

/// Non-empty subsets of `0..n` with at most `max_size` elements, as local
/// index lists, plus whether the family is complete. Large `n` falls back
/// to singletons and random draws.
fn subset_family<R: rand::Rng>(
    n: usize,
    max_size: usize,
    random_subsets: usize,
    rng: &mut R,
) -> (Vec<Vec<usize>>, bool) {
    if n <= ENUMERATION_LIMIT {
        let mut family = Vec::new();
        for mask in 1u32..(1u32 << n) {
            if (mask.count_ones() as usize) <= max_size {
                family.push((0..n).filter(|b| mask & (1 << b) != 0).collect());
            }
        }
        return (family, true);
    }
    let mut family: Vec<Vec<usize>> = (0..n).map(|i| alloc::vec![i]).collect();
    for _ in 0..random_subsets {
        let size = rng.random_range(1..=max_size);
        family.push(rand::seq::index::sample(rng, n, size).into_vec());
    }
    (family, false)
}

/// Pairs of factor subsets to test on the product; everything beyond this
/// falls back to singleton pairs plus random pairs.
const PRODUCT_PAIR_LIMIT: usize = 50_000;

/// Estimates the expansion constant of the class-matched product of two
/// sets, over the factored subset family: products `V = V^α × V^β` where
/// each factor keeps class measure at most `a_bar`. That family is what
/// the multiplication argument speaks about — the product metric makes
/// `N(V) = N(V^α) × N(V^β)` — so its constant is the one comparable to
/// `c1 · c2`. Ratios are still computed with the real product-set
/// neighborhood machinery, not the factored shortcut.
pub fn estimate_product_expansion(
    alpha: &FinitePointSet,
    beta: &FinitePointSet,
    a_bar: f64,
    budget: &SubsetBudget,
) -> Result<ExpansionEstimate> {
    if !(a_bar > 0.0 && a_bar <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "a_bar {a_bar} must lie in (0, 1]"
        )));
    }
    let product = FinitePointSet::product(alpha, beta)?;
    let mut subset_rng = rng(budget.seed, Domain::ExpansionSubsets);

    let mut constrained: Option<(f64, Vec<usize>)> = None;
    let mut cap: Option<(f64, Vec<usize>)> = None;
    let mut checked = 0usize;
    let mut all_exhaustive = true;
    // Product points are pushed class by class, alpha-major, so the pair
    // of local positions (ia, ib) sits at offset + ia·n_beta + ib.
    let mut offset = 0usize;

    for class in 0..alpha.num_classes() {
        let n_a = alpha.class_size(class);
        let n_b = beta.class_size(class);
        let n_prod = n_a * n_b;
        for (n, side) in [(n_a, "alpha"), (n_b, "beta")] {
            if libm::floor(a_bar * n as f64) as usize == 0 {
                return Err(Error::InvalidConfig(format!(
                    "a_bar {a_bar} is below the {side} singleton measure 1/{n}"
                )));
            }
        }
        let max_a = libm::floor(a_bar * n_a as f64) as usize;
        let max_b = libm::floor(a_bar * n_b as f64) as usize;

        let (fam_a, exh_a) = subset_family(n_a, max_a, budget.random_subsets, &mut subset_rng);
        let (fam_b, exh_b) = subset_family(n_b, max_b, budget.random_subsets, &mut subset_rng);
        let enumerate_pairs = exh_a && exh_b && fam_a.len() * fam_b.len() <= PRODUCT_PAIR_LIMIT;
        all_exhaustive &= enumerate_pairs;

        let mut consider = |v_a: &[usize], v_b: &[usize]| -> Result<()> {
            let v: Vec<usize> = v_a
                .iter()
                .flat_map(|&ia| v_b.iter().map(move |&ib| offset + ia * n_b + ib))
                .collect();
            let (hits, ratio) = ratio_parts(&product, class, &v)?;
            checked += 1;
            if hits < n_prod {
                if constrained.as_ref().is_none_or(|(b, _)| ratio < *b) {
                    let mut w = v;
                    w.sort_unstable();
                    constrained = Some((ratio, w));
                }
            } else if cap.as_ref().is_none_or(|(b, _)| ratio > *b) {
                let mut w = v;
                w.sort_unstable();
                cap = Some((ratio, w));
            }
            Ok(())
        };

        if enumerate_pairs {
            for v_a in &fam_a {
                for v_b in &fam_b {
                    consider(v_a, v_b)?;
                }
            }
        } else {
            if budget.random_subsets == 0 {
                return Err(Error::InvalidConfig(format!(
                    "product class of {n_prod} points exceeds the enumeration limit and the budget allows no subsets"
                )));
            }
            for ia in 0..n_a {
                for ib in 0..n_b {
                    consider(&[ia], &[ib])?;
                }
            }
            for _ in 0..budget.random_subsets {
                let size_a = rand::Rng::random_range(&mut subset_rng, 1..=max_a);
                let v_a = rand::seq::index::sample(&mut subset_rng, n_a, size_a).into_vec();
                let size_b = rand::Rng::random_range(&mut subset_rng, 1..=max_b);
                let v_b = rand::seq::index::sample(&mut subset_rng, n_b, size_b).into_vec();
                consider(&v_a, &v_b)?;
            }
        }
        offset += n_prod;
    }

    let capped = constrained.is_none();
    let (c_hat, witness) = constrained
        .or(cap)
        .expect("at least the singleton pairs were checked");
    Ok(ExpansionEstimate {
        a_bar,
        c_hat,
        exhaustive: all_exhaustive,
        capped,
        subsets_checked: checked,
        witness,
    })
}

/// Outcome of the product-expansion consistency check.
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Report {
    pub a_bar: f64,
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub c_prod_hat: f64,
    /// Whether the product constant reaches `0.9 · c1_hat · c2_hat`; the
    /// slack absorbs sampling error on products too large to enumerate.
    pub pass: bool,
}

/// Checks that expansion multiplies across modalities: builds the
/// class-matched product of the two sets and compares its estimated
/// constant (over the factored subset family, see
/// [`estimate_product_expansion`]) against the product of the
/// per-modality constants.
pub fn check_lemma1(
    alpha: &FinitePointSet,
    beta: &FinitePointSet,
    a_bar: f64,
    budget: &SubsetBudget,
) -> Result<Lemma1Report> {
    let c1_hat = estimate_expansion_all_classes(alpha, a_bar, budget)?.c_hat;
    let c2_hat = estimate_expansion_all_classes(beta, a_bar, budget)?.c_hat;
    let c_prod_hat = estimate_product_expansion(alpha, beta, a_bar, budget)?.c_hat;
    Ok(Lemma1Report {
        a_bar,
        c1_hat,
        c2_hat,
        c_prod_hat,
        pass: c_prod_hat >= 0.9 * c1_hat * c2_hat,
    })
}

/// Multimodal error bound `4·err/(c1·c2 − 1) + 4·μ`.
///
/// Defined only when `c1·c2 > 1`; anything else is a domain error.
pub fn theorem1_bound(err_teacher: f64, c1: f64, c2: f64, mu: f64) -> Result<f64> {
    bound_impl(err_teacher, c1 * c2, mu)
}

/// Unimodal companion bound `4·err/(c1 − 1) + 4·μ`, defined for `c1 > 1`.
pub fn unimodal_bound(err_teacher: f64, c1: f64, mu: f64) -> Result<f64> {
    bound_impl(err_teacher, c1, mu)
}

fn bound_impl(err: f64, c: f64, mu: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&err) || !err.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "teacher error {err} must lie in [0, 1]"
        )));
    }
    if !(0.0..=1.0).contains(&mu) || !mu.is_finite() {
        return Err(Error::InvalidConfig(format!("mu {mu} must lie in [0, 1]")));
    }
    if !c.is_finite() || c <= 1.0 {
        return Err(Error::InvalidConfig(format!(
            "bound needs expansion factor > 1, got {c}"
        )));
    }
    Ok(4.0 * err / (c - 1.0) + 4.0 * mu)
}

/// Empirical robustness-violation rate: the fraction of pool samples
/// whose argmax prediction flips under at least one of `draws`
/// perturbation draws. A measured proxy for the theory's μ, not a
/// certified constant.
pub fn measure_mu(
    model: &TrainedModel,
    pairs: &[[f64; 2]],
    transform: &Transform,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    if draws == 0 {
        return Err(Error::InvalidConfig("mu needs at least one draw".into()));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("empty pool".into()));
    }
    let sizes = model.mlp().sizes().to_vec();
    transform.validate(&sizes)?;
    let mut mu_rng = rng(seed, Domain::MuPerturb);
    let mut flipped = 0usize;
    for &pair in pairs {
        let x = model.modality().project_pair(pair);
        let (clean_logits, _) = model.mlp().forward(&x)?;
        let clean = argmax(&clean_logits).expect("non-empty logits");
        let mut flip = false;
        for _ in 0..draws {
            let draw = transform.sample(&sizes, &mut mu_rng)?;
            let (logits, _) = model.mlp().forward_perturbed(&x, &draw)?;
            if argmax(&logits).expect("non-empty logits") != clean {
                flip = true;
            }
        }
        if flip {
            flipped += 1;
        }
    }
    Ok(flipped as f64 / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use alloc::vec;

    use super::*;
    use crate::net::{Activation, Mlp};
    use crate::synth::Modality;

    fn line_set(values: &[f64], labels: &[usize], radius: f64) -> FinitePointSet {
        FinitePointSet::from_scalars(values, labels, radius).unwrap()
    }

    /// A model computing fixed logits regardless of input.
    fn constant_model(logits: [f64; 2]) -> TrainedModel {
        let mlp = Mlp::from_parts(
            vec![2, 2],
            Activation::Tanh,
            vec![vec![0.0; 4]],
            vec![logits.to_vec()],
            0,
        )
        .unwrap();
        TrainedModel::new(mlp, Modality::Both, alloc::vec::Vec::new()).unwrap()
    }

    #[test]
    fn neighborhood_matches_hand_computed_line() {
        // Points 0,1,2,5 with radius 1.5: only 0 and 1 are within 1.5 of
        // point 0.
        let ps = line_set(&[0.0, 1.0, 2.0, 5.0], &[0, 0, 0, 0], 1.5);
        assert_eq!(neighborhood(&[0], &ps).unwrap(), vec![0, 1]);
        assert_eq!(neighborhood(&[1], &ps).unwrap(), vec![0, 1, 2]);
        assert_eq!(neighborhood(&[3], &ps).unwrap(), vec![3]);
    }

    #[test]
    fn neighborhood_trivial_cases() {
        let ps = line_set(&[0.0, 1.0, 2.0, 5.0], &[0, 1, 0, 1], 100.0);
        assert_eq!(neighborhood(&[2], &ps).unwrap(), vec![0, 1, 2, 3]);

        let tight = line_set(&[0.0, 1.0, 2.0, 5.0], &[0, 1, 0, 1], 0.5);
        assert_eq!(neighborhood(&[0, 1, 2, 3], &tight).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn neighborhood_rejects_bad_subsets() {
        let ps = line_set(&[0.0, 1.0], &[0, 1], 1.0);
        assert!(neighborhood(&[], &ps).is_err());
        assert!(neighborhood(&[2], &ps).is_err());
    }

    #[test]
    fn point_set_validation() {
        assert!(FinitePointSet::from_scalars(&[], &[], 1.0).is_err());
        // Class 1 missing.
        assert!(FinitePointSet::from_scalars(&[0.0, 1.0], &[0, 2], 1.0).is_err());
        assert!(FinitePointSet::from_scalars(&[0.0], &[0], 0.0).is_err());
        assert!(FinitePointSet::from_scalars(&[f64::NAN], &[0], 1.0).is_err());
        let ragged = FinitePointSet::new(vec![vec![0.0], vec![0.0, 1.0]], vec![0, 0], 1.0);
        assert!(ragged.is_err());
    }

    #[test]
    fn class_measure_counts_class_points_only() {
        let ps = line_set(&[0.0, 1.0, 2.0, 3.0], &[0, 0, 0, 1], 1.0);
        assert_eq!(ps.class_measure(0, &[0, 1, 3]), 2.0 / 3.0);
        assert_eq!(ps.class_measure(1, &[0, 1, 3]), 1.0);
        assert_eq!(ps.class_size(0), 3);
    }

    #[test]
    fn dense_cluster_expands_to_the_cap() {
        // All four class points within radius of each other: every
        // neighborhood saturates the class, nothing constrains c, and the
        // estimate falls back to the certifiable cap 1/P(singleton) = 4.
        let ps = line_set(&[0.0, 0.1, 0.2, 0.3], &[0, 0, 0, 0], 1.0);
        let est = estimate_expansion(&ps, 0, 0.5, &SubsetBudget::default()).unwrap();
        assert_eq!(est.c_hat, 4.0);
        assert!(est.exhaustive);
        assert!(est.capped);
        assert_eq!(est.witness.len(), 1);
        // 4 singletons + 6 pairs.
        assert_eq!(est.subsets_checked, 10);
        assert_eq!(subset_ratio(&ps, 0, &est.witness).unwrap(), est.c_hat);
    }

    #[test]
    fn separated_cluster_does_not_expand() {
        // Two class-0 clusters farther apart than the radius: picking one
        // whole cluster yields N(V) = V, ratio 1.
        let ps = line_set(&[0.0, 0.1, 10.0, 10.1], &[0, 0, 0, 0], 1.0);
        let est = estimate_expansion(&ps, 0, 0.5, &SubsetBudget::default()).unwrap();
        assert_eq!(est.c_hat, 1.0);
        assert!(!est.capped);
        let ratio = subset_ratio(&ps, 0, &est.witness).unwrap();
        assert_eq!(ratio, est.c_hat);
    }

    #[test]
    fn estimator_input_validation() {
        let ps = line_set(&[0.0, 1.0], &[0, 1], 1.0);
        let budget = SubsetBudget::default();
        assert!(estimate_expansion(&ps, 2, 0.5, &budget).is_err());
        assert!(estimate_expansion(&ps, 0, 0.0, &budget).is_err());
        assert!(estimate_expansion(&ps, 0, 1.5, &budget).is_err());
        // One class point: a_bar below the singleton measure leaves
        // nothing to check.
        assert!(estimate_expansion(&ps, 0, 0.4, &budget).is_err());
    }

    #[test]
    fn sampled_path_requires_a_budget() {
        let n = ENUMERATION_LIMIT + 5;
        let values: alloc::vec::Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut labels = vec![0usize; n];
        labels.push(1);
        let mut values = values;
        values.push(-10.0);
        let ps = line_set(&values, &labels, 1.5);
        let empty = SubsetBudget {
            random_subsets: 0,
            extra: vec![],
            seed: 0,
        };
        assert!(estimate_expansion(&ps, 0, 0.5, &empty).is_err());

        // With a budget the lattice's singleton ratio of 3 is found; the
        // witness reproduces the estimate.
        let est = estimate_expansion(&ps, 0, 0.5, &SubsetBudget::random(50, 0)).unwrap();
        assert!(!est.exhaustive);
        assert!(est.c_hat >= 1.0);
        assert_eq!(subset_ratio(&ps, 0, &est.witness).unwrap(), est.c_hat);
    }

    #[test]
    fn sampled_estimates_are_deterministic_per_seed() {
        let n = 30;
        let values: alloc::vec::Vec<f64> = (0..n).map(|i| (i * i % 17) as f64 * 0.3).collect();
        let labels: alloc::vec::Vec<usize> = (0..n).map(|i| i % 2).collect();
        let ps = line_set(&values, &labels, 0.5);
        let a = estimate_expansion(&ps, 0, 0.6, &SubsetBudget::random(40, 3)).unwrap();
        let b = estimate_expansion(&ps, 0, 0.6, &SubsetBudget::random(40, 3)).unwrap();
        assert_eq!(a, b);
        let c = estimate_expansion(&ps, 0, 0.6, &SubsetBudget::random(40, 4)).unwrap();
        assert_eq!(subset_ratio(&ps, 0, &c.witness).unwrap(), c.c_hat);
    }

    #[test]
    fn extra_subsets_are_restricted_to_the_class() {
        let n = 20;
        let values: alloc::vec::Vec<f64> = (0..n).map(|i| i as f64 * 10.0).collect();
        let labels: alloc::vec::Vec<usize> = (0..n).map(|i| i % 2).collect();
        // Radius 1: every point is isolated, all ratios are 1.
        let ps = line_set(&values, &labels, 1.0);
        let budget = SubsetBudget {
            random_subsets: 0,
            // Mixed-class set; only the class-0 members survive.
            extra: vec![vec![0, 1, 2, 3]],
            seed: 0,
        };
        let est = estimate_expansion(&ps, 0, 0.5, &budget).unwrap();
        assert_eq!(est.c_hat, 1.0);
        assert!(est.witness.iter().all(|&i| labels[i] == 0));
    }

    #[test]
    fn product_set_pairs_classes() {
        let alpha = line_set(&[0.0, 1.0, 5.0], &[0, 0, 1], 1.0);
        let beta = line_set(&[2.0, 7.0, 8.0], &[0, 1, 1], 2.0);
        let prod = FinitePointSet::product(&alpha, &beta).unwrap();
        // 2 class-0 alphas x 1 class-0 beta + 1 class-1 alpha x 2 class-1
        // betas.
        assert_eq!(prod.len(), 4);
        assert_eq!(prod.dim(), 2);
        assert_eq!(prod.class_size(0), 2);
        assert_eq!(prod.class_size(1), 2);
        assert_eq!(prod.points()[0], vec![0.0, 2.0]);
        assert!(matches!(
            prod.metric(),
            Metric::ProductMax { split: 1, .. }
        ));

        let three_class = line_set(&[0.0, 1.0, 2.0], &[0, 1, 2], 1.0);
        assert!(FinitePointSet::product(&alpha, &three_class).is_err());
        assert!(FinitePointSet::product(&alpha, &prod).is_err());
    }

    #[test]
    fn product_neighborhoods_factor() {
        // Within reach in the product iff within reach in both parts.
        let alpha = line_set(&[0.0, 0.5, 3.0, 9.0], &[0, 0, 0, 1], 1.0);
        let beta = line_set(&[0.0, 1.5, 9.0], &[0, 0, 1], 2.0);
        let prod = FinitePointSet::product(&alpha, &beta).unwrap();
        // Class-0 product points: (0,0) (0,1.5) (0.5,0) (0.5,1.5) (3,0)
        // (3,1.5); index of (0,0) is 0. Alpha-near: 0, 0.5; beta-near:
        // both. So N((0,0)) covers the first four.
        let n = neighborhood(&[0], &prod).unwrap();
        assert_eq!(n, vec![0, 1, 2, 3]);
    }

    #[test]
    fn lemma1_holds_on_dense_clusters() {
        // Both modalities one dense blob per class: every constant hits
        // the size cap and the product check passes.
        let alpha = line_set(&[0.0, 0.01, 0.02, 5.0, 5.01, 5.02], &[0, 0, 0, 1, 1, 1], 1.0);
        let beta = line_set(&[1.0, 1.01, 9.0, 9.01], &[0, 0, 1, 1], 1.0);
        let report = check_lemma1(&alpha, &beta, 0.5, &SubsetBudget::default()).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.c1_hat >= 1.0);
        assert!(report.c2_hat >= 1.0);
        assert!(report.c_prod_hat >= 0.9 * report.c1_hat * report.c2_hat);
    }

    #[test]
    fn misclassified_set_of_constant_models() {
        let pairs = vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let labels = vec![0, 0, 1, 1];
        let pool = crate::synth::UnlabeledMultimodal::new(pairs, labels).unwrap();

        // Always predicts class 0: wrong exactly on class 1.
        let zero = constant_model([1.0, 0.0]);
        let m = misclassified_set(&zero, pool.oracle()).unwrap();
        assert_eq!(m.indices, vec![2, 3]);
        assert_eq!(m.a_bar, 1.0);

        // Always predicts class 1: wrong exactly on class 0.
        let one = constant_model([0.0, 1.0]);
        let m = misclassified_set(&one, pool.oracle()).unwrap();
        assert_eq!(m.indices, vec![0, 1]);
        assert_eq!(m.a_bar, 1.0);
    }

    #[test]
    fn bound_arithmetic_is_exact() {
        // 4*0.32/5 + 4*0.01 in f64.
        assert_eq!(theorem1_bound(0.32, 2.0, 3.0, 0.01).unwrap(), 0.296);
        assert_eq!(theorem1_bound(0.0, 2.0, 3.0, 0.01).unwrap(), 0.04);
        assert_eq!(unimodal_bound(0.32, 6.0, 0.01).unwrap(), 0.296);
    }

    #[test]
    fn bound_domain_errors() {
        assert!(theorem1_bound(0.3, 1.0, 1.0, 0.0).is_err());
        assert!(theorem1_bound(0.3, 0.5, 1.9, 0.0).is_err());
        assert!(unimodal_bound(0.3, 1.0, 0.0).is_err());
        assert!(theorem1_bound(1.5, 2.0, 2.0, 0.0).is_err());
        assert!(theorem1_bound(0.3, 2.0, 2.0, -0.1).is_err());
    }

    #[test]
    fn multimodal_bound_beats_unimodal_when_both_expand() {
        for c1 in [1.2, 2.0, 4.0] {
            for c2 in [1.5, 3.0] {
                let mm = theorem1_bound(0.3, c1, c2, 0.01).unwrap();
                let um = unimodal_bound(0.3, c1, 0.01).unwrap();
                assert!(mm < um, "c1={c1} c2={c2}: {mm} !< {um}");
            }
        }
    }

    #[test]
    fn mu_trivial_cases() {
        let model = constant_model([0.3, -0.2]);
        let pairs = vec![[0.0, 0.0], [1.0, -1.0], [0.5, 0.5]];
        let t = Transform::InputGaussian { variance: 4.0 };
        // Constant classifier never flips.
        assert_eq!(measure_mu(&model, &pairs, &t, 8, 0).unwrap(), 0.0);
        // No perturbation never flips.
        let none = measure_mu(&model, &pairs, &Transform::None, 8, 0).unwrap();
        assert_eq!(none, 0.0);
        assert!(measure_mu(&model, &pairs, &t, 0, 0).is_err());
        assert!(measure_mu(&model, &[], &t, 8, 0).is_err());
    }

    #[test]
    fn mu_detects_fragile_models() {
        // A thin linear margin on the first coordinate: strong input
        // noise must flip some near-boundary points, and mu grows with
        // the number of draws.
        let mlp = Mlp::from_parts(
            vec![2, 2],
            Activation::Tanh,
            vec![vec![1.0, 0.0, -1.0, 0.0]],
            vec![vec![0.0, 0.0]],
            0,
        )
        .unwrap();
        let model = TrainedModel::new(mlp, Modality::Both, alloc::vec::Vec::new()).unwrap();
        let pairs: alloc::vec::Vec<[f64; 2]> =
            (0..40).map(|i| [0.05 + (i % 5) as f64 * 0.02, 0.0]).collect();
        let t = Transform::InputGaussian { variance: 1.0 };
        let mu_few = measure_mu(&model, &pairs, &t, 1, 7).unwrap();
        let mu_many = measure_mu(&model, &pairs, &t, 32, 7).unwrap();
        assert!(mu_many > 0.5, "mu {mu_many} too small for a thin margin");
        assert!(mu_many >= mu_few);
        assert!((0.0..=1.0).contains(&mu_many));
    }
}

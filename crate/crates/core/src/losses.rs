//! Primary-task and auxiliary-task objectives with analytic gradients.
//!
//! The primary objective trains the classifier:
//! `CE(source) + λ_c · H(target) + λ_cb · CB(target)`.
//! The auxiliary objective trains the alignment matrix with the classifier
//! frozen: `‖Z_t Φ − Z_s‖²_F + γ_c · H + γ_cb · CB`, where the entropy terms
//! are evaluated on target features re-projected through `Φ`.
//!
//! Probabilities are clamped to `[1e-12, 1 − 1e-12]` before every logarithm.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::model::{softmax_rows_inplace, ClassifierGrad, SoftmaxClassifier};
use crate::scalar::Scalar;
use crate::subspace::{lift_coordinates, AlignmentMap, Subspace};

pub const PROB_FLOOR: f64 = 1e-12;

fn clamp_prob<A: Scalar>(p: A) -> A {
    let lo = A::of(PROB_FLOOR);
    let hi = A::one() - lo;
    p.max(lo).min(hi)
}

/// Regularizer weights for the primary (`λ`) and auxiliary (`γ`) objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_c: f64,
    pub lambda_cb: f64,
    pub gamma_c: f64,
    pub gamma_cb: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_c: 0.1, lambda_cb: 0.1, gamma_c: 0.1, gamma_cb: 0.1 }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self { lambda_c: 0.0, lambda_cb: 0.0, gamma_c: 0.0, gamma_cb: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("lambda_c", self.lambda_c),
            ("lambda_cb", self.lambda_cb),
            ("gamma_c", self.gamma_c),
            ("gamma_cb", self.gamma_cb),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossComponent {
    #[serde(rename = "ce")]
    CrossEntropy,
    CondEntropy,
    ClassBalance,
    AlignCost,
}

impl LossComponent {
    pub fn name(self) -> &'static str {
        match self {
            LossComponent::CrossEntropy => "ce",
            LossComponent::CondEntropy => "cond_entropy",
            LossComponent::ClassBalance => "class_balance",
            LossComponent::AlignCost => "align_cost",
        }
    }
}

impl fmt::Display for LossComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerm<A> {
    pub component: LossComponent,
    pub weight: A,
    pub value: A,
}

/// A loss total together with the unweighted components it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<A> {
    pub total: A,
    terms: Vec<LossTerm<A>>,
}

impl<A: Scalar> LossValue<A> {
    fn from_terms(terms: Vec<LossTerm<A>>) -> Self {
        let total = terms.iter().fold(A::zero(), |acc, t| acc + t.weight * t.value);
        Self { total, terms }
    }

    pub fn terms(&self) -> &[LossTerm<A>] {
        &self.terms
    }

    pub fn component(&self, component: LossComponent) -> Option<A> {
        self.terms.iter().find(|t| t.component == component).map(|t| t.value)
    }

    pub fn weighted_sum(&self) -> A {
        self.terms.iter().fold(A::zero(), |acc, t| acc + t.weight * t.value)
    }

    /// Adds `other` term by term; components missing here are appended.
    pub fn accumulate(&mut self, other: &LossValue<A>) {
        for t in &other.terms {
            match self.terms.iter_mut().find(|s| s.component == t.component && s.weight == t.weight) {
                Some(existing) => existing.value += t.value,
                None => self.terms.push(*t),
            }
        }
        self.total += other.total;
    }
}

fn check_probs<A: Scalar>(probs: ArrayView2<A>) -> Result<()> {
    let (m, c) = probs.dim();
    if m == 0 || c < 2 {
        return dim_err(format!("probability matrix must have rows and at least 2 classes, got {m}x{c}"));
    }
    let tol = A::of(1e-6).max(A::epsilon() * A::of_usize(4 * c));
    for (i, row) in probs.outer_iter().enumerate() {
        if !row.iter().all(|p| p.is_finite() && *p >= A::zero()) {
            return Err(Error::Domain(format!("row {i} has negative or non-finite probabilities")));
        }
        if (row.sum() - A::one()).abs() > tol {
            return Err(Error::Domain(format!("row {i} sums to {} instead of 1", row.sum())));
        }
    }
    Ok(())
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return dim_err(format!("{} labels for {rows} rows", labels.len()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Domain(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

/// Mean negative log-likelihood of the true labels.
pub fn cross_entropy<A: Scalar>(probs: ArrayView2<A>, labels: &[usize]) -> Result<A> {
    check_probs(probs)?;
    check_labels(labels, probs.nrows(), probs.ncols())?;
    Ok(cross_entropy_unchecked(probs, labels))
}

fn cross_entropy_unchecked<A: Scalar>(probs: ArrayView2<A>, labels: &[usize]) -> A {
    let m = A::of_usize(labels.len());
    let sum = labels
        .iter()
        .enumerate()
        .fold(A::zero(), |acc, (i, &y)| acc - clamp_prob(probs[[i, y]]).ln());
    sum / m
}

/// Mean Shannon entropy of the rows, with `0 · ln 0 = 0`.
pub fn conditional_entropy<A: Scalar>(probs: ArrayView2<A>) -> Result<A> {
    check_probs(probs)?;
    Ok(conditional_entropy_unchecked(probs))
}

fn row_entropy<A: Scalar>(row: ndarray::ArrayView1<A>) -> A {
    row.iter().fold(A::zero(), |acc, &p| if p == A::zero() { acc } else { acc - p * clamp_prob(p).ln() })
}

fn conditional_entropy_unchecked<A: Scalar>(probs: ArrayView2<A>) -> A {
    let m = A::of_usize(probs.nrows());
    probs.outer_iter().map(row_entropy).fold(A::zero(), |a, b| a + b) / m
}

/// Per-class Bernoulli cross-entropy between the mean prediction and the
/// uniform distribution, averaged over classes.
pub fn class_balance<A: Scalar>(probs: ArrayView2<A>) -> Result<A> {
    check_probs(probs)?;
    class_balance_unchecked(probs)
}

fn class_balance_unchecked<A: Scalar>(probs: ArrayView2<A>) -> Result<A> {
    let c = probs.ncols();
    let u = A::one() / A::of_usize(c);
    let mean = probs.mean_axis(Axis(0)).expect("non-empty");
    let mut acc = A::zero();
    for &p in mean.iter() {
        let q = clamp_prob(p);
        if !(q > A::zero() && q < A::one()) {
            return Err(Error::Numerical(format!("mean prediction {p} outside (0, 1)")));
        }
        acc = acc + u * q.ln() + (A::one() - u) * (A::one() - q).ln();
    }
    Ok(-acc / A::of_usize(c))
}

/// Smallest possible class-balance value for `classes` classes.
pub fn class_balance_minimum(classes: usize) -> f64 {
    let u = 1.0 / classes as f64;
    -(u * u.ln() + (1.0 - u) * (1.0 - u).ln())
}

// Gradients of the three terms with respect to the logits.

fn cross_entropy_logit_grad<A: Scalar>(probs: &Array2<A>, labels: &[usize]) -> Array2<A> {
    let m = A::of_usize(labels.len());
    let mut g = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        g[[i, y]] -= A::one();
    }
    g.mapv_inplace(|x| x / m);
    g
}

fn entropy_logit_grad<A: Scalar>(probs: &Array2<A>) -> Array2<A> {
    let m = A::of_usize(probs.nrows());
    let mut g = Array2::zeros(probs.raw_dim());
    for (i, row) in probs.outer_iter().enumerate() {
        let h = row_entropy(row);
        for (j, &p) in row.iter().enumerate() {
            if p != A::zero() {
                g[[i, j]] = -p * (clamp_prob(p).ln() + h) / m;
            }
        }
    }
    g
}

fn class_balance_logit_grad<A: Scalar>(probs: &Array2<A>) -> Array2<A> {
    let (m, c) = probs.dim();
    let u = A::one() / A::of_usize(c);
    let mean = probs.mean_axis(Axis(0)).expect("non-empty");
    let inv_c = A::one() / A::of_usize(c);
    let inv_m = A::one() / A::of_usize(m);
    // d CB / d mean_j
    let dmean: Array1<A> = mean.mapv(|p| {
        let q = clamp_prob(p);
        -inv_c * (u / q - (A::one() - u) / (A::one() - q))
    });
    let mut g = Array2::zeros((m, c));
    for (i, row) in probs.outer_iter().enumerate() {
        let inner = row.dot(&dmean);
        for j in 0..c {
            g[[i, j]] = inv_m * row[j] * (dmean[j] - inner);
        }
    }
    g
}

type TargetTerms<A> = (Vec<LossTerm<A>>, Option<Array2<A>>);

/// Entropy and class-balance terms on `probs` plus their combined logit gradient.
fn target_terms<A: Scalar>(
    probs: &Array2<A>,
    w_c: A,
    w_cb: A,
    want_grad: bool,
) -> Result<TargetTerms<A>> {
    let terms = vec![
        LossTerm { component: LossComponent::CondEntropy, weight: w_c, value: conditional_entropy_unchecked(probs.view()) },
        LossTerm { component: LossComponent::ClassBalance, weight: w_cb, value: class_balance_unchecked(probs.view())? },
    ];
    let grad = want_grad.then(|| {
        let mut g = entropy_logit_grad(probs);
        g.mapv_inplace(|x| x * w_c);
        g.scaled_add(w_cb, &class_balance_logit_grad(probs));
        g
    });
    Ok((terms, grad))
}

fn classifier_grad_from_logits<A: Scalar>(x: ArrayView2<A>, dlogits: &Array2<A>) -> ClassifierGrad<A> {
    ClassifierGrad { weights: x.t().dot(dlogits), bias: dlogits.sum_axis(Axis(0)) }
}

/// Primary objective and its gradient with respect to the classifier.
///
/// `xt_aligned` may have zero rows, in which case the target terms are omitted.
pub fn primary_loss_and_grad<A: Scalar>(
    classifier: &SoftmaxClassifier<A>,
    xs: ArrayView2<A>,
    ys: &[usize],
    xt_aligned: ArrayView2<A>,
    weights: &LossWeights,
) -> Result<(LossValue<A>, ClassifierGrad<A>)> {
    primary(classifier, xs, ys, xt_aligned, weights, true).map(|(v, g)| (v, g.expect("requested")))
}

pub fn primary_loss<A: Scalar>(
    classifier: &SoftmaxClassifier<A>,
    xs: ArrayView2<A>,
    ys: &[usize],
    xt_aligned: ArrayView2<A>,
    weights: &LossWeights,
) -> Result<LossValue<A>> {
    primary(classifier, xs, ys, xt_aligned, weights, false).map(|(v, _)| v)
}

pub fn grad_primary_wrt_theta<A: Scalar>(
    classifier: &SoftmaxClassifier<A>,
    xs: ArrayView2<A>,
    ys: &[usize],
    xt_aligned: ArrayView2<A>,
    weights: &LossWeights,
) -> Result<ClassifierGrad<A>> {
    primary_loss_and_grad(classifier, xs, ys, xt_aligned, weights).map(|(_, g)| g)
}

fn primary<A: Scalar>(
    classifier: &SoftmaxClassifier<A>,
    xs: ArrayView2<A>,
    ys: &[usize],
    xt_aligned: ArrayView2<A>,
    weights: &LossWeights,
    want_grad: bool,
) -> Result<(LossValue<A>, Option<ClassifierGrad<A>>)> {
    weights.validate()?;
    if xs.nrows() == 0 {
        return Err(Error::InsufficientData("primary loss needs at least one source row".into()));
    }
    check_labels(ys, xs.nrows(), classifier.classes())?;
    let ps = classifier.predict_probs(xs)?;
    let mut terms = vec![LossTerm {
        component: LossComponent::CrossEntropy,
        weight: A::one(),
        value: cross_entropy_unchecked(ps.view(), ys),
    }];
    let mut grad = want_grad.then(|| classifier_grad_from_logits(xs, &cross_entropy_logit_grad(&ps, ys)));
    if xt_aligned.nrows() > 0 {
        let pt = classifier.predict_probs(xt_aligned)?;
        let (target, dlogits) = target_terms(&pt, A::of(weights.lambda_c), A::of(weights.lambda_cb), want_grad)?;
        terms.extend(target);
        if let (Some(g), Some(dz)) = (grad.as_mut(), dlogits) {
            g.add_assign(&classifier_grad_from_logits(xt_aligned, &dz));
        }
    }
    Ok((LossValue::from_terms(terms), grad))
}

/// Auxiliary objective evaluated on raw target rows `xt_val`.
pub fn auxiliary_loss<A: Scalar>(
    phi: &AlignmentMap<A>,
    zt: &Subspace<A>,
    zs: &Subspace<A>,
    classifier: &SoftmaxClassifier<A>,
    xt_val: ArrayView2<A>,
    weights: &LossWeights,
) -> Result<LossValue<A>> {
    let coords = zt.coordinates(xt_val)?;
    auxiliary_from_coordinates(phi, zt, zs, classifier, coords.view(), weights, false).map(|(v, _)| v)
}

pub fn grad_auxiliary_wrt_phi<A: Scalar>(
    phi: &AlignmentMap<A>,
    zt: &Subspace<A>,
    zs: &Subspace<A>,
    classifier: &SoftmaxClassifier<A>,
    xt_val: ArrayView2<A>,
    weights: &LossWeights,
) -> Result<Array2<A>> {
    let coords = zt.coordinates(xt_val)?;
    auxiliary_from_coordinates(phi, zt, zs, classifier, coords.view(), weights, true)
        .map(|(_, g)| g.expect("requested"))
}

/// Auxiliary objective from precomputed target subspace coordinates
/// `(X_t − c_t) Z_t`, optionally with its gradient with respect to `Φ`.
pub fn auxiliary_from_coordinates<A: Scalar>(
    phi: &AlignmentMap<A>,
    zt: &Subspace<A>,
    zs: &Subspace<A>,
    classifier: &SoftmaxClassifier<A>,
    coords: ArrayView2<A>,
    weights: &LossWeights,
    want_grad: bool,
) -> Result<(LossValue<A>, Option<Array2<A>>)> {
    weights.validate()?;
    let align = crate::subspace::alignment_cost(zt, phi, zs)?;
    if coords.ncols() != phi.dim() {
        return dim_err(format!("coordinates have {} columns, alignment is {}-dim", coords.ncols(), phi.dim()));
    }
    if classifier.ambient_dim() != zs.ambient_dim() {
        return dim_err(format!(
            "classifier expects R^{}, source subspace lives in R^{}",
            classifier.ambient_dim(),
            zs.ambient_dim()
        ));
    }
    let mut terms = vec![LossTerm { component: LossComponent::AlignCost, weight: A::one(), value: align }];
    let mut grad = want_grad.then(|| {
        let residual = zt.basis().dot(&phi.phi()) - zs.basis();
        zt.basis().t().dot(&residual).mapv(|x| x + x)
    });
    if coords.nrows() > 0 {
        let aligned = lift_coordinates(coords, phi, zs);
        let mut probs = classifier.logits(aligned.view())?;
        softmax_rows_inplace(&mut probs);
        let (target, dlogits) = target_terms(&probs, A::of(weights.gamma_c), A::of(weights.gamma_cb), want_grad)?;
        terms.extend(target);
        if let (Some(g), Some(dz)) = (grad.as_mut(), dlogits) {
            // d/dΦ of f(coords Φ Z_sᵀ W) = coordsᵀ · dZ · (Wᵀ Z_s)
            let wz = classifier.weights().t().dot(&zs.basis());
            *g += &coords.t().dot(&dz.dot(&wz));
        }
    }
    Ok((LossValue::from_terms(terms), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn uniform(m: usize, c: usize) -> Array2<f64> {
        Array2::from_elem((m, c), 1.0 / c as f64)
    }

    #[test]
    fn uniform_identities() {
        let p = uniform(4, 10);
        let ln10 = 10f64.ln();
        assert!((cross_entropy(p.view(), &[0, 3, 9, 2]).unwrap() - ln10).abs() < 1e-12);
        assert!((conditional_entropy(p.view()).unwrap() - ln10).abs() < 1e-12);
    }

    #[test]
    fn one_hot_rows() {
        let p = array![[1.0f64, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(cross_entropy(p.view(), &[0, 2]).unwrap() <= 1e-7);
        assert!(conditional_entropy(p.view()).unwrap().abs() < 1e-11);
    }

    #[test]
    fn hand_computed_values() {
        let p = array![[0.9f64, 0.1], [0.2, 0.8]];
        let ce = cross_entropy(p.view(), &[0, 1]).unwrap();
        assert!((ce - 0.164252033486018).abs() < 1e-12);
        let h = conditional_entropy(array![[0.5, 0.25, 0.25]].view()).unwrap();
        assert!((h - (0.5 * 2f64.ln() + 0.5 * 4f64.ln())).abs() < 1e-12);
        assert!((h - 1.039720770839918).abs() < 1e-12);
    }

    #[test]
    fn class_balance_values() {
        let half = array![[0.5, 0.5]];
        assert!((class_balance(half.view()).unwrap() - 2f64.ln()).abs() < 1e-12);
        let skewed = array![[0.9, 0.1]];
        let expect = -0.5 * (0.9f64.ln() + 0.1f64.ln());
        assert!((class_balance(skewed.view()).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 1.203972804325936).abs() < 1e-12);
        // mean uniform although rows are not
        let balanced = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!((class_balance(balanced.view()).unwrap() - class_balance_minimum(3)).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        let p = array![[0.5, 0.5]];
        assert!(matches!(cross_entropy(p.view(), &[2]), Err(Error::Domain(_))));
        assert!(matches!(cross_entropy(p.view(), &[0, 1]), Err(Error::Dimension(_))));
        assert!(matches!(conditional_entropy(array![[0.7, 0.7]].view()), Err(Error::Domain(_))));
        assert!(class_balance(Array2::<f64>::zeros((0, 2)).view()).is_err());
    }

    #[test]
    fn zero_lambdas_reduce_to_source_cross_entropy() {
        let clf = SoftmaxClassifier::new(array![[0.3, -0.2], [0.1, 0.4]], array![0.05, -0.05]).unwrap();
        let xs = array![[1.0, 2.0], [-1.0, 0.5]];
        let xt = array![[0.3, 0.3]];
        let w = LossWeights::zero();
        let with_target = primary_loss(&clf, xs.view(), &[0, 1], xt.view(), &w).unwrap();
        let empty = primary_loss(&clf, xs.view(), &[0, 1], Array2::zeros((0, 2)).view(), &w).unwrap();
        let ce = cross_entropy(clf.predict_probs(xs.view()).unwrap().view(), &[0, 1]).unwrap();
        assert_eq!(with_target.total, ce);
        assert_eq!(empty.total, ce);
        assert_eq!(empty.terms().len(), 1);
    }

    #[test]
    fn zero_gammas_reduce_to_alignment_cost() {
        let zt = Subspace::from_basis(array![[1.0, 0.0], [0.0, 0.6], [0.0, 0.8]]).unwrap();
        let zs = Subspace::from_basis(array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let clf = SoftmaxClassifier::<f64>::zeros(3, 2).unwrap();
        let phi = AlignmentMap::identity(2);
        let x = array![[1.0, 2.0, 3.0]];
        let v = auxiliary_loss(&phi, &zt, &zs, &clf, x.view(), &LossWeights::zero()).unwrap();
        let cost = crate::subspace::alignment_cost(&zt, &phi, &zs).unwrap();
        assert_eq!(v.total, cost);
        assert_eq!(v.component(LossComponent::AlignCost), Some(cost));
    }

    #[test]
    fn alignment_gradient_at_origin() {
        let zt = Subspace::from_basis(array![[1.0, 0.0], [0.0, 0.6], [0.0, 0.8]]).unwrap();
        let zs = Subspace::from_basis(array![[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]]).unwrap();
        let clf = SoftmaxClassifier::<f64>::zeros(3, 2).unwrap();
        let g = grad_auxiliary_wrt_phi(&AlignmentMap::zeros(2), &zt, &zs, &clf, Array2::zeros((0, 3)).view(), &LossWeights::zero()).unwrap();
        let expect = zt.basis().t().dot(&zs.basis()).mapv(|x| -2.0 * x);
        assert_eq!(g, expect);
        let g_same = grad_auxiliary_wrt_phi(&AlignmentMap::identity(2), &zs, &zs, &clf, Array2::zeros((0, 3)).view(), &LossWeights::zero()).unwrap();
        assert!(g_same.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn negative_weight_rejected() {
        let w = LossWeights { lambda_c: -0.1, ..Default::default() };
        assert!(matches!(w.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn accumulate_adds_matching_terms() {
        let clf = SoftmaxClassifier::<f64>::zeros(1, 2).unwrap();
        let xs = array![[1.0]];
        let xt = array![[2.0]];
        let a = primary_loss(&clf, xs.view(), &[0], xt.view(), &LossWeights::default()).unwrap();
        let mut sum = a.clone();
        sum.accumulate(&a);
        assert!((sum.total - 2.0 * a.total).abs() < 1e-15);
        assert_eq!(sum.terms().len(), 3);
        assert!((sum.weighted_sum() - sum.total).abs() < 1e-15);
    }
}

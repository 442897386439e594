//! Linear softmax classifier and the two first-order optimizers used to
//! train it (SGD with heavy-ball momentum) and the alignment matrix (Adam).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use crate::subspace::AlignmentMap;

/// A set of trainable tensors exposed as flat, contiguous slices.
///
/// Gradients use the same trait so optimizers can zip parameters and
/// gradients slice by slice.
pub trait Parameters<A> {
    fn slices(&self) -> Vec<&[A]>;
    fn slices_mut(&mut self) -> Vec<&mut [A]>;
}

impl<A: Scalar> Parameters<A> for Array2<A> {
    fn slices(&self) -> Vec<&[A]> {
        vec![self.as_slice().expect("standard layout")]
    }
    fn slices_mut(&mut self) -> Vec<&mut [A]> {
        vec![self.as_slice_mut().expect("standard layout")]
    }
}

impl<A: Scalar> Parameters<A> for AlignmentMap<A> {
    fn slices(&self) -> Vec<&[A]> {
        vec![self.phi().to_slice().expect("standard layout")]
    }
    fn slices_mut(&mut self) -> Vec<&mut [A]> {
        vec![self.phi_mut().as_slice_mut().expect("standard layout")]
    }
}

/// `softmax(X W + b)` classifier with `W: D×C` and `b: C`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier<A> {
    weights: Array2<A>,
    bias: Array1<A>,
}

/// Gradient of a scalar loss with respect to a [`SoftmaxClassifier`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGrad<A> {
    pub weights: Array2<A>,
    pub bias: Array1<A>,
}

impl<A: Scalar> ClassifierGrad<A> {
    pub fn zeros(ambient_dim: usize, classes: usize) -> Self {
        Self { weights: Array2::zeros((ambient_dim, classes)), bias: Array1::zeros(classes) }
    }

    pub fn scale(&mut self, k: A) {
        self.weights.mapv_inplace(|x| x * k);
        self.bias.mapv_inplace(|x| x * k);
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.weights += &other.weights;
        self.bias += &other.bias;
    }
}

macro_rules! weights_and_bias_params {
    ($ty:ident) => {
        impl<A: Scalar> Parameters<A> for $ty<A> {
            fn slices(&self) -> Vec<&[A]> {
                vec![
                    self.weights.as_slice().expect("standard layout"),
                    self.bias.as_slice().expect("standard layout"),
                ]
            }
            fn slices_mut(&mut self) -> Vec<&mut [A]> {
                vec![
                    self.weights.as_slice_mut().expect("standard layout"),
                    self.bias.as_slice_mut().expect("standard layout"),
                ]
            }
        }
    };
}

weights_and_bias_params!(SoftmaxClassifier);
weights_and_bias_params!(ClassifierGrad);

impl<A: Scalar> SoftmaxClassifier<A> {
    pub fn new(weights: Array2<A>, bias: Array1<A>) -> Result<Self> {
        let (ambient, classes) = weights.dim();
        if classes < 2 {
            return dim_err(format!("classifier needs at least 2 classes, got {classes}"));
        }
        if ambient == 0 {
            return dim_err("classifier input dimension must be positive");
        }
        if bias.len() != classes {
            return dim_err(format!("bias has length {}, expected {classes}", bias.len()));
        }
        linalg::check_finite(weights.view())?;
        if !bias.iter().all(|b| b.is_finite()) {
            return Err(Error::Numerical("classifier bias contains non-finite entries".into()));
        }
        Ok(Self { weights: weights.as_standard_layout().into_owned(), bias })
    }

    pub fn zeros(ambient_dim: usize, classes: usize) -> Result<Self> {
        Self::new(Array2::zeros((ambient_dim, classes)), Array1::zeros(classes))
    }

    /// Weights drawn from `U(−s, s)` with `s = sqrt(6 / (D + C))`, zero bias.
    pub fn init_uniform(ambient_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (6.0 / (ambient_dim + classes) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((ambient_dim, classes), || {
            A::of(rng.random_range(-scale..scale))
        });
        Self::new(weights, Array1::zeros(classes))
    }

    pub fn weights(&self) -> ArrayView2<'_, A> {
        self.weights.view()
    }

    pub fn bias(&self) -> ArrayView1<'_, A> {
        self.bias.view()
    }

    pub fn ambient_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn logits(&self, x: ArrayView2<A>) -> Result<Array2<A>> {
        if x.ncols() != self.ambient_dim() {
            return dim_err(format!(
                "features have {} columns, classifier expects {}",
                x.ncols(),
                self.ambient_dim()
            ));
        }
        Ok(x.dot(&self.weights) + self.bias.view().insert_axis(Axis(0)))
    }

    /// Row-wise softmax of the logits, computed with max-subtraction.
    pub fn predict_probs(&self, x: ArrayView2<A>) -> Result<Array2<A>> {
        let mut z = self.logits(x)?;
        softmax_rows_inplace(&mut z);
        Ok(z)
    }

    pub fn predict_classes(&self, x: ArrayView2<A>) -> Result<Vec<usize>> {
        let probs = self.predict_probs(x)?;
        Ok(probs.outer_iter().map(|row| argmax(row)).collect())
    }

    /// Fraction of rows whose argmax matches `labels`.
    pub fn accuracy(&self, x: ArrayView2<A>, labels: &[usize]) -> Result<f64> {
        if labels.len() != x.nrows() {
            return dim_err(format!("{} labels for {} rows", labels.len(), x.nrows()));
        }
        let predicted = self.predict_classes(x)?;
        Ok(accuracy(&predicted, labels))
    }
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

pub(crate) fn softmax_rows_inplace<A: Scalar>(z: &mut Array2<A>) {
    for mut row in z.rows_mut() {
        let max = row.iter().fold(A::neg_infinity(), |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub(crate) fn argmax<A: Scalar>(row: ArrayView1<A>) -> usize {
    let mut best = 0;
    for (j, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = j;
        }
    }
    best
}

fn check_shapes<A, P: Parameters<A> + ?Sized, G: Parameters<A> + ?Sized>(params: &P, grads: &G) -> Result<Vec<usize>> {
    let p: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
    let g: Vec<usize> = grads.slices().iter().map(|s| s.len()).collect();
    if p != g {
        return dim_err(format!("parameter shapes {p:?} do not match gradient shapes {g:?}"));
    }
    Ok(p)
}

fn zeroed_like<A: Scalar>(shapes: &[usize]) -> Vec<Vec<A>> {
    shapes.iter().map(|&n| vec![A::zero(); n]).collect()
}

fn buffers_match<A>(buffers: &[Vec<A>], shapes: &[usize]) -> bool {
    buffers.len() == shapes.len() && buffers.iter().zip(shapes).all(|(b, &n)| b.len() == n)
}

/// Heavy-ball momentum: `v ← μ v − η g`, `θ ← θ + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdMomentum<A> {
    pub learning_rate: A,
    pub momentum: A,
    velocity: Vec<Vec<A>>,
}

impl<A: Scalar> SgdMomentum<A> {
    pub fn new(learning_rate: A, momentum: A) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate > A::zero()) {
            return Err(Error::Config(format!("learning rate must be positive, got {learning_rate}")));
        }
        if !(momentum >= A::zero() && momentum < A::one()) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Self { learning_rate, momentum, velocity: Vec::new() })
    }

    pub fn velocity(&self) -> &[Vec<A>] {
        &self.velocity
    }

    pub fn step<P, G>(&mut self, params: &mut P, grads: &G) -> Result<()>
    where
        P: Parameters<A> + ?Sized,
        G: Parameters<A> + ?Sized,
    {
        let shapes = check_shapes(params, grads)?;
        if self.velocity.is_empty() {
            self.velocity = zeroed_like(&shapes);
        } else if !buffers_match(&self.velocity, &shapes) {
            return dim_err("parameter shapes changed between optimizer steps");
        }
        for ((theta, g), v) in params.slices_mut().into_iter().zip(grads.slices()).zip(&mut self.velocity) {
            for ((t, &gi), vi) in theta.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = self.momentum * *vi - self.learning_rate * gi;
                *t += *vi;
            }
        }
        Ok(())
    }
}

impl<A: Scalar> Default for SgdMomentum<A> {
    fn default() -> Self {
        Self::new(A::of(1e-4), A::of(0.9)).expect("valid defaults")
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<A> {
    pub learning_rate: A,
    pub beta1: A,
    pub beta2: A,
    pub epsilon: A,
    first_moment: Vec<Vec<A>>,
    second_moment: Vec<Vec<A>>,
    step_count: u64,
}

impl<A: Scalar> Adam<A> {
    pub fn new(learning_rate: A) -> Result<Self> {
        Self::with_constants(learning_rate, A::of(0.9), A::of(0.999), A::of(1e-8))
    }

    pub fn with_constants(learning_rate: A, beta1: A, beta2: A, epsilon: A) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate > A::zero()) {
            return Err(Error::Config(format!("learning rate must be positive, got {learning_rate}")));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(b >= A::zero() && b < A::one()) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(epsilon.is_finite() && epsilon > A::zero()) {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step_count: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn step<P, G>(&mut self, params: &mut P, grads: &G) -> Result<()>
    where
        P: Parameters<A> + ?Sized,
        G: Parameters<A> + ?Sized,
    {
        let shapes = check_shapes(params, grads)?;
        if self.first_moment.is_empty() {
            self.first_moment = zeroed_like(&shapes);
            self.second_moment = zeroed_like(&shapes);
        } else if !buffers_match(&self.first_moment, &shapes) {
            return dim_err("parameter shapes changed between optimizer steps");
        }
        self.step_count += 1;
        let t = i32::try_from(self.step_count).unwrap_or(i32::MAX);
        let correction1 = A::one() - self.beta1.powi(t);
        let correction2 = A::one() - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((theta, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for (((t, &gi), mi), vi) in theta.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (A::one() - b1) * gi;
                *vi = b2 * *vi + (A::one() - b2) * gi * gi;
                let m_hat = *mi / correction1;
                let v_hat = *vi / correction2;
                *t -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

impl<A: Scalar> Default for Adam<A> {
    fn default() -> Self {
        Self::new(A::of(1e-3)).expect("valid defaults")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_classifier_is_uniform() {
        let clf = SoftmaxClassifier::<f64>::zeros(3, 4).unwrap();
        let p = clf.predict_probs(array![[1.0, -2.0, 3.0]].view()).unwrap();
        for &x in p.iter() {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_shift_invariance_and_stability() {
        let clf = SoftmaxClassifier::new(array![[1.0f64, 2.0, -1.0]], array![0.5, 0.0, 0.1]).unwrap();
        let shifted = SoftmaxClassifier::new(array![[1.0, 2.0, -1.0]], array![100.5, 100.0, 100.1]).unwrap();
        let x = array![[0.3], [-2.0], [800.0]];
        let a = clf.predict_probs(x.view()).unwrap();
        let b = shifted.predict_probs(x.view()).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-12);
            assert!(u.is_finite());
        }
    }

    #[test]
    fn classifier_validation() {
        assert!(SoftmaxClassifier::<f64>::zeros(3, 1).is_err());
        assert!(SoftmaxClassifier::new(array![[1.0, 2.0]], array![0.0]).is_err());
        let clf = SoftmaxClassifier::<f64>::zeros(2, 2).unwrap();
        assert!(matches!(clf.predict_probs(array![[1.0]].view()), Err(Error::Dimension(_))));
    }

    #[test]
    fn uniform_init_is_seeded_and_bounded() {
        let a = SoftmaxClassifier::<f64>::init_uniform(10, 3, 9).unwrap();
        let b = SoftmaxClassifier::<f64>::init_uniform(10, 3, 9).unwrap();
        assert_eq!(a, b);
        let s = (6.0f64 / 13.0).sqrt();
        assert!(a.weights().iter().all(|w| w.abs() <= s));
        assert!(a.bias().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn sgd_without_momentum_is_gradient_descent() {
        let mut opt = SgdMomentum::new(0.1, 0.0).unwrap();
        let mut p = array![[1.0, 2.0]];
        opt.step(&mut p, &array![[0.5, -1.0]]).unwrap();
        assert_eq!(p, array![[0.95, 2.1]]);
    }

    #[test]
    fn sgd_two_steps_constant_gradient() {
        let (eta, mu, g) = (0.01f64, 0.9, 3.0);
        let mut opt = SgdMomentum::new(eta, mu).unwrap();
        let mut p = array![[1.0]];
        let grad = array![[g]];
        opt.step(&mut p, &grad).unwrap();
        opt.step(&mut p, &grad).unwrap();
        assert!((p[[0, 0]] - (1.0 - eta * g * (2.0 + mu))).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut sgd = SgdMomentum::<f64>::default();
        let mut adam = Adam::<f64>::default();
        let mut p = array![[1.0, -3.0]];
        let zero = Array2::zeros((1, 2));
        for _ in 0..5 {
            sgd.step(&mut p, &zero).unwrap();
            adam.step(&mut p, &zero).unwrap();
        }
        assert_eq!(p, array![[1.0, -3.0]]);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(1e-3).unwrap();
        let mut p = array![[0.0f64, 0.0, 0.0]];
        adam.step(&mut p, &array![[2.0, -0.5, 0.0]]).unwrap();
        assert!((p[[0, 0]] + 1e-3).abs() < 1e-9);
        assert!((p[[0, 1]] - 1e-3).abs() < 1e-9);
        assert_eq!(p[[0, 2]], 0.0);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn optimizer_shape_mismatch() {
        let mut adam = Adam::<f64>::default();
        let mut p = array![[0.0, 0.0]];
        assert!(matches!(adam.step(&mut p, &array![[1.0]]), Err(Error::Dimension(_))));
        assert!(SgdMomentum::new(0.0, 0.5).is_err());
        assert!(SgdMomentum::new(0.1, 1.0).is_err());
    }
}

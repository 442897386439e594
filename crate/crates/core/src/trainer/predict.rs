use ndarray::{Array2, ArrayView2};

use crate::error::{dim_err, Result};
use crate::model::{argmax, SoftmaxClassifier};
use crate::scalar::Scalar;
use crate::subspace::{align_features, AlignmentMap, Subspace};

/// One ensemble member: a target subspace and its alignment to the source.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedMember<A> {
    pub target: Subspace<A>,
    pub phi: AlignmentMap<A>,
}

/// How target rows are mapped before they reach the classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum Adapter<A> {
    /// Raw features (no alignment network).
    Identity,
    Aligned { source: Subspace<A>, members: Vec<AlignedMember<A>> },
}

/// A trained classifier plus the alignment it expects target rows to go through.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel<A> {
    pub classifier: SoftmaxClassifier<A>,
    pub adapter: Adapter<A>,
}

impl<A: Scalar> FittedModel<A> {
    pub fn predict(&self, x: ArrayView2<A>) -> Result<Vec<usize>> {
        match &self.adapter {
            Adapter::Identity => self.classifier.predict_classes(x),
            Adapter::Aligned { source, members } => {
                let phis: Vec<AlignmentMap<A>> = members.iter().map(|m| m.phi.clone()).collect();
                let zts: Vec<Subspace<A>> = members.iter().map(|m| m.target.clone()).collect();
                predict(&self.classifier, &phis, &zts, source, x)
            }
        }
    }

    pub fn accuracy(&self, x: ArrayView2<A>, labels: &[usize]) -> Result<f64> {
        if labels.len() != x.nrows() {
            return dim_err(format!("{} labels for {} rows", labels.len(), x.nrows()));
        }
        Ok(crate::model::accuracy(&self.predict(x)?, labels))
    }

    /// `C×C` counts, rows indexed by true class and columns by prediction.
    pub fn confusion(&self, x: ArrayView2<A>, labels: &[usize]) -> Result<Array2<usize>> {
        let c = self.classifier.classes();
        if labels.len() != x.nrows() {
            return dim_err(format!("{} labels for {} rows", labels.len(), x.nrows()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= c) {
            return Err(crate::Error::Domain(format!("label {bad} out of range for {c} classes")));
        }
        let mut counts = Array2::zeros((c, c));
        for (&y, p) in labels.iter().zip(self.predict(x)?) {
            counts[[y, p]] += 1;
        }
        Ok(counts)
    }
}

/// Majority vote over the members' predictions on their aligned copies of `x`.
///
/// Ties go to the tied class with the largest softmax mass summed over
/// members, then to the lowest class index.
pub fn predict<A: Scalar>(
    classifier: &SoftmaxClassifier<A>,
    phis: &[AlignmentMap<A>],
    zts: &[Subspace<A>],
    zs: &Subspace<A>,
    x: ArrayView2<A>,
) -> Result<Vec<usize>> {
    if phis.is_empty() || phis.len() != zts.len() {
        return dim_err(format!("need matching, non-empty alignment lists, got {} maps and {} subspaces", phis.len(), zts.len()));
    }
    let (m, c) = (x.nrows(), classifier.classes());
    let mut votes = Array2::<usize>::zeros((m, c));
    let mut mass = Array2::<A>::zeros((m, c));
    for (phi, zt) in phis.iter().zip(zts) {
        let aligned = align_features(x, zt, phi, zs)?;
        let probs = classifier.predict_probs(aligned.view())?;
        for (i, row) in probs.outer_iter().enumerate() {
            votes[[i, argmax(row)]] += 1;
        }
        mass += &probs;
    }
    Ok((0..m)
        .map(|i| {
            let mut best = 0;
            for j in 1..c {
                let (vj, vb) = (votes[[i, j]], votes[[i, best]]);
                if vj > vb || (vj == vb && mass[[i, j]] > mass[[i, best]]) {
                    best = j;
                }
            }
            best
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn axis_setup() -> (SoftmaxClassifier<f64>, Subspace<f64>) {
        // class = sign of the first coordinate
        let clf = SoftmaxClassifier::new(array![[-5.0, 5.0], [0.0, 0.0]], array![0.0, 0.0]).unwrap();
        let z = Subspace::from_basis(array![[1.0], [0.0]]).unwrap();
        (clf, z)
    }

    #[test]
    fn single_member_is_argmax() {
        let (clf, z) = axis_setup();
        let x = array![[1.0, 3.0], [-2.0, 0.5]];
        let out = predict(&clf, &[AlignmentMap::identity(1)], std::slice::from_ref(&z), &z, x.view()).unwrap();
        assert_eq!(out, vec![1, 0]);
    }

    #[test]
    fn two_to_one_vote() {
        let (clf, z) = axis_setup();
        let x = array![[1.0, 0.0]];
        let maps = [
            AlignmentMap::new(array![[1.0]]).unwrap(),
            AlignmentMap::new(array![[2.0]]).unwrap(),
            AlignmentMap::new(array![[-10.0]]).unwrap(),
        ];
        let zts = vec![z.clone(), z.clone(), z.clone()];
        // members vote (1, 1, 0); the dissenter is far more confident but loses
        assert_eq!(predict(&clf, &maps, &zts, &z, x.view()).unwrap(), vec![1]);
    }

    #[test]
    fn tie_broken_by_probability_mass_then_index() {
        let (clf, z) = axis_setup();
        let x = array![[1.0, 0.0]];
        let zts = vec![z.clone(), z.clone()];
        let maps = [AlignmentMap::new(array![[0.1]]).unwrap(), AlignmentMap::new(array![[-3.0]]).unwrap()];
        assert_eq!(predict(&clf, &maps, &zts, &z, x.view()).unwrap(), vec![0]);
        let even = [AlignmentMap::new(array![[1.0]]).unwrap(), AlignmentMap::new(array![[-1.0]]).unwrap()];
        assert_eq!(predict(&clf, &even, &zts, &z, x.view()).unwrap(), vec![0]);
    }

    #[test]
    fn empty_member_list_rejected() {
        let (clf, z) = axis_setup();
        assert!(predict(&clf, &[], &[], &z, array![[0.0, 0.0]].view()).is_err());
    }

    #[test]
    fn confusion_counts() {
        let (clf, _) = axis_setup();
        let model = FittedModel { classifier: clf, adapter: Adapter::Identity };
        let c = model.confusion(array![[3.0, 0.0]].view(), &[0]).unwrap();
        assert_eq!(c, array![[0, 1], [0, 0]]);
    }
}

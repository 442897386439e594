//! The alternating primary/auxiliary training procedure and its ablations.
//!
//! After a warm-up phase that trains the classifier with the alignment held at
//! the identity, each outer iteration runs `t1` classifier steps on the
//! primary split (target rows re-projected through the current `Φ`) followed
//! by `t2` alignment steps on the held-out target split with the classifier
//! frozen.

mod config;
mod predict;
mod report;

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis, CowArray, Ix2};

pub use config::{Mode, TrainConfig};
pub use predict::{predict, AlignedMember, Adapter, FittedModel};
pub use report::{
    phi_dynamics, write_iterations_csv, IterationRecord, IterationRow, ModelDocument, ReportDocument, RunReport,
    MODEL_VERSION, REPORT_VERSION,
};

use crate::data::{self, FeatureDataset, FeatureSource};
use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::losses::{auxiliary_from_coordinates, primary_loss, primary_loss_and_grad, LossValue};
use crate::model::{Adam, SgdMomentum, SoftmaxClassifier};
use crate::scalar::Scalar;
use crate::subspace::{closed_form_alignment, default_subspace_dim, fit_subspace, lift_coordinates, AlignmentMap, Subspace};

/// Boundary of a block of inner steps, reported to a [`TrainObserver`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockEvent {
    PrimaryStart,
    PrimaryEnd,
    AuxiliaryStart,
    AuxiliaryEnd,
}

/// Hooks into the training loop, used for auditing and progress reporting.
pub trait TrainObserver<A> {
    fn on_block(&mut self, _iter: usize, _event: BlockEvent, _classifier: &SoftmaxClassifier<A>, _phis: &[AlignmentMap<A>]) {}

    /// Loss at the parameters a primary step starts from.
    fn on_primary_step(&mut self, _iter: usize, _step: usize, _loss: &LossValue<A>) {}
}

struct NoopObserver;

impl<A> TrainObserver<A> for NoopObserver {}

/// How ensemble members resample the target training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BootstrapPlan {
    /// Member `i` draws with seed `config.seed + i`.
    #[default]
    Independent,
    /// Every member reuses the first member's resample.
    Shared,
}

pub struct RunOptions<'a, A> {
    /// Labeled target data used only to report accuracy.
    pub eval: Option<&'a FeatureDataset<A>>,
    pub bootstrap: BootstrapPlan,
    pub observer: Option<&'a mut dyn TrainObserver<A>>,
}

impl<A> Default for RunOptions<'_, A> {
    fn default() -> Self {
        Self { eval: None, bootstrap: BootstrapPlan::Independent, observer: None }
    }
}

/// Source and target partitions: `*_train` feeds the classifier updates and
/// `target_val` the alignment updates.
#[derive(Debug, Clone)]
pub struct Splits<A> {
    pub source_train: FeatureDataset<A>,
    pub source_val: FeatureDataset<A>,
    pub target_train: Array2<A>,
    pub target_val: Array2<A>,
}

#[derive(Debug, Clone)]
pub struct Initialization<A> {
    pub classifier: SoftmaxClassifier<A>,
    pub source_subspace: Subspace<A>,
    pub target_subspace: Subspace<A>,
    pub phi_init: AlignmentMap<A>,
    pub splits: Splits<A>,
}

// Stream identifiers for seed derivation.
const STREAM_SPLIT: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_SOURCE_BATCH: u64 = 3;
const STREAM_TARGET_BATCH: u64 = 4;
const STREAM_VAL_BATCH: u64 = 5;

fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Endless sequence of mini-batches, reshuffled every epoch. When the batch
/// covers the whole set, every batch is the identity ordering.
struct BatchCursor {
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    queue: Vec<Vec<usize>>,
}

enum Batch {
    All,
    Rows(Vec<usize>),
}

impl BatchCursor {
    fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        Self { n, batch_size, seed, epoch: 0, queue: Vec::new() }
    }

    fn next_batch(&mut self) -> Result<Batch> {
        if self.batch_size >= self.n {
            return Ok(Batch::All);
        }
        if self.queue.is_empty() {
            let mut epoch = data::batch_indices(self.n, self.batch_size, derive_seed(self.seed, self.epoch))?;
            epoch.reverse();
            self.queue = epoch;
            self.epoch += 1;
        }
        Ok(Batch::Rows(self.queue.pop().expect("non-empty epoch")))
    }
}

fn take<'a, A: Scalar>(x: ArrayView2<'a, A>, batch: &Batch) -> CowArray<'a, A, Ix2> {
    match batch {
        Batch::All => CowArray::from(x),
        Batch::Rows(idx) => CowArray::from(x.select(Axis(0), idx)),
    }
}

fn take_labels(labels: &[usize], batch: &Batch) -> Vec<usize> {
    match batch {
        Batch::All => labels.to_vec(),
        Batch::Rows(idx) => idx.iter().map(|&i| labels[i]).collect(),
    }
}

fn source_labels<A: Scalar>(ds: &FeatureDataset<A>) -> Result<&[usize]> {
    ds.labels().ok_or_else(|| Error::Config("source dataset must be labeled".into()))
}

fn class_count<A: Scalar>(source: &FeatureDataset<A>) -> Result<usize> {
    let c = source.class_count().unwrap_or(0);
    if c < 2 {
        return Err(Error::Config(format!("source must cover at least 2 classes, found {c}")));
    }
    Ok(c)
}

fn split_source<A: Scalar>(source: &FeatureDataset<A>, config: &TrainConfig) -> Result<(FeatureDataset<A>, FeatureDataset<A>)> {
    source_labels(source)?;
    data::split(source, config.split_fraction, derive_seed(config.seed, STREAM_SPLIT))
}

fn split_target<A: Scalar>(target: ArrayView2<A>, config: &TrainConfig) -> Result<(Array2<A>, Array2<A>)> {
    let (a, b) = data::split_indices(target.nrows(), config.split_fraction, derive_seed(config.seed, STREAM_SPLIT))?;
    Ok((target.select(Axis(0), &a), target.select(Axis(0), &b)))
}

/// Full-batch warm-up of a freshly initialized classifier on the primary
/// objective with target rows passed through unaligned. Without target rows
/// only the source cross-entropy is used.
fn pretrain<A: Scalar>(
    source_train: &FeatureDataset<A>,
    target_train: Option<ArrayView2<A>>,
    classes: usize,
    config: &TrainConfig,
) -> Result<SoftmaxClassifier<A>> {
    let mut classifier = SoftmaxClassifier::init_uniform(source_train.ambient_dim(), classes, derive_seed(config.seed, STREAM_INIT))?;
    let mut opt = SgdMomentum::new(A::of(config.warmup_learning_rate), A::of(config.momentum))?;
    let empty = Array2::zeros((0, source_train.ambient_dim()));
    let target = target_train.unwrap_or(empty.view());
    let labels = source_labels(source_train)?;
    for _ in 0..config.warmup_steps {
        let (_, grad) = primary_loss_and_grad(&classifier, source_train.features(), labels, target, &config.weights)?;
        opt.step(&mut classifier, &grad)?;
    }
    Ok(classifier)
}

fn resolve_subspace_dim(config: &TrainConfig, ambient: usize, smallest_split: usize) -> Result<usize> {
    let limit = ambient.min(smallest_split.saturating_sub(1));
    match config.subspace_dim {
        Some(d) if d > limit => Err(Error::Config(format!(
            "subspace_dim {d} exceeds the largest feasible dimension {limit}"
        ))),
        Some(d) => Ok(d),
        None => Ok(default_subspace_dim(ambient, smallest_split)),
    }
}

fn check_target_dim<A: Scalar>(source: &FeatureDataset<A>, target: ArrayView2<A>) -> Result<()> {
    if target.ncols() != source.ambient_dim() {
        return dim_err(format!(
            "source has {} feature columns, target has {}",
            source.ambient_dim(),
            target.ncols()
        ));
    }
    if target.nrows() == 0 {
        return Err(Error::InsufficientData("target dataset is empty".into()));
    }
    Ok(())
}

/// Splits both domains, pre-trains the classifier with `Φ = I`, fits both
/// subspaces on the training splits and sets `Φ^init = Z_tᵀ Z_s`.
pub fn initialize<A: Scalar, T: FeatureSource<A> + ?Sized>(
    source: &FeatureDataset<A>,
    target: &T,
    config: &TrainConfig,
) -> Result<Initialization<A>> {
    config.validate()?;
    let classes = class_count(source)?;
    let target_x = target.features();
    check_target_dim(source, target_x)?;
    let (source_train, source_val) = split_source(source, config)?;
    let (target_train, target_val) = split_target(target_x, config)?;
    let classifier = pretrain(&source_train, Some(target_train.view()), classes, config)?;
    let d = resolve_subspace_dim(config, source.ambient_dim(), source_train.len().min(target_train.nrows()))?;
    let source_subspace = fit_subspace(source_train.features(), d)?;
    let target_subspace = fit_subspace(target_train.view(), d)?;
    let phi_init = closed_form_alignment(&target_subspace, &source_subspace)?;
    Ok(Initialization {
        classifier,
        source_subspace,
        target_subspace,
        phi_init,
        splits: Splits { source_train, source_val, target_train, target_val },
    })
}

/// Runs the configured mode with a single alignment map (or the ensemble
/// when `config.ensemble_size > 1`).
pub fn train<A: Scalar, T: FeatureSource<A> + ?Sized>(
    source: &FeatureDataset<A>,
    target: &T,
    config: &TrainConfig,
    eval: Option<&FeatureDataset<A>>,
) -> Result<RunReport<A>> {
    run(source, target, config, RunOptions { eval, ..Default::default() })
}

/// Trains `k` alignment maps, one per bootstrap of the target training
/// split, sharing a single classifier.
pub fn train_ensemble<A: Scalar, T: FeatureSource<A> + ?Sized>(
    source: &FeatureDataset<A>,
    target: &T,
    config: &TrainConfig,
    k: usize,
    eval: Option<&FeatureDataset<A>>,
) -> Result<RunReport<A>> {
    let config = TrainConfig { ensemble_size: k, ..config.clone() };
    run(source, target, &config, RunOptions { eval, ..Default::default() })
}

struct Member<A> {
    target: Subspace<A>,
    phi: AlignmentMap<A>,
    phi_init: AlignmentMap<A>,
    adam: Adam<A>,
    coords_train: Array2<A>,
    coords_val: Array2<A>,
    val_cursor: BatchCursor,
}

struct Session<'a, A: Scalar> {
    config: &'a TrainConfig,
    mode: Mode,
    classifier: SoftmaxClassifier<A>,
    sgd: SgdMomentum<A>,
    source_train: FeatureDataset<A>,
    source_val: FeatureDataset<A>,
    target_train: Array2<A>,
    source_subspace: Option<Subspace<A>>,
    members: Vec<Member<A>>,
    source_cursor: BatchCursor,
    target_cursor: BatchCursor,
    eval: Option<&'a FeatureDataset<A>>,
}

impl<A: Scalar> Session<'_, A> {
    fn phis(&self) -> Vec<AlignmentMap<A>> {
        self.members.iter().map(|m| m.phi.clone()).collect()
    }

    fn model(&self) -> FittedModel<A> {
        let adapter = match &self.source_subspace {
            None => Adapter::Identity,
            Some(source) => Adapter::Aligned {
                source: source.clone(),
                members: self
                    .members
                    .iter()
                    .map(|m| AlignedMember { target: m.target.clone(), phi: m.phi.clone() })
                    .collect(),
            },
        };
        FittedModel { classifier: self.classifier.clone(), adapter }
    }

    /// Target rows of `batch` as the classifier sees them, one copy per member.
    fn target_views(&self, batch: &Batch) -> Vec<CowArray<'_, A, Ix2>> {
        match &self.source_subspace {
            None => vec![take(self.target_train.view(), batch)],
            Some(zs) => self
                .members
                .iter()
                .map(|m| CowArray::from(lift_coordinates(take(m.coords_train.view(), batch).view(), &m.phi, zs)))
                .collect(),
        }
    }

    /// Sum of primary losses over the target copies, and the summed gradient.
    fn primary_grad(
        &self,
        xs: ArrayView2<A>,
        ys: &[usize],
        targets: &[CowArray<'_, A, Ix2>],
    ) -> Result<(LossValue<A>, crate::model::ClassifierGrad<A>)> {
        let mut acc: Option<(LossValue<A>, crate::model::ClassifierGrad<A>)> = None;
        for t in targets {
            let (l, g) = primary_loss_and_grad(&self.classifier, xs, ys, t.view(), &self.config.weights)?;
            match acc.as_mut() {
                None => acc = Some((l, g)),
                Some((al, ag)) => {
                    al.accumulate(&l);
                    ag.add_assign(&g);
                }
            }
        }
        acc.ok_or_else(|| Error::InsufficientData("no target copies".into()))
    }

    fn primary_block(&mut self, iter: usize, observer: &mut dyn TrainObserver<A>) -> Result<()> {
        let phis = self.phis();
        observer.on_block(iter, BlockEvent::PrimaryStart, &self.classifier, &phis);
        let labels = source_labels(&self.source_train)?.to_vec();
        for step in 0..self.config.t1 {
            let sb = self.source_cursor.next_batch()?;
            let tb = self.target_cursor.next_batch()?;
            let xs = take(self.source_train.features(), &sb);
            let ys = take_labels(&labels, &sb);
            let targets = self.target_views(&tb);
            let (loss, grad) = self.primary_grad(xs.view(), &ys, &targets)?;
            drop(targets);
            observer.on_primary_step(iter, step, &loss);
            self.sgd.step(&mut self.classifier, &grad)?;
        }
        observer.on_block(iter, BlockEvent::PrimaryEnd, &self.classifier, &self.phis());
        Ok(())
    }

    fn auxiliary_block(&mut self, iter: usize, observer: &mut dyn TrainObserver<A>) -> Result<()> {
        let zs = self.source_subspace.clone().expect("aligned mode");
        observer.on_block(iter, BlockEvent::AuxiliaryStart, &self.classifier, &self.phis());
        for _ in 0..self.config.t2 {
            for m in &mut self.members {
                let vb = m.val_cursor.next_batch()?;
                let coords = take(m.coords_val.view(), &vb);
                let (_, g) = auxiliary_from_coordinates(&m.phi, &m.target, &zs, &self.classifier, coords.view(), &self.config.weights, true)?;
                m.adam.step(&mut m.phi, &g.expect("requested"))?;
            }
        }
        observer.on_block(iter, BlockEvent::AuxiliaryEnd, &self.classifier, &self.phis());
        Ok(())
    }

    /// Classifier and alignment steps computed at the same point and applied
    /// together, both on the primary split.
    fn joint_block(&mut self, iter: usize, observer: &mut dyn TrainObserver<A>) -> Result<()> {
        let zs = self.source_subspace.clone().expect("aligned mode");
        let labels = source_labels(&self.source_train)?.to_vec();
        let steps = self.config.t1.max(self.config.t2);
        for step in 0..steps {
            let sb = self.source_cursor.next_batch()?;
            let tb = self.target_cursor.next_batch()?;
            let theta_grad = if step < self.config.t1 {
                let xs = take(self.source_train.features(), &sb);
                let ys = take_labels(&labels, &sb);
                let targets = self.target_views(&tb);
                let (loss, grad) = self.primary_grad(xs.view(), &ys, &targets)?;
                observer.on_primary_step(iter, step, &loss);
                Some(grad)
            } else {
                None
            };
            let mut phi_grads = Vec::new();
            if step < self.config.t2 {
                for m in &self.members {
                    let coords = take(m.coords_train.view(), &tb);
                    let (_, g) = auxiliary_from_coordinates(&m.phi, &m.target, &zs, &self.classifier, coords.view(), &self.config.weights, true)?;
                    phi_grads.push(g.expect("requested"));
                }
            }
            if let Some(g) = theta_grad {
                self.sgd.step(&mut self.classifier, &g)?;
            }
            for (m, g) in self.members.iter_mut().zip(&phi_grads) {
                m.adam.step(&mut m.phi, g)?;
            }
        }
        Ok(())
    }

    fn record(&self, iter: usize, previous: &[AlignmentMap<A>]) -> Result<IterationRecord<A>> {
        let labels = source_labels(&self.source_train)?;
        let targets = match &self.source_subspace {
            None => vec![CowArray::from(self.target_train.view())],
            Some(_) => self.target_views(&Batch::All),
        };
        let mut primary: Option<LossValue<A>> = None;
        for t in &targets {
            let l = primary_loss(&self.classifier, self.source_train.features(), labels, t.view(), &self.config.weights)?;
            match primary.as_mut() {
                None => primary = Some(l),
                Some(p) => p.accumulate(&l),
            }
        }
        let auxiliary = match &self.source_subspace {
            None => None,
            Some(zs) => {
                let mut acc: Option<LossValue<A>> = None;
                for m in &self.members {
                    let (l, _) = auxiliary_from_coordinates(&m.phi, &m.target, zs, &self.classifier, m.coords_val.view(), &self.config.weights, false)?;
                    match acc.as_mut() {
                        None => acc = Some(l),
                        Some(a) => a.accumulate(&l),
                    }
                }
                acc
            }
        };
        let stacked = |other: &dyn Fn(&Member<A>) -> ArrayView2<'_, A>| -> f64 {
            self.members
                .iter()
                .map(|m| {
                    let d = linalg::frobenius_distance(m.phi.phi(), other(m)).as_f64();
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        };
        let phi_drift = stacked(&|m| m.phi_init.phi());
        let phi_step = if previous.is_empty() {
            0.0
        } else {
            self.members
                .iter()
                .zip(previous)
                .map(|(m, p)| {
                    let d = linalg::frobenius_distance(m.phi.phi(), p.phi()).as_f64();
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        };
        Ok(IterationRecord {
            iter,
            primary: primary.expect("at least one target copy"),
            auxiliary,
            phi_drift,
            phi_step,
            source_accuracy: self.source_accuracy()?,
            target_accuracy: self.target_accuracy()?,
        })
    }

    fn source_accuracy(&self) -> Result<f64> {
        self.classifier.accuracy(self.source_val.features(), source_labels(&self.source_val)?)
    }

    fn target_accuracy(&self) -> Result<Option<f64>> {
        eval_accuracy(&self.model(), self.eval)
    }
}

fn eval_accuracy<A: Scalar>(model: &FittedModel<A>, eval: Option<&FeatureDataset<A>>) -> Result<Option<f64>> {
    match eval.and_then(|e| e.labels().map(|l| (e, l))) {
        None => Ok(None),
        Some((e, labels)) => Ok(Some(model.accuracy(e.features(), labels)?)),
    }
}

/// Full-control entry point behind [`train`] and [`train_ensemble`].
pub fn run<A: Scalar, T: FeatureSource<A> + ?Sized>(
    source: &FeatureDataset<A>,
    target: &T,
    config: &TrainConfig,
    options: RunOptions<'_, A>,
) -> Result<RunReport<A>> {
    let started = Instant::now();
    config.validate()?;
    let classes = class_count(source)?;
    let mut noop = NoopObserver;
    let observer: &mut dyn TrainObserver<A> = match options.observer {
        Some(o) => o,
        None => &mut noop,
    };
    if let Some(e) = options.eval {
        if e.ambient_dim() != source.ambient_dim() {
            return dim_err(format!("evaluation set has {} columns, source has {}", e.ambient_dim(), source.ambient_dim()));
        }
    }

    if config.mode == Mode::NoAdapt {
        // Target features are never touched in this mode.
        let (source_train, source_val) = split_source(source, config)?;
        let classifier = pretrain(&source_train, None, classes, config)?;
        let model = FittedModel { classifier, adapter: Adapter::Identity };
        let source_accuracy = model.classifier.accuracy(source_val.features(), source_labels(&source_val)?)?;
        let target_accuracy = eval_accuracy(&model, options.eval)?;
        return Ok(RunReport {
            mode: config.mode,
            config: config.clone(),
            iterations: Vec::new(),
            phi_init: Vec::new(),
            model,
            source_accuracy,
            target_accuracy,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        });
    }

    let target_x = target.features();
    check_target_dim(source, target_x)?;
    let (source_train, source_val) = split_source(source, config)?;
    let (target_train, target_val) = split_target(target_x, config)?;
    let classifier = pretrain(&source_train, Some(target_train.view()), classes, config)?;

    let mut source_subspace = None;
    let mut members = Vec::new();
    if config.mode.uses_alignment() {
        let k = config.ensemble_size;
        let samples: Vec<std::borrow::Cow<'_, Array2<A>>> = if k == 1 {
            vec![std::borrow::Cow::Borrowed(&target_train)]
        } else {
            (0..k)
                .map(|i| {
                    let seed = match options.bootstrap {
                        BootstrapPlan::Independent => config.seed.wrapping_add(i as u64),
                        BootstrapPlan::Shared => config.seed,
                    };
                    let idx = data::bootstrap_indices(target_train.nrows(), seed);
                    std::borrow::Cow::Owned(target_train.select(Axis(0), &idx))
                })
                .collect()
        };
        let d = resolve_subspace_dim(config, source.ambient_dim(), source_train.len().min(target_train.nrows()))?;
        let zs = fit_subspace(source_train.features(), d)?;
        for (i, sample) in samples.iter().enumerate() {
            let zt = fit_subspace(sample.view(), d)?;
            let phi_init = closed_form_alignment(&zt, &zs)?;
            members.push(Member {
                coords_train: zt.coordinates(target_train.view())?,
                coords_val: zt.coordinates(target_val.view())?,
                phi: phi_init.clone(),
                phi_init,
                adam: Adam::with_constants(
                    A::of(config.aux_learning_rate),
                    A::of(config.adam_beta1),
                    A::of(config.adam_beta2),
                    A::of(config.adam_epsilon),
                )?,
                val_cursor: BatchCursor::new(
                    target_val.nrows(),
                    config.batch_size,
                    derive_seed(derive_seed(config.seed, STREAM_VAL_BATCH), i as u64),
                ),
                target: zt,
            });
        }
        source_subspace = Some(zs);
    }

    let mut session = Session {
        config,
        mode: config.mode,
        classifier,
        sgd: SgdMomentum::new(A::of(config.primary_learning_rate), A::of(config.momentum))?,
        source_cursor: BatchCursor::new(source_train.len(), config.batch_size, derive_seed(config.seed, STREAM_SOURCE_BATCH)),
        target_cursor: BatchCursor::new(target_train.nrows(), config.batch_size, derive_seed(config.seed, STREAM_TARGET_BATCH)),
        source_train,
        source_val,
        target_train,
        source_subspace,
        members,
        eval: options.eval,
    };
    let phi_init = session.phis();

    let mut iterations = Vec::with_capacity(config.n_iter);
    for iter in 1..=config.n_iter {
        let previous = session.phis();
        match session.mode {
            Mode::Alternating => {
                session.primary_block(iter, observer)?;
                session.auxiliary_block(iter, observer)?;
            }
            Mode::Independent | Mode::PrimaryOnly => session.primary_block(iter, observer)?,
            Mode::Joint => session.joint_block(iter, observer)?,
            Mode::NoAdapt => unreachable!("handled above"),
        }
        let record = session.record(iter, &previous)?;
        let stop = config.early_stop_tol > 0.0 && record.phi_step < config.early_stop_tol;
        iterations.push(record);
        if stop {
            break;
        }
    }

    let model = session.model();
    Ok(RunReport {
        mode: config.mode,
        config: config.clone(),
        iterations,
        phi_init,
        source_accuracy: session.source_accuracy()?,
        target_accuracy: eval_accuracy(&model, options.eval)?,
        model,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(0, 1), derive_seed(0, 2));
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
    }

    #[test]
    fn cursor_covers_every_row_each_epoch() {
        let mut c = BatchCursor::new(10, 4, 9);
        for _ in 0..3 {
            let mut seen = Vec::new();
            for _ in 0..3 {
                match c.next_batch().unwrap() {
                    Batch::Rows(r) => seen.extend(r),
                    Batch::All => panic!("expected mini-batches"),
                }
            }
            seen.sort();
            assert_eq!(seen, (0..10).collect::<Vec<_>>());
        }
        assert!(matches!(BatchCursor::new(5, 5, 0).next_batch().unwrap(), Batch::All));
    }
}

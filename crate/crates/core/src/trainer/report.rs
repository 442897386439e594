//! Run reports and the JSON/CSV documents they serialize to.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::format_value;
use crate::error::{Error, Result};
use crate::losses::LossValue;
use crate::model::SoftmaxClassifier;
use crate::scalar::Scalar;
use crate::subspace::{AlignmentMap, Subspace};

use super::config::{Mode, TrainConfig};
use super::predict::{Adapter, AlignedMember, FittedModel};

pub const REPORT_VERSION: u32 = 1;
pub const MODEL_VERSION: u32 = 1;

/// Metrics recorded at the end of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<A> {
    /// 1-based outer iteration index.
    pub iter: usize,
    pub primary: LossValue<A>,
    /// Absent for modes without an alignment map.
    pub auxiliary: Option<LossValue<A>>,
    /// `‖Φ_t − Φ^init‖_F`, stacked over ensemble members.
    pub phi_drift: f64,
    /// `‖Φ_t − Φ_{t−1}‖_F`, stacked over ensemble members.
    pub phi_step: f64,
    pub source_accuracy: f64,
    pub target_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport<A> {
    pub mode: Mode,
    pub config: TrainConfig,
    pub iterations: Vec<IterationRecord<A>>,
    pub phi_init: Vec<AlignmentMap<A>>,
    pub model: FittedModel<A>,
    /// Accuracy on the held-out source split after training.
    pub source_accuracy: f64,
    /// Accuracy on the labeled evaluation set, when one was supplied.
    pub target_accuracy: Option<f64>,
    pub wall_clock_seconds: f64,
}

impl<A: Scalar> RunReport<A> {
    pub fn final_phis(&self) -> Vec<AlignmentMap<A>> {
        match &self.model.adapter {
            Adapter::Identity => Vec::new(),
            Adapter::Aligned { members, .. } => members.iter().map(|m| m.phi.clone()).collect(),
        }
    }

    pub fn final_classifier(&self) -> &SoftmaxClassifier<A> {
        &self.model.classifier
    }

    pub fn to_document(&self) -> ReportDocument {
        ReportDocument {
            version: REPORT_VERSION,
            mode: self.mode,
            config: self.config.clone(),
            source_accuracy: self.source_accuracy,
            target_accuracy: self.target_accuracy,
            iterations: self.iterations.iter().map(IterationRow::from_record).collect(),
            phi_init: self.phi_init.iter().map(|p| flatten(p.phi())).collect(),
            model: ModelDocument::from_model(&self.model, self.mode),
        }
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.to_document())?;
        Ok(())
    }

    /// One CSV row per outer iteration:
    /// `iter,primary_total,aux_total,phi_drift,phi_step,src_acc,tgt_acc`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_iterations_csv(&self.to_document().iterations, out)
    }
}

/// The two Φ-dynamics series of a run: drift from the closed-form
/// initialization and successive differences.
pub fn phi_dynamics<A: Scalar>(report: &RunReport<A>) -> Result<(Vec<f64>, Vec<f64>)> {
    if report.iterations.is_empty() {
        return Err(Error::EmptyRun);
    }
    Ok(report.iterations.iter().map(|r| (r.phi_drift, r.phi_step)).unzip())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iter: usize,
    pub primary_total: f64,
    pub primary_components: BTreeMap<String, f64>,
    pub aux_total: Option<f64>,
    pub aux_components: Option<BTreeMap<String, f64>>,
    pub phi_drift: f64,
    pub phi_step: f64,
    pub src_acc: f64,
    pub tgt_acc: Option<f64>,
}

fn components<A: Scalar>(v: &LossValue<A>) -> BTreeMap<String, f64> {
    v.terms().iter().map(|t| (t.component.name().to_string(), t.value.as_f64())).collect()
}

impl IterationRow {
    fn from_record<A: Scalar>(r: &IterationRecord<A>) -> Self {
        Self {
            iter: r.iter,
            primary_total: r.primary.total.as_f64(),
            primary_components: components(&r.primary),
            aux_total: r.auxiliary.as_ref().map(|a| a.total.as_f64()),
            aux_components: r.auxiliary.as_ref().map(components),
            phi_drift: r.phi_drift,
            phi_step: r.phi_step,
            src_acc: r.source_accuracy,
            tgt_acc: r.target_accuracy,
        }
    }
}

pub fn write_iterations_csv<W: Write>(rows: &[IterationRow], mut out: W) -> Result<()> {
    writeln!(out, "iter,primary_total,aux_total,phi_drift,phi_step,src_acc,tgt_acc")?;
    let opt = |x: Option<f64>| x.map(format_value).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iter,
            format_value(r.primary_total),
            opt(r.aux_total),
            format_value(r.phi_drift),
            format_value(r.phi_step),
            format_value(r.src_acc),
            opt(r.tgt_acc)
        )?;
    }
    Ok(())
}

/// Serialized form of a [`RunReport`]. Timing is left out so reports of
/// seeded runs are byte-for-byte reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub version: u32,
    pub mode: Mode,
    pub config: TrainConfig,
    pub source_accuracy: f64,
    pub target_accuracy: Option<f64>,
    pub iterations: Vec<IterationRow>,
    /// Row-major `d×d` closed-form alignments, one per member.
    pub phi_init: Vec<Vec<f64>>,
    pub model: ModelDocument,
}

/// Versioned JSON form of a trained model. Matrices are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub mode: Mode,
    pub ambient_dim: usize,
    pub classes: usize,
    /// `ambient_dim × classes`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// 0 when the model classifies raw features.
    pub subspace_dim: usize,
    /// `ambient_dim × subspace_dim`, row-major.
    pub source_basis: Option<Vec<f64>>,
    pub source_center: Option<Vec<f64>>,
    pub target_bases: Vec<Vec<f64>>,
    pub target_centers: Vec<Vec<f64>>,
    /// `subspace_dim × subspace_dim`, row-major, one per member.
    pub phi: Vec<Vec<f64>>,
}

fn flatten<A: Scalar>(m: ndarray::ArrayView2<A>) -> Vec<f64> {
    m.iter().map(|x| x.as_f64()).collect()
}

fn matrix<A: Scalar>(values: &[f64], rows: usize, cols: usize, what: &str) -> Result<Array2<A>> {
    if values.len() != rows * cols {
        return Err(Error::Schema(format!("{what} has {} values, expected {rows}x{cols}", values.len())));
    }
    Ok(Array2::from_shape_vec((rows, cols), values.iter().map(|&x| A::of(x)).collect()).expect("checked length"))
}

fn vector<A: Scalar>(values: &[f64], len: usize, what: &str) -> Result<Array1<A>> {
    if values.len() != len {
        return Err(Error::Schema(format!("{what} has {} values, expected {len}", values.len())));
    }
    Ok(values.iter().map(|&x| A::of(x)).collect())
}

impl ModelDocument {
    pub fn from_model<A: Scalar>(model: &FittedModel<A>, mode: Mode) -> Self {
        let clf = &model.classifier;
        let mut doc = ModelDocument {
            version: MODEL_VERSION,
            mode,
            ambient_dim: clf.ambient_dim(),
            classes: clf.classes(),
            weights: flatten(clf.weights()),
            bias: clf.bias().iter().map(|x| x.as_f64()).collect(),
            subspace_dim: 0,
            source_basis: None,
            source_center: None,
            target_bases: Vec::new(),
            target_centers: Vec::new(),
            phi: Vec::new(),
        };
        if let Adapter::Aligned { source, members } = &model.adapter {
            doc.subspace_dim = source.dim();
            doc.source_basis = Some(flatten(source.basis()));
            doc.source_center = Some(source.center().iter().map(|x| x.as_f64()).collect());
            for m in members {
                doc.target_bases.push(flatten(m.target.basis()));
                doc.target_centers.push(m.target.center().iter().map(|x| x.as_f64()).collect());
                doc.phi.push(flatten(m.phi.phi()));
            }
        }
        doc
    }

    pub fn to_model<A: Scalar>(&self) -> Result<FittedModel<A>> {
        if self.version != MODEL_VERSION {
            return Err(Error::Schema(format!("unsupported model version {}", self.version)));
        }
        let (dim, c) = (self.ambient_dim, self.classes);
        let classifier = SoftmaxClassifier::new(
            matrix(&self.weights, dim, c, "weights")?,
            vector(&self.bias, c, "bias")?,
        )
        .map_err(|e| Error::Schema(e.to_string()))?;
        let adapter = if self.subspace_dim == 0 {
            Adapter::Identity
        } else {
            let d = self.subspace_dim;
            let (Some(basis), Some(center)) = (&self.source_basis, &self.source_center) else {
                return Err(Error::Schema("aligned model without a source subspace".into()));
            };
            let source = Subspace::from_parts(matrix(basis, dim, d, "source_basis")?, vector(center, dim, "source_center")?)?;
            if self.target_bases.len() != self.phi.len() || self.target_centers.len() != self.phi.len() || self.phi.is_empty() {
                return Err(Error::Schema("target bases, centers and phi lists must have equal non-zero length".into()));
            }
            let mut members = Vec::new();
            for ((b, ctr), p) in self.target_bases.iter().zip(&self.target_centers).zip(&self.phi) {
                members.push(AlignedMember {
                    target: Subspace::from_parts(matrix(b, dim, d, "target_basis")?, vector(ctr, dim, "target_center")?)?,
                    phi: AlignmentMap::new(matrix(p, d, d, "phi")?)?,
                });
            }
            Adapter::Aligned { source, members }
        };
        Ok(FittedModel { classifier, adapter })
    }
}

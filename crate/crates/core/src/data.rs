//! Feature datasets: CSV ingestion, seeded splitting/batching/bootstrap and a
//! synthetic covariate-shift generator.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// Read access to a domain's features, abstracted so callers can audit which
/// data a training routine touches.
pub trait FeatureSource<A> {
    fn features(&self) -> ArrayView2<'_, A>;
    fn labels(&self) -> Option<&[usize]>;
    fn domain_tag(&self) -> &str;
}

/// Feature rows of one domain, optionally labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset<A> {
    features: Array2<A>,
    labels: Option<Vec<usize>>,
    domain_tag: String,
    class_count: Option<usize>,
}

impl<A: Scalar> FeatureDataset<A> {
    /// Validates and wraps a feature matrix.
    ///
    /// When labels are given without `class_count`, the class count is the
    /// largest label plus one.
    pub fn new(
        features: Array2<A>,
        labels: Option<Vec<usize>>,
        domain_tag: impl Into<String>,
        class_count: Option<usize>,
    ) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::InsufficientData(format!(
                "dataset must have at least one row and column, got {}x{}",
                features.nrows(),
                features.ncols()
            )));
        }
        linalg::check_finite(features.view())?;
        let class_count = match &labels {
            Some(l) => {
                if l.len() != features.nrows() {
                    return dim_err(format!("{} labels for {} rows", l.len(), features.nrows()));
                }
                let inferred = l.iter().max().map_or(0, |m| m + 1);
                let c = class_count.unwrap_or(inferred);
                if inferred > c {
                    return Err(Error::Domain(format!("label {} out of range for {c} classes", inferred - 1)));
                }
                Some(c)
            }
            None => class_count,
        };
        Ok(Self {
            features: features.as_standard_layout().into_owned(),
            labels,
            domain_tag: domain_tag.into(),
            class_count,
        })
    }

    pub fn unlabeled(features: Array2<A>, domain_tag: impl Into<String>) -> Result<Self> {
        Self::new(features, None, domain_tag, None)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> Option<usize> {
        self.class_count
    }

    pub fn features(&self) -> ArrayView2<'_, A> {
        self.features.view()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn domain_tag(&self) -> &str {
        &self.domain_tag
    }

    /// Same rows with labels dropped.
    pub fn without_labels(&self) -> Self {
        Self { labels: None, ..self.clone() }
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return dim_err(format!("row index {bad} out of range for {} rows", self.len()));
        }
        let features = self.features.select(Axis(0), indices);
        let labels = self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect());
        Self::new(features, labels, self.domain_tag.clone(), self.class_count)
    }
}

impl<A: Scalar> FeatureSource<A> for FeatureDataset<A> {
    fn features(&self) -> ArrayView2<'_, A> {
        self.features.view()
    }
    fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }
    fn domain_tag(&self) -> &str {
        &self.domain_tag
    }
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Index-level split: a seeded permutation cut at `round(fraction · n)`.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let cut = (fraction * n as f64).round() as usize;
    if cut == 0 || cut >= n {
        return Err(Error::InsufficientData(format!(
            "splitting {n} rows at fraction {fraction} leaves an empty part"
        )));
    }
    let perm = permutation(n, seed);
    let (a, b) = perm.split_at(cut);
    Ok((a.to_vec(), b.to_vec()))
}

pub fn split<A: Scalar>(dataset: &FeatureDataset<A>, fraction: f64, seed: u64) -> Result<(FeatureDataset<A>, FeatureDataset<A>)> {
    let (a, b) = split_indices(dataset.len(), fraction, seed)?;
    Ok((dataset.select(&a)?, dataset.select(&b)?))
}

pub fn bootstrap_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// `n` draws with replacement; labels travel with their rows.
pub fn bootstrap<A: Scalar>(dataset: &FeatureDataset<A>, seed: u64) -> Result<FeatureDataset<A>> {
    dataset.select(&bootstrap_indices(dataset.len(), seed))
}

/// Seeded subsample keeping `round(fraction · n)` rows (at least one).
/// A fraction of 1 or more returns the dataset unchanged.
pub fn subsample<A: Scalar>(dataset: &FeatureDataset<A>, fraction: f64, seed: u64) -> Result<FeatureDataset<A>> {
    if !(fraction.is_finite() && fraction > 0.0) {
        return Err(Error::Config(format!("subsample fraction must be positive, got {fraction}")));
    }
    if fraction >= 1.0 {
        return Ok(dataset.clone());
    }
    let keep = ((fraction * dataset.len() as f64).round() as usize).max(1);
    let mut perm = permutation(dataset.len(), seed);
    perm.truncate(keep);
    dataset.select(&perm)
}

/// One epoch of shuffled mini-batches over `n` rows.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    Ok(permutation(n, seed).chunks(batch_size).map(<[usize]>::to_vec).collect())
}

pub fn batches<A: Scalar>(dataset: &FeatureDataset<A>, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    batch_indices(dataset.len(), batch_size, seed)
}

/// Parses a feature CSV: a header row `f0,…,f{D−1}[,label]` followed by one
/// row per sample.
pub fn load_csv<A: Scalar>(path: impl AsRef<Path>, has_labels: bool) -> Result<FeatureDataset<A>> {
    let path = path.as_ref();
    let mut text = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut text)?;
    let tag = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
    parse_csv(&text, has_labels, tag)
}

pub fn parse_csv<A: Scalar>(text: &str, has_labels: bool, domain_tag: String) -> Result<FeatureDataset<A>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::Parse { line: 1, message: "file is empty".into() }),
        Some(r) => r.map_err(|e| Error::Parse { line: 1, message: e.to_string() })?,
    };
    let columns = header.len();
    let dim = if has_labels { columns.saturating_sub(1) } else { columns };
    if dim == 0 {
        return Err(Error::Schema(format!("header declares {columns} columns, no feature columns remain")));
    }
    for (j, name) in header.iter().take(dim).enumerate() {
        if name.trim() != format!("f{j}") {
            return Err(Error::Schema(format!("header column {j} is {name:?}, expected \"f{j}\"")));
        }
    }
    if has_labels && header.get(dim).map(str::trim) != Some("label") {
        return Err(Error::Schema("last header column must be \"label\"".into()));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if rec.len() != columns {
            return Err(Error::Schema(format!("line {line} has {} columns, header has {columns}", rec.len())));
        }
        for (j, field) in rec.iter().take(dim).enumerate() {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("column {j}: {field:?} is not a number") })?;
            if !x.is_finite() {
                return Err(Error::Parse { line, message: format!("column {j}: non-finite value {field:?}") });
            }
            values.push(A::of(x));
        }
        if has_labels {
            let field = rec.get(dim).unwrap_or_default();
            let y: usize = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("label {field:?} is not a class index") })?;
            labels.push(y);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse { line: 2, message: "no data rows".into() });
    }
    let features = Array2::from_shape_vec((rows, dim), values).expect("row-major values");
    FeatureDataset::new(features, has_labels.then_some(labels), domain_tag, None)
}

/// Writes the dataset in the format read by [`load_csv`]; labels are written
/// when present. Values use 17 significant digits so they round-trip exactly.
pub fn save_csv<A: Scalar>(dataset: &FeatureDataset<A>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_csv(dataset, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_csv<A: Scalar, W: Write>(dataset: &FeatureDataset<A>, out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header: Vec<String> = (0..dataset.ambient_dim()).map(|j| format!("f{j}")).collect();
    if dataset.labels().is_some() {
        header.push("label".into());
    }
    writer.write_record(&header).map_err(csv_io)?;
    for (i, row) in dataset.features().outer_iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|x| format_value(x.as_f64())).collect();
        if let Some(labels) = dataset.labels() {
            fields.push(labels[i].to_string());
        }
        writer.write_record(&fields).map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Parameters of the synthetic covariate-shift generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShiftSpec {
    pub class_count: usize,
    pub ambient_dim: usize,
    /// Dimension of the plane the class clusters live on.
    pub intrinsic_dim: usize,
    pub samples_per_class: usize,
    /// Size of the separately drawn labeled target test set, per class.
    pub test_samples_per_class: usize,
    pub rotation_angle_degrees: f64,
    pub translation_magnitude: f64,
    /// Off-plane noise standard deviation; the in-plane within-class
    /// standard deviation is `in_plane_spread · noise_sigma`.
    pub noise_sigma: f64,
    pub in_plane_spread: f64,
    /// Standard deviation of the class means inside the plane.
    pub class_separation: f64,
    pub seed: u64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            class_count: 3,
            ambient_dim: 10,
            intrinsic_dim: 4,
            samples_per_class: 200,
            test_samples_per_class: 200,
            rotation_angle_degrees: 45.0,
            translation_magnitude: 2.0,
            noise_sigma: 0.3,
            in_plane_spread: 2.0,
            class_separation: 1.0,
            seed: 3,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.class_count < 2 {
            return bad(format!("class_count must be at least 2, got {}", self.class_count));
        }
        if self.ambient_dim < 2 {
            return bad(format!("ambient_dim must be at least 2, got {}", self.ambient_dim));
        }
        if self.intrinsic_dim == 0 || self.intrinsic_dim > self.ambient_dim {
            return bad(format!("intrinsic_dim must lie in [1, {}], got {}", self.ambient_dim, self.intrinsic_dim));
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class must be positive".into());
        }
        if !(0.0..=180.0).contains(&self.rotation_angle_degrees) {
            return bad(format!("rotation angle must lie in [0, 180], got {}", self.rotation_angle_degrees));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("translation_magnitude", self.translation_magnitude),
            ("in_plane_spread", self.in_plane_spread),
            ("class_separation", self.class_separation),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

/// Everything the generator produced, including the transform that maps
/// source geometry onto the target domain: `x_t = R x_s + t`.
#[derive(Debug, Clone)]
pub struct ShiftInstance<A> {
    pub source: FeatureDataset<A>,
    /// Labels are kept for evaluation only.
    pub target: FeatureDataset<A>,
    pub target_test: Option<FeatureDataset<A>>,
    pub rotation: Array2<A>,
    pub translation: Array1<A>,
    /// Source class means in ambient space, one row per class.
    pub class_means: Array2<A>,
}

impl<A: Scalar> ShiftInstance<A> {
    /// `Rᵀ (x − t)` applied to each row.
    pub fn undo_shift(&self, x: ArrayView2<A>) -> Array2<A> {
        let shifted = &x - &self.translation.view().insert_axis(Axis(0));
        shifted.dot(&self.rotation)
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `k` orthonormal random vectors in `R^dim` as columns (Gram–Schmidt of
/// Gaussian draws).
fn random_orthonormal(rng: &mut ChaCha8Rng, dim: usize, k: usize) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((dim, k));
    let mut j = 0;
    while j < k {
        let mut v = Array1::from_shape_simple_fn(dim, || gaussian(rng));
        for _ in 0..2 {
            for c in 0..j {
                let col = q.column(c);
                let proj = col.dot(&v);
                v.scaled_add(-proj, &col);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            q.column_mut(j).assign(&(v / norm));
            j += 1;
        }
    }
    q
}

/// A random unit vector orthogonal to the columns of `basis`, which must
/// not span the whole space.
fn orthogonal_direction(rng: &mut ChaCha8Rng, basis: &Array2<f64>) -> Array1<f64> {
    let dim = basis.nrows();
    loop {
        let mut v = Array1::from_shape_simple_fn(dim, || gaussian(rng));
        for _ in 0..2 {
            for col in basis.columns() {
                let proj = col.dot(&v);
                v.scaled_add(-proj, &col);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

pub fn generate_shift_pair<A: Scalar>(spec: &ShiftSpec) -> Result<(FeatureDataset<A>, FeatureDataset<A>)> {
    let inst = generate_shift_instance(spec)?;
    Ok((inst.source, inst.target))
}

/// Gaussian class clusters on a random plane, and the same clusters rotated
/// in a random 2-plane and translated.
pub fn generate_shift_instance<A: Scalar>(spec: &ShiftSpec) -> Result<ShiftInstance<A>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (dim, k, c) = (spec.ambient_dim, spec.intrinsic_dim, spec.class_count);

    let plane = random_orthonormal(&mut rng, dim, k);
    let mean_coords = Array2::from_shape_simple_fn((c, k), || spec.class_separation * gaussian(&mut rng));
    let class_means = mean_coords.dot(&plane.t());

    // The rotation plane pairs one in-plane direction with one direction
    // orthogonal to the cluster plane, so the angle tilts the class structure.
    // When the clusters fill the whole space both directions lie in it.
    let u = plane.dot(&random_orthonormal(&mut rng, k, 1).column(0));
    let v = if k < dim {
        orthogonal_direction(&mut rng, &plane)
    } else {
        orthogonal_direction(&mut rng, &u.clone().insert_axis(Axis(1)))
    };
    let theta = spec.rotation_angle_degrees.to_radians();
    let mut rotation = Array2::<f64>::eye(dim);
    for i in 0..dim {
        for j in 0..dim {
            rotation[[i, j]] += (theta.cos() - 1.0) * (u[i] * u[j] + v[i] * v[j]) + theta.sin() * (v[i] * u[j] - u[i] * v[j]);
        }
    }
    // Translate along the axis joining the first two class means, where a
    // shift moves points across the decision boundary between them.
    let gap = &class_means.row(1) - &class_means.row(0);
    let gap_norm = gap.dot(&gap).sqrt();
    let direction = if gap_norm > 0.0 { gap / gap_norm } else { u.clone() };
    let translation = direction * spec.translation_magnitude;

    let draw = |per_class: usize, rng: &mut ChaCha8Rng| -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::<f64>::zeros((per_class * c, dim));
        let mut labels = Vec::with_capacity(per_class * c);
        for class in 0..c {
            for s in 0..per_class {
                let row = class * per_class + s;
                let in_plane = Array1::from_shape_simple_fn(k, || spec.in_plane_spread * spec.noise_sigma * gaussian(rng));
                let off_plane = Array1::from_shape_simple_fn(dim, || spec.noise_sigma * gaussian(rng));
                let point = &class_means.row(class) + &plane.dot(&in_plane) + &off_plane;
                x.row_mut(row).assign(&point);
                labels.push(class);
            }
        }
        (x, labels)
    };
    let to_target = |x: &Array2<f64>| x.dot(&rotation.t()) + translation.view().insert_axis(Axis(0));

    let (xs, ys) = draw(spec.samples_per_class, &mut rng);
    let (xt_raw, yt) = draw(spec.samples_per_class, &mut rng);
    let xt = to_target(&xt_raw);
    let test = if spec.test_samples_per_class > 0 {
        let (x, y) = draw(spec.test_samples_per_class, &mut rng);
        Some(FeatureDataset::new(to_f(&to_target(&x)), Some(y), "target_test", Some(c))?)
    } else {
        None
    };

    Ok(ShiftInstance {
        source: FeatureDataset::new(to_f(&xs), Some(ys), "source", Some(c))?,
        target: FeatureDataset::new(to_f(&xt), Some(yt), "target", Some(c))?,
        target_test: test,
        rotation: to_f(&rotation),
        translation: translation.mapv(A::of),
        class_means: to_f(&class_means),
    })
}

fn to_f<A: Scalar>(x: &Array2<f64>) -> Array2<A> {
    x.mapv(A::of)
}

//! Subspace fitting, closed-form alignment and re-projection of target
//! features into the source coordinate frame.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// Orthonormal basis of a `d`-dimensional linear subspace of `R^D`, together
/// with the mean that was removed before fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace<A> {
    basis: Array2<A>,
    center: Array1<A>,
}

impl<A: Scalar> Subspace<A> {
    /// Builds a subspace from an explicit basis (`D×d`) and center (length `D`).
    ///
    /// The columns must be orthonormal up to `sqrt(eps)`.
    pub fn from_parts(basis: Array2<A>, center: Array1<A>) -> Result<Self> {
        let (ambient, dim) = basis.dim();
        if dim == 0 || dim > ambient {
            return dim_err(format!("basis shape {ambient}x{dim} is not a valid subspace"));
        }
        if center.len() != ambient {
            return dim_err(format!(
                "center has length {} but basis ambient dimension is {ambient}",
                center.len()
            ));
        }
        linalg::check_finite(basis.view())?;
        if !center.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical("subspace center contains non-finite entries".into()));
        }
        let defect = linalg::orthonormality_defect(basis.view());
        if defect > A::epsilon().sqrt() {
            return Err(Error::Numerical(format!("basis columns are not orthonormal (defect {defect})")));
        }
        Ok(Self { basis, center })
    }

    /// Subspace with zero center; convenient for hand-built bases.
    pub fn from_basis(basis: Array2<A>) -> Result<Self> {
        let ambient = basis.nrows();
        Self::from_parts(basis, Array1::zeros(ambient))
    }

    pub fn basis(&self) -> ArrayView2<'_, A> {
        self.basis.view()
    }

    pub fn center(&self) -> ArrayView1<'_, A> {
        self.center.view()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Subspace coordinates `(X − center) · Z` of the rows of `x` (`m×d`).
    pub fn coordinates(&self, x: ArrayView2<A>) -> Result<Array2<A>> {
        if x.ncols() != self.ambient_dim() {
            return dim_err(format!(
                "features have {} columns, subspace lives in R^{}",
                x.ncols(),
                self.ambient_dim()
            ));
        }
        let centered = &x - &self.center.view().insert_axis(Axis(0));
        Ok(centered.dot(&self.basis))
    }

    /// `‖X_c − X_c Z Zᵀ‖²_F` for the rows of `x` centered by this subspace.
    pub fn reconstruction_error(&self, x: ArrayView2<A>) -> Result<A> {
        let coords = self.coordinates(x)?;
        let centered = &x - &self.center.view().insert_axis(Axis(0));
        let recon = coords.dot(&self.basis.t());
        Ok(linalg::frobenius_sq((&centered - &recon).view()))
    }
}

/// Default subspace dimension: `round(0.39·D)` clamped to `[1, min(n−1, D)]`.
pub fn default_subspace_dim(ambient_dim: usize, samples: usize) -> usize {
    let target = (0.39 * ambient_dim as f64).round() as usize;
    let upper = ambient_dim.min(samples.saturating_sub(1)).max(1);
    target.clamp(1, upper)
}

/// Fits a `d`-dimensional subspace to the rows of `x` by truncated SVD of the
/// row-mean-centered matrix.
///
/// Each basis column is sign-normalized so its largest-magnitude entry (lowest
/// index on ties) is non-negative.
pub fn fit_subspace<A: Scalar>(x: ArrayView2<A>, d: usize) -> Result<Subspace<A>> {
    let (n, ambient) = x.dim();
    if n < 2 {
        return Err(Error::Dimension(format!("need at least 2 samples to fit a subspace, got {n}")));
    }
    if d == 0 || d > (n - 1).min(ambient) {
        return dim_err(format!(
            "subspace dimension {d} outside [1, {}] for {n} samples in R^{ambient}",
            (n - 1).min(ambient)
        ));
    }
    linalg::check_finite(x)?;
    let center = linalg::column_mean(x);
    let centered = &x - &center.view().insert_axis(Axis(0));
    let (_, v) = linalg::right_singular(centered.view())?;
    let mut basis = v.slice(ndarray::s![.., ..d]).to_owned();
    for mut col in basis.columns_mut() {
        let mut lead = 0;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > col[lead].abs() {
                lead = i;
            }
        }
        if col[lead] < A::zero() {
            col.mapv_inplace(|x| -x);
        }
    }
    Ok(Subspace { basis, center })
}

/// Square `d×d` alignment matrix mapping target subspace coordinates onto
/// source subspace coordinates. Not required to be orthogonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMap<A> {
    phi: Array2<A>,
}

impl<A: Scalar> AlignmentMap<A> {
    pub fn new(phi: Array2<A>) -> Result<Self> {
        let (r, c) = phi.dim();
        if r != c || r == 0 {
            return dim_err(format!("alignment matrix must be square and non-empty, got {r}x{c}"));
        }
        linalg::check_finite(phi.view())?;
        Ok(Self { phi })
    }

    pub fn identity(d: usize) -> Self {
        Self { phi: Array2::eye(d) }
    }

    pub fn zeros(d: usize) -> Self {
        Self { phi: Array2::zeros((d, d)) }
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn phi(&self) -> ArrayView2<'_, A> {
        self.phi.view()
    }

    pub fn into_inner(self) -> Array2<A> {
        self.phi
    }

    pub(crate) fn phi_mut(&mut self) -> &mut Array2<A> {
        &mut self.phi
    }
}

fn check_pair<A: Scalar>(zt: &Subspace<A>, zs: &Subspace<A>) -> Result<()> {
    if zt.dim() != zs.dim() || zt.ambient_dim() != zs.ambient_dim() {
        return dim_err(format!(
            "target subspace is {}-dim in R^{}, source subspace is {}-dim in R^{}",
            zt.dim(),
            zt.ambient_dim(),
            zs.dim(),
            zs.ambient_dim()
        ));
    }
    Ok(())
}

fn check_phi<A: Scalar>(phi: &AlignmentMap<A>, d: usize) -> Result<()> {
    if phi.dim() != d {
        return dim_err(format!("alignment matrix is {0}x{0}, subspaces are {d}-dim", phi.dim()));
    }
    Ok(())
}

/// `Φ* = Z_tᵀ Z_s`, the global minimizer of `‖Z_t Φ − Z_s‖²_F`.
pub fn closed_form_alignment<A: Scalar>(zt: &Subspace<A>, zs: &Subspace<A>) -> Result<AlignmentMap<A>> {
    check_pair(zt, zs)?;
    Ok(AlignmentMap { phi: zt.basis.t().dot(&zs.basis) })
}

/// `‖Z_t Φ − Z_s‖²_F`.
pub fn alignment_cost<A: Scalar>(zt: &Subspace<A>, phi: &AlignmentMap<A>, zs: &Subspace<A>) -> Result<A> {
    check_pair(zt, zs)?;
    check_phi(phi, zt.dim())?;
    let residual = zt.basis.dot(&phi.phi) - &zs.basis;
    Ok(linalg::frobenius_sq(residual.view()))
}

/// `Z_t Z_tᵀ Z_s`, the target basis expressed in source-compatible coordinates.
pub fn source_aligned_target_basis<A: Scalar>(zt: &Subspace<A>, zs: &Subspace<A>) -> Result<Array2<A>> {
    check_pair(zt, zs)?;
    Ok(zt.basis.dot(&zt.basis.t().dot(&zs.basis)))
}

/// Re-projects target rows into the source frame:
/// `(X_t − c_t) Z_t Φ Z_sᵀ + c_s`.
pub fn align_features<A: Scalar>(
    x: ArrayView2<A>,
    zt: &Subspace<A>,
    phi: &AlignmentMap<A>,
    zs: &Subspace<A>,
) -> Result<Array2<A>> {
    check_pair(zt, zs)?;
    check_phi(phi, zt.dim())?;
    let coords = zt.coordinates(x)?;
    Ok(lift_coordinates(coords.view(), phi, zs))
}

/// Maps target subspace coordinates through `Φ` into ambient source space.
pub(crate) fn lift_coordinates<A: Scalar>(
    coords: ArrayView2<A>,
    phi: &AlignmentMap<A>,
    zs: &Subspace<A>,
) -> Array2<A> {
    let mapped = coords.dot(&phi.phi).dot(&zs.basis.t());
    mapped + zs.center.view().insert_axis(Axis(0))
}

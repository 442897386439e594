//! Dense linear algebra used by the subspace code: a one-sided Jacobi SVD,
//! Householder reduction for tall inputs, and a few matrix norms.
//!
//! One-sided Jacobi is slower than bidiagonalization-based SVD but computes
//! small singular values to high relative accuracy and is easy to make
//! deterministic, which matters more here than raw throughput.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `a = u · diag(s) · vᵀ`.
///
/// For an `m×n` input with `k = min(m, n)`, `u` is `m×k`, `s` has length `k`
/// sorted in non-increasing order and `v` is `n×k`. Both `u` and `v` have
/// orthonormal columns, including the columns that belong to zero singular
/// values (those are completed deterministically).
#[derive(Debug, Clone)]
pub struct Svd<A> {
    pub u: Array2<A>,
    pub s: Array1<A>,
    pub v: Array2<A>,
}

pub fn svd<A: Scalar>(a: ArrayView2<A>) -> Result<Svd<A>> {
    check_finite(a)?;
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return Err(Error::Dimension(format!("cannot decompose an empty {m}x{n} matrix")));
    }
    if m >= n {
        // Orthogonalize the columns of `a`; rows of `work` are those columns.
        let work = a.t().to_owned();
        let (w, rot, sv) = jacobi_rows(work)?;
        let u = normalized_columns(&w, &sv)?;
        Ok(Svd { u, s: sv, v: rot })
    } else {
        // Orthogonalize the columns of `aᵀ`, i.e. the rows of `a`.
        let (w, rot, sv) = jacobi_rows(a.to_owned())?;
        let v = normalized_columns(&w, &sv)?;
        Ok(Svd { u: rot, s: sv, v })
    }
}

/// Singular values and right singular vectors of `a` (`v` is `n×min(m,n)`).
///
/// Tall inputs are first reduced to their `n×n` triangular factor, which has
/// the same singular values and right singular vectors.
pub fn right_singular<A: Scalar>(a: ArrayView2<A>) -> Result<(Array1<A>, Array2<A>)> {
    let (m, n) = a.dim();
    if m > 2 * n {
        check_finite(a)?;
        let r = householder_r(a);
        let dec = svd(r.view())?;
        Ok((dec.s, dec.v))
    } else {
        let dec = svd(a)?;
        Ok((dec.s, dec.v))
    }
}

pub fn singular_values<A: Scalar>(a: ArrayView2<A>) -> Result<Array1<A>> {
    Ok(right_singular(a)?.0)
}

/// Ratio of largest to smallest singular value; infinite when singular.
pub fn condition_number<A: Scalar>(a: ArrayView2<A>) -> Result<A> {
    let sv = singular_values(a)?;
    let max = sv[0];
    let min = sv[sv.len() - 1];
    if min <= A::zero() {
        Ok(A::infinity())
    } else {
        Ok(max / min)
    }
}

pub fn frobenius_sq<A: Scalar>(a: ArrayView2<A>) -> A {
    a.iter().fold(A::zero(), |acc, &x| acc + x * x)
}

pub fn frobenius<A: Scalar>(a: ArrayView2<A>) -> A {
    frobenius_sq(a).sqrt()
}

pub fn frobenius_distance<A: Scalar>(a: ArrayView2<A>, b: ArrayView2<A>) -> A {
    a.iter()
        .zip(b.iter())
        .fold(A::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

pub(crate) fn check_finite<A: Scalar>(a: ArrayView2<A>) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical("matrix contains non-finite entries".into()))
    }
}

/// Upper-triangular factor `r` (`n×n`) of a Householder QR of a tall `m×n` matrix.
fn householder_r<A: Scalar>(a: ArrayView2<A>) -> Array2<A> {
    let (m, n) = a.dim();
    let mut work = a.to_owned();
    for k in 0..n.min(m) {
        let col = work.slice(s![k.., k]);
        let alpha = col.dot(&col).sqrt();
        if alpha == A::zero() {
            continue;
        }
        let x0 = work[[k, k]];
        let beta = if x0 >= A::zero() { -alpha } else { alpha };
        let mut v = col.to_owned();
        v[0] = x0 - beta;
        let vnorm_sq = v.dot(&v);
        if vnorm_sq == A::zero() {
            continue;
        }
        let two = A::of(2.0);
        for j in k..n {
            let mut target = work.slice_mut(s![k.., j]);
            let proj = v.dot(&target) * two / vnorm_sq;
            target.scaled_add(-proj, &v);
        }
    }
    let mut r = Array2::zeros((n, n));
    for i in 0..n.min(m) {
        for j in i..n {
            r[[i, j]] = work[[i, j]];
        }
    }
    r
}

/// Hestenes one-sided Jacobi on the rows of `rows` (`k×len`).
///
/// Returns the mutually orthogonal rows (sorted by decreasing norm), the
/// accumulated `k×k` orthogonal rotation `j` such that `rowsᵀ · j` equals the
/// orthogonalized columns, and the row norms.
fn jacobi_rows<A: Scalar>(mut rows: Array2<A>) -> Result<(Array2<A>, Array2<A>, Array1<A>)> {
    let k = rows.nrows();
    // rot_t holds jᵀ so each rotation touches two contiguous rows.
    let mut rot_t: Array2<A> = Array2::eye(k);
    let eps = A::epsilon();
    let mut converged = k < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..k - 1 {
            for q in p + 1..k {
                let (alpha, beta, gamma) = {
                    let rp = rows.row(p);
                    let rq = rows.row(q);
                    (rp.dot(&rp), rq.dot(&rq), rp.dot(&rq))
                };
                if gamma == A::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (A::one() + zeta * zeta).sqrt());
                let c = A::one() / (A::one() + t * t).sqrt();
                let sn = c * t;
                rotate_rows(&mut rows, p, q, c, sn);
                rotate_rows(&mut rot_t, p, q, c, sn);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi SVD did not converge within {MAX_SWEEPS} sweeps"
        )));
    }

    let norms: Vec<A> = rows.outer_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    // Stable sort keeps the original order among equal norms.
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let len = rows.ncols();
    let mut sorted_rows = Array2::zeros((k, len));
    let mut rot = Array2::zeros((k, k));
    let mut sv = Array1::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        sorted_rows.row_mut(dst).assign(&rows.row(src));
        rot.column_mut(dst).assign(&rot_t.row(src));
        sv[dst] = norms[src];
    }
    Ok((sorted_rows, rot, sv))
}

fn rotate_rows<A: Scalar>(m: &mut Array2<A>, p: usize, q: usize, c: A, s: A) {
    let (mut rp, mut rq) = m.multi_slice_mut((s![p, ..], s![q, ..]));
    ndarray::Zip::from(&mut rp).and(&mut rq).for_each(|x, y| {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    });
}

/// Turns orthogonal rows of `w` into orthonormal columns, completing the
/// columns whose singular value is numerically zero.
fn normalized_columns<A: Scalar>(w: &Array2<A>, sv: &Array1<A>) -> Result<Array2<A>> {
    let (k, len) = w.dim();
    let smax = sv.iter().fold(A::zero(), |m, &x| m.max(x));
    let tol = A::epsilon() * A::of_usize(len.max(k)) * smax;
    let mut out = Array2::zeros((len, k));
    let mut deficient = Vec::new();
    for j in 0..k {
        if sv[j] > tol && sv[j] > A::zero() {
            out.column_mut(j).assign(&(&w.row(j) / sv[j]));
        } else {
            deficient.push(j);
        }
    }
    for j in deficient {
        let filled: Vec<usize> = (0..k).filter(|&c| c != j && out.column(c).iter().any(|x| *x != A::zero())).collect();
        // The unit vector with the largest residual always has norm at least
        // sqrt((len - filled) / len).
        let mut best: Option<(A, Array1<A>)> = None;
        for e in 0..len {
            let mut cand = Array1::zeros(len);
            cand[e] = A::one();
            for _ in 0..2 {
                for &c in &filled {
                    let col = out.column(c);
                    let proj = col.dot(&cand);
                    cand.scaled_add(-proj, &col);
                }
            }
            let norm = cand.dot(&cand).sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, cand));
            }
        }
        match best {
            Some((norm, cand)) if norm > A::of(1e-6) => out.column_mut(j).assign(&(cand / norm)),
            _ => return Err(Error::Numerical("could not complete orthonormal basis".into())),
        }
    }
    Ok(out)
}

/// `‖aᵀa − I‖_F` for a matrix with (supposedly) orthonormal columns.
pub fn orthonormality_defect<A: Scalar>(a: ArrayView2<A>) -> A {
    let gram = a.t().dot(&a);
    let eye: Array2<A> = Array2::eye(gram.nrows());
    frobenius_distance(gram.view(), eye.view())
}

pub(crate) fn column_mean<A: Scalar>(x: ArrayView2<A>) -> Array1<A> {
    x.mean_axis(Axis(0)).expect("non-empty matrix")
}

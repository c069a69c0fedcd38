//! One-ancilla unitary dilations of non-unitary operators.
//!
//! `matrix` is stored in block form `[[uR, B], [C, D]]`, where the first block
//! is the post-selected ancilla-↑ branch. [`DilatedUnitary::register_matrix`]
//! converts that to the register ordering (ancilla as most significant qubit,
//! ↑ encoded as 1).

use nalgebra::ComplexField;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::{c, cr, max_abs_diff, unitarity_defect, CMatrix, Real, C};

#[derive(Debug, Clone, PartialEq)]
pub struct DilatedUnitary<T: Real> {
    pub matrix: CMatrix<T>,
    pub rescale_u: T,
    pub block_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DilationReport<T> {
    pub unitarity_defect: T,
    pub block_defect: T,
    pub u_defect: T,
}

impl<T: Real> DilationReport<T> {
    pub fn max(&self) -> T {
        self.unitarity_defect.max(self.block_defect).max(self.u_defect)
    }
}

impl<T: Real> DilatedUnitary<T> {
    /// The post-selected block, equal to `uR`.
    pub fn block(&self) -> CMatrix<T> {
        let d = self.block_dim;
        self.matrix.view((0, 0), (d, d)).into_owned()
    }

    /// Operator on `targets ++ [ancilla]` with the ancilla as the top bit.
    pub fn register_matrix(&self) -> CMatrix<T> {
        let d = self.block_dim;
        CMatrix::from_fn(2 * d, 2 * d, |i, j| self.matrix[(i ^ d, j ^ d)])
    }
}

fn block_form<T: Real>(r: &CMatrix<T>, b: &CMatrix<T>, cm: &CMatrix<T>, dm: &CMatrix<T>) -> CMatrix<T> {
    let d = r.nrows();
    let mut m = CMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(r);
    m.view_mut((0, d), (d, d)).copy_from(b);
    m.view_mut((d, 0), (d, d)).copy_from(cm);
    m.view_mut((d, d), (d, d)).copy_from(dm);
    m
}

fn closed_form<T: Real>(r: CMatrix<T>) -> DilatedUnitary<T> {
    // C = -sqrt(I - R R†) for diagonal R with entries in [0, 1].
    let cm = CMatrix::from_fn(2, 2, |i, j| {
        if i == j {
            let x = r[(i, i)].re;
            cr(-(T::one() - x * x).max(T::zero()).sqrt())
        } else {
            C::zero()
        }
    });
    let m = block_form(&r, &(-&cm), &cm, &r);
    DilatedUnitary { matrix: m, rescale_u: T::one(), block_dim: 2 }
}

/// Closed-form dilation of `R₋ = diag(e^{-φ}, 1)`.
pub fn dilate_single_loss<T: Real>(phi: T) -> DilatedUnitary<T> {
    let r = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![cr((-phi).exp()), C::one()]));
    closed_form(r)
}

/// Closed-form dilation of `R₊ = diag(1, e^{-φ})`.
pub fn dilate_single_gain<T: Real>(phi: T) -> DilatedUnitary<T> {
    let r = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C::one(), cr((-phi).exp())]));
    closed_form(r)
}

/// Dilates an arbitrary nonzero `R` (dimension a power of two).
///
/// With `R = AΣB†` and `u = 1/σ_max`, the column block `[uR; A√(I−u²Σ²)B†]` is
/// isometric; QR of `[[uR, I], [C, I]]` completes it, and fixing each column
/// phase so the triangular factor has a real nonnegative diagonal keeps the
/// first block exact.
pub fn dilate<T: Real>(r: &CMatrix<T>) -> Result<DilatedUnitary<T>> {
    let d = r.nrows();
    if r.ncols() != d {
        return Err(Error::Operator(format!("not square: {}x{}", d, r.ncols())));
    }
    if d == 0 || !d.is_power_of_two() {
        return Err(Error::Operator(format!("dimension {d} is not a power of two")));
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Operator("non-finite entry".into()));
    }
    let max_entry = r.iter().fold(T::zero(), |m, z| m.max(z.modulus()));
    if max_entry == T::zero() {
        return Err(Error::Operator("zero operator".into()));
    }
    let svd = r.clone().try_svd(true, true, T::eps(), 0).ok_or(Error::Svd)?;
    let (a, vt) = (svd.u.ok_or(Error::Svd)?, svd.v_t.ok_or(Error::Svd)?);
    let smax = svd.singular_values.iter().fold(T::zero(), |m, &s| m.max(s));
    let u = T::one() / smax;
    // Radicands within a few ulps of zero are round-off on singular values
    // equal to σ_max; their square root would otherwise leak O(√ε) into C.
    let floor = T::eps() * T::lit(64.0);
    let root = nalgebra::DVector::from_iterator(
        d,
        svd.singular_values.iter().map(|&s| {
            let x = T::one() - u * u * s * s;
            cr(if x > floor { x.sqrt() } else { T::zero() })
        }),
    );
    let cm = &a * CMatrix::from_diagonal(&root) * &vt;
    let ur = r.map(|z| z.scale(u));
    let id = CMatrix::identity(d, d);
    let w = block_form(&ur, &id, &cm, &id);
    let qr = w.qr();
    let mut q = qr.q();
    let tri = qr.r();
    for j in 0..2 * d {
        let z = tri[(j, j)];
        let n = z.modulus();
        if n > T::zero() {
            let phase = z.unscale(n);
            q.column_mut(j).iter_mut().for_each(|e| *e *= phase);
        }
    }
    Ok(DilatedUnitary { matrix: q, rescale_u: u, block_dim: d })
}

/// Unitarity, block and rescale-factor defects of `d` against `r`. The
/// largest eigenvalue of `R†R` is taken from a Hermitian eigensolver,
/// independent of the SVD used by [`dilate`].
pub fn verify_dilation<T: Real>(d: &DilatedUnitary<T>, r: &CMatrix<T>) -> Result<DilationReport<T>> {
    if r.nrows() != d.block_dim || r.ncols() != d.block_dim || d.matrix.nrows() != 2 * d.block_dim {
        return Err(Error::Dimension { expected: d.block_dim, found: r.nrows() });
    }
    let ur = r.map(|z| z.scale(d.rescale_u));
    let lmax = (r.adjoint() * r).symmetric_eigenvalues().iter().fold(T::zero(), |m, &v| m.max(v));
    Ok(DilationReport {
        unitarity_defect: unitarity_defect(&d.matrix),
        block_defect: max_abs_diff(&d.block(), &ur),
        u_defect: (d.rescale_u * d.rescale_u * lmax - T::one()).abs(),
    })
}

/// The closed-form 4×4 loss matrix written out entry by entry.
pub fn loss_reference<T: Real>(phi: f64) -> CMatrix<T> {
    let (e, s) = ((-phi).exp(), (1.0 - (-2.0 * phi).exp()).sqrt());
    CMatrix::from_row_slice(
        4,
        4,
        &[
            c(e, 0.),
            c(0., 0.),
            c(s, 0.),
            c(0., 0.),
            c(0., 0.),
            c(1., 0.),
            c(0., 0.),
            c(0., 0.),
            c(-s, 0.),
            c(0., 0.),
            c(e, 0.),
            c(0., 0.),
            c(0., 0.),
            c(0., 0.),
            c(0., 0.),
            c(1., 0.),
        ],
    )
}

/// The closed-form 4×4 gain matrix written out entry by entry.
pub fn gain_reference<T: Real>(phi: f64) -> CMatrix<T> {
    let (e, s) = ((-phi).exp(), (1.0 - (-2.0 * phi).exp()).sqrt());
    CMatrix::from_row_slice(
        4,
        4,
        &[
            c(1., 0.),
            c(0., 0.),
            c(0., 0.),
            c(0., 0.),
            c(0., 0.),
            c(e, 0.),
            c(0., 0.),
            c(s, 0.),
            c(0., 0.),
            c(0., 0.),
            c(1., 0.),
            c(0., 0.),
            c(0., 0.),
            c(-s, 0.),
            c(0., 0.),
            c(e, 0.),
        ],
    )
}

use nalgebra::{ComplexField, DMatrix, RealField};
use num_traits::ToPrimitive;

pub type C<T> = num_complex::Complex<T>;
pub type CMatrix<T> = DMatrix<C<T>>;

/// Real scalar the simulator is generic over.
pub trait Real: RealField + Copy + ToPrimitive + Send + Sync {
    /// Literal conversion; lossy for `f32`.
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the type.
    fn eps() -> Self;
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

pub(crate) fn c<T: Real>(re: f64, im: f64) -> C<T> {
    C::new(T::lit(re), T::lit(im))
}

pub(crate) fn cr<T: Real>(re: T) -> C<T> {
    C::new(re, T::zero())
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> T {
    a.iter().zip(b.iter()).map(|(x, y)| (*x - *y).modulus()).fold(T::zero(), |m, v| if v > m { v } else { m })
}

/// Deviation of `U†U` from the identity, entrywise max.
pub fn unitarity_defect<T: Real>(u: &CMatrix<T>) -> T {
    let n = u.ncols();
    let g = u.adjoint() * u;
    max_abs_diff(&g, &CMatrix::identity(n, n))
}

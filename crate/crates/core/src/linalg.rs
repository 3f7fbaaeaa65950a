//! Dense complex matrix helpers with multiply-accumulate accounting.
//!
//! Every kernel that the cascade, optimizer and oracle paths use to do
//! arithmetic on matrices goes through this module so that the cost of a
//! computation can be read back as an exact count of complex
//! multiply-accumulates (MACs). The counter is thread-local: concurrent
//! workers never see each other's counts.

use std::cell::Cell;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const J: Complex64 = Complex64::new(0.0, 1.0);

thread_local! {
    static MACS: Cell<u64> = const { Cell::new(0) };
}

/// Adds `n` complex multiply-accumulates to the current thread's counter.
#[inline]
pub fn count_macs(n: usize) {
    MACS.with(|c| c.set(c.get() + n as u64));
}

/// Current value of this thread's MAC counter.
pub fn macs() -> u64 {
    MACS.with(Cell::get)
}

pub fn reset_macs() {
    MACS.with(|c| c.set(0));
}

/// Runs `f` and returns its result together with the MACs it performed.
pub fn counting<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let before = macs();
    let out = f();
    (out, macs() - before)
}

/// `a * b`, counted as `rows(a) * cols(a) * cols(b)` MACs.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    debug_assert_eq!(a.ncols(), b.nrows());
    count_macs(a.nrows() * a.ncols() * b.ncols());
    a * b
}

/// `aᴴ * b` without materializing the adjoint.
pub fn adjoint_mul(a: &CMat, b: &CMat) -> CMat {
    debug_assert_eq!(a.nrows(), b.nrows());
    count_macs(a.ncols() * a.nrows() * b.ncols());
    a.ad_mul(b)
}

/// `diag(d) * m`: scales row `i` of `m` by `d[i]`.
pub fn scale_rows(d: &[Complex64], m: &CMat) -> CMat {
    assert_eq!(d.len(), m.nrows(), "diagonal length must match row count");
    count_macs(m.len());
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= d[i];
    }
    out
}

/// `m * diag(d)`: scales column `j` of `m` by `d[j]`.
pub fn scale_cols(m: &CMat, d: &[Complex64]) -> CMat {
    assert_eq!(d.len(), m.ncols(), "diagonal length must match column count");
    count_macs(m.len());
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= d[j];
    }
    out
}

/// Squared Frobenius norm.
pub fn fro_sq(m: &CMat) -> f64 {
    count_macs(m.len());
    m.iter().map(Complex64::norm_sqr).sum()
}

/// `trace(a * bᴴ)`, i.e. the Frobenius inner product `Σ a_ij conj(b_ij)`.
pub fn trace_a_bh(a: &CMat, b: &CMat) -> Complex64 {
    assert_eq!(a.shape(), b.shape());
    count_macs(a.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute difference when `b` is zero.
pub fn rel_fro_err(a: &CMat, b: &CMat) -> f64 {
    let diff = (a - b).norm();
    let base = b.norm();
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}

/// Copies `block` into `dst` with its top-left corner at `(row, col)`.
pub fn place(dst: &mut CMat, row: usize, col: usize, block: &CMat) {
    dst.view_mut((row, col), block.shape()).copy_from(block);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn matmul_counts_macs() {
        let a = CMat::from_element(3, 4, ONE);
        let b = CMat::from_element(4, 5, ONE);
        let (p, n) = counting(|| matmul(&a, &b));
        assert_eq!(n, 60);
        assert_eq!(p[(0, 0)], c(4.0, 0.0));
    }

    #[test]
    fn adjoint_mul_matches_explicit_adjoint() {
        let a = CMat::from_fn(3, 2, |i, j| c(i as f64, j as f64 + 1.0));
        let b = CMat::from_fn(3, 2, |i, j| c(j as f64 - 1.0, i as f64));
        let expected = a.adjoint() * &b;
        assert!((adjoint_mul(&a, &b) - expected).norm() < 1e-14);
    }

    #[test]
    fn diagonal_scaling() {
        let m = CMat::from_element(2, 2, ONE);
        let d = [c(2.0, 0.0), J];
        let r = scale_rows(&d, &m);
        assert_eq!(r[(1, 0)], J);
        assert_eq!(r[(0, 1)], c(2.0, 0.0));
        let s = scale_cols(&m, &d);
        assert_eq!(s[(0, 1)], J);
        assert_eq!(s[(1, 0)], c(2.0, 0.0));
    }

    #[test]
    fn counters_are_thread_local() {
        reset_macs();
        count_macs(10);
        std::thread::spawn(|| {
            assert_eq!(macs(), 0);
            count_macs(5);
        })
        .join()
        .unwrap();
        assert_eq!(macs(), 10);
    }
}

//! Dense linear algebra for singular torus systems.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral;

/// Circulant matrix of the multiplier `m(ω)` on an `n`-point grid of period `period`.
pub fn circulant(n: usize, period: f64, m: impl Fn(f64) -> Complex64) -> DMatrix<f64> {
    let mut e0 = vec![0.0; n];
    e0[0] = 1.0;
    let col = spectral::apply_multiplier(&e0, period, m);
    DMatrix::from_fn(n, n, |i, j| col[(i + n - j) % n])
}

/// `diag(d) · m`
pub fn scale_rows(m: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, s) in d.iter().enumerate() {
        out.row_mut(i).scale_mut(*s);
    }
    out
}

/// `m · diag(d)`
pub fn scale_cols(m: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, s) in d.iter().enumerate() {
        out.column_mut(j).scale_mut(*s);
    }
    out
}

pub fn norm_l2_h(v: &DVector<f64>, h: f64) -> f64 {
    (v.norm_squared() * h).sqrt()
}

/// Singular values in ascending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| x.partial_cmp(y).unwrap());
    s
}

#[derive(Clone, Debug)]
pub struct NullSolution {
    pub vector: DVector<f64>,
    pub residual: f64,
    pub operator_norm: f64,
    pub smallest_singular: f64,
    pub gap_singular: f64,
}

/// Solves `A v = 0` with `h Σ v = 1`. Requires a one-dimensional null space, checked on the
/// singular values; the vector itself comes from a bordered LU solve, which is more accurate
/// than the least-squares solution of the augmented system.
pub fn normalized_null_vector(a: &DMatrix<f64>, h: f64) -> Result<NullSolution> {
    let n = a.nrows();
    let svd = a.clone().svd(true, false);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
    let smax = svd.singular_values[order[n - 1]];
    let (s0, s1) = (svd.singular_values[order[0]], svd.singular_values[order[1]]);
    if s0 > 1e-9 * smax {
        return Err(Error::Singular(format!(
            "operator has no numerical null direction (smallest singular value {s0:e}, largest {smax:e})"
        )));
    }
    if s1 <= 1e-9 * smax {
        return Err(Error::Singular(format!(
            "null space is more than one-dimensional (second singular value {s1:e}, largest {smax:e})"
        )));
    }
    let left = svd.u.as_ref().expect("requested").column(order[0]).into_owned();
    let ones = DVector::from_element(n, h);
    let (v, _) = solve_bordered(a, &left, &ones, &DVector::zeros(n), 1.0)?;
    let residual = (a * &v).norm() / (v.norm().max(1e-300));
    Ok(NullSolution { vector: v, residual, operator_norm: smax, smallest_singular: s0, gap_singular: s1 })
}

/// Solves the bordered system `[A ψ; cᵀ 0][x; μ] = [rhs; value]`.
///
/// When `ψ` spans the left null space of `A` and `rhs` satisfies the solvability condition,
/// `μ` vanishes and `x` solves `A x = rhs` with `cᵀx = value`. One step of iterative
/// refinement is applied.
pub fn solve_bordered(
    a: &DMatrix<f64>,
    psi: &DVector<f64>,
    c: &DVector<f64>,
    rhs: &DVector<f64>,
    value: f64,
) -> Result<(DVector<f64>, f64)> {
    let n = a.nrows();
    let mut big = DMatrix::zeros(n + 1, n + 1);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    big.view_mut((0, n), (n, 1)).copy_from(psi);
    big.view_mut((n, 0), (1, n)).copy_from(&c.transpose());
    let mut b = DVector::zeros(n + 1);
    b.rows_mut(0, n).copy_from(rhs);
    b[n] = value;
    let lu = big.clone().lu();
    let mut sol = lu.solve(&b).ok_or_else(|| Error::Singular("bordered system is singular".into()))?;
    let r = &b - &big * &sol;
    if let Some(corr) = lu.solve(&r) {
        sol += corr;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("bordered solve produced non-finite values".into()));
    }
    let mu = sol[n];
    Ok((sol.rows(0, n).into_owned(), mu))
}

/// Inverse power iteration on `(A - ρI)` started from `start`; returns the normalized
/// vector after `iters` steps.
pub fn inverse_power_iteration(
    a: &DMatrix<f64>,
    shift: f64,
    start: &DVector<f64>,
    iters: usize,
) -> Result<DVector<f64>> {
    let n = a.nrows();
    let shifted = a - DMatrix::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut v = start.clone();
    for _ in 0..iters {
        v = lu.solve(&v).ok_or_else(|| Error::Singular("shifted operator is singular".into()))?;
        let s = v.norm();
        v /= s;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_vector_of_markov_generator() {
        // generator of a 3-state chain; its transpose has the stationary law as null vector
        let q = DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 0.5, -1.0, 0.5, 0.0, 2.0, -2.0]);
        let sol = normalized_null_vector(&q.transpose(), 1.0).unwrap();
        let p = sol.vector;
        assert!((p.sum() - 1.0).abs() < 1e-13);
        assert!((q.transpose() * &p).norm() < 1e-13);
        assert!((p[0] - 2.0 / 7.0).abs() < 1e-13 && (p[1] - 4.0 / 7.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_two_dimensional_null_space() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(normalized_null_vector(&a, 1.0).is_err());
        assert!(normalized_null_vector(&DMatrix::<f64>::identity(3, 3), 1.0).is_err());
    }

    #[test]
    fn bordered_solve_on_consistent_system() {
        let q = DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 0.5, -1.0, 0.5, 0.0, 2.0, -2.0]);
        let pi = DVector::from_vec(vec![2.0, 4.0, 1.0]) / 7.0;
        let f = DVector::from_vec(vec![1.0, 0.0, -2.0]); // pi-centered
        let (x, mu) = solve_bordered(&q, &pi, &pi, &(-&f), 0.0).unwrap();
        assert!(mu.abs() < 1e-14);
        assert!((&q * &x + &f).norm() < 1e-13);
        assert!(pi.dot(&x).abs() < 1e-14);
    }

    #[test]
    fn circulant_matches_spectral_application() {
        let n = 16;
        let m = circulant(n, 1.0, spectral::derivative_symbol(2));
        let v: Vec<f64> = (0..n).map(|j| ((j * j) as f64 * 0.1).sin()).collect();
        let direct = spectral::apply_multiplier(&v, 1.0, spectral::derivative_symbol(2));
        let via = &m * DVector::from_vec(v);
        for (a, b) in via.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }
}

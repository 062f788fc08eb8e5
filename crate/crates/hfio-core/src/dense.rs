//! Dense complex linear algebra on top of nalgebra.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::prelude::*;

pub type CMatrix = DMatrix<Complex64>;

/// Complex product through four real products, which lets nalgebra use its
/// blocked real kernel.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    DMatrix::from_fn(a.nrows(), b.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
}

/// A·B† without forming B† separately.
pub fn matmul_adjoint(a: &CMatrix, b: &CMatrix) -> CMatrix {
    matmul(a, &b.adjoint())
}

fn split(m: &CMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

/// Thin SVD with singular values sorted in descending order.
pub struct Svd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v_t: CMatrix,
}

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITER: usize = 0;
/// Residual below which a complexified real singular vector is a duplicate.
const DUPLICATE_RESIDUAL: f64 = 1e-3;

/// Real form [[A, −B], [B, A]] of M = A + iB. Each singular value of M
/// appears twice; a real singular pair ([x; y], [p; q]) gives M(x+iy) = s(p+iq).
fn real_embedding(m: &CMatrix) -> DMatrix<f64> {
    let (r, c) = (m.nrows(), m.ncols());
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

fn descending(s: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    order
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Result<Vec<f64>> {
    let d = real_embedding(m).try_svd(false, false, SVD_EPS, SVD_MAX_ITER).ok_or(Error::DecompositionFailure)?;
    let s: Vec<f64> = d.singular_values.iter().copied().collect();
    let k = m.nrows().min(m.ncols());
    Ok(descending(&s).into_iter().step_by(2).take(k).map(|i| s[i]).collect())
}

/// Thin SVD through the real embedding. Real vectors are complexified in
/// descending order and orthogonalized (Gram–Schmidt on v, same combination
/// on u); those already in the span of earlier ones are dropped.
pub fn svd(m: &CMatrix) -> Result<Svd> {
    let (r, c) = (m.nrows(), m.ncols());
    let k = r.min(c);
    let d = real_embedding(m).try_svd(true, true, SVD_EPS, SVD_MAX_ITER).ok_or(Error::DecompositionFailure)?;
    let ru = d.u.ok_or(Error::DecompositionFailure)?;
    let rv = d.v_t.ok_or(Error::DecompositionFailure)?;
    let s = d.singular_values;
    let mut us: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(k);
    let mut vs: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for idx in descending(s.as_slice()) {
        if vs.len() == k {
            break;
        }
        let mut u = nalgebra::DVector::from_fn(r, |i, _| Complex64::new(ru[(i, idx)], ru[(i + r, idx)]));
        let mut v = nalgebra::DVector::from_fn(c, |j, _| Complex64::new(rv[(idx, j)], rv[(idx, j + c)]));
        for (pu, pv) in us.iter().zip(&vs) {
            let coef = pv.dotc(&v);
            v -= pv * coef;
            u -= pu * coef;
        }
        let norm = v.norm();
        if norm < DUPLICATE_RESIDUAL {
            continue;
        }
        let inv = Complex64::new(1.0 / norm, 0.0);
        us.push(u * inv);
        vs.push(v * inv);
        values.push(s[idx]);
    }
    if vs.len() < k {
        return Err(Error::DecompositionFailure);
    }
    let u = CMatrix::from_fn(r, k, |i, j| us[j][i]);
    let v_t = CMatrix::from_fn(k, c, |i, j| vs[i][j].conj());
    Ok(Svd { u, singular_values: values, v_t })
}

/// Largest singular value by power iteration on M†M, seeded deterministically.
pub fn power_norm(m: &CMatrix, max_iter: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = m.ncols();
    let mut v = nalgebra::DVector::<Complex64>::from_fn(n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    v /= Complex64::new(v.norm(), 0.0);
    let mh = m.adjoint();
    let mut last = 0.0;
    for _ in 0..max_iter {
        let w = &mh * (m * &v);
        let rq = v.dotc(&w).re;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        v = w / Complex64::new(nw, 0.0);
        if (rq - last).abs() <= 1e-15 * rq.abs() {
            last = rq;
            break;
        }
        last = rq;
    }
    last.max(0.0).sqrt()
}

/// Frobenius norm.
pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, m: usize) -> CMatrix {
        CMatrix::from_fn(n, m, |i, j| {
            Complex64::new(((i * 7 + j * 3) % 11) as f64 - 5.0, ((i * j) % 5) as f64 / (1.0 + i as f64))
        })
    }

    #[test]
    fn split_product_matches_direct_product() {
        let a = sample(7, 5);
        let b = sample(5, 4);
        let diff = matmul(&a, &b) - &a * &b;
        assert!(frobenius(&diff) < 1e-12 * frobenius(&(&a * &b)));
    }

    #[test]
    fn svd_is_sorted_and_reconstructs() {
        let a = sample(6, 6);
        let d = svd(&a).unwrap();
        assert!(d.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let s = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            6,
            d.singular_values.iter().map(|&x| Complex64::new(x, 0.0)),
        ));
        let rec = &d.u * s * &d.v_t;
        assert!(frobenius(&(rec - &a)) < 1e-10 * frobenius(&a));
    }

    #[test]
    fn degenerate_spectrum_reconstructs() {
        // Unitary DFT matrix times a diagonal with repeated entries: singular values {2, 2, 1, 1, 0, 0}.
        let n = 6;
        let w = 2.0 * core::f64::consts::PI / n as f64;
        let f = CMatrix::from_fn(n, n, |i, j| Complex64::from_polar(1.0 / (n as f64).sqrt(), w * (i * j) as f64));
        let diag = [2.0, 2.0, 1.0, 1.0, 0.0, 0.0];
        let a = &f * CMatrix::from_fn(n, n, |i, j| if i == j { Complex64::new(diag[i], 0.0) } else { Complex64::new(0.0, 0.0) })
            * f.adjoint();
        let s = singular_values(&a).unwrap();
        for (x, y) in s.iter().zip(&diag) {
            assert!((x - y).abs() < 1e-12, "{s:?}");
        }
        let d = svd(&a).unwrap();
        let mut r1 = CMatrix::zeros(n, n);
        for k in 0..2 {
            r1 += d.u.column(k) * d.v_t.row(k) * Complex64::new(d.singular_values[k], 0.0);
        }
        let rest = singular_values(&(&a - r1)).unwrap();
        assert!((rest[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_agrees_with_svd() {
        let a = sample(8, 6);
        let s = singular_values(&a).unwrap();
        let p = power_norm(&a, 10_000, 3);
        assert!((p - s[0]).abs() < 1e-8 * s[0]);
    }
}

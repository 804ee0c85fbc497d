//! Direct kernels for the tiny complex matrices of the pipeline (at most 4x4).
//!
//! Everything here is sequential and allocation-light; the callers parallelize
//! across frequency bins instead.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Asymmetry (relative Frobenius norm of `m - m^H`) tolerated by [`eigh`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Reciprocal condition number below which solves and inverses are refused.
pub const RCOND_MIN: f64 = 1e-12;

const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn from_real(rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * cols);
        Self {
            rows,
            cols,
            data: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// A single column from its entries.
    pub fn column(values: &[Complex64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    /// Outer product `a b^H`.
    pub fn outer(a: &[Complex64], b: &[Complex64]) -> Self {
        Self::from_fn(a.len(), b.len(), |r, c| a[r] * b[c].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn col(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn row(&self, r: usize) -> Vec<Complex64> {
        self.data[r * self.cols..(r + 1) * self.cols].to_vec()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Self {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == ZERO {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self[(r, c)] * v[c]).sum())
            .collect()
    }

    pub fn add(&self, other: &ComplexMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Adds `v` to every diagonal entry.
    pub fn add_diagonal(&self, v: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += v;
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `||m - m^H||_F / ||m||_F`, zero for the zero matrix.
    pub fn hermitian_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let norm = self.frobenius();
        if norm == 0.0 {
            return 0.0;
        }
        self.sub(&self.adjoint()).frobenius() / norm
    }

    /// `(m + m^H) / 2`.
    pub fn symmetrized(&self) -> Self {
        self.add(&self.adjoint()).scale(0.5)
    }
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct Eigh {
    /// Descending.
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: ComplexMatrix,
}

impl Eigh {
    pub fn vector(&self, i: usize) -> Vec<Complex64> {
        self.vectors.col(i)
    }

    /// `max |lambda| / min |lambda|` reciprocal; zero for singular input.
    pub fn rcond(&self) -> f64 {
        let max = self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let min = self.values.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        if max == 0.0 {
            0.0
        } else {
            min / max
        }
    }
}

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
///
/// The input is symmetrized first; asymmetry above [`HERMITIAN_TOL`] is an
/// error.
pub fn eigh(m: &ComplexMatrix) -> Result<Eigh> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "eigh needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("eigh input"));
    }
    let asym = m.hermitian_asymmetry();
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    let n = m.rows;
    let mut a = m.symmetrized();
    for i in 0..n {
        a[(i, i)].im = 0.0;
    }
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= JACOBI_TOL * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                jacobi_rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(Eigh { values, vectors })
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let mut s = 0.0;
    for r in 0..a.rows {
        for c in 0..a.cols {
            if r != c {
                s += a[(r, c)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// One two-sided rotation zeroing `a[(p, q)]`. The unitary is a phase on
/// column `q` (making the pivot real) followed by a real Givens rotation.
fn jacobi_rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let phase = apq / mag; // e^{i alpha}
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let tau = (aqq - app) / (2.0 * mag);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let pc = phase.conj(); // e^{-i alpha}
    let n = a.rows;

    // A <- A G
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c - pc * akq * s;
        a[(k, q)] = akp * s + pc * akq * c;
    }
    // A <- G^H A
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c - phase * aqk * s;
        a[(q, k)] = apk * s + phase * aqk * c;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)].im = 0.0;
    a[(q, q)].im = 0.0;
    // V <- V G
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c - pc * vkq * s;
        v[(k, q)] = vkp * s + pc * vkq * c;
    }
}

/// Lower-triangular Cholesky factor `L` with `L L^H = m`.
pub fn cholesky(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "cholesky needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let n = m.rows;
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = d.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower(l: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let n = l.rows;
    assert_eq!(b.rows, n);
    let mut x = b.clone();
    for c in 0..b.cols {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Solves `a x = b` for Hermitian, numerically invertible `a`.
///
/// The reciprocal condition number is estimated from the eigenvalues; below
/// [`RCOND_MIN`] the solve is refused with [`Error::IllConditioned`] so that
/// callers can regularize and retry.
pub fn solve_hermitian(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() || a.rows != b.rows {
        return Err(Error::Shape(format!(
            "solve {}x{} against {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let e = eigh(a)?;
    let rcond = e.rcond();
    if rcond < RCOND_MIN {
        return Err(Error::IllConditioned { rcond });
    }
    Ok(lu_solve(&a.symmetrized(), b))
}

/// Gaussian elimination with partial pivoting. `a` must be nonsingular.
fn lu_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let n = a.rows;
    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].norm().total_cmp(&m[(j, col)].norm()).then(j.cmp(&i)))
            .unwrap_or(col);
        if pivot != col {
            for k in 0..n {
                let tmp = m[(col, k)];
                m[(col, k)] = m[(pivot, k)];
                m[(pivot, k)] = tmp;
            }
            for k in 0..x.cols {
                let tmp = x[(col, k)];
                x[(col, k)] = x[(pivot, k)];
                x[(pivot, k)] = tmp;
            }
        }
        let d = m[(col, col)];
        for r in col + 1..n {
            let factor = m[(r, col)] / d;
            if factor == ZERO {
                continue;
            }
            for k in col..n {
                let v = m[(col, k)];
                m[(r, k)] -= factor * v;
            }
            for k in 0..x.cols {
                let v = x[(col, k)];
                x[(r, k)] -= factor * v;
            }
        }
    }
    for k in 0..x.cols {
        for r in (0..n).rev() {
            let mut s = x[(r, k)];
            for c in r + 1..n {
                s -= m[(r, c)] * x[(c, k)];
            }
            x[(r, k)] = s / m[(r, r)];
        }
    }
    x
}

/// Pseudo-inverse with its condition estimate.
#[derive(Debug, Clone)]
pub struct Pinv {
    pub matrix: ComplexMatrix,
    /// 2-norm condition number of the input.
    pub condition: f64,
}

/// Moore-Penrose pseudo-inverse of a full-rank matrix via the normal
/// equations: `(m^H m)^{-1} m^H` for tall input, `m^H (m m^H)^{-1}` for wide.
pub fn pinv(m: &ComplexMatrix) -> Result<Pinv> {
    if !m.is_finite() {
        return Err(Error::NonFinite("pinv input"));
    }
    let tall = m.rows >= m.cols;
    let mh = m.adjoint();
    let gram = if tall { mh.matmul(m) } else { m.matmul(&mh) };
    let e = eigh(&gram)?;
    let rcond = e.rcond();
    let condition = if rcond > 0.0 {
        (1.0 / rcond).sqrt()
    } else {
        f64::INFINITY
    };
    if rcond < RCOND_MIN {
        return Err(Error::IllConditioned { rcond });
    }
    let matrix = if tall {
        lu_solve(&gram.symmetrized(), &mh)
    } else {
        lu_solve(&gram.symmetrized(), m).adjoint()
    };
    Ok(Pinv { matrix, condition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
        random_matrix(n, n, rng).symmetrized()
    }

    fn random_pd(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
        let a = random_matrix(n, n, rng);
        a.matmul(&a.adjoint()).add_diagonal(1e-3)
    }

    #[test]
    fn pinv_of_single_column() {
        let s3 = 3f64.sqrt();
        let d = ComplexMatrix::from_real(4, 1, &[1.0, s3, 0.0, 0.0]);
        let p = pinv(&d).unwrap();
        let expected = d.adjoint().scale(0.25);
        assert!(p.matrix.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn pinv_identity_and_orthogonal_columns() {
        let i3 = ComplexMatrix::identity(3);
        assert!(pinv(&i3).unwrap().matrix.max_abs_diff(&i3) < 1e-15);

        let s3 = 3f64.sqrt();
        // steering vectors at azimuth 0 and pi are not orthogonal; use W-free pair
        let m = ComplexMatrix::from_real(4, 2, &[1.0, 1.0, s3, -s3, 0.0, 0.0, 0.0, 0.0]);
        let p = pinv(&m).unwrap();
        let prod = p.matrix.matmul(&m);
        assert!(prod.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-10);
    }

    #[test]
    fn pinv_rank_deficient_is_reported() {
        let s3 = 3f64.sqrt();
        let m = ComplexMatrix::from_real(4, 2, &[1.0, 1.0, s3, s3, 0.0, 0.0, 0.0, 0.0]);
        match pinv(&m) {
            Err(Error::IllConditioned { rcond }) => assert!(rcond < RCOND_MIN),
            other => panic!("expected ill-conditioned error, got {other:?}"),
        }
    }

    #[test]
    fn pinv_moore_penrose_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = random_matrix(4, 3, &mut rng);
            let p = pinv(&m).unwrap().matrix;
            let mpm = m.matmul(&p).matmul(&m);
            assert!(mpm.max_abs_diff(&m) < 1e-10);
            let pmp = p.matmul(&m).matmul(&p);
            assert!(pmp.max_abs_diff(&p) < 1e-10);
            let mp = m.matmul(&p);
            assert!(mp.hermitian_asymmetry() < 1e-10);
            let pp = pinv(&p).unwrap().matrix;
            assert!(pp.max_abs_diff(&m) < 1e-8);
        }
    }

    #[test]
    fn cholesky_cases() {
        let i4 = ComplexMatrix::identity(4);
        assert_eq!(cholesky(&i4).unwrap(), i4);
        let l = cholesky(&ComplexMatrix::diag_real(&[4.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!(l, ComplexMatrix::diag_real(&[2.0, 1.0, 1.0, 1.0]));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let m = random_pd(4, &mut rng);
            let l = cholesky(&m).unwrap();
            for r in 0..4 {
                for c in r + 1..4 {
                    assert_eq!(l[(r, c)], ZERO);
                }
            }
            let rec = l.matmul(&l.adjoint());
            assert!(rec.max_abs_diff(&m) <= 1e-10 * m.frobenius());
        }
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let m = ComplexMatrix::diag_real(&[1.0, 2.0, -1.0, 1.0]);
        assert!(matches!(
            cholesky(&m),
            Err(Error::NotPositiveDefinite { pivot: 2 })
        ));
    }

    #[test]
    fn eigh_diagonal() {
        let e = eigh(&ComplexMatrix::diag_real(&[1.0, 3.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vector(0), vec![ZERO, ONE]);
        assert_eq!(e.vector(1), vec![ONE, ZERO]);
    }

    #[test]
    fn eigh_rank_one() {
        let s3 = 3f64.sqrt();
        let d = [c(1.0, 0.0), c(s3, 0.0), ZERO, ZERO];
        let m = ComplexMatrix::outer(&d, &d);
        let e = eigh(&m).unwrap();
        assert!((e.values[0] - 4.0).abs() < 1e-12);
        for v in &e.values[1..] {
            assert!(v.abs() < 1e-12);
        }
        // principal vector is d / 2 up to a unit phase
        let u = e.vector(0);
        let inner: Complex64 = u.iter().zip(&d).map(|(a, b)| a.conj() * b).sum();
        assert!((inner.norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let mut m = ComplexMatrix::identity(2);
        m[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(eigh(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eigh_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let m = random_hermitian(4, &mut rng);
            let e = eigh(&m).unwrap();
            let norm = m.frobenius();
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            let vh_v = e.vectors.adjoint().matmul(&e.vectors);
            assert!(vh_v.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-12);
            for i in 0..4 {
                let v = e.vector(i);
                let mv = m.mul_vec(&v);
                let err: f64 = mv
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| (a - b * e.values[i]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(err < 1e-8 * norm);
            }
            let rec = e
                .vectors
                .matmul(&ComplexMatrix::diag_real(&e.values))
                .matmul(&e.vectors.adjoint());
            assert!(rec.max_abs_diff(&m) < 1e-8);
        }
    }

    #[test]
    fn eigh_is_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_hermitian(4, &mut rng);
        let a = eigh(&m).unwrap();
        let b = eigh(&m).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn solve_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_matrix(4, 2, &mut rng);
        let i4 = ComplexMatrix::identity(4);
        assert!(solve_hermitian(&i4, &b).unwrap().max_abs_diff(&b) < 1e-15);
        let x = solve_hermitian(&i4.scale(2.0), &i4).unwrap();
        assert!(x.max_abs_diff(&i4.scale(0.5)) < 1e-15);

        for _ in 0..100 {
            let a = random_pd(4, &mut rng);
            let b = random_matrix(4, 1, &mut rng);
            let x = solve_hermitian(&a, &b).unwrap();
            let r = a.matmul(&x).sub(&b).frobenius() / b.frobenius();
            assert!(r < 1e-8);
        }
    }

    #[test]
    fn solve_refuses_singular() {
        let a = ComplexMatrix::diag_real(&[1.0, 0.0, 1.0, 1.0]);
        let b = ComplexMatrix::identity(4);
        assert!(matches!(
            solve_hermitian(&a, &b),
            Err(Error::IllConditioned { .. })
        ));
    }

    proptest! {
        #[test]
        fn jacobi_off_diagonal_vanishes(vals in proptest::collection::vec(-10.0f64..10.0, 32)) {
            let m = ComplexMatrix::from_fn(4, 4, |r, c| {
                let k = 2 * (r * 4 + c);
                Complex64::new(vals[k], vals[k + 1])
            })
            .symmetrized();
            let e = eigh(&m).unwrap();
            let d = e.vectors.adjoint().matmul(&m).matmul(&e.vectors);
            let off = off_diagonal_norm(&d);
            prop_assert!(off < 1e-12 * m.frobenius().max(1e-300) + 1e-300);
        }
    }
}

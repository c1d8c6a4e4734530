//! Dominant singular triplet of tall, narrow complex matrices.
//!
//! The Gram matrix `MᴴM` (cols × cols) is diagonalized with cyclic complex
//! Jacobi rotations; the left vector follows as `u = M v / σ`.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> ComplexMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::invalid(format!(
                "{rows}x{cols} matrix from {} entries",
                data.len()
            )));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex<T> {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex<T>) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<Complex<T>> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn column_norm(&self, c: usize) -> T {
        (0..self.rows)
            .map(|r| self.get(r, c).norm_sqr())
            .sum::<T>()
            .sqrt()
    }

    pub fn scale_column(&mut self, c: usize, s: Complex<T>) {
        for r in 0..self.rows {
            let i = r * self.cols + c;
            self.data[i] = self.data[i] * s;
        }
    }

    pub fn scale(&mut self, s: Complex<T>) {
        self.data.iter_mut().for_each(|v| *v = *v * s);
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|v| v.norm_sqr()).sum::<T>().sqrt()
    }

    /// `MᴴM`.
    pub fn gram(&self) -> ComplexMatrix<T> {
        let n = self.cols;
        let mut g = ComplexMatrix::zeros(n, n);
        for r in 0..self.rows {
            let row = &self.data[r * n..(r + 1) * n];
            for i in 0..n {
                let ci = row[i].conj();
                for j in i..n {
                    let idx = i * n + j;
                    g.data[idx] = g.data[idx] + ci * row[j];
                }
            }
        }
        for i in 0..n {
            let d = g.data[i * n + i];
            g.data[i * n + i] = Complex::new(d.re, T::zero());
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i].conj();
            }
        }
        g
    }

    /// `M x`.
    pub fn mul_vec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        (0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .fold(Complex::new(T::zero(), T::zero()), |acc, (m, v)| acc + *m * *v)
            })
            .collect()
    }
}

/// Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvector `k` stored in column
/// `k` of the returned matrix. Order follows the diagonal after convergence.
pub fn hermitian_eigen<T: Scalar>(a: &ComplexMatrix<T>) -> Result<(Vec<T>, ComplexMatrix<T>)> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::invalid(format!("{}x{} matrix is not square", a.rows, a.cols)));
    }
    let mut a = a.clone();
    let mut v = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, Complex::new(T::one(), T::zero()));
    }
    let total = a.frobenius_norm();
    let tol = T::epsilon() * total;
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).norm_sqr())
            .sum::<T>()
            .sqrt();
        if off <= tol || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                let mag = apq.norm();
                if mag <= T::min_positive_value() {
                    continue;
                }
                // Rotate the phase of column/row q so that a[p][q] becomes real.
                let phase = apq.conj() / mag;
                for r in 0..n {
                    a.set(r, q, a.get(r, q) * phase);
                }
                for r in 0..n {
                    a.set(q, r, a.get(q, r) * phase.conj());
                }
                v.scale_column(q, phase);

                let app = a.get(p, p).re;
                let aqq = a.get(q, q).re;
                let theta = (aqq - app) / (c::<T>(2.0) * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let cs = T::one() / (t * t + T::one()).sqrt();
                let sn = t * cs;
                for r in 0..n {
                    let arp = a.get(r, p);
                    let arq = a.get(r, q);
                    a.set(r, p, arp * cs - arq * sn);
                    a.set(r, q, arp * sn + arq * cs);
                }
                for r in 0..n {
                    let apr = a.get(p, r);
                    let aqr = a.get(q, r);
                    a.set(p, r, apr * cs - aqr * sn);
                    a.set(q, r, apr * sn + aqr * cs);
                }
                let zero = Complex::new(T::zero(), T::zero());
                a.set(p, q, zero);
                a.set(q, p, zero);
                a.set(p, p, Complex::new(a.get(p, p).re, T::zero()));
                a.set(q, q, Complex::new(a.get(q, q).re, T::zero()));
                for r in 0..n {
                    let vrp = v.get(r, p);
                    let vrq = v.get(r, q);
                    v.set(r, p, vrp * cs - vrq * sn);
                    v.set(r, q, vrp * sn + vrq * cs);
                }
            }
        }
    }
    let eig = (0..n).map(|i| a.get(i, i).re).collect();
    Ok((eig, v))
}

/// Largest singular value with its left/right vectors (`M v = σ u`).
#[derive(Debug, Clone, PartialEq)]
pub struct DominantSingular<T> {
    pub u: Vec<Complex<T>>,
    pub v: Vec<Complex<T>>,
    pub sigma: T,
    /// Set when σ₁ and σ₂ agree to 1e-12 relative, i.e. `u` is not unique.
    pub ambiguous: bool,
}

/// Dominant left singular vector with canonical phase (Σuᵢ real, non-negative).
pub fn dominant_left_singular_vector<T: Scalar>(m: &ComplexMatrix<T>) -> Result<DominantSingular<T>> {
    if m.rows < m.cols || m.cols == 0 {
        return Err(Error::invalid(format!(
            "expected a tall matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let (eig, vecs) = hermitian_eigen(&m.gram())?;
    let mut order: Vec<usize> = (0..eig.len()).collect();
    order.sort_by(|&i, &j| eig[j].partial_cmp(&eig[i]).unwrap_or(std::cmp::Ordering::Equal));
    let top = order[0];
    let lambda1 = eig[top].max(T::zero());
    if !(lambda1 > T::zero()) {
        return Err(Error::Degenerate("matrix has no nonzero singular value".into()));
    }
    let sigma1 = lambda1.sqrt();
    let ambiguous = order.len() > 1 && {
        let sigma2 = eig[order[1]].max(T::zero()).sqrt();
        (sigma1 - sigma2).abs() <= c::<T>(1e-12) * sigma1
    };

    let mut v = vecs.column(top);
    let mut u = m.mul_vec(&v);
    let unorm = u.iter().map(|x| x.norm_sqr()).sum::<T>().sqrt();
    u.iter_mut().for_each(|x| *x = *x / unorm);

    let rot = canonical_phase(&u);
    u.iter_mut().for_each(|x| *x = *x * rot);
    v.iter_mut().for_each(|x| *x = *x * rot);
    Ok(DominantSingular {
        u,
        v,
        sigma: unorm,
        ambiguous,
    })
}

/// Unit-modulus factor that makes Σuᵢ real and non-negative, or, when that
/// sum is tiny, makes the largest-magnitude entry real and positive.
fn canonical_phase<T: Scalar>(u: &[Complex<T>]) -> Complex<T> {
    let sum = u
        .iter()
        .fold(Complex::new(T::zero(), T::zero()), |acc, x| acc + *x);
    let mag = sum.norm();
    if mag >= c::<T>(1e-9) {
        return sum.conj() / mag;
    }
    let mut best = 0;
    for (i, x) in u.iter().enumerate() {
        if x.norm_sqr() > u[best].norm_sqr() {
            best = i;
        }
    }
    let b = u[best];
    if b.norm() > T::zero() {
        b.conj() / b.norm()
    } else {
        Complex::new(T::one(), T::zero())
    }
}

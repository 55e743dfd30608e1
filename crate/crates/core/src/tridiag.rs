//! Complex tridiagonal matrices and their eigenproblem.
//!
//! Every operator in this crate is a three-point stencil, so the dense
//! `n x n` realization is tridiagonal. Eigenvalues come from implicit QL
//! sweeps on the complex-symmetric matrix obtained by a diagonal similarity;
//! eigenvectors come from inverse iteration on the original matrix.

use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_QL_ITERATIONS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    /// `lower[i] = A[i + 1][i]`
    pub lower: Vec<Complex64>,
    pub diag: Vec<Complex64>,
    /// `upper[i] = A[i][i + 1]`
    pub upper: Vec<Complex64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        let off = n.saturating_sub(1);
        Tridiagonal {
            lower: vec![Complex64::ZERO; off],
            diag: vec![Complex64::ZERO; n],
            upper: vec![Complex64::ZERO; off],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if i == j {
            self.diag[i]
        } else if j == i + 1 {
            self.upper[i]
        } else if i == j + 1 {
            self.lower[j]
        } else {
            Complex64::ZERO
        }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    acc += self.upper[i] * x[i + 1];
                }
                acc
            })
            .collect()
    }

    /// Principal submatrix on rows/columns `start..end`.
    pub fn block(&self, start: usize, end: usize) -> Tridiagonal {
        Tridiagonal {
            lower: self.lower[start..end - 1].to_vec(),
            diag: self.diag[start..end].to_vec(),
            upper: self.upper[start..end - 1].to_vec(),
        }
    }

    fn max_abs(&self) -> f64 {
        self.diag.iter().chain(&self.lower).chain(&self.upper).map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// All eigenvalues, unordered.
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        let n = self.dim();
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut d = self.diag.clone();
        // Off-diagonal of the complex-symmetric similar matrix: e_i^2 = A[i][i+1] A[i+1][i].
        let mut e: Vec<Complex64> = self.upper.iter().zip(&self.lower).map(|(u, l)| (u * l).sqrt()).collect();
        e.push(Complex64::ZERO);
        symmetric_ql(&mut d, &mut e)?;
        Ok(d)
    }

    /// Eigenvector for a (computed) eigenvalue by inverse iteration.
    pub fn eigenvector(&self, lambda: Complex64) -> Result<Vec<Complex64>> {
        let n = self.dim();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let lu = ShiftedLu::factor(self, lambda, scale);
        // Deterministic start vector with no special symmetry.
        let mut v: Vec<Complex64> = (0..n)
            .map(|i| {
                let t = (i as f64 + 1.0) * 0.754_877_666;
                Complex64::new(1.0 + 0.5 * (t * 3.1).sin(), 0.3 * (t * 1.7).cos())
            })
            .collect();
        for _ in 0..3 {
            lu.solve_in_place(&mut v);
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::Eigensolver("inverse iteration diverged".into()));
            }
            v.iter_mut().for_each(|z| *z /= norm);
        }
        Ok(v)
    }
}

/// Implicit QL on a complex-symmetric tridiagonal matrix. On return `d` holds
/// the eigenvalues. `e[i]` couples `i` and `i + 1`; `e[n - 1]` is workspace.
fn symmetric_ql(d: &mut [Complex64], e: &mut [Complex64]) -> Result<()> {
    let n = d.len();
    let one = Complex64::new(1.0, 0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].norm() + d[m + 1].norm();
                if e[m].norm() + dd == dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITERATIONS {
                return Err(Error::Eigensolver(format!("QL did not converge for eigenvalue {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let r = (g * g + one).sqrt();
            let denom = if (g + r).norm() >= (g - r).norm() { g + r } else { g - r };
            g = d[m] - d[l] + e[l] / denom;
            let (mut s, mut c, mut p) = (one, one, Complex64::ZERO);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                let r = (f * f + g * g).sqrt();
                e[i + 1] = r;
                if r.norm() <= f64::MIN_POSITIVE * (f.norm() + g.norm() + 1.0) {
                    d[i + 1] -= p;
                    e[m] = Complex64::ZERO;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                let r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = Complex64::ZERO;
        }
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigensolver("QL produced non-finite eigenvalues".into()));
    }
    Ok(())
}

/// LU factorization of `A - shift I` with partial pivoting (LAPACK `gttrf` layout).
struct ShiftedLu {
    dl: Vec<Complex64>,
    d: Vec<Complex64>,
    du: Vec<Complex64>,
    du2: Vec<Complex64>,
    swapped: Vec<bool>,
}

impl ShiftedLu {
    fn factor(a: &Tridiagonal, shift: Complex64, scale: f64) -> Self {
        let n = a.dim();
        let mut d: Vec<Complex64> = a.diag.iter().map(|v| v - shift).collect();
        let mut dl = a.lower.clone();
        let mut du = a.upper.clone();
        let mut du2 = vec![Complex64::ZERO; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].norm() >= dl[i].norm() {
                if d[i].norm() == 0.0 {
                    d[i] = Complex64::new(f64::EPSILON * scale, 0.0);
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if let Some(last) = d.last_mut() {
            if last.norm() < f64::EPSILON * scale {
                *last = Complex64::new(f64::EPSILON * scale, 0.0);
            }
        }
        ShiftedLu { dl, d, du, du2, swapped }
    }

    fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                b.swap(i, i + 1);
            }
            let bi = b[i];
            b[i + 1] -= self.dl[i] * bi;
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            if i + 1 < n {
                acc -= self.du[i] * b[i + 1];
            }
            if i + 2 < n {
                acc -= self.du2[i] * b[i + 2];
            }
            b[i] = acc / self.d[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn random_tridiagonal(n: usize, seed: u64) -> Tridiagonal {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut t = Tridiagonal::zeros(n);
        for i in 0..n {
            t.diag[i] = Complex64::new(4.0 * next() + i as f64, 0.5 * next());
        }
        for i in 0..n - 1 {
            t.upper[i] = Complex64::new(1.0 + next(), 0.3 * next());
            t.lower[i] = Complex64::new(1.0 + next(), 0.3 * next());
        }
        t
    }

    fn dense(t: &Tridiagonal) -> DMatrix<Complex64> {
        DMatrix::from_fn(t.dim(), t.dim(), |i, j| t.get(i, j))
    }

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn eigenvalues_match_dense_schur() {
        for seed in 1..6 {
            let t = random_tridiagonal(24, seed);
            let ours = sorted(t.eigenvalues().unwrap());
            let reference =
                sorted(nalgebra::Schur::new(dense(&t)).eigenvalues().expect("complex schur").iter().copied().collect());
            for (a, b) in ours.iter().zip(&reference) {
                assert!((a - b).norm() < 1e-9 * (1.0 + b.norm()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn real_symmetric_input_gives_real_spectrum() {
        let n = 50;
        let mut t = Tridiagonal::zeros(n);
        for i in 0..n {
            t.diag[i] = Complex64::new(2.0, 0.0);
        }
        for i in 0..n - 1 {
            t.upper[i] = Complex64::new(-1.0, 0.0);
            t.lower[i] = Complex64::new(-1.0, 0.0);
        }
        let ev = sorted(t.eigenvalues().unwrap());
        for (k, v) in ev.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!(v.im.abs() < 1e-12);
            assert!((v.re - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_iteration_gives_small_residual() {
        let t = random_tridiagonal(40, 9);
        for lambda in t.eigenvalues().unwrap() {
            let v = t.eigenvector(lambda).unwrap();
            let av = t.matvec(&v);
            let res: f64 = av.iter().zip(&v).map(|(a, x)| (a - lambda * x).norm_sqr()).sum::<f64>().sqrt();
            assert!(res < 1e-10 * (1.0 + lambda.norm()), "residual {res} for {lambda}");
        }
    }

    #[test]
    fn handles_decoupled_blocks() {
        let mut t = random_tridiagonal(10, 3);
        t.upper[4] = Complex64::ZERO;
        t.lower[4] = Complex64::ZERO;
        let ours = sorted(t.eigenvalues().unwrap());
        let mut parts = t.block(0, 5).eigenvalues().unwrap();
        parts.extend(t.block(5, 10).eigenvalues().unwrap());
        for (a, b) in ours.iter().zip(&sorted(parts)) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}

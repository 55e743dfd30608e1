//! The positive semidefinite operator `LL†`, its spectral square root, the
//! orthogonal basis `Phi_n = (LL†)^{1/2} xi_n` and the Hermitian operator
//! `h0 = sum_n E_n |Phi_n><Phi_n| / ||Phi_n||²` built from it.

use std::cmp::Ordering;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{differentiate, inner_product, Grid, GridFunction};
use crate::operator::{assemble, collinearity, BoundaryCondition, DiscreteOperator, Spectrum};
use crate::susy::{SusyData, BOUNDARY_EXCLUSION};
use crate::tridiag::Tridiagonal;

/// Metric eigenvalues with `|mu| <= CLAMP_RATIO * mu_max` are set to zero.
pub const CLAMP_RATIO: f64 = 1e-8;
/// Largest `lambda_0 / lambda_1` accepted as an isolated kernel.
pub const KERNEL_RATIO: f64 = 1e-6;
/// Largest `|Im mu| / (1 + |mu|)` accepted for a metric eigenvalue.
pub const IMAG_RATIO: f64 = 1e-8;
/// Largest `|<Xi_0|f>| / ||f||` accepted by the pseudo-inverse.
pub const KERNEL_COMPONENT_TOL: f64 = 1e-6;
/// Two eigenvectors whose collinearity exceeds `1 - DEFECT_TOL` are treated as one.
pub const DEFECT_TOL: f64 = 1e-6;

/// `LL† = -d²/dx² + (W - W*) d/dx + |W|² - (W*)'` with `f' + W* f = 0` at both ends.
pub fn assemble_metric(s: &SusyData) -> Result<DiscreteOperator> {
    let q = s.w.map(|w| w - w.conj());
    let dwc = differentiate(&s.w.conj(), 1)?;
    let potential = s.w.zip_with(&dwc, |w, dwc| w * w.conj() - dwc)?;
    assemble(
        &s.grid,
        &q,
        &potential,
        BoundaryCondition::Robin(s.w_left.conj()),
        BoundaryCondition::Robin(s.w_right.conj()),
    )
}

#[derive(Debug, Clone)]
pub struct MetricDecomposition {
    pub grid: Arc<Grid>,
    /// `lambda_k >= 0`, ascending, `k = 0..=K`.
    pub lambdas: Vec<f64>,
    /// Orthonormal eigenfunctions `Xi_k`.
    pub xis: Vec<GridFunction>,
    pub kernel_index: usize,
    /// Eigenvalues `lambda_k²` as returned by the eigensolver, before clamping.
    pub raw_eigenvalues: Vec<Complex64>,
    pub clamp_threshold: f64,
}

impl MetricDecomposition {
    /// Truncation rank: the highest retained index.
    pub fn rank(&self) -> usize {
        self.lambdas.len() - 1
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        f.check_grid(&self.xis[0])
    }

    fn expand(&self, f: &GridFunction, coeff: impl Fn(usize) -> Option<f64>) -> Result<GridFunction> {
        self.check(f)?;
        let mut out = vec![Complex64::ZERO; f.len()];
        for (k, xi) in self.xis.iter().enumerate() {
            let Some(c) = coeff(k) else { continue };
            let a = inner_product(xi, f)? * c;
            for (o, x) in out.iter_mut().zip(xi.values()) {
                *o += a * x;
            }
        }
        GridFunction::new(&self.grid, out)
    }
}

/// Diagonalizes `LL†` keeping `K + 1` pairs.
pub fn decompose_metric(op: &DiscreteOperator, k: usize) -> Result<MetricDecomposition> {
    let spec = op.eigensolve(k + 1)?;
    let raw: Vec<Complex64> = spec.values().collect();
    let mu_max = raw.iter().map(|m| m.re).fold(0.0, f64::max);
    let threshold = CLAMP_RATIO * mu_max;

    let mut lambdas = Vec::with_capacity(raw.len());
    for mu in &raw {
        if mu.im.abs() > IMAG_RATIO * (1.0 + mu.norm()) {
            return Err(Error::NonRealEigenvalue { re: mu.re, im: mu.im });
        }
        if mu.re < -threshold {
            return Err(Error::NegativeEigenvalue { value: mu.re, threshold });
        }
        lambdas.push(if mu.re.abs() <= threshold { 0.0 } else { mu.re.sqrt() });
    }
    if lambdas.len() < 2 || lambdas[0].partial_cmp(&(KERNEL_RATIO * lambdas[1])) != Some(Ordering::Less) {
        return Err(Error::KernelMissing { lambda0: lambdas[0], lambda1: lambdas.get(1).copied().unwrap_or(0.0) });
    }

    let mut xis: Vec<GridFunction> = Vec::with_capacity(spec.len());
    for pair in spec.pairs {
        let mut v = pair.function;
        for q in &xis {
            let c = inner_product(q, &v)?;
            v = v.axpy(-c, q)?;
        }
        let v = v.normalized().ok_or_else(|| Error::Eigensolver("metric eigenvectors are dependent".into()))?;
        xis.push(v);
    }
    Ok(MetricDecomposition {
        grid: Arc::clone(op.grid()),
        lambdas,
        xis,
        kernel_index: 0,
        raw_eigenvalues: raw,
        clamp_threshold: threshold,
    })
}

/// `sum_k lambda_k <Xi_k|f> Xi_k`
pub fn sqrt_apply(dec: &MetricDecomposition, f: &GridFunction) -> Result<GridFunction> {
    dec.expand(f, |k| (dec.lambdas[k] != 0.0).then_some(dec.lambdas[k]))
}

/// `sum_{k >= 1} <Xi_k|f> Xi_k / lambda_k`; `f` must be orthogonal to the kernel.
pub fn pseudo_inv_sqrt_apply(dec: &MetricDecomposition, f: &GridFunction) -> Result<GridFunction> {
    dec.check(f)?;
    let norm = f.norm();
    let component = inner_product(&dec.xis[dec.kernel_index], f)?.norm();
    if component > KERNEL_COMPONENT_TOL * norm {
        return Err(Error::KernelComponent { component: component / norm });
    }
    dec.expand(f, |k| (k != dec.kernel_index).then(|| 1.0 / dec.lambdas[k]))
}

/// Fails with `DefectiveSpectrum` if two eigenvectors are numerically parallel.
pub fn check_nondefective(spec: &Spectrum) -> Result<()> {
    for i in 0..spec.len() {
        for j in i + 1..spec.len() {
            let overlap = collinearity(&spec.pairs[i].function, &spec.pairs[j].function)?;
            if overlap > 1.0 - DEFECT_TOL {
                return Err(Error::DefectiveSpectrum { first: i, second: j, overlap });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct EquivalentBasis {
    /// `Phi_0 = Xi_0`, `Phi_n = (LL†)^{1/2} xi_n`.
    pub phis: Vec<GridFunction>,
    /// `E_0 = alpha`, then the eigenvalues of `H†`.
    pub energies: Vec<f64>,
    pub norms: Vec<f64>,
    /// The `xi_n` used, `n >= 1`.
    pub xis: Vec<GridFunction>,
}

impl EquivalentBasis {
    pub fn unit(&self, n: usize) -> GridFunction {
        self.phis[n].scale(Complex64::new(1.0 / self.norms[n], 0.0))
    }

    /// Gram matrix of the unit-normalized `Phi_n`.
    pub fn gram(&self) -> Result<DMatrix<Complex64>> {
        let units: Vec<_> = (0..self.phis.len()).map(|n| self.unit(n)).collect();
        let m = units.len();
        let mut g = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                g[(i, j)] = inner_product(&units[i], &units[j])?;
            }
        }
        Ok(g)
    }

    /// Largest off-diagonal Gram entry in modulus.
    pub fn max_offdiag(&self) -> Result<f64> {
        let g = self.gram()?;
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                if i != j {
                    worst = worst.max(g[(i, j)].norm());
                }
            }
        }
        Ok(worst)
    }
}

/// `xi_spectrum` is the spectrum of `H†` without the `alpha` level.
pub fn build_equivalent_basis(
    dec: &MetricDecomposition,
    xi_spectrum: &Spectrum,
    alpha: f64,
) -> Result<EquivalentBasis> {
    check_nondefective(xi_spectrum)?;
    for e in xi_spectrum.values() {
        if e.im.abs() > IMAG_RATIO * (1.0 + e.norm()) {
            return Err(Error::NonRealEigenvalue { re: e.re, im: e.im });
        }
    }
    let mapped: Vec<GridFunction> =
        xi_spectrum.pairs.par_iter().map(|p| sqrt_apply(dec, &p.function)).collect::<Result<_>>()?;

    let mut phis = vec![dec.xis[dec.kernel_index].clone()];
    phis.extend(mapped);
    let norms: Vec<f64> = phis.iter().map(GridFunction::norm).collect();
    if let Some(n) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::KernelComponent { component: n as f64 });
    }
    let mut energies = vec![alpha];
    energies.extend(xi_spectrum.values().map(|e| e.re));
    Ok(EquivalentBasis { phis, energies, norms, xis: xi_spectrum.pairs.iter().map(|p| p.function.clone()).collect() })
}

/// Finite-rank operator `sum_n E_n |v_n><v_n|` with unit `v_n`, acting through the
/// grid inner product.
#[derive(Debug, Clone)]
pub struct SpectralOperator {
    pub grid: Arc<Grid>,
    pub energies: Vec<f64>,
    pub modes: Vec<GridFunction>,
}

pub fn reconstruct_h0(basis: &EquivalentBasis) -> SpectralOperator {
    SpectralOperator {
        grid: Arc::clone(basis.phis[0].grid()),
        energies: basis.energies.clone(),
        modes: (0..basis.phis.len()).map(|n| basis.unit(n)).collect(),
    }
}

impl SpectralOperator {
    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        f.check_grid(&self.modes[0])?;
        let mut out = vec![Complex64::ZERO; f.len()];
        for (e, v) in self.energies.iter().zip(&self.modes) {
            let c = inner_product(v, f)? * *e;
            for (o, x) in out.iter_mut().zip(v.values()) {
                *o += c * x;
            }
        }
        GridFunction::new(&self.grid, out)
    }

    /// The `n x n` matrix whose action on samples equals [`Self::apply`].
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.grid.n_points();
        let w = self.grid.weights();
        DMatrix::from_fn(n, n, |i, j| {
            self.energies.iter().zip(&self.modes).map(|(e, v)| *e * v.values()[i] * v.values()[j].conj() * w[j]).sum()
        })
    }

    /// `||A - A^H||_F / ||A||_F` for `A = W^{1/2} M W^{-1/2}`, the matrix in the
    /// orthonormal frame of the quadrature inner product.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.grid.n_points();
        let sw: Vec<f64> = self.grid.weights().iter().map(|w| w.sqrt()).collect();
        let entry = |i: usize, j: usize| -> Complex64 {
            self.energies
                .iter()
                .zip(&self.modes)
                .map(|(e, v)| *e * v.values()[i] * v.values()[j].conj())
                .sum::<Complex64>()
                * (sw[i] * sw[j])
        };
        let rows: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = (0.0, 0.0);
                for j in 0..n {
                    let a = entry(i, j);
                    acc.0 += (a - entry(j, i).conj()).norm_sqr();
                    acc.1 += a.norm_sqr();
                }
                acc
            })
            .collect();
        // Sequential so the result does not depend on the thread count.
        let (num, den) = rows.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        if den == 0.0 {
            0.0
        } else {
            (num / den).sqrt()
        }
    }

    /// Eigenvalues of the operator restricted to the span of its modes, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let m = self.modes.len();
        let mut s = DMatrix::<Complex64>::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                s[(i, j)] = inner_product(&self.modes[i], &self.modes[j])?;
            }
        }
        let e = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            m,
            self.energies.iter().map(|&v| Complex64::new(v, 0.0)),
        ));
        // <v_i| h0 v_j> = sum_k S_ik E_k S_kj
        let a = &s * e * &s;
        let chol = nalgebra::Cholesky::new(s.clone())
            .ok_or_else(|| Error::Eigensolver("mode Gram matrix is not positive definite".into()))?;
        let l = chol.l();
        let l_inv = l.clone().try_inverse().ok_or_else(|| Error::Eigensolver("singular Cholesky factor".into()))?;
        let c = &l_inv * a * l_inv.adjoint();
        let c = (&c + c.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }
}

/// Where the reference levels for `r_eig` come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// `(pi n / d)²`, exact for a vanishing potential.
    Exact,
    /// Dirichlet eigenvalues of the discretized `h`.
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub r_hlld: f64,
    pub r_map: f64,
    pub r_herm_h01: f64,
    pub r_eig: f64,
    pub r_herm_h0: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { r_hlld: 1e-3, r_map: 1e-3, r_herm_h01: 1e-3, r_eig: 1e-3, r_herm_h0: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    #[serde(rename = "r_HLLd")]
    pub r_hlld: f64,
    /// `r_HLLd` with the boundary rows included.
    #[serde(rename = "r_HLLd_boundary")]
    pub r_hlld_boundary: f64,
    pub r_map: f64,
    pub r_herm_h01: f64,
    pub r_eig: f64,
    pub r_eig_reference: ReferenceKind,
    /// `|E_0(h0) - alpha| / alpha`
    pub r_alpha: f64,
    pub r_herm_h0: f64,
    pub gram_max_offdiag: f64,
    /// `|| (LL†)^{1/2} Phi_n || / ||phi_n||` for `n >= 1`.
    pub map_scales: Vec<f64>,
    pub h0_eigenvalues: Vec<f64>,
    #[serde(rename = "K")]
    pub k: usize,
    pub n_points: usize,
    pub tolerances: Tolerances,
    pub pass: bool,
}

/// Everything [`verify_equivalence`] compares, all built from one `SusyData`.
pub struct EquivalenceInputs<'a> {
    pub susy: &'a SusyData,
    pub partner: &'a DiscreteOperator,
    pub partner_adjoint: &'a DiscreteOperator,
    pub metric: &'a DiscreteOperator,
    pub decomposition: &'a MetricDecomposition,
    pub basis: &'a EquivalentBasis,
    /// Eigenpairs of `H` without the `alpha` level, matched in order to `basis.xis`.
    pub phi_spectrum: &'a Spectrum,
    /// Levels of `h`, `n = 1..`.
    pub reference: &'a [f64],
    pub reference_kind: ReferenceKind,
}

/// Row `i` of a banded matrix: entries at columns `i - 2 ..= i + 2`.
type BandRow = [Complex64; 5];

fn band_product(a: &Tridiagonal, b: &Tridiagonal) -> Vec<BandRow> {
    let n = a.dim();
    let mut out = vec![[Complex64::ZERO; 5]; n];
    for (i, row) in out.iter_mut().enumerate() {
        for k in i.saturating_sub(1)..(i + 2).min(n) {
            let aik = a.get(i, k);
            for j in k.saturating_sub(1)..(k + 2).min(n) {
                row[j + 2 - i] += aik * b.get(k, j);
            }
        }
    }
    out
}

/// `||(H M - M H†) f||` over rows `rows`, with the commutator formed entrywise.
fn commutator_norm(c: &[BandRow], f: &GridFunction, rows: std::ops::Range<usize>) -> f64 {
    let n = c.len();
    let w = f.grid().weights();
    let v = f.values();
    rows.map(|i| {
        let mut acc = Complex64::ZERO;
        for (o, cij) in c[i].iter().enumerate() {
            if let Some(j) = (i + o).checked_sub(2).filter(|&j| j < n) {
                acc += cij * v[j];
            }
        }
        w[i] * acc.norm_sqr()
    })
    .sum::<f64>()
    .sqrt()
}

pub fn verify_equivalence(inp: &EquivalenceInputs<'_>, tol: &Tolerances) -> Result<VerificationReport> {
    let n = inp.susy.grid.n_points();
    let basis = inp.basis;
    let dec = inp.decomposition;

    let hm = band_product(inp.partner.matrix(), inp.metric.matrix());
    let mh = band_product(inp.metric.matrix(), inp.partner_adjoint.matrix());
    let comm: Vec<BandRow> = hm.iter().zip(&mh).map(|(a, b)| std::array::from_fn(|o| a[o] - b[o])).collect();
    let xi0 = &dec.xis[dec.kernel_index];
    let (mut r_hlld, mut r_hlld_boundary) = (0.0f64, 0.0f64);
    for xi in std::iter::once(xi0).chain(&basis.xis) {
        let norm = xi.norm();
        r_hlld = r_hlld.max(commutator_norm(&comm, xi, BOUNDARY_EXCLUSION..n - BOUNDARY_EXCLUSION) / norm);
        r_hlld_boundary = r_hlld_boundary.max(commutator_norm(&comm, xi, 0..n) / norm);
    }

    let mut r_map = 0.0f64;
    let mut map_scales = Vec::new();
    for (idx, pair) in inp.phi_spectrum.pairs.iter().enumerate().take(basis.xis.len()) {
        let image = sqrt_apply(dec, &basis.phis[idx + 1])?;
        r_map = r_map.max(1.0 - collinearity(&pair.function, &image)?);
        map_scales.push(image.norm() / pair.function.norm());
    }

    let m = basis.xis.len();
    let mut g = DMatrix::<Complex64>::zeros(m, m);
    let images: Vec<GridFunction> = (0..m)
        .into_par_iter()
        .map(|j| {
            let hx = inp.partner_adjoint.apply(&basis.xis[j])?;
            sqrt_apply(dec, &hx.scale(Complex64::new(1.0 / basis.norms[j + 1], 0.0)))
        })
        .collect::<Result<_>>()?;
    for i in 0..m {
        let unit = basis.unit(i + 1);
        for j in 0..m {
            g[(i, j)] = inner_product(&unit, &images[j])?;
        }
    }
    let r_herm_h01 = (&g - g.adjoint()).norm() / g.norm();

    let h0 = reconstruct_h0(basis);
    let r_herm_h0 = h0.hermiticity_residual();
    let mut h0_eigenvalues = h0.eigenvalues()?;
    let alpha = inp.susy.alpha;
    let k_alpha = (0..h0_eigenvalues.len())
        .min_by(|&i, &j| (h0_eigenvalues[i] - alpha).abs().total_cmp(&(h0_eigenvalues[j] - alpha).abs()))
        .unwrap_or(0);
    let r_alpha = (h0_eigenvalues[k_alpha] - alpha).abs() / alpha.abs().max(f64::MIN_POSITIVE);
    let rest: Vec<f64> = h0_eigenvalues.iter().enumerate().filter(|&(i, _)| i != k_alpha).map(|(_, v)| *v).collect();
    let r_eig = rest.iter().zip(inp.reference).map(|(e, r)| (e - r).abs() / r.abs()).fold(0.0, f64::max);
    h0_eigenvalues.sort_by(f64::total_cmp);

    let pass = r_hlld < tol.r_hlld
        && r_map < tol.r_map
        && r_herm_h01 < tol.r_herm_h01
        && r_eig < tol.r_eig
        && r_herm_h0 < tol.r_herm_h0;
    Ok(VerificationReport {
        r_hlld,
        r_hlld_boundary,
        r_map,
        r_herm_h01,
        r_eig,
        r_eig_reference: inp.reference_kind,
        r_alpha,
        r_herm_h0,
        gram_max_offdiag: basis.max_offdiag()?,
        map_scales,
        h0_eigenvalues,
        k: dec.rank(),
        n_points: n,
        tolerances: *tol,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::susy::{build_susy, partner_operator, SusyOptions, TransformationFunction};
    use std::f64::consts::PI;

    const A: f64 = 1.3;

    struct Pipeline {
        grid: Arc<Grid>,
        s: SusyData,
        partner: DiscreteOperator,
        partner_adj: DiscreteOperator,
        metric: DiscreteOperator,
        dec: MetricDecomposition,
        phi: Spectrum,
        xi: Spectrum,
    }

    fn pipeline(n: usize, k: usize) -> Pipeline {
        let grid = Grid::new(1.0, n).unwrap();
        let z = grid.zeros();
        let h = assemble(&grid, &z, &z, BoundaryCondition::Dirichlet, BoundaryCondition::Dirichlet).unwrap();
        let h_spec = h.eigensolve(8).unwrap();
        let t = TransformationFunction::Exp { a: A }.realize(&grid).unwrap();
        let s = build_susy(&grid, &z, &t, &h_spec, &SusyOptions::default()).unwrap();
        let partner = partner_operator(&s).unwrap();
        let partner_adj = partner.adjoint().unwrap();
        let metric = assemble_metric(&s).unwrap();
        let dec = decompose_metric(&metric, k).unwrap();
        let target = Complex64::new(A * A, 0.0);
        let (_, phi) = partner.eigensolve(9).unwrap().split_nearest(target).unwrap();
        let (_, xi) = partner_adj.eigensolve(9).unwrap().split_nearest(target).unwrap();
        Pipeline { grid, s, partner, partner_adj, metric, dec, phi, xi }
    }

    #[test]
    fn metric_coefficients_for_constant_superpotential() {
        let p = pipeline(401, 40);
        let ia = Complex64::new(0.0, A);
        assert!(p.metric.first_order_coeff().values().iter().all(|q| (q - 2.0 * ia).norm() < 1e-9));
        assert!(p.metric.potential().values().iter().all(|v| (v - A * A).norm() < 1e-9));
        assert_eq!(p.metric.bc_left(), BoundaryCondition::Robin(p.s.w_left.conj()));
        assert!((p.s.w_left.conj() + ia).norm() < 1e-12);
    }

    #[test]
    fn metric_matches_composition_away_from_boundary() {
        let error = |n: usize| {
            let p = pipeline(n, 20);
            let f = p.grid.sample(|x| Complex64::new((2.0 * x).sin() + x * x, 0.5 * (3.0 * x).cos()));
            let direct = p.metric.apply(&f).unwrap();
            let composed = crate::susy::apply_l(&p.s, &crate::susy::apply_ldag(&p.s, &f).unwrap()).unwrap();
            crate::susy::interior_norm(&direct.axpy(-Complex64::ONE, &composed).unwrap()) / f.norm()
        };
        let (coarse, fine) = (error(401), error(801));
        assert!(coarse < 1e-2, "{coarse}");
        assert!((3.0..5.0).contains(&(coarse / fine)), "{coarse} {fine}");
    }

    #[test]
    fn metric_spectrum_and_kernel() {
        let p = pipeline(2001, 200);
        assert_eq!(p.dec.lambdas.len(), 201);
        assert_eq!(p.dec.lambdas[0], 0.0);
        assert!(p.dec.raw_eigenvalues[0].norm() < KERNEL_RATIO * p.dec.raw_eigenvalues[1].norm());
        for n in 1..=8 {
            let exact = PI * n as f64;
            assert!((p.dec.lambdas[n] - exact).abs() / exact < 1e-4, "n = {n}");
        }
        let xi0 = p.grid.sample(|x| Complex64::new(0.0, A * x).exp());
        assert!(collinearity(&p.dec.xis[0], &xi0).unwrap() > 1.0 - 1e-6);
        let inv_u_conj = p.s.u.map(|u| (1.0 / u).conj());
        assert!(collinearity(&p.dec.xis[0], &inv_u_conj).unwrap() > 1.0 - 1e-6);
        let xi3 = p.grid.sample(|x| Complex64::new(0.0, A * x).exp() * (3.0 * PI * x).cos());
        assert!(collinearity(&p.dec.xis[3], &xi3).unwrap() > 1.0 - 1e-6);
        let r = p.metric.residual(&xi0, Complex64::ZERO).unwrap();
        assert!(r < 1e-6 * p.dec.lambdas[1].powi(2) * 1e3, "{r}");
    }

    #[test]
    fn xis_are_orthonormal() {
        let p = pipeline(1001, 100);
        for i in 0..p.dec.xis.len() {
            for j in 0..=i {
                let g = inner_product(&p.dec.xis[i], &p.dec.xis[j]).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - expect).norm() < 1e-8, "({i}, {j}): {g}");
            }
        }
    }

    #[test]
    fn square_root_identities() {
        let p = pipeline(2001, 200);
        let dec = &p.dec;
        for j in [1, 4, 9] {
            let out = sqrt_apply(dec, &dec.xis[j]).unwrap();
            let err = out.axpy(Complex64::new(-dec.lambdas[j], 0.0), &dec.xis[j]).unwrap();
            assert!(err.norm() < 1e-8 * dec.lambdas[j]);

            let twice = sqrt_apply(dec, &out).unwrap();
            let direct = p.metric.apply(&dec.xis[j]).unwrap();
            let rel = twice.axpy(-Complex64::ONE, &direct).unwrap().norm() / direct.norm();
            // Gram-Schmidt moves Xi_j off the raw eigenvector by the quadrature
            // non-orthogonality of the raw vectors, O(h²).
            assert!(rel < 5e-6, "j = {j}: {rel}");

            let inv = pseudo_inv_sqrt_apply(dec, &dec.xis[j]).unwrap();
            let err = inv.axpy(Complex64::new(-1.0 / dec.lambdas[j], 0.0), &dec.xis[j]).unwrap();
            assert!(err.norm() < 1e-8 / dec.lambdas[j]);
        }
        assert!(sqrt_apply(dec, &dec.xis[0]).unwrap().norm() < 1e-6);
        assert!(matches!(pseudo_inv_sqrt_apply(dec, &dec.xis[0]), Err(Error::KernelComponent { .. })));

        let f = p.grid.sample(|x| Complex64::new((PI * x).cos(), x));
        let round = pseudo_inv_sqrt_apply(dec, &sqrt_apply(dec, &f).unwrap()).unwrap();
        let c0 = inner_product(&dec.xis[0], &f).unwrap();
        let projected = round.axpy(c0, &dec.xis[0]).unwrap();
        // The round trip reproduces f projected onto the retained span.
        let in_span = dec.expand(&f, |_| Some(1.0)).unwrap();
        assert!(projected.axpy(-Complex64::ONE, &in_span).unwrap().norm() < 1e-6 * f.norm());
    }

    #[test]
    fn equivalent_basis_is_orthogonal() {
        let p = pipeline(2001, 200);
        let basis = build_equivalent_basis(&p.dec, &p.xi, A * A).unwrap();
        assert_eq!(basis.phis.len(), 9);
        assert_eq!(basis.energies[0], A * A);
        let phi0 = p.grid.sample(|x| Complex64::new(0.0, A * x).exp());
        assert!(collinearity(&basis.phis[0], &phi0).unwrap() > 1.0 - 1e-8);
        for n in 1..9 {
            let e = (PI * n as f64).powi(2);
            assert!((basis.energies[n] - e).abs() / e < 1e-4);
            assert!(inner_product(&basis.phis[n], &basis.phis[0]).unwrap().norm() < 1e-6 * basis.norms[n]);
        }
        assert!(basis.max_offdiag().unwrap() < 1e-5);
    }

    #[test]
    fn equivalence_report_for_robin_example() {
        let p = pipeline(2001, 200);
        let basis = build_equivalent_basis(&p.dec, &p.xi, A * A).unwrap();
        let reference: Vec<f64> = (1..=8).map(|n| (PI * n as f64).powi(2)).collect();
        let inputs = EquivalenceInputs {
            susy: &p.s,
            partner: &p.partner,
            partner_adjoint: &p.partner_adj,
            metric: &p.metric,
            decomposition: &p.dec,
            basis: &basis,
            phi_spectrum: &p.phi,
            reference: &reference,
            reference_kind: ReferenceKind::Exact,
        };
        let report = verify_equivalence(&inputs, &Tolerances::default()).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.r_alpha < 1e-4);
        assert_eq!(report.h0_eigenvalues.len(), 9);
        let mut corrupted = basis.clone();
        let c = inner_product(&p.dec.xis[3], &corrupted.phis[2]).unwrap();
        corrupted.phis[2] = corrupted.phis[2].axpy(-2.0 * c, &p.dec.xis[3]).unwrap();
        let bad =
            verify_equivalence(&EquivalenceInputs { basis: &corrupted, ..inputs }, &Tolerances::default()).unwrap();
        // The largest secondary coefficient of Phi_2 sits on Xi_3.
        assert!(bad.r_herm_h01 > 0.05, "{}", bad.r_herm_h01);
        assert!(!bad.pass);
    }

    #[test]
    fn h0_operator_properties() {
        let p = pipeline(2001, 200);
        let basis = build_equivalent_basis(&p.dec, &p.xi, A * A).unwrap();
        let h0 = reconstruct_h0(&basis);
        assert!(h0.hermiticity_residual() < 1e-8);
        let ev = h0.eigenvalues().unwrap();
        let mut expect = vec![A * A];
        expect.extend((1..=8).map(|n| (PI * n as f64).powi(2)));
        for (e, x) in ev.iter().zip(&expect) {
            assert!((e - x).abs() / x < 1e-4, "{e} vs {x}");
        }
        for n in 0..9 {
            let v = basis.unit(n);
            let r = h0.apply(&v).unwrap().axpy(Complex64::new(-basis.energies[n], 0.0), &v).unwrap().norm();
            // Bounded by the Gram deviation of the Phi_n times the largest level.
            assert!(r < 5e-6 * ev[8], "n = {n}: {r}");
        }
    }

    #[test]
    fn dense_h0_agrees_with_low_rank_action() {
        let p = pipeline(201, 40);
        let basis = build_equivalent_basis(&p.dec, &p.xi, A * A).unwrap();
        let h0 = reconstruct_h0(&basis);
        let f = p.grid.sample(|x| Complex64::new(x.sin(), x * x));
        let dense = h0.to_dense() * nalgebra::DVector::from_column_slice(f.values());
        let low = h0.apply(&f).unwrap();
        for (a, b) in dense.iter().zip(low.values()) {
            assert!((a - b).norm() < 1e-10 * (1.0 + b.norm()));
        }
    }
}

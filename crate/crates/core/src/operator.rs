//! Finite-difference realizations of `-f'' + q f' + V f` with Dirichlet or
//! complex Robin boundary conditions, and their eigenproblems.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{fmt_f64, inner_product, Grid, GridFunction};
use crate::tridiag::Tridiagonal;

/// Smallest grid accepted for operator assembly.
pub const MIN_OPERATOR_POINTS: usize = 17;

/// Boundary condition at one endpoint. `Robin(w)` means `f' + w f = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    Dirichlet,
    Robin(Complex64),
}

impl BoundaryCondition {
    pub fn conj(self) -> Self {
        match self {
            BoundaryCondition::Dirichlet => BoundaryCondition::Dirichlet,
            BoundaryCondition::Robin(w) => BoundaryCondition::Robin(w.conj()),
        }
    }

    pub fn weight(self) -> Option<Complex64> {
        match self {
            BoundaryCondition::Dirichlet => None,
            BoundaryCondition::Robin(w) => Some(w),
        }
    }
}

/// Discretized second-order operator acting on full grid sample vectors.
///
/// Robin conditions are folded into the boundary rows by ghost-point
/// elimination. A Dirichlet endpoint has its row and column deleted: the row
/// is zero and no interior row reads the boundary sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    grid: Arc<Grid>,
    matrix: Tridiagonal,
    bc_left: BoundaryCondition,
    bc_right: BoundaryCondition,
    first_order_coeff: GridFunction,
    potential: GridFunction,
}

pub fn assemble(
    grid: &Arc<Grid>,
    first_order_coeff: &GridFunction,
    potential: &GridFunction,
    bc_left: BoundaryCondition,
    bc_right: BoundaryCondition,
) -> Result<DiscreteOperator> {
    let n = grid.n_points();
    if n < MIN_OPERATOR_POINTS {
        return Err(Error::InvalidGrid(format!("operators need at least {MIN_OPERATOR_POINTS} points, got {n}")));
    }
    let probe = grid.zeros();
    first_order_coeff.check_grid(&probe)?;
    potential.check_grid(&probe)?;
    if first_order_coeff.values().iter().chain(potential.values()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("operator coefficients"));
    }
    for bc in [bc_left, bc_right] {
        if let BoundaryCondition::Robin(w) = bc {
            if !w.is_finite() {
                return Err(Error::NonFinite("Robin weight"));
            }
        }
    }

    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let q = first_order_coeff.values();
    let v = potential.values();
    let mut m = Tridiagonal::zeros(n);
    for i in 0..n {
        m.diag[i] = 2.0 * inv_h2 + v[i];
        if i > 0 {
            m.lower[i - 1] = -inv_h2 - q[i] / (2.0 * h);
        }
        if i + 1 < n {
            m.upper[i] = -inv_h2 + q[i] / (2.0 * h);
        }
    }

    // Ghost value from the centered condition (f_1 - f_{-1}) / 2h + w f_0 = 0.
    match bc_left {
        BoundaryCondition::Robin(w) => {
            let ghost = -inv_h2 - q[0] / (2.0 * h);
            m.upper[0] += ghost;
            m.diag[0] += ghost * 2.0 * h * w;
        }
        BoundaryCondition::Dirichlet => {
            m.diag[0] = Complex64::ZERO;
            m.upper[0] = Complex64::ZERO;
            m.lower[0] = Complex64::ZERO;
        }
    }
    match bc_right {
        BoundaryCondition::Robin(w) => {
            let ghost = -inv_h2 + q[n - 1] / (2.0 * h);
            m.lower[n - 2] += ghost;
            m.diag[n - 1] -= ghost * 2.0 * h * w;
        }
        BoundaryCondition::Dirichlet => {
            m.diag[n - 1] = Complex64::ZERO;
            m.lower[n - 2] = Complex64::ZERO;
            m.upper[n - 2] = Complex64::ZERO;
        }
    }

    Ok(DiscreteOperator {
        grid: Arc::clone(grid),
        matrix: m,
        bc_left,
        bc_right,
        first_order_coeff: first_order_coeff.clone(),
        potential: potential.clone(),
    })
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn matrix(&self) -> &Tridiagonal {
        &self.matrix
    }

    pub fn bc_left(&self) -> BoundaryCondition {
        self.bc_left
    }

    pub fn bc_right(&self) -> BoundaryCondition {
        self.bc_right
    }

    pub fn first_order_coeff(&self) -> &GridFunction {
        &self.first_order_coeff
    }

    pub fn potential(&self) -> &GridFunction {
        &self.potential
    }

    /// Dense `n x n` matrix.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.grid.n_points();
        DMatrix::from_fn(n, n, |i, j| self.matrix.get(i, j))
    }

    /// Rows and columns that carry unknowns (Dirichlet samples are excluded).
    pub fn active_range(&self) -> std::ops::Range<usize> {
        let n = self.grid.n_points();
        let start = usize::from(self.bc_left == BoundaryCondition::Dirichlet);
        let end = n - usize::from(self.bc_right == BoundaryCondition::Dirichlet);
        start..end
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        f.check_grid(&self.potential)?;
        Ok(GridFunction::from_raw(&self.grid, self.matrix.matvec(f.values())))
    }

    /// `||op f - e f|| / ||f||`, boundary rows included.
    pub fn residual(&self, f: &GridFunction, e: Complex64) -> Result<f64> {
        let norm = f.norm();
        if norm == 0.0 {
            return Err(Error::ZeroFunction);
        }
        let r = self.apply(f)?.axpy(-e, f)?;
        Ok(r.norm() / norm)
    }

    /// Formal adjoint of a Schrödinger-form operator: conjugated potential
    /// and Robin weights.
    pub fn adjoint(&self) -> Result<DiscreteOperator> {
        if self.first_order_coeff.values().iter().any(|q| *q != Complex64::ZERO) {
            return Err(Error::FirstOrderAdjoint);
        }
        assemble(&self.grid, &self.first_order_coeff, &self.potential.conj(), self.bc_left.conj(), self.bc_right.conj())
    }

    /// The `n_max` lowest eigenpairs by real part (ties broken by imaginary part).
    pub fn eigensolve(&self, n_max: usize) -> Result<Spectrum> {
        let n = self.grid.n_points();
        let limit = n / 4;
        if n_max == 0 || n_max > limit {
            return Err(Error::TrustRegion { requested: n_max, limit });
        }
        let range = self.active_range();
        let block = self.matrix.block(range.start, range.end);
        let mut values = block.eigenvalues()?;
        if values.len() < n_max {
            return Err(Error::TooFewPairs { requested: n_max, available: values.len() });
        }
        values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        values.truncate(n_max);

        let pairs = values
            .into_iter()
            .map(|value| {
                let local = block.eigenvector(value)?;
                let mut full = vec![Complex64::ZERO; n];
                full[range.clone()].copy_from_slice(&local);
                let function = phase_fix(&GridFunction::from_raw(&self.grid, full))
                    .ok_or_else(|| Error::Eigensolver("zero eigenvector".into()))?;
                Ok(EigenPair { value, function })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Spectrum { pairs, normalization: Normalization::Unit })
    }
}

/// Unit-normalizes and rotates so the largest-magnitude sample is positive real.
pub fn phase_fix(f: &GridFunction) -> Option<GridFunction> {
    let unit = f.normalized()?;
    let pivot =
        unit.values().iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).filter(|p| p.norm() > 0.0)?;
    let phase = pivot.conj() / pivot.norm();
    Some(unit.scale(phase))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Unit L² norm, largest sample positive real.
    Unit,
    /// Closed-form normalization of the analytic example (not unit norm).
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: Complex64,
    pub function: GridFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub pairs: Vec<EigenPair>,
    pub normalization: Normalization,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.pairs.iter().map(|p| p.value)
    }

    /// Index of the eigenvalue closest to `target`.
    pub fn nearest(&self, target: Complex64) -> Option<usize> {
        (0..self.pairs.len())
            .min_by(|&i, &j| (self.pairs[i].value - target).norm().total_cmp(&(self.pairs[j].value - target).norm()))
    }

    /// Splits off the pair closest to `target`, returning it and the rest in order.
    pub fn split_nearest(&self, target: Complex64) -> Option<(EigenPair, Spectrum)> {
        let k = self.nearest(target)?;
        let mut rest = self.pairs.clone();
        let picked = rest.remove(k);
        Some((picked, Spectrum { pairs: rest, normalization: self.normalization }))
    }

    /// `index,re_E,im_E` rows, numbered from `first_index`.
    pub fn write_eigenvalues_csv<W: Write>(&self, out: W, first_index: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "re_E", "im_E"])?;
        for (k, p) in self.pairs.iter().enumerate() {
            w.write_record([(first_index + k).to_string(), fmt_f64(p.value.re), fmt_f64(p.value.im)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `|<f|g>| / (||f|| ||g||)`: phase-invariant collinearity measure.
pub fn collinearity(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    let (nf, ng) = (f.norm(), g.norm());
    if nf == 0.0 || ng == 0.0 {
        return Err(Error::ZeroFunction);
    }
    Ok(inner_product(f, g)?.norm() / (nf * ng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const A: f64 = 1.3;

    fn zero(g: &Arc<Grid>) -> GridFunction {
        g.zeros()
    }

    fn laplacian(g: &Arc<Grid>) -> DiscreteOperator {
        assemble(g, &zero(g), &zero(g), BoundaryCondition::Dirichlet, BoundaryCondition::Dirichlet).unwrap()
    }

    fn robin_partner(g: &Arc<Grid>) -> DiscreteOperator {
        let w = BoundaryCondition::Robin(Complex64::new(0.0, A));
        assemble(g, &zero(g), &zero(g), w, w).unwrap()
    }

    #[test]
    fn laplacian_on_sine() {
        let g = Grid::new(1.0, 2001).unwrap();
        let op = laplacian(&g);
        let f = g.sample(|x| Complex64::new((PI * x).sin(), 0.0));
        let r = op.apply(&f).unwrap().axpy(Complex64::new(-PI * PI, 0.0), &f).unwrap();
        assert!(r.max_abs() < 5e-3);
    }

    #[test]
    fn dirichlet_spectrum() {
        for d in [1.0, 2.7] {
            let g = Grid::new(d, 2001).unwrap();
            let spec = laplacian(&g).eigensolve(10).unwrap();
            for (k, v) in spec.values().enumerate() {
                let exact = (PI * (k + 1) as f64 / d).powi(2);
                assert!((v.re - exact).abs() / exact < 1e-4);
                assert!(v.im.abs() < 1e-10 * (1.0 + v.re.abs()));
            }
        }
    }

    #[test]
    fn robin_partner_spectrum_gains_alpha() {
        let g = Grid::new(1.0, 2001).unwrap();
        let spec = robin_partner(&g).eigensolve(10).unwrap();
        let mut exact: Vec<f64> = (1..10).map(|n| (PI * n as f64).powi(2)).collect();
        exact.push(A * A);
        exact.sort_by(f64::total_cmp);
        for (v, e) in spec.values().zip(exact) {
            assert!((v - e).norm() / e < 1e-4, "{v} vs {e}");
        }
    }

    #[test]
    fn metric_for_constant_superpotential_has_a_kernel() {
        let g = Grid::new(1.0, 2001).unwrap();
        let q = g.sample(|_| Complex64::new(0.0, 2.0 * A));
        let v = g.sample(|_| Complex64::new(A * A, 0.0));
        let w = BoundaryCondition::Robin(Complex64::new(0.0, -A));
        let spec = assemble(&g, &q, &v, w, w).unwrap().eigensolve(3).unwrap();
        let vals: Vec<_> = spec.values().collect();
        assert!(vals[0].norm() < 1e-6 * vals[1].norm());
    }

    #[test]
    fn robin_rows_and_plane_wave() {
        let g = Grid::new(1.0, 2001).unwrap();
        let op = robin_partner(&g);
        // The discrete eigenvector is annihilated by (H - E) in every row, boundary rows included.
        let spec = op.eigensolve(1).unwrap();
        let p = &spec.pairs[0];
        let r = op.apply(&p.function).unwrap().axpy(-p.value, &p.function).unwrap();
        let n = g.n_points();
        let h = g.spacing();
        for i in [0, n - 1] {
            assert!(r.values()[i].norm() < 1e-12 * 4.0 / (h * h));
        }
        // Sampled exp(-iax) satisfies the boundary rows up to the ghost-point truncation O(h).
        let phi0 = g.sample(|x| Complex64::new(0.0, -A * x).exp());
        let r = op.apply(&phi0).unwrap().axpy(Complex64::new(-A * A, 0.0), &phi0).unwrap();
        for i in [0, n - 1] {
            assert!(r.values()[i].norm() < A.powi(3) * h, "row {i}: {}", r.values()[i]);
        }
        // ... and the continuum condition exactly.
        let w = Complex64::new(0.0, A);
        for x in [0.0, 1.0] {
            let f = Complex64::new(0.0, -A * x).exp();
            let df = Complex64::new(0.0, -A) * f;
            assert!((df + w * f).norm() < 1e-15);
        }
    }

    #[test]
    fn laplacian_is_symmetric() {
        let g = Grid::new(1.0, 101).unwrap();
        let m = laplacian(&g).to_dense();
        assert!((&m - m.transpose()).norm() < 1e-12 * m.norm());
    }

    #[test]
    fn adjoint_rules() {
        let g = Grid::new(1.0, 201).unwrap();
        let v0 = g.sample(|x| Complex64::new(x * x, 0.0));
        let h = assemble(&g, &zero(&g), &v0, BoundaryCondition::Dirichlet, BoundaryCondition::Dirichlet).unwrap();
        assert!((h.adjoint().unwrap().to_dense() - h.to_dense()).norm() < 1e-12);

        let big_h = robin_partner(&g);
        let hd = big_h.adjoint().unwrap();
        assert_eq!(hd.bc_left(), BoundaryCondition::Robin(Complex64::new(0.0, -A)));
        assert_eq!(hd.bc_right(), BoundaryCondition::Robin(Complex64::new(0.0, -A)));
        assert_eq!(hd.adjoint().unwrap(), big_h);

        let q = g.sample(|_| Complex64::new(0.0, 1.0));
        let with_drift =
            assemble(&g, &q, &zero(&g), BoundaryCondition::Dirichlet, BoundaryCondition::Dirichlet).unwrap();
        assert!(matches!(with_drift.adjoint(), Err(Error::FirstOrderAdjoint)));
    }

    #[test]
    fn apply_and_residual() {
        // Backward error of the eigensolver scales with ||A|| ~ 4/h^2, so the
        // exact-pair check uses a coarse grid.
        let coarse = Grid::new(1.0, 201).unwrap();
        let hc = laplacian(&coarse);
        let spec = hc.eigensolve(2).unwrap();
        let p = &spec.pairs[0];
        assert!(hc.residual(&p.function, p.value).unwrap() < 1e-10);

        let g = Grid::new(1.0, 2001).unwrap();
        let h = laplacian(&g);
        let psi1 = g.sample(|x| Complex64::new((2.0f64).sqrt() * (PI * x).sin(), 0.0));
        assert!(h.residual(&psi1, Complex64::new(PI * PI, 0.0)).unwrap() < 5e-3 * PI * PI);
        assert_eq!(h.apply(&g.zeros()).unwrap().max_abs(), 0.0);
        assert!(matches!(h.residual(&g.zeros(), Complex64::ZERO), Err(Error::ZeroFunction)));
        let noise = g.sample(|x| Complex64::new((37.0 * x).sin() + x, (11.0 * x).cos()));
        assert!(h.residual(&noise, Complex64::new(3.0, 1.0)).unwrap() > 1.0);
    }

    #[test]
    fn analytic_partner_eigenfunctions_have_small_residual() {
        let g = Grid::new(1.0, 2001).unwrap();
        let op = robin_partner(&g);
        for n in 1..=3 {
            let k = PI * n as f64;
            let phi = g.sample(|x| Complex64::new((k * x).cos(), -A / k * (k * x).sin()));
            assert!(op.residual(&phi, Complex64::new(k * k, 0.0)).unwrap() < 1e-3, "n = {n}");
        }
    }

    #[test]
    fn trust_region_and_normalization() {
        let g = Grid::new(1.0, 101).unwrap();
        let h = laplacian(&g);
        assert!(matches!(h.eigensolve(26), Err(Error::TrustRegion { .. })));
        assert!(matches!(h.eigensolve(0), Err(Error::TrustRegion { .. })));
        let spec = h.eigensolve(25).unwrap();
        for p in &spec.pairs {
            assert!((p.function.norm() - 1.0).abs() < 1e-12);
            let pivot = p.function.values().iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            assert!(pivot.im.abs() < 1e-14 && pivot.re > 0.0);
            assert_eq!(p.function.values()[0], Complex64::ZERO);
        }
    }

    #[test]
    fn partner_and_adjoint_are_biorthogonal() {
        let g = Grid::new(1.0, 2001).unwrap();
        let h = robin_partner(&g);
        let phi = h.eigensolve(9).unwrap();
        let xi = h.adjoint().unwrap().eigensolve(9).unwrap();
        for (n, x) in xi.pairs.iter().enumerate() {
            for (m, p) in phi.pairs.iter().enumerate() {
                if n != m {
                    assert!(inner_product(&x.function, &p.function).unwrap().norm() < 1e-6);
                }
            }
            // Real potential and real eigenvalue: xi_n is collinear with conj(phi_n).
            let c = collinearity(&phi.pairs[n].function.conj(), &x.function).unwrap();
            assert!(c > 1.0 - 1e-8);
        }
    }
}

//! First-order SUSY transformation `L = -d/dx + W`, `W = u'/u`, of a
//! Dirichlet problem `h = -d²/dx² + V0` into a non-Hermitian partner
//! `H = -d²/dx² + V0 - 2W'` with Robin conditions `f' + W f = 0`.

use std::cmp::Ordering;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{differentiate, Grid, GridFunction};
use crate::operator::{assemble, BoundaryCondition, DiscreteOperator, Spectrum};

/// Grid points excluded at each end when comparing stencil compositions.
pub const BOUNDARY_EXCLUSION: usize = 3;

/// How a transformation function is supplied.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformationFunction {
    /// `u = exp(i a x)`, factorization energy `a²`.
    Exp { a: f64 },
    /// `u = A exp(i k x) + B exp(-i k x)`, factorization energy `k²`.
    Combination { k: f64, a: Complex64, b: Complex64 },
    /// Samples of `u` with an explicit factorization energy.
    Samples { u: GridFunction, alpha: f64 },
}

/// A sampled transformation function. `du` is used for the superpotential
/// when known in closed form; otherwise `u'` is differenced.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformation {
    pub u: GridFunction,
    pub du: Option<GridFunction>,
    pub alpha: f64,
}

impl TransformationFunction {
    pub fn realize(&self, grid: &Arc<Grid>) -> Result<Transformation> {
        match self {
            TransformationFunction::Exp { a } => {
                let a = *a;
                let ia = Complex64::new(0.0, a);
                Ok(Transformation {
                    u: grid.sample(|x| (ia * x).exp()),
                    du: Some(grid.sample(|x| ia * (ia * x).exp())),
                    alpha: a * a,
                })
            }
            TransformationFunction::Combination { k, a, b } => {
                let (k, a, b) = (*k, *a, *b);
                let ik = Complex64::new(0.0, k);
                Ok(Transformation {
                    u: grid.sample(|x| a * (ik * x).exp() + b * (-ik * x).exp()),
                    du: Some(grid.sample(|x| ik * (a * (ik * x).exp() - b * (-ik * x).exp()))),
                    alpha: k * k,
                })
            }
            TransformationFunction::Samples { u, alpha } => {
                u.check_grid(&grid.zeros())?;
                Ok(Transformation { u: u.clone(), du: None, alpha: *alpha })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SusyOptions {
    /// `min |u| > nodeless_tol * max |u|`.
    pub nodeless_tol: f64,
    /// Relative residual allowed for `h u = alpha u`.
    pub solution_tol: f64,
    /// Reject `alpha` within `collision_tol * (1 + |alpha|)` of a level of `h`.
    pub collision_tol: f64,
    /// Skip the collision guard. Only failure-path tests should turn this off.
    pub check_collision: bool,
}

impl Default for SusyOptions {
    fn default() -> Self {
        SusyOptions { nodeless_tol: 1e-8, solution_tol: 1e-3, collision_tol: 1e-3, check_collision: true }
    }
}

#[derive(Debug, Clone)]
pub struct SusyData {
    pub grid: Arc<Grid>,
    pub u: GridFunction,
    pub alpha: f64,
    /// Superpotential `u'/u`.
    pub w: GridFunction,
    pub v0: GridFunction,
    /// Partner potential `V0 - 2 W'`. With a closed-form `u'` the Riccati
    /// identity `W' = V0 - alpha - W²` replaces a second difference.
    pub v: GridFunction,
    pub w_left: Complex64,
    pub w_right: Complex64,
    /// Relative residual of `h u = alpha u` at construction.
    pub solution_residual: f64,
    /// `||Im W|| / ||W||`; how far from real the superpotential is.
    pub imag_ratio: f64,
}

pub fn build_susy(
    grid: &Arc<Grid>,
    v0: &GridFunction,
    t: &Transformation,
    h_spectrum: &Spectrum,
    options: &SusyOptions,
) -> Result<SusyData> {
    let (u, alpha) = (&t.u, t.alpha);
    let probe = grid.zeros();
    v0.check_grid(&probe)?;
    u.check_grid(&probe)?;
    if let Some(du) = &t.du {
        du.check_grid(&probe)?;
    }
    if !alpha.is_finite() {
        return Err(Error::NonFinite("factorization energy"));
    }

    let max_u = u.max_abs();
    let min_u = u.values().iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    let node_tol = options.nodeless_tol * max_u;
    if min_u.partial_cmp(&node_tol) != Some(Ordering::Greater) {
        return Err(Error::NodeDetected { min_abs: min_u, tol: node_tol });
    }

    let d2u = differentiate(u, 2)?;
    let v0u = v0.zip_with(u, |v, u| v * u)?;
    let r = v0u.axpy(-Complex64::ONE, &d2u)?.axpy(Complex64::new(-alpha, 0.0), u)?;
    let scale = d2u.norm() + v0u.norm() + alpha.abs() * u.norm();
    let solution_residual = if scale > 0.0 { r.norm() / scale } else { r.norm() };
    if solution_residual > options.solution_tol {
        return Err(Error::NotASolution { residual: solution_residual, tol: options.solution_tol });
    }

    let du = match &t.du {
        Some(du) => du.clone(),
        None => differentiate(u, 1)?,
    };
    let w = du.zip_with(u, |du, u| du / u)?;
    let w_norm = w.norm();
    let imag_norm = w.map(|z| Complex64::new(z.im, 0.0)).norm();
    if imag_norm <= 1e-12 * w_norm.max(1.0) {
        return Err(Error::RealSuperpotential);
    }
    let imag_ratio = imag_norm / w_norm;

    if options.check_collision {
        for (level, e) in h_spectrum.values().enumerate() {
            if (alpha - e.re).abs() < options.collision_tol * (1.0 + alpha.abs()) {
                return Err(Error::AlphaCollision { alpha, level: level + 1, energy: e.re });
            }
        }
    }

    let v = if t.du.is_some() {
        v0.zip_with(&w, |v0, w| 2.0 * (alpha + w * w) - v0)?
    } else {
        v0.axpy(Complex64::new(-2.0, 0.0), &differentiate(&w, 1)?)?
    };
    let n = grid.n_points();
    Ok(SusyData {
        grid: Arc::clone(grid),
        u: u.clone(),
        alpha,
        w_left: w.values()[0],
        w_right: w.values()[n - 1],
        w,
        v0: v0.clone(),
        v,
        solution_residual,
        imag_ratio,
    })
}

/// `L psi = -psi' + W psi`.
pub fn apply_l(s: &SusyData, psi: &GridFunction) -> Result<GridFunction> {
    psi.check_grid(&s.w)?;
    let d = differentiate(psi, 1)?;
    s.w.zip_with(psi, |w, p| w * p)?.axpy(-Complex64::ONE, &d)
}

/// `L† xi = xi' + conj(W) xi`.
pub fn apply_ldag(s: &SusyData, xi: &GridFunction) -> Result<GridFunction> {
    xi.check_grid(&s.w)?;
    let d = differentiate(xi, 1)?;
    s.w.zip_with(xi, |w, x| w.conj() * x)?.axpy(Complex64::ONE, &d)
}

/// `H = -d²/dx² + V` with `f' + W f = 0` at both ends.
pub fn partner_operator(s: &SusyData) -> Result<DiscreteOperator> {
    assemble(&s.grid, &s.grid.zeros(), &s.v, BoundaryCondition::Robin(s.w_left), BoundaryCondition::Robin(s.w_right))
}

/// L² norm restricted to points at least [`BOUNDARY_EXCLUSION`] samples from either end.
pub fn interior_norm(f: &GridFunction) -> f64 {
    let n = f.len();
    let k = BOUNDARY_EXCLUSION;
    if n <= 2 * k {
        return 0.0;
    }
    let w = f.grid().weights();
    (k..n - k).map(|i| w[i] * f.values()[i].norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntertwiningResidual {
    /// `max ||L(h f) - H(L f)|| / ||f||`
    pub forward: f64,
    /// `max ||h(L† f) - L†(H† f)|| / ||f||`
    pub adjoint: f64,
}

impl IntertwiningResidual {
    pub fn max(&self) -> f64 {
        self.forward.max(self.adjoint)
    }
}

/// Checks `L h = H L` and `h L† = L† H†` on a set of test functions, away from
/// the boundary stencils.
pub fn verify_intertwining(
    s: &SusyData,
    h_op: &DiscreteOperator,
    partner: &DiscreteOperator,
    test_set: &[GridFunction],
) -> Result<IntertwiningResidual> {
    if test_set.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let partner_adj = partner.adjoint()?;
    let mut out = IntertwiningResidual { forward: 0.0, adjoint: 0.0 };
    for f in test_set {
        let norm = f.norm();
        if norm == 0.0 {
            continue;
        }
        let lhs = apply_l(s, &h_op.apply(f)?)?;
        let rhs = partner.apply(&apply_l(s, f)?)?;
        out.forward = out.forward.max(interior_norm(&lhs.axpy(-Complex64::ONE, &rhs)?) / norm);

        let lhs = h_op.apply(&apply_ldag(s, f)?)?;
        let rhs = apply_ldag(s, &partner_adj.apply(f)?)?;
        out.adjoint = out.adjoint.max(interior_norm(&lhs.axpy(-Complex64::ONE, &rhs)?) / norm);
    }
    Ok(out)
}

//! Fixtures shared by the pipeline benchmarks.

use std::sync::Arc;

use susy_core::{
    assemble, assemble_metric, build_equivalent_basis, build_susy, decompose_metric, partner_operator,
    BoundaryCondition, Complex64, DiscreteOperator, EquivalentBasis, Grid, MetricDecomposition, Spectrum, SusyData,
    SusyOptions, TransformationFunction,
};

pub const A: f64 = 1.3;

/// The Robin example built up to the equivalent basis.
pub struct Fixture {
    pub grid: Arc<Grid>,
    pub susy: SusyData,
    pub partner: DiscreteOperator,
    pub adjoint: DiscreteOperator,
    pub metric: DiscreteOperator,
    pub dec: MetricDecomposition,
    pub phi: Spectrum,
    pub xi: Spectrum,
    pub basis: EquivalentBasis,
}

impl Fixture {
    pub fn robin(n_points: usize, k: usize) -> Fixture {
        let grid = Grid::new(1.0, n_points).expect("valid grid");
        let z = grid.zeros();
        let h = assemble(&grid, &z, &z, BoundaryCondition::Dirichlet, BoundaryCondition::Dirichlet).expect("h");
        let h_spec = h.eigensolve(8).expect("h spectrum");
        let t = TransformationFunction::Exp { a: A }.realize(&grid).expect("u");
        let susy = build_susy(&grid, &z, &t, &h_spec, &SusyOptions::default()).expect("susy");
        let partner = partner_operator(&susy).expect("H");
        let adjoint = partner.adjoint().expect("H adjoint");
        let metric = assemble_metric(&susy).expect("LL†");
        let dec = decompose_metric(&metric, k).expect("decomposition");
        let target = Complex64::new(A * A, 0.0);
        let (_, phi) = partner.eigensolve(9).expect("H spectrum").split_nearest(target).expect("alpha level");
        let (_, xi) = adjoint.eigensolve(9).expect("H† spectrum").split_nearest(target).expect("alpha level");
        let basis = build_equivalent_basis(&dec, &xi, A * A).expect("basis");
        Fixture { grid, susy, partner, adjoint, metric, dec, phi, xi, basis }
    }
}

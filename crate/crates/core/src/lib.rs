//! Supersymmetric partners of Dirichlet Sturm-Liouville problems with complex
//! superpotentials, the metric-like operator `LL†`, its spectral square root,
//! and the equivalent Hermitian operator reconstructed from it.

pub mod error;
pub mod grid;
pub mod metric;
pub mod operator;
pub mod oracle;
pub mod susy;
pub mod tridiag;

pub use error::{Error, ErrorClass, Result};
pub use grid::{differentiate, fmt_f64, inner_product, Grid, GridFunction};
pub use metric::{
    assemble_metric, build_equivalent_basis, decompose_metric, pseudo_inv_sqrt_apply, reconstruct_h0, sqrt_apply,
    verify_equivalence, EquivalenceInputs, EquivalentBasis, MetricDecomposition, ReferenceKind, SpectralOperator,
    Tolerances, VerificationReport,
};
pub use num_complex::Complex64;
pub use operator::{assemble, collinearity, BoundaryCondition, DiscreteOperator, EigenPair, Normalization, Spectrum};
pub use oracle::RobinParams;
pub use susy::{
    apply_l, apply_ldag, build_susy, partner_operator, verify_intertwining, SusyData, SusyOptions, Transformation,
    TransformationFunction,
};

//! The staged computation behind every command. Nothing touches the disk here.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use susy_core::metric::check_nondefective;
use susy_core::oracle::{
    alternating_identity, cosine_identity, interior_points, overlap_quadrature, overlap_s, sample_phi_closed,
    sample_phi_series, IdentityCheck, PhiComparison, MIN_SERIES_TERMS,
};
use susy_core::susy::{interior_norm, IntertwiningResidual, BOUNDARY_EXCLUSION};
use susy_core::{
    assemble, assemble_metric, build_equivalent_basis, build_susy, collinearity, decompose_metric, inner_product,
    partner_operator, verify_equivalence, verify_intertwining, BoundaryCondition, Complex64, DiscreteOperator,
    EquivalenceInputs, EquivalentBasis, Grid, GridFunction, MetricDecomposition, ReferenceKind, RobinParams, Spectrum,
    SusyData, SusyOptions, TransformationFunction, VerificationReport,
};

use crate::artifacts::Artifacts;
use crate::config::{Family, Potential, Resolved};
use crate::{CliError, Command};

/// Files produced by a command and the checks that failed while producing them.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Artifacts,
    pub failures: Vec<String>,
}

struct Base {
    grid: Arc<Grid>,
    v0: GridFunction,
    h: DiscreteOperator,
    h_spec: Spectrum,
    reference: Vec<f64>,
    reference_kind: ReferenceKind,
}

struct Partner {
    susy: SusyData,
    op: DiscreteOperator,
    adjoint: DiscreteOperator,
    /// `n_max + 1` levels of `H` and `H†`, `alpha` included.
    h_full: Spectrum,
    hdag_full: Spectrum,
    intertwining: IntertwiningResidual,
    biorthogonality: f64,
}

struct Metric {
    op: DiscreteOperator,
    dec: MetricDecomposition,
    basis: EquivalentBasis,
    /// `H` levels without `alpha`, in the order of `basis.xis`.
    phi: Spectrum,
    diagonal: f64,
}

fn read_samples(grid: &Arc<Grid>, path: &Path) -> Result<GridFunction, CliError> {
    let file =
        std::fs::File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(GridFunction::read_csv(grid, file)?)
}

fn base(cfg: &Resolved) -> Result<Base, CliError> {
    let grid = Grid::new(cfg.raw.d, cfg.raw.n_points)?;
    let v0 = match &cfg.potential {
        Potential::Zero => grid.zeros(),
        Potential::Constant(c) => grid.sample(|_| Complex64::new(*c, 0.0)),
        Potential::Samples(path) => {
            let v = read_samples(&grid, path)?;
            if v.values().iter().any(|z| z.im != 0.0) {
                return Err(CliError::Config("potential samples must be real".into()));
            }
            v
        }
    };
    let h = assemble(&grid, &grid.zeros(), &v0, BoundaryCondition::Dirichlet, BoundaryCondition::Dirichlet)?;
    let h_spec = h.eigensolve(cfg.raw.n_max)?;
    let exact = |shift: f64| (1..=cfg.raw.n_max).map(|n| (PI * n as f64 / cfg.raw.d).powi(2) + shift).collect();
    let (reference, reference_kind) = match &cfg.potential {
        Potential::Zero => (exact(0.0), ReferenceKind::Exact),
        Potential::Constant(c) => (exact(*c), ReferenceKind::Exact),
        Potential::Samples(_) => (h_spec.values().map(|e| e.re).collect(), ReferenceKind::Numeric),
    };
    Ok(Base { grid, v0, h, h_spec, reference, reference_kind })
}

fn transformation(cfg: &Resolved, grid: &Arc<Grid>) -> Result<TransformationFunction, CliError> {
    Ok(match &cfg.transformation {
        Family::Exp { a } => TransformationFunction::Exp { a: *a },
        Family::Combination { k, a, b } => TransformationFunction::Combination { k: *k, a: *a, b: *b },
        Family::Samples { path, alpha } => {
            TransformationFunction::Samples { u: read_samples(grid, path)?, alpha: *alpha }
        }
    })
}

/// Largest `|<xi_n|phi_m>|`, `n != m`, over unit eigenfunctions.
fn biorthogonality(h: &Spectrum, hdag: &Spectrum) -> Result<f64, CliError> {
    let mut worst = 0.0f64;
    for (n, xi) in hdag.pairs.iter().enumerate() {
        for (m, phi) in h.pairs.iter().enumerate() {
            if n != m {
                worst = worst.max(inner_product(&xi.function, &phi.function)?.norm());
            }
        }
    }
    Ok(worst)
}

fn partner(cfg: &Resolved, b: &Base) -> Result<Partner, CliError> {
    let mut t = transformation(cfg, &b.grid)?.realize(&b.grid)?;
    if let (Potential::Constant(c), Family::Exp { .. } | Family::Combination { .. }) =
        (&cfg.potential, &cfg.transformation)
    {
        t.alpha += c;
    }
    let options = SusyOptions { check_collision: !cfg.raw.force_past_collision_guard, ..SusyOptions::default() };
    let susy = build_susy(&b.grid, &b.v0, &t, &b.h_spec, &options)?;
    let op = partner_operator(&susy)?;
    let adjoint = op.adjoint()?;
    let levels = cfg.raw.n_max + 1;
    let (h_full, hdag_full) = rayon::join(|| op.eigensolve(levels), || adjoint.eigensolve(levels));
    let (h_full, hdag_full) = (h_full?, hdag_full?);
    let test_set: Vec<GridFunction> = b.h_spec.pairs.iter().map(|p| p.function.clone()).collect();
    let intertwining = verify_intertwining(&susy, &b.h, &op, &test_set)?;
    let biorthogonality = biorthogonality(&h_full, &hdag_full)?;
    Ok(Partner { susy, op, adjoint, h_full, hdag_full, intertwining, biorthogonality })
}

fn without_alpha(spec: &Spectrum, alpha: f64) -> Spectrum {
    spec.split_nearest(Complex64::new(alpha, 0.0)).expect("spectrum is nonempty").1
}

/// Largest `|<xi_n|LL† xi_m>| / (||xi_n|| ||xi_m|| mu_max)`, `n != m`.
fn diagonal_suppression(op: &DiscreteOperator, dec: &MetricDecomposition, xis: &Spectrum) -> Result<f64, CliError> {
    let mu_max = dec.lambdas.last().copied().unwrap_or(0.0).powi(2);
    let images: Vec<GridFunction> =
        xis.pairs.par_iter().map(|p| op.apply(&p.function)).collect::<susy_core::Result<_>>()?;
    let mut worst = 0.0f64;
    for (n, xn) in xis.pairs.iter().enumerate() {
        for (m, img) in images.iter().enumerate() {
            if n != m {
                let scale = xn.function.norm() * xis.pairs[m].function.norm() * mu_max;
                worst = worst.max(inner_product(&xn.function, img)?.norm() / scale);
            }
        }
    }
    Ok(worst)
}

fn metric(cfg: &Resolved, p: &Partner) -> Result<Metric, CliError> {
    check_nondefective(&p.h_full)?;
    check_nondefective(&p.hdag_full)?;
    let op = assemble_metric(&p.susy)?;
    let dec = decompose_metric(&op, cfg.k)?;
    let alpha = p.susy.alpha;
    let xi = without_alpha(&p.hdag_full, alpha);
    let phi = without_alpha(&p.h_full, alpha);
    let basis = build_equivalent_basis(&dec, &xi, alpha)?;
    let diagonal = diagonal_suppression(&op, &dec, &p.hdag_full)?;
    Ok(Metric { op, dec, basis, phi, diagonal })
}

fn reconstruct(cfg: &Resolved, b: &Base, p: &Partner, m: &Metric) -> Result<VerificationReport, CliError> {
    let inputs = EquivalenceInputs {
        susy: &p.susy,
        partner: &p.op,
        partner_adjoint: &p.adjoint,
        metric: &m.op,
        decomposition: &m.dec,
        basis: &m.basis,
        phi_spectrum: &m.phi,
        reference: &b.reference,
        reference_kind: b.reference_kind,
    };
    Ok(verify_equivalence(&inputs, &cfg.raw.tolerances.report())?)
}

/// Decides before any numerical work whether the oracle applies and may run.
fn oracle_params(cfg: &Resolved, required: bool) -> Result<Option<RobinParams>, CliError> {
    let a = match (&cfg.transformation, &cfg.potential) {
        (Family::Exp { a }, Potential::Zero) => *a,
        _ if required => {
            return Err(CliError::Config("the oracle needs the exp family and a zero potential".into()));
        }
        _ => return Ok(None),
    };
    let levels = cfg.raw.oracle.levels;
    if levels > cfg.k / 2 {
        return Err(CliError::Config(format!("oracle level {levels} exceeds K/2 = {}", cfg.k / 2)));
    }
    if cfg.k < MIN_SERIES_TERMS {
        return Err(CliError::Config(format!("the series oracle needs K >= {MIN_SERIES_TERMS}, got {}", cfg.k)));
    }
    Ok(Some(RobinParams::new(a, cfg.raw.d)?))
}

fn interior(f: &GridFunction) -> Result<GridFunction, CliError> {
    let n = f.len();
    let values = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| if i < BOUNDARY_EXCLUSION || i + BOUNDARY_EXCLUSION >= n { Complex64::ZERO } else { *v })
        .collect();
    Ok(GridFunction::new(f.grid(), values)?)
}

fn interior_overlap(f: &GridFunction, g: &GridFunction) -> Result<f64, CliError> {
    Ok(collinearity(&interior(f)?, &interior(g)?)?)
}

#[derive(Debug, Serialize)]
struct ThreeWay {
    n: usize,
    closed_series: f64,
    closed_pipeline: f64,
    series_pipeline: f64,
    /// Unimodular factor taking the series to the closed form.
    phase: [f64; 2],
    max_rel_diff: f64,
}

#[derive(Debug, Serialize)]
struct IdentityRow {
    kind: &'static str,
    rho: f64,
    x: f64,
    lhs_plain: f64,
    lhs_accelerated: f64,
    rhs: f64,
    discrepancy: f64,
}

impl IdentityRow {
    fn new(kind: &'static str, rho: f64, x: f64, c: IdentityCheck) -> Self {
        IdentityRow {
            kind,
            rho,
            x,
            lhs_plain: c.lhs_plain,
            lhs_accelerated: c.lhs_accelerated,
            rhs: c.rhs,
            discrepancy: c.discrepancy(),
        }
    }
}

#[derive(Debug, Serialize)]
struct OracleTolerances {
    phi_overlap: f64,
    overlap_abs: f64,
    identity: f64,
}

#[derive(Debug, Serialize)]
struct OracleSummary {
    a: f64,
    d: f64,
    ad_over_pi: f64,
    diag_margin: f64,
    series_terms: usize,
    three_way: Vec<ThreeWay>,
    min_three_way_overlap: f64,
    overlap_max_abs_diff: f64,
    identities: Vec<IdentityRow>,
    identity_max_discrepancy: f64,
    tolerances: OracleTolerances,
    pass: bool,
}

/// `(rho, x)` points for the identities: the digamma arguments of the first
/// two levels plus `a d / pi`, paired with spread-out angles.
fn identity_points(p: &RobinParams) -> Vec<(f64, f64)> {
    let m = p.a().abs() * p.d() / PI;
    [m - 1.0, m + 1.0, m - 2.0, m + 2.0, m]
        .into_iter()
        .enumerate()
        .map(|(j, rho)| (rho, PI * (2 * j + 1) as f64 / 10.0))
        .collect()
}

fn oracle(cfg: &Resolved, p: &RobinParams, b: &Base, m: &Metric, out: &mut Outcome) -> Result<(), CliError> {
    let k = cfg.k;
    let tol = &cfg.raw.tolerances;
    let mut three_way = Vec::new();
    for n in 1..=cfg.raw.oracle.levels {
        let cmp = PhiComparison::new(p, n, interior_points(p.d()), k)?;
        out.artifacts.csv(format!("oracle/phi_{n}.csv"), |w| cmp.write_csv(w))?;
        let (closed, series) = rayon::join(|| sample_phi_closed(p, &b.grid, n), || sample_phi_series(p, &b.grid, n, k));
        let (closed, series) = (closed?, series?);
        let pipeline = &m.basis.phis[n];
        three_way.push(ThreeWay {
            n,
            closed_series: interior_overlap(&closed, &series)?,
            closed_pipeline: interior_overlap(&closed, pipeline)?,
            series_pipeline: interior_overlap(&series, pipeline)?,
            phase: [cmp.phase.re, cmp.phase.im],
            max_rel_diff: cmp.max_rel_diff(),
        });
    }
    let min_three_way_overlap =
        three_way.iter().flat_map(|t| [t.closed_series, t.closed_pipeline, t.series_pipeline]).fold(1.0, f64::min);

    let n_max = cfg.raw.n_max;
    let scale = 1.0 / p.d().sqrt();
    let pairs: Vec<(usize, usize)> = (1..=n_max).flat_map(|m| (1..=n_max).map(move |n| (m, n))).collect();
    let rows = pairs
        .par_iter()
        .map(|&(mi, ni)| Ok((mi, ni, overlap_s(p, mi, ni)? * scale, overlap_quadrature(p, mi, ni)? * scale)))
        .collect::<susy_core::Result<Vec<_>>>()?;
    let overlap_max_abs_diff = rows.iter().map(|(_, _, s, q)| (s - q).norm()).fold(0.0, f64::max);
    out.artifacts.csv("oracle/overlaps.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["m", "n", "re_closed", "im_closed", "re_quad", "im_quad", "abs_diff"])?;
        for (mi, ni, s, q) in &rows {
            let f = susy_core::fmt_f64;
            w.write_record([mi.to_string(), ni.to_string(), f(s.re), f(s.im), f(q.re), f(q.im), f((s - q).norm())])?;
        }
        w.flush()?;
        Ok(())
    })?;

    let identities = identity_points(p)
        .into_par_iter()
        .map(|(rho, x)| {
            Ok([
                IdentityRow::new("cosine", rho, x, cosine_identity(rho, x)?),
                IdentityRow::new("alternating", rho, x, alternating_identity(rho, x)?),
            ])
        })
        .collect::<susy_core::Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    let identity_max_discrepancy = identities.iter().map(|r| r.discrepancy).fold(0.0, f64::max);

    let pass = min_three_way_overlap > 1.0 - tol.phi_overlap
        && overlap_max_abs_diff < tol.overlap_abs
        && identity_max_discrepancy < tol.identity;
    if !pass {
        out.failures.push(format!(
            "oracle disagreement: min overlap {min_three_way_overlap:e}, overlap diff {overlap_max_abs_diff:e}, \
             identity discrepancy {identity_max_discrepancy:e}"
        ));
    }
    out.artifacts.json(
        "oracle/summary.json",
        &OracleSummary {
            a: p.a(),
            d: p.d(),
            ad_over_pi: p.a().abs() * p.d() / PI,
            diag_margin: p.diag_margin(),
            series_terms: k,
            three_way,
            min_three_way_overlap,
            overlap_max_abs_diff,
            identities,
            identity_max_discrepancy,
            tolerances: OracleTolerances {
                phi_overlap: tol.phi_overlap,
                overlap_abs: tol.overlap_abs,
                identity: tol.identity,
            },
            pass,
        },
    );
    Ok(())
}

fn emit_spectrum(a: &mut Artifacts, dir: &str, spec: &Spectrum, first_index: usize) -> Result<(), CliError> {
    a.csv(format!("{dir}/eigenvalues.csv"), |w| spec.write_eigenvalues_csv(w, first_index))?;
    for (k, pair) in spec.pairs.iter().enumerate() {
        a.csv(format!("{dir}/eig_{}.csv", first_index + k), |w| pair.function.write_csv(w))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SusySummary {
    alpha: f64,
    #[serde(rename = "W_left")]
    w_left: [f64; 2],
    #[serde(rename = "W_right")]
    w_right: [f64; 2],
    solution_residual: f64,
    imag_ratio: f64,
    intertwining_forward: f64,
    intertwining_adjoint: f64,
    /// Largest `|<xi_n|phi_m>|`, `n != m`, unit eigenfunctions.
    biorthogonality: f64,
    /// Largest `|E_n(H) - E_n(H†)|`.
    adjoint_mismatch: f64,
}

fn emit_partner(a: &mut Artifacts, p: &Partner) -> Result<(), CliError> {
    let s = &p.susy;
    let adjoint_mismatch = p.h_full.values().zip(p.hdag_full.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    a.json(
        "partner/susy.json",
        &SusySummary {
            alpha: s.alpha,
            w_left: [s.w_left.re, s.w_left.im],
            w_right: [s.w_right.re, s.w_right.im],
            solution_residual: s.solution_residual,
            imag_ratio: s.imag_ratio,
            intertwining_forward: p.intertwining.forward,
            intertwining_adjoint: p.intertwining.adjoint,
            biorthogonality: p.biorthogonality,
            adjoint_mismatch,
        },
    );
    emit_spectrum(a, "partner/H", &p.h_full, 0)?;
    emit_spectrum(a, "partner/Hdag", &p.hdag_full, 0)
}

#[derive(Debug, Serialize)]
struct MetricSummary {
    #[serde(rename = "K")]
    k: usize,
    kernel_index: usize,
    clamp_threshold: f64,
    /// `|lambda_0²| / |lambda_1²|` before clamping.
    kernel_ratio: f64,
    gram_max_offdiag: f64,
    phi_norms: Vec<f64>,
    /// Largest `|<xi_n|LL† xi_m>| / (||xi_n|| ||xi_m|| lambda_K²)`, `n != m`.
    diagonal_suppression: f64,
    kernel_residual: f64,
}

fn emit_metric(a: &mut Artifacts, m: &Metric) -> Result<(), CliError> {
    let dec = &m.dec;
    a.csv("metric/lambdas.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["index", "lambda", "re_lambda_sq", "im_lambda_sq"])?;
        for (k, (l, mu)) in dec.lambdas.iter().zip(&dec.raw_eigenvalues).enumerate() {
            let f = susy_core::fmt_f64;
            w.write_record([k.to_string(), f(*l), f(mu.re), f(mu.im)])?;
        }
        w.flush()?;
        Ok(())
    })?;
    for (n, phi) in m.basis.phis.iter().enumerate() {
        a.csv(format!("metric/phi_{n}.csv"), |w| phi.write_csv(w))?;
    }
    let gram = m.basis.gram()?;
    a.csv("metric/gram.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["m", "n", "re", "im"])?;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let g = gram[(i, j)];
                w.write_record([i.to_string(), j.to_string(), susy_core::fmt_f64(g.re), susy_core::fmt_f64(g.im)])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    let kernel = &dec.xis[dec.kernel_index];
    let kernel_residual = interior_norm(&m.op.apply(kernel)?);
    a.json(
        "metric/summary.json",
        &MetricSummary {
            k: dec.rank(),
            kernel_index: dec.kernel_index,
            clamp_threshold: dec.clamp_threshold,
            kernel_ratio: dec.raw_eigenvalues[0].norm() / dec.raw_eigenvalues[1].norm(),
            gram_max_offdiag: m.basis.max_offdiag()?,
            phi_norms: m.basis.norms.clone(),
            diagonal_suppression: m.diagonal,
            kernel_residual,
        },
    );
    Ok(())
}

fn emit_report(a: &mut Artifacts, failures: &mut Vec<String>, report: &VerificationReport) -> Result<(), CliError> {
    a.csv("reconstruct/h0_eigenvalues.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["index", "E"])?;
        for (k, e) in report.h0_eigenvalues.iter().enumerate() {
            w.write_record([k.to_string(), susy_core::fmt_f64(*e)])?;
        }
        w.flush()?;
        Ok(())
    })?;
    a.json("reconstruct/report.json", report);
    if !report.pass {
        failures.push(format!(
            "verification report failed: r_HLLd {:e}, r_map {:e}, r_herm_h01 {:e}, r_eig {:e}, r_herm_h0 {:e}",
            report.r_hlld, report.r_map, report.r_herm_h01, report.r_eig, report.r_herm_h0
        ));
    }
    Ok(())
}

/// Runs `command` to completion in memory.
pub fn execute(command: Command, cfg: &Resolved) -> Result<Outcome, CliError> {
    let robin = match command {
        Command::Oracle => oracle_params(cfg, true)?,
        Command::All => oracle_params(cfg, false)?,
        _ => None,
    };
    let mut out = Outcome::default();
    let b = base(cfg)?;
    if matches!(command, Command::Spectrum | Command::All) {
        emit_spectrum(&mut out.artifacts, "spectrum", &b.h_spec, 1)?;
    }
    if command == Command::Spectrum {
        return Ok(out);
    }
    let p = partner(cfg, &b)?;
    if matches!(command, Command::Partner | Command::All) {
        emit_partner(&mut out.artifacts, &p)?;
    }
    if command == Command::Partner {
        return Ok(out);
    }
    let m = metric(cfg, &p)?;
    if matches!(command, Command::Metric | Command::All) {
        emit_metric(&mut out.artifacts, &m)?;
    }
    if matches!(command, Command::Reconstruct | Command::All) {
        let report = reconstruct(cfg, &b, &p, &m)?;
        emit_report(&mut out.artifacts, &mut out.failures, &report)?;
    }
    if let Some(robin) = robin {
        oracle(cfg, &robin, &b, &m, &mut out)?;
    }
    Ok(out)
}

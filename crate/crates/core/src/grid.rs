//! Uniform grids on `[0, d]`, sampled complex functions, finite differences
//! and composite Simpson inner products.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Uniform sampling of `[0, d]` with composite Simpson weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    d: f64,
    n_points: usize,
    spacing: f64,
    weights: Vec<f64>,
}

impl Grid {
    /// Builds a grid with `n_points` samples including both endpoints.
    ///
    /// `n_points` must be odd so that Simpson panels tile the interval.
    pub fn new(d: f64, n_points: usize) -> Result<Arc<Self>> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidGrid(format!("interval length must be positive, got {d}")));
        }
        if n_points < 3 || n_points.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("n_points must be odd and at least 3, got {n_points}")));
        }
        let spacing = d / (n_points - 1) as f64;
        let mut weights = vec![0.0; n_points];
        for (i, w) in weights.iter_mut().enumerate() {
            *w = if i == 0 || i == n_points - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            } * spacing
                / 3.0;
        }
        Ok(Arc::new(Grid { d, n_points, spacing, weights }))
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n_points - 1 {
            self.d
        } else {
            i as f64 * self.spacing
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.x(i))
    }

    /// Samples a complex function of `x`.
    pub fn sample(self: &Arc<Self>, f: impl Fn(f64) -> Complex64) -> GridFunction {
        let values = self.points().map(f).collect();
        GridFunction { grid: Arc::clone(self), values }
    }

    pub fn zeros(self: &Arc<Self>) -> GridFunction {
        GridFunction { grid: Arc::clone(self), values: vec![Complex64::ZERO; self.n_points] }
    }
}

/// Complex samples of a function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: &Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::LengthMismatch { expected: grid.n_points, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid function samples"));
        }
        Ok(GridFunction { grid: Arc::clone(grid), values })
    }

    /// Builds a function without the finiteness scan. Callers guarantee the length.
    pub(crate) fn from_raw(grid: &Arc<Grid>, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_points);
        GridFunction { grid: Arc::clone(grid), values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn check_grid(&self, other: &GridFunction) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> GridFunction {
        GridFunction::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<GridFunction> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(GridFunction::from_raw(&self.grid, values))
    }

    pub fn conj(&self) -> GridFunction {
        self.map(|v| v.conj())
    }

    pub fn scale(&self, c: Complex64) -> GridFunction {
        self.map(|v| v * c)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: Complex64, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a + c * b)
    }

    pub fn norm(&self) -> f64 {
        self.grid.weights.iter().zip(&self.values).map(|(w, v)| w * v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Unit-norm copy; `None` for the zero function.
    pub fn normalized(&self) -> Option<GridFunction> {
        let n = self.norm();
        (n > 0.0).then(|| self.scale(Complex64::new(1.0 / n, 0.0)))
    }

    /// Writes `x,re,im` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "re", "im"])?;
        for (x, v) in self.grid.points().zip(&self.values) {
            w.write_record([fmt_f64(x), fmt_f64(v.re), fmt_f64(v.im)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an `x,re,im` table and checks that its abscissae match `grid`.
    pub fn read_csv<R: Read>(grid: &Arc<Grid>, input: R) -> Result<GridFunction> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["x", "re", "im"] {
            return Err(Error::InvalidParameter(format!("expected header x,re,im, found {:?}", headers)));
        }
        let tol = 1e-9 * grid.spacing;
        let mut values = Vec::with_capacity(grid.n_points);
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidParameter(format!("bad number in row {}", i + 1)))
            };
            let x = field(0)?;
            if i >= grid.n_points || (x - grid.x(i)).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "row {} has x = {x}, which does not match the grid",
                    i + 1
                )));
            }
            values.push(Complex64::new(field(1)?, field(2)?));
        }
        GridFunction::new(grid, values)
    }
}

/// Full double precision, as written to every CSV.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `<f|g> = ∫ conj(f) g dx` by composite Simpson.
pub fn inner_product(f: &GridFunction, g: &GridFunction) -> Result<Complex64> {
    f.check_grid(g)?;
    Ok(weighted_dot(f.grid.weights(), &f.values, &g.values))
}

pub(crate) fn weighted_dot(w: &[f64], f: &[Complex64], g: &[Complex64]) -> Complex64 {
    w.iter().zip(f).zip(g).map(|((w, a), b)| a.conj() * b * *w).sum()
}

/// Numerical derivative of order 1 or 2.
///
/// Central differences in the interior, second-order one-sided stencils at
/// both endpoints. Order 2 needs at least four samples.
pub fn differentiate(f: &GridFunction, order: u8) -> Result<GridFunction> {
    let v = &f.values;
    let n = v.len();
    let h = f.grid.spacing;
    let mut out = vec![Complex64::ZERO; n];
    match order {
        1 => {
            let c = 1.0 / (2.0 * h);
            for i in 1..n - 1 {
                out[i] = (v[i + 1] - v[i - 1]) * c;
            }
            out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) * c;
            out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) * c;
        }
        2 => {
            if n < 4 {
                return Err(Error::InvalidGrid("second derivative needs at least 4 samples".into()));
            }
            let c = 1.0 / (h * h);
            for i in 1..n - 1 {
                out[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) * c;
            }
            out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) * c;
            out[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) * c;
        }
        _ => return Err(Error::InvalidParameter(format!("derivative order must be 1 or 2, got {order}"))),
    }
    Ok(GridFunction::from_raw(&f.grid, out))
}

//! Uniform tensor grids on `[-R, R]^N`, grid-sampled fields with multilinear
//! interpolation, finite-difference derivatives and CSV serialization.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::sync::Arc;

/// Uniform grid with `n` points per axis on `[-radius, radius]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub radius: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(dim: usize, radius: f64, n: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("radius", "must be positive"));
        }
        if n < 5 {
            return Err(Error::invalid("n_per_axis", "need at least 5 points per axis"));
        }
        Ok(Self { dim, radius, n })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / (self.n - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.radius + i as f64 * self.spacing()
    }

    /// Per-axis indices of node `k` (row-major, first axis slowest).
    pub fn multi_index(&self, k: usize) -> [usize; 2] {
        match self.dim {
            1 => [k, 0],
            _ => [k / self.n, k % self.n],
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        match self.dim {
            1 => idx[0],
            _ => idx[0] * self.n + idx[1],
        }
    }

    /// Coordinates of node `k`; the unused second entry is zero in 1-D.
    pub fn point(&self, k: usize) -> [f64; 2] {
        let idx = self.multi_index(k);
        match self.dim {
            1 => [self.coord(idx[0]), 0.0],
            _ => [self.coord(idx[0]), self.coord(idx[1])],
        }
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        let idx = self.multi_index(k);
        idx[..self.dim].iter().any(|&i| i == 0 || i == self.n - 1)
    }

    /// Node lies in the core `|x| <= R/2`.
    pub fn in_core(&self, k: usize) -> bool {
        let p = self.point(k);
        (p[0] * p[0] + p[1] * p[1]).sqrt() <= 0.5 * self.radius + 1e-12
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() <= self.radius * (1.0 + 1e-12))
    }

    /// Sample `f` at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> GridField {
        let values = (0..self.len()).map(|k| f(&self.point(k)[..self.dim])).collect();
        GridField { grid: *self, values }
    }

    pub fn zeros(&self) -> GridField {
        GridField {
            grid: *self,
            values: vec![0.0; self.len()],
        }
    }

    /// Sup norm of `a - b` over the core nodes.
    pub fn core_sup_diff(&self, a: &[f64], b: &[f64]) -> f64 {
        (0..self.len())
            .filter(|&k| self.in_core(k))
            .fold(0.0, |m, k| m.max((a[k] - b[k]).abs()))
    }
}

/// A scalar function that the operator can sample at arbitrary points.
pub trait Field: Sync {
    fn dim(&self) -> usize;
    /// Value at `x`; grid fields extend constantly outside their box.
    fn value(&self, x: &[f64]) -> f64;
    /// Radius of the ball that jump targets are projected onto, `None` for fields
    /// defined on all of `R^N`.
    fn domain_radius(&self) -> Option<f64>;
}

type ScalarMap = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Closed-form field on all of `R^N`.
#[derive(Clone)]
pub struct AnalyticField {
    dim: usize,
    f: ScalarMap,
}

impl AnalyticField {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { dim, f: Arc::new(f) }
    }
}

impl std::fmt::Debug for AnalyticField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticField").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl Field for AnalyticField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn domain_radius(&self) -> Option<f64> {
        None
    }
}

/// Node values of a function on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "field values must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn sup_norm(&self) -> f64 {
        crate::numerics::sup_norm(&self.values)
    }

    /// Multilinear interpolation; errors outside the box.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.grid.dim {
            return Err(Error::DimensionMismatch {
                expected: self.grid.dim,
                got: x.len(),
            });
        }
        if !self.grid.contains(x) {
            return Err(Error::OutOfDomain(x.to_vec()));
        }
        Ok(self.interpolate_clamped(x))
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let g = &self.grid;
        let s = ((t + g.radius) / g.spacing()).clamp(0.0, (g.n - 1) as f64);
        let i = (s.floor() as usize).min(g.n - 2);
        (i, s - i as f64)
    }

    /// Multilinear interpolation with coordinates clamped to the box.
    pub fn interpolate_clamped(&self, x: &[f64]) -> f64 {
        let v = &self.values;
        match self.grid.dim {
            1 => {
                let (i, t) = self.locate(x[0]);
                v[i] * (1.0 - t) + v[i + 1] * t
            }
            _ => {
                let n = self.grid.n;
                let (i, s) = self.locate(x[0]);
                let (j, t) = self.locate(x[1]);
                let k = i * n + j;
                (1.0 - s) * ((1.0 - t) * v[k] + t * v[k + 1]) + s * ((1.0 - t) * v[k + n] + t * v[k + n + 1])
            }
        }
    }

    fn stride(&self, axis: usize) -> usize {
        if self.grid.dim == 2 && axis == 0 {
            self.grid.n
        } else {
            1
        }
    }

    /// Gradient at node `k`: central differences, one-sided second order at the boundary.
    pub fn gradient_at(&self, k: usize) -> [f64; 2] {
        let g = &self.grid;
        let h = g.spacing();
        let idx = g.multi_index(k);
        let v = &self.values;
        let mut out = [0.0; 2];
        for (axis, o) in out.iter_mut().enumerate().take(g.dim) {
            let s = self.stride(axis);
            let i = idx[axis];
            *o = if i == 0 {
                (-3.0 * v[k] + 4.0 * v[k + s] - v[k + 2 * s]) / (2.0 * h)
            } else if i == g.n - 1 {
                (3.0 * v[k] - 4.0 * v[k - s] + v[k - 2 * s]) / (2.0 * h)
            } else {
                (v[k + s] - v[k - s]) / (2.0 * h)
            };
        }
        out
    }

    /// Hessian at node `k` by second central differences; boundary nodes reuse the
    /// stencil of the adjacent interior node.
    pub fn hessian_at(&self, k: usize) -> [[f64; 2]; 2] {
        let g = &self.grid;
        let h = g.spacing();
        let mut idx = g.multi_index(k);
        for i in idx.iter_mut().take(g.dim) {
            *i = (*i).clamp(1, g.n - 2);
        }
        let c = g.flat_index(idx);
        let v = &self.values;
        let mut out = [[0.0; 2]; 2];
        for a in 0..g.dim {
            let s = self.stride(a);
            out[a][a] = (v[c + s] - 2.0 * v[c] + v[c - s]) / (h * h);
        }
        if g.dim == 2 {
            let (sx, sy) = (self.stride(0), self.stride(1));
            let m = (v[c + sx + sy] - v[c + sx - sy] - v[c - sx + sy] + v[c - sx - sy]) / (4.0 * h * h);
            out[0][1] = m;
            out[1][0] = m;
        }
        out
    }

    /// Gradients at every node.
    pub fn gradient_field(&self) -> Vec<[f64; 2]> {
        (0..self.grid.len()).map(|k| self.gradient_at(k)).collect()
    }

    /// Largest difference quotient between neighbouring nodes.
    pub fn lipschitz_estimate(&self) -> f64 {
        let g = &self.grid;
        let h = g.spacing();
        let mut lip: f64 = 0.0;
        for k in 0..g.len() {
            let idx = g.multi_index(k);
            for axis in 0..g.dim {
                if idx[axis] + 1 < g.n {
                    let d = (self.values[k + self.stride(axis)] - self.values[k]).abs() / h;
                    lip = lip.max(d);
                }
            }
        }
        lip
    }

    /// Write `x1[,x2],value` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let io = |e: csv::Error| Error::invalid("csv", e.to_string());
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let header: &[&str] = if self.grid.dim == 1 {
            &["x1", "value"]
        } else {
            &["x1", "x2", "value"]
        };
        wr.write_record(header).map_err(io)?;
        for k in 0..self.grid.len() {
            let p = self.grid.point(k);
            let mut rec: Vec<String> = p[..self.grid.dim].iter().map(|c| format!("{c:.16e}")).collect();
            rec.push(format!("{:.16e}", self.values[k]));
            wr.write_record(&rec).map_err(io)?;
        }
        wr.flush().map_err(|e| Error::invalid("csv", e.to_string()))?;
        Ok(())
    }

    /// Read a field written by [`GridField::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let bad = |m: String| Error::invalid("csv", m);
        let mut rd = csv::Reader::from_reader(r);
        let dim = rd.headers().map_err(|e| bad(e.to_string()))?.len() - 1;
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let mut coords = Vec::new();
        let mut values = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
                .collect::<Result<_>>()?;
            coords.push(nums[0]);
            values.push(nums[dim]);
        }
        let n = match dim {
            1 => values.len(),
            _ => (values.len() as f64).sqrt().round() as usize,
        };
        let radius = coords.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let grid = GridSpec::new(dim, radius, n)?;
        if grid.len() != values.len() {
            return Err(bad("row count does not form a square grid".into()));
        }
        GridField::new(grid, values)
    }
}

impl Field for GridField {
    fn dim(&self) -> usize {
        self.grid.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.interpolate_clamped(x)
    }

    fn domain_radius(&self) -> Option<f64> {
        Some(self.grid.radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_exact_on_affine() {
        let g = GridSpec::new(2, 2.0, 11).unwrap();
        let u = g.sample(|x| 0.3 * x[0] - 1.7 * x[1] + 0.25);
        for x in [[0.123, -1.9], [1.99, 0.01], [-0.77, 0.33]] {
            let v = u.interpolate(&x).unwrap();
            assert!((v - (0.3 * x[0] - 1.7 * x[1] + 0.25)).abs() < 1e-12);
        }
        assert!(matches!(u.interpolate(&[2.5, 0.0]), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn derivatives_of_quadratic() {
        let g = GridSpec::new(2, 1.0, 21).unwrap();
        let u = g.sample(|x| x[0] * x[0] + 3.0 * x[0] * x[1] - x[1]);
        for k in [0, 5, 220, g.len() - 1] {
            let p = g.point(k);
            let gr = u.gradient_at(k);
            assert!((gr[0] - (2.0 * p[0] + 3.0 * p[1])).abs() < 1e-10);
            assert!((gr[1] - (3.0 * p[0] - 1.0)).abs() < 1e-10);
            let h = u.hessian_at(k);
            assert!((h[0][0] - 2.0).abs() < 1e-8 && (h[0][1] - 3.0).abs() < 1e-8 && h[1][1].abs() < 1e-8);
        }
    }

    #[test]
    fn csv_round_trip() {
        let g = GridSpec::new(2, 1.5, 7).unwrap();
        let u = g.sample(|x| (x[0] * 1.3).sin() + x[1] / 3.0);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,value\n"));
        let back = GridField::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.grid.n, 7);
        assert!(crate::numerics::sup_diff(&back.values, &u.values) == 0.0);
    }
}

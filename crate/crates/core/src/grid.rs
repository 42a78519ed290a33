//! Uniform periodic grid on the circle and sampled functions on it.
//!
//! A [`GridFn`] stores nodal values `u(x_i)` at `x_i = i * dx`; values between
//! nodes come from piecewise-linear periodic interpolation. Linear
//! interpolation is monotone in the nodal data, which the semigroup relies on
//! for its discrete order-preservation.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[0, period)` with `n` nodes; node `n` wraps to node `0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Torus1 {
    n: usize,
    period: f64,
}

impl Torus1 {
    pub const MIN_NODES: usize = 4;

    pub fn new(n: usize, period: f64) -> Result<Self> {
        if n < Self::MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {} nodes, got {n}",
                Self::MIN_NODES
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidGrid(format!("period must be positive, got {period}")));
        }
        Ok(Torus1 { n, period })
    }

    /// Unit-period grid.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn dx(&self) -> f64 {
        self.period / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        (i % self.n) as f64 * self.dx()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    /// Wraps `x` into `[0, period)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let y = x.rem_euclid(self.period);
        // rem_euclid may round up to exactly `period`
        if y >= self.period {
            0.0
        } else {
            y
        }
    }

    /// Signed shortest displacement from `a` to `b` on the circle.
    pub fn displacement(&self, a: f64, b: f64) -> f64 {
        let d = (b - a).rem_euclid(self.period);
        if d > 0.5 * self.period {
            d - self.period
        } else {
            d
        }
    }

    pub fn distance(&self, a: f64, b: f64) -> f64 {
        self.displacement(a, b).abs()
    }

    /// Locates `x` as `(cell index, fraction in [0, 1))`, snapping to the node
    /// when `x` lies within rounding of one.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.n as f64;
        let s = self.wrap(x) * n / self.period;
        let r = s.round();
        // wrapping loses about eps |x| in absolute terms
        if (s - r).abs() <= 8.0 * f64::EPSILON * n * (1.0 + x.abs() / self.period) {
            return ((r as usize) % self.n, 0.0);
        }
        let f = s.floor();
        ((f as usize) % self.n, s - f)
    }

    fn check_same(&self, other: &Torus1) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(n = {}, period = {}) vs (n = {}, period = {})",
                self.n, self.period, other.n, other.period
            )))
        }
    }
}

/// Nodal samples of a continuous function on the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridFnRepr", into = "GridFnRepr")]
pub struct GridFn {
    grid: Torus1,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridFnRepr {
    n: usize,
    period: f64,
    values: Vec<f64>,
}

impl TryFrom<GridFnRepr> for GridFn {
    type Error = Error;

    fn try_from(r: GridFnRepr) -> Result<Self> {
        let grid = Torus1::new(r.n, r.period)?;
        GridFn::new(grid, r.values)
    }
}

impl From<GridFn> for GridFnRepr {
    fn from(u: GridFn) -> Self {
        GridFnRepr {
            n: u.grid.n,
            period: u.grid.period,
            values: u.values,
        }
    }
}

impl GridFn {
    pub fn new(grid: Torus1, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.n
            )));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(GridFn { grid, values })
    }

    pub fn constant(grid: Torus1, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.n])
    }

    pub fn from_fn(grid: Torus1, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> &Torus1 {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at node `i` with periodic wrap (negative indices allowed).
    pub fn at(&self, i: isize) -> f64 {
        self.values[i.rem_euclid(self.grid.n as isize) as usize]
    }

    /// Piecewise-linear periodic interpolation, exact at nodes.
    pub fn interp(&self, x: f64) -> f64 {
        let (i, f) = self.grid.locate(x);
        if f == 0.0 {
            return self.values[i];
        }
        let j = (i + 1) % self.grid.n;
        // convex combination keeps the result monotone in each nodal value
        (1.0 - f) * self.values[i] + f * self.values[j]
    }

    /// Resamples onto another grid by interpolation.
    pub fn resample(&self, grid: Torus1) -> Result<GridFn> {
        GridFn::from_fn(grid, |x| self.interp(x))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn sup_dist(&self, other: &GridFn) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Backward and forward difference quotients at node `i`.
    pub fn one_sided_slopes(&self, i: usize) -> (f64, f64) {
        let dx = self.grid.dx();
        let i = i as isize;
        let c = self.at(i);
        ((c - self.at(i - 1)) / dx, (self.at(i + 1) - c) / dx)
    }

    /// Largest absolute forward difference quotient.
    pub fn lipschitz_estimate(&self) -> f64 {
        let dx = self.grid.dx();
        (0..self.grid.n)
            .map(|i| (self.at(i as isize + 1) - self.values[i]).abs() / dx)
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GridFn> {
        GridFn::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &GridFn, f: impl Fn(f64, f64) -> f64) -> Result<GridFn> {
        self.grid.check_same(&other.grid)?;
        GridFn::new(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    /// Writes `x,value` rows with a header line.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            wtr.serialize((self.grid.node(i), v))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads `x,value` rows (header optional) as nodal values on a grid of the
    /// given period. Rows must be in node order.
    pub fn read_csv<R: Read>(r: R, period: f64) -> Result<GridFn> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "expected 2 columns, got {}",
                    rec.len()
                )));
            }
            match rec[1].trim().parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) if values.is_empty() => continue, // header
                Err(e) => return Err(Error::InvalidArgument(format!("bad value {:?}: {e}", &rec[1]))),
            }
        }
        let grid = Torus1::new(values.len(), period)?;
        GridFn::new(grid, values)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<GridFn> {
        Ok(serde_json::from_str(s)?)
    }
}

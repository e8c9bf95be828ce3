//! Uniform symmetric grids on R^d (d ∈ {1, 2}) and the discrete realisation
//! of the continuous Fourier transform
//!
//! ```text
//!     Ft(f)(s)   = ∫ f(x) e^{+i x·s} dx
//!     Ft⁻¹(g)(x) = (2π)^{-d} ∫ g(s) e^{-i x·s} ds
//! ```
//!
//! A grid with `N` points per axis on `[-L, L)` has spacing `Δ = 2L/N`. Its
//! dual (frequency) grid has spacing `2π/(NΔ) = π/L` and covers
//! `[-π/Δ, π/Δ)`, so it is again a grid of the same kind with half-width
//! `π/Δ`. Taking the dual twice returns the original grid.
//!
//! Both transforms are periodic trapezoid sums evaluated with an FFT; the
//! origin shift to `-L` reduces to alternating signs because `N/2` is even.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GRID_MATCH_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct GridSpec {
    #[serde(rename = "L")]
    half_width: f64,
    #[serde(rename = "N")]
    points: usize,
    dim: usize,
}

/// Uniform grid `x_j = -L + jΔ`, `j = 0..N`, on each of `dim` axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    dim: usize,
    half_width: f64,
    points: usize,
}

impl TryFrom<GridSpec> for Grid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        Grid::new(spec.dim, spec.half_width, spec.points)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec {
            half_width: g.half_width,
            points: g.points,
            dim: g.dim,
        }
    }
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half-width {half_width} must be positive")));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "{points} points per axis: need a power of two >= 8"
            )));
        }
        Ok(Grid {
            dim,
            half_width,
            points,
        })
    }

    /// `L = 20`, `N = 1024`.
    pub fn default_1d() -> Self {
        Grid::new(1, 20.0, 1024).unwrap()
    }

    /// `L = 10`, `N = 256` per axis.
    pub fn default_2d() -> Self {
        Grid::new(2, 10.0, 256).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Total number of nodes, `N^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of index `j` along one axis.
    pub fn coord(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    /// Per-axis index of the node at the origin.
    pub fn origin_axis_index(&self) -> usize {
        self.points / 2
    }

    /// Flat index of the origin node.
    pub fn origin_index(&self) -> usize {
        let o = self.origin_axis_index();
        match self.dim {
            1 => o,
            _ => o * self.points + o,
        }
    }

    /// Per-axis indices of a flat (row-major) index. The second entry is 0 in 1-D.
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.points, idx % self.points],
        }
    }

    pub fn flatten(&self, ij: [usize; 2]) -> usize {
        match self.dim {
            1 => ij[0],
            _ => ij[0] * self.points + ij[1],
        }
    }

    /// Coordinates of a flat index; unused axes are 0.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.unflatten(idx);
        match self.dim {
            1 => [self.coord(i), 0.0],
            _ => [self.coord(i), self.coord(j)],
        }
    }

    /// Grid induced by the Fourier transform.
    pub fn dual(&self) -> Grid {
        Grid {
            dim: self.dim,
            half_width: PI / self.spacing(),
            points: self.points,
        }
    }

    /// Equality up to the rounding introduced by `dual().dual()`.
    pub fn matches(&self, other: &Grid) -> bool {
        self.dim == other.dim
            && self.points == other.points
            && (self.half_width - other.half_width).abs() <= GRID_MATCH_RTOL * self.half_width.max(other.half_width)
    }

    /// Cell volume `Δ^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Nearest per-axis index of coordinate `x`, if inside the box.
    pub fn nearest_axis_index(&self, x: f64) -> Option<usize> {
        let j = ((x + self.half_width) / self.spacing()).round();
        if j < 0.0 || j >= self.points as f64 {
            None
        } else {
            Some(j as usize)
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .take(self.dim)
            .all(|&xi| xi >= -self.half_width && xi <= self.half_width)
    }
}

/// Complex function sampled on a [`Grid`], stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedFunction {
    grid: Grid,
    values: Vec<Complex64>,
}

impl GriddedFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(GriddedFunction { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        GriddedFunction {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let p = grid.point(idx);
                f(&p[..grid.dim()])
            })
            .collect();
        GriddedFunction { grid, values }
    }

    pub fn from_real_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn value_at_origin(&self) -> Complex64 {
        self.values[self.grid.origin_index()]
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        GriddedFunction {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise map with access to the node coordinates.
    pub fn map_with_point(&self, f: impl Fn(&[f64], Complex64) -> Complex64) -> Self {
        let dim = self.grid.dim();
        GriddedFunction {
            grid: self.grid,
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(idx, &v)| f(&self.grid.point(idx)[..dim], v))
                .collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if !self.grid.matches(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(GriddedFunction {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|v| v * c)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest `|self - other|` over nodes whose coordinates satisfy `keep`.
    pub fn max_abs_diff_where(&self, other: &Self, keep: impl Fn(&[f64]) -> bool) -> Result<f64> {
        if !self.grid.matches(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let dim = self.grid.dim();
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .filter(|(idx, _)| keep(&self.grid.point(*idx)[..dim]))
            .map(|(_, (a, b))| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Writes `node,re,im` (or `node1,node2,re,im` in 2-D).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_csv_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_to<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        match self.grid.dim() {
            1 => w.write_record(["node", "re", "im"])?,
            _ => w.write_record(["node1", "node2", "re", "im"])?,
        }
        for (idx, v) in self.values.iter().enumerate() {
            let p = self.grid.point(idx);
            let mut rec: Vec<String> = p[..self.grid.dim()].iter().map(|x| format!("{x:e}")).collect();
            rec.push(format!("{:e}", v.re));
            rec.push(format!("{:e}", v.im));
            w.write_record(&rec)?;
        }
        Ok(())
    }

    /// Reads the format written by [`GriddedFunction::write_csv`], inferring the grid.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        Self::read_csv_from(&mut r)
    }

    pub fn read_csv_from<R: std::io::Read>(r: &mut csv::Reader<R>) -> Result<Self> {
        let headers = r.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let dim = match names.as_slice() {
            ["node", "re", "im"] => 1,
            ["node1", "node2", "re", "im"] => 2,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unexpected gridded-function header {names:?}"
                )))
            }
        };
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidArgument(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            nodes.push(nums[0]);
            values.push(Complex64::new(nums[dim], nums[dim + 1]));
        }
        let points = match dim {
            1 => values.len(),
            _ => (values.len() as f64).sqrt().round() as usize,
        };
        if points < 2 {
            return Err(Error::InvalidArgument("too few rows".into()));
        }
        // In 2-D the first column is constant over a row of `points` entries.
        let step = match dim {
            1 => nodes[1] - nodes[0],
            _ => nodes[points] - nodes[0],
        };
        let half_width = step * points as f64 / 2.0;
        let grid = Grid::new(dim, half_width, points)?;
        if (nodes[0] + half_width).abs() > 1e-9 * half_width {
            return Err(Error::InvalidArgument("first node is not -L".into()));
        }
        GriddedFunction::new(grid, values)
    }
}

/// A gridded function together with a node mask (`true` = defined).
#[derive(Debug, Clone)]
pub struct MaskedFunction {
    pub function: GriddedFunction,
    pub mask: Vec<bool>,
}

impl MaskedFunction {
    pub fn masked_fraction(&self) -> f64 {
        self.mask.iter().filter(|m| !**m).count() as f64 / self.mask.len() as f64
    }
}

/// `+1` for even index sums, `-1` otherwise.
fn checker_sign(grid: &Grid, idx: usize) -> f64 {
    let [i, j] = grid.unflatten(idx);
    if (i + j) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Copy)]
enum Direction {
    /// `e^{+2πi jk/N}` kernel.
    Positive,
    /// `e^{-2πi jk/N}` kernel.
    Negative,
}

fn fft_nd(grid: &Grid, data: &mut [Complex64], direction: Direction) {
    let n = grid.points();
    let mut planner = FftPlanner::new();
    let fft = match direction {
        Direction::Positive => planner.plan_fft_inverse(n),
        Direction::Negative => planner.plan_fft_forward(n),
    };
    match grid.dim() {
        1 => fft.process(data),
        _ => {
            // rows (axis 1), then columns (axis 0)
            fft.process(data);
            let mut column = vec![Complex64::new(0.0, 0.0); n];
            for c in 0..n {
                for r in 0..n {
                    column[r] = data[r * n + c];
                }
                fft.process(&mut column);
                for r in 0..n {
                    data[r * n + c] = column[r];
                }
            }
        }
    }
}

fn transform(f: &GriddedFunction, direction: Direction, factor: f64) -> GriddedFunction {
    let grid = *f.grid();
    let mut data: Vec<Complex64> = f
        .values()
        .iter()
        .enumerate()
        .map(|(idx, &v)| v * checker_sign(&grid, idx))
        .collect();
    fft_nd(&grid, &mut data, direction);
    for (idx, v) in data.iter_mut().enumerate() {
        *v *= checker_sign(&grid, idx) * factor;
    }
    GriddedFunction {
        grid: grid.dual(),
        values: data,
    }
}

/// Trapezoid approximation of `∫ f(x) e^{ix·s} dx` on the dual grid.
pub fn forward_ft(f: &GriddedFunction) -> GriddedFunction {
    let factor = f.grid().cell_volume();
    transform(f, Direction::Positive, factor)
}

/// Trapezoid approximation of `(2π)^{-d} ∫ g(s) e^{-ix·s} ds` on the dual grid.
pub fn inverse_ft(g: &GriddedFunction) -> GriddedFunction {
    let grid = g.grid();
    let factor = (grid.spacing() / (2.0 * PI)).powi(grid.dim() as i32);
    transform(g, Direction::Negative, factor)
}

/// Largest modulus on the outer 5% of the box (nodes with `max|x_i| > 0.95 L`).
fn outer_band_max(f: &GriddedFunction) -> f64 {
    let grid = f.grid();
    let edge = 0.95 * grid.half_width();
    f.values()
        .iter()
        .enumerate()
        .filter(|(idx, _)| grid.point(*idx)[..grid.dim()].iter().any(|x| x.abs() > edge))
        .map(|(_, v)| v.norm())
        .fold(0.0, f64::max)
}

/// Whether `f` has decayed to below `1e-6` of its maximum on the outer band.
pub fn decays_within_grid(f: &GriddedFunction) -> bool {
    let peak = f.max_abs();
    peak == 0.0 || outer_band_max(f) < 1e-6 * peak
}

/// Circular convolution `f ∗ g` computed as `Ft⁻¹(Ft f · Ft g)`.
///
/// Logs a warning when either operand has not decayed at the grid edge, since
/// the result then wraps around.
pub fn convolve(f: &GriddedFunction, g: &GriddedFunction) -> Result<GriddedFunction> {
    if !f.grid().matches(g.grid()) {
        return Err(Error::GridMismatch);
    }
    for (name, h) in [("f", f), ("g", g)] {
        if !decays_within_grid(h) {
            log::warn!("convolve: operand {name} does not decay within the grid; result will alias");
        }
    }
    let product = forward_ft(f).mul(&forward_ft(g))?;
    let mut out = inverse_ft(&product);
    out.grid = *f.grid();
    Ok(out)
}

/// Second-order central-difference derivative along `axis`, one-sided
/// second-order stencils at the two ends.
pub fn spectral_derivative(g: &GriddedFunction, axis: usize) -> Result<GriddedFunction> {
    let grid = *g.grid();
    if axis >= grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} out of range for a {}-d grid",
            grid.dim()
        )));
    }
    let n = grid.points();
    let h = grid.spacing();
    let v = g.values();
    let stride = if grid.dim() == 2 && axis == 0 { n } else { 1 };
    let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let ij = grid.unflatten(idx);
        let pos = ij[if grid.dim() == 2 { axis } else { 0 }];
        let at = |offset: isize| v[(idx as isize + offset * stride as isize) as usize];
        *o = if pos == 0 {
            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
        } else if pos == n - 1 {
            (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h)
        } else {
            (at(1) - at(-1)) / (2.0 * h)
        };
    }
    GriddedFunction::new(grid, out)
}

/// Periodic trapezoid rule over the grid box, `Δ^d Σ f(x_j)`.
pub fn quadrature(f: &GriddedFunction) -> Complex64 {
    let sum: Complex64 = f.values().iter().sum();
    sum * f.grid().cell_volume()
}

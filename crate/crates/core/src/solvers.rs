//! Inverse problems: deconvolution with a known error characteristic
//! function, division past isolated zeros, and the two-unknown system
//! `ε₁ = γφ`, `ε₂ₖ = −i γ′ₖ φ` of errors-in-variables regression.

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::SpectralTriple;
use crate::gf::bounds::{clip_with_count, PolyBound};
use crate::gf::GeneralizedFunction;
use crate::grid::{inverse_ft, Grid, GriddedFunction};

/// What the system solver stores outside the support window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutsideWindow {
    /// `γ̂ = 0` outside the window.
    #[default]
    Zero,
    /// Leave the nodes masked; they are reported but still zero in `γ̂`.
    Mask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Threshold on `|ε̂₁|` delimiting the support window.
    pub zeta: f64,
    /// Envelope for clipping `φ̂⁻¹`.
    pub bound: PolyBound,
    /// `|φ| < tau` counts as a zero of `φ`.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Optional spectral cut-off `T`.
    #[serde(default)]
    pub cutoff: Option<f64>,
    /// `γ(0)` for the direct branch; `[re, im]`.
    #[serde(default = "default_c")]
    pub c: [f64; 2],
    #[serde(default)]
    pub outside: OutsideWindow,
}

fn default_tau() -> f64 {
    1e-6
}

fn default_c() -> [f64; 2] {
    [1.0, 0.0]
}

/// `ζ = 4 n^{-1/2} log n`.
pub fn default_zeta(n: usize) -> f64 {
    let n = n.max(2) as f64;
    4.0 * n.ln() / n.sqrt()
}

impl SolverConfig {
    pub fn new(zeta: f64, bound: PolyBound) -> Self {
        SolverConfig {
            zeta,
            bound,
            tau: default_tau(),
            cutoff: None,
            c: default_c(),
            outside: OutsideWindow::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta.is_finite() && self.zeta > 0.0) {
            return Err(Error::InvalidArgument(format!("zeta = {} must be positive", self.zeta)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau = {} must be positive", self.tau)));
        }
        if let Some(t) = self.cutoff {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("cut-off T = {t} must be positive")));
            }
        }
        if !(self.c[0].is_finite() && self.c[1].is_finite()) || (self.c[0] == 0.0 && self.c[1] == 0.0) {
            return Err(Error::InvalidArgument("c must be finite and non-zero".into()));
        }
        self.bound.validate()
    }

    pub fn c(&self) -> Complex64 {
        Complex64::new(self.c[0], self.c[1])
    }
}

/// Connected set of frequency nodes containing the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportWindow {
    grid: Grid,
    inside: Vec<bool>,
    boundary: Vec<bool>,
}

impl SupportWindow {
    /// Builds the window from a node set; keeps the component of the origin.
    pub fn from_mask(grid: Grid, mask: &[bool]) -> Result<Self> {
        if mask.len() != grid.len() {
            return Err(Error::InvalidArgument("mask length differs from the grid".into()));
        }
        let origin = grid.origin_index();
        if !mask[origin] {
            return Err(Error::Rejected("the support window must contain the origin".into()));
        }
        let n = grid.points();
        let mut inside = vec![false; grid.len()];
        let mut queue = VecDeque::from([origin]);
        inside[origin] = true;
        while let Some(idx) = queue.pop_front() {
            for nb in neighbours(&grid, idx) {
                if mask[nb] && !inside[nb] {
                    inside[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        let boundary = (0..grid.len())
            .map(|idx| {
                inside[idx] && {
                    let ij = grid.unflatten(idx);
                    let on_edge = ij[..grid.dim()].iter().any(|&p| p == 0 || p == n - 1);
                    on_edge || neighbours(&grid, idx).any(|nb| !inside[nb])
                }
            })
            .collect();
        Ok(SupportWindow { grid, inside, boundary })
    }

    pub fn whole(grid: Grid) -> Self {
        Self::from_mask(grid, &vec![true; grid.len()]).expect("origin is a node")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.inside[idx]
    }

    pub fn mask(&self) -> &[bool] {
        &self.inside
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.boundary[idx]
    }

    pub fn len(&self) -> usize {
        self.inside.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Extent `[lo, hi]` of the window along the first axis through the origin.
    pub fn extent(&self) -> [f64; 2] {
        let g = &self.grid;
        let o = g.origin_axis_index();
        let at = |j: usize| match g.dim() {
            1 => j,
            _ => g.flatten([j, o]),
        };
        let mut lo = o;
        while lo > 0 && self.inside[at(lo - 1)] {
            lo -= 1;
        }
        let mut hi = o;
        while hi + 1 < g.points() && self.inside[at(hi + 1)] {
            hi += 1;
        }
        [g.coord(lo), g.coord(hi)]
    }
}

/// Axis neighbours of a node (2 in 1-D, up to 4 in 2-D).
fn neighbours(grid: &Grid, idx: usize) -> impl Iterator<Item = usize> {
    let n = grid.points();
    let dim = grid.dim();
    let ij = grid.unflatten(idx);
    let grid = *grid;
    (0..dim).flat_map(move |axis| {
        let p = ij[if dim == 1 { 0 } else { axis }];
        let mut out = Vec::with_capacity(2);
        for q in [p.wrapping_sub(1), p + 1] {
            if q < n {
                let mut c = ij;
                c[if dim == 1 { 0 } else { axis }] = q;
                out.push(if dim == 1 { q } else { grid.flatten(c) });
            }
        }
        out
    })
}

/// Largest connected node set containing the origin with `|ε₁| ≥ ζ`.
pub fn support_window(eps1: &GriddedFunction, zeta: f64) -> Result<SupportWindow> {
    if eps1.value_at_origin().norm() < zeta {
        return Err(Error::Rejected(format!(
            "|ε₁(0)| = {:e} is below the threshold {zeta:e}",
            eps1.value_at_origin().norm()
        )));
    }
    let mask: Vec<bool> = eps1.values().iter().map(|v| v.norm() >= zeta).collect();
    SupportWindow::from_mask(*eps1.grid(), &mask)
}

/// `ε/φ` with zero bands of `φ` (`|φ| < tau`) bridged by a least-squares
/// cubic through the four nearest valid nodes on each side.
///
/// Rejects bands wider than 5% of the grid. Zero bands are supported on R
/// only.
pub fn divide_with_zeros(eps: &GriddedFunction, phi: &GriddedFunction, tau: f64) -> Result<GriddedFunction> {
    if !eps.grid().matches(phi.grid()) {
        return Err(Error::GridMismatch);
    }
    let grid = *eps.grid();
    let zero: Vec<bool> = phi.values().iter().map(|v| !(v.norm() >= tau)).collect();
    let mut out: Vec<Complex64> = eps
        .values()
        .iter()
        .zip(phi.values())
        .zip(&zero)
        .map(|((e, p), z)| if *z { Complex64::new(0.0, 0.0) } else { e / p })
        .collect();
    if !zero.iter().any(|z| *z) {
        return GriddedFunction::new(grid, out);
    }
    if grid.dim() != 1 {
        return Err(Error::Rejected("zeros of φ on a 2-d grid are not supported".into()));
    }
    let n = grid.points();
    let max_band = n / 20;
    let mut j = 0;
    while j < n {
        if !zero[j] {
            j += 1;
            continue;
        }
        let start = j;
        while j < n && zero[j] {
            j += 1;
        }
        let width = j - start;
        if width > max_band {
            return Err(Error::Rejected(format!(
                "zero band of {width} nodes exceeds 5% of the grid; zeros are not isolated"
            )));
        }
        let left: Vec<usize> = (0..start).rev().filter(|&k| !zero[k]).take(4).collect();
        let right: Vec<usize> = (j..n).filter(|&k| !zero[k]).take(4).collect();
        let support: Vec<usize> = left.into_iter().chain(right).collect();
        if support.is_empty() {
            return Err(Error::Rejected("φ vanishes on the whole grid".into()));
        }
        let xs: Vec<f64> = support.iter().map(|&k| grid.coord(k)).collect();
        let ys: Vec<Complex64> = support.iter().map(|&k| out[k]).collect();
        let fit = least_squares_poly(&xs, &ys, 3.min(support.len() - 1));
        for (k, o) in out.iter_mut().enumerate().take(j).skip(start) {
            *o = fit(grid.coord(k));
        }
    }
    GriddedFunction::new(grid, out)
}

/// Least-squares polynomial of the given degree, centred and scaled for
/// conditioning.
fn least_squares_poly(xs: &[f64], ys: &[Complex64], degree: usize) -> impl Fn(f64) -> Complex64 {
    let m = xs.len();
    let centre = xs.iter().sum::<f64>() / m as f64;
    let scale = xs.iter().map(|x| (x - centre).abs()).fold(0.0, f64::max).max(1e-300);
    let cols = degree + 1;
    let a = nalgebra::DMatrix::from_fn(m, cols, |r, c| {
        Complex64::new(((xs[r] - centre) / scale).powi(c as i32), 0.0)
    });
    let b = nalgebra::DVector::from_column_slice(ys);
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .unwrap_or_else(|_| nalgebra::DVector::from_element(cols, Complex64::new(0.0, 0.0)));
    move |x| {
        let t = (x - centre) / scale;
        coef.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * t + c)
    }
}

/// Multiplies by the indicator of the box `max_k |s_k| < T`.
pub fn spectral_cutoff(eps: &GriddedFunction, t: f64) -> Result<GriddedFunction> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("cut-off T = {t} must be positive")));
    }
    let dim = eps.grid().dim();
    Ok(eps.map_with_point(|s, v| {
        if s[..dim].iter().all(|x| x.abs() < t) {
            v
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// Deconvolution with known `φ`: `ĝ = Ft⁻¹(ε/φ)` (optionally cut off).
///
/// Rejects when `|φ| < tau` on more than half of the grid.
pub fn deconvolve_known_cf(
    eps: &GriddedFunction,
    phi: &GriddedFunction,
    cfg: &SolverConfig,
) -> Result<GeneralizedFunction> {
    if !eps.grid().matches(phi.grid()) {
        return Err(Error::GridMismatch);
    }
    if !(cfg.tau.is_finite() && cfg.tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau = {} must be positive", cfg.tau)));
    }
    let small = phi.values().iter().filter(|v| !(v.norm() >= cfg.tau)).count();
    if 2 * small > phi.values().len() {
        return Err(Error::Rejected(format!(
            "|φ| < {:e} on {:.1}% of the frequency grid: the error law is too smooth for direct inversion",
            cfg.tau,
            100.0 * small as f64 / phi.values().len() as f64
        )));
    }
    let mut gamma = divide_with_zeros(eps, phi, cfg.tau)?;
    if let Some(t) = cfg.cutoff {
        gamma = spectral_cutoff(&gamma, t)?;
    }
    Ok(inverse_ft(&gamma).into())
}

/// `((ε₁)′ₖ − i ε₂ₖ)/ε₁` on the window, zero outside.
pub fn kappa_hat(
    eps1: &GriddedFunction,
    eps1_deriv_k: &GriddedFunction,
    eps2_k: &GriddedFunction,
    window: &SupportWindow,
) -> Result<GriddedFunction> {
    for f in [eps1_deriv_k, eps2_k] {
        if !f.grid().matches(eps1.grid()) {
            return Err(Error::GridMismatch);
        }
    }
    if !window.grid().matches(eps1.grid()) {
        return Err(Error::GridMismatch);
    }
    let i = Complex64::new(0.0, 1.0);
    let values = (0..eps1.values().len())
        .map(|idx| {
            if window.contains(idx) {
                (eps1_deriv_k.values()[idx] - i * eps2_k.values()[idx]) / eps1.values()[idx]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    GriddedFunction::new(*eps1.grid(), values)
}

/// `∫₀^s Σₖ κₖ(t) dtₖ` along the straight segment, for every window node.
///
/// 1-D: cumulative fourth-order rule from the origin, dropping to third-order
/// and trapezoid stencils at the window edges. 2-D: Simpson's rule on the
/// segment with bilinear interpolation; nodes whose segment leaves the window
/// are dropped from the returned mask.
pub fn path_integral(kappas: &[GriddedFunction], window: &SupportWindow) -> Result<(GriddedFunction, Vec<bool>)> {
    let grid = *window.grid();
    if kappas.len() != grid.dim() || kappas.iter().any(|k| !k.grid().matches(&grid)) {
        return Err(Error::InvalidArgument("need one κ per axis on the window grid".into()));
    }
    if !window.contains(grid.origin_index()) {
        return Err(Error::Rejected("the window excludes the origin".into()));
    }
    match grid.dim() {
        1 => Ok(path_integral_1d(&kappas[0], window)),
        _ => Ok(path_integral_2d(kappas, window)),
    }
}

fn path_integral_1d(kappa: &GriddedFunction, window: &SupportWindow) -> (GriddedFunction, Vec<bool>) {
    let grid = *window.grid();
    let n = grid.points();
    let h = grid.spacing();
    let k = kappa.values();
    let ok = |j: isize| j >= 0 && (j as usize) < n && window.contains(j as usize);
    // ∫ over [s_j, s_{j+1}]
    let cell = |j: isize| -> Complex64 {
        let f = |i: isize| k[i as usize];
        match (ok(j - 1), ok(j + 2)) {
            (true, true) => (-f(j - 1) + 13.0 * f(j) + 13.0 * f(j + 1) - f(j + 2)) * (h / 24.0),
            (true, false) => (-f(j - 1) + 8.0 * f(j) + 5.0 * f(j + 1)) * (h / 12.0),
            (false, true) => (5.0 * f(j) + 8.0 * f(j + 1) - f(j + 2)) * (h / 12.0),
            (false, false) => (f(j) + f(j + 1)) * (h / 2.0),
        }
    };
    let o = grid.origin_axis_index() as isize;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let mut acc = Complex64::new(0.0, 0.0);
    let mut j = o;
    while ok(j + 1) {
        acc += cell(j);
        out[(j + 1) as usize] = acc;
        j += 1;
    }
    acc = Complex64::new(0.0, 0.0);
    j = o;
    while ok(j - 1) {
        acc -= cell(j - 1);
        out[(j - 1) as usize] = acc;
        j -= 1;
    }
    let mask = window.mask().to_vec();
    (GriddedFunction::new(grid, out).expect("length matches"), mask)
}

fn path_integral_2d(kappas: &[GriddedFunction], window: &SupportWindow) -> (GriddedFunction, Vec<bool>) {
    use rayon::prelude::*;
    let grid = *window.grid();
    let n = grid.points();
    let h = grid.spacing();
    let o = grid.origin_axis_index() as f64;
    let lo = grid.coord(0);
    // bilinear interpolation of Σ_k κ_k s_k / |s| direction handled by caller
    let interp = |field: &GriddedFunction, t: [f64; 2]| -> Option<Complex64> {
        let fi = (t[0] - lo) / h;
        let fj = (t[1] - lo) / h;
        let i0 = fi.floor();
        let j0 = fj.floor();
        let (a, b) = (fi - i0, fj - j0);
        let (i0, j0) = (i0 as isize, j0 as isize);
        let mut acc = Complex64::new(0.0, 0.0);
        for (di, wi) in [(0isize, 1.0 - a), (1, a)] {
            for (dj, wj) in [(0isize, 1.0 - b), (1, b)] {
                let w = wi * wj;
                if w == 0.0 {
                    continue;
                }
                let (i, j) = (i0 + di, j0 + dj);
                if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
                    return None;
                }
                let idx = grid.flatten([i as usize, j as usize]);
                if !window.contains(idx) {
                    return None;
                }
                acc += field.values()[idx] * w;
            }
        }
        Some(acc)
    };
    let results: Vec<(Complex64, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if !window.contains(idx) {
                return (Complex64::new(0.0, 0.0), false);
            }
            let [i, j] = grid.unflatten(idx);
            let steps = 2 * ((i as f64 - o).abs().max((j as f64 - o).abs()) as usize).max(1);
            let s = grid.point(idx);
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..=steps {
                let t = m as f64 / steps as f64;
                let p = [t * s[0], t * s[1]];
                let (Some(k0), Some(k1)) = (interp(&kappas[0], p), interp(&kappas[1], p)) else {
                    return (Complex64::new(0.0, 0.0), false);
                };
                let w = if m == 0 || m == steps {
                    1.0
                } else if m % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += (k0 * s[0] + k1 * s[1]) * w;
            }
            (acc / (3.0 * steps as f64), true)
        })
        .collect();
    let (values, mask): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    (GriddedFunction::new(grid, values).expect("length matches"), mask)
}

/// `φ̂⁻¹(s) = exp(−∫₀^s Σₖ κ̃ₖ dtₖ)` on the window, clipped onto `bound`;
/// zero outside the window. Returns the function, the effective mask and the
/// number of clipped nodes.
pub fn phi_inverse_hat(
    kappas: &[GriddedFunction],
    window: &SupportWindow,
    bound: &PolyBound,
) -> Result<(GriddedFunction, Vec<bool>, usize)> {
    let (integral, mask) = path_integral(kappas, window)?;
    let raw = integral.map(|v| (-v).exp());
    let (clipped, _) = clip_with_count(&raw, bound);
    let mut count = 0;
    let values = clipped
        .values()
        .iter()
        .zip(raw.values())
        .zip(&mask)
        .map(|((c, r), m)| {
            if *m {
                if c != r {
                    count += 1;
                }
                *c
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok((GriddedFunction::new(*window.grid(), values)?, mask, count))
}

/// Output of [`solve_system`].
#[derive(Debug, Clone)]
pub struct SystemSolution {
    pub g_hat: GeneralizedFunction,
    pub gamma_hat: GriddedFunction,
    /// `1/φ̂⁻¹` on the window, zero outside.
    pub phi_hat: GriddedFunction,
    pub window: SupportWindow,
    /// Nodes of the window where `γ̂` is defined.
    pub mask: Vec<bool>,
    pub clipped_fraction: f64,
}

/// Support window → `κ̃ₖ` → `φ̂⁻¹` → `γ̂ = φ̂⁻¹ ε̂₁` → `ĝ = Ft⁻¹(γ̂)`.
pub fn solve_system(triple: &SpectralTriple, cfg: &SolverConfig) -> Result<SystemSolution> {
    cfg.validate()?;
    let dim = triple.dim();
    if triple.eps1_deriv.len() != dim || triple.eps2.len() != dim {
        return Err(Error::InvalidArgument(
            "spectral triple needs one derivative and one ε₂ per axis".into(),
        ));
    }
    let window = support_window(&triple.eps1, cfg.zeta)?;
    if window.len() < 5 {
        return Err(Error::Rejected(format!(
            "support window has only {} nodes; identification is degenerate",
            window.len()
        )));
    }
    let kappas: Vec<GriddedFunction> = (0..dim)
        .map(|k| kappa_hat(&triple.eps1, &triple.eps1_deriv[k], &triple.eps2[k], &window))
        .collect::<Result<_>>()?;
    let (phi_inv, mask, clipped) = phi_inverse_hat(&kappas, &window, &cfg.bound)?;
    let mut gamma = phi_inv.mul(&triple.eps1)?;
    if let Some(t) = cfg.cutoff {
        gamma = spectral_cutoff(&gamma, t)?;
    }
    let phi_hat = phi_inv.map(|v| {
        if v.norm() > 0.0 {
            v.inv()
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let space = triple.eps1.grid().dual();
    let g = GriddedFunction::new(space, inverse_ft(&gamma).into_values())?;
    let in_window = mask.iter().filter(|m| **m).count().max(1);
    Ok(SystemSolution {
        g_hat: g.into(),
        gamma_hat: gamma,
        phi_hat,
        window,
        mask,
        clipped_fraction: clipped as f64 / in_window as f64,
    })
}

/// Direct branch: `κₖ = i ε₂ₖ/ε₁` and `γ = c·exp(∫₀^s Σₖ κₖ dtₖ)` on the
/// window, zero outside.
pub fn solve_direct(
    eps1: &GriddedFunction,
    eps2: &[GriddedFunction],
    window: &SupportWindow,
    c: Complex64,
) -> Result<GriddedFunction> {
    if c == Complex64::new(0.0, 0.0) || !(c.re.is_finite() && c.im.is_finite()) {
        return Err(Error::InvalidArgument("c must be finite and non-zero".into()));
    }
    if eps2.len() != eps1.grid().dim() {
        return Err(Error::InvalidArgument("need one ε₂ per axis".into()));
    }
    let i = Complex64::new(0.0, 1.0);
    let kappas: Vec<GriddedFunction> = eps2
        .iter()
        .map(|e2| {
            if !e2.grid().matches(eps1.grid()) {
                return Err(Error::GridMismatch);
            }
            let values = (0..eps1.values().len())
                .map(|idx| {
                    if window.contains(idx) {
                        i * e2.values()[idx] / eps1.values()[idx]
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            GriddedFunction::new(*eps1.grid(), values)
        })
        .collect::<Result<_>>()?;
    let (integral, mask) = path_integral(&kappas, window)?;
    let values = integral
        .values()
        .iter()
        .zip(&mask)
        .map(|(v, m)| if *m { c * v.exp() } else { Complex64::new(0.0, 0.0) })
        .collect();
    GriddedFunction::new(*eps1.grid(), values)
}

/// Summary written alongside solver outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub weak_distance: Option<f64>,
    pub window: [f64; 2],
    pub clipped_fraction: f64,
    pub masked_fraction: f64,
}

//! Polynomial growth classes: `|b(t)| < V·Π(1+t_i²)^{m_i}` and the integral
//! condition `∫ Π(1+t_i²)^{-m_i} |b(t)| dt < ∞`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{quadrature, GriddedFunction};

/// Bound `(m, V)` defining the envelope `V·Π(1+t_i²)^{m_i}`.
///
/// A single exponent is broadcast to every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyBound {
    pub m: Vec<u32>,
    #[serde(rename = "V")]
    pub v: f64,
}

impl PolyBound {
    pub fn new(m: Vec<u32>, v: f64) -> Result<Self> {
        let b = PolyBound { m, v };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v.is_finite() && self.v > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bound V = {} must be finite and positive",
                self.v
            )));
        }
        if self.m.is_empty() || self.m.len() > 2 {
            return Err(Error::InvalidArgument(
                "bound exponent m needs one or two entries".into(),
            ));
        }
        Ok(())
    }

    fn exponent(&self, axis: usize) -> u32 {
        *self.m.get(axis).unwrap_or(&self.m[0])
    }

    /// `Π(1+t_i²)^{m_i}`.
    pub fn weight(&self, t: &[f64]) -> f64 {
        t.iter()
            .enumerate()
            .map(|(i, &ti)| (1.0 + ti * ti).powi(self.exponent(i) as i32))
            .product()
    }

    /// `V·Π(1+t_i²)^{m_i}`.
    pub fn envelope(&self, t: &[f64]) -> f64 {
        self.v * self.weight(t)
    }

    pub fn inflated(&self, factor: f64) -> PolyBound {
        PolyBound {
            m: self.m.clone(),
            v: self.v * factor,
        }
    }
}

/// Magnitude clip onto the envelope, keeping the phase. Returns the clipped
/// function and the number of modified nodes.
pub fn clip_with_count(b: &GriddedFunction, bound: &PolyBound) -> (GriddedFunction, usize) {
    let mut clipped = 0usize;
    let dim = b.grid().dim();
    let mut out = b.clone();
    for (idx, v) in out.values_mut().iter_mut().enumerate() {
        let p = b.grid().point(idx);
        let env = bound.envelope(&p[..dim]);
        let mag = v.norm();
        if !(mag < env) {
            // NaN and ±∞ are clipped as well; they carry no usable phase
            *v = if mag.is_finite() && mag > 0.0 {
                *v * (env / mag)
            } else if v.re.is_finite() && v.im.is_finite() {
                *v
            } else {
                Complex64::new(env, 0.0)
            };
            clipped += 1;
        }
    }
    (out, clipped)
}

/// Pointwise clip `b ↦ b` if `|b| < V w`, else `V w · b/|b|`.
pub fn clip_to_bound(b: &GriddedFunction, bound: &PolyBound) -> GriddedFunction {
    clip_with_count(b, bound).0
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub holds: bool,
    /// Violating node closest to the origin (ties: lowest flat index).
    pub witness: Option<Vec<f64>>,
}

/// Whether `|b(t)| / Π(1+t_i²)^{m_i} < V` at every node.
pub fn check_uniform_bound(b: &GriddedFunction, bound: &PolyBound) -> BoundCheck {
    let grid = b.grid();
    let dim = grid.dim();
    let mut witness: Option<(f64, Vec<f64>)> = None;
    for (idx, v) in b.values().iter().enumerate() {
        let p = grid.point(idx);
        let t = &p[..dim];
        if !(v.norm() < bound.envelope(t)) {
            let r = t.iter().map(|x| x * x).sum::<f64>();
            if witness.as_ref().is_none_or(|(best, _)| r < *best) {
                witness = Some((r, t.to_vec()));
            }
        }
    }
    BoundCheck {
        holds: witness.is_none(),
        witness: witness.map(|(_, t)| t),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondsIntegral {
    pub value: f64,
    pub converged: bool,
}

/// Grid surrogate for `∫Π(1+t_i²)^{-m_i}|b(t)|dt < ∞`: the integral is
/// deemed convergent when the outer 10% of the box (`max|t_i| > 0.9 L`)
/// contributes less than 1% of the total.
pub fn check_conds_integral(b: &GriddedFunction, m: &[u32]) -> CondsIntegral {
    let grid = *b.grid();
    let dim = grid.dim();
    let bound = PolyBound { m: m.to_vec(), v: 1.0 };
    let edge = 0.9 * grid.half_width();
    let weighted = b.map_with_point(|t, v| Complex64::new(v.norm() / bound.weight(t), 0.0));
    let total = quadrature(&weighted).re;
    let tail: f64 = weighted
        .values()
        .iter()
        .enumerate()
        .filter(|(idx, _)| grid.point(*idx)[..dim].iter().any(|x| x.abs() > edge))
        .map(|(_, v)| v.re)
        .sum::<f64>()
        * grid.cell_volume();
    let converged = total.is_finite() && (total == 0.0 || tail < 0.01 * total);
    CondsIntegral {
        value: total,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;

    fn real(grid: Grid, f: impl Fn(f64) -> f64) -> GriddedFunction {
        GriddedFunction::from_real_fn(grid, |x| f(x[0]))
    }

    #[test]
    fn clip_examples() {
        let grid = Grid::default_1d().dual();
        let bound = PolyBound::new(vec![0], 1.0).unwrap();
        let inside = real(grid, |s| 0.5 / (1.0 + s * s));
        assert_eq!(clip_to_bound(&inside, &bound).values(), inside.values());

        // e^{t²} never drops below 1, so everything clips to modulus 1
        let small = Grid::new(1, 5.0, 64).unwrap();
        let big = real(small, |t| (t * t).exp());
        let out = clip_to_bound(&big, &bound);
        assert!(out
            .values()
            .iter()
            .all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));

        let zero = GriddedFunction::zeros(grid);
        assert_eq!(clip_to_bound(&zero, &bound).max_abs(), 0.0);
    }

    #[test]
    fn uniform_bound_examples() {
        let grid = Grid::default_1d().dual();
        let laplace = real(grid, |s| 1.0 / (1.0 + s * s));
        assert!(check_uniform_bound(&laplace, &PolyBound::new(vec![0], 1.1).unwrap()).holds);
        let inv = real(grid, |s| 1.0 + s * s);
        assert!(check_uniform_bound(&inv, &PolyBound::new(vec![1], 1.1).unwrap()).holds);
        let fail = check_uniform_bound(&inv, &PolyBound::new(vec![0], 10.0).unwrap());
        assert!(!fail.holds);
        let w = fail.witness.unwrap()[0].abs();
        // first node with 1 + s² >= 10
        assert!(w >= 3.0 && w < 3.0 + grid.spacing(), "{w}");

        // on a grid that has s = 3 as a node the witness is exactly |s| = 3
        let grid3 = Grid::new(1, 6.0, 64).unwrap();
        let inv3 = real(grid3, |s| 1.0 + s * s);
        let fail = check_uniform_bound(&inv3, &PolyBound::new(vec![0], 10.0).unwrap());
        assert!((fail.witness.unwrap()[0].abs() - 3.0).abs() < 1e-12);

        assert!(check_uniform_bound(&GriddedFunction::zeros(grid), &PolyBound::new(vec![3], 1e-9).unwrap()).holds);
    }

    #[test]
    fn conds_integral_examples() {
        let grid = Grid::default_1d().dual();
        let supersmooth = real(grid, |s| (0.5 * s * s).exp());
        for m in 0..4 {
            assert!(!check_conds_integral(&supersmooth, &[m]).converged);
        }
        let ordinary = real(grid, |s| 1.0 + s * s);
        let r = check_conds_integral(&ordinary, &[2]);
        assert!(r.converged, "{r:?}");
        let z = check_conds_integral(&GriddedFunction::zeros(grid), &[0]);
        assert_eq!(z.value, 0.0);
        assert!(z.converged);
    }

    #[test]
    fn invalid_bounds_are_rejected() {
        assert!(PolyBound::new(vec![0], 0.0).is_err());
        assert!(PolyBound::new(vec![0], f64::INFINITY).is_err());
        assert!(PolyBound::new(vec![], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn clip_is_idempotent_and_within_bound(
            vals in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 64),
            m in 0u32..3,
            v in 0.1f64..20.0,
        ) {
            let grid = Grid::new(1, 4.0, 64).unwrap();
            let b = GriddedFunction::new(grid, vals.iter().map(|&(r, i)| Complex64::new(r, i)).collect()).unwrap();
            let bound = PolyBound::new(vec![m], v).unwrap();
            let once = clip_to_bound(&b, &bound);
            let twice = clip_to_bound(&once, &bound);
            for (a, c) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - c).norm() <= 1e-14 * a.norm().max(1.0));
            }
            prop_assert!(check_uniform_bound(&once, &bound.inflated(1.0 + 1e-12)).holds);
        }
    }
}

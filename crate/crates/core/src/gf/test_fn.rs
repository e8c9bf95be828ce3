//! Rapidly decreasing test functions with analytic values, derivatives up to
//! order two and analytic Fourier transforms.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// One-dimensional factor of a (tensor-product) test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Profile {
    /// L²-normalised Hermite function dilated by `scale`:
    /// `scale^{-1/2} h_index(x/scale)`.
    Hermite { index: usize, scale: f64 },
    /// `exp(-(x-center)²/(2 scale²)) · exp(i freq x)`, not normalised.
    Gaussian { center: f64, scale: f64, freq: f64 },
    /// `exp(-|x|/scale)`. Only its values are available; it is used as a
    /// stand-alone functional in the supersmooth divergence demo.
    DoubleExponential { scale: f64 },
}

/// Values `h_{k-1}(u), h_k(u), h_{k+1}(u)` of the unscaled Hermite functions.
fn hermite_triplet(k: usize, u: f64) -> [f64; 3] {
    let h0 = PI.powf(-0.25) * (-0.5 * u * u).exp();
    let mut prev = 0.0;
    let mut cur = h0;
    // after the loop `cur` = h_k and `prev` = h_{k-1}
    for j in 0..k {
        let next = (2.0 / (j as f64 + 1.0)).sqrt() * u * cur - (j as f64 / (j as f64 + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    let next = (2.0 / (k as f64 + 1.0)).sqrt() * u * cur - (k as f64 / (k as f64 + 1.0)).sqrt() * prev;
    [prev, cur, next]
}

/// Unscaled Hermite functions `h_0(u), …, h_{count-1}(u)` in one pass.
pub fn hermite_family(count: usize, u: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * u * u).exp();
    for j in 0..count {
        out.push(cur);
        let next = (2.0 / (j as f64 + 1.0)).sqrt() * u * cur - (j as f64 / (j as f64 + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    out
}

impl Profile {
    fn validate(&self) -> Result<()> {
        let scale = match self {
            Profile::Hermite { scale, .. } | Profile::Gaussian { scale, .. } | Profile::DoubleExponential { scale } => {
                *scale
            }
        };
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "test-function scale {scale} must be positive"
            )));
        }
        Ok(())
    }

    /// `d^order/dx^order` of the profile at `x`, `order <= 2`.
    pub fn eval(&self, x: f64, order: u8) -> Result<Complex64> {
        match *self {
            Profile::Hermite { index: k, scale } => {
                let u = x / scale;
                let [hm, h, hp] = hermite_triplet(k, u);
                let v = match order {
                    0 => h / scale.sqrt(),
                    1 => {
                        let d = (k as f64 / 2.0).sqrt() * hm - ((k as f64 + 1.0) / 2.0).sqrt() * hp;
                        d / scale.powf(1.5)
                    }
                    2 => (u * u - (2 * k + 1) as f64) * h / scale.powf(2.5),
                    _ => return Err(Error::InvalidArgument(format!("derivative order {order} > 2"))),
                };
                Ok(Complex64::new(v, 0.0))
            }
            Profile::Gaussian { center, scale, freq } => {
                let y = x - center;
                let value = Complex64::from_polar((-0.5 * y * y / (scale * scale)).exp(), freq * x);
                let slope = Complex64::new(-y / (scale * scale), freq);
                Ok(match order {
                    0 => value,
                    1 => slope * value,
                    2 => (slope * slope - 1.0 / (scale * scale)) * value,
                    _ => return Err(Error::InvalidArgument(format!("derivative order {order} > 2"))),
                })
            }
            Profile::DoubleExponential { scale } => match order {
                0 => Ok(Complex64::new((-x.abs() / scale).exp(), 0.0)),
                _ => Err(Error::InvalidArgument("exp(-|x|) carries no stored derivatives".into())),
            },
        }
    }

    /// Fourier transform `∫ψ(x)e^{ixs}dx` as `(constant, profile)`.
    fn ft(&self) -> Result<(Complex64, Profile)> {
        match *self {
            // Ft(h_k^σ) = √(2π) i^k h_k^{1/σ}
            Profile::Hermite { index, scale } => Ok((
                Complex64::i().powu(index as u32) * (2.0 * PI).sqrt(),
                Profile::Hermite {
                    index,
                    scale: 1.0 / scale,
                },
            )),
            Profile::Gaussian { center, scale, freq } => Ok((
                Complex64::from_polar(scale * (2.0 * PI).sqrt(), center * freq),
                Profile::Gaussian {
                    center: -freq,
                    scale: 1.0 / scale,
                    freq: center,
                },
            )),
            Profile::DoubleExponential { .. } => Err(Error::InvalidArgument(
                "exp(-|x|) has no closed-form transform in this family".into(),
            )),
        }
    }

    /// `∫ψ(s)e^{-ixs}ds = Ft(ψ)(-x)`, the adjoint of `Ft` for the pairing `∫bψ̄`.
    fn adjoint_ft(&self) -> Result<(Complex64, Profile)> {
        match *self {
            Profile::Hermite { index, scale } => Ok((
                (-Complex64::i()).powu(index as u32) * (2.0 * PI).sqrt(),
                Profile::Hermite {
                    index,
                    scale: 1.0 / scale,
                },
            )),
            Profile::Gaussian { center, scale, freq } => Ok((
                Complex64::from_polar(scale * (2.0 * PI).sqrt(), center * freq),
                Profile::Gaussian {
                    center: freq,
                    scale: 1.0 / scale,
                    freq: -center,
                },
            )),
            Profile::DoubleExponential { .. } => self.ft(),
        }
    }

    /// Radius beyond which the profile is negligible, and the length scale of
    /// its oscillations (for choosing quadrature panels).
    pub fn extent(&self) -> (f64, f64) {
        match *self {
            Profile::Hermite { index, scale } => {
                let turning = (2.0 * index as f64 + 1.0).sqrt();
                (scale * (turning + 10.0), scale / turning)
            }
            Profile::Gaussian { center, scale, freq } => {
                let osc = if freq == 0.0 {
                    scale
                } else {
                    scale.min(1.0 / freq.abs())
                };
                (center.abs() + 12.0 * scale, osc)
            }
            Profile::DoubleExponential { scale } => (45.0 * scale, scale),
        }
    }
}

/// A test function `coef · Π_k profile_k(x_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub coef: Complex64,
    pub factors: Vec<Profile>,
}

impl TestFunction {
    pub fn new(coef: Complex64, factors: Vec<Profile>) -> Result<Self> {
        if factors.is_empty() || factors.len() > 2 {
            return Err(Error::InvalidArgument("test functions live on R or R²".into()));
        }
        for p in &factors {
            p.validate()?;
        }
        Ok(TestFunction { coef, factors })
    }

    pub fn hermite(index: usize, scale: f64) -> Self {
        Self::single(Profile::Hermite { index, scale })
    }

    pub fn hermite_2d(j: usize, k: usize, scale: f64) -> Self {
        TestFunction {
            coef: Complex64::new(1.0, 0.0),
            factors: vec![
                Profile::Hermite { index: j, scale },
                Profile::Hermite { index: k, scale },
            ],
        }
    }

    /// `exp(-(x-center)²/(2 scale²))`.
    pub fn gaussian(center: f64, scale: f64) -> Self {
        Self::single(Profile::Gaussian {
            center,
            scale,
            freq: 0.0,
        })
    }

    pub fn double_exponential(scale: f64) -> Self {
        Self::single(Profile::DoubleExponential { scale })
    }

    fn single(p: Profile) -> Self {
        TestFunction {
            coef: Complex64::new(1.0, 0.0),
            factors: vec![p],
        }
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.deriv(&[0, 0][..self.dim()], x)
            .expect("order-0 evaluation is always defined")
    }

    /// `∂^α ψ(x)`, with `α` a multi-index of length `dim`.
    pub fn deriv(&self, alpha: &[u8], x: &[f64]) -> Result<Complex64> {
        if alpha.len() != self.dim() || x.len() < self.dim() {
            return Err(Error::InvalidArgument(format!(
                "multi-index of length {} for a {}-d test function",
                alpha.len(),
                self.dim()
            )));
        }
        let mut v = self.coef;
        for ((p, &a), &xi) in self.factors.iter().zip(alpha).zip(x) {
            v *= p.eval(xi, a)?;
        }
        Ok(v)
    }

    /// `Ft(ψ)(s) = ∫ψ(x)e^{ix·s}dx`.
    pub fn ft(&self) -> Result<TestFunction> {
        let mut coef = self.coef;
        let mut factors = Vec::with_capacity(self.dim());
        for p in &self.factors {
            let (c, q) = p.ft()?;
            coef *= c;
            factors.push(q);
        }
        Ok(TestFunction { coef, factors })
    }

    /// `Ft*(ψ)(x) = ∫ψ(s)e^{-ix·s}ds`; satisfies `(Ft b, ψ) = (b, Ft*ψ)` for
    /// the pairing `(b, ψ) = ∫ b ψ̄`.
    pub fn adjoint_ft(&self) -> Result<TestFunction> {
        let mut coef = self.coef;
        let mut factors = Vec::with_capacity(self.dim());
        for p in &self.factors {
            let (c, q) = p.adjoint_ft()?;
            coef *= c;
            factors.push(q);
        }
        Ok(TestFunction { coef, factors })
    }

    /// Radius outside of which the function is negligible.
    pub fn radius(&self) -> f64 {
        self.factors.iter().map(|p| p.extent().0).fold(0.0, f64::max)
    }

    /// Smallest oscillation length among the factors.
    pub fn oscillation_scale(&self) -> f64 {
        self.factors.iter().map(|p| p.extent().1).fold(f64::INFINITY, f64::min)
    }

    /// Numerical rapid-decay check: `|x|⁸ |∂^α ψ(x)| < 1e-6` for `|α| <= 2`
    /// at every boundary node of `grid`.
    pub fn decays_on(&self, grid: &Grid) -> bool {
        if grid.dim() != self.dim() {
            return false;
        }
        let n = grid.points();
        let l = grid.half_width();
        let boundary: Vec<[f64; 2]> = match grid.dim() {
            1 => vec![[-l, 0.0], [l, 0.0]],
            _ => (0..n)
                .flat_map(|j| {
                    let t = grid.coord(j);
                    [[-l, t], [l, t], [t, -l], [t, l]]
                })
                .collect(),
        };
        let orders: Vec<Vec<u8>> = match grid.dim() {
            1 => vec![vec![0], vec![1], vec![2]],
            _ => vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1], vec![2, 0], vec![0, 2]],
        };
        let has_derivs = !self
            .factors
            .iter()
            .any(|p| matches!(p, Profile::DoubleExponential { .. }));
        boundary.iter().all(|x| {
            let r8 = x[..grid.dim()].iter().map(|v| v * v).sum::<f64>().powi(4);
            orders
                .iter()
                .filter(|a| has_derivs || a.iter().all(|&o| o == 0))
                .all(|a| match self.deriv(a, &x[..grid.dim()]) {
                    Ok(v) => r8 * v.norm() < 1e-6,
                    Err(_) => false,
                })
        })
    }
}

/// The first `count` dilated Hermite functions `h_0^σ, …, h_{count-1}^σ`.
pub fn hermite_test_set(count: usize, scale: f64) -> Result<Vec<TestFunction>> {
    if count == 0 {
        return Err(Error::InvalidArgument("empty Hermite test set".into()));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidArgument(format!("scale {scale} must be positive")));
    }
    Ok((0..count).map(|k| TestFunction::hermite(k, scale)).collect())
}

/// Scales of the default one-dimensional weak-metric family.
pub const DEFAULT_SCALES_1D: [f64; 3] = [0.5, 1.0, 1.5];
/// Number of Hermite indices per scale in 1-D.
pub const DEFAULT_COUNT_1D: usize = 16;

/// Default family of test functionals for the weak distance.
///
/// 1-D: `h_0, …, h_15` at scales 0.5, 1 and 1.5 (48 functionals).
/// 2-D: tensor products `h_j ⊗ h_k`, `j, k < 4`, at scales 0.5 and 0.75.
pub fn default_test_set(dim: usize) -> Vec<TestFunction> {
    match dim {
        1 => DEFAULT_SCALES_1D
            .iter()
            .flat_map(|&s| (0..DEFAULT_COUNT_1D).map(move |k| TestFunction::hermite(k, s)))
            .collect(),
        _ => [0.5, 0.75]
            .iter()
            .flat_map(|&s| (0..4).flat_map(move |j| (0..4).map(move |k| TestFunction::hermite_2d(j, k, s))))
            .collect(),
    }
}

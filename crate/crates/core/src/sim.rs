//! Synthetic data for the errors-in-variables model and the classical
//! measurement-error model, closed-form error characteristic functions and
//! the supersmooth ill-posedness sequence.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{ClassicalSample, Latent, ModelSample};
use crate::gf::test_fn::TestFunction;
use crate::gf::{Atom, GeneralizedFunction};
use crate::grid::{Grid, GriddedFunction};
use crate::quad;

/// One-dimensional law; in 2-D the coordinates are independent copies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum DistributionSpec {
    Gaussian {
        sigma: f64,
    },
    /// Density `exp(-|x|/b) / (2b)`.
    Laplace {
        b: f64,
    },
    /// Uniform on `[-a, a]`.
    Uniform {
        a: f64,
    },
    /// Triangular density `(1 - |x|/a)/a` on `[-a, a]`.
    Triangular {
        a: f64,
    },
    /// Mass `p` at `location`, mass `1-p` spread as `base`.
    MixtureWithAtom {
        p: f64,
        #[serde(default)]
        location: f64,
        base: Box<DistributionSpec>,
    },
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} = {v} must be positive")))
            }
        };
        match self {
            DistributionSpec::Gaussian { sigma } => positive("sigma", *sigma),
            DistributionSpec::Laplace { b } => positive("b", *b),
            DistributionSpec::Uniform { a } | DistributionSpec::Triangular { a } => positive("a", *a),
            DistributionSpec::MixtureWithAtom { p, location, base } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidArgument(format!("mixture weight {p} outside [0, 1]")));
                }
                if !location.is_finite() {
                    return Err(Error::InvalidArgument("atom location must be finite".into()));
                }
                base.validate()
            }
        }
    }

    /// Characteristic function `E e^{isX}`.
    pub fn cf(&self, s: f64) -> Complex64 {
        let real = |v: f64| Complex64::new(v, 0.0);
        match self {
            DistributionSpec::Gaussian { sigma } => real((-0.5 * sigma * sigma * s * s).exp()),
            DistributionSpec::Laplace { b } => real(1.0 / (1.0 + b * b * s * s)),
            DistributionSpec::Uniform { a } => real(sinc_ratio(a * s)),
            DistributionSpec::Triangular { a } => real(sinc_ratio(0.5 * a * s).powi(2)),
            DistributionSpec::MixtureWithAtom { p, location, base } => {
                Complex64::from_polar(*p, s * location) + base.cf(s) * (1.0 - p)
            }
        }
    }

    /// Density of the absolutely continuous part (mixtures: `(1-p)` times the
    /// base density).
    pub fn density(&self, x: f64) -> f64 {
        match self {
            DistributionSpec::Gaussian { sigma } => (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt()),
            DistributionSpec::Laplace { b } => (-x.abs() / b).exp() / (2.0 * b),
            DistributionSpec::Uniform { a } => {
                if x.abs() < *a {
                    0.5 / a
                } else if x.abs() == *a {
                    0.25 / a
                } else {
                    0.0
                }
            }
            DistributionSpec::Triangular { a } => (1.0 - x.abs() / a).max(0.0) / a,
            DistributionSpec::MixtureWithAtom { p, base, .. } => (1.0 - p) * base.density(x),
        }
    }

    /// Point masses `(location, weight)`.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            DistributionSpec::MixtureWithAtom { p, location, .. } if *p > 0.0 => vec![(*location, *p)],
            _ => Vec::new(),
        }
    }

    /// Distribution function, used for the generalized-density construction.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            DistributionSpec::Gaussian { sigma } => 0.5 * erfc(-x / (sigma * 2f64.sqrt())),
            DistributionSpec::Laplace { b } => {
                if x < 0.0 {
                    0.5 * (x / b).exp()
                } else {
                    1.0 - 0.5 * (-x / b).exp()
                }
            }
            DistributionSpec::Uniform { a } => ((x + a) / (2.0 * a)).clamp(0.0, 1.0),
            DistributionSpec::Triangular { a } => {
                let t = (x / a).clamp(-1.0, 1.0);
                if t < 0.0 {
                    0.5 * (1.0 + t).powi(2)
                } else {
                    1.0 - 0.5 * (1.0 - t).powi(2)
                }
            }
            DistributionSpec::MixtureWithAtom { p, location, base } => {
                let step = if x >= *location { 1.0 } else { 0.0 };
                p * step + (1.0 - p) * base.cdf(x)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            DistributionSpec::MixtureWithAtom { p, location, base } => p * location + (1.0 - p) * base.mean(),
            _ => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DistributionSpec::Gaussian { sigma } => {
                sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
            }
            DistributionSpec::Laplace { b } => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<bool>() {
                    b * e
                } else {
                    -b * e
                }
            }
            DistributionSpec::Uniform { a } => rng.random_range(-*a..*a),
            DistributionSpec::Triangular { a } => 0.5 * a * (rng.random_range(-1.0..1.0) + rng.random_range(-1.0..1.0)),
            DistributionSpec::MixtureWithAtom { p, location, base } => {
                // draw both so the stream position does not depend on the branch
                let u: f64 = rng.random();
                let b = base.sample(rng);
                if u < *p {
                    *location
                } else {
                    b
                }
            }
        }
    }

    /// The law as a generalized function on `grid` (1-D or product 2-D).
    pub fn to_generalized(&self, grid: Grid) -> Result<GeneralizedFunction> {
        self.validate()?;
        let dim = grid.dim();
        let atoms: Vec<Atom> = match dim {
            1 => self
                .atoms()
                .iter()
                .map(|&(a, w)| Atom::dirac(&[a], Complex64::new(w, 0.0)))
                .collect(),
            _ => {
                if !self.atoms().is_empty() {
                    return Err(Error::InvalidArgument(
                        "2-d product laws with atoms have singular line parts; not representable".into(),
                    ));
                }
                Vec::new()
            }
        };
        let regular = GriddedFunction::from_real_fn(grid, |x| x[..dim].iter().map(|&t| self.density(t)).product());
        let has_regular = !matches!(self, DistributionSpec::MixtureWithAtom { p, .. } if *p >= 1.0);
        GeneralizedFunction::new(grid, has_regular.then_some(regular), atoms)
    }
}

/// `sin(x)/x`, equal to 1 at 0.
fn sinc_ratio(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Complementary error function, Chebyshev fit with relative error below
/// 1.2e-7. Only distribution functions use it.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// `φ` on the frequency grid; in 2-D the product of per-axis transforms.
pub fn error_cf(spec: &DistributionSpec, freq_grid: &Grid) -> Result<GriddedFunction> {
    spec.validate()?;
    let dim = freq_grid.dim();
    Ok(GriddedFunction::from_fn(*freq_grid, |s| {
        s[..dim].iter().map(|&t| spec.cf(t)).product()
    }))
}

/// Regression function `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RegressionSpec {
    /// `amplitude · exp(-|x - center|²/(2 width²))`.
    GaussianBump { amplitude: f64, center: f64, width: f64 },
    /// Gaussian bump plus a constant: an integrable part plus a part whose
    /// transform is a multiple of δ.
    BumpPlusConstant {
        amplitude: f64,
        center: f64,
        width: f64,
        constant: f64,
    },
    /// `Σ weight_j δ_{location_j}`; only meaningful as a generalized function.
    SumOfPeaks { peaks: Vec<(f64, f64)> },
    /// `Σ_k coefs[k] x^k` (1-D), degree at most 3.
    Polynomial { coefs: Vec<f64> },
}

impl RegressionSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            RegressionSpec::GaussianBump { width, .. } | RegressionSpec::BumpPlusConstant { width, .. } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::InvalidArgument(format!("bump width {width} must be positive")));
                }
            }
            RegressionSpec::SumOfPeaks { peaks } => {
                if peaks.is_empty() || peaks.iter().any(|(a, w)| !a.is_finite() || !w.is_finite()) {
                    return Err(Error::InvalidArgument("peaks must be finite and non-empty".into()));
                }
            }
            RegressionSpec::Polynomial { coefs } => {
                if coefs.is_empty() || coefs.len() > 4 {
                    return Err(Error::InvalidArgument(
                        "polynomial degree must be between 0 and 3".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Pointwise value; `None` for the purely singular sum of peaks.
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        let bump = |amp: f64, c: f64, w: f64| {
            let r2: f64 = x.iter().map(|t| (t - c).powi(2)).sum();
            amp * (-0.5 * r2 / (w * w)).exp()
        };
        match self {
            RegressionSpec::GaussianBump {
                amplitude,
                center,
                width,
            } => Some(bump(*amplitude, *center, *width)),
            RegressionSpec::BumpPlusConstant {
                amplitude,
                center,
                width,
                constant,
            } => Some(bump(*amplitude, *center, *width) + constant),
            RegressionSpec::SumOfPeaks { .. } => None,
            RegressionSpec::Polynomial { coefs } => Some(coefs.iter().rev().fold(0.0, |acc, c| acc * x[0] + c)),
        }
    }

    /// `(γ(s), γ′(s))` on R for the Gaussian bump; `None` otherwise.
    pub fn transform_1d(&self, s: f64) -> Option<(Complex64, Complex64)> {
        match self {
            RegressionSpec::GaussianBump {
                amplitude,
                center,
                width,
            } => {
                let w2 = width * width;
                let gamma = Complex64::from_polar(
                    amplitude * width * (2.0 * PI).sqrt() * (-0.5 * w2 * s * s).exp(),
                    center * s,
                );
                Some((gamma, Complex64::new(-w2 * s, *center) * gamma))
            }
            _ => None,
        }
    }

    /// `g` as a generalized function on `grid`.
    pub fn to_generalized(&self, grid: Grid) -> Result<GeneralizedFunction> {
        self.validate()?;
        let dim = grid.dim();
        match self {
            RegressionSpec::SumOfPeaks { peaks } => {
                if dim != 1 {
                    return Err(Error::InvalidArgument("sum of peaks is defined on R".into()));
                }
                let atoms = peaks
                    .iter()
                    .map(|&(a, w)| Atom::dirac(&[a], Complex64::new(w, 0.0)))
                    .collect();
                GeneralizedFunction::atomic(grid, atoms)
            }
            RegressionSpec::Polynomial { .. } if dim != 1 => {
                Err(Error::InvalidArgument("polynomial regression is defined on R".into()))
            }
            _ => Ok(GriddedFunction::from_real_fn(grid, |x| self.eval(&x[..dim]).unwrap_or(0.0)).into()),
        }
    }
}

/// Design of the errors-in-variables simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dim: usize,
    pub regression: RegressionSpec,
    /// Law of `u` in `x* = z − u`; `None` means `u = 0`.
    pub u: Option<DistributionSpec>,
    /// Law of the base noise of `u_x`; `None` means `u_x = 0`.
    pub u_x: Option<DistributionSpec>,
    /// Law of `u_y`; `None` means `u_y = 0`.
    pub u_y: Option<DistributionSpec>,
    /// `u_x = (1 + heteroskedasticity · |z₁|/(1+|z₁|)) · e`, `e` drawn from `u_x`.
    #[serde(default)]
    pub heteroskedasticity: f64,
    /// Standard deviation of each coordinate of `z ~ N(0, σ_z² I)`.
    #[serde(default = "default_sigma_z")]
    pub sigma_z: f64,
}

fn default_sigma_z() -> f64 {
    2.0
}

impl ModelSpec {
    pub fn new(regression: RegressionSpec, u: Option<DistributionSpec>) -> Self {
        ModelSpec {
            dim: 1,
            regression,
            u,
            u_x: Some(DistributionSpec::Gaussian { sigma: 0.2 }),
            u_y: Some(DistributionSpec::Gaussian { sigma: 0.1 }),
            heteroskedasticity: 0.5,
            sigma_z: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::InvalidArgument(format!("dimension {} not supported", self.dim)));
        }
        self.regression.validate()?;
        if matches!(self.regression, RegressionSpec::SumOfPeaks { .. }) {
            return Err(Error::InvalidArgument(
                "a sum of peaks has no pointwise values and cannot generate responses".into(),
            ));
        }
        if matches!(self.regression, RegressionSpec::Polynomial { .. }) && self.dim != 1 {
            return Err(Error::InvalidArgument("polynomial regression is defined on R".into()));
        }
        for (name, spec) in [("u", &self.u), ("u_x", &self.u_x), ("u_y", &self.u_y)] {
            if let Some(s) = spec {
                s.validate()?;
                if name != "u" && s.mean().abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!("{name} must have mean zero")));
                }
            }
        }
        if !(self.sigma_z.is_finite() && self.sigma_z > 0.0) {
            return Err(Error::InvalidArgument("sigma_z must be positive".into()));
        }
        if !(self.heteroskedasticity.is_finite() && self.heteroskedasticity >= 0.0) {
            return Err(Error::InvalidArgument("heteroskedasticity must be non-negative".into()));
        }
        Ok(())
    }
}

fn draw_vec<R: Rng>(spec: &Option<DistributionSpec>, dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| match spec {
            Some(s) => s.sample(rng),
            None => 0.0,
        })
        .collect()
}

/// Draws `n` observations: `z ~ N(0, σ_z²)`, `u` independent of `z`,
/// `x* = z − u`, `x = x* + u_x`, `y = g(x*) + u_y`.
pub fn sample_model(spec: &ModelSpec, n: usize, seed: u64) -> Result<Vec<ModelSample>> {
    spec.validate()?;
    let dim = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z: Vec<f64> = (0..dim)
            .map(|_| spec.sigma_z * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let u = draw_vec(&spec.u, dim, &mut rng);
        let e = draw_vec(&spec.u_x, dim, &mut rng);
        let u_y = draw_vec(&spec.u_y, 1, &mut rng)[0];
        let x_star: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a - b).collect();
        // re-round z so that z = x* + u holds exactly in floating point
        let z: Vec<f64> = x_star.iter().zip(&u).map(|(a, b)| a + b).collect();
        let factor = 1.0 + spec.heteroskedasticity * z[0].abs() / (1.0 + z[0].abs());
        let u_x: Vec<f64> = e.iter().map(|v| factor * v).collect();
        let x = x_star.iter().zip(&u_x).map(|(a, b)| a + b).collect();
        let y = spec.regression.eval(&x_star).expect("validated to be pointwise") + u_y;
        out.push(ModelSample {
            x,
            y,
            z,
            latent: Some(Latent { x_star, u, u_x, u_y }),
        });
    }
    Ok(out)
}

/// Draws `n` observations `z = x* + u` with `x* ~ signal`, `u ~ error`.
pub fn sample_classical(
    signal: &DistributionSpec,
    error: &DistributionSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<ClassicalSample>> {
    signal.validate()?;
    error.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let x = signal.sample(&mut rng);
            let u = error.sample(&mut rng);
            ClassicalSample {
                z: x + u,
                x_star: Some(x),
                u: Some(u),
            }
        })
        .collect())
}

/// Differences of the supersmooth divergence sequence for `φ(x) = e^{−x²}`:
/// `γₙ − γ = e^{x²}·I(n−1/n, n+1/n)` and `εₙ − ε = I(n−1/n, n+1/n)`.
#[derive(Debug, Clone)]
pub struct IllposedPair {
    pub n: usize,
    pub gamma_n_minus_gamma: GriddedFunction,
    pub eps_n_minus_eps: GriddedFunction,
}

impl IllposedPair {
    pub fn band(&self) -> (f64, f64) {
        band(self.n)
    }
}

fn band(n: usize) -> (f64, f64) {
    let n = n as f64;
    (n - 1.0 / n, n + 1.0 / n)
}

pub fn illposed_pair(n: usize, grid: &Grid) -> Result<IllposedPair> {
    if n < 2 {
        return Err(Error::InvalidArgument("the divergence sequence starts at n = 2".into()));
    }
    if grid.dim() != 1 {
        return Err(Error::InvalidArgument("the divergence sequence lives on R".into()));
    }
    let (lo, hi) = band(n);
    if hi >= grid.half_width() {
        return Err(Error::InvalidArgument(format!("band ({lo}, {hi}) leaves the grid")));
    }
    let inside = |x: f64| x > lo && x < hi;
    Ok(IllposedPair {
        n,
        gamma_n_minus_gamma: GriddedFunction::from_real_fn(
            *grid,
            |x| {
                if inside(x[0]) {
                    (x[0] * x[0]).exp()
                } else {
                    0.0
                }
            },
        ),
        eps_n_minus_eps: GriddedFunction::from_real_fn(*grid, |x| if inside(x[0]) { 1.0 } else { 0.0 }),
    })
}

const BAND_PANELS: usize = 64;

/// `(γₙ − γ, e^{−|x|}) = ∫_{n−1/n}^{n+1/n} e^{x²−x} dx` by Gauss–Legendre.
pub fn illposed_functional(n: usize) -> f64 {
    let (lo, hi) = band(n);
    quad::integrate_real(|x| (x * x - x).exp(), lo, hi, BAND_PANELS)
}

/// `(1/(2n)) e^{−(n+1/n) + (n−1/n)²}`.
pub fn illposed_lower_bound(n: usize) -> f64 {
    let (lo, hi) = band(n);
    (-hi + lo * lo).exp() / (2.0 * n as f64)
}

/// `max_ψ |∫_{band} ψ̄|` over `test_set`, by Gauss–Legendre on the band.
pub fn band_weak_distance(n: usize, test_set: &[TestFunction]) -> Result<f64> {
    if test_set.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let (lo, hi) = band(n);
    Ok(test_set
        .iter()
        .map(|psi| quad::integrate(|x| psi.eval(&[x]).conj(), lo, hi, BAND_PANELS).norm())
        .fold(0.0, f64::max))
}

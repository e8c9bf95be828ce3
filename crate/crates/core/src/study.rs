//! Monte Carlo drivers shared by the CLI and the acceptance suite.
//!
//! Replication `r` always uses seed `base + r`, and replications run in
//! parallel but are collected in order, so every study is a pure function of
//! its inputs.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{default_bandwidth, ecf, spectral_estimates, ModelSample, SpectralTriple};
use crate::gf::bounds::{check_uniform_bound, PolyBound};
use crate::gf::{default_test_set, weak_distance, weak_distance_gridded, GeneralizedFunction, TestFunction};
use crate::grid::{Grid, GriddedFunction};
use crate::sim::{
    band_weak_distance, error_cf, illposed_functional, illposed_lower_bound, sample_classical, sample_model,
    DistributionSpec, ModelSpec, RegressionSpec,
};
use crate::solvers::{
    deconvolve_known_cf, default_zeta, divide_with_zeros, solve_system, SolverConfig, SystemSolution,
};

/// Seed of replication `rep`.
pub fn replication_seed(base: u64, rep: usize) -> u64 {
    base.wrapping_add(rep as u64)
}

/// Median of the finite entries; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Classical deconvolution `z = x* + u` with known error law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalDesign {
    pub signal: DistributionSpec,
    pub error: DistributionSpec,
    /// Spatial grid; the ECF lives on its dual.
    pub grid: Grid,
    #[serde(default)]
    pub cutoff: Option<f64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    1e-6
}

impl ClassicalDesign {
    pub fn new(signal: DistributionSpec, error: DistributionSpec) -> Self {
        ClassicalDesign {
            signal,
            error,
            grid: Grid::default_1d(),
            cutoff: None,
            tau: default_tau(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.signal.validate()?;
        self.error.validate()?;
        if self.grid.dim() != 1 {
            return Err(Error::InvalidArgument(
                "classical deconvolution is implemented on R".into(),
            ));
        }
        if let Some(t) = self.cutoff {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("cut-off T = {t} must be positive")));
            }
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau = {} must be positive", self.tau)));
        }
        Ok(())
    }

    fn solver_config(&self) -> SolverConfig {
        // only tau and the cut-off matter for the known-φ branch
        let mut cfg = SolverConfig::new(1.0, PolyBound { m: vec![0], v: 1.0 });
        cfg.tau = self.tau;
        cfg.cutoff = self.cutoff;
        cfg
    }

    /// `ĝ = Ft⁻¹(ε̂/φ)` from observations `z`.
    pub fn estimate(&self, z: &[f64]) -> Result<GeneralizedFunction> {
        self.validate()?;
        let freq = self.grid.dual();
        let points: Vec<[f64; 1]> = z.iter().map(|v| [*v]).collect();
        let eps = ecf(&points, &freq)?;
        let phi = error_cf(&self.error, &freq)?;
        deconvolve_known_cf(&eps, &phi, &self.solver_config())
    }

    /// `Ft⁻¹(ε/φ)` from the exact `ε = Ft(g∗f)`.
    pub fn estimate_exact(&self) -> Result<GeneralizedFunction> {
        self.validate()?;
        let freq = self.grid.dual();
        let eps = GriddedFunction::from_fn(freq, |s| self.signal.cf(s[0]) * self.error.cf(s[0]));
        let phi = error_cf(&self.error, &freq)?;
        deconvolve_known_cf(&eps, &phi, &self.solver_config())
    }

    pub fn truth(&self) -> Result<GeneralizedFunction> {
        self.signal.to_generalized(self.grid)
    }

    /// Weak distance of one replication of size `n`.
    pub fn replicate(&self, n: usize, seed: u64, test_set: &[TestFunction]) -> Result<f64> {
        let sample = sample_classical(&self.signal, &self.error, n, seed)?;
        let z: Vec<f64> = sample.iter().map(|s| s.z).collect();
        weak_distance(&self.estimate(&z)?, &self.truth()?, test_set)
    }
}

/// Errors-in-variables regression solved through the spectral system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDesign {
    pub model: ModelSpec,
    pub grid: Grid,
    /// Clip of the spatial moments `ŵ₁`, `ŵ₂ₖ`.
    pub moment_bound: PolyBound,
    /// Clip of `φ̂⁻¹`.
    pub solver_bound: PolyBound,
    /// Window threshold; `None` selects `ζ = 4 n^{-1/2} log n`.
    #[serde(default)]
    pub zeta: Option<f64>,
    #[serde(default)]
    pub cutoff: Option<f64>,
    /// `h = c σ̂_z n^{-1/5}` (`n^{-1/6}` in 2-D).
    #[serde(default = "default_bandwidth_c")]
    pub bandwidth_c: f64,
}

fn default_bandwidth_c() -> f64 {
    1.0
}

/// One solved replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemOutcome {
    pub weak_distance: f64,
    pub window: [f64; 2],
    pub clipped_fraction: f64,
    pub masked_fraction: f64,
}

impl SystemDesign {
    pub fn new(model: ModelSpec) -> Self {
        let grid = if model.dim == 2 {
            Grid::default_2d()
        } else {
            Grid::default_1d()
        };
        let bound = PolyBound { m: vec![1], v: 2.0 };
        SystemDesign {
            model,
            grid,
            moment_bound: bound.clone(),
            solver_bound: bound,
            zeta: None,
            cutoff: None,
            bandwidth_c: default_bandwidth_c(),
        }
    }

    /// Solver settings with the sample-size dependent default for `ζ`.
    pub fn solver_for(&self, n: usize) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.zeta.unwrap_or_else(|| default_zeta(n)), self.solver_bound.clone());
        cfg.cutoff = self.cutoff;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.grid.dim() != self.model.dim {
            return Err(Error::InvalidArgument("grid and model dimensions differ".into()));
        }
        self.moment_bound.validate()?;
        self.solver_for(2).validate()?;
        if !(self.bandwidth_c > 0.0) {
            return Err(Error::InvalidArgument("bandwidth constant must be positive".into()));
        }
        Ok(())
    }

    pub fn truth(&self) -> Result<GeneralizedFunction> {
        self.model.regression.to_generalized(self.grid)
    }

    /// Full pipeline on one dataset.
    pub fn solve(&self, data: &[ModelSample]) -> Result<(SystemSolution, f64)> {
        self.validate()?;
        let z: Vec<&[f64]> = data.iter().map(|s| s.z.as_slice()).collect();
        let kspec = default_bandwidth(&z, self.bandwidth_c)?;
        let est = spectral_estimates(data, &self.moment_bound, &kspec, &self.grid)?;
        let solution = solve_system(&est.triple, &self.solver_for(data.len()))?;
        Ok((solution, est.masked_fraction))
    }

    pub fn replicate(&self, n: usize, seed: u64, test_set: &[TestFunction]) -> Result<SystemOutcome> {
        let data = sample_model(&self.model, n, seed)?;
        let (sol, masked) = self.solve(&data)?;
        Ok(SystemOutcome {
            weak_distance: weak_distance(&sol.g_hat, &self.truth()?, test_set)?,
            window: sol.window.extent(),
            clipped_fraction: sol.clipped_fraction,
            masked_fraction: masked,
        })
    }
}

/// Exact triple `ε₁ = γφ`, `(ε₁)′ = γ′φ + γφ′`, `ε₂ = −iγ′φ` on a 1-D
/// frequency grid. `φ′` is a central difference of the closed form with
/// step `1e-5` (error below `1e-9`).
pub fn exact_triple(regression: &RegressionSpec, error: &DistributionSpec, freq: Grid) -> Result<SpectralTriple> {
    error.validate()?;
    if freq.dim() != 1 || regression.transform_1d(0.0).is_none() {
        return Err(Error::InvalidArgument("exact triples need a Gaussian bump on R".into()));
    }
    let h = 1e-5;
    let parts = |s: f64| {
        let (g, dg) = regression.transform_1d(s).expect("checked above");
        let phi = error.cf(s);
        let dphi = (error.cf(s + h) - error.cf(s - h)) / (2.0 * h);
        (g, dg, phi, dphi)
    };
    let i = Complex64::new(0.0, 1.0);
    Ok(SpectralTriple {
        eps1: GriddedFunction::from_fn(freq, |s| {
            let (g, _, p, _) = parts(s[0]);
            g * p
        }),
        eps1_deriv: vec![GriddedFunction::from_fn(freq, |s| {
            let (g, dg, p, dp) = parts(s[0]);
            dg * p + g * dp
        })],
        eps2: vec![GriddedFunction::from_fn(freq, |s| {
            let (_, dg, p, _) = parts(s[0]);
            -i * dg * p
        })],
    })
}

/// One rung of a sample-size ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub reps: usize,
    /// Replications the solver rejected; excluded from the median.
    pub rejected: usize,
    pub median_weak_distance: Option<f64>,
    pub min_weak_distance: Option<f64>,
    pub max_weak_distance: Option<f64>,
}

/// Runs `replicate(n, seed)` for every `n` in `ladder` and `reps` seeds.
///
/// Rejections are counted; any other error aborts the study.
pub fn run_ladder<F>(ladder: &[usize], reps: usize, base_seed: u64, replicate: F) -> Result<Vec<StudyRow>>
where
    F: Fn(usize, u64) -> Result<f64> + Sync,
{
    if reps == 0 {
        return Err(Error::InvalidArgument("at least one replication is required".into()));
    }
    if ladder.contains(&0) {
        return Err(Error::InvalidArgument("sample sizes must be positive".into()));
    }
    ladder
        .iter()
        .map(|&n| {
            let outcomes: Vec<Result<f64>> = (0..reps)
                .into_par_iter()
                .map(|r| replicate(n, replication_seed(base_seed, r)))
                .collect();
            let mut values = Vec::with_capacity(reps);
            let mut rejected = 0;
            for o in outcomes {
                match o {
                    Ok(v) => values.push(v),
                    Err(e) if e.is_rejection() => rejected += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok(StudyRow {
                n,
                reps,
                rejected,
                median_weak_distance: median(&values),
                min_weak_distance: values.iter().copied().reduce(f64::min),
                max_weak_distance: values.iter().copied().reduce(f64::max),
            })
        })
        .collect()
}

/// Whether the medians decrease strictly along the ladder.
pub fn strictly_decreasing(rows: &[StudyRow]) -> bool {
    rows.windows(2)
        .all(|w| match (w[0].median_weak_distance, w[1].median_weak_distance) {
            (Some(a), Some(b)) => b < a,
            _ => false,
        })
}

/// One step of the well-posedness demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellposedRow {
    pub step: usize,
    /// Median of `d(εₙ, ε)` over draws.
    pub eps_distance: f64,
    /// Median of `d(γₙ, γ)` over draws.
    pub gamma_distance: f64,
    /// Every perturbed `εₙ` satisfies `|εₙ| ≤ V`.
    pub within_bound: bool,
}

/// Settings of [`wellposed_demo`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellposedDesign {
    pub signal: DistributionSpec,
    pub error: DistributionSpec,
    /// Frequency grid carrying `ε` and `γ`.
    pub freq_grid: Grid,
    pub steps: usize,
    pub draws: usize,
    /// `d(ε₀, ε)`; halves at every step.
    pub initial_distance: f64,
    /// Bound of the class `|ε| ≤ V`.
    pub v: f64,
}

impl Default for WellposedDesign {
    fn default() -> Self {
        WellposedDesign {
            signal: DistributionSpec::Gaussian { sigma: 1.0 },
            error: DistributionSpec::Laplace { b: 1.0 },
            freq_grid: Grid::default_1d().dual(),
            steps: 5,
            draws: 101,
            initial_distance: 0.1,
            v: 2.0,
        }
    }
}

/// Random smooth bump `e^{iθ} exp(−(s−c)²/(2w²))` with `c ∈ [−3, 3]`,
/// `w ∈ [0.5, 1.5]`.
fn random_bump<R: Rng>(grid: Grid, rng: &mut R) -> GriddedFunction {
    let c: f64 = rng.random_range(-3.0..3.0);
    let w: f64 = rng.random_range(0.5..1.5);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let phase = Complex64::from_polar(1.0, theta);
    GriddedFunction::from_fn(grid, |s| phase * (-(s[0] - c).powi(2) / (2.0 * w * w)).exp())
}

/// Perturbs `ε = γφ` by fresh random bumps whose weak size halves at every
/// step and reports the medians of `d(εₙ, ε)` and `d(γₙ, γ)`, `γₙ = εₙ/φ`.
pub fn wellposed_demo(design: &WellposedDesign, seed: u64) -> Result<Vec<WellposedRow>> {
    design.signal.validate()?;
    design.error.validate()?;
    if design.freq_grid.dim() != 1 || design.steps == 0 || design.draws == 0 {
        return Err(Error::InvalidArgument(
            "need a 1-D grid, steps ≥ 1 and draws ≥ 1".into(),
        ));
    }
    let grid = design.freq_grid;
    let phi = error_cf(&design.error, &grid)?;
    let gamma = GriddedFunction::from_fn(grid, |s| design.signal.cf(s[0]));
    let eps = gamma.mul(&phi)?;
    let tests = default_test_set(1);
    let bound = PolyBound::new(vec![0], design.v)?;
    let per_draw: Vec<Result<Vec<(f64, f64, bool)>>> = (0..design.draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(seed, d));
            (0..design.steps)
                .map(|k| {
                    let bump = random_bump(grid, &mut rng);
                    let size = weak_distance_gridded(&bump, &GriddedFunction::zeros(grid), &tests)?;
                    let target = design.initial_distance * 0.5f64.powi(k as i32);
                    let eps_n = eps.add(&bump.scale(Complex64::new(target / size, 0.0)))?;
                    let gamma_n = divide_with_zeros(&eps_n, &phi, 1e-12)?;
                    Ok((
                        weak_distance_gridded(&eps_n, &eps, &tests)?,
                        weak_distance_gridded(&gamma_n, &gamma, &tests)?,
                        check_uniform_bound(&eps_n, &bound).holds,
                    ))
                })
                .collect()
        })
        .collect();
    let per_draw: Vec<Vec<(f64, f64, bool)>> = per_draw.into_iter().collect::<Result<_>>()?;
    Ok((0..design.steps)
        .map(|k| {
            let e: Vec<f64> = per_draw.iter().map(|d| d[k].0).collect();
            let g: Vec<f64> = per_draw.iter().map(|d| d[k].1).collect();
            WellposedRow {
                step: k,
                eps_distance: median(&e).expect("draws ≥ 1"),
                gamma_distance: median(&g).expect("draws ≥ 1"),
                within_bound: per_draw.iter().all(|d| d[k].2),
            }
        })
        .collect())
}

/// One row of the supersmooth divergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllposedRow {
    pub n: usize,
    /// `d(εₙ, ε)` on the default test set.
    pub eps_distance: f64,
    /// `(γₙ − γ, e^{−|x|})`.
    pub gamma_functional: f64,
    pub lower_bound: f64,
}

pub fn illposed_table(ns: &[usize]) -> Result<Vec<IllposedRow>> {
    let tests = default_test_set(1);
    ns.iter()
        .map(|&n| {
            if n < 2 {
                return Err(Error::InvalidArgument("the divergence sequence starts at n = 2".into()));
            }
            Ok(IllposedRow {
                n,
                eps_distance: band_weak_distance(n, &tests)?,
                gamma_functional: illposed_functional(n),
                lower_bound: illposed_lower_bound(n),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_handles_parity_and_nan() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[f64::NAN, 1.0]), Some(1.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn exact_classical_deconvolution_recovers_signal() {
        let d = ClassicalDesign::new(
            DistributionSpec::Gaussian { sigma: 1.0 },
            DistributionSpec::Laplace { b: 1.0 },
        );
        let tests = default_test_set(1);
        let wd = weak_distance(&d.estimate_exact().unwrap(), &d.truth().unwrap(), &tests).unwrap();
        assert!(wd < 1e-6, "{wd}");
    }

    #[test]
    fn ladder_is_deterministic_and_counts_rejections() {
        let f = |n: usize, seed: u64| -> Result<f64> {
            if seed.is_multiple_of(3) {
                Err(Error::Rejected("test".into()))
            } else {
                Ok(1.0 / n as f64 + seed as f64 * 1e-3)
            }
        };
        let a = run_ladder(&[10, 100], 6, 0, f).unwrap();
        let b = run_ladder(&[10, 100], 6, 0, f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].rejected, 2);
        assert!(strictly_decreasing(&a));
        assert!(run_ladder(&[10], 0, 0, f).is_err());
        let fail = |_: usize, _: u64| -> Result<f64> { Err(Error::InvalidArgument("x".into())) };
        assert!(run_ladder(&[10], 2, 0, fail).is_err());
    }

    #[test]
    fn wellposed_demo_halves() {
        let design = WellposedDesign::default();
        let rows = wellposed_demo(&design, 5).unwrap();
        assert_eq!(rows.len(), 5);
        for w in rows.windows(2) {
            assert!((w[1].eps_distance / w[0].eps_distance - 0.5).abs() < 1e-9);
            assert!(w[1].gamma_distance < w[0].gamma_distance);
        }
        assert!(rows.iter().all(|r| r.within_bound));
        assert_eq!(rows, wellposed_demo(&design, 5).unwrap());
    }

    #[test]
    fn illposed_table_diverges() {
        let rows = illposed_table(&[2, 3, 4, 5]).unwrap();
        for r in &rows {
            assert!(r.gamma_functional > r.lower_bound);
        }
        for w in rows.windows(2) {
            assert!(w[1].gamma_functional > w[0].gamma_functional);
            assert!(w[1].eps_distance < w[0].eps_distance);
        }
        assert!(illposed_table(&[1]).is_err());
    }

    #[test]
    fn exact_triple_solves_to_bump() {
        let g = RegressionSpec::GaussianBump {
            amplitude: 1.0,
            center: 0.5,
            width: 0.8,
        };
        let t = exact_triple(&g, &DistributionSpec::Laplace { b: 1.0 }, Grid::default_1d().dual()).unwrap();
        let sol = solve_system(&t, &SolverConfig::new(1e-9, PolyBound { m: vec![1], v: 2.0 })).unwrap();
        let wd = weak_distance(
            &sol.g_hat,
            &g.to_generalized(Grid::default_1d()).unwrap(),
            &default_test_set(1),
        )
        .unwrap();
        assert!(wd < 1e-3, "{wd}");
        assert!(exact_triple(
            &RegressionSpec::Polynomial { coefs: vec![1.0] },
            &DistributionSpec::Laplace { b: 1.0 },
            Grid::default_1d()
        )
        .is_err());
    }

    #[test]
    fn system_replication_runs() {
        let model = ModelSpec::new(
            RegressionSpec::GaussianBump {
                amplitude: 1.0,
                center: 0.0,
                width: 1.0,
            },
            Some(DistributionSpec::Laplace { b: 1.0 }),
        );
        let design = SystemDesign::new(model);
        let out = design.replicate(500, 1, &default_test_set(1)).unwrap();
        assert!(out.weak_distance.is_finite());
        assert!(out.window[0] < 0.0 && out.window[1] > 0.0);
    }
}

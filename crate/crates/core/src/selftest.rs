//! Invariant suite run by `gfdeconv selftest`.
//!
//! Every check is deterministic and runs at grid scale; the suite finishes
//! in seconds on one core.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::estimators::ecf;
use crate::gf::bounds::{check_uniform_bound, clip_to_bound, PolyBound};
use crate::gf::random::{gram_matrix, min_eigenvalue, CovarianceKind, PSD_TOLERANCE};
use crate::gf::{
    apply_functional, convolve_gf, default_test_set, density_functional, ft_generalized, weak_distance, Atom,
    GeneralizedFunction,
};
use crate::grid::{convolve, forward_ft, quadrature, Grid, GriddedFunction};
use crate::sim::{error_cf, sample_model, DistributionSpec, ModelSpec, RegressionSpec};
use crate::solvers::{solve_direct, solve_system, SolverConfig, SupportWindow};
use crate::study::{exact_triple, illposed_table, wellposed_demo, WellposedDesign};

/// Outcome of one invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: Result<(bool, String)>) -> Check {
    match outcome {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn normal_pdf(x: f64, sigma: f64) -> f64 {
    (-0.5 * x * x / (sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn signals() -> Vec<DistributionSpec> {
    let n = DistributionSpec::Gaussian { sigma: 1.0 };
    vec![
        n.clone(),
        DistributionSpec::MixtureWithAtom {
            p: 0.5,
            location: 0.0,
            base: Box::new(n),
        },
    ]
}

fn errors() -> Vec<DistributionSpec> {
    vec![
        DistributionSpec::Laplace { b: 1.0 },
        DistributionSpec::Uniform { a: 1.0 },
        DistributionSpec::Triangular { a: 1.0 },
    ]
}

fn exchange_formula() -> Result<(bool, String)> {
    let grid = Grid::default_1d();
    let n = GriddedFunction::from_real_fn(grid, |x| normal_pdf(x[0], 1.0));
    let ft = forward_ft(&convolve(&n, &n)?);
    let exact = GriddedFunction::from_real_fn(*ft.grid(), |s| (-s[0] * s[0]).exp());
    let err = ft.max_abs_diff_where(&exact, |s| s[0].abs() <= 10.0)?;
    Ok((err < 1e-8, format!("max error {err:.2e}")))
}

fn ft_duality() -> Result<(bool, String)> {
    let grid = Grid::default_1d();
    let n: GeneralizedFunction = GriddedFunction::from_real_fn(grid, |x| normal_pdf(x[0], 1.0)).into();
    let atoms = GeneralizedFunction::atomic(
        grid,
        vec![
            Atom::dirac(&[0.5], Complex64::new(0.3, 0.0)),
            Atom::new(vec![-1.0], Complex64::new(0.0, 1.0), vec![1])?,
        ],
    )?;
    let mut worst: f64 = 0.0;
    for b in [n.clone(), n.add(&atoms)?] {
        let ft: GeneralizedFunction = ft_generalized(&b).into();
        for psi in default_test_set(1) {
            let lhs = apply_functional(&ft, &psi)?;
            let rhs = apply_functional(&b, &psi.adjoint_ft()?)?;
            worst = worst.max((lhs - rhs).norm());
        }
    }
    Ok((worst < 1e-6, format!("max |(Ft b, ψ) − (b, Ft* ψ)| = {worst:.2e}")))
}

fn clip_properties() -> Result<(bool, String)> {
    let grid = Grid::default_1d().dual();
    let bound = PolyBound::new(vec![1], 2.0)?;
    let b = GriddedFunction::from_fn(grid, |s| Complex64::from_polar((0.1 * s[0] * s[0]).exp(), s[0]));
    let once = clip_to_bound(&b, &bound);
    let twice = clip_to_bound(&once, &bound);
    let holds = check_uniform_bound(&once, &bound.inflated(1.0 + 1e-12)).holds;
    let idem = once
        .values()
        .iter()
        .zip(twice.values())
        .all(|(a, c)| (a - c).norm() <= 1e-14 * a.norm().max(1.0));
    Ok((idem && holds, format!("idempotent {idem}, bound holds {holds}")))
}

fn pseudometric() -> Result<(bool, String)> {
    let grid = Grid::default_1d();
    let tests = default_test_set(1);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut draw = || -> Result<GeneralizedFunction> {
        let (c, s, w): (f64, f64, f64) = (
            rng.random_range(-2.0..2.0),
            rng.random_range(0.5..2.0),
            rng.random_range(-1.0..1.0),
        );
        let reg = GriddedFunction::from_real_fn(grid, |x| normal_pdf(x[0] - c, s));
        GeneralizedFunction::new(grid, Some(reg), vec![Atom::dirac(&[c], Complex64::new(w, 0.0))])
    };
    let (a, b, c) = (draw()?, draw()?, draw()?);
    let (ab, ba, bc, ac) = (
        weak_distance(&a, &b, &tests)?,
        weak_distance(&b, &a, &tests)?,
        weak_distance(&b, &c, &tests)?,
        weak_distance(&a, &c, &tests)?,
    );
    let zero = weak_distance(&a, &a, &tests)?;
    let ok = (ab - ba).abs() < 1e-14 && ac <= ab + bc + 1e-14 && zero == 0.0;
    Ok((ok, format!("d(a,b)={ab:.4}, d(b,c)={bc:.4}, d(a,c)={ac:.4}")))
}

fn step_density() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for psi in default_test_set(1) {
        let v = density_functional(|x| if x >= 0.0 { 1.0 } else { 0.0 }, &[0.0], &psi)?;
        worst = worst.max((v - psi.eval(&[0.0])).norm());
    }
    Ok((worst < 1e-8, format!("max |−∫Fψ̄′ − ψ(0)| = {worst:.2e}")))
}

fn hermite_orthonormal() -> Result<(bool, String)> {
    let grid = Grid::default_1d();
    let set = crate::gf::test_fn::hermite_test_set(16, 1.0)?;
    let sampled: Vec<GriddedFunction> = set
        .iter()
        .map(|p| GriddedFunction::from_fn(grid, |x| p.eval(x)))
        .collect();
    let mut worst: f64 = 0.0;
    for (j, a) in sampled.iter().enumerate() {
        for (k, b) in sampled.iter().enumerate() {
            let ip = quadrature(&a.mul(&b.map(|v| v.conj()))?);
            let target = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((ip - target).norm());
        }
    }
    Ok((worst < 1e-8, format!("max Gram deviation {worst:.2e}")))
}

fn deconvolution_round_trip() -> Result<(bool, String)> {
    let grid = Grid::default_1d();
    let tests = default_test_set(1);
    let mut worst: f64 = 0.0;
    for g in signals() {
        for f in errors() {
            let truth = g.to_generalized(grid)?;
            let w = convolve_gf(&truth, &f.to_generalized(grid)?)?;
            let eps = ft_generalized(&w);
            let phi = ft_generalized(&f.to_generalized(grid)?);
            let g_hat = crate::solvers::deconvolve_known_cf(
                &eps,
                &phi,
                &SolverConfig::new(1.0, PolyBound::new(vec![0], 1.0)?),
            )?;
            worst = worst.max(weak_distance(&g_hat, &truth, &tests)?);
        }
    }
    Ok((worst < 1e-3, format!("max weak distance {worst:.2e} over 6 pairs")))
}

/// Largest `|a − b|` over `mask`.
fn masked_diff(a: &GriddedFunction, b: &GriddedFunction, mask: &[bool]) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|((x, y), _)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn system_round_trip() -> Result<(bool, String)> {
    let freq = Grid::default_1d().dual();
    let g = RegressionSpec::GaussianBump {
        amplitude: 1.0,
        center: 0.0,
        width: 1.0,
    };
    let cfg = SolverConfig::new(1e-6, PolyBound::new(vec![1], 2.0)?);
    let mut detail = Vec::new();
    let mut ok = true;
    for f in errors() {
        let t = exact_triple(&g, &f, freq)?;
        let sol = solve_system(&t, &cfg)?;
        let gamma = GriddedFunction::from_fn(freq, |s| g.transform_1d(s[0]).expect("bump").0);
        let phi = error_cf(&f, &freq)?;
        let e_gamma = masked_diff(&sol.gamma_hat, &gamma, &sol.mask);
        let e_phi = masked_diff(&sol.phi_hat, &phi, &sol.mask);
        ok &= e_gamma < 1e-3 && e_phi < 1e-2 && sol.phi_hat.value_at_origin() == Complex64::new(1.0, 0.0);
        detail.push(format!("{}: |γ̂−γ| {e_gamma:.1e}, |φ̂−φ| {e_phi:.1e}", family(&f)));
    }
    Ok((ok, detail.join("; ")))
}

fn family(d: &DistributionSpec) -> &'static str {
    match d {
        DistributionSpec::Gaussian { .. } => "gaussian",
        DistributionSpec::Laplace { .. } => "laplace",
        DistributionSpec::Uniform { .. } => "uniform",
        DistributionSpec::Triangular { .. } => "triangular",
        DistributionSpec::MixtureWithAtom { .. } => "mixture",
    }
}

fn branch_agreement() -> Result<(bool, String)> {
    let freq = Grid::default_1d().dual();
    let g = RegressionSpec::GaussianBump {
        amplitude: 1.0,
        center: 0.0,
        width: 1.0,
    };
    let cfg = SolverConfig::new(1e-4, PolyBound::new(vec![1], 2.0)?);
    let mut worst: f64 = 0.0;
    for f in errors() {
        let t = exact_triple(&g, &f, freq)?;
        let sol = solve_system(&t, &cfg)?;
        let c = g.transform_1d(0.0).expect("bump").0;
        let direct = solve_direct(&t.eps1, &t.eps2, &sol.window, c)?;
        worst = worst.max(masked_diff(&direct, &sol.gamma_hat, &sol.mask));
    }
    Ok((worst < 1e-3, format!("max branch difference {worst:.2e}")))
}

fn ecf_invariants() -> Result<(bool, String)> {
    let freq = Grid::default_1d().dual();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z: Vec<[f64; 1]> = (0..500).map(|_| [rng.random_range(-3.0..3.0)]).collect();
    let e = ecf(&z, &freq)?;
    let n = freq.points();
    let bounded = e.values().iter().all(|v| v.norm() <= 1.0 + 1e-15);
    let origin = e.value_at_origin() == Complex64::new(1.0, 0.0);
    let hermitian = (1..n).all(|j| {
        let m = 2 * freq.origin_axis_index() as isize - j as isize;
        m < 0 || m as usize >= n || e.values()[j] == e.values()[m as usize].conj()
    });
    Ok((
        bounded && origin && hermitian,
        format!("|ε̂|≤1 {bounded}, ε̂(0)=1 {origin}, Hermitian {hermitian}"),
    ))
}

fn gram_psd() -> Result<(bool, String)> {
    let set = default_test_set(1);
    let mut worst = f64::INFINITY;
    for kind in [CovarianceKind::WienerDerivative, CovarianceKind::FtWienerDerivative] {
        worst = worst.min(min_eigenvalue(&gram_matrix(kind, &set[..16])?));
    }
    Ok((worst >= -PSD_TOLERANCE, format!("min eigenvalue {worst:.2e}")))
}

fn mass_at_zero() -> Result<(bool, String)> {
    let p = 0.6;
    let spec = DistributionSpec::MixtureWithAtom {
        p,
        location: 0.0,
        base: Box::new(DistributionSpec::Gaussian { sigma: 1.0 }),
    };
    let phi = error_cf(&spec, &Grid::default_1d().dual())?;
    let inf = phi.values().iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    Ok((
        inf >= 2.0 * p - 1.0,
        format!("inf |φ| = {inf:.4} ≥ {:.1}", 2.0 * p - 1.0),
    ))
}

fn illposed() -> Result<(bool, String)> {
    let rows = illposed_table(&[2, 3, 4, 5])?;
    let above = rows.iter().all(|r| r.gamma_functional > r.lower_bound);
    let up = rows.windows(2).all(|w| w[1].gamma_functional > w[0].gamma_functional);
    let down = rows.windows(2).all(|w| w[1].eps_distance < w[0].eps_distance);
    Ok((
        above && up && down,
        format!("above bound {above}, γ-functional increasing {up}, ε-distance decreasing {down}"),
    ))
}

fn wellposed() -> Result<(bool, String)> {
    let rows = wellposed_demo(&WellposedDesign::default(), 7)?;
    let down = rows.windows(2).all(|w| w[1].gamma_distance < w[0].gamma_distance);
    let bounded = rows.iter().all(|r| r.within_bound);
    Ok((
        down && bounded,
        format!("γ-distance decreasing {down}, within bound {bounded}"),
    ))
}

fn determinism() -> Result<(bool, String)> {
    let spec = ModelSpec::new(
        RegressionSpec::GaussianBump {
            amplitude: 1.0,
            center: 0.0,
            width: 1.0,
        },
        Some(DistributionSpec::Laplace { b: 1.0 }),
    );
    let a = sample_model(&spec, 200, 42)?;
    let b = sample_model(&spec, 200, 42)?;
    let exact = a.iter().all(|s| {
        let l = s.latent.as_ref().expect("simulated");
        s.z[0] == l.x_star[0] + l.u[0] && s.x[0] == l.x_star[0] + l.u_x[0]
    });
    Ok((
        a == b && exact,
        format!("identical {}, latent identities {exact}", a == b),
    ))
}

fn whole_window_origin() -> Result<(bool, String)> {
    let w = SupportWindow::whole(Grid::default_1d().dual());
    Ok((w.contains(w.grid().origin_index()), format!("{} nodes", w.len())))
}

/// Runs every invariant in a fixed order.
pub fn run_all() -> Vec<Check> {
    vec![
        check("exchange_formula", exchange_formula()),
        check("ft_duality", ft_duality()),
        check("clip_idempotent_and_bounded", clip_properties()),
        check("weak_distance_pseudometric", pseudometric()),
        check("step_function_density", step_density()),
        check("hermite_orthonormal", hermite_orthonormal()),
        check("deconvolution_round_trip", deconvolution_round_trip()),
        check("system_round_trip", system_round_trip()),
        check("branch_agreement", branch_agreement()),
        check("ecf_invariants", ecf_invariants()),
        check("gram_psd", gram_psd()),
        check("mass_at_zero_separation", mass_at_zero()),
        check("illposed_divergence", illposed()),
        check("wellposed_continuity", wellposed()),
        check("simulation_determinism", determinism()),
        check("support_window_contains_origin", whole_window_origin()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_invariants_pass() {
        let failed: Vec<Check> = run_all().into_iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{failed:#?}");
    }

    #[test]
    fn errors_are_reported_as_failures() {
        let c = check("x", Err(crate::Error::Rejected("no".into())));
        assert!(!c.passed && c.detail.contains("no"));
    }
}

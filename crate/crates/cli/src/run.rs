//! Command implementations. Each writes its artifacts into the output
//! directory and returns a one-line summary for the terminal.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use gfdeconv::estimators::{read_instrument_csv, read_model_csv, write_classical_csv, write_model_csv};
use gfdeconv::gf::{default_test_set, weak_distance};
use gfdeconv::grid::Grid;
use gfdeconv::selftest::{self, Check};
use gfdeconv::sim::{error_cf, sample_classical, sample_model};
use gfdeconv::solvers::Metrics;
use gfdeconv::study::{illposed_table, run_ladder, strictly_decreasing, wellposed_demo, StudyRow};
use log::info;
use serde::Serialize;

use crate::config::{ConfigError, Design, RunConfig};

pub const METRICS: &str = "metrics.json";
pub const DATASET: &str = "dataset.csv";
pub const GHAT: &str = "ghat.json";
pub const STUDY: &str = "study.csv";
pub const PHIHAT: &str = "phihat.csv";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn dim_mismatch(data_dim: usize, grid: &Grid) -> anyhow::Error {
    ConfigError(format!(
        "data has dimension {data_dim} but the grid has dimension {}",
        grid.dim()
    ))
    .into()
}

#[derive(Serialize)]
struct SimulateMetrics {
    design: Design,
    n: usize,
    seed: u64,
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<String> {
    let path = out.join(DATASET);
    match cfg.design {
        Design::Classical => {
            let data = sample_classical(&cfg.signal, &cfg.error, cfg.n, cfg.seed)?;
            write_classical_csv(&path, &data)?;
        }
        Design::System => {
            let data = sample_model(&cfg.model, cfg.n, cfg.seed)?;
            write_model_csv(&path, &data)?;
        }
    }
    write_json(
        &out.join(METRICS),
        &SimulateMetrics {
            design: cfg.design,
            n: cfg.n,
            seed: cfg.seed,
        },
    )?;
    Ok(format!("wrote {} observations to {}", cfg.n, path.display()))
}

/// Known-φ deconvolution of the classical design.
pub fn deconvolve(cfg: &RunConfig, out: &Path) -> Result<String> {
    let design = cfg.classical();
    let (z, simulated) = match &cfg.data {
        Some(p) => {
            let rows = read_instrument_csv(p)?;
            if rows.first().is_some_and(|r| r.len() != 1) {
                return Err(dim_mismatch(rows[0].len(), &design.grid));
            }
            (rows.into_iter().map(|r| r[0]).collect::<Vec<f64>>(), false)
        }
        None => {
            let data = sample_classical(&cfg.signal, &cfg.error, cfg.n, cfg.seed)?;
            write_classical_csv(out.join(DATASET), &data)?;
            (data.iter().map(|s| s.z).collect(), true)
        }
    };
    info!("deconvolving {} observations", z.len());
    let g_hat = design.estimate(&z)?;
    g_hat.write_json(out.join(GHAT))?;
    let freq = design.grid.dual();
    let phi = error_cf(&design.error, &freq)?;
    let small = phi.values().iter().filter(|v| v.norm() < design.tau).count();
    let edge = design.cutoff.map_or(freq.half_width(), |t| t.min(freq.half_width()));
    let metrics = Metrics {
        weak_distance: if simulated {
            Some(weak_distance(&g_hat, &design.truth()?, &default_test_set(1))?)
        } else {
            None
        },
        window: [-edge, edge],
        clipped_fraction: 0.0,
        masked_fraction: small as f64 / freq.len() as f64,
    };
    write_json(&out.join(METRICS), &metrics)?;
    Ok(summary(&metrics))
}

fn summary(m: &Metrics) -> String {
    match m.weak_distance {
        Some(d) => format!(
            "weak distance to truth {d:.4e}, window [{:.3}, {:.3}]",
            m.window[0], m.window[1]
        ),
        None => format!("window [{:.3}, {:.3}]", m.window[0], m.window[1]),
    }
}

/// Spectral-system estimator of the errors-in-variables regression.
pub fn solve_system(cfg: &RunConfig, out: &Path) -> Result<String> {
    let design = cfg.system();
    let (data, simulated) = match &cfg.data {
        Some(p) => {
            let data = read_model_csv(p)?;
            if data.first().is_some_and(|s| s.z.len() != design.grid.dim()) {
                return Err(dim_mismatch(data[0].z.len(), &design.grid));
            }
            (data, false)
        }
        None => {
            let data = sample_model(&design.model, cfg.n, cfg.seed)?;
            write_model_csv(out.join(DATASET), &data)?;
            (data, true)
        }
    };
    info!("solving the spectral system from {} observations", data.len());
    let (sol, masked) = design.solve(&data)?;
    sol.g_hat.write_json(out.join(GHAT))?;
    sol.phi_hat.write_csv(out.join(PHIHAT))?;
    let test_set = default_test_set(design.grid.dim());
    let metrics = Metrics {
        weak_distance: if simulated {
            Some(weak_distance(&sol.g_hat, &design.truth()?, &test_set)?)
        } else {
            None
        },
        window: sol.window.extent(),
        clipped_fraction: sol.clipped_fraction,
        masked_fraction: masked,
    };
    write_json(&out.join(METRICS), &metrics)?;
    Ok(summary(&metrics))
}

#[derive(Serialize)]
struct StudyMetrics<'a> {
    design: Design,
    seed: u64,
    reps: usize,
    rows: &'a [StudyRow],
    strictly_decreasing: bool,
}

/// Median weak distance to the truth along the sample-size ladder.
pub fn convergence_study(cfg: &RunConfig, out: &Path) -> Result<String> {
    let tests = default_test_set(cfg.grid().dim());
    let rows = match cfg.design {
        Design::Classical => {
            let d = cfg.classical();
            run_ladder(&cfg.ladder, cfg.reps, cfg.seed, |n, s| d.replicate(n, s, &tests))?
        }
        Design::System => {
            let d = cfg.system();
            run_ladder(&cfg.ladder, cfg.reps, cfg.seed, |n, s| {
                d.replicate(n, s, &tests).map(|o| o.weak_distance)
            })?
        }
    };
    let mut w = csv::Writer::from_path(out.join(STUDY))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let decreasing = strictly_decreasing(&rows);
    write_json(
        &out.join(METRICS),
        &StudyMetrics {
            design: cfg.design,
            seed: cfg.seed,
            reps: cfg.reps,
            rows: &rows,
            strictly_decreasing: decreasing,
        },
    )?;
    let medians: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "n={}: {}",
                r.n,
                r.median_weak_distance.map_or("n/a".into(), |m| format!("{m:.4e}"))
            )
        })
        .collect();
    Ok(format!(
        "median weak distance {} (strictly decreasing: {decreasing})",
        medians.join(", ")
    ))
}

/// One line of the combined well-posed / ill-posed table.
#[derive(Serialize)]
struct DemoRow {
    table: &'static str,
    /// Step (well-posed) or `n` (ill-posed).
    index: usize,
    eps_distance: f64,
    gamma_value: f64,
    lower_bound: Option<f64>,
    within_bound: Option<bool>,
}

#[derive(Serialize)]
struct DemoMetrics {
    wellposed_gamma_decreasing: bool,
    wellposed_within_bound: bool,
    illposed_eps_decreasing: bool,
    illposed_gamma_increasing: bool,
    illposed_above_lower_bound: bool,
}

/// Laplace error: `d(γₙ, γ) → 0` as `d(εₙ, ε) → 0`. Gaussian error: the
/// divergence sequence, whose γ-functionals grow while `d(εₙ, ε)` shrinks.
pub fn wellposed(cfg: &RunConfig, out: &Path) -> Result<String> {
    let well = wellposed_demo(&cfg.wellposed(), cfg.seed)?;
    let ill = illposed_table(&cfg.wellposed.illposed_n)?;
    let mut w = csv::Writer::from_path(out.join(STUDY))?;
    for r in &well {
        w.serialize(DemoRow {
            table: "wellposed",
            index: r.step,
            eps_distance: r.eps_distance,
            gamma_value: r.gamma_distance,
            lower_bound: None,
            within_bound: Some(r.within_bound),
        })?;
    }
    for r in &ill {
        w.serialize(DemoRow {
            table: "illposed",
            index: r.n,
            eps_distance: r.eps_distance,
            gamma_value: r.gamma_functional,
            lower_bound: Some(r.lower_bound),
            within_bound: None,
        })?;
    }
    w.flush()?;
    let m = DemoMetrics {
        wellposed_gamma_decreasing: well.windows(2).all(|p| p[1].gamma_distance < p[0].gamma_distance),
        wellposed_within_bound: well.iter().all(|r| r.within_bound),
        illposed_eps_decreasing: ill.windows(2).all(|p| p[1].eps_distance < p[0].eps_distance),
        illposed_gamma_increasing: ill.windows(2).all(|p| p[1].gamma_functional > p[0].gamma_functional),
        illposed_above_lower_bound: ill.iter().all(|r| r.gamma_functional > r.lower_bound),
    };
    write_json(&out.join(METRICS), &m)?;
    Ok(format!(
        "well-posed: γ-distance decreasing {}; ill-posed: γ-functional increasing {}, ε-distance decreasing {}",
        m.wellposed_gamma_decreasing, m.illposed_gamma_increasing, m.illposed_eps_decreasing
    ))
}

/// Runs the invariant suite; returns whether everything passed.
pub fn selftest(out: &Path) -> Result<(bool, Vec<Check>)> {
    let checks = selftest::run_all();
    write_json(&out.join(METRICS), &checks)?;
    Ok((checks.iter().all(|c| c.passed), checks))
}

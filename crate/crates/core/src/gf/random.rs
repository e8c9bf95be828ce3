//! Gaussian random generalized functions with half-line covariance
//! functionals, sampled through their joint law on a finite test set.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::test_fn::TestFunction;
use crate::error::{Error, Result};
use crate::quad;

/// Covariance functional of the random generalized function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovarianceKind {
    /// Derivative of the Wiener process: `B(ψ₁, ψ₂) = ∫₀^∞ ψ₁ ψ̄₂ dt`.
    WienerDerivative,
    /// Its Fourier image: `B(ψ₁, ψ₂) = ∫₀^∞ Ft(ψ₁) conj(Ft(ψ₂)) dζ`.
    FtWienerDerivative,
}

/// Jitter added to the Gram diagonal before factorisation.
pub const CHOLESKY_JITTER: f64 = 1e-12;
/// Most negative eigenvalue accepted as round-off in a PSD check.
pub const PSD_TOLERANCE: f64 = 1e-10;

fn half_line(psi1: &TestFunction, psi2: &TestFunction) -> Complex64 {
    let r = psi1.radius().min(psi2.radius());
    let osc = psi1.oscillation_scale().min(psi2.oscillation_scale());
    let panels = ((r / osc).ceil() as usize).max(8);
    quad::integrate(|t| psi1.eval(&[t]) * psi2.eval(&[t]).conj(), 0.0, r, panels)
}

/// `B(ψ₁, ψ₂)` for one-dimensional test functions.
pub fn wiener_covariance(kind: CovarianceKind, psi1: &TestFunction, psi2: &TestFunction) -> Result<Complex64> {
    if psi1.dim() != 1 || psi2.dim() != 1 {
        return Err(Error::InvalidArgument(
            "Wiener covariances are defined on R only".into(),
        ));
    }
    match kind {
        CovarianceKind::WienerDerivative => Ok(half_line(psi1, psi2)),
        CovarianceKind::FtWienerDerivative => Ok(half_line(&psi1.ft()?, &psi2.ft()?)),
    }
}

/// Hermitian Gram matrix `G_{jk} = B(ψ_j, ψ_k)`.
pub fn gram_matrix(kind: CovarianceKind, test_set: &[TestFunction]) -> Result<DMatrix<Complex64>> {
    let m = test_set.len();
    let mut g = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    for j in 0..m {
        for k in j..m {
            let v = wiener_covariance(kind, &test_set[j], &test_set[k])?;
            g[(j, k)] = v;
            g[(k, j)] = v.conj();
        }
        g[(j, j)].im = 0.0;
    }
    Ok(g)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(g: &DMatrix<Complex64>) -> f64 {
    g.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// One draw of `((b, ψ₁), …, (b, ψ_m))` for the zero-mean Gaussian random
/// generalized function with covariance `kind`.
///
/// Real Gram matrices give real Gaussian vectors; complex ones give circular
/// complex vectors with `E[X X*] = G`.
pub fn sample_process(kind: CovarianceKind, test_set: &[TestFunction], seed: u64) -> Result<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = ProcessSampler::new(kind, test_set)?;
    Ok(sampler.draw(&mut rng))
}

/// Factorised covariance, reusable across many draws.
pub struct ProcessSampler {
    chol: DMatrix<Complex64>,
    real: bool,
}

impl ProcessSampler {
    pub fn new(kind: CovarianceKind, test_set: &[TestFunction]) -> Result<Self> {
        if test_set.is_empty() {
            return Err(Error::InvalidArgument("empty test set".into()));
        }
        let mut g = gram_matrix(kind, test_set)?;
        let lambda = min_eigenvalue(&g);
        if lambda < -PSD_TOLERANCE {
            return Err(Error::Rejected(format!(
                "covariance Gram matrix is not PSD (min eigenvalue {lambda:e})"
            )));
        }
        let real = g.iter().all(|v| v.im == 0.0);
        for j in 0..g.nrows() {
            g[(j, j)] += CHOLESKY_JITTER;
        }
        let chol = nalgebra::Cholesky::new(g)
            .ok_or_else(|| Error::Rejected("Cholesky factorisation failed after jitter".into()))?
            .unpack();
        Ok(ProcessSampler { chol, real })
    }

    pub fn draw<R: rand::Rng>(&self, rng: &mut R) -> Vec<Complex64> {
        let m = self.chol.nrows();
        let xi: Vec<Complex64> = (0..m)
            .map(|_| {
                if self.real {
                    Complex64::new(StandardNormal.sample(rng), 0.0)
                } else {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                }
            })
            .collect();
        (0..m)
            .map(|j| (0..=j).map(|k| self.chol[(j, k)] * xi[k]).sum())
            .collect()
    }
}

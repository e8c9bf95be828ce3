//! Generalized functions represented as a gridded regular part plus
//! delta-type atoms, paired with test functions through `(b, ψ) = ∫ b ψ̄`.

pub mod bounds;
pub mod random;
pub mod test_fn;

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{forward_ft, inverse_ft, Grid, GriddedFunction};
use crate::quad;

pub use bounds::{check_conds_integral, check_uniform_bound, clip_to_bound, clip_with_count, PolyBound};
pub use random::{gram_matrix, sample_process, wiener_covariance, CovarianceKind};
pub use test_fn::{default_test_set, hermite_test_set, Profile, TestFunction};

/// Highest supported total derivative order of an atom.
pub const MAX_ATOM_ORDER: u8 = 2;

/// `weight · ∂^order δ_location`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub location: Vec<f64>,
    pub weight: Complex64,
    pub order: Vec<u8>,
}

impl Atom {
    pub fn dirac(location: &[f64], weight: Complex64) -> Self {
        Atom {
            location: location.to_vec(),
            weight,
            order: vec![0; location.len()],
        }
    }

    pub fn new(location: Vec<f64>, weight: Complex64, order: Vec<u8>) -> Result<Self> {
        let a = Atom {
            location,
            weight,
            order,
        };
        a.validate()?;
        Ok(a)
    }

    fn validate(&self) -> Result<()> {
        if self.location.is_empty() || self.location.len() > 2 || self.order.len() != self.location.len() {
            return Err(Error::InvalidArgument(
                "atom location and order must have length 1 or 2".into(),
            ));
        }
        if !self.location.iter().all(|x| x.is_finite()) || !(self.weight.re.is_finite() && self.weight.im.is_finite()) {
            return Err(Error::InvalidArgument("atom location and weight must be finite".into()));
        }
        if self.total_order() > MAX_ATOM_ORDER {
            return Err(Error::InvalidArgument(format!(
                "atom derivative order {} exceeds {MAX_ATOM_ORDER}",
                self.total_order()
            )));
        }
        Ok(())
    }

    pub fn total_order(&self) -> u8 {
        self.order.iter().sum()
    }

    /// `(−1)^{|α|} w · conj(∂^α ψ)(a)`.
    pub fn pair(&self, psi: &TestFunction) -> Result<Complex64> {
        let sign = if self.total_order().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        Ok(self.weight * sign * psi.deriv(&self.order, &self.location)?.conj())
    }

    /// `w (−i s)^α e^{i a·s}`.
    pub fn ft_at(&self, s: &[f64]) -> Complex64 {
        let mut v = self.weight;
        for ((&a, &o), &si) in self.location.iter().zip(&self.order).zip(s) {
            v *= Complex64::new(0.0, -si).powu(o as u32) * Complex64::from_polar(1.0, a * si);
        }
        v
    }
}

/// A generalized function on the box of `grid`: optional regular density plus
/// a finite list of atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedFunction {
    grid: Grid,
    regular: Option<GriddedFunction>,
    atoms: Vec<Atom>,
}

impl From<GriddedFunction> for GeneralizedFunction {
    fn from(f: GriddedFunction) -> Self {
        GeneralizedFunction {
            grid: *f.grid(),
            regular: Some(f),
            atoms: Vec::new(),
        }
    }
}

impl GeneralizedFunction {
    pub fn new(grid: Grid, regular: Option<GriddedFunction>, atoms: Vec<Atom>) -> Result<Self> {
        if regular.is_none() && atoms.is_empty() {
            return Err(Error::InvalidArgument(
                "a generalized function needs a regular part or at least one atom".into(),
            ));
        }
        if let Some(r) = &regular {
            if !r.grid().matches(&grid) {
                return Err(Error::GridMismatch);
            }
        }
        for a in &atoms {
            a.validate()?;
            if a.location.len() != grid.dim() {
                return Err(Error::InvalidArgument("atom dimension differs from the grid".into()));
            }
            if !grid.contains(&a.location) {
                return Err(Error::InvalidArgument(format!(
                    "atom at {:?} lies outside the grid box",
                    a.location
                )));
            }
        }
        Ok(GeneralizedFunction { grid, regular, atoms })
    }

    pub fn regular(f: GriddedFunction) -> Self {
        f.into()
    }

    pub fn atomic(grid: Grid, atoms: Vec<Atom>) -> Result<Self> {
        Self::new(grid, None, atoms)
    }

    /// `δ_a` on `grid`.
    pub fn dirac(grid: Grid, location: &[f64]) -> Result<Self> {
        Self::atomic(grid, vec![Atom::dirac(location, Complex64::new(1.0, 0.0))])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn regular_part(&self) -> Option<&GriddedFunction> {
        self.regular.as_ref()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn has_atoms(&self) -> bool {
        !self.atoms.is_empty()
    }

    /// `c·b`.
    pub fn scale(&self, c: Complex64) -> Self {
        GeneralizedFunction {
            grid: self.grid,
            regular: self.regular.as_ref().map(|r| r.scale(c)),
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    weight: a.weight * c,
                    ..a.clone()
                })
                .collect(),
        }
    }

    /// `self + other`; both must share the grid.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.grid.matches(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let regular = match (&self.regular, &other.regular) {
            (Some(a), Some(b)) => Some(a.add(b)?),
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (None, None) => None,
        };
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        Ok(GeneralizedFunction {
            grid: self.grid,
            regular,
            atoms,
        })
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

#[derive(Serialize, Deserialize)]
struct AtomRepr {
    loc: Vec<f64>,
    w_re: f64,
    w_im: f64,
    order: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct GfRepr {
    grid: Grid,
    regular: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    atoms: Vec<AtomRepr>,
}

impl Serialize for GeneralizedFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GfRepr {
            grid: self.grid,
            regular: self
                .regular
                .as_ref()
                .map(|r| r.values().iter().map(|v| [v.re, v.im]).collect()),
            atoms: self
                .atoms
                .iter()
                .map(|a| AtomRepr {
                    loc: a.location.clone(),
                    w_re: a.weight.re,
                    w_im: a.weight.im,
                    order: a.order.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GeneralizedFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = GfRepr::deserialize(d)?;
        let regular = repr
            .regular
            .map(|v| GriddedFunction::new(repr.grid, v.iter().map(|p| Complex64::new(p[0], p[1])).collect()))
            .transpose()
            .map_err(D::Error::custom)?;
        let atoms = repr
            .atoms
            .into_iter()
            .map(|a| Atom {
                location: a.loc,
                weight: Complex64::new(a.w_re, a.w_im),
                order: a.order,
            })
            .collect();
        GeneralizedFunction::new(repr.grid, regular, atoms).map_err(D::Error::custom)
    }
}

/// `(b, ψ) = Δ^d Σ b(x_j) conj(ψ(x_j)) + Σ_atoms (−1)^{|α|} w conj(∂^α ψ(a))`.
pub fn apply_functional(b: &GeneralizedFunction, psi: &TestFunction) -> Result<Complex64> {
    if psi.dim() != b.grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "{}-d test function applied to a {}-d generalized function",
            psi.dim(),
            b.grid.dim()
        )));
    }
    let mut total = match &b.regular {
        Some(r) => regular_pairing(r, psi),
        None => Complex64::new(0.0, 0.0),
    };
    for a in &b.atoms {
        total += a.pair(psi)?;
    }
    Ok(total)
}

fn regular_pairing(r: &GriddedFunction, psi: &TestFunction) -> Complex64 {
    let grid = r.grid();
    let dim = grid.dim();
    let sum: Complex64 = r
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.re != 0.0 || v.im != 0.0)
        .map(|(idx, v)| v * psi.eval(&grid.point(idx)[..dim]).conj())
        .sum();
    sum * grid.cell_volume()
}

/// Fourier transform on the dual grid: FFT of the regular part plus the
/// closed-form transforms `w (−i s)^α e^{i a·s}` of the atoms.
pub fn ft_generalized(b: &GeneralizedFunction) -> GriddedFunction {
    let dual = b.grid.dual();
    let mut out = match &b.regular {
        Some(r) => forward_ft(r),
        None => GriddedFunction::zeros(dual),
    };
    if b.atoms.is_empty() {
        return out;
    }
    let dim = dual.dim();
    for (idx, v) in out.values_mut().iter_mut().enumerate() {
        let s = dual.point(idx);
        for a in &b.atoms {
            *v += a.ft_at(&s[..dim]);
        }
    }
    out
}

/// `g ∗ f` as a regular function on the common grid, computed as
/// `Ft⁻¹(Ft g · Ft f)`.
///
/// At most one operand may carry atoms, and that operand's partner must have
/// a regular part.
pub fn convolve_gf(g: &GeneralizedFunction, f: &GeneralizedFunction) -> Result<GeneralizedFunction> {
    if !g.grid.matches(&f.grid) {
        return Err(Error::GridMismatch);
    }
    if g.regular.is_none() && f.regular.is_none() {
        return Err(Error::Rejected(
            "convolution of two purely atomic generalized functions".into(),
        ));
    }
    if g.has_atoms() && f.has_atoms() {
        return Err(Error::Rejected(
            "convolution of two operands that both carry atoms is not representable on the grid".into(),
        ));
    }
    for (name, h) in [("g", g), ("f", f)] {
        if let Some(r) = &h.regular {
            if !crate::grid::decays_within_grid(r) {
                log::warn!("convolve_gf: regular part of {name} does not decay within the grid; result will alias");
            }
        }
    }
    let product = ft_generalized(g).mul(&ft_generalized(f))?;
    let values = inverse_ft(&product).into_values();
    Ok(GriddedFunction::new(g.grid, values)?.into())
}

/// `max_{ψ ∈ test_set} |(b1, ψ) − (b2, ψ)|`.
pub fn weak_distance(b1: &GeneralizedFunction, b2: &GeneralizedFunction, test_set: &[TestFunction]) -> Result<f64> {
    if test_set.is_empty() {
        return Err(Error::InvalidArgument(
            "weak distance needs a non-empty test set".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    for psi in test_set {
        let d = (apply_functional(b1, psi)? - apply_functional(b2, psi)?).norm();
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Weak distance between two gridded functions, possibly on different grids.
pub fn weak_distance_gridded(f1: &GriddedFunction, f2: &GriddedFunction, test_set: &[TestFunction]) -> Result<f64> {
    weak_distance(&f1.clone().into(), &f2.clone().into(), test_set)
}

/// Functional values `(b, ψ)` over a whole test set.
pub fn functional_values(b: &GeneralizedFunction, test_set: &[TestFunction]) -> Result<Vec<Complex64>> {
    test_set.iter().map(|psi| apply_functional(b, psi)).collect()
}

/// Generalized density of a distribution function `F` on R:
/// `(f, ψ) = −∫ F(x) conj(ψ′(x)) dx`.
///
/// `jumps` lists the discontinuities of `F`; the integral is split there so
/// mass points are handled exactly.
pub fn density_functional(cdf: impl Fn(f64) -> f64, jumps: &[f64], psi: &TestFunction) -> Result<Complex64> {
    if psi.dim() != 1 {
        return Err(Error::InvalidArgument(
            "distribution functions are supported on R only".into(),
        ));
    }
    // fails early for profiles without stored derivatives
    psi.deriv(&[1], &[0.0])?;
    let r = psi.radius();
    let panels = ((2.0 * r / psi.oscillation_scale()).ceil() as usize).max(4);
    let value = quad::integrate_piecewise(
        |x| {
            psi.deriv(&[1], &[x])
                .map_or(Complex64::new(0.0, 0.0), |d| d.conj() * cdf(x))
        },
        -r,
        r,
        jumps,
        panels,
    );
    Ok(-value)
}

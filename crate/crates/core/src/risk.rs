//! Quantile-integral risk measures and utility functions.
//!
//! For a probability measure `M` on `(0, 1)`,
//!
//! ```text
//! R(Y) = ∫ F⁻¹_{−Y}(u) dM(u)        U(Y) = ∫ F⁻¹_{Y}(u) dM(u)
//! ```
//!
//! `M` is restricted to finitely many atoms plus a piecewise-constant
//! density, which covers Value-at-Risk, Expected Shortfall and every
//! spectral measure with a step-function spectrum.

use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteDistribution;
use crate::error::{CocmError, Result};
use crate::normal;

const MASS_TOLERANCE: f64 = 1e-12;

/// A probability measure on `(0, 1)`: point masses plus a step density.
///
/// The density equals `levels[i]` on `(breaks[i], breaks[i + 1])` and zero
/// outside `[breaks[0], breaks[last]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectralMeasureRepr", into = "SpectralMeasureRepr")]
pub struct SpectralMeasure {
    atoms: Vec<(f64, f64)>,
    breaks: Vec<f64>,
    levels: Vec<f64>,
    density_bound: f64,
    endpoint_gap: f64,
}

impl SpectralMeasure {
    pub fn new(atoms: Vec<(f64, f64)>, breaks: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        for &(u, w) in &atoms {
            if !(u > 0.0 && u < 1.0) {
                return Err(CocmError::domain(format!(
                    "atom location {u} not in (0, 1)"
                )));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(CocmError::domain(format!("atom mass {w} must be positive")));
            }
        }
        if breaks.is_empty() {
            if !levels.is_empty() {
                return Err(CocmError::domain(
                    "density levels given without breakpoints",
                ));
            }
        } else {
            if levels.len() + 1 != breaks.len() {
                return Err(CocmError::domain(format!(
                    "{} breakpoints need {} levels, got {}",
                    breaks.len(),
                    breaks.len() - 1,
                    levels.len()
                )));
            }
            if breaks[0] < 0.0 || *breaks.last().unwrap() > 1.0 {
                return Err(CocmError::domain("density breakpoints must lie in [0, 1]"));
            }
            if breaks.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(CocmError::domain(
                    "density breakpoints must be strictly increasing",
                ));
            }
            if levels.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
                return Err(CocmError::domain("density levels must be finite and ≥ 0"));
            }
        }

        let mut m = SpectralMeasure {
            atoms,
            breaks,
            levels,
            density_bound: 0.0,
            endpoint_gap: 0.0,
        };
        let total = m.total_mass();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(CocmError::domain(format!("total mass {total} is not 1")));
        }

        // Regularity near the endpoints: with finitely many pieces the
        // density is bounded, and atoms sit at distance ≥ gap from 0 and 1.
        m.density_bound = m.levels.iter().copied().fold(0.0, f64::max).max(1.0);
        m.endpoint_gap = m
            .atoms
            .iter()
            .map(|&(u, _)| u.min(1.0 - u))
            .fold(0.5, f64::min);
        Ok(m)
    }

    /// Unit atom at `1 − p`: conditional Value-at-Risk at level `p`.
    pub fn var(p: f64) -> Result<Self> {
        check_level(p)?;
        Self::new(vec![(1.0 - p, 1.0)], vec![], vec![])
    }

    /// Density `1/p` on `(1 − p, 1)`: Expected Shortfall at level `p`.
    pub fn es(p: f64) -> Result<Self> {
        check_level(p)?;
        Self::new(vec![], vec![1.0 - p, 1.0], vec![1.0 / p])
    }

    /// Lebesgue measure; the corresponding utility is the expectation.
    pub fn lebesgue() -> Self {
        Self::new(vec![], vec![0.0, 1.0], vec![1.0]).expect("valid")
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn has_atoms(&self) -> bool {
        !self.atoms.is_empty()
    }

    /// Density pieces as `(lo, hi, level)`.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breaks
            .windows(2)
            .zip(&self.levels)
            .map(|(w, &l)| (w[0], w[1], l))
    }

    pub fn total_mass(&self) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.1).sum();
        let dens: f64 = self.pieces().map(|(a, b, l)| l * (b - a)).sum();
        atoms + dens
    }

    /// A bound `m̄` with `M((u, v)) ≤ m̄ (v − u)` near both endpoints.
    pub fn density_bound(&self) -> f64 {
        self.density_bound
    }

    /// A width `u₀` such that no atom lies in `(0, u₀)` or `(1 − u₀, 1)`.
    pub fn endpoint_gap(&self) -> f64 {
        self.endpoint_gap
    }

    /// Mass of the open interval `(u, v)`.
    pub fn mass_on(&self, u: f64, v: f64) -> f64 {
        if v <= u {
            return 0.0;
        }
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|(x, _)| *x > u && *x < v)
            .map(|a| a.1)
            .sum();
        let dens: f64 = self
            .pieces()
            .map(|(a, b, l)| l * (b.min(v) - a.max(u)).max(0.0))
            .sum();
        atoms + dens
    }

    /// Density value at `u` (right-continuous at breakpoints); atoms ignored.
    pub fn density_at(&self, u: f64) -> f64 {
        self.pieces()
            .find(|&(a, b, _)| u >= a && u < b)
            .map_or(0.0, |p| p.2)
    }

    /// Density levels over the whole of `(0, 1)` including the implicit zero
    /// regions, in order.
    fn full_levels(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if self.breaks.first().is_some_and(|&b| b > 0.0) {
            out.push(0.0);
        }
        out.extend_from_slice(&self.levels);
        if self.breaks.last().is_some_and(|&b| b < 1.0) {
            out.push(0.0);
        }
        out
    }

    pub fn is_density_nondecreasing(&self) -> bool {
        self.full_levels().windows(2).all(|w| w[0] <= w[1])
    }

    pub fn is_density_nonincreasing(&self) -> bool {
        self.full_levels().windows(2).all(|w| w[0] >= w[1])
    }

    /// `∫ F⁻¹(u) dM(u)` for the quantile function of `d`.
    pub fn integrate_quantile(&self, d: &DiscreteDistribution) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .map(|&(u, w)| w * d.quantile_unchecked(u))
            .sum();
        let dens: f64 = self
            .pieces()
            .map(|(a, b, l)| piece_integral(d, a, b, l))
            .sum();
        atoms + dens
    }

    /// `∫ Φ⁻¹(u) dM(u)`, using `∫_a^b Φ⁻¹ = φ(Φ⁻¹(a)) − φ(Φ⁻¹(b))` on the
    /// density pieces.
    pub fn integrate_normal_quantile(&self) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .map(|&(u, w)| w * normal::quantile(u))
            .sum();
        let dens: f64 = self
            .pieces()
            .map(|(a, b, l)| l * (normal::density_at_quantile(a) - normal::density_at_quantile(b)))
            .sum();
        atoms + dens
    }

    /// `∫ max(c + Φ⁻¹(u), 0) dM(u)`: the integral of the quantile function
    /// of `(c + ε)_+` for standard normal `ε`.
    pub fn integrate_shifted_normal_positive_part(&self, c: f64) -> f64 {
        let zero_below = normal::cdf(-c);
        let atoms: f64 = self
            .atoms
            .iter()
            .map(|&(u, w)| w * (c + normal::quantile(u)).max(0.0))
            .sum();
        let dens: f64 = self
            .pieces()
            .map(|(a, b, l)| {
                let a = a.max(zero_below);
                if b <= a {
                    0.0
                } else {
                    l * (c * (b - a) + normal::density_at_quantile(a)
                        - normal::density_at_quantile(b))
                }
            })
            .sum();
        atoms + dens
    }
}

fn piece_integral(d: &DiscreteDistribution, a: f64, b: f64, level: f64) -> f64 {
    level * d.quantile_integral(a, b)
}

fn check_level(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(CocmError::domain(format!("level {p} outside (0, 1)")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum SpectralMeasureRepr {
    Var {
        var: f64,
    },
    Es {
        es: f64,
    },
    General {
        #[serde(default)]
        atoms: Vec<(f64, f64)>,
        #[serde(default)]
        density: Option<(Vec<f64>, Vec<f64>)>,
    },
}

impl TryFrom<SpectralMeasureRepr> for SpectralMeasure {
    type Error = CocmError;

    fn try_from(r: SpectralMeasureRepr) -> Result<Self> {
        match r {
            SpectralMeasureRepr::Var { var } => SpectralMeasure::var(var),
            SpectralMeasureRepr::Es { es } => SpectralMeasure::es(es),
            SpectralMeasureRepr::General { atoms, density } => {
                let (breaks, levels) = density.unwrap_or_default();
                SpectralMeasure::new(atoms, breaks, levels)
            }
        }
    }
}

impl From<SpectralMeasure> for SpectralMeasureRepr {
    fn from(m: SpectralMeasure) -> Self {
        let density = (!m.breaks.is_empty()).then_some((m.breaks, m.levels));
        SpectralMeasureRepr::General {
            atoms: m.atoms,
            density,
        }
    }
}

/// The capital requirement family used by a valuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectralMeasureRepr", into = "SpectralMeasureRepr")]
pub enum RiskMeasureKind {
    /// Value-at-Risk at level `p` (the `1 − p` quantile of the loss).
    VaR(f64),
    /// Expected Shortfall at level `p`.
    ExpectedShortfall(f64),
    Spectral(SpectralMeasure),
}

impl RiskMeasureKind {
    pub fn to_spectral(&self) -> SpectralMeasure {
        match self {
            RiskMeasureKind::VaR(p) => SpectralMeasure::var(*p).expect("validated level"),
            RiskMeasureKind::ExpectedShortfall(p) => {
                SpectralMeasure::es(*p).expect("validated level")
            }
            RiskMeasureKind::Spectral(m) => m.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RiskMeasureKind::VaR(p) | RiskMeasureKind::ExpectedShortfall(p) => check_level(*p),
            RiskMeasureKind::Spectral(_) => Ok(()),
        }
    }
}

impl From<SpectralMeasure> for RiskMeasureKind {
    fn from(m: SpectralMeasure) -> Self {
        RiskMeasureKind::Spectral(m)
    }
}

impl TryFrom<SpectralMeasureRepr> for RiskMeasureKind {
    type Error = CocmError;

    fn try_from(r: SpectralMeasureRepr) -> Result<Self> {
        match r {
            SpectralMeasureRepr::Var { var } => check_level(var).map(|_| RiskMeasureKind::VaR(var)),
            SpectralMeasureRepr::Es { es } => {
                check_level(es).map(|_| RiskMeasureKind::ExpectedShortfall(es))
            }
            general => SpectralMeasure::try_from(general).map(RiskMeasureKind::Spectral),
        }
    }
}

impl From<RiskMeasureKind> for SpectralMeasureRepr {
    fn from(k: RiskMeasureKind) -> Self {
        match k {
            RiskMeasureKind::VaR(var) => SpectralMeasureRepr::Var { var },
            RiskMeasureKind::ExpectedShortfall(es) => SpectralMeasureRepr::Es { es },
            RiskMeasureKind::Spectral(m) => m.into(),
        }
    }
}

/// `R(Y) = ∫ F⁻¹_{−Y}(u) dM(u)` for `d` the law of `Y`.
pub fn risk(d: &DiscreteDistribution, m: &SpectralMeasure) -> f64 {
    m.integrate_quantile(&d.negate())
}

/// `U(Y) = ∫ F⁻¹_{Y}(u) dM(u)` for `d` the law of `Y`.
pub fn utility(d: &DiscreteDistribution, m: &SpectralMeasure) -> f64 {
    m.integrate_quantile(d)
}

/// Value-at-Risk of `Y` at level `p`: `F⁻¹_{−Y}(1 − p)`.
pub fn var_level(d: &DiscreteDistribution, p: f64) -> Result<f64> {
    check_level(p)?;
    Ok(d.negate().quantile_unchecked(1.0 - p))
}

/// Expected Shortfall of `Y` at level `p`: `p⁻¹ ∫_{1−p}^1 F⁻¹_{−Y}(u) du`.
pub fn es_level(d: &DiscreteDistribution, p: f64) -> Result<f64> {
    check_level(p)?;
    Ok(piece_integral(&d.negate(), 1.0 - p, 1.0, 1.0 / p))
}

/// `R(−ε)` for standard normal `ε`.
pub fn normal_risk(kind: &RiskMeasureKind) -> Result<f64> {
    kind.validate()?;
    Ok(match kind {
        RiskMeasureKind::VaR(p) => normal::quantile(1.0 - p),
        RiskMeasureKind::ExpectedShortfall(p) => normal::pdf(normal::quantile(1.0 - p)) / p,
        RiskMeasureKind::Spectral(m) => m.integrate_normal_quantile(),
    })
}

/// Capital requirement `R(−Y)` for `d` the law of `Y`.
pub fn capital_requirement(d: &DiscreteDistribution, kind: &RiskMeasureKind) -> f64 {
    match kind {
        RiskMeasureKind::VaR(p) => d.quantile_unchecked(1.0 - p),
        RiskMeasureKind::ExpectedShortfall(p) => piece_integral(d, 1.0 - p, 1.0, 1.0 / p),
        RiskMeasureKind::Spectral(m) => m.integrate_quantile(d),
    }
}

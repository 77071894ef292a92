//! Scaled model parameters, regime classification and Matsubara frequencies.
//!
//! Every quantity in the crate is expressed in scaled units: time in units of
//! `sqrt(M)/ω₀`, position in units of the initial displacement and energy in
//! units of `ω₀² q₀²`. In those units the susceptibilities depend only on the
//! friction `γ`, and the characteristic frequency is `ω = sqrt(γ² − 4)`.

use num_complex::Complex64;

use crate::error::{QbmError, Result};

/// Half-width of the band around `γ = 2` that is labelled aperiodic.
pub const EPS_REGIME: f64 = 1e-9;

/// Truncation controls for the Matsubara sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    pub n_max: u64,
    /// Stop once the integral tail bound drops below `rel_tol` times the
    /// partial sum.
    pub rel_tol: f64,
}

impl Default for SeriesControl {
    fn default() -> Self {
        SeriesControl {
            n_max: 1_000_000,
            rel_tol: 1e-10,
        }
    }
}

impl SeriesControl {
    pub fn validate(&self) -> Result<()> {
        if self.n_max < 10 {
            return Err(QbmError::Config(format!("n_max must be >= 10, got {}", self.n_max)));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(QbmError::Config(format!(
                "series rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

/// Controls for the adaptive quadratures and for the smallest time at which
/// derivative-based correlations are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadControl {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum bisection depth of any panel.
    pub max_depth: u32,
    pub t_min: f64,
}

impl Default for QuadControl {
    fn default() -> Self {
        QuadControl {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_depth: 40,
            t_min: 1e-3,
        }
    }
}

impl QuadControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(QbmError::Config("quadrature tolerances must be positive".into()));
        }
        if !(self.t_min > 0.0 && self.t_min.is_finite()) {
            return Err(QbmError::Config(format!("t_min must be positive, got {}", self.t_min)));
        }
        if self.max_depth == 0 {
            return Err(QbmError::Config("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Scaled bath and particle parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub gamma: f64,
    pub temperature: f64,
    /// First Matsubara frequency `ν = 2π/(ħβ)` in scaled units.
    pub nu: f64,
    /// Drude cutoff of the bath spectrum.
    pub omega_d: f64,
    pub series: SeriesControl,
    pub quad: QuadControl,
}

impl ModelParams {
    /// Parameters with the default numeric controls and `ω_D = 10 ν`.
    pub fn new(gamma: f64, temperature: f64, nu: f64) -> Result<Self> {
        let p = ModelParams {
            gamma,
            temperature,
            nu,
            omega_d: 10.0 * nu,
            series: SeriesControl::default(),
            quad: QuadControl::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_omega_d(mut self, omega_d: f64) -> Result<Self> {
        self.omega_d = omega_d;
        self.validate()?;
        Ok(self)
    }

    pub fn with_t_min(mut self, t_min: f64) -> Result<Self> {
        self.quad.t_min = t_min;
        self.validate()?;
        Ok(self)
    }

    pub fn with_series(mut self, series: SeriesControl) -> Result<Self> {
        self.series = series;
        self.validate()?;
        Ok(self)
    }

    pub fn with_quad(mut self, quad: QuadControl) -> Result<Self> {
        self.quad = quad;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("temperature", self.temperature),
            ("nu", self.nu),
            ("omega_d", self.omega_d),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(QbmError::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        self.series.validate()?;
        self.quad.validate()
    }

    pub fn regime(&self) -> Regime {
        // gamma was validated positive
        classify_regime(self.gamma).expect("validated gamma")
    }

    /// `ω² = γ² − 4`, computed without cancellation near the critical point.
    pub fn omega_sq(&self) -> f64 {
        omega_sq(self.gamma)
    }
}

pub(crate) fn omega_sq(gamma: f64) -> f64 {
    (gamma - 2.0) * (gamma + 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeKind {
    Periodic,
    Aperiodic,
    Overdamped,
}

impl std::fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RegimeKind::Periodic => "periodic",
            RegimeKind::Aperiodic => "aperiodic",
            RegimeKind::Overdamped => "overdamped",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regime {
    pub kind: RegimeKind,
    /// `ω = sqrt(γ² − 4)`; purely imaginary when periodic, real otherwise.
    pub omega: Complex64,
    /// `|Im ω|` when periodic, `Re ω` when overdamped, zero when aperiodic.
    pub omega_tilde: f64,
}

pub fn classify_regime(gamma: f64) -> Result<Regime> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(QbmError::domain(format!("gamma must be positive, got {gamma}")));
    }
    let w2 = omega_sq(gamma);
    let mag = w2.abs().sqrt();
    let regime = if (gamma - 2.0).abs() <= EPS_REGIME {
        Regime {
            kind: RegimeKind::Aperiodic,
            omega: Complex64::new(0.0, 0.0),
            omega_tilde: 0.0,
        }
    } else if gamma < 2.0 {
        Regime {
            kind: RegimeKind::Periodic,
            omega: Complex64::new(0.0, mag),
            omega_tilde: mag,
        }
    } else {
        Regime {
            kind: RegimeKind::Overdamped,
            omega: Complex64::new(mag, 0.0),
            omega_tilde: mag,
        }
    };
    Ok(regime)
}

/// The n-th Matsubara frequency `ν_n = n ν`.
pub fn matsubara(n: u64, nu: f64) -> Result<f64> {
    if n == 0 {
        return Err(QbmError::domain("Matsubara sums start at n = 1"));
    }
    Ok(n as f64 * nu)
}

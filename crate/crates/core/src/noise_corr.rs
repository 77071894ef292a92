//! Correlations of the velocity noise `φ_v(t) = v(t) − χ̇_v(t)v₀ − χ̇_q(t)q₀`.
//!
//! Instead of integrating the singular bath kernel directly, both functions
//! are assembled from derivatives of `⟨q(t)q₀⟩`:
//!
//! ```text
//! ⟨φ_v(t)φ_v(s)⟩ = V(t−s) − χ̇_v(t)V(s) − χ̇_v(s)V(t) − χ̇_q(t)P(s) − χ̇_q(s)P(t)
//!                + χ̇_v(t)χ̇_v(s)⟨v₀²⟩ + [χ̇_v(t)χ̇_q(s) + χ̇_v(s)χ̇_q(t)]⟨v₀q₀⟩
//!                + χ̇_q(t)χ̇_q(s)⟨q₀²⟩
//! ⟨φ_v(t)q₀⟩     = P(t) − χ̇_v(t)⟨v₀q₀⟩ − χ̇_q(t)⟨q₀²⟩
//! ```
//!
//! with `V(τ) = ⟨v(τ)v₀⟩` and `P(τ) = ⟨v(τ)q₀⟩`. Real and imaginary parts are
//! carried separately. For `τ < 0`, `V` and `P` are continued by parity:
//! `S` is even and `A` is odd.

use crate::correlations::{ComplexSample, Correlations, Dispersions};
use crate::error::{QbmError, Result};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoTimeSample {
    pub t: f64,
    pub s: f64,
    pub value: ComplexSample,
    /// `|t − s|` was below `t_min` and was raised to `t_min`.
    pub clamped: bool,
}

/// Everything the two-time formula needs at a single time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTerms {
    pub dchi_q: f64,
    pub dchi_v: f64,
    /// `⟨v(t)v₀⟩`
    pub vv: ComplexSample,
    /// `⟨v(t)q₀⟩`
    pub vq: ComplexSample,
}

#[derive(Debug, Clone)]
pub struct NoiseCorrelations {
    corr: Correlations,
    disp: Dispersions,
}

impl NoiseCorrelations {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let corr = Correlations::new(params)?;
        let disp = corr.dispersions()?;
        Ok(NoiseCorrelations { corr, disp })
    }

    pub fn correlations(&self) -> &Correlations {
        &self.corr
    }

    pub fn dispersions(&self) -> &Dispersions {
        &self.disp
    }

    pub fn t_min(&self) -> f64 {
        self.corr.params().quad.t_min
    }

    /// Local terms at `t > 0`.
    pub fn local(&self, t: f64) -> Result<LocalTerms> {
        let chi = self.corr.susceptibility().eval(t)?;
        let b = self.corr.blocks(t)?;
        Ok(LocalTerms {
            dchi_q: chi.dchi_q,
            dchi_v: chi.dchi_v,
            vv: -b.d2c,
            vq: b.dc,
        })
    }

    /// `⟨v(τ)v₀⟩` for `|τ| ≥ t_min`, continued to negative `τ` by parity.
    pub fn velocity_at(&self, tau: f64) -> Result<ComplexSample> {
        let v = self.corr.velocity(tau.abs())?;
        Ok(if tau < 0.0 { ComplexSample::new(v.re, -v.im) } else { v })
    }

    /// The nine-term combination given the local terms at `t`, `s` and the
    /// velocity correlation at `t − s`.
    pub fn combine(&self, at_t: &LocalTerms, at_s: &LocalTerms, v_diff: ComplexSample) -> ComplexSample {
        let d = &self.disp;
        let cross = at_t.dchi_v * at_s.dchi_q + at_s.dchi_v * at_t.dchi_q;
        let q0 = ComplexSample::new(d.q0_sq, 0.0);
        let v0 = ComplexSample::new(d.v0_sq, 0.0);
        v_diff - at_s.vv * at_t.dchi_v - at_t.vv * at_s.dchi_v - at_s.vq * at_t.dchi_q - at_t.vq * at_s.dchi_q
            + v0 * (at_t.dchi_v * at_s.dchi_v)
            + d.v0q0 * cross
            + q0 * (at_t.dchi_q * at_s.dchi_q)
    }

    /// `⟨φ_v(t)φ_v(s)⟩` for `t, s ≥ t_min`.
    pub fn phi_phi(&self, t: f64, s: f64) -> Result<TwoTimeSample> {
        let t_min = self.t_min();
        if !(t >= t_min && s >= t_min) {
            return Err(QbmError::domain(format!(
                "noise correlation needs t, s >= t_min = {t_min}, got ({t}, {s})"
            )));
        }
        let mut diff = t - s;
        let clamped = diff.abs() < t_min;
        if clamped {
            diff = if diff < 0.0 { -t_min } else { t_min };
        }
        let value = self.combine(&self.local(t)?, &self.local(s)?, self.velocity_at(diff)?);
        Ok(TwoTimeSample { t, s, value, clamped })
    }

    /// `⟨φ_v(t)q₀⟩` from local terms.
    pub fn phi_q0_from(&self, at_t: &LocalTerms) -> ComplexSample {
        let d = &self.disp;
        at_t.vq - d.v0q0 * at_t.dchi_v - ComplexSample::new(d.q0_sq, 0.0) * at_t.dchi_q
    }

    /// `⟨φ_v(t)q₀⟩` for `t ≥ t_min`.
    pub fn phi_q0(&self, t: f64) -> Result<ComplexSample> {
        let t_min = self.t_min();
        if !(t >= t_min) {
            return Err(QbmError::domain(format!("t = {t} is below t_min = {t_min}")));
        }
        Ok(self.phi_q0_from(&self.local(t)?))
    }
}

pub fn phi_phi(t: f64, s: f64, params: &ModelParams) -> Result<TwoTimeSample> {
    NoiseCorrelations::new(params)?.phi_phi(t, s)
}

pub fn phi_q0(t: f64, params: &ModelParams) -> Result<ComplexSample> {
    NoiseCorrelations::new(params)?.phi_q0(t)
}

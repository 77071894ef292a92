//! Position and velocity susceptibilities, the drift frequency `Ω = χ̇_q/χ_q`,
//! and the zeros of `χ_q` where `Ω` has its poles.
//!
//! The closed forms
//!
//! ```text
//! χ_q(t) = e^{−γt/2} (cosh(ωt/2) + (γ/ω) sinh(ωt/2))
//! χ_v(t) = (2/ω) e^{−γt/2} sinh(ωt/2)
//! ```
//!
//! are entire functions of `ω²`, so they are evaluated through
//! `cosh(√z)` and `sinh(√z)/√z` with `z = ω²t²/4`. That single expression
//! covers the periodic branch (trigonometric functions of `ω̃t/2`), the
//! aperiodic limit and the overdamped branch without complex arithmetic and
//! without a 0/0 at `γ = 2`. For overdamped motion at large `ωt` the
//! two-exponential form is used instead so that nothing overflows.

use crate::error::{QbmError, Result};
use crate::numerics::{bracket_root, cosh_sqrt, sinhc_sqrt};
use crate::params::{classify_regime, omega_sq, Regime, RegimeKind};

/// Default half-width of the exclusion window around each zero of `χ_q`.
pub const DEFAULT_GUARD_WIDTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SusceptibilityValue {
    pub chi_q: f64,
    pub chi_v: f64,
    pub dchi_q: f64,
    pub dchi_v: f64,
}

/// Second time derivatives, evaluated from their own closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondDerivatives {
    pub d2chi_q: f64,
    pub d2chi_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoleList {
    pub times: Vec<f64>,
    pub guard_width: f64,
}

impl PoleList {
    /// The pole whose guard window contains `t`, if any.
    pub fn guarding(&self, t: f64) -> Option<f64> {
        self.times
            .iter()
            .copied()
            .find(|p| (t - p).abs() < self.guard_width)
    }

    /// Distance from `t` to the nearest pole.
    pub fn distance(&self, t: f64) -> f64 {
        self.times
            .iter()
            .map(|p| (t - p).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Excluded intervals `[p − w, p + w]`.
    pub fn windows(&self) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .map(|&p| (p - self.guard_width, p + self.guard_width))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Susceptibility {
    gamma: f64,
    omega_sq: f64,
    regime: Regime,
    guard_width: f64,
}

impl Susceptibility {
    pub fn new(gamma: f64) -> Result<Self> {
        let regime = classify_regime(gamma)?;
        Ok(Susceptibility {
            gamma,
            omega_sq: omega_sq(gamma),
            regime,
            guard_width: DEFAULT_GUARD_WIDTH,
        })
    }

    pub fn with_guard_width(mut self, guard_width: f64) -> Result<Self> {
        if !(guard_width > 0.0) {
            return Err(QbmError::domain("guard width must be positive"));
        }
        self.guard_width = guard_width;
        Ok(self)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn guard_width(&self) -> f64 {
        self.guard_width
    }

    fn exponential_branch(&self, t: f64) -> bool {
        self.omega_sq > 0.0 && 0.25 * self.omega_sq * t * t > 1.0
    }

    // (λ₁, λ₂, ω) for the overdamped case, λ₂ = 1/λ₁ avoids cancellation.
    fn rates(&self) -> (f64, f64, f64) {
        let w = self.omega_sq.sqrt();
        let l1 = 0.5 * (self.gamma + w);
        (l1, 1.0 / l1, w)
    }

    pub fn eval(&self, t: f64) -> Result<SusceptibilityValue> {
        if !(t >= 0.0) {
            return Err(QbmError::domain(format!("susceptibility needs t >= 0, got {t}")));
        }
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> SusceptibilityValue {
        let g = self.gamma;
        if self.exponential_branch(t) {
            let (l1, l2, w) = self.rates();
            let e2 = (-l2 * t).exp();
            let r = (-w * t).exp();
            let chi_v = -e2 * (-w * t).exp_m1() / w;
            SusceptibilityValue {
                chi_q: e2 * (l1 - l2 * r) / w,
                chi_v,
                dchi_q: -chi_v,
                dchi_v: e2 * (l1 * r - l2) / w,
            }
        } else {
            let z = 0.25 * self.omega_sq * t * t;
            let e = (-0.5 * g * t).exp();
            let c = cosh_sqrt(z);
            let s = t * sinhc_sqrt(z);
            let chi_v = e * s;
            SusceptibilityValue {
                chi_q: e * (c + 0.5 * g * s),
                chi_v,
                dchi_q: -chi_v,
                dchi_v: e * (c - 0.5 * g * s),
            }
        }
    }

    pub fn second_derivatives(&self, t: f64) -> Result<SecondDerivatives> {
        if !(t >= 0.0) {
            return Err(QbmError::domain(format!("susceptibility needs t >= 0, got {t}")));
        }
        let g = self.gamma;
        if self.exponential_branch(t) {
            let (l1, l2, w) = self.rates();
            let e1 = (-l1 * t).exp();
            let e2 = (-l2 * t).exp();
            Ok(SecondDerivatives {
                d2chi_q: (l2 * e2 - l1 * e1) / w,
                d2chi_v: (l2 * l2 * e2 - l1 * l1 * e1) / w,
            })
        } else {
            let z = 0.25 * self.omega_sq * t * t;
            let e = (-0.5 * g * t).exp();
            let c = cosh_sqrt(z);
            let s = t * sinhc_sqrt(z);
            Ok(SecondDerivatives {
                d2chi_q: -e * (c - 0.5 * g * s),
                d2chi_v: e * (0.5 * (g * g - 2.0) * s - g * c),
            })
        }
    }

    /// `Ω(t) = χ̇_q(t)/χ_q(t)`; fails inside the guard window of a pole.
    pub fn drift_frequency(&self, t: f64) -> Result<f64> {
        let v = self.eval(t)?;
        if let Some(pole) = self.nearest_zero(t) {
            if (t - pole).abs() < self.guard_width {
                return Err(QbmError::Pole { t, pole });
            }
        }
        Ok(v.dchi_q / v.chi_q)
    }

    /// The zero of `χ_q` closest to `t` (periodic regime only), refined by
    /// bisection around the analytic estimate.
    pub fn nearest_zero(&self, t: f64) -> Option<f64> {
        if self.regime.kind != RegimeKind::Periodic {
            return None;
        }
        let wt = self.regime.omega_tilde;
        let period = 2.0 * std::f64::consts::PI / wt;
        let first = (2.0 / wt) * (std::f64::consts::PI - (wt / self.gamma).atan());
        let k = ((t - first) / period).round().max(0.0);
        let estimate = first + k * period;
        let half = 0.25 * period;
        let f = |x: f64| self.eval_unchecked(x).chi_q;
        bracket_root(f, (estimate - half).max(0.0), estimate + half).ok()
    }

    /// All zeros of `χ_q` in `(0, t_max]`.
    ///
    /// Sign changes are located on a grid of spacing `π/(8ω̃)` (sixteen cells
    /// per zero spacing) and each is refined by bisection.
    pub fn find_chi_q_zeros(&self, t_max: f64) -> Result<PoleList> {
        if !(t_max > 0.0) {
            return Err(QbmError::domain(format!("t_max must be positive, got {t_max}")));
        }
        let mut times = Vec::new();
        if self.regime.kind == RegimeKind::Periodic {
            let step = std::f64::consts::PI / (8.0 * self.regime.omega_tilde);
            let f = |x: f64| self.eval_unchecked(x).chi_q;
            let cells = (t_max / step).ceil() as usize;
            let mut lo = 0.0;
            let mut f_lo = f(lo);
            for i in 1..=cells {
                let hi = (i as f64 * step).min(t_max);
                let f_hi = f(hi);
                if f_hi == 0.0 || f_lo.signum() != f_hi.signum() {
                    let root = bracket_root(f, lo, hi)?;
                    if root > 0.0 && root <= t_max && times.last().is_none_or(|&p: &f64| root > p) {
                        times.push(root);
                    }
                }
                lo = hi;
                f_lo = f_hi;
            }
        }
        Ok(PoleList {
            times,
            guard_width: self.guard_width,
        })
    }
}

/// Convenience wrapper around [`Susceptibility::eval`].
pub fn eval_susceptibility(t: f64, gamma: f64) -> Result<SusceptibilityValue> {
    Susceptibility::new(gamma)?.eval(t)
}

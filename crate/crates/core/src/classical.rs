//! The classical Markovian limit: white noise `⟨ξ(t)ξ(s)⟩ = 2γTδ(t − s)`.
//!
//! In this limit
//!
//! ```text
//! ⟨φ_v(t)φ_v(s)⟩ = T [χ̇_v(|t−s|) − χ̇_v(t)χ̇_v(s) − χ_v(t)χ_v(s)]
//! D_clas(t)      = 4T/(γ + ω coth(ωt/2)) = 2Tχ_v/χ_q
//! σ_clas(t)      = T[1 − e^{−γt}((γ²−2)cosh ωt + γω sinh ωt − 2)/ω²] = T(1 − χ_q²)
//! ```
//!
//! All regimes go through real closed forms; `ω coth(ωt/2)` becomes
//! `ω̃ cot(ω̃t/2)` in the periodic regime and `2/t` at critical damping.

use crate::error::{QbmError, Result};
use crate::numerics::xcoth_sqrt;
use crate::params::omega_sq;
use crate::susceptibility::Susceptibility;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalParams {
    pub gamma: f64,
    pub temperature: f64,
}

impl ClassicalParams {
    pub fn new(gamma: f64, temperature: f64) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("temperature", temperature)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(QbmError::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(ClassicalParams { gamma, temperature })
    }
}

/// Classical closed forms for one `(γ, T)`.
#[derive(Debug, Clone, Copy)]
pub struct Classical {
    params: ClassicalParams,
    chi: Susceptibility,
}

impl Classical {
    pub fn new(params: &ClassicalParams) -> Result<Self> {
        let params = ClassicalParams::new(params.gamma, params.temperature)?;
        Ok(Classical {
            params,
            chi: Susceptibility::new(params.gamma)?,
        })
    }

    pub fn params(&self) -> &ClassicalParams {
        &self.params
    }

    pub fn susceptibility(&self) -> &Susceptibility {
        &self.chi
    }

    pub fn phi_phi(&self, t: f64, s: f64) -> Result<f64> {
        if !(t >= 0.0 && s >= 0.0) {
            return Err(QbmError::domain(format!("classical noise needs t, s >= 0, got ({t}, {s})")));
        }
        let a = self.chi.eval(t)?;
        let b = self.chi.eval(s)?;
        let d = self.chi.eval((t - s).abs())?;
        Ok(self.params.temperature * (d.dchi_v - a.dchi_v * b.dchi_v - a.chi_v * b.chi_v))
    }

    /// `D_clas(t)` for `t > 0`; not finite exactly at a zero of `χ_q`.
    pub fn diffusion(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(QbmError::domain(format!("classical diffusion needs t > 0, got {t}")));
        }
        let g = self.params.gamma;
        let z = 0.25 * omega_sq(g) * t * t;
        // 4T/(γ + (2/t) x coth x) with x = ωt/2
        Ok(4.0 * self.params.temperature * t / (g * t + 2.0 * xcoth_sqrt(z)))
    }

    /// `σ_clas(t)` for `t ≥ 0`.
    pub fn sigma(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(QbmError::domain(format!("classical width needs t >= 0, got {t}")));
        }
        Ok(self.params.temperature * self.one_minus_chi_q_sq(t))
    }

    /// `σ̇_clas(t) = 2Tχ_qχ_v`.
    pub fn sigma_rate(&self, t: f64) -> Result<f64> {
        let v = self.chi.eval(t)?;
        Ok(2.0 * self.params.temperature * v.chi_q * v.chi_v)
    }

    // 1 − χ_q², free of the cancellation near t = 0.
    fn one_minus_chi_q_sq(&self, t: f64) -> f64 {
        let g = self.params.gamma;
        if t <= 1.0 && g * t <= 1.0 {
            return taylor_one_minus_chi_q_sq(g, t);
        }
        let w2 = omega_sq(g);
        let chi_q = self.chi.eval_unchecked(t).chi_q;
        if w2 > 0.0 && 0.25 * w2 * t * t > 1.0 {
            // overdamped: 1 − χ_q = [λ₁(1 − e^{−λ₂t}) − λ₂(1 − e^{−λ₁t})]/ω
            let w = w2.sqrt();
            let l1 = 0.5 * (g + w);
            let l2 = 1.0 / l1;
            let one_minus = (-l1 * (-l2 * t).exp_m1() + l2 * (-l1 * t).exp_m1()) / w;
            return one_minus * (1.0 + chi_q);
        }
        (1.0 - chi_q) * (1.0 + chi_q)
    }
}

// Power series of 1 − χ_q(t)² from χ̈ + γχ̇ + χ = 0, χ(0) = 1, χ̇(0) = 0.
fn taylor_one_minus_chi_q_sq(g: f64, t: f64) -> f64 {
    const N: usize = 48;
    let mut c = [0.0; N];
    c[0] = 1.0;
    for k in 0..N - 2 {
        let kf = k as f64;
        c[k + 2] = -(g * (kf + 1.0) * c[k + 1] + c[k]) / ((kf + 1.0) * (kf + 2.0));
    }
    // scale coefficients by t^k
    let mut p = 1.0;
    for ck in c.iter_mut() {
        *ck *= p;
        p *= t;
    }
    let mut sum = 0.0;
    for n in (1..N).rev() {
        let sq: f64 = (0..=n).map(|i| c[i] * c[n - i]).sum();
        sum -= sq;
    }
    sum
}

pub fn phi_phi_clas(t: f64, s: f64, params: &ClassicalParams) -> Result<f64> {
    Classical::new(params)?.phi_phi(t, s)
}

pub fn d_clas(t: f64, params: &ClassicalParams) -> Result<f64> {
    Classical::new(params)?.diffusion(t)
}

pub fn sigma_clas(t: f64, params: &ClassicalParams) -> Result<f64> {
    Classical::new(params)?.sigma(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::adaptive_quad;
    use crate::params::QuadControl;

    fn cls(g: f64, temp: f64) -> Classical {
        Classical::new(&ClassicalParams::new(g, temp).unwrap()).unwrap()
    }

    // σ_clas from the printed closed form, real ω only
    fn sigma_printed(g: f64, temp: f64, t: f64) -> f64 {
        let w = (g * g - 4.0).sqrt();
        temp * (1.0 - (-g * t).exp() * ((g * g - 2.0) * (w * t).cosh() + g * w * (w * t).sinh() - 2.0) / (w * w))
    }

    #[test]
    fn noise_vanishes_on_the_axes_and_is_symmetric() {
        let c = cls(4.0, 1.0);
        assert_eq!(c.phi_phi(0.0, 1.3).unwrap(), 0.0);
        assert_eq!(c.phi_phi(0.7, 0.0).unwrap(), 0.0);
        for t in [0.1, 1.0, 3.3] {
            for s in [0.2, 1.7, 5.0] {
                assert_eq!(c.phi_phi(t, s).unwrap(), c.phi_phi(s, t).unwrap());
            }
        }
    }

    #[test]
    fn noise_matches_defining_integral() {
        // 2γT ∫₀^{min(t,s)} χ̇_v(t−x) χ̇_v(s−x) dx
        let (g, temp) = (4.0, 1.0);
        let c = cls(g, temp);
        let chi = Susceptibility::new(g).unwrap();
        let q = QuadControl {
            abs_tol: 1e-15,
            rel_tol: 1e-13,
            ..QuadControl::default()
        };
        for (t, s) in [(1.0, 0.5), (0.3, 2.0), (4.0, 4.0)] {
            let f = |x: f64| chi.eval(t - x).unwrap().dchi_v * chi.eval(s - x).unwrap().dchi_v;
            let want = 2.0 * g * temp * adaptive_quad(f, 0.0, t.min(s), &q).value;
            assert!((c.phi_phi(t, s).unwrap() - want).abs() < 1e-10, "({t},{s})");
        }
    }

    #[test]
    fn diffusion_limits() {
        let temp = 0.7;
        let c = cls(4.0, temp);
        let limit = 4.0 * temp / (4.0 + 12f64.sqrt());
        assert!((c.diffusion(100.0).unwrap() - limit).abs() < 1e-12);
        assert!((limit / temp - 0.535_898_4).abs() < 1e-7);
        assert!(c.diffusion(1e-9).unwrap().abs() < 1e-8);
        assert!(c.diffusion(0.0).is_err());
        // aperiodic branch 4Tt/(γt + 2)
        let a = cls(2.0, temp);
        for t in [0.01, 1.0, 30.0] {
            assert!((a.diffusion(t).unwrap() - 4.0 * temp * t / (2.0 * t + 2.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn diffusion_equals_two_t_chi_v_over_chi_q() {
        for g in [0.5, 1.0, 2.0, 4.0, 318.0] {
            let c = cls(g, 1.3);
            for t in [0.05, 0.9, 3.0, 7.5] {
                let v = c.susceptibility().eval(t).unwrap();
                let want = 2.6 * v.chi_v / v.chi_q;
                assert!((c.diffusion(t).unwrap() - want).abs() < 1e-12 * want.abs().max(1.0), "{g} {t}");
            }
        }
    }

    #[test]
    fn periodic_diffusion_turns_negative() {
        for g in [0.5, 1.0] {
            let c = cls(g, 1.0);
            let neg = (1..1000).any(|i| c.diffusion(0.01 * i as f64).unwrap() < 0.0);
            assert!(neg);
        }
        for g in [2.0, 4.0] {
            let c = cls(g, 1.0);
            assert!((1..1000).all(|i| c.diffusion(0.01 * i as f64).unwrap() >= 0.0));
        }
    }

    #[test]
    fn sigma_values() {
        let c = cls(4.0, 2.0);
        assert_eq!(c.sigma(0.0).unwrap(), 0.0);
        assert!((c.sigma(200.0).unwrap() - 2.0).abs() < 1e-12);
        for t in [0.01, 0.2, 1.0, 5.0] {
            let want = sigma_printed(4.0, 2.0, t);
            assert!((c.sigma(t).unwrap() - want).abs() < 1e-12 * want.max(1e-3), "{t}");
        }
        // both sides of the series seam at t = 1/γ
        for t in [0.249_999, 0.25, 0.250_001] {
            let want = sigma_printed(4.0, 2.0, t);
            assert!((c.sigma(t).unwrap() - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn pair_satisfies_moment_equation() {
        // σ̇ − 2Ωσ − D = 0 with σ̇ from the analytic derivative
        for g in [0.5, 1.0, 2.0, 4.0, 250.0] {
            let c = cls(g, 25.2);
            for i in 1..200 {
                let t = 0.05 * i as f64;
                let Ok(omega) = c.susceptibility().drift_frequency(t) else { continue };
                let lhs = c.sigma_rate(t).unwrap() - 2.0 * omega * c.sigma(t).unwrap();
                let d = c.diffusion(t).unwrap();
                let scale = d.abs() + (2.0 * omega * c.sigma(t).unwrap()).abs();
                assert!((lhs - d).abs() <= 1e-8 * scale.max(1e-300), "{g} {t}");
            }
        }
    }

    #[test]
    fn sigma_rate_matches_finite_difference() {
        for g in [1.0, 4.0] {
            let c = cls(g, 1.0);
            let e = crate::numerics::fd_check(|x| c.sigma(x).unwrap(), |x| c.sigma_rate(x).unwrap(), 1.3, 1e-3);
            assert!(e < 1e-8);
        }
    }

    #[test]
    fn seam_continuity_at_critical_damping() {
        let crit = cls(2.0, 1.0);
        for g in [2.0 - 1e-7, 2.0 + 1e-7] {
            let c = cls(g, 1.0);
            for t in [0.1, 1.0, 5.0] {
                let (a, b) = (c.diffusion(t).unwrap(), crit.diffusion(t).unwrap());
                assert!((a - b).abs() < 1e-6 * b);
                let (a, b) = (c.sigma(t).unwrap(), crit.sigma(t).unwrap());
                assert!((a - b).abs() < 1e-6 * b);
            }
        }
    }

    #[test]
    fn overdamped_sigma_is_bounded_and_monotone() {
        for g in [2.0, 4.0, 200.0] {
            let c = cls(g, 1.0);
            let mut prev = 0.0;
            for i in 1..2000 {
                let s = c.sigma(0.05 * i as f64).unwrap();
                assert!(s >= prev - 1e-15 && s <= 1.0 + 1e-15, "{g} {i} {s} {prev}");
                prev = s;
            }
        }
    }

    #[test]
    fn periodic_sigma_oscillates() {
        let c = cls(0.5, 2.0);
        let s: Vec<f64> = (0..=1000).map(|i| c.sigma(0.01 * i as f64).unwrap()).collect();
        assert!(s.windows(2).any(|w| w[1] < w[0]));
    }
}

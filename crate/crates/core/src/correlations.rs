//! Equilibrium correlations of the damped oscillator in an Ohmic bath.
//!
//! The symmetrized position correlation is written in the basis of the
//! susceptibilities,
//!
//! ```text
//! S(t) = a χ_q(t) + b χ_v(t) − Γ(t)
//! A(t) = −(πT/ν) χ_v(t)
//! Γ(t) = 2γT Σ_{n≥1} ν_n e^{−ν_n t} / ((1 + ν_n²)² − γ²ν_n²)
//! ```
//!
//! where `a` and `b` collect the `cot(πλ/ν)` pole terms. Both are entire in
//! `ω²`, so no complex arithmetic is needed in any regime, and the Laurent
//! cancellation at large `ν` is done analytically. `⟨q(t)q₀⟩ = S + iA`,
//! `⟨v(t)q₀⟩ = ∂_t⟨q(t)q₀⟩` and `⟨v(t)v₀⟩ = −∂²_t⟨q(t)q₀⟩`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{QbmError, Result};
use crate::numerics::{hurwitz_zeta, sinhc_sqrt, sum_with_tail, sum_with_tail_scaled, SeriesSum};
use crate::params::ModelParams;
use crate::susceptibility::Susceptibility;

/// A correlation split into its symmetrized (real) and commutator
/// (imaginary) parts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplexSample {
    pub re: f64,
    pub im: f64,
}

impl ComplexSample {
    pub const ZERO: ComplexSample = ComplexSample { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        ComplexSample { re, im }
    }

    /// `re + im`, the combination the sum rule for widths uses.
    pub fn total(&self) -> f64 {
        self.re + self.im
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl Add for ComplexSample {
    type Output = ComplexSample;
    fn add(self, o: ComplexSample) -> ComplexSample {
        ComplexSample::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for ComplexSample {
    type Output = ComplexSample;
    fn sub(self, o: ComplexSample) -> ComplexSample {
        ComplexSample::new(self.re - o.re, self.im - o.im)
    }
}

impl Neg for ComplexSample {
    type Output = ComplexSample;
    fn neg(self) -> ComplexSample {
        ComplexSample::new(-self.re, -self.im)
    }
}

impl Mul<f64> for ComplexSample {
    type Output = ComplexSample;
    fn mul(self, k: f64) -> ComplexSample {
        ComplexSample::new(self.re * k, self.im * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispersions {
    pub q0_sq: f64,
    pub v0_sq: f64,
    pub v0q0: ComplexSample,
}

/// `⟨q(t)q₀⟩` with its first and second time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationBlocks {
    pub c: ComplexSample,
    pub dc: ComplexSample,
    pub d2c: ComplexSample,
}

/// Precomputed correlation model for one parameter set.
#[derive(Debug, Clone)]
pub struct Correlations {
    params: ModelParams,
    chi: Susceptibility,
    a: f64,
    b: f64,
}

impl Correlations {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let chi = Susceptibility::new(params.gamma)?;
        let (a, b) = pole_coefficients(params)?;
        Ok(Correlations {
            params: *params,
            chi,
            a,
            b,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn susceptibility(&self) -> &Susceptibility {
        &self.chi
    }

    /// Coefficients `(a, b)` of `χ_q` and `χ_v` in `S(t)`.
    pub fn coefficients(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// `πT/ν`, i.e. `ħ/2` in scaled units.
    pub fn half_hbar(&self) -> f64 {
        std::f64::consts::PI * self.params.temperature / self.params.nu
    }

    /// The Matsubara sum `Γ` or its `order`-th time derivative, with
    /// truncation details.
    pub fn gamma_series(&self, t: f64, order: u8) -> Result<SeriesSum> {
        if order > 2 {
            return Err(QbmError::domain(format!("derivative order must be 0, 1 or 2, got {order}")));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(QbmError::domain(format!("Γ needs t >= 0, got {t}")));
        }
        let p = &self.params;
        let (g, nu) = (p.gamma, p.nu);
        let pref = 2.0 * g * p.temperature;
        let k = order as i32;
        let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
        let term = |n: u64| {
            let x = n as f64 * nu;
            let den = (x * x - g * x + 1.0) * (x * x + g * x + 1.0);
            sign * pref * x.powi(k + 1) * (-x * t).exp() / den
        };

        if t == 0.0 {
            if order == 2 {
                return Err(QbmError::Divergence(
                    "second derivative of Γ does not converge at t = 0".into(),
                ));
            }
            // Subtract the 1/ν_n³ (order 0) or 1/ν_n² (order 1) behaviour and
            // add it back through the Hurwitz zeta tail.
            let c = (g * g - 2.0).abs();
            let tail = |n: u64| {
                let nn = n as f64;
                if nn * nu < 2.0 * g {
                    return f64::INFINITY;
                }
                if order == 0 {
                    pref * (2.0 * c * nu.powi(-5) / (4.0 * nn.powi(4)) + 2.0 * nu.powi(-7) / (6.0 * nn.powi(6)))
                } else {
                    pref * (2.0 * c * nu.powi(-4) / (3.0 * nn.powi(3)) + 2.0 * nu.powi(-6) / (5.0 * nn.powi(5)))
                }
            };
            let mut s = sum_with_tail_scaled(term, tail, &p.series, p.temperature);
            let a = s.n_used as f64 + 1.0;
            s.value += if order == 0 {
                pref * hurwitz_zeta(3, a) / nu.powi(3)
            } else {
                -pref * hurwitz_zeta(2, a) / nu.powi(2)
            };
            return Ok(s);
        }

        let tail = |n: u64| {
            let x = n as f64 * nu;
            if x < 2.0 * g {
                return f64::INFINITY;
            }
            let decaying = 2.0 * pref * x.powi(k - 3) * (-x * t).exp() / (nu * t);
            if order < 2 {
                let at_zero = 2.0 * pref * nu.powi(k - 3) * (n as f64).powi(k - 2) / (2 - k) as f64;
                decaying.min(at_zero)
            } else {
                decaying
            }
        };
        // Γ cancels against the pole terms, whose difference is of order T
        Ok(sum_with_tail_scaled(term, tail, &p.series, p.temperature))
    }

    pub fn gamma_sum(&self, t: f64, order: u8) -> Result<f64> {
        Ok(self.gamma_series(t, order)?.value)
    }

    /// `⟨q(t)q₀⟩ = S(t) + iA(t)` for `t ≥ 0`.
    pub fn position(&self, t: f64) -> Result<ComplexSample> {
        let v = self.chi.eval(t)?;
        let re = self.a * v.chi_q + self.b * v.chi_v - self.gamma_sum(t, 0)?;
        Ok(ComplexSample::new(re, -self.half_hbar() * v.chi_v))
    }

    // ∂_t⟨q(t)q₀⟩ for any t ≥ 0; converges at t = 0.
    fn position_derivative(&self, t: f64) -> Result<ComplexSample> {
        let v = self.chi.eval(t)?;
        let re = self.a * v.dchi_q + self.b * v.dchi_v - self.gamma_sum(t, 1)?;
        Ok(ComplexSample::new(re, -self.half_hbar() * v.dchi_v))
    }

    fn check_t_min(&self, t: f64) -> Result<()> {
        let t_min = self.params.quad.t_min;
        if !(t >= t_min) {
            return Err(QbmError::domain(format!("t = {t} is below t_min = {t_min}")));
        }
        Ok(())
    }

    /// `⟨v(t)q₀⟩` for `t ≥ t_min`.
    pub fn velocity_position(&self, t: f64) -> Result<ComplexSample> {
        self.check_t_min(t)?;
        self.position_derivative(t)
    }

    /// `⟨v(t)v₀⟩` for `t ≥ t_min`.
    pub fn velocity(&self, t: f64) -> Result<ComplexSample> {
        self.check_t_min(t)?;
        Ok(-self.smooth_second_derivative(t)? + ComplexSample::new(self.gamma_sum(t, 2)?, 0.0))
    }

    /// The part of `∂²_t⟨q(t)q₀⟩` that stays bounded as `t → 0`, i.e.
    /// everything except `−Γ''(t)`.
    pub fn smooth_second_derivative(&self, t: f64) -> Result<ComplexSample> {
        let d2 = self.chi.second_derivatives(t)?;
        Ok(ComplexSample::new(
            self.a * d2.d2chi_q + self.b * d2.d2chi_v,
            -self.half_hbar() * d2.d2chi_v,
        ))
    }

    /// `⟨q(t)q₀⟩` and its first two derivatives at `t > 0`.
    pub fn blocks(&self, t: f64) -> Result<CorrelationBlocks> {
        if !(t > 0.0) {
            return Err(QbmError::domain(format!("correlation blocks need t > 0, got {t}")));
        }
        let smooth = self.smooth_second_derivative(t)?;
        Ok(CorrelationBlocks {
            c: self.position(t)?,
            dc: self.position_derivative(t)?,
            d2c: smooth - ComplexSample::new(self.gamma_sum(t, 2)?, 0.0),
        })
    }

    /// `⟨q₀²⟩`, `⟨v₀²⟩` (Drude-regularized) and `⟨v₀q₀⟩`.
    ///
    /// Both sums include the zero-frequency term `T`. `⟨v₀q₀⟩` is the exact
    /// `t = 0` value of `∂_t⟨q(t)q₀⟩`, whose Matsubara sum converges.
    pub fn dispersions(&self) -> Result<Dispersions> {
        let p = &self.params;
        let (g, nu, temp) = (p.gamma, p.nu, p.temperature);

        // ⟨q₀²⟩: 1/(x² + γx + 1) = 1/x² − γ/x³ + ((γ² − 1)x + γ)/(x³(x² + γx + 1))
        let c1 = (g * g - 1.0).abs();
        let q = sum_with_tail(
            |n| {
                let x = n as f64 * nu;
                1.0 / (x * x + g * x + 1.0)
            },
            |n| {
                let nn = n as f64;
                c1 * nu.powi(-4) / (3.0 * nn.powi(3)) + g * nu.powi(-5) / (4.0 * nn.powi(4))
            },
            &p.series,
        );
        let a = q.n_used as f64 + 1.0;
        let q_sum = q.value + hurwitz_zeta(2, a) / (nu * nu) - g * hurwitz_zeta(3, a) / nu.powi(3);

        // ⟨v₀²⟩: f = (Ax + ω_D)/(x³ + ω_D x² + Ax + ω_D), A = γω_D + 1,
        // f = A/x² − γω_D²/x³ + R(x)/(x³ · den)
        let wd = p.omega_d;
        let big_a = g * wd + 1.0;
        let k2 = (g * wd.powi(3) - big_a * big_a).abs();
        let k1 = (big_a * wd * (g * wd - 1.0)).abs();
        let k0 = g * wd.powi(3);
        let v = sum_with_tail(
            |n| {
                let x = n as f64 * nu;
                (big_a * x + wd) / (((x + wd) * x + big_a) * x + wd)
            },
            |n| {
                let nn = n as f64;
                k2 * nu.powi(-4) / (3.0 * nn.powi(3))
                    + k1 * nu.powi(-5) / (4.0 * nn.powi(4))
                    + k0 * nu.powi(-6) / (5.0 * nn.powi(5))
            },
            &p.series,
        );
        let a = v.n_used as f64 + 1.0;
        let v_sum = v.value + big_a * hurwitz_zeta(2, a) / (nu * nu) - g * wd * wd * hurwitz_zeta(3, a) / nu.powi(3);

        Ok(Dispersions {
            q0_sq: temp + 2.0 * temp * q_sum,
            v0_sq: temp + 2.0 * temp * v_sum,
            v0q0: self.position_derivative(0.0)?,
        })
    }

    /// `⟨ξ(t)q₀⟩ = −2γT Σ ν_n e^{−ν_n t}/(ν_n² + γν_n + 1)` for `t > 0`.
    pub fn xi_q0(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(QbmError::domain(format!("⟨ξ(t)q₀⟩ needs t > 0, got {t}")));
        }
        let p = &self.params;
        let (g, nu) = (p.gamma, p.nu);
        let pref = 2.0 * g * p.temperature;
        let s = sum_with_tail(
            |n| {
                let x = n as f64 * nu;
                x * (-x * t).exp() / (x * x + g * x + 1.0)
            },
            |n| {
                let x = n as f64 * nu;
                (-x * t).exp() / (x * nu * t)
            },
            &p.series,
        );
        Ok(-pref * s.value)
    }
}

// Coefficients of χ_q and χ_v in S(t). With ψ = π/ν, u = ψ²γ², v = ψ²ω² and
// P = sin(ψλ₁) sin(ψλ₂):
//   a = ψ²T · sinc(v)/P,   b = 2ψ⁴Tγ · sinc[u, v]/P
// where sinc(y) = sin√y/√y and sinc[u, v] is its divided difference.
fn pole_coefficients(p: &ModelParams) -> Result<(f64, f64)> {
    let g = p.gamma;
    let psi = std::f64::consts::PI / p.nu;
    let w2 = p.omega_sq();
    let u = psi * psi * g * g;
    let v = psi * psi * w2;
    let sinc = |y: f64| sinhc_sqrt(-y);
    let prod = if w2 < 0.0 {
        let y = psi * (-w2).sqrt();
        if y > 2.0 {
            // divide through by sinh²(y/2), which overflows for small ν
            let sh = (0.5 * y).sinh();
            let r = ((0.5 * psi * g).sin() / sh).powi(2);
            let sinc_v_over_p = 2.0 / (y * (0.5 * y).tanh() * (1.0 + r));
            let sinc_u_over_p = sinc(u) / (sh * sh * (1.0 + r));
            let a = psi * psi * p.temperature * sinc_v_over_p;
            let b = 0.5 * psi * psi * p.temperature * g * (sinc_u_over_p - sinc_v_over_p);
            return Ok((a, b));
        }
        (0.5 * psi * g).sin().powi(2) + (0.5 * y).sinh().powi(2)
    } else {
        let l1 = 0.5 * (g + w2.sqrt());
        let l2 = 1.0 / l1;
        for lambda in [l1, l2] {
            let n = (lambda / p.nu).round();
            if n >= 1.0 && (n * p.nu - lambda).abs() <= 1e-9 * lambda {
                return Err(QbmError::Resonance {
                    nu_n: n * p.nu,
                    lambda,
                });
            }
        }
        (psi * l1).sin() * (psi * l2).sin()
    };
    if prod == 0.0 || !prod.is_finite() {
        return Err(QbmError::Resonance {
            nu_n: p.nu,
            lambda: g,
        });
    }
    let a = psi * psi * p.temperature * sinc(v) / prod;
    let dd = sinc_divided_difference(u, v, 4.0 * psi * psi);
    let b = 2.0 * psi.powi(4) * p.temperature * g * dd / prod;
    Ok((a, b))
}

// (sinc(u) − sinc(v))/(u − v) with `diff = u − v` supplied exactly.
fn sinc_divided_difference(u: f64, v: f64, diff: f64) -> f64 {
    if u.abs().max(v.abs()) <= 25.0 {
        // sinc(y) = Σ (−y)^k/(2k+1)!; the divided difference of y^k is the
        // complete homogeneous polynomial h_{k−1}(u, v).
        let (e1, e2) = (u + v, u * v);
        let (mut h_prev, mut h) = (0.0, 1.0);
        let mut coeff = 1.0;
        let mut sum = 0.0;
        for k in 1..80 {
            let kf = k as f64;
            coeff *= -1.0 / ((2.0 * kf) * (2.0 * kf + 1.0));
            let term = coeff * h;
            sum += term;
            if k > 3 && term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            let next = e1 * h - e2 * h_prev;
            h_prev = h;
            h = next;
        }
        sum
    } else {
        (sinhc_sqrt(-u) - sinhc_sqrt(-v)) / diff
    }
}

pub fn gamma_sum(t: f64, params: &ModelParams, order: u8) -> Result<f64> {
    Correlations::new(params)?.gamma_sum(t, order)
}

pub fn position_correlation(t: f64, params: &ModelParams) -> Result<ComplexSample> {
    Correlations::new(params)?.position(t)
}

pub fn velocity_position_correlation(t: f64, params: &ModelParams) -> Result<ComplexSample> {
    Correlations::new(params)?.velocity_position(t)
}

pub fn velocity_correlation(t: f64, params: &ModelParams) -> Result<ComplexSample> {
    Correlations::new(params)?.velocity(t)
}

pub fn dispersions(params: &ModelParams) -> Result<Dispersions> {
    Correlations::new(params)?.dispersions()
}

pub fn xi_q0_correlation(t: f64, params: &ModelParams) -> Result<f64> {
    Correlations::new(params)?.xi_q0(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{cot_small_c, fd_check};
    use crate::params::SeriesControl;
    use num_complex::Complex64;

    fn fig1(gamma: f64) -> ModelParams {
        ModelParams::new(gamma, 0.053, 1e7).unwrap()
    }

    // S(t) from the pole form with complex λ and cot, Γ by a plain sum.
    fn direct_s(t: f64, p: &ModelParams, n_terms: u64) -> f64 {
        let g = p.gamma;
        let w = Complex64::new(g * g - 4.0, 0.0).sqrt();
        let l1 = (g + w) / 2.0;
        let l2 = (g - w) / 2.0;
        let psi = std::f64::consts::PI / p.nu;
        let bracket = cot_small_c(l2 * psi) * (-l2 * t).exp() - cot_small_c(l1 * psi) * (-l1 * t).exp();
        let pole = (psi * p.temperature / w * bracket).re;
        let big_gamma: f64 = (1..=n_terms)
            .map(|n| {
                let x = n as f64 * p.nu;
                2.0 * g * p.temperature * x * (-x * t).exp() / ((1.0 + x * x).powi(2) - (g * x).powi(2))
            })
            .sum();
        pole - big_gamma
    }

    #[test]
    fn s_matches_direct_complex_cot_form() {
        // the pole form is 0/0 at γ = 2 itself
        for g in [0.7, 1.0, 2.2, 2.5, 4.0] {
            for nu in [1.3, 7.0, 40.0] {
                let p = ModelParams::new(g, 0.3, nu).unwrap();
                let c = Correlations::new(&p).unwrap();
                for t in [0.2, 0.7, 3.0] {
                    let got = c.position(t).unwrap().re;
                    let want = direct_s(t, &p, 200_000);
                    assert!((got - want).abs() < 1e-10 * want.abs().max(1e-3), "g {g} nu {nu} t {t}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn s_matches_direct_form_at_large_nu() {
        for g in [1.0, 4.0] {
            let p = fig1(g);
            let c = Correlations::new(&p).unwrap();
            for t in [0.5, 2.0] {
                let got = c.position(t).unwrap().re;
                let want = direct_s(t, &p, 10);
                assert!((got - want).abs() < 1e-7 * want.abs(), "{got} vs {want}");
            }
        }
    }

    #[test]
    fn spectral_integral_oracle() {
        // (ħ/π)∫₀^∞ χ''(x) coth(ħx/2T) cos(xt) dx with ħ = 2πT/ν, evaluated
        // with 30-digit oscillatory quadrature; T = 0.3, ν = 1.3, t = 0.7
        let cases = [(1.0, 0.418_326_859_271_481_7), (2.5, 0.341_749_248_661_898_7), (4.0, 0.317_060_156_018_463)];
        for (g, want) in cases {
            let p = ModelParams::new(g, 0.3, 1.3).unwrap();
            let got = position_correlation(0.7, &p).unwrap().re;
            assert!((got - want).abs() < 1e-10, "gamma {g}: {got} vs {want}");
        }
    }

    #[test]
    fn equilibrium_identity_s0_equals_q0_squared() {
        for g in [0.5, 1.0, 2.0, 4.0, 30.0] {
            for nu in [0.07, 1.3, 25.0, 1e7] {
                let p = ModelParams::new(g, 0.053, nu).unwrap();
                let c = Correlations::new(&p).unwrap();
                let s0 = c.position(0.0).unwrap().re;
                let q2 = c.dispersions().unwrap().q0_sq;
                assert!((s0 - q2).abs() <= 10.0 * p.series.rel_tol * q2, "g {g} nu {nu}: {s0} vs {q2}");
            }
        }
    }

    fn tight(p: ModelParams) -> ModelParams {
        p.with_series(SeriesControl { n_max: 1_000_000, rel_tol: 1e-14 }).unwrap()
    }

    #[test]
    fn dispersions_against_high_precision_sums() {
        // 30-digit nsum of the defining series
        let p = tight(ModelParams::new(1.0, 0.3, 1.3).unwrap().with_omega_d(13.0).unwrap());
        let d = dispersions(&p).unwrap();
        assert!((d.q0_sq - 0.628_173_614_581_870_6).abs() < 1e-14, "{}", d.q0_sq);
        assert!((d.v0_sq - 1.635_010_315_618_518_7).abs() < 1e-13, "{}", d.v0_sq);
    }

    #[test]
    fn v0_squared_remainder_algebra() {
        let (g, wd): (f64, f64) = (1.7, 30.0);
        let big_a = g * wd + 1.0;
        for x in [0.3f64, 4.0, 100.0] {
            let den = x * x * x + wd * x * x + big_a * x + wd;
            let f = (big_a * x + wd) / den;
            let r = ((g * wd.powi(3) - big_a * big_a) * x * x + big_a * wd * (g * wd - 1.0) * x + g * wd.powi(3))
                / (x.powi(3) * den);
            let asym = big_a / (x * x) - g * wd * wd / x.powi(3);
            assert!((f - asym - r).abs() < 1e-12 * asym.abs().max(f));
        }
    }

    #[test]
    fn v0_squared_log_divergence() {
        let base = fig1(1.0);
        let v = |wd: f64| dispersions(&base.with_omega_d(wd).unwrap()).unwrap().v0_sq;
        let (v1, v2, v3) = (v(1e8), v(1e9), v(1e10));
        // each decade adds 2T(γ/ν)ln 10
        let step = 2.0 * 0.053 * (1.0 / 1e7) * 10f64.ln();
        assert!(((v2 - v1) / step - 1.0).abs() < 0.05);
        assert!(((v3 - v2) / step - 1.0).abs() < 0.01);
    }

    #[test]
    fn dispersion_properties() {
        // at ν = 10⁷ the γ dependence is below double precision
        let q = |g: f64| dispersions(&ModelParams::new(g, 0.053, 3.0).unwrap()).unwrap().q0_sq;
        assert!(q(1.0) > q(2.0) && q(2.0) > q(4.0) && q(4.0) > 0.0);
        let d = dispersions(&fig1(1.0)).unwrap();
        assert!(d.v0_sq > 0.0 && d.v0_sq.is_finite());
        // symmetrized ⟨v₀q₀⟩ vanishes in equilibrium; the commutator is −ħ/2
        assert!(d.v0q0.re.abs() < 1e-12);
        assert!((d.v0q0.im + std::f64::consts::PI * 0.053 / 1e7).abs() < 1e-22);
        let small = dispersions(&ModelParams::new(1.0, 1e-6, 1e7).unwrap()).unwrap();
        assert!((small.q0_sq / d.q0_sq - 1e-6 / 0.053).abs() < 1e-12);
    }

    #[test]
    fn gamma_sum_basic_properties() {
        let p = ModelParams::new(1.0, 0.053, 1.0).unwrap();
        let c = Correlations::new(&p).unwrap();
        let g: Vec<f64> = [0.1, 1.0, 5.0].iter().map(|&t| c.gamma_sum(t, 0).unwrap()).collect();
        assert!(g[0] > g[1] && g[1] > g[2] && g[2] > 0.0);
        for k in 0..3 {
            assert!(c.gamma_sum(1e4, k).unwrap().abs() < 1e-300);
        }
        assert!(matches!(c.gamma_sum(0.0, 2), Err(QbmError::Divergence(_))));
        assert!(c.gamma_sum(0.0, 1).unwrap().is_finite());
        assert!(c.gamma_sum(-1.0, 0).is_err());
        assert!(c.gamma_sum(1.0, 3).is_err());
    }

    #[test]
    fn gamma_sum_at_zero_against_high_precision_sums() {
        let p = tight(ModelParams::new(1.0, 0.053, 0.9).unwrap());
        let c = Correlations::new(&p).unwrap();
        assert!((c.gamma_sum(0.0, 0).unwrap() - 0.061_829_405_646_273_29).abs() < 1e-15);
        assert!((c.gamma_sum(0.0, 1).unwrap() + 0.106_636_581_978_843_01).abs() < 1e-15);
    }

    #[test]
    fn gamma_derivatives_match_finite_differences() {
        let p = tight(ModelParams::new(1.0, 0.053, 2.0).unwrap());
        let c = Correlations::new(&p).unwrap();
        for t in [0.1, 0.5, 2.0] {
            let e = fd_check(|x| c.gamma_sum(x, 0).unwrap(), |x| c.gamma_sum(x, 1).unwrap(), t, 1e-3);
            assert!(e < 1e-6, "t {t}: {e}");
            let e = fd_check(|x| c.gamma_sum(x, 1).unwrap(), |x| c.gamma_sum(x, 2).unwrap(), t, 1e-3);
            assert!(e < 1e-6, "t {t}: {e}");
        }
    }

    #[test]
    fn correlation_derivatives_match_finite_differences() {
        for g in [1.0, 2.0, 4.0] {
            let p = tight(ModelParams::new(g, 0.053, 3.0).unwrap());
            let c = Correlations::new(&p).unwrap();
            let t = 1.0;
            let e = fd_check(|x| c.position(x).unwrap().re, |x| c.velocity_position(x).unwrap().re, t, 1e-3);
            assert!(e < 1e-6);
            // A'(1) = 0 exactly at γ = 2, so the commutator part is checked at 1.3
            let e = fd_check(|x| c.position(x).unwrap().im, |x| c.velocity_position(x).unwrap().im, 1.3, 1e-3);
            assert!(e < 1e-6);
            let e = fd_check(
                |x| c.velocity_position(x).unwrap().re,
                |x| -c.velocity(x).unwrap().re,
                t,
                1e-3,
            );
            assert!(e < 1e-5);
        }
    }

    #[test]
    fn second_difference_of_s_at_large_nu() {
        let p = fig1(1.0);
        let c = Correlations::new(&p).unwrap();
        let h = 1e-3;
        let s = |x: f64| c.position(x).unwrap().re;
        let d2 = (s(1.0 + h) - 2.0 * s(1.0) + s(1.0 - h)) / (h * h);
        let v = c.velocity(1.0).unwrap().re;
        assert!((d2 + v).abs() < 1e-5 * v.abs());
    }

    #[test]
    fn commutator_part() {
        let p = fig1(4.0);
        let c = Correlations::new(&p).unwrap();
        assert_eq!(c.position(0.0).unwrap().im, 0.0);
        let small = c.velocity_position(1e-3).unwrap().im;
        assert!((small / (-std::f64::consts::PI * 0.053 / 1e7) - 1.0).abs() < 1e-2);
        for i in 1..100 {
            assert!(c.position(0.1 * i as f64).unwrap().im <= 0.0);
        }
    }

    #[test]
    fn overdamped_s_decays_without_sign_change() {
        let c = Correlations::new(&fig1(4.0)).unwrap();
        let mut prev = c.position(0.0).unwrap().re;
        for i in 1..=100 {
            let s = c.position(0.1 * i as f64).unwrap().re;
            assert!(s > 0.0 && s < prev);
            prev = s;
        }
        let s_early = c.velocity_position(2e-3).unwrap().re;
        assert!(s_early < 0.0);
    }

    #[test]
    fn velocity_correlation_grows_as_t_min_shrinks() {
        let c = Correlations::new(&ModelParams::new(1.0, 0.053, 1.0).unwrap()).unwrap();
        let v: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&t| -c.smooth_second_derivative(t).unwrap().re + c.gamma_sum(t, 2).unwrap()).collect();
        assert!(v[0] < v[1] && v[1] < v[2]);
        assert!(c.velocity(1e-4).is_err());
        assert!(velocity_position_correlation(1e-4, &ModelParams::new(1.0, 0.053, 1.0).unwrap()).is_err());
    }

    #[test]
    fn noise_position_identity() {
        // ⟨ξ(t)q₀⟩ = S̈ + γṠ + S
        for g in [1.0, 4.0] {
            let p = tight(ModelParams::new(g, 0.053, 2.0).unwrap());
            let c = Correlations::new(&p).unwrap();
            for t in [0.05, 0.4, 2.0] {
                let b = c.blocks(t).unwrap();
                let lhs = c.xi_q0(t).unwrap();
                let rhs = b.d2c.re + g * b.dc.re + b.c.re;
                assert!((lhs - rhs).abs() < 1e-10 * lhs.abs(), "{lhs} vs {rhs}");
                assert!(lhs < 0.0);
                // the commutator part solves the homogeneous equation
                assert!((b.d2c.im + g * b.dc.im + b.c.im).abs() < 1e-12 * b.c.im.abs().max(1e-20));
            }
            assert!(c.xi_q0(0.0).is_err());
            assert!(c.xi_q0(50.0).unwrap().abs() < 1e-30);
        }
    }

    #[test]
    fn periodic_coefficients_are_real_and_match_complex_form() {
        let p = ModelParams::new(1.0, 0.3, 1.3).unwrap();
        let (a, b) = Correlations::new(&p).unwrap().coefficients();
        let w = Complex64::new(-3.0, 0.0).sqrt();
        let l1 = (1.0 + w) / 2.0;
        let l2 = (1.0 - w) / 2.0;
        let psi = std::f64::consts::PI / 1.3;
        let c1 = cot_small_c(l1 * psi);
        let c2 = cot_small_c(l2 * psi);
        let a_c = psi * 0.3 * (c2 - c1) / w;
        let b_c = psi * 0.3 * (l1 * c1 - l2 * c2) / w;
        assert!(a_c.im.abs() < 1e-12 * a_c.re.abs() && b_c.im.abs() < 1e-12 * b_c.re.abs());
        assert!((a - a_c.re).abs() < 1e-13 * a.abs());
        assert!((b - b_c.re).abs() < 1e-13 * b.abs());
    }

    #[test]
    fn resonance_is_reported() {
        // λ₁ = 2 + √3 coincides with ν
        let g = 4.0;
        let nu = 2.0 + 3f64.sqrt();
        let p = ModelParams::new(g, 0.1, nu).unwrap();
        assert!(matches!(Correlations::new(&p), Err(QbmError::Resonance { .. })));
    }

    #[test]
    fn truncation_flag_surfaces() {
        let p = ModelParams::new(1.0, 0.053, 1e-3)
            .unwrap()
            .with_series(SeriesControl { n_max: 10, rel_tol: 1e-10 })
            .unwrap();
        let c = Correlations::new(&p).unwrap();
        assert!(c.gamma_series(0.5, 0).unwrap().truncated);
    }
}

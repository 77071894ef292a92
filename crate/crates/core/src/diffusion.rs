//! The Fokker–Planck coefficients of the reduced Wigner function.
//!
//! ```text
//! D₁(t)  = 2[∫ ⟨φ_v(t)φ_v(t′)⟩ dt′ + χ_q(t)⟨φ_v(t)q₀⟩]
//! σ₁(t)  = ∫ D₁(t′) dt′
//! σ_Q(t) = σ₁(t) + Tχ_v(t)²
//! D_Q(t) = σ̇_Q(t) − 2σ_Q(t)Ω(t),   σ̇_Q = D₁ + 2Tχ_vχ̇_v
//! ```
//!
//! Every quantity is carried as a real (symmetrized) and an imaginary
//! (commutator) component; `total = re + im`.
//!
//! The integrals start at the kernel's lower limit: `t_min` for the quantum
//! noise, `0` for white noise. In the quantum kernel the velocity correlation
//! `V(t − t′)` contains `Γ''(t − t′)`, which is log-singular at `t′ = t`; that
//! piece is integrated in closed form, `Γ'(t − t_min) − Γ'(0)`, and only the
//! bounded remainder goes through quadrature.

use std::cell::Cell;
use std::collections::HashMap;
use std::sync::RwLock;

use bitflags::bitflags;
use rayon::prelude::*;

use crate::classical::{Classical, ClassicalParams};
use crate::correlations::ComplexSample;
use crate::error::{QbmError, Result};
use crate::noise_corr::{LocalTerms, NoiseCorrelations};
use crate::numerics::adaptive_quad_n;
use crate::params::{ModelParams, QuadControl};
use crate::susceptibility::Susceptibility;

/// Width of the fixed panels the inner integral is split into. Shared panel
/// edges make the quadrature abscissae coincide between different `t`.
const PANEL: f64 = 0.5;
/// Memo entries beyond this are computed but not stored.
const MEMO_CAP: usize = 1 << 21;
/// A point closer than this many guard widths to a pole is flagged.
const NEAR_POLE_FACTOR: f64 = 10.0;
/// Relative change of `D_Q` under `t_min → t_min/2` above which the first point
/// is flagged.
const T_MIN_TOLERANCE: f64 = 0.2;

/// The noise model that enters `D₁`.
pub trait NoiseKernel: Sync + Sized {
    fn lower_limit(&self) -> f64;
    fn temperature(&self) -> f64;
    fn susceptibility(&self) -> &Susceptibility;
    /// The part of `⟨φ_v(t)φ_v(t′)⟩` handled by quadrature, for
    /// `lower ≤ t′ ≤ t`.
    fn integrand(&self, t: f64, t_prime: f64) -> Result<ComplexSample>;
    /// The rest of `∫ ⟨φ_v(t)φ_v(t′)⟩ dt′`, in closed form.
    fn closed_form_part(&self, t: f64) -> Result<ComplexSample>;
    fn phi_q0(&self, t: f64) -> Result<ComplexSample>;
    /// Some Matsubara sum hit `n_max` at the lower limit.
    fn truncated(&self) -> bool {
        false
    }
    /// The same kernel with the lower limit halved, when it has one.
    fn with_half_lower_limit(&self) -> Option<Result<Self>> {
        None
    }
}

/// Quantum noise from the bypass identities, with local terms memoized on
/// time quantized to `10⁻¹²`.
#[derive(Debug)]
pub struct QuantumKernel {
    noise: NoiseCorrelations,
    gamma1_at_zero: f64,
    truncated: bool,
    memo: RwLock<HashMap<i64, LocalTerms>>,
}

impl QuantumKernel {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let noise = NoiseCorrelations::new(params)?;
        let corr = noise.correlations();
        let lo = noise.t_min();
        let gamma1_at_zero = corr.gamma_sum(0.0, 1)?;
        let mut truncated = false;
        for order in 0..=2 {
            truncated |= corr.gamma_series(lo, order)?.truncated;
        }
        Ok(QuantumKernel {
            noise,
            gamma1_at_zero,
            truncated,
            memo: RwLock::new(HashMap::new()),
        })
    }

    pub fn noise(&self) -> &NoiseCorrelations {
        &self.noise
    }

    pub fn params(&self) -> &ModelParams {
        self.noise.correlations().params()
    }

    fn local(&self, t: f64) -> Result<LocalTerms> {
        let key = (t * 1e12).round() as i64;
        if let Some(v) = self.memo.read().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(*v);
        }
        let v = self.noise.local(t)?;
        let mut memo = self.memo.write().unwrap_or_else(|e| e.into_inner());
        if memo.len() < MEMO_CAP {
            memo.insert(key, v);
        }
        Ok(v)
    }
}

impl NoiseKernel for QuantumKernel {
    fn lower_limit(&self) -> f64 {
        self.noise.t_min()
    }

    fn temperature(&self) -> f64 {
        self.params().temperature
    }

    fn susceptibility(&self) -> &Susceptibility {
        self.noise.correlations().susceptibility()
    }

    fn integrand(&self, t: f64, t_prime: f64) -> Result<ComplexSample> {
        let v_smooth = -self.noise.correlations().smooth_second_derivative(t - t_prime)?;
        Ok(self.noise.combine(&self.local(t)?, &self.local(t_prime)?, v_smooth))
    }

    fn closed_form_part(&self, t: f64) -> Result<ComplexSample> {
        let g1 = self.noise.correlations().gamma_sum(t - self.lower_limit(), 1)?;
        Ok(ComplexSample::new(g1 - self.gamma1_at_zero, 0.0))
    }

    fn phi_q0(&self, t: f64) -> Result<ComplexSample> {
        Ok(self.noise.phi_q0_from(&self.local(t)?))
    }

    fn truncated(&self) -> bool {
        self.truncated
    }

    fn with_half_lower_limit(&self) -> Option<Result<Self>> {
        let p = self.params();
        Some(p.with_t_min(0.5 * p.quad.t_min).and_then(|p| QuantumKernel::new(&p)))
    }
}

/// White noise `2γTδ(t − s)`.
#[derive(Debug, Clone, Copy)]
pub struct ClassicalKernel {
    classical: Classical,
}

impl ClassicalKernel {
    pub fn new(params: &ClassicalParams) -> Result<Self> {
        Ok(ClassicalKernel {
            classical: Classical::new(params)?,
        })
    }

    pub fn classical(&self) -> &Classical {
        &self.classical
    }
}

impl NoiseKernel for ClassicalKernel {
    fn lower_limit(&self) -> f64 {
        0.0
    }

    fn temperature(&self) -> f64 {
        self.classical.params().temperature
    }

    fn susceptibility(&self) -> &Susceptibility {
        self.classical.susceptibility()
    }

    fn integrand(&self, t: f64, t_prime: f64) -> Result<ComplexSample> {
        Ok(ComplexSample::new(self.classical.phi_phi(t, t_prime)?, 0.0))
    }

    fn closed_form_part(&self, _t: f64) -> Result<ComplexSample> {
        Ok(ComplexSample::ZERO)
    }

    fn phi_q0(&self, _t: f64) -> Result<ComplexSample> {
        Ok(ComplexSample::ZERO)
    }
}

bitflags! {
    /// Per-point annotations of a [`CoefficientSeries`].
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
    pub struct PointFlags: u8 {
        /// A Matsubara sum was cut at `n_max`.
        const TRUNCATED = 1;
        /// Within ten guard widths of a pole of `Ω`; values are reported.
        const NEAR_POLE = 1 << 1;
        /// Inside a pole window; `Ω` and `D_Q` are not reported.
        const IN_POLE_WINDOW = 1 << 2;
        /// `D_Q` moved by more than 20% when `t_min` was halved.
        const T_MIN_SENSITIVE = 1 << 3;
        /// Evaluation failed; values are NaN.
        const ERROR = 1 << 4;
    }
}

impl PointFlags {
    /// `|`-separated lower-case names, empty when no flag is set.
    pub fn label(&self) -> String {
        self.iter_names()
            .map(|(name, _)| name.to_ascii_lowercase())
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// Coefficients on a time grid.
#[derive(Debug, Clone)]
pub struct CoefficientSeries {
    pub times: Vec<f64>,
    pub omega_drift: Vec<f64>,
    pub sigma_q: Vec<ComplexSample>,
    pub d_q: Vec<ComplexSample>,
    pub d1: Vec<ComplexSample>,
    /// Zeros of `χ_q` up to the last grid time.
    pub poles: Vec<f64>,
    pub pole_windows: Vec<(f64, f64)>,
    pub flags: Vec<PointFlags>,
    /// Failed points with their errors.
    pub errors: Vec<(usize, QbmError)>,
    /// Relative change of `D_Q` at the first point when `t_min` is halved.
    pub t_min_sensitivity: Option<f64>,
}

impl CoefficientSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `D₁`, `σ₁`, `σ_Q` and `D_Q` for one noise kernel.
#[derive(Debug)]
pub struct Diffusion<K> {
    kernel: K,
    quad: QuadControl,
    check_t_min: bool,
}

impl Diffusion<QuantumKernel> {
    pub fn quantum(params: &ModelParams) -> Result<Self> {
        Ok(Diffusion {
            kernel: QuantumKernel::new(params)?,
            quad: params.quad,
            check_t_min: true,
        })
    }
}

impl Diffusion<ClassicalKernel> {
    /// White-noise coefficients through the same quadratures as the quantum
    /// ones; compare with [`Classical`] for the closed forms.
    pub fn classical(params: &ClassicalParams) -> Result<Self> {
        Ok(Diffusion {
            kernel: ClassicalKernel::new(params)?,
            quad: QuadControl::default(),
            check_t_min: false,
        })
    }
}

impl<K: NoiseKernel> Diffusion<K> {
    pub fn with_quad(mut self, quad: QuadControl) -> Result<Self> {
        quad.validate()?;
        self.quad = quad;
        Ok(self)
    }

    /// Whether [`coefficient_series`](Self::coefficient_series) repeats the
    /// first point with the lower limit halved.
    pub fn with_t_min_check(mut self, on: bool) -> Self {
        self.check_t_min = on;
        self
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    fn check(&self, t: f64) -> Result<()> {
        let lo = self.kernel.lower_limit();
        if !(t >= lo && t.is_finite()) {
            return Err(QbmError::domain(format!("t = {t} is below the lower limit {lo}")));
        }
        Ok(())
    }

    /// The quadrature part of the `D₁` integrand at `(t, t′)`.
    pub fn integrand(&self, t: f64, t_prime: f64) -> Result<ComplexSample> {
        self.check(t)?;
        if !(t_prime >= self.kernel.lower_limit() && t_prime <= t) {
            return Err(QbmError::domain(format!("t' = {t_prime} outside [lower, {t}]")));
        }
        self.kernel.integrand(t, t_prime)
    }

    /// Adaptive quadrature of [`integrand`](Self::integrand) over
    /// `[lower, t]`.
    pub fn inner_integral(&self, t: f64) -> Result<ComplexSample> {
        self.check(t)?;
        let lo = self.kernel.lower_limit();
        let mut acc = ComplexSample::ZERO;
        let mut a = lo;
        while a < t {
            let b = (a + PANEL).min(t);
            acc = acc + integrate(|x| self.kernel.integrand(t, x), a, b, &self.quad)?;
            a = b;
        }
        Ok(acc)
    }

    pub fn d1(&self, t: f64) -> Result<ComplexSample> {
        let chi_q = self.kernel.susceptibility().eval(t)?.chi_q;
        let inner = self.inner_integral(t)? + self.kernel.closed_form_part(t)?;
        Ok((inner + self.kernel.phi_q0(t)? * chi_q) * 2.0)
    }

    fn sigma1_between(&self, a: f64, b: f64) -> Result<ComplexSample> {
        let mut acc = ComplexSample::ZERO;
        let mut x = a;
        while x < b {
            let y = (x + PANEL).min(b);
            acc = acc + integrate(|s| self.d1(s), x, y, &self.quad)?;
            x = y;
        }
        Ok(acc)
    }

    pub fn sigma1(&self, t: f64) -> Result<ComplexSample> {
        self.check(t)?;
        self.sigma1_between(self.kernel.lower_limit(), t)
    }

    fn sigma_q_from(&self, t: f64, sigma1: ComplexSample) -> Result<ComplexSample> {
        let chi_v = self.kernel.susceptibility().eval(t)?.chi_v;
        Ok(sigma1 + ComplexSample::new(self.kernel.temperature() * chi_v * chi_v, 0.0))
    }

    pub fn sigma_q(&self, t: f64) -> Result<ComplexSample> {
        self.sigma_q_from(t, self.sigma1(t)?)
    }

    /// `σ̇_Q = D₁ + 2Tχ_vχ̇_v`.
    pub fn sigma_q_rate(&self, t: f64) -> Result<ComplexSample> {
        self.sigma_q_rate_from(t, self.d1(t)?)
    }

    fn sigma_q_rate_from(&self, t: f64, d1: ComplexSample) -> Result<ComplexSample> {
        let v = self.kernel.susceptibility().eval(t)?;
        Ok(d1 + ComplexSample::new(2.0 * self.kernel.temperature() * v.chi_v * v.dchi_v, 0.0))
    }

    fn d_q_from(&self, t: f64, sigma_q: ComplexSample, d1: ComplexSample) -> Result<(f64, ComplexSample)> {
        let omega = self.kernel.susceptibility().drift_frequency(t)?;
        Ok((omega, self.sigma_q_rate_from(t, d1)? - sigma_q * (2.0 * omega)))
    }

    /// `D_Q(t)` per component; fails inside a pole window.
    pub fn d_q(&self, t: f64) -> Result<ComplexSample> {
        let sigma = self.sigma_q(t)?;
        Ok(self.d_q_from(t, sigma, self.d1(t)?)?.1)
    }

    /// All coefficients on an ascending grid. Points are evaluated in
    /// parallel; `σ₁` is accumulated panel by panel in grid order. Failures at
    /// single points are flagged, not returned.
    pub fn coefficient_series(&self, grid: &[f64]) -> Result<CoefficientSeries> {
        let lo = self.kernel.lower_limit();
        if grid.is_empty() {
            return Err(QbmError::domain("empty time grid"));
        }
        if grid.iter().any(|t| !(t.is_finite() && *t >= lo)) || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(QbmError::domain(format!(
                "grid must be strictly ascending and start at or after {lo}"
            )));
        }
        let n = grid.len();
        let poles = self.kernel.susceptibility().find_chi_q_zeros(grid[n - 1])?;

        let pieces: Vec<Result<(ComplexSample, ComplexSample)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let a = if i == 0 { lo } else { grid[i - 1] };
                Ok((self.d1(grid[i])?, self.sigma1_between(a, grid[i])?))
            })
            .collect();

        let nan = ComplexSample::new(f64::NAN, f64::NAN);
        let mut out = CoefficientSeries {
            times: grid.to_vec(),
            omega_drift: vec![f64::NAN; n],
            sigma_q: vec![nan; n],
            d_q: vec![nan; n],
            d1: vec![nan; n],
            pole_windows: poles.windows(),
            poles: poles.times.clone(),
            flags: vec![PointFlags::empty(); n],
            errors: Vec::new(),
            t_min_sensitivity: None,
        };
        let mut sigma1 = ComplexSample::ZERO;
        for (i, piece) in pieces.into_iter().enumerate() {
            let t = grid[i];
            if self.kernel.truncated() {
                out.flags[i] |= PointFlags::TRUNCATED;
            }
            let (d1, incr) = match piece {
                Ok(v) => v,
                Err(e) => {
                    out.flags[i] |= PointFlags::ERROR;
                    out.errors.push((i, e));
                    sigma1 = nan;
                    continue;
                }
            };
            sigma1 = sigma1 + incr;
            out.d1[i] = d1;
            if poles.guarding(t).is_some() {
                out.flags[i] |= PointFlags::IN_POLE_WINDOW;
                continue;
            }
            if poles.distance(t) < NEAR_POLE_FACTOR * poles.guard_width {
                out.flags[i] |= PointFlags::NEAR_POLE;
            }
            let step = self
                .sigma_q_from(t, sigma1)
                .and_then(|s| Ok((s, self.d_q_from(t, s, d1)?)));
            match step {
                Ok((s, (omega, d))) => {
                    out.sigma_q[i] = s;
                    out.omega_drift[i] = omega;
                    out.d_q[i] = d;
                }
                Err(QbmError::Pole { .. }) => out.flags[i] |= PointFlags::IN_POLE_WINDOW,
                Err(e) => {
                    out.flags[i] |= PointFlags::ERROR;
                    out.errors.push((i, e));
                }
            }
        }

        if self.check_t_min && out.d_q[0].total().is_finite() {
            if let Some(kernel) = self.kernel.with_half_lower_limit() {
                let other = Diffusion {
                    kernel: kernel?,
                    quad: self.quad,
                    check_t_min: false,
                };
                if let Ok(d) = other.d_q(grid[0]) {
                    let base = out.d_q[0].total();
                    let rel = (d.total() - base).abs() / base.abs();
                    out.t_min_sensitivity = Some(rel);
                    if !(rel <= T_MIN_TOLERANCE) {
                        out.flags[0] |= PointFlags::T_MIN_SENSITIVE;
                    }
                }
            }
        }
        Ok(out)
    }
}

// Adaptive quadrature of both components; the first evaluation error wins
// over any quadrature diagnosis.
fn integrate<F>(f: F, a: f64, b: f64, quad: &QuadControl) -> Result<ComplexSample>
where
    F: Fn(f64) -> Result<ComplexSample>,
{
    let failure: Cell<Option<QbmError>> = Cell::new(None);
    let r = adaptive_quad_n(
        |x| match f(x) {
            Ok(v) => [v.re, v.im],
            Err(e) => {
                let prev = failure.take();
                failure.set(prev.or(Some(e)));
                [f64::NAN; 2]
            }
        },
        a,
        b,
        quad,
    );
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let [re, im] = r.require(a, b)?;
    Ok(ComplexSample::new(re, im))
}

pub fn d1(t: f64, params: &ModelParams) -> Result<ComplexSample> {
    Diffusion::quantum(params)?.d1(t)
}

pub fn sigma1(t: f64, params: &ModelParams) -> Result<ComplexSample> {
    Diffusion::quantum(params)?.sigma1(t)
}

pub fn sigma_q(t: f64, params: &ModelParams) -> Result<ComplexSample> {
    Diffusion::quantum(params)?.sigma_q(t)
}

pub fn d_q(t: f64, params: &ModelParams) -> Result<ComplexSample> {
    Diffusion::quantum(params)?.d_q(t)
}

pub fn coefficient_series(params: &ModelParams, grid: &[f64]) -> Result<CoefficientSeries> {
    Diffusion::quantum(params)?.coefficient_series(grid)
}

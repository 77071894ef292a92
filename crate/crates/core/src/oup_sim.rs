//! Monte Carlo ensemble of the Ornstein–Uhlenbeck process
//!
//! ```text
//! dq = Ω(t) q dt + √D(t) dW,   q(t₀) = 0
//! ```
//!
//! whose variance obeys `σ̇ = D + 2Ωσ`, and an RK4 integrator for that
//! moment equation. With `Ω = χ̇_q/χ_q < 0` the process relaxes.
//!
//! Paths use independent ChaCha8 streams indexed by path number under one
//! root seed, and partial statistics are merged in a fixed order, so results
//! are bitwise reproducible for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::classical::{Classical, ClassicalParams};
use crate::diffusion::CoefficientSeries;
use crate::error::{QbmError, Result};

/// Paths per block of the deterministic reduction.
const BLOCK: usize = 512;
/// Largest RK4 step used by [`variance_ode`].
const ODE_MAX_STEP: f64 = 1e-3;

/// Time-dependent drift frequency and diffusion of the process.
pub trait Coefficients: Sync {
    fn omega(&self, t: f64) -> Result<f64>;
    fn diffusion(&self, t: f64) -> Result<f64>;
    /// Intervals on which `Ω` is not defined.
    fn pole_windows(&self, t_max: f64) -> Result<Vec<(f64, f64)>>;
}

/// Constant `Ω` and `D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantCoefficients {
    pub omega: f64,
    pub diffusion: f64,
}

impl Coefficients for ConstantCoefficients {
    fn omega(&self, _t: f64) -> Result<f64> {
        Ok(self.omega)
    }

    fn diffusion(&self, _t: f64) -> Result<f64> {
        Ok(self.diffusion)
    }

    fn pole_windows(&self, _t_max: f64) -> Result<Vec<(f64, f64)>> {
        Ok(Vec::new())
    }
}

/// The white-noise closed forms; `D(0) = 0` by continuity.
#[derive(Debug, Clone, Copy)]
pub struct ClassicalCoefficients {
    classical: Classical,
}

impl ClassicalCoefficients {
    pub fn new(params: &ClassicalParams) -> Result<Self> {
        Ok(ClassicalCoefficients {
            classical: Classical::new(params)?,
        })
    }

    pub fn classical(&self) -> &Classical {
        &self.classical
    }
}

impl Coefficients for ClassicalCoefficients {
    fn omega(&self, t: f64) -> Result<f64> {
        self.classical.susceptibility().drift_frequency(t)
    }

    fn diffusion(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        self.classical.diffusion(t)
    }

    fn pole_windows(&self, t_max: f64) -> Result<Vec<(f64, f64)>> {
        Ok(self.classical.susceptibility().find_chi_q_zeros(t_max)?.windows())
    }
}

/// Coefficients sampled on a grid, linearly interpolated in between.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCoefficients {
    times: Vec<f64>,
    omega: Vec<f64>,
    diffusion: Vec<f64>,
    windows: Vec<(f64, f64)>,
}

impl SampledCoefficients {
    pub fn new(times: Vec<f64>, omega: Vec<f64>, diffusion: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || omega.len() != times.len() || diffusion.len() != times.len() {
            return Err(QbmError::domain("sampled coefficients need at least two points of equal length"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(QbmError::domain("sample times must be strictly ascending"));
        }
        Ok(SampledCoefficients {
            times,
            omega,
            diffusion,
            windows: Vec::new(),
        })
    }

    /// Totals of `Ω` and `D_Q` from a coefficient series, keeping its pole
    /// windows.
    pub fn from_series(series: &CoefficientSeries) -> Result<Self> {
        let d = series.d_q.iter().map(|v| v.total()).collect();
        let mut s = SampledCoefficients::new(series.times.clone(), series.omega_drift.clone(), d)?;
        s.windows = series.pole_windows.clone();
        Ok(s)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn interpolate(&self, values: &[f64], t: f64) -> Result<f64> {
        let (first, last) = (self.times[0], self.times[self.times.len() - 1]);
        if !(t >= first && t <= last) {
            return Err(QbmError::domain(format!("t = {t} outside the sampled range [{first}, {last}]")));
        }
        let i = self.times.partition_point(|&x| x <= t).clamp(1, self.times.len() - 1);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (v0, v1) = (values[i - 1], values[i]);
        if !(v0.is_finite() && v1.is_finite()) {
            let pole = self.windows.iter().find(|w| w.0 <= t1 && w.1 >= t0);
            return Err(match pole {
                Some(w) => QbmError::Pole { t, pole: 0.5 * (w.0 + w.1) },
                None => QbmError::domain(format!("no finite sample around t = {t}")),
            });
        }
        let x = (t - t0) / (t1 - t0);
        Ok(v0 + x * (v1 - v0))
    }
}

impl Coefficients for SampledCoefficients {
    fn omega(&self, t: f64) -> Result<f64> {
        self.interpolate(&self.omega, t)
    }

    fn diffusion(&self, t: f64) -> Result<f64> {
        self.interpolate(&self.diffusion, t)
    }

    fn pole_windows(&self, _t_max: f64) -> Result<Vec<(f64, f64)>> {
        Ok(self.windows.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub t_start: f64,
    pub t_max: f64,
    pub seed: u64,
    /// Statistics are recorded every this many steps.
    pub record_every: usize,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(QbmError::Config(format!("need at least 2 paths, got {}", self.n_paths)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(QbmError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_start >= 0.0 && self.t_max > self.t_start && self.t_max.is_finite()) {
            return Err(QbmError::Config(format!(
                "need 0 <= t_start < t_max, got [{}, {}]",
                self.t_start, self.t_max
            )));
        }
        if self.record_every == 0 {
            return Err(QbmError::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        ((self.t_max - self.t_start) / self.dt).round().max(1.0) as usize
    }

    /// The times at which statistics are recorded, starting at `t_start`.
    pub fn output_times(&self) -> Vec<f64> {
        (0..=self.steps())
            .step_by(self.record_every)
            .map(|k| self.t_start + k as f64 * self.dt)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// Unbiased sample variance.
    pub variance: Vec<f64>,
    /// `variance·√(2/(n − 1))`.
    pub std_error: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
}

// Per-step drift factor and noise amplitude, with coefficients taken at the
// step midpoint.
fn step_table<C: Coefficients + ?Sized>(coeffs: &C, t_start: f64, dt: f64, steps: usize) -> Result<Vec<(f64, f64)>> {
    (0..steps)
        .map(|k| {
            let t = t_start + (k as f64 + 0.5) * dt;
            let d = coeffs.diffusion(t)?;
            if d < 0.0 {
                return Err(QbmError::NegativeDiffusion { t, d });
            }
            Ok((1.0 + coeffs.omega(t)? * dt, (d * dt).sqrt()))
        })
        .collect()
}

// Running mean and sum of squared deviations per output time.
#[derive(Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments {
            n: 0.0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, sample: &[f64]) {
        self.n += 1.0;
        for (i, &x) in sample.iter().enumerate() {
            let delta = x - self.mean[i];
            self.mean[i] += delta / self.n;
            self.m2[i] += delta * (x - self.mean[i]);
        }
    }

    fn merge(mut self, other: &Moments) -> Self {
        let n = self.n + other.n;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * other.n / n;
            self.m2[i] += other.m2[i] + delta * delta * self.n * other.n / n;
        }
        self.n = n;
        self
    }
}

// Runs every path with `path(rng, record)` and reduces the recorded samples
// block by block in path order.
fn run_paths<P>(config: &EnsembleConfig, outputs: usize, path: P) -> Vec<Moments>
where
    P: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let blocks = config.n_paths.div_ceil(BLOCK);
    let partial: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut m = Moments::new(outputs);
            let mut record = vec![0.0; outputs];
            for p in b * BLOCK..((b + 1) * BLOCK).min(config.n_paths) {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(p as u64);
                path(&mut rng, &mut record);
                m.push(&record);
            }
            m
        })
        .collect();
    partial
}

fn reduce(partial: Vec<Moments>, outputs: usize) -> Moments {
    partial.iter().fold(Moments::new(outputs), |acc, m| acc.merge(m))
}

fn stats(times: Vec<f64>, m: Moments, config: &EnsembleConfig) -> EnsembleStats {
    let n = config.n_paths as f64;
    let variance: Vec<f64> = m.m2.iter().map(|&v| v / (n - 1.0)).collect();
    let factor = (2.0 / (n - 1.0)).sqrt();
    EnsembleStats {
        times,
        mean: m.mean,
        std_error: variance.iter().map(|v| v * factor).collect(),
        variance,
        n_paths: config.n_paths,
        seed: config.seed,
    }
}

/// Euler–Maruyama ensemble from `q(t_start) = 0`.
///
/// Refuses with [`QbmError::NegativeDiffusion`] if `D < 0` anywhere on the
/// window, since `√D` is then undefined.
pub fn simulate_ensemble<C: Coefficients + ?Sized>(coeffs: &C, config: &EnsembleConfig) -> Result<EnsembleStats> {
    config.validate()?;
    let steps = config.steps();
    let table = step_table(coeffs, config.t_start, config.dt, steps)?;
    let times = config.output_times();
    let outputs = times.len();
    let every = config.record_every;
    let partial = run_paths(config, outputs, |rng, record| {
        let mut q = 0.0;
        record[0] = 0.0;
        for (k, &(drift, noise)) in table.iter().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            q = drift * q + noise * z;
            if (k + 1) % every == 0 {
                record[(k + 1) / every] = q;
            }
        }
    });
    Ok(stats(times, reduce(partial, outputs), config))
}

/// The same ensemble at `dt` and `dt/2`, driven by the same Brownian paths
/// (each coarse increment is the sum of two fine ones). Returns
/// `(coarse, fine)` on the coarse output times.
pub fn simulate_refinement<C: Coefficients + ?Sized>(
    coeffs: &C,
    config: &EnsembleConfig,
) -> Result<(EnsembleStats, EnsembleStats)> {
    config.validate()?;
    let steps = config.steps();
    let coarse = step_table(coeffs, config.t_start, config.dt, steps)?;
    let fine = step_table(coeffs, config.t_start, 0.5 * config.dt, 2 * steps)?;
    let times = config.output_times();
    let outputs = times.len();
    let every = config.record_every;
    let partial = run_paths(config, 2 * outputs, |rng, record| {
        let (mut qc, mut qf) = (0.0, 0.0);
        record[0] = 0.0;
        record[outputs] = 0.0;
        for k in 0..steps {
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            let (a, b) = (fine[2 * k], fine[2 * k + 1]);
            qf = a.0 * qf + a.1 * z1;
            qf = b.0 * qf + b.1 * z2;
            let (drift, noise) = coarse[k];
            qc = drift * qc + noise * (z1 + z2) * std::f64::consts::FRAC_1_SQRT_2;
            if (k + 1) % every == 0 {
                record[(k + 1) / every] = qc;
                record[outputs + (k + 1) / every] = qf;
            }
        }
    });
    let m = reduce(partial, 2 * outputs);
    let split = |range: std::ops::Range<usize>| Moments {
        n: m.n,
        mean: m.mean[range.clone()].to_vec(),
        m2: m.m2[range].to_vec(),
    };
    Ok((
        stats(times.clone(), split(0..outputs), config),
        stats(times, split(outputs..2 * outputs), config),
    ))
}

/// RK4 solution of `σ̇ = D + 2Ωσ` on an ascending grid, `σ(grid[0]) = sigma0`.
/// Works for negative `D`; refuses to step across a pole window.
pub fn variance_ode<C: Coefficients + ?Sized>(coeffs: &C, t_grid: &[f64], sigma0: f64) -> Result<Vec<f64>> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(QbmError::domain("variance ODE needs a non-empty ascending grid"));
    }
    let last = t_grid[t_grid.len() - 1];
    let windows = coeffs.pole_windows(last)?;
    if let Some(w) = windows.iter().find(|w| w.1 >= t_grid[0] && w.0 <= last) {
        return Err(QbmError::Pole {
            t: w.0.max(t_grid[0]),
            pole: 0.5 * (w.0 + w.1),
        });
    }
    let rate = |t: f64, s: f64| -> Result<f64> { Ok(coeffs.diffusion(t)? + 2.0 * coeffs.omega(t)? * s) };
    let mut out = Vec::with_capacity(t_grid.len());
    let mut s = sigma0;
    out.push(s);
    for w in t_grid.windows(2) {
        let n = ((w[1] - w[0]) / ODE_MAX_STEP).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / n as f64;
        for k in 0..n {
            let t = w[0] + k as f64 * h;
            let k1 = rate(t, s)?;
            let k2 = rate(t + 0.5 * h, s + 0.5 * h * k1)?;
            let k3 = rate(t + 0.5 * h, s + 0.5 * h * k2)?;
            let k4 = rate(t + h, s + h * k3)?;
            s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(s);
    }
    Ok(out)
}

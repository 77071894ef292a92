//! The `qbm` command line.
//!
//! Every subcommand writes a CSV file (header row, comma separated, values in
//! shortest round-trip scientific notation). Lines starting with `#` carry
//! annotations such as pole positions. Exit codes: 0 on success, 2 for
//! configuration or usage errors, 3 when a numerical procedure fails.
//!
//! Parameters come from built-in defaults, then an optional `key = value`
//! config file, then command-line flags. `QBM_THREADS` caps the number of
//! worker threads.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::classical::{Classical, ClassicalParams};
use crate::correlations::Correlations;
use crate::diffusion::{CoefficientSeries, Diffusion};
use crate::error::{QbmError, Result};
use crate::noise_corr::NoiseCorrelations;
use crate::oup_sim::{
    simulate_ensemble, variance_ode, ClassicalCoefficients, EnsembleConfig, EnsembleStats, SampledCoefficients,
};
use crate::params::{ModelParams, QuadControl, SeriesControl};
use crate::susceptibility::Susceptibility;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// Output time grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub n_points: usize,
    pub spacing: Spacing,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_max > self.t_min && self.t_max.is_finite()) {
            return Err(QbmError::Config(format!(
                "need t_max > t_min > 0, got t_min = {}, t_max = {}",
                self.t_min, self.t_max
            )));
        }
        if self.n_points < 2 {
            return Err(QbmError::Config(format!("n_points must be >= 2, got {}", self.n_points)));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let last = (self.n_points - 1) as f64;
        let mut v: Vec<f64> = (0..self.n_points)
            .map(|i| {
                let x = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.t_min + (self.t_max - self.t_min) * x,
                    Spacing::Log => self.t_min * (self.t_max / self.t_min).powf(x),
                }
            })
            .collect();
        v[self.n_points - 1] = self.t_max;
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig4Inset,
    Fig5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Source {
    #[default]
    Classical,
    Quantum,
}

/// Raw settings as read from a config file or the command line; unset keys
/// fall back to the defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub gamma: Option<f64>,
    pub temperature: Option<f64>,
    pub nu: Option<f64>,
    pub omega_d: Option<f64>,
    pub n_max: Option<u64>,
    /// Applies to both the Matsubara sums and the quadratures.
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub n_points: Option<usize>,
    pub spacing: Option<Spacing>,
    pub seed: Option<u64>,
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| QbmError::Config(format!("line {line}: cannot parse {key} = {value:?}")))
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Settings> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let n = i + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| QbmError::Config(format!("line {n}: expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "gamma" => s.gamma = Some(parse_value(key, value, n)?),
                "temperature" => s.temperature = Some(parse_value(key, value, n)?),
                "nu" => s.nu = Some(parse_value(key, value, n)?),
                "omega_d" => s.omega_d = Some(parse_value(key, value, n)?),
                "n_max" => s.n_max = Some(parse_value(key, value, n)?),
                "rel_tol" => s.rel_tol = Some(parse_value(key, value, n)?),
                "abs_tol" => s.abs_tol = Some(parse_value(key, value, n)?),
                "t_min" => s.t_min = Some(parse_value(key, value, n)?),
                "t_max" => s.t_max = Some(parse_value(key, value, n)?),
                "n_points" => s.n_points = Some(parse_value(key, value, n)?),
                "spacing" => {
                    s.spacing = Some(
                        Spacing::from_str(value, true)
                            .map_err(|_| QbmError::Config(format!("line {n}: spacing must be linear or log")))?,
                    )
                }
                "seed" => s.seed = Some(parse_value(key, value, n)?),
                "n_paths" => s.n_paths = Some(parse_value(key, value, n)?),
                "dt" => s.dt = Some(parse_value(key, value, n)?),
                _ => return Err(QbmError::Config(format!("line {n}: unknown key {key:?}"))),
            }
        }
        Ok(s)
    }

    /// Values set in `other` win.
    pub fn overlay(self, other: &Settings) -> Settings {
        Settings {
            gamma: other.gamma.or(self.gamma),
            temperature: other.temperature.or(self.temperature),
            nu: other.nu.or(self.nu),
            omega_d: other.omega_d.or(self.omega_d),
            n_max: other.n_max.or(self.n_max),
            rel_tol: other.rel_tol.or(self.rel_tol),
            abs_tol: other.abs_tol.or(self.abs_tol),
            t_min: other.t_min.or(self.t_min),
            t_max: other.t_max.or(self.t_max),
            n_points: other.n_points.or(self.n_points),
            spacing: other.spacing.or(self.spacing),
            seed: other.seed.or(self.seed),
            n_paths: other.n_paths.or(self.n_paths),
            dt: other.dt.or(self.dt),
        }
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let series = SeriesControl {
            n_max: self.n_max.unwrap_or(SeriesControl::default().n_max),
            rel_tol: self.rel_tol.unwrap_or(SeriesControl::default().rel_tol),
        };
        let quad = QuadControl {
            abs_tol: self.abs_tol.unwrap_or(QuadControl::default().abs_tol),
            rel_tol: self.rel_tol.unwrap_or(QuadControl::default().rel_tol),
            t_min: self.t_min.unwrap_or(QuadControl::default().t_min),
            ..QuadControl::default()
        };
        let mut model = ModelParams::new(
            self.gamma.unwrap_or(1.0),
            self.temperature.unwrap_or(0.053),
            self.nu.unwrap_or(1e7),
        )?
        .with_series(series)?
        .with_quad(quad)?;
        if let Some(wd) = self.omega_d {
            model = model.with_omega_d(wd)?;
        }
        let grid = GridSpec {
            t_min: quad.t_min,
            t_max: self.t_max.unwrap_or(10.0),
            n_points: self.n_points.unwrap_or(500),
            spacing: self.spacing.unwrap_or_default(),
        };
        grid.validate()?;
        let cfg = RunConfig {
            model,
            grid,
            output: None,
            preset: None,
            seed: self.seed.unwrap_or(1),
            n_paths: self.n_paths.unwrap_or(10_000),
            dt: self.dt.unwrap_or(1e-3),
        };
        if cfg.n_paths < 2 {
            return Err(QbmError::Config(format!("n_paths must be >= 2, got {}", cfg.n_paths)));
        }
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
            return Err(QbmError::Config(format!("dt must be positive, got {}", cfg.dt)));
        }
        Ok(cfg)
    }
}

/// Everything one run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: GridSpec,
    pub output: Option<PathBuf>,
    pub preset: Option<Preset>,
    pub seed: u64,
    pub n_paths: usize,
    pub dt: f64,
}

impl RunConfig {
    pub fn from_config_text(text: &str) -> Result<RunConfig> {
        Settings::parse(text)?.resolve()
    }
}

// ---------------------------------------------------------------------------
// CSV

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn row(values: &[f64]) -> String {
    values.iter().map(|&x| num(x)).collect::<Vec<_>>().join(",")
}

fn pole_lines(out: &mut String, poles: &[f64], windows: &[(f64, f64)]) {
    for (p, w) in poles.iter().zip(windows) {
        let _ = writeln!(out, "# pole t={} window=[{},{}]", num(*p), num(w.0), num(w.1));
    }
}

/// `t,S,A,dS,dA,d2S,d2A` on the grid.
pub fn correlation_csv(cfg: &RunConfig) -> Result<String> {
    correlation_table(cfg, false)
}

fn correlation_table(cfg: &RunConfig, only_s_a: bool) -> Result<String> {
    let corr = Correlations::new(&cfg.model)?;
    let rows: Vec<Result<String>> = cfg
        .grid
        .points()
        .into_par_iter()
        .map(|t| {
            let b = corr.blocks(t)?;
            Ok(if only_s_a {
                row(&[t, b.c.re, b.c.im])
            } else {
                row(&[t, b.c.re, b.c.im, b.dc.re, b.dc.im, b.d2c.re, b.d2c.im])
            })
        })
        .collect();
    let mut out = String::from(if only_s_a { "t,S,A\n" } else { "t,S,A,dS,dA,d2S,d2A\n" });
    for r in rows {
        out.push_str(&r?);
        out.push('\n');
    }
    Ok(out)
}

/// `t,chi_q,chi_v,dchi_q,dchi_v,omega_drift`; `Ω` is NaN inside pole windows.
pub fn susceptibility_csv(cfg: &RunConfig) -> Result<String> {
    let chi = Susceptibility::new(cfg.model.gamma)?;
    let poles = chi.find_chi_q_zeros(cfg.grid.t_max)?;
    let mut out = String::new();
    pole_lines(&mut out, &poles.times, &poles.windows());
    out.push_str("t,chi_q,chi_v,dchi_q,dchi_v,omega_drift\n");
    for t in cfg.grid.points() {
        let v = chi.eval(t)?;
        let omega = match chi.drift_frequency(t) {
            Ok(w) => w,
            Err(QbmError::Pole { .. }) => f64::NAN,
            Err(e) => return Err(e),
        };
        out.push_str(&row(&[t, v.chi_q, v.chi_v, v.dchi_q, v.dchi_v, omega]));
        out.push('\n');
    }
    Ok(out)
}

/// The coefficient series, with the first point-level error if any.
fn diffusion_series(cfg: &RunConfig) -> Result<CoefficientSeries> {
    let series = Diffusion::quantum(&cfg.model)?.coefficient_series(&cfg.grid.points())?;
    for (i, e) in &series.errors {
        eprintln!("warning: t = {}: {e}", series.times[*i]);
    }
    Ok(series)
}

fn non_convergence(series: &CoefficientSeries) -> Option<QbmError> {
    series
        .errors
        .iter()
        .find(|(_, e)| matches!(e, QbmError::NonConvergence { .. }))
        .map(|(_, e)| e.clone())
}

/// `t,omega_drift,sigma_re,sigma_im,sigma_total,d1_total,dq_total,flags`.
/// Points inside pole windows become `# in pole window` comment lines.
pub fn diffusion_csv(series: &CoefficientSeries) -> String {
    let mut out = String::new();
    pole_lines(&mut out, &series.poles, &series.pole_windows);
    if let Some(s) = series.t_min_sensitivity {
        let _ = writeln!(out, "# t_min sensitivity of D_Q at t={}: {}", num(series.times[0]), num(s));
    }
    out.push_str("t,omega_drift,sigma_re,sigma_im,sigma_total,d1_total,dq_total,flags\n");
    for i in 0..series.len() {
        let t = series.times[i];
        if series.flags[i].contains(crate::diffusion::PointFlags::IN_POLE_WINDOW) {
            let _ = writeln!(out, "# in pole window t={}", num(t));
            continue;
        }
        let s = series.sigma_q[i];
        let _ = writeln!(
            out,
            "{},{}",
            row(&[
                t,
                series.omega_drift[i],
                s.re,
                s.im,
                s.total(),
                series.d1[i].total(),
                series.d_q[i].total()
            ]),
            series.flags[i].label()
        );
    }
    out
}

fn sigma_csv(series: &CoefficientSeries) -> String {
    let mut out = String::from("t,sigma_re,sigma_im,sigma_total\n");
    for i in 0..series.len() {
        let s = series.sigma_q[i];
        if s.total().is_finite() {
            out.push_str(&row(&[series.times[i], s.re, s.im, s.total()]));
            out.push('\n');
        }
    }
    out
}

/// `t,d_clas,sigma_clas`.
pub fn classical_csv(params: &ClassicalParams, grid: &GridSpec) -> Result<String> {
    let c = Classical::new(params)?;
    let poles = c.susceptibility().find_chi_q_zeros(grid.t_max)?;
    let mut out = String::new();
    pole_lines(&mut out, &poles.times, &poles.windows());
    out.push_str("t,d_clas,sigma_clas\n");
    for t in grid.points() {
        out.push_str(&row(&[t, c.diffusion(t)?, c.sigma(t)?]));
        out.push('\n');
    }
    Ok(out)
}

/// `t,s,re,im` of the two-time noise correlation on the grid squared.
pub fn debug_phi_csv(cfg: &RunConfig) -> Result<String> {
    let noise = NoiseCorrelations::new(&cfg.model)?;
    let pts = cfg.grid.points();
    let mut out = String::from("t,s,re,im\n");
    for &t in &pts {
        for &s in &pts {
            let v = noise.phi_phi(t, s)?.value;
            out.push_str(&row(&[t, s, v.re, v.im]));
            out.push('\n');
        }
    }
    Ok(out)
}

/// `t,mc_variance,mc_stderr,ode_variance,reference_sigma`.
pub fn simulate_csv(cfg: &RunConfig, source: Source, record_every: Option<usize>) -> Result<String> {
    let t_start = match source {
        Source::Classical => 0.0,
        Source::Quantum => cfg.grid.t_min,
    };
    let steps = ((cfg.grid.t_max - t_start) / cfg.dt).round().max(1.0) as usize;
    let every = record_every.unwrap_or_else(|| (steps / (cfg.grid.n_points - 1)).max(1));
    let ens = EnsembleConfig {
        n_paths: cfg.n_paths,
        dt: cfg.dt,
        t_start,
        t_max: cfg.grid.t_max,
        seed: cfg.seed,
        record_every: every,
    };
    ens.validate()?;
    let times = ens.output_times();
    let (stats, ode, reference): (EnsembleStats, Vec<f64>, Vec<f64>) = match source {
        Source::Classical => {
            let coeffs = ClassicalCoefficients::new(&ClassicalParams::new(cfg.model.gamma, cfg.model.temperature)?)?;
            let stats = simulate_ensemble(&coeffs, &ens)?;
            let ode = variance_ode(&coeffs, &times, 0.0)?;
            let reference = times.iter().map(|&t| coeffs.classical().sigma(t)).collect::<Result<_>>()?;
            (stats, ode, reference)
        }
        Source::Quantum => {
            // coefficients on a log grid refined at t_min, plus the output times
            let log = GridSpec {
                spacing: Spacing::Log,
                n_points: cfg.grid.n_points.max(200),
                ..cfg.grid
            };
            let mut grid: Vec<f64> = log.points().into_iter().chain(times.iter().copied()).collect();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let series = Diffusion::quantum(&cfg.model)?.coefficient_series(&grid)?;
            if let Some(e) = non_convergence(&series) {
                return Err(e);
            }
            let coeffs = SampledCoefficients::from_series(&series)?;
            let stats = simulate_ensemble(&coeffs, &ens)?;
            // both the ensemble and the ODE start from a sharp q = 0
            let full = variance_ode(&coeffs, &grid, 0.0)?;
            let at = |t: f64| grid.binary_search_by(|x| x.total_cmp(&t)).expect("output time on grid");
            let ode = times.iter().map(|&t| full[at(t)]).collect();
            let reference = times.iter().map(|&t| series.sigma_q[at(t)].total()).collect();
            (stats, ode, reference)
        }
    };
    let mut out = String::new();
    let _ = writeln!(out, "# paths={} dt={} seed={}", stats.n_paths, num(cfg.dt), stats.seed);
    out.push_str("t,mc_variance,mc_stderr,ode_variance,reference_sigma\n");
    for i in 0..stats.times.len() {
        out.push_str(&row(&[
            stats.times[i],
            stats.variance[i],
            stats.std_error[i],
            ode[i],
            reference[i],
        ]));
        out.push('\n');
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// presets

/// Curves of one figure.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetSpec {
    /// `(γ, T)` per curve.
    pub curves: Vec<(f64, f64)>,
    pub nu: f64,
    pub grid: GridSpec,
    /// File name prefix, e.g. `fig4_inset`.
    pub prefix: &'static str,
}

const FIG1_GAMMAS: [f64; 3] = [1.0, 2.0, 4.0];
const FIG4_GAMMAS: [f64; 4] = [200.0, 250.0, 318.0, 400.0];
const INSET_GAMMAS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
const QUANTUM_T: f64 = 0.053;
const QUANTUM_NU: f64 = 1e7;
const FIG4_T: f64 = 25.2;
const INSET_T: f64 = 2.0;

impl Preset {
    pub fn spec(self) -> PresetSpec {
        let short = GridSpec {
            t_min: 1e-3,
            t_max: 10.0,
            n_points: 500,
            spacing: Spacing::Linear,
        };
        let with = |gs: &[f64], temp: f64| gs.iter().map(|&g| (g, temp)).collect::<Vec<_>>();
        let (curves, grid, prefix) = match self {
            Preset::Fig1 => (with(&FIG1_GAMMAS, QUANTUM_T), short, "fig1"),
            Preset::Fig2 => (with(&FIG1_GAMMAS, QUANTUM_T), short, "fig2"),
            Preset::Fig3 => (with(&FIG1_GAMMAS, QUANTUM_T), short, "fig3"),
            Preset::Fig4 => (
                with(&FIG4_GAMMAS, FIG4_T),
                GridSpec {
                    t_max: 4000.0,
                    spacing: Spacing::Log,
                    ..short
                },
                "fig4",
            ),
            Preset::Fig4Inset => (with(&INSET_GAMMAS, INSET_T), short, "fig4_inset"),
            Preset::Fig5 => {
                let mut c = with(&FIG4_GAMMAS, FIG4_T);
                c.extend(with(&INSET_GAMMAS, INSET_T));
                (c, short, "fig5")
            }
        };
        PresetSpec {
            curves,
            nu: QUANTUM_NU,
            grid,
            prefix,
        }
    }

    fn is_quantum(self) -> bool {
        matches!(self, Preset::Fig1 | Preset::Fig2 | Preset::Fig3)
    }

    /// Names of the files the preset writes, in plotting order.
    pub fn file_names(self) -> Vec<String> {
        let spec = self.spec();
        let mut names: Vec<String> = spec
            .curves
            .iter()
            .map(|(g, _)| format!("{}_gamma{}.csv", spec.prefix, g))
            .collect();
        if matches!(self, Preset::Fig3 | Preset::Fig5) {
            names.push(format!("{}_omega.csv", spec.prefix));
        }
        names
    }
}

// Ω for the periodic curves of a preset, one column per γ; rows inside any
// pole window are comments.
fn omega_csv(gammas: &[f64], grid: &GridSpec) -> Result<String> {
    let chis = gammas.iter().map(|&g| Susceptibility::new(g)).collect::<Result<Vec<_>>>()?;
    let mut out = String::new();
    for c in &chis {
        let poles = c.find_chi_q_zeros(grid.t_max)?;
        pole_lines(&mut out, &poles.times, &poles.windows());
    }
    out.push('t');
    for g in gammas {
        let _ = write!(out, ",omega_gamma{g}");
    }
    out.push('\n');
    for t in grid.points() {
        let mut vals = vec![t];
        for c in &chis {
            match c.drift_frequency(t) {
                Ok(w) => vals.push(w),
                Err(QbmError::Pole { .. }) => break,
                Err(e) => return Err(e),
            }
        }
        if vals.len() == chis.len() + 1 {
            out.push_str(&row(&vals));
            out.push('\n');
        } else {
            let _ = writeln!(out, "# in pole window t={}", num(t));
        }
    }
    Ok(out)
}

/// Writes the preset's CSV files into `dir`; `overrides` may change the grid
/// and numeric controls but not the curves. Returns the paths written.
pub fn run_preset(preset: Preset, dir: &Path, overrides: &Settings) -> std::result::Result<Vec<PathBuf>, CliError> {
    let spec = preset.spec();
    let base = Settings {
        nu: Some(spec.nu),
        t_min: Some(spec.grid.t_min),
        t_max: Some(spec.grid.t_max),
        n_points: Some(spec.grid.n_points),
        spacing: Some(spec.grid.spacing),
        ..Settings::default()
    };
    let mut settings = base.overlay(overrides);
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let names = preset.file_names();
    let mut written = Vec::new();
    let mut failure = None;
    for (k, &(g, temp)) in spec.curves.iter().enumerate() {
        settings.gamma = Some(g);
        settings.temperature = Some(temp);
        let cfg = settings.resolve()?;
        let text = match preset {
            Preset::Fig1 => correlation_table(&cfg, true)?,
            Preset::Fig2 | Preset::Fig3 => {
                let series = diffusion_series(&cfg)?;
                failure = failure.or(non_convergence(&series));
                if preset == Preset::Fig2 {
                    sigma_csv(&series)
                } else {
                    diffusion_csv(&series)
                }
            }
            _ => classical_csv(&ClassicalParams::new(g, temp)?, &cfg.grid)?,
        };
        let path = dir.join(&names[k]);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    if matches!(preset, Preset::Fig3 | Preset::Fig5) {
        let periodic: Vec<f64> = spec.curves.iter().map(|c| c.0).filter(|&g| g < 2.0).collect();
        let grid = settings.resolve()?.grid;
        let path = dir.join(&names[names.len() - 1]);
        fs::write(&path, omega_csv(&periodic, &grid)?).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    debug_assert!(preset.is_quantum() || failure.is_none());
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(written),
    }
}

/// A gnuplot command file laying out the figure from its CSV files.
pub fn emit_plot_script(csv_paths: &[PathBuf], style: Preset) -> Result<String> {
    if csv_paths.is_empty() {
        return Err(QbmError::Config("no CSV files to plot".into()));
    }
    if let Some(p) = csv_paths.iter().find(|p| !p.is_file()) {
        return Err(QbmError::Config(format!("missing CSV file {}", p.display())));
    }
    let (inset, main): (Vec<&PathBuf>, Vec<&PathBuf>) = csv_paths.iter().partition(|p| {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        name.contains("_omega") || name.starts_with("fig4_inset")
    });
    let plot = |files: &[&PathBuf], col: usize| -> String {
        files
            .iter()
            .map(|p| format!("'{}' using 1:{col} with lines title '{}'", p.display(), title(p)))
            .collect::<Vec<_>>()
            .join(", \\\n     ")
    };
    let mut s = String::from("set datafile separator ','\nset datafile commentschars '#'\nset key top right\n");
    s.push_str("set xlabel 't'\n");
    match style {
        Preset::Fig1 => {
            s.push_str("set multiplot layout 2,1\nset ylabel 'S(t)'\n");
            let _ = writeln!(s, "plot {}", plot(&main, 2));
            s.push_str("set ylabel 'A(t)'\n");
            let _ = writeln!(s, "plot {}", plot(&main, 3));
            s.push_str("unset multiplot\n");
        }
        Preset::Fig2 => {
            s.push_str("set ylabel 'sigma_Q(t)'\n");
            let _ = writeln!(s, "plot {}", plot(&main, 4));
        }
        Preset::Fig3 | Preset::Fig5 => {
            let (col, label) = if style == Preset::Fig3 { (7, "D_Q(t)") } else { (2, "D_clas(t)") };
            let _ = writeln!(s, "set multiplot\nset ylabel '{label}'");
            let _ = writeln!(s, "plot {}", plot(&main, col));
            if !inset.is_empty() {
                s.push_str("set origin 0.5,0.5\nset size 0.45,0.4\nset ylabel 'Omega(t)'\nset yrange [-20:20]\n");
                let mut cols = Vec::new();
                for p in &inset {
                    let header = fs::read_to_string(p)
                        .ok()
                        .and_then(|t| t.lines().find(|l| !l.starts_with('#')).map(str::to_owned))
                        .unwrap_or_default();
                    for c in 2..=header.split(',').count() {
                        cols.push(format!("'{}' using 1:{c} with lines notitle", p.display()));
                    }
                }
                let _ = writeln!(s, "plot {}", cols.join(", \\\n     "));
            }
            s.push_str("unset multiplot\n");
        }
        Preset::Fig4 | Preset::Fig4Inset => {
            s.push_str("set multiplot\nset ylabel 'sigma_clas(t)'\n");
            if main.is_empty() {
                let _ = writeln!(s, "plot {}", plot(&inset, 3));
            } else {
                s.push_str("set logscale x\n");
                let _ = writeln!(s, "plot {}", plot(&main, 3));
                if !inset.is_empty() {
                    s.push_str("unset logscale x\nset origin 0.5,0.15\nset size 0.45,0.4\n");
                    let _ = writeln!(s, "plot {}", plot(&inset, 3));
                }
            }
            s.push_str("unset multiplot\n");
        }
    }
    Ok(s)
}

fn title(p: &Path) -> String {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match stem.rsplit_once("_gamma") {
        Some((_, g)) => format!("gamma={g}"),
        None => stem,
    }
}

// ---------------------------------------------------------------------------
// argument parsing and dispatch

#[derive(Debug, Parser)]
#[command(name = "qbm", version, about = "Fokker-Planck coefficients of quantum Brownian motion in an Ohmic bath")]
struct Cli {
    /// key = value parameter file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Default, Args)]
struct ModelArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    omega_d: Option<f64>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Number of grid points
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, value_enum)]
    spacing: Option<Spacing>,
    #[arg(long)]
    n_max: Option<u64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Output file; standard output when absent
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl ModelArgs {
    fn settings(&self) -> Settings {
        Settings {
            gamma: self.gamma,
            temperature: self.temperature,
            nu: self.nu,
            omega_d: self.omega_d,
            n_max: self.n_max,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            t_min: self.t_min,
            t_max: self.t_max,
            n_points: self.points,
            spacing: self.spacing,
            ..Settings::default()
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Position correlation and its derivatives
    Correlation(ModelArgs),
    /// Susceptibilities and drift frequency
    Susceptibility(ModelArgs),
    /// Quantum coefficient series
    Diffusion(ModelArgs),
    /// White-noise closed forms
    Classical(ModelArgs),
    /// Monte Carlo ensemble against the variance equation
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t)]
        source: Source,
        /// Record statistics every this many steps
        #[arg(long)]
        record_every: Option<usize>,
    },
    /// Write the data files of a figure
    Preset {
        #[arg(value_enum)]
        preset: Preset,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Print a gnuplot script for files written by `preset`
    PlotScript {
        #[arg(value_enum)]
        preset: Preset,
        #[arg(long, default_value = ".")]
        dir: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    #[command(hide = true)]
    DebugPhi(ModelArgs),
}

#[derive(Debug)]
pub enum CliError {
    Qbm(QbmError),
    Io(PathBuf, io::Error),
}

impl CliError {
    fn io(path: &Path, e: io::Error) -> Self {
        CliError::Io(path.to_path_buf(), e)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Qbm(e) => exit_code(e),
            CliError::Io(..) => EXIT_IO,
        }
    }
}

impl From<QbmError> for CliError {
    fn from(e: QbmError) -> Self {
        CliError::Qbm(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Qbm(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &QbmError) -> i32 {
    match e {
        QbmError::Config(_) | QbmError::Domain(_) | QbmError::NegativeDiffusion { .. } => EXIT_CONFIG,
        QbmError::NonConvergence { .. }
        | QbmError::Divergence(_)
        | QbmError::Resonance { .. }
        | QbmError::Pole { .. } => EXIT_NUMERIC,
    }
}

fn emit(output: Option<&Path>, text: &str) -> std::result::Result<(), CliError> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("QBM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| QbmError::Config(format!("QBM_THREADS must be a positive integer, got {v:?}")))?;
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn dispatch(cli: Cli) -> std::result::Result<(), CliError> {
    configure_threads()?;
    let file = match &cli.config {
        Some(p) => Settings::parse(&fs::read_to_string(p).map_err(|e| {
            CliError::Qbm(QbmError::Config(format!("cannot read config {}: {e}", p.display())))
        })?)?,
        None => Settings::default(),
    };
    match cli.command {
        Command::Correlation(m) => {
            let cfg = file.overlay(&m.settings()).resolve()?;
            emit(m.output.as_deref(), &correlation_csv(&cfg)?)
        }
        Command::Susceptibility(m) => {
            let cfg = file.overlay(&m.settings()).resolve()?;
            emit(m.output.as_deref(), &susceptibility_csv(&cfg)?)
        }
        Command::Diffusion(m) => {
            let cfg = file.overlay(&m.settings()).resolve()?;
            let series = diffusion_series(&cfg)?;
            emit(m.output.as_deref(), &diffusion_csv(&series))?;
            match non_convergence(&series) {
                Some(e) => Err(e.into()),
                None => Ok(()),
            }
        }
        Command::Classical(m) => {
            let cfg = file.overlay(&m.settings()).resolve()?;
            let p = ClassicalParams::new(cfg.model.gamma, cfg.model.temperature)?;
            emit(m.output.as_deref(), &classical_csv(&p, &cfg.grid)?)
        }
        Command::Simulate {
            model,
            paths,
            dt,
            seed,
            source,
            record_every,
        } => {
            let extra = Settings {
                n_paths: paths,
                dt,
                seed,
                ..model.settings()
            };
            let cfg = file.overlay(&extra).resolve()?;
            emit(model.output.as_deref(), &simulate_csv(&cfg, source, record_every)?)
        }
        Command::Preset { preset, out_dir, model } => {
            for p in run_preset(preset, &out_dir, &file.overlay(&model.settings()))? {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::PlotScript { preset, dir, output } => {
            let paths: Vec<PathBuf> = preset.file_names().iter().map(|n| dir.join(n)).collect();
            emit(output.as_deref(), &emit_plot_script(&paths, preset)?)
        }
        Command::DebugPhi(m) => {
            let cfg = file.overlay(&m.settings()).resolve()?;
            emit(m.output.as_deref(), &debug_phi_csv(&cfg)?)
        }
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! Run configuration, single-transit traces, reduced-unit sweeps, contour
//! tables and the verification report, with their CSV/JSON encodings.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cavity::{
    contour_velocity, coupling, effective_coupling, entanglement_final, entanglement_from_theta,
    theta_at, theta_cumulative, theta_infinity, Atom, CavityParams, EffectiveMode, ThetaMethod,
    X_STEP_LIMIT,
};
use crate::error::Error;
use crate::oracle::{
    atomic_pair_entropy, block_tdft_problem, compare_tdft_exact_with, integrate_exact_between,
    ExactOptions, ExcitationBlock,
};
use crate::quadrature::UniformGrid;
use crate::quantum::StateVector;
use crate::tdft::{
    generator_residual, random_pulsed_problem, second_order_discrepancy, solve_generator,
};

/// Recognized configuration keys, in file order.
pub const CONFIG_KEYS: [&str; 10] = [
    "g0_mhz",
    "delta_mhz",
    "d_um",
    "v_mps",
    "z1_0_um",
    "z2_0_um",
    "n_p",
    "step_factor",
    "window_sigmas",
    "mode",
];

/// Written in place of non-finite numbers in reports.
pub const SENTINEL: f64 = 1e300;

pub const GENERATOR_RESIDUAL_LIMIT: f64 = 1e-4;
pub const GENERATOR_ORDER_TOLERANCE: f64 = 0.3;
pub const APPENDIX_PROBLEMS: usize = 50;
pub const APPENDIX_MAX_RATIO: f64 = 0.05;
pub const APPENDIX_LIMIT: f64 = 1e-6;
pub const ENTROPY_ERROR_LIMIT: f64 = 0.02;
pub const POPULATION_ERROR_FACTOR: f64 = 5.0;
pub const NORM_DEFECT_LIMIT: f64 = 1e-9;
pub const EXCITATION_LIMIT: f64 = 1e-12;
/// Absolute floor under the population bound, so that `g0 = 0` is judged
/// against rounding rather than against exactly zero.
pub const POPULATION_ERROR_FLOOR: f64 = 1e-12;
pub const THETA_RELATIVE_LIMIT: f64 = 1e-3;
pub const DEFAULT_SEED: u64 = 20_240_611;

/// Length of the generator-residual window, in units of `1/|Δ|`.
const RESIDUAL_WINDOW: f64 = 40.0;

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error(transparent)]
    Numerical(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SweepError>;

fn config_error(key: &str, message: impl Into<String>) -> SweepError {
    SweepError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Maps parameter names of the library onto configuration keys.
fn parameter_error(err: Error) -> SweepError {
    match err {
        Error::InvalidParameter { name, reason } => {
            let key = match name {
                "g0" => "g0_mhz",
                "delta" => "delta_mhz",
                "d" => "d_um",
                "v" => "v_mps",
                "z1_0" => "z1_0_um",
                "z2_0" => "z2_0_um",
                other => other,
            };
            config_error(key, reason)
        }
        other => SweepError::Numerical(other),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ClosedForm,
    Quadrature,
    Exact,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "closed_form" => Ok(Mode::ClosedForm),
            "quadrature" => Ok(Mode::Quadrature),
            "exact" => Ok(Mode::Exact),
            other => Err(format!(
                "expected closed_form, quadrature or exact, got `{other}`"
            )),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::ClosedForm => "closed_form",
            Mode::Quadrature => "quadrature",
            Mode::Exact => "exact",
        })
    }
}

/// Physical run parameters. Frequencies in rad/μs, lengths in μm, velocity in m/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub g0_mhz: f64,
    pub delta_mhz: f64,
    pub d_um: f64,
    pub v_mps: f64,
    pub z1_0_um: f64,
    pub z2_0_um: f64,
    pub n_p: f64,
    pub step_factor: f64,
    pub window_sigmas: f64,
    pub mode: Mode,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = CavityParams::reference();
        Self {
            g0_mhz: p.g0,
            delta_mhz: p.delta,
            d_um: p.d,
            v_mps: p.v,
            z1_0_um: p.z1_0,
            z2_0_um: p.z2_0,
            n_p: p.n_p,
            step_factor: X_STEP_LIMIT,
            window_sigmas: crate::cavity::DEFAULT_WINDOW_SIGMAS,
            mode: Mode::ClosedForm,
        }
    }
}

impl RunConfig {
    /// Defaults overridden by the `key = value` lines of `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(config_error(
                    line,
                    format!("line {}: expected `key = value`", lineno + 1),
                ));
            };
            let key = key.trim();
            if seen.contains(&key) {
                return Err(config_error(
                    key,
                    format!("line {}: key given twice", lineno + 1),
                ));
            }
            config.set(key, value.trim())?;
            seen.push(key);
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key == "mode" {
            self.mode = value.parse().map_err(|e: String| config_error(key, e))?;
            return Ok(());
        }
        let slot = match key {
            "g0_mhz" => &mut self.g0_mhz,
            "delta_mhz" => &mut self.delta_mhz,
            "d_um" => &mut self.d_um,
            "v_mps" => &mut self.v_mps,
            "z1_0_um" => &mut self.z1_0_um,
            "z2_0_um" => &mut self.z2_0_um,
            "n_p" => &mut self.n_p,
            "step_factor" => &mut self.step_factor,
            "window_sigmas" => &mut self.window_sigmas,
            other => return Err(config_error(other, "unknown key")),
        };
        let x: f64 = value
            .parse()
            .map_err(|_| config_error(key, format!("`{value}` is not a number")))?;
        if !x.is_finite() {
            return Err(config_error(key, format!("`{value}` is not finite")));
        }
        *slot = x;
        Ok(())
    }

    /// Validated transit parameters.
    pub fn params(&self, allow_unsafe: bool) -> Result<CavityParams> {
        if !(self.step_factor > 0.0) {
            return Err(config_error(
                "step_factor",
                format!("must be positive, got {}", self.step_factor),
            ));
        }
        if self.step_factor > X_STEP_LIMIT {
            return Err(SweepError::Numerical(Error::StepTooLarge {
                step: self.step_factor / self.delta_mhz.abs(),
                bound: X_STEP_LIMIT / self.delta_mhz.abs(),
                frequency: self.delta_mhz.abs(),
            }));
        }
        if !(self.window_sigmas > 0.0) {
            return Err(config_error(
                "window_sigmas",
                format!("must be positive, got {}", self.window_sigmas),
            ));
        }
        let p = CavityParams {
            g0: self.g0_mhz,
            delta: self.delta_mhz,
            d: self.d_um,
            v: self.v_mps,
            z1_0: self.z1_0_um,
            z2_0: self.z2_0_um,
            n_p: self.n_p,
        };
        p.validate(allow_unsafe).map_err(parameter_error)?;
        Ok(p)
    }

    /// Parameters for a point of the reduced-unit plane.
    pub fn reduced_params(
        &self,
        v_reduced: f64,
        z0_reduced: f64,
        allow_unsafe: bool,
    ) -> Result<CavityParams> {
        self.params(allow_unsafe)?;
        CavityParams::from_reduced(
            self.g0_mhz,
            self.delta_mhz,
            self.d_um,
            self.n_p,
            v_reduced,
            z0_reduced,
            allow_unsafe,
        )
        .map_err(parameter_error)
    }

    pub fn theta_method(&self) -> Result<ThetaMethod> {
        match self.mode {
            Mode::ClosedForm => Ok(ThetaMethod::ClosedForm),
            Mode::Quadrature => Ok(ThetaMethod::Quadrature),
            Mode::Exact => Err(config_error(
                "mode",
                "exact mode is only available for evolve",
            )),
        }
    }

    fn photon_block(&self) -> Result<ExcitationBlock> {
        let n = self.n_p.round();
        if (self.n_p - n).abs() > 1e-9 {
            return Err(config_error(
                "n_p",
                "exact mode needs an integer photon number",
            ));
        }
        Ok(ExcitationBlock::new(n as u32))
    }
}

/// One row of a single-transit trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvolveRow {
    pub t_us: f64,
    pub g1: f64,
    pub g2: f64,
    pub f: f64,
    pub theta: f64,
    pub p_ge: f64,
    pub p_eg: f64,
    pub entropy: f64,
}

/// Trace at `samples` evenly spaced times across the transit window.
///
/// `theta` is the effective rotation angle in every mode; in exact mode the
/// populations and entropy come from the exact propagation instead.
pub fn evolve_trace(
    config: &RunConfig,
    samples: usize,
    allow_unsafe: bool,
) -> Result<Vec<EvolveRow>> {
    if samples < 2 {
        return Err(config_error(
            "samples",
            format!("need at least 2, got {samples}"),
        ));
    }
    let p = config.params(allow_unsafe)?;
    let (t0, t1) = p.transit_window(config.window_sigmas);
    let times: Vec<f64> = (0..samples)
        .map(|i| {
            if i + 1 == samples {
                t1
            } else {
                t0 + (t1 - t0) * i as f64 / (samples - 1) as f64
            }
        })
        .collect();
    let thetas = match config.mode {
        Mode::ClosedForm | Mode::Exact => times.iter().map(|&t| theta_at(&p, t)).collect(),
        Mode::Quadrature => theta_on_samples(&p, &times),
    };
    let mut rows: Vec<EvolveRow> = times
        .iter()
        .zip(&thetas)
        .map(|(&t, &theta)| {
            let c2 = theta.cos().powi(2);
            EvolveRow {
                t_us: t,
                g1: coupling(&p, t, Atom::First),
                g2: coupling(&p, t, Atom::Second),
                f: effective_coupling(&p, t, EffectiveMode::Simplified).re,
                theta,
                p_ge: c2,
                p_eg: theta.sin().powi(2),
                entropy: entanglement_from_theta(theta),
            }
        })
        .collect();
    if config.mode == Mode::Exact {
        overwrite_with_exact(config, &p, &mut rows)?;
    }
    Ok(rows)
}

/// Cumulative quadrature of `f` on a fine grid that contains every sample time.
fn theta_on_samples(p: &CavityParams, times: &[f64]) -> Vec<f64> {
    let intervals = times.len() - 1;
    let span = times[intervals] - times[0];
    let max_step = p.d / (p.v * 400.0);
    let mut per_sample = ((span / intervals as f64) / max_step).ceil().max(1.0) as usize;
    if per_sample % 2 == 1 {
        per_sample += 1;
    }
    let fine = UniformGrid::covering(
        times[0],
        times[intervals],
        span / (intervals * per_sample) as f64 * (1.0 + 1e-12),
    )
    .expect("sample times are increasing");
    let fine_times: Vec<f64> = fine.points().collect();
    let cumulative = theta_cumulative(p, &fine_times);
    (0..times.len())
        .map(|i| cumulative[(i * per_sample).min(fine_times.len() - 1)])
        .collect()
}

fn overwrite_with_exact(
    config: &RunConfig,
    p: &CavityParams,
    rows: &mut [EvolveRow],
) -> Result<()> {
    let block = config.photon_block()?;
    let ge = block
        .index_of(false, true)
        .expect("every block holds |ge,n>");
    let eg = block
        .index_of(true, false)
        .expect("every block holds |eg,n>");
    let step = config.step_factor / p.delta.abs();
    let mut state = StateVector::basis(block.dim(), ge)?;
    for i in 0..rows.len() {
        if i > 0 {
            let run = integrate_exact_between(
                p,
                &block,
                &state,
                rows[i - 1].t_us,
                rows[i].t_us,
                step,
                ExactOptions::default(),
            )?;
            state = run.state;
        }
        let pops = state.populations();
        rows[i].p_ge = pops[ge];
        rows[i].p_eg = pops[eg];
        rows[i].entropy = atomic_pair_entropy(&block, &state)?;
    }
    Ok(())
}

/// Uniform reduced-unit grid; `v` in units of `g0^2 d/|Δ|`, `z0` in units of `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepGrid {
    pub v_min: f64,
    pub v_max: f64,
    pub z0_min: f64,
    pub z0_max: f64,
    pub nv: usize,
    pub nz: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            v_min: 0.05,
            v_max: 2.0,
            z0_min: -4.0,
            z0_max: 4.0,
            nv: 101,
            nz: 101,
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        let all = [self.v_min, self.v_max, self.z0_min, self.z0_max];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(config_error("grid", "bounds must be finite"));
        }
        if !(self.v_min > 0.0) {
            return Err(config_error(
                "v_min",
                format!("must be positive, got {}", self.v_min),
            ));
        }
        if self.v_max < self.v_min {
            return Err(config_error("v_max", "must not be below v_min"));
        }
        if self.z0_max < self.z0_min {
            return Err(config_error("z0_max", "must not be below z0_min"));
        }
        if self.nv < 2 {
            return Err(config_error(
                "nv",
                format!("need at least 2 points, got {}", self.nv),
            ));
        }
        if self.nz < 2 {
            return Err(config_error(
                "nz",
                format!("need at least 2 points, got {}", self.nz),
            ));
        }
        Ok(())
    }

    pub fn v_values(&self) -> Vec<f64> {
        linspace(self.v_min, self.v_max, self.nv)
    }

    pub fn z0_values(&self) -> Vec<f64> {
        linspace(self.z0_min, self.z0_max, self.nz)
    }

    pub fn len(&self) -> usize {
        self.nv * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `n` evenly spaced values including both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub v_reduced: f64,
    pub z0_reduced: f64,
    pub theta_inf: f64,
    pub entropy: f64,
    pub method: ThetaMethod,
}

/// Final rotation angle and entanglement at one point of the reduced plane.
pub fn evaluate_point(
    config: &RunConfig,
    v_reduced: f64,
    z0_reduced: f64,
    allow_unsafe: bool,
) -> Result<RunRecord> {
    let method = config.theta_method()?;
    let p = config.reduced_params(v_reduced, z0_reduced, allow_unsafe)?;
    let theta = theta_infinity(&p, method).theta;
    Ok(RunRecord {
        v_reduced,
        z0_reduced,
        theta_inf: theta,
        entropy: entanglement_from_theta(theta),
        method,
    })
}

fn thread_pool(threads: Option<usize>, work: usize) -> Result<rayon::ThreadPool> {
    let requested = match threads {
        Some(0) => return Err(config_error("threads", "must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(requested.min(work).max(1))
        .build()
        .map_err(|e| config_error("threads", e.to_string()))
}

/// Every grid point, ordered by `z0` first and then `v`. Output does not
/// depend on the number of worker threads.
pub fn run_sweep(
    grid: &SweepGrid,
    config: &RunConfig,
    allow_unsafe: bool,
    threads: Option<usize>,
) -> Result<Vec<RunRecord>> {
    grid.validate()?;
    config.theta_method()?;
    config.params(allow_unsafe)?;
    let (vs, zs) = (grid.v_values(), grid.z0_values());
    let pool = thread_pool(threads, grid.len())?;
    pool.install(|| {
        (0..grid.len())
            .into_par_iter()
            .map(|i| evaluate_point(config, vs[i % grid.nv], zs[i / grid.nv], allow_unsafe))
            .collect()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContourRow {
    pub n: u32,
    pub z0_reduced: f64,
    pub v_reduced: f64,
}

/// Maximal-entanglement lines `n = 0..=n_max`, each sampled at `nz` values of `z0`.
pub fn contour_table(
    n_max: u32,
    z0_min: f64,
    z0_max: f64,
    nz: usize,
    allow_large_n: bool,
) -> Result<Vec<ContourRow>> {
    if !(z0_min.is_finite() && z0_max.is_finite()) || z0_max < z0_min {
        return Err(config_error(
            "z0_max",
            "z0 range must be finite and ordered",
        ));
    }
    if nz < 2 {
        return Err(config_error(
            "nz",
            format!("need at least 2 points, got {nz}"),
        ));
    }
    let zs = linspace(z0_min, z0_max, nz);
    let mut rows = Vec::with_capacity((n_max as usize + 1) * nz);
    for n in 0..=n_max {
        for &z0 in &zs {
            let v = contour_velocity(n, z0, allow_large_n).map_err(|e| match e {
                Error::InvalidParameter { reason, .. } => config_error("n_max", reason),
                other => SweepError::Numerical(other),
            })?;
            rows.push(ContourRow {
                n,
                z0_reduced: z0,
                v_reduced: v,
            });
        }
    }
    Ok(rows)
}

/// Entanglement after a transit at a contour point, with the config's `g0`, `Δ`, `d`.
pub fn contour_entanglement(
    config: &RunConfig,
    row: &ContourRow,
    allow_unsafe: bool,
) -> Result<f64> {
    Ok(entanglement_final(&config.reduced_params(
        row.v_reduced,
        row.z0_reduced,
        allow_unsafe,
    )?))
}

/// Generator residual near the cavity centre, relative to `max ||H1||`, at
/// step `h` and `h/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResidualCheck {
    pub relative: f64,
    pub refined_relative: f64,
    /// `log2` of the residual ratio under halving; zero when there is no residual.
    pub observed_order: f64,
}

pub fn generator_residual_check(p: &CavityParams, step_factor: f64) -> Result<ResidualCheck> {
    let block = ExcitationBlock::new(0);
    let t_centre = -0.5 * (p.z1_0 + p.z2_0) / p.v;
    let problem = block_tdft_problem(p, &block, t_centre)?;
    let bohr = problem.max_bohr_frequency();
    let span = RESIDUAL_WINDOW / bohr;
    let step = step_factor / bohr;
    let relative = |h: f64| -> Result<f64> {
        let traj = solve_generator(&problem, 0.0, span, h)?;
        let mut h1_max: f64 = 0.0;
        for &t in traj.t_grid() {
            h1_max = h1_max.max(problem.h1_at(t)?.frobenius_norm());
        }
        let r = generator_residual(&problem, &traj)?;
        Ok(if h1_max > 0.0 { r / h1_max } else { r })
    };
    let coarse = relative(step)?;
    let fine = relative(0.5 * step)?;
    let observed_order = if coarse > 0.0 && fine > 0.0 {
        (coarse / fine).log2()
    } else {
        0.0
    };
    Ok(ResidualCheck {
        relative: coarse,
        refined_relative: fine,
        observed_order,
    })
}

/// Largest discrepancy between the two second-order routes over random
/// pulsed problems with `||H1|| <= min(g0/|Δ|, 0.05) · min |E_mn|`.
pub fn appendix_equivalence(coupling_ratio: f64, count: usize, seed: u64) -> Result<f64> {
    let ratio = coupling_ratio.abs().min(APPENDIX_MAX_RATIO);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problems: Vec<_> = (0..count)
        .map(|i| random_pulsed_problem(&mut rng, 2 + i % 3, ratio))
        .collect::<std::result::Result<_, _>>()?;
    let errors: Vec<f64> = problems
        .par_iter()
        .map(|(problem, t_end)| {
            let step = problem
                .default_step()
                .expect("random spectra are non-degenerate");
            second_order_discrepancy(problem, *t_end, step)
        })
        .collect::<std::result::Result<_, _>>()?;
    Ok(errors.into_iter().fold(0.0, f64::max))
}

/// Flat verification report; every check carries its value, threshold and verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub generator_residual: f64,
    pub generator_residual_threshold: f64,
    pub generator_residual_passed: bool,
    pub generator_residual_refined: f64,
    pub generator_residual_order: f64,
    pub generator_residual_order_passed: bool,
    pub appendix_equivalence_max_error: f64,
    pub appendix_equivalence_threshold: f64,
    pub appendix_equivalence_passed: bool,
    pub tdft_vs_exact_population_gg1: f64,
    pub tdft_vs_exact_population_ge0: f64,
    pub tdft_vs_exact_population_eg0: f64,
    pub tdft_vs_exact_theta: f64,
    pub tdft_vs_exact_entropy_exact: f64,
    pub tdft_vs_exact_entropy_tdft: f64,
    pub tdft_vs_exact_entropy_error: f64,
    pub tdft_vs_exact_entropy_error_threshold: f64,
    pub tdft_vs_exact_entropy_error_passed: bool,
    pub tdft_vs_exact_max_population_error: f64,
    pub tdft_vs_exact_max_population_error_threshold: f64,
    pub tdft_vs_exact_max_population_error_passed: bool,
    pub tdft_vs_exact_norm_defect: f64,
    pub tdft_vs_exact_norm_defect_threshold: f64,
    pub tdft_vs_exact_norm_defect_passed: bool,
    pub tdft_vs_exact_excitation_deviation: f64,
    pub tdft_vs_exact_excitation_deviation_threshold: f64,
    pub tdft_vs_exact_excitation_deviation_passed: bool,
    pub tdft_vs_exact_photon_population: f64,
    pub tdft_vs_exact_reliable: bool,
    pub quadrature_vs_closed_form_theta_error: f64,
    pub quadrature_vs_closed_form_theta_threshold: f64,
    pub quadrature_vs_closed_form_theta_passed: bool,
    pub passed: bool,
}

fn finite(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        SENTINEL
    }
}

fn check(value: f64, limit: f64) -> (f64, bool) {
    let v = finite(value);
    (v, v <= limit)
}

pub fn verify(config: &RunConfig, allow_unsafe: bool, seed: u64) -> Result<VerifyReport> {
    let p = config.params(allow_unsafe)?;
    let ratio = (p.g0 / p.delta).abs();

    let residual = generator_residual_check(&p, config.step_factor)?;
    let (generator_residual, generator_residual_passed) =
        check(residual.relative, GENERATOR_RESIDUAL_LIMIT);
    let generator_residual_order = finite(residual.observed_order);
    let generator_residual_order_passed = residual.relative == 0.0
        || (generator_residual_order - 2.0).abs() <= GENERATOR_ORDER_TOLERANCE;

    let (appendix, appendix_passed) = check(
        appendix_equivalence(ratio, APPENDIX_PROBLEMS, seed)?,
        APPENDIX_LIMIT,
    );

    let oracle = compare_tdft_exact_with(&p, config.step_factor, config.window_sigmas)?;
    let population_limit = POPULATION_ERROR_FACTOR * ratio * ratio + POPULATION_ERROR_FLOOR;
    let (entropy_error, entropy_passed) = check(oracle.entropy_error, ENTROPY_ERROR_LIMIT);
    let (population_error, population_passed) =
        check(oracle.max_population_error, population_limit);
    let (norm_defect, norm_passed) = check(oracle.norm_defect, NORM_DEFECT_LIMIT);
    let (excitation, excitation_passed) = check(oracle.max_excitation_deviation, EXCITATION_LIMIT);

    let closed = theta_infinity(&p, ThetaMethod::ClosedForm).theta;
    let quad = theta_infinity(&p, ThetaMethod::Quadrature).theta;
    let theta_error = if closed != 0.0 {
        ((quad - closed) / closed).abs()
    } else {
        quad.abs()
    };
    let (theta_error, theta_passed) = check(theta_error, THETA_RELATIVE_LIMIT);

    let passed = generator_residual_passed
        && generator_residual_order_passed
        && appendix_passed
        && entropy_passed
        && population_passed
        && norm_passed
        && excitation_passed
        && theta_passed;

    Ok(VerifyReport {
        generator_residual,
        generator_residual_threshold: GENERATOR_RESIDUAL_LIMIT,
        generator_residual_passed,
        generator_residual_refined: finite(residual.refined_relative),
        generator_residual_order,
        generator_residual_order_passed,
        appendix_equivalence_max_error: appendix,
        appendix_equivalence_threshold: APPENDIX_LIMIT,
        appendix_equivalence_passed: appendix_passed,
        tdft_vs_exact_population_gg1: finite(oracle.final_populations[0]),
        tdft_vs_exact_population_ge0: finite(oracle.final_populations[1]),
        tdft_vs_exact_population_eg0: finite(oracle.final_populations[2]),
        tdft_vs_exact_theta: finite(oracle.theta_tdft),
        tdft_vs_exact_entropy_exact: finite(oracle.entropy_exact),
        tdft_vs_exact_entropy_tdft: finite(oracle.entropy_tdft),
        tdft_vs_exact_entropy_error: entropy_error,
        tdft_vs_exact_entropy_error_threshold: ENTROPY_ERROR_LIMIT,
        tdft_vs_exact_entropy_error_passed: entropy_passed,
        tdft_vs_exact_max_population_error: population_error,
        tdft_vs_exact_max_population_error_threshold: population_limit,
        tdft_vs_exact_max_population_error_passed: population_passed,
        tdft_vs_exact_norm_defect: norm_defect,
        tdft_vs_exact_norm_defect_threshold: NORM_DEFECT_LIMIT,
        tdft_vs_exact_norm_defect_passed: norm_passed,
        tdft_vs_exact_excitation_deviation: excitation,
        tdft_vs_exact_excitation_deviation_threshold: EXCITATION_LIMIT,
        tdft_vs_exact_excitation_deviation_passed: excitation_passed,
        tdft_vs_exact_photon_population: finite(oracle.photon_population),
        tdft_vs_exact_reliable: oracle.reliable,
        quadrature_vs_closed_form_theta_error: theta_error,
        quadrature_vs_closed_form_theta_threshold: THETA_RELATIVE_LIMIT,
        quadrature_vs_closed_form_theta_passed: theta_passed,
        passed,
    })
}

/// Nine significant digits, locale independent, no negative zero.
pub fn format_number(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.8e}")
}

fn write_row<W: Write>(out: &mut W, fields: &[String]) -> std::io::Result<()> {
    out.write_all(fields.join(",").as_bytes())?;
    out.write_all(b"\n")
}

pub fn write_evolve_csv<W: Write>(out: &mut W, rows: &[EvolveRow]) -> Result<()> {
    out.write_all(b"t_us,g1,g2,f,theta,p_ge,p_eg,entropy\n")?;
    for r in rows {
        let fields = [r.t_us, r.g1, r.g2, r.f, r.theta, r.p_ge, r.p_eg, r.entropy];
        write_row(out, &fields.map(format_number))?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: &mut W, rows: &[RunRecord]) -> Result<()> {
    out.write_all(b"v_reduced,z0_reduced,theta_inf,entropy\n")?;
    for r in rows {
        write_row(
            out,
            &[r.v_reduced, r.z0_reduced, r.theta_inf, r.entropy].map(format_number),
        )?;
    }
    Ok(())
}

pub fn write_contours_csv<W: Write>(out: &mut W, rows: &[ContourRow]) -> Result<()> {
    out.write_all(b"n,z0_reduced,v_reduced\n")?;
    for r in rows {
        write_row(
            out,
            &[
                r.n.to_string(),
                format_number(r.z0_reduced),
                format_number(r.v_reduced),
            ],
        )?;
    }
    Ok(())
}

pub fn write_verify_json<W: Write>(out: &mut W, report: &VerifyReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, report).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

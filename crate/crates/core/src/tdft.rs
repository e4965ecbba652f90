//! Time-dependent Fröhlich transformation for `H = H0 + H1(t)`.
//!
//! Everything is expressed in the eigenbasis of the time-independent `H0`
//! with energies `E_m`. The generator `S(t)` is chosen so that the first-order
//! term of the transformed Hamiltonian vanishes,
//!
//! ```text
//! H1 + [H0, S] - i dS/dt = 0   <=>   dS_mn/dt = -i (H1_mn(t) + E_mn S_mn),
//! ```
//!
//! which leaves `H_eff = H0 + [H1, S] / 2` at second order. The module also
//! provides the ordinary time-dependent perturbation coefficients `C^(1)` and
//! `C^(2)` as independent references, together with the same coefficients
//! reconstructed from the generator.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::quadrature::{cumulative_simpson, simpson, UniformGrid};
use crate::quantum::{commutator, ComplexMatrix, I, ZERO};

/// Hermiticity tolerance on samples of `H1(t)`.
pub const H1_HERMITIAN_TOL: f64 = 1e-10;
/// Steps must resolve the fastest Bohr frequency: `step <= STEP_LIMIT / max |E_mn|`.
pub const STEP_LIMIT: f64 = 0.1;
/// Default `step * max |E_mn|`.
pub const DEFAULT_STEP_FACTOR: f64 = 0.02;

pub type PerturbationFn = Arc<dyn Fn(f64) -> ComplexMatrix + Send + Sync>;

/// `H0` spectrum plus the perturbation `H1(t)` in the `H0` eigenbasis.
#[derive(Clone)]
pub struct TdftProblem {
    energies: Vec<f64>,
    h1: PerturbationFn,
}

impl fmt::Debug for TdftProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TdftProblem")
            .field("energies", &self.energies)
            .finish_non_exhaustive()
    }
}

impl TdftProblem {
    pub fn new(energies: Vec<f64>, h1: PerturbationFn) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::InvalidParameter {
                name: "energies",
                reason: "empty spectrum".into(),
            });
        }
        let problem = Self { energies, h1 };
        problem.h1_at(0.0)?;
        Ok(problem)
    }

    /// Problem with `H1(t) = 0`.
    pub fn unperturbed(energies: Vec<f64>) -> Result<Self> {
        let n = energies.len();
        Self::new(energies, Arc::new(move |_| ComplexMatrix::zeros(n, n)))
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// `E_m - E_n`.
    pub fn gap(&self, m: usize, n: usize) -> f64 {
        self.energies[m] - self.energies[n]
    }

    pub fn h0(&self) -> ComplexMatrix {
        ComplexMatrix::from_real_diag(&self.energies)
    }

    /// Samples `H1(t)` and checks its shape and hermiticity.
    pub fn h1_at(&self, t: f64) -> Result<ComplexMatrix> {
        let h = (self.h1)(t);
        let n = self.dim();
        if h.rows() != n || h.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "H1({t}) is {}x{} but the spectrum has {n} levels",
                h.rows(),
                h.cols()
            )));
        }
        let defect = h.hermiticity_defect();
        if defect > H1_HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: defect });
        }
        Ok(h)
    }

    /// Largest nonzero `|E_mn|`, or zero for a fully degenerate spectrum.
    pub fn max_bohr_frequency(&self) -> f64 {
        let lo = self.energies.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .energies
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }

    /// Largest admissible step, `0.1 / max |E_mn|`.
    pub fn step_bound(&self) -> f64 {
        let w = self.max_bohr_frequency();
        if w > 0.0 {
            STEP_LIMIT / w
        } else {
            f64::INFINITY
        }
    }

    /// `0.02 / max |E_mn|`, or `None` when the spectrum is degenerate.
    pub fn default_step(&self) -> Option<f64> {
        let w = self.max_bohr_frequency();
        (w > 0.0).then(|| DEFAULT_STEP_FACTOR / w)
    }

    pub fn check_step(&self, step: f64) -> Result<()> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidParameter {
                name: "step",
                reason: format!("must be positive, got {step}"),
            });
        }
        let bound = self.step_bound();
        if step > bound {
            return Err(Error::StepTooLarge {
                step,
                bound,
                frequency: self.max_bohr_frequency(),
            });
        }
        Ok(())
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.dim() {
            return Err(Error::InvalidIndex {
                index,
                dim: self.dim(),
            });
        }
        Ok(())
    }

    /// `dS/dt = -i (H1 + [H0, S])`.
    fn generator_rate(&self, h1: &ComplexMatrix, s: &ComplexMatrix) -> ComplexMatrix {
        let n = self.dim();
        ComplexMatrix::from_fn(n, n, |m, k| -I * (h1[(m, k)] + s[(m, k)] * self.gap(m, k)))
    }
}

/// `S(t)` sampled on a uniform grid, starting from `S = 0`.
#[derive(Clone, Debug)]
pub struct GeneratorTrajectory {
    grid: UniformGrid,
    t_grid: Vec<f64>,
    s_matrices: Vec<ComplexMatrix>,
}

impl GeneratorTrajectory {
    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn s_matrices(&self) -> &[ComplexMatrix] {
        &self.s_matrices
    }

    pub fn len(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_grid.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.grid.step
    }

    pub fn start(&self) -> f64 {
        self.grid.start
    }

    pub fn end(&self) -> f64 {
        self.grid.end()
    }

    /// Largest `||S + S^dagger||_F / ||S||_F` along the trajectory.
    pub fn max_anti_hermiticity_defect(&self) -> f64 {
        self.s_matrices
            .iter()
            .map(|s| {
                let norm = s.frobenius_norm();
                if norm == 0.0 {
                    0.0
                } else {
                    (s + &s.adjoint()).frobenius_norm() / norm
                }
            })
            .fold(0.0, f64::max)
    }

    fn check_range(&self, t: f64) -> Result<()> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start && t <= end) {
            return Err(Error::OutOfRange { t, start, end });
        }
        Ok(())
    }

    /// Interval index and local coordinate in `[0, 1]`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.len() - 1;
        if n == 0 {
            return (0, 0.0);
        }
        let x = (t - self.start()) / self.step();
        let i = (x.floor().max(0.0) as usize).min(n - 1);
        (i, (x - i as f64).clamp(0.0, 1.0))
    }

    /// `S(t)` by componentwise linear interpolation.
    pub fn s_at(&self, t: f64) -> Result<ComplexMatrix> {
        self.check_range(t)?;
        if self.len() == 1 {
            return Ok(self.s_matrices[0].clone());
        }
        let (i, u) = self.locate(t);
        if u == 0.0 {
            return Ok(self.s_matrices[i].clone());
        }
        if u == 1.0 {
            return Ok(self.s_matrices[i + 1].clone());
        }
        let (a, b) = (&self.s_matrices[i], &self.s_matrices[i + 1]);
        Ok(&a.scale_real(1.0 - u) + &b.scale_real(u))
    }

    /// `S(t)` by cubic Hermite interpolation, using the generator equation
    /// for the nodal derivatives. Fourth-order accurate between grid points.
    pub fn s_at_hermite(&self, problem: &TdftProblem, t: f64) -> Result<ComplexMatrix> {
        self.check_range(t)?;
        if self.len() == 1 {
            return Ok(self.s_matrices[0].clone());
        }
        let (i, u) = self.locate(t);
        if u == 0.0 {
            return Ok(self.s_matrices[i].clone());
        }
        if u == 1.0 {
            return Ok(self.s_matrices[i + 1].clone());
        }
        let h = self.step();
        let (y0, y1) = (&self.s_matrices[i], &self.s_matrices[i + 1]);
        let d0 = problem.generator_rate(&problem.h1_at(self.t_grid[i])?, y0);
        let d1 = problem.generator_rate(&problem.h1_at(self.t_grid[i + 1])?, y1);
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = (u3 - 2.0 * u2 + u) * h;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = (u3 - u2) * h;
        let n = problem.dim();
        Ok(ComplexMatrix::from_fn(n, n, |m, k| {
            y0[(m, k)] * h00 + d0[(m, k)] * h10 + y1[(m, k)] * h01 + d1[(m, k)] * h11
        }))
    }
}

/// Integrates the generator equation with classic RK4 from `S(t_start) = 0`.
pub fn solve_generator(
    problem: &TdftProblem,
    t_start: f64,
    t_end: f64,
    step: f64,
) -> Result<GeneratorTrajectory> {
    let n = problem.dim();
    solve_generator_from(problem, ComplexMatrix::zeros(n, n), t_start, t_end, step)
}

/// As [`solve_generator`] but from a given `S(t_start)`.
pub fn solve_generator_from(
    problem: &TdftProblem,
    s_start: ComplexMatrix,
    t_start: f64,
    t_end: f64,
    step: f64,
) -> Result<GeneratorTrajectory> {
    let grid = generator_grid(problem, &s_start, t_start, t_end, step)?;
    let mut t_grid = Vec::with_capacity(grid.len());
    let mut s_matrices = Vec::with_capacity(grid.len());
    t_grid.push(t_start);
    s_matrices.push(s_start.clone());
    march(problem, &grid, s_start, |t, s| {
        t_grid.push(t);
        s_matrices.push(s.clone());
    })?;
    Ok(GeneratorTrajectory {
        grid,
        t_grid,
        s_matrices,
    })
}

/// `S(t_end)` from `S(t_start) = s_start` without keeping the trajectory.
pub fn propagate_generator(
    problem: &TdftProblem,
    s_start: ComplexMatrix,
    t_start: f64,
    t_end: f64,
    step: f64,
) -> Result<ComplexMatrix> {
    let grid = generator_grid(problem, &s_start, t_start, t_end, step)?;
    march(problem, &grid, s_start, |_, _| {})
}

fn generator_grid(
    problem: &TdftProblem,
    s_start: &ComplexMatrix,
    t_start: f64,
    t_end: f64,
    step: f64,
) -> Result<UniformGrid> {
    if !(t_end > t_start) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            reason: format!("t_end {t_end} must exceed t_start {t_start}"),
        });
    }
    let n = problem.dim();
    if s_start.rows() != n || s_start.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial generator is {}x{} but the spectrum has {n} levels",
            s_start.rows(),
            s_start.cols()
        )));
    }
    problem.check_step(step)?;
    UniformGrid::covering(t_start, t_end, step)
}

fn march(
    problem: &TdftProblem,
    grid: &UniformGrid,
    mut s: ComplexMatrix,
    mut visit: impl FnMut(f64, &ComplexMatrix),
) -> Result<ComplexMatrix> {
    let h = grid.step;
    let n = problem.dim();
    let mut h1_now = problem.h1_at(grid.start)?;
    for i in 0..grid.intervals {
        let t = grid.at(i);
        let h1_mid = problem.h1_at(t + 0.5 * h)?;
        let h1_next = problem.h1_at(grid.at(i + 1))?;
        let k1 = problem.generator_rate(&h1_now, &s);
        let k2 = problem.generator_rate(&h1_mid, &axpy(&s, 0.5 * h, &k1));
        let k3 = problem.generator_rate(&h1_mid, &axpy(&s, 0.5 * h, &k2));
        let k4 = problem.generator_rate(&h1_next, &axpy(&s, h, &k3));
        s = ComplexMatrix::from_fn(n, n, |m, k| {
            s[(m, k)] + (k1[(m, k)] + k2[(m, k)] * 2.0 + k3[(m, k)] * 2.0 + k4[(m, k)]) * (h / 6.0)
        });
        h1_now = h1_next;
        visit(grid.at(i + 1), &s);
    }
    Ok(s)
}

fn axpy(y: &ComplexMatrix, a: f64, x: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(y.rows(), y.cols(), |i, j| y[(i, j)] + x[(i, j)] * a)
}

/// Largest Frobenius norm of `H1 + [H0, S] - i dS/dt` over interior grid
/// points, with `dS/dt` from central differences.
pub fn generator_residual(problem: &TdftProblem, traj: &GeneratorTrajectory) -> Result<f64> {
    if traj.len() < 3 {
        return Err(Error::InvalidParameter {
            name: "trajectory",
            reason: format!("need at least 3 grid points, got {}", traj.len()),
        });
    }
    let n = problem.dim();
    let h = traj.step();
    let mut worst: f64 = 0.0;
    for i in 1..traj.len() - 1 {
        let h1 = problem.h1_at(traj.t_grid[i])?;
        let s = &traj.s_matrices[i];
        let (prev, next) = (&traj.s_matrices[i - 1], &traj.s_matrices[i + 1]);
        let residual = ComplexMatrix::from_fn(n, n, |m, k| {
            let ds = (next[(m, k)] - prev[(m, k)]) / (2.0 * h);
            h1[(m, k)] + s[(m, k)] * problem.gap(m, k) - I * ds
        });
        worst = worst.max(residual.frobenius_norm());
    }
    Ok(worst)
}

/// `H0 + [H1(t), S(t)] / 2` with `S` linearly interpolated.
pub fn effective_hamiltonian(
    problem: &TdftProblem,
    traj: &GeneratorTrajectory,
    t: f64,
) -> Result<ComplexMatrix> {
    let s = traj.s_at(t)?;
    let h1 = problem.h1_at(t)?;
    let half_comm = commutator(&h1, &s)?.scale_real(0.5);
    Ok(&problem.h0() + &half_comm)
}

/// Expansion coefficients `C_m^(order)(t)` for a system started in `|k>`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationCoefficients {
    pub order: u8,
    pub initial_index: usize,
    pub t: f64,
    pub c_values: Vec<C64>,
}

impl PerturbationCoefficients {
    /// `C_m^(0) = delta_mk`.
    pub fn zeroth(dim: usize, initial_index: usize, t: f64) -> Result<Self> {
        if initial_index >= dim {
            return Err(Error::InvalidIndex {
                index: initial_index,
                dim,
            });
        }
        let mut c_values = vec![ZERO; dim];
        c_values[initial_index] = C64::new(1.0, 0.0);
        Ok(Self {
            order: 0,
            initial_index,
            t,
            c_values,
        })
    }

    /// Largest elementwise difference to another coefficient set.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.c_values
            .iter()
            .zip(&other.c_values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

fn phase(omega: f64, t: f64) -> C64 {
    C64::from_polar(1.0, omega * t)
}

fn check_query(
    problem: &TdftProblem,
    initial_index: usize,
    t: f64,
    step: f64,
    origin: f64,
) -> Result<UniformGrid> {
    problem.check_index(initial_index)?;
    problem.check_step(step)?;
    if !(t >= origin) {
        return Err(Error::OutOfRange {
            t,
            start: origin,
            end: f64::INFINITY,
        });
    }
    UniformGrid::covering_even(origin, t, step)
}

/// First-order coefficients
/// `C_m^(1)(t) = -i int_0^t exp(i E_mk t') H1_mk(t') dt'` by composite Simpson.
pub fn perturbation_order1(
    problem: &TdftProblem,
    initial_index: usize,
    t: f64,
    step: f64,
) -> Result<PerturbationCoefficients> {
    let grid = check_query(problem, initial_index, t, step, 0.0)?;
    let k = initial_index;
    let n = problem.dim();
    let mut samples: Vec<Vec<C64>> = vec![Vec::with_capacity(grid.len()); n];
    for tp in grid.points() {
        let h1 = problem.h1_at(tp)?;
        for (m, col) in samples.iter_mut().enumerate() {
            col.push(phase(problem.gap(m, k), tp) * h1[(m, k)]);
        }
    }
    let c_values = samples
        .iter()
        .map(|col| -I * simpson(col, grid.step))
        .collect();
    Ok(PerturbationCoefficients {
        order: 1,
        initial_index,
        t,
        c_values,
    })
}

/// Second-order coefficients
/// `C_m^(2)(t) = -sum_n int_0^t dt' e^{i E_mn t'} H1_mn(t') int_0^t' dt'' e^{i E_nk t''} H1_nk(t'')`.
///
/// The inner integral is tabulated once at every node with a cumulative
/// Simpson rule; the outer one is composite Simpson.
pub fn perturbation_order2(
    problem: &TdftProblem,
    initial_index: usize,
    t: f64,
    step: f64,
) -> Result<PerturbationCoefficients> {
    let grid = check_query(problem, initial_index, t, step, 0.0)?;
    let k = initial_index;
    let n = problem.dim();

    let mut inner_samples: Vec<Vec<C64>> = vec![Vec::with_capacity(grid.len()); n];
    for tp in grid.points() {
        let h1 = problem.h1_at(tp)?;
        for (j, col) in inner_samples.iter_mut().enumerate() {
            col.push(phase(problem.gap(j, k), tp) * h1[(j, k)]);
        }
    }
    let inner: Vec<Vec<C64>> = inner_samples
        .iter()
        .map(|col| cumulative_simpson(col, grid.step))
        .collect();

    let mut outer_samples: Vec<Vec<C64>> = vec![Vec::with_capacity(grid.len()); n];
    for (i, tp) in grid.points().enumerate() {
        let h1 = problem.h1_at(tp)?;
        for (m, col) in outer_samples.iter_mut().enumerate() {
            let value: C64 = (0..n)
                .map(|j| phase(problem.gap(m, j), tp) * h1[(m, j)] * inner[j][i])
                .sum();
            col.push(value);
        }
    }
    let c_values = outer_samples
        .iter()
        .map(|col| -simpson(col, grid.step))
        .collect();
    Ok(PerturbationCoefficients {
        order: 2,
        initial_index,
        t,
        c_values,
    })
}

/// First-order coefficients read off the generator:
/// `|psi^(1)> = S |psi^(0)>`, i.e. `C_m^(1)(t) = e^{i E_mk t} S_mk(t)`.
pub fn tdft_order1(
    problem: &TdftProblem,
    traj: &GeneratorTrajectory,
    initial_index: usize,
    t: f64,
) -> Result<PerturbationCoefficients> {
    problem.check_index(initial_index)?;
    let s = traj.s_at_hermite(problem, t)?;
    let k = initial_index;
    let c_values = (0..problem.dim())
        .map(|m| phase(problem.gap(m, k), t) * s[(m, k)])
        .collect();
    Ok(PerturbationCoefficients {
        order: 1,
        initial_index,
        t,
        c_values,
    })
}

/// Second-order coefficients through the transformation:
/// `C_m^(2) = C'_m^(2) + e^{i E_mk t} (S^2)_mk / 2` with
/// `C'_m^(2)(t) = -(i/2) int e^{i E_mk t'} [H1(t'), S(t')]_mk dt'`.
///
/// The lower limit of the integral is the start of the trajectory, where
/// `S = 0`; the phase factors use absolute time.
pub fn tdft_order2(
    problem: &TdftProblem,
    traj: &GeneratorTrajectory,
    initial_index: usize,
    t: f64,
    step: f64,
) -> Result<PerturbationCoefficients> {
    traj.check_range(t)?;
    let grid = check_query(problem, initial_index, t, step, traj.start())?;
    let k = initial_index;
    let n = problem.dim();
    let mut samples: Vec<Vec<C64>> = vec![Vec::with_capacity(grid.len()); n];
    for tp in grid.points() {
        let h1 = problem.h1_at(tp)?;
        let s = traj.s_at_hermite(problem, tp.min(traj.end()))?;
        for (m, col) in samples.iter_mut().enumerate() {
            // [H1, S]_mk
            let comm: C64 = (0..n)
                .map(|j| h1[(m, j)] * s[(j, k)] - s[(m, j)] * h1[(j, k)])
                .sum();
            col.push(phase(problem.gap(m, k), tp) * comm);
        }
    }
    let s_end = traj.s_at_hermite(problem, t)?;
    let c_values = samples
        .iter()
        .enumerate()
        .map(|(m, col)| {
            let transformed = -0.5 * I * simpson(col, grid.step);
            let s_sq: C64 = (0..n).map(|j| s_end[(m, j)] * s_end[(j, k)]).sum();
            transformed + 0.5 * phase(problem.gap(m, k), t) * s_sq
        })
        .collect();
    Ok(PerturbationCoefficients {
        order: 2,
        initial_index,
        t,
        c_values,
    })
}

/// Random smooth test problem: `dim` levels with gaps in `[0.5, 2]`, and
/// `H1(t) = a sin^2(π t / T) (P + sin(ν t + φ) Q)` on `[0, T]` with random
/// hermitian `P`, `Q` normalized so that `||H1(t)|| <= a`, where
/// `a = amplitude_ratio · min |E_mn|`. Returns the problem and `T`.
pub fn random_pulsed_problem<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    amplitude_ratio: f64,
) -> Result<(TdftProblem, f64)> {
    if dim < 2 {
        return Err(Error::InvalidParameter {
            name: "dim",
            reason: format!("need at least 2 levels, got {dim}"),
        });
    }
    let mut energies = vec![rng.gen_range(-1.0..1.0)];
    for _ in 1..dim {
        let last = energies[energies.len() - 1];
        energies.push(last + rng.gen_range(0.5..2.0));
    }
    let min_gap = energies
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let mut random_hermitian = || {
        let mut m = ComplexMatrix::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in i + 1..dim {
                let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    };
    let (p, q) = (random_hermitian(), random_hermitian());
    let amplitude = amplitude_ratio * min_gap / (p.frobenius_norm() + q.frobenius_norm());
    let (p, q) = (p.scale_real(amplitude), q.scale_real(amplitude));
    let duration = rng.gen_range(10.0..40.0) / min_gap;
    let nu = rng.gen_range(0.0..0.5) * min_gap;
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    let problem = TdftProblem::new(
        energies,
        Arc::new(move |t| {
            let envelope = (std::f64::consts::PI * t / duration).sin().powi(2);
            let wobble = (nu * t + phi).sin();
            ComplexMatrix::from_fn(p.rows(), p.cols(), |i, j| {
                (p[(i, j)] + q[(i, j)] * wobble) * envelope
            })
        }),
    )?;
    Ok((problem, duration))
}

/// Largest elementwise difference between the two routes to `C^(2)`, over
/// every initial level and the times `t_end / 2` and `t_end`.
pub fn second_order_discrepancy(problem: &TdftProblem, t_end: f64, step: f64) -> Result<f64> {
    let traj = solve_generator(problem, 0.0, t_end, step)?;
    let mut worst: f64 = 0.0;
    for k in 0..problem.dim() {
        for t in [0.5 * t_end, t_end] {
            let direct = perturbation_order2(problem, k, t, step)?;
            let via_generator = tdft_order2(problem, &traj, k, t, step)?;
            worst = worst.max(direct.max_abs_diff(&via_generator));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level_constant(delta: f64, v: C64) -> TdftProblem {
        TdftProblem::new(
            vec![delta, 0.0],
            Arc::new(move |_| ComplexMatrix::from_rows(&[&[ZERO, v], &[v.conj(), ZERO]])),
        )
        .unwrap()
    }

    #[test]
    fn zero_perturbation_gives_zero_generator() {
        let p = TdftProblem::unperturbed(vec![1.0, -0.5, 2.0]).unwrap();
        let traj = solve_generator(&p, 0.0, 5.0, 0.01).unwrap();
        assert!(traj.s_matrices().iter().all(|s| s.max_abs() == 0.0));
        assert_eq!(generator_residual(&p, &traj).unwrap(), 0.0);
        let heff = effective_hamiltonian(&p, &traj, 2.5).unwrap();
        assert_eq!(heff, p.h0());
    }

    #[test]
    fn constant_coupling_matches_closed_form() {
        let delta = 2.0;
        let v = C64::new(0.05, -0.02);
        let p = two_level_constant(delta, v);
        let traj = solve_generator(&p, 0.0, 10.0, 0.01 / delta).unwrap();
        for (t, s) in traj.t_grid().iter().zip(traj.s_matrices()).step_by(97) {
            // S_01 = -(H1_01 / E_01)(1 - e^{-i E_01 t})
            let exact = -(v / delta) * (1.0 - C64::from_polar(1.0, -delta * t));
            assert!((s[(0, 1)] - exact).norm() < 1e-9, "t = {t}");
            assert!((s[(1, 0)] + s[(0, 1)].conj()).norm() < 1e-15);
        }
    }

    #[test]
    fn residual_of_zero_generator_is_perturbation_norm() {
        let v = C64::new(0.3, 0.1);
        let p = two_level_constant(1.0, v);
        let traj = GeneratorTrajectory {
            grid: UniformGrid::covering(0.0, 1.0, 0.05).unwrap(),
            t_grid: UniformGrid::covering(0.0, 1.0, 0.05)
                .unwrap()
                .points()
                .collect(),
            s_matrices: vec![ComplexMatrix::zeros(2, 2); 21],
        };
        let expected = (2.0 * v.norm_sqr()).sqrt();
        assert!((generator_residual(&p, &traj).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn step_bound_is_enforced() {
        let p = two_level_constant(10.0, C64::new(0.1, 0.0));
        let err = solve_generator(&p, 0.0, 1.0, 0.011).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }), "{err}");
        assert!(err.to_string().contains("oscillation bound"));
        assert!(solve_generator(&p, 0.0, 1.0, 0.01).is_ok());
        assert!(perturbation_order1(&p, 0, 1.0, 0.02).is_err());
    }

    #[test]
    fn non_hermitian_perturbation_is_rejected() {
        let bad: PerturbationFn = Arc::new(|t| {
            let mut m = ComplexMatrix::zeros(2, 2);
            m[(0, 1)] = C64::new(1.0, 0.0);
            if t > 0.5 {
                m[(1, 0)] = C64::new(0.5, 0.0);
            } else {
                m[(1, 0)] = C64::new(1.0, 0.0);
            }
            m
        });
        let p = TdftProblem::new(vec![1.0, 0.0], bad).unwrap();
        assert!(matches!(
            solve_generator(&p, 0.0, 1.0, 0.01),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn effective_hamiltonian_rejects_out_of_range() {
        let p = two_level_constant(1.0, C64::new(0.1, 0.0));
        let traj = solve_generator(&p, 0.0, 1.0, 0.01).unwrap();
        assert!(matches!(
            effective_hamiltonian(&p, &traj, 1.5),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn stationary_single_atom_shift() {
        // Basis {|e,0>, |g,1>}, coupling g, detuning delta. After the switch-on
        // transient is averaged out the diagonal shifts are +-g^2/delta.
        let (g, delta) = (0.01, 1.0);
        let ramp = 100.0;
        let p = TdftProblem::new(
            vec![delta, 0.0],
            Arc::new(move |t: f64| {
                let env = if t < ramp {
                    (0.5 * std::f64::consts::PI * t / ramp).sin().powi(2)
                } else {
                    1.0
                };
                let c = C64::new(g * env, 0.0);
                ComplexMatrix::from_rows(&[&[ZERO, c], &[c, ZERO]])
            }),
        )
        .unwrap();
        let traj = solve_generator(&p, 0.0, 130.0, 0.01).unwrap();
        let heff = effective_hamiltonian(&p, &traj, 130.0).unwrap();
        let shift = g * g / delta;
        assert!((heff[(0, 0)].re - (delta + shift)).abs() < 1e-3 * shift);
        assert!((heff[(1, 1)].re + shift).abs() < 1e-3 * shift);
        assert!(heff.is_hermitian(1e-9));
    }

    #[test]
    fn first_order_constant_coupling() {
        let delta = 1.5;
        let v = C64::new(0.02, 0.01);
        let p = two_level_constant(delta, v);
        let t = 7.3;
        let c1 = perturbation_order1(&p, 1, t, 0.01).unwrap();
        // C_0 = -i int_0^t e^{i delta t'} v dt' = -(v/delta)(e^{i delta t} - 1)
        let exact = -(v / delta) * (C64::from_polar(1.0, delta * t) - 1.0);
        assert!((c1.c_values[0] - exact).norm() < 1e-11);
        assert_eq!(c1.c_values[1], ZERO);
    }

    #[test]
    fn second_order_constant_coupling() {
        let delta = 1.5;
        let v = C64::new(0.02, 0.01);
        let p = two_level_constant(delta, v);
        let t = 7.3;
        let c2 = perturbation_order2(&p, 1, t, 0.01).unwrap();
        // Only the k -> 0 -> k path contributes:
        // C_1 = -|v|^2 int_0^t e^{-i d t'} (e^{i d t'} - 1)/(i d) dt'
        //     = -|v|^2/(i d) [t - (1 - e^{-i d t})/(i d)]
        let d = delta;
        let id = C64::new(0.0, d);
        let exact = -v.norm_sqr() / id * (t - (1.0 - C64::from_polar(1.0, -d * t)) / id);
        assert!(
            (c2.c_values[1] - exact).norm() < 1e-10,
            "{:?} vs {exact}",
            c2.c_values[1]
        );
        assert!(c2.c_values[0].norm() < 1e-15);
    }

    #[test]
    fn zero_perturbation_gives_zero_coefficients() {
        let p = TdftProblem::unperturbed(vec![0.0, 1.0]).unwrap();
        let traj = solve_generator(&p, 0.0, 3.0, 0.01).unwrap();
        for c in [
            perturbation_order1(&p, 0, 3.0, 0.01).unwrap(),
            perturbation_order2(&p, 0, 3.0, 0.01).unwrap(),
            tdft_order2(&p, &traj, 0, 3.0, 0.01).unwrap(),
        ] {
            assert!(c.c_values.iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn invalid_initial_index() {
        let p = TdftProblem::unperturbed(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            perturbation_order1(&p, 2, 1.0, 0.01),
            Err(Error::InvalidIndex { .. })
        ));
        assert!(matches!(
            perturbation_order2(&p, 5, 1.0, 0.01),
            Err(Error::InvalidIndex { .. })
        ));
        assert!(PerturbationCoefficients::zeroth(2, 2, 0.0).is_err());
    }
}

//! Two identical two-level atoms crossing a single-mode cavity one after the
//! other with the same velocity.
//!
//! Atom `j` sits at `z_j(t) = z_j0 + v t` and couples to the mode with the
//! Gaussian profile `g_j(t) = g0 exp(-z_j(t)^2 / d^2)`. Eliminating the
//! photon leaves the atom-atom exchange coupling `f(t)`; in the dispersive,
//! adiabatic limit `f = g1 g2 / Δ` and the `{|ge>, |eg>}` block rotates by
//! `θ(t) = ∫ f dt`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{cumulative_simpson, simpson, UniformGrid};
use crate::quantum::{
    binary_entropy, partial_trace_first, von_neumann_entropy, ComplexMatrix, DensityMatrix,
    StateVector, I, ZERO,
};

/// Largest `|g0 / Δ|` accepted without the unsafe override.
pub const MAX_COUPLING_RATIO: f64 = 0.1;
/// Atoms must start at least this many half-widths from the cavity centre.
pub const MIN_START_OFFSET: f64 = 5.0;
/// Default half-window, in units of `d`, treated as "far outside".
pub const DEFAULT_WINDOW_SIGMAS: f64 = 6.0;
/// `x_j` integration needs `step <= X_STEP_LIMIT / |Δ|`.
pub const X_STEP_LIMIT: f64 = 0.02;
/// Couplings at the start of an integration window must be below this fraction of `g0`.
pub const NEGLIGIBLE_COUPLING: f64 = 1e-10;
/// Contour index shown in the figure of maximal-entanglement lines.
pub const MAX_FIGURE_CONTOUR: u32 = 6;

const THETA_QUADRATURE_POINTS_PER_WIDTH: f64 = 400.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Atom {
    First,
    Second,
}

/// Physical constants of one transit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// vacuum Rabi frequency (rad/μs)
    pub g0: f64,
    /// detuning ω0 − ω (rad/μs)
    pub delta: f64,
    /// mode half-width (μm)
    pub d: f64,
    /// atomic velocity (μm/μs)
    pub v: f64,
    pub z1_0: f64,
    pub z2_0: f64,
    /// mean intracavity photon number
    pub n_p: f64,
}

impl CavityParams {
    /// Validated parameters in the dispersive regime `|g0/Δ| <= 0.1`.
    pub fn new(
        g0: f64,
        delta: f64,
        d: f64,
        v: f64,
        z1_0: f64,
        z2_0: f64,
        n_p: f64,
    ) -> Result<Self> {
        let p = Self {
            g0,
            delta,
            d,
            v,
            z1_0,
            z2_0,
            n_p,
        };
        p.validate(false)?;
        Ok(p)
    }

    /// As [`new`](Self::new) but without the large-detuning check.
    pub fn new_unsafe(
        g0: f64,
        delta: f64,
        d: f64,
        v: f64,
        z1_0: f64,
        z2_0: f64,
        n_p: f64,
    ) -> Result<Self> {
        let p = Self {
            g0,
            delta,
            d,
            v,
            z1_0,
            z2_0,
            n_p,
        };
        p.validate(true)?;
        Ok(p)
    }

    /// The worked example: g0 = 100 MHz, Δ = 10^4 MHz, d = 30 μm, v = 10 m/s,
    /// both atoms starting 5d before the centre, no photons.
    pub fn reference() -> Self {
        Self {
            g0: 100.0,
            delta: 1.0e4,
            d: 30.0,
            v: 10.0,
            z1_0: -150.0,
            z2_0: -150.0,
            n_p: 0.0,
        }
    }

    /// Parameters for a reduced velocity (units `g0^2 d / |Δ|`) and reduced
    /// position difference `z0 = z1_0 − z2_0` (units `d`). The leading atom
    /// starts `5d` before the centre and the trailing one `|z0|` behind it.
    pub fn from_reduced(
        g0: f64,
        delta: f64,
        d: f64,
        n_p: f64,
        v_reduced: f64,
        z0_reduced: f64,
        allow_unsafe: bool,
    ) -> Result<Self> {
        let unit = g0 * g0 * d / delta.abs();
        let v = if unit > 0.0 {
            v_reduced * unit
        } else {
            v_reduced
        };
        let lead = -MIN_START_OFFSET * d;
        let sep = z0_reduced * d;
        let (z1_0, z2_0) = if sep >= 0.0 {
            (lead, lead - sep)
        } else {
            (lead + sep, lead)
        };
        let p = Self {
            g0,
            delta,
            d,
            v,
            z1_0,
            z2_0,
            n_p,
        };
        p.validate(allow_unsafe)?;
        Ok(p)
    }

    pub fn validate(&self, allow_unsafe: bool) -> Result<()> {
        let finite = [
            self.g0, self.delta, self.d, self.v, self.z1_0, self.z2_0, self.n_p,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(invalid("params", "all parameters must be finite".into()));
        }
        if self.delta == 0.0 {
            return Err(invalid("delta", "detuning must be nonzero".into()));
        }
        if !(self.d > 0.0) {
            return Err(invalid(
                "d",
                format!("half-width must be positive, got {}", self.d),
            ));
        }
        if !(self.v > 0.0) {
            return Err(invalid(
                "v",
                format!("velocity must be positive, got {}", self.v),
            ));
        }
        if self.g0 < 0.0 {
            return Err(invalid(
                "g0",
                format!("coupling must be non-negative, got {}", self.g0),
            ));
        }
        if self.n_p < 0.0 {
            return Err(invalid(
                "n_p",
                format!("photon number must be non-negative, got {}", self.n_p),
            ));
        }
        for (name, z) in [("z1_0", self.z1_0), ("z2_0", self.z2_0)] {
            if z.abs() < MIN_START_OFFSET * self.d * (1.0 - 1e-12) {
                return Err(invalid(
                    name,
                    format!("|{z}| is closer than {MIN_START_OFFSET} d to the cavity centre"),
                ));
            }
        }
        let ratio = (self.g0 / self.delta).abs();
        if !allow_unsafe && ratio > MAX_COUPLING_RATIO {
            return Err(invalid(
                "g0",
                format!("|g0/delta| = {ratio:.3e} exceeds {MAX_COUPLING_RATIO}; large-detuning condition violated"),
            ));
        }
        Ok(())
    }

    pub fn initial_position(&self, atom: Atom) -> f64 {
        match atom {
            Atom::First => self.z1_0,
            Atom::Second => self.z2_0,
        }
    }

    /// `z0 = z1_0 − z2_0`.
    pub fn separation(&self) -> f64 {
        self.z1_0 - self.z2_0
    }

    /// Velocity unit of the entanglement landscape, `g0^2 d / |Δ|`.
    pub fn velocity_unit(&self) -> f64 {
        self.g0 * self.g0 * self.d / self.delta.abs()
    }

    pub fn reduced_velocity(&self) -> f64 {
        self.v / self.velocity_unit()
    }

    pub fn reduced_separation(&self) -> f64 {
        self.separation() / self.d
    }

    /// Times at which both atoms are at least `sigmas * d` before / after the centre.
    pub fn transit_window(&self, sigmas: f64) -> (f64, f64) {
        let lead = self.z1_0.max(self.z2_0);
        let trail = self.z1_0.min(self.z2_0);
        (
            (-sigmas * self.d - lead) / self.v,
            (sigmas * self.d - trail) / self.v,
        )
    }

    pub fn with_coupling(&self, g0: f64) -> Self {
        Self { g0, ..*self }
    }

    /// Largest step allowed for the `x_j` and exact integrations.
    pub fn max_step(&self) -> f64 {
        X_STEP_LIMIT / self.delta.abs()
    }
}

fn invalid(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}

/// `g_j(t) = g0 exp(-(z_j0 + v t)^2 / d^2)`.
pub fn coupling(params: &CavityParams, t: f64, atom: Atom) -> f64 {
    let z = params.initial_position(atom) + params.v * t;
    params.g0 * (-(z * z) / (params.d * params.d)).exp()
}

/// `x_j(t)` sampled on a grid, with the adiabatic reference `-g_j(t)/Δ`.
#[derive(Clone, Debug)]
pub struct XTrajectory {
    pub t: Vec<f64>,
    pub x1: Vec<C64>,
    pub x2: Vec<C64>,
}

impl XTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn x(&self, atom: Atom) -> &[C64] {
        match atom {
            Atom::First => &self.x1,
            Atom::Second => &self.x2,
        }
    }

    /// `max_t |x_j(t) + g_j(t)/Δ|` over the recorded samples.
    pub fn max_adiabatic_deviation(&self, params: &CavityParams, atom: Atom) -> f64 {
        self.t
            .iter()
            .zip(self.x(atom))
            .map(|(&t, x)| (x - adiabatic_x(params, t, atom)).norm())
            .fold(0.0, f64::max)
    }
}

/// `x_j ≈ -g_j(t)/Δ`.
pub fn adiabatic_x(params: &CavityParams, t: f64, atom: Atom) -> C64 {
    C64::new(-coupling(params, t, atom) / params.delta, 0.0)
}

/// Integrates `dx_j/dt = -i (g_j(t) + Δ x_j)` with RK4 from `x_j = 0`,
/// storing every `record_every`-th grid point (and always the last).
pub fn solve_x(
    params: &CavityParams,
    grid: &UniformGrid,
    record_every: usize,
) -> Result<XTrajectory> {
    let bound = params.max_step();
    if grid.step > bound {
        return Err(Error::StepTooLarge {
            step: grid.step,
            bound,
            frequency: params.delta.abs(),
        });
    }
    let t0 = grid.start;
    for atom in [Atom::First, Atom::Second] {
        if coupling(params, t0, atom) > NEGLIGIBLE_COUPLING * params.g0 {
            return Err(invalid(
                "t_start",
                format!("coupling of {atom:?} atom at t = {t0} is not negligible; start the grid further out"),
            ));
        }
    }
    let stride = record_every.max(1);
    let h = grid.step;
    let delta = params.delta;
    let rate = |g: f64, x: C64| -I * (g + delta * x);
    let mut out = XTrajectory {
        t: vec![t0],
        x1: vec![ZERO],
        x2: vec![ZERO],
    };
    let mut x = [ZERO, ZERO];
    let atoms = [Atom::First, Atom::Second];
    let mut g_now = atoms.map(|a| coupling(params, t0, a));
    for i in 0..grid.intervals {
        let t = grid.at(i);
        let t_next = grid.at(i + 1);
        let g_mid = atoms.map(|a| coupling(params, t + 0.5 * h, a));
        let g_next = atoms.map(|a| coupling(params, t_next, a));
        for j in 0..2 {
            let k1 = rate(g_now[j], x[j]);
            let k2 = rate(g_mid[j], x[j] + k1 * (0.5 * h));
            let k3 = rate(g_mid[j], x[j] + k2 * (0.5 * h));
            let k4 = rate(g_next[j], x[j] + k3 * h);
            x[j] += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        g_now = g_next;
        if (i + 1) % stride == 0 || i + 1 == grid.intervals {
            out.t.push(t_next);
            out.x1.push(x[0]);
            out.x2.push(x[1]);
        }
    }
    Ok(out)
}

/// Which form of the effective coefficients to evaluate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EffectiveMode {
    /// Adiabatic, dispersive closed forms in terms of `g_j(t)` only.
    Simplified,
    /// General forms in terms of the generator coefficients `x_j(t)`.
    Full { x1: C64, x2: C64 },
}

/// Stark-shifted detuning of atom `j`.
///
/// Full: `Δ_j = Δ − (g_j* x_j + g_j x_j*)(1 + 2 n_p)`.
/// Simplified: `Δ_j = Δ + 2 (1 + 2 n_p) g_j^2 / Δ`.
pub fn effective_detuning(params: &CavityParams, t: f64, atom: Atom, mode: EffectiveMode) -> f64 {
    let g = coupling(params, t, atom);
    let photon_factor = 1.0 + 2.0 * params.n_p;
    match mode {
        EffectiveMode::Simplified => params.delta + 2.0 * photon_factor * g * g / params.delta,
        EffectiveMode::Full { x1, x2 } => {
            let x = match atom {
                Atom::First => x1,
                Atom::Second => x2,
            };
            params.delta - 2.0 * (g * x.conj()).re * photon_factor
        }
    }
}

/// Atom-atom exchange coupling.
///
/// Full: `f = −(g1* x2 + g2 x1*) / 2`. Simplified: `f = g1 g2 / Δ`.
pub fn effective_coupling(params: &CavityParams, t: f64, mode: EffectiveMode) -> C64 {
    let g1 = coupling(params, t, Atom::First);
    let g2 = coupling(params, t, Atom::Second);
    match mode {
        EffectiveMode::Simplified => C64::new(g1 * g2 / params.delta, 0.0),
        EffectiveMode::Full { x1, x2 } => -0.5 * (g1 * x2 + g2 * x1.conj()),
    }
}

/// Effective two-atom Hamiltonian `Δ1 σ1^z + Δ2 σ2^z + f σ1^- σ2^+ + f* σ1^+ σ2^-`
/// (with `σ^z = |e><e|`) in the basis `{|gg>, |ge>, |eg>, |ee>}`.
pub fn effective_atomic_hamiltonian(
    params: &CavityParams,
    t: f64,
    mode: EffectiveMode,
) -> ComplexMatrix {
    let d1 = effective_detuning(params, t, Atom::First, mode);
    let d2 = effective_detuning(params, t, Atom::Second, mode);
    let f = effective_coupling(params, t, mode);
    let mut h = ComplexMatrix::from_real_diag(&[0.0, d2, d1, d1 + d2]);
    // σ1^- σ2^+ |eg> = |ge>
    h[(1, 2)] = f;
    h[(2, 1)] = f.conj();
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMethod {
    ClosedForm,
    Quadrature,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaResult {
    pub theta: f64,
    pub method: ThetaMethod,
}

/// `θ(+∞) = sqrt(π/2) g0^2 d / (v Δ) exp(-z0^2 / (2 d^2))`.
pub fn theta_closed_form(params: &CavityParams) -> f64 {
    let z0 = params.separation();
    (PI / 2.0).sqrt() * params.g0 * params.g0 * params.d / (params.v * params.delta)
        * (-(z0 * z0) / (2.0 * params.d * params.d)).exp()
}

/// Accumulated rotation angle after both atoms have left the cavity.
pub fn theta_infinity(params: &CavityParams, method: ThetaMethod) -> ThetaResult {
    let theta = match method {
        ThetaMethod::ClosedForm => theta_closed_form(params),
        ThetaMethod::Quadrature => {
            let (t0, t1) = params.transit_window(DEFAULT_WINDOW_SIGMAS);
            let grid = theta_grid(params, t0, t1);
            let samples: Vec<f64> = grid
                .points()
                .map(|t| effective_coupling(params, t, EffectiveMode::Simplified).re)
                .collect();
            simpson(&samples, grid.step)
        }
    };
    ThetaResult { theta, method }
}

fn theta_grid(params: &CavityParams, t0: f64, t1: f64) -> UniformGrid {
    let max_step = params.d / (params.v * THETA_QUADRATURE_POINTS_PER_WIDTH);
    UniformGrid::covering_even(t0, t1, max_step).expect("transit window is ordered")
}

/// `θ(t) = ∫_{-∞}^t f dt'` in closed form via the error function.
pub fn theta_at(params: &CavityParams, t: f64) -> f64 {
    let centre = 0.5 * (params.z1_0 + params.z2_0) + params.v * t;
    0.5 * theta_closed_form(params) * (1.0 + libm::erf(2f64.sqrt() * centre / params.d))
}

/// `θ(t)` tabulated on `times` (uniformly spaced, starting where `f` is
/// negligible) by cumulative Simpson quadrature of `f = g1 g2 / Δ`.
pub fn theta_cumulative(params: &CavityParams, times: &[f64]) -> Vec<f64> {
    if times.len() < 2 {
        return vec![0.0; times.len()];
    }
    let step = times[1] - times[0];
    let samples: Vec<f64> = times
        .iter()
        .map(|&t| effective_coupling(params, t, EffectiveMode::Simplified).re)
        .collect();
    cumulative_simpson(&samples, step)
}

/// Amplitudes on `{|gg>, |ge>, |eg>, |ee>}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedState {
    pub c_gg: C64,
    pub c_ge: C64,
    pub c_eg: C64,
    pub c_ee: C64,
}

impl ReducedState {
    /// `|ge>`: atom 1 in the ground state, atom 2 excited.
    pub fn ge() -> Self {
        Self {
            c_gg: ZERO,
            c_ge: C64::new(1.0, 0.0),
            c_eg: ZERO,
            c_ee: ZERO,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c_gg.norm_sqr() + self.c_ge.norm_sqr() + self.c_eg.norm_sqr() + self.c_ee.norm_sqr()
    }

    pub fn to_state_vector(&self) -> StateVector {
        StateVector::new(vec![self.c_gg, self.c_ge, self.c_eg, self.c_ee])
    }

    /// Exchanges the roles of the two atoms.
    pub fn swap_atoms(&self) -> Self {
        Self {
            c_gg: self.c_gg,
            c_ge: self.c_eg,
            c_eg: self.c_ge,
            c_ee: self.c_ee,
        }
    }

    /// Entanglement entropy of atom 1 with atom 2 (bits).
    pub fn entanglement(&self) -> Result<f64> {
        let rho = DensityMatrix::from_pure(&self.to_state_vector())?;
        von_neumann_entropy(&partial_trace_first(&rho, 2, 2)?)
    }
}

/// Rotation of the `{|ge>, |eg>}` block by `θ` under `f (σ1^- σ2^+ + σ1^+ σ2^-)`.
pub fn evolve_reduced(initial: &ReducedState, theta: f64) -> Result<ReducedState> {
    let norm = initial.norm_sqr();
    if (norm - 1.0).abs() > crate::quantum::NORM_TOL {
        return Err(Error::Unnormalized(norm));
    }
    let (s, c) = theta.sin_cos();
    Ok(ReducedState {
        c_gg: initial.c_gg,
        c_ge: initial.c_ge * c - I * initial.c_eg * s,
        c_eg: -I * initial.c_ge * s + initial.c_eg * c,
        c_ee: initial.c_ee,
    })
}

/// Entropy of `cos θ |ge> − i sin θ |eg>`, i.e. the binary entropy of `cos^2 θ`.
pub fn entanglement_from_theta(theta: f64) -> f64 {
    binary_entropy(theta.cos().powi(2))
}

/// Final entanglement entropy for atoms prepared in `|ge>`.
pub fn entanglement_final(params: &CavityParams) -> f64 {
    entanglement_from_theta(theta_closed_form(params))
}

/// Reduced velocity on the `n`-th maximal-entanglement line,
/// `θ(+∞) = (2n+1) π/4`, at reduced separation `z0`:
/// `v = sqrt(π/2) · 4/((2n+1)π) · exp(−z0^2/2)`.
pub fn contour_velocity(n: u32, z0_reduced: f64, allow_beyond_figure: bool) -> Result<f64> {
    if n > MAX_FIGURE_CONTOUR && !allow_beyond_figure {
        return Err(invalid(
            "n",
            format!("contour index {n} exceeds {MAX_FIGURE_CONTOUR}"),
        ));
    }
    let target = (2 * n + 1) as f64 * PI / 4.0;
    Ok(FRAC_PI_2.sqrt() / target * (-0.5 * z0_reduced * z0_reduced).exp())
}

//! Exact propagation of two atoms and the cavity mode on one
//! excitation-number block.
//!
//! The interaction `g1 σ1^+ a + g2 σ2^+ a + h.c.` conserves
//! `σ1^z + σ2^z + a^† a`, so starting from a Fock state the dynamics never
//! leaves the block `{|gg,n+1>, |ge,n>, |eg,n>, |ee,n-1>}`. Within it the
//! Schrödinger equation is integrated with RK4 and compared against the
//! effective two-atom rotation.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::cavity::{
    coupling, entanglement_from_theta, theta_closed_form, Atom, CavityParams,
    DEFAULT_WINDOW_SIGMAS, X_STEP_LIMIT,
};
use crate::error::{Error, Result};
use crate::quadrature::UniformGrid;
use crate::quantum::{
    partial_trace_first, tensor_product, von_neumann_entropy, ComplexMatrix, DensityMatrix,
    StateVector, I, NORM_TOL, ZERO,
};
use crate::tdft::TdftProblem;

/// Residual photon population above which the TDFT comparison is flagged.
pub const RELIABLE_PHOTON_POPULATION: f64 = 1e-3;

const MAX_DIM: usize = 4;
const EXCITATION_CHECK_STRIDE: usize = 1024;

/// One atom-atom-photon Fock state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct BasisLabel {
    pub atom1_excited: bool,
    pub atom2_excited: bool,
    pub photons: u32,
}

impl BasisLabel {
    pub fn excitations(&self) -> u32 {
        self.atom1_excited as u32 + self.atom2_excited as u32 + self.photons
    }

    fn excited(&self, atom: Atom) -> bool {
        match atom {
            Atom::First => self.atom1_excited,
            Atom::Second => self.atom2_excited,
        }
    }

    fn with_excited(mut self, atom: Atom, excited: bool) -> Self {
        match atom {
            Atom::First => self.atom1_excited = excited,
            Atom::Second => self.atom2_excited = excited,
        }
        self
    }

    /// Position in the two-atom basis `{|gg>, |ge>, |eg>, |ee>}`.
    pub fn atoms_index(&self) -> usize {
        2 * self.atom1_excited as usize + self.atom2_excited as usize
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = |e: bool| if e { 'e' } else { 'g' };
        write!(
            f,
            "|{}{},{}>",
            c(self.atom1_excited),
            c(self.atom2_excited),
            self.photons
        )
    }
}

/// Frame in which the block Hamiltonian is written.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Picture {
    /// Rotating with the cavity frequency: `H0 = Δ (σ1^z + σ2^z)`.
    Interaction,
    /// Laboratory frame with cavity frequency `omega`; inside a block this
    /// only adds `omega (n + 1)` to every level.
    Original { omega: f64 },
}

/// Integration scheme for the Schrödinger equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// RK4 on the amplitudes with the bare phases `exp(-i E_m t)` factored out.
    RotatingFrame,
    /// RK4 directly on `i dψ/dt = H(t) ψ`.
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactOptions {
    pub picture: Picture,
    pub scheme: Scheme,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            picture: Picture::Interaction,
            scheme: Scheme::RotatingFrame,
        }
    }
}

/// Photon-lowering transition `|lower> -> |upper>` exciting `atom`, with Bose factor.
#[derive(Clone, Copy, Debug)]
struct Link {
    upper: usize,
    lower: usize,
    atom: Atom,
    bose: f64,
}

/// The invariant subspace with `n + 1` excitations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExcitationBlock {
    n: u32,
    labels: Vec<BasisLabel>,
}

impl ExcitationBlock {
    pub fn new(n: u32) -> Self {
        let label = |a1, a2, photons| BasisLabel {
            atom1_excited: a1,
            atom2_excited: a2,
            photons,
        };
        let mut labels = vec![
            label(false, false, n + 1),
            label(false, true, n),
            label(true, false, n),
        ];
        if n > 0 {
            labels.push(label(true, true, n - 1));
        }
        Self { n, labels }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[BasisLabel] {
        &self.labels
    }

    pub fn excitation_number(&self) -> u32 {
        self.n + 1
    }

    pub fn index_of(&self, atom1_excited: bool, atom2_excited: bool) -> Option<usize> {
        self.labels
            .iter()
            .position(|l| l.atom1_excited == atom1_excited && l.atom2_excited == atom2_excited)
    }

    /// Diagonal of the block Hamiltonian.
    pub fn energies(&self, delta: f64, picture: Picture) -> Vec<f64> {
        let offset = match picture {
            Picture::Interaction => 0.0,
            Picture::Original { omega } => omega * self.excitation_number() as f64,
        };
        self.labels
            .iter()
            .map(|l| delta * (l.atom1_excited as u32 + l.atom2_excited as u32) as f64 + offset)
            .collect()
    }

    fn links(&self) -> Vec<Link> {
        let mut out = Vec::new();
        for (lower, label) in self.labels.iter().enumerate() {
            for atom in [Atom::First, Atom::Second] {
                if label.excited(atom) || label.photons == 0 {
                    continue;
                }
                let target = BasisLabel {
                    photons: label.photons - 1,
                    ..label.with_excited(atom, true)
                };
                if let Some(upper) = self.labels.iter().position(|l| *l == target) {
                    out.push(Link {
                        upper,
                        lower,
                        atom,
                        bose: (label.photons as f64).sqrt(),
                    });
                }
            }
        }
        out
    }

    /// Photon levels kept when embedding: `0..=n+1`.
    pub fn photon_dim(&self) -> usize {
        self.n as usize + 2
    }

    /// Dimension of atom 1 ⊗ atom 2 ⊗ photon.
    pub fn full_dim(&self) -> usize {
        4 * self.photon_dim()
    }

    /// Embeds block amplitudes into atom 1 ⊗ atom 2 ⊗ photon.
    pub fn embed(&self, state: &StateVector) -> Result<StateVector> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} amplitudes, block has {}",
                state.dim(),
                self.dim()
            )));
        }
        let mut full = vec![ZERO; self.full_dim()];
        for (label, &amp) in self.labels.iter().zip(state.amplitudes()) {
            full[label.atoms_index() * self.photon_dim() + label.photons as usize] = amp;
        }
        Ok(StateVector::new(full))
    }

    /// `σ1^z + σ2^z + a^† a` on atom 1 ⊗ atom 2 ⊗ photon.
    pub fn excitation_operator(&self) -> ComplexMatrix {
        let p = self.photon_dim();
        let number = ComplexMatrix::from_real_diag(&(0..p).map(|k| k as f64).collect::<Vec<_>>());
        let sz = ComplexMatrix::from_real_diag(&[0.0, 1.0]);
        let id2 = ComplexMatrix::identity(2);
        let atoms = &tensor_product(&sz, &id2) + &tensor_product(&id2, &sz);
        &tensor_product(&atoms, &ComplexMatrix::identity(p))
            + &tensor_product(&ComplexMatrix::identity(4), &number)
    }
}

/// Block Hamiltonian in the interaction picture.
pub fn build_block_hamiltonian(
    params: &CavityParams,
    t: f64,
    block: &ExcitationBlock,
) -> ComplexMatrix {
    build_block_hamiltonian_in(params, t, block, Picture::Interaction)
}

pub fn build_block_hamiltonian_in(
    params: &CavityParams,
    t: f64,
    block: &ExcitationBlock,
    picture: Picture,
) -> ComplexMatrix {
    let mut h = ComplexMatrix::from_real_diag(&block.energies(params.delta, picture));
    let g = [
        coupling(params, t, Atom::First),
        coupling(params, t, Atom::Second),
    ];
    for link in block.links() {
        let value = C64::new(g[atom_slot(link.atom)] * link.bose, 0.0);
        h[(link.upper, link.lower)] = value;
        h[(link.lower, link.upper)] = value.conj();
    }
    h
}

fn atom_slot(atom: Atom) -> usize {
    match atom {
        Atom::First => 0,
        Atom::Second => 1,
    }
}

/// Outcome of one exact propagation.
#[derive(Clone, Debug)]
pub struct ExactRun {
    pub state: StateVector,
    pub t_start: f64,
    pub t_end: f64,
    pub step: f64,
    pub steps: usize,
    /// `max_t | <ψ|ψ> − 1 |`; the state is never renormalized.
    pub norm_defect: f64,
    /// `max_t | <N> − (n + 1) |` over periodic checkpoints.
    pub max_excitation_deviation: f64,
}

/// Propagates `initial` across the transit window with default options.
pub fn integrate_exact(
    params: &CavityParams,
    block: &ExcitationBlock,
    initial: &StateVector,
    step: f64,
) -> Result<ExactRun> {
    let (t0, t1) = params.transit_window(DEFAULT_WINDOW_SIGMAS);
    integrate_exact_between(
        params,
        block,
        initial,
        t0,
        t1,
        step,
        ExactOptions::default(),
    )
}

/// Propagates `initial`, given at `t_start`, to `t_end`.
pub fn integrate_exact_between(
    params: &CavityParams,
    block: &ExcitationBlock,
    initial: &StateVector,
    t_start: f64,
    t_end: f64,
    step: f64,
    options: ExactOptions,
) -> Result<ExactRun> {
    if initial.dim() != block.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} amplitudes, block has {}",
            initial.dim(),
            block.dim()
        )));
    }
    initial.check_normalized(NORM_TOL)?;
    check_exact_step(params, block, step, options)?;
    let grid = UniformGrid::covering(t_start, t_end, step)?;
    let checker = ExcitationChecker::new(block);
    match options.scheme {
        Scheme::RotatingFrame => {
            rotating_frame_rk4(params, block, initial, &grid, options.picture, &checker)
        }
        Scheme::Direct => direct_rk4(params, block, initial, &grid, options.picture, &checker),
    }
}

fn check_exact_step(
    params: &CavityParams,
    block: &ExcitationBlock,
    step: f64,
    options: ExactOptions,
) -> Result<()> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter {
            name: "step",
            reason: format!("must be positive, got {step}"),
        });
    }
    let mut frequency = params.delta.abs();
    if options.scheme == Scheme::Direct {
        let fastest = block
            .energies(params.delta, options.picture)
            .iter()
            .fold(0.0_f64, |m, e| m.max(e.abs()));
        frequency = frequency.max(fastest);
    }
    let bound = X_STEP_LIMIT / frequency;
    if step > bound * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge {
            step,
            bound,
            frequency,
        });
    }
    Ok(())
}

struct ExcitationChecker {
    block: ExcitationBlock,
    operator: ComplexMatrix,
    target: f64,
}

impl ExcitationChecker {
    fn new(block: &ExcitationBlock) -> Self {
        Self {
            block: block.clone(),
            operator: block.excitation_operator(),
            target: block.excitation_number() as f64,
        }
    }

    fn deviation(&self, amplitudes: &[C64]) -> Result<f64> {
        let full = self.block.embed(&StateVector::new(amplitudes.to_vec()))?;
        let n_psi = self.operator.matvec(full.amplitudes())?;
        let expectation: C64 = full
            .amplitudes()
            .iter()
            .zip(&n_psi)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok((expectation.re / full.norm_sqr() - self.target).abs())
    }
}

fn cis(x: f64) -> C64 {
    let (s, c) = x.sin_cos();
    C64::new(c, s)
}

fn rotating_frame_rk4(
    params: &CavityParams,
    block: &ExcitationBlock,
    initial: &StateVector,
    grid: &UniformGrid,
    picture: Picture,
    checker: &ExcitationChecker,
) -> Result<ExactRun> {
    let dim = block.dim();
    let energies = block.energies(params.delta, picture);
    let links = block.links();
    let h = grid.step;
    let atoms = [Atom::First, Atom::Second];

    let mut half = [ZERO; MAX_DIM];
    for m in 0..dim {
        half[m] = cis(energies[m] * 0.5 * h);
    }
    let phases_at = |t: f64| {
        let mut p = [ZERO; MAX_DIM];
        for m in 0..dim {
            p[m] = cis(energies[m] * t);
        }
        p
    };
    // dφ/dt = -i V_rot(t) φ with V_rot,ul = exp(i (E_u - E_l) t) V_ul
    let rate = |phase: &[C64; MAX_DIM], g: &[f64; 2], phi: &[C64; MAX_DIM]| {
        let mut out = [ZERO; MAX_DIM];
        for link in &links {
            let v = phase[link.upper]
                * phase[link.lower].conj()
                * (g[atom_slot(link.atom)] * link.bose);
            out[link.upper] += -I * v * phi[link.lower];
            out[link.lower] += -I * v.conj() * phi[link.upper];
        }
        out
    };

    let mut phi = [ZERO; MAX_DIM];
    let p0 = phases_at(grid.start);
    for m in 0..dim {
        phi[m] = p0[m] * initial.amplitudes()[m];
    }
    let norm0 = initial.norm_sqr();
    let mut norm_defect = (norm0 - 1.0).abs();
    let mut excitation = checker.deviation(initial.amplitudes())?;
    let mut g_now = atoms.map(|a| coupling(params, grid.start, a));
    let mut tmp = [ZERO; MAX_DIM];

    for i in 0..grid.intervals {
        let t = grid.at(i);
        let t_next = grid.at(i + 1);
        let p_now = phases_at(t);
        let mut p_mid = [ZERO; MAX_DIM];
        let mut p_next = [ZERO; MAX_DIM];
        for m in 0..dim {
            p_mid[m] = p_now[m] * half[m];
            p_next[m] = p_mid[m] * half[m];
        }
        let g_mid = atoms.map(|a| coupling(params, t + 0.5 * h, a));
        let g_next = atoms.map(|a| coupling(params, t_next, a));

        let k1 = rate(&p_now, &g_now, &phi);
        for m in 0..dim {
            tmp[m] = phi[m] + k1[m] * (0.5 * h);
        }
        let k2 = rate(&p_mid, &g_mid, &tmp);
        for m in 0..dim {
            tmp[m] = phi[m] + k2[m] * (0.5 * h);
        }
        let k3 = rate(&p_mid, &g_mid, &tmp);
        for m in 0..dim {
            tmp[m] = phi[m] + k3[m] * h;
        }
        let k4 = rate(&p_next, &g_next, &tmp);
        let mut norm = 0.0;
        for m in 0..dim {
            phi[m] += (k1[m] + k2[m] * 2.0 + k3[m] * 2.0 + k4[m]) * (h / 6.0);
            norm += phi[m].norm_sqr();
        }
        norm_defect = norm_defect.max((norm - 1.0).abs());
        g_now = g_next;

        if (i + 1) % EXCITATION_CHECK_STRIDE == 0 {
            excitation = excitation.max(checker.deviation(&phi[..dim])?);
        }
    }

    let p_end = phases_at(grid.end());
    let psi: Vec<C64> = (0..dim).map(|m| p_end[m].conj() * phi[m]).collect();
    excitation = excitation.max(checker.deviation(&psi)?);
    Ok(ExactRun {
        state: StateVector::new(psi),
        t_start: grid.start,
        t_end: grid.end(),
        step: h,
        steps: grid.intervals,
        norm_defect,
        max_excitation_deviation: excitation,
    })
}

fn direct_rk4(
    params: &CavityParams,
    block: &ExcitationBlock,
    initial: &StateVector,
    grid: &UniformGrid,
    picture: Picture,
    checker: &ExcitationChecker,
) -> Result<ExactRun> {
    let h = grid.step;
    let rate = |t: f64, psi: &[C64]| -> Result<Vec<C64>> {
        let hpsi = build_block_hamiltonian_in(params, t, block, picture).matvec(psi)?;
        Ok(hpsi.into_iter().map(|x| -I * x).collect())
    };
    let axpy = |y: &[C64], a: f64, x: &[C64]| -> Vec<C64> {
        y.iter().zip(x).map(|(y, x)| y + x * a).collect()
    };
    let mut psi = initial.amplitudes().to_vec();
    let mut norm_defect = (initial.norm_sqr() - 1.0).abs();
    let mut excitation = checker.deviation(&psi)?;
    for i in 0..grid.intervals {
        let t = grid.at(i);
        let k1 = rate(t, &psi)?;
        let k2 = rate(t + 0.5 * h, &axpy(&psi, 0.5 * h, &k1))?;
        let k3 = rate(t + 0.5 * h, &axpy(&psi, 0.5 * h, &k2))?;
        let k4 = rate(grid.at(i + 1), &axpy(&psi, h, &k3))?;
        for (m, p) in psi.iter_mut().enumerate() {
            *p += (k1[m] + k2[m] * 2.0 + k3[m] * 2.0 + k4[m]) * (h / 6.0);
        }
        let norm: f64 = psi.iter().map(|x| x.norm_sqr()).sum();
        norm_defect = norm_defect.max((norm - 1.0).abs());
        if (i + 1) % EXCITATION_CHECK_STRIDE == 0 {
            excitation = excitation.max(checker.deviation(&psi)?);
        }
    }
    excitation = excitation.max(checker.deviation(&psi)?);
    Ok(ExactRun {
        state: StateVector::new(psi),
        t_start: grid.start,
        t_end: grid.end(),
        step: h,
        steps: grid.intervals,
        norm_defect,
        max_excitation_deviation: excitation,
    })
}

/// Entanglement entropy (bits) between the two atoms after tracing out the
/// photon. The state is normalized first; the integrator never does this.
pub fn atomic_pair_entropy(block: &ExcitationBlock, state: &StateVector) -> Result<f64> {
    let norm = state.norm_sqr().sqrt();
    if norm == 0.0 {
        return Err(Error::Unnormalized(0.0));
    }
    let normalized = StateVector::new(state.amplitudes().iter().map(|a| a / norm).collect());
    let full = block.embed(&normalized)?;
    let rho = DensityMatrix::from_pure(&full)?;
    let atoms = partial_trace_first(&rho, 4, block.photon_dim())?;
    von_neumann_entropy(&partial_trace_first(&atoms, 2, 2)?)
}

/// Exact versus effective-theory results for atoms entering in `|ge>` with
/// an empty cavity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    /// exact populations of `|gg,1>, |ge,0>, |eg,0>`
    pub final_populations: Vec<f64>,
    /// effective-theory populations of the same states
    pub tdft_populations: Vec<f64>,
    pub theta_tdft: f64,
    pub entropy_exact: f64,
    pub entropy_tdft: f64,
    pub entropy_error: f64,
    pub max_population_error: f64,
    pub norm_defect: f64,
    pub max_excitation_deviation: f64,
    pub photon_population: f64,
    /// false when the residual photon population is too large to trace out
    pub reliable: bool,
    pub steps: usize,
}

/// Comparison at the mandated step `0.02/|Δ|` over the default window.
pub fn compare_tdft_exact(params: &CavityParams) -> Result<OracleReport> {
    compare_tdft_exact_with(params, X_STEP_LIMIT, DEFAULT_WINDOW_SIGMAS)
}

pub fn compare_tdft_exact_with(
    params: &CavityParams,
    step_factor: f64,
    window_sigmas: f64,
) -> Result<OracleReport> {
    if !(window_sigmas > 0.0) || !window_sigmas.is_finite() {
        return Err(Error::InvalidParameter {
            name: "window_sigmas",
            reason: format!("must be positive, got {window_sigmas}"),
        });
    }
    let block = ExcitationBlock::new(0);
    let ge = block.index_of(false, true).expect("block 0 holds |ge,0>");
    let eg = block.index_of(true, false).expect("block 0 holds |eg,0>");
    let gg = block.index_of(false, false).expect("block 0 holds |gg,1>");
    let initial = StateVector::basis(block.dim(), ge)?;
    let (t0, t1) = params.transit_window(window_sigmas);
    let step = step_factor / params.delta.abs();
    let run = integrate_exact_between(
        params,
        &block,
        &initial,
        t0,
        t1,
        step,
        ExactOptions::default(),
    )?;

    let exact = run.state.populations();
    let theta = theta_closed_form(params);
    let mut tdft = vec![0.0; block.dim()];
    tdft[ge] = theta.cos().powi(2);
    tdft[eg] = theta.sin().powi(2);
    let max_population_error = exact
        .iter()
        .zip(&tdft)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let entropy_exact = atomic_pair_entropy(&block, &run.state)?;
    let entropy_tdft = entanglement_from_theta(theta);
    let photon_population = exact[gg];
    Ok(OracleReport {
        final_populations: exact,
        tdft_populations: tdft,
        theta_tdft: theta,
        entropy_exact,
        entropy_tdft,
        entropy_error: (entropy_exact - entropy_tdft).abs(),
        max_population_error,
        norm_defect: run.norm_defect,
        max_excitation_deviation: run.max_excitation_deviation,
        photon_population,
        reliable: photon_population < RELIABLE_PHOTON_POPULATION,
        steps: run.steps,
    })
}

/// The block as a perturbation problem: `H0` is the bare diagonal and `H1`
/// the atom-photon couplings, with the clock shifted so that `τ = 0`
/// corresponds to `t = t_origin`.
pub fn block_tdft_problem(
    params: &CavityParams,
    block: &ExcitationBlock,
    t_origin: f64,
) -> Result<TdftProblem> {
    let energies = block.energies(params.delta, Picture::Interaction);
    let p = *params;
    let links = block.links();
    let dim = block.dim();
    TdftProblem::new(
        energies,
        Arc::new(move |tau| {
            let t = tau + t_origin;
            let g = [coupling(&p, t, Atom::First), coupling(&p, t, Atom::Second)];
            let mut h = ComplexMatrix::zeros(dim, dim);
            for link in &links {
                let value = C64::new(g[atom_slot(link.atom)] * link.bose, 0.0);
                h[(link.upper, link.lower)] = value;
                h[(link.lower, link.upper)] = value;
            }
            h
        }),
    )
}

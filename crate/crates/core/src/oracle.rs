//! Time-resolved propagation with every ion coupled at once.
//!
//! The cavity centre moves as `x_c = v t`; ion `n` sees the coupling
//!
//! ```text
//! g_n(t) = omega0 * exp(-((x_n - v t)^2 + y_n^2) / w^2) * cos(2 pi z_n / lambda)
//! ```
//!
//! In the resonant interaction picture the single-excitation amplitudes obey
//! `dA_n/dt = -i g_n B` and `dB/dt = -i sum_n g_n A_n`. These are integrated
//! with classical fixed-step RK4, so neighbouring pulses may overlap in time,
//! which the sequential pulse-area picture ignores.

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::analytic::{evolve_sequential, PulseSchedule, SingleExcitationState};
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::model::{CavityMode, IonArray, SweepKinematics};
use crate::solver::{solve_positions, DesignProblem};

/// Largest single change allowed when the step is halved.
pub const HALVING_TOLERANCE: f64 = 1e-6;
/// Smallest acceptable error ratio between successive halvings (order 4 gives 16).
pub const MIN_ORDER_RATIO: f64 = 12.0;
/// Below this the second halving difference is roundoff and the ratio is not judged.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;
/// Coarsest step allowed: 50 steps per period of the peak coupling.
pub const MIN_DT_DIVISOR: f64 = 50.0;
/// Largest state dimension accepted by [`full_space_check`].
pub const FULL_SPACE_MAX_IONS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitHamiltonian {
    pub mode: CavityMode,
    pub array: IonArray,
    /// m/s
    pub velocity: f64,
}

impl TransitHamiltonian {
    pub fn new(mode: CavityMode, array: IonArray, velocity: f64) -> Result<Self> {
        mode.validate()?;
        SweepKinematics::new(velocity)?;
        Ok(Self { mode, array, velocity })
    }

    pub fn n_ions(&self) -> usize {
        self.array.len()
    }

    /// Coupling of ion `ion_index` (1-based) at time `t`.
    pub fn envelope(&self, ion_index: usize, t: f64) -> Result<f64> {
        let site = ion_index
            .checked_sub(1)
            .and_then(|k| self.array.sites().get(k))
            .ok_or_else(|| invalid(format!("no ion with index {ion_index}")))?;
        ensure_finite("t", t)?;
        Ok(self.coupling(site.x, site.y, site.z, t))
    }

    fn coupling(&self, x: f64, y: f64, z: f64, t: f64) -> f64 {
        let w2 = self.mode.waist * self.mode.waist;
        let dx = x - self.velocity * t;
        self.mode.omega0 * (-(dx * dx + y * y) / w2).exp() * self.mode.axial_factor(z)
    }

    fn couplings_into(&self, t: f64, out: &mut [f64]) {
        for (g, s) in out.iter_mut().zip(self.array.sites()) {
            *g = self.coupling(s.x, s.y, s.z, t);
        }
    }

    /// Analytic state from the sequential pulse-area model of the same layout.
    pub fn sequential_state(&self) -> Result<SingleExcitationState> {
        let kin = SweepKinematics::new(self.velocity)?;
        evolve_sequential(&PulseSchedule::for_array(&self.array, &self.mode, &kin)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    /// Sweep starts and ends this many waists beyond the outer ions.
    pub margin: f64,
    /// Steps per period `2 pi / omega0`, at least [`MIN_DT_DIVISOR`].
    pub dt_divisor: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            margin: 6.0,
            dt_divisor: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl IntegrationGrid {
    pub fn for_sweep(ham: &TransitHamiltonian, opts: GridOptions) -> Result<Self> {
        ensure_finite("margin", opts.margin)?;
        ensure_finite("dt_divisor", opts.dt_divisor)?;
        if opts.margin < 0.0 {
            return Err(invalid(format!("margin must be non-negative, got {}", opts.margin)));
        }
        if opts.dt_divisor < MIN_DT_DIVISOR {
            return Err(invalid(format!(
                "dt_divisor must be at least {MIN_DT_DIVISOR}, got {}",
                opts.dt_divisor
            )));
        }
        let sites = ham.array.sites();
        let reach = opts.margin * ham.mode.waist;
        let t_start = (sites[0].x - reach) / ham.velocity;
        let t_end = (sites[sites.len() - 1].x + reach) / ham.velocity;
        let dt_max = TAU / ham.mode.omega0 / opts.dt_divisor;
        let n_steps = (((t_end - t_start) / dt_max).ceil() as usize).max(1);
        Ok(Self {
            t_start,
            t_end,
            n_steps,
        })
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_steps: self.n_steps * factor,
            ..*self
        }
    }

    fn check(&self, omega0: f64) -> Result<()> {
        if self.t_end.partial_cmp(&self.t_start) != Some(std::cmp::Ordering::Greater) || self.n_steps == 0 {
            return Err(invalid(
                "integration grid must span a positive time with at least one step",
            ));
        }
        if self.dt() > TAU / omega0 / MIN_DT_DIVISOR * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "dt = {:e} s exceeds the limit of {MIN_DT_DIVISOR} steps per Rabi period",
                self.dt()
            )));
        }
        Ok(())
    }
}

/// Classical RK4 for a complex linear system `dy/dt = f(t, y)`.
struct Rk4 {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
}

impl Rk4 {
    fn new(dim: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); dim];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    fn step<F>(&mut self, f: &mut F, t: f64, dt: f64, y: &mut [C64])
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let h2 = 0.5 * dt;
        f(t, y, &mut self.k1);
        for ((tmp, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *tmp = y + k * h2;
        }
        f(t + h2, &self.tmp, &mut self.k2);
        for ((tmp, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *tmp = y + k * h2;
        }
        f(t + h2, &self.tmp, &mut self.k3);
        for ((tmp, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *tmp = y + k * dt;
        }
        f(t + dt, &self.tmp, &mut self.k4);
        let sixth = dt / 6.0;
        for (i, y) in y.iter_mut().enumerate() {
            *y += (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]) * sixth;
        }
    }
}

/// Integrates `y` from `t0` over `n_steps` steps of signed size `dt`, calling
/// `observe(t, y)` at the start and after every step.
fn integrate<F, O>(mut f: F, y: &mut [C64], t0: f64, dt: f64, n_steps: usize, mut observe: O)
where
    F: FnMut(f64, &[C64], &mut [C64]),
    O: FnMut(f64, &[C64]),
{
    let mut rk = Rk4::new(y.len());
    observe(t0, y);
    for k in 0..n_steps {
        let t = t0 + k as f64 * dt;
        rk.step(&mut f, t, dt, y);
        observe(t0 + (k + 1) as f64 * dt, y);
    }
}

/// Single-excitation right-hand side, state packed as `[A_1..A_N, B]`.
fn subspace_rhs(ham: &TransitHamiltonian) -> impl FnMut(f64, &[C64], &mut [C64]) + '_ {
    let n = ham.n_ions();
    let mut g = vec![0.0; n];
    move |t, y, dy| {
        ham.couplings_into(t, &mut g);
        let b = y[n];
        let mut sum = C64::new(0.0, 0.0);
        for k in 0..n {
            dy[k] = C64::new(0.0, -g[k]) * b;
            sum += y[k] * g[k];
        }
        dy[n] = C64::new(0.0, -1.0) * sum;
    }
}

fn norm_sqr(y: &[C64]) -> f64 {
    y.iter().map(|a| a.norm_sqr()).sum()
}

/// One sample of a traced run.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub photon_population: f64,
    pub ion_populations: Vec<f64>,
    pub norm: f64,
}

/// Integrates from `state` between arbitrary times. `t_end < t_start` runs
/// backwards.
pub fn evolve_between(
    ham: &TransitHamiltonian,
    state: &SingleExcitationState,
    t_start: f64,
    t_end: f64,
    n_steps: usize,
) -> Result<SingleExcitationState> {
    if state.n_ions() != ham.n_ions() {
        return Err(invalid(format!(
            "state has {} ions, Hamiltonian has {}",
            state.n_ions(),
            ham.n_ions()
        )));
    }
    if n_steps == 0 {
        return Err(invalid("need at least one step"));
    }
    let mut y = state.to_vector();
    let dt = (t_end - t_start) / n_steps as f64;
    integrate(subspace_rhs(ham), &mut y, t_start, dt, n_steps, |_, _| {});
    SingleExcitationState::from_vector(&y)
}

fn run_grid(
    ham: &TransitHamiltonian,
    grid: &IntegrationGrid,
    mut trace: Option<&mut Vec<TracePoint>>,
) -> (Vec<C64>, f64) {
    let n = ham.n_ions();
    let mut y = SingleExcitationState::photon_with_ions(n).to_vector();
    let mut drift: f64 = 0.0;
    integrate(
        subspace_rhs(ham),
        &mut y,
        grid.t_start,
        grid.dt(),
        grid.n_steps,
        |t, y| {
            let norm = norm_sqr(y);
            drift = drift.max((norm - 1.0).abs());
            if let Some(trace) = trace.as_deref_mut() {
                trace.push(TracePoint {
                    t,
                    photon_population: y[n].norm_sqr(),
                    ion_populations: y[..n].iter().map(|a| a.norm_sqr()).collect(),
                    norm,
                });
            }
        },
    );
    (y, drift)
}

fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceGate {
    /// Largest amplitude change from `dt` to `dt/2`.
    pub halving_delta: f64,
    /// Largest amplitude change from `dt/2` to `dt/4`.
    pub second_halving_delta: f64,
    pub ratio: f64,
    /// Second difference is at the roundoff floor, so the ratio is not judged.
    pub roundoff_limited: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    /// State at the end of the sweep on the requested grid.
    pub state: SingleExcitationState,
    /// `max_t |<psi|psi> - 1|` along the run.
    pub norm_drift: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub gate: ConvergenceGate,
}

/// Integrates the full sweep from `|g..g>|1>` and runs the step-halving gate.
pub fn propagate(ham: &TransitHamiltonian, grid: &IntegrationGrid) -> Result<OracleRun> {
    propagate_inner(ham, grid, None)
}

/// As [`propagate`], also recording populations after every step of the
/// requested grid.
pub fn propagate_traced(ham: &TransitHamiltonian, grid: &IntegrationGrid) -> Result<(OracleRun, Vec<TracePoint>)> {
    let mut trace = Vec::with_capacity(grid.n_steps + 1);
    let run = propagate_inner(ham, grid, Some(&mut trace))?;
    Ok((run, trace))
}

fn propagate_inner(
    ham: &TransitHamiltonian,
    grid: &IntegrationGrid,
    trace: Option<&mut Vec<TracePoint>>,
) -> Result<OracleRun> {
    grid.check(ham.mode.omega0)?;
    let (coarse, norm_drift) = run_grid(ham, grid, trace);
    let (half, _) = run_grid(ham, &grid.refined(2), None);
    let (quarter, _) = run_grid(ham, &grid.refined(4), None);

    let halving_delta = max_abs_diff(&coarse, &half);
    let second_halving_delta = max_abs_diff(&half, &quarter);
    let ratio = halving_delta / second_halving_delta;
    let roundoff_limited = second_halving_delta <= ROUNDOFF_FLOOR;
    let passed = halving_delta <= HALVING_TOLERANCE && (roundoff_limited || ratio >= MIN_ORDER_RATIO);
    let gate = ConvergenceGate {
        halving_delta,
        second_halving_delta,
        ratio,
        roundoff_limited,
        passed,
    };
    if !passed {
        return Err(Error::Accuracy(format!(
            "step-halving gate failed (delta {halving_delta:e}, ratio {ratio:.2}); increase dt_divisor"
        )));
    }
    Ok(OracleRun {
        state: SingleExcitationState::from_vector(&coarse)?,
        norm_drift,
        n_steps: grid.n_steps,
        dt: grid.dt(),
        gate,
    })
}

/// `1 - |<psi_a|psi_b>|`.
pub fn infidelity(a: &SingleExcitationState, b: &SingleExcitationState) -> Result<f64> {
    Ok(1.0 - a.inner(b)?.norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchError {
    /// m
    pub pitch: f64,
    /// `1 - |<psi_analytic|psi_oracle>|`
    pub error: f64,
    pub norm_drift: f64,
}

/// Deviation of the full dynamics from the sequential model for the designed
/// layout at each pitch. Runs are independent and execute in parallel.
pub fn sequential_approximation_error(
    problem: &DesignProblem,
    pitches: &[f64],
    opts: GridOptions,
) -> Result<Vec<PitchError>> {
    for &p in pitches {
        ensure_finite("pitch", p)?;
        if p <= 0.0 {
            return Err(invalid(format!("pitch must be positive, got {p}")));
        }
    }
    let solution = solve_positions(problem)?;
    pitches
        .par_iter()
        .map(|&pitch| {
            let array = solution.layout(pitch, problem.z_plane)?;
            let ham = TransitHamiltonian::new(problem.mode, array, problem.velocity)?;
            let grid = IntegrationGrid::for_sweep(&ham, opts)?;
            let run = propagate(&ham, &grid)?;
            let analytic = ham.sequential_state()?;
            Ok(PitchError {
                pitch,
                error: infidelity(&analytic, &run.state)?,
                norm_drift: run.norm_drift,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullSpaceReport {
    pub dimension: usize,
    /// `max_t |<N_exc> - 1|`.
    pub excitation_drift: f64,
    /// Largest population found outside the single-excitation sector.
    pub leakage: f64,
    /// Largest amplitude difference against the subspace integration.
    pub max_amplitude_diff: f64,
    pub passed: bool,
}

/// Tolerances applied by [`full_space_check`].
pub const EXCITATION_TOLERANCE: f64 = 1e-8;
pub const LEAKAGE_TOLERANCE: f64 = 1e-10;
pub const SUBSPACE_AGREEMENT: f64 = 1e-6;

/// Integrates the same sweep in the full `2^N x (cutoff + 1)` space of ions
/// and photon number and compares against the subspace result.
pub fn full_space_check(
    ham: &TransitHamiltonian,
    grid: &IntegrationGrid,
    photon_cutoff: usize,
) -> Result<FullSpaceReport> {
    let n = ham.n_ions();
    if n > FULL_SPACE_MAX_IONS {
        return Err(invalid(format!(
            "full-space check supports at most {FULL_SPACE_MAX_IONS} ions, got {n}"
        )));
    }
    if photon_cutoff == 0 {
        return Err(invalid("photon cutoff must be at least 1"));
    }
    grid.check(ham.mode.omega0)?;
    let n_ion_states = 1usize << n;
    let dim = n_ion_states * (photon_cutoff + 1);
    let index = |photons: usize, bits: usize| photons * n_ion_states + bits;
    let excitations: Vec<usize> = (0..dim)
        .map(|i| i / n_ion_states + (i % n_ion_states).count_ones() as usize)
        .collect();
    let sqrt_n: Vec<f64> = (0..=photon_cutoff + 1).map(|p| (p as f64).sqrt()).collect();

    let mut g = vec![0.0; n];
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        ham.couplings_into(t, &mut g);
        dy.iter_mut().for_each(|d| *d = C64::new(0.0, 0.0));
        for (i, &amp) in y.iter().enumerate() {
            if amp == C64::new(0.0, 0.0) {
                continue;
            }
            let (p, bits) = (i / n_ion_states, i % n_ion_states);
            for (k, &gk) in g.iter().enumerate() {
                let mask = 1 << k;
                if bits & mask != 0 {
                    // a^dag sigma_-: ion k emits into the cavity
                    if p < photon_cutoff {
                        dy[index(p + 1, bits ^ mask)] += amp * (gk * sqrt_n[p + 1]);
                    }
                } else if p > 0 {
                    // a sigma_+: ion k absorbs a photon
                    dy[index(p - 1, bits | mask)] += amp * (gk * sqrt_n[p]);
                }
            }
        }
        for d in dy.iter_mut() {
            *d *= C64::new(0.0, -1.0);
        }
    };

    let mut y = vec![C64::new(0.0, 0.0); dim];
    y[index(1, 0)] = C64::new(1.0, 0.0);
    let mut excitation_drift: f64 = 0.0;
    let mut leakage: f64 = 0.0;
    integrate(rhs, &mut y, grid.t_start, grid.dt(), grid.n_steps, |_, y| {
        let mut mean = 0.0;
        let mut outside = 0.0;
        for (amp, &e) in y.iter().zip(&excitations) {
            let p = amp.norm_sqr();
            mean += p * e as f64;
            if e != 1 {
                outside += p;
            }
        }
        excitation_drift = excitation_drift.max((mean - 1.0).abs());
        leakage = leakage.max(outside);
    });

    let (sub, _) = run_grid(ham, grid, None);
    let mut projected: Vec<C64> = (0..n).map(|k| y[index(0, 1 << k)]).collect();
    projected.push(y[index(1, 0)]);
    let max_amplitude_diff = max_abs_diff(&projected, &sub);

    Ok(FullSpaceReport {
        dimension: dim,
        excitation_drift,
        leakage,
        max_amplitude_diff,
        passed: excitation_drift <= EXCITATION_TOLERANCE
            && leakage <= LEAKAGE_TOLERANCE
            && max_amplitude_diff <= SUBSPACE_AGREEMENT,
    })
}

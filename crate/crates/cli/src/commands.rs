use std::collections::BTreeMap;
use std::fmt::Write as _;

use cavitybus_core::fluctuation::{timing_budget_with_rates, REF_GAMMA, REF_KAPPA};
use cavitybus_core::oracle::{infidelity, ConvergenceGate, FullSpaceReport, PitchError};
use cavitybus_core::solver::{nested_w_property_check, NestedCheckReport};
use cavitybus_core::{
    coupling_strength, effective_duration, evolve_sequential, fidelity_scan, full_space_check, monte_carlo_fidelity,
    propagate_traced, pulse_angle, sequential_approximation_error, solve_positions, worst_case_fidelity,
    CoherenceBudget, DesignSolution, IntegrationGrid, IonArray, MonteCarloSummary, PulseSchedule, ScanAxis, ScanReport,
    SingleExcitationState, TransitHamiltonian, WorstCase,
};

use crate::config::RunConfig;
use crate::output::{num, CsvTable};
use crate::CliError;

const UM: f64 = 1e-6;
/// Fidelity level quoted for the reference noise.
pub const FIDELITY_CLAIM: f64 = 0.99;
/// Tolerance of the nested-design suffix check, m.
const NESTED_TOLERANCE: f64 = 1e-12;

/// What a command prints and which files it writes into the output directory.
#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub text: String,
    pub files: Vec<(String, String)>,
}

impl CommandOutput {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }
}

// ---------------------------------------------------------------- solve

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Designs for every `N` from 1 to `n_ions`.
    pub table: BTreeMap<usize, DesignSolution>,
    pub nested: NestedCheckReport,
    pub margin: f64,
}

impl SolveReport {
    pub fn design(&self) -> &DesignSolution {
        self.table.values().next_back().expect("table is never empty")
    }
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveReport, CliError> {
    let problem = cfg.problem(cfg.n_ions);
    // Solve the full size first so infeasibility names the limiting ion.
    let top = solve_positions(&problem)?;
    let mut table = BTreeMap::new();
    for n in 1..cfg.n_ions {
        table.insert(n, solve_positions(&cfg.problem(n))?);
    }
    table.insert(cfg.n_ions, top);
    let nested = nested_w_property_check(&table, NESTED_TOLERANCE);
    Ok(SolveReport {
        table,
        nested,
        margin: problem.feasibility_margin()?,
    })
}

/// Table rows `N | y_1 .. y_N` in um to four decimals.
pub fn table_block(table: &BTreeMap<usize, DesignSolution>) -> String {
    let mut s = String::from(" N | y_n (um)\n");
    for (n, sol) in table {
        let ys: Vec<String> = sol.positions.iter().map(|y| format!("{:.4}", y / UM)).collect();
        let _ = writeln!(s, "{n:>2} | {}", ys.join(" "));
    }
    s
}

impl SolveReport {
    pub fn output(&self, cfg: &RunConfig) -> CommandOutput {
        let design = self.design();
        let mut csv = CsvTable::new(&["n", "theta_rad", "omega_rad_per_s", "y_um", "residual"]);
        for (k, ((theta, omega), (y, r))) in design
            .angles
            .angles()
            .iter()
            .zip(&design.couplings)
            .zip(design.positions.iter().zip(&design.residuals))
            .enumerate()
        {
            csv.push(vec![
                (k + 1).to_string(),
                num(*theta),
                num(*omega),
                num(y / UM),
                num(*r),
            ]);
        }
        csv.footer
            .push(format!("feasibility_margin_rad = {}", num(self.margin)));

        let mut text = format!(
            "W-state trap offsets (w = {} um, v = {} m/s, z = {} um, margin {:.6} rad)\n",
            num(cfg.waist / UM),
            num(cfg.velocity),
            num(cfg.z_plane / UM),
            self.margin
        );
        text.push_str(&table_block(&self.table));
        let _ = writeln!(
            text,
            "nested-design check: {} (max deviation {:.3e} um)",
            if self.nested.passed { "pass" } else { "FAIL" },
            self.nested.max_deviation / UM
        );
        CommandOutput {
            text,
            files: vec![("solve.csv".into(), csv.render("solve", cfg))],
        }
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub positions: Vec<f64>,
    pub state: SingleExcitationState,
}

/// Sequential evolution for the designed layout, or for explicit offsets
/// `positions` (m) such as the `y_um` column of a previous `solve`.
pub fn cmd_simulate(cfg: &RunConfig, positions: Option<&[f64]>) -> Result<SimulateReport, CliError> {
    let positions = match positions {
        Some(p) => p.to_vec(),
        None => solve_positions(&cfg.problem(cfg.n_ions))?.positions,
    };
    let mode = cfg.mode();
    let t_eff = effective_duration(&mode, cfg.velocity)?;
    let angles = positions
        .iter()
        .map(|&y| Ok(pulse_angle(coupling_strength(&mode, y, cfg.z_plane)?, t_eff)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let state = evolve_sequential(&PulseSchedule::new(angles)?)?;
    Ok(SimulateReport { positions, state })
}

impl SimulateReport {
    pub fn output(&self, cfg: &RunConfig) -> CommandOutput {
        let n = self.state.n_ions();
        let target = 1.0 / (n as f64).sqrt();
        let mut csv = CsvTable::new(&["n", "re_A", "im_A", "abs_A", "target", "deviation"]);
        let mut text = String::from(" n      |A_n|          target   deviation\n");
        for (k, a) in self.state.ion_amplitudes.iter().enumerate() {
            let dev = a.norm() - target;
            csv.push(vec![
                (k + 1).to_string(),
                num(a.re),
                num(a.im),
                num(a.norm()),
                num(target),
                num(dev),
            ]);
            let _ = writeln!(text, "{:>2}  {:.12}  {:.8}  {:+.3e}", k + 1, a.norm(), target, dev);
        }
        let b = self.state.photon_amplitude.norm();
        csv.footer.push(format!("abs_B = {}", num(b)));
        let _ = writeln!(text, "|B| = {b:.3e}");
        CommandOutput {
            text,
            files: vec![("simulate.csv".into(), csv.render("simulate", cfg))],
        }
    }
}

// ---------------------------------------------------------------- oracle

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub n_ions: usize,
    pub pitch: f64,
    pub one_minus_overlap: f64,
    pub norm_drift: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub gate: ConvergenceGate,
    pub trace: Option<CsvTable>,
    pub pitch_sweep: Option<Vec<PitchError>>,
    pub full_space: Option<FullSpaceReport>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OracleOptions {
    pub pitch_sweep: bool,
    pub full_space: bool,
}

pub fn cmd_oracle(cfg: &RunConfig, opts: OracleOptions) -> Result<OracleReport, CliError> {
    let problem = cfg.problem(cfg.n_ions);
    let design = solve_positions(&problem)?;
    let ham = TransitHamiltonian::new(cfg.mode(), design.layout(cfg.pitch, cfg.z_plane)?, cfg.velocity)?;
    oracle_for(cfg, &ham, opts)
}

/// Oracle run on an explicit layout.
pub fn cmd_oracle_layout(cfg: &RunConfig, array: IonArray) -> Result<OracleReport, CliError> {
    let ham = TransitHamiltonian::new(cfg.mode(), array, cfg.velocity)?;
    oracle_for(cfg, &ham, OracleOptions::default())
}

fn oracle_for(cfg: &RunConfig, ham: &TransitHamiltonian, opts: OracleOptions) -> Result<OracleReport, CliError> {
    let grid = IntegrationGrid::for_sweep(ham, cfg.grid())?;
    let (run, trace) = propagate_traced(ham, &grid)?;
    let analytic = ham.sequential_state()?;
    let one_minus_overlap = infidelity(&analytic, &run.state)?;

    let trace = cfg.trace.then(|| {
        let n = ham.n_ions();
        let mut cols = vec!["t_s".to_string(), "abs_B_sq".to_string()];
        cols.extend((1..=n).map(|k| format!("abs_A{k}_sq")));
        cols.push("norm".into());
        let mut csv = CsvTable {
            columns: cols,
            rows: Vec::new(),
            footer: Vec::new(),
        };
        for p in &trace {
            let mut row = vec![num(p.t), num(p.photon_population)];
            row.extend(p.ion_populations.iter().map(|x| num(*x)));
            row.push(num(p.norm));
            csv.push(row);
        }
        csv
    });
    let pitch_sweep = if opts.pitch_sweep {
        Some(sequential_approximation_error(
            &cfg.problem(ham.n_ions()),
            &cfg.pitch_sweep,
            cfg.grid(),
        )?)
    } else {
        None
    };
    let full_space = if opts.full_space {
        Some(full_space_check(ham, &grid, 2)?)
    } else {
        None
    };
    Ok(OracleReport {
        n_ions: ham.n_ions(),
        pitch: ham.array.pitch(),
        one_minus_overlap,
        norm_drift: run.norm_drift,
        n_steps: run.n_steps,
        dt: run.dt,
        gate: run.gate,
        trace,
        pitch_sweep,
        full_space,
    })
}

/// Differences smaller than this are integration noise in a pitch sweep.
const SWEEP_FLOOR: f64 = 1e-10;

/// Pitches at which the error rose above the previous pitch. Once both
/// errors are at the integration floor the order is not judged.
pub fn sweep_anomalies(rows: &[PitchError]) -> Vec<f64> {
    let mut sorted: Vec<&PitchError> = rows.iter().collect();
    sorted.sort_by(|a, b| a.pitch.total_cmp(&b.pitch));
    sorted
        .windows(2)
        .filter(|w| w[1].error >= w[0].error && w[1].error.abs().max(w[0].error.abs()) > SWEEP_FLOOR)
        .map(|w| w[1].pitch)
        .collect()
}

impl OracleReport {
    pub fn output(&self, cfg: &RunConfig) -> CommandOutput {
        let mut text = String::new();
        let _ = writeln!(
            text,
            "time-resolved oracle: N = {}, pitch = {} um, {} steps of {:.4e} s",
            self.n_ions,
            num(self.pitch / UM),
            self.n_steps,
            self.dt
        );
        let _ = writeln!(text, "1 - |<analytic|oracle>| = {:.6e}", self.one_minus_overlap);
        let _ = writeln!(text, "overlap                 = {:.10}", 1.0 - self.one_minus_overlap);
        let _ = writeln!(text, "norm drift              = {:.3e}", self.norm_drift);
        let _ = writeln!(
            text,
            "step-halving gate       = {} (delta {:.3e}, ratio {:.2}{})",
            if self.gate.passed { "pass" } else { "FAIL" },
            self.gate.halving_delta,
            self.gate.ratio,
            if self.gate.roundoff_limited {
                ", roundoff limited"
            } else {
                ""
            }
        );
        let mut files = Vec::new();
        if let Some(trace) = &self.trace {
            files.push(("oracle_trace.csv".into(), trace.render("oracle", cfg)));
        }
        if let Some(rows) = &self.pitch_sweep {
            let mut csv = CsvTable::new(&["pitch_um", "one_minus_overlap", "norm_drift"]);
            let _ = writeln!(text, "\n pitch (um)   1 - |overlap|");
            for r in rows {
                csv.push(vec![num(r.pitch / UM), num(r.error), num(r.norm_drift)]);
                let _ = writeln!(text, "{:>10}   {:.6e}", num(r.pitch / UM), r.error);
            }
            let anomalies = sweep_anomalies(rows);
            let verdict = if anomalies.is_empty() {
                "monotone decrease".to_string()
            } else {
                format!(
                    "non-monotone at {} um",
                    anomalies.iter().map(|p| num(p / UM)).collect::<Vec<_>>().join(", ")
                )
            };
            let _ = writeln!(text, "pitch sweep: {verdict}");
            csv.footer.push(format!("pitch_sweep = {verdict}"));
            files.push(("pitch_sweep.csv".into(), csv.render("oracle", cfg)));
        }
        if let Some(fs) = &self.full_space {
            let _ = writeln!(
                text,
                "\nfull-space check (dim {}): {} (excitation drift {:.3e}, leakage {:.3e}, max |diff| {:.3e})",
                fs.dimension,
                if fs.passed { "pass" } else { "FAIL" },
                fs.excitation_drift,
                fs.leakage,
                fs.max_amplitude_diff
            );
        }
        CommandOutput { text, files }
    }
}

// ---------------------------------------------------------------- perturb

#[derive(Debug, Clone)]
pub struct PerturbRow {
    pub n_ions: usize,
    pub worst: WorstCase,
    pub mc: MonteCarloSummary,
}

#[derive(Debug, Clone)]
pub struct PerturbReport {
    pub rows: Vec<PerturbRow>,
}

impl PerturbReport {
    pub fn worst_case_passes(&self) -> bool {
        self.rows.iter().all(|r| r.worst.min >= FIDELITY_CLAIM)
    }

    pub fn mc_mean_passes(&self) -> bool {
        self.rows.iter().all(|r| r.mc.mean >= FIDELITY_CLAIM)
    }
}

/// Worst-case and Monte-Carlo fidelity for every `N` from 2 to `n_ions`.
pub fn cmd_perturb(cfg: &RunConfig) -> Result<PerturbReport, CliError> {
    let noise = cfg.noise();
    let mc = cfg.monte_carlo();
    let rows = (2..=cfg.n_ions.max(2))
        .map(|n| {
            let problem = cfg.problem(n);
            Ok(PerturbRow {
                n_ions: n,
                worst: worst_case_fidelity(&problem, &noise)?,
                mc: monte_carlo_fidelity(&problem, &noise, &mc)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(PerturbReport { rows })
}

impl PerturbReport {
    pub fn output(&self, cfg: &RunConfig) -> CommandOutput {
        let mut csv = CsvTable::new(&[
            "N",
            "worst_min_F",
            "worst_sign_triple",
            "mc_mean_F",
            "mc_std",
            "mc_min_F",
        ]);
        let mut text = format!(
            "fidelity under dv = {} m/s, dy = {} nm, dz = {} nm ({} samples, seed {}, {})\n",
            num(cfg.delta_v),
            num(cfg.delta_y / 1e-9),
            num(cfg.delta_z / 1e-9),
            cfg.n_samples,
            cfg.seed,
            if cfg.per_ion_independent {
                "per-ion offsets"
            } else {
                "global offsets"
            }
        );
        text.push_str(" N  worst min F  signs (v,y,z)  MC mean F     MC std       MC min F\n");
        for r in &self.rows {
            let signs: Vec<String> = r.worst.min_triples.iter().map(|s| s.to_string()).collect();
            csv.push(vec![
                r.n_ions.to_string(),
                num(r.worst.min),
                signs.join("|"),
                num(r.mc.mean),
                num(r.mc.std),
                num(r.mc.min),
            ]);
            let _ = writeln!(
                text,
                "{:>2}  {:.8}   {:<13}  {:.8}  {:.3e}  {:.8}",
                r.n_ions,
                r.worst.min,
                signs.join("|"),
                r.mc.mean,
                r.mc.std,
                r.mc.min
            );
        }
        let verdict = |ok: bool| if ok { "pass" } else { "fail" };
        let line = format!(
            "F >= {FIDELITY_CLAIM}: worst-case {}, MC mean {}",
            verdict(self.worst_case_passes()),
            verdict(self.mc_mean_passes())
        );
        let _ = writeln!(text, "{line}");
        csv.footer.push(line);
        CommandOutput {
            text,
            files: vec![("perturb.csv".into(), csv.render("perturb", cfg))],
        }
    }
}

// ---------------------------------------------------------------- budget

pub fn cmd_budget(cfg: &RunConfig) -> Result<CoherenceBudget, CliError> {
    Ok(timing_budget_with_rates(
        cfg.n_ions,
        cfg.pitch,
        cfg.velocity,
        cfg.gamma,
        cfg.kappa,
    )?)
}

pub fn budget_output(budget: &CoherenceBudget, cfg: &RunConfig) -> CommandOutput {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "sweep time T = N d / v = {} x {} um / {} m/s = {} us",
        cfg.n_ions,
        num(cfg.pitch / UM),
        num(cfg.velocity),
        num(budget.total_time / UM)
    );
    let _ = writeln!(
        text,
        "T * gamma = {:.4} (gamma = 2pi x {} MHz; reference 2pi x 1.69 MHz = {} rad/s)",
        budget.gamma_ratio,
        num(budget.gamma / std::f64::consts::TAU / 1e6),
        num(REF_GAMMA)
    );
    let _ = writeln!(
        text,
        "T * kappa = {:.4} (kappa = 2pi x {} kHz; reference 2pi x 102 kHz = {} rad/s)",
        budget.kappa_ratio,
        num(budget.kappa / std::f64::consts::TAU / 1e3),
        num(REF_KAPPA)
    );
    let mut csv = CsvTable::new(&[
        "n_ions",
        "total_time_s",
        "gamma_rad_per_s",
        "kappa_rad_per_s",
        "T_gamma",
        "T_kappa",
    ]);
    csv.push(vec![
        cfg.n_ions.to_string(),
        num(budget.total_time),
        num(budget.gamma),
        num(budget.kappa),
        num(budget.gamma_ratio),
        num(budget.kappa_ratio),
    ]);
    CommandOutput {
        text,
        files: vec![("budget.csv".into(), csv.render("budget", cfg))],
    }
}

// ---------------------------------------------------------------- scan

pub fn cmd_scan(cfg: &RunConfig) -> Result<ScanReport, CliError> {
    Ok(fidelity_scan(
        &cfg.problem(cfg.n_ions),
        &cfg.noise(),
        cfg.scan_axis,
        (cfg.scan_min, cfg.scan_max),
        cfg.scan_points,
        &cfg.monte_carlo(),
    )?)
}

pub fn scan_output(report: &ScanReport, cfg: &RunConfig) -> CommandOutput {
    let (column, scale) = match report.axis {
        ScanAxis::DeltaV => ("delta_v_m_per_s", 1.0),
        ScanAxis::DeltaY => ("delta_y_nm", 1e-9),
        ScanAxis::DeltaZ => ("delta_z_nm", 1e-9),
    };
    let mut csv = CsvTable::new(&[column, "worst_min_F", "mc_mean_F"]);
    let mut text = format!(
        "scan of {} for N = {}\n {column:>16}  worst min F   MC mean F\n",
        report.axis.name(),
        cfg.n_ions
    );
    for r in &report.rows {
        csv.push(vec![num(r.delta / scale), num(r.worst_min), num(r.mc_mean)]);
        let _ = writeln!(
            text,
            " {:>16}  {:.8}  {:.8}",
            num(r.delta / scale),
            r.worst_min,
            r.mc_mean
        );
    }
    let verdict = if report.anomalies.is_empty() {
        "worst-case minimum non-increasing".to_string()
    } else {
        format!(
            "numerical anomaly: worst-case minimum rises at rows {:?}",
            report.anomalies
        )
    };
    let _ = writeln!(text, "{verdict}");
    csv.footer.push(verdict);
    CommandOutput {
        text,
        files: vec![("scan.csv".into(), csv.render("scan", cfg))],
    }
}

//! Fidelity of the prepared W state under velocity and trap-position errors,
//! and the sweep-time budget against atomic and cavity decay.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::analytic::{
    perturbed_angles, perturbed_angles_with, w_overlap_fidelity, NoiseOffsets, NoiseSpec, PulseSchedule, SignTriple,
};
use crate::error::{ensure_finite, invalid, Result};
use crate::model::{IonArray, SweepKinematics, REF_PITCH};
use crate::solver::{solve_positions, DesignProblem};

/// Atomic decay rate, 2 pi x 1.69 MHz.
pub const REF_GAMMA: f64 = TAU * 1.69e6;
/// Cavity decay rate, 2 pi x 102 kHz.
pub const REF_KAPPA: f64 = TAU * 102e3;

const HISTOGRAM_BINS: usize = 20;
/// Per-parameter, per-ion slots in the keystream; see [`sample_offset`].
const WORDS_PER_SLOT: u128 = 64;
const MAX_IONS_PER_PARAM: u128 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetDistribution {
    /// Uniform on `[-delta, +delta]`.
    Uniform,
    /// Normal with standard deviation `delta`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarloConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub distribution: OffsetDistribution,
    /// Independent position offsets per ion; otherwise one offset per
    /// parameter is shared by all ions. The velocity offset is always shared.
    pub per_ion_independent: bool,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            seed: 0,
            distribution: OffsetDistribution::Uniform,
            per_ion_independent: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Param {
    Velocity = 0,
    Y = 1,
    Z = 2,
}

/// Draws the offset for `(sample, param, ion)`.
///
/// Each sample owns ChaCha stream `sample`; inside it every `(param, ion)`
/// pair starts at its own fixed word position. The result is therefore a pure
/// function of `(seed, sample, param, ion)` whatever the evaluation order.
fn sample_offset(
    seed: u64,
    sample: u64,
    param: Param,
    ion: usize,
    delta: f64,
    distribution: OffsetDistribution,
) -> f64 {
    if delta == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample);
    let slot = param as u128 * MAX_IONS_PER_PARAM + ion as u128;
    rng.set_word_pos(slot * WORDS_PER_SLOT);
    match distribution {
        OffsetDistribution::Uniform => {
            let u: f64 = rand::Rng::random(&mut rng);
            delta * (2.0 * u - 1.0)
        }
        OffsetDistribution::Gaussian => Normal::new(0.0, delta)
            .expect("delta is finite and positive")
            .sample(&mut rng),
    }
}

/// Offsets for one Monte-Carlo sample.
pub fn sample_offsets(noise: &NoiseSpec, mc: &MonteCarloConfig, sample: u64, n_ions: usize) -> NoiseOffsets {
    let draw = |param, ion, delta| sample_offset(mc.seed, sample, param, ion, delta, mc.distribution);
    let dv = draw(Param::Velocity, 0, noise.delta_v);
    let (dy, dz) = if mc.per_ion_independent {
        (
            (0..n_ions).map(|n| draw(Param::Y, n, noise.delta_y)).collect(),
            (0..n_ions).map(|n| draw(Param::Z, n, noise.delta_z)).collect(),
        )
    } else {
        (
            vec![draw(Param::Y, 0, noise.delta_y); n_ions],
            vec![draw(Param::Z, 0, noise.delta_z); n_ions],
        )
    };
    NoiseOffsets { dv, dy, dz }
}

/// Designed layout and its ideal schedule. The pitch does not enter the
/// sequential model, so the reference pitch is used.
fn design(problem: &DesignProblem) -> Result<(IonArray, PulseSchedule, SweepKinematics)> {
    let solution = solve_positions(problem)?;
    let array = solution.layout(REF_PITCH, problem.z_plane)?;
    let kin = SweepKinematics::new(problem.velocity)?;
    Ok((array, solution.angles, kin))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub min: f64,
    pub max: f64,
    pub argmin: SignTriple,
    pub argmax: SignTriple,
    /// Every triple whose fidelity equals `min` to within 1e-15.
    pub min_triples: Vec<SignTriple>,
    pub per_triple: Vec<(SignTriple, f64)>,
}

impl WorstCase {
    /// More than one sign triple reaches the minimum.
    pub fn is_degenerate(&self) -> bool {
        self.min_triples.len() > 1
    }
}

/// Fidelity at the eight corners `(v +- dv, y_n +- dy, z_n +- dz)`.
pub fn worst_case_fidelity(problem: &DesignProblem, noise: &NoiseSpec) -> Result<WorstCase> {
    let (array, ideal, kin) = design(problem)?;
    worst_case_for(&array, &ideal, problem, &kin, noise)
}

fn worst_case_for(
    array: &IonArray,
    ideal: &PulseSchedule,
    problem: &DesignProblem,
    kin: &SweepKinematics,
    noise: &NoiseSpec,
) -> Result<WorstCase> {
    let per_triple = SignTriple::all()
        .into_iter()
        .map(|signs| {
            let p = perturbed_angles(array, &problem.mode, kin, noise, signs)?;
            Ok((signs, w_overlap_fidelity(&p, ideal)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut argmin, mut min) = per_triple[0];
    let (mut argmax, mut max) = per_triple[0];
    for &(s, f) in &per_triple[1..] {
        if f < min {
            (argmin, min) = (s, f);
        }
        if f > max {
            (argmax, max) = (s, f);
        }
    }
    let min_triples = per_triple
        .iter()
        .filter(|(_, f)| (f - min).abs() <= 1e-15)
        .map(|&(s, _)| s)
        .collect();
    Ok(WorstCase {
        min,
        max,
        argmin,
        argmax,
        min_triples,
        per_triple,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let k = if width > 0.0 {
                (((v - lo) / width) as usize).min(bins - 1)
            } else {
                0
            };
            counts[k] += 1;
        }
        Self { lo, hi, counts }
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub n_samples: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single sample.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
}

/// Fidelity statistics over sampled offsets. Samples are evaluated in
/// parallel and reduced in sample order.
pub fn monte_carlo_fidelity(
    problem: &DesignProblem,
    noise: &NoiseSpec,
    mc: &MonteCarloConfig,
) -> Result<MonteCarloSummary> {
    let (array, ideal, kin) = design(problem)?;
    monte_carlo_for(&array, &ideal, problem, &kin, noise, mc)
}

fn monte_carlo_for(
    array: &IonArray,
    ideal: &PulseSchedule,
    problem: &DesignProblem,
    kin: &SweepKinematics,
    noise: &NoiseSpec,
    mc: &MonteCarloConfig,
) -> Result<MonteCarloSummary> {
    noise.validate()?;
    if mc.n_samples == 0 {
        return Err(invalid("Monte-Carlo run needs at least one sample"));
    }
    if mc.distribution == OffsetDistribution::Gaussian && kin.velocity - 8.0 * noise.delta_v <= 0.0 {
        return Err(invalid(
            "Gaussian velocity noise must stay well below the sweep velocity",
        ));
    }
    let n = array.len();
    let fidelities = (0..mc.n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let offsets = sample_offsets(noise, mc, k, n);
            let p = perturbed_angles_with(array, &problem.mode, kin, noise, &offsets)?;
            w_overlap_fidelity(&p, ideal)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(summarize(&fidelities))
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0, 0.0);
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

fn summarize(values: &[f64]) -> MonteCarloSummary {
    let n = values.len();
    let mean = kahan_sum(values.iter().copied()) / n as f64;
    let std = if n > 1 {
        (kahan_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    MonteCarloSummary {
        n_samples: n,
        mean,
        std,
        min,
        max,
        histogram: Histogram::build(values, min, max, HISTOGRAM_BINS),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceBudget {
    /// `N d / v`, s.
    pub total_time: f64,
    /// rad/s
    pub gamma: f64,
    /// rad/s
    pub kappa: f64,
    pub gamma_ratio: f64,
    pub kappa_ratio: f64,
}

/// Time for `n_ions` ions at pitch `d` to cross the cavity at speed `v`, set
/// against the reference decay rates.
pub fn timing_budget(n_ions: usize, pitch: f64, velocity: f64) -> Result<CoherenceBudget> {
    timing_budget_with_rates(n_ions, pitch, velocity, REF_GAMMA, REF_KAPPA)
}

pub fn timing_budget_with_rates(
    n_ions: usize,
    pitch: f64,
    velocity: f64,
    gamma: f64,
    kappa: f64,
) -> Result<CoherenceBudget> {
    if n_ions == 0 {
        return Err(invalid("timing budget needs at least one ion"));
    }
    for (name, value) in [
        ("pitch", pitch),
        ("velocity", velocity),
        ("gamma", gamma),
        ("kappa", kappa),
    ] {
        ensure_finite(name, value)?;
        if value <= 0.0 {
            return Err(invalid(format!("{name} must be positive, got {value}")));
        }
    }
    let total_time = n_ions as f64 * pitch / velocity;
    Ok(CoherenceBudget {
        total_time,
        gamma,
        kappa,
        gamma_ratio: total_time * gamma,
        kappa_ratio: total_time * kappa,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanAxis {
    DeltaV,
    DeltaY,
    DeltaZ,
}

impl ScanAxis {
    pub fn name(self) -> &'static str {
        match self {
            ScanAxis::DeltaV => "delta_v",
            ScanAxis::DeltaY => "delta_y",
            ScanAxis::DeltaZ => "delta_z",
        }
    }

    fn apply(self, base: &NoiseSpec, delta: f64) -> NoiseSpec {
        let mut n = *base;
        match self {
            ScanAxis::DeltaV => n.delta_v = delta,
            ScanAxis::DeltaY => n.delta_y = delta,
            ScanAxis::DeltaZ => n.delta_z = delta,
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    /// SI units of the scanned axis (m/s or m).
    pub delta: f64,
    pub worst_min: f64,
    pub mc_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub axis: ScanAxis,
    pub rows: Vec<ScanRow>,
    /// Row indices where the worst-case minimum rose above the previous row.
    pub anomalies: Vec<usize>,
}

/// Sweeps one noise magnitude over `[lo, hi]` with the other two held at
/// `base`.
pub fn fidelity_scan(
    problem: &DesignProblem,
    base: &NoiseSpec,
    axis: ScanAxis,
    range: (f64, f64),
    points: usize,
    mc: &MonteCarloConfig,
) -> Result<ScanReport> {
    let (lo, hi) = range;
    ensure_finite("scan start", lo)?;
    ensure_finite("scan end", hi)?;
    if lo < 0.0 || hi < lo {
        return Err(invalid(format!("scan range [{lo}, {hi}] must satisfy 0 <= lo <= hi")));
    }
    if points == 0 {
        return Err(invalid("scan needs at least one point"));
    }
    let (array, ideal, kin) = design(problem)?;
    let rows = (0..points)
        .map(|k| {
            let delta = if points == 1 {
                lo
            } else {
                lo + (hi - lo) * k as f64 / (points - 1) as f64
            };
            let noise = axis.apply(base, delta);
            let worst = worst_case_for(&array, &ideal, problem, &kin, &noise)?;
            let mc = monte_carlo_for(&array, &ideal, problem, &kin, &noise, mc)?;
            Ok(ScanRow {
                delta,
                worst_min: worst.min,
                mc_mean: mc.mean,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let anomalies = rows
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].worst_min > w[0].worst_min + 1e-12)
        .map(|(k, _)| k + 1)
        .collect();
    Ok(ScanReport { axis, rows, anomalies })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_noise_is_perfect() {
        let problem = DesignProblem::reference(6);
        let wc = worst_case_fidelity(&problem, &NoiseSpec::zero()).unwrap();
        assert!((wc.min - 1.0).abs() < 1e-12 && (wc.max - 1.0).abs() < 1e-12);
        let mc = MonteCarloConfig {
            n_samples: 1,
            ..MonteCarloConfig::default()
        };
        let s = monte_carlo_fidelity(&problem, &NoiseSpec::zero(), &mc).unwrap();
        assert!((s.mean - 1.0).abs() < 1e-12);
        assert_eq!(s.std, 0.0);
    }

    #[test]
    fn axial_sign_is_degenerate_at_antinode() {
        let problem = DesignProblem::reference(4);
        let noise = NoiseSpec {
            delta_z: 50e-9,
            ..NoiseSpec::zero()
        };
        let wc = worst_case_fidelity(&problem, &noise).unwrap();
        assert!(wc.is_degenerate());
        for pair in wc.per_triple.chunks(2) {
            // consecutive triples differ only in the z sign
            assert_eq!(pair[0].1, pair[1].1);
        }
    }

    #[test]
    fn sampling_is_order_independent() {
        let noise = NoiseSpec::default();
        let mc = MonteCarloConfig {
            per_ion_independent: true,
            seed: 42,
            ..MonteCarloConfig::default()
        };
        let a = sample_offsets(&noise, &mc, 17, 5);
        let b = sample_offsets(&noise, &mc, 17, 8);
        // Ion offsets do not depend on how many ions follow.
        assert_eq!(a.dv, b.dv);
        assert_eq!(a.dy[..], b.dy[..5]);
        assert_eq!(a.dz[..], b.dz[..5]);
        let c = sample_offsets(&noise, &mc, 18, 5);
        assert_ne!(a.dv, c.dv);
        assert!(a.dy.iter().all(|d| d.abs() <= noise.delta_y));
    }

    #[test]
    fn global_mode_shares_offsets() {
        let noise = NoiseSpec::default();
        let mc = MonteCarloConfig::default();
        let o = sample_offsets(&noise, &mc, 3, 4);
        assert!(o.dy.windows(2).all(|w| w[0] == w[1]));
        assert!(o.dz.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(o.dy[0] / noise.delta_y, o.dz[0] / noise.delta_z);
    }

    #[test]
    fn gaussian_offsets_have_the_right_spread() {
        let noise = NoiseSpec {
            delta_v: 1.0,
            ..NoiseSpec::zero()
        };
        let mc = MonteCarloConfig {
            distribution: OffsetDistribution::Gaussian,
            ..MonteCarloConfig::default()
        };
        let draws: Vec<f64> = (0..20_000).map(|k| sample_offsets(&noise, &mc, k, 1).dv).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 0.03);
        assert!((var.sqrt() - 1.0).abs() < 0.03);
    }

    #[test]
    fn histogram_counts_every_sample() {
        let problem = DesignProblem::reference(3);
        let mc = MonteCarloConfig {
            n_samples: 500,
            per_ion_independent: true,
            ..MonteCarloConfig::default()
        };
        let s = monte_carlo_fidelity(&problem, &NoiseSpec::default(), &mc).unwrap();
        assert_eq!(s.histogram.counts.iter().sum::<u64>(), 500);
        assert_eq!(s.histogram.counts.len(), HISTOGRAM_BINS);
        assert!(s.min <= s.mean && s.mean <= s.max && s.max <= 1.0);
    }

    #[test]
    fn budget_reference() {
        let b = timing_budget(10, 20e-6, 800.0).unwrap();
        assert_relative_eq!(b.total_time, 2.5e-7, max_relative = 1e-15);
        assert_relative_eq!(b.gamma_ratio, 2.5e-7 * TAU * 1.69e6, max_relative = 1e-15);
        assert!((b.gamma_ratio - 2.65).abs() < 0.01);
        assert_relative_eq!(
            timing_budget(1, 20e-6, 800.0).unwrap().total_time,
            2.5e-8,
            max_relative = 1e-15
        );
        assert!(timing_budget(0, 20e-6, 800.0).is_err());
        assert!(timing_budget(1, -1.0, 800.0).is_err());
        let k = timing_budget_with_rates(10, 20e-6, 800.0, REF_GAMMA, 1.0).unwrap();
        assert_relative_eq!(k.kappa_ratio, 2.5e-7, max_relative = 1e-15);
    }

    #[test]
    fn scan_endpoints_and_monotonicity() {
        let problem = DesignProblem::reference(4);
        let mc = MonteCarloConfig {
            n_samples: 200,
            ..MonteCarloConfig::default()
        };
        let base = NoiseSpec::zero();
        let report = fidelity_scan(&problem, &base, ScanAxis::DeltaZ, (0.0, 100e-9), 6, &mc).unwrap();
        assert_eq!(report.rows.len(), 6);
        assert!((report.rows[0].worst_min - 1.0).abs() < 1e-12);
        assert!((report.rows[0].mc_mean - 1.0).abs() < 1e-12);
        assert!(report.anomalies.is_empty());
        let end = worst_case_fidelity(
            &problem,
            &NoiseSpec {
                delta_z: 100e-9,
                ..base
            },
        )
        .unwrap();
        assert_eq!(report.rows[5].worst_min, end.min);
        assert!(fidelity_scan(&problem, &base, ScanAxis::DeltaV, (1.0, 0.5), 3, &mc).is_err());
        assert!(fidelity_scan(&problem, &base, ScanAxis::DeltaV, (0.0, 900.0), 3, &mc).is_err());
    }
}

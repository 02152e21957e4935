//! Trap positions that turn a single sweep into an equal-amplitude W state.
//!
//! Equal amplitudes `1/sqrt(N)` with the photon fully absorbed require
//! `sin(theta_1) = 1/sqrt(N)` and `sin(theta_n) = tan(theta_{n-1})` afterwards,
//! whose solution is `theta_n = arcsin(1/sqrt(N - n + 1))`. Each angle is then
//! mapped back to a transverse offset `y_n` through the Gaussian mode profile.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use crate::analytic::PulseSchedule;
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::model::{coupling_strength, effective_duration, pulse_angle, CavityMode, IonArray};

/// Relative slack allowed when a target angle equals the achievable maximum
/// up to rounding.
const MAX_ANGLE_SLACK: f64 = 8.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignProblem {
    pub n_ions: usize,
    pub mode: CavityMode,
    /// m/s
    pub velocity: f64,
    /// Common axial coordinate of every ion, m.
    pub z_plane: f64,
}

impl DesignProblem {
    /// Reference mode and velocity in the `z = 0` plane.
    pub fn reference(n_ions: usize) -> Self {
        Self {
            n_ions,
            mode: CavityMode::default(),
            velocity: crate::model::REF_VELOCITY,
            z_plane: 0.0,
        }
    }

    /// Peak pulse angle available in the `z_plane`.
    pub fn max_pulse_angle(&self) -> Result<f64> {
        self.mode.max_pulse_angle(self.velocity, self.z_plane)
    }

    /// `max_pulse_angle - pi/2`: how much angle is left over for the last
    /// ion, which needs a full `pi/2`.
    pub fn feasibility_margin(&self) -> Result<f64> {
        Ok(self.max_pulse_angle()? - FRAC_PI_2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSolution {
    pub angles: PulseSchedule,
    /// Peak coupling for each ion, rad/s.
    pub couplings: Vec<f64>,
    /// Transverse offsets `y_n >= 0`, m.
    pub positions: Vec<f64>,
    /// `|theta(y_n) - theta_n|` in rad.
    pub residuals: Vec<f64>,
}

impl DesignSolution {
    pub fn n_ions(&self) -> usize {
        self.positions.len()
    }

    /// Ions laid out at the given pitch in the problem's `z_plane`.
    pub fn layout(&self, pitch: f64, z_plane: f64) -> Result<IonArray> {
        IonArray::uniform(pitch, &self.positions, z_plane)
    }
}

/// Angles producing the `N`-ion W state.
///
/// Runs the recursion `sin(theta_n) = tan(theta_{n-1})` in the variable
/// `r_n = 1/sin^2(theta_n)`, where it reads `r_n = r_{n-1} - 1` with
/// `r_1 = N`. This is exact in floating point; evaluating `arcsin(tan(.))`
/// directly loses about 1e-8 rad at the last ion, where arcsin is flat.
pub fn required_angles(n_ions: usize) -> Result<PulseSchedule> {
    if n_ions == 0 {
        return Err(invalid("a W state needs at least one ion"));
    }
    let mut r = n_ions as f64;
    let mut angles = Vec::with_capacity(n_ions);
    for _ in 0..n_ions {
        angles.push((1.0 / r.sqrt()).asin());
        r -= 1.0;
    }
    PulseSchedule::new(angles)
}

/// Closed form `arcsin(1/sqrt(N - n + 1))` for 1-based `n`.
pub fn required_angle_closed_form(n_ions: usize, n: usize) -> f64 {
    (1.0 / ((n_ions - n + 1) as f64).sqrt()).asin()
}

/// Transverse offset `y >= 0` at which an ion in the plane `z_plane` receives
/// the pulse angle `theta_target`.
pub fn invert_coupling(mode: &CavityMode, velocity: f64, theta_target: f64, z_plane: f64) -> Result<f64> {
    let max_angle = check_target(mode, velocity, theta_target, z_plane)?;
    let log_ratio = (max_angle / theta_target).ln().max(0.0);
    Ok(mode.waist * log_ratio.sqrt())
}

/// Same as [`invert_coupling`] but found by bisection on the pulse angle
/// itself, without the logarithm.
pub fn invert_coupling_bisection(mode: &CavityMode, velocity: f64, theta_target: f64, z_plane: f64) -> Result<f64> {
    check_target(mode, velocity, theta_target, z_plane)?;
    let t_eff = effective_duration(mode, velocity)?;
    let angle_at = |y: f64| -> Result<f64> { Ok(pulse_angle(coupling_strength(mode, y, z_plane)?, t_eff)) };

    let mut lo = 0.0;
    let mut hi = 10.0 * mode.waist;
    while angle_at(hi)? > theta_target {
        lo = hi;
        hi *= 2.0;
    }
    if angle_at(lo)? <= theta_target {
        return Ok(lo);
    }
    // angle_at(lo) > target >= angle_at(hi)
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if angle_at(mid)? > theta_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a_lo, a_hi) = (angle_at(lo)?, angle_at(hi)?);
    Ok(if (a_lo - theta_target).abs() <= (a_hi - theta_target).abs() {
        lo
    } else {
        hi
    })
}

fn check_target(mode: &CavityMode, velocity: f64, theta_target: f64, z_plane: f64) -> Result<f64> {
    ensure_finite("theta_target", theta_target)?;
    ensure_finite("z_plane", z_plane)?;
    if theta_target <= 0.0 {
        return Err(invalid(format!("target angle must be positive, got {theta_target}")));
    }
    let max_angle = mode.max_pulse_angle(velocity, z_plane)?;
    if theta_target > max_angle * (1.0 + MAX_ANGLE_SLACK) {
        return Err(Error::InfeasibleDesign {
            ion: 0,
            required: theta_target,
            max_angle,
            margin: max_angle - FRAC_PI_2,
        });
    }
    Ok(max_angle)
}

pub fn solve_positions(problem: &DesignProblem) -> Result<DesignSolution> {
    let max_angle = problem.max_pulse_angle()?;
    let angles = required_angles(problem.n_ions)?;
    if let Some(k) = angles
        .angles()
        .iter()
        .position(|&a| a > max_angle * (1.0 + MAX_ANGLE_SLACK))
    {
        return Err(Error::InfeasibleDesign {
            ion: k + 1,
            required: angles.angles()[k],
            max_angle,
            margin: max_angle - FRAC_PI_2,
        });
    }
    let t_eff = effective_duration(&problem.mode, problem.velocity)?;
    let mut couplings = Vec::with_capacity(problem.n_ions);
    let mut positions = Vec::with_capacity(problem.n_ions);
    let mut residuals = Vec::with_capacity(problem.n_ions);
    for &theta in angles.angles() {
        let y = invert_coupling(&problem.mode, problem.velocity, theta, problem.z_plane)?;
        let omega = coupling_strength(&problem.mode, y, problem.z_plane)?;
        residuals.push((pulse_angle(omega, t_eff) - theta).abs());
        couplings.push(omega);
        positions.push(y);
    }
    Ok(DesignSolution {
        angles,
        couplings,
        positions,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedCheckReport {
    pub passed: bool,
    /// Largest `|y_{n+1}(N) - y_n(N-1)|` over all consecutive pairs, m.
    pub max_deviation: f64,
    /// Pairs `(N - 1, N)` that were compared.
    pub compared: Vec<(usize, usize)>,
}

/// Checks that dropping the first ion of an `N`-ion design leaves the
/// `(N-1)`-ion design: `theta_n` depends only on `N - n + 1`.
pub fn nested_w_property_check(solutions: &BTreeMap<usize, DesignSolution>, tolerance: f64) -> NestedCheckReport {
    let mut max_deviation: f64 = 0.0;
    let mut compared = Vec::new();
    for (&n, bigger) in solutions {
        if n < 2 {
            continue;
        }
        let Some(smaller) = solutions.get(&(n - 1)) else {
            continue;
        };
        compared.push((n - 1, n));
        let tail = bigger.positions.get(1..).unwrap_or_default();
        if tail.len() != smaller.positions.len() {
            max_deviation = f64::INFINITY;
            continue;
        }
        for (a, b) in tail.iter().zip(&smaller.positions) {
            max_deviation = max_deviation.max((a - b).abs());
        }
    }
    NestedCheckReport {
        passed: max_deviation <= tolerance,
        max_deviation,
        compared,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::evolve_sequential;
    use crate::model::REF_VELOCITY;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    const UM: f64 = 1e-6;

    #[test]
    #[allow(clippy::approx_constant)] // tabulated to five decimals
    fn small_schedules() {
        assert_eq!(required_angles(1).unwrap().angles(), &[FRAC_PI_2]);
        let two = required_angles(2).unwrap();
        assert_relative_eq!(two.angles()[0], FRAC_PI_4, max_relative = 1e-15);
        assert_eq!(two.angles()[1], FRAC_PI_2);
        let three = required_angles(3).unwrap();
        for (a, e) in three.angles().iter().zip([0.61548, 0.78540, 1.57080]) {
            assert!((a - e).abs() < 5e-6);
        }
        let s = evolve_sequential(&three).unwrap();
        for a in &s.ion_amplitudes {
            assert_relative_eq!(a.norm(), 1.0 / 3f64.sqrt(), max_relative = 1e-14);
        }
        assert!(required_angles(0).is_err());
    }

    #[test]
    fn inversion_reference_points() {
        let mode = CavityMode::default();
        let max = mode.max_pulse_angle(REF_VELOCITY, 0.0).unwrap();
        assert_eq!(invert_coupling(&mode, REF_VELOCITY, max, 0.0).unwrap(), 0.0);
        let y = invert_coupling(&mode, REF_VELOCITY, FRAC_PI_2, 0.0).unwrap();
        assert!((y / UM - 5.2083).abs() < 1e-3);
        let y = invert_coupling(&mode, REF_VELOCITY, FRAC_PI_4, 0.0).unwrap();
        assert!((y / UM - 9.8204).abs() < 1e-3);
    }

    #[test]
    fn inversion_errors() {
        let mode = CavityMode::default();
        let max = mode.max_pulse_angle(REF_VELOCITY, 0.0).unwrap();
        match invert_coupling(&mode, REF_VELOCITY, max * 1.01, 0.0) {
            Err(Error::InfeasibleDesign { max_angle, .. }) => assert_eq!(max_angle, max),
            other => panic!("expected infeasible design, got {other:?}"),
        }
        assert!(matches!(
            invert_coupling(&mode, REF_VELOCITY, 0.0, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            invert_coupling(&mode, REF_VELOCITY, -0.1, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        // Beyond the standing-wave node nothing is reachable.
        let z = 0.3 * mode.wavelength;
        assert!(matches!(
            invert_coupling(&mode, REF_VELOCITY, 0.1, z),
            Err(Error::InfeasibleDesign { .. })
        ));
    }

    #[test]
    fn bisection_matches_closed_form() {
        let mode = CavityMode::default();
        for theta in [1e-3, 0.1, FRAC_PI_4, 1.0, FRAC_PI_2, 2.0] {
            let a = invert_coupling(&mode, REF_VELOCITY, theta, 0.0).unwrap();
            let b = invert_coupling_bisection(&mode, REF_VELOCITY, theta, 0.0).unwrap();
            assert!((a - b).abs() < 1e-15, "theta {theta}: {a} vs {b}");
        }
        // Tiny targets need the bracket to grow past 10 w.
        let a = invert_coupling(&mode, REF_VELOCITY, 1e-60, 0.0).unwrap();
        let b = invert_coupling_bisection(&mode, REF_VELOCITY, 1e-60, 0.0).unwrap();
        assert!(a > 10.0 * mode.waist);
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn table_rows() {
        let row10 = [
            13.6265, 13.4244, 13.1936, 12.9253, 12.6058, 12.2126, 11.7042, 10.9918, 9.8204, 5.2083,
        ];
        let sol = solve_positions(&DesignProblem::reference(10)).unwrap();
        for (y, e) in sol.positions.iter().zip(row10) {
            assert!((y / UM - e).abs() <= 1e-3, "{} vs {e}", y / UM);
        }
        let sol5 = solve_positions(&DesignProblem::reference(5)).unwrap();
        for (y, e) in sol5.positions.iter().zip(&row10[5..]) {
            assert!((y / UM - e).abs() <= 1e-3);
        }
        assert!(sol.positions.windows(2).all(|p| p[1] < p[0]));
        assert!(sol.residuals.iter().all(|&r| r <= 1e-12));
    }

    #[test]
    fn too_fast_is_infeasible() {
        let problem = DesignProblem {
            velocity: 1600.0,
            ..DesignProblem::reference(2)
        };
        assert_relative_eq!(problem.max_pulse_angle().unwrap(), 1.0302, max_relative = 1e-4);
        match solve_positions(&problem) {
            Err(Error::InfeasibleDesign { ion, margin, .. }) => {
                assert_eq!(ion, 2);
                assert!(margin < 0.0);
            }
            other => panic!("expected infeasible design, got {other:?}"),
        }
    }

    #[test]
    fn nested_check() {
        let table: BTreeMap<usize, DesignSolution> = (1..=10)
            .map(|n| (n, solve_positions(&DesignProblem::reference(n)).unwrap()))
            .collect();
        let report = nested_w_property_check(&table, 1e-12);
        assert!(report.passed, "{report:?}");
        assert_eq!(report.compared.len(), 9);

        let single: BTreeMap<_, _> = [(4, table[&4].clone())].into_iter().collect();
        let vacuous = nested_w_property_check(&single, 1e-12);
        assert!(vacuous.passed && vacuous.compared.is_empty());

        let mut broken = table.clone();
        broken.get_mut(&7).unwrap().positions[3] += 1e-2 * UM;
        let report = nested_w_property_check(&broken, 1e-12);
        assert!(!report.passed);
        assert_relative_eq!(report.max_deviation, 1e-8, max_relative = 1e-6);
    }
}

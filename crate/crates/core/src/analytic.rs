//! Closed-form sequential evolution in the single-excitation subspace.
//!
//! The photon starts in the cavity (`B = 1`) and each ion in turn receives a
//! resonant pulse of angle `theta_n`. Because `|g, 0>` is dark under the
//! resonant coupling, an ion that has been passed keeps its amplitude, giving
//!
//! ```text
//! A_n = -i sin(theta_n) prod_{j<n} cos(theta_j)
//! B   = prod_j cos(theta_j)
//! ```

use std::fmt;

use num_complex::Complex64 as C64;

use crate::error::{ensure_finite, invalid, Result};
use crate::model::{coupling_strength, effective_duration, pulse_angle, CavityMode, IonArray, SweepKinematics};

/// Reference velocity uncertainty, 0.5 m/s.
pub const REF_DELTA_V: f64 = 0.5;
/// Reference transverse position uncertainty, 50 nm.
pub const REF_DELTA_Y: f64 = 50e-9;
/// Reference axial position uncertainty, 50 nm.
pub const REF_DELTA_Z: f64 = 50e-9;

/// Amplitudes `A_1..A_N` (one ion excited, cavity empty) and `B` (all ions in
/// the ground state, one photon).
#[derive(Debug, Clone, PartialEq)]
pub struct SingleExcitationState {
    pub ion_amplitudes: Vec<C64>,
    pub photon_amplitude: C64,
}

impl SingleExcitationState {
    /// `|g...g>|1>` with no ions registered yet.
    pub fn photon() -> Self {
        Self {
            ion_amplitudes: Vec::new(),
            photon_amplitude: C64::new(1.0, 0.0),
        }
    }

    /// `|g...g>|1>` over `n_ions` ions.
    pub fn photon_with_ions(n_ions: usize) -> Self {
        Self {
            ion_amplitudes: vec![C64::new(0.0, 0.0); n_ions],
            photon_amplitude: C64::new(1.0, 0.0),
        }
    }

    pub fn n_ions(&self) -> usize {
        self.ion_amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.ion_amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() + self.photon_amplitude.norm_sqr()
    }

    /// `<self|other>`; both states must cover the same ions.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.n_ions() != other.n_ions() {
            return Err(invalid(format!(
                "states cover {} and {} ions",
                self.n_ions(),
                other.n_ions()
            )));
        }
        let ions: C64 = self
            .ion_amplitudes
            .iter()
            .zip(&other.ion_amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(ions + self.photon_amplitude.conj() * other.photon_amplitude)
    }

    /// Amplitudes packed as `[A_1, .., A_N, B]`.
    pub fn to_vector(&self) -> Vec<C64> {
        let mut v = self.ion_amplitudes.clone();
        v.push(self.photon_amplitude);
        v
    }

    /// Inverse of [`to_vector`](Self::to_vector).
    pub fn from_vector(v: &[C64]) -> Result<Self> {
        let (photon, ions) = v
            .split_last()
            .ok_or_else(|| invalid("state vector must hold at least the photon amplitude"))?;
        Ok(Self {
            ion_amplitudes: ions.to_vec(),
            photon_amplitude: *photon,
        })
    }
}

/// Rabi angles `theta_n = Omega_n t_eff` in order of encounter.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    angles: Vec<f64>,
}

impl PulseSchedule {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(invalid("pulse schedule must contain at least one angle"));
        }
        for &a in &angles {
            ensure_finite("pulse angle", a)?;
        }
        Ok(Self { angles })
    }

    /// Angles delivered to each ion of `array` by an unperturbed sweep.
    pub fn for_array(array: &IonArray, mode: &CavityMode, kin: &SweepKinematics) -> Result<Self> {
        let t_eff = kin.t_eff(mode)?;
        let angles = array
            .sites()
            .iter()
            .map(|s| Ok(pulse_angle(coupling_strength(mode, s.y, s.z)?, t_eff)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(angles)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// Excites one more ion with a pulse of angle `theta`.
pub fn step_one_ion(state: &SingleExcitationState, theta: f64) -> SingleExcitationState {
    let (s, c) = theta.sin_cos();
    let b = state.photon_amplitude;
    let mut ion_amplitudes = Vec::with_capacity(state.n_ions() + 1);
    ion_amplitudes.extend_from_slice(&state.ion_amplitudes);
    ion_amplitudes.push(C64::new(0.0, -s) * b);
    SingleExcitationState {
        ion_amplitudes,
        photon_amplitude: b * c,
    }
}

pub fn evolve_sequential(schedule: &PulseSchedule) -> Result<SingleExcitationState> {
    if schedule.is_empty() {
        return Err(invalid("empty pulse schedule"));
    }
    let mut b = C64::new(1.0, 0.0);
    let mut ion_amplitudes = Vec::with_capacity(schedule.len());
    for &theta in schedule.angles() {
        let (s, c) = theta.sin_cos();
        ion_amplitudes.push(C64::new(0.0, -s) * b);
        b *= c;
    }
    Ok(SingleExcitationState {
        ion_amplitudes,
        photon_amplitude: b,
    })
}

/// Real factors `sin(theta_n) prod_{j<n} cos(theta_j)` of the ion amplitudes,
/// i.e. the amplitudes with the common `-i` removed.
pub fn real_amplitudes(schedule: &PulseSchedule) -> Vec<f64> {
    let mut b = 1.0;
    schedule
        .angles()
        .iter()
        .map(|&theta| {
            let (s, c) = theta.sin_cos();
            let a = s * b;
            b *= c;
            a
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

/// One global sign per noise parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignTriple {
    pub v: Sign,
    pub y: Sign,
    pub z: Sign,
}

impl SignTriple {
    /// The eight corners of the `(dv, dy, dz)` box, `(+,+,+)` first.
    pub fn all() -> [SignTriple; 8] {
        let signs = [Sign::Plus, Sign::Minus];
        let mut out = [SignTriple {
            v: Sign::Plus,
            y: Sign::Plus,
            z: Sign::Plus,
        }; 8];
        let mut k = 0;
        for v in signs {
            for y in signs {
                for z in signs {
                    out[k] = SignTriple { v, y, z };
                    k += 1;
                }
            }
        }
        out
    }
}

impl fmt::Display for SignTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.v.symbol(), self.y.symbol(), self.z.symbol())
    }
}

/// Magnitudes of the sweep-velocity and trap-position uncertainties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// m/s
    pub delta_v: f64,
    /// m
    pub delta_y: f64,
    /// m
    pub delta_z: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            delta_v: REF_DELTA_V,
            delta_y: REF_DELTA_Y,
            delta_z: REF_DELTA_Z,
        }
    }
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self {
            delta_v: 0.0,
            delta_y: 0.0,
            delta_z: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("delta_v", self.delta_v),
            ("delta_y", self.delta_y),
            ("delta_z", self.delta_z),
        ] {
            ensure_finite(name, value)?;
            if value < 0.0 {
                return Err(invalid(format!("{name} must be non-negative, got {value}")));
            }
        }
        Ok(())
    }
}

/// Concrete offsets applied to one sweep: a single velocity offset and one
/// position offset per ion.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseOffsets {
    pub dv: f64,
    pub dy: Vec<f64>,
    pub dz: Vec<f64>,
}

impl NoiseOffsets {
    /// The same signed offset on every ion.
    pub fn global(noise: &NoiseSpec, signs: SignTriple, n_ions: usize) -> Self {
        Self {
            dv: signs.v.factor() * noise.delta_v,
            dy: vec![signs.y.factor() * noise.delta_y; n_ions],
            dz: vec![signs.z.factor() * noise.delta_z; n_ions],
        }
    }
}

/// Pulse angles under the worst-case reading of the `v +- dv, y_n +- dy,
/// z_n +- dz` perturbation, one sign per parameter for the whole sweep.
pub fn perturbed_angles(
    array: &IonArray,
    mode: &CavityMode,
    kin: &SweepKinematics,
    noise: &NoiseSpec,
    signs: SignTriple,
) -> Result<PulseSchedule> {
    noise.validate()?;
    perturbed_angles_with(
        array,
        mode,
        kin,
        noise,
        &NoiseOffsets::global(noise, signs, array.len()),
    )
}

/// Pulse angles with explicit offsets (sampled or enumerated).
///
/// `noise` bounds the velocity offset: `v - delta_v` must stay positive even
/// when the realised offset is smaller.
pub fn perturbed_angles_with(
    array: &IonArray,
    mode: &CavityMode,
    kin: &SweepKinematics,
    noise: &NoiseSpec,
    offsets: &NoiseOffsets,
) -> Result<PulseSchedule> {
    if offsets.dy.len() != array.len() || offsets.dz.len() != array.len() {
        return Err(invalid(format!(
            "offsets cover {}/{} ions, array has {}",
            offsets.dy.len(),
            offsets.dz.len(),
            array.len()
        )));
    }
    if kin.velocity - noise.delta_v <= 0.0 {
        return Err(invalid(format!(
            "velocity {} m/s minus uncertainty {} m/s must stay positive",
            kin.velocity, noise.delta_v
        )));
    }
    let t_eff = effective_duration(mode, kin.velocity + offsets.dv)?;
    let angles = array
        .sites()
        .iter()
        .zip(offsets.dy.iter().zip(&offsets.dz))
        .map(|(s, (&dy, &dz))| Ok(pulse_angle(coupling_strength(mode, s.y + dy, s.z + dz)?, t_eff)))
        .collect::<Result<Vec<_>>>()?;
    PulseSchedule::new(angles)
}

/// Overlap `F_N = sum_n A_n A_n^flu` between the ideal and perturbed ion
/// amplitudes, with the common `-i` phase dropped. The photon component of the
/// perturbed state is not included.
pub fn w_overlap_fidelity(perturbed: &PulseSchedule, ideal: &PulseSchedule) -> Result<f64> {
    if perturbed.len() != ideal.len() {
        return Err(invalid(format!(
            "schedules have {} and {} ions",
            perturbed.len(),
            ideal.len()
        )));
    }
    Ok(real_amplitudes(ideal)
        .iter()
        .zip(real_amplitudes(perturbed))
        .map(|(a, b)| a * b)
        .sum())
}

/// Extension diagnostic: `|<W|psi>|^2 / <psi|psi>_ions`, the overlap squared
/// after post-selecting on the photon having been absorbed.
pub fn normalized_fidelity(perturbed: &PulseSchedule, ideal: &PulseSchedule) -> Result<f64> {
    let overlap = w_overlap_fidelity(perturbed, ideal)?;
    let absorbed: f64 = real_amplitudes(perturbed).iter().map(|a| a * a).sum();
    if absorbed == 0.0 {
        return Ok(0.0);
    }
    Ok(overlap * overlap / absorbed)
}

//! Cavity mode geometry, ion layout and pulse-area primitives.
//!
//! Everything here is SI: metres, seconds, rad/s. The TEM00 standing-wave mode
//! couples to an ion at `(x, y, z)` with strength
//!
//! ```text
//! g(x, y, z) = omega0 * exp(-(x^2 + y^2) / w^2) * cos(2 pi z / lambda)
//! ```
//!
//! where `x` is measured along the sweep axis relative to the cavity centre. An
//! ion crossed at speed `v` sees a Gaussian pulse in time whose area equals the
//! peak coupling times `t_eff = sqrt(pi) w / v`.

use std::f64::consts::{PI, TAU};

use crate::error::{ensure_finite, invalid, Result};

/// Peak vacuum Rabi coupling, 2 pi x 14.8 MHz.
pub const REF_OMEGA0: f64 = TAU * 14.8e6;
/// Mode waist, 10 um.
pub const REF_WAIST: f64 = 10e-6;
/// Mode wavelength, 866 nm.
pub const REF_WAVELENGTH: f64 = 866e-9;
/// Ion pitch along the sweep axis, 20 um.
pub const REF_PITCH: f64 = 20e-6;
/// Cavity sweep velocity, 800 m/s.
pub const REF_VELOCITY: f64 = 800.0;

const PITCH_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityMode {
    /// Peak coupling at the mode maximum, rad/s.
    pub omega0: f64,
    /// 1/e field radius, m.
    pub waist: f64,
    /// m.
    pub wavelength: f64,
}

impl Default for CavityMode {
    fn default() -> Self {
        Self {
            omega0: REF_OMEGA0,
            waist: REF_WAIST,
            wavelength: REF_WAVELENGTH,
        }
    }
}

impl CavityMode {
    pub fn new(omega0: f64, waist: f64, wavelength: f64) -> Result<Self> {
        let mode = Self {
            omega0,
            waist,
            wavelength,
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("omega0", self.omega0),
            ("waist", self.waist),
            ("wavelength", self.wavelength),
        ] {
            ensure_finite(name, value)?;
            if value <= 0.0 {
                return Err(invalid(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }

    /// Standing-wave factor `cos(2 pi z / lambda)`.
    pub fn axial_factor(&self, z: f64) -> f64 {
        (TAU * z / self.wavelength).cos()
    }

    /// Largest pulse angle an ion in the plane `z` can receive, i.e. the
    /// angle at `y = 0`.
    pub fn max_pulse_angle(&self, velocity: f64, z: f64) -> Result<f64> {
        let t_eff = effective_duration(self, velocity)?;
        Ok(pulse_angle(coupling_strength(self, 0.0, z)?, t_eff))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonSite {
    /// 1-based order of encounter.
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Ions in order of encounter, evenly spaced along the sweep axis.
#[derive(Debug, Clone, PartialEq)]
pub struct IonArray {
    sites: Vec<IonSite>,
    pitch: f64,
}

impl IonArray {
    pub fn new(sites: Vec<IonSite>, pitch: f64) -> Result<Self> {
        ensure_finite("pitch", pitch)?;
        if pitch <= 0.0 {
            return Err(invalid(format!("pitch must be positive, got {pitch}")));
        }
        if sites.is_empty() {
            return Err(invalid("ion array must contain at least one ion"));
        }
        for (k, site) in sites.iter().enumerate() {
            if site.index != k + 1 {
                return Err(invalid(format!(
                    "ion at position {k} has index {}, expected {}",
                    site.index,
                    k + 1
                )));
            }
            ensure_finite("x", site.x)?;
            ensure_finite("y", site.y)?;
            ensure_finite("z", site.z)?;
        }
        for pair in sites.windows(2) {
            let gap = pair[1].x - pair[0].x;
            if (gap - pitch).abs() > PITCH_TOLERANCE {
                return Err(invalid(format!(
                    "ions {} and {} are {gap} m apart, expected pitch {pitch} m",
                    pair[0].index, pair[1].index
                )));
            }
        }
        Ok(Self { sites, pitch })
    }

    /// Lays ions out at `x = (n - 1) * pitch` with the given transverse
    /// offsets and a common `z`.
    pub fn uniform(pitch: f64, ys: &[f64], z: f64) -> Result<Self> {
        let sites = ys
            .iter()
            .enumerate()
            .map(|(k, &y)| IonSite {
                index: k + 1,
                x: k as f64 * pitch,
                y,
                z,
            })
            .collect();
        Self::new(sites, pitch)
    }

    pub fn sites(&self) -> &[IonSite] {
        &self.sites
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepKinematics {
    /// m/s along +x.
    pub velocity: f64,
}

impl Default for SweepKinematics {
    fn default() -> Self {
        Self { velocity: REF_VELOCITY }
    }
}

impl SweepKinematics {
    pub fn new(velocity: f64) -> Result<Self> {
        ensure_finite("velocity", velocity)?;
        if velocity <= 0.0 {
            return Err(invalid(format!("velocity must be positive, got {velocity}")));
        }
        Ok(Self { velocity })
    }

    pub fn t_eff(&self, mode: &CavityMode) -> Result<f64> {
        effective_duration(mode, self.velocity)
    }
}

/// TEM00 mode amplitude at `(x, y, z)`, in `[-1, 1]`.
pub fn mode_profile(mode: &CavityMode, x: f64, y: f64, z: f64) -> Result<f64> {
    mode.validate()?;
    ensure_finite("x", x)?;
    ensure_finite("y", y)?;
    ensure_finite("z", z)?;
    let w2 = mode.waist * mode.waist;
    Ok((-(x * x + y * y) / w2).exp() * mode.axial_factor(z))
}

/// Peak coupling seen by an ion at transverse offset `y` in the plane `z`.
/// The sign of the standing-wave factor is kept.
pub fn coupling_strength(mode: &CavityMode, y: f64, z: f64) -> Result<f64> {
    Ok(mode.omega0 * mode_profile(mode, 0.0, y, z)?)
}

pub fn effective_duration(mode: &CavityMode, velocity: f64) -> Result<f64> {
    mode.validate()?;
    ensure_finite("velocity", velocity)?;
    if velocity <= 0.0 {
        return Err(invalid(format!("velocity must be positive, got {velocity}")));
    }
    Ok(PI.sqrt() * mode.waist / velocity)
}

/// Accumulated Rabi angle `omega * t_eff`. No range reduction.
pub fn pulse_angle(omega: f64, t_eff: f64) -> f64 {
    omega * t_eff
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn profile_reference_points() {
        let mode = CavityMode::default();
        assert_eq!(mode_profile(&mode, 0.0, 0.0, 0.0).unwrap(), 1.0);
        let node = mode_profile(&mode, 0.0, 0.0, mode.wavelength / 4.0).unwrap();
        assert!(node.abs() < 1e-15);
        let e = mode_profile(&mode, 0.0, mode.waist, 0.0).unwrap();
        assert_relative_eq!(e, (-1.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn profile_rejects_non_finite() {
        let mode = CavityMode::default();
        assert!(mode_profile(&mode, f64::NAN, 0.0, 0.0).is_err());
        assert!(mode_profile(&mode, 0.0, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn coupling_peak_and_tail() {
        let mode = CavityMode::default();
        let peak = coupling_strength(&mode, 0.0, 0.0).unwrap();
        assert_relative_eq!(peak, 9.2991e7, max_relative = 1e-5);
        assert_eq!(coupling_strength(&mode, 1.0, 0.0).unwrap(), 0.0);
        // Past the node the sign flips.
        let z = 0.3 * mode.wavelength;
        assert!(coupling_strength(&mode, 0.0, z).unwrap() < 0.0);
    }

    #[test]
    fn effective_duration_scaling() {
        let mode = CavityMode::default();
        let base = effective_duration(&mode, 800.0).unwrap();
        assert_relative_eq!(base, 2.21557e-8, max_relative = 5e-6);
        assert_relative_eq!(
            effective_duration(&mode, 1600.0).unwrap(),
            base / 2.0,
            max_relative = 1e-15
        );
        let wide = CavityMode { waist: 20e-6, ..mode };
        assert_relative_eq!(
            effective_duration(&wide, 800.0).unwrap(),
            2.0 * base,
            max_relative = 1e-15
        );
        assert!(effective_duration(&mode, 0.0).is_err());
        assert!(effective_duration(&mode, -1.0).is_err());
    }

    #[test]
    fn pulse_angle_reference() {
        let mode = CavityMode::default();
        let t_eff = effective_duration(&mode, REF_VELOCITY).unwrap();
        assert_relative_eq!(pulse_angle(mode.omega0, t_eff), 2.060_281_358_83, max_relative = 1e-11);
        assert_eq!(pulse_angle(0.0, t_eff), 0.0);
        let omega = coupling_strength(&mode, 5.2083e-6, 0.0).unwrap();
        assert!((pulse_angle(omega, t_eff) - PI / 2.0).abs() < 2e-4);
    }

    #[test]
    fn rejects_bad_mode() {
        assert!(CavityMode::new(0.0, 1e-5, 1e-6).is_err());
        assert!(CavityMode::new(1.0, -1e-5, 1e-6).is_err());
        assert!(CavityMode::new(1.0, 1e-5, f64::NAN).is_err());
    }

    #[test]
    fn array_pitch_is_enforced() {
        let ok = IonArray::uniform(20e-6, &[1e-6, 2e-6, 3e-6], 0.0).unwrap();
        assert_eq!(ok.len(), 3);
        assert_eq!(ok.sites()[2].index, 3);
        let mut sites = ok.sites().to_vec();
        sites[2].x += 1e-9;
        assert!(IonArray::new(sites, 20e-6).is_err());
        assert!(IonArray::uniform(20e-6, &[], 0.0).is_err());
        assert!(IonArray::uniform(0.0, &[0.0], 0.0).is_err());
    }
}

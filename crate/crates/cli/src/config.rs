//! Flat `key = value` run configuration with unit-suffixed quantities.
//!
//! ```text
//! # comments start with '#'
//! omega0     = 14.8 MHz_x2pi
//! waist      = 10 um
//! velocity   = 800 m/s
//! n_ions     = 10
//! pitch_sweep = 10, 20, 40, 80, 100 um
//! ```
//!
//! Dimensional values must carry a unit. Unknown keys are rejected. A CSV
//! written by this tool can be passed back as a config file: its `# cfg`
//! header lines hold the complete configuration.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cavitybus_core::analytic::{REF_DELTA_V, REF_DELTA_Y, REF_DELTA_Z};
use cavitybus_core::fluctuation::{REF_GAMMA, REF_KAPPA};
use cavitybus_core::model::{REF_OMEGA0, REF_PITCH, REF_VELOCITY, REF_WAIST, REF_WAVELENGTH};
use cavitybus_core::{
    CavityMode, DesignProblem, GridOptions, MonteCarloConfig, NoiseSpec, OffsetDistribution, ScanAxis,
};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Marker on the first line of every CSV this tool writes.
pub const CSV_MAGIC: &str = "# cavitybus";
/// Prefix of the header lines that carry the configuration.
pub const CFG_PREFIX: &str = "# cfg ";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub omega0: f64,
    pub waist: f64,
    pub wavelength: f64,
    pub velocity: f64,
    pub n_ions: usize,
    pub pitch: f64,
    pub z_plane: f64,
    pub delta_v: f64,
    pub delta_y: f64,
    pub delta_z: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub distribution: OffsetDistribution,
    pub per_ion_independent: bool,
    pub margin: f64,
    pub dt_divisor: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub pitch_sweep: Vec<f64>,
    pub scan_axis: ScanAxis,
    pub scan_min: f64,
    pub scan_max: f64,
    pub scan_points: usize,
    pub output_dir: PathBuf,
    pub trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grid = GridOptions::default();
        Self {
            omega0: REF_OMEGA0,
            waist: REF_WAIST,
            wavelength: REF_WAVELENGTH,
            velocity: REF_VELOCITY,
            n_ions: 10,
            pitch: REF_PITCH,
            z_plane: 0.0,
            delta_v: REF_DELTA_V,
            delta_y: REF_DELTA_Y,
            delta_z: REF_DELTA_Z,
            n_samples: 10_000,
            seed: 0,
            distribution: OffsetDistribution::Uniform,
            per_ion_independent: false,
            margin: grid.margin,
            dt_divisor: grid.dt_divisor,
            gamma: REF_GAMMA,
            kappa: REF_KAPPA,
            pitch_sweep: vec![10e-6, 20e-6, 40e-6, 80e-6, 100e-6],
            scan_axis: ScanAxis::DeltaZ,
            scan_min: 0.0,
            scan_max: 100e-9,
            scan_points: 11,
            output_dir: PathBuf::from("cavitybus-out"),
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Length,
    Speed,
    Rate,
    Count,
    Seed,
    Real,
    Flag,
    Distribution,
    Axis,
    Path,
    LengthList,
    /// Length or speed depending on `scan_axis`.
    ScanValue,
}

const KEYS: &[(&str, Kind)] = &[
    ("omega0", Kind::Rate),
    ("waist", Kind::Length),
    ("wavelength", Kind::Length),
    ("velocity", Kind::Speed),
    ("n_ions", Kind::Count),
    ("pitch", Kind::Length),
    ("z_plane", Kind::Length),
    ("delta_v", Kind::Speed),
    ("delta_y", Kind::Length),
    ("delta_z", Kind::Length),
    ("n_samples", Kind::Count),
    ("seed", Kind::Seed),
    ("distribution", Kind::Distribution),
    ("per_ion_independent", Kind::Flag),
    ("margin", Kind::Real),
    ("dt_divisor", Kind::Real),
    ("gamma", Kind::Rate),
    ("kappa", Kind::Rate),
    ("pitch_sweep", Kind::LengthList),
    ("scan_axis", Kind::Axis),
    ("scan_min", Kind::ScanValue),
    ("scan_max", Kind::ScanValue),
    ("scan_points", Kind::Count),
    ("output_dir", Kind::Path),
    ("trace", Kind::Flag),
];

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn split_unit(value: &str) -> (&str, &str) {
    match value.split_once(char::is_whitespace) {
        Some((num, unit)) => (num.trim(), unit.trim()),
        None => (value.trim(), ""),
    }
}

fn parse_number(key: &str, s: &str) -> Result<f64, CliError> {
    let x: f64 = s.parse().map_err(|_| bad(format!("{key}: '{s}' is not a number")))?;
    if !x.is_finite() {
        return Err(bad(format!("{key}: value must be finite")));
    }
    Ok(x)
}

fn length_scale(key: &str, unit: &str) -> Result<f64, CliError> {
    Ok(match unit {
        "m" => 1.0,
        "mm" => 1e-3,
        "um" | "μm" => 1e-6,
        "nm" => 1e-9,
        "" => return Err(bad(format!("{key}: length needs a unit (m, mm, um, nm)"))),
        other => return Err(bad(format!("{key}: unknown length unit '{other}'"))),
    })
}

fn parse_with_unit(key: &str, value: &str, kind: Kind) -> Result<f64, CliError> {
    let (num, unit) = split_unit(value);
    let x = parse_number(key, num)?;
    let scale = match kind {
        Kind::Length => length_scale(key, unit)?,
        Kind::Speed => match unit {
            "m/s" => 1.0,
            "" => return Err(bad(format!("{key}: speed needs a unit (m/s)"))),
            other => return Err(bad(format!("{key}: unknown speed unit '{other}'"))),
        },
        Kind::Rate => match unit {
            "rad/s" => 1.0,
            "Hz_x2pi" => TAU,
            "kHz_x2pi" => TAU * 1e3,
            "MHz_x2pi" => TAU * 1e6,
            "" => return Err(bad(format!("{key}: rate needs a unit (rad/s, kHz_x2pi, MHz_x2pi)"))),
            other => return Err(bad(format!("{key}: unknown rate unit '{other}'"))),
        },
        _ => unreachable!("not a dimensional kind"),
    };
    Ok(x * scale)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(bad(format!("{key}: expected true or false, got '{other}'"))),
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim();
        let value = value.trim();
        let kind = KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, kind)| *kind)
            .ok_or_else(|| bad(format!("unknown key '{key}'")))?;
        match kind {
            Kind::Length | Kind::Speed | Kind::Rate => {
                let x = parse_with_unit(key, value, kind)?;
                match key {
                    "omega0" => self.omega0 = x,
                    "waist" => self.waist = x,
                    "wavelength" => self.wavelength = x,
                    "velocity" => self.velocity = x,
                    "pitch" => self.pitch = x,
                    "z_plane" => self.z_plane = x,
                    "delta_v" => self.delta_v = x,
                    "delta_y" => self.delta_y = x,
                    "delta_z" => self.delta_z = x,
                    "gamma" => self.gamma = x,
                    "kappa" => self.kappa = x,
                    _ => unreachable!(),
                }
            }
            Kind::Count => {
                let n: usize = value
                    .parse()
                    .map_err(|_| bad(format!("{key}: '{value}' is not a non-negative integer")))?;
                match key {
                    "n_ions" => self.n_ions = n,
                    "n_samples" => self.n_samples = n,
                    "scan_points" => self.scan_points = n,
                    _ => unreachable!(),
                }
            }
            Kind::Seed => {
                self.seed = value
                    .parse()
                    .map_err(|_| bad(format!("seed: '{value}' is not an unsigned 64-bit integer")))?;
            }
            Kind::Real => {
                let x = parse_number(key, value)?;
                match key {
                    "margin" => self.margin = x,
                    "dt_divisor" => self.dt_divisor = x,
                    _ => unreachable!(),
                }
            }
            Kind::Flag => {
                let b = parse_bool(key, value)?;
                match key {
                    "per_ion_independent" => self.per_ion_independent = b,
                    "trace" => self.trace = b,
                    _ => unreachable!(),
                }
            }
            Kind::Distribution => {
                self.distribution = match value {
                    "uniform" => OffsetDistribution::Uniform,
                    "gaussian" => OffsetDistribution::Gaussian,
                    other => {
                        return Err(bad(format!(
                            "distribution: expected uniform or gaussian, got '{other}'"
                        )))
                    }
                }
            }
            Kind::Axis => {
                self.scan_axis = match value {
                    "delta_v" => ScanAxis::DeltaV,
                    "delta_y" => ScanAxis::DeltaY,
                    "delta_z" => ScanAxis::DeltaZ,
                    other => return Err(bad(format!("scan_axis: unknown axis '{other}'"))),
                }
            }
            Kind::ScanValue => {
                // Accept either a speed or a length; the axis is checked at validation.
                let (_, unit) = split_unit(value);
                let x = if unit == "m/s" {
                    parse_with_unit(key, value, Kind::Speed)?
                } else {
                    parse_with_unit(key, value, Kind::Length)?
                };
                let is_speed = unit == "m/s";
                if key == "scan_min" {
                    self.scan_min = x;
                } else {
                    self.scan_max = x;
                }
                self.scan_units_are_speed(key, is_speed)?;
            }
            Kind::Path => self.output_dir = PathBuf::from(value),
            Kind::LengthList => {
                let (nums, unit) = value
                    .rsplit_once(char::is_whitespace)
                    .ok_or_else(|| bad("pitch_sweep: expected a list followed by a unit"))?;
                let scale = length_scale(key, unit.trim())?;
                self.pitch_sweep = nums
                    .split(',')
                    .map(|s| parse_number(key, s.trim()).map(|x| x * scale))
                    .collect::<Result<_, _>>()?;
            }
        }
        Ok(())
    }

    fn scan_units_are_speed(&self, key: &str, is_speed: bool) -> Result<(), CliError> {
        let want_speed = self.scan_axis == ScanAxis::DeltaV;
        if is_speed != want_speed {
            return Err(bad(format!(
                "{key}: units do not match scan_axis = {} (set scan_axis first)",
                self.scan_axis.name()
            )));
        }
        Ok(())
    }

    /// Applies every assignment in `text`. Lines are `key = value`; blank
    /// lines and `#` comments are skipped. Text produced by this tool's CSV
    /// writer is recognised and only its `# cfg` lines are read.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        let from_csv = text.starts_with(CSV_MAGIC);
        for (lineno, raw) in text.lines().enumerate() {
            let line = if from_csv {
                match raw.strip_prefix(CFG_PREFIX) {
                    Some(rest) => rest,
                    None => continue,
                }
            } else {
                raw.split_once('#').map_or(raw, |(before, _)| before)
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected 'key = value'", lineno + 1)))?;
            self.set(key, value)
                .map_err(|e| bad(format!("line {}: {}", lineno + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| bad(format!("--set expects key=value, got '{assignment}'")))?;
        self.set(k, v)
    }

    /// One `key = value` line per field except `output_dir`, in SI units with
    /// shortest round-trip numbers, so that re-reading reproduces the run.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("omega0", format!("{} rad/s", self.omega0));
        line("waist", format!("{} m", self.waist));
        line("wavelength", format!("{} m", self.wavelength));
        line("velocity", format!("{} m/s", self.velocity));
        line("n_ions", self.n_ions.to_string());
        line("pitch", format!("{} m", self.pitch));
        line("z_plane", format!("{} m", self.z_plane));
        line("delta_v", format!("{} m/s", self.delta_v));
        line("delta_y", format!("{} m", self.delta_y));
        line("delta_z", format!("{} m", self.delta_z));
        line("n_samples", self.n_samples.to_string());
        line("seed", self.seed.to_string());
        line(
            "distribution",
            match self.distribution {
                OffsetDistribution::Uniform => "uniform",
                OffsetDistribution::Gaussian => "gaussian",
            }
            .to_string(),
        );
        line("per_ion_independent", self.per_ion_independent.to_string());
        line("margin", self.margin.to_string());
        line("dt_divisor", self.dt_divisor.to_string());
        line("gamma", format!("{} rad/s", self.gamma));
        line("kappa", format!("{} rad/s", self.kappa));
        let sweep: Vec<String> = self.pitch_sweep.iter().map(|p| p.to_string()).collect();
        line("pitch_sweep", format!("{} m", sweep.join(", ")));
        line("scan_axis", self.scan_axis.name().to_string());
        let scan_unit = if self.scan_axis == ScanAxis::DeltaV { "m/s" } else { "m" };
        line("scan_min", format!("{} {scan_unit}", self.scan_min));
        line("scan_max", format!("{} {scan_unit}", self.scan_max));
        line("scan_points", self.scan_points.to_string());
        line("trace", self.trace.to_string());
        s
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn mode(&self) -> CavityMode {
        CavityMode {
            omega0: self.omega0,
            waist: self.waist,
            wavelength: self.wavelength,
        }
    }

    pub fn problem(&self, n_ions: usize) -> DesignProblem {
        DesignProblem {
            n_ions,
            mode: self.mode(),
            velocity: self.velocity,
            z_plane: self.z_plane,
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            delta_v: self.delta_v,
            delta_y: self.delta_y,
            delta_z: self.delta_z,
        }
    }

    pub fn monte_carlo(&self) -> MonteCarloConfig {
        MonteCarloConfig {
            n_samples: self.n_samples,
            seed: self.seed,
            distribution: self.distribution,
            per_ion_independent: self.per_ion_independent,
        }
    }

    pub fn grid(&self) -> GridOptions {
        GridOptions {
            margin: self.margin,
            dt_divisor: self.dt_divisor,
        }
    }
}

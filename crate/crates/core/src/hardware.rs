//! Closed-form figures of merit linking unitless simulation time to a
//! physical cavity.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CODATA 2018 values, SI units.
pub mod constants {
    pub const HBAR: f64 = 1.054_571_817e-34;
    pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
    pub const C: f64 = 299_792_458.0;
}

use constants::{C, EPSILON_0, HBAR};

const MATCH_TOL: f64 = 1e-6;

/// Device parameters in SI units. Frequencies are angular (rad/s); the
/// optional ones are derived from the matching conditions
/// `ω_a = 2ω_b` and `ω_c + ω_p = ω_b` when left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareParams {
    pub q: f64,
    /// m/V
    pub chi2: f64,
    /// m³
    pub v_shg: f64,
    /// m³
    #[serde(default)]
    pub v_twm: Option<f64>,
    /// m
    pub lambda_a: f64,
    pub n: f64,
    #[serde(default)]
    pub omega_b: Option<f64>,
    #[serde(default)]
    pub omega_c: Option<f64>,
    #[serde(default)]
    pub omega_p: Option<f64>,
}

/// Which wavelength a volume quoted in `λ³/n³` refers to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeWavelength {
    /// The fundamental, `λ_b = 2 λ_a`.
    #[default]
    Fundamental,
    /// The second harmonic `λ_a` itself.
    SecondHarmonic,
}

/// Converts `x λ³/n³` to m³.
pub fn cubic_wavelengths(x: f64, lambda_a: f64, n: f64, which: VolumeWavelength) -> f64 {
    let lambda = match which {
        VolumeWavelength::Fundamental => 2.0 * lambda_a,
        VolumeWavelength::SecondHarmonic => lambda_a,
    };
    x * (lambda / n).powi(3)
}

/// Frequencies after applying the matching conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frequencies {
    pub omega_a: f64,
    pub omega_b: f64,
    pub omega_c: Option<f64>,
    pub omega_p: Option<f64>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= MATCH_TOL * a.abs().max(b.abs())
}

impl HardwareParams {
    /// Lithium-niobate microring numbers: `Q = 10⁷`, `χ⁽²⁾ = 31 pm/V`,
    /// `V_shg = 800 μm³`, `λ_a = 750 nm`.
    pub fn lithium_niobate_ring() -> Self {
        Self {
            q: 1e7,
            chi2: 31e-12,
            v_shg: 800e-18,
            v_twm: None,
            lambda_a: 750e-9,
            n: 2.2,
            omega_b: None,
            omega_c: None,
            omega_p: None,
        }
    }

    /// Projected device: `Q = 2·10⁸`, `χ⁽²⁾ = 100 pm/V` and a
    /// `10⁻³ λ³/n³` mode volume.
    pub fn projected() -> Self {
        let (lambda_a, n) = (750e-9, 2.2);
        Self {
            q: 2e8,
            chi2: 100e-12,
            v_shg: cubic_wavelengths(1e-3, lambda_a, n, VolumeWavelength::Fundamental),
            v_twm: None,
            lambda_a,
            n,
            omega_b: None,
            omega_c: None,
            omega_p: None,
        }
    }

    pub fn omega_a(&self) -> f64 {
        2.0 * PI * C / self.lambda_a
    }

    pub fn validate(&self) -> Result<()> {
        positive("Q", self.q)?;
        positive("chi2", self.chi2)?;
        positive("V_shg", self.v_shg)?;
        positive("lambda_a", self.lambda_a)?;
        positive("n", self.n)?;
        for (name, v) in [("V_twm", self.v_twm), ("omega_b", self.omega_b), ("omega_c", self.omega_c), ("omega_p", self.omega_p)] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        self.frequencies().map(|_| ())
    }

    pub fn frequencies(&self) -> Result<Frequencies> {
        let omega_a = self.omega_a();
        let omega_b = match self.omega_b {
            Some(b) if !close(omega_a, 2.0 * b) => {
                return Err(Error::InvalidArgument(format!(
                    "frequency matching fails: omega_a = {omega_a:e} but 2 omega_b = {:e}",
                    2.0 * b
                )))
            }
            Some(b) => b,
            None => omega_a / 2.0,
        };
        let (omega_c, omega_p) = match (self.omega_c, self.omega_p) {
            (Some(c), Some(p)) if !close(c + p, omega_b) => {
                return Err(Error::InvalidArgument(format!(
                    "frequency matching fails: omega_c + omega_p = {:e} but omega_b = {omega_b:e}",
                    c + p
                )))
            }
            (Some(c), Some(p)) => (Some(c), Some(p)),
            (Some(c), None) => (Some(c), Some(omega_b - c)),
            (None, Some(p)) => (Some(omega_b - p), Some(p)),
            (None, None) => (None, None),
        };
        if omega_c.is_some_and(|c| c <= 0.0) || omega_p.is_some_and(|p| p <= 0.0) {
            return Err(Error::InvalidArgument("omega_c and omega_p must both lie below omega_b".into()));
        }
        Ok(Frequencies { omega_a, omega_b, omega_c, omega_p })
    }
}

/// Operations per cavity lifetime,
/// `N = √(ℏ/8ε₀) · √ω_a / n³ · Q χ⁽²⁾ / √V_shg`.
pub fn figure_of_merit(params: &HardwareParams) -> Result<f64> {
    params.validate()?;
    Ok((HBAR / (8.0 * EPSILON_0)).sqrt() * params.omega_a().sqrt() / params.n.powi(3) * params.q * params.chi2
        / params.v_shg.sqrt())
}

/// Photon lifetime `τ = 2Q/ω_a` in seconds.
pub fn cavity_lifetime(q: f64, omega_a: f64) -> Result<f64> {
    positive("Q", q)?;
    positive("omega_a", omega_a)?;
    Ok(2.0 * q / omega_a)
}

fn require(name: &str, v: Option<f64>) -> Result<f64> {
    v.ok_or_else(|| Error::InvalidArgument(format!("{name} is required here")))
}

/// Field unit of the drive amplitude,
/// `u_p = √(V_twm/V_shg · ℏ ω_a ω_b / (8 ω_c))`.
pub fn pulse_unit(params: &HardwareParams) -> Result<f64> {
    params.validate()?;
    let f = params.frequencies()?;
    let v_twm = require("V_twm", params.v_twm)?;
    let omega_c = require("omega_c", f.omega_c)?;
    Ok((v_twm / params.v_shg * HBAR * f.omega_a * f.omega_b / (8.0 * omega_c)).sqrt())
}

/// Mean pump photon number behind a unitless drive amplitude `p`,
/// `¼ (V_twm/V_shg) ω_a ω_b / (ω_c ω_p) |p|²`.
pub fn drive_photon_number(p: f64, params: &HardwareParams) -> Result<f64> {
    if !p.is_finite() {
        return Err(Error::InvalidArgument(format!("drive amplitude must be finite, got {p}")));
    }
    params.validate()?;
    let f = params.frequencies()?;
    let v_twm = require("V_twm", params.v_twm)?;
    let omega_c = require("omega_c", f.omega_c)?;
    let omega_p = require("omega_p", f.omega_p)?;
    Ok(0.25 * v_twm / params.v_shg * f.omega_a * f.omega_b / (omega_c * omega_p) * p * p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub epsilon_0: f64,
    pub c: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { hbar: HBAR, epsilon_0: EPSILON_0, c: C }
    }
}

/// Everything the `fom` command reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FomReport {
    pub inputs: HardwareParams,
    pub constants: PhysicalConstants,
    pub frequencies: Frequencies,
    pub figure_of_merit: f64,
    /// Seconds.
    pub cavity_lifetime: f64,
    /// Seconds per unit of simulation time, `τ / N`.
    pub time_unit: f64,
    pub pulse_unit: Option<f64>,
    /// Pump photons at `|p| = 1`.
    pub drive_photons_unit_amplitude: Option<f64>,
}

pub fn report(params: &HardwareParams) -> Result<FomReport> {
    let n = figure_of_merit(params)?;
    let frequencies = params.frequencies()?;
    let tau = cavity_lifetime(params.q, frequencies.omega_a)?;
    let has_twm = params.v_twm.is_some() && frequencies.omega_c.is_some();
    Ok(FomReport {
        inputs: params.clone(),
        constants: PhysicalConstants::default(),
        frequencies,
        figure_of_merit: n,
        cavity_lifetime: tau,
        time_unit: tau / n,
        pulse_unit: if has_twm { Some(pulse_unit(params)?) } else { None },
        drive_photons_unit_amplitude: if has_twm { Some(drive_photon_number(1.0, params)?) } else { None },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Susceptibility,
    Volume,
    Length,
}

/// Reads a quantity such as `"31 pm/V"`, `"800 um^3"` or `"750 nm"` into SI
/// units. A bare number is rejected so that every dimensional input names
/// its unit. Volumes may also be given as `"1e-3 lambda^3/n^3"` when
/// `wavelength` supplies `(λ_a, n, convention)`.
pub fn parse_quantity(
    text: &str,
    dim: Dimension,
    wavelength: Option<(f64, f64, VolumeWavelength)>,
) -> Result<f64> {
    let text = text.trim();
    let split = text.find(|c: char| c.is_whitespace()).ok_or_else(|| {
        Error::Parse(format!("`{text}` has no unit; write e.g. `31 pm/V`, `800 um^3`, `750 nm`"))
    })?;
    let (num, unit) = (&text[..split], text[split..].trim());
    let value: f64 = num.parse().map_err(|_| Error::Parse(format!("bad number `{num}` in `{text}`")))?;
    let unit = unit.replace(['μ', 'µ'], "u").replace('³', "^3");
    let scale = match (dim, unit.as_str()) {
        (Dimension::Susceptibility, "m/V") => 1.0,
        (Dimension::Susceptibility, "pm/V") => 1e-12,
        (Dimension::Length, "m") => 1.0,
        (Dimension::Length, "um") => 1e-6,
        (Dimension::Length, "nm") => 1e-9,
        (Dimension::Volume, "m^3") => 1.0,
        (Dimension::Volume, "um^3") => 1e-18,
        (Dimension::Volume, "nm^3") => 1e-27,
        (Dimension::Volume, "lambda^3/n^3") => {
            let (lambda_a, n, which) = wavelength.ok_or_else(|| {
                Error::Parse("lambda^3/n^3 volumes need lambda_a and n".into())
            })?;
            return Ok(cubic_wavelengths(value, lambda_a, n, which));
        }
        _ => return Err(Error::Parse(format!("unit `{unit}` is not valid for {dim:?}"))),
    };
    Ok(value * scale)
}

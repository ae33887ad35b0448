use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trimode::hardware::VolumeWavelength;
use trimode::qec::LifetimeConfig;
use trimode::Ket;

/// Top-level TOML config. Every section is optional; a command reads only
/// its own.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub sectors: Option<SectorsSection>,
    pub synthesize: Option<SynthesizeSection>,
    pub simulate: Option<SimulateSection>,
    pub qec: Option<QecSection>,
    pub fom: Option<FomSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorsSection {
    pub k_max: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesizeSection {
    pub gate: Option<String>,
    pub spec: Option<PathBuf>,
    /// Overrides on top of the gate's default synthesis settings.
    #[serde(default)]
    pub synthesis: Option<toml::Table>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub pulse: Option<PathBuf>,
    /// Basis state as `"n_a,n_b,n_c"`.
    pub state: Option<String>,
    /// Superposition as `{"n_a,n_b,n_c" = [re, im]}`.
    pub superposition: Option<Ket>,
    pub record_every: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QecSection {
    pub roundtrip: Option<RoundtripSection>,
    pub lifetime: Option<LifetimeSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundtripSection {
    pub trials: usize,
    /// Exit status 1 if any trial falls below this fidelity.
    pub floor: f64,
    /// Pulse CSV per gate. When empty the ideal unitaries are used.
    pub pulses: BTreeMap<String, PathBuf>,
}

impl Default for RoundtripSection {
    fn default() -> Self {
        Self { trials: 100, floor: 1.0 - 1e-9, pulses: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifetimeSection {
    pub n_values: Vec<f64>,
    pub model: LifetimeConfig,
    pub break_even_bracket: [f64; 2],
}

impl Default for LifetimeSection {
    fn default() -> Self {
        Self { n_values: vec![10.0, 500.0, 2000.0, 8000.0], model: LifetimeConfig::default(), break_even_bracket: [10.0, 1e5] }
    }
}

/// Hardware inputs. Dimensional quantities are strings carrying their
/// unit, e.g. `chi2 = "31 pm/V"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FomSection {
    pub q: f64,
    pub chi2: String,
    pub v_shg: String,
    pub v_twm: Option<String>,
    pub lambda_a: String,
    pub n: f64,
    /// rad/s
    pub omega_b: Option<f64>,
    pub omega_c: Option<f64>,
    pub omega_p: Option<f64>,
    #[serde(default)]
    pub volume_wavelength: VolumeWavelength,
}

pub fn load(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))
}

/// Resolves `p` relative to the directory of the config file.
pub fn relative_to(config: Option<&Path>, p: &Path) -> PathBuf {
    match config.and_then(Path::parent) {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

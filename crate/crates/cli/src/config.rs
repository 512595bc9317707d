//! Study configuration: one schema shared by every subcommand, read from
//! JSON or TOML (by extension). Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use owns_core::c64;
use owns_core::diagnostics::{DiagMethod, Selector, PROJECTION_TRIALS};
use owns_core::grid::{Direction, TransverseDiscretization};
use owns_core::marching::{linspace, Method, StationSequence, StepScheme};
use owns_core::operator::SemiDiscreteSystem;
use owns_core::param_select::{HeuristicConfig, Objective};
use owns_core::spectral::SpectralOptions;
use owns_core::system::HyperbolicSystem;
use owns_core::testbeds::{reversed_flow, sonic_ramp, spreading_shear, ShearLayer, UniformEuler};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub schema_version: u32,
    pub testbed: Testbed,
    /// Laplace parameter `[re, im]`.
    pub s: [f64; 2],
    /// Wavenumbers of Fourier directions; empty means all zero.
    #[serde(default)]
    pub omega_t: Vec<f64>,
    #[serde(default)]
    pub selector: SelectorSettings,
    #[serde(default)]
    pub n_beta: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<DiagMethod>,
    #[serde(default = "default_selectors")]
    pub selectors: Vec<Selector>,
    #[serde(default)]
    pub spectral: SpectralSettings,
    #[serde(default)]
    pub study: StudySettings,
    #[serde(default)]
    pub march: Option<MarchSettings>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_methods() -> Vec<DiagMethod> {
    vec![DiagMethod::OwnsP, DiagMethod::OwnsR]
}

fn default_selectors() -> Vec<Selector> {
    vec![Selector::Greedy]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Testbed {
    UniformEuler(UniformEuler),
    ShearLayer(ShearLayer),
    ReversedFlow {
        ny: usize,
    },
    /// Shear layer thickening along `x`; fixes its own stations.
    SpreadingShear {
        base: ShearLayer,
        n_stations: usize,
        length: f64,
        spread: f64,
    },
    /// Uniform flow accelerating through `u = a`; fixes its own stations.
    SonicRamp {
        ny: usize,
        u0: f64,
        u1: f64,
        n_stations: usize,
    },
    /// User system, inline or from a JSON file, on the given transverse directions.
    System {
        #[serde(default)]
        system: Option<SystemSpec>,
        #[serde(default)]
        path: Option<PathBuf>,
        transverse: Vec<Direction>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Vec<Vec<Vec<f64>>>,
    pub c: Vec<Vec<f64>>,
    pub spatial_dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorSettings {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_starts")]
    pub n_starts: usize,
    #[serde(default)]
    pub exclude_im_above: Option<f64>,
    #[serde(default)]
    pub heuristic: Option<HeuristicAnchors>,
}

fn default_starts() -> usize {
    8
}

impl Default for SelectorSettings {
    fn default() -> Self {
        Self { seed: None, n_starts: default_starts(), exclude_im_above: None, heuristic: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeuristicAnchors {
    pub anchor_plus: [f64; 2],
    #[serde(default)]
    pub anchor_minus: Option<[f64; 2]>,
    #[serde(default)]
    pub center_plus: [f64; 2],
    #[serde(default)]
    pub center_minus: [f64; 2],
    #[serde(default = "one")]
    pub ratio: f64,
}

fn one() -> f64 {
    1.0
}

impl HeuristicAnchors {
    pub fn with_n_beta(&self, n_beta: usize) -> HeuristicConfig {
        HeuristicConfig {
            n_beta,
            anchor_plus: self.anchor_plus,
            anchor_minus: self.anchor_minus,
            center_plus: self.center_plus,
            center_minus: self.center_minus,
            ratio: self.ratio,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSettings {
    #[serde(default)]
    pub eta_large: Option<f64>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub cluster_tol: Option<f64>,
}

impl SpectralSettings {
    pub fn options(&self) -> SpectralOptions {
        let mut o = SpectralOptions::default();
        o.eta_large = self.eta_large;
        if let Some(t) = self.threshold {
            o.threshold = t;
        }
        if let Some(t) = self.cluster_tol {
            o.cluster_tol = t;
        }
        o
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySettings {
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_samples")]
    pub residual_samples: usize,
    /// Measure errors through the banded filters rather than `V E V⁻¹`.
    #[serde(default)]
    pub practical_filters: bool,
}

fn default_trials() -> usize {
    PROJECTION_TRIALS
}

fn default_samples() -> usize {
    100
}

impl Default for StudySettings {
    fn default() -> Self {
        Self { n_trials: default_trials(), residual_samples: default_samples(), practical_filters: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiMode {
    Tracked,
    GreedyEachStation,
    GreedyFixed,
    HeuristicFixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarchSettings {
    /// Station count for testbeds that do not fix their own.
    #[serde(default = "default_stations")]
    pub stations: usize,
    #[serde(default = "default_length")]
    pub length: f64,
    pub method: Method,
    #[serde(default)]
    pub scheme: StepScheme,
    #[serde(default = "default_xi")]
    pub xi: XiMode,
    #[serde(default)]
    pub n_beta: Option<usize>,
    /// Primitive variable defining the amplitude.
    #[serde(default)]
    pub amp_var: usize,
    /// Spectrum index of the inlet mode; defaults to the downstream mode
    /// with the smallest `Im α`.
    #[serde(default)]
    pub inlet_mode: Option<usize>,
    #[serde(default = "yes")]
    pub project_inlet: bool,
    #[serde(default)]
    pub record_j: bool,
    /// Also march with fixed greedy and heuristic sets over the `n_beta` grid.
    #[serde(default)]
    pub cost_table: bool,
    #[serde(default = "default_blowup")]
    pub blowup: f64,
}

fn default_stations() -> usize {
    50
}
fn default_length() -> f64 {
    10.0
}
fn default_xi() -> XiMode {
    XiMode::Tracked
}
fn yes() -> bool {
    true
}
fn default_blowup() -> f64 {
    1e12
}

impl StudyConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: StudyConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?,
            _ => serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.s.iter().any(|v| !v.is_finite()) || self.s[0] < 0.0 {
            return bad("s must be finite with Re(s) >= 0".into());
        }
        if self.n_beta.contains(&0) {
            return bad("n_beta entries must be at least 1".into());
        }
        if self.n_beta.windows(2).any(|w| w[1] <= w[0]) {
            return bad("n_beta grid must be strictly increasing".into());
        }
        if self.selector.n_starts == 0 {
            return bad("selector.n_starts must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if let Some(m) = &self.march {
            if m.method != Method::Exact && m.n_beta.is_none_or(|n| n == 0) {
                return bad("march.n_beta must be at least 1 for filtered methods".into());
            }
            if m.stations < 2 || !(m.length > 0.0) {
                return bad("march needs at least 2 stations and a positive length".into());
            }
            if m.xi == XiMode::HeuristicFixed && self.selector.heuristic.is_none() {
                return bad("heuristic_fixed needs selector.heuristic".into());
            }
            if m.cost_table && (self.selector.heuristic.is_none() || self.n_beta.is_empty()) {
                return bad("cost_table needs selector.heuristic and an n_beta grid".into());
            }
        }
        Ok(())
    }

    pub fn s(&self) -> c64 {
        c64::new(self.s[0], self.s[1])
    }

    pub fn greedy_target(method: DiagMethod) -> Objective {
        match method {
            DiagMethod::OwnsP => Objective::OwnsP,
            DiagMethod::OwnsR => Objective::OwnsR,
        }
    }

    /// The system at the first station.
    pub fn inlet_system(&self) -> Result<SemiDiscreteSystem, CliError> {
        let (_, mut systems) = self.stations(Some(2))?;
        Ok(systems.swap_remove(0))
    }

    /// Transverse wavenumbers padded to the number of directions.
    pub fn omega_for(&self, sys: &SemiDiscreteSystem) -> Result<Vec<f64>, CliError> {
        let nd = sys.disc.directions.len();
        match self.omega_t.len() {
            0 => Ok(vec![0.0; nd]),
            k if k == nd => Ok(self.omega_t.clone()),
            k => Err(CliError::Config(format!("omega_t has {k} entries, testbed has {nd} transverse directions"))),
        }
    }

    pub fn station_sequence(&self) -> Result<StationSequence, CliError> {
        let (x, systems) = self.stations(None)?;
        let omega = self.omega_for(&systems[0])?;
        Ok(StationSequence::new(x, systems.into_iter().map(Arc::new).collect(), omega)?)
    }

    /// Station coordinates and systems. `n_override` caps the station count
    /// of uniform testbeds (used when only the inlet is needed).
    fn stations(&self, n_override: Option<usize>) -> Result<(Vec<f64>, Vec<SemiDiscreteSystem>), CliError> {
        let (n, len) = match &self.march {
            Some(m) => (m.stations, m.length),
            None => (default_stations(), default_length()),
        };
        let n = n_override.unwrap_or(n);
        let single = |sys: SemiDiscreteSystem| -> (Vec<f64>, Vec<SemiDiscreteSystem>) {
            (linspace(0.0, len, n), vec![sys; n])
        };
        Ok(match &self.testbed {
            Testbed::UniformEuler(u) => single(u.build()?),
            Testbed::ShearLayer(sl) => single(sl.build()?),
            Testbed::ReversedFlow { ny } => single(reversed_flow(*ny)?),
            Testbed::SpreadingShear { base, n_stations, length, spread } => {
                spreading_shear(base, *n_stations, *length, *spread)?
            }
            Testbed::SonicRamp { ny, u0, u1, n_stations } => sonic_ramp(*ny, *u0, *u1, *n_stations)?,
            Testbed::System { system, path, transverse } => {
                let spec = match (system, path) {
                    (Some(s), None) => s.clone(),
                    (None, Some(p)) => {
                        let text =
                            std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
                    }
                    _ => return Err(CliError::Config("system testbed needs exactly one of `system` or `path`".into())),
                };
                let hs = HyperbolicSystem::new(spec.a, spec.b, spec.c, spec.spatial_dim)?;
                single(SemiDiscreteSystem::uniform(&hs, TransverseDiscretization::new(transverse.clone())?)?)
            }
        })
    }
}

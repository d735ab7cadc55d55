//! INI-style scenario configuration files.
//!
//! Sections mirror the scenario structure: `[species]`, `[reaction]`,
//! `[grid]`, `[tx]`, `[rx]`, `[probe]`, `[detection]`, `[oracle]`,
//! `[run]`. Keys are snake case, `#` starts a comment, values are plain
//! numbers or bare words. Overrides (`--set key=value`) address keys
//! either bare (when unique) or as `section.key`.

use crate::detection::{DetectionSetup, ReceiverIntegration};
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::oracle::UniformValidationOptions;
use crate::scenario::{
    GridSpec, PerSpecies, ProbeDeployment, ReactionParams, ScenarioConfig, Species, SpeciesParams,
};
use std::path::Path;

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("species", &["d_a", "d_b", "d_c"]),
    ("reaction", &["kappa_f", "kappa_b"]),
    ("grid", &["z_max", "rho_count", "z_count", "stretch"]),
    ("tx", &["z", "molecules_per_bit"]),
    ("rx", &["z", "radius"]),
    (
        "probe",
        &["mode", "z", "molecules", "release_time", "concentration"],
    ),
    (
        "detection",
        &["isi_length", "integration", "sampling_offset", "threshold"],
    ),
    (
        "oracle",
        &["c_a0", "c_b0", "c_c0", "t_end", "samples", "trajectories", "volume"],
    ),
    ("run", &["delta_t", "symbol_interval", "t_max"]),
];

/// A parsed configuration file: ordered sections of key-value pairs.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    entries: Vec<(String, String, String)>, // (section, key, value)
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| {
                        Error::Config(format!("line {}: malformed section header", lineno + 1))
                    })?
                    .trim()
                    .to_string();
                if !KNOWN_KEYS.iter().any(|(s, _)| *s == name) {
                    return Err(Error::Config(format!(
                        "line {}: unknown section [{name}]",
                        lineno + 1
                    )));
                }
                section = name;
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if section.is_empty() {
                return Err(Error::Config(format!(
                    "line {}: key '{key}' appears before any section",
                    lineno + 1
                )));
            }
            let known = KNOWN_KEYS
                .iter()
                .find(|(s, _)| *s == section)
                .map(|(_, keys)| keys.contains(&key.as_str()))
                .unwrap_or(false);
            if !known {
                return Err(Error::Config(format!(
                    "line {}: unknown key '{key}' in section [{section}]",
                    lineno + 1
                )));
            }
            entries.retain(|(s, k, _)| !(s == &section && k == &key));
            entries.push((section.clone(), key, value));
        }
        Ok(Self { entries })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!(
                "cannot read config file {}: {e}",
                path.as_ref().display()
            ))
        })?;
        Self::parse(&text)
    }

    /// Apply an override. `key` is either `section.key` or a bare key
    /// that is unique across sections.
    pub fn set_override(&mut self, key: &str, value: &str) -> Result<()> {
        let (section, bare) = match key.split_once('.') {
            Some((s, k)) => (Some(s.to_string()), k.to_string()),
            None => (None, key.to_string()),
        };
        let mut matches: Vec<String> = Vec::new();
        for (s, keys) in KNOWN_KEYS {
            if keys.contains(&bare.as_str()) {
                if let Some(ref want) = section {
                    if s == want {
                        matches.push(s.to_string());
                    }
                } else {
                    matches.push(s.to_string());
                }
            }
        }
        match matches.len() {
            0 => Err(Error::Config(format!("override references unknown key '{key}'"))),
            1 => {
                let section = matches.remove(0);
                self.entries
                    .retain(|(s, k, _)| !(s == &section && k == &bare));
                self.entries.push((section, bare, value.to_string()));
                Ok(())
            }
            _ => Err(Error::Config(format!(
                "override key '{key}' is ambiguous; qualify it as one of: {}",
                matches
                    .iter()
                    .map(|s| format!("{s}.{bare}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ))),
        }
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(s, k, _)| s == section && k == key)
            .map(|(_, _, v)| v.as_str())
    }

    fn require_f64(&self, section: &str, key: &str) -> Result<f64> {
        self.opt_f64(section, key)?
            .ok_or_else(|| Error::Config(format!("missing required key {section}.{key}")))
    }

    fn opt_f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.get(section, key)
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    Error::Config(format!("{section}.{key}: '{v}' is not a number"))
                })
            })
            .transpose()
    }

    fn opt_usize(&self, section: &str, key: &str) -> Result<Option<usize>> {
        self.get(section, key)
            .map(|v| {
                v.parse::<usize>().map_err(|_| {
                    Error::Config(format!("{section}.{key}: '{v}' is not a nonnegative integer"))
                })
            })
            .transpose()
    }

    fn require_usize(&self, section: &str, key: &str) -> Result<usize> {
        self.opt_usize(section, key)?
            .ok_or_else(|| Error::Config(format!("missing required key {section}.{key}")))
    }

    /// Build the scenario plus detection and oracle options.
    pub fn build(&self) -> Result<LoadedScenario> {
        let scenario = ScenarioConfig {
            species: PerSpecies::new(
                SpeciesParams {
                    species: Species::A,
                    diffusion: self.require_f64("species", "d_a")?,
                },
                SpeciesParams {
                    species: Species::B,
                    diffusion: self.require_f64("species", "d_b")?,
                },
                SpeciesParams {
                    species: Species::C,
                    diffusion: self.require_f64("species", "d_c")?,
                },
            ),
            reaction: ReactionParams {
                kappa_f: self.require_f64("reaction", "kappa_f")?,
                kappa_b: self.require_f64("reaction", "kappa_b")?,
            },
            grid: GridSpec {
                z_max: self.require_f64("grid", "z_max")?,
                rho_count: self.require_usize("grid", "rho_count")?,
                z_count: self.require_usize("grid", "z_count")?,
                stretch: self.opt_f64("grid", "stretch")?.unwrap_or(1.0),
            },
            delta_t: self.require_f64("run", "delta_t")?,
            t_max: self.require_f64("run", "t_max")?,
            symbol_interval: self.require_f64("run", "symbol_interval")?,
            molecules_per_bit: self.require_f64("tx", "molecules_per_bit")?,
            tx_z: self.require_f64("tx", "z")?,
            rx_z: self.require_f64("rx", "z")?,
            rx_radius: self.require_f64("rx", "radius")?,
            probe: self.probe()?,
        };

        let integration = match self.get("detection", "integration").unwrap_or("point") {
            "point" => ReceiverIntegration::PointApproximation,
            "quadrature" => ReceiverIntegration::Quadrature,
            other => {
                return Err(Error::Config(format!(
                    "detection.integration must be 'point' or 'quadrature', got '{other}'"
                )))
            }
        };
        let sampling_offset = match self.opt_f64("detection", "sampling_offset")? {
            Some(v) if v > 0.0 => Some(v),
            _ => None,
        };
        let threshold = self
            .opt_usize("detection", "threshold")?
            .map(|v| v as u64);
        let detection = DetectionOptions {
            isi_length: self.opt_usize("detection", "isi_length")?.unwrap_or(2),
            integration,
            sampling_offset,
            threshold,
        };

        let oracle = OracleOptions {
            initial: PerSpecies::new(
                self.opt_f64("oracle", "c_a0")?.unwrap_or(6e13),
                self.opt_f64("oracle", "c_b0")?.unwrap_or(6e13),
                self.opt_f64("oracle", "c_c0")?.unwrap_or(0.0),
            ),
            t_end: self.opt_f64("oracle", "t_end")?.unwrap_or(3.0),
            samples: self.opt_usize("oracle", "samples")?.unwrap_or(60),
            trajectories: self.opt_usize("oracle", "trajectories")?.unwrap_or(1000),
            volume: self.opt_f64("oracle", "volume")?.unwrap_or(1e-11),
        };

        Ok(LoadedScenario {
            scenario,
            detection,
            oracle,
        })
    }

    fn probe(&self) -> Result<ProbeDeployment> {
        let mode = self.get("probe", "mode").unwrap_or("none");
        match mode {
            "none" => Ok(ProbeDeployment::None),
            "point" => Ok(ProbeDeployment::PointRelease {
                z: self.opt_f64("probe", "z")?.unwrap_or(0.0),
                molecules: self.require_f64("probe", "molecules")?,
                time: self.opt_f64("probe", "release_time")?.unwrap_or(0.0),
            }),
            "uniform" => Ok(ProbeDeployment::Uniform {
                concentration: self.require_f64("probe", "concentration")?,
            }),
            "steady" => Ok(ProbeDeployment::SteadyState {
                z: self.opt_f64("probe", "z")?.unwrap_or(0.0),
                molecules: self.require_f64("probe", "molecules")?,
            }),
            other => Err(Error::Config(format!(
                "probe.mode must be one of none|point|uniform|steady, got '{other}'"
            ))),
        }
    }
}

/// Detector options as configured; the sampling offset may be left to the
/// argmax rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionOptions {
    pub isi_length: usize,
    pub integration: ReceiverIntegration,
    /// None = place t_s at the peak of the isolated single-bit response.
    pub sampling_offset: Option<f64>,
    /// None = use the swept optimum.
    pub threshold: Option<u64>,
}

impl DetectionOptions {
    pub fn setup(&self, config: &ScenarioConfig, sampling_offset: f64) -> DetectionSetup {
        DetectionSetup {
            rx_z: config.rx_z,
            rx_radius: config.rx_radius,
            sampling_offset,
            isi_length: self.isi_length,
            threshold: self.threshold.unwrap_or(0),
            integration: self.integration,
        }
    }
}

/// Well-mixed oracle comparison options from the `[oracle]` section.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleOptions {
    pub initial: PerSpecies<f64>,
    pub t_end: f64,
    pub samples: usize,
    pub trajectories: usize,
    pub volume: f64,
}

impl OracleOptions {
    pub fn validation_options(&self, stream: RngStream) -> UniformValidationOptions {
        UniformValidationOptions {
            initial: self.initial.clone(),
            t_end: self.t_end,
            samples: self.samples,
            ssa_trajectories: self.trajectories,
            ssa_volume: self.volume,
            stream,
        }
    }
}

/// A fully parsed scenario file.
#[derive(Clone, Debug)]
pub struct LoadedScenario {
    pub scenario: ScenarioConfig,
    pub detection: DetectionOptions,
    pub oracle: OracleOptions,
}

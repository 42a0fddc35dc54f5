//! Experiment configuration.
//!
//! A config is JSON with a schema version and unknown fields rejected. Every
//! seed that is left out is expanded from the master `seed` by [`resolve`],
//! after which the config alone determines every artifact.
//!
//! [`resolve`]: ExperimentConfig::resolve

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::device::{DetectorSpec, DeviceParams, Quantization};
use crate::keys::HashConfig;
use crate::modes::{FiberSpec, Grid, MIN_GRID};
use crate::reservoir::SweepConfig;
use crate::rng::{self, ns};
use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Master seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fiber: FiberSpec<f64>,
    #[serde(default)]
    pub modes: ModeSettings,
    #[serde(default)]
    pub population: Population,
    #[serde(default)]
    pub challenges: ChallengeSchedule,
    #[serde(default)]
    pub detector: DetectorSettings,
    #[serde(default)]
    pub hash: HashConfig,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    #[serde(default)]
    pub reservoir: SweepConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeSettings {
    pub max_modes: usize,
    pub grid_size: usize,
    /// Grid side as a multiple of the core radius.
    pub extent_factor: f64,
}

impl Default for ModeSettings {
    fn default() -> Self {
        Self { max_modes: 100, grid_size: 128, extent_factor: 2.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Population {
    pub count: usize,
    pub seeds: Option<Vec<u64>>,
    pub params: DeviceParams<f64>,
}

impl Default for Population {
    fn default() -> Self {
        Self { count: 50, seeds: None, params: DeviceParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChallengeSchedule {
    /// Wavelength of the enrollment and intra-class responses.
    pub base_nm: f64,
    /// Challenge wavelengths of the inter-I class.
    pub wavelengths_nm: Vec<f64>,
    /// Detunings from `base_nm` for the inter-I sweep.
    pub offsets_nm: Vec<f64>,
    /// Devices averaged per detuning.
    pub offset_devices: usize,
}

impl Default for ChallengeSchedule {
    fn default() -> Self {
        Self {
            base_nm: 1540.0,
            wavelengths_nm: vec![1540.0, 1550.0, 1560.0, 1570.0],
            offsets_nm: vec![2.5, 5.0, 10.0, 20.0, 30.0],
            offset_devices: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSettings {
    pub snr_db: Option<f64>,
    pub quantization: Quantization,
    /// Re-measurements of device 0 forming the intra class.
    pub noise_repeats: usize,
    pub noise_seeds: Option<Vec<u64>>,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self { snr_db: Some(30.0), quantization: Quantization::None, noise_repeats: 20, noise_seeds: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSettings {
    /// Keys, one per device, feeding the entropy and randomness tests.
    pub key_count: usize,
    pub key_seeds: Option<Vec<u64>>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self { key_count: 100, key_seeds: None }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            fiber: FiberSpec::default(),
            modes: ModeSettings::default(),
            population: Population::default(),
            challenges: ChallengeSchedule::default(),
            detector: DetectorSettings::default(),
            hash: HashConfig::default(),
            analysis: AnalysisSettings::default(),
            reservoir: SweepConfig::default(),
            output_dir: default_output_dir(),
        }
    }
}

/// Seed of device `i` under master seed `seed`.
pub fn device_seed(seed: u64, i: usize) -> u64 {
    rng::derive_seed(seed, ns::DEVICE_SEED, &[i as u64])
}

/// Detector noise seed of re-measurement `r`.
pub fn noise_seed(seed: u64, r: usize) -> u64 {
    rng::derive_seed(seed, ns::NOISE_SEED, &[r as u64])
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::InvalidConfig(format!("at `{path}`: {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn grid(&self) -> Grid<f64> {
        Grid { size: self.modes.grid_size, extent_um: self.modes.extent_factor * self.fiber.core_radius_um }
    }

    /// Detector for re-measurement noise seed `noise_seed`.
    pub fn detector_spec(&self, noise_seed: u64) -> DetectorSpec {
        DetectorSpec {
            grid_size: self.modes.grid_size,
            snr_db: self.detector.snr_db,
            noise_seed,
            quantization: self.detector.quantization,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.fiber.validate()?;
        if self.modes.max_modes == 0 {
            return Err(Error::InvalidConfig("modes.max_modes must be positive".into()));
        }
        if self.modes.grid_size < MIN_GRID {
            return Err(Error::InvalidConfig(format!("modes.grid_size {} below {MIN_GRID}", self.modes.grid_size)));
        }
        if !(self.modes.extent_factor >= 2.0) || !self.modes.extent_factor.is_finite() {
            return Err(Error::InvalidConfig("modes.extent_factor must cover the core (>= 2)".into()));
        }
        self.population.params.validate()?;
        if self.population.count < 2 {
            return Err(Error::InvalidConfig("population.count must be at least 2".into()));
        }
        check_seed_list("population.seeds", &self.population.seeds, self.population.count)?;
        check_seed_list("detector.noise_seeds", &self.detector.noise_seeds, self.detector.noise_repeats)?;
        check_seed_list("analysis.key_seeds", &self.analysis.key_seeds, self.analysis.key_count)?;
        if self.detector.noise_repeats < 2 {
            return Err(Error::InvalidConfig("detector.noise_repeats must be at least 2".into()));
        }
        let [lo, hi] = self.population.params.tunable_range_nm;
        let c = &self.challenges;
        let in_range = |w: f64| w >= lo && w <= hi;
        if !in_range(c.base_nm) {
            return Err(Error::InvalidConfig(format!("challenges.base_nm {} outside [{lo}, {hi}]", c.base_nm)));
        }
        if c.wavelengths_nm.len() < 2 {
            return Err(Error::InvalidConfig("challenges.wavelengths_nm needs at least two entries".into()));
        }
        if let Some(w) = c.wavelengths_nm.iter().find(|w| !in_range(**w)) {
            return Err(Error::InvalidConfig(format!("challenge wavelength {w} nm outside [{lo}, {hi}]")));
        }
        if let Some(d) = c.offsets_nm.iter().find(|d| !(**d > 0.0) || !in_range(c.base_nm + **d)) {
            return Err(Error::InvalidConfig(format!("detuning {d} nm leaves [{lo}, {hi}] from {}", c.base_nm)));
        }
        if c.offset_devices == 0 {
            return Err(Error::InvalidConfig("challenges.offset_devices must be positive".into()));
        }
        self.hash.validate()?;
        self.reservoir.validate()?;
        Ok(())
    }

    /// Validated copy with every optional seed list filled in.
    pub fn resolve(&self) -> Result<Self> {
        self.validate()?;
        let mut out = self.clone();
        let s = self.seed;
        out.population.seeds.get_or_insert_with(|| (0..self.population.count).map(|i| device_seed(s, i)).collect());
        out.detector
            .noise_seeds
            .get_or_insert_with(|| (0..self.detector.noise_repeats).map(|r| noise_seed(s, r)).collect());
        out.analysis.key_seeds.get_or_insert_with(|| (0..self.analysis.key_count).map(|i| device_seed(s, i)).collect());
        Ok(out)
    }

    pub fn device_seeds(&self) -> &[u64] {
        self.population.seeds.as_deref().unwrap_or_default()
    }

    pub fn noise_seeds(&self) -> &[u64] {
        self.detector.noise_seeds.as_deref().unwrap_or_default()
    }

    pub fn key_seeds(&self) -> &[u64] {
        self.analysis.key_seeds.as_deref().unwrap_or_default()
    }
}

fn check_seed_list(field: &str, seeds: &Option<Vec<u64>>, count: usize) -> Result<()> {
    match seeds {
        Some(s) if s.len() != count => {
            Err(Error::InvalidConfig(format!("{field} has {} entries, expected {count}", s.len())))
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ExperimentConfig::from_json(r#"{"version": 1}"#).unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn unknown_field_names_its_path() {
        let err = ExperimentConfig::from_json(r#"{"version": 1, "population": {"cuont": 3}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("population"), "{msg}");
        assert!(msg.contains("cuont"), "{msg}");
        let err = ExperimentConfig::from_json(r#"{"version": 1, "detector": {"snr_db": "loud"}}"#).unwrap_err();
        assert!(err.to_string().contains("detector.snr_db"), "{err}");
    }

    #[test]
    fn version_is_required_and_checked() {
        assert!(ExperimentConfig::from_json("{}").is_err());
        let c = ExperimentConfig::from_json(r#"{"version": 2}"#).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn out_of_range_challenges_rejected() {
        let mut c = ExperimentConfig::default();
        c.challenges.offsets_nm.push(40.0);
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.population.seeds = Some(vec![1, 2, 3]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn resolution_expands_every_seed() {
        let r = ExperimentConfig::default().resolve().unwrap();
        assert_eq!(r.device_seeds().len(), 50);
        assert_eq!(r.noise_seeds().len(), 20);
        assert_eq!(r.key_seeds().len(), 100);
        // the key set extends the population
        assert_eq!(&r.key_seeds()[..50], r.device_seeds());
        assert_eq!(r.resolve().unwrap(), r);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn round_trips_and_resolution_is_idempotent(
            seed in any::<u64>(),
            count in 2usize..8,
            repeats in 2usize..6,
            snr in proptest::option::of(10.0f64..50.0),
            explicit in any::<bool>(),
        ) {
            let mut c = ExperimentConfig { seed, ..ExperimentConfig::default() };
            c.population.count = count;
            c.detector.noise_repeats = repeats;
            c.detector.snr_db = snr;
            if explicit {
                c.population.seeds = Some((0..count as u64).map(|i| i * 7 + 1).collect());
            }
            let text = c.to_json();
            let back = ExperimentConfig::from_json(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.to_json(), text);
            let r = c.resolve().unwrap();
            prop_assert_eq!(r.resolve().unwrap(), r.clone());
            let rt = ExperimentConfig::from_json(&r.to_json()).unwrap();
            prop_assert_eq!(rt, r);
        }
    }
}

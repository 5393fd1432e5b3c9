//! `key = value` settings file.

use std::collections::BTreeMap;
use std::path::Path;

use gapkit::clarknum::ClarkConfig;
use gapkit::density::DensityConfig;
use gapkit::energy::TailConfig;
use gapkit::fekete::FeketeConfig;
use gapkit::gapnum::{GapConfig, KneeConfig};
use gapkit::{GapError, Result};

/// Recognized keys with their defaults, in the order they are documented.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("threads", "0"),
    ("resolution", "0.001"),
    ("max_value", "1000000"),
    ("tail.supported_ratio", "0.001"),
    ("tail.unsupported_ratio", "0.5"),
    ("density.flat_tolerance", "0.005"),
    ("density.fluctuation", "2"),
    ("density.divergence_threshold", "10"),
    ("density.reach_fraction", "0.5"),
    ("gap.sweep_points", "512"),
    ("gap.sweep_steps", "48"),
    ("gap.sweep_lo", "0.05"),
    ("gap.sweep_hi", "2"),
    ("gap.knee_tolerance", "0.15"),
    ("gap.knee_floor", "1e-12"),
    ("clark.radius", "10000"),
    ("clark.extrapolate", "true"),
    ("fekete.starts", "20"),
    ("fekete.ascent_iterations", "400"),
    ("fekete.newton_iterations", "100"),
    ("fekete.tolerance", "1e-8"),
];

#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn defaults() -> Self {
        Settings { values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !self.values.contains_key(key) {
            return Err(GapError::Parameter(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn parse(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let t = line.split('#').next().unwrap_or("").trim();
            if t.is_empty() {
                continue;
            }
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| GapError::Parse { line: i + 1, msg: format!("expected key = value, got {t:?}") })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.parse(&text)
    }

    pub fn map(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = &self.values[key];
        v.parse().map_err(|_| GapError::Parameter(format!("config {key} = {v:?} is not valid")))
    }

    pub fn f(&self, key: &str) -> Result<f64> {
        self.get(key)
    }

    pub fn u(&self, key: &str) -> Result<usize> {
        self.get(key)
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    pub fn tail(&self) -> Result<TailConfig> {
        Ok(TailConfig {
            supported_ratio: self.f("tail.supported_ratio")?,
            unsupported_ratio: self.f("tail.unsupported_ratio")?,
        })
    }

    pub fn density(&self) -> Result<DensityConfig> {
        Ok(DensityConfig {
            resolution: self.f("resolution")?,
            max_value: self.f("max_value")?,
            flat_tolerance: self.f("density.flat_tolerance")?,
            fluctuation: self.f("density.fluctuation")?,
            divergence_threshold: self.f("density.divergence_threshold")?,
            reach_fraction: self.f("density.reach_fraction")?,
            ..DensityConfig::default()
        })
    }

    pub fn gap(&self) -> Result<GapConfig> {
        Ok(GapConfig {
            resolution: self.f("resolution")?,
            max_value: self.f("max_value")?,
            sweep_points: self.u("gap.sweep_points")?,
            sweep_steps: self.u("gap.sweep_steps")?,
            sweep_lo: self.f("gap.sweep_lo")?,
            sweep_hi: self.f("gap.sweep_hi")?,
            knee_tolerance: self.f("gap.knee_tolerance")?,
            knee: KneeConfig { floor_rel: self.f("gap.knee_floor")? },
        })
    }

    pub fn clark(&self) -> Result<ClarkConfig> {
        Ok(ClarkConfig {
            radius: self.f("clark.radius")?,
            extrapolate: self.get("clark.extrapolate")?,
            ..ClarkConfig::default()
        })
    }

    pub fn fekete(&self) -> Result<FeketeConfig> {
        Ok(FeketeConfig {
            starts: self.u("fekete.starts")?,
            ascent_iterations: self.u("fekete.ascent_iterations")?,
            newton_iterations: self.u("fekete.newton_iterations")?,
            tolerance: self.f("fekete.tolerance")?,
            seed: self.seed()?,
        })
    }
}

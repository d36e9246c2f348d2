use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use rhf_pt::model::DemoKind;
use rhf_pt::Potential;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Nondeg,
    Deg,
    Mo,
    Wigner,
    Validate,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Nondeg => "nondeg",
            Mode::Deg => "deg",
            Mode::Mo => "mo",
            Mode::Wigner => "wigner",
            Mode::Validate => "validate",
        }
    }
}

/// Either explicit site values or a seeded random draw of given `‖w‖_𝒞′`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "unit")]
    pub norm: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            values: None,
            seed: 0,
            norm: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scf_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_scf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub system: DemoKind,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Criteria to run in validate mode; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("malformed config")?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Default setup for `validate` without a config file.
    pub fn validation_default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            system: DemoKind::Ring(rhf_pt::validation::ring_params(16, 2)),
            perturbation: PerturbationSpec::default(),
            mode: Some(Mode::Validate),
            order: None,
            beta_grid: None,
            tolerances: ToleranceOverrides::default(),
            output_dir: None,
            criteria: None,
        }
    }

    pub fn check(&self) -> anyhow::Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version);
        }
        if let Some(grid) = &self.beta_grid {
            if grid.iter().any(|b| !(*b > 0.0)) || grid.windows(2).any(|p| p[1] >= p[0]) {
                bail!("beta_grid must be positive and strictly decreasing");
            }
        }
        let p = &self.perturbation;
        if !(p.norm.is_finite() && p.norm >= 0.0) {
            bail!("perturbation.norm must be finite and non-negative");
        }
        if let Some(v) = &p.values {
            if v.iter().any(|x| !x.is_finite()) {
                bail!("perturbation.values must be finite");
            }
        }
        if let Some(ids) = &self.criteria {
            if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > rhf_pt::validation::CRITERIA.len()) {
                bail!("criterion {bad} does not exist");
            }
        }
        Ok(())
    }

    pub fn require_order(&self) -> anyhow::Result<usize> {
        match self.order {
            Some(n) if n >= 1 => Ok(n),
            Some(_) => bail!("order must be at least 1"),
            None => bail!("this mode needs `order`"),
        }
    }

    pub fn require_grid(&self) -> anyhow::Result<&[f64]> {
        match &self.beta_grid {
            Some(g) if g.len() >= 3 => Ok(g),
            Some(_) => bail!("beta_grid needs at least three points"),
            None => bail!("this mode needs `beta_grid`"),
        }
    }

    pub fn potential(&self, sys: &rhf_pt::LatticeSystem) -> anyhow::Result<Potential> {
        let p = &self.perturbation;
        match &p.values {
            Some(v) => {
                if v.len() != sys.n_sites() {
                    bail!("perturbation has {} values for {} sites", v.len(), sys.n_sites());
                }
                Ok(Potential::from_slice(v)?)
            }
            None if p.norm == 0.0 => Ok(Potential::zeros(sys.n_sites())),
            None => Ok(sys.random_potential(&mut ChaCha8Rng::seed_from_u64(p.seed), p.norm)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RING: &str = r#"
schema_version = 1
mode = "nondeg"
order = 2
beta_grid = [0.1, 0.05, 0.025]

[system]
kind = "ring"
n_sites = 8
n_electrons = 3

[perturbation]
seed = 4
norm = 0.5
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::parse(RING).unwrap();
        assert_eq!(cfg.mode, Some(Mode::Nondeg));
        assert_eq!(cfg.perturbation.seed, 4);
        let again = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_grids() {
        let typo = RING.replace("norm = 0.5", "nrom = 0.5");
        assert!(ExperimentConfig::parse(&typo).is_err());
        let inner = RING.replace("n_electrons = 3", "n_electrons = 3\nhoping = 2.0");
        assert!(ExperimentConfig::parse(&inner).is_err());
        let grid = RING.replace("[0.1, 0.05, 0.025]", "[0.1, 0.2, 0.025]");
        assert!(ExperimentConfig::parse(&grid).is_err());
        let version = RING.replace("schema_version = 1", "schema_version = 7");
        assert!(ExperimentConfig::parse(&version).is_err());
    }
}

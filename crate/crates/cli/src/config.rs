//! JSON run and scenario configuration.
//!
//! A run config has the sections below; every section and key is optional
//! and unknown keys are rejected.
//!
//! ```json
//! {
//!   "data": { "counts": "counts.csv", "format": "dense-csv", "coords": "coords.csv",
//!             "c0": null, "qc": true },
//!   "qc": { "min_spot_total": 100, "max_gene_zero_prop": 0.9, "min_gene_max": 10,
//!           "gene_rule": "and" },
//!   "hyperparams": { "alpha_mu": 1, "beta_mu": 1, "alpha_pi": 1, "beta_pi": 1,
//!                    "alpha_omega": 0.1, "beta_omega": 1.9, "move_prob_rho": 0.5 },
//!   "mfm": { "alpha0": 1, "lambda": 1, "d": 1 },
//!   "mcmc": { "iterations": 10000, "burn_in": 5000, "thin": 1, "seed": 1,
//!             "record_r": false, "gamma_steps": null, "split_merge_steps": 5,
//!             "init": "k-means" },
//!   "summary": { "selection": "median", "bfdr_level": 0.05 },
//!   "linkage": "average",
//!   "grid": [0, 0.5, 1, 1.5, 2, 2.5, 3],
//!   "threads": 1
//! }
//! ```
//!
//! A manifest written by `fit` or `select-d` is also accepted: its `config`
//! member is used.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use zipmfm::data::{CountFormat, QcConfig};
use zipmfm::mfm::MfmConfig;
use zipmfm::posterior::{Linkage, SummaryConfig};
use zipmfm::sampler::{Hyperparams, McmcConfig};
use zipmfm::selection::DEFAULT_GRID;
use zipmfm::simulation::{Pattern, SimScenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub counts: Option<PathBuf>,
    pub format: CountFormat,
    pub coords: Option<PathBuf>,
    /// Neighbor distance threshold; `None` picks it from the coordinates.
    pub c0: Option<f64>,
    /// Apply quality control before fitting.
    pub qc: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            counts: None,
            format: CountFormat::DenseCsv,
            coords: None,
            c0: None,
            qc: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub qc: QcConfig,
    pub hyperparams: Hyperparams,
    pub mfm: MfmConfig,
    pub mcmc: McmcConfig,
    pub summary: SummaryConfig,
    pub linkage: Linkage,
    pub grid: Vec<f64>,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            qc: QcConfig::default(),
            hyperparams: Hyperparams::default(),
            mfm: MfmConfig::default(),
            mcmc: McmcConfig::default(),
            summary: SummaryConfig::default(),
            linkage: Linkage::default(),
            grid: DEFAULT_GRID.to_vec(),
            threads: 1,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        let v = match v {
            Value::Object(mut m) if m.contains_key("config_sha256") && m.contains_key("config") => {
                m.remove("config").unwrap_or(Value::Null)
            }
            other => other,
        };
        let cfg: RunConfig = serde_json::from_value(v).context("invalid run config")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative input paths relative to the config file's directory,
    /// then absolute, so a manifest written elsewhere still points at them.
    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.data.counts, &mut self.data.coords].into_iter().flatten() {
            *p = absolute(&base.join(&*p));
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams.validate().context("hyperparams")?;
        self.mfm.validate().context("mfm")?;
        self.mcmc.validate().context("mcmc")?;
        if self.threads == 0 {
            bail!("threads must be >= 1");
        }
        if let Some(c0) = self.data.c0 {
            if !(c0 > 0.0 && c0.is_finite()) {
                bail!("data.c0 must be > 0, got {c0}");
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub(crate) fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Scenario for `simulate`: an optional named pattern plus overrides.
/// `layout` points to a `spot_id,x,y,label` file whose labels replace the
/// Potts field (lattice size and smoothing keys are then ignored).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub pattern: Option<Pattern>,
    pub layout: Option<PathBuf>,
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub k: Option<usize>,
    pub potts_beta: Option<f64>,
    pub sweeps: Option<usize>,
    pub p: Option<usize>,
    pub p_gamma: Option<usize>,
    pub pi: Option<f64>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("invalid scenario config {}", path.display()))?;
        if let Some(l) = cfg.layout.as_mut() {
            *l = absolute(&path.parent().unwrap_or(Path::new(".")).join(&*l));
        }
        Ok(cfg)
    }

    pub fn scenario(&self) -> SimScenario {
        let mut s = match self.pattern {
            Some(p) => SimScenario::pattern(p, self.pi.unwrap_or(0.1)),
            None => SimScenario::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { s.$f = v; } )* };
        }
        over!(height, width, k, potts_beta, sweeps, p, p_gamma, pi, seed);
        s
    }
}

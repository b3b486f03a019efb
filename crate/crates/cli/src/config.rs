use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kobias_core::estimators::Estimator;
use kobias_core::pipeline::PipelineConfig;
use kobias_core::scoring::ScoringKind;
use kobias_core::seed;
use kobias_core::simulator::{Regime, SimConfig, FULL_SCALE_P, PAPER_NT};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

/// Sweep over `(p0, regime, n_t)` cells sharing one set of sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub p: usize,
    /// Density values at the full gene count; scaled by `p / 6400` and
    /// rounded up when `scale_density` is set.
    pub n_t: Vec<f64>,
    pub scale_density: bool,
    pub p0: Vec<usize>,
    pub regimes: Vec<Regime>,
    /// Defaults to `min(300, p / 2)`.
    pub n1: Option<usize>,
    /// Defaults to `p / 4`.
    pub n2: Option<usize>,
    pub shift: f64,
    pub noise_sd: f64,
    pub trials: usize,
    pub seed: u64,
    pub alpha: f64,
    pub k_lasso: usize,
    pub estimators: Vec<Estimator>,
    /// Also write the first trial's dataset of the first cell under
    /// `dataset/`.
    pub emit_dataset: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            p: 400,
            n_t: PAPER_NT.to_vec(),
            scale_density: true,
            p0: vec![1, 2],
            regimes: vec![Regime::Strong, Regime::Weak],
            n1: None,
            n2: None,
            shift: -40.0,
            noise_sd: 1.0,
            trials: 100,
            seed: 0,
            alpha: 0.05,
            k_lasso: 4,
            estimators: Estimator::ALL.to_vec(),
            emit_dataset: false,
        }
    }
}

impl SimulateConfig {
    /// One validated simulation config per cell, each with its own seed
    /// derived from the master seed and the cell coordinates.
    pub fn cells(&self) -> Result<Vec<SimConfig>> {
        if self.n_t.is_empty() || self.p0.is_empty() || self.regimes.is_empty() {
            bail!("n_t, p0 and regimes must each list at least one value");
        }
        if self.estimators.is_empty() {
            bail!("estimators: list at least one estimator");
        }
        let mut out = Vec::new();
        for &p0 in &self.p0 {
            for &regime in &self.regimes {
                for &n_t in &self.n_t {
                    let density = if self.scale_density {
                        (n_t * self.p as f64 / FULL_SCALE_P as f64).ceil()
                    } else {
                        n_t
                    };
                    let cfg = SimConfig {
                        p: self.p,
                        n_t: density,
                        p0,
                        regime,
                        n1: self.n1.unwrap_or(300.min(self.p / 2)),
                        n2: self.n2.unwrap_or(self.p / 4),
                        shift: self.shift,
                        noise_sd: self.noise_sd,
                        trials: self.trials,
                        seed: seed::derive(self.seed, &[p0 as u64, regime as u64, n_t.to_bits()]),
                        alpha: self.alpha,
                        k_lasso: self.k_lasso,
                    };
                    cfg.validate()?;
                    out.push(cfg);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    pub obs: PathBuf,
    pub intv: PathBuf,
    pub meta: PathBuf,
}

impl DatasetPaths {
    /// Resolves relative paths against `base`.
    pub fn resolved(&self, base: &Path) -> DatasetPaths {
        let r = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        DatasetPaths {
            obs: r(&self.obs),
            intv: r(&self.intv),
            meta: r(&self.meta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSettings {
    pub folds: usize,
    pub bootstraps: usize,
    pub k_lasso: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        let d = PipelineConfig::default();
        PipelineSettings {
            folds: d.folds,
            bootstraps: d.bootstraps,
            k_lasso: d.k_lasso,
            alpha: d.alpha,
            seed: d.seed,
        }
    }
}

impl PipelineSettings {
    pub fn for_estimator(&self, estimator: Estimator) -> PipelineConfig {
        PipelineConfig {
            folds: self.folds,
            bootstraps: self.bootstraps,
            k_lasso: self.k_lasso,
            alpha: self.alpha,
            seed: self.seed,
            estimator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Relative paths are taken from the config file's directory.
    pub dataset: DatasetPaths,
    #[serde(default = "default_scoring")]
    pub scoring: ScoringKind,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    /// Rows of the flipped-rank table per estimator.
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default)]
    pub pipeline: PipelineSettings,
}

fn default_scoring() -> ScoringKind {
    ScoringKind::Symmetric
}

fn default_estimators() -> Vec<Estimator> {
    Estimator::ALL.to_vec()
}

fn default_top_n() -> usize {
    10
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            dataset: DatasetPaths {
                obs: "obs.tsv".into(),
                intv: "intv.tsv".into(),
                meta: "meta.json".into(),
            },
            scoring: default_scoring(),
            estimators: default_estimators(),
            top_n: default_top_n(),
            pipeline: PipelineSettings::default(),
        }
    }
}

impl EvaluateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            bail!("estimators: list at least one estimator");
        }
        if self.top_n == 0 {
            bail!("top_n: must be at least 1");
        }
        self.pipeline.for_estimator(Estimator::L1).validate()?;
        Ok(())
    }
}

/// Parses a comma-separated estimator list such as `L1,CD`.
pub fn parse_estimators(list: &str) -> Result<Vec<Estimator>> {
    let mut out: Vec<Estimator> = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let est: Estimator = item.parse()?;
        if !out.contains(&est) {
            out.push(est);
        }
    }
    if out.is_empty() {
        bail!("--estimators: list at least one estimator");
    }
    Ok(out)
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{BaselineSpec, Method, SolverOptions};
use crate::error::{Error, Result};
use crate::estimator::{FitConfig, NoiseLevel};
use crate::packing::{PackingConfig, PackingParams};
use crate::synth::SynthConfig;

/// Environment variable that replaces every seed in a config.
pub const SEED_ENV: &str = "ARRR_SEED";

/// Value of [`SEED_ENV`], if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => {
            raw.trim().parse().map(Some).map_err(|_| {
                Error::Config(format!("{SEED_ENV}={raw:?} is not an unsigned integer"))
            })
        }
        Err(_) => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Sweep,
    Compare,
    Rolling,
    Packing,
    Angles,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Compare => "compare",
            ExperimentKind::Rolling => "rolling",
            ExperimentKind::Packing => "packing",
            ExperimentKind::Angles => "angles",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default)]
    pub k1_list: Vec<usize>,
    #[serde(default)]
    pub k2_list: Vec<usize>,
    /// Empty means "the η of the synth section".
    #[serde(default)]
    pub eta_list: Vec<f64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

/// A baseline method with lists of candidate hyperparameters; the grid is
/// their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineGrid {
    pub method: Method,
    #[serde(default)]
    pub mu_list: Vec<f64>,
    #[serde(default)]
    pub rank_list: Vec<usize>,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl BaselineGrid {
    pub fn expand(&self) -> Vec<BaselineSpec> {
        let mus = if self.mu_list.is_empty() {
            vec![0.0]
        } else {
            self.mu_list.clone()
        };
        let ranks: Vec<Option<usize>> = if self.method.needs_rank() {
            self.rank_list.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        let mut specs = Vec::with_capacity(mus.len() * ranks.len());
        for &mu in &mus {
            for &rank in &ranks {
                specs.push(BaselineSpec {
                    method: self.method,
                    mu,
                    rank,
                    solver: self.solver,
                });
            }
        }
        specs
    }

    fn validate(&self, n: usize, d1: usize, d2: usize) -> Result<()> {
        let name = self.method.name();
        if self.method.needs_rank() && self.rank_list.is_empty() {
            return Err(Error::Config(format!(
                "baseline {name} needs a non-empty rank_list"
            )));
        }
        if !self.method.needs_rank() && !self.rank_list.is_empty() {
            return Err(Error::Config(format!("baseline {name} takes no rank_list")));
        }
        let uses_mu = !matches!(self.method, Method::Rrr | Method::Pcr);
        if !uses_mu && !self.mu_list.is_empty() {
            return Err(Error::Config(format!("baseline {name} takes no mu_list")));
        }
        if uses_mu && self.mu_list.is_empty() {
            return Err(Error::Config(format!(
                "baseline {name} needs a non-empty mu_list"
            )));
        }
        for spec in self.expand() {
            spec.validate(n, d1, d2)
                .map_err(|e| Error::Config(format!("baseline {name}: {e}")))?;
        }
        Ok(())
    }
}

/// Candidate `(θ, δ)` values for the adaptive estimator in validated runs.
/// Empty lists fall back to the values in the `fit` section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveGrid {
    #[serde(default)]
    pub theta_list: Vec<f64>,
    #[serde(default)]
    pub delta_list: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RollingConfig {
    /// Return panel CSV; relative paths resolve against the config file.
    pub panel: PathBuf,
    #[serde(default = "default_lookbacks")]
    pub lookbacks: Vec<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    pub train_len: usize,
    pub valid_len: usize,
    pub test_len: usize,
    #[serde(default)]
    pub gap_len: usize,
}

fn default_lookbacks() -> Vec<usize> {
    vec![1, 5, 10]
}
fn default_horizon() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnglesConfig {
    /// Leading eigenvectors compared on each side.
    #[serde(default = "default_top")]
    pub top: usize,
}

fn default_top() -> usize {
    20
}

impl Default for AnglesConfig {
    fn default() -> Self {
        AnglesConfig { top: default_top() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub baselines: Vec<BaselineGrid>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub adaptive: AdaptiveGrid,
    /// Give the adaptive estimator the true noise level of synthetic data.
    #[serde(default)]
    pub oracle_sigma: bool,
    /// Validation draw size; defaults to the training size.
    #[serde(default)]
    pub valid_n: Option<usize>,
    /// Test draw size; defaults to the training size.
    #[serde(default)]
    pub test_n: Option<usize>,
    #[serde(default)]
    pub packing: Option<PackingConfig>,
    #[serde(default)]
    pub rolling: Option<RollingConfig>,
    #[serde(default)]
    pub angles: Option<AnglesConfig>,
    #[serde(default)]
    pub io: IoConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    /// Reads a config file, applies the seed override from the environment
    /// and resolves the panel path against the file's directory.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(seed) = env_seed()? {
            cfg.override_seed(seed);
        }
        if let (Some(r), Some(dir)) = (cfg.rolling.as_mut(), path.parent()) {
            if r.panel.is_relative() {
                r.panel = dir.join(&r.panel);
            }
        }
        Ok(cfg)
    }

    /// Replaces the seed list and the seeds of the synth and packing sections.
    pub fn override_seed(&mut self, seed: u64) {
        self.grids.seeds = vec![seed];
        if let Some(s) = self.synth.as_mut() {
            s.seed = seed;
        }
        if let Some(p) = self.packing.as_mut() {
            p.seed = seed;
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        // serde_json::Value keeps object keys sorted, which makes the
        // serialization independent of field order in the source file.
        let value = serde_json::to_value(self).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Seeds of synthetic runs; the synth seed when the list is empty.
    pub(crate) fn seeds(&self) -> Vec<u64> {
        if !self.grids.seeds.is_empty() {
            return self.grids.seeds.clone();
        }
        vec![self.synth.as_ref().map_or(0, |s| s.seed)]
    }

    pub(crate) fn etas(&self) -> Vec<f64> {
        if !self.grids.eta_list.is_empty() {
            return self.grids.eta_list.clone();
        }
        vec![self.synth.as_ref().map_or(0.0, |s| s.eta)]
    }

    /// `(θ, δ)` candidates for the adaptive estimator, θ-major.
    pub(crate) fn adaptive_candidates(&self) -> Vec<(f64, f64)> {
        let thetas = if self.adaptive.theta_list.is_empty() {
            vec![self.fit.theta]
        } else {
            self.adaptive.theta_list.clone()
        };
        let deltas = if self.adaptive.delta_list.is_empty() {
            vec![self.fit.delta]
        } else {
            self.adaptive.delta_list.clone()
        };
        thetas
            .iter()
            .flat_map(|&t| deltas.iter().map(move |&d| (t, d)))
            .collect()
    }

    pub(crate) fn valid_n(&self, n: usize) -> usize {
        self.valid_n.unwrap_or(n)
    }

    pub(crate) fn test_n(&self, n: usize) -> usize {
        self.test_n.unwrap_or(n)
    }

    /// Schema checks that need no data. Rolling runs finish their checks
    /// once the panel shape is known.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Error::Config(m);
        let kind = self.kind.name();
        self.fit
            .validate()
            .map_err(|e| cfg(format!("fit section: {e}")))?;
        for &(t, d) in &self.adaptive_candidates() {
            FitConfig {
                theta: t,
                delta: d,
                ..self.fit.clone()
            }
            .validate()
            .map_err(|e| cfg(format!("adaptive grid: {e}")))?;
        }
        if self.grids.eta_list.iter().any(|e| !(*e >= 0.0)) {
            return Err(cfg("eta_list entries must be non-negative".into()));
        }
        if matches!(self.valid_n, Some(n) if n < 2) || matches!(self.test_n, Some(n) if n < 2) {
            return Err(cfg("valid_n and test_n must be at least 2".into()));
        }
        match self.kind {
            ExperimentKind::Sweep | ExperimentKind::Compare | ExperimentKind::Angles => {
                let synth = self
                    .synth
                    .as_ref()
                    .ok_or_else(|| cfg(format!("{kind} needs a synth section")))?;
                for eta in self.etas() {
                    SynthConfig {
                        eta,
                        ..synth.clone()
                    }
                    .validate()
                    .map_err(|e| cfg(format!("synth section: {e}")))?;
                }
                if self.oracle_sigma && matches!(self.fit.sigma_eps, NoiseLevel::Known(_)) {
                    return Err(cfg(
                        "oracle_sigma conflicts with an explicit fit.sigma_eps".into()
                    ));
                }
                match self.kind {
                    ExperimentKind::Sweep => self.validate_sweep(synth)?,
                    ExperimentKind::Compare => {
                        for b in &self.baselines {
                            b.validate(synth.n, synth.d1, synth.d2)?;
                        }
                    }
                    _ => {
                        let top = self.angles.clone().unwrap_or_default().top;
                        if top == 0 || top > synth.d1 {
                            return Err(cfg(format!(
                                "angles.top = {top} must lie in 1..=d1 = {}",
                                synth.d1
                            )));
                        }
                    }
                }
            }
            ExperimentKind::Rolling => {
                let r = self
                    .rolling
                    .as_ref()
                    .ok_or_else(|| cfg("rolling needs a rolling section".into()))?;
                if r.lookbacks.is_empty() || r.lookbacks.contains(&0) || r.horizon == 0 {
                    return Err(cfg("rolling lookbacks and horizon must be positive".into()));
                }
                if r.train_len < 2 || r.valid_len == 0 || r.test_len == 0 {
                    return Err(cfg(
                        "rolling needs train_len >= 2 and positive valid/test lengths".into(),
                    ));
                }
                if self.oracle_sigma {
                    return Err(cfg("oracle_sigma needs synthetic data".into()));
                }
            }
            ExperimentKind::Packing => {
                let p = self
                    .packing
                    .as_ref()
                    .ok_or_else(|| cfg("packing needs a packing section".into()))?;
                PackingParams::derive(p)
                    .and_then(|params| params.validate())
                    .map_err(|e| cfg(format!("packing section: {e}")))?;
            }
        }
        Ok(())
    }

    fn validate_sweep(&self, synth: &SynthConfig) -> Result<()> {
        let cfg = |m: String| Error::Config(m);
        let g = &self.grids;
        if g.k1_list.is_empty() || g.k2_list.is_empty() {
            return Err(cfg("sweep needs non-empty k1_list and k2_list".into()));
        }
        let k1_cap = synth.n.min(synth.d1);
        if let Some(&k) = g.k1_list.iter().find(|&&k| k == 0 || k > k1_cap) {
            return Err(cfg(format!(
                "k1 = {k} must lie in 1..=min(n, d1) = {k1_cap}"
            )));
        }
        if let Some(&k) = g.k2_list.iter().find(|&&k| k > synth.d2) {
            return Err(cfg(format!("k2 = {k} exceeds d2 = {}", synth.d2)));
        }
        if !g
            .k1_list
            .iter()
            .any(|&k1| g.k2_list.iter().any(|&k2| k2 <= k1))
        {
            return Err(cfg("no (k1, k2) cell with k2 <= k1".into()));
        }
        Ok(())
    }

    /// Rolling checks that need the feature-matrix shape.
    pub(crate) fn validate_rolling_shapes(&self, n: usize, d1: usize, d2: usize) -> Result<()> {
        for b in &self.baselines {
            b.validate(n, d1, d2)?;
        }
        Ok(())
    }
}

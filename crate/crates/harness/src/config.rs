use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context};
use serde::{Deserialize, Serialize};
use ssada_core::adapt::{AdaptConfig, AdaptMethod, ProbeConfig};
use ssada_core::data::{BaseDistribution, DomainFamily};
use ssada_core::dino::{BackboneSpec, ProjectorSpec, SslConfig};
use ssada_core::sampler::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelerMode {
    #[default]
    Oracle,
    Service,
}

impl FromStr for LabelerMode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "service" => Ok(Self::Service),
            _ => bail!("unknown labeler mode {s:?} (expected oracle or service)"),
        }
    }
}

/// Where the domains come from: CSV files when `paths` is non-empty,
/// otherwise the generated family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub family: Option<DomainFamily>,
    /// CSV pools; each is named by its file stem.
    pub paths: Vec<PathBuf>,
    /// Name of the labeled source pool when loading CSVs; defaults to the first path.
    pub source: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            family: Some(DomainFamily::table_one(16, 0)),
            paths: Vec::new(),
            source: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkflowToggles {
    pub ssl_pretrain: bool,
    pub ssl_retrain: bool,
    pub uda_dann: bool,
}

impl Default for WorkflowToggles {
    fn default() -> Self {
        Self {
            ssl_pretrain: true,
            ssl_retrain: true,
            uda_dann: false,
        }
    }
}

/// Unlabeled corpus for generic pretraining, unrelated to the domain family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub base: BaseDistribution,
    pub noise: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_samples: 4000,
            seed: 7919,
            base: BaseDistribution::Gaussian { separation: 2.0 },
            noise: 0.3,
        }
    }
}

/// One ADA grid column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEntry {
    pub strategy: Strategy,
    pub method: AdaptMethod,
}

impl GridEntry {
    pub fn name(&self) -> String {
        format!("{}-{}", self.strategy, self.method)
    }
}

impl fmt::Display for GridEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.strategy, self.method)
    }
}

pub fn default_grid() -> Vec<GridEntry> {
    use AdaptMethod::*;
    use Strategy::*;
    [(Uniform, Finetune), (Aada, Dann), (Clue, Mme), (Clue, Dann), (Badge, Finetune)]
        .into_iter()
        .map(|(strategy, method)| GridEntry { strategy, method })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub port: u16,
    /// Seconds a round may wait for labels before it is aborted.
    pub timeout_secs: u64,
    /// Round journal; relative paths resolve against the output directory.
    pub journal: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            timeout_secs: 3600,
            journal: PathBuf::from("rounds.jsonl"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    /// Labels queried per round.
    pub budget: usize,
    pub rounds: usize,
    /// Share of each target pool held out for evaluation.
    pub eval_fraction: f64,
    pub labeler: LabelerMode,
    /// Run seeds on separate threads (oracle labeler only).
    pub parallel: bool,
    pub data: DataConfig,
    pub workflow: WorkflowToggles,
    pub backbone: BackboneSpec,
    pub projector: ProjectorSpec,
    pub corpus: CorpusConfig,
    pub pretrain: SslConfig,
    pub retrain: SslConfig,
    pub probe: ProbeConfig,
    pub adapt: AdaptConfig,
    /// Unsupervised DANN applied before any round when `workflow.uda_dann` is set.
    pub uda: AdaptConfig,
    pub clue_temperature: f64,
    pub grid: Vec<GridEntry>,
    pub service: ServiceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ssl = SslConfig {
            samples_per_epoch: Some(2048),
            ..SslConfig::default()
        };
        Self {
            seeds: (0..5).collect(),
            budget: 10,
            rounds: 1,
            eval_fraction: 0.5,
            labeler: LabelerMode::Oracle,
            parallel: true,
            data: DataConfig::default(),
            workflow: WorkflowToggles::default(),
            backbone: BackboneSpec::default(),
            projector: ProjectorSpec {
                hidden_dim: 64,
                output_dim: 64,
                ..ProjectorSpec::default()
            },
            corpus: CorpusConfig::default(),
            pretrain: ssl.clone(),
            retrain: ssl,
            probe: ProbeConfig::default(),
            adapt: AdaptConfig::default(),
            uda: AdaptConfig {
                train_backbone: true,
                ..AdaptConfig::default()
            },
            clue_temperature: 1.0,
            grid: default_grid(),
            service: ServiceConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        // CSV paths in the file are relative to the file.
        if let Some(dir) = path.parent() {
            for p in &mut cfg.data.paths {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ensure!(!self.seeds.is_empty(), "at least one seed is required");
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        ensure!(seeds.len() == self.seeds.len(), "seeds must be distinct");
        ensure!(
            self.eval_fraction > 0.0 && self.eval_fraction < 1.0,
            "eval_fraction must lie in (0, 1)"
        );
        ensure!(self.clue_temperature > 0.0, "clue_temperature must be positive");
        let mut names: Vec<String> = self.grid.iter().map(GridEntry::name).collect();
        names.sort();
        names.dedup();
        ensure!(names.len() == self.grid.len(), "grid entries must be distinct");
        if self.data.paths.is_empty() {
            match &self.data.family {
                Some(f) => f.validate()?,
                None => bail!("data needs a family or CSV paths"),
            }
        }
        Ok(())
    }
}

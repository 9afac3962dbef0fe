//! Run configuration: a TOML file plus command-line overrides.
//!
//! ```toml
//! dataset = "data/manifest.txt"   # relative to this file
//! output_dir = "out"
//! seed = 7                        # feeds both [model] and [injection]
//! ground_truth = "out/ground_truth.txt"
//! k_list = [50, 150, 300]
//! epsilon_sweep = [0.1, 0.3, 0.5, 0.7, 0.9]
//!
//! [model]
//! epochs = 300
//! epsilon = 0.5
//! fusion = "attention"            # or "average"
//! encoder = "simplified"          # or "multilayer"
//!
//! [injection]
//! clique_size = 10
//! n_cliques = 1
//! n_attr_anomalies = 10
//! target_views = "all"            # "random-one", or { named = ["a", "b"] }
//! ```
//!
//! Every key is optional except `dataset` and `output_dir`, which may also
//! come from flags.

use std::fs;
use std::path::{Path, PathBuf};

use anomman_core::{EncoderMode, Error, FusionMode, HyperParams, InjectionSpec, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

pub const DEFAULT_K_LIST: [usize; 3] = [50, 150, 300];

pub fn default_epsilon_sweep() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

fn default_k_list() -> Vec<usize> {
    DEFAULT_K_LIST.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Overrides the seeds in `[model]` and `[injection]` when set.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    #[serde(default = "default_k_list")]
    pub k_list: Vec<usize>,
    #[serde(default)]
    pub epsilon_sweep: Option<Vec<f64>>,
    #[serde(default)]
    pub model: HyperParams,
    #[serde(default)]
    pub injection: InjectionSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            output_dir: None,
            seed: None,
            ground_truth: None,
            k_list: default_k_list(),
            epsilon_sweep: None,
            model: HyperParams::default(),
            injection: InjectionSpec::default(),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::parse(&text, path)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Parses TOML text; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format {
            path: origin.to_path_buf(),
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.dataset, &mut self.output_dir, &mut self.ground_truth]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.dataset {
            self.dataset = Some(v.clone());
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = Some(v.clone());
        }
        if let Some(v) = &o.ground_truth {
            self.ground_truth = Some(v.clone());
        }
        if let Some(v) = o.seed {
            self.seed = Some(v);
        }
        if let Some(v) = &o.k_list {
            self.k_list = v.clone();
        }
        if let Some(v) = &o.epsilon_sweep {
            self.epsilon_sweep = Some(v.clone());
        }
        let m = &mut self.model;
        if let Some(v) = o.epochs {
            m.epochs = v;
        }
        if let Some(v) = o.epsilon {
            m.epsilon = v;
        }
        if let Some(v) = o.learning_rate {
            m.learning_rate = v;
        }
        if let Some(v) = o.filter_order {
            m.filter_order = v;
        }
        if let Some(v) = o.embedding_dim {
            m.embedding_dim = v;
        }
        if let Some(v) = o.fusion {
            m.fusion = v.into();
        }
        if let Some(v) = o.encoder {
            m.encoder = v.into();
        }
        if let Some(v) = o.block_size {
            m.block_size = v;
        }
    }

    /// Model hyperparameters with the run seed applied.
    pub fn hyper(&self) -> HyperParams {
        let mut hp = self.model.clone();
        if let Some(s) = self.seed {
            hp.seed = s;
        }
        hp
    }

    pub fn injection_spec(&self) -> InjectionSpec {
        let mut spec = self.injection.clone();
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        spec
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.epsilon_sweep.clone().unwrap_or_else(default_epsilon_sweep)
    }

    pub fn dataset(&self) -> Result<&Path> {
        let p = self
            .dataset
            .as_deref()
            .ok_or_else(|| Error::Invalid("no dataset manifest given (config `dataset` or --dataset)".into()))?;
        if !p.is_file() {
            return Err(Error::Invalid(format!(
                "dataset manifest {} does not exist",
                p.display()
            )));
        }
        Ok(p)
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.output_dir
            .as_deref()
            .ok_or_else(|| Error::Invalid("no output directory given (config `output_dir` or --output-dir)".into()))
    }

    pub fn ground_truth_path(&self) -> Result<PathBuf> {
        match &self.ground_truth {
            Some(p) => Ok(p.clone()),
            None => Ok(self.output_dir()?.join(crate::GROUND_TRUTH_FILE)),
        }
    }

    /// Checks the k-list against the number of nodes.
    pub fn validate_k_list(&self, n: usize) -> Result<()> {
        if self.k_list.is_empty() {
            return Err(Error::Invalid("k_list is empty".into()));
        }
        for &k in &self.k_list {
            if k == 0 || k > n {
                return Err(Error::Invalid(format!("k_list entry {k} must lie in 1..={n}")));
            }
        }
        Ok(())
    }

    pub fn validate_sweep(&self) -> Result<()> {
        let eps = self.epsilons();
        if eps.is_empty() {
            return Err(Error::Invalid("epsilon_sweep is empty".into()));
        }
        for e in eps {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Invalid(format!(
                    "epsilon_sweep entry {e} must lie strictly between 0 and 1"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    Attention,
    Average,
}

impl From<FusionArg> for FusionMode {
    fn from(v: FusionArg) -> Self {
        match v {
            FusionArg::Attention => FusionMode::Attention,
            FusionArg::Average => FusionMode::Average,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncoderArg {
    Simplified,
    Multilayer,
}

impl From<EncoderArg> for EncoderMode {
    fn from(v: EncoderArg) -> Self {
        match v {
            EncoderArg::Simplified => EncoderMode::Simplified,
            EncoderArg::Multilayer => EncoderMode::Multilayer,
        }
    }
}

/// Flags shared by every pipeline command. Flags win over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Dataset manifest.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated Accuracy@K cut-offs.
    #[arg(long, value_delimiter = ',')]
    pub k_list: Option<Vec<usize>>,
    /// Comma-separated structure weights for sweep-epsilon.
    #[arg(long, value_delimiter = ',')]
    pub epsilon_sweep: Option<Vec<f64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Weight of the structure term.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub filter_order: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long, value_enum)]
    pub fusion: Option<FusionArg>,
    #[arg(long, value_enum)]
    pub encoder: Option<EncoderArg>,
    /// Rows per block of the structure loss.
    #[arg(long)]
    pub block_size: Option<usize>,
}

impl Overrides {
    /// The config file (if any) with these flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(self);
        cfg.hyper().validate()?;
        Ok(cfg)
    }
}

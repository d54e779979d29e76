//! Optional TOML pipeline config. Every field can be overridden by a flag.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub provider: Provider,
    pub normalize: Option<bool>,
    pub pca: Pca,
    pub mining: Mining,
    pub sampler: Sampler,
    pub eval: Eval,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub run: Option<PathBuf>,
    pub stores: Option<PathBuf>,
    pub pca_model: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Provider {
    pub url: Option<String>,
    pub models: Option<Vec<String>>,
    pub batch_size: Option<usize>,
    pub timeout_ms: Option<u64>,
    pub max_retries: Option<u32>,
    pub parallelism: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pca {
    pub variance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mining {
    pub k_negatives: Option<usize>,
    pub epsilon: Option<f64>,
    pub distance_space: Option<String>,
    pub exclude_cross_query_positives: Option<bool>,
    pub margin: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampler {
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub batch_size: Option<usize>,
    pub hybrid: Option<Vec<String>>,
    pub ratio: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Eval {
    pub ks: Option<Vec<usize>>,
    pub length_threshold: Option<usize>,
    pub missing: Option<String>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("config: cannot read {}: {e}", path.display()))?;
        let cfg: Self = toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("config: {}: {}", path.display(), e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if let Some(v) = self.pca.variance {
            if !(v > 0.0 && v <= 1.0) {
                bail!("config: pca.variance must be in (0, 1], got {v}");
            }
        }
        if let Some(ks) = &self.eval.ks {
            if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) || ks[0] == 0 {
                bail!("config: eval.ks must be nonempty, positive and strictly ascending");
            }
        }
        Ok(())
    }

    /// Resolves a path from a flag, the config, or `output_dir/default_name`.
    pub fn output(&self, flag: Option<PathBuf>, default_name: &str) -> Option<PathBuf> {
        flag.or_else(|| self.paths.output_dir.as_ref().map(|d| d.join(default_name)))
    }
}

//! Flat `key = value` run-configuration files.
//!
//! One key per training or loss-weight field, `#` starts a comment, unknown
//! keys are an error so typos fail loudly.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use connectogen::training::{LossWeights, TrainingConfig};
use connectogen::Metric;

#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub training: TrainingConfig,
    pub weights: LossWeights,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            training: TrainingConfig::default(),
            weights: LossWeights::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected key = value", no + 1))?;
            let key = key.trim();
            let value = value.trim();
            let ctx = |what: &str| format!("config line {}: bad {what} '{value}'", no + 1);
            match key {
                "iterations" => config.training.iterations = value.parse().with_context(|| ctx("integer"))?,
                "batch_size" => config.training.batch_size = value.parse().with_context(|| ctx("integer"))?,
                "learning_rate" => config.training.learning_rate = value.parse().with_context(|| ctx("number"))?,
                "beta1" => config.training.beta1 = value.parse().with_context(|| ctx("number"))?,
                "beta2" => config.training.beta2 = value.parse().with_context(|| ctx("number"))?,
                "n_critic" => config.training.n_critic = value.parse().with_context(|| ctx("integer"))?,
                "c" => config.training.c = value.parse().with_context(|| ctx("integer"))?,
                "centrality_metric" => {
                    config.training.centrality_metric =
                        value.parse::<Metric>().map_err(|e| anyhow!("config line {}: {e}", no + 1))?
                }
                "seed" => config.training.seed = value.parse().with_context(|| ctx("integer"))?,
                "checkpoint_interval" => {
                    config.training.checkpoint_interval = value.parse().with_context(|| ctx("integer"))?
                }
                "full_centrality" => {
                    config.training.full_centrality = value.parse().with_context(|| ctx("boolean"))?
                }
                "lambda_gdc" => config.weights.lambda_gdc = value.parse().with_context(|| ctx("number"))?,
                "lambda_gp" => config.weights.lambda_gp = value.parse().with_context(|| ctx("number"))?,
                "lambda_top" => config.weights.lambda_top = value.parse().with_context(|| ctx("number"))?,
                "lambda_rec" => config.weights.lambda_rec = value.parse().with_context(|| ctx("number"))?,
                "lambda_inf" => config.weights.lambda_inf = value.parse().with_context(|| ctx("number"))?,
                "sigma" => config.weights.sigma = Some(value.parse().with_context(|| ctx("number"))?),
                other => bail!("config line {}: unknown key '{other}'", no + 1),
            }
        }
        Ok(config)
    }

    /// Canonical key=value rendering; echoed on every run and hashed into
    /// the checkpoint manifest.
    pub fn render(&self) -> String {
        let t = &self.training;
        let w = &self.weights;
        let mut out = String::new();
        out.push_str(&format!("iterations = {}\n", t.iterations));
        out.push_str(&format!("batch_size = {}\n", t.batch_size));
        out.push_str(&format!("learning_rate = {}\n", t.learning_rate));
        out.push_str(&format!("beta1 = {}\n", t.beta1));
        out.push_str(&format!("beta2 = {}\n", t.beta2));
        out.push_str(&format!("n_critic = {}\n", t.n_critic));
        out.push_str(&format!("c = {}\n", t.c));
        out.push_str(&format!("centrality_metric = {}\n", t.centrality_metric));
        out.push_str(&format!("seed = {}\n", t.seed));
        out.push_str(&format!("checkpoint_interval = {}\n", t.checkpoint_interval));
        out.push_str(&format!("full_centrality = {}\n", t.full_centrality));
        out.push_str(&format!("lambda_gdc = {}\n", w.lambda_gdc));
        out.push_str(&format!("lambda_gp = {}\n", w.lambda_gp));
        out.push_str(&format!("lambda_top = {}\n", w.lambda_top));
        out.push_str(&format!("lambda_rec = {}\n", w.lambda_rec));
        out.push_str(&format!("lambda_inf = {}\n", w.lambda_inf));
        match w.sigma {
            Some(s) => out.push_str(&format!("sigma = {s}\n")),
            None => out.push_str("# sigma = <number of target domains>\n"),
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_and_comments() {
        let cfg = RunConfig::parse(
            "# a run\niterations = 30\nc = 1\ncentrality_metric = CC # per-node\nlambda_top = 0\n",
        )
        .unwrap();
        assert_eq!(cfg.training.iterations, 30);
        assert_eq!(cfg.training.c, 1);
        assert_eq!(cfg.training.centrality_metric, Metric::Closeness);
        assert_eq!(cfg.weights.lambda_top, 0.0);
        // untouched defaults survive
        assert_eq!(cfg.training.batch_size, 70);
    }

    #[test]
    fn unknown_keys_fail() {
        let err = RunConfig::parse("iteratons = 30\n").unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");
    }

    #[test]
    fn render_parses_back() {
        let mut cfg = RunConfig::default();
        cfg.training.seed = 99;
        cfg.weights.sigma = Some(2.5);
        let round = RunConfig::parse(&cfg.render()).unwrap();
        assert_eq!(round.training.seed, 99);
        assert_eq!(round.weights.sigma, Some(2.5));
    }
}

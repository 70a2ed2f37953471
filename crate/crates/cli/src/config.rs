//! Flat `key = value` pipeline configuration.
//!
//! Precedence is flags over file over defaults: start from
//! [`PipelineConfig::default`], apply a file with [`PipelineConfig::apply_file`],
//! then apply individual flag values with [`PipelineConfig::set`].

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use untangle_core::graph::ExportFormat;
use untangle_core::temporal::{FitOptions, RangeOptions};
use untangle_core::{DisentangleSettings, HawkesModel, HawkesSource, TrainSettings};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: Vec<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub keep_empty: bool,
    pub train: TrainSettings,
    /// Fixed Hawkes parameters; `None` fits them per thread.
    pub hawkes: Option<HawkesModel>,
    pub fit: FitOptions,
    pub ranges: RangeOptions,
    pub formats: Vec<ExportFormat>,
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: Vec::new(),
            checkpoint: None,
            vocab: None,
            out_dir: PathBuf::from("."),
            keep_empty: false,
            train: TrainSettings::default(),
            hawkes: None,
            fit: FitOptions::default(),
            ranges: RangeOptions::default(),
            formats: vec![ExportFormat::Json, ExportFormat::Dot],
            threads: 1,
        }
    }
}

pub const KEYS: &[&str] = &[
    "input",
    "checkpoint",
    "vocab",
    "out_dir",
    "keep_empty",
    "min_count",
    "max_len",
    "paradigm",
    "k",
    "embed_dim",
    "hidden_dim",
    "learning_rate",
    "epochs",
    "negatives",
    "batch_size",
    "seed",
    "hawkes",
    "fit_steps",
    "fit_step_size",
    "tau",
    "quantile",
    "depth",
    "formats",
    "threads",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| anyhow::anyhow!("invalid value {value:?} for {key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => bail!("invalid value {value:?} for {key}: expected true or false"),
    }
}

impl PipelineConfig {
    /// Set one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let enc = &mut self.train.encoder;
        match key {
            "input" => {
                self.input = value
                    .split(',')
                    .map(|s| PathBuf::from(s.trim()))
                    .filter(|p| !p.as_os_str().is_empty())
                    .collect()
            }
            "checkpoint" => self.checkpoint = Some(value.into()),
            "vocab" => self.vocab = Some(value.into()),
            "out_dir" => self.out_dir = value.into(),
            "keep_empty" => self.keep_empty = parse_bool(key, value)?,
            "min_count" => self.train.min_count = parse(key, value)?,
            "max_len" => enc.max_len = parse(key, value)?,
            "paradigm" => self.train.paradigm = parse(key, value)?,
            "k" => self.train.k = parse(key, value)?,
            "embed_dim" => enc.embed_dim = parse(key, value)?,
            "hidden_dim" => enc.hidden_dim = parse(key, value)?,
            "learning_rate" => enc.learning_rate = parse(key, value)?,
            "epochs" => enc.epochs = parse(key, value)?,
            "negatives" => enc.negatives_per_sample = parse(key, value)?,
            "batch_size" => enc.batch_size = parse(key, value)?,
            "seed" => enc.seed = parse(key, value)?,
            "hawkes" => {
                self.hawkes = if value.trim().eq_ignore_ascii_case("fit") {
                    None
                } else {
                    let parts: Vec<f64> = value.split(',').map(|p| parse(key, p.trim())).collect::<Result<_>>()?;
                    let [mu, alpha, beta] = parts[..] else {
                        bail!("hawkes expects `fit` or `mu,alpha,beta`, got {value:?}");
                    };
                    Some(
                        HawkesModel::new(mu, alpha, beta)
                            .with_context(|| format!("invalid hawkes parameters {value:?}"))?,
                    )
                }
            }
            "fit_steps" => self.fit.steps = parse(key, value)?,
            "fit_step_size" => self.fit.step_size = parse(key, value)?,
            "tau" => {
                self.ranges.tau = if value.trim().eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "quantile" => self.ranges.quantile = parse(key, value)?,
            "depth" => self.ranges.depth = parse(key, value)?,
            "formats" => {
                self.formats = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<ExportFormat>().map_err(anyhow::Error::from))
                    .collect::<Result<_>>()?
            }
            "threads" => self.threads = parse(key, value)?,
            _ => bail!("unknown config key {key:?} (known keys: {})", KEYS.join(", ")),
        }
        Ok(())
    }

    /// Apply `key = value` lines. `#` starts a comment; blank lines are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`", n + 1);
            };
            self.set(key.trim(), value.trim())
                .with_context(|| format!("line {}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text)
            .with_context(|| format!("in config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.k == 0 {
            bail!("k must be >= 1");
        }
        let q = self.ranges.quantile;
        if !(q > 0.0 && q < 1.0) {
            bail!("quantile must lie strictly between 0 and 1, got {q}");
        }
        if !(0.0..1.0).contains(&self.ranges.depth) {
            bail!("depth must lie in [0, 1), got {}", self.ranges.depth);
        }
        if let Some(tau) = self.ranges.tau {
            if !(tau > 0.0 && tau.is_finite()) {
                bail!("tau must be positive, got {tau}");
            }
        }
        if self.threads == 0 {
            bail!("threads must be >= 1");
        }
        self.train.encoder.validate().map_err(anyhow::Error::from)
    }

    pub fn disentangle_settings(&self) -> DisentangleSettings {
        DisentangleSettings {
            hawkes: match self.hawkes {
                Some(m) => HawkesSource::Fixed(m),
                None => HawkesSource::Fit(self.fit),
            },
            ranges: self.ranges,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out_dir.join("model.untg"))
    }

    /// Vocabulary path: explicit, else `vocab.tsv` beside the checkpoint.
    pub fn vocab_path(&self) -> PathBuf {
        self.vocab.clone().unwrap_or_else(|| {
            let ckpt = self.checkpoint_path();
            ckpt.parent().unwrap_or(Path::new(".")).join("vocab.tsv")
        })
    }
}

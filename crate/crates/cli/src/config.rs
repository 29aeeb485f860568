use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use evo_ldp::games::Evaluation;
use evo_ldp::{GameSpec, ProtocolSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

/// Experiment configuration as read from a `--config` JSON file. Every field
/// except `schema_version` is optional; command-line flags take precedence.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// A file path, a built-in name (`congestion`, `two-links`), or an inline
    /// game object.
    pub game: Option<Value>,
    /// Shorthand such as `logit:0.25`, or a protocol object.
    pub protocol: Option<Value>,
    pub evaluation: Option<Evaluation>,
    pub seed: Option<u64>,
    pub pop_size: Option<u32>,
    pub pop_sizes: Option<Vec<u32>>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub mesh: Option<u32>,
    pub eta: Option<f64>,
    pub start: Option<Vec<f64>>,
    pub direction: Option<Vec<f64>>,
    pub path: Option<String>,
    pub replicas: Option<usize>,
    pub radius: Option<f64>,
    pub cap: Option<f64>,
    pub states: Option<Vec<Vec<f64>>>,
    pub delta: Option<f64>,
    pub target: Option<Vec<f64>>,
    pub kappa: Option<f64>,
    pub knots: Option<usize>,
    pub restarts: Option<usize>,
    pub out: Option<String>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        ensure!(
            cfg.schema_version == SCHEMA_VERSION,
            "config schema_version {} is not supported (expected {SCHEMA_VERSION})",
            cfg.schema_version
        );
        cfg.base = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn empty() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            ..Self::default()
        }
    }

    pub fn resolve_file(&self, p: &str) -> PathBuf {
        match &self.base {
            Some(base) if Path::new(p).is_relative() => base.join(p),
            _ => PathBuf::from(p),
        }
    }
}

/// A game given on the command line or in the config.
pub fn load_game(source: &Value, cfg: &ExperimentConfig, from_flag: bool) -> Result<GameSpec> {
    let game = match source {
        Value::String(s) => match s.as_str() {
            "congestion" => GameSpec::three_link_congestion(),
            "two-links" => GameSpec::parallel_links(vec![vec![0.0, 2.0], vec![1.0, 1.0]]),
            file => {
                let path = if from_flag { PathBuf::from(file) } else { cfg.resolve_file(file) };
                ensure!(path.exists(), "game file {} does not exist", path.display());
                let text = std::fs::read_to_string(&path)?;
                GameSpec::from_json(&text).with_context(|| format!("game file {}", path.display()))?
            }
        },
        Value::Object(_) => GameSpec::from_json(&source.to_string())?,
        other => bail!("game must be a path, a built-in name or an object, got {other}"),
    };
    game.validate()?;
    Ok(game)
}

pub fn parse_protocol(source: &Value) -> Result<ProtocolSpec> {
    Ok(match source {
        Value::String(s) => s.parse()?,
        Value::Object(_) => source.to_string().parse()?,
        other => bail!("protocol must be a string or an object, got {other}"),
    })
}

/// Hex SHA-256 of the canonical JSON of `v` (object keys sorted).
pub fn config_hash(v: &Value) -> String {
    let canonical = serde_json::to_string(v).expect("JSON values always serialize");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| anyhow::anyhow!("bad list entry `{p}`: {e}")))
        .collect()
}

/// `;`-separated points, each a `,`-separated list.
pub fn parse_points(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';').map(parse_list).collect()
}

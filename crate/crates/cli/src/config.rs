//! Engine configuration: a `key = value` file, then `NEL_*` environment
//! variables, then command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

pub const ENV_PREFIX: &str = "NEL_";
pub const DEFAULT_PORT: u16 = 8457;
pub const DEFAULT_BODY_LIMIT: usize = 1 << 20;

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// ignored; keys are case-insensitive and later keys win.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
        let k = k.trim();
        if k.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        out.insert(k.to_ascii_lowercase(), v.trim().to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub store: Option<PathBuf>,
    pub dict: Option<PathBuf>,
    pub lm: Option<PathBuf>,
    pub pagerank: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// Hyperparameters are fixed by the model; when set here they must agree.
    pub beta: Option<f64>,
    pub eta: Option<f64>,
    pub max_distance: Option<usize>,
    pub k: Option<usize>,
    /// Overrides the model's decision threshold.
    pub threshold: Option<f64>,
    pub max_candidates: usize,
    pub langs: Option<String>,
    pub port: u16,
    pub body_limit: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            store: None,
            dict: None,
            lm: None,
            pagerank: None,
            model: None,
            beta: None,
            eta: None,
            max_distance: None,
            k: None,
            threshold: None,
            max_candidates: 5,
            langs: None,
            port: DEFAULT_PORT,
            body_limit: DEFAULT_BODY_LIMIT,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| anyhow!("{key}: {e}"))
}

impl EngineConfig {
    /// Applies one setting. Relative paths resolve against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let path = || match base {
            Some(b) if Path::new(value).is_relative() => b.join(value),
            _ => PathBuf::from(value),
        };
        match key {
            "store" => self.store = Some(path()),
            "dict" => self.dict = Some(path()),
            "lm" => self.lm = Some(path()),
            "pagerank" => self.pagerank = Some(path()),
            "model" => self.model = Some(path()),
            "beta" => self.beta = Some(num(key, value)?),
            "eta" => self.eta = Some(num(key, value)?),
            "max_distance" => self.max_distance = Some(num(key, value)?),
            "k" => self.k = Some(num(key, value)?),
            "threshold" => self.threshold = Some(num(key, value)?),
            "max_candidates" => self.max_candidates = num(key, value)?,
            "langs" => self.langs = Some(value.to_string()),
            "port" => self.port = num(key, value)?,
            "body_limit" => self.body_limit = num(key, value)?,
            _ => bail!("unknown configuration key `{key}`"),
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent();
        for (k, v) in parse_kv(&text).with_context(|| path.display().to_string())? {
            self.set(&k, &v, base)?;
        }
        Ok(())
    }

    /// Applies `NEL_<KEY>` variables, e.g. `NEL_PORT` or `NEL_MODEL`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        for (k, v) in vars {
            if let Some(key) = k.strip_prefix(ENV_PREFIX) {
                let key = key.to_ascii_lowercase();
                if !KEYS.contains(&key.as_str()) {
                    continue;
                }
                self.set(&key, &v, None).with_context(|| format!("environment variable {k}"))?;
            }
        }
        Ok(())
    }

    /// Renders the configuration in the file format.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        for (k, p) in [
            ("store", &self.store),
            ("dict", &self.dict),
            ("lm", &self.lm),
            ("pagerank", &self.pagerank),
            ("model", &self.model),
        ] {
            if let Some(p) = p {
                put(k, p.display().to_string());
            }
        }
        if let Some(v) = self.beta {
            put("beta", v.to_string());
        }
        if let Some(v) = self.eta {
            put("eta", v.to_string());
        }
        if let Some(v) = self.max_distance {
            put("max_distance", v.to_string());
        }
        if let Some(v) = self.k {
            put("k", v.to_string());
        }
        if let Some(v) = self.threshold {
            put("threshold", v.to_string());
        }
        if let Some(v) = &self.langs {
            put("langs", v.clone());
        }
        put("max_candidates", self.max_candidates.to_string());
        put("port", self.port.to_string());
        put("body_limit", self.body_limit.to_string());
        out
    }
}

pub const KEYS: [&str; 14] = [
    "store",
    "dict",
    "lm",
    "pagerank",
    "model",
    "beta",
    "eta",
    "max_distance",
    "k",
    "threshold",
    "max_candidates",
    "langs",
    "port",
    "body_limit",
];

/// The configuration file written next to a trained model.
pub fn sidecar_path(model: &Path) -> PathBuf {
    let mut name = model.as_os_str().to_owned();
    name.push(".conf");
    PathBuf::from(name)
}

/// Resolves the configuration for commands that load a trained model:
/// `--config` if given, else the model's sidecar file if present, then the
/// environment. `model` from the command line always wins.
pub fn resolve(
    config_file: Option<&Path>,
    model: Option<&Path>,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<EngineConfig> {
    let mut cfg = EngineConfig::default();
    match (config_file, model) {
        (Some(file), _) => cfg.apply_file(file)?,
        (None, Some(m)) if sidecar_path(m).exists() => cfg.apply_file(&sidecar_path(m))?,
        _ => {}
    }
    cfg.apply_env(env)?;
    if let Some(m) = model {
        cfg.model = Some(m.to_path_buf());
    }
    Ok(cfg)
}

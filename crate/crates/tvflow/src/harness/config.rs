//! Flat key-value run configuration: one `key = value` per line, `#`
//! comments, documented grammar in the README. Parse errors carry the line
//! number; validation errors name the offending key. The resolved config
//! echoes back as an ordered string map that re-parses to the same config,
//! which is what makes manifests re-executable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::solver::Scheme;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("config key `{key}`: {message}")]
    Key { key: String, message: String },
    #[error("config: {0}")]
    General(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which batch study to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Single,
    Ensemble,
    LambdaSweep,
    Extinction,
    ViCheck,
    Contraction,
    UnitProperties,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Single => "single",
            Study::Ensemble => "ensemble",
            Study::LambdaSweep => "lambda-sweep",
            Study::Extinction => "extinction",
            Study::ViCheck => "vi-check",
            Study::Contraction => "contraction",
            Study::UnitProperties => "unit-properties",
        }
    }
}

impl FromStr for Study {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "single" => Ok(Study::Single),
            "ensemble" => Ok(Study::Ensemble),
            "lambda-sweep" => Ok(Study::LambdaSweep),
            "extinction" => Ok(Study::Extinction),
            "vi-check" => Ok(Study::ViCheck),
            "contraction" => Ok(Study::Contraction),
            "unit-properties" => Ok(Study::UnitProperties),
            other => Err(format!(
                "unknown study `{other}` (expected single, ensemble, lambda-sweep, \
                 extinction, vi-check, contraction, unit-properties)"
            )),
        }
    }
}

/// Initial condition: a named builtin profile or a grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitSpec {
    Cone,
    Bump,
    Square,
    Checkerboard,
    Image(PathBuf),
}

impl InitSpec {
    fn parse(s: &str) -> Result<InitSpec, String> {
        match s {
            "cone" => Ok(InitSpec::Cone),
            "bump" => Ok(InitSpec::Bump),
            "square" => Ok(InitSpec::Square),
            "checkerboard" => Ok(InitSpec::Checkerboard),
            other => match other.strip_prefix("image:") {
                Some(path) if !path.is_empty() => Ok(InitSpec::Image(PathBuf::from(path))),
                _ => Err(format!(
                    "unknown initial condition `{other}` (expected cone, bump, square, \
                     checkerboard, or image:<path.pgm>)"
                )),
            },
        }
    }

    fn echo(&self) -> String {
        match self {
            InitSpec::Cone => "cone".into(),
            InitSpec::Bump => "bump".into(),
            InitSpec::Square => "square".into(),
            InitSpec::Checkerboard => "checkerboard".into(),
            InitSpec::Image(p) => format!("image:{}", p.display()),
        }
    }
}

/// Fully resolved run configuration (file values plus defaults).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub study: Study,
    pub radius: f64,
    pub n: usize,
    pub omegas: Vec<f64>,
    pub lambda: f64,
    pub lambda_list: Vec<f64>,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub seed_base: u64,
    /// number of sampled paths; 0 selects the deterministic β ≡ 0 baseline
    pub seed_count: usize,
    pub init: InitSpec,
    pub amplitude: f64,
    pub output_dir: PathBuf,
    pub inner_tol: f64,
    pub inner_max: usize,
    pub state_stride: usize,
    pub workers: Option<usize>,
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<T>()
                .map_err(|e| format!("invalid list entry `{tok}`: {e}"))
        })
        .collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_config_text(&text)
    }

    /// Parse the flat `key = value` grammar and resolve defaults.
    pub fn from_config_text(text: &str) -> Result<RunConfig, ConfigError> {
        let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Line {
                    line: line_no,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if value.is_empty() {
                return Err(ConfigError::Line {
                    line: line_no,
                    message: format!("empty value for `{key}`"),
                });
            }
            if let Some((first_line, _)) = map.get(&key) {
                return Err(ConfigError::Line {
                    line: line_no,
                    message: format!("duplicate key `{key}` (first set on line {first_line})"),
                });
            }
            map.insert(key, (line_no, value));
        }
        let keyed: BTreeMap<String, String> =
            map.iter().map(|(k, (_, v))| (k.clone(), v.clone())).collect();
        RunConfig::from_key_values(&keyed).map_err(|e| match e {
            // attach the line number when the offending key came from the file
            ConfigError::Key { key, message } => match map.get(&key) {
                Some((line, _)) => ConfigError::Line {
                    line: *line,
                    message: format!("key `{key}`: {message}"),
                },
                None => ConfigError::Key { key, message },
            },
            other => other,
        })
    }

    /// Resolve a config from an already-keyed map (the manifest echo path).
    pub fn from_key_values(map: &BTreeMap<String, String>) -> Result<RunConfig, ConfigError> {
        const KNOWN: &[&str] = &[
            "study",
            "radius",
            "n",
            "omega",
            "lambda",
            "lambda_list",
            "dt",
            "t_final",
            "scheme",
            "seed_base",
            "seed_count",
            "init",
            "amplitude",
            "output_dir",
            "inner_tol",
            "inner_max",
            "state_stride",
            "workers",
        ];
        for key in map.keys() {
            if !KNOWN.contains(&key.as_str()) {
                return Err(ConfigError::Key {
                    key: key.clone(),
                    message: "unknown key".into(),
                });
            }
        }
        fn get<'m>(map: &'m BTreeMap<String, String>, key: &str) -> Option<&'m str> {
            map.get(key).map(|s| s.as_str())
        }
        fn required<'m>(map: &'m BTreeMap<String, String>, key: &str) -> Result<&'m str, ConfigError> {
            get(map, key).ok_or_else(|| ConfigError::General(format!("missing required key `{key}`")))
        }
        fn parsed<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse::<T>().map_err(|e| ConfigError::Key {
                key: key.to_string(),
                message: format!("invalid value `{value}`: {e}"),
            })
        }
        fn optional<T: FromStr>(
            map: &BTreeMap<String, String>,
            key: &str,
            default: T,
        ) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            match get(map, key) {
                Some(v) => parsed(key, v),
                None => Ok(default),
            }
        }

        let study: Study = parsed("study", required(map, "study")?)?;
        let scheme = match get(map, "scheme").unwrap_or("rescaled") {
            "rescaled" => Scheme::Rescaled,
            "ito" => Scheme::Ito,
            other => {
                return Err(ConfigError::Key {
                    key: "scheme".into(),
                    message: format!("unknown scheme `{other}` (expected rescaled or ito)"),
                })
            }
        };
        let omegas = parse_list::<f64>(required(map, "omega")?).map_err(|m| ConfigError::Key {
            key: "omega".into(),
            message: m,
        })?;
        let lambda_list = match get(map, "lambda_list") {
            Some(v) => parse_list::<f64>(v).map_err(|m| ConfigError::Key {
                key: "lambda_list".into(),
                message: m,
            })?,
            None => vec![0.2, 0.1, 0.05, 0.025],
        };
        let init = InitSpec::parse(get(map, "init").unwrap_or("bump")).map_err(|m| {
            ConfigError::Key {
                key: "init".into(),
                message: m,
            }
        })?;

        let cfg = RunConfig {
            study,
            radius: optional(map, "radius", 1.0)?,
            n: parsed("n", required(map, "n")?)?,
            omegas,
            lambda: parsed("lambda", required(map, "lambda")?)?,
            lambda_list,
            dt: parsed("dt", required(map, "dt")?)?,
            t_final: parsed("t_final", required(map, "t_final")?)?,
            scheme,
            seed_base: optional(map, "seed_base", 42)?,
            seed_count: optional(map, "seed_count", 1)?,
            init,
            amplitude: optional(map, "amplitude", 1.0)?,
            output_dir: PathBuf::from(get(map, "output_dir").unwrap_or("out")),
            inner_tol: optional(map, "inner_tol", 1e-10)?,
            inner_max: optional(map, "inner_max", 200)?,
            state_stride: optional(map, "state_stride", 1)?,
            workers: match get(map, "workers") {
                Some(v) => Some(parsed("workers", v)?),
                None => None,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let key = |key: &str, message: String| ConfigError::Key {
            key: key.into(),
            message,
        };
        if self.omegas.is_empty() {
            return Err(key("omega", "at least one angular velocity required".into()));
        }
        if !self.lambda_list.windows(2).all(|w| w[1] < w[0])
            || self.lambda_list.iter().any(|&l| !(0.0..=1.0).contains(&l) || l == 0.0)
        {
            return Err(key(
                "lambda_list",
                format!(
                    "must be strictly decreasing within (0, 1], got {:?}",
                    self.lambda_list
                ),
            ));
        }
        match self.study {
            Study::Ensemble if self.seed_count < 2 => {
                return Err(key(
                    "seed_count",
                    format!("ensemble needs at least 2 seeds, got {}", self.seed_count),
                ));
            }
            Study::Extinction if self.seed_count < 50 => {
                return Err(key(
                    "seed_count",
                    format!("extinction needs at least 50 seeds, got {}", self.seed_count),
                ));
            }
            _ => {}
        }
        if let InitSpec::Image(path) = &self.init {
            if !path.exists() {
                return Err(key("init", format!("image file not found: {}", path.display())));
            }
        }
        Ok(())
    }

    /// The canonical echo: re-parsing it reproduces this config exactly.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let join = |xs: &[f64]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut map = BTreeMap::new();
        map.insert("study".into(), self.study.name().to_string());
        map.insert("radius".into(), self.radius.to_string());
        map.insert("n".into(), self.n.to_string());
        map.insert("omega".into(), join(&self.omegas));
        map.insert("lambda".into(), self.lambda.to_string());
        map.insert("lambda_list".into(), join(&self.lambda_list));
        map.insert("dt".into(), self.dt.to_string());
        map.insert("t_final".into(), self.t_final.to_string());
        map.insert("scheme".into(), self.scheme.to_string());
        map.insert("seed_base".into(), self.seed_base.to_string());
        map.insert("seed_count".into(), self.seed_count.to_string());
        map.insert("init".into(), self.init.echo());
        map.insert("amplitude".into(), self.amplitude.to_string());
        map.insert("output_dir".into(), self.output_dir.display().to_string());
        map.insert("inner_tol".into(), self.inner_tol.to_string());
        map.insert("inner_max".into(), self.inner_max.to_string());
        map.insert("state_stride".into(), self.state_stride.to_string());
        if let Some(w) = self.workers {
            map.insert("workers".into(), w.to_string());
        }
        map
    }

    /// The seeds this config runs: empty in the deterministic baseline mode.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.seed_count as u64).map(|k| self.seed_base + k).collect()
    }
}

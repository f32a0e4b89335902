//! Flat `key = value` experiment configuration with `[section]` headers.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optim::Method;

/// Where the training problem comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProblemSource {
    /// A named LIBSVM-repository dataset (fetched or cached).
    Dataset { name: String },
    /// Seeded random strongly convex quadratic.
    SyntheticQuadratic { dim: usize, seed: u64 },
    /// Seeded random linearly-generated classification problem.
    SyntheticLogistic { n: usize, dim: usize, seed: u64 },
}

/// Full experiment description, parsed from a config file.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub source: ProblemSource,
    pub methods: Vec<Method>,
    pub steps: HashMap<Method, f64>,
    pub gamma: f64,
    pub beta: f64,
    pub c0: f64,
    pub seeds: Vec<u64>,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub fixed_point_tol: f64,
    pub quadrature_nodes: usize,
    pub train_count: Option<usize>,
    pub scale: bool,
    /// Keep only this many rows (seeded shuffle first); desk-scale cap for
    /// large datasets.
    pub subsample: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            source: ProblemSource::SyntheticQuadratic { dim: 2, seed: 0 },
            methods: vec![Method::Vn, Method::Srvn, Method::Bwgd],
            steps: HashMap::new(),
            gamma: 1.0,
            beta: 1e-2,
            c0: 1.0,
            seeds: vec![1],
            max_iters: 1000,
            grad_tol: 1e-8,
            fixed_point_tol: 1e-8,
            quadrature_nodes: 64,
            train_count: None,
            scale: false,
            subsample: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        for m in &self.methods {
            if !self.steps.contains_key(m) {
                return Err(Error::Config(format!(
                    "method '{}' has no step size",
                    m.as_str()
                )));
            }
        }
        if !(self.c0 > 0.0) {
            return Err(Error::Config("initial factor scale c0 must be positive".into()));
        }
        if !(self.gamma > 0.0) || self.beta < 0.0 {
            return Err(Error::Config("need gamma > 0 and beta >= 0".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }
}

/// SHA-256 of the raw config text, hex encoded; recorded in run summaries.
pub fn config_digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    format!("{:x}", hasher.finalize())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| parse_err(line, format!("invalid value '{value}' for key '{key}'")))
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|s| parse_num::<T>(line, key, s.trim()))
        .collect()
}

/// Parse the experiment config format. Unknown keys and sections are errors
/// so typos cannot silently fall back to defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut section = String::from("experiment");
    let mut synthetic: Option<(String, usize, usize, u64)> = None; // kind, n, dim, seed
    let mut dataset: Option<String> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(lineno, "unterminated section header"))?
                .trim();
            if !["experiment", "steps", "oracle", "data"].contains(&name) {
                return Err(parse_err(lineno, format!("unknown section '[{name}]'")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(lineno, "expected 'key = value'"))?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(parse_err(lineno, format!("empty value for key '{key}'")));
        }
        match (section.as_str(), key) {
            ("experiment", "name") => cfg.name = value.to_string(),
            ("experiment", "dataset") => dataset = Some(value.to_string()),
            ("experiment", "synthetic") => {
                let kind = value.to_string();
                if kind != "quadratic" && kind != "logistic" {
                    return Err(parse_err(
                        lineno,
                        format!("synthetic must be 'quadratic' or 'logistic', got '{kind}'"),
                    ));
                }
                let entry = synthetic.get_or_insert(("".into(), 100, 2, 0));
                entry.0 = kind;
            }
            ("experiment", "synthetic_n") => {
                synthetic.get_or_insert(("".into(), 100, 2, 0)).1 =
                    parse_num(lineno, key, value)?;
            }
            ("experiment", "synthetic_dim") => {
                synthetic.get_or_insert(("".into(), 100, 2, 0)).2 =
                    parse_num(lineno, key, value)?;
            }
            ("experiment", "synthetic_seed") => {
                synthetic.get_or_insert(("".into(), 100, 2, 0)).3 =
                    parse_num(lineno, key, value)?;
            }
            ("experiment", "methods") => {
                cfg.methods = value
                    .split(',')
                    .map(|s| Method::parse(s.trim()))
                    .collect::<Result<_>>()
                    .map_err(|e| parse_err(lineno, e.to_string()))?;
            }
            ("experiment", "gamma") => cfg.gamma = parse_num(lineno, key, value)?,
            ("experiment", "beta") => cfg.beta = parse_num(lineno, key, value)?,
            ("experiment", "c0") => cfg.c0 = parse_num(lineno, key, value)?,
            ("experiment", "seeds") => cfg.seeds = parse_list(lineno, key, value)?,
            ("experiment", "max_iters") => cfg.max_iters = parse_num(lineno, key, value)?,
            ("experiment", "grad_tol") => cfg.grad_tol = parse_num(lineno, key, value)?,
            ("experiment", "fixed_point_tol") => {
                cfg.fixed_point_tol = parse_num(lineno, key, value)?
            }
            ("steps", m) => {
                let method =
                    Method::parse(m).map_err(|e| parse_err(lineno, e.to_string()))?;
                cfg.steps.insert(method, parse_num(lineno, key, value)?);
            }
            ("oracle", "quadrature_nodes") => {
                cfg.quadrature_nodes = parse_num(lineno, key, value)?
            }
            ("data", "train_count") => cfg.train_count = Some(parse_num(lineno, key, value)?),
            ("data", "scale") => {
                cfg.scale = match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(parse_err(
                            lineno,
                            format!("expected true/false for 'scale', got '{other}'"),
                        ))
                    }
                }
            }
            ("data", "subsample") => cfg.subsample = Some(parse_num(lineno, key, value)?),
            (section, key) => {
                return Err(parse_err(
                    lineno,
                    format!("unknown key '{key}' in section '[{section}]'"),
                ))
            }
        }
    }

    match (dataset, synthetic) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "config sets both 'dataset' and 'synthetic'".into(),
            ))
        }
        (Some(name), None) => cfg.source = ProblemSource::Dataset { name },
        (None, Some((kind, n, dim, seed))) => {
            cfg.source = match kind.as_str() {
                "quadratic" => ProblemSource::SyntheticQuadratic { dim, seed },
                "logistic" => ProblemSource::SyntheticLogistic { n, dim, seed },
                _ => return Err(Error::Config("synthetic kind missing".into())),
            };
        }
        (None, None) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

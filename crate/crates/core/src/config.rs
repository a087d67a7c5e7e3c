//! Run configuration and its flat `key = value` file format.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha_l: f64,
    pub alpha_u: f64,
    pub u_t: f64,
    pub dt: f64,
    pub v_l: f64,
    pub v_u: f64,
    pub eps_theta: f64,
    pub eps_c: f64,
    pub n_div: usize,
    pub max_iter: usize,
    pub kappa_min: f64,
    pub output_dir: PathBuf,
    /// Write field snapshots every this many iterations; 0 writes the final
    /// fields only.
    pub snapshot_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha_l: 2.5 / (125.0 * 125.0),
            alpha_u: 2.5 / (0.008 * 0.008),
            u_t: 0.1,
            dt: 1e-3,
            v_l: 0.5,
            v_u: 0.7,
            eps_theta: 0.035,
            eps_c: 1e-4,
            n_div: 70,
            max_iter: 500,
            kappa_min: 1.0 / 1024.0,
            output_dir: PathBuf::from("output"),
            snapshot_every: 0,
        }
    }
}

const KEYS: [&str; 13] = [
    "alpha_L",
    "alpha_U",
    "u_t",
    "dt",
    "V_L",
    "V_U",
    "eps_theta",
    "eps_c",
    "n_div",
    "max_iter",
    "kappa_min",
    "output_dir",
    "snapshot_every",
];

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let positive = [
            ("alpha_L", self.alpha_l),
            ("alpha_U", self.alpha_u),
            ("u_t", self.u_t),
            ("dt", self.dt),
            ("eps_theta", self.eps_theta),
            ("eps_c", self.eps_c),
            ("kappa_min", self.kappa_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.alpha_l > self.alpha_u {
            return bad(format!(
                "alpha_L = {} exceeds alpha_U = {}",
                self.alpha_l, self.alpha_u
            ));
        }
        if !(self.v_l > 0.0 && self.v_l <= self.v_u && self.v_u <= 1.0) {
            return bad(format!(
                "need 0 < V_L <= V_U <= 1, got V_L = {}, V_U = {}",
                self.v_l, self.v_u
            ));
        }
        if self.kappa_min > 1.0 {
            return bad(format!(
                "kappa_min must not exceed 1, got {}",
                self.kappa_min
            ));
        }
        if self.n_div < 3 {
            return bad(format!("n_div must be at least 3, got {}", self.n_div));
        }
        Ok(())
    }

    /// Parses the text of a config file; absent keys keep their defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let float = || value.parse::<f64>().map_err(|e| err(format!("{key}: {e}")));
            let int = || {
                value
                    .parse::<usize>()
                    .map_err(|e| err(format!("{key}: {e}")))
            };
            match key {
                "alpha_L" => cfg.alpha_l = float()?,
                "alpha_U" => cfg.alpha_u = float()?,
                "u_t" => cfg.u_t = float()?,
                "dt" => cfg.dt = float()?,
                "V_L" => cfg.v_l = float()?,
                "V_U" => cfg.v_u = float()?,
                "eps_theta" => cfg.eps_theta = float()?,
                "eps_c" => cfg.eps_c = float()?,
                "n_div" => cfg.n_div = int()?,
                "max_iter" => cfg.max_iter = int()?,
                "kappa_min" => cfg.kappa_min = float()?,
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "snapshot_every" => cfg.snapshot_every = int()?,
                _ => {
                    return Err(err(format!(
                        "unknown key `{key}` (expected one of {})",
                        KEYS.join(", ")
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::parse_str(&text)
}

impl fmt::Display for RunConfig {
    /// Writes every key; floats use the shortest round-trip representation.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "alpha_L = {:?}", self.alpha_l)?;
        writeln!(f, "alpha_U = {:?}", self.alpha_u)?;
        writeln!(f, "u_t = {:?}", self.u_t)?;
        writeln!(f, "dt = {:?}", self.dt)?;
        writeln!(f, "V_L = {:?}", self.v_l)?;
        writeln!(f, "V_U = {:?}", self.v_u)?;
        writeln!(f, "eps_theta = {:?}", self.eps_theta)?;
        writeln!(f, "eps_c = {:?}", self.eps_c)?;
        writeln!(f, "n_div = {}", self.n_div)?;
        writeln!(f, "max_iter = {}", self.max_iter)?;
        writeln!(f, "kappa_min = {:?}", self.kappa_min)?;
        writeln!(f, "output_dir = {}", self.output_dir.display())?;
        writeln!(f, "snapshot_every = {}", self.snapshot_every)
    }
}

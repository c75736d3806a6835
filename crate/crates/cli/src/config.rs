use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: &str = "1";

/// One run: an operator preset, task parameters, seed and output directory.
///
/// Every key is optional at the parsing stage except `schema` and
/// `operator`; tasks ask for what they need through [`RunConfig::need`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    /// Must match the subcommand when present.
    pub task: Option<String>,
    pub operator: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    pub out: Option<PathBuf>,

    pub p0: Option<Vec<f64>>,
    /// Observation time.
    pub t: Option<f64>,
    /// Simulation or solve horizon.
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub n_paths: Option<u64>,
    pub bins: Option<usize>,
    pub time_bins: Option<usize>,
    pub loc_bins: Option<usize>,
    pub face: Option<usize>,
    pub faces: Option<[usize; 2]>,
    pub eps: Option<Vec<f64>>,
    pub times: Option<Vec<f64>>,
    pub radii: Option<Vec<f64>>,
    /// Face point for doubling windows (face coordinates).
    pub q: Option<Vec<f64>>,

    pub grid: Option<usize>,
    pub pde_dt: Option<f64>,
    pub theta: Option<f64>,
    pub store_every: Option<usize>,
    pub zeta: Option<Zeta>,

    pub samples: Option<usize>,
    pub record_every: Option<usize>,
    pub coupled: Option<bool>,
    pub allow_nonclean: Option<bool>,

    pub nu: Option<f64>,
    pub far: Option<f64>,
    pub h: Option<f64>,
    pub theta2: Option<f64>,
    pub k: Option<f64>,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
}

/// Time-dependent boundary data `ζ(t)` with `ζ(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Zeta {
    /// `min(t / t1, 1)`.
    Ramp { t1: f64 },
    /// Smoothstep from 0 to 1 over `[t1, t1 + width]`.
    Step { t1: f64, width: f64 },
}

impl Zeta {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Zeta::Ramp { t1 } => (t / t1).clamp(0.0, 1.0),
            Zeta::Step { t1, width } => {
                let s = ((t - t1) / width).clamp(0.0, 1.0);
                s * s * (3.0 - 2.0 * s)
            }
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Read { path: PathBuf, message: String },
    Parse(String),
    Schema(String),
    Missing { field: &'static str, task: String },
    Invalid { field: &'static str, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Read { path, message } => write!(f, "cannot read {}: {message}", path.display()),
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Schema(m) => write!(f, "config schema error: {m}"),
            ConfigError::Missing { field, task } => write!(f, "missing required field `{field}` for task `{task}`"),
            ConfigError::Invalid { field, message } => write!(f, "invalid field `{field}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(ConfigError::Schema(format!(
                "unsupported schema version {:?}, expected {SCHEMA_VERSION:?}",
                cfg.schema
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("t", self.t),
            ("horizon", self.horizon),
            ("dt", self.dt),
            ("pde_dt", self.pde_dt),
            ("nu", self.nu),
            ("h", self.h),
            ("theta2", self.theta2),
            ("k", self.k),
            ("beta", self.beta),
            ("rho", self.rho),
        ];
        for (field, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError::Invalid {
                        field,
                        message: format!("must be positive and finite, got {v}"),
                    });
                }
            }
        }
        let counts = [
            ("bins", self.bins),
            ("time_bins", self.time_bins),
            ("loc_bins", self.loc_bins),
            ("grid", self.grid),
            ("store_every", self.store_every),
            ("samples", self.samples),
            ("record_every", self.record_every),
        ];
        for (field, v) in counts {
            if v == Some(0) {
                return Err(ConfigError::Invalid {
                    field,
                    message: "must be at least 1".into(),
                });
            }
        }
        if self.n_paths == Some(0) {
            return Err(ConfigError::Invalid {
                field: "n_paths",
                message: "must be at least 1".into(),
            });
        }
        for (field, list) in [("eps", &self.eps), ("times", &self.times), ("radii", &self.radii)] {
            if let Some(list) = list {
                if list.is_empty() || list.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(ConfigError::Invalid {
                        field,
                        message: "must be a non-empty list of positive numbers".into(),
                    });
                }
            }
        }
        if let Some(th) = self.theta {
            if !(0.0..=1.0).contains(&th) {
                return Err(ConfigError::Invalid {
                    field: "theta",
                    message: format!("must lie in [0, 1], got {th}"),
                });
            }
        }
        match self.zeta {
            Some(Zeta::Ramp { t1 }) | Some(Zeta::Step { t1, .. }) if !(t1 > 0.0) => {
                return Err(ConfigError::Invalid {
                    field: "zeta",
                    message: "t1 must be positive".into(),
                })
            }
            Some(Zeta::Step { width, .. }) if !(width > 0.0) => {
                return Err(ConfigError::Invalid {
                    field: "zeta",
                    message: "width must be positive".into(),
                })
            }
            _ => {}
        }
        Ok(())
    }

    /// Value of a required field.
    pub fn need<T: Clone>(&self, field: &'static str, v: &Option<T>, task: &str) -> Result<T, ConfigError> {
        v.clone().ok_or_else(|| ConfigError::Missing {
            field,
            task: task.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let c = RunConfig::parse("schema = \"1\"\noperator = \"model1d(0.5)\"\nt = 1.0\n").unwrap();
        assert_eq!(c.t, Some(1.0));
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn rejects_unknown_keys_with_location() {
        let e = RunConfig::parse("schema = \"1\"\noperator = \"x\"\nbogus = 3\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("bogus") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn rejects_wrong_schema_and_bad_values() {
        assert!(matches!(
            RunConfig::parse("schema = \"2\"\noperator = \"x\"\n"),
            Err(ConfigError::Schema(_))
        ));
        assert!(matches!(
            RunConfig::parse("schema = \"1\"\noperator = \"x\"\ndt = -1.0\n"),
            Err(ConfigError::Invalid { field: "dt", .. })
        ));
        assert!(matches!(
            RunConfig::parse("schema = \"1\"\noperator = \"x\"\neps = []\n"),
            Err(ConfigError::Invalid { field: "eps", .. })
        ));
    }

    #[test]
    fn zeta_shapes() {
        let r = Zeta::Ramp { t1: 2.0 };
        assert_eq!((r.eval(0.0), r.eval(1.0), r.eval(5.0)), (0.0, 0.5, 1.0));
        let s = Zeta::Step { t1: 0.5, width: 0.1 };
        assert_eq!((s.eval(0.2), s.eval(0.7)), (0.0, 1.0));
        assert!((s.eval(0.55) - 0.5).abs() < 1e-12);
    }
}

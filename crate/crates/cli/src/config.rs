//! Run configuration files.
//!
//! A config is a TOML document with a top-level problem selector and optional
//! `[network]` and `[train]` sections:
//!
//! ```toml
//! problem = "ex1_eps0.1"        # catalog name, or
//! # problem_file = "my.toml"    # a custom problem definition
//!
//! [network]                     # every key optional
//! scales = [1, 2, 4, 8]
//! hidden = [30, 40, 30, 30, 30]
//! first_activation = "fourier"  # fourier | sincos | tanh
//! hidden_activation = "sincos"  # sincos | tanh | requ
//! soften = 1.0
//! aggregation = "inverse_scale_mean"  # or linear_head
//! skips = true
//! freeze_first = false
//!
//! [train]                       # every key optional
//! epochs = 50000
//! lr0 = 0.01
//! lr_decay = 0.025
//! decay_interval = 100
//! eval_every = 1000
//! n_interior = 3000
//! n_boundary = 500
//! beta = 10.0
//! gamma0 = 10.0
//! seed = 0
//! method = "fmpinn"             # fmpinn | mpinn
//! chunk = 128
//! ```

use std::path::{Path, PathBuf};

use fmpinn::loss::Method;
use fmpinn::network::{Aggregation, FirstActivation, HiddenActivation, NetworkConfig};
use fmpinn::problems::{by_name, Problem};
use fmpinn::trainer::TrainConfig;
use fmpinn::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_activation: Option<FirstActivation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_activation: Option<HiddenActivation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soften: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<Aggregation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skips: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze_first: Option<bool>,
}

impl NetworkSection {
    /// Fills unset keys from the method's default architecture.
    pub fn resolve(&self, dim: usize, method: Method) -> Result<NetworkConfig> {
        let mut n = match method {
            Method::Fmpinn => NetworkConfig::fmpinn(dim),
            Method::Mpinn => NetworkConfig::mpinn(dim),
        };
        if let Some(v) = &self.scales {
            n.scales = v.clone();
        }
        if let Some(v) = &self.hidden {
            n.hidden = v.clone();
        }
        if let Some(v) = self.first_activation {
            n.first_activation = v;
        }
        if let Some(v) = self.hidden_activation {
            n.hidden_activation = v;
        }
        if let Some(v) = self.soften {
            n.soften = v;
        }
        if let Some(v) = self.aggregation {
            n.aggregation = v;
        }
        if let Some(v) = self.skips {
            n.skips = v;
        }
        if let Some(v) = self.freeze_first {
            n.freeze_first = v;
        }
        n.validate()?;
        Ok(n)
    }

    /// Every key set, so the section reproduces `config` exactly.
    pub fn echo(config: &NetworkConfig) -> Self {
        Self {
            scales: Some(config.scales.clone()),
            hidden: Some(config.hidden.clone()),
            first_activation: Some(config.first_activation),
            hidden_activation: Some(config.hidden_activation),
            soften: Some(config.soften),
            aggregation: Some(config.aggregation),
            skips: Some(config.skips),
            freeze_first: Some(config.freeze_first),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_file: Option<PathBuf>,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainConfig,
}


/// A configuration with the problem loaded and every default filled in.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub problem: Problem,
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

impl Resolved {
    /// The configuration that reproduces this run when loaded again.
    pub fn echo(&self, source: &RunConfig) -> RunConfig {
        RunConfig {
            problem: source.problem.clone(),
            problem_file: source.problem_file.clone(),
            network: NetworkSection::echo(&self.network),
            train: self.train.clone(),
        }
    }

    pub fn hash(&self) -> String {
        fmpinn::trainer::run_hash(self.problem.name(), &self.network, &self.train)
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        // problem files are relative to the config that names them
        if let (Some(p), Some(dir)) = (&cfg.problem_file, path.parent()) {
            if p.is_relative() {
                cfg.problem_file = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load_problem(&self) -> Result<Problem> {
        match (&self.problem, &self.problem_file) {
            (Some(_), Some(_)) => Err(Error::config("problem", "give either `problem` or `problem_file`, not both")),
            (Some(name), None) => by_name(name),
            (None, Some(path)) => Problem::from_toml_file(path),
            (None, None) => Err(Error::config("problem", "no problem given")),
        }
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let problem = self.load_problem()?;
        self.train.validate()?;
        let network = self.network.resolve(problem.dim(), self.train.method)?;
        let mut train = self.train.clone();
        let (n_in, n_bd) = train.point_counts(problem.dim());
        train.n_interior = Some(n_in);
        train.n_boundary = Some(n_bd);
        Ok(Resolved { problem, network, train })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_toml_str("problem = \"ex1_eps0.1\"\n[train]\nepochs = 10\n").unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.train.epochs, 10);
        assert_eq!(r.train.n_interior, Some(3000));
        assert_eq!(r.network.dim_out, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str("problem = \"ex1\"\n[train]\nepoch = 10\n").unwrap_err();
        assert!(err.to_string().contains("epoch"), "{err}");
    }

    #[test]
    fn echo_round_trips_the_hash() {
        let cfg = RunConfig::from_toml_str("problem = \"ex3\"\n[network]\nscales = [1, 2]\n[train]\nbeta = 20\n").unwrap();
        let r = cfg.resolve().unwrap();
        let echoed = RunConfig::from_toml_str(&r.echo(&cfg).to_toml_string()).unwrap();
        assert_eq!(echoed.resolve().unwrap().hash(), r.hash());
    }

    #[test]
    fn missing_problem_names_the_field() {
        let err = RunConfig::default().resolve().unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "problem"));
    }
}

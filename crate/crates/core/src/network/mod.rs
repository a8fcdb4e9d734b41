//! Multi-scale network: `Q` subnetworks fed with stretched inputs `a_i x`,
//! a Fourier-feature first layer, sine/cosine hidden layers with optional
//! residual skips, and a linear multi-output head.

mod checkpoint;
mod forward;

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use checkpoint::{load_checkpoint, save_checkpoint, sidecar_path};
pub use forward::{FieldModel, Jet, NetworkModel, TapeOutputs};

use crate::error::{Error, Result};
use crate::sampling::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstActivation {
    /// `[cos(s z), sin(s z)]`, doubling the layer width.
    Fourier,
    Sincos,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    /// `0.5 sin(z) + 0.5 cos(z)`
    Sincos,
    Tanh,
    /// `max(0, z)^2`
    Requ,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// `(1/Q) sum_i F_i / a_i`
    InverseScaleMean,
    /// `W_O [F_1, ..., F_Q] + b_O` with a trainable head.
    LinearHead,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub dim_in: usize,
    pub dim_out: usize,
    pub scales: Vec<f64>,
    pub hidden: Vec<usize>,
    pub first_activation: FirstActivation,
    pub hidden_activation: HiddenActivation,
    pub soften: f64,
    pub aggregation: Aggregation,
    pub skips: bool,
    /// Keep the first-layer weights at their initial values.
    pub freeze_first: bool,
}

/// `(1, 2, 3, 4, 5, 10, 15, ..., 95, 100)`
pub fn default_scales() -> Vec<f64> {
    let mut s: Vec<f64> = (1..=5).map(f64::from).collect();
    s.extend((2..=20).map(|k| f64::from(5 * k)));
    s
}

/// Hidden widths used by the benchmarks for a given input dimension.
pub fn default_hidden(dim: usize) -> Vec<usize> {
    match dim {
        1 => vec![30, 40, 30, 30, 30],
        2 | 3 => vec![40, 60, 40, 40, 40],
        _ => vec![60, 80, 60, 60, 60],
    }
}

impl NetworkConfig {
    /// Mixed formulation: outputs `(u, phi_1, ..., phi_d)`.
    pub fn fmpinn(dim: usize) -> Self {
        Self {
            dim_in: dim,
            dim_out: dim + 1,
            scales: default_scales(),
            hidden: default_hidden(dim),
            first_activation: FirstActivation::Fourier,
            hidden_activation: HiddenActivation::Sincos,
            soften: 1.0,
            aggregation: Aggregation::InverseScaleMean,
            skips: true,
            freeze_first: false,
        }
    }

    /// Residual formulation: a single output `u`.
    pub fn mpinn(dim: usize) -> Self {
        Self {
            dim_out: 1,
            ..Self::fmpinn(dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim_in == 0 {
            return Err(Error::config("dim_in", "must be positive"));
        }
        if self.dim_out == 0 {
            return Err(Error::config("dim_out", "must be positive"));
        }
        if self.scales.is_empty() {
            return Err(Error::config("scales", "need at least one subnetwork"));
        }
        if let Some(a) = self.scales.iter().find(|&&a| !(a >= 1.0) || !a.is_finite()) {
            return Err(Error::config("scales", format!("entries must be >= 1, got {a}")));
        }
        if self.hidden.is_empty() {
            return Err(Error::config("hidden", "need at least one hidden layer"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden", "widths must be positive"));
        }
        if !(self.soften > 0.0 && self.soften <= 1.0) {
            return Err(Error::config("soften", format!("must lie in (0, 1], got {}", self.soften)));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// What a layer does after its affine map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerRole {
    Fourier,
    First(HiddenActivation),
    Hidden { activation: HiddenActivation, skip: bool },
    Output,
}

/// Placement of one affine layer `W (rows x cols)`, `b (rows)` in the flat
/// parameter vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerSpec {
    pub rows: usize,
    pub cols: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
    pub role: LayerRole,
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        self.rows * (self.cols + 1)
    }

    /// Width of the activation this layer feeds forward.
    pub fn out_width(&self) -> usize {
        match self.role {
            LayerRole::Fourier => 2 * self.rows,
            _ => self.rows,
        }
    }
}

/// Trainable values laid out subnet by subnet, layer by layer, each layer as
/// row-major weights followed by biases; the head (if any) comes last.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    values: Vec<f64>,
}

impl Parameters {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A validated configuration together with its parameter layout.
#[derive(Clone, Debug)]
pub struct Network {
    config: NetworkConfig,
    subnets: Vec<Vec<LayerSpec>>,
    head: Option<LayerSpec>,
    total: usize,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut offset = 0;
        let mut place = |rows: usize, cols: usize, role: LayerRole| {
            let spec = LayerSpec {
                rows,
                cols,
                weight_offset: offset,
                bias_offset: offset + rows * cols,
                role,
            };
            offset += spec.param_count();
            spec
        };
        let mut subnets = Vec::with_capacity(config.scales.len());
        for _ in &config.scales {
            let mut layers = Vec::with_capacity(config.hidden.len() + 1);
            let first_role = match config.first_activation {
                FirstActivation::Fourier => LayerRole::Fourier,
                FirstActivation::Sincos => LayerRole::First(HiddenActivation::Sincos),
                FirstActivation::Tanh => LayerRole::First(HiddenActivation::Tanh),
            };
            let first = place(config.hidden[0], config.dim_in, first_role);
            let mut width = first.out_width();
            layers.push(first);
            for &h in &config.hidden[1..] {
                let role = LayerRole::Hidden {
                    activation: config.hidden_activation,
                    skip: config.skips && width == h,
                };
                layers.push(place(h, width, role));
                width = h;
            }
            layers.push(place(config.dim_out, width, LayerRole::Output));
            subnets.push(layers);
        }
        let head = match config.aggregation {
            Aggregation::InverseScaleMean => None,
            Aggregation::LinearHead => Some(place(
                config.dim_out,
                config.dim_out * config.scales.len(),
                LayerRole::Output,
            )),
        };
        Ok(Self {
            config,
            subnets,
            head,
            total: offset,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.total
    }

    pub fn subnets(&self) -> &[Vec<LayerSpec>] {
        &self.subnets
    }

    pub fn head(&self) -> Option<&LayerSpec> {
        self.head.as_ref()
    }

    /// Weight `1 / (Q a_i)` of subnet `i` under the inverse-scale mean.
    pub fn mean_weight(&self, i: usize) -> f64 {
        1.0 / (self.config.scales.len() as f64 * self.config.scales[i])
    }

    pub(crate) fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.total {
            return Err(Error::config(
                "parameters",
                format!("expected {} values, got {}", self.total, params.len()),
            ));
        }
        Ok(())
    }

    /// Glorot-uniform weights, zero biases. The Fourier layer counts its unit
    /// number as fan-out; the following layer sees twice that as fan-in.
    pub fn init_parameters(&self, seed: u64) -> Parameters {
        let mut rng = stream_rng(seed, Stream::Init);
        let mut values = vec![0.0; self.total];
        for spec in self.subnets.iter().flatten().chain(self.head.iter()) {
            let bound = (6.0 / (spec.cols + spec.rows) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            for w in &mut values[spec.weight_offset..spec.bias_offset] {
                *w = dist.sample(&mut rng);
            }
        }
        Parameters { values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scale_vector() {
        let s = default_scales();
        assert_eq!(s.len(), 24);
        assert_eq!(&s[..7], &[1.0, 2.0, 3.0, 4.0, 5.0, 10.0, 15.0]);
        assert_eq!(*s.last().unwrap(), 100.0);
    }

    #[test]
    fn single_unit_layers_have_two_parameters_each() {
        let cfg = NetworkConfig {
            dim_in: 1,
            dim_out: 1,
            scales: vec![1.0],
            hidden: vec![1],
            first_activation: FirstActivation::Tanh,
            ..NetworkConfig::mpinn(1)
        };
        let net = Network::new(cfg).unwrap();
        for layer in &net.subnets()[0] {
            assert_eq!(layer.param_count(), 2);
        }
        assert_eq!(net.param_count(), 4);
    }

    #[test]
    fn skips_follow_equal_widths() {
        let net = Network::new(NetworkConfig::fmpinn(1)).unwrap();
        let skips: Vec<bool> = net.subnets()[0]
            .iter()
            .map(|l| matches!(l.role, LayerRole::Hidden { skip: true, .. }))
            .collect();
        assert_eq!(skips, vec![false, false, false, true, true, false]);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let net = Network::new(NetworkConfig::fmpinn(1)).unwrap();
        let a = net.init_parameters(5);
        assert_eq!(a, net.init_parameters(5));
        assert_ne!(a, net.init_parameters(6));
        let l = net.subnets()[0][1];
        assert!(a.as_slice()[l.bias_offset..l.bias_offset + l.rows].iter().all(|&b| b == 0.0));
        let bound = (6.0f64 / (60.0 + 40.0)).sqrt();
        assert!(a.as_slice()[l.weight_offset..l.bias_offset].iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn invalid_configs() {
        let mut c = NetworkConfig::fmpinn(1);
        c.scales = vec![0.5];
        assert!(matches!(Network::new(c), Err(Error::Config { .. })));
        let mut c = NetworkConfig::fmpinn(1);
        c.hidden.clear();
        assert!(Network::new(c).is_err());
        let mut c = NetworkConfig::fmpinn(1);
        c.soften = 0.0;
        assert!(Network::new(c).is_err());
    }
}

//! Fully connected Q-network with hand-written backpropagation.
//!
//! Parameters are kept as a flat list of 2-D arrays so the optimizer and
//! the checkpoint code can treat them uniformly. Per layer `l` the list holds
//! `W_l` (fan_in x fan_out) and `b_l` (1 x fan_out); with batch
//! normalization every hidden layer also carries `gamma_l`, `beta_l`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    /// Dropout on the last hidden activation, training mode only.
    pub dropout: f64,
    pub batchnorm: bool,
}

impl NetworkSpec {
    pub fn new(input: usize, output: usize) -> Self {
        Self {
            input,
            hidden: vec![256, 128],
            output,
            dropout: 0.2,
            batchnorm: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.hidden.contains(&0) {
            return Err(Error::config("network layer sizes must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// `[input, hidden.., output]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.input];
        v.extend(&self.hidden);
        v.push(self.output);
        v
    }

    fn n_layers(&self) -> usize {
        self.hidden.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunningStats {
    mean: Array1<f64>,
    var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    spec: NetworkSpec,
    params: Vec<Array2<f64>>,
    running: Vec<RunningStats>,
}

struct LayerCache {
    input: Array2<f64>,
    /// Normalized pre-activation and batch inverse std, batchnorm only.
    xhat: Option<(Array2<f64>, Array1<f64>)>,
    /// Post-activation mask (ReLU and dropout combined, already scaled).
    mask: Array2<f64>,
}

/// Intermediate values of a training-mode forward pass.
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    last_input: Array2<f64>,
}

impl QNetwork {
    /// He-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let sizes = net.spec.layer_sizes();
        for l in 0..net.spec.n_layers() {
            let limit = (6.0 / sizes[l] as f64).sqrt();
            let w = net.weight_index(l);
            net.params[w].mapv_inplace(|_| rng.random_range(-limit..limit));
        }
        Ok(net)
    }

    /// All weights and biases zero (batchnorm scales one).
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let sizes = spec.layer_sizes();
        let mut params = Vec::new();
        let mut running = Vec::new();
        for l in 0..spec.n_layers() {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            params.push(Array2::zeros((fan_in, fan_out)));
            params.push(Array2::zeros((1, fan_out)));
            if spec.batchnorm && l + 1 < spec.n_layers() {
                params.push(Array2::ones((1, fan_out)));
                params.push(Array2::zeros((1, fan_out)));
                running.push(RunningStats {
                    mean: Array1::zeros(fan_out),
                    var: Array1::ones(fan_out),
                });
            }
        }
        Ok(Self {
            spec,
            params,
            running,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Array2<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.iter().all(|x| x.is_finite()))
    }

    fn stride(&self) -> usize {
        if self.spec.batchnorm {
            4
        } else {
            2
        }
    }

    fn weight_index(&self, layer: usize) -> usize {
        layer * self.stride()
    }

    /// Evaluation-mode Q-values for one observation.
    pub fn predict(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, obs.len()), obs)
            .map_err(|e| Error::Validation(format!("observation shape: {e}")))?;
        Ok(self.predict_batch(x)?.row(0).to_vec())
    }

    /// Evaluation-mode Q-values, one row per observation.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let n_layers = self.spec.n_layers();
        let mut h = x.to_owned();
        for l in 0..n_layers {
            let wi = self.weight_index(l);
            let mut z = h.dot(&self.params[wi]) + &self.params[wi + 1];
            if l + 1 == n_layers {
                return Ok(z);
            }
            if self.spec.batchnorm {
                let stats = &self.running[l];
                let inv = stats.var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                z = (z - &stats.mean) * &inv * &self.params[wi + 2] + &self.params[wi + 3];
            }
            z.mapv_inplace(|v| v.max(0.0));
            h = z;
        }
        unreachable!("network has at least one layer")
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.spec.input {
            return Err(Error::Shape {
                expected: format!("observation of length {}", self.spec.input),
                got: format!("{width}"),
            });
        }
        Ok(())
    }

    /// Training-mode pass: dropout active, batch statistics used and folded
    /// into the running averages.
    pub fn forward_train<R: Rng + ?Sized>(
        &mut self,
        x: ArrayView2<f64>,
        rng: &mut R,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(x.ncols())?;
        let n_layers = self.spec.n_layers();
        let keep = 1.0 - self.spec.dropout;
        let mut layers = Vec::with_capacity(n_layers - 1);
        let mut h = x.to_owned();
        for l in 0..n_layers - 1 {
            let wi = self.weight_index(l);
            let mut z = h.dot(&self.params[wi]) + &self.params[wi + 1];
            let mut xhat = None;
            if self.spec.batchnorm {
                let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                let var = z.var_axis(Axis(0), 0.0);
                let inv = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                let normed = (&z - &mean) * &inv;
                z = &normed * &self.params[wi + 2] + &self.params[wi + 3];
                let stats = &mut self.running[l];
                stats.mean = &stats.mean * (1.0 - BN_MOMENTUM) + &mean * BN_MOMENTUM;
                stats.var = &stats.var * (1.0 - BN_MOMENTUM) + &var * BN_MOMENTUM;
                xhat = Some((normed, inv));
            }
            let mut mask = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            if l + 2 == n_layers && self.spec.dropout > 0.0 {
                mask.mapv_inplace(|m| {
                    if m > 0.0 && rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
            }
            let a = &z * &mask;
            layers.push(LayerCache {
                input: h,
                xhat,
                mask,
            });
            h = a;
        }
        let wi = self.weight_index(n_layers - 1);
        let out = h.dot(&self.params[wi]) + &self.params[wi + 1];
        Ok((
            out,
            ForwardCache {
                layers,
                last_input: h,
            },
        ))
    }

    /// Gradients of every parameter given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Array2<f64>) -> Vec<Array2<f64>> {
        let n_layers = self.spec.n_layers();
        let mut grads: Vec<Array2<f64>> = self
            .params
            .iter()
            .map(|p| Array2::zeros(p.raw_dim()))
            .collect();

        let wi = self.weight_index(n_layers - 1);
        grads[wi] = cache.last_input.t().dot(grad_out);
        grads[wi + 1] = grad_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut delta = grad_out.dot(&self.params[wi].t());

        for l in (0..n_layers - 1).rev() {
            let lc = &cache.layers[l];
            let wi = self.weight_index(l);
            let mut dz = &delta * &lc.mask;
            if let Some((xhat, inv)) = &lc.xhat {
                let gamma = &self.params[wi + 2];
                grads[wi + 2] = (&dz * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                grads[wi + 3] = dz.sum_axis(Axis(0)).insert_axis(Axis(0));
                let n = dz.nrows() as f64;
                let dxhat = &dz * gamma;
                let sum_dxhat = dxhat.sum_axis(Axis(0));
                let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
                dz = (&dxhat * n - &sum_dxhat - xhat * &sum_dxhat_xhat) * &(inv / n);
            }
            grads[wi] = lc.input.t().dot(&dz);
            grads[wi + 1] = dz.sum_axis(Axis(0)).insert_axis(Axis(0));
            if l > 0 {
                delta = dz.dot(&self.params[wi].t());
            }
        }
        grads
    }

    /// Overwrite this network's parameters and running statistics.
    pub fn copy_from(&mut self, other: &QNetwork) {
        self.params.clone_from(&other.params);
        self.running.clone_from(&other.running);
    }

    /// Shapes of every parameter tensor, in storage order.
    pub fn param_shapes(&self) -> Vec<[usize; 2]> {
        self.params.iter().map(|p| [p.nrows(), p.ncols()]).collect()
    }

    /// Set the output layer's bias; used to build networks with a known argmax.
    pub fn set_output_bias(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.spec.output {
            return Err(Error::Shape {
                expected: format!("{} biases", self.spec.output),
                got: format!("{}", bias.len()),
            });
        }
        let wi = self.weight_index(self.spec.n_layers() - 1);
        self.params[wi + 1]
            .row_mut(0)
            .assign(&Array1::from(bias.to_vec()));
        Ok(())
    }

    /// Validate parameter shapes after deserialization.
    pub fn check_shapes(&self) -> Result<()> {
        self.spec.validate()?;
        let expected = Self::zeros(self.spec.clone())?;
        if expected.param_shapes() != self.param_shapes()
            || expected.running.len() != self.running.len()
        {
            return Err(Error::Shape {
                expected: format!("{:?}", expected.param_shapes()),
                got: format!("{:?}", self.param_shapes()),
            });
        }
        Ok(())
    }
}

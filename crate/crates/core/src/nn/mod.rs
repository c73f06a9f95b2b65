//! Minimal fully-connected network engine: forward evaluation, exact
//! reverse-mode parameter gradients, input gradients for scalar-output
//! networks, optimizers, and soft guide-network updates.
//!
//! Single-sample calls are routed through the batched kernels as one-row
//! batches, so a K=1 mini-batch and a single-sample evaluation follow the
//! same arithmetic bit for bit.

mod checkpoint;
mod optimizer;

pub use checkpoint::{load_network, network_from_string, network_to_string, save_network};
pub use optimizer::{apply_gradients, Optimizer, OptimizerKind};

use crate::scalar::Real;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("shape mismatch between networks or gradients")]
    ShapeMismatch,
    #[error("non-finite gradient rejected (diverged run)")]
    NonFiniteGradient,
    #[error("operation requires a scalar-output network")]
    NonScalarOutput,
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
}

/// Output-layer activation. Hidden layers are always rectifiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputActivation<F> {
    /// Critic head: raw affine output.
    Identity,
    /// Actor head: tanh scaled into `[lo, hi]`, so bounds hold by
    /// construction rather than by clipping.
    Bounded { lo: F, hi: F },
}

/// Fully-connected network with rectifier hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork<F> {
    sizes: Vec<usize>,
    /// Per layer, shape (fan_in, fan_out).
    weights: Vec<Array2<F>>,
    biases: Vec<Array1<F>>,
    output: OutputActivation<F>,
}

/// Per-parameter partials, same shapes as the network, stamped with the
/// server iteration the worker synchronized at.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<F> {
    pub weights: Vec<Array2<F>>,
    pub biases: Vec<Array1<F>>,
    pub timestamp: u64,
}

impl<F: Real> GradientSet<F> {
    pub fn zeros_like(net: &DenseNetwork<F>) -> Self {
        GradientSet {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            timestamp: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn matches(&self, net: &DenseNetwork<F>) -> bool {
        self.weights.len() == net.weights.len()
            && self.biases.len() == net.biases.len()
            && self
                .weights
                .iter()
                .zip(&net.weights)
                .all(|(g, w)| g.raw_dim() == w.raw_dim())
            && self
                .biases
                .iter()
                .zip(&net.biases)
                .all(|(g, b)| g.raw_dim() == b.raw_dim())
    }
}

/// Magnitude of the uniform init for the final layer of bounded-output
/// networks, keeping initial actions near zero.
const FINAL_LAYER_INIT: f64 = 3e-3;

impl<F: Real> DenseNetwork<F> {
    /// Builds a network with the given layer sizes (`[input, hidden...,
    /// output]`). Hidden layers draw uniform within ±1/sqrt(fan_in); the
    /// final layer of bounded-output networks draws within ±3e-3.
    pub fn new<R: Rng>(sizes: &[usize], output: OutputActivation<F>, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let last = l == sizes.len() - 2;
            let bound = if last && matches!(output, OutputActivation::Bounded { .. }) {
                F::lit(FINAL_LAYER_INIT)
            } else {
                F::one() / F::lit(fan_in as f64).sqrt()
            };
            let mut w = Array2::zeros((fan_in, fan_out));
            for i in 0..fan_in {
                for j in 0..fan_out {
                    w[[i, j]] = rng.gen_range(-bound..bound);
                }
            }
            let mut b = Array1::zeros(fan_out);
            for j in 0..fan_out {
                b[j] = rng.gen_range(-bound..bound);
            }
            weights.push(w);
            biases.push(b);
        }
        DenseNetwork { sizes: sizes.to_vec(), weights, biases, output }
    }

    /// A network with explicit parameters (tests and toy constructions).
    pub fn from_parameters(
        weights: Vec<Array2<F>>,
        biases: Vec<Array1<F>>,
        output: OutputActivation<F>,
    ) -> Self {
        assert_eq!(weights.len(), biases.len());
        let mut sizes = vec![weights[0].nrows()];
        for (w, b) in weights.iter().zip(&biases) {
            assert_eq!(w.ncols(), b.len());
            sizes.push(w.ncols());
        }
        DenseNetwork { sizes, weights, biases, output }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn output_activation(&self) -> OutputActivation<F> {
        self.output
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Array2<F>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<F>] {
        &self.biases
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Vec<Array2<F>> {
        &mut self.weights
    }

    pub(crate) fn biases_mut(&mut self) -> &mut Vec<Array1<F>> {
        &mut self.biases
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.sizes == other.sizes
    }

    pub fn parameters_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, dim: usize) -> Result<(), NnError> {
        if dim != self.input_dim() {
            return Err(NnError::DimensionMismatch(format!(
                "input has {dim} features, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn apply_output(&self, z: &mut Array2<F>) {
        if let OutputActivation::Bounded { lo, hi } = self.output {
            let half = (hi - lo) / F::lit(2.0);
            let center = (hi + lo) / F::lit(2.0);
            z.mapv_inplace(|v| center + half * v.tanh());
        }
    }

    /// Forward pass over a batch of row-vector inputs, returning every
    /// layer's activations (`out[0]` is the input itself).
    fn forward_cached(&self, inputs: ArrayView2<F>) -> Vec<Array2<F>> {
        let mut acts: Vec<Array2<F>> = Vec::with_capacity(self.n_layers() + 1);
        acts.push(inputs.to_owned());
        for l in 0..self.n_layers() {
            let mut z = acts[l].dot(&self.weights[l]) + &self.biases[l];
            if l + 1 < self.n_layers() {
                z.mapv_inplace(|v| v.max(F::zero()));
            } else {
                self.apply_output(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    /// Deterministic batched evaluation: one row per sample.
    pub fn forward_batch(&self, inputs: ArrayView2<F>) -> Result<Array2<F>, NnError> {
        self.check_input(inputs.ncols())?;
        Ok(self.forward_cached(inputs).pop().unwrap())
    }

    /// Deterministic evaluation of one input vector.
    pub fn forward(&self, input: ArrayView1<F>) -> Result<Array1<F>, NnError> {
        let row = input.insert_axis(Axis(0));
        Ok(self.forward_batch(row)?.remove_axis(Axis(0)))
    }

    /// Derivative of the output activation at the stored activations.
    fn output_derivative(&self, last_act: &Array2<F>) -> Option<Array2<F>> {
        match self.output {
            OutputActivation::Identity => None,
            OutputActivation::Bounded { lo, hi } => {
                let half = (hi - lo) / F::lit(2.0);
                let center = (hi + lo) / F::lit(2.0);
                // y = c + s*tanh(z)  =>  dy/dz = s*(1 - tanh^2)
                Some(last_act.mapv(|y| {
                    let t = (y - center) / half;
                    half * (F::one() - t * t)
                }))
            }
        }
    }

    /// Reverse pass from `upstream` (one row per sample). Returns parameter
    /// gradients summed over the batch and, optionally, input gradients.
    fn backward(
        &self,
        acts: &[Array2<F>],
        upstream: ArrayView2<F>,
        want_params: bool,
        want_inputs: bool,
    ) -> (GradientSet<F>, Option<Array2<F>>) {
        let layers = self.n_layers();
        let mut grads = GradientSet {
            weights: Vec::with_capacity(layers),
            biases: Vec::with_capacity(layers),
            timestamp: 0,
        };
        if want_params {
            grads = GradientSet::zeros_like(self);
        }

        let mut dz = match self.output_derivative(&acts[layers]) {
            Some(d) => upstream.to_owned() * d,
            None => upstream.to_owned(),
        };
        let mut input_grad = None;
        for l in (0..layers).rev() {
            if want_params {
                grads.weights[l] = acts[l].t().dot(&dz);
                grads.biases[l] = dz.sum_axis(Axis(0));
            }
            if l > 0 {
                let mut da = dz.dot(&self.weights[l].t());
                // Rectifier derivative from the stored activations.
                da.zip_mut_with(&acts[l], |d, &a| {
                    if a <= F::zero() {
                        *d = F::zero();
                    }
                });
                dz = da;
            } else if want_inputs {
                input_grad = Some(dz.dot(&self.weights[0].t()));
            }
        }
        (grads, input_grad)
    }

    /// Exact gradients of `sum_k upstream_k . output_k` with respect to
    /// every parameter, over a batch of inputs.
    pub fn param_gradient_batch(
        &self,
        inputs: ArrayView2<F>,
        upstream: ArrayView2<F>,
    ) -> Result<GradientSet<F>, NnError> {
        self.check_input(inputs.ncols())?;
        if upstream.ncols() != self.output_dim() || upstream.nrows() != inputs.nrows() {
            return Err(NnError::DimensionMismatch(format!(
                "upstream is {}x{}, expected {}x{}",
                upstream.nrows(),
                upstream.ncols(),
                inputs.nrows(),
                self.output_dim()
            )));
        }
        let acts = self.forward_cached(inputs);
        Ok(self.backward(&acts, upstream, true, false).0)
    }

    /// Exact gradients of `upstream . output` with respect to every
    /// parameter, for a single input.
    pub fn param_gradient(
        &self,
        input: ArrayView1<F>,
        upstream: ArrayView1<F>,
    ) -> Result<GradientSet<F>, NnError> {
        self.param_gradient_batch(
            input.insert_axis(Axis(0)),
            upstream.insert_axis(Axis(0)),
        )
    }

    /// Gradient of the scalar output with respect to the inputs, one row
    /// per sample. Errors unless the network has exactly one output.
    pub fn input_gradient_batch(&self, inputs: ArrayView2<F>) -> Result<Array2<F>, NnError> {
        if self.output_dim() != 1 {
            return Err(NnError::NonScalarOutput);
        }
        self.check_input(inputs.ncols())?;
        let acts = self.forward_cached(inputs);
        let ones = Array2::from_elem((inputs.nrows(), 1), F::one());
        let (_, dx) = self.backward(&acts, ones.view(), false, true);
        Ok(dx.expect("input gradients requested"))
    }

    /// Gradient of the scalar output with respect to one input vector.
    pub fn input_gradient(&self, input: ArrayView1<F>) -> Result<Array1<F>, NnError> {
        Ok(self
            .input_gradient_batch(input.insert_axis(Axis(0)))?
            .remove_axis(Axis(0)))
    }
}

/// Moves every guide parameter a fraction `tau` toward the source:
/// `guide <- tau*source + (1-tau)*guide`.
pub fn soft_update<F: Real>(
    guide: &mut DenseNetwork<F>,
    source: &DenseNetwork<F>,
    tau: F,
) -> Result<(), NnError> {
    if !guide.same_shape(source) {
        return Err(NnError::ShapeMismatch);
    }
    let keep = F::one() - tau;
    for (g, s) in guide.weights.iter_mut().zip(&source.weights) {
        g.zip_mut_with(s, |gv, &sv| *gv = tau * sv + keep * *gv);
    }
    for (g, s) in guide.biases.iter_mut().zip(&source.biases) {
        g.zip_mut_with(s, |gv, &sv| *gv = tau * sv + keep * *gv);
    }
    Ok(())
}

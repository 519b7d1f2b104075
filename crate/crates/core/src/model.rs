//! The three competing operator architectures behind one model type.
//!
//! All models map `n` input functions (each sampled at its own sensors) and a
//! query point `y = (x, t)` to a scalar:
//!
//! - [`ModelKind::Fnn`]: a dense stack over the concatenation `[u ‖ v ‖ y]`;
//! - [`ModelKind::DeepOnetConcat`]: one branch over `[u ‖ v]`, one trunk over
//!   `y`, joined by an inner product;
//! - [`ModelKind::EDeepOnet`]: one branch per input function, the branch
//!   outputs fused by element-wise product, then an inner product with the
//!   trunk output.
//!
//! Branch/trunk models add a scalar output bias `b0` after the inner product
//! (switchable through [`ModelSpec::output_bias`]); the FNN adds it after its
//! last layer so the three kinds share the same parameter-count formula
//! `Σ(in·out + out) + 1`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layer::{Activation, DenseLayer};
use crate::optim::Parameters;
use crate::rng;
use crate::tensor::Tensor2;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EDONMDL1";

/// Upper bound for the hidden-width scan in [`match_parameter_counts`].
pub const MAX_SCAN_WIDTH: usize = 4096;

/// Relative tolerance on parameter counts when matching architectures.
pub const PARAMETER_MATCH_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "fnn")]
    Fnn,
    #[serde(rename = "deeponet")]
    DeepOnetConcat,
    #[serde(rename = "edeeponet")]
    EDeepOnet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Fnn, ModelKind::DeepOnetConcat, ModelKind::EDeepOnet];

    /// Short name used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Fnn => "fnn",
            ModelKind::DeepOnetConcat => "deeponet",
            ModelKind::EDeepOnet => "edeeponet",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "fnn" => Ok(ModelKind::Fnn),
            "deeponet" => Ok(ModelKind::DeepOnetConcat),
            "edeeponet" => Ok(ModelKind::EDeepOnet),
            other => Err(Error::Usage(format!(
                "unknown model kind '{other}' (valid kinds: fnn, deeponet, edeeponet)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture descriptor; together with `seed` it determines the initial
/// parameters bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Sensor count of each input function; its length is the number of
    /// input functions (and of branches for the enhanced DeepONet).
    pub sensor_counts: Vec<usize>,
    pub query_dim: usize,
    /// Hidden widths of each branch net (branch/trunk kinds).
    #[serde(default)]
    pub branch_widths: Vec<usize>,
    /// Hidden widths of the trunk net (branch/trunk kinds).
    #[serde(default)]
    pub trunk_widths: Vec<usize>,
    /// Output width `p` of branches and trunk.
    #[serde(default)]
    pub latent_dim: usize,
    /// Hidden widths of the dense stack (FNN).
    #[serde(default)]
    pub fnn_widths: Vec<usize>,
    pub activation: Activation,
    pub output_bias: bool,
    pub seed: u64,
}

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
pub const DEFAULT_LATENT: usize = 64;
pub const DEFAULT_FNN_DEPTH: usize = 3;

impl ModelSpec {
    pub fn fnn(sensor_counts: Vec<usize>, fnn_widths: Vec<usize>, seed: u64) -> Self {
        Self {
            kind: ModelKind::Fnn,
            sensor_counts,
            query_dim: 2,
            branch_widths: Vec::new(),
            trunk_widths: Vec::new(),
            latent_dim: 0,
            fnn_widths,
            activation: Activation::Relu,
            output_bias: true,
            seed,
        }
    }

    pub fn deeponet_concat(
        sensor_counts: Vec<usize>,
        branch_widths: Vec<usize>,
        trunk_widths: Vec<usize>,
        latent_dim: usize,
        seed: u64,
    ) -> Self {
        Self {
            kind: ModelKind::DeepOnetConcat,
            sensor_counts,
            query_dim: 2,
            branch_widths,
            trunk_widths,
            latent_dim,
            fnn_widths: Vec::new(),
            activation: Activation::Relu,
            output_bias: true,
            seed,
        }
    }

    pub fn edeeponet(
        sensor_counts: Vec<usize>,
        branch_widths: Vec<usize>,
        trunk_widths: Vec<usize>,
        latent_dim: usize,
        seed: u64,
    ) -> Self {
        Self {
            kind: ModelKind::EDeepOnet,
            ..Self::deeponet_concat(sensor_counts, branch_widths, trunk_widths, latent_dim, seed)
        }
    }

    /// Default architecture for `kind` with `n_functions` inputs of `m`
    /// sensors each. The FNN default is sized by matching the parameter
    /// count of the default enhanced DeepONet.
    pub fn default_for(kind: ModelKind, m: usize, n_functions: usize, seed: u64) -> Result<Self> {
        let sensors = vec![m; n_functions];
        let hidden = DEFAULT_HIDDEN.to_vec();
        match kind {
            ModelKind::EDeepOnet => Ok(Self::edeeponet(sensors, hidden.clone(), hidden, DEFAULT_LATENT, seed)),
            ModelKind::DeepOnetConcat => Ok(Self::deeponet_concat(sensors, hidden.clone(), hidden, DEFAULT_LATENT, seed)),
            ModelKind::Fnn => {
                let reference = Self::edeeponet(sensors, hidden.clone(), hidden, DEFAULT_LATENT, seed);
                match_parameter_counts(&reference, ModelKind::Fnn)
            }
        }
    }

    pub fn n_branches(&self) -> usize {
        self.sensor_counts.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensor_counts.is_empty() || self.sensor_counts.contains(&0) {
            return Err(Error::Spec(format!("sensor counts must be non-empty and positive: {:?}", self.sensor_counts)));
        }
        if self.query_dim == 0 {
            return Err(Error::Spec("query_dim must be >= 1".into()));
        }
        let positive = |name: &str, widths: &[usize]| {
            if widths.contains(&0) {
                Err(Error::Spec(format!("{name} widths must be >= 1: {widths:?}")))
            } else {
                Ok(())
            }
        };
        match self.kind {
            ModelKind::Fnn => positive("fnn", &self.fnn_widths)?,
            ModelKind::DeepOnetConcat | ModelKind::EDeepOnet => {
                positive("branch", &self.branch_widths)?;
                positive("trunk", &self.trunk_widths)?;
                if self.latent_dim == 0 {
                    return Err(Error::Spec("latent dimension p must be >= 1".into()));
                }
            }
        }
        if self.kind == ModelKind::EDeepOnet && self.n_branches() < 2 {
            return Err(Error::Spec(format!(
                "the enhanced DeepONet needs at least 2 branches, got {}",
                self.n_branches()
            )));
        }
        Ok(())
    }

    /// `(in, out)` shapes of every dense layer of every sub-network, in
    /// declaration order.
    pub fn layer_shapes(&self) -> Vec<Vec<(usize, usize)>> {
        fn chain(input: usize, hidden: &[usize], output: usize) -> Vec<(usize, usize)> {
            let mut dims = Vec::with_capacity(hidden.len() + 2);
            dims.push(input);
            dims.extend_from_slice(hidden);
            dims.push(output);
            dims.windows(2).map(|w| (w[0], w[1])).collect()
        }
        let total_sensors: usize = self.sensor_counts.iter().sum();
        let p = self.latent_dim;
        match self.kind {
            ModelKind::Fnn => vec![chain(total_sensors + self.query_dim, &self.fnn_widths, 1)],
            ModelKind::DeepOnetConcat => vec![
                chain(total_sensors, &self.branch_widths, p),
                chain(self.query_dim, &self.trunk_widths, p),
            ],
            ModelKind::EDeepOnet => {
                let mut nets: Vec<_> = self
                    .sensor_counts
                    .iter()
                    .map(|&m| chain(m, &self.branch_widths, p))
                    .collect();
                nets.push(chain(self.query_dim, &self.trunk_widths, p));
                nets
            }
        }
    }

    /// `Σ(in·out + out)` over all layers, plus one for the output bias.
    pub fn parameter_count(&self) -> usize {
        let dense: usize = self
            .layer_shapes()
            .iter()
            .flatten()
            .map(|&(i, o)| i * o + o)
            .sum();
        dense + usize::from(self.output_bias)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("ModelSpec serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// A dense stack: hidden layers use the spec activation, the last layer is
/// linear.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

impl Mlp {
    fn build<R: rand::Rng + ?Sized>(shapes: &[(usize, usize)], activation: Activation, rng: &mut R) -> Result<Self> {
        let last = shapes.len() - 1;
        let layers = shapes
            .iter()
            .enumerate()
            .map(|(i, &(fan_in, fan_out))| {
                let act = if i == last { Activation::Identity } else { activation };
                DenseLayer::new(fan_in, fan_out, act, rng)
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::out_dim)
    }

    pub fn forward(&mut self, input: &Tensor2) -> Result<Tensor2> {
        let mut x = self.layers[0].forward(input)?;
        for layer in &mut self.layers[1..] {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn infer(&self, input: &Tensor2) -> Result<Tensor2> {
        let mut x = self.layers[0].infer(input)?;
        for layer in &self.layers[1..] {
            x = layer.infer(&x)?;
        }
        Ok(x)
    }

    pub fn backward(&mut self, upstream: &Tensor2) -> Result<Tensor2> {
        let mut g = upstream.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Makes the net output `values` for every input: zero final weights,
    /// final bias set to `values`.
    pub fn pin_output(&mut self, values: &[f64]) -> Result<()> {
        let last = self.layers.last_mut().expect("non-empty stack");
        if values.len() != last.out_dim() {
            return Err(Error::Dimension(format!(
                "pinned output has {} values, net outputs {}",
                values.len(),
                last.out_dim()
            )));
        }
        last.weights_mut().fill(0.0);
        last.bias_mut().copy_from_slice(values);
        Ok(())
    }

    fn clear_cache(&mut self) {
        for layer in &mut self.layers {
            layer.clear_cache();
        }
    }
}

impl Parameters for Mlp {
    fn visit_parameters(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        for layer in &mut self.layers {
            layer.visit_parameters(f);
        }
    }
}

#[derive(Debug, Clone)]
enum Body {
    Fnn(Mlp),
    Concat { branch: Mlp, trunk: Mlp },
    Enhanced { branches: Vec<Mlp>, trunk: Mlp },
}

#[derive(Debug, Clone)]
struct ForwardCache {
    branch_out: Vec<Tensor2>,
    trunk_out: Option<Tensor2>,
    batch: usize,
}

#[derive(Debug, Clone)]
pub struct OperatorModel {
    spec: ModelSpec,
    body: Body,
    output_bias: f64,
    output_bias_grad: f64,
    cache: Option<ForwardCache>,
}

impl OperatorModel {
    /// Builds the model and initializes every parameter from `spec.seed`.
    pub fn build(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream(spec.seed, &[]);
        let shapes = spec.layer_shapes();
        let mut nets = shapes
            .iter()
            .map(|s| Mlp::build(s, spec.activation, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let body = match spec.kind {
            ModelKind::Fnn => Body::Fnn(nets.pop().expect("one stack")),
            ModelKind::DeepOnetConcat => {
                let trunk = nets.pop().expect("trunk");
                let branch = nets.pop().expect("branch");
                Body::Concat { branch, trunk }
            }
            ModelKind::EDeepOnet => {
                let trunk = nets.pop().expect("trunk");
                Body::Enhanced { branches: nets, trunk }
            }
        };
        Ok(Self {
            spec,
            body,
            output_bias: 0.0,
            output_bias_grad: 0.0,
            cache: None,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    /// Counts the parameters actually held; always equals
    /// `spec().parameter_count()`.
    pub fn parameter_count(&self) -> usize {
        let dense: usize = self
            .nets()
            .iter()
            .flat_map(|n| n.layers())
            .map(DenseLayer::parameter_count)
            .sum();
        dense + usize::from(self.spec.output_bias)
    }

    pub fn output_bias(&self) -> f64 {
        self.output_bias
    }

    pub fn set_output_bias(&mut self, value: f64) {
        self.output_bias = if self.spec.output_bias { value } else { 0.0 };
    }

    pub fn output_bias_grad(&self) -> f64 {
        self.output_bias_grad
    }

    fn nets(&self) -> Vec<&Mlp> {
        match &self.body {
            Body::Fnn(stack) => vec![stack],
            Body::Concat { branch, trunk } => vec![branch, trunk],
            Body::Enhanced { branches, trunk } => branches.iter().chain(std::iter::once(trunk)).collect(),
        }
    }

    fn nets_mut(&mut self) -> Vec<&mut Mlp> {
        match &mut self.body {
            Body::Fnn(stack) => vec![stack],
            Body::Concat { branch, trunk } => vec![branch, trunk],
            Body::Enhanced { branches, trunk } => branches.iter_mut().chain(std::iter::once(trunk)).collect(),
        }
    }

    /// Branch nets (one for the concatenated DeepONet, one per input for the
    /// enhanced one, none for the FNN).
    pub fn branch_nets(&self) -> &[Mlp] {
        match &self.body {
            Body::Fnn(_) => &[],
            Body::Concat { branch, .. } => std::slice::from_ref(branch),
            Body::Enhanced { branches, .. } => branches,
        }
    }

    pub fn branch_nets_mut(&mut self) -> &mut [Mlp] {
        match &mut self.body {
            Body::Fnn(_) => &mut [],
            Body::Concat { branch, .. } => std::slice::from_mut(branch),
            Body::Enhanced { branches, .. } => branches,
        }
    }

    pub fn trunk_net(&self) -> Option<&Mlp> {
        match &self.body {
            Body::Fnn(_) => None,
            Body::Concat { trunk, .. } | Body::Enhanced { trunk, .. } => Some(trunk),
        }
    }

    pub fn trunk_net_mut(&mut self) -> Option<&mut Mlp> {
        match &mut self.body {
            Body::Fnn(_) => None,
            Body::Concat { trunk, .. } | Body::Enhanced { trunk, .. } => Some(trunk),
        }
    }

    /// The dense stack of an FNN.
    pub fn stack(&self) -> Option<&Mlp> {
        match &self.body {
            Body::Fnn(stack) => Some(stack),
            _ => None,
        }
    }

    pub fn stack_mut(&mut self) -> Option<&mut Mlp> {
        match &mut self.body {
            Body::Fnn(stack) => Some(stack),
            _ => None,
        }
    }

    /// All parameters flattened in declaration order (weights then bias of
    /// each layer, sub-networks in spec order, output bias last).
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for net in self.nets() {
            for layer in net.layers() {
                out.extend_from_slice(layer.weights().as_slice());
                out.extend_from_slice(layer.bias());
            }
        }
        if self.spec.output_bias {
            out.push(self.output_bias);
        }
        out
    }

    /// Gradients flattened in the same order as [`Self::parameters`].
    pub fn gradients(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for net in self.nets() {
            for layer in net.layers() {
                out.extend_from_slice(layer.grad_weights().as_slice());
                out.extend_from_slice(layer.grad_bias());
            }
        }
        if self.spec.output_bias {
            out.push(self.output_bias_grad);
        }
        out
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter value".into()));
        }
        let mut offset = 0;
        self.visit_parameters(&mut |p, _| {
            p.copy_from_slice(&values[offset..offset + p.len()]);
            offset += p.len();
        });
        Ok(())
    }

    pub fn max_abs_parameter(&self) -> f64 {
        self.parameters().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn check_inputs(&self, functions: &[&Tensor2], queries: &Tensor2) -> Result<usize> {
        if functions.len() != self.spec.n_branches() {
            return Err(Error::Usage(format!(
                "{} model expects {} input functions, got {}",
                self.spec.kind,
                self.spec.n_branches(),
                functions.len()
            )));
        }
        let batch = queries.rows();
        if queries.cols() != self.spec.query_dim {
            return Err(Error::Dimension(format!(
                "queries have {} columns, model expects {}",
                queries.cols(),
                self.spec.query_dim
            )));
        }
        for (i, (f, &m)) in functions.iter().zip(&self.spec.sensor_counts).enumerate() {
            if f.cols() != m || f.rows() != batch {
                return Err(Error::Dimension(format!(
                    "input function {i} has shape {}x{}, expected {batch}x{m}",
                    f.rows(),
                    f.cols()
                )));
            }
        }
        Ok(batch)
    }

    /// Batched forward pass that records what [`Self::backward`] needs.
    ///
    /// `functions[i]` holds the sensor values of input function `i`, one row
    /// per batch element; `queries` is `batch × query_dim`.
    pub fn forward(&mut self, functions: &[&Tensor2], queries: &Tensor2) -> Result<Vec<f64>> {
        let batch = self.check_inputs(functions, queries)?;
        let (branch_out, trunk_out) = match &mut self.body {
            Body::Fnn(stack) => {
                let mut parts: Vec<&Tensor2> = functions.to_vec();
                parts.push(queries);
                (vec![stack.forward(&Tensor2::hcat(&parts)?)?], None)
            }
            Body::Concat { branch, trunk } => {
                let g = branch.forward(&Tensor2::hcat(functions)?)?;
                (vec![g], Some(trunk.forward(queries)?))
            }
            Body::Enhanced { branches, trunk } => {
                let gs = branches
                    .iter_mut()
                    .zip(functions)
                    .map(|(b, f)| b.forward(f))
                    .collect::<Result<Vec<_>>>()?;
                (gs, Some(trunk.forward(queries)?))
            }
        };
        let out = combine(&branch_out, trunk_out.as_ref(), self.output_bias);
        self.cache = Some(ForwardCache {
            branch_out,
            trunk_out,
            batch,
        });
        Ok(out)
    }

    /// Batched forward pass with no side effects.
    pub fn predict(&self, functions: &[&Tensor2], queries: &Tensor2) -> Result<Vec<f64>> {
        self.check_inputs(functions, queries)?;
        let (branch_out, trunk_out) = self.latents_inner(functions, queries)?;
        Ok(combine(&branch_out, trunk_out.as_ref(), self.output_bias))
    }

    fn latents_inner(&self, functions: &[&Tensor2], queries: &Tensor2) -> Result<(Vec<Tensor2>, Option<Tensor2>)> {
        Ok(match &self.body {
            Body::Fnn(stack) => {
                let mut parts: Vec<&Tensor2> = functions.to_vec();
                parts.push(queries);
                (vec![stack.infer(&Tensor2::hcat(&parts)?)?], None)
            }
            Body::Concat { branch, trunk } => (
                vec![branch.infer(&Tensor2::hcat(functions)?)?],
                Some(trunk.infer(queries)?),
            ),
            Body::Enhanced { branches, trunk } => (
                branches
                    .iter()
                    .zip(functions)
                    .map(|(b, f)| b.infer(f))
                    .collect::<Result<Vec<_>>>()?,
                Some(trunk.infer(queries)?),
            ),
        })
    }

    /// Branch outputs and trunk output (each `batch × p`) for branch/trunk
    /// models.
    pub fn latents(&self, functions: &[&Tensor2], queries: &Tensor2) -> Result<(Vec<Tensor2>, Tensor2)> {
        if self.spec.kind == ModelKind::Fnn {
            return Err(Error::Usage("the FNN has no branch/trunk latents".into()));
        }
        self.check_inputs(functions, queries)?;
        let (branches, trunk) = self.latents_inner(functions, queries)?;
        Ok((branches, trunk.expect("branch/trunk model has a trunk")))
    }

    /// Accumulates parameter gradients given `dLoss/dOutput` for each batch
    /// element of the preceding [`Self::forward`].
    pub fn backward(&mut self, upstream: &[f64]) -> Result<()> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("model backward called before forward".into()))?;
        if upstream.len() != cache.batch {
            return Err(Error::Dimension(format!(
                "upstream has {} entries, forward batch had {}",
                upstream.len(),
                cache.batch
            )));
        }
        if self.spec.output_bias {
            self.output_bias_grad += upstream.iter().sum::<f64>();
        }
        match &mut self.body {
            Body::Fnn(stack) => {
                let g = Tensor2::from_vec(upstream.len(), 1, upstream.to_vec())?;
                stack.backward(&g)?;
            }
            Body::Concat { branch, trunk } => {
                let g = &cache.branch_out[0];
                let f = cache.trunk_out.as_ref().expect("trunk output cached");
                let mut d_g = f.clone();
                let mut d_f = g.clone();
                for (r, &up) in upstream.iter().enumerate() {
                    d_g.row_mut(r).iter_mut().for_each(|v| *v *= up);
                    d_f.row_mut(r).iter_mut().for_each(|v| *v *= up);
                }
                branch.backward(&d_g)?;
                trunk.backward(&d_f)?;
            }
            Body::Enhanced { branches, trunk } => {
                let gs = &cache.branch_out;
                let f = cache.trunk_out.as_ref().expect("trunk output cached");
                let p = f.cols();
                let n = gs.len();
                let mut d_gs: Vec<Tensor2> = (0..n).map(|_| Tensor2::zeros(cache.batch, p)).collect();
                let mut d_f = Tensor2::zeros(cache.batch, p);
                for (r, &up) in upstream.iter().enumerate() {
                    for k in 0..p {
                        let fk = f.get(r, k);
                        let mut fused = 1.0;
                        for g in gs {
                            fused *= g.get(r, k);
                        }
                        d_f.set(r, k, up * fused);
                        for i in 0..n {
                            // product of the other branches, no division so zeros are safe
                            let mut others = 1.0;
                            for (j, g) in gs.iter().enumerate() {
                                if j != i {
                                    others *= g.get(r, k);
                                }
                            }
                            d_gs[i].set(r, k, up * fk * others);
                        }
                    }
                }
                for (branch, d_g) in branches.iter_mut().zip(&d_gs) {
                    branch.backward(d_g)?;
                }
                trunk.backward(&d_f)?;
            }
        }
        Ok(())
    }

    /// Drops the activations cached by the last forward pass.
    pub fn clear_cache(&mut self) {
        self.cache = None;
        for net in self.nets_mut() {
            net.clear_cache();
        }
    }

    fn single_row(
        &self,
        expected: ModelKind,
        functions: &[&[f64]],
        y: &[f64],
    ) -> Result<f64> {
        if self.spec.kind != expected {
            return Err(Error::Usage(format!(
                "{expected} evaluation requested on a {} model",
                self.spec.kind
            )));
        }
        let rows = functions
            .iter()
            .map(|f| Tensor2::row_vector(f))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor2> = rows.iter().collect();
        Ok(self.predict(&refs, &Tensor2::row_vector(y)?)?[0])
    }

    /// FNN on `[u ‖ v ‖ y]`.
    pub fn forward_fnn(&self, u: &[f64], v: &[f64], y: &[f64]) -> Result<f64> {
        self.single_row(ModelKind::Fnn, &[u, v], y)
    }

    /// `⟨branch([u ‖ v]), trunk(y)⟩ + b0`.
    pub fn forward_deeponet_concat(&self, u: &[f64], v: &[f64], y: &[f64]) -> Result<f64> {
        self.single_row(ModelKind::DeepOnetConcat, &[u, v], y)
    }

    /// `⟨branch_1(f_1) ⊙ … ⊙ branch_n(f_n), trunk(y)⟩ + b0`.
    pub fn forward_edeeponet(&self, functions: &[&[f64]], y: &[f64]) -> Result<f64> {
        self.single_row(ModelKind::EDeepOnet, functions, y)
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let spec_json = serde_json::to_vec(&self.spec).expect("ModelSpec serializes");
        let params = self.parameters();
        let mut out = Vec::with_capacity(CHECKPOINT_MAGIC.len() + 4 + spec_json.len() + 8 * params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(spec_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&spec_json);
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = bytes;
        let mut magic = [0u8; 8];
        reader
            .read_exact(&mut magic)
            .map_err(|_| Error::Format("checkpoint too short for header".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let mut len = [0u8; 4];
        reader
            .read_exact(&mut len)
            .map_err(|_| Error::Format("checkpoint truncated in spec length".into()))?;
        let len = u32::from_le_bytes(len) as usize;
        if reader.len() < len {
            return Err(Error::Format("checkpoint truncated in spec".into()));
        }
        let spec: ModelSpec = serde_json::from_slice(&reader[..len])?;
        reader = &reader[len..];
        let mut model = Self::build(spec)?;
        let count = model.parameter_count();
        if reader.len() != 8 * count {
            return Err(Error::Format(format!(
                "checkpoint holds {} parameter bytes, spec needs {}",
                reader.len(),
                8 * count
            )));
        }
        let values: Vec<f64> = reader
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        model.set_parameters(&values)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path)?;
        file.write_all(&self.to_checkpoint_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_bytes(&fs::read(path)?)
    }
}

/// Output of a forward pass from the sub-network outputs.
fn combine(branch_out: &[Tensor2], trunk_out: Option<&Tensor2>, bias: f64) -> Vec<f64> {
    match trunk_out {
        None => branch_out[0].as_slice().iter().map(|v| v + bias).collect(),
        Some(f) => (0..f.rows())
            .map(|r| {
                let trunk_row = f.row(r);
                let mut total = 0.0;
                for k in 0..f.cols() {
                    let mut fused = trunk_row[k];
                    for g in branch_out {
                        fused *= g.get(r, k);
                    }
                    total += fused;
                }
                total + bias
            })
            .collect(),
    }
}

impl Parameters for OperatorModel {
    fn visit_parameters(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        for net in self.nets_mut() {
            net.visit_parameters(f);
        }
        if self.spec.output_bias {
            f(
                std::slice::from_mut(&mut self.output_bias),
                std::slice::from_mut(&mut self.output_bias_grad),
            );
        }
    }
}

/// Template of `kind` sharing everything but the scanned hidden width with
/// `reference`.
fn template(reference: &ModelSpec, kind: ModelKind, width: usize) -> ModelSpec {
    let depth = |widths: &[usize], default: usize| if widths.is_empty() { default } else { widths.len() };
    let trunk = if reference.trunk_widths.is_empty() {
        DEFAULT_HIDDEN.to_vec()
    } else {
        reference.trunk_widths.clone()
    };
    let latent = if reference.latent_dim == 0 {
        DEFAULT_LATENT
    } else {
        reference.latent_dim
    };
    let mut spec = match kind {
        ModelKind::Fnn => ModelSpec::fnn(
            reference.sensor_counts.clone(),
            vec![width; depth(&reference.fnn_widths, DEFAULT_FNN_DEPTH)],
            reference.seed,
        ),
        ModelKind::DeepOnetConcat => ModelSpec::deeponet_concat(
            reference.sensor_counts.clone(),
            vec![width; depth(&reference.branch_widths, DEFAULT_HIDDEN.len())],
            trunk,
            latent,
            reference.seed,
        ),
        ModelKind::EDeepOnet => ModelSpec::edeeponet(
            reference.sensor_counts.clone(),
            vec![width; depth(&reference.branch_widths, DEFAULT_HIDDEN.len())],
            trunk,
            latent,
            reference.seed,
        ),
    };
    spec.query_dim = reference.query_dim;
    spec.activation = reference.activation;
    spec.output_bias = reference.output_bias;
    spec
}

/// Finds a spec of `target` whose parameter count lies within ±5% of
/// `reference`'s, by scanning the hidden width of a uniform-width template
/// upward. Among the widths in range the closest count wins.
pub fn match_parameter_counts(reference: &ModelSpec, target: ModelKind) -> Result<ModelSpec> {
    reference.validate()?;
    if reference.kind == target {
        return Ok(reference.clone());
    }
    let goal = reference.parameter_count() as f64;
    let upper = goal * (1.0 + PARAMETER_MATCH_TOLERANCE);
    let lower = goal * (1.0 - PARAMETER_MATCH_TOLERANCE);
    let mut best: Option<(usize, usize)> = None;
    for width in 1..=MAX_SCAN_WIDTH {
        let candidate = template(reference, target, width);
        let count = candidate.parameter_count();
        let closer = best.is_none_or(|(_, c)| (count as f64 - goal).abs() < (c as f64 - goal).abs());
        if closer {
            best = Some((width, count));
        }
        if count as f64 > upper {
            break;
        }
    }
    let (width, count) = best.expect("scan visits at least one width");
    if (count as f64) < lower || (count as f64) > upper {
        return Err(Error::Search {
            message: format!(
                "no {target} width in 1..={MAX_SCAN_WIDTH} within ±5% of {} parameters",
                goal as usize
            ),
            closest_width: width,
            closest_count: count,
        });
    }
    let spec = template(reference, target, width);
    spec.validate()?;
    Ok(spec)
}

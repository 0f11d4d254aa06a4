use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    /// Emits raw logits; the loss applies softmax cross-entropy.
    /// Only valid on the last layer of a model.
    SoftmaxXentHead,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity | Activation::SoftmaxXentHead => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative with respect to the pre-activation. relu'(0) is 0.
    #[inline]
    pub(crate) fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Identity | Activation::SoftmaxXentHead => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum LayerKind {
    /// `y = act(W x + b)`.
    Dense { activation: Activation },
    /// Pass-through layer that owns one coordinate block of its input:
    /// `y[j] = x[j]` outside the block and `y[offset + k] = b[k] - x[offset + k]`
    /// inside it. A stack of anchors under a squared-error head with zero
    /// targets gives the separable objective `½‖w − x‖²`, which is exactly
    /// 1-smooth and 1-strongly convex in the anchor parameters.
    Anchor { offset: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn dense(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            kind: LayerKind::Dense { activation },
        }
    }

    pub fn anchor(dim: usize, offset: usize, len: usize) -> Self {
        Self {
            input_dim: dim,
            output_dim: dim,
            kind: LayerKind::Anchor { offset, len },
        }
    }

    pub fn is_softmax_head(&self) -> bool {
        matches!(
            self.kind,
            LayerKind::Dense {
                activation: Activation::SoftmaxXentHead
            }
        )
    }

    pub(crate) fn weight_len(&self) -> usize {
        match self.kind {
            LayerKind::Dense { .. } => self.input_dim * self.output_dim,
            LayerKind::Anchor { .. } => 0,
        }
    }

    pub(crate) fn bias_len(&self) -> usize {
        match self.kind {
            LayerKind::Dense { .. } => self.output_dim,
            LayerKind::Anchor { len, .. } => len,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Spec(format!("layer {index} has a zero dimension")));
        }
        if let LayerKind::Anchor { offset, len } = self.kind {
            if self.input_dim != self.output_dim {
                return Err(Error::Spec(format!(
                    "anchor layer {index} must preserve its dimension"
                )));
            }
            if len == 0 || offset + len > self.input_dim {
                return Err(Error::Spec(format!(
                    "anchor layer {index} block {offset}..{} exceeds dimension {}",
                    offset + len,
                    self.input_dim
                )));
            }
        }
        Ok(())
    }
}

/// Checks dimension chaining and head placement for a full layer stack.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Spec("a model needs at least one layer".into()));
    }
    validate_chain(specs)?;
    for (k, spec) in specs.iter().enumerate() {
        if spec.is_softmax_head() && k + 1 != specs.len() {
            return Err(Error::Spec(format!(
                "softmax head at layer {k} is not the final layer"
            )));
        }
    }
    Ok(())
}

fn validate_chain(specs: &[LayerSpec]) -> Result<()> {
    for (k, spec) in specs.iter().enumerate() {
        spec.validate(k)?;
    }
    for (k, pair) in specs.windows(2).enumerate() {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(Error::Spec(format!(
                "layer {k} outputs {} values but layer {} expects {}",
                pair[0].output_dim,
                k + 1,
                pair[1].input_dim
            )));
        }
    }
    Ok(())
}

/// Parameters of one layer. Weights are row-major `output_dim × input_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(spec: LayerSpec) -> Self {
        Self {
            spec,
            weights: vec![0.0; spec.weight_len()],
            bias: vec![0.0; spec.bias_len()],
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// An ordered stack of layers: a full model, one side of a split, or a
/// gradient with the same shape as either.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelParams {
    layers: Vec<Layer>,
}

impl ModelParams {
    /// Wraps explicit layers, checking shapes and dimension chaining.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        validate_chain(&specs)?;
        for (k, layer) in layers.iter().enumerate() {
            if layer.weights.len() != layer.spec.weight_len()
                || layer.bias.len() != layer.spec.bias_len()
            {
                return Err(Error::Shape(format!(
                    "layer {k} parameters do not match its spec"
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn zeros(specs: &[LayerSpec]) -> Self {
        Self {
            layers: specs.iter().copied().map(Layer::zeros).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.specs())
    }

    #[inline]
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    #[inline]
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.first().map(|l| l.spec.input_dim)
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.last().map(|l| l.spec.output_dim)
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.spec == b.spec)
    }

    pub(crate) fn ensure_same_shape(&self, other: &ModelParams, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!("{what}: parameter layouts differ")))
        }
    }

    /// All parameters in layer order, weights before bias within a layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.values().map(|v| v * v).sum()
    }

    /// Squared Euclidean distance between two identically shaped models.
    pub fn dist_sq(&self, other: &ModelParams) -> Result<f64> {
        self.ensure_same_shape(other, "distance")?;
        Ok(self
            .values()
            .zip(other.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values_mut().for_each(|v| *v *= factor);
        out
    }

    /// Appends `tail`'s layers after this model's layers.
    pub fn concat(&self, tail: &ModelParams) -> Result<Self> {
        if let (Some(out), Some(inp)) = (self.output_dim(), tail.input_dim()) {
            if out != inp {
                return Err(Error::Shape(format!(
                    "cannot stack a {inp}-input model after a {out}-output model"
                )));
            }
        }
        let mut layers = self.layers.clone();
        layers.extend(tail.layers.iter().cloned());
        Ok(Self { layers })
    }
}

/// Cut position: layers `1..=cut` run on the clients, the rest on the
/// main server. `cut == 0` leaves clients with no layers; `cut == total`
/// leaves the server with none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    cut: usize,
    total: usize,
}

impl SplitSpec {
    pub fn new(cut: usize, total: usize) -> Result<Self> {
        if cut > total {
            return Err(Error::Spec(format!(
                "cut layer {cut} exceeds the model's {total} layers"
            )));
        }
        Ok(Self { cut, total })
    }

    #[inline]
    pub fn cut(&self) -> usize {
        self.cut
    }

    #[inline]
    pub fn total(&self) -> usize {
        self.total
    }
}

pub fn init_model(specs: &[LayerSpec], seed: u64) -> Result<ModelParams> {
    validate_specs(specs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ModelParams::zeros(specs);
    for layer in &mut model.layers {
        if let LayerKind::Dense { .. } = layer.spec.kind {
            let scale = 1.0 / (layer.spec.input_dim as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-1.0..1.0) * scale;
            }
        }
    }
    Ok(model)
}

pub fn split_model(model: &ModelParams, split: SplitSpec) -> Result<(ModelParams, ModelParams)> {
    if split.total != model.len() {
        return Err(Error::Spec(format!(
            "split is for {} layers but the model has {}",
            split.total,
            model.len()
        )));
    }
    let client = ModelParams {
        layers: model.layers[..split.cut].to_vec(),
    };
    let server = ModelParams {
        layers: model.layers[split.cut..].to_vec(),
    };
    Ok((client, server))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Vec<LayerSpec> {
        vec![
            LayerSpec::dense(2, 3, Activation::Relu),
            LayerSpec::dense(3, 3, Activation::Tanh),
            LayerSpec::dense(3, 2, Activation::Identity),
            LayerSpec::dense(2, 2, Activation::SoftmaxXentHead),
        ]
    }

    #[test]
    fn init_is_deterministic() {
        let specs = [LayerSpec::dense(1, 1, Activation::Identity)];
        let a = init_model(&specs, 7).unwrap();
        let b = init_model(&specs, 7).unwrap();
        assert_eq!(
            a.layers()[0].weights[0].to_bits(),
            b.layers()[0].weights[0].to_bits()
        );
    }

    #[test]
    fn init_shapes_follow_specs() {
        let specs = [
            LayerSpec::dense(2, 3, Activation::Relu),
            LayerSpec::dense(3, 1, Activation::Identity),
        ];
        let m = init_model(&specs, 1).unwrap();
        assert_eq!(m.layers()[0].weights.len(), 3 * 2);
        assert_eq!(m.layers()[1].weights.len(), 3);
        assert_eq!(m.layers()[0].bias, vec![0.0; 3]);
        assert_eq!(m.layers()[1].bias, vec![0.0; 1]);
        let bound = 1.0 / 2f64.sqrt();
        assert!(m.layers()[0].weights.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn broken_chain_is_rejected() {
        let specs = [
            LayerSpec::dense(2, 3, Activation::Relu),
            LayerSpec::dense(4, 1, Activation::Identity),
        ];
        assert!(matches!(init_model(&specs, 0), Err(Error::Spec(_))));
    }

    #[test]
    fn softmax_head_must_be_last() {
        let specs = [
            LayerSpec::dense(2, 3, Activation::SoftmaxXentHead),
            LayerSpec::dense(3, 1, Activation::Identity),
        ];
        assert!(matches!(init_model(&specs, 0), Err(Error::Spec(_))));
    }

    #[test]
    fn anchor_block_must_fit() {
        assert!(init_model(&[LayerSpec::anchor(2, 1, 2)], 0).is_err());
        assert!(init_model(&[LayerSpec::anchor(2, 1, 1)], 0).is_ok());
    }

    #[test]
    fn split_then_concat_is_identity() {
        let model = init_model(&chain(), 3).unwrap();
        for cut in 0..=model.len() {
            let (c, s) = split_model(&model, SplitSpec::new(cut, model.len()).unwrap()).unwrap();
            assert_eq!(c.len(), cut);
            assert_eq!(s.len(), model.len() - cut);
            let back = c.concat(&s).unwrap();
            let a: Vec<u64> = back.values().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = model.values().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn split_rejects_cut_beyond_depth() {
        assert!(SplitSpec::new(5, 4).is_err());
        let model = init_model(&chain(), 3).unwrap();
        assert!(split_model(&model, SplitSpec::new(1, 3).unwrap()).is_err());
    }
}

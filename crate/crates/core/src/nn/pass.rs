//! Forward and backward passes across a cut layer.
//!
//! The client side runs `forward_client` / `backward_client`; the main server
//! runs `forward_server` / `backward_server` on the smashed data. Every layer,
//! on either side, goes through the same two routines (`forward_layers`,
//! `backward_layers`), so a model split at any cut produces the same
//! arithmetic as the unsplit model.
//!
//! Losses are batch means. The loss head is chosen by the targets: class
//! labels use softmax cross-entropy on the final outputs, real-valued targets
//! use `½‖y − t‖²`.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::model::{LayerKind, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Classes { labels: Vec<usize>, classes: usize },
    Values(Matrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Values(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        match self {
            Targets::Classes { labels, classes } => Targets::Classes {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
            Targets::Values(m) => Targets::Values(m.select_rows(indices)),
        }
    }

    /// Output width a model must produce for these targets.
    pub fn width(&self) -> usize {
        match self {
            Targets::Classes { classes, .. } => *classes,
            Targets::Values(m) => m.cols(),
        }
    }
}

/// One mini-batch of inputs with their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub targets: Targets,
}

impl Batch {
    pub fn new(inputs: Matrix, targets: Targets) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} targets",
                inputs.rows(),
                targets.len()
            )));
        }
        if inputs.rows() == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn size(&self) -> usize {
        self.inputs.rows()
    }
}

/// Client-side output for one batch, shipped with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SmashedData {
    pub activations: Matrix,
    pub targets: Targets,
    pub client_id: usize,
}

/// Per-layer inputs and pre-activations recorded by a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
}

impl ForwardCache {
    /// Number of layers traversed.
    pub fn depth(&self) -> usize {
        self.inputs.len()
    }
}

/// What the main server keeps between its forward and backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerCache {
    layers: ForwardCache,
    output: Matrix,
    targets: Targets,
}

fn forward_layers(model: &ModelParams, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(model.len()),
        pre: Vec::with_capacity(model.len()),
    };
    let mut current = input.clone();
    for (k, layer) in model.layers().iter().enumerate() {
        let spec = layer.spec;
        if current.cols() != spec.input_dim {
            return Err(Error::Shape(format!(
                "layer {k} expects {} inputs, got {}",
                spec.input_dim,
                current.cols()
            )));
        }
        let rows = current.rows();
        let mut pre = Matrix::zeros(rows, spec.output_dim);
        let mut out = Matrix::zeros(rows, spec.output_dim);
        match spec.kind {
            LayerKind::Dense { activation } => {
                for r in 0..rows {
                    let x = current.row(r);
                    let p = pre.row_mut(r);
                    for (o, pv) in p.iter_mut().enumerate() {
                        let w = &layer.weights[o * spec.input_dim..(o + 1) * spec.input_dim];
                        let mut acc = layer.bias[o];
                        for (wi, xi) in w.iter().zip(x) {
                            acc += wi * xi;
                        }
                        *pv = acc;
                    }
                    for (ov, pv) in out.row_mut(r).iter_mut().zip(pre.row(r)) {
                        *ov = activation.apply(*pv);
                    }
                }
            }
            LayerKind::Anchor { offset, len } => {
                for r in 0..rows {
                    let p = pre.row_mut(r);
                    p.copy_from_slice(current.row(r));
                    for j in 0..len {
                        p[offset + j] = layer.bias[j] - p[offset + j];
                    }
                }
                out = pre.clone();
            }
        }
        cache.inputs.push(current);
        cache.pre.push(pre);
        current = out;
    }
    Ok((current, cache))
}

/// Backpropagates `grad_out` (d loss / d output of the last layer) through the
/// cached layers. Returns parameter gradients and d loss / d input.
fn backward_layers(
    model: &ModelParams,
    cache: &ForwardCache,
    grad_out: &Matrix,
) -> Result<(ModelParams, Matrix)> {
    if cache.depth() != model.len() {
        return Err(Error::Shape(format!(
            "cache covers {} layers, model has {}",
            cache.depth(),
            model.len()
        )));
    }
    let mut grads = model.zeros_like();
    let mut upstream = grad_out.clone();
    for k in (0..model.len()).rev() {
        let layer = &model.layers()[k];
        let spec = layer.spec;
        let input = &cache.inputs[k];
        let pre = &cache.pre[k];
        if upstream.cols() != spec.output_dim || upstream.rows() != input.rows() {
            return Err(Error::Shape(format!(
                "gradient for layer {k} is {}x{}, expected {}x{}",
                upstream.rows(),
                upstream.cols(),
                input.rows(),
                spec.output_dim
            )));
        }
        let rows = input.rows();
        let mut downstream = Matrix::zeros(rows, spec.input_dim);
        let g = &mut grads.layers_mut()[k];
        match spec.kind {
            LayerKind::Dense { activation } => {
                let mut delta = vec![0.0; spec.output_dim];
                for r in 0..rows {
                    for (o, d) in delta.iter_mut().enumerate() {
                        *d = upstream.get(r, o) * activation.derivative(pre.get(r, o));
                    }
                    let x = input.row(r);
                    for (o, &d) in delta.iter().enumerate() {
                        let gw = &mut g.weights[o * spec.input_dim..(o + 1) * spec.input_dim];
                        for (gwi, xi) in gw.iter_mut().zip(x) {
                            *gwi += d * xi;
                        }
                        g.bias[o] += d;
                    }
                    let dx = downstream.row_mut(r);
                    for (o, &d) in delta.iter().enumerate() {
                        let w = &layer.weights[o * spec.input_dim..(o + 1) * spec.input_dim];
                        for (dxi, wi) in dx.iter_mut().zip(w) {
                            *dxi += d * wi;
                        }
                    }
                }
            }
            LayerKind::Anchor { offset, len } => {
                for r in 0..rows {
                    let up = upstream.row(r);
                    for j in 0..len {
                        g.bias[j] += up[offset + j];
                    }
                    let dx = downstream.row_mut(r);
                    dx.copy_from_slice(up);
                    for j in 0..len {
                        dx[offset + j] = -dx[offset + j];
                    }
                }
            }
        }
        upstream = downstream;
    }
    Ok((grads, upstream))
}

/// Batch-mean loss of `output` against `targets` and its gradient.
fn loss_and_grad(output: &Matrix, targets: &Targets) -> Result<(f64, Matrix)> {
    let rows = output.rows();
    if rows != targets.len() {
        return Err(Error::Shape(format!(
            "{rows} outputs but {} targets",
            targets.len()
        )));
    }
    if output.cols() != targets.width() {
        return Err(Error::Shape(format!(
            "model emits {} values per sample, targets need {}",
            output.cols(),
            targets.width()
        )));
    }
    let scale = 1.0 / rows as f64;
    let mut grad = Matrix::zeros(rows, output.cols());
    let mut total = 0.0;
    match targets {
        Targets::Classes { labels, .. } => {
            for (r, &label) in labels.iter().enumerate().take(rows) {
                let logits = output.row(r);
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
                let lse = max + sum.ln();
                total += lse - logits[label];
                for (c, g) in grad.row_mut(r).iter_mut().enumerate() {
                    let p = (logits[c] - lse).exp();
                    let onehot = if c == label { 1.0 } else { 0.0 };
                    *g = (p - onehot) * scale;
                }
            }
        }
        Targets::Values(t) => {
            for r in 0..rows {
                for (c, g) in grad.row_mut(r).iter_mut().enumerate() {
                    let diff = output.get(r, c) - t.get(r, c);
                    total += 0.5 * diff * diff;
                    *g = diff * scale;
                }
            }
        }
    }
    let loss = total * scale;
    if !loss.is_finite() {
        return Err(Error::Numeric("loss".into()));
    }
    Ok((loss, grad))
}

fn check_head(model: &ModelParams, targets: &Targets) -> Result<()> {
    if let Some(last) = model.layers().last() {
        let wants_classes = last.spec.is_softmax_head();
        let has_classes = matches!(targets, Targets::Classes { .. });
        if wants_classes != has_classes {
            return Err(Error::Shape(if wants_classes {
                "softmax head needs class labels".into()
            } else {
                "class labels need a softmax head".into()
            }));
        }
    }
    Ok(())
}

/// Runs the client-side layers. With no client layers the raw inputs are the
/// smashed data.
pub fn forward_client(
    client_part: &ModelParams,
    batch: &Batch,
    client_id: usize,
) -> Result<(SmashedData, ForwardCache)> {
    let (activations, cache) = forward_layers(client_part, &batch.inputs)?;
    Ok((
        SmashedData {
            activations,
            targets: batch.targets.clone(),
            client_id,
        },
        cache,
    ))
}

/// Runs the server-side layers and the loss head on smashed data.
pub fn forward_server(
    server_part: &ModelParams,
    smashed: &SmashedData,
) -> Result<(f64, ServerCache)> {
    check_head(server_part, &smashed.targets)?;
    let (output, layers) = forward_layers(server_part, &smashed.activations)?;
    let (loss, _) = loss_and_grad(&output, &smashed.targets)?;
    Ok((
        loss,
        ServerCache {
            layers,
            output,
            targets: smashed.targets.clone(),
        },
    ))
}

/// Server-side parameter gradients and the gradient with respect to the
/// smashed data, both of the batch-mean loss.
pub fn backward_server(
    server_part: &ModelParams,
    cache: &ServerCache,
) -> Result<(ModelParams, Matrix)> {
    let (_, grad_out) = loss_and_grad(&cache.output, &cache.targets)?;
    backward_layers(server_part, &cache.layers, &grad_out)
}

/// Client-side parameter gradients by the chain rule through the smashed data.
pub fn backward_client(
    client_part: &ModelParams,
    cache: &ForwardCache,
    grad_wrt_smashed: &Matrix,
) -> Result<ModelParams> {
    let (grads, _) = backward_layers(client_part, cache, grad_wrt_smashed)?;
    Ok(grads)
}

/// Loss and full-model gradient on one batch, without any split.
pub fn full_gradient(model: &ModelParams, batch: &Batch) -> Result<(f64, ModelParams)> {
    check_head(model, &batch.targets)?;
    let (output, cache) = forward_layers(model, &batch.inputs)?;
    let (loss, grad_out) = loss_and_grad(&output, &batch.targets)?;
    let (grads, _) = backward_layers(model, &cache, &grad_out)?;
    Ok((loss, grads))
}

/// Batch-mean loss without gradients.
pub fn loss(model: &ModelParams, batch: &Batch) -> Result<f64> {
    check_head(model, &batch.targets)?;
    let (output, _) = forward_layers(model, &batch.inputs)?;
    Ok(loss_and_grad(&output, &batch.targets)?.0)
}

/// Loss plus, for class targets, the fraction of arg-max hits.
pub fn evaluate(model: &ModelParams, batch: &Batch) -> Result<(f64, Option<f64>)> {
    check_head(model, &batch.targets)?;
    let (output, _) = forward_layers(model, &batch.inputs)?;
    let (loss, _) = loss_and_grad(&output, &batch.targets)?;
    let accuracy = match &batch.targets {
        Targets::Classes { labels, .. } => {
            let hits = labels
                .iter()
                .enumerate()
                .filter(|&(r, &label)| argmax(output.row(r)) == label)
                .count();
            Some(hits as f64 / labels.len() as f64)
        }
        Targets::Values(_) => None,
    };
    Ok((loss, accuracy))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

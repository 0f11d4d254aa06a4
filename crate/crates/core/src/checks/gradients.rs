use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{
    backward_client, backward_server, forward_client, forward_server, full_gradient, init_model,
    loss, split_model, Activation, Batch, LayerSpec, Matrix, ModelParams, SplitSpec, Targets,
};
use crate::seed::derive;

/// Finite-difference step used by the gradient oracle.
pub const FD_EPS: f64 = 1e-5;
/// Magnitude below which gradient errors are measured absolutely.
pub const REL_FLOOR: f64 = 1e-4;

/// A random dense model with a batch that matches its head.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: ModelParams,
    pub batch: Batch,
}

/// Draws a model of `1..=max_layers` layers with widths in `1..=max_dim`
/// and a batch of 4 samples. `classes` selects the softmax head.
pub fn random_problem(
    seed: u64,
    max_layers: usize,
    max_dim: usize,
    classes: bool,
) -> Result<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(1..=max_layers);
    let mut dims = Vec::with_capacity(depth + 1);
    for _ in 0..=depth {
        dims.push(rng.random_range(1..=max_dim));
    }
    if classes && dims[depth] < 2 {
        dims[depth] = 2;
    }
    let hidden = [Activation::Identity, Activation::Relu, Activation::Tanh];
    let specs: Vec<LayerSpec> = (0..depth)
        .map(|k| {
            let act = if k + 1 == depth {
                if classes {
                    Activation::SoftmaxXentHead
                } else {
                    Activation::Identity
                }
            } else {
                hidden[rng.random_range(0..hidden.len())]
            };
            LayerSpec::dense(dims[k], dims[k + 1], act)
        })
        .collect();
    let mut model = init_model(&specs, derive(seed, &[1]))?;
    for layer in model.layers_mut() {
        for b in &mut layer.bias {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    let rows = 4;
    let inputs: Vec<f64> = (0..rows * dims[0])
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let inputs = Matrix::from_vec(rows, dims[0], inputs)?;
    let out = dims[depth];
    let targets = if classes {
        Targets::Classes {
            labels: (0..rows).map(|_| rng.random_range(0..out)).collect(),
            classes: out,
        }
    } else {
        let t: Vec<f64> = (0..rows * out)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Targets::Values(Matrix::from_vec(rows, out, t)?)
    };
    Ok(Problem {
        model,
        batch: Batch::new(inputs, targets)?,
    })
}

/// Largest entrywise `|a − b| / max(|a|, |b|, REL_FLOOR)`.
pub fn max_relative_error(a: &ModelParams, b: &ModelParams) -> f64 {
    a.values()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

/// Largest entrywise absolute difference.
pub fn max_abs_diff(a: &ModelParams, b: &ModelParams) -> f64 {
    a.values()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Max relative error of backprop against central differences over
/// `count` random problems, alternating the two loss heads.
pub fn gradient_oracle(count: usize, seed: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..count {
        let p = random_problem(derive(seed, &[k as u64]), 4, 8, k % 2 == 0)?;
        let (_, analytic) = full_gradient(&p.model, &p.batch)?;
        let numeric = crate::nn::finite_diff_grad(|m| loss(m, &p.batch), &p.model, FD_EPS)?;
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    Ok(worst)
}

/// Full-model gradient assembled from the split passes at `cut`.
pub fn split_gradient(model: &ModelParams, batch: &Batch, cut: usize) -> Result<ModelParams> {
    let (client, server) = split_model(model, SplitSpec::new(cut, model.len())?)?;
    let (smashed, client_cache) = forward_client(&client, batch, 0)?;
    let (_, server_cache) = forward_server(&server, &smashed)?;
    let (server_grads, dz) = backward_server(&server, &server_cache)?;
    let client_grads = backward_client(&client, &client_cache, &dz)?;
    client_grads.concat(&server_grads)
}

/// Max entrywise gap between split and unsplit backprop over every cut of a
/// random 4-layer model, for both heads.
pub fn split_equivalence(seed: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for classes in [false, true] {
        let mut p = random_problem(seed, 1, 8, classes)?;
        // Force exactly four layers.
        let mut tries = 0u64;
        while p.model.len() != 4 {
            tries += 1;
            p = random_problem(derive(seed, &[tries]), 4, 8, classes)?;
        }
        let (_, whole) = full_gradient(&p.model, &p.batch)?;
        for cut in 0..=p.model.len() {
            let split = split_gradient(&p.model, &p.batch, cut)?;
            worst = worst.max(max_abs_diff(&whole, &split));
        }
    }
    Ok(worst)
}

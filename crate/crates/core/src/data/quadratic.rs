use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::dataset::Dataset;
use super::partition::{assign_weights, Shard, WeightsMode};
use crate::error::{Error, Result};
use crate::nn::{check_weights, LayerSpec, Matrix, ModelParams, Targets};

/// Separable quadratic objectives `f_n(w) = ½‖w − c_n‖²` with weights `p_n`.
///
/// Each `f_n` is 1-smooth and 1-strongly convex, the gradient is `w − c_n`
/// and the minimizer of `F = Σ p_n f_n` is `w* = Σ p_n c_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticTask {
    centers: Vec<Vec<f64>>,
    weights: Vec<f64>,
    w_star: Vec<f64>,
}

pub fn build_quadratic_task(centers: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<QuadraticTask> {
    let Some(first) = centers.first() else {
        return Err(Error::Invalid("at least one center is required".into()));
    };
    let d = first.len();
    if d == 0 || centers.iter().any(|c| c.len() != d) {
        return Err(Error::Shape(
            "centers must share one positive dimension".into(),
        ));
    }
    if centers.len() != weights.len() {
        return Err(Error::Weights(format!(
            "{} centers but {} weights",
            centers.len(),
            weights.len()
        )));
    }
    check_weights(&weights)?;
    let mut w_star = vec![0.0; d];
    for (c, p) in centers.iter().zip(&weights) {
        for (w, x) in w_star.iter_mut().zip(c) {
            *w += p * x;
        }
    }
    Ok(QuadraticTask {
        centers,
        weights,
        w_star,
    })
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl QuadraticTask {
    pub fn dim(&self) -> usize {
        self.w_star.len()
    }

    pub fn num_clients(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn client_objective(&self, n: usize, w: &[f64]) -> f64 {
        0.5 * dist_sq(w, &self.centers[n])
    }

    pub fn client_gradient(&self, n: usize, w: &[f64]) -> Vec<f64> {
        w.iter().zip(&self.centers[n]).map(|(a, c)| a - c).collect()
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        (0..self.num_clients())
            .map(|n| self.weights[n] * self.client_objective(n, w))
            .sum()
    }

    /// `max_n ‖c_n − w*‖²` over the coordinates in `coords`; this is the
    /// squared gradient divergence, which does not depend on `w`.
    pub fn delta_sq(&self, coords: std::ops::Range<usize>) -> f64 {
        self.centers
            .iter()
            .map(|c| dist_sq(&c[coords.clone()], &self.w_star[coords.clone()]))
            .fold(0.0, f64::max)
    }

    /// `F(w*) − Σ p_n min_{w_c} f_n(w_c, w_s*)` for the client block
    /// `0..cut`, i.e. `½ Σ p_n ‖w*_c − c_{n,c}‖²`.
    pub fn gamma_gap(&self, cut: usize) -> f64 {
        0.5 * self
            .centers
            .iter()
            .zip(&self.weights)
            .map(|(c, p)| p * dist_sq(&c[..cut], &self.w_star[..cut]))
            .sum::<f64>()
    }

    /// Layer stack realizing the task: one anchor per coordinate, so the
    /// cut layer `L_c` hands coordinates `0..L_c` to the clients.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let d = self.dim();
        (0..d).map(|k| LayerSpec::anchor(d, k, 1)).collect()
    }

    /// The model whose parameters are the point `w`.
    pub fn model_at(&self, w: &[f64]) -> Result<ModelParams> {
        point_model(w)
    }
}

/// Anchor model holding the point `w`, one coordinate per layer.
pub fn point_model(w: &[f64]) -> Result<ModelParams> {
    let d = w.len();
    let specs: Vec<LayerSpec> = (0..d).map(|k| LayerSpec::anchor(d, k, 1)).collect();
    let mut m = ModelParams::zeros(&specs);
    for (layer, &x) in m.layers_mut().iter_mut().zip(w) {
        layer.bias[0] = x;
    }
    Ok(m)
}

/// Draws `per_client` points around each center with isotropic noise of
/// std `noise` and assigns them to clients in contiguous blocks. Targets
/// are zero so the anchor model's loss is `½‖w − x‖²`.
pub fn sample_quadratic_data(
    centers: &[Vec<f64>],
    per_client: usize,
    noise: f64,
    mode: WeightsMode,
    seed: u64,
) -> Result<(Dataset, Vec<Shard>)> {
    let Some(first) = centers.first() else {
        return Err(Error::Invalid("at least one center is required".into()));
    };
    let d = first.len();
    if per_client == 0 || d == 0 {
        return Err(Error::Invalid("need d ≥ 1 and per_client ≥ 1".into()));
    }
    let normal = Normal::new(0.0, noise).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(centers.len() * per_client * d);
    for c in centers {
        if c.len() != d {
            return Err(Error::Shape("centers must share one dimension".into()));
        }
        for _ in 0..per_client {
            x.extend(c.iter().map(|v| v + normal.sample(&mut rng)));
        }
    }
    let rows = centers.len() * per_client;
    let dataset = Dataset::new(
        Matrix::from_vec(rows, d, x)?,
        Targets::Values(Matrix::zeros(rows, d)),
    )?;
    let mut shards: Vec<Shard> = (0..centers.len())
        .map(|n| Shard {
            client_id: n,
            indices: (n * per_client..(n + 1) * per_client).collect(),
            weight: 0.0,
        })
        .collect();
    assign_weights(&mut shards, mode);
    Ok((dataset, shards))
}

/// Per-client sample means and per-coordinate population variances.
fn shard_moments(dataset: &Dataset, shard: &Shard) -> (Vec<f64>, Vec<f64>) {
    let d = dataset.dim();
    let n = shard.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in &shard.indices {
        for (m, x) in mean.iter_mut().zip(dataset.features().row(i)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for &i in &shard.indices {
        for ((v, x), m) in var.iter_mut().zip(dataset.features().row(i)).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

/// The quadratic task defined by the empirical shard means of sampled data.
pub fn task_from_data(dataset: &Dataset, shards: &[Shard]) -> Result<QuadraticTask> {
    let centers = shards.iter().map(|s| shard_moments(dataset, s).0).collect();
    build_quadratic_task(centers, shards.iter().map(|s| s.weight).collect())
}

/// Exact analysis constants for a sampled quadratic task trained with
/// batches of `b` drawn without replacement (`m·b` samples per epoch).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticConstants {
    /// Variance of one client-side stochastic gradient, per client.
    pub sigma_sq_client: Vec<f64>,
    /// Variance of one server-side stochastic gradient, per client.
    pub sigma_sq_server: Vec<f64>,
    /// `Σ p_n² σ_n²` over the client block.
    pub sigma_sq_weighted: f64,
    /// `N² E‖Σ p_n ∇_{w_s} f_n(w*; ζ_n)‖²`, the noise the server-side
    /// recursion carries at the optimum.
    pub r_sq_server: f64,
    /// Bound on `E‖∇_{w_c} f_n(w; ζ)‖²` over every point training can reach.
    pub r_sq_client: f64,
    pub delta_sq: f64,
    pub gamma_gap: f64,
    pub d0_server: f64,
    pub d0_client: f64,
}

/// Computes [`QuadraticConstants`] for the cut `cut` and start point `w0`.
///
/// Every iterate with step sizes `≤ 1` is a convex combination of `w0` and
/// data points, so `r_sq_client` maximizes over those vertices.
pub fn quadratic_constants(
    task: &QuadraticTask,
    dataset: &Dataset,
    shards: &[Shard],
    b: usize,
    m: usize,
    cut: usize,
    w0: &[f64],
) -> Result<QuadraticConstants> {
    let d = task.dim();
    if cut > d || w0.len() != d || shards.len() != task.num_clients() {
        return Err(Error::Shape(
            "constants: task, cut and start point disagree".into(),
        ));
    }
    let n_clients = shards.len() as f64;
    let mut sigma_sq_client = Vec::with_capacity(shards.len());
    let mut sigma_sq_server = Vec::with_capacity(shards.len());
    let mut r_sq_client: f64 = 0.0;
    for (n, shard) in shards.iter().enumerate() {
        let size = shard.len();
        if m * b > size {
            return Err(Error::Invalid(format!(
                "client {n}: exact variances need m·b ≤ {size}"
            )));
        }
        // Variance of a without-replacement sample mean.
        let factor = if size > 1 {
            (size - b) as f64 / (b as f64 * (size - 1) as f64)
        } else {
            0.0
        };
        let (_, var) = shard_moments(dataset, shard);
        let sc = factor * var[..cut].iter().sum::<f64>();
        let ss = factor * var[cut..].iter().sum::<f64>();
        sigma_sq_client.push(sc);
        sigma_sq_server.push(ss);

        let c = &task.centers[n][..cut];
        let mut far = dist_sq(&w0[..cut], c);
        for i in 0..dataset.len() {
            far = far.max(dist_sq(&dataset.features().row(i)[..cut], c));
        }
        r_sq_client = r_sq_client.max(far + sc);
    }
    let p = &task.weights;
    let sigma_sq_weighted = p.iter().zip(&sigma_sq_client).map(|(p, s)| p * p * s).sum();
    let mut mean_grad = vec![0.0; d - cut];
    for (c, pn) in task.centers.iter().zip(p) {
        for (g, (w, x)) in mean_grad
            .iter_mut()
            .zip(task.w_star[cut..].iter().zip(&c[cut..]))
        {
            *g += pn * (w - x);
        }
    }
    let noise: f64 = p.iter().zip(&sigma_sq_server).map(|(p, s)| p * p * s).sum();
    let r_sq_server =
        n_clients * n_clients * (noise + mean_grad.iter().map(|g| g * g).sum::<f64>());
    Ok(QuadraticConstants {
        sigma_sq_client,
        sigma_sq_server,
        sigma_sq_weighted,
        r_sq_server,
        r_sq_client,
        delta_sq: task.delta_sq(0..cut),
        gamma_gap: task.gamma_gap(cut),
        d0_server: dist_sq(&w0[cut..], &task.w_star[cut..]),
        d0_client: dist_sq(&w0[..cut], &task.w_star[..cut]),
    })
}

use super::indexing::step_coords;
use crate::error::{Error, Result};
use crate::nn::{aggregate, check_weights, split_model, ModelParams, SplitSpec};

/// Protocol state between steps: one client-side model per client, the
/// server-side model and the number of completed steps.
///
/// Between a step and the following sync the client models hold the
/// un-aggregated updates `v_{c,n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitState {
    pub(crate) clients: Vec<ModelParams>,
    pub(crate) server: ModelParams,
    pub(crate) weights: Vec<f64>,
    cut: usize,
    step: usize,
    epochs: usize,
    batches: usize,
    seed: u64,
}

impl SplitState {
    /// Splits `model` at `cut` and hands every client the same client part.
    pub fn new(
        model: &ModelParams,
        cut: usize,
        weights: Vec<f64>,
        epochs: usize,
        batches: usize,
        seed: u64,
    ) -> Result<Self> {
        check_weights(&weights)?;
        if epochs == 0 || batches == 0 {
            return Err(Error::Invalid("E and M must be at least 1".into()));
        }
        let (client, server) = split_model(model, SplitSpec::new(cut, model.len())?)?;
        Ok(Self {
            clients: vec![client; weights.len()],
            server,
            weights,
            cut,
            step: 0,
            epochs,
            batches,
            seed,
        })
    }

    pub fn clients(&self) -> &[ModelParams] {
        &self.clients
    }

    pub fn server(&self) -> &ModelParams {
        &self.server
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn cut(&self) -> usize {
        self.cut
    }

    /// Completed steps `i`.
    pub fn step(&self) -> usize {
        self.step
    }

    /// `(t, e, m)` of the last completed step.
    pub fn coords(&self) -> (usize, usize, usize) {
        step_coords(self.step, self.epochs, self.batches)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub(crate) fn advance(&mut self) {
        self.step += 1;
    }

    /// `w̄_c = Σ p_n w_{c,n}`.
    pub fn mean_client(&self) -> Result<ModelParams> {
        aggregate(&self.clients, &self.weights)
    }

    /// `(w̄_c, w_s)` as one model.
    pub fn global_model(&self) -> Result<ModelParams> {
        self.mean_client()?.concat(&self.server)
    }

    /// `Σ p_n ‖w_{c,n} − w̄_c‖²`.
    pub fn client_divergence(&self) -> Result<f64> {
        let mean = self.mean_client()?;
        let mut total = 0.0;
        for (c, p) in self.clients.iter().zip(&self.weights) {
            total += p * c.dist_sq(&mean)?;
        }
        Ok(total)
    }
}

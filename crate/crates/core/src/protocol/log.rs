use serde::Serialize;

use crate::algorithms::Algorithm;
use crate::nn::ModelParams;

/// Diagnostics recorded after step `i` (after any aggregation). Step 0 is
/// the starting point and has no learning rates or gradients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub i: usize,
    pub t: usize,
    pub e: usize,
    pub m: usize,
    /// Loss of `(w̄_c, w_s)` on the evaluation set.
    pub loss: f64,
    pub accuracy: Option<f64>,
    /// `‖w − w*‖²` for the whole model, when `w*` is known.
    pub dist_sq_to_wstar: Option<f64>,
    pub eta_c: Option<f64>,
    pub eta_s: Option<f64>,
    /// Mean over clients of the windowed client-gradient variance, per layer.
    pub grad_var_at_client_mean: Option<f64>,
    /// Variance of the client-side gradients across clients, per layer.
    pub grad_var_across_clients: Option<f64>,
    /// `‖w_s − w_s*‖²`.
    pub dist_sq_server: Option<f64>,
    /// `‖w̄_c − w_c*‖²`.
    pub dist_sq_client: Option<f64>,
    /// `Σ p_n ‖w_{c,n} − w̄_c‖²`.
    pub client_divergence: f64,
    /// `‖Σ p_n (∇_c f_n(w) − ∇_c f_n(w; ζ_n))‖²` at the start of the step.
    pub grad_noise_sq: Option<f64>,
}

/// Everything one training run produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunLog {
    pub algorithm: Algorithm,
    /// Layers held by the clients during training.
    pub cut: usize,
    pub weights: Vec<f64>,
    pub sync_points: Vec<usize>,
    pub records: Vec<StepRecord>,
    /// `client_grads[i − 1][n]` is client `n`'s flattened client-side
    /// gradient at step `i`, when requested.
    pub client_grads: Option<Vec<Vec<Vec<f64>>>>,
    /// `(w̄_c, w_s)` after the last step.
    pub final_model: ModelParams,
}

impl RunLog {
    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("a run log always holds step 0")
    }

    pub fn record_at(&self, i: usize) -> Option<&StepRecord> {
        self.records
            .binary_search_by_key(&i, |r| r.i)
            .ok()
            .map(|k| &self.records[k])
    }
}

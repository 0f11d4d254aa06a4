use rayon::prelude::*;

use super::indexing::SyncSchedule;
use super::state::SplitState;
use crate::error::{Error, Result};
use crate::nn::{
    aggregate, backward_client, backward_server, forward_client, forward_server, sgd_step,
    weighted_average, Batch, ModelParams,
};

fn check_inputs(state: &SplitState, batches: &[Batch], eta_c: f64, eta_s: f64) -> Result<()> {
    if batches.len() != state.num_clients() {
        return Err(Error::Shape(format!(
            "{} batches for {} clients",
            batches.len(),
            state.num_clients()
        )));
    }
    if !(eta_c >= 0.0 && eta_s >= 0.0 && eta_c.is_finite() && eta_s.is_finite()) {
        return Err(Error::Invalid(format!(
            "learning rates ({eta_c}, {eta_s}) must be finite and nonnegative"
        )));
    }
    Ok(())
}

/// One step of the split protocol without aggregation.
///
/// 1. Every client runs its layers on its batch.
/// 2. The server computes, from the current `w_s`, its parameter gradient and
///    the smashed-data gradient for every client, then applies one step with
///    the `p`-weighted average of the parameter gradients.
/// 3. Every client backpropagates its smashed-data gradient and steps.
///
/// Returns each client's client-side gradient.
pub fn minibatch_sfl_step(
    state: &mut SplitState,
    batches: &[Batch],
    eta_c: f64,
    eta_s: f64,
) -> Result<Vec<ModelParams>> {
    check_inputs(state, batches, eta_c, eta_s)?;
    let forward: Vec<_> = state
        .clients
        .par_iter()
        .zip(batches)
        .enumerate()
        .map(|(n, (client, batch))| forward_client(client, batch, n))
        .collect::<Result<_>>()?;

    let server = &state.server;
    let server_side: Vec<(ModelParams, _)> = forward
        .par_iter()
        .map(|(smashed, _)| {
            let (_, cache) = forward_server(server, smashed)?;
            backward_server(server, &cache)
        })
        .collect::<Result<_>>()?;
    let (server_grads, smashed_grads): (Vec<_>, Vec<_>) = server_side.into_iter().unzip();
    let step = weighted_average(&server_grads, &state.weights)?;
    state.server = sgd_step(&state.server, &step, eta_s)?;

    let updated: Vec<(ModelParams, ModelParams)> = state
        .clients
        .par_iter()
        .zip(&forward)
        .zip(&smashed_grads)
        .map(|((client, (_, cache)), dz)| {
            let g = backward_client(client, cache, dz)?;
            Ok((sgd_step(client, &g, eta_c)?, g))
        })
        .collect::<Result<_>>()?;
    let (clients, grads) = updated.into_iter().unzip();
    state.clients = clients;
    state.advance();
    Ok(grads)
}

/// Aggregates the client-side models when the current step is a sync
/// point; otherwise the per-client updates are kept as they are.
/// Returns whether aggregation happened.
pub fn maybe_sync(state: &mut SplitState, schedule: &SyncSchedule) -> Result<bool> {
    if !schedule.contains(state.step()) {
        return Ok(false);
    }
    let merged = aggregate(&state.clients, &state.weights)?;
    state.clients.iter_mut().for_each(|c| *c = merged.clone());
    Ok(true)
}

use crate::error::{Error, Result};
use crate::protocol::RunLog;

/// Sum over coordinates of the population variance of `vectors`.
pub fn population_variance_sum<V: AsRef<[f64]>>(vectors: &[V]) -> f64 {
    let Some(first) = vectors.first() else {
        return 0.0;
    };
    let n = vectors.len() as f64;
    let dim = first.as_ref().len();
    let mut total = 0.0;
    for k in 0..dim {
        let mean = vectors.iter().map(|v| v.as_ref()[k]).sum::<f64>() / n;
        total += vectors
            .iter()
            .map(|v| {
                let d = v.as_ref()[k] - mean;
                d * d
            })
            .sum::<f64>()
            / n;
    }
    total
}

fn traces(log: &RunLog) -> Result<&Vec<Vec<Vec<f64>>>> {
    log.client_grads
        .as_ref()
        .ok_or_else(|| Error::MissingLog("client gradients were not kept".into()))
}

fn per_layer(total: f64, cut: usize) -> Result<f64> {
    if cut == 0 {
        return Err(Error::Invalid(
            "gradient variance needs at least one client layer".into(),
        ));
    }
    Ok(total / cut as f64)
}

/// Variance of one client's client-side gradients over the `window` steps
/// ending at the last step, divided by `cut`.
pub fn grad_variance_at_client(
    log: &RunLog,
    client: usize,
    window: usize,
    cut: usize,
) -> Result<f64> {
    let traces = traces(log)?;
    if window < 2 || traces.len() < window {
        return Err(Error::MissingLog(format!(
            "need at least 2 and at most {} steps in the window, got {window}",
            traces.len()
        )));
    }
    let rows: Vec<&[f64]> = traces[traces.len() - window..]
        .iter()
        .map(|step| {
            step.get(client)
                .map(Vec::as_slice)
                .ok_or_else(|| Error::MissingLog(format!("no gradients for client {client}")))
        })
        .collect::<Result<_>>()?;
    per_layer(population_variance_sum(&rows), cut)
}

/// Variance across clients of the client-side gradients at step `i`,
/// divided by `cut`.
pub fn grad_variance_across_clients(log: &RunLog, i: usize, cut: usize) -> Result<f64> {
    let traces = traces(log)?;
    let step = i
        .checked_sub(1)
        .and_then(|k| traces.get(k))
        .ok_or_else(|| Error::MissingLog(format!("no gradients at step {i}")))?;
    per_layer(population_variance_sum(step), cut)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_examples() {
        assert_eq!(population_variance_sum(&[vec![0.0], vec![2.0]]), 1.0);
        assert_eq!(population_variance_sum(&[[1.0, 5.0]; 4]), 0.0);
        let shifted = population_variance_sum(&[vec![3.0, 1.0], vec![5.0, -1.0]]);
        let base = population_variance_sum(&[vec![0.0, 0.0], vec![2.0, -2.0]]);
        assert_eq!(shifted, base);
    }
}

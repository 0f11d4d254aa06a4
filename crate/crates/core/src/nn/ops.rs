use super::model::ModelParams;
use crate::error::{Error, Result};

/// Tolerance on `Σ p_n = 1` for aggregation weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// `p − lr·g` entrywise.
pub fn sgd_step(params: &ModelParams, grads: &ModelParams, lr: f64) -> Result<ModelParams> {
    if !lr.is_finite() {
        return Err(Error::Numeric("learning rate".into()));
    }
    params.ensure_same_shape(grads, "sgd step")?;
    let mut out = params.clone();
    for (p, g) in out.values_mut().zip(grads.values()) {
        *p -= lr * g;
    }
    if !out.is_finite() {
        return Err(Error::Numeric("parameters after sgd step".into()));
    }
    Ok(out)
}

/// Checks that `weights` are nonnegative and sum to one within
/// [`WEIGHT_SUM_TOL`]. Returns the exact sum.
pub fn check_weights(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::Weights("no weights".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::Weights(format!(
            "weight {w} is not a nonnegative number"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Weights(format!("weights sum to {sum}, not 1")));
    }
    Ok(sum)
}

fn weighted_sum(models: &[&ModelParams], weights: &[f64]) -> Result<ModelParams> {
    let Some(first) = models.first() else {
        return Err(Error::Weights("nothing to aggregate".into()));
    };
    if models.len() != weights.len() {
        return Err(Error::Weights(format!(
            "{} models but {} weights",
            models.len(),
            weights.len()
        )));
    }
    for m in &models[1..] {
        first.ensure_same_shape(m, "aggregation")?;
    }
    let mut out = first.scaled(weights[0]);
    for (m, &p) in models.iter().zip(weights).skip(1) {
        for (acc, v) in out.values_mut().zip(m.values()) {
            *acc += p * v;
        }
    }
    // Entries on which every model agrees are returned unchanged, so a
    // consensus is an exact fixed point regardless of rounding in Σ p_n.
    let mut agree: Vec<Option<f64>> = first.values().map(|v| Some(*v)).collect();
    for m in &models[1..] {
        for (a, v) in agree.iter_mut().zip(m.values()) {
            if matches!(a, Some(x) if x.to_bits() != v.to_bits()) {
                *a = None;
            }
        }
    }
    for (acc, a) in out.values_mut().zip(agree) {
        if let Some(x) = a {
            *acc = x;
        }
    }
    Ok(out)
}

/// Weighted model average `Σ p_n·m_n`, reduced in ascending client order.
pub fn aggregate(models: &[ModelParams], weights: &[f64]) -> Result<ModelParams> {
    check_weights(weights)?;
    let refs: Vec<&ModelParams> = models.iter().collect();
    let out = weighted_sum(&refs, weights)?;
    if !out.is_finite() {
        return Err(Error::Numeric("aggregate".into()));
    }
    Ok(out)
}

/// `Σ p_n g_n / Σ p_n`, the normalized server-gradient average. The weights
/// must still pass [`check_weights`]; the division keeps the general form.
pub fn weighted_average(grads: &[ModelParams], weights: &[f64]) -> Result<ModelParams> {
    let total = check_weights(weights)?;
    let refs: Vec<&ModelParams> = grads.iter().collect();
    let mut out = weighted_sum(&refs, weights)?;
    out.values_mut().for_each(|v| *v /= total);
    if !out.is_finite() {
        return Err(Error::Numeric("averaged gradient".into()));
    }
    Ok(out)
}

/// Central-difference gradient of `loss` at `params`.
pub fn finite_diff_grad<F>(loss: F, params: &ModelParams, eps: f64) -> Result<ModelParams>
where
    F: Fn(&ModelParams) -> Result<f64>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Invalid(format!("step {eps} must be positive")));
    }
    let mut grads = params.zeros_like();
    let mut probe = params.clone();
    let n = params.num_params();
    for k in 0..n {
        let orig = *probe.values().nth(k).expect("index within model");
        *probe.values_mut().nth(k).expect("index within model") = orig + eps;
        let plus = loss(&probe)?;
        *probe.values_mut().nth(k).expect("index within model") = orig - eps;
        let minus = loss(&probe)?;
        *probe.values_mut().nth(k).expect("index within model") = orig;
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::Numeric(format!("loss near parameter {k}")));
        }
        *grads.values_mut().nth(k).expect("index within model") = (plus - minus) / (2.0 * eps);
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{Activation, Layer, LayerSpec};

    fn scalar(v: f64) -> ModelParams {
        ModelParams::from_layers(vec![Layer {
            spec: LayerSpec::dense(1, 1, Activation::Identity),
            weights: vec![v],
            bias: vec![0.0],
        }])
        .unwrap()
    }

    fn w(m: &ModelParams) -> f64 {
        m.layers()[0].weights[0]
    }

    #[test]
    fn sgd_step_values() {
        assert_eq!(w(&sgd_step(&scalar(1.0), &scalar(2.0), 0.25).unwrap()), 0.5);
        assert_eq!(
            sgd_step(&scalar(1.3), &scalar(2.7), 0.0).unwrap(),
            scalar(1.3)
        );
    }

    #[test]
    fn sgd_step_inverse_on_dyadic_values() {
        let p = scalar(0.75);
        let g = scalar(-1.5);
        let there = sgd_step(&p, &g, 0.125).unwrap();
        assert_eq!(sgd_step(&there, &g, -0.125).unwrap(), p);
    }

    #[test]
    fn sgd_step_rejects_overflow() {
        assert!(matches!(
            sgd_step(&scalar(f64::MAX), &scalar(-f64::MAX), 2.0),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn aggregate_midpoint() {
        let out = aggregate(&[scalar(0.0), scalar(4.0)], &[0.5, 0.5]).unwrap();
        assert_eq!(w(&out), 2.0);
    }

    #[test]
    fn aggregate_consensus_is_exact() {
        let m = scalar(0.1);
        let third = 1.0 / 3.0;
        let out = aggregate(&[m.clone(), m.clone(), m.clone()], &[third, third, third]).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn aggregate_rejects_bad_weights() {
        assert!(matches!(
            aggregate(&[scalar(0.0), scalar(1.0)], &[0.3, 0.3]),
            Err(Error::Weights(_))
        ));
        assert!(aggregate(&[scalar(0.0), scalar(1.0)], &[1.5, -0.5]).is_err());
        assert!(aggregate(&[], &[]).is_err());
    }

    #[test]
    fn aggregate_rejects_shape_mismatch() {
        assert!(matches!(
            aggregate(&[scalar(0.0), ModelParams::empty()], &[0.5, 0.5]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn finite_differences_on_simple_losses() {
        let g = finite_diff_grad(|m| Ok(w(m) * w(m)), &scalar(3.0), 1e-5).unwrap();
        assert!((w(&g) - 6.0).abs() < 1e-8);
        let g = finite_diff_grad(|_| Ok(4.2), &scalar(3.0), 1e-5).unwrap();
        assert_eq!(w(&g), 0.0);
        let c = 1.7;
        let g = finite_diff_grad(|m| Ok(0.5 * (w(m) - c).powi(2)), &scalar(c), 1e-5).unwrap();
        assert!(w(&g).abs() < 1e-9);
    }

    #[test]
    fn finite_differences_reject_nonpositive_eps() {
        assert!(finite_diff_grad(|_| Ok(0.0), &scalar(0.0), 0.0).is_err());
    }
}

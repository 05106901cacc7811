use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::FederatedTask;
use crate::error::{domain, Result};
use crate::voting::sign;

/// Empirical probability that a local minibatch gradient sign matches the
/// full-batch gradient sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSuccessProbe {
    pub per_component: Vec<f64>,
    pub mean: f64,
    /// Counts of `per_component` values in ten equal bins over `[0, 1]`.
    pub histogram: [usize; 10],
}

/// Draws `samples` minibatch gradients of size `batch` for every user at
/// `w` and compares their signs to the full-batch gradient signs.
pub fn probe_local_success<R: Rng + ?Sized>(
    task: &FederatedTask,
    w: &[f64],
    batch: usize,
    samples: usize,
    rng: &mut R,
) -> Result<LocalSuccessProbe> {
    if samples == 0 {
        return Err(domain("need at least one sample"));
    }
    let truth = task
        .full_gradient(w)
        .iter()
        .map(|&g| sign(g, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut hits = vec![0usize; w.len()];
    for _ in 0..samples {
        for k in 0..task.users() {
            let g = task.local_stochastic_gradient(k, w, batch, rng)?;
            for ((h, &gi), &t) in hits.iter_mut().zip(&g).zip(&truth) {
                if sign(gi, rng)? == t {
                    *h += 1;
                }
            }
        }
    }
    let total = (samples * task.users()) as f64;
    let per_component: Vec<f64> = hits.iter().map(|&h| h as f64 / total).collect();
    let mean = per_component.iter().sum::<f64>() / per_component.len() as f64;
    let mut histogram = [0usize; 10];
    for &p in &per_component {
        histogram[((p * 10.0) as usize).min(9)] += 1;
    }
    Ok(LocalSuccessProbe {
        per_component,
        mean,
        histogram,
    })
}

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Model family trained on a [`FederatedTask`](super::FederatedTask).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Logistic regression with a bias term.
    Logistic,
    /// One hidden ReLU layer followed by a logistic output.
    Mlp { hidden: usize },
    /// Mean estimation, `½‖w − x‖²`. Labels are ignored and there is no
    /// accuracy; its stationary point is the data mean.
    Quadratic,
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl ModelKind {
    pub fn num_params(&self, dim: usize) -> usize {
        match *self {
            ModelKind::Logistic => dim + 1,
            ModelKind::Mlp { hidden } => hidden * dim + 2 * hidden + 1,
            ModelKind::Quadratic => dim,
        }
    }

    /// Initial parameters. Logistic and quadratic models start at zero, the
    /// MLP with scaled Gaussian weights and zero biases.
    pub fn init<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        let mut w = vec![0.0; self.num_params(dim)];
        if let ModelKind::Mlp { hidden } = *self {
            let s1 = (2.0 / dim as f64).sqrt();
            let s2 = (1.0 / hidden as f64).sqrt();
            for v in &mut w[..hidden * dim] {
                *v = s1 * rng.sample::<f64, _>(StandardNormal);
            }
            for v in &mut w[hidden * dim + hidden..hidden * dim + 2 * hidden] {
                *v = s2 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        w
    }

    /// Output logit (or, for the quadratic model, nothing meaningful).
    fn logit(&self, w: &[f64], x: &[f64], hidden_act: &mut Vec<f64>) -> f64 {
        let dim = x.len();
        match *self {
            ModelKind::Logistic => x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[dim],
            ModelKind::Mlp { hidden } => {
                let (w1, rest) = w.split_at(hidden * dim);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                hidden_act.clear();
                let mut z = b2[0];
                for h in 0..hidden {
                    let row = &w1[h * dim..(h + 1) * dim];
                    let a = row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() + b1[h];
                    hidden_act.push(a);
                    z += w2[h] * a.max(0.0);
                }
                z
            }
            ModelKind::Quadratic => 0.0,
        }
    }

    /// Loss of one example.
    pub fn loss(&self, w: &[f64], x: &[f64], y: f64) -> f64 {
        match self {
            ModelKind::Quadratic => 0.5 * w.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
            _ => {
                let z = self.logit(w, x, &mut Vec::new());
                softplus(z) - y * z
            }
        }
    }

    /// Adds `scale · ∇loss` of one example to `grad` and returns the loss.
    pub fn accumulate_grad(&self, w: &[f64], x: &[f64], y: f64, scale: f64, grad: &mut [f64], scratch: &mut Vec<f64>) -> f64 {
        let dim = x.len();
        match *self {
            ModelKind::Logistic => {
                let z = self.logit(w, x, scratch);
                let dz = scale * (sigmoid(z) - y);
                for (g, xi) in grad[..dim].iter_mut().zip(x) {
                    *g += dz * xi;
                }
                grad[dim] += dz;
                softplus(z) - y * z
            }
            ModelKind::Mlp { hidden } => {
                let z = self.logit(w, x, scratch);
                let dz = scale * (sigmoid(z) - y);
                let w2_off = hidden * dim + hidden;
                let (g_w1, g_rest) = grad.split_at_mut(hidden * dim);
                let (g_b1, g_rest) = g_rest.split_at_mut(hidden);
                let (g_w2, g_b2) = g_rest.split_at_mut(hidden);
                g_b2[0] += dz;
                for h in 0..hidden {
                    let a = scratch[h];
                    g_w2[h] += dz * a.max(0.0);
                    if a > 0.0 {
                        let da = dz * w[w2_off + h];
                        g_b1[h] += da;
                        for (g, xi) in g_w1[h * dim..(h + 1) * dim].iter_mut().zip(x) {
                            *g += da * xi;
                        }
                    }
                }
                softplus(z) - y * z
            }
            ModelKind::Quadratic => {
                for ((g, wi), xi) in grad.iter_mut().zip(w).zip(x) {
                    *g += scale * (wi - xi);
                }
                self.loss(w, x, y)
            }
        }
    }

    /// Predicted class, or `None` for the quadratic model.
    pub fn predict(&self, w: &[f64], x: &[f64]) -> Option<bool> {
        match self {
            ModelKind::Quadratic => None,
            _ => Some(self.logit(w, x, &mut Vec::new()) > 0.0),
        }
    }
}

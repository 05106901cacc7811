use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::ModelKind;
use crate::error::{domain, Result};
use crate::rng::{tag, MasterSeed};

/// Row-major feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(domain(format!(
                "{} features do not form {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Dataset { dim, features, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }
}

/// Two Gaussian blobs in `dim` dimensions: class `y ∈ {0, 1}` is centered at
/// `±(separation/2)·u` for a random unit vector `u`, with identity covariance.
/// The Bayes accuracy is `Φ(separation/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoBlobSpec {
    pub users: usize,
    pub samples_per_user: usize,
    pub test_samples: usize,
    pub dim: usize,
    pub separation: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TwoBlobSpec {
    fn default() -> Self {
        TwoBlobSpec {
            users: 54,
            samples_per_user: 64,
            test_samples: 4000,
            dim: 64,
            separation: 2.0,
            batch: 4,
            seed: 2024,
        }
    }
}

/// A quadratic toy problem: features are standard Gaussian, the loss is
/// `½‖w − x‖²`, and the minimizer is the sample mean of all training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSpec {
    pub users: usize,
    pub samples_per_user: usize,
    pub dim: usize,
    pub batch: usize,
    pub seed: u64,
}

/// Per-user training sets, a shared test set, a model and a minibatch size.
#[derive(Debug, Clone)]
pub struct FederatedTask {
    users: Vec<Dataset>,
    test: Dataset,
    model: ModelKind,
    batch: usize,
    loss_scale: f64,
    init_scale: Option<f64>,
}

fn blob_samples<R: Rng + ?Sized>(rng: &mut R, n: usize, center: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dim = center.len();
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.random::<bool>();
        let side = if y { 1.0 } else { -1.0 };
        for c in center {
            features.push(side * c + rng.sample::<f64, _>(StandardNormal));
        }
        labels.push(if y { 1.0 } else { 0.0 });
    }
    (features, labels)
}

impl FederatedTask {
    pub fn new(users: Vec<Dataset>, test: Dataset, model: ModelKind, batch: usize) -> Result<Self> {
        let dim = test.dim();
        if users.is_empty() || users.iter().any(|d| d.dim() != dim || d.is_empty()) {
            return Err(domain("every user needs a nonempty dataset of the test dimension"));
        }
        let smallest = users.iter().map(Dataset::len).min().unwrap_or(0);
        if batch == 0 || batch > smallest {
            return Err(domain(format!("batch size must lie in 1..={smallest}, got {batch}")));
        }
        Ok(FederatedTask {
            users,
            test,
            model,
            batch,
            loss_scale: 1.0,
            init_scale: None,
        })
    }

    /// Synthetic two-class task with i.i.d. users. Every sample is drawn
    /// fresh, so user sets and the test set are disjoint.
    pub fn two_blob(spec: &TwoBlobSpec, model: ModelKind) -> Result<Self> {
        if spec.dim == 0 || spec.users == 0 || spec.samples_per_user == 0 || spec.test_samples == 0 {
            return Err(domain("two-blob task needs positive sizes"));
        }
        let seed = MasterSeed(spec.seed);
        let mut rng = seed.stream(&[tag::DATA]);
        let mut center: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = center.iter().map(|c| c * c).sum::<f64>().sqrt();
        for c in &mut center {
            *c *= 0.5 * spec.separation / norm;
        }
        let users = (0..spec.users)
            .map(|k| {
                let mut r = seed.stream(&[tag::DATA, tag::USER, k as u64]);
                let (f, l) = blob_samples(&mut r, spec.samples_per_user, &center);
                Dataset::new(spec.dim, f, l)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut r = seed.stream(&[tag::DATA, tag::PROBE]);
        let (f, l) = blob_samples(&mut r, spec.test_samples, &center);
        FederatedTask::new(users, Dataset::new(spec.dim, f, l)?, model, spec.batch)
    }

    pub fn quadratic_toy(spec: &QuadraticSpec) -> Result<Self> {
        if spec.dim == 0 || spec.users == 0 || spec.samples_per_user == 0 {
            return Err(domain("quadratic task needs positive sizes"));
        }
        let seed = MasterSeed(spec.seed);
        let draw = |path: &[u64], n: usize| {
            let mut r = seed.stream(path);
            let f: Vec<f64> = (0..n * spec.dim).map(|_| r.sample(StandardNormal)).collect();
            Dataset::new(spec.dim, f, vec![0.0; n])
        };
        let users = (0..spec.users)
            .map(|k| draw(&[tag::DATA, tag::USER, k as u64], spec.samples_per_user))
            .collect::<Result<Vec<_>>>()?;
        let test = draw(&[tag::DATA, tag::PROBE], 1)?;
        FederatedTask::new(users, test, ModelKind::Quadratic, spec.batch)
    }

    /// Same task with every loss multiplied by `scale`.
    pub fn with_loss_scale(mut self, scale: f64) -> Self {
        self.loss_scale = scale;
        self
    }

    /// Same task with every initial parameter drawn from `N(0, scale²)`
    /// instead of the model's default initialization.
    pub fn with_init_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(domain(format!("init scale must be finite and nonnegative, got {scale}")));
        }
        self.init_scale = Some(scale);
        Ok(self)
    }

    pub fn with_batch(mut self, batch: usize) -> Result<Self> {
        let smallest = self.users.iter().map(Dataset::len).min().unwrap_or(0);
        if batch == 0 || batch > smallest {
            return Err(domain(format!("batch size must lie in 1..={smallest}, got {batch}")));
        }
        self.batch = batch;
        Ok(self)
    }

    pub fn users(&self) -> usize {
        self.users.len()
    }

    pub fn user_data(&self, user: usize) -> &Dataset {
        &self.users[user]
    }

    pub fn test_data(&self) -> &Dataset {
        &self.test
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn dim(&self) -> usize {
        self.test.dim()
    }

    pub fn num_params(&self) -> usize {
        self.model.num_params(self.dim())
    }

    pub fn init_params(&self, seed: MasterSeed) -> Vec<f64> {
        let mut rng = seed.stream(&[tag::INIT]);
        match self.init_scale {
            None => self.model.init(self.dim(), &mut rng),
            Some(s) => (0..self.num_params())
                .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        }
    }

    fn mean_grad(&self, data: &Dataset, rows: impl ExactSizeIterator<Item = usize>, w: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; w.len()];
        let mut scratch = Vec::new();
        let scale = self.loss_scale / rows.len() as f64;
        for i in rows {
            self.model.accumulate_grad(w, data.row(i), data.label(i), scale, &mut grad, &mut scratch);
        }
        grad
    }

    /// Unbiased minibatch gradient of user `user`'s empirical loss: `batch`
    /// rows drawn without replacement from `rng`.
    pub fn local_stochastic_gradient<R: Rng + ?Sized>(
        &self,
        user: usize,
        w: &[f64],
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let data = self
            .users
            .get(user)
            .ok_or_else(|| domain(format!("no user {user}")))?;
        if batch == 0 || batch > data.len() {
            return Err(domain(format!("batch size must lie in 1..={}, got {batch}", data.len())));
        }
        let rows = sample(rng, data.len(), batch);
        Ok(self.mean_grad(data, rows.into_iter(), w))
    }

    /// Gradient of user `user`'s full empirical loss.
    pub fn user_gradient(&self, user: usize, w: &[f64]) -> Vec<f64> {
        let data = &self.users[user];
        self.mean_grad(data, 0..data.len(), w)
    }

    /// Gradient of the global objective: the average of the users' losses,
    /// weighted by dataset size.
    pub fn full_gradient(&self, w: &[f64]) -> Vec<f64> {
        let total: usize = self.users.iter().map(Dataset::len).sum();
        let mut grad = vec![0.0; w.len()];
        for (k, data) in self.users.iter().enumerate() {
            let weight = data.len() as f64 / total as f64;
            for (g, u) in grad.iter_mut().zip(self.user_gradient(k, w)) {
                *g += weight * u;
            }
        }
        grad
    }

    /// Mean training loss over all users' data.
    pub fn train_loss(&self, w: &[f64]) -> f64 {
        let (sum, n) = self.users.iter().fold((0.0, 0usize), |(s, n), d| {
            let part: f64 = (0..d.len()).map(|i| self.model.loss(w, d.row(i), d.label(i))).sum();
            (s + part, n + d.len())
        });
        self.loss_scale * sum / n as f64
    }

    /// Test-set accuracy, or `None` for models without a class output.
    pub fn test_accuracy(&self, w: &[f64]) -> Option<f64> {
        let mut correct = 0usize;
        for i in 0..self.test.len() {
            let predicted = self.model.predict(w, self.test.row(i))?;
            if predicted == (self.test.label(i) > 0.5) {
                correct += 1;
            }
        }
        Some(correct as f64 / self.test.len() as f64)
    }
}

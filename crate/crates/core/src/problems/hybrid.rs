//! Hybrid data: agents hold feature blocks of overlapping sample subsets.
//!
//! The shared variable `x` is the first-layer weight matrix `W1` (`M x d`,
//! row-major, `J = M d`). Each sample's features are cut into equal patches
//! of consecutive coordinates and every patch is owned by exactly one agent.
//! `B_{n,i} x` is the partial pre-activation `W1[:, P] a_i[P]` over the
//! columns `P` of the patches agent `n` owns for sample `i`, so summing over
//! agents gives `B_i x = W1 a_i`. The head `f(z, theta)` consumes the
//! `M`-dimensional coupled term.

use std::fmt::Debug;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::models::{argmax, cross_entropy, softmax_cross_entropy};
use super::{sample_batch, Batch, Dataset, ProblemError};

/// Owner of every `(sample, patch)` pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HybridAssignment {
    n_agents: usize,
    n_patches: usize,
    patch_len: usize,
    owner: Vec<usize>,
    // per agent: owned (sample, patch) pairs in ascending sample order
    owned: Vec<Vec<(usize, usize)>>,
}

impl HybridAssignment {
    /// Build from an explicit `S x patches` owner table.
    pub fn from_owners(
        owner: Vec<usize>,
        n_agents: usize,
        n_patches: usize,
        patch_len: usize,
    ) -> Result<Self, ProblemError> {
        if n_agents == 0 || n_patches == 0 || !owner.len().is_multiple_of(n_patches) {
            return Err(ProblemError::InvalidPartition(
                "owner table does not match the patch count".into(),
            ));
        }
        let mut owned = vec![Vec::new(); n_agents];
        for (k, &a) in owner.iter().enumerate() {
            if a >= n_agents {
                return Err(ProblemError::InvalidPartition(format!(
                    "patch owner {a} out of range 0..{n_agents}"
                )));
            }
            owned[a].push((k / n_patches, k % n_patches));
        }
        Ok(Self {
            n_agents,
            n_patches,
            patch_len,
            owner,
            owned,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_samples(&self) -> usize {
        self.owner.len() / self.n_patches
    }

    pub fn n_patches(&self) -> usize {
        self.n_patches
    }

    pub fn patch_len(&self) -> usize {
        self.patch_len
    }

    pub fn owner(&self, sample: usize, patch: usize) -> usize {
        self.owner[sample * self.n_patches + patch]
    }

    pub fn owned(&self, agent: usize) -> &[(usize, usize)] {
        &self.owned[agent]
    }

    /// Patches of `sample` held by `agent`.
    pub fn patches_of(&self, agent: usize, sample: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_patches).filter(move |&p| self.owner(sample, p) == agent)
    }

    /// One line per agent listing `sample:patch` pairs.
    pub fn to_dump(&self) -> String {
        self.owned
            .iter()
            .map(|pairs| {
                let items: Vec<String> = pairs.iter().map(|(i, p)| format!("{i}:{p}")).collect();
                items.join(" ") + "\n"
            })
            .collect()
    }
}

/// Shuffle the samples, group them into subsets of `N`, and within each
/// subset give even-numbered patches of the `j`-th sample to agent `j` and
/// odd-numbered patches to agent `N-1-j`.
pub fn partition_hybrid(
    ds: &Dataset,
    n_agents: usize,
    n_patches: usize,
    seed: u64,
) -> Result<HybridAssignment, ProblemError> {
    let mut order: Vec<usize> = (0..ds.n_samples()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    partition_hybrid_in_order(ds, n_agents, n_patches, &order)
}

pub(crate) fn partition_hybrid_in_order(
    ds: &Dataset,
    n_agents: usize,
    n_patches: usize,
    order: &[usize],
) -> Result<HybridAssignment, ProblemError> {
    let (s, d) = (ds.n_samples(), ds.n_features());
    if n_patches == 0 || d % n_patches != 0 {
        return Err(ProblemError::Divisibility(format!(
            "{d} features cannot be cut into {n_patches} equal patches"
        )));
    }
    if n_agents == 0 || s % n_agents != 0 {
        return Err(ProblemError::Divisibility(format!(
            "{s} samples cannot be grouped into subsets of {n_agents}"
        )));
    }
    let mut owner = vec![0; s * n_patches];
    for subset in order.chunks(n_agents) {
        for (j, &i) in subset.iter().enumerate() {
            for p in 0..n_patches {
                owner[i * n_patches + p] = if p % 2 == 0 { j } else { n_agents - 1 - j };
            }
        }
    }
    HybridAssignment::from_owners(owner, n_agents, n_patches, d / n_patches)
}

/// Implicit `B_{n,i}` maps for the first layer under patch splitting.
#[derive(Debug, Clone)]
pub struct PatchCoupling {
    data: Arc<Dataset>,
    assignment: HybridAssignment,
    hidden: usize,
}

impl PatchCoupling {
    pub fn new(
        data: Arc<Dataset>,
        assignment: HybridAssignment,
        hidden: usize,
    ) -> Result<Self, ProblemError> {
        if assignment.n_samples() != data.n_samples() {
            return Err(ProblemError::DimensionMismatch {
                what: "hybrid assignment samples",
                expected: data.n_samples(),
                got: assignment.n_samples(),
            });
        }
        if assignment.n_patches() * assignment.patch_len() != data.n_features() {
            return Err(ProblemError::DimensionMismatch {
                what: "patch coverage",
                expected: data.n_features(),
                got: assignment.n_patches() * assignment.patch_len(),
            });
        }
        Ok(Self {
            data,
            assignment,
            hidden,
        })
    }

    pub fn assignment(&self) -> &HybridAssignment {
        &self.assignment
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// `M`.
    pub fn dim_z(&self) -> usize {
        self.hidden
    }

    /// `J = M d`.
    pub fn dim_x(&self) -> usize {
        self.hidden * self.data.n_features()
    }

    fn cols(&self, patch: usize) -> std::ops::Range<usize> {
        let len = self.assignment.patch_len();
        patch * len..(patch + 1) * len
    }

    /// `out += scale * W1[:, patch] a[patch]`.
    fn add_patch(&self, features: &[f64], patch: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let d = self.data.n_features();
        let cols = self.cols(patch);
        let a = &features[cols.clone()];
        for (m, o) in out.iter_mut().enumerate() {
            let row = &x[m * d + cols.start..m * d + cols.end];
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(a) {
                if *v != 0.0 {
                    acc += w * v;
                }
            }
            *o += scale * acc;
        }
    }

    /// `x_grad[:, patch] += g a[patch]^T`.
    fn add_patch_transpose(&self, features: &[f64], patch: usize, g: &[f64], x_grad: &mut [f64]) {
        let d = self.data.n_features();
        let cols = self.cols(patch);
        let a = &features[cols.clone()];
        for (m, gm) in g.iter().enumerate() {
            if *gm == 0.0 {
                continue;
            }
            let row = &mut x_grad[m * d + cols.start..m * d + cols.end];
            for (r, v) in row.iter_mut().zip(a) {
                if *v != 0.0 {
                    *r += gm * v;
                }
            }
        }
    }

    /// `out += scale * B_{n,i} x`.
    pub fn apply_local(&self, agent: usize, sample: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let features = self.data.features(sample);
        for p in self.assignment.patches_of(agent, sample) {
            self.add_patch(features, p, x, scale, out);
        }
    }

    /// `x_grad += B_{n,i}^T g`.
    pub fn apply_local_transpose(
        &self,
        agent: usize,
        sample: usize,
        g: &[f64],
        x_grad: &mut [f64],
    ) {
        let features = self.data.features(sample);
        for p in self.assignment.patches_of(agent, sample) {
            self.add_patch_transpose(features, p, g, x_grad);
        }
    }

    /// `B_i x = W1 a_i`.
    pub fn apply_full(&self, sample: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.hidden];
        self.apply_on(self.data.features(sample), x, &mut out);
        out
    }

    /// `x_grad += B_i^T g`.
    pub fn apply_full_transpose(&self, sample: usize, g: &[f64], x_grad: &mut [f64]) {
        let features = self.data.features(sample);
        for p in 0..self.assignment.n_patches() {
            self.add_patch_transpose(features, p, g, x_grad);
        }
    }

    /// First-layer pre-activation of an arbitrary feature vector.
    pub fn apply_on(&self, features: &[f64], x: &[f64], out: &mut [f64]) {
        for p in 0..self.assignment.n_patches() {
            self.add_patch(features, p, x, 1.0, out);
        }
    }

    /// `z[i] += scale * B_{n,i} delta` for every sample the agent touches;
    /// `z` is the agent's `S x M` row-major block.
    pub fn add_to_tracking(&self, agent: usize, delta: &[f64], scale: f64, z: &mut [f64]) {
        let m = self.hidden;
        for &(i, p) in self.assignment.owned(agent) {
            let features = self.data.features(i);
            self.add_patch(features, p, delta, scale, &mut z[i * m..(i + 1) * m]);
        }
    }
}

/// Per-sample loss `f_i(z, theta)` of the hybrid problem.
pub trait SampleHead: Send + Sync + Debug {
    /// `K`.
    fn dim_theta(&self) -> usize;
    /// `M`.
    fn dim_z(&self) -> usize;
    fn loss(&self, sample: usize, z: &[f64], theta: &[f64]) -> f64;
    /// Adds `grad_z f_i` and `grad_theta f_i` into the buffers; returns the loss.
    fn loss_grad(
        &self,
        sample: usize,
        z: &[f64],
        theta: &[f64],
        grad_z: &mut [f64],
        grad_theta: &mut [f64],
    ) -> f64;
    fn classify(&self, _z: &[f64], _theta: &[f64]) -> Option<usize> {
        None
    }
    fn init_theta(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// `f_i(z, theta) = 1/2 |z - c_i|^2 + 1/2 |theta|^2`.
#[derive(Debug, Clone)]
pub struct QuadraticHead {
    dim_z: usize,
    dim_theta: usize,
    targets: Vec<f64>,
}

impl QuadraticHead {
    /// `targets` is `S x dim_z` row-major.
    pub fn new(dim_z: usize, dim_theta: usize, targets: Vec<f64>) -> Self {
        assert!(dim_z > 0 && targets.len().is_multiple_of(dim_z));
        Self {
            dim_z,
            dim_theta,
            targets,
        }
    }

    /// Standard normal targets.
    pub fn random(n_samples: usize, dim_z: usize, dim_theta: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let targets = (0..n_samples * dim_z)
            .map(|_| rng.sample(rand_distr::StandardNormal))
            .collect();
        Self::new(dim_z, dim_theta, targets)
    }

    pub fn target(&self, sample: usize) -> &[f64] {
        &self.targets[sample * self.dim_z..(sample + 1) * self.dim_z]
    }
}

impl SampleHead for QuadraticHead {
    fn dim_theta(&self) -> usize {
        self.dim_theta
    }

    fn dim_z(&self) -> usize {
        self.dim_z
    }

    fn loss(&self, sample: usize, z: &[f64], theta: &[f64]) -> f64 {
        let r: f64 = z
            .iter()
            .zip(self.target(sample))
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        0.5 * (r + crate::linalg::norm_sq(theta))
    }

    fn loss_grad(
        &self,
        sample: usize,
        z: &[f64],
        theta: &[f64],
        grad_z: &mut [f64],
        grad_theta: &mut [f64],
    ) -> f64 {
        for ((g, a), c) in grad_z.iter_mut().zip(z).zip(self.target(sample)) {
            *g += a - c;
        }
        crate::linalg::axpy(grad_theta, 1.0, theta);
        self.loss(sample, z, theta)
    }

    fn init_theta(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.dim_theta)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect()
    }
}

/// Remaining MLP layers on top of the first-layer pre-activation:
/// `theta = [b1 (M) | W2 (C x M) | b2 (C)]`, ReLU then softmax
/// cross-entropy against the sample's label.
#[derive(Debug, Clone)]
pub struct MlpHead {
    labels: Vec<usize>,
    hidden: usize,
    n_classes: usize,
}

impl MlpHead {
    pub fn new(labels: Vec<usize>, hidden: usize, n_classes: usize) -> Self {
        Self {
            labels,
            hidden,
            n_classes,
        }
    }

    fn forward(&self, z: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.hidden;
        let act: Vec<f64> = z
            .iter()
            .zip(&theta[..m])
            .map(|(a, b)| (a + b).max(0.0))
            .collect();
        let w2 = &theta[m..m + self.n_classes * m];
        let b2 = &theta[m + self.n_classes * m..];
        let logits = (0..self.n_classes)
            .map(|c| b2[c] + crate::linalg::dot(&w2[c * m..(c + 1) * m], &act))
            .collect();
        (act, logits)
    }

    /// Cross-entropy for an explicit label, e.g. on held-out data.
    pub fn loss_for_label(&self, z: &[f64], theta: &[f64], label: usize) -> f64 {
        cross_entropy(&self.forward(z, theta).1, label)
    }
}

impl SampleHead for MlpHead {
    fn dim_theta(&self) -> usize {
        self.hidden + self.n_classes * self.hidden + self.n_classes
    }

    fn dim_z(&self) -> usize {
        self.hidden
    }

    fn loss(&self, sample: usize, z: &[f64], theta: &[f64]) -> f64 {
        self.loss_for_label(z, theta, self.labels[sample])
    }

    fn loss_grad(
        &self,
        sample: usize,
        z: &[f64],
        theta: &[f64],
        grad_z: &mut [f64],
        grad_theta: &mut [f64],
    ) -> f64 {
        let m = self.hidden;
        let (act, logits) = self.forward(z, theta);
        let mut dlogits = vec![0.0; self.n_classes];
        let loss = softmax_cross_entropy(&logits, self.labels[sample], &mut dlogits);
        let mut dact = vec![0.0; m];
        for (c, dc) in dlogits.iter().enumerate() {
            let row = m + c * m;
            crate::linalg::axpy(&mut grad_theta[row..row + m], *dc, &act);
            crate::linalg::axpy(&mut dact, *dc, &theta[row..row + m]);
            grad_theta[m + self.n_classes * m + c] += dc;
        }
        for h in 0..m {
            if act[h] > 0.0 {
                grad_theta[h] += dact[h];
                grad_z[h] += dact[h];
            }
        }
        loss
    }

    fn classify(&self, z: &[f64], theta: &[f64]) -> Option<usize> {
        Some(argmax(&self.forward(z, theta).1))
    }

    fn init_theta(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let m = self.hidden;
        let a1 = 1.0 / (self.dim_z() as f64).sqrt().max(1.0);
        let a2 = 1.0 / (m as f64).sqrt();
        let mut theta = Vec::with_capacity(self.dim_theta());
        theta.extend((0..m).map(|_| rng.gen_range(-a1..a1)));
        theta.extend((0..self.dim_theta() - m).map(|_| rng.gen_range(-a2..a2)));
        theta
    }
}

/// The coupled objective `F(theta, x) = (1/(N S)) sum_i f_i(B_i x, theta)`.
#[derive(Debug, Clone)]
pub struct HybridProblem {
    pub coupling: PatchCoupling,
    pub head: Arc<dyn SampleHead>,
    pub batch_size: usize,
}

impl HybridProblem {
    pub fn new(
        coupling: PatchCoupling,
        head: Arc<dyn SampleHead>,
        batch_size: usize,
    ) -> Result<Self, ProblemError> {
        if head.dim_z() != coupling.dim_z() {
            return Err(ProblemError::DimensionMismatch {
                what: "coupled term",
                expected: coupling.dim_z(),
                got: head.dim_z(),
            });
        }
        let s = coupling.data().n_samples();
        if batch_size == 0 || batch_size > s {
            return Err(ProblemError::BatchTooLarge {
                batch: batch_size,
                available: s,
            });
        }
        Ok(Self {
            coupling,
            head,
            batch_size,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.coupling.assignment().n_agents()
    }

    pub fn n_samples(&self) -> usize {
        self.coupling.data().n_samples()
    }

    pub fn dim_theta(&self) -> usize {
        self.head.dim_theta()
    }

    pub fn dim_x(&self) -> usize {
        self.coupling.dim_x()
    }

    pub fn dim_z(&self) -> usize {
        self.coupling.dim_z()
    }

    /// Common starting point `(theta, x)`; `x` is uniform in `+-1/sqrt(d)`.
    pub fn init_params(&self, rng: &mut dyn RngCore) -> (Vec<f64>, Vec<f64>) {
        let a = 1.0 / (self.coupling.data().n_features() as f64).sqrt();
        let x = (0..self.dim_x()).map(|_| rng.gen_range(-a..a)).collect();
        let theta = self.head.init_theta(rng);
        (theta, x)
    }

    /// `z_{n,i} = N B_{n,i} x` for every sample, `S x M` row-major.
    pub fn init_tracking(&self, agent: usize, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.n_samples() * self.dim_z()];
        self.coupling
            .add_to_tracking(agent, x, self.n_agents() as f64, &mut z);
        z
    }

    /// Uniform batch over all `S` samples.
    pub fn sample_batch<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Batch, ProblemError> {
        let all: Vec<usize> = (0..self.n_samples()).collect();
        sample_batch(&all, self.batch_size, rng)
    }

    /// `g_theta = (1/(N|I|)) sum grad_theta f(z_{n,i}, theta)` and
    /// `g_x = (1/|I|) sum B_{n,i}^T grad_z f(z_{n,i}, theta)`.
    pub fn hybrid_gradients(
        &self,
        agent: usize,
        theta: &[f64],
        z: &[f64],
        batch: &Batch,
    ) -> Result<(Vec<f64>, Vec<f64>), ProblemError> {
        let m = self.dim_z();
        self.check("theta", self.dim_theta(), theta.len())?;
        self.check("tracking block", self.n_samples() * m, z.len())?;
        if batch.indices.is_empty() {
            return Err(ProblemError::EmptyIndexSet);
        }
        let mut g_theta = vec![0.0; self.dim_theta()];
        let mut g_x = vec![0.0; self.dim_x()];
        let mut g_z = vec![0.0; m];
        for &i in &batch.indices {
            g_z.iter_mut().for_each(|g| *g = 0.0);
            self.head
                .loss_grad(i, &z[i * m..(i + 1) * m], theta, &mut g_z, &mut g_theta);
            self.coupling
                .apply_local_transpose(agent, i, &g_z, &mut g_x);
        }
        let b = batch.indices.len() as f64;
        crate::linalg::scale(&mut g_theta, 1.0 / (self.n_agents() as f64 * b));
        crate::linalg::scale(&mut g_x, 1.0 / b);
        Ok((g_theta, g_x))
    }

    /// `F(theta, x)`.
    pub fn objective(&self, theta: &[f64], x: &[f64]) -> f64 {
        let total: f64 = (0..self.n_samples())
            .map(|i| self.head.loss(i, &self.coupling.apply_full(i, x), theta))
            .sum();
        total / (self.n_agents() * self.n_samples()) as f64
    }

    /// `(F, grad_theta F, grad_x F)`.
    pub fn full_gradients(&self, theta: &[f64], x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let mut g_theta = vec![0.0; self.dim_theta()];
        let mut g_x = vec![0.0; self.dim_x()];
        let mut g_z = vec![0.0; self.dim_z()];
        let mut total = 0.0;
        for i in 0..self.n_samples() {
            g_z.iter_mut().for_each(|g| *g = 0.0);
            let z = self.coupling.apply_full(i, x);
            total += self.head.loss_grad(i, &z, theta, &mut g_z, &mut g_theta);
            self.coupling.apply_full_transpose(i, &g_z, &mut g_x);
        }
        let inv = 1.0 / (self.n_agents() * self.n_samples()) as f64;
        crate::linalg::scale(&mut g_theta, inv);
        crate::linalg::scale(&mut g_x, inv);
        (total * inv, g_theta, g_x)
    }

    /// Top-1 accuracy of `(theta, x)` on a labelled dataset.
    pub fn accuracy(&self, data: &Dataset, theta: &[f64], x: &[f64]) -> Result<f64, ProblemError> {
        if data.n_samples() == 0 {
            return Err(ProblemError::EmptyIndexSet);
        }
        let mut z = vec![0.0; self.dim_z()];
        let mut correct = 0usize;
        for i in 0..data.n_samples() {
            z.iter_mut().for_each(|v| *v = 0.0);
            self.coupling.apply_on(data.features(i), x, &mut z);
            let pred = self
                .head
                .classify(&z, theta)
                .ok_or(ProblemError::NotAClassifier)?;
            correct += usize::from(pred == data.label(i));
        }
        Ok(correct as f64 / data.n_samples() as f64)
    }

    fn check(&self, what: &'static str, expected: usize, got: usize) -> Result<(), ProblemError> {
        if expected != got {
            return Err(ProblemError::DimensionMismatch {
                what,
                expected,
                got,
            });
        }
        Ok(())
    }
}

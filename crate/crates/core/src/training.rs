//! Adversarial training: loss terms, the alternating critic/generator loop,
//! and test-time prediction.
//!
//! The discriminator objective sums, over clusters, the Wasserstein
//! adversarial term, the domain-classification term and the gradient
//! penalty. The generator objective sums the generator Wasserstein term, the
//! topology loss (local centrality + global MAE), the source-reconstruction
//! loss, and the information-maximization term.
//!
//! The gradient-penalty norm uses a first-order surrogate: per interpolated
//! row, `|D(x + h u) - D(x - h u)| / 2h` maximized over a fixed set of
//! random unit directions. Only the two critic evaluations carry gradients,
//! so no second-order differentiation is needed.

use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::centrality::{centrality_matrix, differentiable_cc, differentiable_ec, Metric, EC_UNROLL_STEPS};
use crate::error::{contract, validation, Error, Result};
use crate::gcn::{normalize_adjacency, Encoder, Generator, ModelSet, ParamMode};
use crate::population::MultiDomainPopulation;
use crate::similarity::{cluster_source_embeddings, learn_similarity, ClusterAssignment, KernelBank, SimilarityMatrix};
use crate::tensor::{AdamState, NodeId, ParamStore, Tape, Tensor};

/// Loss-term weights. `sigma` (the gradient-penalty target norm) defaults to
/// the number of target domains when unset.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub lambda_gdc: f64,
    pub lambda_gp: f64,
    pub lambda_top: f64,
    pub lambda_rec: f64,
    pub lambda_inf: f64,
    pub sigma: Option<f64>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_gdc: 1.0,
            lambda_gp: 0.1,
            lambda_top: 0.1,
            lambda_rec: 0.01,
            lambda_inf: 1.0,
            sigma: None,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_gdc,
            self.lambda_gp,
            self.lambda_top,
            self.lambda_rec,
            self.lambda_inf,
            self.sigma.unwrap_or(0.0),
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(validation("loss weights must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn sigma_for(&self, m: usize) -> f64 {
        self.sigma.unwrap_or(m as f64)
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct TrainingConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub n_critic: usize,
    pub c: usize,
    pub centrality_metric: Metric,
    pub seed: u64,
    /// Write a checkpoint every this many iterations (0 = only at the end).
    pub checkpoint_interval: u64,
    /// Compute the local topology loss on every batch subject instead of the
    /// default per-cluster subsample of at most 16.
    pub full_centrality: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            iterations: 1000,
            batch_size: 70,
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            n_critic: 5,
            c: 2,
            centrality_metric: Metric::Eigenvector,
            seed: 0,
            checkpoint_interval: 0,
            full_centrality: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.n_critic == 0 || self.c == 0 {
            return Err(validation("batch_size, n_critic and c must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.beta1 >= 0.0 && self.beta1 < 1.0)
            || !(self.beta2 >= 0.0 && self.beta2 < 1.0)
        {
            return Err(validation("bad optimizer hyperparameters"));
        }
        Ok(())
    }
}

const LOC_SUBSAMPLE: usize = 16;
const GP_PROBE_STEP: f64 = 1e-3;
const CLASS_PROB_CLAMP: f64 = 1e-7;

/// One cluster's batch: feature values and normalized adjacencies.
#[derive(Debug, Clone)]
pub struct ClusterBatch {
    pub source_feats: Tensor,
    pub source_anorm: Tensor,
    pub real_targets: Vec<Tensor>,
    pub target_anorms: Vec<Tensor>,
    /// Batch-row indices the local topology loss is evaluated on.
    pub loc_subsample: Vec<usize>,
}

impl ClusterBatch {
    pub fn n(&self) -> usize {
        self.source_feats.rows()
    }
}

/// Per-batch randomness of the gradient penalty: one interpolation
/// coefficient per stacked row, plus the probe-direction policy.
///
/// By default the probe direction per row is the critic's own input
/// gradient, estimated values-only on a scratch tape; probing along random
/// directions underestimates the norm by roughly `sqrt(f)` and lets the
/// critic grow unchecked. Fixed directions remain available for analytic
/// tests.
#[derive(Debug, Clone)]
pub struct GradientProbe {
    /// `alphas[i][row]` for target domain `i`.
    pub alphas: Vec<Vec<f64>>,
    /// `None` probes along the critic's input-gradient direction.
    pub directions: Option<Vec<Vec<f64>>>,
}

impl GradientProbe {
    pub fn sample(rng: &mut ChaCha8Rng, m: usize, rows: usize) -> GradientProbe {
        let alphas = (0..m)
            .map(|_| (0..rows).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        GradientProbe {
            alphas,
            directions: None,
        }
    }

    /// Probe along the given unit direction only (test hook for analytic
    /// critics with a known gradient direction).
    pub fn aligned(direction: Vec<f64>, m: usize, rows: usize, alpha: f64) -> GradientProbe {
        GradientProbe {
            alphas: vec![vec![alpha; rows]; m],
            directions: Some(vec![direction]),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Per-row unit directions of the critic's input gradient at `point`,
/// scaled by the probe step. Values only: a scratch tape computes
/// `d sum(critic) / d input` with frozen parameters; the result enters the
/// main tape as a constant offset.
fn critic_gradient_directions(
    tape: &Tape,
    model: &ModelSet,
    store: &ParamStore,
    point: NodeId,
    a_norm: NodeId,
) -> Result<Tensor> {
    let values = tape.value(point).clone();
    let (rows, f) = values.shape();
    let mut scratch = Tape::new();
    let leaf = scratch.leaf(values);
    let a_const = scratch.constant(tape.value(a_norm).clone());
    let (critic, _) =
        model
            .discriminator
            .discriminate(&mut scratch, store, ParamMode::Frozen, leaf, a_const)?;
    let total = scratch.sum(critic)?;
    scratch.backward(total)?;
    let grad = scratch
        .grad(leaf)
        .ok_or_else(|| contract("critic gradient probe: no input gradient"))?;
    let mut offsets = vec![0.0; rows * f];
    for row in 0..rows {
        let slice = &grad[row * f..(row + 1) * f];
        let norm = slice.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for (o, &g) in offsets[row * f..(row + 1) * f].iter_mut().zip(slice) {
                *o = g / norm * GP_PROBE_STEP;
            }
        }
    }
    Tensor::from_vec(rows, f, offsets)
}

fn gather_rows(tape: &mut Tape, node: NodeId, idx: &[usize]) -> Result<NodeId> {
    let rows = idx
        .iter()
        .map(|&i| tape.row(node, i))
        .collect::<Result<Vec<_>>>()?;
    tape.vstack(&rows)
}

/// Elementwise maximum built from the hinge: `max(a, b) = a + relu(b - a)`.
fn elementwise_max(tape: &mut Tape, a: NodeId, b: NodeId) -> Result<NodeId> {
    let diff = tape.sub(b, a)?;
    let hinge = tape.relu(diff)?;
    tape.add(a, hinge)
}

/// Wasserstein adversarial loss of one cluster:
/// `-E[D(F_S)] + (1/m) sum_i E[D(fake_i)]`.
pub fn adversarial_loss(
    tape: &mut Tape,
    model: &ModelSet,
    store: &ParamStore,
    disc_mode: ParamMode,
    source_feats: NodeId,
    source_anorm: NodeId,
    fakes: &[NodeId],
    target_anorms: &[NodeId],
) -> Result<NodeId> {
    if fakes.is_empty() || tape.value(source_feats).rows() == 0 {
        return Err(contract("adversarial loss needs a non-empty cluster batch"));
    }
    let (critic_real, _) =
        model
            .discriminator
            .discriminate(tape, store, disc_mode, source_feats, source_anorm)?;
    let mean_real = tape.mean(critic_real)?;
    let mut total = tape.scale(mean_real, -1.0)?;
    let inv_m = 1.0 / fakes.len() as f64;
    for (fake, a_norm) in fakes.iter().zip(target_anorms) {
        let (critic_fake, _) = model
            .discriminator
            .discriminate(tape, store, disc_mode, *fake, *a_norm)?;
        let mean_fake = tape.mean(critic_fake)?;
        let scaled = tape.scale(mean_fake, inv_m)?;
        total = tape.add(total, scaled)?;
    }
    Ok(total)
}

/// Domain-classification loss: per domain, the MSE of the classifier head
/// over the pooled fake (label 0) and real (label 1) batch, summed over
/// domains.
pub fn domain_classification_loss(
    tape: &mut Tape,
    model: &ModelSet,
    store: &ParamStore,
    disc_mode: ParamMode,
    fakes: &[NodeId],
    reals: &[NodeId],
    target_anorms: &[NodeId],
) -> Result<NodeId> {
    let mut total: Option<NodeId> = None;
    for ((fake, real), a_norm) in fakes.iter().zip(reals).zip(target_anorms) {
        let (_, prob_fake) = model
            .discriminator
            .discriminate(tape, store, disc_mode, *fake, *a_norm)?;
        let (_, prob_real) = model
            .discriminator
            .discriminate(tape, store, disc_mode, *real, *a_norm)?;
        let pooled = tape.vstack(&[prob_fake, prob_real])?;
        let n_fake = tape.value(prob_fake).rows();
        let n_real = tape.value(prob_real).rows();
        let mut labels = vec![0.0; n_fake];
        labels.extend(std::iter::repeat(1.0).take(n_real));
        let labels = tape.constant(Tensor::from_vec(n_fake + n_real, 1, labels)?);
        let residual = tape.sub(pooled, labels)?;
        let squared = tape.square(residual)?;
        let mse = tape.mean(squared)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, mse)?,
            None => mse,
        });
    }
    total.ok_or_else(|| contract("domain classification loss needs at least one domain"))
}

/// Gradient-penalty surrogate of one cluster.
///
/// Interpolates each fake batch against the source batch with one alpha per
/// row, estimates the critic's input-gradient norm by central differences
/// along the probe directions (taking the per-row maximum), averages over
/// the stacked rows, and applies the squared hinge at `sigma`.
#[allow(clippy::too_many_arguments)]
pub fn gradient_penalty(
    tape: &mut Tape,
    model: &ModelSet,
    store: &ParamStore,
    disc_mode: ParamMode,
    source_feats: NodeId,
    fakes: &[NodeId],
    target_anorms: &[NodeId],
    sigma: f64,
    probe: &GradientProbe,
) -> Result<NodeId> {
    let (rows, f) = tape.value(source_feats).shape();
    let mut norm_estimates = Vec::with_capacity(fakes.len());
    for (i, (fake, a_norm)) in fakes.iter().zip(target_anorms).enumerate() {
        // One alpha per subject row, broadcast across features.
        let alpha_col = &probe.alphas[i];
        let mut alpha_data = Vec::with_capacity(rows * f);
        let mut one_minus = Vec::with_capacity(rows * f);
        for &a in alpha_col.iter().take(rows) {
            alpha_data.extend(std::iter::repeat(a).take(f));
            one_minus.extend(std::iter::repeat(1.0 - a).take(f));
        }
        let alpha_node = tape.constant(Tensor::from_vec(rows, f, alpha_data)?);
        let one_minus_node = tape.constant(Tensor::from_vec(rows, f, one_minus)?);
        let from_source = tape.mul(alpha_node, source_feats)?;
        let from_fake = tape.mul(one_minus_node, *fake)?;
        let interp = tape.add(from_source, from_fake)?;

        // Offset matrices with one unit direction per row.
        let offsets: Vec<Tensor> = match &probe.directions {
            Some(fixed) => fixed
                .iter()
                .map(|u| {
                    let mut offset = Vec::with_capacity(rows * f);
                    for _ in 0..rows {
                        offset.extend(u.iter().map(|v| v * GP_PROBE_STEP));
                    }
                    Tensor::from_vec(rows, f, offset)
                })
                .collect::<Result<_>>()?,
            None => vec![critic_gradient_directions(
                tape, model, store, interp, *a_norm,
            )?],
        };

        let mut best: Option<NodeId> = None;
        for offset in offsets {
            let offset_node = tape.constant(offset);
            let plus = tape.add(interp, offset_node)?;
            let minus = tape.sub(interp, offset_node)?;
            let (critic_plus, _) =
                model
                    .discriminator
                    .discriminate(tape, store, disc_mode, plus, *a_norm)?;
            let (critic_minus, _) =
                model
                    .discriminator
                    .discriminate(tape, store, disc_mode, minus, *a_norm)?;
            let diff = tape.sub(critic_plus, critic_minus)?;
            let magnitude = tape.abs(diff)?;
            let slope = tape.scale(magnitude, 1.0 / (2.0 * GP_PROBE_STEP))?;
            best = Some(match best {
                Some(acc) => elementwise_max(tape, acc, slope)?,
                None => slope,
            });
        }
        norm_estimates.push(best.expect("at least one probe direction"));
    }
    let stacked = tape.vstack(&norm_estimates)?;
    let mean_norm = tape.mean(stacked)?;
    let excess = tape.add_scalar(mean_norm, -sigma)?;
    let hinged = tape.max_with_zero(excess)?;
    tape.square(hinged)
}

/// Local topology loss: per domain, the MAE between real and generated
/// centrality matrices over the given rows. Closeness and eigenvector flow
/// gradients; betweenness is forward-only (piecewise constant).
pub fn local_topology_loss(
    tape: &mut Tape,
    metric: Metric,
    real_targets: &[Tensor],
    fake_rows: &[NodeId],
    r: usize,
) -> Result<NodeId> {
    let mut total: Option<NodeId> = None;
    for (real, fake) in real_targets.iter().zip(fake_rows) {
        let real_scores = centrality_matrix(real, r, metric)?.scores;
        let real_node = tape.constant(real_scores);
        let k = tape.value(*fake).rows();
        let fake_node = match metric {
            Metric::Betweenness => {
                let values = tape.value(*fake).clone();
                let scores = centrality_matrix(&values, r, metric)?.scores;
                tape.constant(scores)
            }
            Metric::Closeness | Metric::Eigenvector => {
                let mut rows = Vec::with_capacity(k);
                for row_idx in 0..k {
                    let row = tape.row(*fake, row_idx)?;
                    let scores = match metric {
                        Metric::Closeness => differentiable_cc(tape, row, r)?,
                        Metric::Eigenvector => {
                            differentiable_ec(tape, row, r, EC_UNROLL_STEPS)?
                        }
                        Metric::Betweenness => unreachable!(),
                    };
                    rows.push(scores);
                }
                tape.vstack(&rows)?
            }
        };
        let residual = tape.sub(real_node, fake_node)?;
        let magnitude = tape.abs(residual)?;
        let mae = tape.mean(magnitude)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, mae)?,
            None => mae,
        });
    }
    total.ok_or_else(|| contract("local topology loss needs at least one domain"))
}

/// Global topology loss: per domain, the elementwise MAE between real and
/// generated feature matrices, summed over domains.
pub fn global_topology_loss(
    tape: &mut Tape,
    reals: &[NodeId],
    fakes: &[NodeId],
) -> Result<NodeId> {
    let mut total: Option<NodeId> = None;
    for (real, fake) in reals.iter().zip(fakes) {
        let residual = tape.sub(*real, *fake)?;
        let magnitude = tape.abs(residual)?;
        let mae = tape.mean(magnitude)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, mae)?,
            None => mae,
        });
    }
    total.ok_or_else(|| contract("global topology loss needs at least one domain"))
}

/// Source-reconstruction loss of one cluster: each generated target batch is
/// re-encoded (with the source similarity) and decoded by the cluster's
/// source decoder; the loss is the centrality MAE plus the feature MAE
/// against the real source batch, summed over domains.
#[allow(clippy::too_many_arguments)]
pub fn reconstruction_loss(
    tape: &mut Tape,
    encoder: &Encoder,
    decoder: &Generator,
    store: &ParamStore,
    mode: ParamMode,
    fakes: &[NodeId],
    source_feats: &Tensor,
    source_anorm: NodeId,
    metric: Metric,
    r: usize,
    subsample: &[usize],
) -> Result<NodeId> {
    let source_node = tape.constant(source_feats.clone());
    let source_sub = source_feats.restrict_rows(subsample);
    let mut total: Option<NodeId> = None;
    for fake in fakes {
        let re_embedded = encoder.encode(tape, store, mode, *fake, source_anorm)?;
        let reconstructed = decoder.generate(tape, store, mode, re_embedded, source_anorm)?;

        let rec_rows = gather_rows(tape, reconstructed, subsample)?;
        let local = local_topology_loss(
            tape,
            metric,
            std::slice::from_ref(&source_sub),
            &[rec_rows],
            r,
        )?;
        let global = global_topology_loss(tape, &[source_node], &[reconstructed])?;
        let term = tape.add(local, global)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    total.ok_or_else(|| contract("reconstruction loss needs at least one domain"))
}

/// Information-maximization loss: binary cross-entropy of the classifier
/// head against the all-ones label on each fake batch, summed over domains.
pub fn infomax_loss(
    tape: &mut Tape,
    model: &ModelSet,
    store: &ParamStore,
    disc_mode: ParamMode,
    fakes: &[NodeId],
    target_anorms: &[NodeId],
) -> Result<NodeId> {
    let mut total: Option<NodeId> = None;
    for (fake, a_norm) in fakes.iter().zip(target_anorms) {
        let (_, prob) = model
            .discriminator
            .discriminate(tape, store, disc_mode, *fake, *a_norm)?;
        let clamped = tape.clamp(prob, CLASS_PROB_CLAMP, 1.0 - CLASS_PROB_CLAMP)?;
        let log_prob = tape.ln(clamped)?;
        let mean = tape.mean(log_prob)?;
        let bce = tape.scale(mean, -1.0)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, bce)?,
            None => bce,
        });
    }
    total.ok_or_else(|| contract("infomax loss needs at least one domain"))
}

/// Weighted discriminator-loss components of one iteration (values as
/// logged: each component already carries its lambda).
#[derive(Debug, Clone, Copy, Default)]
pub struct DiscComponents {
    pub total: f64,
    pub adv: f64,
    pub gdc: f64,
    pub gp: f64,
}

/// Weighted generator-loss components of one iteration.
#[derive(Debug, Clone, Copy, Default)]
pub struct GenComponents {
    pub total: f64,
    pub wass: f64,
    pub top: f64,
    pub loc: f64,
    pub glb: f64,
    pub rec: f64,
    pub inf: f64,
}

fn place_batch(
    tape: &mut Tape,
    batch: &ClusterBatch,
) -> Result<(NodeId, NodeId, Vec<NodeId>, Vec<NodeId>)> {
    let source = tape.constant(batch.source_feats.clone());
    let source_anorm = tape.constant(batch.source_anorm.clone());
    let reals = batch
        .real_targets
        .iter()
        .map(|t| Ok(tape.constant(t.clone())))
        .collect::<Result<Vec<_>>>()?;
    let anorms = batch
        .target_anorms
        .iter()
        .map(|t| Ok(tape.constant(t.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok((source, source_anorm, reals, anorms))
}

fn generate_fakes(
    tape: &mut Tape,
    model: &ModelSet,
    store: &ParamStore,
    mode: ParamMode,
    cluster: usize,
    source: NodeId,
    source_anorm: NodeId,
    target_anorms: &[NodeId],
) -> Result<Vec<NodeId>> {
    let z = model
        .encoder
        .encode(tape, store, mode, source, source_anorm)?;
    model.generators[cluster]
        .iter()
        .zip(target_anorms)
        .map(|(g, a_norm)| g.generate(tape, store, mode, z, *a_norm))
        .collect()
}

/// Discriminator objective over all cluster batches. Generator-side
/// parameters are frozen; the scalar components are returned for logging.
pub fn discriminator_objective(
    tape: &mut Tape,
    model: &ModelSet,
    store: &ParamStore,
    batches: &[ClusterBatch],
    weights: &LossWeights,
    probes: &[GradientProbe],
) -> Result<(NodeId, DiscComponents)> {
    if batches.is_empty() {
        return Err(contract("discriminator objective needs at least one cluster batch"));
    }
    let sigma = weights.sigma_for(model.m);
    let mut components = DiscComponents::default();
    let mut total: Option<NodeId> = None;
    for (j, batch) in batches.iter().enumerate() {
        if batch.n() == 0 {
            return Err(contract(format!("cluster {j} has an empty batch")));
        }
        let (source, source_anorm, reals, anorms) = place_batch(tape, batch)?;
        let fakes = generate_fakes(
            tape,
            model,
            store,
            ParamMode::Frozen,
            j,
            source,
            source_anorm,
            &anorms,
        )?;
        let adv = adversarial_loss(
            tape,
            model,
            store,
            ParamMode::Trainable,
            source,
            source_anorm,
            &fakes,
            &anorms,
        )?;
        let gdc = domain_classification_loss(
            tape,
            model,
            store,
            ParamMode::Trainable,
            &fakes,
            &reals,
            &anorms,
        )?;
        let gdc_weighted = tape.scale(gdc, weights.lambda_gdc)?;
        let gp = gradient_penalty(
            tape,
            model,
            store,
            ParamMode::Trainable,
            source,
            &fakes,
            &anorms,
            sigma,
            &probes[j],
        )?;
        let gp_weighted = tape.scale(gp, weights.lambda_gp)?;

        components.adv += tape.value(adv).scalar()?;
        components.gdc += tape.value(gdc_weighted).scalar()?;
        components.gp += tape.value(gp_weighted).scalar()?;

        let partial = tape.add(adv, gdc_weighted)?;
        let cluster_total = tape.add(partial, gp_weighted)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, cluster_total)?,
            None => cluster_total,
        });
    }
    let total = total.expect("non-empty batches");
    components.total = tape.value(total).scalar()?;
    Ok((total, components))
}

/// Generator objective over all cluster batches. Discriminator parameters
/// are frozen; encoder, generators and source decoders are trainable.
pub fn generator_objective(
    tape: &mut Tape,
    model: &ModelSet,
    store: &ParamStore,
    batches: &[ClusterBatch],
    weights: &LossWeights,
    metric: Metric,
    r: usize,
) -> Result<(NodeId, GenComponents)> {
    if batches.is_empty() {
        return Err(contract("generator objective needs at least one cluster batch"));
    }
    let mut components = GenComponents::default();
    let mut total: Option<NodeId> = None;
    for (j, batch) in batches.iter().enumerate() {
        if batch.n() == 0 {
            return Err(contract(format!("cluster {j} has an empty batch")));
        }
        let (source, source_anorm, reals, anorms) = place_batch(tape, batch)?;
        let fakes = generate_fakes(
            tape,
            model,
            store,
            ParamMode::Trainable,
            j,
            source,
            source_anorm,
            &anorms,
        )?;

        // Wasserstein term: -(1/m) sum_i E[D(fake_i)], D frozen.
        let mut wass: Option<NodeId> = None;
        for (fake, a_norm) in fakes.iter().zip(&anorms) {
            let (critic, _) = model
                .discriminator
                .discriminate(tape, store, ParamMode::Frozen, *fake, *a_norm)?;
            let mean = tape.mean(critic)?;
            wass = Some(match wass {
                Some(acc) => tape.add(acc, mean)?,
                None => mean,
            });
        }
        let wass = tape.scale(wass.expect("m >= 1"), -1.0 / model.m as f64)?;
        let mut cluster_total = wass;
        components.wass += tape.value(wass).scalar()?;

        if weights.lambda_top > 0.0 {
            let real_sub: Vec<Tensor> = batch
                .real_targets
                .iter()
                .map(|t| t.restrict_rows(&batch.loc_subsample))
                .collect();
            let fake_sub = fakes
                .iter()
                .map(|&fake| gather_rows(tape, fake, &batch.loc_subsample))
                .collect::<Result<Vec<_>>>()?;
            let loc = local_topology_loss(tape, metric, &real_sub, &fake_sub, r)?;
            let glb = global_topology_loss(tape, &reals, &fakes)?;
            let loc_weighted = tape.scale(loc, weights.lambda_top)?;
            let glb_weighted = tape.scale(glb, weights.lambda_top)?;
            let top = tape.add(loc_weighted, glb_weighted)?;
            components.loc += tape.value(loc_weighted).scalar()?;
            components.glb += tape.value(glb_weighted).scalar()?;
            components.top += tape.value(top).scalar()?;
            cluster_total = tape.add(cluster_total, top)?;
        }

        if weights.lambda_rec > 0.0 {
            let rec = reconstruction_loss(
                tape,
                &model.encoder,
                &model.source_decoders[j],
                store,
                ParamMode::Trainable,
                &fakes,
                &batch.source_feats,
                source_anorm,
                metric,
                r,
                &batch.loc_subsample,
            )?;
            let rec_weighted = tape.scale(rec, weights.lambda_rec)?;
            components.rec += tape.value(rec_weighted).scalar()?;
            cluster_total = tape.add(cluster_total, rec_weighted)?;
        }

        if weights.lambda_inf > 0.0 {
            let inf = infomax_loss(tape, model, store, ParamMode::Frozen, &fakes, &anorms)?;
            let inf_weighted = tape.scale(inf, weights.lambda_inf)?;
            components.inf += tape.value(inf_weighted).scalar()?;
            cluster_total = tape.add(cluster_total, inf_weighted)?;
        }

        total = Some(match total {
            Some(acc) => tape.add(acc, cluster_total)?,
            None => cluster_total,
        });
    }
    let total = total.expect("non-empty batches");
    components.total = tape.value(total).scalar()?;
    Ok((total, components))
}

/// One row of the per-iteration loss log (weighted component values, summed
/// over clusters, so totals decompose exactly into their columns).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub iteration: u64,
    pub l_d: f64,
    pub l_adv: f64,
    pub l_gdc: f64,
    pub l_gp: f64,
    pub l_g: f64,
    pub l_wass_g: f64,
    pub l_top: f64,
    pub l_loc: f64,
    pub l_glb: f64,
    pub l_rec: f64,
    pub l_inf: f64,
}

pub const LOSS_LOG_HEADER: &str =
    "iteration,L_D,L_adv,L_gdc,L_gp,L_G,L_wass_G,L_top,L_loc,L_glb,L_rec,L_inf";

pub fn write_loss_log(rows: &[LossRow], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{LOSS_LOG_HEADER}")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            row.iteration,
            row.l_d,
            row.l_adv,
            row.l_gdc,
            row.l_gp,
            row.l_g,
            row.l_wass_g,
            row.l_top,
            row.l_loc,
            row.l_glb,
            row.l_rec,
            row.l_inf
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_loss_log(path: &Path) -> Result<Vec<LossRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| validation("empty loss log"))?;
    if header != LOSS_LOG_HEADER {
        return Err(validation(format!("unexpected loss log header '{header}'")));
    }
    let mut rows = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(validation(format!("loss log line {} malformed", no + 2)));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| validation(format!("bad number '{s}' in loss log")))
        };
        rows.push(LossRow {
            iteration: fields[0]
                .parse()
                .map_err(|_| validation("bad iteration in loss log"))?,
            l_d: num(fields[1])?,
            l_adv: num(fields[2])?,
            l_gdc: num(fields[3])?,
            l_gp: num(fields[4])?,
            l_g: num(fields[5])?,
            l_wass_g: num(fields[6])?,
            l_top: num(fields[7])?,
            l_loc: num(fields[8])?,
            l_glb: num(fields[9])?,
            l_rec: num(fields[10])?,
            l_inf: num(fields[11])?,
        });
    }
    Ok(rows)
}

/// Everything the alternating loop builds and updates.
pub struct TrainingState {
    pub store: ParamStore,
    pub model: ModelSet,
    pub adam_disc: AdamState,
    pub adam_gen: AdamState,
    pub iteration: u64,
    pub loss_log: Vec<LossRow>,
    pub clusters: ClusterAssignment,
    pub source_similarity: SimilarityMatrix,
    pub target_similarities: Vec<SimilarityMatrix>,
    pub config: TrainingConfig,
    pub weights: LossWeights,
    pub r: usize,
}

/// Runs setup (similarity learning, embedding clustering) and the
/// alternating adversarial loop. `config.iterations = 0` yields the
/// untrained-but-initialized state.
pub fn train(
    population: &MultiDomainPopulation,
    config: &TrainingConfig,
    weights: &LossWeights,
) -> Result<TrainingState> {
    train_with_observer(population, config, weights, |_| Ok(()))
}

/// [`train`] with a per-iteration observer (the CLI uses it to write
/// interval checkpoints).
pub fn train_with_observer(
    population: &MultiDomainPopulation,
    config: &TrainingConfig,
    weights: &LossWeights,
    mut observer: impl FnMut(&TrainingState) -> Result<()>,
) -> Result<TrainingState> {
    config.validate()?;
    weights.validate()?;
    let n = population.n_subjects();
    let m = population.n_targets();
    let r = population.regions();
    let f = population.feature_len();
    if n < 2 * config.c {
        return Err(validation(format!(
            "training needs at least 2*c = {} subjects, got {n}",
            2 * config.c
        )));
    }

    // Fig-style setup: learn similarities, initialize models, embed, cluster.
    let bank = KernelBank::default_bank();
    let source_similarity = learn_similarity(&population.source().features, &bank, 5)?;
    let target_similarities = population
        .targets()
        .iter()
        .map(|t| learn_similarity(&t.features, &bank, 5))
        .collect::<Result<Vec<_>>>()?;

    let mut store = ParamStore::new();
    let model = ModelSet::new(&mut store, f, m, config.c, config.seed)?;

    let full_anorm = normalize_adjacency(source_similarity.matrix())?;
    let embeddings = {
        let mut tape = Tape::new();
        let feats = tape.constant(population.source().features.clone());
        let a_norm = tape.constant(full_anorm);
        let z = model
            .encoder
            .encode(&mut tape, &store, ParamMode::Frozen, feats, a_norm)?;
        tape.value(z).clone()
    };
    let clusters = cluster_source_embeddings(&embeddings, config.c, config.seed)?;
    let members: Vec<Vec<usize>> = (0..config.c).map(|j| clusters.members(j)).collect();
    if members.iter().any(|m| m.is_empty()) {
        return Err(validation(format!(
            "a cluster came out empty; lower c (currently {})",
            config.c
        )));
    }

    let adam_disc = AdamState::new(
        config.learning_rate,
        config.beta1,
        config.beta2,
        1e-8,
        model.discriminator_side(),
        &store,
    );
    let adam_gen = AdamState::new(
        config.learning_rate,
        config.beta1,
        config.beta2,
        1e-8,
        model.generator_side(),
        &store,
    );

    let mut state = TrainingState {
        store,
        model,
        adam_disc,
        adam_gen,
        iteration: 0,
        loss_log: Vec::new(),
        clusters,
        source_similarity,
        target_similarities,
        config: *config,
        weights: *weights,
        r,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5851_F42D_4C95_7F2D);
    for it in 0..config.iterations {
        let per_cluster = sample_batch_indices(&members, config.batch_size, &mut rng);
        let batches = build_batches(population, &state, &per_cluster, &mut rng)?;

        let mut disc_components = DiscComponents::default();
        for _ in 0..config.n_critic {
            let probes: Vec<GradientProbe> = batches
                .iter()
                .map(|b| GradientProbe::sample(&mut rng, m, b.n()))
                .collect();
            let mut tape = Tape::new();
            let (loss, components) = discriminator_objective(
                &mut tape,
                &state.model,
                &state.store,
                &batches,
                weights,
                &probes,
            )?;
            tape.backward(loss)?;
            tape.flush_grads_into(&mut state.store)?;
            let disc_params = state.model.discriminator_side();
            state.store.ensure_grads(&disc_params);
            state.adam_disc.step(&mut state.store)?;
            state.store.zero_all_grads();
            disc_components = components;
        }

        let gen_components = {
            let mut tape = Tape::new();
            let (loss, components) = generator_objective(
                &mut tape,
                &state.model,
                &state.store,
                &batches,
                weights,
                config.centrality_metric,
                r,
            )?;
            tape.backward(loss)?;
            tape.flush_grads_into(&mut state.store)?;
            let gen_params = state.model.generator_side();
            state.store.ensure_grads(&gen_params);
            state.adam_gen.step(&mut state.store)?;
            state.store.zero_all_grads();
            components
        };

        state.iteration = it + 1;
        state.loss_log.push(LossRow {
            iteration: state.iteration,
            l_d: disc_components.total,
            l_adv: disc_components.adv,
            l_gdc: disc_components.gdc,
            l_gp: disc_components.gp,
            l_g: gen_components.total,
            l_wass_g: gen_components.wass,
            l_top: gen_components.top,
            l_loc: gen_components.loc,
            l_glb: gen_components.glb,
            l_rec: gen_components.rec,
            l_inf: gen_components.inf,
        });
        if !disc_components.total.is_finite() || !gen_components.total.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss at iteration {}",
                state.iteration
            )));
        }
        observer(&state)?;
    }
    Ok(state)
}

/// Stratified batch selection: every cluster keeps at least one subject and
/// quotas follow cluster sizes (largest remainder).
fn sample_batch_indices(
    members: &[Vec<usize>],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let n: usize = members.iter().map(Vec::len).sum();
    let take = batch_size.min(n);
    if take == n {
        return members.to_vec();
    }
    let c = members.len();
    let mut quotas = vec![0usize; c];
    let mut fractions: Vec<(usize, f64)> = Vec::with_capacity(c);
    let mut assigned = 0;
    for (j, m) in members.iter().enumerate() {
        let share = take as f64 * m.len() as f64 / n as f64;
        quotas[j] = (share.floor() as usize).clamp(1, m.len());
        assigned += quotas[j];
        fractions.push((j, share - share.floor()));
    }
    fractions.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut idx = 0;
    while assigned < take {
        let (j, _) = fractions[idx % c];
        if quotas[j] < members[j].len() {
            quotas[j] += 1;
            assigned += 1;
        }
        idx += 1;
    }
    while assigned > take {
        // Over-assignment can only come from the minimum-1 rule.
        if let Some(j) = (0..c).max_by_key(|&j| quotas[j]) {
            if quotas[j] > 1 {
                quotas[j] -= 1;
                assigned -= 1;
                continue;
            }
        }
        break;
    }

    members
        .iter()
        .zip(&quotas)
        .map(|(m, &q)| {
            let mut pool = m.clone();
            for i in (1..pool.len()).rev() {
                let j = rng.gen_range(0..=i);
                pool.swap(i, j);
            }
            let mut chosen: Vec<usize> = pool.into_iter().take(q).collect();
            chosen.sort_unstable();
            chosen
        })
        .collect()
}

fn build_batches(
    population: &MultiDomainPopulation,
    state: &TrainingState,
    per_cluster: &[Vec<usize>],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ClusterBatch>> {
    per_cluster
        .iter()
        .map(|idx| {
            let source_feats = population.source().features.restrict_rows(idx);
            let source_anorm =
                normalize_adjacency(&state.source_similarity.matrix().restrict_square(idx))?;
            let real_targets: Vec<Tensor> = population
                .targets()
                .iter()
                .map(|t| t.features.restrict_rows(idx))
                .collect();
            let target_anorms = state
                .target_similarities
                .iter()
                .map(|s| normalize_adjacency(&s.matrix().restrict_square(idx)))
                .collect::<Result<Vec<_>>>()?;
            let n_batch = idx.len();
            let loc_subsample = if state.config.full_centrality || n_batch <= LOC_SUBSAMPLE {
                (0..n_batch).collect()
            } else {
                let mut pool: Vec<usize> = (0..n_batch).collect();
                for i in (1..pool.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    pool.swap(i, j);
                }
                let mut chosen: Vec<usize> = pool.into_iter().take(LOC_SUBSAMPLE).collect();
                chosen.sort_unstable();
                chosen
            };
            Ok(ClusterBatch {
                source_feats,
                source_anorm,
                real_targets,
                target_anorms,
                loc_subsample,
            })
        })
        .collect()
}

/// Predicts all target views for unseen source features.
///
/// Test subjects have no learned target similarity, so both the encoder and
/// the generators run with a substitute adjacency built from the test
/// subjects' own source features (which are available at prediction time and
/// leak nothing about the targets); a single subject or a degenerate test
/// set falls back to the identity. Each domain's prediction averages the
/// cluster-specific generators.
pub fn predict(state: &TrainingState, test_source: &Tensor) -> Result<Vec<Tensor>> {
    predict_with(&state.model, &state.store, test_source)
}

/// [`predict`] for a model restored from a checkpoint.
pub fn predict_with(model: &ModelSet, store: &ParamStore, test_source: &Tensor) -> Result<Vec<Tensor>> {
    if test_source.cols() != model.f {
        return Err(validation(format!(
            "test features have {} columns, model expects {}",
            test_source.cols(),
            model.f
        )));
    }
    let k = test_source.rows();
    let substitute = substitute_adjacency(test_source)?;
    let mut tape = Tape::new();
    let feats = tape.constant(test_source.clone());
    let a_norm = tape.constant(substitute);
    let z = model
        .encoder
        .encode(&mut tape, store, ParamMode::Frozen, feats, a_norm)?;
    let mut outputs = Vec::with_capacity(model.m);
    for i in 0..model.m {
        let mut sum: Option<Tensor> = None;
        for j in 0..model.c {
            let out = model.generators[j][i].generate(&mut tape, store, ParamMode::Frozen, z, a_norm)?;
            let values = tape.value(out).clone();
            sum = Some(match sum {
                Some(acc) => acc.zip_map(&values, |a, b| a + b)?,
                None => values,
            });
        }
        outputs.push(sum.expect("c >= 1").scale(1.0 / model.c as f64));
    }
    let _ = k;
    Ok(outputs)
}

/// Normalized adjacency for subjects whose target graphs are unknown:
/// MKML over their source features when that is well defined, identity
/// otherwise.
fn substitute_adjacency(test_source: &Tensor) -> Result<Tensor> {
    let k = test_source.rows();
    if k < 2 {
        return Ok(Tensor::identity(k));
    }
    match learn_similarity(test_source, &KernelBank::default_bank(), 5) {
        Ok(sim) => normalize_adjacency(sim.matrix()),
        Err(Error::Degenerate(_)) => Ok(Tensor::identity(k)),
        Err(err) => Err(err),
    }
}

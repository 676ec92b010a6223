//! GCN building blocks: the encoder, cluster-specific generators, source
//! decoders, and the shared critic/classifier discriminator.
//!
//! Every layer computes `activation(A_norm . X . W)` with no bias, where
//! `A_norm` is the self-looped, degree-normalized similarity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{validation, Result};
use crate::tensor::{NodeId, ParamId, ParamStore, Tape, Tensor};

pub const HIDDEN_DIM: usize = 32;
pub const EMBED_DIM: usize = 16;

/// Whether a forward pass should track gradients for a model's parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamMode {
    Trainable,
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
}

/// `D^{-1/2} (S + I) D^{-1/2}` with `D` the row sums of `S + I`.
pub fn normalize_adjacency(similarity: &Tensor) -> Result<Tensor> {
    let n = similarity.rows();
    if similarity.cols() != n {
        return Err(validation("adjacency normalization needs a square matrix"));
    }
    if !similarity.is_finite() {
        return Err(validation("similarity contains non-finite entries"));
    }
    let mut inv_sqrt = vec![0.0; n];
    for i in 0..n {
        let mut deg = 1.0; // self-loop
        for j in 0..n {
            deg += similarity.get(i, j);
        }
        if deg <= 0.0 {
            return Err(validation(format!("row {i} of S + I has non-positive sum")));
        }
        inv_sqrt[i] = 1.0 / deg.sqrt();
    }
    let mut out = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let s = similarity.get(i, j) + if i == j { 1.0 } else { 0.0 };
            out.set(i, j, inv_sqrt[i] * s * inv_sqrt[j]);
        }
    }
    Ok(out)
}

/// One graph-convolution layer: weights plus activation.
#[derive(Debug, Clone)]
pub struct GcnLayer {
    pub weight: ParamId,
    pub activation: Activation,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl GcnLayer {
    fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: String,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Self {
        let weight = store.register(name, glorot(rng, in_dim, out_dim));
        GcnLayer {
            weight,
            activation,
            in_dim,
            out_dim,
        }
    }

    /// `activation(A_norm . X . W)`, recorded on the tape.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        mode: ParamMode,
        a_norm: NodeId,
        x: NodeId,
    ) -> Result<NodeId> {
        let w = match mode {
            ParamMode::Trainable => tape.place_param(store, self.weight)?,
            ParamMode::Frozen => tape.place_frozen(store, self.weight)?,
        };
        let xw = tape.matmul(x, w)?;
        let axw = tape.matmul(a_norm, xw)?;
        match self.activation {
            Activation::Relu => tape.relu(axw),
            Activation::Linear => Ok(axw),
            Activation::Sigmoid => tape.sigmoid(axw),
        }
    }
}

fn glorot(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize) -> Tensor {
    let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
    let data = (0..in_dim * out_dim)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::from_vec(in_dim, out_dim, data).expect("glorot init is finite")
}

/// Two-layer GCN encoder: features to 16-wide embeddings.
#[derive(Debug, Clone)]
pub struct Encoder {
    layers: [GcnLayer; 2],
}

impl Encoder {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, f: usize) -> Self {
        Encoder {
            layers: [
                GcnLayer::new(store, rng, "encoder/layer0/W".into(), f, HIDDEN_DIM, Activation::Relu),
                GcnLayer::new(
                    store,
                    rng,
                    "encoder/layer1/W".into(),
                    HIDDEN_DIM,
                    EMBED_DIM,
                    Activation::Linear,
                ),
            ],
        }
    }

    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        mode: ParamMode,
        features: NodeId,
        a_norm: NodeId,
    ) -> Result<NodeId> {
        let h = self.layers[0].forward(tape, store, mode, a_norm, features)?;
        self.layers[1].forward(tape, store, mode, a_norm, h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().map(|l| l.weight).collect()
    }
}

/// Three-layer GCN decoder from embeddings back to feature space, sigmoid
/// output in (0, 1). Used both as a cluster-specific target generator and as
/// a source-reconstruction decoder.
#[derive(Debug, Clone)]
pub struct Generator {
    pub cluster: usize,
    layers: [GcnLayer; 3],
}

impl Generator {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, cluster: usize, f: usize) -> Self {
        Generator {
            cluster,
            layers: [
                GcnLayer::new(store, rng, format!("{prefix}/layer0/W"), EMBED_DIM, EMBED_DIM, Activation::Relu),
                GcnLayer::new(store, rng, format!("{prefix}/layer1/W"), EMBED_DIM, HIDDEN_DIM, Activation::Relu),
                GcnLayer::new(store, rng, format!("{prefix}/layer2/W"), HIDDEN_DIM, f, Activation::Sigmoid),
            ],
        }
    }

    pub fn generate(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        mode: ParamMode,
        embeddings: NodeId,
        a_norm: NodeId,
    ) -> Result<NodeId> {
        let h = self.layers[0].forward(tape, store, mode, a_norm, embeddings)?;
        let h = self.layers[1].forward(tape, store, mode, a_norm, h)?;
        self.layers[2].forward(tape, store, mode, a_norm, h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().map(|l| l.weight).collect()
    }
}

/// Shared discriminator: two GCN trunk layers, a GCN critic layer (linear,
/// unbounded) and a plain sigmoid classifier head reading the 16-wide
/// penultimate representation.
#[derive(Debug, Clone)]
pub struct Discriminator {
    trunk: [GcnLayer; 2],
    critic: GcnLayer,
    classifier: ParamId,
}

impl Discriminator {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, f: usize) -> Self {
        Discriminator {
            trunk: [
                GcnLayer::new(store, rng, "discriminator/layer0/W".into(), f, HIDDEN_DIM, Activation::Relu),
                GcnLayer::new(
                    store,
                    rng,
                    "discriminator/layer1/W".into(),
                    HIDDEN_DIM,
                    EMBED_DIM,
                    Activation::Relu,
                ),
            ],
            critic: GcnLayer::new(store, rng, "discriminator/critic/W".into(), EMBED_DIM, 1, Activation::Linear),
            classifier: store.register("discriminator/classifier/W", glorot(rng, EMBED_DIM, 1)),
        }
    }

    /// Returns `(critic, class_prob)`, both `n x 1`, computed from the shared
    /// penultimate representation.
    pub fn discriminate(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        mode: ParamMode,
        features: NodeId,
        a_norm: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let h = self.trunk[0].forward(tape, store, mode, a_norm, features)?;
        let h = self.trunk[1].forward(tape, store, mode, a_norm, h)?;
        let critic = self.critic.forward(tape, store, mode, a_norm, h)?;
        let wc = match mode {
            ParamMode::Trainable => tape.place_param(store, self.classifier)?,
            ParamMode::Frozen => tape.place_frozen(store, self.classifier)?,
        };
        let logits = tape.matmul(h, wc)?;
        let class = tape.sigmoid(logits)?;
        Ok((critic, class))
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut out: Vec<ParamId> = self.trunk.iter().map(|l| l.weight).collect();
        out.push(self.critic.weight);
        out.push(self.classifier);
        out
    }
}

/// The full model family: encoder, `c x m` generators, `c` source decoders,
/// and the shared discriminator.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub encoder: Encoder,
    /// Indexed `[cluster][target]`; target `i` (0-based) maps domain `T{i+1}`.
    pub generators: Vec<Vec<Generator>>,
    pub source_decoders: Vec<Generator>,
    pub discriminator: Discriminator,
    pub f: usize,
    pub m: usize,
    pub c: usize,
}

impl ModelSet {
    /// Builds and Glorot-initializes every network from one seed, asserting
    /// the expected parameter counts.
    pub fn new(store: &mut ParamStore, f: usize, m: usize, c: usize, seed: u64) -> Result<ModelSet> {
        if f == 0 || m == 0 || c == 0 {
            return Err(validation("model dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::new(store, &mut rng, f);
        let mut generators = Vec::with_capacity(c);
        for j in 0..c {
            let mut row = Vec::with_capacity(m);
            for i in 0..m {
                let prefix = format!("generator/T{}/cluster{}", i + 1, j);
                row.push(Generator::new(store, &mut rng, &prefix, j, f));
            }
            generators.push(row);
        }
        let source_decoders = (0..c)
            .map(|j| Generator::new(store, &mut rng, &format!("decoder/cluster{j}"), j, f))
            .collect::<Vec<_>>();
        let discriminator = Discriminator::new(store, &mut rng, f);

        let model = ModelSet {
            encoder,
            generators,
            source_decoders,
            discriminator,
            f,
            m,
            c,
        };
        assert_eq!(
            store.scalar_count(&model.encoder.params()),
            f * HIDDEN_DIM + HIDDEN_DIM * EMBED_DIM
        );
        for row in &model.generators {
            for g in row {
                assert_eq!(
                    store.scalar_count(&g.params()),
                    EMBED_DIM * EMBED_DIM + EMBED_DIM * HIDDEN_DIM + HIDDEN_DIM * f
                );
            }
        }
        assert_eq!(
            store.scalar_count(&model.discriminator.params()),
            f * HIDDEN_DIM + HIDDEN_DIM * EMBED_DIM + EMBED_DIM + EMBED_DIM
        );
        Ok(model)
    }

    /// Parameters updated by the generator objective: encoder, all
    /// generators, all source decoders.
    pub fn generator_side(&self) -> Vec<ParamId> {
        let mut out = self.encoder.params();
        for row in &self.generators {
            for g in row {
                out.extend(g.params());
            }
        }
        for d in &self.source_decoders {
            out.extend(d.params());
        }
        out
    }

    /// Parameters updated by the discriminator objective.
    pub fn discriminator_side(&self) -> Vec<ParamId> {
        self.discriminator.params()
    }
}

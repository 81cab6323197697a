//! Concept erasure by fine-tuning: fixed-target remapping and adaptive
//! guided erasure (AGE).
//!
//! Both erasers fine-tune a copy of the frozen base model so that
//! conditioning on an erased concept reproduces the frozen model's output
//! for a *target* concept. Fixed-target runs pick the target once per
//! erased concept by a named strategy. AGE instead searches for the target
//! online: each erased concept owns a logit vector `pi` over its
//! restricted vocabulary, the inner maximization ascends `pi` through a
//! Gumbel-Softmax mixture so the target stays hard (related but not
//! synonymous), and the outer minimization descends the sanitized
//! parameters on the same objective.
//!
//! Noised inputs come from a cached pool of ancestral samples of the
//! frozen model conditioned on the erased concept, re-noised at uniform
//! timesteps. Batch data and Gumbel noise draw from independent seeded
//! streams, so fixed-target and AGE runs with equal seeds see identical
//! batches.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::concepts::{restrict_vocabulary, ConceptId, ConceptSpace, VocabularySubset};
use crate::diffusion::{ancestral_sample_batch, Adam, DenoiserModel, ParamLeaves};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, gumbel_noise, gumbel_softmax, gumbel_softmax_tape, Tape, TensorId};

const POOL_STREAM: u64 = 0x10;
const BATCH_STREAM: u64 = 0x11;
const GUMBEL_STREAM: u64 = 0x12;

/// How a fixed-target run picks the target concept for each erased one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TargetStrategy {
    /// The erased concept's synonym record.
    Synonym,
    /// Nearest same-family regular concept by embedding cosine.
    InFamily,
    /// Unit-normalized mean embedding of the erased concept's family.
    General,
    /// Farthest regular concept by embedding cosine.
    Unrelated,
    /// The null concept.
    Null,
    /// A caller-chosen concept.
    Explicit(ConceptId),
}

impl std::fmt::Display for TargetStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TargetStrategy::Synonym => write!(f, "synonym"),
            TargetStrategy::InFamily => write!(f, "in_family"),
            TargetStrategy::General => write!(f, "general"),
            TargetStrategy::Unrelated => write!(f, "unrelated"),
            TargetStrategy::Null => write!(f, "null"),
            TargetStrategy::Explicit(id) => write!(f, "explicit:{id}"),
        }
    }
}

impl std::str::FromStr for TargetStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synonym" => Ok(TargetStrategy::Synonym),
            "in_family" => Ok(TargetStrategy::InFamily),
            "general" => Ok(TargetStrategy::General),
            "unrelated" => Ok(TargetStrategy::Unrelated),
            "null" => Ok(TargetStrategy::Null),
            _ => {
                if let Some(id) = s.strip_prefix("explicit:") {
                    let id = id.parse::<usize>().map_err(|_| {
                        Error::Input(format!("invalid explicit target id in `{s}`"))
                    })?;
                    Ok(TargetStrategy::Explicit(ConceptId(id)))
                } else {
                    Err(Error::Input(format!("unknown target strategy `{s}`")))
                }
            }
        }
    }
}

/// Optimizer for the outer (sanitized-parameter) updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OuterOptimizer {
    Adam,
    Sgd,
}

impl std::str::FromStr for OuterOptimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OuterOptimizer::Adam),
            "sgd" => Ok(OuterOptimizer::Sgd),
            _ => Err(Error::Input(format!("unknown optimizer `{s}`"))),
        }
    }
}

impl std::fmt::Display for OuterOptimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OuterOptimizer::Adam => write!(f, "adam"),
            OuterOptimizer::Sgd => write!(f, "sgd"),
        }
    }
}

/// Hyperparameters of one erasure run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErasureConfig {
    pub erase_set: Vec<ConceptId>,
    /// Trade-off between the erasing term L1 and the preservation term L2.
    pub lambda: f64,
    /// Gumbel-Softmax temperature.
    pub temperature: f64,
    /// Inner (target-search) ascent rate.
    pub inner_rate: f64,
    /// Inner ascent steps per outer step.
    pub n_iter: usize,
    /// Outer (parameter) learning rate.
    pub outer_rate: f64,
    pub steps: usize,
    /// Vocabulary restriction size for AGE.
    pub vocab_k: usize,
    /// Target selection for fixed-target runs.
    pub target_strategy: TargetStrategy,
    /// Optional global-norm clip on the inner gradient.
    pub grad_clip: Option<f64>,
    pub batch_size: usize,
    pub pool_size: usize,
    pub outer_optimizer: OuterOptimizer,
    pub seed: u64,
}

impl ErasureConfig {
    pub fn new(erase_set: Vec<ConceptId>, seed: u64) -> Self {
        ErasureConfig {
            erase_set,
            lambda: 1.0,
            temperature: 0.1,
            inner_rate: 0.001,
            n_iter: 1,
            outer_rate: 1e-3,
            steps: 1000,
            vocab_k: 10,
            target_strategy: TargetStrategy::Null,
            grad_clip: None,
            batch_size: 8,
            pool_size: 512,
            outer_optimizer: OuterOptimizer::Adam,
            seed,
        }
    }

    pub fn validate(&self, space: &ConceptSpace) -> Result<()> {
        if self.erase_set.is_empty() {
            return Err(Error::Parameter("erase_set is empty".into()));
        }
        for &ce in &self.erase_set {
            let rec = space.record(ce)?;
            if rec.mode.is_none() {
                return Err(Error::Parameter(format!(
                    "cannot erase `{}`: it has no data mode",
                    rec.name
                )));
            }
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Parameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Parameter(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.inner_rate > 0.0) {
            return Err(Error::Parameter(format!(
                "inner_rate must be > 0, got {}",
                self.inner_rate
            )));
        }
        if self.n_iter < 1 {
            return Err(Error::Parameter("n_iter must be >= 1".into()));
        }
        // steps == 0 is a valid no-op run (the sanitized model equals the
        // frozen one); the config-file loader insists on >= 1.
        if !(self.outer_rate > 0.0) {
            return Err(Error::Parameter(format!(
                "outer_rate must be > 0, got {}",
                self.outer_rate
            )));
        }
        if self.vocab_k < 1 || self.vocab_k > space.len() - 1 {
            return Err(Error::Parameter(format!(
                "vocab_k={} out of range 1..={}",
                self.vocab_k,
                space.len() - 1
            )));
        }
        if self.batch_size == 0 || self.pool_size == 0 {
            return Err(Error::Parameter("batch and pool sizes must be positive".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Parameter(format!("grad_clip must be > 0, got {c}")));
            }
        }
        Ok(())
    }
}

/// A resolved fixed-run target: an embedding plus a human-readable label.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedTarget {
    pub embedding: Vec<f64>,
    pub concept: Option<ConceptId>,
    pub label: String,
}

/// Picks the target embedding for erasing `ce` under a strategy.
pub fn resolve_target(
    space: &ConceptSpace,
    ce: ConceptId,
    strategy: TargetStrategy,
) -> Result<ResolvedTarget> {
    let ce_rec = space.record(ce)?;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    match strategy {
        TargetStrategy::Synonym => {
            let syn = space.synonym_for(ce).ok_or_else(|| {
                Error::Configuration(format!(
                    "strategy synonym: concept `{}` has no synonym",
                    ce_rec.name
                ))
            })?;
            Ok(ResolvedTarget {
                embedding: space.embedding_of(syn)?.to_vec(),
                concept: Some(syn),
                label: space.record(syn)?.name.clone(),
            })
        }
        TargetStrategy::InFamily => {
            let best = space
                .records()
                .iter()
                .filter(|r| {
                    r.id != ce && !r.is_synonym() && r.mode.is_some() && r.family == ce_rec.family
                })
                .map(|r| (r.id, dot(&r.embedding, &ce_rec.embedding)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .ok_or_else(|| {
                    Error::Configuration(format!(
                        "strategy in_family: concept `{}` has no family peer",
                        ce_rec.name
                    ))
                })?;
            Ok(ResolvedTarget {
                embedding: space.embedding_of(best.0)?.to_vec(),
                concept: Some(best.0),
                label: space.record(best.0)?.name.clone(),
            })
        }
        TargetStrategy::General => {
            let members: Vec<&[f64]> = space
                .records()
                .iter()
                .filter(|r| !r.is_synonym() && r.mode.is_some() && r.family == ce_rec.family)
                .map(|r| r.embedding.as_slice())
                .collect();
            if members.is_empty() {
                return Err(Error::Configuration(format!(
                    "strategy general: concept `{}` has no family",
                    ce_rec.name
                )));
            }
            let d = space.embed_dim();
            let mut mean = vec![0.0; d];
            for m in &members {
                for (o, &v) in mean.iter_mut().zip(*m) {
                    *o += v;
                }
            }
            let norm = dot(&mean, &mean).sqrt();
            for v in mean.iter_mut() {
                *v /= norm;
            }
            Ok(ResolvedTarget {
                embedding: mean,
                concept: None,
                label: format!("general({})", ce_rec.family),
            })
        }
        TargetStrategy::Unrelated => {
            let worst = space
                .records()
                .iter()
                .filter(|r| r.id != ce && !r.is_synonym() && r.mode.is_some())
                .map(|r| (r.id, dot(&r.embedding, &ce_rec.embedding)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .ok_or_else(|| {
                    Error::Configuration(format!(
                        "strategy unrelated: no candidate for `{}`",
                        ce_rec.name
                    ))
                })?;
            Ok(ResolvedTarget {
                embedding: space.embedding_of(worst.0)?.to_vec(),
                concept: Some(worst.0),
                label: space.record(worst.0)?.name.clone(),
            })
        }
        TargetStrategy::Null => Ok(ResolvedTarget {
            embedding: space.embedding_of(space.null_id())?.to_vec(),
            concept: Some(space.null_id()),
            label: "null".into(),
        }),
        TargetStrategy::Explicit(id) => Ok(ResolvedTarget {
            embedding: space.embedding_of(id)?.to_vec(),
            concept: Some(id),
            label: space.record(id)?.name.clone(),
        }),
    }
}

/// One batch of re-noised pool samples.
#[derive(Debug, Clone)]
pub struct ErasureBatch {
    pub x_t: Vec<f64>,
    pub ts: Vec<usize>,
}

/// Per-erased-concept target state of an AGE run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DictSnapshot {
    pub step: usize,
    pub argmax: ConceptId,
    pub max_weight: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictEntry {
    pub logits: Vec<f64>,
    pub subset: VocabularySubset,
    pub history: Vec<DictSnapshot>,
}

impl DictEntry {
    /// Noise-free tempered mixture weights `softmax(pi / gamma)`.
    pub fn weights(&self, temperature: f64) -> Vec<f64> {
        let zeros = vec![0.0; self.logits.len()];
        gumbel_softmax(&self.logits, temperature, &zeros).expect("finite logits")
    }

    /// Subset concept with the largest logit.
    pub fn argmax(&self) -> ConceptId {
        let mut best = 0usize;
        for (i, &l) in self.logits.iter().enumerate() {
            if l > self.logits[best] {
                best = i;
            }
        }
        self.subset.ids()[best]
    }

    fn snapshot(&self, step: usize, temperature: f64) -> DictSnapshot {
        let w = self.weights(temperature);
        let mut best = 0usize;
        for (i, &v) in w.iter().enumerate() {
            if v > w[best] {
                best = i;
            }
        }
        DictSnapshot {
            step,
            argmax: self.subset.ids()[best],
            max_weight: w[best],
            entropy: crate::numerics::shannon_entropy(&w),
        }
    }
}

/// Map from erased concept to its target logits and visit history.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDictionary {
    pub entries: BTreeMap<ConceptId, DictEntry>,
}

impl TargetDictionary {
    /// Uniform initialization: every logit is `1/k`, so the mixture starts
    /// uniform over the restricted vocabulary.
    pub fn init(space: &ConceptSpace, erase_set: &[ConceptId], vocab_k: usize) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for &ce in erase_set {
            let subset = restrict_vocabulary(space, ce, vocab_k)?;
            entries.insert(
                ce,
                DictEntry {
                    logits: vec![1.0 / vocab_k as f64; vocab_k],
                    subset,
                    history: Vec::new(),
                },
            );
        }
        Ok(TargetDictionary { entries })
    }
}

/// Which side of the minimax a loss graph differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgeGrad {
    /// Gradient with respect to the target logits only.
    Pi,
    /// Gradient with respect to the sanitized parameters only.
    ThetaPrime,
    /// Both, for gradient checking.
    Both,
}

/// Handles into an assembled AGE loss graph.
pub struct AgeLossGraph {
    pub total: TensorId,
    pub l1: TensorId,
    pub l2: TensorId,
    pub pi_leaf: Option<TensorId>,
    pub theta_leaves: Option<ParamLeaves>,
}

fn tile(v: &[f64], rows: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() * rows);
    for _ in 0..rows {
        out.extend_from_slice(v);
    }
    out
}

/// Builds the AGE objective `L1 + lambda L2` on a tape.
///
/// `L1 = mean_b |eps_s(x, tau(ce)) - eps_f(x, e_t)|^2` drives erasure,
/// `L2 = mean_b |eps_s(x, e_t) - eps_f(x, e_t)|^2` preserves behavior on
/// the mixture target `e_t = sum_i G(pi)_i tau(c_i)`, where `eps_s` is the
/// sanitized model, `eps_f` the frozen one, and `G` the Gumbel-Softmax
/// with the supplied noise. Branches that carry no gradient for the
/// requested mode are evaluated off-tape; values are identical across
/// modes because both paths share the same kernels.
#[allow(clippy::too_many_arguments)]
pub fn age_loss_graph(
    tape: &mut Tape,
    sanitized: &DenoiserModel,
    frozen: &DenoiserModel,
    ce_emb: &[f64],
    pi: &[f64],
    subset: &VocabularySubset,
    lambda: f64,
    temperature: f64,
    noise: &[f64],
    batch: &ErasureBatch,
    grad: AgeGrad,
) -> Result<AgeLossGraph> {
    if pi.len() != subset.k() {
        return Err(Error::Input(format!(
            "pi has {} logits for a vocabulary of {}",
            pi.len(),
            subset.k()
        )));
    }
    let b = batch.ts.len();
    let d = sanitized.input_dim();
    let ed = sanitized.embed_dim();
    let grad_pi = matches!(grad, AgeGrad::Pi | AgeGrad::Both);
    let grad_theta = matches!(grad, AgeGrad::ThetaPrime | AgeGrad::Both);

    // Target mixture e_t, on-tape when pi carries gradient.
    let (emb_rows, pi_leaf) = if grad_pi {
        let pi_leaf = tape.leaf_from(&[subset.k()], pi);
        let weights = gumbel_softmax_tape(tape, pi_leaf, temperature, noise)?;
        let e_t = tape.weighted_rows(weights, subset.embeddings(), ed)?;
        (tape.repeat_row(e_t, b)?, Some(pi_leaf))
    } else {
        let weights = gumbel_softmax(pi, temperature, noise)?;
        let e_t = crate::concepts::mixture_embedding(&weights, subset)?;
        (tape.constant(&[b, ed], &tile(&e_t, b)), None)
    };

    let x = tape.constant(&[b, d], &batch.x_t);
    let tf = sanitized.time_features(&batch.ts);
    let tfeat = tape.constant(&[b, sanitized.arch().time_dim], &tf);

    // Sanitized model on the erased concept (L1 left operand).
    let (eps_s_ce, theta_leaves) = if grad_theta {
        let leaves = sanitized.register_params(tape, true);
        let ce_rows = tape.constant(&[b, ed], &tile(ce_emb, b));
        let out = sanitized.forward_tape(tape, &leaves, x, tfeat, ce_rows)?;
        (out, Some(leaves))
    } else {
        let out = sanitized.predict_batch(&batch.x_t, &batch.ts, ce_emb)?;
        (tape.constant(&[b, d], &out), None)
    };

    // Frozen model on the mixture (right operand of both terms). Gradient
    // reaches the mixture through this branch even though the frozen
    // parameters never require one.
    let eps_f_mix = if grad_pi {
        let leaves = frozen.register_params(tape, false);
        frozen.forward_tape(tape, &leaves, x, tfeat, emb_rows)?
    } else {
        let mix = tape.value(emb_rows)[..ed].to_vec();
        let out = frozen.predict_batch(&batch.x_t, &batch.ts, &mix)?;
        tape.constant(&[b, d], &out)
    };

    // Sanitized model on the mixture (L2 left operand); always on tape.
    // Reuses the L1 parameter leaves in theta modes so both terms
    // accumulate into the same gradients.
    let eps_s_mix = match &theta_leaves {
        Some(leaves) => sanitized.forward_tape(tape, leaves, x, tfeat, emb_rows)?,
        None => {
            let leaves = sanitized.register_params(tape, false);
            sanitized.forward_tape(tape, &leaves, x, tfeat, emb_rows)?
        }
    };

    let mse1 = tape.mse(eps_s_ce, eps_f_mix)?;
    let l1 = tape.scale(mse1, d as f64)?;
    let mse2 = tape.mse(eps_s_mix, eps_f_mix)?;
    let l2 = tape.scale(mse2, d as f64)?;
    let weighted = tape.scale(l2, lambda)?;
    let total = tape.add(l1, weighted)?;
    Ok(AgeLossGraph {
        total,
        l1,
        l2,
        pi_leaf,
        theta_leaves,
    })
}

/// Scalar AGE loss value (builds a throwaway graph).
#[allow(clippy::too_many_arguments)]
pub fn age_loss(
    sanitized: &DenoiserModel,
    frozen: &DenoiserModel,
    ce_emb: &[f64],
    pi: &[f64],
    subset: &VocabularySubset,
    lambda: f64,
    temperature: f64,
    noise: &[f64],
    batch: &ErasureBatch,
) -> Result<(f64, f64, f64)> {
    let mut tape = Tape::new();
    let graph = age_loss_graph(
        &mut tape,
        sanitized,
        frozen,
        ce_emb,
        pi,
        subset,
        lambda,
        temperature,
        noise,
        batch,
        AgeGrad::Pi,
    )?;
    Ok((
        tape.scalar_value(graph.total),
        tape.scalar_value(graph.l1),
        tape.scalar_value(graph.l2),
    ))
}

/// Handles into an assembled fixed-target loss graph.
pub struct FixedLossGraph {
    pub total: TensorId,
    pub l1: TensorId,
    pub l2: TensorId,
    pub theta_leaves: ParamLeaves,
}

/// Builds the fixed-target objective on a tape.
///
/// `L1 = mean_b |eps_s(x, tau(ce)) - eps_f(x, tau(ct))|^2` remaps the
/// erased concept onto the target; `L2 = mean_b |eps_s(x, tau(cn)) -
/// eps_f(x, tau(cn))|^2` anchors the null concept. The optimized total is
/// `L1 + lambda L2`; at the default `lambda = 1` this is the classic
/// fixed-target objective, and at `lambda = 0` it matches an AGE run with
/// a frozen one-hot mixture.
pub fn fixed_target_loss_graph(
    tape: &mut Tape,
    sanitized: &DenoiserModel,
    frozen: &DenoiserModel,
    ce_emb: &[f64],
    target_emb: &[f64],
    null_emb: &[f64],
    lambda: f64,
    batch: &ErasureBatch,
) -> Result<FixedLossGraph> {
    let b = batch.ts.len();
    let d = sanitized.input_dim();
    let ed = sanitized.embed_dim();
    if target_emb.len() != ed || null_emb.len() != ed || ce_emb.len() != ed {
        return Err(Error::Input("embedding length mismatch".into()));
    }

    let leaves = sanitized.register_params(tape, true);
    let x = tape.constant(&[b, d], &batch.x_t);
    let tf = sanitized.time_features(&batch.ts);
    let tfeat = tape.constant(&[b, sanitized.arch().time_dim], &tf);

    let ce_rows = tape.constant(&[b, ed], &tile(ce_emb, b));
    let eps_s_ce = sanitized.forward_tape(tape, &leaves, x, tfeat, ce_rows)?;
    let target1 = frozen.predict_batch(&batch.x_t, &batch.ts, target_emb)?;
    let target1 = tape.constant(&[b, d], &target1);
    let mse1 = tape.mse(eps_s_ce, target1)?;
    let l1 = tape.scale(mse1, d as f64)?;

    let null_rows = tape.constant(&[b, ed], &tile(null_emb, b));
    let eps_s_null = sanitized.forward_tape(tape, &leaves, x, tfeat, null_rows)?;
    let target2 = frozen.predict_batch(&batch.x_t, &batch.ts, null_emb)?;
    let target2 = tape.constant(&[b, d], &target2);
    let mse2 = tape.mse(eps_s_null, target2)?;
    let l2 = tape.scale(mse2, d as f64)?;

    let weighted = tape.scale(l2, lambda)?;
    let total = tape.add(l1, weighted)?;
    Ok(FixedLossGraph {
        total,
        l1,
        l2,
        theta_leaves: leaves,
    })
}

/// Scalar fixed-target loss values `(L1, L2)`.
pub fn fixed_target_loss(
    sanitized: &DenoiserModel,
    frozen: &DenoiserModel,
    ce_emb: &[f64],
    target_emb: &[f64],
    null_emb: &[f64],
    batch: &ErasureBatch,
) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let graph = fixed_target_loss_graph(
        &mut tape, sanitized, frozen, ce_emb, target_emb, null_emb, 1.0, batch,
    )?;
    Ok((tape.scalar_value(graph.l1), tape.scalar_value(graph.l2)))
}

/// Loss trace entry of one outer step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLoss {
    pub step: usize,
    pub concept: ConceptId,
    pub l1: f64,
    pub l2: f64,
}

/// Everything an erasure run produced besides the sanitized model.
#[derive(Debug, Clone)]
pub struct ErasureRunRecord {
    pub mode: &'static str,
    pub config: ErasureConfig,
    pub losses: Vec<StepLoss>,
    pub dictionary: Option<TargetDictionary>,
    /// Resolved targets of a fixed run, one per erased concept.
    pub targets: Vec<(ConceptId, String)>,
    pub checkpoint: Option<std::path::PathBuf>,
}

enum OuterState {
    Adam(Adam),
    Sgd { lr: f64 },
}

impl OuterState {
    fn new(cfg: &ErasureConfig, n: usize) -> Self {
        match cfg.outer_optimizer {
            OuterOptimizer::Adam => OuterState::Adam(Adam::new(cfg.outer_rate, n)),
            OuterOptimizer::Sgd => OuterState::Sgd { lr: cfg.outer_rate },
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        match self {
            OuterState::Adam(a) => a.step(params, grads),
            OuterState::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= *lr * g;
                }
            }
        }
    }
}

/// Ancestral-sample pools of the frozen model, one per erased concept.
fn build_pools(
    frozen: &DenoiserModel,
    space: &ConceptSpace,
    cfg: &ErasureConfig,
) -> Result<BTreeMap<ConceptId, Vec<f64>>> {
    let mut pools = BTreeMap::new();
    for &ce in &cfg.erase_set {
        let emb = space.embedding_of(ce)?;
        let seed = derive_seed(cfg.seed, POOL_STREAM ^ (ce.0 as u64).wrapping_mul(0x9e37));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = ancestral_sample_batch(frozen, emb, cfg.pool_size, &mut rng)?;
        pools.insert(ce, pool);
    }
    Ok(pools)
}

/// Draws the erased concept and its re-noised batch for one outer step.
///
/// Consumes the batch stream identically for fixed-target and AGE runs.
fn next_step_batch(
    rng: &mut ChaCha8Rng,
    cfg: &ErasureConfig,
    pools: &BTreeMap<ConceptId, Vec<f64>>,
    schedule_len: usize,
    alpha_bar: &[f64],
    dim: usize,
) -> (ConceptId, ErasureBatch) {
    let ce = cfg.erase_set[rng.random_range(0..cfg.erase_set.len())];
    let pool = &pools[&ce];
    let pool_n = pool.len() / dim;
    let mut x_t = Vec::with_capacity(cfg.batch_size * dim);
    let mut ts = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let idx = rng.random_range(0..pool_n);
        let t = rng.random_range(0..schedule_len);
        let ab = alpha_bar[t];
        let (c0, c1) = (ab.sqrt(), (1.0 - ab).sqrt());
        for d in 0..dim {
            let e: f64 = StandardNormal.sample(rng);
            x_t.push(c0 * pool[idx * dim + d] + c1 * e);
        }
        ts.push(t);
    }
    (ce, ErasureBatch { x_t, ts })
}

fn clip_gradient(g: &mut [f64], clip: Option<f64>) {
    if let Some(c) = clip {
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > c {
            let scale = c / norm;
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
}

/// `n_iter` gradient-ascent steps on the target logits, fresh Gumbel
/// noise per step, the batch held fixed.
#[allow(clippy::too_many_arguments)]
pub fn inner_max_step(
    logits: &mut [f64],
    sanitized: &DenoiserModel,
    frozen: &DenoiserModel,
    ce_emb: &[f64],
    subset: &VocabularySubset,
    cfg: &ErasureConfig,
    batch: &ErasureBatch,
    rng_gumbel: &mut ChaCha8Rng,
    step: usize,
) -> Result<()> {
    for _ in 0..cfg.n_iter {
        let noise = gumbel_noise(rng_gumbel, subset.k());
        let mut tape = Tape::new();
        let graph = age_loss_graph(
            &mut tape,
            sanitized,
            frozen,
            ce_emb,
            logits,
            subset,
            cfg.lambda,
            cfg.temperature,
            &noise,
            batch,
            AgeGrad::Pi,
        )?;
        tape.backward(graph.total)?;
        let mut g = tape
            .grad(graph.pi_leaf.expect("pi mode registers the leaf"))
            .expect("pi leaf requires grad")
            .to_vec();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                step,
                message: "non-finite inner gradient".into(),
            });
        }
        clip_gradient(&mut g, cfg.grad_clip);
        for (l, gv) in logits.iter_mut().zip(&g) {
            *l += cfg.inner_rate * gv;
        }
    }
    Ok(())
}

/// One gradient-descent step on the sanitized parameters with the target
/// logits held constant. Returns the step's `(L1, L2)`.
#[allow(clippy::too_many_arguments)]
pub fn outer_min_step(
    sanitized: &mut DenoiserModel,
    optimizer: &mut OuterState,
    grads: &mut [f64],
    frozen: &DenoiserModel,
    ce_emb: &[f64],
    logits: &[f64],
    subset: &VocabularySubset,
    cfg: &ErasureConfig,
    batch: &ErasureBatch,
    rng_gumbel: &mut ChaCha8Rng,
    step: usize,
) -> Result<(f64, f64)> {
    let noise = gumbel_noise(rng_gumbel, subset.k());
    let mut tape = Tape::new();
    let graph = age_loss_graph(
        &mut tape,
        sanitized,
        frozen,
        ce_emb,
        logits,
        subset,
        cfg.lambda,
        cfg.temperature,
        &noise,
        batch,
        AgeGrad::ThetaPrime,
    )?;
    let (l1, l2) = (tape.scalar_value(graph.l1), tape.scalar_value(graph.l2));
    if !l1.is_finite() || !l2.is_finite() {
        return Err(Error::Numeric {
            step,
            message: format!("non-finite loss (L1={l1}, L2={l2})"),
        });
    }
    tape.backward(graph.total)?;
    let leaves = graph.theta_leaves.expect("theta mode registers leaves");
    sanitized.collect_param_grads(&tape, &leaves, grads);
    optimizer.step(sanitized.params_mut(), grads);
    Ok((l1, l2))
}

/// Adaptive guided erasure with a caller-supplied initial dictionary.
pub fn run_age_with(
    frozen: &DenoiserModel,
    space: &ConceptSpace,
    cfg: &ErasureConfig,
    mut dictionary: TargetDictionary,
) -> Result<(DenoiserModel, ErasureRunRecord)> {
    cfg.validate(space)?;
    for &ce in &cfg.erase_set {
        if !dictionary.entries.contains_key(&ce) {
            return Err(Error::Configuration(format!(
                "dictionary has no entry for erased concept {ce}"
            )));
        }
    }
    let pools = build_pools(frozen, space, cfg)?;
    let mut sanitized = frozen.clone();
    let mut optimizer = OuterState::new(cfg, sanitized.params().len());
    let mut grads = vec![0.0; sanitized.params().len()];
    let mut rng_batch = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, BATCH_STREAM));
    let mut rng_gumbel = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, GUMBEL_STREAM));
    let schedule_len = frozen.schedule().len();
    let alpha_bar = frozen.schedule().alpha_bar().to_vec();
    let dim = frozen.input_dim();
    let mut losses = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let (ce, batch) = next_step_batch(
            &mut rng_batch,
            cfg,
            &pools,
            schedule_len,
            &alpha_bar,
            dim,
        );
        let ce_emb = space.embedding_of(ce)?.to_vec();
        let entry = dictionary.entries.get_mut(&ce).expect("validated above");

        inner_max_step(
            &mut entry.logits,
            &sanitized,
            frozen,
            &ce_emb,
            &entry.subset,
            cfg,
            &batch,
            &mut rng_gumbel,
            step,
        )?;
        let snap = entry.snapshot(step, cfg.temperature);
        entry.history.push(snap);

        let logits = entry.logits.clone();
        let subset = entry.subset.clone();
        let (l1, l2) = outer_min_step(
            &mut sanitized,
            &mut optimizer,
            &mut grads,
            frozen,
            &ce_emb,
            &logits,
            &subset,
            cfg,
            &batch,
            &mut rng_gumbel,
            step,
        )?;
        losses.push(StepLoss {
            step,
            concept: ce,
            l1,
            l2,
        });
    }

    Ok((
        sanitized,
        ErasureRunRecord {
            mode: "age",
            config: cfg.clone(),
            losses,
            dictionary: Some(dictionary),
            targets: Vec::new(),
            checkpoint: None,
        },
    ))
}

/// Adaptive guided erasure from the uniform dictionary initialization.
pub fn run_age(
    frozen: &DenoiserModel,
    space: &ConceptSpace,
    cfg: &ErasureConfig,
) -> Result<(DenoiserModel, ErasureRunRecord)> {
    let dictionary = TargetDictionary::init(space, &cfg.erase_set, cfg.vocab_k)?;
    run_age_with(frozen, space, cfg, dictionary)
}

/// Fixed-target erasure with targets picked by `cfg.target_strategy`.
pub fn run_fixed_target(
    frozen: &DenoiserModel,
    space: &ConceptSpace,
    cfg: &ErasureConfig,
) -> Result<(DenoiserModel, ErasureRunRecord)> {
    cfg.validate(space)?;
    let mut targets = BTreeMap::new();
    for &ce in &cfg.erase_set {
        targets.insert(ce, resolve_target(space, ce, cfg.target_strategy)?);
    }
    let null_emb = space.embedding_of(space.null_id())?.to_vec();
    let pools = build_pools(frozen, space, cfg)?;
    let mut sanitized = frozen.clone();
    let mut optimizer = OuterState::new(cfg, sanitized.params().len());
    let mut grads = vec![0.0; sanitized.params().len()];
    let mut rng_batch = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, BATCH_STREAM));
    let schedule_len = frozen.schedule().len();
    let alpha_bar = frozen.schedule().alpha_bar().to_vec();
    let dim = frozen.input_dim();
    let mut losses = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let (ce, batch) = next_step_batch(
            &mut rng_batch,
            cfg,
            &pools,
            schedule_len,
            &alpha_bar,
            dim,
        );
        let ce_emb = space.embedding_of(ce)?;
        let target = &targets[&ce];
        let mut tape = Tape::new();
        let graph = fixed_target_loss_graph(
            &mut tape,
            &sanitized,
            frozen,
            ce_emb,
            &target.embedding,
            &null_emb,
            cfg.lambda,
            &batch,
        )?;
        let (l1, l2) = (tape.scalar_value(graph.l1), tape.scalar_value(graph.l2));
        if !l1.is_finite() || !l2.is_finite() {
            return Err(Error::Numeric {
                step,
                message: format!("non-finite loss (L1={l1}, L2={l2})"),
            });
        }
        tape.backward(graph.total)?;
        sanitized.collect_param_grads(&tape, &graph.theta_leaves, &mut grads);
        optimizer.step(sanitized.params_mut(), &mut grads);
        losses.push(StepLoss {
            step,
            concept: ce,
            l1,
            l2,
        });
    }

    Ok((
        sanitized,
        ErasureRunRecord {
            mode: "fixed",
            config: cfg.clone(),
            losses,
            dictionary: None,
            targets: cfg
                .erase_set
                .iter()
                .map(|ce| (*ce, targets[ce].label.clone()))
                .collect(),
            checkpoint: None,
        },
    ))
}

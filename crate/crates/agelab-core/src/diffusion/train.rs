//! Base-model training on the synthetic concept distributions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::concepts::{ConceptId, ConceptSpace};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, Tape};

use super::{DenoiserModel, ModelArch, NoiseSchedule};

const INIT_STREAM: u64 = 0x01;
const DATA_STREAM: u64 = 0x02;

/// Plain Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Training hyperparameters plus a per-concept sampling budget.
///
/// Budgets are relative weights for drawing the conditioning concept of
/// each batch item; every non-synonym concept (including the null
/// concept) must have one.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub budgets: BTreeMap<ConceptId, f64>,
}

impl TrainConfig {
    /// Default budgets for a space: every regular concept at weight 1,
    /// the abnormal concept at one tenth, the null concept at 1.
    pub fn for_space(space: &ConceptSpace) -> Self {
        let mut budgets = BTreeMap::new();
        for id in space.regular_ids() {
            let w = if space.record(id).map(|r| r.abnormal).unwrap_or(false) {
                0.1
            } else {
                1.0
            };
            budgets.insert(id, w);
        }
        budgets.insert(space.null_id(), 1.0);
        TrainConfig {
            steps: 6000,
            batch_size: 64,
            learning_rate: 1e-3,
            budgets,
        }
    }

    pub fn validate(&self, space: &ConceptSpace) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Parameter("learning_rate must be positive".into()));
        }
        for id in space.regular_ids().into_iter().chain([space.null_id()]) {
            match self.budgets.get(&id) {
                Some(w) if *w >= 0.0 && w.is_finite() => {}
                Some(w) => {
                    return Err(Error::Parameter(format!(
                        "budget for concept {id} must be finite and non-negative, got {w}"
                    )))
                }
                None => {
                    return Err(Error::Parameter(format!(
                        "no training budget for non-synonym concept {id}"
                    )))
                }
            }
        }
        if self.budgets.values().sum::<f64>() <= 0.0 {
            return Err(Error::Parameter("budgets sum to zero".into()));
        }
        Ok(())
    }
}

/// Per-step element-MSE losses recorded during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub losses: Vec<f64>,
}

impl TrainingTrace {
    /// Mean of the first (or last) `window` recorded losses.
    pub fn smoothed(&self, window: usize, from_end: bool) -> f64 {
        let w = window.min(self.losses.len()).max(1);
        let slice = if from_end {
            &self.losses[self.losses.len() - w..]
        } else {
            &self.losses[..w]
        };
        slice.iter().sum::<f64>() / slice.len() as f64
    }
}

fn weighted_pick(cum: &[(ConceptId, f64)], total: f64, rng: &mut ChaCha8Rng) -> ConceptId {
    let u = rng.random::<f64>() * total;
    for (id, edge) in cum {
        if u < *edge {
            return *id;
        }
    }
    cum.last().expect("non-empty budget").0
}

/// Minimizes the noise-prediction objective over concept-conditioned data.
///
/// Each batch item draws a concept by budget weight, a data point from
/// that concept's mode (the union of all modes for the null concept), a
/// uniform timestep, and Gaussian noise. Training is reproducible:
/// identical seed and config give identical parameters.
pub fn train_base_model(
    space: &ConceptSpace,
    schedule: &NoiseSchedule,
    arch: &ModelArch,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(DenoiserModel, TrainingTrace)> {
    cfg.validate(space)?;
    if arch.embed_dim != space.embed_dim() || arch.input_dim != space.data_dim() {
        return Err(Error::Parameter(format!(
            "architecture ({}, {}) does not match space ({}, {})",
            arch.input_dim,
            arch.embed_dim,
            space.data_dim(),
            space.embed_dim()
        )));
    }
    let mut model = DenoiserModel::init(arch.clone(), schedule.clone(), derive_seed(seed, INIT_STREAM))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, DATA_STREAM));

    let mut cum = Vec::new();
    let mut total = 0.0;
    for (&id, &w) in &cfg.budgets {
        if w > 0.0 {
            total += w;
            cum.push((id, total));
        }
    }

    let dim = space.data_dim();
    let ed = space.embed_dim();
    let big_t = schedule.len();
    let batch = cfg.batch_size;
    let mut optimizer = Adam::new(cfg.learning_rate, model.params().len());
    let mut flat_grads = vec![0.0; model.params().len()];
    let mut losses = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let mut x_t = Vec::with_capacity(batch * dim);
        let mut eps = Vec::with_capacity(batch * dim);
        let mut emb = Vec::with_capacity(batch * ed);
        let mut ts = Vec::with_capacity(batch);
        for _ in 0..batch {
            let concept = weighted_pick(&cum, total, &mut rng);
            let x0 = if concept == space.null_id() {
                space.sample_union_of_modes(1, &mut rng)?
            } else {
                space.sample_data(concept, 1, &mut rng)?
            };
            let t = rng.random_range(0..big_t);
            let ab = schedule.alpha_bar()[t];
            let (c0, c1) = (ab.sqrt(), (1.0 - ab).sqrt());
            for d in 0..dim {
                let e: f64 = StandardNormal.sample(&mut rng);
                eps.push(e);
                x_t.push(c0 * x0[d] + c1 * e);
            }
            ts.push(t);
            emb.extend_from_slice(space.embedding_of(concept)?);
        }

        let mut tape = Tape::new();
        let leaves = model.register_params(&mut tape, true);
        let emb_node = tape.constant(&[batch, ed], &emb);
        let eps_hat = model.forward_tape_from_batch(&mut tape, &leaves, &x_t, &ts, emb_node)?;
        let target = tape.constant(&[batch, dim], &eps);
        let loss = tape.mse(eps_hat, target)?;
        let loss_value = tape.scalar_value(loss);
        if !loss_value.is_finite() {
            return Err(Error::Training {
                step,
                message: format!("loss became {loss_value}"),
            });
        }
        tape.backward(loss)?;
        model.collect_param_grads(&tape, &leaves, &mut flat_grads);
        optimizer.step(model.params_mut(), &mut flat_grads);
        losses.push(loss_value);
    }

    Ok((model, TrainingTrace { losses }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::{build_concept_space, SpaceSpec};
    use crate::diffusion::make_schedule;

    fn small_setup() -> (ConceptSpace, NoiseSchedule, ModelArch) {
        let mut spec = SpaceSpec::default();
        spec.families = 2;
        spec.members_per_family = 2;
        spec.embed_dim = 8;
        let space = build_concept_space(&spec, 3).unwrap();
        let schedule = make_schedule(20, 1e-4, 0.02).unwrap();
        let arch = ModelArch {
            input_dim: 2,
            embed_dim: 8,
            time_dim: 8,
            hidden: vec![16, 16],
        };
        (space, schedule, arch)
    }

    #[test]
    fn zero_steps_returns_the_initialization() {
        let (space, schedule, arch) = small_setup();
        let mut cfg = TrainConfig::for_space(&space);
        cfg.steps = 0;
        let (trained, trace) = train_base_model(&space, &schedule, &arch, &cfg, 7).unwrap();
        let init = DenoiserModel::init(
            arch.clone(),
            schedule.clone(),
            derive_seed(7, INIT_STREAM),
        )
        .unwrap();
        assert_eq!(trained.params(), init.params());
        assert!(trace.losses.is_empty());
    }

    #[test]
    fn loss_decreases_on_a_short_run() {
        let (space, schedule, arch) = small_setup();
        let mut cfg = TrainConfig::for_space(&space);
        cfg.steps = 400;
        cfg.batch_size = 32;
        let (_, trace) = train_base_model(&space, &schedule, &arch, &cfg, 7).unwrap();
        let first = trace.smoothed(50, false);
        let last = trace.smoothed(50, true);
        assert!(last < first, "smoothed loss {first} -> {last}");
    }

    #[test]
    fn training_is_reproducible() {
        let (space, schedule, arch) = small_setup();
        let mut cfg = TrainConfig::for_space(&space);
        cfg.steps = 50;
        cfg.batch_size = 16;
        let (a, ta) = train_base_model(&space, &schedule, &arch, &cfg, 11).unwrap();
        let (b, tb) = train_base_model(&space, &schedule, &arch, &cfg, 11).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(ta, tb);
        let (c, _) = train_base_model(&space, &schedule, &arch, &cfg, 12).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn missing_budget_is_a_parameter_error() {
        let (space, schedule, arch) = small_setup();
        let mut cfg = TrainConfig::for_space(&space);
        cfg.budgets.remove(&space.null_id());
        assert!(matches!(
            train_base_model(&space, &schedule, &arch, &cfg, 1),
            Err(Error::Parameter(_))
        ));
    }
}

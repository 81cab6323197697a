//! The noise-prediction network.
//!
//! A plain MLP over `[x_t | timestep features | concept embedding]`. Two
//! forward paths exist: a fast buffer-based `predict_batch` for sampling
//! and frozen-model targets, and a tape-based `forward_tape` for
//! everything that needs gradients. Both apply the same kernels in the
//! same order, so their outputs are bit-identical; a test pins this.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{matmul_into, silu_into, Tape, TensorId};

use super::NoiseSchedule;

/// Network layout: input/embedding widths and hidden layer sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArch {
    pub input_dim: usize,
    pub embed_dim: usize,
    pub time_dim: usize,
    pub hidden: Vec<usize>,
}

impl Default for ModelArch {
    fn default() -> Self {
        ModelArch {
            input_dim: 2,
            embed_dim: 16,
            time_dim: 16,
            hidden: vec![128, 128, 128],
        }
    }
}

impl ModelArch {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embed_dim == 0 {
            return Err(Error::Parameter("model dimensions must be positive".into()));
        }
        if self.time_dim == 0 || self.time_dim % 2 != 0 {
            return Err(Error::Parameter(format!(
                "time_dim must be a positive even number, got {}",
                self.time_dim
            )));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Parameter("hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let d0 = self.input_dim + self.time_dim + self.embed_dim;
        let mut dims = vec![d0];
        dims.extend_from_slice(&self.hidden);
        dims.push(self.input_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(fi, fo)| fi * fo + fo)
            .sum()
    }
}

/// Noise predictor with parameters, architecture, and its schedule.
///
/// Immutable through the public API; training and erasure mutate the
/// parameter vector through crate-internal access. A finished model is
/// safe to share across threads for sampling and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    arch: ModelArch,
    params: Vec<f64>,
    schedule: NoiseSchedule,
}

/// Tape handles for every weight matrix and bias vector of a model.
pub struct ParamLeaves {
    pub weights: Vec<TensorId>,
    pub biases: Vec<TensorId>,
}

impl DenoiserModel {
    /// Random initialization: He-scaled weights, zero biases.
    pub fn init(arch: ModelArch, schedule: NoiseSchedule, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(arch.param_count());
        for (fan_in, fan_out) in arch.layer_shapes() {
            let scale = (2.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let z: f64 = StandardNormal.sample(&mut rng);
                params.push(scale * z);
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(DenoiserModel {
            arch,
            params,
            schedule,
        })
    }

    /// Rebuilds a model from stored parts (checkpoint loading).
    pub fn from_parts(arch: ModelArch, schedule: NoiseSchedule, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::Input(format!(
                "parameter vector has {} values, architecture wants {}",
                params.len(),
                arch.param_count()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Input("parameters contain a non-finite value".into()));
        }
        Ok(DenoiserModel {
            arch,
            params,
            schedule,
        })
    }

    pub fn arch(&self) -> &ModelArch {
        &self.arch
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.arch.embed_dim
    }

    /// Sinusoidal timestep features, `len(ts) x time_dim` row-major.
    pub fn time_features(&self, ts: &[usize]) -> Vec<f64> {
        let half = self.arch.time_dim / 2;
        let mut out = Vec::with_capacity(ts.len() * self.arch.time_dim);
        for &t in ts {
            for i in 0..half {
                let freq = 10_000f64.powf(-(i as f64) / half as f64);
                let a = t as f64 * freq;
                out.push(a.sin());
                out.push(a.cos());
            }
        }
        out
    }

    fn check_inputs(&self, x_t: &[f64], ts: &[usize], emb: &[f64]) -> Result<usize> {
        let batch = ts.len();
        if batch == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        if x_t.len() != batch * self.arch.input_dim {
            return Err(Error::Input(format!(
                "x_t has {} values, expected {} x {}",
                x_t.len(),
                batch,
                self.arch.input_dim
            )));
        }
        if emb.len() != self.arch.embed_dim && emb.len() != batch * self.arch.embed_dim {
            return Err(Error::Input(format!(
                "embedding has {} values, expected {} or {}",
                emb.len(),
                self.arch.embed_dim,
                batch * self.arch.embed_dim
            )));
        }
        if let Some(&t) = ts.iter().max() {
            if t >= self.schedule.len() {
                return Err(Error::Parameter(format!(
                    "step {t} out of range for a {}-step schedule",
                    self.schedule.len()
                )));
            }
        }
        Ok(batch)
    }

    /// Assembles `[x_t | time features | embedding]` rows.
    fn assemble_input(&self, x_t: &[f64], ts: &[usize], emb: &[f64], batch: usize) -> Vec<f64> {
        let (di, dt, de) = (self.arch.input_dim, self.arch.time_dim, self.arch.embed_dim);
        let d0 = di + dt + de;
        let tfeat = self.time_features(ts);
        let broadcast = emb.len() == de;
        let mut input = vec![0.0; batch * d0];
        for r in 0..batch {
            let row = &mut input[r * d0..(r + 1) * d0];
            row[..di].copy_from_slice(&x_t[r * di..(r + 1) * di]);
            row[di..di + dt].copy_from_slice(&tfeat[r * dt..(r + 1) * dt]);
            let e = if broadcast {
                emb
            } else {
                &emb[r * de..(r + 1) * de]
            };
            row[di + dt..].copy_from_slice(e);
        }
        input
    }

    /// Fast forward pass without gradient recording.
    ///
    /// `emb` is either a single `embed_dim` vector broadcast over the
    /// batch or one row per sample. Returns the predicted noise,
    /// `batch x input_dim` row-major.
    pub fn predict_batch(&self, x_t: &[f64], ts: &[usize], emb: &[f64]) -> Result<Vec<f64>> {
        let batch = self.check_inputs(x_t, ts, emb)?;
        let mut cur = self.assemble_input(x_t, ts, emb, batch);
        let mut offset = 0usize;
        let shapes = self.arch.layer_shapes();
        let last = shapes.len() - 1;
        for (li, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let mut next = vec![0.0; batch * fan_out];
            matmul_into(&cur, w, &mut next, batch, fan_in, fan_out);
            for r in 0..batch {
                for c in 0..fan_out {
                    next[r * fan_out + c] += b[c];
                }
            }
            if li != last {
                silu_into(&mut next);
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Single-input convenience wrapper around [`Self::predict_batch`].
    pub fn denoise_predict(&self, x_t: &[f64], t: usize, emb: &[f64]) -> Result<Vec<f64>> {
        if emb.len() != self.arch.embed_dim {
            return Err(Error::Input(format!(
                "embedding has {} values, expected {}",
                emb.len(),
                self.arch.embed_dim
            )));
        }
        self.predict_batch(x_t, &[t], emb)
    }

    /// Registers every weight matrix and bias vector as tape leaves.
    pub fn register_params(&self, tape: &mut Tape, requires_grad: bool) -> ParamLeaves {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut offset = 0usize;
        for (fan_in, fan_out) in self.arch.layer_shapes() {
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            if requires_grad {
                weights.push(tape.leaf_from(&[fan_in, fan_out], w));
                biases.push(tape.leaf_from(&[fan_out], b));
            } else {
                weights.push(tape.constant(&[fan_in, fan_out], w));
                biases.push(tape.constant(&[fan_out], b));
            }
        }
        ParamLeaves { weights, biases }
    }

    /// Tape forward pass over pre-assembled input parts.
    ///
    /// `x` is the constant `[batch, input_dim]` noised batch, `tfeat` the
    /// constant timestep features, and `emb` a `[batch, embed_dim]` node
    /// that may carry gradients (mixtures during erasure do).
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        leaves: &ParamLeaves,
        x: TensorId,
        tfeat: TensorId,
        emb: TensorId,
    ) -> Result<TensorId> {
        let mut cur = tape.concat_cols(&[x, tfeat, emb])?;
        let last = leaves.weights.len() - 1;
        for li in 0..leaves.weights.len() {
            cur = tape.matmul(cur, leaves.weights[li])?;
            cur = tape.add_row(cur, leaves.biases[li])?;
            if li != last {
                cur = tape.silu(cur)?;
            }
        }
        Ok(cur)
    }

    /// Full tape forward from raw parts; registers constants internally.
    pub fn forward_tape_from_batch(
        &self,
        tape: &mut Tape,
        leaves: &ParamLeaves,
        x_t: &[f64],
        ts: &[usize],
        emb: TensorId,
    ) -> Result<TensorId> {
        let batch = ts.len();
        let x = tape.constant(&[batch, self.arch.input_dim], x_t);
        let tfeat_values = self.time_features(ts);
        let tfeat = tape.constant(&[batch, self.arch.time_dim], &tfeat_values);
        self.forward_tape(tape, leaves, x, tfeat, emb)
    }

    /// Copies per-layer gradients into one flat vector matching the
    /// parameter layout. Must be called after `tape.backward`.
    pub fn collect_param_grads(&self, tape: &Tape, leaves: &ParamLeaves, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.params.len());
        let mut offset = 0usize;
        for li in 0..leaves.weights.len() {
            let gw = tape.grad(leaves.weights[li]).expect("weights require grad");
            out[offset..offset + gw.len()].copy_from_slice(gw);
            offset += gw.len();
            let gb = tape.grad(leaves.biases[li]).expect("biases require grad");
            out[offset..offset + gb.len()].copy_from_slice(gb);
            offset += gb.len();
        }
    }
}

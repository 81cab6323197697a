//! Ancestral sampling from a trained denoiser.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::DenoiserModel;

/// Draws `n` samples conditioned on one embedding, row-major
/// `n x input_dim`. Deterministic given the rng state.
///
/// Uses the posterior variance `beta_tilde_t = (1 - abar_{t-1}) /
/// (1 - abar_t) * beta_t` for the ancestral noise and no noise at the
/// final step.
pub fn ancestral_sample_batch(
    model: &DenoiserModel,
    emb: &[f64],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if emb.len() != model.embed_dim() {
        return Err(Error::Input(format!(
            "embedding has {} values, expected {}",
            emb.len(),
            model.embed_dim()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let dim = model.input_dim();
    let schedule = model.schedule().clone();
    let big_t = schedule.len();
    let mut x: Vec<f64> = (0..n * dim).map(|_| StandardNormal.sample(rng)).collect();
    let mut ts = vec![0usize; n];
    for t in (0..big_t).rev() {
        ts.fill(t);
        let eps_hat = model.predict_batch(&x, &ts, emb)?;
        let beta = schedule.beta()[t];
        let alpha = schedule.alpha()[t];
        let ab = schedule.alpha_bar()[t];
        let coef = beta / (1.0 - ab).sqrt();
        let inv_sqrt_alpha = 1.0 / alpha.sqrt();
        if t > 0 {
            let ab_prev = schedule.alpha_bar()[t - 1];
            let sigma = ((1.0 - ab_prev) / (1.0 - ab) * beta).sqrt();
            for i in 0..x.len() {
                let z: f64 = StandardNormal.sample(rng);
                x[i] = inv_sqrt_alpha * (x[i] - coef * eps_hat[i]) + sigma * z;
            }
        } else {
            for i in 0..x.len() {
                x[i] = inv_sqrt_alpha * (x[i] - coef * eps_hat[i]);
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Sampling(format!(
                "non-finite state at reverse step {t}"
            )));
        }
    }
    Ok(x)
}

/// One draw from the model's conditional distribution.
pub fn ancestral_sample(
    model: &DenoiserModel,
    emb: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    ancestral_sample_batch(model, emb, 1, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{make_schedule, ModelArch};
    use rand::SeedableRng;

    fn model() -> DenoiserModel {
        let arch = ModelArch {
            input_dim: 2,
            embed_dim: 4,
            time_dim: 4,
            hidden: vec![8],
        };
        DenoiserModel::init(arch, make_schedule(10, 1e-4, 0.02).unwrap(), 21).unwrap()
    }

    #[test]
    fn fixed_seed_reproduces_samples() {
        let model = model();
        let emb = [0.5, 0.5, 0.5, 0.5];
        let mut rng_a = ChaCha8Rng::seed_from_u64(100);
        let mut rng_b = ChaCha8Rng::seed_from_u64(100);
        let a = ancestral_sample_batch(&model, &emb, 16, &mut rng_a).unwrap();
        let b = ancestral_sample_batch(&model, &emb, 16, &mut rng_b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_batch_and_bad_embedding() {
        let model = model();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(ancestral_sample_batch(&model, &[0.0; 4], 0, &mut rng)
            .unwrap()
            .is_empty());
        assert!(matches!(
            ancestral_sample_batch(&model, &[0.0; 3], 1, &mut rng),
            Err(Error::Input(_))
        ));
    }
}

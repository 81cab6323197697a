//! Conditional denoising diffusion on low-dimensional synthetic data.
//!
//! Standard DDPM pieces at desk scale: a linear beta schedule, forward
//! noising `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`, an MLP noise
//! predictor conditioned on a sinusoidal timestep encoding and a concept
//! embedding, epsilon-prediction training, and ancestral sampling.

mod model;
mod sample;
mod train;

pub use model::{DenoiserModel, ModelArch, ParamLeaves};
pub use sample::{ancestral_sample, ancestral_sample_batch};
pub use train::{train_base_model, Adam, TrainConfig, TrainingTrace};

use crate::error::{Error, Result};

/// Forward-process schedule: per-step noise variances and their running
/// products.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear interpolation of beta from `beta_start` to `beta_end` over
    /// `steps` steps.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Parameter(format!(
                "schedule needs at least 2 steps, got {steps}"
            )));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Parameter(format!(
                "betas must satisfy 0 < start <= end < 1, got {beta_start}..{beta_end}"
            )));
        }
        let beta: Vec<f64> = (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
            .collect();
        Self::from_beta(beta)
    }

    /// Rebuilds a schedule from its stored beta vector.
    pub fn from_beta(beta: Vec<f64>) -> Result<Self> {
        if beta.len() < 2 {
            return Err(Error::Parameter("schedule needs at least 2 steps".into()));
        }
        if beta.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::Parameter("every beta must lie in (0, 1)".into()));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut prod = 1.0;
        for &a in &alpha {
            prod *= a;
            alpha_bar.push(prod);
        }
        debug_assert!(alpha_bar.windows(2).all(|w| w[1] < w[0]));
        Ok(NoiseSchedule {
            beta,
            alpha,
            alpha_bar,
        })
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }
}

/// Builds the default linear schedule.
pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    NoiseSchedule::linear(steps, beta_start, beta_end)
}

/// Forward noising: `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn q_sample(x0: &[f64], t: usize, eps: &[f64], schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    if t >= schedule.len() {
        return Err(Error::Parameter(format!(
            "step {t} out of range for a {}-step schedule",
            schedule.len()
        )));
    }
    if x0.len() != eps.len() {
        return Err(Error::Input(format!(
            "q_sample: x0 has {} values but eps has {}",
            x0.len(),
            eps.len()
        )));
    }
    let ab = schedule.alpha_bar[t];
    let (c0, c1) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0
        .iter()
        .zip(eps)
        .map(|(x, e)| c0 * x + c1 * e)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_plus_beta_is_one_everywhere() {
        let s = make_schedule(50, 1e-4, 0.02).unwrap();
        for t in 0..s.len() {
            assert_eq!(s.alpha()[t] + s.beta()[t], 1.0);
        }
        assert_eq!(s.alpha_bar()[0], s.alpha()[0]);
        assert!(s.alpha_bar().windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_bar().iter().all(|&a| a > 0.0 && a < 1.0));
    }

    #[test]
    fn two_step_constant_beta_product() {
        let b = 0.3;
        let s = make_schedule(2, b, b).unwrap();
        assert!((s.alpha_bar()[1] - (1.0 - b) * (1.0 - b)).abs() < 1e-15);
    }

    #[test]
    fn ten_step_alpha_bar_matches_independent_cumulative_product() {
        let s = make_schedule(10, 1e-4, 0.02).unwrap();
        // Independent route: log-domain accumulation of the same betas.
        let mut log_sum = 0.0f64;
        for i in 0..10 {
            let beta = 1e-4 + (0.02 - 1e-4) * i as f64 / 9.0;
            log_sum += (1.0 - beta).ln();
        }
        let expected = log_sum.exp();
        assert!(
            (s.alpha_bar()[9] - expected).abs() < 1e-12,
            "{} vs {expected}",
            s.alpha_bar()[9]
        );
        // Frozen value from an independent high-precision evaluation.
        assert!((s.alpha_bar()[9] - 0.90373941615123701).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            make_schedule(1, 1e-4, 0.02),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            make_schedule(10, 0.0, 0.02),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            make_schedule(10, 0.03, 0.02),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            make_schedule(10, 0.5, 1.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn q_sample_degenerate_inputs() {
        let s = make_schedule(10, 1e-4, 0.02).unwrap();
        let x0 = [1.0, 1.0];
        let zero = [0.0, 0.0];
        let eps = [0.5, -0.5];
        let t = 9;
        let ab = s.alpha_bar()[t];

        let xt = q_sample(&x0, t, &zero, &s).unwrap();
        for v in &xt {
            assert!((v - ab.sqrt()).abs() < 1e-15);
        }
        let xt = q_sample(&zero, t, &eps, &s).unwrap();
        assert!((xt[0] - 0.5 * (1.0 - ab).sqrt()).abs() < 1e-15);
        assert!((xt[1] + 0.5 * (1.0 - ab).sqrt()).abs() < 1e-15);

        // Closed form evaluated independently, frozen.
        let xt = q_sample(&x0, t, &eps, &s).unwrap();
        assert!((xt[0] - 1.10578154953103052).abs() < 1e-15, "{}", xt[0]);
        assert!((xt[1] - 0.795522651433388543).abs() < 1e-15, "{}", xt[1]);

        assert!(matches!(
            q_sample(&x0, 10, &eps, &s),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            q_sample(&x0[..1], 0, &eps, &s),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn noising_residual_recovers_eps() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let s = make_schedule(100, 1e-4, 0.02).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for t in [0, 17, 50, 99] {
            let x0: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
            let eps: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
            let xt = q_sample(&x0, t, &eps, &s).unwrap();
            let ab = s.alpha_bar()[t];
            for i in 0..6 {
                let rec = (xt[i] - ab.sqrt() * x0[i]) / (1.0 - ab).sqrt();
                assert!((rec - eps[i]).abs() < 1e-10, "t={t} i={i}: {rec} vs {}", eps[i]);
            }
        }
    }

}

//! Desk-scale laboratory for concept erasure in conditional diffusion
//! models.
//!
//! The crate trains a small conditional denoising diffusion model on
//! synthetic 2-d concept distributions, erases concepts from it either by
//! mapping them to a fixed target or by adaptive guided erasure (a minimax
//! search over Gumbel-Softmax concept mixtures), and quantifies the side
//! effects of each erasure through impact matrices and concept-graph
//! statistics.
//!
//! Module map:
//! - [`numerics`]: dense tensors with tape-based reverse-mode autodiff
//! - [`diffusion`]: noise schedule, denoiser network, training, sampling
//! - [`concepts`]: synthetic concept space, frozen embeddings, mixtures
//! - [`erasure`]: fixed-target and adaptive guided erasure fine-tuning
//! - [`evaluation`]: classifier oracle, DS/CS/ESR/PSR metrics, impact graphs
//! - [`harness`]: experiment configs, recipes, persistence, reports

pub mod concepts;
pub mod diffusion;
pub mod erasure;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod numerics;

pub use concepts::{ConceptId, ConceptRecord, ConceptSpace, SpaceSpec, VocabularySubset};
pub use diffusion::{DenoiserModel, NoiseSchedule, TrainConfig, TrainingTrace};
pub use erasure::{ErasureConfig, ErasureRunRecord, TargetDictionary, TargetStrategy};
pub use error::{Error, ErrorKind, Result};
pub use evaluation::{ClassifierOracle, GenerationReport, ImpactMatrix, MetricKind};
pub use harness::{ArtifactManifest, ExperimentConfig, ExperimentKind};
pub use numerics::{Tape, Tensor, TensorId};

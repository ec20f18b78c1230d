//! Factorization of bipolar product hypervectors with a stochastic resonator
//! network, sparse winners-take-all activations and a PCM crossbar noise model.

pub mod activation;
pub mod error;
pub mod factorizer;
pub mod harness;
pub mod hyperopt;
pub mod noise;
mod normal;
pub mod oracle;
pub mod seed;
pub mod vsa;

pub use activation::ActivationSpec;
pub use error::{Error, Result};
pub use factorizer::{
    CodebookSet, ConvergencePolicy, FactorizationResult, Factorizer, FactorizerConfig, UpdatePolicy,
};
pub use harness::{ExperimentConfig, TrialRecord, TrialSummary};
pub use hyperopt::{HyperPoint, Observation};
pub use noise::{Crossbar, NoiseBackend, PcmParams, ProgrammedArray};
pub use vsa::{Codebook, Hypervector, SimilarityVector};

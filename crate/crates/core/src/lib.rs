//! Geometric uncertainty scores for batches of sampled LLM responses.
//!
//! Response embeddings are L2-normalized and reduced with a per-batch PCA
//! ([`embedding`]); archetypes are fitted on the reduced batch
//! ([`archetypes`]); the log-volume of the archetype simplex gives a global
//! score and per-response terms fused by ranks give a local suspicion score
//! used for Best-of-N selection ([`geometry`], [`suspicion`]).
//! [`evaluation`] holds threshold tuning, F1/AUROC, hallucination-rate
//! subsets and the Mann-Whitney term analysis.
//!
//! Kernels are generic over [`Scalar`] (`f32` or `f64`); the `*64` aliases
//! below name the double-precision instantiations used by the pipeline.

pub mod archetypes;
pub mod batch;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod jsonl;
pub mod records;
pub mod scalar;
pub mod simplex;
pub mod suspicion;
pub mod synthetic;

pub use archetypes::{fit_aa, fit_aa_from, init_archetypes, AaOptions, ArchetypeModel};
pub use embedding::{fit_pca, normalize_l2, reduce_batch, EmbeddingBatch, PcaFit, ReducedBatch};
pub use error::{GeoError, Result};
pub use batch::{analyze_batch, BatchConfig, BatchOutcome};
pub use geometry::{geometric_volume, simplex_volume, GlobalScore};
pub use scalar::Scalar;
pub use simplex::project_simplex;
pub use suspicion::{select_best_of_n, SuspicionBreakdown, SuspicionOptions};

pub type Matrix64 = nalgebra::DMatrix<f64>;
pub type Vector64 = nalgebra::DVector<f64>;
pub type EmbeddingBatch64 = EmbeddingBatch<f64>;
pub type ReducedBatch64 = ReducedBatch<f64>;
pub type PcaFit64 = PcaFit<f64>;
pub type ArchetypeModel64 = ArchetypeModel<f64>;
pub type GlobalScore64 = GlobalScore<f64>;
pub type SuspicionBreakdown64 = SuspicionBreakdown<f64>;
pub type ArchetypeModel32 = ArchetypeModel<f32>;
pub type ReducedBatch32 = ReducedBatch<f32>;

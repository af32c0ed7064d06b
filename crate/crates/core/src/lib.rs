//! Self-active-learning pretraining for small multilingual masked language
//! models: a tensor and autodiff core, a BPE tokenizer, a transformer
//! encoder, MLM training, and the split / train / generate / augment loop.

pub mod active;
pub mod config;
pub mod corpus;
pub mod diversity;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod nn;
pub mod seed;
pub mod tokenizer;
pub mod toy;
pub mod training;

pub use active::{run_experiment, run_round, GenerationRecord, RoundConfig};
pub use config::ExperimentConfig;
pub use corpus::{load_corpus, LanguageDataset, MultiCorpus, SplitSpec};
pub use diversity::DiversityConfig;
pub use error::{Error, Result};
pub use evaluation::EvalReport;
pub use model::{Batch, ModelConfig, TransformerMLM};
pub use nn::{Graph, Tensor, Var};
pub use tokenizer::Tokenizer;
pub use training::{LossMode, MaskingPolicy, OptimizerConfig, TrainState};

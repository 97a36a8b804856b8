//! Desk-scale multilingual translation pipeline on synthetic languages.
//!
//! Every stage of a modern translation recipe — corpus generation and
//! filtering, subword vocabularies, multi-directional pretraining,
//! specific-directional finetuning, cycle translation, bidirectional
//! self-training, beam-search decoding, checkpoint ensembling,
//! generalization finetuning, and output post-processing — implemented
//! over six synthetic languages with an exact translation oracle, so the
//! whole pipeline is testable on a laptop CPU.

pub mod adapt;
pub mod augment;
pub mod checkpoint;
pub mod datafilter;
pub mod decode;
pub mod error;
pub mod manifest;
pub mod model;
pub mod numerics;
pub mod postprocess;
pub mod subword;
pub mod toycorpus;
pub mod train;

pub use error::{Error, Result};

//! Cross-language plagiarism detection through multilingual concept
//! clusters, BM25 candidate retrieval and pairwise translation scoring.

pub mod analysis;
pub mod error;
pub mod evalkit;
pub mod index;
pub mod pipeline;
pub mod textproc;
pub mod thesaurus;

pub use error::{Error, Result};

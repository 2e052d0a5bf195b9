//! Synthetic data: toy GAN tasks and a small dysarthria-like corpus.

mod corpus;
mod toy;

pub use corpus::{corpus_stft, corpus_words, generate_corpus, impair, CorpusConfig, Impairment, SynthCorpus};
pub use toy::{mean_l1, negated_column_blocks, shifted_pairs};

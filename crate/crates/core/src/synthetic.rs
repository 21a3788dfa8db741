//! Seeded, separable two-class corpus for convergence checks and demos.
//!
//! Each document draws a fixed share of its tokens from a word pool owned
//! by its class and the rest from a pool shared by both classes. Words are
//! letters followed by two digits, so they survive tokenization, stop-word
//! removal and stemming unchanged.

use crate::ingest::{Dataset, Label, Record};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_docs: usize,
    pub doc_len: usize,
    pub class_pool: usize,
    pub noise_pool: usize,
    /// Share of each document's tokens taken from its class pool.
    pub signal_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_docs: 400,
            doc_len: 30,
            class_pool: 50,
            noise_pool: 50,
            signal_fraction: 0.8,
            seed: 2024,
        }
    }
}

/// Pool word `i` for a class (`ver`, `fab`) or the shared pool (`com`).
pub fn pool_word(prefix: &str, i: usize) -> String {
    format!("{prefix}{i:02}")
}

pub fn class_prefix(label: Label) -> &'static str {
    match label {
        Label::Real => "ver",
        Label::Fake => "fab",
    }
}

pub const NOISE_PREFIX: &str = "com";

/// Documents alternate Real, Fake, Real, ... so classes are balanced.
pub fn generate(spec: &SyntheticSpec) -> Dataset {
    let mut rng = SplitMix64::new(spec.seed);
    let signal = (spec.signal_fraction * spec.doc_len as f64).round() as usize;
    let records = (0..spec.n_docs)
        .map(|i| {
            let label = Label::ALL[i % 2];
            let mut words: Vec<String> = (0..spec.doc_len)
                .map(|k| {
                    let (prefix, pool) = if k < signal {
                        (class_prefix(label), spec.class_pool)
                    } else {
                        (NOISE_PREFIX, spec.noise_pool)
                    };
                    pool_word(prefix, (rng.next() % pool as u64) as usize)
                })
                .collect();
            rng.shuffle(&mut words);
            Record::new(words.join(" "), label).expect("documents are never blank")
        })
        .collect();
    Dataset::new(records, format!("synthetic(seed={})", spec.seed))
}

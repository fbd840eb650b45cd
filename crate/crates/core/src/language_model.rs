//! Unigram language model over label tokens with add-α smoothing.
//!
//! All unseen tokens share one extra vocabulary slot, so the smoothed
//! distribution over `vocab ∪ {unseen}` sums to one.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::persist::Format;
use crate::tokenize::{tokens, TOKENIZER_VERSION};

pub(crate) const FORMAT: Format = Format {
    kind: "language model",
    magic: *b"NELULM\0\0",
    version: 1,
};

const SHARD: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnigramLm {
    counts: BTreeMap<String, u64>,
    total_tokens: u64,
    alpha: f64,
    tokenizer_version: u32,
    pub source_generation: Option<u64>,
}

fn count_into(counts: &mut BTreeMap<String, u64>, phrase: &str) {
    for tok in tokens(phrase) {
        match counts.get_mut(tok) {
            Some(c) => *c += 1,
            None => {
                counts.insert(tok.to_string(), 1);
            }
        }
    }
}

impl UnigramLm {
    /// Counts tokens of every phrase. Shards are counted under `exec` and
    /// merged; integer counts make the result independent of the policy.
    pub fn train<S: AsRef<str> + Sync>(phrases: &[S], alpha: f64, exec: Exec) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        let shards = exec.map_chunks(phrases, SHARD, |chunk| {
            let mut counts = BTreeMap::new();
            for p in chunk {
                count_into(&mut counts, p.as_ref());
            }
            counts
        });
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for shard in shards {
            for (tok, c) in shard {
                *counts.entry(tok).or_insert(0) += c;
            }
        }
        Self::from_counts(counts, alpha)
    }

    /// Single-pass training from a phrase stream.
    pub fn train_stream<I, S>(phrases: I, alpha: f64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts = BTreeMap::new();
        for p in phrases {
            count_into(&mut counts, p.as_ref());
        }
        Self::from_counts(counts, alpha)
    }

    fn from_counts(counts: BTreeMap<String, u64>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        let total_tokens: u64 = counts.values().sum();
        if total_tokens == 0 {
            return Err(Error::EmptyCorpus);
        }
        Ok(UnigramLm {
            counts,
            total_tokens,
            alpha,
            tokenizer_version: TOKENIZER_VERSION,
            source_generation: None,
        })
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn counts(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(t, &c)| (t.as_str(), c))
    }

    fn denominator(&self) -> f64 {
        self.total_tokens as f64 + self.alpha * (self.vocab_size() as f64 + 1.0)
    }

    pub fn token_log_prob(&self, token: &str) -> f64 {
        ((self.count(token) as f64 + self.alpha) / self.denominator()).ln()
    }

    /// log p(phrase); zero for a phrase without tokens.
    pub fn phrase_log_prob(&self, phrase: &str) -> f64 {
        let denom = self.denominator().ln();
        tokens(phrase)
            .map(|t| (self.count(t) as f64 + self.alpha).ln() - denom)
            .sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        FORMAT.save(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let lm: UnigramLm = FORMAT.load(path)?;
        if lm.tokenizer_version != TOKENIZER_VERSION {
            return Err(Error::VersionMismatch {
                kind: "language model tokenizer",
                found: lm.tokenizer_version,
                expected: TOKENIZER_VERSION,
            });
        }
        Ok(lm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> UnigramLm {
        UnigramLm::train(&["a b", "b"], 1.0, Exec::Sequential).unwrap()
    }

    #[test]
    fn counts_tokens() {
        let lm = toy();
        assert_eq!(lm.count("a"), 1);
        assert_eq!(lm.count("b"), 2);
        assert_eq!(lm.total_tokens(), 3);
        assert_eq!(lm.vocab_size(), 2);
    }

    #[test]
    fn duplicates_double_counts() {
        let lm = UnigramLm::train(&["a b", "b", "a b", "b"], 1.0, Exec::Sequential).unwrap();
        assert_eq!(lm.count("a"), 2);
        assert_eq!(lm.count("b"), 4);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let none: [&str; 0] = [];
        assert!(matches!(UnigramLm::train(&none, 1.0, Exec::Sequential), Err(Error::EmptyCorpus)));
        assert!(matches!(UnigramLm::train(&["  ", ""], 1.0, Exec::Sequential), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn hand_evaluated_probabilities() {
        let lm = toy();
        assert_eq!(lm.phrase_log_prob(""), 0.0);
        // (2 + 1) / (3 + 1 * (2 + 1))
        assert!((lm.phrase_log_prob("b") - (3.0f64 / 6.0).ln()).abs() < 1e-15);
        assert!((lm.phrase_log_prob("zzz") - (1.0f64 / 6.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn extended_vocabulary_sums_to_one() {
        let lm = UnigramLm::train(&["New York City", "New Jersey", "York"], 0.5, Exec::Sequential).unwrap();
        let seen: f64 = lm.counts().map(|(t, _)| lm.token_log_prob(t).exp()).sum();
        let unseen = lm.token_log_prob("<never seen>").exp();
        assert!((seen + unseen - 1.0).abs() < 1e-9);
    }

    #[test]
    fn round_trips_on_disk() {
        let lm = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.bin");
        lm.save(&path).unwrap();
        assert_eq!(UnigramLm::load(&path).unwrap(), lm);
    }

    fn arb_phrases() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec("[a-d]{1,3}( [a-d]{1,3}){0,3}", 1..20)
    }

    proptest! {
        #[test]
        fn order_does_not_matter(phrases in arb_phrases()) {
            let mut rev = phrases.clone();
            rev.reverse();
            let a = UnigramLm::train(&phrases, 1.0, Exec::Parallel).unwrap();
            let b = UnigramLm::train(&rev, 1.0, Exec::Sequential).unwrap();
            let c = UnigramLm::train_stream(phrases.iter(), 1.0).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(&a, &c);
        }

        #[test]
        fn additive_over_concatenation(phrases in arb_phrases(), u in "[a-e]{1,3}( [a-e]{1,3}){0,2}", v in "[a-e]{1,3}( [a-e]{1,3}){0,2}") {
            let lm = UnigramLm::train(&phrases, 1.0, Exec::Sequential).unwrap();
            let joined = format!("{u} {v}");
            let lhs = lm.phrase_log_prob(&joined);
            let rhs = lm.phrase_log_prob(&u) + lm.phrase_log_prob(&v);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn frequency_orders_probability(phrases in arb_phrases()) {
            let lm = UnigramLm::train(&phrases, 1.0, Exec::Sequential).unwrap();
            let toks: Vec<(String, u64)> = lm.counts().map(|(t, c)| (t.to_string(), c)).collect();
            for (a, ca) in &toks {
                for (b, cb) in &toks {
                    if ca > cb {
                        prop_assert!(lm.phrase_log_prob(a) > lm.phrase_log_prob(b));
                    }
                }
            }
        }
    }
}

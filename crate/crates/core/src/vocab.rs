//! Shared vocabulary over both domains, token-id reviews, the unigram^0.75
//! negative-sampling distribution and context-window extraction.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::PreparedReview;
use crate::error::{DseError, Result};

pub type WordId = usize;

/// A review with tokens mapped to vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Review {
    pub domain: usize,
    pub label: u8,
    pub tokens: Vec<WordId>,
}

/// Immutable word <-> id mapping with per-domain counts. Ids are dense,
/// ordered by descending total count with lexicographic tie-break.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    /// counts[w] = [count in domain 0, count in domain 1]
    counts: Vec<[u64; 2]>,
    index: HashMap<String, WordId>,
    min_count: u64,
}

impl Vocabulary {
    /// Count words over both domains, drop those under `min_count`, and
    /// rewrite the reviews in id space. Reviews left without any token are
    /// discarded.
    pub fn build(
        reviews: &[PreparedReview],
        min_count: u64,
    ) -> Result<(Vocabulary, Vec<Review>)> {
        if reviews.is_empty() {
            return Err(DseError::EmptyCorpus);
        }
        let mut counts: HashMap<&str, [u64; 2]> = HashMap::new();
        for review in reviews {
            for token in &review.tokens {
                counts.entry(token.as_str()).or_default()[review.domain] += 1;
            }
        }
        let mut entries: Vec<(&str, [u64; 2])> = counts
            .into_iter()
            .filter(|(_, c)| c[0] + c[1] >= min_count)
            .collect();
        if entries.is_empty() {
            return Err(DseError::EmptyVocabulary { min_count });
        }
        entries.sort_by(|a, b| {
            let ta = a.1[0] + a.1[1];
            let tb = b.1[0] + b.1[1];
            tb.cmp(&ta).then_with(|| a.0.cmp(b.0))
        });

        let words: Vec<String> = entries.iter().map(|(w, _)| w.to_string()).collect();
        let counts: Vec<[u64; 2]> = entries.iter().map(|(_, c)| *c).collect();
        let index: HashMap<String, WordId> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        let vocab = Vocabulary {
            words,
            counts,
            index,
            min_count,
        };

        let id_reviews = reviews
            .iter()
            .filter_map(|r| {
                let tokens: Vec<WordId> = r
                    .tokens
                    .iter()
                    .filter_map(|t| vocab.id(t))
                    .collect();
                if tokens.is_empty() {
                    None
                } else {
                    Some(Review {
                        domain: r.domain,
                        label: r.label,
                        tokens,
                    })
                }
            })
            .collect();
        Ok((vocab, id_reviews))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<WordId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Total count of `id` over both domains.
    pub fn count(&self, id: WordId) -> u64 {
        self.counts[id][0] + self.counts[id][1]
    }

    pub fn count_in(&self, id: WordId, domain: usize) -> u64 {
        self.counts[id][domain]
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn total_tokens(&self) -> u64 {
        self.counts.iter().map(|c| c[0] + c[1]).sum()
    }

    /// Reconstruct a vocabulary from raw parts (deserialization).
    pub(crate) fn from_parts(
        words: Vec<String>,
        counts: Vec<[u64; 2]>,
        min_count: u64,
    ) -> Vocabulary {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary {
            words,
            counts,
            index,
            min_count,
        }
    }

    /// Write the vocabulary dump: a `DSE-VOCAB v1 <size> <min_count>` header,
    /// then one `word<TAB>count_p<TAB>count_q` line per word in id order.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "DSE-VOCAB v1 {} {}", self.len(), self.min_count)?;
        for (word, counts) in self.words.iter().zip(&self.counts) {
            writeln!(out, "{}\t{}\t{}", word, counts[0], counts[1])?;
        }
        Ok(())
    }

    pub fn write_dump_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| DseError::io(path, e))?;
        self.write_dump(std::io::BufWriter::new(file))
            .map_err(|e| DseError::io(path, e))
    }

    pub fn read_dump<R: BufRead>(reader: R) -> Result<Vocabulary> {
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or(DseError::Parse {
            line: 1,
            msg: "empty vocabulary file".into(),
        })?;
        let header = header.map_err(|e| DseError::Parse {
            line: 1,
            msg: e.to_string(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "DSE-VOCAB" || fields[1] != "v1" {
            return Err(DseError::Parse {
                line: 1,
                msg: "expected header `DSE-VOCAB v1 <size> <min_count>`".into(),
            });
        }
        let size: usize = fields[2].parse().map_err(|_| DseError::Parse {
            line: 1,
            msg: "bad size in header".into(),
        })?;
        let min_count: u64 = fields[3].parse().map_err(|_| DseError::Parse {
            line: 1,
            msg: "bad min_count in header".into(),
        })?;
        let mut words = Vec::with_capacity(size);
        let mut counts = Vec::with_capacity(size);
        for (i, line) in lines {
            let line = line.map_err(|e| DseError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(w), Some(cp), Some(cq)) => {
                    let cp: u64 = cp.parse().map_err(|_| DseError::Parse {
                        line: i + 1,
                        msg: "bad count".into(),
                    })?;
                    let cq: u64 = cq.parse().map_err(|_| DseError::Parse {
                        line: i + 1,
                        msg: "bad count".into(),
                    })?;
                    words.push(w.to_string());
                    counts.push([cp, cq]);
                }
                _ => {
                    return Err(DseError::Parse {
                        line: i + 1,
                        msg: "expected `word<TAB>count_p<TAB>count_q`".into(),
                    })
                }
            }
        }
        if words.len() != size {
            return Err(DseError::Parse {
                line: 1,
                msg: format!("header says {} words, file has {}", size, words.len()),
            });
        }
        Ok(Vocabulary::from_parts(words, counts, min_count))
    }
}

/// Walker alias table realizing P(w) proportional to count(w)^(3/4).
/// Sampling is O(1) and the table is exact (no quantization).
#[derive(Debug, Clone)]
pub struct UnigramTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
    weights: Vec<f64>,
    total_weight: f64,
}

impl UnigramTable {
    pub fn new(vocab: &Vocabulary) -> UnigramTable {
        let weights: Vec<f64> = (0..vocab.len())
            .map(|w| (vocab.count(w) as f64).powf(0.75))
            .collect();
        Self::from_weights(weights)
    }

    fn from_weights(weights: Vec<f64>) -> UnigramTable {
        let n = weights.len();
        let total_weight: f64 = weights.iter().sum();
        let mut prob = vec![0.0; n];
        let mut alias = vec![0usize; n];
        let scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total_weight).collect();
        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        let mut scaled = scaled;
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        for &i in large.iter().chain(small.iter()) {
            prob[i] = 1.0;
        }
        UnigramTable {
            prob,
            alias,
            weights,
            total_weight,
        }
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// The exact sampling probability of word `w` (before any exclusion).
    pub fn probability(&self, w: WordId) -> f64 {
        self.weights[w] / self.total_weight
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> WordId {
        let i = rng.gen_range(0..self.prob.len());
        if rng.gen::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

/// Seed-controlled sampler drawing negatives from a shared [`UnigramTable`].
/// Each worker owns its own sampler; the table itself is immutable.
pub struct NegativeSampler<'a> {
    table: &'a UnigramTable,
    rng: ChaCha8Rng,
}

impl<'a> NegativeSampler<'a> {
    pub fn new(table: &'a UnigramTable, seed: u64) -> NegativeSampler<'a> {
        NegativeSampler {
            table,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Draw one word id distinct from `exclude`, by rejection.
    pub fn sample_negative(&mut self, exclude: WordId) -> Result<WordId> {
        if self.table.len() < 2 {
            return Err(DseError::VocabularyTooSmall);
        }
        loop {
            let w = self.table.draw(&mut self.rng);
            if w != exclude {
                return Ok(w);
            }
        }
    }
}

/// Context word ids at offsets 1..=window on both sides of `position`,
/// truncated at the sequence boundaries. Duplicated surface words appear
/// once per position.
pub fn context_window(tokens: &[WordId], position: usize, window: usize) -> Vec<WordId> {
    let lo = position.saturating_sub(window);
    let hi = (position + window).min(tokens.len().saturating_sub(1));
    (lo..=hi)
        .filter(|&i| i != position)
        .map(|i| tokens[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PreparedReview;

    fn prepared(domain: usize, label: u8, tokens: &[&str]) -> PreparedReview {
        PreparedReview {
            domain,
            label,
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
        }
    }

    #[test]
    fn build_orders_by_count_then_word() {
        let reviews = vec![
            prepared(0, 1, &["good", "good", "apple"]),
            prepared(1, 0, &["good", "apple"]),
        ];
        let (vocab, _) = Vocabulary::build(&reviews, 1).unwrap();
        assert_eq!(vocab.id("good"), Some(0));
        assert_eq!(vocab.id("apple"), Some(1));
        assert_eq!(vocab.count(0), 3);
        assert_eq!(vocab.count_in(1, 0), 1);
        assert_eq!(vocab.count_in(1, 1), 1);
    }

    #[test]
    fn tie_breaks_lexicographic() {
        let reviews = vec![prepared(0, 1, &["b", "a", "b", "a"])];
        let (vocab, _) = Vocabulary::build(&reviews, 1).unwrap();
        assert_eq!(vocab.id("a"), Some(0));
        assert_eq!(vocab.id("b"), Some(1));
    }

    #[test]
    fn min_count_drops_words_and_rewrites_reviews() {
        let reviews = vec![
            prepared(0, 1, &["keep", "keep", "rare"]),
            prepared(1, 0, &["rare2"]),
        ];
        let (vocab, id_reviews) = Vocabulary::build(&reviews, 2).unwrap();
        assert_eq!(vocab.len(), 1);
        assert_eq!(id_reviews.len(), 1);
        assert_eq!(id_reviews[0].tokens, vec![0, 0]);
    }

    #[test]
    fn all_rare_is_an_error() {
        let reviews = vec![prepared(0, 1, &["rare"])];
        assert!(matches!(
            Vocabulary::build(&reviews, 2),
            Err(DseError::EmptyVocabulary { .. })
        ));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            Vocabulary::build(&[], 1),
            Err(DseError::EmptyCorpus)
        ));
    }

    #[test]
    fn counts_sum_to_kept_tokens() {
        let reviews = vec![
            prepared(0, 1, &["a", "b", "c", "a"]),
            prepared(1, 0, &["b", "b", "d"]),
        ];
        let (vocab, id_reviews) = Vocabulary::build(&reviews, 1).unwrap();
        let kept: usize = id_reviews.iter().map(|r| r.tokens.len()).sum();
        assert_eq!(vocab.total_tokens(), kept as u64);
    }

    #[test]
    fn build_is_deterministic() {
        let reviews = vec![
            prepared(0, 1, &["x", "y", "z", "x"]),
            prepared(1, 0, &["y", "w", "w"]),
        ];
        let (a, ra) = Vocabulary::build(&reviews, 1).unwrap();
        let (b, rb) = Vocabulary::build(&reviews, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn dump_roundtrip() {
        let reviews = vec![
            prepared(0, 1, &["alpha", "beta", "alpha"]),
            prepared(1, 0, &["beta", "gamma"]),
        ];
        let (vocab, _) = Vocabulary::build(&reviews, 1).unwrap();
        let mut buf = Vec::new();
        vocab.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("DSE-VOCAB v1 3 1\n"));
        let parsed = Vocabulary::read_dump(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(parsed, vocab);
    }

    #[test]
    fn alias_table_probability_is_exact() {
        let reviews = vec![prepared(0, 1, &["a"; 8]), prepared(1, 0, &["b"])];
        let (vocab, _) = Vocabulary::build(&reviews, 1).unwrap();
        let table = UnigramTable::new(&vocab);
        let p_a = 8f64.powf(0.75) / (8f64.powf(0.75) + 1.0);
        assert!((table.probability(vocab.id("a").unwrap()) - p_a).abs() < 1e-15);
        assert!((p_a - 0.8263).abs() < 5e-4);
    }

    #[test]
    fn sampler_matches_distribution_chi_square() {
        // counts a:8 b:4 c:2 d:1 -> P from ^0.75 weights; 100k seeded draws.
        let mut reviews = vec![prepared(0, 1, &["a"; 8])];
        reviews.push(prepared(0, 1, &["b"; 4]));
        reviews.push(prepared(1, 0, &["c"; 2]));
        reviews.push(prepared(1, 0, &["d"]));
        let (vocab, _) = Vocabulary::build(&reviews, 1).unwrap();
        let table = UnigramTable::new(&vocab);
        let mut sampler = NegativeSampler::new(&table, 12345);
        let draws = 100_000usize;
        let mut observed = vec![0u64; vocab.len()];
        for _ in 0..draws {
            // usize::MAX excludes nothing.
            observed[sampler.sample_negative(usize::MAX).unwrap()] += 1;
        }
        let mut chi2 = 0.0;
        for w in 0..vocab.len() {
            let expected = table.probability(w) * draws as f64;
            let diff = observed[w] as f64 - expected;
            chi2 += diff * diff / expected;
        }
        // chi-square critical value, df = 3, alpha = 0.01
        assert!(chi2 < 11.345, "chi2 = {chi2}");
    }

    #[test]
    fn exclusion_leaves_single_candidate() {
        let reviews = vec![prepared(0, 1, &["a", "a", "b"])];
        let (vocab, _) = Vocabulary::build(&reviews, 1).unwrap();
        let table = UnigramTable::new(&vocab);
        let mut sampler = NegativeSampler::new(&table, 7);
        let a = vocab.id("a").unwrap();
        let b = vocab.id("b").unwrap();
        for _ in 0..50 {
            assert_eq!(sampler.sample_negative(a).unwrap(), b);
        }
    }

    #[test]
    fn single_word_vocab_cannot_sample() {
        let reviews = vec![prepared(0, 1, &["only"])];
        let (vocab, _) = Vocabulary::build(&reviews, 1).unwrap();
        let table = UnigramTable::new(&vocab);
        let mut sampler = NegativeSampler::new(&table, 7);
        assert!(matches!(
            sampler.sample_negative(0),
            Err(DseError::VocabularyTooSmall)
        ));
    }

    #[test]
    fn context_window_boundaries() {
        let tokens = vec![10, 11, 12, 13, 14];
        assert_eq!(context_window(&tokens, 2, 3), vec![10, 11, 13, 14]);
        assert_eq!(context_window(&tokens, 0, 1), vec![11]);
        assert_eq!(context_window(&[42], 0, 3), Vec::<WordId>::new());
        assert_eq!(context_window(&tokens, 4, 2), vec![12, 13]);
    }
}

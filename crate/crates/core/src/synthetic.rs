//! Structured synthetic review corpus for end-to-end checks.
//!
//! The generator plants word populations with known behavior: common words
//! whose sentiment agrees across both domains, flipped words that occur with
//! positive labels and contexts in the first domain but negative ones in the
//! second, domain-exclusive words, and neutral fillers. Reviews built from
//! flipped words carry no common-word sentiment signal, so representations
//! that cannot separate the two domains lose exactly there.
//!
//! Generated word forms are chosen to pass the preprocessing pipeline
//! unchanged (lowercase, no stopword collisions, Porter-stable), so a
//! written corpus reloads to the same token sequences.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DomainPair, PreparedReview};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordRole {
    CommonPositive,
    CommonNegative,
    Flipped,
    ExclusiveFirst,
    ExclusiveSecond,
    Filler,
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub reviews_per_domain: usize,
    pub seed: u64,
    pub common_positive: usize,
    pub common_negative: usize,
    pub flipped: usize,
    pub exclusive_per_domain: usize,
    pub fillers: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Probability that a token slot holds a sentiment-bearing word.
    pub sentiment_slot_prob: f64,
    /// Probability that a token slot holds a domain-exclusive word.
    pub exclusive_slot_prob: f64,
    /// Probability that an eligible review draws its sentiment words from
    /// the flipped population instead of the common one.
    pub flipped_focus_prob: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            reviews_per_domain: 2000,
            seed: 7,
            common_positive: 25,
            common_negative: 25,
            flipped: 20,
            exclusive_per_domain: 35,
            fillers: 160,
            min_tokens: 8,
            max_tokens: 16,
            sentiment_slot_prob: 0.45,
            exclusive_slot_prob: 0.15,
            flipped_focus_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub domains: DomainPair,
    pub reviews: Vec<PreparedReview>,
    pub words: Vec<(String, WordRole)>,
}

impl SyntheticCorpus {
    pub fn words_with_role(&self, role: WordRole) -> Vec<&str> {
        self.words
            .iter()
            .filter(|(_, r)| *r == role)
            .map(|(w, _)| w.as_str())
            .collect()
    }

    /// Write one domain's reviews as corpus JSONL, with ratings derived from
    /// the labels (positive 4.0..5.0, negative 1.0..2.0).
    pub fn write_domain_jsonl<W: Write>(&self, domain: usize, mut out: W) -> std::io::Result<()> {
        let mut idx = 0usize;
        for review in self.reviews.iter().filter(|r| r.domain == domain) {
            let rating = if review.label == 1 {
                [4.0, 4.5, 5.0][idx % 3]
            } else {
                [1.0, 1.5, 2.0][idx % 3]
            };
            idx += 1;
            let line = serde_json::json!({
                "domain": self.domains.name(domain),
                "rating": rating,
                "text": review.tokens.join(" "),
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Word roles as `word<TAB>role` lines.
    pub fn write_roles_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (word, role) in &self.words {
            let tag = match role {
                WordRole::CommonPositive => "common-positive",
                WordRole::CommonNegative => "common-negative",
                WordRole::Flipped => "flipped",
                WordRole::ExclusiveFirst => "exclusive-first",
                WordRole::ExclusiveSecond => "exclusive-second",
                WordRole::Filler => "filler",
            };
            writeln!(out, "{word}\t{tag}")?;
        }
        Ok(())
    }
}

/// Consonant-vowel word forms that the Porter stemmer leaves unchanged:
/// alternating CV syllables never end in a rule suffix.
fn role_word(prefix: &str, index: usize) -> String {
    const CONSONANTS: [char; 8] = ['b', 'f', 'j', 'k', 'm', 'p', 'v', 'z'];
    const VOWELS: [char; 3] = ['a', 'o', 'u'];
    let mut word = String::from(prefix);
    let mut n = index;
    let mut pos = 0usize;
    loop {
        word.push(CONSONANTS[n % 8]);
        word.push(VOWELS[pos % 3]);
        n /= 8;
        pos += 1;
        if n == 0 {
            break;
        }
    }
    word
}

fn role_words(prefix: &str, count: usize, role: WordRole) -> Vec<(String, WordRole)> {
    (0..count).map(|i| (role_word(prefix, i), role)).collect()
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let mut words = Vec::new();
    words.extend(role_words("lum", cfg.common_positive, WordRole::CommonPositive));
    words.extend(role_words("dor", cfg.common_negative, WordRole::CommonNegative));
    words.extend(role_words("ziv", cfg.flipped, WordRole::Flipped));
    words.extend(role_words("tak", cfg.exclusive_per_domain, WordRole::ExclusiveFirst));
    words.extend(role_words("rew", cfg.exclusive_per_domain, WordRole::ExclusiveSecond));
    words.extend(role_words("pon", cfg.fillers, WordRole::Filler));

    let pool = |role: WordRole| -> Vec<String> {
        words
            .iter()
            .filter(|(_, r)| *r == role)
            .map(|(w, _)| w.clone())
            .collect()
    };
    let common_positive = pool(WordRole::CommonPositive);
    let common_negative = pool(WordRole::CommonNegative);
    let flipped = pool(WordRole::Flipped);
    let exclusive = [pool(WordRole::ExclusiveFirst), pool(WordRole::ExclusiveSecond)];
    let fillers = pool(WordRole::Filler);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reviews = Vec::with_capacity(cfg.reviews_per_domain * 2);
    for domain in 0..2usize {
        for _ in 0..cfg.reviews_per_domain {
            let label: u8 = rng.gen_range(0..2);
            // Flipped words are positive in the first domain and negative in
            // the second; only matching reviews may carry them.
            let polarity_matches = (domain == 0 && label == 1) || (domain == 1 && label == 0);
            let flipped_focus = polarity_matches && rng.gen::<f64>() < cfg.flipped_focus_prob;
            let len = rng.gen_range(cfg.min_tokens..=cfg.max_tokens);
            let mut tokens = Vec::with_capacity(len);
            for _ in 0..len {
                let r: f64 = rng.gen();
                let pool: &[String] = if r < cfg.sentiment_slot_prob {
                    if flipped_focus {
                        &flipped
                    } else if label == 1 {
                        &common_positive
                    } else {
                        &common_negative
                    }
                } else if r < cfg.sentiment_slot_prob + cfg.exclusive_slot_prob {
                    &exclusive[domain]
                } else {
                    &fillers
                };
                tokens.push(pool[rng.gen_range(0..pool.len())].clone());
            }
            reviews.push(PreparedReview {
                domain,
                label,
                tokens,
            });
        }
    }

    SyntheticCorpus {
        domains: DomainPair::new("alpha", "beta"),
        reviews,
        words,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, porter_stem, PreprocessConfig, STOPWORDS_EN};

    #[test]
    fn generated_words_survive_preprocessing() {
        let corpus = generate(&SyntheticConfig {
            reviews_per_domain: 10,
            ..Default::default()
        });
        for (word, _) in &corpus.words {
            assert_eq!(porter_stem(word), *word, "word `{word}` not stem-stable");
            assert!(
                !STOPWORDS_EN.contains(&word.as_str()),
                "word `{word}` is a stopword"
            );
            assert!(word.bytes().all(|b| b.is_ascii_lowercase()));
        }
    }

    #[test]
    fn word_forms_are_unique() {
        let corpus = generate(&SyntheticConfig {
            reviews_per_domain: 1,
            ..Default::default()
        });
        let mut seen = std::collections::HashSet::new();
        for (word, _) in &corpus.words {
            assert!(seen.insert(word.clone()), "duplicate word `{word}`");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig {
            reviews_per_domain: 25,
            ..Default::default()
        };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.reviews, b.reviews);
    }

    #[test]
    fn flipped_words_respect_label_polarity() {
        let corpus = generate(&SyntheticConfig {
            reviews_per_domain: 300,
            ..Default::default()
        });
        let flipped: std::collections::HashSet<&str> =
            corpus.words_with_role(WordRole::Flipped).into_iter().collect();
        for review in &corpus.reviews {
            let has_flipped = review.tokens.iter().any(|t| flipped.contains(t.as_str()));
            if has_flipped {
                if review.domain == 0 {
                    assert_eq!(review.label, 1, "flipped word in negative first-domain review");
                } else {
                    assert_eq!(review.label, 0, "flipped word in positive second-domain review");
                }
            }
        }
    }

    #[test]
    fn jsonl_roundtrip_reproduces_tokens() {
        let corpus = generate(&SyntheticConfig {
            reviews_per_domain: 40,
            ..Default::default()
        });
        let dir = tempfile::tempdir().unwrap();
        for domain in 0..2 {
            let path = dir.path().join(format!("d{domain}.jsonl"));
            let mut buf = Vec::new();
            corpus.write_domain_jsonl(domain, &mut buf).unwrap();
            std::fs::write(&path, &buf).unwrap();
            let (reviews, report) =
                load_corpus(&path, &PreprocessConfig::default(), &corpus.domains).unwrap();
            let expected: Vec<&PreparedReview> = corpus
                .reviews
                .iter()
                .filter(|r| r.domain == domain)
                .collect();
            assert_eq!(report.kept, expected.len());
            assert_eq!(report.dropped(), 0);
            for (loaded, original) in reviews.iter().zip(expected) {
                assert_eq!(loaded.tokens, original.tokens);
                assert_eq!(loaded.label, original.label);
                assert_eq!(loaded.domain, original.domain);
            }
        }
    }
}

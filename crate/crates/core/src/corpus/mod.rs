//! Review ingestion: parsing, labeling, tokenization and length filtering.
//!
//! Input reviews arrive as JSONL (`{"domain": ..., "text": ..., "rating": ...}`
//! or with `"label"` instead of `"rating"`) or as TSV
//! (`domain<TAB>rating-or-label<TAB>text`). Preprocessing strips punctuation,
//! lowercases, removes stopwords, stems, and drops short or neutral reviews.

mod porter;
mod stopwords;

pub use porter::porter_stem;
pub use stopwords::{STOPWORDS_EN, STOPWORDS_VERSION};

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Deserialize;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{DseError, Result};

/// The two domains of one experiment, e.g. ("electronics", "kitchen").
/// Index 0 is the first domain, index 1 the second.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainPair {
    pub names: [String; 2],
}

impl DomainPair {
    pub fn new(first: impl Into<String>, second: impl Into<String>) -> Self {
        DomainPair {
            names: [first.into(), second.into()],
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }
}

/// One raw review as parsed from an input file, before preprocessing.
#[derive(Debug, Clone, Deserialize)]
pub struct RawReview {
    pub domain: String,
    #[serde(default)]
    pub rating: Option<f64>,
    #[serde(default)]
    pub label: Option<u8>,
    pub text: String,
}

/// A preprocessed review with surface tokens. Token ids are assigned later
/// when the vocabulary is built.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedReview {
    /// Index into the configured [`DomainPair`].
    pub domain: usize,
    /// Binary sentiment: 1 positive, 0 negative.
    pub label: u8,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    pub stopwords: HashSet<String>,
    pub min_review_tokens: usize,
    pub lowercase: bool,
    pub stem: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            stopwords: STOPWORDS_EN.iter().map(|s| s.to_string()).collect(),
            min_review_tokens: 5,
            lowercase: true,
            stem: true,
        }
    }
}

/// Per-file ingestion counts. `kept + dropped() == lines`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub lines: usize,
    pub kept: usize,
    pub dropped_neutral: usize,
    pub dropped_short: usize,
    pub dropped_blank: usize,
}

impl LoadReport {
    pub fn dropped(&self) -> usize {
        self.dropped_neutral + self.dropped_short + self.dropped_blank
    }
}

/// Map a star rating to a binary label. Ratings above 3.0 are positive,
/// below 3.0 negative; exactly 3.0 yields `None` and the review is excluded.
pub fn derive_label(rating: f64) -> Result<Option<u8>> {
    if !(1.0..=5.0).contains(&rating) {
        return Err(DseError::InvalidRating(rating));
    }
    Ok(if rating > 3.0 {
        Some(1)
    } else if rating < 3.0 {
        Some(0)
    } else {
        None
    })
}

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Remove punctuation: every punctuation character becomes a token boundary,
/// except an apostrophe between two letters, which is deleted in place
/// ("don't" -> "dont").
fn strip_punctuation(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if c == '\'' || c == '\u{2019}' {
            let between_letters = i > 0
                && chars[i - 1].is_alphabetic()
                && chars.get(i + 1).is_some_and(|n| n.is_alphabetic());
            if !between_letters {
                out.push(' ');
            }
        } else if is_punctuation(c) {
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    out
}

/// Apply the full token pipeline: punctuation stripping, whitespace split,
/// optional lowercasing, stopword removal, optional stemming.
pub fn tokenize(text: &str, cfg: &PreprocessConfig) -> Vec<String> {
    strip_punctuation(text)
        .split_whitespace()
        .map(|t| {
            if cfg.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .filter(|t| !cfg.stopwords.contains(t.as_str()))
        .map(|t| if cfg.stem { porter_stem(&t) } else { t })
        .collect()
}

enum CorpusFormat {
    Jsonl,
    Tsv,
}

fn detect_format(path: &Path) -> CorpusFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("txt") => CorpusFormat::Tsv,
        _ => CorpusFormat::Jsonl,
    }
}

fn parse_jsonl_line(line: &str, line_no: usize) -> Result<RawReview> {
    let raw: RawReview = serde_json::from_str(line).map_err(|e| DseError::Parse {
        line: line_no,
        msg: format!("invalid JSON object: {e}"),
    })?;
    match (raw.rating.is_some(), raw.label.is_some()) {
        (true, true) => Err(DseError::Parse {
            line: line_no,
            msg: "both `rating` and `label` present; expected exactly one".into(),
        }),
        (false, false) => Err(DseError::Parse {
            line: line_no,
            msg: "neither `rating` nor `label` present; expected exactly one".into(),
        }),
        _ => Ok(raw),
    }
}

fn parse_tsv_line(line: &str, line_no: usize) -> Result<RawReview> {
    let mut parts = line.splitn(3, '\t');
    let (domain, value, text) = match (parts.next(), parts.next(), parts.next()) {
        (Some(d), Some(v), Some(t)) => (d, v, t),
        _ => {
            return Err(DseError::Parse {
                line: line_no,
                msg: "expected `domain<TAB>rating-or-label<TAB>text`".into(),
            })
        }
    };
    // A bare `0` or `1` is a label; any other decimal is a rating.
    let (rating, label) = match value {
        "0" => (None, Some(0)),
        "1" => (None, Some(1)),
        other => {
            let r: f64 = other.parse().map_err(|_| DseError::Parse {
                line: line_no,
                msg: format!("`{other}` is neither a 0/1 label nor a rating"),
            })?;
            (Some(r), None)
        }
    };
    Ok(RawReview {
        domain: domain.to_string(),
        rating,
        label,
        text: text.to_string(),
    })
}

/// Turn one raw review into a prepared review, or `None` when it is filtered
/// out (neutral rating or too short after preprocessing).
pub fn prepare_review(
    raw: &RawReview,
    cfg: &PreprocessConfig,
    domains: &DomainPair,
) -> Result<Option<PreparedReview>> {
    let domain = domains
        .index_of(&raw.domain)
        .ok_or_else(|| DseError::UnknownDomain {
            found: raw.domain.clone(),
            expected_p: domains.names[0].clone(),
            expected_q: domains.names[1].clone(),
        })?;
    let label = match (raw.rating, raw.label) {
        (Some(r), _) => match derive_label(r)? {
            Some(l) => l,
            None => return Ok(None),
        },
        (None, Some(l)) if l <= 1 => l,
        (None, Some(l)) => {
            return Err(DseError::Parse {
                line: 0,
                msg: format!("label {l} is not 0 or 1"),
            })
        }
        (None, None) => unreachable!("parsers enforce rating xor label"),
    };
    let tokens = tokenize(&raw.text, cfg);
    if tokens.len() < cfg.min_review_tokens {
        return Ok(None);
    }
    Ok(Some(PreparedReview {
        domain,
        label,
        tokens,
    }))
}

/// Load a corpus file, preprocessing every line. Line order is preserved.
pub fn load_corpus(
    path: &Path,
    cfg: &PreprocessConfig,
    domains: &DomainPair,
) -> Result<(Vec<PreparedReview>, LoadReport)> {
    let file = File::open(path).map_err(|e| DseError::io(path, e))?;
    load_corpus_reader(BufReader::new(file), detect_format(path), cfg, domains)
}

fn load_corpus_reader<R: Read>(
    reader: BufReader<R>,
    format: CorpusFormat,
    cfg: &PreprocessConfig,
    domains: &DomainPair,
) -> Result<(Vec<PreparedReview>, LoadReport)> {
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DseError::Parse {
            line: i + 1,
            msg: format!("read error: {e}"),
        })?;
        lines.push(line);
    }

    let parse_and_prepare = |(i, line): (usize, &String)| -> Result<Option<PreparedReview>> {
        if line.trim().is_empty() {
            return Ok(None);
        }
        let raw = match format {
            CorpusFormat::Jsonl => parse_jsonl_line(line, i + 1)?,
            CorpusFormat::Tsv => parse_tsv_line(line, i + 1)?,
        };
        prepare_review(&raw, cfg, domains).map_err(|e| match e {
            DseError::Parse { msg, .. } => DseError::Parse { line: i + 1, msg },
            other => other,
        })
    };

    #[cfg(feature = "parallel")]
    let prepared: Vec<Option<PreparedReview>> = {
        use rayon::prelude::*;
        lines
            .par_iter()
            .enumerate()
            .map(parse_and_prepare)
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let prepared: Vec<Option<PreparedReview>> = lines
        .iter()
        .enumerate()
        .map(parse_and_prepare)
        .collect::<Result<_>>()?;

    let mut report = LoadReport {
        lines: lines.len(),
        ..LoadReport::default()
    };
    let mut reviews = Vec::new();
    for (line, review) in lines.iter().zip(prepared) {
        match review {
            Some(r) => {
                report.kept += 1;
                reviews.push(r);
            }
            None if line.trim().is_empty() => report.dropped_blank += 1,
            None => {
                // Distinguish neutral-rating drops from length-filter drops
                // for the report; re-derive cheaply from the parsed line.
                let raw = match format {
                    CorpusFormat::Jsonl => parse_jsonl_line(line, 0)?,
                    CorpusFormat::Tsv => parse_tsv_line(line, 0)?,
                };
                let neutral = matches!(raw.rating, Some(r) if derive_label(r)? .is_none());
                if neutral {
                    report.dropped_neutral += 1;
                } else {
                    report.dropped_short += 1;
                }
            }
        }
    }
    Ok((reviews, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig::default()
    }

    fn domains() -> DomainPair {
        DomainPair::new("electronics", "kitchen")
    }

    #[test]
    fn derive_label_thresholds() {
        assert_eq!(derive_label(4.0).unwrap(), Some(1));
        assert_eq!(derive_label(2.0).unwrap(), Some(0));
        assert_eq!(derive_label(3.0).unwrap(), None);
        assert_eq!(derive_label(5.0).unwrap(), Some(1));
        assert_eq!(derive_label(1.0).unwrap(), Some(0));
        assert!(derive_label(0.5).is_err());
        assert!(derive_label(5.5).is_err());
    }

    #[test]
    fn tokenize_pipeline() {
        assert_eq!(tokenize("This is GREAT!", &cfg()), vec!["great"]);
        assert_eq!(tokenize("", &cfg()), Vec::<String>::new());
        assert_eq!(tokenize("running, runs", &cfg()), vec!["run", "run"]);
    }

    #[test]
    fn apostrophes_dropped_in_place() {
        let c = PreprocessConfig {
            stopwords: HashSet::new(),
            ..cfg()
        };
        assert_eq!(tokenize("don't", &c), vec!["dont"]);
        assert_eq!(tokenize("'quoted'", &c), vec!["quot"]);
        // Default stopword list catches the contraction form.
        assert_eq!(tokenize("don't", &cfg()), Vec::<String>::new());
    }

    #[test]
    fn punctuation_is_a_boundary() {
        let c = PreprocessConfig {
            stopwords: HashSet::new(),
            stem: false,
            ..cfg()
        };
        assert_eq!(tokenize("foo,bar--baz", &c), vec!["foo", "bar", "baz"]);
        assert_eq!(tokenize("end.Start", &c), vec!["end", "start"]);
    }

    #[test]
    fn tokenize_idempotent_on_own_output() {
        let texts = [
            "This camera is absolutely great, I loved it!",
            "Terrible product; broke after two days...",
            "don't buy this -- running badly",
        ];
        for text in texts {
            let once = tokenize(text, &cfg());
            let again = tokenize(&once.join(" "), &cfg());
            assert_eq!(once, again, "pipeline not idempotent for {text:?}");
        }
    }

    fn write_temp(content: &str, ext: &str) -> tempfile::TempPath {
        let mut f = tempfile::Builder::new()
            .suffix(&format!(".{ext}"))
            .tempfile()
            .unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.into_temp_path()
    }

    #[test]
    fn load_jsonl_keeps_and_drops() {
        let path = write_temp(
            concat!(
                r#"{"domain":"electronics","rating":4.0,"text":"camera works great and battery lasts very long ok"}"#,
                "\n",
                r#"{"domain":"electronics","rating":5.0,"text":"too short here"}"#,
                "\n",
                r#"{"domain":"kitchen","rating":3.0,"text":"neutral review of a mixer with plenty words inside"}"#,
                "\n",
            ),
            "jsonl",
        );
        let (reviews, report) = load_corpus(path.as_ref(), &cfg(), &domains()).unwrap();
        assert_eq!(reviews.len(), 1);
        assert_eq!(reviews[0].label, 1);
        assert_eq!(reviews[0].domain, 0);
        assert!(reviews[0].tokens.len() >= 5);
        assert_eq!(report.lines, 3);
        assert_eq!(report.kept, 1);
        assert_eq!(report.dropped_neutral, 1);
        assert_eq!(report.dropped_short, 1);
        assert_eq!(report.kept + report.dropped(), report.lines);
    }

    #[test]
    fn load_tsv() {
        let path = write_temp(
            "electronics\t4.5\tcamera works great and battery lasts very long\n\
             kitchen\t1\tthis blender is wonderful quick quiet and shiny\n\
             kitchen\t0\tthis blender is loud broken leaky and rusty\n",
            "tsv",
        );
        let (reviews, report) = load_corpus(path.as_ref(), &cfg(), &domains()).unwrap();
        assert_eq!(report.kept, 3);
        assert_eq!(reviews[1].label, 1);
        assert_eq!(reviews[2].label, 0);
    }

    #[test]
    fn malformed_line_reports_number() {
        let path = write_temp(
            "{\"domain\":\"electronics\",\"rating\":4.0,\"text\":\"good words here for five tokens\"}\nnot json\n",
            "jsonl",
        );
        let err = load_corpus(path.as_ref(), &cfg(), &domains()).unwrap_err();
        match err {
            DseError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn unknown_domain_rejected() {
        let path = write_temp(
            r#"{"domain":"books","rating":4.0,"text":"a b c d e f"}"#,
            "jsonl",
        );
        let err = load_corpus(path.as_ref(), &cfg(), &domains()).unwrap_err();
        assert!(matches!(err, DseError::UnknownDomain { .. }));
    }

    #[test]
    fn both_rating_and_label_rejected() {
        let path = write_temp(
            r#"{"domain":"electronics","rating":4.0,"label":1,"text":"a b c d e f"}"#,
            "jsonl",
        );
        assert!(load_corpus(path.as_ref(), &cfg(), &domains()).is_err());
    }

    #[test]
    fn derive_label_monotone() {
        let ratings = [1.0, 1.5, 2.0, 2.5, 2.9, 3.1, 3.5, 4.0, 4.5, 5.0];
        for &a in &ratings {
            for &b in &ratings {
                if a > b {
                    if let (Some(la), Some(lb)) =
                        (derive_label(a).unwrap(), derive_label(b).unwrap())
                    {
                        assert!(la >= lb, "labels not monotone at {a} vs {b}");
                    }
                }
            }
        }
    }
}

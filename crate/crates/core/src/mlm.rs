//! Pseudo-perplexity of text under a masked language model.
//!
//! For a sentence `w1..wn`, each position is masked in turn and the model's
//! negative log-likelihood of the hidden token is collected. Sentence
//! pseudo-perplexity is `exp(mean NLL)`. For a corpus the mean runs over
//! every token of every sentence, so longer sentences weigh more.
//!
//! Sentences arrive as words. A scorer may split words into sub-tokens;
//! [`Granularity`] chooses whether each sub-token or each whole word is the
//! masked unit.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait MaskedScorer: Send + Sync {
    /// NLL (natural log) of `tokens[i]` given `tokens` with position `i`
    /// masked.
    fn token_nll(&self, tokens: &[String], i: usize) -> Result<f64>;

    /// Model tokens of one word.
    fn subtokenize(&self, word: &str) -> Vec<String> {
        vec![word.to_string()]
    }

    /// NLL of `tokens[range]` with the whole range masked at once. The
    /// default sums single-position NLLs, which is exact for single-token
    /// ranges only; whole-word-masking backends should override it.
    fn span_nll(&self, tokens: &[String], range: std::ops::Range<usize>) -> Result<f64> {
        range.map(|i| self.token_nll(tokens, i)).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Every model token is masked on its own and counted once.
    #[default]
    SubToken,
    /// All sub-tokens of a word are masked together; the word counts once.
    Word,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub n_tokens: usize,
    pub mean_nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusPerplexity {
    pub value: f64,
    pub total_tokens: usize,
    pub per_sentence: Vec<SentenceScore>,
}

fn check_nll(nll: f64) -> Result<f64> {
    if nll.is_finite() && nll >= 0.0 {
        Ok(nll)
    } else {
        Err(Error::backend(format!("scorer returned invalid NLL {nll}")))
    }
}

/// Per-unit NLLs of one sentence, in order.
pub fn sentence_nlls<S: AsRef<str> + Sync>(
    scorer: &dyn MaskedScorer,
    sentence: &[S],
    granularity: Granularity,
) -> Result<Vec<f64>> {
    if sentence.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty sentence".into()));
    }
    let pieces: Vec<Vec<String>> = sentence.iter().map(|w| scorer.subtokenize(w.as_ref())).collect();
    let tokens: Vec<String> = pieces.iter().flatten().cloned().collect();
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("sentence has no model tokens".into()));
    }
    match granularity {
        Granularity::SubToken => (0..tokens.len())
            .into_par_iter()
            .map(|i| scorer.token_nll(&tokens, i).and_then(check_nll))
            .collect(),
        Granularity::Word => {
            let mut ranges = Vec::with_capacity(pieces.len());
            let mut start = 0;
            for p in pieces.iter().filter(|p| !p.is_empty()) {
                ranges.push(start..start + p.len());
                start += p.len();
            }
            ranges
                .into_par_iter()
                .map(|r| scorer.span_nll(&tokens, r).and_then(check_nll))
                .collect()
        }
    }
}

/// `exp(mean NLL)` over the sentence's sub-tokens.
pub fn sentence_pseudo_perplexity<S: AsRef<str> + Sync>(scorer: &dyn MaskedScorer, sentence: &[S]) -> Result<f64> {
    let nlls = sentence_nlls(scorer, sentence, Granularity::SubToken)?;
    Ok((nlls.iter().sum::<f64>() / nlls.len() as f64).exp())
}

/// Token-weighted corpus pseudo-perplexity.
pub fn corpus_pseudo_perplexity<S: AsRef<str> + Sync>(
    scorer: &dyn MaskedScorer,
    corpus: &[Vec<S>],
    granularity: Granularity,
) -> Result<CorpusPerplexity> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty corpus".into()));
    }
    let per_sentence_nlls: Vec<Vec<f64>> = corpus
        .par_iter()
        .map(|s| sentence_nlls(scorer, s, granularity))
        .collect::<Result<_>>()?;
    Ok(from_nlls(&per_sentence_nlls))
}

/// Corpus perplexity from already computed per-sentence NLL lists.
pub fn from_nlls(per_sentence_nlls: &[Vec<f64>]) -> CorpusPerplexity {
    let mut total = 0.0;
    let mut k = 0usize;
    let mut per_sentence = Vec::with_capacity(per_sentence_nlls.len());
    for nlls in per_sentence_nlls {
        let sum: f64 = nlls.iter().sum();
        total += sum;
        k += nlls.len();
        per_sentence.push(SentenceScore {
            n_tokens: nlls.len(),
            mean_nll: if nlls.is_empty() { 0.0 } else { sum / nlls.len() as f64 },
        });
    }
    CorpusPerplexity {
        value: if k == 0 { f64::NAN } else { (total / k as f64).exp() },
        total_tokens: k,
        per_sentence,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityRow {
    pub model_name: String,
    pub pp: f64,
    pub total_tokens: usize,
}

/// Scores the corpus under each model, ascending by perplexity (ties by
/// name).
pub fn compare_models<S: AsRef<str> + Sync>(
    corpus: &[Vec<S>],
    scorers: &[(&str, &dyn MaskedScorer)],
    granularity: Granularity,
) -> Result<Vec<PerplexityRow>> {
    if scorers.is_empty() {
        return Err(Error::InvalidArgument("no scorers to compare".into()));
    }
    let mut rows = scorers
        .iter()
        .map(|(name, scorer)| {
            corpus_pseudo_perplexity(*scorer, corpus, granularity).map(|pp| PerplexityRow {
                model_name: name.to_string(),
                pp: pp.value,
                total_tokens: pp.total_tokens,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.pp.total_cmp(&b.pp).then_with(|| a.model_name.cmp(&b.model_name)));
    Ok(rows)
}

/// `model_name<TAB>pp<TAB>total_tokens` with a header row.
pub fn perplexity_table_tsv(rows: &[PerplexityRow]) -> String {
    let mut out = String::from("model_name\tpp\ttotal_tokens\n");
    for r in rows {
        let _ = writeln!(out, "{}\t{:.4}\t{}", r.model_name, r.pp, r.total_tokens);
    }
    out
}

/// Every token has probability `1/V`.
#[derive(Debug, Clone, Copy)]
pub struct UniformScorer {
    pub vocab_size: usize,
}

impl MaskedScorer for UniformScorer {
    fn token_nll(&self, _tokens: &[String], _i: usize) -> Result<f64> {
        Ok((self.vocab_size as f64).ln())
    }
}

/// Add-one smoothed unigram model. It ignores context, so it is a floor
/// that any contextual model should beat.
#[derive(Debug, Clone)]
pub struct UnigramScorer {
    counts: HashMap<String, usize>,
    total: usize,
    lowercase: bool,
}

impl UnigramScorer {
    pub fn fit<S: AsRef<str>>(sentences: &[Vec<S>], lowercase: bool) -> Self {
        let mut counts = HashMap::new();
        let mut total = 0;
        for s in sentences {
            for w in s {
                let w = w.as_ref();
                let key = if lowercase { w.to_lowercase() } else { w.to_string() };
                *counts.entry(key).or_insert(0) += 1;
                total += 1;
            }
        }
        UnigramScorer { counts, total, lowercase }
    }
}

impl MaskedScorer for UnigramScorer {
    fn token_nll(&self, tokens: &[String], i: usize) -> Result<f64> {
        let tok = &tokens[i];
        let key = if self.lowercase { tok.to_lowercase() } else { tok.clone() };
        let count = self.counts.get(&key).copied().unwrap_or(0);
        // +1 vocabulary slot for unseen tokens.
        let p = (count + 1) as f64 / (self.total + self.counts.len() + 1) as f64;
        Ok(-p.ln())
    }
}

/// Splits a text into sentences of whitespace tokens, one per non-empty line.
pub fn tokenize_lines(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(String::from).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Scorer names accepted by [`scorer_backend`].
pub const SCORER_BACKENDS: [&str; 2] = ["mock.uniform:<vocab size>", "unigram:<training text file>"];

/// Builds a scorer from its configured name.
pub fn scorer_backend(name: &str) -> Result<Box<dyn MaskedScorer>> {
    if let Some(v) = name.strip_prefix("mock.uniform:") {
        let vocab_size: usize = v
            .parse()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::InvalidArgument(format!("bad vocabulary size in `{name}`")))?;
        return Ok(Box::new(UniformScorer { vocab_size }));
    }
    if let Some(path) = name.strip_prefix("unigram:") {
        let path = std::path::Path::new(path);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let sentences = tokenize_lines(&text);
        if sentences.is_empty() {
            return Err(Error::InvalidArgument(format!("unigram training text {} is empty", path.display())));
        }
        return Ok(Box::new(UnigramScorer::fit(&sentences, true)));
    }
    Err(Error::UnknownBackend(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// NLLs read from a fixed table keyed by token text.
    struct TableScorer(HashMap<&'static str, f64>);

    impl MaskedScorer for TableScorer {
        fn token_nll(&self, tokens: &[String], i: usize) -> Result<f64> {
            Ok(self.0[tokens[i].as_str()])
        }
    }

    /// Splits words into 2-char pieces.
    struct PairPieces;

    impl MaskedScorer for PairPieces {
        fn token_nll(&self, _tokens: &[String], _i: usize) -> Result<f64> {
            Ok(1.0)
        }

        fn subtokenize(&self, word: &str) -> Vec<String> {
            let chars: Vec<char> = word.chars().collect();
            chars.chunks(2).map(|c| c.iter().collect()).collect()
        }
    }

    #[test]
    fn perfect_and_uniform_scorers() {
        let s = ["a", "b", "c"];
        assert_eq!(sentence_pseudo_perplexity(&UniformScorer { vocab_size: 1 }, &s).unwrap(), 1.0);
        let pp = sentence_pseudo_perplexity(&UniformScorer { vocab_size: 17 }, &s).unwrap();
        assert!((pp - 17.0).abs() < 1e-12);
    }

    #[test]
    fn mean_nll_arithmetic() {
        let scorer = TableScorer([("x", 0.2), ("y", 0.4), ("z", 0.9)].into_iter().collect());
        let pp = sentence_pseudo_perplexity(&scorer, &["x", "y", "z"]).unwrap();
        assert!((pp - 0.5f64.exp()).abs() < 1e-12);
        assert!((pp - 1.6487212707).abs() < 1e-9);
    }

    #[test]
    fn empty_inputs_are_errors() {
        let u = UniformScorer { vocab_size: 5 };
        assert!(sentence_pseudo_perplexity::<&str>(&u, &[]).is_err());
        assert!(corpus_pseudo_perplexity::<&str>(&u, &[], Granularity::SubToken).is_err());
        assert!(corpus_pseudo_perplexity(&u, &[vec!["a"], vec![]], Granularity::SubToken).is_err());
    }

    #[test]
    fn corpus_reductions() {
        let u = UniformScorer { vocab_size: 9 };
        let one = vec![vec!["a", "b"]];
        let c = corpus_pseudo_perplexity(&u, &one, Granularity::SubToken).unwrap();
        assert!((c.value - sentence_pseudo_perplexity(&u, &one[0]).unwrap()).abs() < 1e-12);
        let ln2 = TableScorer([("p", std::f64::consts::LN_2)].into_iter().collect());
        let c = corpus_pseudo_perplexity(&ln2, &[vec!["p"], vec!["p", "p"]], Granularity::SubToken).unwrap();
        assert!((c.value - 2.0).abs() < 1e-12);
        assert_eq!(c.total_tokens, 3);
    }

    #[test]
    fn granularity_changes_the_unit_count() {
        let corpus = vec![vec!["abcd", "ef"]];
        let sub = corpus_pseudo_perplexity(&PairPieces, &corpus, Granularity::SubToken).unwrap();
        let word = corpus_pseudo_perplexity(&PairPieces, &corpus, Granularity::Word).unwrap();
        assert_eq!(sub.total_tokens, 3);
        assert_eq!(word.total_tokens, 2);
        // Word "abcd" sums two unit NLLs.
        assert!((word.value - (1.5f64).exp()).abs() < 1e-12);
        assert!((sub.value - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn compare_sorts_and_breaks_ties_by_name() {
        let corpus = vec![vec!["a", "b"]];
        let big = UniformScorer { vocab_size: 30 };
        let small = UniformScorer { vocab_size: 3 };
        let rows = compare_models(&corpus, &[("zeta", &small), ("alpha", &small), ("big", &big)], Granularity::SubToken).unwrap();
        let names: Vec<_> = rows.iter().map(|r| r.model_name.as_str()).collect();
        assert_eq!(names, ["alpha", "zeta", "big"]);
        assert_eq!(rows[0].pp, rows[1].pp);
        assert_eq!(compare_models(&corpus, &[("only", &small)], Granularity::SubToken).unwrap().len(), 1);
        assert!(perplexity_table_tsv(&rows).starts_with("model_name\tpp\ttotal_tokens\nalpha\t3.0000\t2\n"));
    }

    #[test]
    fn registry() {
        let u = scorer_backend("mock.uniform:17").unwrap();
        let pp = sentence_pseudo_perplexity(u.as_ref(), &["x"]).unwrap();
        assert!((pp - 17.0).abs() < 1e-9);
        assert!(scorer_backend("mock.uniform:0").is_err());
        assert!(matches!(scorer_backend("bert"), Err(Error::UnknownBackend(_))));
    }

    #[test]
    fn unigram_prefers_frequent_tokens() {
        let train = tokenize_lines("the horse ran\nthe man ran away\n");
        let m = UnigramScorer::fit(&train, true);
        let toks: Vec<String> = ["The", "zebra"].iter().map(|s| s.to_string()).collect();
        assert!(m.token_nll(&toks, 0).unwrap() < m.token_nll(&toks, 1).unwrap());
    }
}

//! Per-hop fact extraction.
//!
//! Stage 1 scores every sentence of every retrieved passage and keeps the
//! best few across the hop. Stage 2 scores that pool jointly and keeps the
//! facts with a positive score. Scorers are pluggable; the reference scorer
//! is IDF-weighted token overlap with the query and the facts gathered so far.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Passage};
use crate::encoder::tokenize;
use crate::error::{Error, Result};
use crate::pipeline::MultiHopQuery;

/// Stage-1 pool size at inference.
pub const INFERENCE_TOP_K_FACTS: usize = 9;
/// Reference stage-2 threshold.
pub const DEFAULT_TAU: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub pid: String,
    pub sentence_index: usize,
    pub text: String,
    pub stage1_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2_score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    IdfOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CondenserConfig {
    pub stage1_top_k_facts: usize,
    pub scorer: ScorerKind,
    pub tau: f64,
}

impl Default for CondenserConfig {
    fn default() -> Self {
        Self {
            stage1_top_k_facts: INFERENCE_TOP_K_FACTS,
            scorer: ScorerKind::IdfOverlap,
            tau: DEFAULT_TAU,
        }
    }
}

impl CondenserConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.stage1_top_k_facts) {
            return Err(Error::Config(format!(
                "stage1_top_k_facts {} not in 1..=16",
                self.stage1_top_k_facts
            )));
        }
        if !self.tau.is_finite() {
            return Err(Error::Config("tau must be finite".into()));
        }
        Ok(())
    }
}

/// Stage-1 contract: one score per sentence, given the query and its facts.
pub trait SentenceScorer: Send + Sync {
    fn score(&self, query: &MultiHopQuery, sentence: &str) -> f64;
}

/// Stage-2 contract: one score per pooled fact, computed over the whole pool.
pub trait JointScorer: Send + Sync {
    fn score_pool(&self, query: &MultiHopQuery, pooled: &[Fact]) -> Vec<f64>;
}

/// Inverse document frequencies over passages (title and sentences).
#[derive(Debug, Clone, Default)]
pub struct IdfTable {
    passages: usize,
    df: HashMap<String, usize>,
}

impl IdfTable {
    pub fn new(passages: usize, df: HashMap<String, usize>) -> Self {
        Self { passages, df }
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        for p in corpus.iter() {
            let distinct: HashSet<String> = std::iter::once(&p.title)
                .chain(&p.sentences)
                .flat_map(|s| tokenize(s))
                .collect();
            for t in distinct {
                *df.entry(t).or_default() += 1;
            }
        }
        Self::new(corpus.len(), df)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`; unseen tokens have `df = 0`.
    pub fn idf(&self, token: &str) -> f64 {
        let n = self.passages as f64;
        let df = self.df.get(token).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }
}

/// Reference scorer for both stages.
#[derive(Debug, Clone)]
pub struct IdfOverlapScorer {
    idf: IdfTable,
    tau: f64,
}

impl IdfOverlapScorer {
    pub fn new(idf: IdfTable, tau: f64) -> Self {
        Self { idf, tau }
    }

    pub fn from_config(corpus: &Corpus, cfg: &CondenserConfig) -> Self {
        match cfg.scorer {
            ScorerKind::IdfOverlap => Self::new(IdfTable::from_corpus(corpus), cfg.tau),
        }
    }

    fn context(query: &MultiHopQuery) -> HashSet<String> {
        std::iter::once(query.q0_text.as_str())
            .chain(query.facts.iter().map(|f| f.text.as_str()))
            .flat_map(tokenize)
            .collect()
    }

    fn overlap_with(&self, context: &HashSet<String>, sentence: &str) -> f64 {
        let (mut hit, mut all) = (0.0, 0.0);
        for t in tokenize(sentence) {
            let w = self.idf.idf(&t);
            all += w;
            if context.contains(&t) {
                hit += w;
            }
        }
        if all > 0.0 {
            hit / all
        } else {
            0.0
        }
    }

    /// IDF mass of the sentence's tokens found in `Q_0` or the facts, over the
    /// sentence's total IDF mass. Lies in `[0, 1]`.
    pub fn overlap(&self, query: &MultiHopQuery, sentence: &str) -> f64 {
        self.overlap_with(&Self::context(query), sentence)
    }
}

impl SentenceScorer for IdfOverlapScorer {
    fn score(&self, query: &MultiHopQuery, sentence: &str) -> f64 {
        self.overlap(query, sentence)
    }
}

impl JointScorer for IdfOverlapScorer {
    fn score_pool(&self, query: &MultiHopQuery, pooled: &[Fact]) -> Vec<f64> {
        let ctx = Self::context(query);
        pooled
            .iter()
            .map(|f| self.overlap_with(&ctx, &f.text) - self.tau)
            .collect()
    }
}

fn fact_order(a: &Fact, b: &Fact) -> std::cmp::Ordering {
    b.stage1_score
        .total_cmp(&a.stage1_score)
        .then_with(|| a.pid.cmp(&b.pid))
        .then(a.sentence_index.cmp(&b.sentence_index))
}

/// Scores every sentence of the hop's passages and returns the pooled top facts.
pub fn stage1_extract(
    query: &MultiHopQuery,
    passages: &[&Passage],
    cfg: &CondenserConfig,
    scorer: &dyn SentenceScorer,
) -> Vec<Fact> {
    let mut pool: Vec<Fact> = passages
        .par_iter()
        .flat_map_iter(|p| {
            p.sentences.iter().enumerate().map(move |(i, s)| Fact {
                pid: p.pid.clone(),
                sentence_index: i,
                text: s.clone(),
                stage1_score: scorer.score(query, s),
                stage2_score: None,
            })
        })
        .collect();
    pool.sort_by(fact_order);
    pool.truncate(cfg.stage1_top_k_facts);
    pool
}

/// Keeps the pooled facts whose joint score is positive, best first.
pub fn stage2_filter(query: &MultiHopQuery, pooled: Vec<Fact>, scorer: &dyn JointScorer) -> Vec<Fact> {
    let scores = scorer.score_pool(query, &pooled);
    let mut kept: Vec<Fact> = pooled
        .into_iter()
        .zip(scores)
        .filter(|(_, s)| *s > 0.0)
        .map(|(mut f, s)| {
            f.stage2_score = Some(s);
            f
        })
        .collect();
    kept.sort_by(|a, b| b.stage2_score.unwrap().total_cmp(&a.stage2_score.unwrap()));
    kept
}

pub fn condense<S: SentenceScorer + JointScorer>(
    query: &MultiHopQuery,
    passages: &[&Passage],
    cfg: &CondenserConfig,
    scorer: &S,
) -> Vec<Fact> {
    let pooled = stage1_extract(query, passages, cfg, scorer);
    stage2_filter(query, pooled, scorer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn passage(pid: &str, sentences: &[&str]) -> Passage {
        Passage {
            pid: pid.into(),
            title: String::new(),
            sentences: sentences.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Every token has the same IDF, so overlap is a plain fraction.
    fn flat_scorer(tau: f64) -> IdfOverlapScorer {
        IdfOverlapScorer::new(IdfTable::new(10, HashMap::new()), tau)
    }

    struct Fixed(Vec<f64>);

    impl JointScorer for Fixed {
        fn score_pool(&self, _: &MultiHopQuery, _: &[Fact]) -> Vec<f64> {
            self.0.clone()
        }
    }

    fn fact(pid: &str, i: usize) -> Fact {
        Fact {
            pid: pid.into(),
            sentence_index: i,
            text: format!("{pid} {i}"),
            stage1_score: 0.0,
            stage2_score: None,
        }
    }

    #[test]
    fn idf_formula() {
        let t = IdfTable::new(10, [("a".to_string(), 4)].into());
        assert!((t.idf("a") - (1.0f64 + 6.5 / 4.5).ln()).abs() < 1e-12);
        assert!((t.idf("zzz") - (1.0f64 + 10.5 / 0.5).ln()).abs() < 1e-12);
    }

    #[test]
    fn fewer_sentences_than_k_all_returned_sorted() {
        let q = MultiHopQuery::new("q", "alpha beta");
        let ps = [
            passage("b", &["alpha x y", "none here", "beta alpha"]),
            passage("a", &["zero", "alpha", "q r s t"]),
        ];
        let refs: Vec<&Passage> = ps.iter().collect();
        let out = stage1_extract(&q, &refs, &CondenserConfig::default(), &flat_scorer(0.1));
        assert_eq!(out.len(), 6);
        let keys: Vec<(&str, usize)> = out.iter().map(|f| (f.pid.as_str(), f.sentence_index)).collect();
        // scores: a1 = 1, b2 = 1, b0 = 1/3, then zeros by (pid, index)
        assert_eq!(keys, [("a", 1), ("b", 2), ("b", 0), ("a", 0), ("a", 2), ("b", 1)]);
    }

    #[test]
    fn three_shared_tokens_outrank_none() {
        let q = MultiHopQuery::new("q", "red flaherty umpired series");
        let s = flat_scorer(0.1);
        let three = s.score(&q, "flaherty umpired the series");
        let zero = s.score(&q, "koufax pitched for los angeles");
        assert!((three - 0.75).abs() < 1e-12);
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn stage2_rule() {
        let q = MultiHopQuery::new("q", "x");
        let kept = stage2_filter(&q, vec![fact("a", 0), fact("b", 0), fact("c", 0)], &Fixed(vec![0.4, -0.1, 0.2]));
        let got: Vec<(&str, f64)> = kept.iter().map(|f| (f.pid.as_str(), f.stage2_score.unwrap())).collect();
        assert_eq!(got, [("a", 0.4), ("c", 0.2)]);
        assert!(stage2_filter(&q, vec![fact("a", 0)], &Fixed(vec![-0.5])).is_empty());
    }

    #[test]
    fn reference_threshold() {
        let q = MultiHopQuery::new("q", "bridge");
        let s = flat_scorer(0.1);
        let mut keep = fact("k", 0);
        keep.text = "bridge w1 w2 w3".into();
        let mut drop = fact("d", 0);
        drop.text = format!("bridge {}", (1..20).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "));
        assert!((s.overlap(&q, &keep.text) - 0.25).abs() < 1e-12);
        assert!((s.overlap(&q, &drop.text) - 0.05).abs() < 1e-12);
        let kept = stage2_filter(&q, vec![keep, drop], &s);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].pid, "k");
        assert!((kept[0].stage2_score.unwrap() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn condense_empty_and_bridge() {
        let s = flat_scorer(0.1);
        let cfg = CondenserConfig::default();
        let q = MultiHopQuery::new("q", "who designed the lighthouse");
        let off = [passage("x", &["bananas grow in bunches", "plain text"])];
        assert!(condense(&q, &off.iter().collect::<Vec<_>>(), &cfg, &s).is_empty());

        let ps = [
            passage("p1", &["the lighthouse was designed by ortega", "it is tall and old and white and round"]),
            passage("p2", &["ortega studied in lisbon", "filler words only here"]),
        ];
        let out = condense(&q, &ps.iter().collect::<Vec<_>>(), &cfg, &s);
        assert_eq!((out[0].pid.as_str(), out[0].sentence_index), ("p1", 0));
        assert_eq!(out[0].text, ps[0].sentences[0]);
    }

    #[test]
    fn accumulated_facts_extend_context() {
        let s = flat_scorer(0.1);
        let mut q = MultiHopQuery::new("q", "lighthouse");
        assert_eq!(s.score(&q, "ortega lisbon"), 0.0);
        let mut f = fact("p1", 0);
        f.text = "designed by ortega".into();
        q.facts.push(f);
        assert!((s.score(&q, "ortega lisbon") - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pool_capped_and_config_range() {
        let q = MultiHopQuery::new("q", "a");
        let many: Vec<Passage> = (0..5).map(|i| passage(&format!("p{i}"), &["a b", "a c", "a d"])).collect();
        let out = stage1_extract(&q, &many.iter().collect::<Vec<_>>(), &CondenserConfig::default(), &flat_scorer(0.1));
        assert_eq!(out.len(), 9);
        for bad in [0, 17] {
            let cfg = CondenserConfig {
                stage1_top_k_facts: bad,
                ..Default::default()
            };
            assert!(cfg.validate().is_err());
        }
    }
}

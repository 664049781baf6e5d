//! Per-hop training supervision from unordered gold passages.
//!
//! Latent hop ordering lets the retriever decide which gold passages belong
//! to which hop: at hop `t` the remaining golds that rank within the top
//! `k_hat_t` for `Q_{t-1}` become positives, the query is expanded with their
//! oracle facts, and the next hop starts from the expanded query. The
//! title-overlap heuristic orders golds by how directly the text so far names
//! their titles.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condenser::Fact;
use crate::corpus::{Corpus, Passage, QueryRecord};
use crate::encoder::{query_tokens, tokenize, Encoder};
use crate::error::{Error, Result};
use crate::eval::{is_yes_no, normalize_answer};
use crate::index::{CandidateSource, TokenIndex, RESULTS_PER_VECTOR_TRAINING};
use crate::pipeline::MultiHopQuery;
use crate::retriever::{retrieve_weighted, score_pid, RetrievalConfig};
use crate::scoring::{FocusParams, RowWeights, ScoredPassage};
use crate::seed;

/// Negative sampling depth per hop.
pub const DEFAULT_K_RETRIEVE: usize = 1000;
/// Oracle facts appended per positive passage.
pub const DEFAULT_FACTS_PER_EXPANSION: usize = 5;

/// Positive sampling depth for one hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Depth {
    Top(usize),
    All(AllTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllTag {
    All,
}

impl Depth {
    pub const ALL: Depth = Depth::All(AllTag::All);

    fn resolve(self, k_retrieve: usize) -> usize {
        match self {
            Depth::Top(k) => k,
            Depth::All(_) => k_retrieve,
        }
    }
}

/// First-round positive depths for four hops.
pub fn round1_depths() -> Vec<Depth> {
    vec![Depth::Top(20), Depth::ALL, Depth::ALL, Depth::ALL]
}

/// Second-round positive depths for `hops` hops: 10 everywhere but the last.
pub fn round2_depths(hops: usize) -> Vec<Depth> {
    let mut d = vec![Depth::Top(10); hops.saturating_sub(1)];
    d.push(Depth::ALL);
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainerKind {
    Identity,
    TermWeight,
}

/// How queries are expanded between hops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ExpansionMode {
    /// Oracle facts of the positives.
    Oracle,
    /// The same number of random corpus sentences instead (ablation).
    Shuffled { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LhoConfig {
    pub k_retrieve: usize,
    /// `None` means [`round2_depths`] for the run's hop count.
    pub k_hat: Option<Vec<Depth>>,
    pub facts_per_expansion: usize,
    pub trainer: TrainerKind,
    pub expansion: ExpansionMode,
    /// `None` means the largest gold set in the query set.
    pub hops: Option<usize>,
    /// Negatives sampled per (query, hop) when building triples.
    pub negatives_per_hop: usize,
    pub results_per_vector: usize,
    pub focus: FocusParams,
    pub candidate_source: CandidateSource,
    pub seed: u64,
}

impl Default for LhoConfig {
    fn default() -> Self {
        Self {
            k_retrieve: DEFAULT_K_RETRIEVE,
            k_hat: None,
            facts_per_expansion: DEFAULT_FACTS_PER_EXPANSION,
            trainer: TrainerKind::Identity,
            expansion: ExpansionMode::Oracle,
            hops: None,
            negatives_per_hop: 10,
            results_per_vector: RESULTS_PER_VECTOR_TRAINING,
            focus: FocusParams::default(),
            candidate_source: CandidateSource::QueryAndFacts,
            seed: 0,
        }
    }
}

impl LhoConfig {
    fn depths(&self, hops: usize) -> Result<Vec<usize>> {
        let d = self.k_hat.clone().unwrap_or_else(|| round2_depths(hops));
        if d.len() != hops {
            return Err(Error::HopMismatch(d.len(), hops));
        }
        let d: Vec<usize> = d.into_iter().map(|x| x.resolve(self.k_retrieve)).collect();
        if let Some(bad) = d.iter().find(|&&k| k == 0 || k > self.k_retrieve) {
            return Err(Error::Config(format!("k_hat {bad} outside 1..={}", self.k_retrieve)));
        }
        Ok(d)
    }
}

/// Multiplicative per-token weights on query and fact rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TermWeights(pub HashMap<String, f64>);

impl TermWeights {
    pub fn weight(&self, token: &str) -> f64 {
        self.0.get(token).copied().unwrap_or(1.0)
    }

    fn rows(&self, tokens: &[String]) -> Vec<f64> {
        tokens.iter().map(|t| self.weight(t)).collect()
    }
}

/// Ranks passages for a (possibly expanded) query.
pub trait HopRetriever: Send + Sync {
    fn rank(&self, query: &MultiHopQuery, depth: usize) -> Result<Vec<ScoredPassage>>;
    /// Direct score of one passage, skipping candidate generation.
    fn score(&self, query: &MultiHopQuery, pid: &str) -> Result<Option<f64>>;
}

/// Index-backed retriever with optional learned term weights.
pub struct IndexRetriever<'a> {
    encoder: &'a dyn Encoder,
    index: &'a TokenIndex,
    positions: HashMap<&'a str, usize>,
    cfg: RetrievalConfig,
    weights: TermWeights,
}

impl<'a> IndexRetriever<'a> {
    pub fn new(encoder: &'a dyn Encoder, index: &'a TokenIndex, cfg: RetrievalConfig) -> Self {
        let positions = index.pids().iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        Self {
            encoder,
            index,
            positions,
            cfg,
            weights: TermWeights::default(),
        }
    }

    pub fn with_weights(mut self, weights: TermWeights) -> Self {
        self.weights = weights;
        self
    }

    fn row_weights(&self, q: &MultiHopQuery) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.weights.0.is_empty() {
            return None;
        }
        let (qt, ft) = query_tokens(q, self.encoder.config());
        Some((self.weights.rows(&qt), self.weights.rows(&ft)))
    }
}

impl HopRetriever for IndexRetriever<'_> {
    fn rank(&self, query: &MultiHopQuery, depth: usize) -> Result<Vec<ScoredPassage>> {
        let eq = self.encoder.encode_query(query);
        let w = self.row_weights(query);
        let cfg = RetrievalConfig {
            k: depth,
            ..self.cfg.clone()
        };
        let rw = w.as_ref().map(|(q, f)| RowWeights { query: q, facts: f });
        retrieve_weighted(&eq, self.index, &cfg, rw)
    }

    fn score(&self, query: &MultiHopQuery, pid: &str) -> Result<Option<f64>> {
        let Some(&p) = self.positions.get(pid) else {
            return Ok(None);
        };
        if self.index.passage_matrix(p).is_empty() {
            return Ok(None);
        }
        let eq = self.encoder.encode_query(query);
        let w = self.row_weights(query);
        let rw = w.as_ref().map(|(q, f)| RowWeights { query: q, facts: f });
        Ok(Some(score_pid(&eq, self.index, p, self.cfg.focus, rw)?.score))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTriple {
    pub qid: String,
    pub hop: usize,
    /// `Q_{t-1}` flattened: the query text followed by its facts.
    pub query: String,
    pub positive: String,
    pub negative: String,
}

/// Produces new term weights from triples; gradient training stays out of scope.
pub trait Trainer: Send + Sync {
    fn train(&self, corpus: &Corpus, current: &TermWeights, triples: &[TrainingTriple]) -> TermWeights;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTrainer;

impl Trainer for IdentityTrainer {
    fn train(&self, _: &Corpus, current: &TermWeights, _: &[TrainingTriple]) -> TermWeights {
        current.clone()
    }
}

/// Query tokens found in the positive but not the negative are scaled by
/// `1 + eta`; those found in the negative only by `1 - eta`.
#[derive(Debug, Clone, Copy)]
pub struct TermWeightTrainer {
    pub eta: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for TermWeightTrainer {
    fn default() -> Self {
        Self {
            eta: 0.1,
            min: 0.25,
            max: 4.0,
        }
    }
}

fn passage_tokens(p: &Passage) -> HashSet<String> {
    std::iter::once(&p.title).chain(&p.sentences).flat_map(|s| tokenize(s)).collect()
}

impl Trainer for TermWeightTrainer {
    fn train(&self, corpus: &Corpus, current: &TermWeights, triples: &[TrainingTriple]) -> TermWeights {
        let mut w = current.0.clone();
        let mut cache: HashMap<&str, HashSet<String>> = HashMap::new();
        for t in triples {
            for pid in [&t.positive, &t.negative] {
                if !cache.contains_key(pid.as_str()) {
                    let toks = corpus.get(pid).map(passage_tokens).unwrap_or_default();
                    cache.insert(pid, toks);
                }
            }
            let (pos, neg) = (&cache[t.positive.as_str()], &cache[t.negative.as_str()]);
            let q: BTreeSet<String> = tokenize(&t.query).into_iter().collect();
            for tok in q {
                let factor = match (pos.contains(&tok), neg.contains(&tok)) {
                    (true, false) => 1.0 + self.eta,
                    (false, true) => 1.0 - self.eta,
                    _ => continue,
                };
                let e = w.entry(tok).or_insert(1.0);
                *e = (*e * factor).clamp(self.min, self.max);
            }
        }
        TermWeights(w)
    }
}

pub fn trainer_for(kind: TrainerKind) -> Box<dyn Trainer> {
    match kind {
        TrainerKind::Identity => Box::new(IdentityTrainer),
        TrainerKind::TermWeight => Box::new(TermWeightTrainer::default()),
    }
}

/// Supervision for one query at one hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopSupervision {
    pub qid: String,
    pub hop: usize,
    /// `Q_{t-1}` as used for this hop's retrieval.
    pub query: MultiHopQuery,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
    /// Set when no remaining gold ranked within `k_hat` and one was promoted.
    pub weak: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupervisionSet {
    /// Sorted by qid, then hop.
    pub records: Vec<HopSupervision>,
}

impl SupervisionSet {
    /// Positives per hop for one query, hop 1 first.
    pub fn order_of(&self, qid: &str) -> Vec<&HopSupervision> {
        self.records.iter().filter(|r| r.qid == qid).collect()
    }

    pub fn weak_count(&self) -> usize {
        self.records.iter().filter(|r| r.weak).count()
    }
}

fn flatten(q: &MultiHopQuery) -> String {
    std::iter::once(q.q0_text.as_str())
        .chain(q.facts.iter().map(|f| f.text.as_str()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Positives, negatives and the weak flag for one query at one hop.
pub type Discovered = (Vec<String>, Vec<String>, bool);

/// Splits ranked pids into positives and negatives for one query.
///
/// Positives are the remaining golds within the top `k_hat`. If there are
/// none, the best-placed remaining gold is promoted (by rank, or by direct
/// score when none was ranked) and the result flagged weak.
pub fn discover_positives(
    retriever: &dyn HopRetriever,
    query: &MultiHopQuery,
    gold: &BTreeSet<String>,
    remaining: &BTreeSet<String>,
    k_hat: usize,
    k_retrieve: usize,
) -> Result<Discovered> {
    let ranked = retriever.rank(query, k_retrieve)?;
    let mut pos: Vec<String> = ranked
        .iter()
        .take(k_hat)
        .filter(|s| remaining.contains(&s.pid))
        .map(|s| s.pid.clone())
        .collect();
    let neg: Vec<String> = ranked
        .iter()
        .filter(|s| !gold.contains(&s.pid))
        .map(|s| s.pid.clone())
        .collect();
    let mut weak = false;
    if pos.is_empty() && !remaining.is_empty() {
        weak = true;
        let by_rank = ranked.iter().find(|s| remaining.contains(&s.pid));
        let promoted = match by_rank {
            Some(s) => s.pid.clone(),
            None => {
                let mut best: Option<(f64, &String)> = None;
                for pid in remaining {
                    let s = retriever.score(query, pid)?.unwrap_or(f64::NEG_INFINITY);
                    if best.is_none_or(|(b, _)| s > b) {
                        best = Some((s, pid));
                    }
                }
                best.expect("remaining is non-empty").1.clone()
            }
        };
        pos.push(promoted);
    }
    Ok((pos, neg, weak))
}

/// Oracle facts for one positive: labeled facts by sentence index, else the
/// leading sentences, at most `depth` either way.
pub fn oracle_facts(rec: &QueryRecord, p: &Passage, depth: usize) -> Vec<Fact> {
    let labeled: Vec<usize> = rec
        .gold_facts
        .iter()
        .filter(|(pid, _)| *pid == p.pid)
        .map(|(_, i)| *i)
        .collect();
    let idx: Vec<usize> = if labeled.is_empty() {
        (0..p.sentences.len()).collect()
    } else {
        labeled
    };
    idx.into_iter()
        .take(depth)
        .map(|i| Fact {
            pid: p.pid.clone(),
            sentence_index: i,
            text: p.sentences[i].clone(),
            stage1_score: 0.0,
            stage2_score: None,
        })
        .collect()
}

fn random_facts(corpus: &Corpus, n: usize, seed_value: u64) -> Vec<Fact> {
    let mut rng = seed::rng(seed_value);
    (0..n)
        .map(|_| {
            let p = &corpus.passages()[rng.random_range(0..corpus.len())];
            let i = rng.random_range(0..p.sentences.len());
            Fact {
                pid: p.pid.clone(),
                sentence_index: i,
                text: p.sentences[i].clone(),
                stage1_score: 0.0,
                stage2_score: None,
            }
        })
        .collect()
}

fn stream_seed(seed_value: u64, qid: &str, hop: usize) -> u64 {
    seed::hash64(format!("{qid}\u{0}{hop}").as_bytes(), seed_value)
}

/// Pairs every positive with up to `cap` negatives sampled per (query, hop).
pub fn build_triples(set: &SupervisionSet, cap: usize, seed_value: u64) -> Vec<TrainingTriple> {
    let mut out = Vec::new();
    for r in &set.records {
        if r.positives.is_empty() {
            continue;
        }
        let n = cap.min(r.negatives.len());
        let mut rng = seed::rng(stream_seed(seed_value, &r.qid, r.hop));
        let mut picks = sample(&mut rng, r.negatives.len(), n).into_vec();
        picks.sort_unstable();
        let query = flatten(&r.query);
        for p in &r.positives {
            for &i in &picks {
                out.push(TrainingTriple {
                    qid: r.qid.clone(),
                    hop: r.hop,
                    query: query.clone(),
                    positive: p.clone(),
                    negative: r.negatives[i].clone(),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct LhoOutput {
    pub set: SupervisionSet,
    pub triples: Vec<TrainingTriple>,
    /// Term weights after the last hop's training step.
    pub weights: TermWeights,
}

struct QueryState<'q> {
    rec: &'q QueryRecord,
    query: MultiHopQuery,
    remaining: BTreeSet<String>,
}

/// Latent hop ordering over `queries`, starting from the untrained retriever.
pub fn latent_hop_ordering(
    corpus: &Corpus,
    encoder: &dyn Encoder,
    index: &TokenIndex,
    queries: &[QueryRecord],
    cfg: &LhoConfig,
) -> Result<LhoOutput> {
    let max_gold = queries.iter().map(|q| q.gold_pids.len()).max().unwrap_or(0);
    let hops = cfg.hops.unwrap_or(max_gold).max(1);
    if hops < max_gold {
        log::warn!("{hops} hops for gold sets of up to {max_gold}; some golds will stay unassigned");
    }
    let depths = cfg.depths(hops)?;
    let trainer = trainer_for(cfg.trainer);
    let rcfg = RetrievalConfig {
        k: cfg.k_retrieve,
        results_per_vector: cfg.results_per_vector,
        focus: cfg.focus,
        candidate_source: cfg.candidate_source,
        exclude: BTreeSet::new(),
    };
    rcfg.validate()?;

    let mut states: Vec<QueryState> = queries
        .iter()
        .map(|rec| QueryState {
            rec,
            query: MultiHopQuery::new(&rec.qid, &rec.text),
            remaining: rec.gold_pids.clone(),
        })
        .collect();
    let mut weights = TermWeights::default();
    let mut records: Vec<HopSupervision> = Vec::new();

    for (t, &k_hat) in depths.iter().enumerate() {
        let hop = t + 1;
        let retriever = IndexRetriever::new(encoder, index, rcfg.clone()).with_weights(weights.clone());
        let found: Vec<Option<Discovered>> = states
            .par_iter()
            .map(|s| {
                if s.remaining.is_empty() {
                    return Ok(None);
                }
                discover_positives(&retriever, &s.query, &s.rec.gold_pids, &s.remaining, k_hat, cfg.k_retrieve).map(Some)
            })
            .collect::<Result<_>>()?;

        let mut hop_records = Vec::new();
        // the expanded query should now rank every still-unassigned gold
        let mut train_records = Vec::new();
        for (s, f) in states.iter_mut().zip(found) {
            let Some((pos, neg, weak)) = f else { continue };
            let before = s.query.clone();
            for p in &pos {
                s.remaining.remove(p);
            }
            let mut added = Vec::new();
            for p in &pos {
                let passage = corpus.get(p).ok_or_else(|| Error::DanglingGold {
                    qid: s.rec.qid.clone(),
                    pid: p.clone(),
                })?;
                added.extend(oracle_facts(s.rec, passage, cfg.facts_per_expansion));
            }
            if let ExpansionMode::Shuffled { seed: sseed } = cfg.expansion {
                added = random_facts(corpus, added.len(), stream_seed(sseed, &s.rec.qid, hop));
            }
            s.query.facts.extend(added);
            s.query.hop = hop;
            if hop < hops && !s.remaining.is_empty() {
                train_records.push(HopSupervision {
                    qid: s.rec.qid.clone(),
                    hop: hop + 1,
                    query: s.query.clone(),
                    positives: s.remaining.iter().cloned().collect(),
                    negatives: neg.clone(),
                    weak: false,
                });
            }
            hop_records.push(HopSupervision {
                qid: s.rec.qid.clone(),
                hop,
                query: before,
                positives: pos,
                negatives: neg,
                weak,
            });
        }

        if hop < hops && !train_records.is_empty() {
            let set = SupervisionSet { records: train_records };
            let triples = build_triples(&set, cfg.negatives_per_hop, seed::derive(cfg.seed, "training"));
            weights = trainer.train(corpus, &weights, &triples);
        }
        log::info!(
            "hop {hop}: {} active queries, {} weak",
            hop_records.len(),
            hop_records.iter().filter(|r| r.weak).count()
        );
        records.extend(hop_records);
    }
    records.sort_by(|a, b| a.qid.cmp(&b.qid).then(a.hop.cmp(&b.hop)));
    let set = SupervisionSet { records };
    let triples = build_triples(&set, cfg.negatives_per_hop, seed::derive(cfg.seed, "sampling"));
    Ok(LhoOutput { set, triples, weights })
}

/// Order-recovery counts against planted hops.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub passages_correct: usize,
    pub passages_total: usize,
    pub queries_correct: usize,
    pub queries_total: usize,
}

impl Recovery {
    pub fn passage_rate(&self) -> f64 {
        self.passages_correct as f64 / self.passages_total.max(1) as f64
    }

    pub fn query_rate(&self) -> f64 {
        self.queries_correct as f64 / self.queries_total.max(1) as f64
    }

    pub fn add(&mut self, o: Recovery) {
        self.passages_correct += o.passages_correct;
        self.passages_total += o.passages_total;
        self.queries_correct += o.queries_correct;
        self.queries_total += o.queries_total;
    }
}

/// A gold counts when it is a positive at its planted hop and that hop's
/// positives were discovered rather than promoted by the fallback.
pub fn order_recovery<'a>(
    predicted: impl Fn(&str) -> Vec<(Vec<String>, bool)>,
    truth: impl IntoIterator<Item = (&'a str, &'a [Vec<String>])>,
) -> Recovery {
    let mut r = Recovery::default();
    for (qid, hops) in truth {
        let pred = predicted(qid);
        let mut all = true;
        for (t, golds) in hops.iter().enumerate() {
            for g in golds {
                r.passages_total += 1;
                let ok = pred.get(t).is_some_and(|(pos, weak)| !weak && pos.contains(g));
                if ok {
                    r.passages_correct += 1;
                } else {
                    all = false;
                }
            }
        }
        r.queries_total += 1;
        if all {
            r.queries_correct += 1;
        }
    }
    r
}

/// Recovery of an LHO run against ground-truth hop lists.
pub fn lho_recovery(set: &SupervisionSet, truth: &[crate::synth::GroundTruth]) -> Recovery {
    let mut by_q: BTreeMap<&str, Vec<(Vec<String>, bool)>> = BTreeMap::new();
    for r in &set.records {
        by_q.entry(r.qid.as_str()).or_default().push((r.positives.clone(), r.weak));
    }
    order_recovery(
        |qid| by_q.get(qid).cloned().unwrap_or_default(),
        truth.iter().map(|g| (g.qid.as_str(), g.hops.as_slice())),
    )
}

/// Recovery of heuristic orders (never weak) against ground truth.
pub fn heuristic_recovery(orders: &BTreeMap<String, Vec<Vec<String>>>, truth: &[crate::synth::GroundTruth]) -> Recovery {
    order_recovery(
        |qid| {
            orders
                .get(qid)
                .map(|o| o.iter().map(|h| (h.clone(), false)).collect())
                .unwrap_or_default()
        },
        truth.iter().map(|g| (g.qid.as_str(), g.hops.as_slice())),
    )
}

/// 1.0 if the title's tokens occur contiguously in `text`, otherwise the
/// fraction of title tokens present anywhere in `text`.
pub fn title_score(title: &[String], text: &[String], vocab: &HashSet<&str>) -> f64 {
    if title.is_empty() {
        return 0.0;
    }
    if text.windows(title.len()).any(|w| w == title) {
        return 1.0;
    }
    title.iter().filter(|t| vocab.contains(t.as_str())).count() as f64 / title.len() as f64
}

const MAX_BRANCHING_GOLDS: usize = 8;

fn best_order(text: &[String], remaining: &[&Passage]) -> (f64, Vec<Vec<String>>) {
    if remaining.is_empty() {
        return (0.0, Vec::new());
    }
    let vocab: HashSet<&str> = text.iter().map(String::as_str).collect();
    let scores: Vec<f64> = remaining
        .iter()
        .map(|p| title_score(&tokenize(&p.title), text, &vocab))
        .collect();
    let max = scores.iter().copied().fold(0.0, f64::max);
    let extend = |text: &[String], hop: &[&Passage]| -> Vec<String> {
        let mut t = text.to_vec();
        for p in hop {
            t.extend(tokenize(&p.title));
            t.extend(p.sentences.iter().flat_map(|s| tokenize(s)));
        }
        t
    };
    if max > 0.0 {
        let hop: Vec<&Passage> = remaining.iter().zip(&scores).filter(|(_, s)| **s == max).map(|(p, _)| *p).collect();
        let rest: Vec<&Passage> = remaining.iter().zip(&scores).filter(|(_, s)| **s != max).map(|(p, _)| *p).collect();
        let (s, mut order) = best_order(&extend(text, &hop), &rest);
        order.insert(0, hop.iter().map(|p| p.pid.clone()).collect());
        return (max + s, order);
    }
    if remaining.len() > MAX_BRANCHING_GOLDS {
        log::warn!("{} unmatched golds; ordering them by pid", remaining.len());
        return (0.0, remaining.iter().map(|p| vec![p.pid.clone()]).collect());
    }
    let mut best: Option<(f64, Vec<Vec<String>>)> = None;
    for (i, p) in remaining.iter().enumerate() {
        let rest: Vec<&Passage> = remaining.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, q)| *q).collect();
        let (s, mut order) = best_order(&extend(text, &[p]), &rest);
        order.insert(0, vec![p.pid.clone()]);
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, order));
        }
    }
    best.expect("remaining is non-empty")
}

/// Title-overlap ordering of a query's golds, one pid list per hop.
pub fn heuristic_order(q: &QueryRecord, corpus: &Corpus) -> Result<Vec<Vec<String>>> {
    let mut golds: Vec<&Passage> = q
        .gold_pids
        .iter()
        .map(|pid| {
            corpus.get(pid).ok_or_else(|| Error::DanglingGold {
                qid: q.qid.clone(),
                pid: pid.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let mut last = None;
    if let Some(ans) = q.answer.as_deref().filter(|a| !is_yes_no(a)) {
        let needle = normalize_answer(ans);
        if !needle.is_empty() {
            let holders: Vec<usize> = golds
                .iter()
                .enumerate()
                .filter(|(_, p)| normalize_answer(&format!("{} {}", p.title, p.text())).contains(&needle))
                .map(|(i, _)| i)
                .collect();
            if holders.len() == 1 {
                last = Some(golds.remove(holders[0]));
            }
        }
    }
    let (_, mut order) = best_order(&tokenize(&q.text), &golds);
    if let Some(p) = last {
        order.push(vec![p.pid.clone()]);
    }
    Ok(order)
}

pub fn write_supervision(path: &std::path::Path, set: &SupervisionSet) -> Result<()> {
    crate::corpus::write_jsonl(path, &set.records)
}

pub fn write_triples(path: &std::path::Path, triples: &[TrainingTriple]) -> Result<()> {
    crate::corpus::write_jsonl(path, triples)
}

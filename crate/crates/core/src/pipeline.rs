//! Multi-hop orchestration and traces.
//!
//! Each hop retrieves with the current query, excludes everything ranked in
//! earlier hops, and grows the query's context. The condensed variant appends
//! the facts kept by the condenser; the rerank variant appends every sentence
//! of the top passage; the hybrid variant runs both and merges their lists.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condenser::{condense, CondenserConfig, Fact, IdfOverlapScorer};
use crate::corpus::{read_jsonl, write_jsonl, Corpus, Passage, QueryRecord};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::index::TokenIndex;
use crate::retriever::{retrieve, RetrievalConfig};
use crate::scoring::ScoredPassage;

/// `Q_t`: the original text plus the facts accumulated so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiHopQuery {
    pub qid: String,
    pub q0_text: String,
    pub facts: Vec<Fact>,
    pub hop: usize,
}

impl MultiHopQuery {
    pub fn new(qid: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            qid: qid.into(),
            q0_text: text.into(),
            facts: Vec::new(),
            hop: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Condensed,
    Rerank,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Hover,
    Hotpotqa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HybridConfig {
    pub condensed_take: usize,
    pub rerank_take: usize,
    pub total: usize,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            condensed_take: 13,
            rerank_take: 12,
            total: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub hops: usize,
    pub k_per_hop: Vec<usize>,
    pub variant: Variant,
    /// Per-hop prefix lengths forming the trace union; `None` keeps all of each hop.
    pub union_take: Option<Vec<usize>>,
    /// When false, kept facts are recorded but never added to the query.
    pub accumulate_facts: bool,
    pub hybrid: HybridConfig,
    pub retrieval: RetrievalConfig,
    pub condenser: CondenserConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::preset(Preset::Hover)
    }
}

impl PipelineConfig {
    pub fn preset(p: Preset) -> Self {
        let (hops, k_per_hop, union_take) = match p {
            Preset::Hover => (4, vec![25; 4], None),
            Preset::Hotpotqa => (2, vec![10, 40], Some(vec![10, 10])),
        };
        Self {
            hops,
            k_per_hop,
            variant: Variant::Condensed,
            union_take,
            accumulate_facts: true,
            hybrid: HybridConfig::default(),
            retrieval: RetrievalConfig::default(),
            condenser: CondenserConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hops == 0 {
            return Err(Error::Config("hops must be at least 1".into()));
        }
        if self.k_per_hop.len() != self.hops {
            return Err(Error::Config(format!(
                "k_per_hop has {} entries for {} hops",
                self.k_per_hop.len(),
                self.hops
            )));
        }
        if self.k_per_hop.contains(&0) {
            return Err(Error::Config("per-hop k must be at least 1".into()));
        }
        if let Some(take) = &self.union_take {
            if take.len() != self.hops {
                return Err(Error::HopMismatch(take.len(), self.hops));
            }
            for (h, (&t, &k)) in take.iter().zip(&self.k_per_hop).enumerate() {
                if t > k {
                    return Err(Error::TakeTooLarge { hop: h + 1, take: t, depth: k });
                }
            }
        }
        self.retrieval.validate()?;
        self.condenser.validate()
    }
}

/// Picks the context passage for the rerank variant.
pub trait PassageScorer: Send + Sync {
    fn score(&self, query: &MultiHopQuery, passage: &Passage, retrieved: &ScoredPassage) -> f64;
}

/// Reference reranker: keeps the retriever's own order.
#[derive(Debug, Clone, Copy, Default)]
pub struct RetrievalOrder;

impl PassageScorer for RetrievalOrder {
    fn score(&self, _: &MultiHopQuery, _: &Passage, retrieved: &ScoredPassage) -> f64 {
        retrieved.score
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopTrace {
    pub hop: usize,
    pub k: usize,
    pub ranked: Vec<ScoredPassage>,
    /// Condensed: kept facts. Rerank: the context passage's sentences.
    pub facts: Vec<Fact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_pid: Option<String>,
    /// Pids excluded from this hop's retrieval.
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub qid: String,
    pub variant: Variant,
    pub hops: Vec<HopTrace>,
    pub union: Vec<String>,
    pub final_facts: Vec<Fact>,
    pub final_query: MultiHopQuery,
    pub context_words: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condensed: Option<Box<QueryTrace>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank: Option<Box<QueryTrace>>,
}

impl QueryTrace {
    pub fn hop_count(&self) -> usize {
        match &self.condensed {
            Some(c) => c.hops.len(),
            None => self.hops.len(),
        }
    }
}

fn word_count(facts: &[Fact]) -> usize {
    facts.iter().map(|f| f.text.split_whitespace().count()).sum()
}

/// Concatenates the first `take[t]` ranked pids of every hop.
pub fn union_topk(trace: &QueryTrace, take: &[usize]) -> Result<Vec<String>> {
    if take.len() != trace.hops.len() {
        return Err(Error::HopMismatch(take.len(), trace.hops.len()));
    }
    let mut out = Vec::new();
    for (h, &t) in trace.hops.iter().zip(take) {
        if t > h.k {
            return Err(Error::TakeTooLarge { hop: h.hop, take: t, depth: h.k });
        }
        out.extend(h.ranked.iter().take(t).map(|s| s.pid.clone()));
    }
    Ok(out)
}

/// Advances `pos` down `list`, appending up to `want` pids not yet seen.
fn take_unseen<'a>(
    list: &'a [ScoredPassage],
    pos: &mut usize,
    want: usize,
    seen: &mut HashSet<&'a str>,
    out: &mut Vec<String>,
) -> usize {
    let mut got = 0;
    while got < want && *pos < list.len() {
        let pid = list[*pos].pid.as_str();
        *pos += 1;
        if seen.insert(pid) {
            out.push(pid.to_owned());
            got += 1;
        }
    }
    got
}

/// Hop-major merge of a condensed and a rerank trace.
///
/// At each hop, up to `condensed_take` unseen pids come from the condensed
/// list, then up to `rerank_take` from the rerank list; when one list runs
/// dry the other covers the shortfall. If the per-hop phase ends below
/// `total`, remaining unseen pids are appended hop by hop, condensed first.
pub fn merge_hybrid(c: &QueryTrace, r: &QueryTrace, cfg: &HybridConfig) -> Result<Vec<String>> {
    if c.hops.len() != r.hops.len() {
        return Err(Error::HopMismatch(c.hops.len(), r.hops.len()));
    }
    let mut seen: HashSet<&str> = HashSet::new();
    let mut out: Vec<String> = Vec::new();
    let per_hop = cfg.condensed_take + cfg.rerank_take;
    for (hc, hr) in c.hops.iter().zip(&r.hops) {
        let (mut pc, mut pr) = (0, 0);
        let got_c = take_unseen(&hc.ranked, &mut pc, cfg.condensed_take, &mut seen, &mut out);
        let got_r = take_unseen(&hr.ranked, &mut pr, per_hop - got_c, &mut seen, &mut out);
        take_unseen(&hc.ranked, &mut pc, per_hop - got_c - got_r, &mut seen, &mut out);
    }
    for (hc, hr) in c.hops.iter().zip(&r.hops) {
        if out.len() >= cfg.total {
            break;
        }
        for s in hc.ranked.iter().chain(&hr.ranked) {
            if seen.insert(s.pid.as_str()) {
                out.push(s.pid.clone());
            }
        }
    }
    out.truncate(cfg.total);
    Ok(out)
}

/// Runs queries against a fixed corpus, encoder and index.
pub struct Pipeline<'a> {
    corpus: &'a Corpus,
    encoder: &'a dyn Encoder,
    index: &'a TokenIndex,
    condenser: IdfOverlapScorer,
    reranker: Box<dyn PassageScorer + 'a>,
    cfg: PipelineConfig,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        corpus: &'a Corpus,
        encoder: &'a dyn Encoder,
        index: &'a TokenIndex,
        cfg: PipelineConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if encoder.dim() != index.dim() {
            return Err(Error::DimMismatch {
                expected: index.dim(),
                actual: encoder.dim(),
            });
        }
        if index.passage_count() != corpus.len() || index.pids().iter().any(|p| corpus.get(p).is_none()) {
            return Err(Error::BadIndex("index passages do not match the corpus".into()));
        }
        if index.encoder_seed() != encoder.config().seed {
            log::warn!(
                "index built with encoder seed {}, query encoder uses {}",
                index.encoder_seed(),
                encoder.config().seed
            );
        }
        Ok(Self {
            corpus,
            encoder,
            index,
            condenser: IdfOverlapScorer::from_config(corpus, &cfg.condenser),
            reranker: Box::new(RetrievalOrder),
            cfg,
        })
    }

    pub fn with_reranker(mut self, reranker: impl PassageScorer + 'a) -> Self {
        self.reranker = Box::new(reranker);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn run(&self, q: &QueryRecord) -> Result<QueryTrace> {
        match self.cfg.variant {
            Variant::Condensed => self.run_condensed(q),
            Variant::Rerank => self.run_rerank(q),
            Variant::Hybrid => self.run_hybrid(q),
        }
    }

    /// All queries, in input order.
    pub fn run_all(&self, queries: &[QueryRecord]) -> Result<Vec<QueryTrace>> {
        queries.par_iter().map(|q| self.run(q)).collect()
    }

    fn hop_retrieve(&self, q: &MultiHopQuery, t: usize, excluded: &BTreeSet<String>) -> Result<Vec<ScoredPassage>> {
        let eq = self.encoder.encode_query(q);
        let rcfg = RetrievalConfig {
            k: self.cfg.k_per_hop[t],
            exclude: excluded.clone(),
            ..self.cfg.retrieval.clone()
        };
        retrieve(&eq, self.index, &rcfg)
    }

    fn passage(&self, pid: &str) -> Result<&'a Passage> {
        self.corpus
            .get(pid)
            .ok_or_else(|| Error::BadIndex(format!("pid {pid:?} missing from corpus")))
    }

    fn finish(&self, qid: &str, variant: Variant, hops: Vec<HopTrace>, query: MultiHopQuery, words: usize) -> Result<QueryTrace> {
        let final_facts: Vec<Fact> = hops.iter().flat_map(|h| h.facts.iter().cloned()).collect();
        let verdict = Some(hops.iter().all(|h| !h.facts.is_empty()));
        let mut trace = QueryTrace {
            qid: qid.to_owned(),
            variant,
            hops,
            union: Vec::new(),
            final_facts,
            final_query: query,
            context_words: words,
            verdict,
            condensed: None,
            rerank: None,
        };
        trace.union = match &self.cfg.union_take {
            Some(take) => union_topk(&trace, take)?,
            None => union_topk(&trace, &self.cfg.k_per_hop)?,
        };
        Ok(trace)
    }

    pub fn run_condensed(&self, rec: &QueryRecord) -> Result<QueryTrace> {
        let mut q = MultiHopQuery::new(&rec.qid, &rec.text);
        let mut excluded = BTreeSet::new();
        let mut hops = Vec::with_capacity(self.cfg.hops);
        for t in 0..self.cfg.hops {
            q.hop = t;
            let ranked = self.hop_retrieve(&q, t, &excluded)?;
            let passages = ranked.iter().map(|s| self.passage(&s.pid)).collect::<Result<Vec<_>>>()?;
            let kept = condense(&q, &passages, &self.cfg.condenser, &self.condenser);
            let snapshot = excluded.iter().cloned().collect();
            excluded.extend(ranked.iter().map(|s| s.pid.clone()));
            if self.cfg.accumulate_facts {
                q.facts.extend(kept.iter().cloned());
            }
            hops.push(HopTrace {
                hop: t + 1,
                k: self.cfg.k_per_hop[t],
                ranked,
                facts: kept,
                context_pid: None,
                excluded: snapshot,
            });
        }
        q.hop = self.cfg.hops;
        let words = hops.iter().map(|h| word_count(&h.facts)).sum();
        self.finish(&rec.qid, Variant::Condensed, hops, q, words)
    }

    pub fn run_rerank(&self, rec: &QueryRecord) -> Result<QueryTrace> {
        let mut q = MultiHopQuery::new(&rec.qid, &rec.text);
        let mut excluded = BTreeSet::new();
        let mut hops = Vec::with_capacity(self.cfg.hops);
        for t in 0..self.cfg.hops {
            q.hop = t;
            let ranked = self.hop_retrieve(&q, t, &excluded)?;
            let mut best: Option<(f64, &ScoredPassage, &Passage)> = None;
            for s in &ranked {
                let p = self.passage(&s.pid)?;
                let score = self.reranker.score(&q, p, s);
                if best.is_none_or(|(b, _, _)| score > b) {
                    best = Some((score, s, p));
                }
            }
            let context: Vec<Fact> = best
                .map(|(_, s, p)| {
                    p.sentences
                        .iter()
                        .enumerate()
                        .map(|(i, text)| Fact {
                            pid: p.pid.clone(),
                            sentence_index: i,
                            text: text.clone(),
                            stage1_score: s.score,
                            stage2_score: None,
                        })
                        .collect()
                })
                .unwrap_or_default();
            let context_pid = best.map(|(_, s, _)| s.pid.clone());
            let snapshot = excluded.iter().cloned().collect();
            excluded.extend(ranked.iter().map(|s| s.pid.clone()));
            if self.cfg.accumulate_facts {
                q.facts.extend(context.iter().cloned());
            }
            hops.push(HopTrace {
                hop: t + 1,
                k: self.cfg.k_per_hop[t],
                ranked,
                facts: context,
                context_pid,
                excluded: snapshot,
            });
        }
        q.hop = self.cfg.hops;
        let words = hops.iter().map(|h| word_count(&h.facts)).sum();
        self.finish(&rec.qid, Variant::Rerank, hops, q, words)
    }

    pub fn run_hybrid(&self, rec: &QueryRecord) -> Result<QueryTrace> {
        let c = self.run_condensed(rec)?;
        let r = self.run_rerank(rec)?;
        let union = merge_hybrid(&c, &r, &self.cfg.hybrid)?;
        Ok(QueryTrace {
            qid: rec.qid.clone(),
            variant: Variant::Hybrid,
            hops: Vec::new(),
            union,
            final_facts: c.final_facts.clone(),
            final_query: c.final_query.clone(),
            context_words: c.context_words,
            verdict: c.verdict,
            condensed: Some(Box::new(c)),
            rerank: Some(Box::new(r)),
        })
    }
}

pub fn write_traces(path: &Path, traces: &[QueryTrace]) -> Result<()> {
    write_jsonl(path, traces)
}

pub fn read_traces(path: &Path) -> Result<Vec<QueryTrace>> {
    read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderConfig, LexicalEncoder};
    use crate::index::{build_index, IndexConfig};

    fn sp(pid: &str) -> ScoredPassage {
        ScoredPassage {
            pid: pid.into(),
            score: 0.0,
            s_query: 0.0,
            s_fact: 0.0,
        }
    }

    fn trace_of(lists: &[Vec<String>]) -> QueryTrace {
        QueryTrace {
            qid: "q".into(),
            variant: Variant::Condensed,
            hops: lists
                .iter()
                .enumerate()
                .map(|(i, l)| HopTrace {
                    hop: i + 1,
                    k: l.len(),
                    ranked: l.iter().map(|p| sp(p)).collect(),
                    facts: Vec::new(),
                    context_pid: None,
                    excluded: Vec::new(),
                })
                .collect(),
            union: Vec::new(),
            final_facts: Vec::new(),
            final_query: MultiHopQuery::new("q", ""),
            context_words: 0,
            verdict: None,
            condensed: None,
            rerank: None,
        }
    }

    fn lists(prefix: &str, hops: usize, per: usize) -> Vec<Vec<String>> {
        (0..hops)
            .map(|h| (0..per).map(|i| format!("{prefix}{h}_{i:02}")).collect())
            .collect()
    }

    #[test]
    fn hybrid_disjoint_gives_100() {
        let c = trace_of(&lists("c", 4, 25));
        let r = trace_of(&lists("r", 4, 25));
        let out = merge_hybrid(&c, &r, &HybridConfig::default()).unwrap();
        assert_eq!(out.len(), 100);
        assert_eq!(out.iter().collect::<HashSet<_>>().len(), 100);
        for h in 0..4 {
            let block = &out[h * 25..(h + 1) * 25];
            assert_eq!(block.iter().filter(|p| p.starts_with(&format!("c{h}_"))).count(), 13);
            assert_eq!(block.iter().filter(|p| p.starts_with(&format!("r{h}_"))).count(), 12);
        }
    }

    #[test]
    fn hybrid_identical_collapses_to_condensed() {
        let l = lists("p", 4, 25);
        let out = merge_hybrid(&trace_of(&l), &trace_of(&l), &HybridConfig::default()).unwrap();
        assert_eq!(out, l.concat());
    }

    #[test]
    fn hybrid_partial_overlap_by_hand() {
        let c = trace_of(&[vec!["a".into(), "b".into(), "c".into()]]);
        let r = trace_of(&[vec!["b".into(), "d".into(), "a".into(), "e".into()]]);
        let cfg = HybridConfig {
            condensed_take: 2,
            rerank_take: 2,
            total: 5,
        };
        // hop: a, b from c; r skips b, takes d, skips a, takes e; spill adds c
        assert_eq!(merge_hybrid(&c, &r, &cfg).unwrap(), ["a", "b", "d", "e", "c"]);
        let r2 = trace_of(&[vec!["a".into()], vec![]]);
        assert!(matches!(merge_hybrid(&c, &r2, &cfg), Err(Error::HopMismatch(1, 2))));
    }

    #[test]
    fn union_topk_rules() {
        let t = trace_of(&[
            (0..10).map(|i| format!("a{i}")).collect(),
            (0..40).map(|i| format!("b{i}")).collect(),
        ]);
        assert_eq!(union_topk(&t, &[10, 10]).unwrap().len(), 20);
        assert_eq!(union_topk(&t, &[10, 40]).unwrap().len(), 50);
        assert!(matches!(union_topk(&t, &[11, 10]), Err(Error::TakeTooLarge { hop: 1, .. })));
    }

    #[test]
    fn presets() {
        let h = PipelineConfig::preset(Preset::Hover);
        assert_eq!((h.hops, h.k_per_hop.clone()), (4, vec![25; 4]));
        let p = PipelineConfig::preset(Preset::Hotpotqa);
        assert_eq!((p.hops, p.k_per_hop.clone(), p.union_take.clone()), (2, vec![10, 40], Some(vec![10, 10])));
        let mut bad = h;
        bad.k_per_hop.pop();
        assert!(bad.validate().is_err());
    }

    fn chain_fixture() -> (Corpus, Vec<QueryRecord>) {
        let p = |pid: &str, title: &str, s: &[&str]| Passage {
            pid: pid.into(),
            title: title.into(),
            sentences: s.iter().map(|x| x.to_string()).collect(),
        };
        let mut ps = vec![
            p("g1", "Zorvik", &["zorvik quelled the brantam uprising", "it rained often there"]),
            p("g2", "Brantam", &["brantam is the birthplace of oskelund", "markets open early"]),
            p("g3", "Oskelund", &["oskelund composed twelve operas", "winters are long"]),
        ];
        for i in 0..12 {
            ps.push(p(&format!("n{i:02}"), &format!("Filler {i}"), &[&format!("unrelated filler passage number {i} about tea")]));
        }
        let q = QueryRecord {
            qid: "q1".into(),
            text: "zorvik quelled an uprising".into(),
            gold_pids: ["g1", "g2", "g3"].iter().map(|s| s.to_string()).collect(),
            gold_facts: Default::default(),
            answer: None,
            label: Some(true),
            num_hops: Some(3),
        };
        (Corpus::from_passages(ps).unwrap(), vec![q])
    }

    fn small_cfg(variant: Variant) -> PipelineConfig {
        PipelineConfig {
            hops: 3,
            k_per_hop: vec![1, 1, 1],
            variant,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn condensed_follows_bridges() {
        let (c, qs) = chain_fixture();
        let e = LexicalEncoder::new(EncoderConfig::default()).unwrap();
        let idx = build_index(&c, &e, &IndexConfig::default()).unwrap();
        let pl = Pipeline::new(&c, &e, &idx, small_cfg(Variant::Condensed)).unwrap();
        let t = pl.run(&qs[0]).unwrap();
        assert_eq!(t.union, ["g1", "g2", "g3"]);
        assert_eq!(t.hops[1].excluded, ["g1"]);
        for w in t.hops.windows(2) {
            assert!(w[1].ranked.iter().all(|s| !w[0].excluded.contains(&s.pid)));
        }
        for f in &t.final_facts {
            assert_eq!(f.text, c.get(&f.pid).unwrap().sentences[f.sentence_index]);
        }

        let mut off = small_cfg(Variant::Condensed);
        off.accumulate_facts = false;
        let t = Pipeline::new(&c, &e, &idx, off).unwrap().run(&qs[0]).unwrap();
        assert_eq!(t.union[0], "g1");
        assert!(t.final_query.facts.is_empty());
    }

    #[test]
    fn rerank_context_and_hybrid() {
        let (c, qs) = chain_fixture();
        let e = LexicalEncoder::new(EncoderConfig::default()).unwrap();
        let idx = build_index(&c, &e, &IndexConfig::default()).unwrap();
        let mut cfg = small_cfg(Variant::Rerank);
        cfg.hops = 2;
        cfg.k_per_hop = vec![3, 3];
        let r = Pipeline::new(&c, &e, &idx, cfg.clone()).unwrap().run(&qs[0]).unwrap();
        let ctx: BTreeSet<&str> = r.hops[0].facts.iter().map(|f| f.pid.as_str()).collect();
        assert_eq!(ctx.len(), 1);
        assert_eq!(r.hops[0].context_pid.as_deref(), Some("g1"));
        let all: Vec<&String> = r.hops.iter().flat_map(|h| h.ranked.iter().map(|s| &s.pid)).collect();
        assert_eq!(all.iter().collect::<HashSet<_>>().len(), all.len());

        cfg.variant = Variant::Condensed;
        let cond = Pipeline::new(&c, &e, &idx, cfg.clone()).unwrap().run(&qs[0]).unwrap();
        assert!(cond.context_words <= r.context_words);

        cfg.variant = Variant::Hybrid;
        cfg.hybrid.total = 6;
        let h = Pipeline::new(&c, &e, &idx, cfg).unwrap().run(&qs[0]).unwrap();
        assert!(h.condensed.is_some() && h.rerank.is_some());
        assert!(h.union.len() <= 6);
    }

    #[test]
    fn traces_round_trip() {
        let (c, qs) = chain_fixture();
        let e = LexicalEncoder::new(EncoderConfig::default()).unwrap();
        let idx = build_index(&c, &e, &IndexConfig::default()).unwrap();
        let mut cfg = small_cfg(Variant::Hybrid);
        cfg.hybrid.total = 3;
        let traces = Pipeline::new(&c, &e, &idx, cfg).unwrap().run_all(&qs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_traces(&path, &traces).unwrap();
        assert_eq!(read_traces(&path).unwrap(), traces);
    }
}

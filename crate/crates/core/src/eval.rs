//! Retrieval and extraction metrics from traces, stratified by hop count.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FactRef, QueryRecord};
use crate::error::{Error, Result};
use crate::pipeline::QueryTrace;

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    s.chars()
        .flat_map(|c| if c.is_alphanumeric() { c.to_lowercase().collect::<Vec<_>>() } else { vec![' '] })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn is_yes_no(answer: &str) -> bool {
    matches!(normalize_answer(answer).as_str(), "yes" | "no")
}

/// 1 iff every gold pid is among the first `k` pids of `union`.
pub fn retrieval_at_k(union: &[String], gold: &BTreeSet<String>, k: usize) -> f64 {
    let top: BTreeSet<&str> = union.iter().take(k).map(String::as_str).collect();
    f64::from(u8::from(gold.iter().all(|g| top.contains(g.as_str()))))
}

/// Exact match and F1 of a predicted set against a non-empty gold set.
pub fn set_em_f1<T: Ord>(predicted: &BTreeSet<T>, gold: &BTreeSet<T>) -> (f64, f64) {
    let em = f64::from(u8::from(predicted == gold));
    let inter = predicted.intersection(gold).count() as f64;
    if inter == 0.0 {
        return (em, 0.0);
    }
    let p = inter / predicted.len() as f64;
    let r = inter / gold.len() as f64;
    (em, 2.0 * p * r / (p + r))
}

/// 1 iff the normalized answer occurs in one of the first `k` passages.
/// `None` for yes/no answers, which are excluded from the denominator.
pub fn answer_recall(union: &[String], corpus: &Corpus, answer: &str, k: usize) -> Option<f64> {
    if is_yes_no(answer) {
        return None;
    }
    let needle = normalize_answer(answer);
    if needle.is_empty() {
        return None;
    }
    let hit = union.iter().take(k).filter_map(|pid| corpus.get(pid)).any(|p| {
        normalize_answer(&format!("{} {}", p.title, p.text())).contains(&needle)
    });
    Some(f64::from(u8::from(hit)))
}

/// Running mean kept as sum and count so strata merge exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Mean {
    pub sum: f64,
    pub count: usize,
}

impl Mean {
    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.count += 1;
    }

    pub fn merge(&mut self, o: Mean) {
        self.sum += o.sum;
        self.count += o.count;
    }

    pub fn value(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub queries: usize,
    pub retrieval_at_k: Mean,
    /// Retrieval@k over queries labeled supported.
    pub retrieval_at_k_supported: Mean,
    pub passage_em: Mean,
    pub passage_f1: Mean,
    pub sentence_em: Mean,
    pub sentence_f1: Mean,
    pub answer_recall_at_k: Mean,
    pub verification_accuracy: Mean,
}

impl Metrics {
    fn merge(&mut self, o: &Metrics) {
        self.queries += o.queries;
        for (a, b) in self.fields_mut().into_iter().zip(o.fields()) {
            a.merge(b);
        }
    }

    fn fields(&self) -> [Mean; 8] {
        [
            self.retrieval_at_k,
            self.retrieval_at_k_supported,
            self.passage_em,
            self.passage_f1,
            self.sentence_em,
            self.sentence_f1,
            self.answer_recall_at_k,
            self.verification_accuracy,
        ]
    }

    fn fields_mut(&mut self) -> [&mut Mean; 8] {
        [
            &mut self.retrieval_at_k,
            &mut self.retrieval_at_k_supported,
            &mut self.passage_em,
            &mut self.passage_f1,
            &mut self.sentence_em,
            &mut self.sentence_f1,
            &mut self.answer_recall_at_k,
            &mut self.verification_accuracy,
        ]
    }
}

const COLUMNS: [&str; 8] = ["R@k", "R@k sup", "P-EM", "P-F1", "S-EM", "S-F1", "AnsRec", "Verif"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { k: 100 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub overall: Metrics,
    /// Keyed by hop count.
    pub strata: BTreeMap<usize, Metrics>,
}

impl MetricsReport {
    /// Percentages to one decimal; `-` where a metric has no eligible queries.
    pub fn table(&self) -> String {
        let mut out = format!("{:<8}{:>7}", "hops", "n");
        for c in COLUMNS {
            let _ = write!(out, "{c:>9}");
        }
        out.push('\n');
        let rows = self
            .strata
            .iter()
            .map(|(h, m)| (h.to_string(), m))
            .chain(std::iter::once(("all".to_string(), &self.overall)));
        for (label, m) in rows {
            let _ = write!(out, "{label:<8}{:>7}", m.queries);
            for f in m.fields() {
                match f.value() {
                    Some(v) => {
                        let _ = write!(out, "{:>9.1}", v * 100.0);
                    }
                    None => {
                        let _ = write!(out, "{:>9}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// The hop count a query is reported under.
pub fn stratum(q: &QueryRecord) -> usize {
    q.num_hops.map(usize::from).unwrap_or(q.gold_pids.len())
}

/// Metrics for one query against its trace.
pub fn query_metrics(q: &QueryRecord, t: &QueryTrace, corpus: &Corpus, cfg: &EvalConfig) -> Metrics {
    let mut m = Metrics {
        queries: 1,
        ..Default::default()
    };
    let r = retrieval_at_k(&t.union, &q.gold_pids, cfg.k);
    m.retrieval_at_k.push(r);
    if q.label == Some(true) {
        m.retrieval_at_k_supported.push(r);
    }
    let passages: BTreeSet<String> = t.final_facts.iter().map(|f| f.pid.clone()).collect();
    let (em, f1) = set_em_f1(&passages, &q.gold_pids);
    m.passage_em.push(em);
    m.passage_f1.push(f1);
    if !q.gold_facts.is_empty() {
        let sentences: BTreeSet<FactRef> = t.final_facts.iter().map(|f| (f.pid.clone(), f.sentence_index)).collect();
        let (em, f1) = set_em_f1(&sentences, &q.gold_facts);
        m.sentence_em.push(em);
        m.sentence_f1.push(f1);
    }
    if let Some(a) = q.answer.as_deref().and_then(|a| answer_recall(&t.union, corpus, a, cfg.k)) {
        m.answer_recall_at_k.push(a);
    }
    if let (Some(v), Some(l)) = (t.verdict, q.label) {
        m.verification_accuracy.push(f64::from(u8::from(v == l)));
    }
    m
}

/// Aggregates per-query metrics; every query needs a trace.
pub fn evaluate_run(traces: &[QueryTrace], queries: &[QueryRecord], corpus: &Corpus, cfg: &EvalConfig) -> Result<MetricsReport> {
    let by_qid: HashMap<&str, &QueryTrace> = traces.iter().map(|t| (t.qid.as_str(), t)).collect();
    let missing: Vec<String> = queries
        .iter()
        .filter(|q| !by_qid.contains_key(q.qid.as_str()))
        .map(|q| q.qid.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingTraces(missing));
    }
    let per: Vec<(usize, Metrics)> = queries
        .par_iter()
        .map(|q| (stratum(q), query_metrics(q, by_qid[q.qid.as_str()], corpus, cfg)))
        .collect();
    let mut report = MetricsReport {
        k: cfg.k,
        ..Default::default()
    };
    for (h, m) in &per {
        report.strata.entry(*h).or_default().merge(m);
    }
    for m in report.strata.values() {
        report.overall.merge(m);
    }
    Ok(report)
}

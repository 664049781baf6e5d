//! Single-hop retrieval: candidate generation, then full focused scoring.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::EncodedQuery;
use crate::error::{Error, Result};
use crate::index::{candidates_for, CandidateSource, TokenIndex, RESULTS_PER_VECTOR_INFERENCE};
use crate::scoring::{focused_score_weighted, rank_order, FocusParams, RowWeights, ScoredPassage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    pub k: usize,
    pub results_per_vector: usize,
    pub focus: FocusParams,
    pub candidate_source: CandidateSource,
    #[serde(skip)]
    pub exclude: BTreeSet<String>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 25,
            results_per_vector: RESULTS_PER_VECTOR_INFERENCE,
            focus: FocusParams::default(),
            candidate_source: CandidateSource::QueryAndFacts,
            exclude: BTreeSet::new(),
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("retrieval k must be at least 1".into()));
        }
        if self.results_per_vector == 0 {
            return Err(Error::Config("results_per_vector must be at least 1".into()));
        }
        self.focus.validate()
    }
}

pub fn retrieve(eq: &EncodedQuery, idx: &TokenIndex, cfg: &RetrievalConfig) -> Result<Vec<ScoredPassage>> {
    retrieve_weighted(eq, idx, cfg, None)
}

/// As [`retrieve`], with optional per-row weights on the similarity vector.
pub fn retrieve_weighted(
    eq: &EncodedQuery,
    idx: &TokenIndex,
    cfg: &RetrievalConfig,
    weights: Option<RowWeights<'_>>,
) -> Result<Vec<ScoredPassage>> {
    cfg.validate()?;
    let cands = candidates_for(eq, idx, cfg.results_per_vector, cfg.candidate_source)?;
    let pool: Vec<usize> = cands
        .passages()
        .filter(|&p| !cfg.exclude.contains(idx.pid(p)))
        .collect();
    let mut scored: Vec<ScoredPassage> = pool
        .par_iter()
        .map(|&p| {
            focused_score_weighted(eq, idx.passage_matrix(p), cfg.focus, weights)
                .map(|s| s.into_scored(idx.pid(p)))
        })
        .collect::<Result<_>>()?;
    scored.sort_by(rank_order);
    scored.truncate(cfg.k);
    Ok(scored)
}

/// Focused score of one indexed passage, bypassing candidate generation.
pub fn score_pid(
    eq: &EncodedQuery,
    idx: &TokenIndex,
    passage: usize,
    focus: FocusParams,
    weights: Option<RowWeights<'_>>,
) -> Result<ScoredPassage> {
    focused_score_weighted(eq, idx.passage_matrix(passage), focus, weights)
        .map(|s| s.into_scored(idx.pid(passage)))
}

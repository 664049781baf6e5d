//! Planted multi-hop corpora and test fixtures.
//!
//! Every word is a fresh pseudo-word, so which passages share which tokens is
//! known exactly. For a query with `h` hops:
//!
//! - `Q_0` is the hop-1 title plus six content tokens `c1..c6`.
//! - The hop-1 gold is titled with the hop-1 title; its first sentence holds
//!   `c1 c2 c3` and the hop-2 title.
//! - The hop-`t` gold (`t >= 2`) shares nothing with `Q_0`. Its first
//!   sentence repeats its own title and, unless it is last, the next title.
//! - Distractors each carry a couple of `c4..c6`, one per sentence, so they
//!   outrank later-hop golds on `Q_0` alone but never survive the condenser.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{write_corpus, write_jsonl, Corpus, Passage, QueryRecord};
use crate::encoder::{normalize, EncodedQuery, TokenMatrix};
use crate::error::{Error, Result};
use crate::seed;

const CONTENT_TOKENS: usize = 6;
const BRIDGE_SENTENCE_CONTENT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSpec {
    pub hops: usize,
    pub queries: usize,
    /// Total passages; `None` means golds plus distractors with no extra fill.
    pub corpus_size: Option<usize>,
    pub bridge_token_count: usize,
    pub distractors_per_query: usize,
    /// Tokens from `c4..c6` each distractor shares with `Q_0`.
    pub distractor_shared_tokens: usize,
    pub sentences_per_passage: usize,
    pub words_per_sentence: usize,
    pub seed: u64,
}

impl Default for PlantSpec {
    fn default() -> Self {
        Self {
            hops: 3,
            queries: 100,
            corpus_size: None,
            bridge_token_count: 4,
            distractors_per_query: 20,
            distractor_shared_tokens: 2,
            sentences_per_passage: 5,
            words_per_sentence: 10,
            seed: 0,
        }
    }
}

impl PlantSpec {
    fn required_passages(&self) -> usize {
        self.queries * (self.hops + self.distractors_per_query)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        if !(2..=4).contains(&self.hops) {
            return bad(format!("hops {} not in 2..=4", self.hops));
        }
        if self.queries == 0 {
            return bad("queries must be positive".into());
        }
        if self.bridge_token_count == 0 {
            return bad("bridge_token_count must be positive".into());
        }
        let shared_pool = CONTENT_TOKENS - BRIDGE_SENTENCE_CONTENT;
        if self.distractor_shared_tokens > shared_pool {
            return bad(format!(
                "distractors can share at most {shared_pool} tokens, asked for {}",
                self.distractor_shared_tokens
            ));
        }
        if self.distractor_shared_tokens > self.sentences_per_passage {
            return bad("more shared tokens than distractor sentences".into());
        }
        if self.sentences_per_passage == 0 || self.words_per_sentence < 2 {
            return bad("passages need at least one sentence of two words".into());
        }
        if let Some(n) = self.corpus_size {
            if n < self.required_passages() {
                return bad(format!(
                    "corpus_size {n} below {} golds and distractors",
                    self.required_passages()
                ));
            }
        }
        Ok(())
    }
}

/// Planted gold passages per hop, hop 1 first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub qid: String,
    pub hops: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct Planted {
    pub corpus: Corpus,
    pub queries: Vec<QueryRecord>,
    pub order: Vec<GroundTruth>,
}

/// Fresh lowercase pseudo-words, never repeated within one generator.
pub struct WordSource {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl WordSource {
    pub fn new(seed_value: u64) -> Self {
        Self {
            rng: seed::rng(seed_value),
            used: HashSet::new(),
        }
    }

    pub fn word(&mut self) -> String {
        loop {
            let len = self.rng.random_range(5..=9);
            let w: String = (0..len).map(|_| char::from(self.rng.random_range(b'a'..=b'z'))).collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    pub fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word()).collect()
    }

    fn sentence(&mut self, mut head: Vec<String>, len: usize) -> String {
        while head.len() < len {
            head.push(self.word());
        }
        head.join(" ")
    }

    fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

struct Draft {
    title: String,
    sentences: Vec<String>,
    gold: Option<(usize, usize)>,
}

pub fn generate(spec: &PlantSpec) -> Result<Planted> {
    spec.validate()?;
    let mut src = WordSource::new(seed::derive(spec.seed, "synth"));
    let words = spec.words_per_sentence;
    let filler = |src: &mut WordSource, n: usize| -> Vec<String> { (0..n).map(|_| src.sentence(Vec::new(), words)).collect() };

    let mut drafts: Vec<Draft> = Vec::new();
    let mut q_texts = Vec::with_capacity(spec.queries);
    for qi in 0..spec.queries {
        let titles: Vec<Vec<String>> = (0..spec.hops).map(|_| src.words(spec.bridge_token_count)).collect();
        let content = src.words(CONTENT_TOKENS);
        let q0: Vec<String> = titles[0].iter().chain(&content).cloned().collect();
        q_texts.push(q0.join(" "));

        for t in 0..spec.hops {
            let mut head: Vec<String> = if t == 0 {
                content[..BRIDGE_SENTENCE_CONTENT].to_vec()
            } else {
                titles[t].clone()
            };
            if t + 1 < spec.hops {
                head.extend(titles[t + 1].iter().cloned());
            }
            let mut sentences = vec![src.sentence(head, words)];
            sentences.extend(filler(&mut src, spec.sentences_per_passage - 1));
            drafts.push(Draft {
                title: titles[t].join(" "),
                sentences,
                gold: Some((qi, t)),
            });
        }

        let shared_pool = &content[BRIDGE_SENTENCE_CONTENT..];
        for _ in 0..spec.distractors_per_query {
            let shared: Vec<String> = shared_pool
                .choose_multiple(src.rng(), spec.distractor_shared_tokens)
                .cloned()
                .collect();
            let mut sentences = filler(&mut src, spec.sentences_per_passage);
            for (s, tok) in sentences.iter_mut().zip(&shared) {
                let pos = src.rng().random_range(0..words);
                let mut ws: Vec<&str> = s.split(' ').collect();
                ws.insert(pos, tok);
                *s = ws.join(" ");
            }
            let title = src.words(2).join(" ");
            drafts.push(Draft {
                title,
                sentences,
                gold: None,
            });
        }
    }
    let total = spec.corpus_size.unwrap_or(drafts.len());
    while drafts.len() < total {
        let title = src.words(2).join(" ");
        let sentences = filler(&mut src, spec.sentences_per_passage);
        drafts.push(Draft {
            title,
            sentences,
            gold: None,
        });
    }
    drafts.shuffle(src.rng());

    let mut order: Vec<Vec<Vec<String>>> = vec![vec![Vec::new(); spec.hops]; spec.queries];
    let mut passages = Vec::with_capacity(drafts.len());
    for (i, d) in drafts.into_iter().enumerate() {
        let pid = format!("p{i:06}");
        if let Some((q, t)) = d.gold {
            order[q][t].push(pid.clone());
        }
        passages.push(Passage {
            pid,
            title: d.title,
            sentences: d.sentences,
        });
    }
    let queries = q_texts
        .into_iter()
        .zip(&order)
        .enumerate()
        .map(|(qi, (text, hops))| QueryRecord {
            qid: format!("q{qi:04}"),
            text,
            gold_pids: hops.iter().flatten().cloned().collect(),
            gold_facts: hops.iter().flatten().map(|p| (p.clone(), 0)).collect(),
            answer: None,
            label: Some(true),
            num_hops: Some(spec.hops as u8),
        })
        .collect::<Vec<_>>();
    let order = queries
        .iter()
        .zip(order)
        .map(|(q, hops)| GroundTruth {
            qid: q.qid.clone(),
            hops,
        })
        .collect();
    Ok(Planted {
        corpus: Corpus::from_passages(passages)?,
        queries,
        order,
    })
}

impl Planted {
    /// Writes `corpus.jsonl`, `queries.jsonl` and `order.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<[PathBuf; 3]> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = [dir.join("corpus.jsonl"), dir.join("queries.jsonl"), dir.join("order.jsonl")];
        write_corpus(&paths[0], &self.corpus)?;
        write_jsonl(&paths[1], &self.queries)?;
        write_jsonl(&paths[2], &self.order)?;
        Ok(paths)
    }
}

/// Uniform random passages over a fixed pseudo-word vocabulary.
#[derive(Debug, Clone)]
pub struct RandomCorpusSpec {
    pub passages: usize,
    pub vocabulary: usize,
    pub sentences: usize,
    pub words_per_sentence: usize,
    pub seed: u64,
}

pub fn random_corpus(spec: &RandomCorpusSpec) -> Result<(Corpus, Vec<String>)> {
    let mut src = WordSource::new(seed::derive(spec.seed, "random-corpus"));
    let vocab = src.words(spec.vocabulary);
    let pick = |src: &mut WordSource, n: usize| -> String {
        (0..n)
            .map(|_| vocab[src.rng().random_range(0..vocab.len())].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let passages = (0..spec.passages)
        .map(|i| Passage {
            pid: format!("p{i:06}"),
            title: pick(&mut src, 2),
            sentences: (0..spec.sentences).map(|_| pick(&mut src, spec.words_per_sentence)).collect(),
        })
        .collect();
    Ok((Corpus::from_passages(passages)?, vocab))
}

/// Query texts mixing words from one random passage with random vocabulary.
pub fn random_queries(corpus: &Corpus, vocab: &[String], n: usize, from_passage: usize, extra: usize, seed_value: u64) -> Vec<String> {
    let mut rng = seed::rng(seed::derive(seed_value, "random-queries"));
    (0..n)
        .map(|_| {
            let p = &corpus.passages()[rng.random_range(0..corpus.len())];
            let words: Vec<&str> = p.sentences.iter().flat_map(|s| s.split(' ')).collect();
            let mut q: Vec<&str> = words.choose_multiple(&mut rng, from_passage.min(words.len())).copied().collect();
            q.extend((0..extra).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()));
            q.join(" ")
        })
        .collect()
}

/// Embedding-level fixture: half the query rows match `a`, the other half
/// match `b`, and `c` is moderately similar to every query row.
#[derive(Debug, Clone)]
pub struct SplitQuery {
    pub query: EncodedQuery,
    pub a: TokenMatrix,
    pub b: TokenMatrix,
    pub c: TokenMatrix,
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let mut v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
    normalize(&mut v);
    v
}

/// Builds one instance with `rows` query rows (even) at dimension `dim`.
///
/// `c`'s row `i` is `eps_i q_i + sqrt(1 - eps_i^2) u_i` with `u_i` a random
/// unit vector orthogonalized against `q_i` and `eps_i ~ U[0.5, 0.9]`.
pub fn split_query(rows: usize, dim: usize, seed_value: u64) -> SplitQuery {
    let mut rng = seed::rng(seed_value);
    let q: Vec<Vec<f32>> = (0..rows).map(|_| unit(&mut rng, dim)).collect();
    let half = rows / 2;
    let c: Vec<Vec<f32>> = q
        .iter()
        .map(|qi| {
            let eps: f32 = rng.random_range(0.5..0.9);
            let mut u = unit(&mut rng, dim);
            let proj: f32 = u.iter().zip(qi).map(|(a, b)| a * b).sum();
            u.iter_mut().zip(qi).for_each(|(x, y)| *x -= proj * y);
            normalize(&mut u);
            let s = (1.0 - eps * eps).sqrt();
            let mut row: Vec<f32> = qi.iter().zip(&u).map(|(a, b)| eps * a + s * b).collect();
            normalize(&mut row);
            row
        })
        .collect();
    let m = |r: &[Vec<f32>]| TokenMatrix::from_rows(dim, r).expect("dim-aligned");
    SplitQuery {
        query: EncodedQuery {
            query_part: m(&q),
            fact_part: TokenMatrix::empty(dim),
        },
        a: m(&q[..half]),
        b: m(&q[half..]),
        c: m(&c),
    }
}

/// Tokens shared between two texts, after tokenization.
pub fn shared_tokens(a: &str, b: &str) -> BTreeSet<String> {
    let ta: BTreeSet<String> = crate::encoder::tokenize(a).into_iter().collect();
    crate::encoder::tokenize(b).into_iter().filter(|t| ta.contains(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{Encoder, EncoderConfig, LexicalEncoder};
    use crate::index::{build_index, IndexConfig};
    use crate::pipeline::MultiHopQuery;
    use crate::retriever::{retrieve, RetrievalConfig};

    fn passage_text(p: &Passage) -> String {
        format!("{} {}", p.title, p.text())
    }

    #[test]
    fn three_hop_structure() {
        let spec = PlantSpec {
            hops: 3,
            queries: 10,
            ..Default::default()
        };
        let planted = generate(&spec).unwrap();
        assert_eq!(planted.queries.len(), 10);
        assert_eq!(planted.corpus.len(), 10 * (3 + 20));
        for (q, gt) in planted.queries.iter().zip(&planted.order) {
            assert_eq!(q.gold_pids.len(), 3);
            let g: Vec<&Passage> = gt.hops.iter().map(|h| planted.corpus.get(&h[0]).unwrap()).collect();
            assert!(!shared_tokens(&q.text, &passage_text(g[0])).is_empty());
            for t in 1..3 {
                assert!(shared_tokens(&q.text, &passage_text(g[t])).is_empty(), "hop {t}");
                let bridge = shared_tokens(&passage_text(g[t - 1]), &passage_text(g[t]));
                assert_eq!(bridge.len(), spec.bridge_token_count);
                // the bridge lives in the designated sentence only
                assert!(bridge.iter().all(|b| g[t - 1].sentences[0].split(' ').any(|w| w == b)));
                assert!(g[t - 1].sentences[1..].iter().all(|s| shared_tokens(s, &passage_text(g[t])).is_empty()));
            }
            assert!(shared_tokens(&passage_text(g[0]), &passage_text(g[2])).is_empty());
        }
        let gold: HashSet<&String> = planted.order.iter().flat_map(|g| g.hops.iter().flatten()).collect();
        for p in planted.corpus.iter().filter(|p| !gold.contains(&p.pid)) {
            for g in &gold {
                let gp = planted.corpus.get(g).unwrap();
                let shared = shared_tokens(&passage_text(p), &gp.sentences[0]);
                assert!(shared.is_empty(), "distractor {} shares {shared:?} with a bridge", p.pid);
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let spec = PlantSpec {
            hops: 2,
            queries: 5,
            corpus_size: Some(200),
            seed: 3,
            ..Default::default()
        };
        let a = generate(&spec).unwrap().write(&dir.path().join("a")).unwrap();
        let b = generate(&spec).unwrap().write(&dir.path().join("b")).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let other = generate(&PlantSpec { seed: 4, ..spec }).unwrap();
        assert_ne!(other.queries[0].text, generate(&spec).unwrap().queries[0].text);
    }

    #[test]
    fn infeasible_specs() {
        for spec in [
            PlantSpec { hops: 5, ..Default::default() },
            PlantSpec { corpus_size: Some(10), ..Default::default() },
            PlantSpec { distractor_shared_tokens: 4, ..Default::default() },
        ] {
            assert!(matches!(generate(&spec), Err(Error::InfeasibleSpec(_))));
        }
    }

    #[test]
    fn first_hop_gold_is_top1_and_later_golds_trail_distractors() {
        let spec = PlantSpec {
            hops: 2,
            queries: 5,
            ..Default::default()
        };
        let planted = generate(&spec).unwrap();
        let e = LexicalEncoder::new(EncoderConfig::default()).unwrap();
        let idx = build_index(&planted.corpus, &e, &IndexConfig::default()).unwrap();
        let cfg = RetrievalConfig {
            k: planted.corpus.len(),
            results_per_vector: idx.total_vectors(),
            ..Default::default()
        };
        for (q, gt) in planted.queries.iter().zip(&planted.order) {
            let ranked = retrieve(&e.encode_query(&MultiHopQuery::new(&q.qid, &q.text)), &idx, &cfg).unwrap();
            assert_eq!(ranked[0].pid, gt.hops[0][0]);
            let rank_of = |pid: &str| ranked.iter().position(|s| s.pid == pid).unwrap();
            let later = rank_of(&gt.hops[1][0]);
            // gold 1 plus this query's distractors all come first
            assert!(later > spec.distractors_per_query, "{} at rank {later}", q.qid);
        }
    }

    #[test]
    fn split_query_shape() {
        let f = split_query(16, 64, 1);
        assert_eq!((f.query.query_part.rows(), f.a.rows(), f.b.rows(), f.c.rows()), (16, 8, 8, 16));
        assert!(f.c.max_norm_error() < 1e-5);
        for i in 0..16 {
            let cos: f32 = f.c.row(i).iter().zip(f.query.query_part.row(i)).map(|(a, b)| a * b).sum();
            assert!((0.5 - 1e-4..0.9 + 1e-4).contains(&cos), "row {i}: {cos}");
        }
    }

    #[test]
    fn random_corpus_sizes() {
        let spec = RandomCorpusSpec {
            passages: 50,
            vocabulary: 100,
            sentences: 3,
            words_per_sentence: 6,
            seed: 1,
        };
        let (c, vocab) = random_corpus(&spec).unwrap();
        assert_eq!((c.len(), vocab.len()), (50, 100));
        let qs = random_queries(&c, &vocab, 4, 5, 2, 9);
        assert!(qs.iter().all(|q| q.split(' ').count() == 7));
    }
}

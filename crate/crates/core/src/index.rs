//! Token-vector index and candidate generation.
//!
//! Passage token matrices are stored in corpus order with an explicit
//! vector-to-passage map. Candidate generation runs a nearest-neighbor
//! search per query row and unions the owning passages. The flat variant is exact; the inverted-file
//! variant clusters vectors with spherical k-means and probes only the
//! `nprobe` closest lists per query row.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::encoder::{EncodedQuery, Encoder, TokenMatrix};
use crate::error::{Error, Result};
use crate::scoring::{self, dot, FocusParams, ScoredPassage};
use crate::seed;

/// Centroid count used for the ~5M-passage Wikipedia corpus.
pub const FULL_SCALE_CENTROIDS: usize = 8192;
/// Lists probed per query vector at that scale.
pub const FULL_SCALE_NPROBE: usize = 16;
/// Nearest neighbors per query vector during training retrieval.
pub const RESULTS_PER_VECTOR_TRAINING: usize = 256;
/// Nearest neighbors per query vector at inference.
pub const RESULTS_PER_VECTOR_INFERENCE: usize = 512;

const KMEANS_MAX_ITERS: usize = 25;
const KMEANS_SAMPLE_PER_CENTROID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Flat,
    Ivf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexConfig {
    pub variant: VariantKind,
    /// `None` means `ceil(sqrt(total_vectors))`.
    pub centroid_count: Option<usize>,
    /// `None` means `max(1, centroids / 64)`.
    pub nprobe: Option<usize>,
    pub seed: u64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            variant: VariantKind::Flat,
            centroid_count: None,
            nprobe: None,
            seed: 0,
        }
    }
}

impl IndexConfig {
    pub fn full_scale(seed: u64) -> Self {
        Self {
            variant: VariantKind::Ivf,
            centroid_count: Some(FULL_SCALE_CENTROIDS),
            nprobe: Some(FULL_SCALE_NPROBE),
            seed,
        }
    }
}

/// Which query rows drive candidate generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    QueryOnly,
    QueryAndFacts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ivf {
    pub centroids: TokenMatrix,
    pub assignments: Vec<u32>,
    pub nprobe: usize,
    lists: Vec<Vec<u32>>,
}

impl Ivf {
    fn new(centroids: TokenMatrix, assignments: Vec<u32>, nprobe: usize) -> Self {
        let mut lists = vec![Vec::new(); centroids.rows()];
        for (v, &c) in assignments.iter().enumerate() {
            lists[c as usize].push(v as u32);
        }
        Self {
            centroids,
            assignments,
            nprobe,
            lists,
        }
    }

    pub fn centroid_count(&self) -> usize {
        self.centroids.rows()
    }

    pub fn list(&self, c: usize) -> &[u32] {
        &self.lists[c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenIndex {
    dim: usize,
    encoder_seed: u64,
    pids: Vec<String>,
    /// `offsets[p]..offsets[p+1]` are passage `p`'s rows.
    offsets: Vec<usize>,
    vec_to_passage: Vec<u32>,
    matrices: Vec<TokenMatrix>,
    ivf: Option<Ivf>,
}

/// Passages hit during candidate generation, with per-vector hit counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateSet {
    hits: BTreeMap<u32, u32>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// Passage positions in index order.
    pub fn passages(&self) -> impl Iterator<Item = usize> + '_ {
        self.hits.keys().map(|&p| p as usize)
    }

    pub fn hits(&self, passage: usize) -> u32 {
        self.hits.get(&(passage as u32)).copied().unwrap_or(0)
    }

    pub fn pids<'a>(&'a self, idx: &'a TokenIndex) -> impl Iterator<Item = &'a str> + 'a {
        self.passages().map(move |p| idx.pid(p))
    }
}

impl TokenIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encoder_seed(&self) -> u64 {
        self.encoder_seed
    }

    pub fn total_vectors(&self) -> usize {
        self.vec_to_passage.len()
    }

    pub fn passage_count(&self) -> usize {
        self.pids.len()
    }

    pub fn pid(&self, passage: usize) -> &str {
        &self.pids[passage]
    }

    pub fn pids(&self) -> &[String] {
        &self.pids
    }

    pub fn passage_of(&self, vector: usize) -> usize {
        self.vec_to_passage[vector] as usize
    }

    pub fn ivf(&self) -> Option<&Ivf> {
        self.ivf.as_ref()
    }

    pub fn variant(&self) -> VariantKind {
        if self.ivf.is_some() {
            VariantKind::Ivf
        } else {
            VariantKind::Flat
        }
    }

    pub fn vector(&self, v: usize) -> &[f32] {
        let p = self.vec_to_passage[v] as usize;
        self.matrices[p].row(v - self.offsets[p])
    }

    /// Stored token matrix of one passage.
    pub fn passage_matrix(&self, passage: usize) -> &TokenMatrix {
        &self.matrices[passage]
    }

    fn flat_vectors(&self) -> Vec<f32> {
        self.matrices.iter().flat_map(|m| m.data().iter().copied()).collect()
    }

    /// Changes the probe width of an IVF index.
    pub fn set_nprobe(&mut self, nprobe: usize) -> Result<()> {
        let ivf = self
            .ivf
            .as_mut()
            .ok_or_else(|| Error::Config("nprobe applies only to IVF indexes".into()))?;
        if nprobe == 0 || nprobe > ivf.centroid_count() {
            return Err(Error::Config(format!(
                "nprobe {nprobe} outside 1..={}",
                ivf.centroid_count()
            )));
        }
        ivf.nprobe = nprobe;
        Ok(())
    }

    fn from_parts(
        dim: usize,
        encoder_seed: u64,
        pids: Vec<String>,
        matrices: Vec<TokenMatrix>,
    ) -> Self {
        let total: usize = matrices.iter().map(TokenMatrix::rows).sum();
        let mut offsets = Vec::with_capacity(pids.len() + 1);
        let mut vec_to_passage = Vec::with_capacity(total);
        offsets.push(0);
        for (p, m) in matrices.iter().enumerate() {
            vec_to_passage.extend(std::iter::repeat_n(p as u32, m.rows()));
            offsets.push(vec_to_passage.len());
        }
        Self {
            dim,
            encoder_seed,
            pids,
            offsets,
            vec_to_passage,
            matrices,
            ivf: None,
        }
    }
}

pub fn build_index(corpus: &Corpus, encoder: &dyn Encoder, cfg: &IndexConfig) -> Result<TokenIndex> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let matrices: Vec<TokenMatrix> = corpus
        .passages()
        .par_iter()
        .map(|p| encoder.encode_passage(p).matrix)
        .collect();
    let pids = corpus.iter().map(|p| p.pid.clone()).collect();
    let mut idx = TokenIndex::from_parts(encoder.dim(), encoder.config().seed, pids, matrices);
    let total = idx.total_vectors();
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    if cfg.variant == VariantKind::Ivf {
        let c = cfg
            .centroid_count
            .unwrap_or_else(|| (total as f64).sqrt().ceil() as usize);
        if c == 0 || c > total {
            return Err(Error::TooManyCentroids {
                centroids: c,
                vectors: total,
            });
        }
        let nprobe = cfg.nprobe.unwrap_or((c / 64).max(1));
        if nprobe == 0 || nprobe > c {
            return Err(Error::Config(format!("nprobe {nprobe} outside 1..={c}")));
        }
        let vectors = idx.flat_vectors();
        let centroids = train_kmeans(&vectors, idx.dim, c, cfg.seed);
        let assignments = assign_all(&vectors, idx.dim, &centroids);
        idx.ivf = Some(Ivf::new(centroids, assignments, nprobe));
    }
    log::info!(
        "built {:?} index: {} passages, {} vectors, dim {}",
        idx.variant(),
        idx.passage_count(),
        total,
        idx.dim
    );
    Ok(idx)
}

fn nearest(v: &[f32], centroids: &TokenMatrix) -> (u32, f32) {
    let mut best = (0u32, f32::NEG_INFINITY);
    for (c, row) in centroids.iter_rows().enumerate() {
        let s = dot(v, row);
        if s > best.1 {
            best = (c as u32, s);
        }
    }
    best
}

fn assign_all(vectors: &[f32], dim: usize, centroids: &TokenMatrix) -> Vec<u32> {
    vectors
        .par_chunks_exact(dim)
        .map(|v| nearest(v, centroids).0)
        .collect()
}

/// Spherical k-means: dot-product assignment, normalized mean update.
///
/// Trains on all vectors, or a seeded uniform sample of `64 * k` when larger.
/// Empty clusters are reseeded with the member of the largest cluster that is
/// farthest from its centroid.
pub fn train_kmeans(vectors: &[f32], dim: usize, k: usize, seed_value: u64) -> TokenMatrix {
    let total = vectors.len() / dim;
    let mut rng = seed::rng(seed::derive(seed_value, "kmeans"));
    let sample_size = (KMEANS_SAMPLE_PER_CENTROID * k).min(total);
    let mut sample_ids: Vec<usize> = if sample_size < total {
        sample(&mut rng, total, sample_size).into_vec()
    } else {
        (0..total).collect()
    };
    sample_ids.sort_unstable();
    let train: Vec<&[f32]> = sample_ids
        .iter()
        .map(|&i| &vectors[i * dim..(i + 1) * dim])
        .collect();

    let init = sample(&mut rng, train.len(), k).into_vec();
    let mut centroids = TokenMatrix::from_rows(dim, &init.iter().map(|&i| train[i]).collect::<Vec<_>>())
        .expect("dim-aligned");
    let mut assign: Vec<(u32, f32)> = vec![(u32::MAX, 0.0); train.len()];

    for iter in 0..KMEANS_MAX_ITERS {
        let next: Vec<(u32, f32)> = train.par_iter().map(|v| nearest(v, &centroids)).collect();
        let changed = next
            .iter()
            .zip(&assign)
            .filter(|(a, b)| a.0 != b.0)
            .count();
        assign = next;

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (v, &(c, _)) in train.iter().zip(&assign) {
            let c = c as usize;
            counts[c] += 1;
            for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(v.iter()) {
                *s += f64::from(*x);
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let largest = (0..k).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).unwrap();
            let far = assign
                .iter()
                .enumerate()
                .filter(|(_, a)| a.0 as usize == largest)
                .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(a.0.cmp(&b.0)))
                .map(|(i, _)| i)
                .unwrap();
            let v = train[far];
            for (s, x) in sums[largest * dim..(largest + 1) * dim].iter_mut().zip(v) {
                *s -= f64::from(*x);
            }
            counts[largest] -= 1;
            sums[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(v)
                .for_each(|(s, x)| *s = f64::from(*x));
            counts[c] = 1;
            assign[far].0 = c as u32;
        }
        let mut data = Vec::with_capacity(k * dim);
        for c in 0..k {
            let mut row: Vec<f32> = sums[c * dim..(c + 1) * dim].iter().map(|&x| x as f32).collect();
            crate::encoder::normalize(&mut row);
            data.extend(row);
        }
        centroids = TokenMatrix::from_data(dim, data).expect("dim-aligned");
        log::debug!("kmeans iter {iter}: {changed} reassignments");
        if changed == 0 && iter > 0 {
            break;
        }
    }
    centroids
}

/// Top `r` vector ids by dot product, ties broken by smaller id.
fn top_vectors(q: &[f32], ids: impl Iterator<Item = usize>, idx: &TokenIndex, r: usize) -> Vec<usize> {
    let mut scored: Vec<(f32, usize)> = ids.map(|v| (dot(q, idx.vector(v)), v)).collect();
    let order = |a: &(f32, usize), b: &(f32, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if scored.len() > r {
        scored.select_nth_unstable_by(r - 1, order);
        scored.truncate(r);
    }
    scored.into_iter().map(|(_, v)| v).collect()
}

pub fn candidates_for(
    eq: &EncodedQuery,
    idx: &TokenIndex,
    results_per_vector: usize,
    source: CandidateSource,
) -> Result<CandidateSet> {
    if eq.dim() != idx.dim || eq.fact_part.dim() != idx.dim {
        return Err(Error::DimMismatch {
            expected: idx.dim,
            actual: eq.dim(),
        });
    }
    let rows: Vec<&[f32]> = match source {
        CandidateSource::QueryOnly => eq.query_part.iter_rows().collect(),
        CandidateSource::QueryAndFacts => eq
            .query_part
            .iter_rows()
            .chain(eq.fact_part.iter_rows())
            .collect(),
    };
    let r = results_per_vector.max(1);
    let total = idx.total_vectors();
    let per_row: Vec<Vec<usize>> = rows
        .par_iter()
        .map(|q| match &idx.ivf {
            None if r >= total => (0..total).collect(),
            None => top_vectors(q, 0..total, idx, r),
            Some(ivf) => {
                let mut cs: Vec<(f32, usize)> = ivf
                    .centroids
                    .iter_rows()
                    .enumerate()
                    .map(|(c, row)| (dot(q, row), c))
                    .collect();
                cs.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let ids = cs
                    .iter()
                    .take(ivf.nprobe)
                    .flat_map(|&(_, c)| ivf.list(c).iter().map(|&v| v as usize));
                top_vectors(q, ids, idx, r)
            }
        })
        .collect();
    let mut hits = BTreeMap::new();
    for v in per_row.into_iter().flatten() {
        *hits.entry(idx.vec_to_passage[v]).or_insert(0) += 1;
    }
    Ok(CandidateSet { hits })
}

/// Brute force: encode and score every passage, return the best `k`.
pub fn exact_topk_oracle(
    eq: &EncodedQuery,
    corpus: &Corpus,
    encoder: &dyn Encoder,
    focus: FocusParams,
    k: usize,
) -> Result<Vec<ScoredPassage>> {
    let mut all: Vec<ScoredPassage> = corpus
        .passages()
        .par_iter()
        .filter_map(|p| {
            // passages without tokens can never be candidates
            let m = encoder.encode_passage(p).matrix;
            (!m.is_empty()).then(|| scoring::focused_score(eq, &m, focus).map(|s| s.into_scored(p.pid.clone())))
        })
        .collect::<Result<_>>()?;
    all.sort_by(scoring::rank_order);
    all.truncate(k);
    Ok(all)
}

const INDEX_MAGIC: &[u8; 4] = b"MHIX";
const INDEX_VERSION: u8 = 1;

/// Layout (little-endian):
///
/// ```text
/// header   magic "MHIX" | version u8 | variant u8 (0 flat, 1 ivf) | reserved u16
///          dim u32 | passages u32 | total_vectors u64 | encoder_seed u64
/// pids     per passage: len u32 | utf-8 bytes
/// vec_to_pid   total_vectors x u32
/// vectors      total_vectors x dim x f32
/// ivf      centroids u32 | nprobe u32 | centroids x dim x f32 | total_vectors x u32
/// ```
pub fn save_index(idx: &TokenIndex, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |b: &[u8]| w.write_all(b).map_err(|e| Error::io(path, e));
    put(INDEX_MAGIC)?;
    put(&[INDEX_VERSION, u8::from(idx.ivf.is_some()), 0, 0])?;
    put(&(idx.dim as u32).to_le_bytes())?;
    put(&(idx.pids.len() as u32).to_le_bytes())?;
    put(&(idx.total_vectors() as u64).to_le_bytes())?;
    put(&idx.encoder_seed.to_le_bytes())?;
    for pid in &idx.pids {
        put(&(pid.len() as u32).to_le_bytes())?;
        put(pid.as_bytes())?;
    }
    for p in &idx.vec_to_passage {
        put(&p.to_le_bytes())?;
    }
    for m in &idx.matrices {
        for x in m.data() {
            put(&x.to_le_bytes())?;
        }
    }
    if let Some(ivf) = &idx.ivf {
        put(&(ivf.centroid_count() as u32).to_le_bytes())?;
        put(&(ivf.nprobe as u32).to_le_bytes())?;
        for x in ivf.centroids.data() {
            put(&x.to_le_bytes())?;
        }
        for a in &ivf.assignments {
            put(&a.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::BadIndex(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::BadIndex("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::BadIndex("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_index(path: &Path) -> Result<TokenIndex> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    parse_index(&buf)
}

pub fn parse_index(buf: &[u8]) -> Result<TokenIndex> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != INDEX_MAGIC {
        return Err(Error::BadIndex("bad magic".into()));
    }
    let head = r.take(4)?;
    if head[0] != INDEX_VERSION {
        return Err(Error::BadIndex(format!("unsupported version {}", head[0])));
    }
    let is_ivf = match head[1] {
        0 => false,
        1 => true,
        v => return Err(Error::BadIndex(format!("unknown variant {v}"))),
    };
    let dim = r.u32()? as usize;
    let n_passages = r.u32()? as usize;
    let total = usize::try_from(r.u64()?).map_err(|_| Error::BadIndex("vector count overflow".into()))?;
    let encoder_seed = r.u64()?;
    if dim == 0 {
        return Err(Error::BadIndex("zero dimension".into()));
    }
    let mut pids = Vec::with_capacity(n_passages.min(buf.len()));
    for _ in 0..n_passages {
        let len = r.u32()? as usize;
        let s = std::str::from_utf8(r.take(len)?).map_err(|_| Error::BadIndex("pid is not utf-8".into()))?;
        pids.push(s.to_owned());
    }
    let vec_to_passage = r.u32s(total)?;
    let vectors = r.f32s(total * dim)?;

    let mut offsets = vec![0usize; n_passages + 1];
    let mut prev = 0u32;
    for (v, &p) in vec_to_passage.iter().enumerate() {
        if p as usize >= n_passages || p < prev {
            return Err(Error::BadIndex(format!("vec_to_pid not contiguous at vector {v}")));
        }
        prev = p;
        offsets[p as usize + 1] = v + 1;
    }
    for p in 1..=n_passages {
        offsets[p] = offsets[p].max(offsets[p - 1]);
    }
    let matrices = (0..n_passages)
        .map(|p| TokenMatrix::from_data(dim, vectors[offsets[p] * dim..offsets[p + 1] * dim].to_vec()))
        .collect::<Result<Vec<_>>>()?;

    let ivf = if is_ivf {
        let c = r.u32()? as usize;
        let nprobe = r.u32()? as usize;
        if c == 0 || nprobe == 0 || nprobe > c {
            return Err(Error::BadIndex(format!("bad ivf header c={c} nprobe={nprobe}")));
        }
        let centroids = TokenMatrix::from_data(dim, r.f32s(c * dim)?)?;
        let assignments = r.u32s(total)?;
        if assignments.iter().any(|&a| a as usize >= c) {
            return Err(Error::BadIndex("assignment out of range".into()));
        }
        Some(Ivf::new(centroids, assignments, nprobe))
    } else {
        None
    };
    if r.pos != buf.len() {
        return Err(Error::BadIndex(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(TokenIndex {
        dim,
        encoder_seed,
        pids,
        offsets,
        vec_to_passage,
        matrices,
        ivf,
    })
}

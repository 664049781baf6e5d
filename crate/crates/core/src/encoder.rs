//! Token-level text encoders.
//!
//! [`LexicalEncoder`] is the training-free reference: a token's vector is the
//! normalized sum of seeded Gaussian basis vectors, one per character trigram
//! of `#token#`. Identical tokens get identical vectors, tokens sharing
//! trigrams get graded similarity, and unrelated tokens are near-orthogonal.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::Passage;
use crate::error::{Error, Result};
use crate::pipeline::MultiHopQuery;
use crate::seed;

/// Row-major matrix of unit-norm token embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl TokenMatrix {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    /// Builds a matrix from raw row-major data. `data.len()` must be a multiple of `dim`.
    pub fn from_data(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut m = Self::empty(dim);
        for r in rows {
            m.push_row(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn truncate_rows(&mut self, rows: usize) {
        self.data.truncate(rows * self.dim);
    }

    /// Largest deviation of any row norm from 1.
    pub fn max_norm_error(&self) -> f32 {
        self.iter_rows()
            .map(|r| (r.iter().map(|x| x * x).sum::<f32>().sqrt() - 1.0).abs())
            .fold(0.0, f32::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub dim: usize,
    pub seed: u64,
    pub max_passage_tokens: usize,
    pub max_query_tokens: usize,
    pub max_overall_tokens: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            seed: 0,
            max_passage_tokens: 256,
            max_query_tokens: 64,
            max_overall_tokens: 512,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(Error::Config(format!("encoder dim {} < 8", self.dim)));
        }
        if self.max_passage_tokens == 0 || self.max_query_tokens == 0 {
            return Err(Error::Config("token limits must be positive".into()));
        }
        if self.max_query_tokens > self.max_overall_tokens {
            return Err(Error::Config(format!(
                "max_query_tokens {} exceeds max_overall_tokens {}",
                self.max_query_tokens, self.max_overall_tokens
            )));
        }
        Ok(())
    }
}

/// Passage matrix plus the rows each part of the passage occupies.
#[derive(Debug, Clone)]
pub struct EncodedPassage {
    pub matrix: TokenMatrix,
    pub title_rows: Range<usize>,
    /// One range per sentence; sentences cut by truncation get empty ranges.
    pub sentence_rows: Vec<Range<usize>>,
}

/// Query-side encoding: rows from `Q_0` and rows from the accumulated facts.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedQuery {
    pub query_part: TokenMatrix,
    pub fact_part: TokenMatrix,
}

impl EncodedQuery {
    pub fn dim(&self) -> usize {
        self.query_part.dim()
    }
}

pub trait Encoder: Send + Sync {
    fn config(&self) -> &EncoderConfig;
    fn encode_passage(&self, passage: &Passage) -> EncodedPassage;
    fn encode_query(&self, query: &MultiHopQuery) -> EncodedQuery;

    fn dim(&self) -> usize {
        self.config().dim
    }
}

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Tokens behind the two halves of [`EncodedQuery`], after truncation.
///
/// Facts are concatenated in list order, which the pipeline keeps as hop
/// order and then condenser rank within a hop. All query tokens are kept; the
/// fact tail is cut so the total fits `max_overall_tokens`.
pub fn query_tokens(query: &MultiHopQuery, cfg: &EncoderConfig) -> (Vec<String>, Vec<String>) {
    let mut q = tokenize(&query.q0_text);
    q.truncate(cfg.max_query_tokens);
    let budget = cfg.max_overall_tokens.saturating_sub(q.len());
    let facts = query
        .facts
        .iter()
        .flat_map(|f| tokenize(&f.text))
        .take(budget)
        .collect();
    (q, facts)
}

/// Deterministic trigram-hashing encoder.
#[derive(Debug)]
pub struct LexicalEncoder {
    cfg: EncoderConfig,
    basis: RwLock<HashMap<String, Arc<[f32]>>>,
}

impl LexicalEncoder {
    pub fn new(cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            basis: RwLock::new(HashMap::new()),
        })
    }

    fn trigram_vector(&self, trigram: &str) -> Arc<[f32]> {
        if let Some(v) = self.basis.read().expect("basis lock").get(trigram) {
            return v.clone();
        }
        let mut rng = seed::rng(seed::hash64(trigram.as_bytes(), self.cfg.seed));
        let v: Arc<[f32]> = (0..self.cfg.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect::<Vec<f32>>()
            .into();
        self.basis
            .write()
            .expect("basis lock")
            .entry(trigram.to_owned())
            .or_insert(v)
            .clone()
    }

    /// Unit vector for one (already lowercased) token.
    pub fn token_vector(&self, token: &str) -> Vec<f32> {
        let padded: Vec<char> = std::iter::once('#')
            .chain(token.chars())
            .chain(std::iter::once('#'))
            .collect();
        let mut acc = vec![0.0f32; self.cfg.dim];
        let mut buf = String::with_capacity(12);
        for w in padded.windows(3) {
            buf.clear();
            buf.extend(w);
            for (a, b) in acc.iter_mut().zip(self.trigram_vector(&buf).iter()) {
                *a += b;
            }
        }
        normalize(&mut acc);
        acc
    }

    fn encode_tokens<'a>(&self, tokens: impl IntoIterator<Item = &'a String>) -> TokenMatrix {
        let mut m = TokenMatrix::empty(self.cfg.dim);
        for t in tokens {
            m.data.extend(self.token_vector(t));
        }
        m
    }
}

pub(crate) fn normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

impl Encoder for LexicalEncoder {
    fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    fn encode_passage(&self, passage: &Passage) -> EncodedPassage {
        let limit = self.cfg.max_passage_tokens;
        let mut tokens = tokenize(&passage.title);
        tokens.truncate(limit);
        let title_rows = 0..tokens.len();
        let mut sentence_rows = Vec::with_capacity(passage.sentences.len());
        for s in &passage.sentences {
            let start = tokens.len();
            let room = limit - start;
            tokens.extend(tokenize(s).into_iter().take(room));
            sentence_rows.push(start..tokens.len());
        }
        EncodedPassage {
            matrix: self.encode_tokens(&tokens),
            title_rows,
            sentence_rows,
        }
    }

    fn encode_query(&self, query: &MultiHopQuery) -> EncodedQuery {
        let (q, f) = query_tokens(query, &self.cfg);
        EncodedQuery {
            query_part: self.encode_tokens(&q),
            fact_part: self.encode_tokens(&f),
        }
    }
}

const MATRIX_MAGIC: &[u8; 4] = b"TMAT";

/// Writes `magic | dim u32 | rows u32 | rows*dim f32`, all little-endian.
pub fn write_matrix(path: &Path, m: &TokenMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MATRIX_MAGIC).map_err(io)?;
    w.write_all(&(m.dim() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(m.rows() as u32).to_le_bytes()).map_err(io)?;
    for x in m.data() {
        w.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_matrix(path: &Path) -> Result<TokenMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    parse_matrix(&bytes)
}

pub fn parse_matrix(bytes: &[u8]) -> Result<TokenMatrix> {
    if bytes.len() < 12 || &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::BadMatrix("missing TMAT header".into()));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if dim == 0 || body.len() != rows * dim * 4 {
        return Err(Error::BadMatrix(format!(
            "expected {} body bytes for {rows}x{dim}, found {}",
            rows * dim * 4,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TokenMatrix::from_data(dim, data)
}

/// Passage embeddings computed elsewhere, one `<pid>.tmat` file per passage.
///
/// Queries are delegated to `query_encoder`. Precomputed matrices carry no
/// sentence boundaries, so the span map is empty.
pub struct PrecomputedEncoder<E> {
    passages: HashMap<String, TokenMatrix>,
    query_encoder: E,
}

impl<E: Encoder> PrecomputedEncoder<E> {
    pub fn load(dir: &Path, pids: impl IntoIterator<Item = String>, query_encoder: E) -> Result<Self> {
        let mut passages = HashMap::new();
        for pid in pids {
            let path: PathBuf = dir.join(format!("{pid}.tmat"));
            let m = read_matrix(&path)?;
            if m.dim() != query_encoder.dim() {
                return Err(Error::DimMismatch {
                    expected: query_encoder.dim(),
                    actual: m.dim(),
                });
            }
            passages.insert(pid, m);
        }
        Ok(Self {
            passages,
            query_encoder,
        })
    }
}

impl<E: Encoder> Encoder for PrecomputedEncoder<E> {
    fn config(&self) -> &EncoderConfig {
        self.query_encoder.config()
    }

    fn encode_passage(&self, passage: &Passage) -> EncodedPassage {
        let matrix = self
            .passages
            .get(&passage.pid)
            .cloned()
            .unwrap_or_else(|| TokenMatrix::empty(self.dim()));
        EncodedPassage {
            matrix,
            title_rows: 0..0,
            sentence_rows: Vec::new(),
        }
    }

    fn encode_query(&self, query: &MultiHopQuery) -> EncodedQuery {
        self.query_encoder.encode_query(query)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condenser::Fact;

    fn enc(dim: usize) -> LexicalEncoder {
        LexicalEncoder::new(EncoderConfig {
            dim,
            ..Default::default()
        })
        .unwrap()
    }

    fn dot(a: &[f32], b: &[f32]) -> f32 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn fact(text: &str) -> Fact {
        Fact {
            pid: "p".into(),
            sentence_index: 0,
            text: text.into(),
            stage1_score: 0.0,
            stage2_score: None,
        }
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Red Flaherty umpired."), ["red", "flaherty", "umpired"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("1965 World-Series MVP"), ["1965", "world", "series", "mvp"]);
        assert_eq!(tokenize("Ça  marche/ÉTÉ"), ["ça", "marche", "été"]);
    }

    #[test]
    fn passage_rows_are_unit_and_deterministic() {
        let e = enc(16);
        let p = Passage {
            pid: "p".into(),
            title: "Koufax".into(),
            sentences: vec!["He pitched".into(), "well, again.".into()],
        };
        let a = e.encode_passage(&p);
        assert_eq!(a.matrix.rows(), 5);
        assert!(a.matrix.max_norm_error() < 1e-6);
        assert_eq!(a.title_rows, 0..1);
        assert_eq!(a.sentence_rows, vec![1..3, 3..5]);
        let b = enc(16).encode_passage(&p);
        assert_eq!(a.matrix.data(), b.matrix.data());
    }

    #[test]
    fn passage_truncated_to_limit() {
        let e = enc(16);
        let long: Vec<String> = (0..300).map(|i| format!("w{i}")).collect();
        let p = Passage {
            pid: "p".into(),
            title: "t".into(),
            sentences: vec![long.join(" "), "tail".into()],
        };
        let out = e.encode_passage(&p);
        assert_eq!(out.matrix.rows(), 256);
        assert_eq!(out.sentence_rows[1], 256..256);
    }

    #[test]
    fn query_parts() {
        let e = enc(16);
        let q = MultiHopQuery::new("q", "one two three four five six seven eight nine ten");
        let eq = e.encode_query(&q);
        assert_eq!(eq.query_part.rows(), 10);
        assert_eq!(eq.fact_part.rows(), 0);

        let mut q2 = q.clone();
        q2.facts.push(fact(&["a"; 12].join(" ")));
        q2.facts.push(fact(&["b"; 8].join(" ")));
        let eq = e.encode_query(&q2);
        assert_eq!((eq.query_part.rows(), eq.fact_part.rows()), (10, 20));
        assert!(eq.fact_part.max_norm_error() < 1e-6);
    }

    #[test]
    fn fact_overflow_keeps_earliest_facts() {
        let e = enc(8);
        let mut q = MultiHopQuery::new("q", ["q"; 100].join(" "));
        for h in 0..3 {
            q.facts.push(fact(&vec![format!("h{h}"); 300].join(" ")));
        }
        let (qt, ft) = query_tokens(&q, e.config());
        assert_eq!(qt.len(), 64);
        assert_eq!(ft.len(), 512 - 64);
        // hop 0 contributes 300, hop 1 the remaining 148, hop 2 nothing
        assert_eq!(ft.iter().filter(|t| *t == "h0").count(), 300);
        assert_eq!(ft.iter().filter(|t| *t == "h1").count(), 148);
        let eq = e.encode_query(&q);
        assert_eq!(eq.query_part.rows() + eq.fact_part.rows(), 512);
    }

    #[test]
    fn similarity_sanity() {
        let e = enc(128);
        let v = e.token_vector("koufax");
        assert!((dot(&v, &v) - 1.0).abs() < 1e-6);
        use rand::Rng;
        let mut rng = seed::rng(9);
        let word = |rng: &mut rand_chacha::ChaCha8Rng| -> String {
            (0..rng.random_range(4..9))
                .map(|_| (b'a' + rng.random_range(0..26u8)) as char)
                .collect()
        };
        let mut sum = 0.0f64;
        for _ in 0..1000 {
            let (a, b) = (word(&mut rng), word(&mut rng));
            sum += f64::from(dot(&e.token_vector(&a), &e.token_vector(&b)));
        }
        assert!((sum / 1000.0).abs() < 0.1, "mean {}", sum / 1000.0);
        // shared trigrams give graded similarity
        let s = dot(&e.token_vector("flaherty"), &e.token_vector("flahert"));
        assert!(s > 0.5 && s < 1.0, "{s}");
    }

    #[test]
    fn config_validation() {
        assert!(LexicalEncoder::new(EncoderConfig {
            dim: 4,
            ..Default::default()
        })
        .is_err());
        assert!(EncoderConfig {
            max_query_tokens: 600,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn matrix_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let m = TokenMatrix::from_rows(2, &[[0.6f32, 0.8], [1.0, 0.0]]).unwrap();
        let path = dir.path().join("m.tmat");
        write_matrix(&path, &m).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"TMAT");
        assert_eq!(bytes.len(), 12 + 2 * 2 * 4);
        assert_eq!(read_matrix(&path).unwrap(), m);
        assert!(parse_matrix(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse_matrix(b"XXXX\x02\0\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn precomputed_encoder_serves_files() {
        let dir = tempfile::tempdir().unwrap();
        let e = enc(8);
        let p = Passage {
            pid: "p1".into(),
            title: "t".into(),
            sentences: vec!["alpha beta".into()],
        };
        let m = e.encode_passage(&p).matrix;
        write_matrix(&dir.path().join("p1.tmat"), &m).unwrap();
        let pre = PrecomputedEncoder::load(dir.path(), ["p1".to_string()], enc(8)).unwrap();
        assert_eq!(pre.encode_passage(&p).matrix, m);
        let q = MultiHopQuery::new("q", "alpha");
        assert_eq!(pre.encode_query(&q), e.encode_query(&q));
    }
}

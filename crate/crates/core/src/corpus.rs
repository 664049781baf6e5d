//! Passage collections and query sets, stored as JSON Lines.
//!
//! Strings are kept exactly as read; tokenization and any normalization are
//! the encoder's business.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// HoVer train/dev/test split sizes, for sanity checks on the real-data path.
pub const HOVER_SPLIT_SIZES: [usize; 3] = [18_171, 4_000, 4_000];
/// HotPotQA train/dev/test split sizes.
pub const HOTPOTQA_SPLIT_SIZES: [usize; 3] = [90_447, 7_405, 7_405];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Passage {
    pub pid: String,
    pub title: String,
    pub sentences: Vec<String>,
}

impl Passage {
    fn validate(&self) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(Error::InvalidPassage {
                pid: self.pid.clone(),
                reason: "no sentences".into(),
            });
        }
        if let Some(i) = self.sentences.iter().position(|s| s.trim().is_empty()) {
            return Err(Error::InvalidPassage {
                pid: self.pid.clone(),
                reason: format!("sentence {i} is blank"),
            });
        }
        Ok(())
    }

    /// Sentences joined by single spaces (title excluded).
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }
}

/// A gold fact: passage id plus sentence offset.
pub type FactRef = (String, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRecord {
    pub qid: String,
    pub text: String,
    pub gold_pids: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub gold_facts: BTreeSet<FactRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
    /// Used only to stratify evaluation; never read at inference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_hops: Option<u8>,
}

/// Read-only passage collection with O(1) lookup by pid.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    passages: Vec<Passage>,
    by_pid: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_passages(passages: Vec<Passage>) -> Result<Self> {
        let mut by_pid = HashMap::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            p.validate()?;
            if by_pid.insert(p.pid.clone(), i).is_some() {
                return Err(Error::DuplicatePid(p.pid.clone()));
            }
        }
        Ok(Self { passages, by_pid })
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn get(&self, pid: &str) -> Option<&Passage> {
        self.by_pid.get(pid).map(|&i| &self.passages[i])
    }

    pub fn position(&self, pid: &str) -> Option<usize> {
        self.by_pid.get(pid).copied()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn iter(&self) -> impl Iterator<Item = &Passage> {
        self.passages.iter()
    }
}

pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let passages: Vec<Passage> = read_jsonl(path)?;
    let corpus = Corpus::from_passages(passages)?;
    log::info!("loaded {} passages from {}", corpus.len(), path.display());
    Ok(corpus)
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    write_jsonl(path, corpus.passages())
}

/// Checks gold references against the corpus.
pub fn validate_query(q: &QueryRecord, corpus: &Corpus) -> Result<()> {
    for pid in &q.gold_pids {
        if corpus.get(pid).is_none() {
            return Err(Error::DanglingGold {
                qid: q.qid.clone(),
                pid: pid.clone(),
            });
        }
    }
    for (pid, idx) in &q.gold_facts {
        if !q.gold_pids.contains(pid) {
            return Err(Error::InvalidQuery {
                qid: q.qid.clone(),
                reason: format!("gold fact ({pid}, {idx}) is not in a gold passage"),
            });
        }
        let n = corpus.get(pid).map_or(0, |p| p.sentences.len());
        if *idx >= n {
            return Err(Error::InvalidQuery {
                qid: q.qid.clone(),
                reason: format!("gold fact ({pid}, {idx}) out of range ({n} sentences)"),
            });
        }
    }
    if let Some(h) = q.num_hops {
        if !(2..=4).contains(&h) {
            return Err(Error::InvalidQuery {
                qid: q.qid.clone(),
                reason: format!("num_hops {h} not in 2..=4"),
            });
        }
    }
    Ok(())
}

pub fn load_queryset(path: &Path, corpus: &Corpus) -> Result<Vec<QueryRecord>> {
    let records: Vec<QueryRecord> = read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    for q in &records {
        if !seen.insert(q.qid.as_str()) {
            return Err(Error::InvalidQuery {
                qid: q.qid.clone(),
                reason: "duplicate qid".into(),
            });
        }
        validate_query(q, corpus)?;
    }
    Ok(records)
}

pub fn write_queryset(path: &Path, queries: &[QueryRecord]) -> Result<()> {
    write_jsonl(path, queries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    const CORPUS: &str = r#"{"pid":"p1","title":"Red Flaherty","sentences":["Red Flaherty was an umpire.","He umpired the 1965 World Series."]}
{"pid":"p2","title":"1965 World Series","sentences":["The MVP was Sandy Koufax."]}
{"pid":"p3","title":"Sandy Koufax","sentences":["Koufax was elected to the Hall of Fame."]}
"#;

    #[test]
    fn loads_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let c = load_corpus(&write(dir.path(), "c.jsonl", CORPUS)).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.get("p2").unwrap().title, "1965 World Series");
        assert!(c.get("p9").is_none());
    }

    #[test]
    fn duplicate_pid_names_offender() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{CORPUS}{}\n", r#"{"pid":"p1","title":"x","sentences":["y"]}"#);
        let err = load_corpus(&write(dir.path(), "c.jsonl", &body)).unwrap_err();
        assert!(matches!(&err, Error::DuplicatePid(p) if p == "p1"));
        assert!(err.to_string().contains("p1"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{CORPUS}{{not json\n");
        let err = load_corpus(&write(dir.path(), "c.jsonl", &body)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn blank_sentence_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"pid":"a","title":"t","sentences":["ok","   "]}"#;
        let err = load_corpus(&write(dir.path(), "c.jsonl", body)).unwrap_err();
        assert!(matches!(err, Error::InvalidPassage { .. }));
        let body = r#"{"pid":"a","title":"t","sentences":[]}"#;
        assert!(load_corpus(&write(dir.path(), "d.jsonl", body)).is_err());
    }

    #[test]
    fn queryset_sizes_and_dangling_gold() {
        let dir = tempfile::tempdir().unwrap();
        let c = load_corpus(&write(dir.path(), "c.jsonl", CORPUS)).unwrap();
        let qs = r#"{"qid":"q1","text":"claim one","gold_pids":["p1","p2"],"label":true,"num_hops":2}
{"qid":"q2","text":"claim two","gold_pids":["p1","p2","p3"],"gold_facts":[["p1",1],["p3",0]],"num_hops":3}
"#;
        let q = load_queryset(&write(dir.path(), "q.jsonl", qs), &c).unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q[0].gold_pids.len(), 2);
        assert_eq!(q[1].gold_pids.len(), 3);
        assert_eq!(q[1].qid, "q2");

        let bad = r#"{"qid":"q7","text":"x","gold_pids":["p1","missing"]}"#;
        let err = load_queryset(&write(dir.path(), "b.jsonl", bad), &c).unwrap_err();
        assert!(matches!(&err, Error::DanglingGold { qid, pid } if qid == "q7" && pid == "missing"));
    }

    #[test]
    fn fact_offsets_and_hops_checked() {
        let c = Corpus::from_passages(vec![Passage {
            pid: "a".into(),
            title: "A".into(),
            sentences: vec!["s".into()],
        }])
        .unwrap();
        let mut q = QueryRecord {
            qid: "q".into(),
            text: "t".into(),
            gold_pids: ["a".to_string()].into(),
            gold_facts: [("a".to_string(), 1)].into(),
            answer: None,
            label: None,
            num_hops: None,
        };
        assert!(validate_query(&q, &c).is_err());
        q.gold_facts = [("a".to_string(), 0)].into();
        assert!(validate_query(&q, &c).is_ok());
        q.num_hops = Some(5);
        assert!(validate_query(&q, &c).is_err());
    }

    #[test]
    fn round_trip_is_canonical() {
        let dir = tempfile::tempdir().unwrap();
        let c = load_corpus(&write(dir.path(), "c.jsonl", CORPUS)).unwrap();
        let out = dir.path().join("out.jsonl");
        write_corpus(&out, &c).unwrap();
        assert_eq!(std::fs::read_to_string(&out).unwrap(), CORPUS);

        // Sets come back sorted, optional fields omitted rather than null.
        let qs = r#"{"qid":"q1","text":"x","gold_pids":["p2","p1"],"answer":null}"#;
        let q = load_queryset(&write(dir.path(), "q.jsonl", qs), &c).unwrap();
        let qout = dir.path().join("qout.jsonl");
        write_queryset(&qout, &q).unwrap();
        assert_eq!(
            std::fs::read_to_string(&qout).unwrap(),
            "{\"qid\":\"q1\",\"text\":\"x\",\"gold_pids\":[\"p1\",\"p2\"]}\n"
        );
    }
}

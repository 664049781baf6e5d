//! The `multihop` command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{resolve, RunConfig};
use crate::corpus::{load_corpus, load_queryset, read_jsonl, write_jsonl};
use crate::encoder::{Encoder, LexicalEncoder};
use crate::error::Error;
use crate::eval::evaluate_run;
use crate::index::{build_index, load_index, save_index, TokenIndex, VariantKind};
use crate::pipeline::{read_traces, write_traces, MultiHopQuery, Pipeline, Variant};
use crate::retriever::{retrieve, RetrievalConfig};
use crate::scoring::ScoredPassage;
use crate::supervision::{
    heuristic_order, heuristic_recovery, latent_hop_ordering, lho_recovery, write_supervision, write_triples,
    ExpansionMode,
};
use crate::synth::{generate, GroundTruth};

#[derive(Debug, Parser)]
#[command(name = "multihop", version, about = "Multi-hop passage retrieval toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// JSON config file.
    #[arg(long, global = true, env = "MULTIHOP_CONFIG")]
    pub config: Option<PathBuf>,
    /// Root seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Named preset: `hover`, `hotpotqa`, or a key of the config's `presets`.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Extra override as `section.field=json`; repeatable.
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a corpus and write a token index.
    BuildIndex {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_variant_kind)]
        variant: Option<VariantKind>,
    },
    /// Single-hop retrieval for one query text or a query set.
    Retrieve {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long, conflicts_with = "queries", required_unless_present = "queries")]
        query: Option<String>,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        /// JSONL output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-hop pipeline over a query set, writing traces.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
        /// Record kept facts without adding them to the query.
        #[arg(long)]
        no_accumulate: bool,
    },
    /// Latent hop ordering: per-hop positives, negatives and triples.
    Lho {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Prebuilt index; built in memory when absent.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Output directory for `supervision.jsonl` and `triples.jsonl`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        hops: Option<usize>,
        /// Planted order (`order.jsonl`) to score recovery against.
        #[arg(long)]
        order: Option<PathBuf>,
        /// Expand with random sentences instead of oracle facts.
        #[arg(long)]
        shuffled: bool,
    },
    /// Title-overlap hop ordering of each query's golds.
    HeuristicOrder {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        order: Option<PathBuf>,
    },
    /// Metrics table and JSON report for a trace file.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a planted multi-hop corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        hops: Option<usize>,
        #[arg(long)]
        queries: Option<usize>,
    },
}

fn parse_variant_kind(s: &str) -> Result<VariantKind, String> {
    serde_json::from_value(Value::String(s.to_owned())).map_err(|_| format!("expected flat or ivf, got {s:?}"))
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    serde_json::from_value(Value::String(s.to_owned()))
        .map_err(|_| format!("expected condensed, rerank or hybrid, got {s:?}"))
}

/// Failures that map to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum UsageError {
    #[error("no such file: {}", .0.display())]
    MissingPath(PathBuf),
    #[error("bad --set {0:?}: expected PATH=VALUE")]
    BadOverride(String),
}

fn require(path: &Path) -> anyhow::Result<()> {
    if !path.exists() {
        return Err(UsageError::MissingPath(path.to_owned()).into());
    }
    Ok(())
}

/// Exit status for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        2
    } else {
        1
    }
}

impl Command {
    fn inputs(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = Vec::new();
        match self {
            Command::BuildIndex { corpus, .. } => v.push(corpus),
            Command::Retrieve { corpus, index, queries, .. } => {
                v.extend([corpus.as_path(), index.as_path()]);
                v.extend(queries.as_deref());
            }
            Command::Run { corpus, queries, index, .. } => v.extend([corpus.as_path(), queries, index]),
            Command::Lho {
                corpus,
                queries,
                index,
                order,
                ..
            } => {
                v.extend([corpus.as_path(), queries.as_path()]);
                v.extend(index.as_deref());
                v.extend(order.as_deref());
            }
            Command::HeuristicOrder { corpus, queries, order, .. } => {
                v.extend([corpus.as_path(), queries.as_path()]);
                v.extend(order.as_deref());
            }
            Command::Eval {
                corpus, queries, traces, ..
            } => v.extend([corpus.as_path(), queries, traces]),
            Command::Synth { .. } => {}
        }
        v
    }

    /// Flag values that override the config document.
    fn overrides(&self) -> Vec<(String, Value)> {
        let mut o = Vec::new();
        match self {
            Command::BuildIndex { variant: Some(v), .. } => o.push(("index.variant".into(), json!(v))),
            Command::Retrieve { k: Some(k), .. } => o.push(("pipeline.retrieval.k".into(), json!(k))),
            Command::Run {
                variant, no_accumulate, ..
            } => {
                if let Some(v) = variant {
                    o.push(("pipeline.variant".into(), json!(v)));
                }
                if *no_accumulate {
                    o.push(("pipeline.accumulate_facts".into(), json!(false)));
                }
            }
            Command::Lho { hops, shuffled, .. } => {
                if let Some(h) = hops {
                    o.push(("supervision.hops".into(), json!(h)));
                }
                if *shuffled {
                    o.push(("supervision.expansion".into(), json!({"mode": "shuffled", "seed": 0})));
                }
            }
            Command::Eval { k: Some(k), .. } => o.push(("eval.k".into(), json!(k))),
            Command::Synth { hops, queries, .. } => {
                if let Some(h) = hops {
                    o.push(("synth.hops".into(), json!(h)));
                }
                if let Some(q) = queries {
                    o.push(("synth.queries".into(), json!(q)));
                }
            }
            _ => {}
        }
        o
    }
}

fn config_for(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut overrides = Vec::new();
    for s in &cli.global.set {
        let (k, v) = s.split_once('=').ok_or_else(|| UsageError::BadOverride(s.clone()))?;
        overrides.push((k.trim().to_owned(), crate::config::parse_value(v)));
    }
    if let Some(seed) = cli.global.seed {
        overrides.push(("seed".into(), json!(seed)));
    }
    overrides.extend(cli.command.overrides());
    let mut cfg = resolve(cli.global.config.as_deref(), cli.global.preset.as_deref(), std::env::vars(), &overrides)?;
    if let ExpansionMode::Shuffled { seed } = &mut cfg.supervision.expansion {
        if *seed == 0 {
            *seed = crate::seed::derive(cfg.seed, "shuffle");
        }
    }
    Ok(cfg)
}

fn encoder(cfg: &RunConfig) -> anyhow::Result<LexicalEncoder> {
    Ok(LexicalEncoder::new(cfg.encoder.clone())?)
}

fn open_index(path: &Path, enc: &dyn Encoder) -> anyhow::Result<TokenIndex> {
    let idx = load_index(path)?;
    if idx.dim() != enc.dim() {
        return Err(Error::DimMismatch {
            expected: idx.dim(),
            actual: enc.dim(),
        }
        .into());
    }
    Ok(idx)
}

fn read_order(path: &Path) -> anyhow::Result<Vec<GroundTruth>> {
    Ok(read_jsonl(path)?)
}

#[derive(Serialize)]
struct Ranked<'a> {
    qid: &'a str,
    ranked: &'a [ScoredPassage],
}

#[derive(Serialize)]
struct Ordered<'a> {
    qid: &'a str,
    hops: &'a [Vec<String>],
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    for p in cli.command.inputs() {
        require(p)?;
    }
    if let Some(n) = cli.global.threads {
        // a second call fails only when a pool already exists, as in tests
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cfg = config_for(&cli)?;
    log::info!("resolved config: {}", cfg.to_json());

    match &cli.command {
        Command::BuildIndex { corpus, out, .. } => {
            let corpus = load_corpus(corpus)?;
            let enc = encoder(&cfg)?;
            let idx = build_index(&corpus, &enc, &cfg.index)?;
            save_index(&idx, out)?;
            let variant = match idx.variant() {
                VariantKind::Flat => "flat",
                VariantKind::Ivf => "ivf",
            };
            println!(
                "total_vectors={} dim={} variant={} passages={}",
                idx.total_vectors(),
                idx.dim(),
                variant,
                idx.passage_count()
            );
        }
        Command::Retrieve {
            corpus,
            index,
            query,
            queries,
            out,
            ..
        } => {
            let corpus = load_corpus(corpus)?;
            let enc = encoder(&cfg)?;
            let idx = open_index(index, &enc)?;
            let qs: Vec<(String, String)> = match (query, queries) {
                (Some(text), _) => vec![("q".into(), text.clone())],
                (None, Some(path)) => load_queryset(path, &corpus)?
                    .into_iter()
                    .map(|q| (q.qid, q.text))
                    .collect(),
                (None, None) => unreachable!("clap requires one of --query and --queries"),
            };
            let rcfg: &RetrievalConfig = &cfg.pipeline.retrieval;
            let mut rows = Vec::new();
            for (qid, text) in &qs {
                let eq = enc.encode_query(&MultiHopQuery::new(qid, text));
                rows.push((qid, retrieve(&eq, &idx, rcfg)?));
            }
            let lines: Vec<Ranked> = rows.iter().map(|(q, r)| Ranked { qid: q, ranked: r }).collect();
            match out {
                Some(path) => write_jsonl(path, &lines)?,
                None => {
                    for l in &lines {
                        println!("{}", serde_json::to_string(l)?);
                    }
                }
            }
        }
        Command::Run {
            corpus,
            queries,
            index,
            out,
            ..
        } => {
            let corpus = load_corpus(corpus)?;
            let queries = load_queryset(queries, &corpus)?;
            let enc = encoder(&cfg)?;
            let idx = open_index(index, &enc)?;
            let pipeline = Pipeline::new(&corpus, &enc, &idx, cfg.pipeline.clone())?;
            let traces = pipeline.run_all(&queries)?;
            write_traces(out, &traces)?;
            println!("wrote {} traces to {}", traces.len(), out.display());
        }
        Command::Lho {
            corpus,
            queries,
            index,
            out,
            order,
            ..
        } => {
            let corpus = load_corpus(corpus)?;
            let queries = load_queryset(queries, &corpus)?;
            let enc = encoder(&cfg)?;
            let idx = match index {
                Some(p) => open_index(p, &enc)?,
                None => build_index(&corpus, &enc, &cfg.index)?,
            };
            let res = latent_hop_ordering(&corpus, &enc, &idx, &queries, &cfg.supervision)?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            let (sp, tp) = (out.join("supervision.jsonl"), out.join("triples.jsonl"));
            write_supervision(&sp, &res.set)?;
            write_triples(&tp, &res.triples)?;
            println!("{}\n{}", sp.display(), tp.display());
            println!("weak hops: {}", res.set.weak_count());
            if let Some(o) = order {
                let r = lho_recovery(&res.set, &read_order(o)?);
                println!(
                    "order recovery: passages {:.1}% queries {:.1}%",
                    100.0 * r.passage_rate(),
                    100.0 * r.query_rate()
                );
            }
        }
        Command::HeuristicOrder {
            corpus,
            queries,
            out,
            order,
        } => {
            let corpus = load_corpus(corpus)?;
            let queries = load_queryset(queries, &corpus)?;
            let orders: BTreeMap<String, Vec<Vec<String>>> = queries
                .iter()
                .map(|q| Ok((q.qid.clone(), heuristic_order(q, &corpus)?)))
                .collect::<crate::error::Result<_>>()?;
            let rows: Vec<Ordered> = queries
                .iter()
                .map(|q| Ordered {
                    qid: &q.qid,
                    hops: &orders[&q.qid],
                })
                .collect();
            write_jsonl(out, &rows)?;
            println!("{}", out.display());
            if let Some(o) = order {
                let r = heuristic_recovery(&orders, &read_order(o)?);
                println!(
                    "order recovery: passages {:.1}% queries {:.1}%",
                    100.0 * r.passage_rate(),
                    100.0 * r.query_rate()
                );
            }
        }
        Command::Eval {
            corpus,
            queries,
            traces,
            out,
            ..
        } => {
            let corpus = load_corpus(corpus)?;
            let queries = load_queryset(queries, &corpus)?;
            let traces = read_traces(traces)?;
            let report = evaluate_run(&traces, &queries, &corpus, &cfg.eval)?;
            print!("{}", report.table());
            if let Some(path) = out {
                let text = serde_json::to_string_pretty(&report)? + "\n";
                std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
            }
        }
        Command::Synth { out, .. } => {
            let planted = generate(&cfg.synth)?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            for p in planted.write(out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

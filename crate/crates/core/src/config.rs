//! One JSON document configuring every module.
//!
//! Resolution order, later layers winning: built-in defaults, the config
//! file, the selected preset (from the file's `presets` map or a built-in
//! name), `MULTIHOP__section__field` environment variables, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::index::IndexConfig;
use crate::pipeline::{PipelineConfig, Preset};
use crate::seed;
use crate::supervision::LhoConfig;
use crate::synth::PlantSpec;

pub const ENV_PREFIX: &str = "MULTIHOP__";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed; module seeds are derived from it by name.
    pub seed: u64,
    pub preset: Option<String>,
    pub paths: Paths,
    pub encoder: EncoderConfig,
    pub index: IndexConfig,
    pub pipeline: PipelineConfig,
    pub supervision: LhoConfig,
    pub eval: EvalConfig,
    pub synth: PlantSpec,
    /// Named partial documents merged over the base when selected.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub presets: BTreeMap<String, Value>,
}

fn builtin_preset(name: &str) -> Option<Value> {
    let p = match name {
        "hover" => Preset::Hover,
        "hotpotqa" => Preset::Hotpotqa,
        _ => return None,
    };
    let c = PipelineConfig::preset(p);
    Some(serde_json::json!({
        "pipeline": { "hops": c.hops, "k_per_hop": c.k_per_hop, "union_take": c.union_take }
    }))
}

/// Recursive object merge; non-objects in `over` replace `base`.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

fn set_path(doc: &mut Value, path: &[&str], value: Value) {
    let mut over = value;
    for key in path.iter().rev() {
        let mut m = Map::new();
        m.insert((*key).to_owned(), over);
        over = Value::Object(m);
    }
    merge(doc, over);
}

/// Parses an override value as JSON, falling back to a plain string.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()))
}

/// Builds the layered config. `overrides` are dotted paths with JSON values,
/// applied last.
pub fn resolve(
    file: Option<&Path>,
    preset: Option<&str>,
    env: impl IntoIterator<Item = (String, String)>,
    overrides: &[(String, Value)],
) -> Result<RunConfig> {
    let mut doc = serde_json::to_value(RunConfig::default())?;
    let mut file_presets = Map::new();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut v: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if let Some(Value::Object(p)) = v.as_object_mut().and_then(|m| m.remove("presets")) {
            file_presets = p;
        }
        merge(&mut doc, v);
    }
    let chosen = preset.map(str::to_owned).or_else(|| doc["preset"].as_str().map(str::to_owned));
    if let Some(name) = &chosen {
        let overlay = file_presets
            .get(name)
            .cloned()
            .or_else(|| builtin_preset(name))
            .ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?;
        merge(&mut doc, overlay);
        doc["preset"] = Value::String(name.clone());
    }
    let mut env: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    env.sort();
    for (k, v) in env {
        let key = k[ENV_PREFIX.len()..].to_lowercase();
        let path: Vec<&str> = key.split("__").collect();
        set_path(&mut doc, &path, parse_value(&v));
    }
    for (k, v) in overrides {
        let path: Vec<&str> = k.split('.').collect();
        set_path(&mut doc, &path, v.clone());
    }
    let mut cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
    cfg.presets = file_presets.into_iter().collect();
    cfg.apply_seed();
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    /// Derives every module seed from the root seed.
    pub fn apply_seed(&mut self) {
        self.encoder.seed = seed::derive(self.seed, "encoder");
        self.index.seed = self.seed;
        self.supervision.seed = self.seed;
        self.synth.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.pipeline.validate()?;
        if self.eval.k == 0 {
            return Err(Error::Config("eval k must be at least 1".into()));
        }
        Ok(())
    }

    /// The resolved document, as logged at startup.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn file(v: Value) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), v.to_string()).unwrap();
        f
    }

    #[test]
    fn defaults_round_trip() {
        let c = resolve(None, None, [], &[]).unwrap();
        assert_eq!(c.pipeline.k_per_hop, [25; 4]);
        let again: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        let f = file(json!({"pipeline": {"hopz": 3}}));
        assert!(matches!(resolve(Some(f.path()), None, [], &[]), Err(Error::Config(_))));
        let f = file(json!({"colour": 1}));
        assert!(resolve(Some(f.path()), None, [], &[]).is_err());
    }

    #[test]
    fn layering_order() {
        let f = file(json!({
            "seed": 3,
            "eval": {"k": 50},
            "presets": {"small": {"eval": {"k": 20}, "encoder": {"dim": 32}}}
        }));
        let c = resolve(Some(f.path()), None, [], &[]).unwrap();
        assert_eq!((c.seed, c.eval.k, c.encoder.dim), (3, 50, 128));

        let c = resolve(Some(f.path()), Some("small"), [], &[]).unwrap();
        assert_eq!((c.eval.k, c.encoder.dim), (20, 32));

        let env = [("MULTIHOP__EVAL__K".to_string(), "7".to_string()), ("OTHER".into(), "x".into())];
        let c = resolve(Some(f.path()), Some("small"), env.clone(), &[]).unwrap();
        assert_eq!(c.eval.k, 7);

        let c = resolve(Some(f.path()), Some("small"), env, &[("eval.k".into(), json!(9))]).unwrap();
        assert_eq!(c.eval.k, 9);
    }

    #[test]
    fn builtin_presets() {
        let c = resolve(None, Some("hotpotqa"), [], &[]).unwrap();
        assert_eq!((c.pipeline.hops, c.pipeline.k_per_hop.clone()), (2, vec![10, 40]));
        assert_eq!(c.pipeline.union_take, Some(vec![10, 10]));
        let c = resolve(None, Some("hover"), [], &[]).unwrap();
        assert_eq!((c.pipeline.hops, c.pipeline.union_take.clone()), (4, None));
        assert!(resolve(None, Some("nope"), [], &[]).is_err());
    }

    #[test]
    fn seeds_derive_from_root() {
        let a = resolve(None, None, [], &[("seed".into(), json!(1))]).unwrap();
        let b = resolve(None, None, [], &[("seed".into(), json!(2))]).unwrap();
        assert_ne!(a.encoder.seed, b.encoder.seed);
        assert_eq!(a.encoder.seed, seed::derive(1, "encoder"));
        assert_eq!((a.synth.seed, a.supervision.seed), (1, 1));
    }
}

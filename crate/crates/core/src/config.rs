//! Run configuration as a flat, dotted key–value file.
//!
//! One [`RunConfig`] pins every knob in the simulator plus the master seed.
//! The file format is `key = value` per line with `#` comments, where keys
//! are dotted paths into the config tree (`media.bond_scale`,
//! `agent.jaw.capacity_m3`, `arena.bounds.max.x`). Unknown keys and
//! mistyped values are rejected by full path, and [`dump`] emits the
//! canonical sorted listing whose SHA-256 stamps every output file.

use crate::error::{Result, SimError};
use crate::harness::Experiment;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub master_seed: u64,
    #[serde(flatten)]
    pub experiment: Experiment,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 1,
            experiment: Experiment::default(),
        }
    }
}

impl RunConfig {
    /// Cross-field checks the type system cannot express; run after any
    /// load or override batch.
    pub fn validate(&self) -> Result<()> {
        self.experiment.arena.validate()?;
        self.experiment.constitutive.validate()?;
        self.experiment.harness.validate()?;
        self.experiment
            .agent
            .validate(&self.experiment.sensors)?;
        Ok(())
    }
}

fn to_tree(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                flatten(&join(k), child, out);
            }
        }
        // Tuples (LED strip row bands and the like) come through as
        // arrays; index them like fields.
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), child, out);
            }
        }
        leaf => out.push((prefix.to_string(), leaf.clone())),
    }
}

/// Canonical flat listing: sorted `key = value` lines, one per knob.
pub fn dump(cfg: &RunConfig) -> String {
    let mut entries = Vec::new();
    flatten("", &to_tree(cfg), &mut entries);
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::new();
    for (k, v) in entries {
        out.push_str(&k);
        out.push_str(" = ");
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

/// Hex SHA-256 of the canonical dump; the identity stamped into output
/// files so results trace back to exact settings.
pub fn config_sha256(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(dump(cfg).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn set_leaf(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = &mut *tree;
    for part in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(part).ok_or_else(|| {
                SimError::config(key, format!("unknown key (no `{part}` here)"))
            })?,
            Value::Array(items) => {
                let len = items.len();
                part.parse::<usize>()
                    .ok()
                    .and_then(|i| items.get_mut(i))
                    .ok_or_else(|| {
                        SimError::config(
                            key,
                            format!("`{part}` is not an index below {len}"),
                        )
                    })?
            }
            _ => return Err(SimError::config(key, "path descends into a scalar")),
        };
    }
    if kind(node) != kind(&value) {
        return Err(SimError::config(
            key,
            format!("expected {}, got {}", kind(node), kind(&value)),
        ));
    }
    if let (Value::Number(have), Value::Number(want)) = (&*node, &value) {
        // Integer-valued knobs must stay integers; a stray decimal point or
        // sign is a config mistake, not a rounding request.
        if (have.is_u64() || have.is_i64()) && !(want.is_u64() || want.is_i64()) {
            return Err(SimError::config(key, "expected an integer"));
        }
        if have.is_u64() && !want.is_u64() {
            return Err(SimError::config(key, "must not be negative"));
        }
    }
    *node = value;
    Ok(())
}

fn parse_line(line: &str) -> Result<Option<(String, Value)>> {
    let body = line.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let (key, raw) = body.split_once('=').ok_or_else(|| {
        SimError::config(body, "expected `key = value`")
    })?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(SimError::config(line.trim(), "empty key"));
    }
    let value: Value = serde_json::from_str(raw)
        .map_err(|e| SimError::config(&key, format!("unparseable value `{raw}`: {e}")))?;
    if matches!(value, Value::Array(_) | Value::Object(_)) {
        return Err(SimError::config(&key, "value must be a scalar"));
    }
    Ok(Some((key, value)))
}

/// Apply `key = value` overrides from `text` on top of `cfg`.
pub fn apply_overrides(cfg: &mut RunConfig, text: &str) -> Result<()> {
    let mut tree = to_tree(cfg);
    for line in text.lines() {
        if let Some((key, value)) = parse_line(line)? {
            set_leaf(&mut tree, &key, value)?;
        }
    }
    let next: RunConfig = serde_json::from_value(tree)
        .map_err(|e| SimError::Parse(format!("config does not deserialize: {e}")))?;
    next.validate()?;
    *cfg = next;
    Ok(())
}

/// Defaults with `text` applied on top.
pub fn parse(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    apply_overrides(&mut cfg, text)?;
    Ok(cfg)
}

//! Configuration files for the external design tool.
//!
//! A config is a flat JSON object. Parsing is strict: unknown fields are
//! rejected and optional fields keep the difference between "absent" and
//! an explicit `null`. Rendering emits a canonical form in roster order.
//!
//! The vertex count of a config is `L + num_anc`, where `L` is the length of
//! the target kets. Every reference configuration satisfies this (the toric
//! code swap has 8-character kets, 8 ancillas and removed connections up to
//! vertex 15), so the validator treats it as the bound for vertex indices.

mod validate;

use std::fmt;

use serde_json::{Map, Value};
use thiserror::Error;

pub use validate::{validate_config, Finding, Rule, ValidationReport};

/// Field names in canonical rendering order.
pub const ROSTER: [&str; 31] = [
    "description",
    "foldername",
    "bulk_thr",
    "edges_tried",
    "ftol",
    "loss_func",
    "num_anc",
    "num_pre",
    "optimizer",
    "imaginary",
    "safe_hist",
    "samples",
    "target_quantum",
    "in_nodes",
    "out_nodes",
    "thresholds",
    "heralding_out",
    "single_emitters",
    "amplitudes",
    "tries_per_edge",
    "removed_connections",
    "number_resolving",
    "seed",
    "unicolor",
    "novac",
    "loops",
    "topopt",
    "dimensions",
    "brutal_covers",
    "verts",
    "anc_detectors",
];

/// An optional config field: missing, explicitly `null`, or set.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Tri<T> {
    #[default]
    Absent,
    Null,
    Set(T),
}

impl<T> Tri<T> {
    pub fn as_set(&self) -> Option<&T> {
        match self {
            Tri::Set(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_absent(&self) -> bool {
        matches!(self, Tri::Absent)
    }
}

/// A parsed design-tool configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignConfig {
    pub description: String,
    pub foldername: String,
    pub bulk_thr: f64,
    pub edges_tried: i64,
    pub ftol: f64,
    pub loss_func: String,
    pub num_anc: i64,
    pub num_pre: i64,
    pub optimizer: String,
    pub imaginary: bool,
    pub safe_hist: bool,
    pub samples: i64,
    pub target_quantum: Vec<String>,
    pub in_nodes: Vec<i64>,
    pub out_nodes: Vec<i64>,
    pub thresholds: Vec<f64>,
    pub heralding_out: Tri<bool>,
    pub single_emitters: Tri<Vec<i64>>,
    pub amplitudes: Tri<Vec<f64>>,
    pub tries_per_edge: i64,
    /// Pairs exactly as authored; `[3, 0]` stays `[3, 0]`.
    pub removed_connections: Vec<[i64; 2]>,
    pub number_resolving: bool,
    pub seed: Tri<i64>,
    pub unicolor: Tri<bool>,
    pub novac: Tri<bool>,
    pub loops: Tri<bool>,
    pub topopt: Tri<bool>,
    pub dimensions: Tri<Vec<i64>>,
    pub brutal_covers: Tri<bool>,
    pub verts: Tri<Vec<i64>>,
    pub anc_detectors: Tri<Vec<i64>>,
}

impl DesignConfig {
    /// Ket length `L`, taken from the first target ket.
    pub fn ket_length(&self) -> usize {
        self.target_quantum.first().map_or(0, |k| k.chars().count())
    }

    /// Total vertex count `V = L + num_anc`.
    pub fn vertex_count(&self) -> i64 {
        self.ket_length() as i64 + self.num_anc
    }

    /// Present fields, in roster order, as JSON values.
    pub fn to_fields(&self) -> Vec<(&'static str, Value)> {
        fn ints(v: &[i64]) -> Value {
            Value::Array(v.iter().map(|&i| Value::from(i)).collect())
        }
        fn reals(v: &[f64]) -> Value {
            Value::Array(v.iter().map(|&x| float(x)).collect())
        }
        fn tri<T>(out: &mut Vec<(&'static str, Value)>, name: &'static str, t: &Tri<T>, f: impl Fn(&T) -> Value) {
            match t {
                Tri::Absent => {}
                Tri::Null => out.push((name, Value::Null)),
                Tri::Set(v) => out.push((name, f(v))),
            }
        }

        let mut out = vec![
            ("description", Value::from(self.description.clone())),
            ("foldername", Value::from(self.foldername.clone())),
            ("bulk_thr", float(self.bulk_thr)),
            ("edges_tried", Value::from(self.edges_tried)),
            ("ftol", float(self.ftol)),
            ("loss_func", Value::from(self.loss_func.clone())),
            ("num_anc", Value::from(self.num_anc)),
            ("num_pre", Value::from(self.num_pre)),
            ("optimizer", Value::from(self.optimizer.clone())),
            ("imaginary", Value::from(self.imaginary)),
            ("safe_hist", Value::from(self.safe_hist)),
            ("samples", Value::from(self.samples)),
            (
                "target_quantum",
                Value::Array(self.target_quantum.iter().cloned().map(Value::from).collect()),
            ),
            ("in_nodes", ints(&self.in_nodes)),
            ("out_nodes", ints(&self.out_nodes)),
            ("thresholds", reals(&self.thresholds)),
        ];
        tri(&mut out, "heralding_out", &self.heralding_out, |&b| Value::from(b));
        tri(&mut out, "single_emitters", &self.single_emitters, |v| ints(v));
        tri(&mut out, "amplitudes", &self.amplitudes, |v| reals(v));
        out.push(("tries_per_edge", Value::from(self.tries_per_edge)));
        out.push((
            "removed_connections",
            Value::Array(self.removed_connections.iter().map(|p| ints(p)).collect()),
        ));
        out.push(("number_resolving", Value::from(self.number_resolving)));
        tri(&mut out, "seed", &self.seed, |&s| Value::from(s));
        tri(&mut out, "unicolor", &self.unicolor, |&b| Value::from(b));
        tri(&mut out, "novac", &self.novac, |&b| Value::from(b));
        tri(&mut out, "loops", &self.loops, |&b| Value::from(b));
        tri(&mut out, "topopt", &self.topopt, |&b| Value::from(b));
        tri(&mut out, "dimensions", &self.dimensions, |v| ints(v));
        tri(&mut out, "brutal_covers", &self.brutal_covers, |&b| Value::from(b));
        tri(&mut out, "verts", &self.verts, |v| ints(v));
        tri(&mut out, "anc_detectors", &self.anc_detectors, |v| ints(v));
        out
    }
}

fn float(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("type mismatch for `{field}`: expected {expected}")]
    TypeMismatch { field: String, expected: &'static str },
}

/// Parses config text. Optional fields absent from the text stay absent.
pub fn parse_config(raw: &str) -> Result<DesignConfig, ConfigError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(ConfigError::Syntax("top-level value is not a JSON object".into()));
    };
    from_map(&map)
}

fn from_map(map: &Map<String, Value>) -> Result<DesignConfig, ConfigError> {
    if let Some(unknown) = map.keys().find(|k| !ROSTER.contains(&k.as_str())) {
        return Err(ConfigError::UnknownField(unknown.clone()));
    }
    let f = Fields(map);
    Ok(DesignConfig {
        description: f.req("description")?,
        foldername: f.req("foldername")?,
        bulk_thr: f.req("bulk_thr")?,
        edges_tried: f.req("edges_tried")?,
        ftol: f.req("ftol")?,
        loss_func: f.req("loss_func")?,
        num_anc: f.req("num_anc")?,
        num_pre: f.req("num_pre")?,
        optimizer: f.req("optimizer")?,
        imaginary: f.req("imaginary")?,
        safe_hist: f.req("safe_hist")?,
        samples: f.req("samples")?,
        target_quantum: f.req("target_quantum")?,
        in_nodes: f.req("in_nodes")?,
        out_nodes: f.req("out_nodes")?,
        thresholds: f.req("thresholds")?,
        heralding_out: f.opt("heralding_out")?,
        single_emitters: f.opt("single_emitters")?,
        amplitudes: f.opt("amplitudes")?,
        tries_per_edge: f.req("tries_per_edge")?,
        removed_connections: f.req("removed_connections")?,
        number_resolving: f.req("number_resolving")?,
        seed: f.opt("seed")?,
        unicolor: f.opt("unicolor")?,
        novac: f.opt("novac")?,
        loops: f.opt("loops")?,
        topopt: f.opt("topopt")?,
        dimensions: f.opt("dimensions")?,
        brutal_covers: f.opt("brutal_covers")?,
        verts: f.opt("verts")?,
        anc_detectors: f.opt("anc_detectors")?,
    })
}

/// JSON decoding for the handful of value shapes a config uses.
trait FromJson: Sized {
    const EXPECTED: &'static str;
    fn from_json(v: &Value) -> Option<Self>;
}

impl FromJson for String {
    const EXPECTED: &'static str = "a string";
    fn from_json(v: &Value) -> Option<Self> {
        v.as_str().map(str::to_owned)
    }
}

impl FromJson for f64 {
    const EXPECTED: &'static str = "a number";
    fn from_json(v: &Value) -> Option<Self> {
        v.as_f64()
    }
}

impl FromJson for i64 {
    const EXPECTED: &'static str = "an integer";
    fn from_json(v: &Value) -> Option<Self> {
        v.as_i64()
    }
}

impl FromJson for bool {
    const EXPECTED: &'static str = "a boolean";
    fn from_json(v: &Value) -> Option<Self> {
        v.as_bool()
    }
}

impl FromJson for [i64; 2] {
    const EXPECTED: &'static str = "a pair of integers";
    fn from_json(v: &Value) -> Option<Self> {
        match v.as_array()?.as_slice() {
            [a, b] => Some([a.as_i64()?, b.as_i64()?]),
            _ => None,
        }
    }
}

impl<T: FromJson> FromJson for Vec<T> {
    const EXPECTED: &'static str = "a list";
    fn from_json(v: &Value) -> Option<Self> {
        v.as_array()?.iter().map(T::from_json).collect()
    }
}

struct Fields<'a>(&'a Map<String, Value>);

impl Fields<'_> {
    fn req<T: FromJson>(&self, name: &'static str) -> Result<T, ConfigError> {
        let value = self.0.get(name).ok_or(ConfigError::MissingField(name))?;
        T::from_json(value).ok_or(ConfigError::TypeMismatch {
            field: name.to_string(),
            expected: T::EXPECTED,
        })
    }

    fn opt<T: FromJson>(&self, name: &'static str) -> Result<Tri<T>, ConfigError> {
        match self.0.get(name) {
            None => Ok(Tri::Absent),
            Some(Value::Null) => Ok(Tri::Null),
            Some(_) => self.req(name).map(Tri::Set),
        }
    }
}

/// Canonical text: two-space indent, roster order, shortest round-trip floats.
pub fn render_config(cfg: &DesignConfig) -> String {
    let map: Map<String, Value> = cfg
        .to_fields()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let mut out = serde_json::to_string_pretty(&Value::Object(map)).expect("config values serialize");
    out.push('\n');
    out
}

/// SHA-256 of the canonical rendering, hex encoded.
pub fn config_digest(cfg: &DesignConfig) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(render_config(cfg).as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Change {
    Added(Value),
    Removed(Value),
    Changed { old: Value, new: Value },
}

impl Change {
    /// The same change seen from the other side.
    pub fn flipped(&self) -> Change {
        match self {
            Change::Added(v) => Change::Removed(v.clone()),
            Change::Removed(v) => Change::Added(v.clone()),
            Change::Changed { old, new } => Change::Changed {
                old: new.clone(),
                new: old.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldChange {
    pub field: &'static str,
    pub change: Change,
}

impl fmt::Display for FieldChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.change {
            Change::Added(v) => write!(f, "+ {}: {v}", self.field),
            Change::Removed(v) => write!(f, "- {}: {v}", self.field),
            Change::Changed { old, new } => write!(f, "~ {}: {old} -> {new}", self.field),
        }
    }
}

/// Field-level differences from `a` to `b`, in roster order.
pub fn diff_configs(a: &DesignConfig, b: &DesignConfig) -> Vec<FieldChange> {
    let left = a.to_fields();
    let right = b.to_fields();
    let lookup = |fields: &[(&'static str, Value)], name: &str| {
        fields.iter().find(|(k, _)| *k == name).map(|(_, v)| v.clone())
    };
    ROSTER
        .iter()
        .filter_map(|&field| {
            let change = match (lookup(&left, field), lookup(&right, field)) {
                (None, None) => return None,
                (None, Some(new)) => Change::Added(new),
                (Some(old), None) => Change::Removed(old),
                (Some(old), Some(new)) if old == new => return None,
                (Some(old), Some(new)) => Change::Changed { old, new },
            };
            Some(FieldChange { field, change })
        })
        .collect()
}

/// The seven reference configurations shipped under `fixtures/reference_configs/`.
pub const REFERENCE_CONFIGS: [(&str, &str); 7] = [
    ("sum_qutrit_mod3", include_str!("../../fixtures/reference_configs/sum_qutrit_mod3.json")),
    ("ES_toriccode", include_str!("../../fixtures/reference_configs/ES_toriccode.json")),
    ("remote_swap", include_str!("../../fixtures/reference_configs/remote_swap.json")),
    ("qubit_to_ququart_mux", include_str!("../../fixtures/reference_configs/qubit_to_ququart_mux.json")),
    ("quantum_perceptron", include_str!("../../fixtures/reference_configs/quantum_perceptron.json")),
    ("kitaev_swap_chain", include_str!("../../fixtures/reference_configs/kitaev_swap_chain.json")),
    ("swap_tp_superchannel", include_str!("../../fixtures/reference_configs/swap_tp_superchannel.json")),
];

pub fn reference_config(name: &str) -> Option<DesignConfig> {
    REFERENCE_CONFIGS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, raw)| parse_config(raw).expect("reference configs parse"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "description": "d", "foldername": "f", "bulk_thr": 0.0, "edges_tried": 1,
        "ftol": 1e-6, "loss_func": "cr", "num_anc": 0, "num_pre": 1, "optimizer": "L-BFGS-B",
        "imaginary": false, "safe_hist": true, "samples": 1, "target_quantum": ["0"],
        "in_nodes": [], "out_nodes": [], "thresholds": [0.3, 0.1], "tries_per_edge": 1,
        "removed_connections": [], "number_resolving": false
    }"#;

    #[test]
    fn remote_swap_dimensions() {
        let cfg = reference_config("remote_swap").unwrap();
        assert_eq!(cfg.ket_length(), 4);
        assert_eq!(cfg.num_anc, 4);
        assert_eq!(cfg.vertex_count(), 8);
        assert_eq!(cfg.seed, Tri::Null);
        assert_eq!(cfg.unicolor, Tri::Set(false));
    }

    #[test]
    fn minimal_config() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.vertex_count(), 1);
        assert!(cfg.heralding_out.is_absent());
        assert!(cfg.amplitudes.is_absent());
        assert!(validate_config(&cfg).is_valid());
    }

    #[test]
    fn absent_and_null_are_distinct() {
        let with_null = MINIMAL.replacen("\"samples\": 1", "\"samples\": 1, \"heralding_out\": null", 1);
        let a = parse_config(MINIMAL).unwrap();
        let b = parse_config(&with_null).unwrap();
        assert_eq!(b.heralding_out, Tri::Null);
        assert_ne!(a, b);
        assert!(render_config(&b).contains("\"heralding_out\": null"));
        assert!(!render_config(&a).contains("heralding_out"));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_config("{"), Err(ConfigError::Syntax(_))));
        assert!(matches!(parse_config("[1]"), Err(ConfigError::Syntax(_))));
        let typo = MINIMAL.replacen("\"samples\"", "\"sample\"", 1);
        assert_eq!(parse_config(&typo), Err(ConfigError::UnknownField("sample".into())));
        let missing = MINIMAL.replacen("\"samples\": 1,", "", 1);
        assert_eq!(parse_config(&missing), Err(ConfigError::MissingField("samples")));
        let wrong = MINIMAL.replacen("\"samples\": 1", "\"samples\": \"ten\"", 1);
        assert!(matches!(parse_config(&wrong), Err(ConfigError::TypeMismatch { field, .. }) if field == "samples"));
        let triple = MINIMAL.replacen("\"removed_connections\": []", "\"removed_connections\": [[0, 1, 2]]", 1);
        assert!(matches!(parse_config(&triple), Err(ConfigError::TypeMismatch { field, .. }) if field == "removed_connections"));
        let null_required = MINIMAL.replacen("\"samples\": 1", "\"samples\": null", 1);
        assert!(matches!(parse_config(&null_required), Err(ConfigError::TypeMismatch { .. })));
    }

    #[test]
    fn render_keeps_float_form() {
        let cfg = reference_config("swap_tp_superchannel").unwrap();
        let text = render_config(&cfg);
        assert!(text.contains("\"amplitudes\": [\n    1.0,\n    1.0\n  ]"), "{text}");
        assert!(text.contains("\n  \"description\""));
        let kitaev = render_config(&reference_config("kitaev_swap_chain").unwrap());
        assert!(kitaev.contains("    1.0\n"));
    }

    #[test]
    fn render_is_deterministic_and_idempotent() {
        for (name, raw) in REFERENCE_CONFIGS {
            let cfg = parse_config(raw).unwrap();
            let once = render_config(&cfg);
            assert_eq!(once, render_config(&cfg), "{name}");
            let again = parse_config(&once).unwrap();
            assert_eq!(again, cfg, "{name}");
            assert_eq!(render_config(&again), once, "{name}");
        }
    }

    #[test]
    fn render_uses_roster_order() {
        let text = render_config(&reference_config("ES_toriccode").unwrap());
        let positions: Vec<usize> = ROSTER
            .iter()
            .map(|f| text.find(&format!("\"{f}\":")).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn removed_connections_render_as_authored() {
        let text = render_config(&reference_config("swap_tp_superchannel").unwrap());
        assert!(text.contains("[\n      3,\n      0\n    ]"));
    }

    #[test]
    fn diffs() {
        let a = reference_config("remote_swap").unwrap();
        assert!(diff_configs(&a, &a).is_empty());
        let mut b = a.clone();
        b.samples = 10;
        let d = diff_configs(&a, &b);
        assert_eq!(
            d,
            vec![FieldChange {
                field: "samples",
                change: Change::Changed {
                    old: Value::from(20),
                    new: Value::from(10)
                }
            }]
        );
        b.seed = Tri::Absent;
        b.heralding_out = Tri::Null;
        let forward = diff_configs(&a, &b);
        let backward = diff_configs(&b, &a);
        assert_eq!(forward.len(), 3);
        let flipped: Vec<_> = forward
            .iter()
            .map(|c| FieldChange { field: c.field, change: c.change.flipped() })
            .collect();
        assert_eq!(flipped, backward);
        assert_eq!(forward[2].to_string(), "- seed: null");
    }
}

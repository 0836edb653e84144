//! Reference checker over raw JSON values, plus a mutant generator.
//!
//! The checker enumerates the admissible vertex set explicitly and walks a
//! fixed table of index-valued fields, independent of the typed validator.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Map, Value};

/// `(rule id, field path)` pairs, sorted.
pub type Findings = Vec<(String, String)>;

fn int(v: &Value) -> i64 {
    v.as_i64().expect("integer field")
}

fn num(v: &Value) -> f64 {
    v.as_f64().expect("numeric field")
}

fn arr(v: &Value) -> &Vec<Value> {
    v.as_array().expect("array field")
}

/// Index-valued list fields; the last three may be absent or null.
const INDEX_LISTS: [&str; 5] = ["in_nodes", "out_nodes", "single_emitters", "verts", "anc_detectors"];

pub fn reference_check(cfg: &Map<String, Value>) -> Findings {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut push = |rule: &str, path: String| out.push((rule.to_string(), path));

    let text = |k: &str| cfg[k].as_str().expect("string field").to_string();
    if text("description").trim().is_empty() {
        push("empty-text", "description".into());
    }
    let folder = text("foldername");
    if folder.trim().is_empty() || folder.contains('/') || folder.contains('\\') || folder == ".." {
        push("foldername", "foldername".into());
    }
    if !(num(&cfg["bulk_thr"]) >= 0.0) {
        push("non-negative", "bulk_thr".into());
    }
    for k in ["num_anc", "num_pre"] {
        if int(&cfg[k]) < 0 {
            push("non-negative", k.into());
        }
    }
    for k in ["edges_tried", "samples", "tries_per_edge"] {
        if int(&cfg[k]) <= 0 {
            push("positive", k.into());
        }
    }
    if !(num(&cfg["ftol"]) > 0.0) {
        push("positive", "ftol".into());
    }

    let kets: Vec<String> = arr(&cfg["target_quantum"]).iter().map(|k| k.as_str().unwrap().to_string()).collect();
    if kets.is_empty() {
        push("target-empty", "target_quantum".into());
    }
    let l = kets.first().map_or(0, |k| k.chars().count()) as i64;
    for (i, k) in kets.iter().enumerate() {
        let digits = !k.is_empty() && k.chars().all(|c| "0123456789".contains(c));
        if !digits {
            push("ket-charset", format!("target_quantum[{i}]"));
        } else if k.chars().count() as i64 != l {
            push("ket-length", format!("target_quantum[{i}]"));
        }
    }

    let v = l + int(&cfg["num_anc"]);
    let vertices: BTreeSet<i64> = (0..v.max(0)).collect();
    let modes: BTreeSet<i64> = (0..l).collect();

    for field in INDEX_LISTS {
        let Some(Value::Array(items)) = cfg.get(field) else { continue };
        for (i, item) in items.iter().enumerate() {
            let x = int(item);
            let path = format!("{field}[{i}]");
            if !vertices.contains(&x) {
                push("vertex-range", path);
            } else if (field == "in_nodes" || field == "out_nodes") && !modes.contains(&x) {
                push("io-range", path);
            }
        }
    }
    let ins: Vec<i64> = arr(&cfg["in_nodes"]).iter().map(int).collect();
    for (i, x) in arr(&cfg["out_nodes"]).iter().map(int).enumerate() {
        if ins.contains(&x) {
            push("io-overlap", format!("out_nodes[{i}]"));
        }
    }

    let thresholds = arr(&cfg["thresholds"]);
    if thresholds.len() != 2 {
        push("threshold-arity", "thresholds".into());
    }
    for (i, t) in thresholds.iter().enumerate() {
        if !(num(t) > 0.0) {
            push("threshold-range", format!("thresholds[{i}]"));
        }
    }
    if let Some(Value::Array(amps)) = cfg.get("amplitudes") {
        if !amps.is_empty() && amps.len() != kets.len() {
            push("amplitude-arity", "amplitudes".into());
        }
    }
    for (i, pair) in arr(&cfg["removed_connections"]).iter().enumerate() {
        let p = arr(pair);
        for (j, x) in p.iter().enumerate() {
            if !vertices.contains(&int(x)) {
                push("vertex-range", format!("removed_connections[{i}][{j}]"));
            }
        }
        if int(&p[0]) == int(&p[1]) {
            push("self-loop", format!("removed_connections[{i}]"));
        }
    }
    out.sort();
    out
}

/// Findings of the production validator in the same shape.
pub fn production_check(text: &str) -> Result<Findings, String> {
    let cfg = mandel::configschema::parse_config(text).map_err(|e| e.to_string())?;
    let mut f: Findings = mandel::configschema::validate_config(&cfg)
        .errors
        .iter()
        .map(|f| (f.rule.id().to_string(), f.path.clone()))
        .collect();
    f.sort();
    Ok(f)
}

fn index_fields(cfg: &Map<String, Value>) -> Vec<&'static str> {
    INDEX_LISTS
        .into_iter()
        .filter(|f| matches!(cfg.get(*f), Some(Value::Array(a)) if !a.is_empty()))
        .collect()
}

fn vertex_count(cfg: &Map<String, Value>) -> i64 {
    let l = arr(&cfg["target_quantum"])
        .first()
        .and_then(Value::as_str)
        .map_or(0, |k| k.chars().count()) as i64;
    l + int(&cfg["num_anc"])
}

/// Applies one random index or arity mutation in place.
pub fn mutate_once<R: Rng>(cfg: &mut Map<String, Value>, rng: &mut R) {
    let v = vertex_count(cfg);
    match rng.gen_range(0..10) {
        0 => {
            let fields = index_fields(cfg);
            if let Some(f) = fields.choose(rng) {
                let list = cfg[*f].as_array_mut().unwrap();
                let i = rng.gen_range(0..list.len());
                list[i] = json!(*[v, v + rng.gen_range(1..5), -1, -rng.gen_range(2..9)].choose(rng).unwrap());
            }
        }
        1 => {
            let anc = int(&cfg["num_anc"]);
            cfg["num_anc"] = json!(anc - rng.gen_range(1..=anc.max(1) + 1));
        }
        2 => {
            let kets = cfg["target_quantum"].as_array_mut().unwrap();
            let i = rng.gen_range(0..kets.len());
            let mut k = kets[i].as_str().unwrap().to_string();
            if rng.gen_bool(0.5) && !k.is_empty() {
                k.pop();
            } else {
                k.push('0');
            }
            kets[i] = json!(k);
        }
        3 => {
            let kets = cfg["target_quantum"].as_array_mut().unwrap();
            let i = rng.gen_range(0..kets.len());
            let k: String = kets[i].as_str().unwrap().chars().enumerate().map(|(n, c)| if n == 0 { 'x' } else { c }).collect();
            kets[i] = json!(k);
        }
        4 => {
            let t = cfg["thresholds"].as_array_mut().unwrap();
            if rng.gen_bool(0.5) {
                t.push(json!(0.5));
            } else {
                t.pop();
            }
        }
        5 => {
            let t = cfg["thresholds"].as_array_mut().unwrap();
            if !t.is_empty() {
                let i = rng.gen_range(0..t.len());
                t[i] = json!(*[0.0, -0.2].choose(rng).unwrap());
            }
        }
        6 => {
            let n = arr(&cfg["target_quantum"]).len();
            let lens: Vec<usize> = [1, n + 1, n + 2].into_iter().filter(|&x| x != n).collect();
            let len = *lens.choose(rng).unwrap();
            cfg.insert("amplitudes".into(), json!(vec![1.0; len]));
        }
        7 => {
            let x = rng.gen_range(0..v.max(1));
            cfg["removed_connections"].as_array_mut().unwrap().push(json!([x, x]));
        }
        8 => {
            let ins = arr(&cfg["in_nodes"]).clone();
            if let Some(x) = ins.choose(rng) {
                cfg["out_nodes"].as_array_mut().unwrap().push(x.clone());
            } else {
                cfg["in_nodes"].as_array_mut().unwrap().push(json!(v + 1));
            }
        }
        _ => {
            let pairs = cfg["removed_connections"].as_array_mut().unwrap();
            if pairs.is_empty() {
                pairs.push(json!([0, v]));
            } else {
                let i = rng.gen_range(0..pairs.len());
                let j = rng.gen_range(0..2);
                pairs[i][j] = json!(v + rng.gen_range(0..3));
            }
        }
    }
}

/// Generates `count` mutants that the reference checker rejects, each as
/// `(source fixture name, JSON text)`. Every mutant gets one to three
/// mutations.
pub fn generate_mutants<R: Rng>(fixtures: &[(&str, &str)], count: usize, rng: &mut R) -> Vec<(String, String)> {
    let mut out = Vec::with_capacity(count);
    let bases: Vec<(&str, Map<String, Value>)> = fixtures
        .iter()
        .map(|(name, text)| (*name, serde_json::from_str::<Value>(text).unwrap().as_object().unwrap().clone()))
        .collect();
    while out.len() < count {
        let (name, base) = bases.choose(rng).unwrap();
        let mut cfg = base.clone();
        for _ in 0..rng.gen_range(1..=3) {
            mutate_once(&mut cfg, rng);
        }
        if reference_check(&cfg).is_empty() {
            continue;
        }
        out.push((name.to_string(), serde_json::to_string_pretty(&Value::Object(cfg)).unwrap()));
    }
    out
}

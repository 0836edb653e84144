use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::{DesignConfig, Tri};

/// Validation rule identifiers. Errors block a config, warnings never do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    EmptyText,
    FolderName,
    NonNegative,
    Positive,
    TargetEmpty,
    KetCharset,
    KetLength,
    VertexRange,
    IoRange,
    IoOverlap,
    ThresholdArity,
    ThresholdRange,
    AmplitudeArity,
    SelfLoop,
    // warnings
    LossFuncUnknown,
    ThresholdAboveOne,
    DuplicateConnection,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::EmptyText => "empty-text",
            Rule::FolderName => "foldername",
            Rule::NonNegative => "non-negative",
            Rule::Positive => "positive",
            Rule::TargetEmpty => "target-empty",
            Rule::KetCharset => "ket-charset",
            Rule::KetLength => "ket-length",
            Rule::VertexRange => "vertex-range",
            Rule::IoRange => "io-range",
            Rule::IoOverlap => "io-overlap",
            Rule::ThresholdArity => "threshold-arity",
            Rule::ThresholdRange => "threshold-range",
            Rule::AmplitudeArity => "amplitude-arity",
            Rule::SelfLoop => "self-loop",
            Rule::LossFuncUnknown => "loss-func-unknown",
            Rule::ThresholdAboveOne => "threshold-above-one",
            Rule::DuplicateConnection => "duplicate-connection",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub rule: Rule,
    pub message: String,
    /// Offending field, with list indices, e.g. `removed_connections[3][0]`.
    pub path: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, rule: Rule, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(Finding {
            rule,
            message: message.into(),
            path: path.into(),
        });
    }

    fn warn(&mut self, rule: Rule, path: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Finding {
            rule,
            message: message.into(),
            path: path.into(),
        });
    }
}

const KNOWN_LOSS_FUNCS: [&str; 2] = ["cr", "fid"];

/// Checks every config invariant. Findings come out in roster order, then by
/// list position, so the first error is stable for a given config.
pub fn validate_config(cfg: &DesignConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let ket_len = cfg.ket_length() as i64;
    let vertices = cfg.vertex_count();

    if cfg.description.trim().is_empty() {
        report.error(Rule::EmptyText, "description", "description is empty");
    }
    if cfg.foldername.trim().is_empty() || cfg.foldername.contains(['/', '\\']) || cfg.foldername == ".." {
        report.error(
            Rule::FolderName,
            "foldername",
            format!("foldername {:?} is not a plain directory name", cfg.foldername),
        );
    }
    if !(cfg.bulk_thr >= 0.0) {
        report.error(Rule::NonNegative, "bulk_thr", format!("bulk_thr = {} must be >= 0", cfg.bulk_thr));
    }
    if cfg.edges_tried <= 0 {
        report.error(Rule::Positive, "edges_tried", format!("edges_tried = {} must be positive", cfg.edges_tried));
    }
    if !(cfg.ftol > 0.0) {
        report.error(Rule::Positive, "ftol", format!("ftol = {} must be positive", cfg.ftol));
    }
    if !KNOWN_LOSS_FUNCS.contains(&cfg.loss_func.as_str()) {
        report.warn(
            Rule::LossFuncUnknown,
            "loss_func",
            format!("loss_func {:?} is not one of \"cr\", \"fid\"", cfg.loss_func),
        );
    }
    if cfg.num_anc < 0 {
        report.error(Rule::NonNegative, "num_anc", format!("num_anc = {} must be >= 0", cfg.num_anc));
    }
    if cfg.num_pre < 0 {
        report.error(Rule::NonNegative, "num_pre", format!("num_pre = {} must be >= 0", cfg.num_pre));
    }
    if cfg.samples <= 0 {
        report.error(Rule::Positive, "samples", format!("samples = {} must be positive", cfg.samples));
    }

    if cfg.target_quantum.is_empty() {
        report.error(Rule::TargetEmpty, "target_quantum", "target_quantum has no kets");
    }
    for (i, ket) in cfg.target_quantum.iter().enumerate() {
        let path = format!("target_quantum[{i}]");
        if ket.is_empty() || !ket.chars().all(|c| c.is_ascii_digit()) {
            report.error(
                Rule::KetCharset,
                &path,
                format!("{path} = {ket:?} must be a non-empty string of decimal digits"),
            );
        } else if ket.chars().count() as i64 != ket_len {
            report.error(
                Rule::KetLength,
                &path,
                format!("{path} = {ket:?} has length {} but target_quantum[0] has length {ket_len}", ket.chars().count()),
            );
        }
    }

    let range_note = format!("[0, {vertices}) (V = L + num_anc = {ket_len} + {})", cfg.num_anc);
    let check_vertex = |report: &mut ValidationReport, path: String, v: i64| -> bool {
        if v < 0 || v >= vertices {
            report.error(Rule::VertexRange, &path, format!("{path} = {v} is outside the vertex range {range_note}"));
            false
        } else {
            true
        }
    };

    for (field, nodes) in [("in_nodes", &cfg.in_nodes), ("out_nodes", &cfg.out_nodes)] {
        for (i, &v) in nodes.iter().enumerate() {
            let path = format!("{field}[{i}]");
            if check_vertex(&mut report, path.clone(), v) && v >= ket_len {
                report.error(
                    Rule::IoRange,
                    &path,
                    format!("{path} = {v} is an ancilla vertex; input/output modes must lie in [0, {ket_len})"),
                );
            }
        }
    }
    for (i, v) in cfg.out_nodes.iter().enumerate() {
        if cfg.in_nodes.contains(v) {
            report.error(
                Rule::IoOverlap,
                format!("out_nodes[{i}]"),
                format!("vertex {v} is listed in both in_nodes and out_nodes"),
            );
        }
    }

    if cfg.thresholds.len() != 2 {
        report.error(
            Rule::ThresholdArity,
            "thresholds",
            format!("thresholds has {} entries, expected exactly 2", cfg.thresholds.len()),
        );
    }
    for (i, &t) in cfg.thresholds.iter().enumerate() {
        let path = format!("thresholds[{i}]");
        if !(t > 0.0) {
            report.error(Rule::ThresholdRange, &path, format!("{path} = {t} must be positive"));
        } else if t > 1.0 {
            report.warn(Rule::ThresholdAboveOne, &path, format!("{path} = {t} is above 1"));
        }
    }

    if let Tri::Set(emitters) = &cfg.single_emitters {
        for (i, &v) in emitters.iter().enumerate() {
            check_vertex(&mut report, format!("single_emitters[{i}]"), v);
        }
    }
    if let Tri::Set(amplitudes) = &cfg.amplitudes {
        if !amplitudes.is_empty() && amplitudes.len() != cfg.target_quantum.len() {
            report.error(
                Rule::AmplitudeArity,
                "amplitudes",
                format!(
                    "amplitudes has {} entries but target_quantum has {} kets",
                    amplitudes.len(),
                    cfg.target_quantum.len()
                ),
            );
        }
    }
    if cfg.tries_per_edge <= 0 {
        report.error(
            Rule::Positive,
            "tries_per_edge",
            format!("tries_per_edge = {} must be positive", cfg.tries_per_edge),
        );
    }

    let mut seen = HashSet::new();
    for (i, &[a, b]) in cfg.removed_connections.iter().enumerate() {
        check_vertex(&mut report, format!("removed_connections[{i}][0]"), a);
        check_vertex(&mut report, format!("removed_connections[{i}][1]"), b);
        if a == b {
            report.error(
                Rule::SelfLoop,
                format!("removed_connections[{i}]"),
                format!("removed_connections[{i}] = [{a}, {b}] connects a vertex to itself"),
            );
        } else if !seen.insert((a.min(b), a.max(b))) {
            report.warn(
                Rule::DuplicateConnection,
                format!("removed_connections[{i}]"),
                format!("removed_connections[{i}] = [{a}, {b}] repeats an earlier pair"),
            );
        }
    }

    for (field, list) in [("verts", &cfg.verts), ("anc_detectors", &cfg.anc_detectors)] {
        if let Tri::Set(list) = list {
            for (i, &v) in list.iter().enumerate() {
                check_vertex(&mut report, format!("{field}[{i}]"), v);
            }
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configschema::{reference_config, REFERENCE_CONFIGS};

    fn rules(report: &ValidationReport) -> Vec<(&'static str, String)> {
        report.errors.iter().map(|f| (f.rule.id(), f.path.clone())).collect()
    }

    #[test]
    fn reference_configs_are_clean() {
        for (name, _) in REFERENCE_CONFIGS {
            let report = validate_config(&reference_config(name).unwrap());
            assert!(report.is_valid(), "{name}: {:?}", report.errors);
        }
    }

    #[test]
    fn toric_code_bounds() {
        let cfg = reference_config("ES_toriccode").unwrap();
        assert_eq!(cfg.ket_length(), 8);
        assert_eq!(cfg.vertex_count(), 16);
        let max = cfg.removed_connections.iter().flatten().max().copied();
        assert_eq!(max, Some(15));
    }

    #[test]
    fn index_at_vertex_count_is_rejected() {
        let mut cfg = reference_config("sum_qutrit_mod3").unwrap();
        cfg.out_nodes[1] = 8;
        let report = validate_config(&cfg);
        assert_eq!(rules(&report), vec![("vertex-range", "out_nodes[1]".to_string())]);
        assert!(report.errors[0].message.contains("= 8"));
    }

    #[test]
    fn ancilla_used_as_output() {
        let mut cfg = reference_config("remote_swap").unwrap();
        cfg.out_nodes = vec![2, 5];
        assert_eq!(rules(&validate_config(&cfg)), vec![("io-range", "out_nodes[1]".to_string())]);
    }

    #[test]
    fn overlap_and_self_loop() {
        let mut cfg = reference_config("remote_swap").unwrap();
        cfg.out_nodes = vec![1, 3];
        cfg.removed_connections.push([4, 4]);
        assert_eq!(
            rules(&validate_config(&cfg)),
            vec![
                ("io-overlap", "out_nodes[0]".to_string()),
                ("self-loop", "removed_connections[2]".to_string())
            ]
        );
    }

    #[test]
    fn ket_problems() {
        let mut cfg = reference_config("remote_swap").unwrap();
        cfg.target_quantum[2] = "100".into();
        cfg.target_quantum[3] = "1a11".into();
        assert_eq!(
            rules(&validate_config(&cfg)),
            vec![
                ("ket-length", "target_quantum[2]".to_string()),
                ("ket-charset", "target_quantum[3]".to_string())
            ]
        );
    }

    #[test]
    fn amplitude_arity() {
        let mut cfg = reference_config("swap_tp_superchannel").unwrap();
        cfg.amplitudes = Tri::Set(vec![1.0]);
        let report = validate_config(&cfg);
        assert_eq!(rules(&report), vec![("amplitude-arity", "amplitudes".to_string())]);
    }

    #[test]
    fn warnings_do_not_block() {
        let mut cfg = reference_config("remote_swap").unwrap();
        cfg.loss_func = "l2".into();
        cfg.thresholds = vec![0.3, 1.5];
        cfg.removed_connections.push([3, 0]);
        let report = validate_config(&cfg);
        assert!(report.is_valid());
        let ids: Vec<_> = report.warnings.iter().map(|w| w.rule.id()).collect();
        assert_eq!(ids, ["loss-func-unknown", "threshold-above-one", "duplicate-connection"]);
    }

    #[test]
    fn kitaev_threshold_of_one_is_fine() {
        let report = validate_config(&reference_config("kitaev_swap_chain").unwrap());
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn scalar_ranges() {
        let mut cfg = reference_config("remote_swap").unwrap();
        cfg.samples = 0;
        cfg.ftol = 0.0;
        cfg.num_anc = -1;
        cfg.thresholds = vec![0.3];
        let ids: Vec<_> = validate_config(&cfg).errors.iter().map(|f| f.rule.id()).collect();
        assert!(ids.contains(&"positive"));
        assert!(ids.contains(&"non-negative"));
        assert!(ids.contains(&"threshold-arity"));
    }
}

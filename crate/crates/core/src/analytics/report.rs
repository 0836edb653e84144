use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::agents::Outcome;
use crate::protocol::Role;

use super::{
    compute_funnel, cumulative_new_concepts, expert_histogram_by_success, histogram_by_outcome, overall_success_rate,
    pca_project, success_rate_by_class, AnalyticsError, CampaignLedger, ConceptMatch, Embedder, Funnel, Rate,
};

pub const REPORT_FILES: [&str; 10] = [
    "funnel.csv",
    "hist_researcher.csv",
    "hist_novelty.csv",
    "hist_judge.csv",
    "hist_mediator.csv",
    "hist_expert.csv",
    "success_rates.csv",
    "concept_curve.csv",
    "projection.csv",
    "report.json",
];

const IDEA_ROLES: [Role; 4] = [Role::Researcher, Role::NoveltySupervisor, Role::Judge, Role::Mediator];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEntry {
    pub successes: u64,
    pub attempts: u64,
    pub rate: f64,
    pub display: String,
}

impl From<Rate> for RateEntry {
    fn from(r: Rate) -> Self {
        Self {
            successes: r.successes,
            attempts: r.attempts,
            rate: r.value(),
            display: r.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionSummary {
    pub points: usize,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpertBin {
    pub successful: usize,
    pub unsuccessful: usize,
}

/// Everything written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportData {
    pub summary: String,
    pub idea_runs: usize,
    pub implementation_runs: usize,
    pub funnel: Funnel,
    pub histograms: BTreeMap<String, BTreeMap<usize, Funnel>>,
    pub expert_histogram: BTreeMap<usize, ExpertBin>,
    pub success_rates: BTreeMap<String, RateEntry>,
    pub overall_success_rate: Option<RateEntry>,
    /// Per variant, over fully accepted ideas in ledger order.
    pub concept_curves: BTreeMap<String, Vec<usize>>,
    pub projection: Option<ProjectionSummary>,
    pub projection_note: Option<String>,
}

/// One-paragraph plain-text summary of a campaign.
pub fn render_summary(funnel: &Funnel, overall: Option<Rate>) -> String {
    let ideas = if funnel.full_accept == 1 { "idea" } else { "ideas" };
    let mut text = format!(
        "{} {ideas} in the pool from {} idea-generation runs ({} full reject, {} novelty accept, {} full accept).",
        funnel.full_accept,
        funnel.total(),
        funnel.full_reject,
        funnel.novelty_accept,
        funnel.full_accept
    );
    match overall {
        Some(rate) => text.push_str(&format!(" Implementation success rate: {rate}.")),
        None => text.push_str(" No implementation runs."),
    }
    text
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> AnalyticsError + '_ {
    move |e| AnalyticsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), AnalyticsError> {
    let csv_err = |e: csv::Error| AnalyticsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io(path))
}

/// Computes every statistic and writes the report bundle into `out_dir`.
pub fn write_report(
    ledger: &CampaignLedger,
    concepts: &[String],
    mode: ConceptMatch,
    embedder: &dyn Embedder,
    out_dir: &Path,
) -> Result<ReportData, AnalyticsError> {
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;

    let funnel = compute_funnel(ledger);
    write_csv(
        &out_dir.join("funnel.csv"),
        &["outcome", "runs"],
        Outcome::ALL
            .iter()
            .map(|o| vec![o.as_str().to_string(), funnel.get(*o).to_string()])
            .chain([vec!["total".to_string(), funnel.total().to_string()]])
            .collect(),
    )?;

    let mut histograms = BTreeMap::new();
    for role in IDEA_ROLES {
        let hist = histogram_by_outcome(ledger, role);
        write_csv(
            &out_dir.join(format!("hist_{}.csv", role.as_str())),
            &["calls", "full_reject", "novelty_accept", "full_accept", "runs"],
            hist.iter()
                .map(|(calls, f)| {
                    vec![
                        calls.to_string(),
                        f.full_reject.to_string(),
                        f.novelty_accept.to_string(),
                        f.full_accept.to_string(),
                        f.total().to_string(),
                    ]
                })
                .collect(),
        )?;
        histograms.insert(role.as_str().to_string(), hist);
    }
    let expert: BTreeMap<usize, ExpertBin> = expert_histogram_by_success(ledger)
        .into_iter()
        .map(|(calls, (successful, unsuccessful))| (calls, ExpertBin { successful, unsuccessful }))
        .collect();
    write_csv(
        &out_dir.join("hist_expert.csv"),
        &["calls", "successful", "unsuccessful", "runs"],
        expert
            .iter()
            .map(|(calls, b)| {
                vec![
                    calls.to_string(),
                    b.successful.to_string(),
                    b.unsuccessful.to_string(),
                    (b.successful + b.unsuccessful).to_string(),
                ]
            })
            .collect(),
    )?;

    let rates = success_rate_by_class(ledger);
    let overall = overall_success_rate(ledger);
    let rate_row = |name: &str, r: &Rate| {
        vec![
            name.to_string(),
            r.successes.to_string(),
            r.attempts.to_string(),
            format!("{:.4}", r.value()),
        ]
    };
    write_csv(
        &out_dir.join("success_rates.csv"),
        &["class", "successes", "attempts", "rate"],
        rates
            .iter()
            .map(|(class, r)| rate_row(class.as_str(), r))
            .chain(overall.iter().map(|r| rate_row("overall", r)))
            .collect(),
    )?;

    let mut accepted_by_variant: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for run in ledger.idea_runs().filter(|r| r.outcome == Outcome::FullAccept) {
        if let Some(a) = &run.abstract_text {
            accepted_by_variant
                .entry(run.variant.clone())
                .or_default()
                .push((run.run_id.clone(), a.clone()));
        }
    }
    let mut concept_curves = BTreeMap::new();
    let mut curve_rows = Vec::new();
    for (variant, runs) in &accepted_by_variant {
        let abstracts: Vec<&str> = runs.iter().map(|(_, a)| a.as_str()).collect();
        let curve = cumulative_new_concepts(&abstracts, concepts, mode);
        for (i, ((run_id, _), value)) in runs.iter().zip(&curve).enumerate() {
            curve_rows.push(vec![variant.clone(), (i + 1).to_string(), run_id.clone(), value.to_string()]);
        }
        concept_curves.insert(variant.clone(), curve);
    }
    write_csv(
        &out_dir.join("concept_curve.csv"),
        &["variant", "index", "run_id", "cumulative_new_concepts"],
        curve_rows,
    )?;

    let points: Vec<(String, Outcome, String)> = ledger
        .idea_runs()
        .filter_map(|r| r.abstract_text.as_ref().map(|a| (r.run_id.clone(), r.outcome, a.clone())))
        .collect();
    let (projection, projection_note, projection_rows) = if points.len() < 2 {
        (None, Some(format!("{} abstracts; at least 2 are needed", points.len())), Vec::new())
    } else {
        let texts: Vec<String> = points.iter().map(|(_, _, a)| a.clone()).collect();
        let matrix = embedder.embed(&texts)?;
        match pca_project(&matrix, 2) {
            Ok(p) => {
                let rows = points
                    .iter()
                    .zip(&p.coords)
                    .map(|((id, outcome, _), xy)| {
                        vec![id.clone(), xy[0].to_string(), xy[1].to_string(), outcome.as_str().to_string()]
                    })
                    .collect();
                let summary = ProjectionSummary {
                    points: points.len(),
                    explained_variance: p.explained_variance,
                    total_variance: p.total_variance,
                };
                (Some(summary), None, rows)
            }
            Err(AnalyticsError::DegenerateData(why)) => (None, Some(why), Vec::new()),
            Err(e) => return Err(e),
        }
    };
    write_csv(&out_dir.join("projection.csv"), &["id", "x", "y", "outcome"], projection_rows)?;

    let data = ReportData {
        summary: render_summary(&funnel, overall),
        idea_runs: funnel.total(),
        implementation_runs: ledger.implementations().count(),
        funnel,
        histograms,
        expert_histogram: expert,
        success_rates: rates.into_iter().map(|(c, r)| (c.as_str().to_string(), r.into())).collect(),
        overall_success_rate: overall.map(Into::into),
        concept_curves,
        projection,
        projection_note,
    };
    let path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&data).expect("report serializes") + "\n";
    fs::write(&path, json).map_err(io(&path))?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::OfflineEmbedder;

    #[test]
    fn empty_ledger_writes_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let data = write_report(
            &CampaignLedger::default(),
            &[],
            ConceptMatch::Substring,
            &OfflineEmbedder::default(),
            dir.path(),
        )
        .unwrap();
        for f in REPORT_FILES {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        assert_eq!(data.funnel.total(), 0);
        assert_eq!(
            fs::read_to_string(dir.path().join("funnel.csv")).unwrap(),
            "outcome,runs\nfull_reject,0\nnovelty_accept,0\nfull_accept,0\ntotal,0\n"
        );
    }

    #[test]
    fn summary_text() {
        let funnel = Funnel { full_reject: 0, novelty_accept: 0, full_accept: 187 };
        let text = render_summary(&funnel, Some(Rate { successes: 739, attempts: 804 }));
        assert!(text.starts_with("187 ideas in the pool"));
        assert!(text.contains("739/804 = 0.9192"));
    }
}

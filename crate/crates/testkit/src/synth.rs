//! Synthetic inputs: corpora, concept pairs and ledgers.

use mandel::agents::{ConceptPair, Outcome};
use mandel::literature::{AbstractRecord, Corpus};
use mandel::store::{IdeaRunSummary, ImplementationSummary, LedgerRecord, RoleCalls};
use rand::Rng;

pub fn corpus(n: usize) -> Corpus {
    Corpus::new(
        (0..n)
            .map(|i| AbstractRecord {
                arxiv_id: format!("2401.{i:05}"),
                title: format!("Seed paper {i}"),
                abstract_text: format!("We study photonic entanglement scheme number {i}."),
            })
            .collect(),
    )
    .unwrap()
}

pub fn pair(i: usize) -> ConceptPair {
    ConceptPair::new(format!("concept a{i}"), format!("concept b{i}"), format!("pair-{i}")).unwrap()
}

fn outcome<R: Rng>(rng: &mut R) -> Outcome {
    Outcome::ALL[rng.gen_range(0..3)]
}

/// A random ledger of idea runs followed by implementation runs.
pub fn ledger<R: Rng>(rng: &mut R, runs: usize, implementations: usize) -> Vec<LedgerRecord> {
    let mut out = Vec::new();
    for i in 0..runs {
        let outcome = outcome(rng);
        let accepted = outcome == Outcome::FullAccept;
        out.push(LedgerRecord::IdeaRun(IdeaRunSummary {
            run_id: format!("run-{:04}", i + 1),
            variant: ["main", "no-pool"][rng.gen_range(0..2)].into(),
            outcome,
            concepts: pair(i),
            calls: RoleCalls {
                researcher: rng.gen_range(1..12),
                novelty: rng.gen_range(1..6),
                judge: rng.gen_range(0..6),
                mediator: rng.gen_range(0..4),
            },
            proposals: rng.gen_range(1..10),
            arxiv_queries: rng.gen_range(0..6),
            idea_id: accepted.then(|| format!("idea-{:04}", i + 1)),
            title: Some(format!("Idea {i}")),
            abstract_text: Some(format!("Abstract {i} on topic {}", rng.gen_range(0..5))),
            aborted: None,
            finished_at: "2025-01-01T00:00:00Z".into(),
        }));
    }
    for i in 0..implementations {
        let success = rng.gen_bool(0.8);
        let calls = rng.gen_range(1..=10);
        out.push(LedgerRecord::Implementation(ImplementationSummary {
            impl_id: format!("impl-{:04}", i + 1),
            idea_id: format!("idea-{:04}", rng.gen_range(1..=runs.max(1))),
            variant: "main".into(),
            source_outcome: outcome(rng),
            expert_calls: calls,
            attempts: calls,
            success,
            design_dir: None,
            aborted: None,
            finished_at: "2025-01-01T00:00:00Z".into(),
        }));
    }
    out
}

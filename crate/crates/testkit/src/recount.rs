//! Direct recounts of ledger statistics, one loop per quantity.

use std::collections::BTreeMap;

use mandel::agents::Outcome;
use mandel::protocol::Role;
use mandel::store::LedgerRecord;

/// Idea runs per class, in `[full reject, novelty accept, full accept]` order.
pub fn funnel(records: &[LedgerRecord]) -> [usize; 3] {
    let mut c = [0; 3];
    for r in records {
        if let LedgerRecord::IdeaRun(s) = r {
            match s.outcome {
                Outcome::FullReject => c[0] += 1,
                Outcome::NoveltyAccept => c[1] += 1,
                Outcome::FullAccept => c[2] += 1,
            }
        }
    }
    c
}

/// Number of runs (implementations for the Expert) by call count of `role`.
pub fn calls(records: &[LedgerRecord], role: Role) -> BTreeMap<usize, usize> {
    let mut m = BTreeMap::new();
    for r in records {
        let n = match (r, role) {
            (LedgerRecord::Implementation(s), Role::Expert) => s.expert_calls,
            (LedgerRecord::IdeaRun(s), Role::Researcher) => s.calls.researcher,
            (LedgerRecord::IdeaRun(s), Role::NoveltySupervisor) => s.calls.novelty,
            (LedgerRecord::IdeaRun(s), Role::Judge) => s.calls.judge,
            (LedgerRecord::IdeaRun(s), Role::Mediator) => s.calls.mediator,
            _ => continue,
        };
        *m.entry(n).or_insert(0) += 1;
    }
    m
}

/// `(successes, attempts)` per source class.
pub fn rates(records: &[LedgerRecord]) -> BTreeMap<Outcome, (u64, u64)> {
    let mut m = BTreeMap::new();
    for r in records {
        if let LedgerRecord::Implementation(s) = r {
            let e = m.entry(s.source_outcome).or_insert((0, 0));
            e.1 += 1;
            if s.success {
                e.0 += 1;
            }
        }
    }
    m
}

//! Multi-agent research-idea pipeline: idea generation with novelty and
//! feasibility supervisors, implementation through a design-tool debug loop,
//! append-only persistence and campaign analytics.

pub mod configschema;
pub mod protocol;
pub mod literature;
pub mod llmbackend;
pub mod toolrunner;
pub mod agents;
pub mod clock;
pub mod store;
pub mod analytics;
pub mod campaign;

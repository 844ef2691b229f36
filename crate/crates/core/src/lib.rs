//! Agent-based behaviour learning.
//!
//! Agent types live in a taxonomic ontology and inherit attributes, relations
//! and behaviour rules from their ancestors. Rules are written in a small DSL
//! (optional condition, one effect assignment, optional execution probability)
//! and may contain unknown parameters. Scenarios bind agents to observed
//! timelines from a knowledge base; the engine then
//!
//! * simulates scenarios step by step ([`simulation`]),
//! * scores simulated trajectories against observations ([`scoring`]),
//! * fits unknown parameters by likelihood-free Bayesian inference and
//!   combines per-model posteriors into an overall distribution
//!   ([`inference`]),
//! * and manages versioned rule sets ("world views") with learned posteriors
//!   and reality-match scores ([`worldview`]).
//!
//! All randomness flows through deterministic splittable streams ([`rng`]),
//! so every pipeline is reproducible bit for bit for a fixed seed, including
//! under parallel execution.

pub mod inference;
pub mod knowledge;
pub mod ontology;
pub mod rng;
pub mod rules;
pub mod scoring;
pub mod simulation;
pub mod value;
pub mod worldview;

pub use inference::{FitConfig, FitResult, ParameterGroup, Posterior};
pub use knowledge::{KnowledgeBase, MergePolicy, Observation, Timeline};
pub use ontology::{AgentType, AttributeDef, AttributeKind, Ontology, RelationDef};
pub use rng::RandomStream;
pub use rules::{AttrPath, ParameterAssignment, Rule, RuleSpec, UnknownParameter};
pub use scoring::ScoreReport;
pub use simulation::{Scenario, SimulationState, Trajectory};
pub use value::Value;
pub use worldview::WorldView;

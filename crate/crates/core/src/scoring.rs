//! Model scoring: compare simulated trajectories to knowledge-base timelines.
//!
//! Scoring walks four stages: retrieve the relevant timelines, simulate,
//! compare simulated values to observed values at matching step times, and
//! repeat over Monte Carlo runs (and over every eligible entity when a slot
//! is not bound to a specific entity).
//!
//! The per-value kernel is a range-normalized triangular kernel for
//! continuous attributes — `max(0, 1 - |sim-obs| / (tau * (hi-lo)))` — and
//! exact equality for boolean/categorical/text attributes. Scores always lie
//! in [0, 1]. Simulated values are compared at exact step times only;
//! observations at off-grid times are skipped and counted.

use crate::inference::InferenceError;
use crate::knowledge::{KnowledgeBase, KnowledgeError, Timeline};
use crate::ontology::{AttributeDef, AttributeKind, Ontology, OntologyError};
use crate::rng::RandomStream;
use crate::rules::{ParameterAssignment, Rule, RuleSpec};
use crate::simulation::{Scenario, Sim, SimulationError, Trajectory};
use crate::worldview::{WorldView, WorldViewError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Default width factor of the triangular score kernel.
pub const DEFAULT_TAU: f64 = 0.25;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("cannot compare {sim} against {obs} for attribute [{attribute}]")]
    KindMismatch { attribute: String, sim: String, obs: String },
    #[error("scenario `{0}` has no eligible entity binding")]
    NoEligibleEntity(String),
    #[error("scenario `{scenario}` leaves more than one slot unbound ({slots:?})")]
    MultipleUnboundSlots { scenario: String, slots: Vec<String> },
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

/// Agreement of one simulated value with one observation, in [0, 1].
pub fn value_score(
    sim: &crate::value::Value,
    obs: &crate::value::Value,
    attr: &AttributeDef,
    tau: f64,
) -> Result<f64, ScoreError> {
    let mismatch = || ScoreError::KindMismatch {
        attribute: attr.name.clone(),
        sim: sim.kind_name().to_owned(),
        obs: obs.kind_name().to_owned(),
    };
    match attr.kind {
        AttributeKind::Continuous => {
            let s = sim.as_real().ok_or_else(mismatch)?;
            let o = obs.as_real().ok_or_else(mismatch)?;
            let (lo, hi) = attr.range.expect("continuous attrs carry a range");
            let width = tau * (hi - lo);
            Ok((1.0 - (s - o).abs() / width).max(0.0))
        }
        AttributeKind::Boolean => match (sim, obs) {
            (crate::value::Value::Bool(a), crate::value::Value::Bool(b)) => {
                Ok(if a == b { 1.0 } else { 0.0 })
            }
            _ => Err(mismatch()),
        },
        AttributeKind::Categorical | AttributeKind::Text => match (sim, obs) {
            (crate::value::Value::Text(a), crate::value::Value::Text(b)) => {
                Ok(if a == b { 1.0 } else { 0.0 })
            }
            _ => Err(mismatch()),
        },
    }
}

/// Outcome of scoring one trajectory against timelines.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRun {
    /// Mean value score; `None` when no observation falls on a step time
    /// (the run is undefined rather than zero).
    pub score: Option<f64>,
    /// Mean score per attribute name.
    pub per_attribute: BTreeMap<String, f64>,
    pub compared: usize,
    /// Observations of observed attributes at off-grid times.
    pub skipped: usize,
}

/// Compare one trajectory to the bound entities' timelines at exact step
/// times. `timelines` is keyed by slot name.
pub fn score_run(
    trajectory: &Trajectory,
    timelines: &BTreeMap<String, &Timeline>,
    scenario: &Scenario,
    ontology: &Ontology,
    tau: f64,
) -> Result<ScoreRun, ScoreError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut skipped = 0usize;
    let mut per_attr: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for obs in &scenario.observed {
        let Some(timeline) = timelines.get(&obs.slot) else {
            continue;
        };
        let slot_type = &scenario.slot(&obs.slot).expect("validated scenario").agent_type;
        let def = ontology
            .attribute(slot_type, &obs.attribute)?
            .ok_or_else(|| OntologyError::UnknownType(slot_type.clone()))?;
        let Some(points) = timeline.attributes.get(&obs.attribute) else {
            continue;
        };
        for (time, observed) in points {
            let Some(step) = scenario.step_of_time(*time) else {
                skipped += 1;
                continue;
            };
            let Some(simulated) = trajectory.value_at(step, &obs.slot, &obs.attribute) else {
                continue;
            };
            let v = value_score(simulated, observed, def, tau)?;
            sum += v;
            count += 1;
            let entry = per_attr.entry(obs.attribute.clone()).or_insert((0.0, 0));
            entry.0 += v;
            entry.1 += 1;
        }
    }
    Ok(ScoreRun {
        score: (count > 0).then(|| sum / count as f64),
        per_attribute: per_attr.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
        compared: count,
        skipped,
    })
}

/// Scoring result over all eligible entity bindings and Monte Carlo runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scenario: String,
    pub worldview: String,
    /// Mean of the per-entity scores, in [0, 1].
    pub model_score: f64,
    /// Score per entity binding (run-averaged).
    pub per_entity: BTreeMap<String, f64>,
    /// Mean value score per attribute, over all entities and runs.
    pub per_attribute: BTreeMap<String, f64>,
    pub n_runs: usize,
    pub seed: u64,
    /// Observations at off-grid times, per run (identical across runs).
    pub skipped_observations: usize,
}

/// Score a worldview on a scenario. Every unbound slot (at most one) is
/// enumerated over all knowledge-base entities of its type that pass the
/// slot filters, can be initialized, and have at least one comparable
/// observation; each binding is run `n_runs` times and averaged.
#[allow(clippy::too_many_arguments)]
pub fn score_model(
    scenario: &Scenario,
    ontology: &Ontology,
    worldview: &WorldView,
    kb: &KnowledgeBase,
    params: &ParameterAssignment,
    n_runs: usize,
    seed: u64,
    tau: f64,
) -> Result<ScoreReport, ScoreError> {
    scenario.validate(ontology)?;
    let unbound: Vec<&crate::simulation::AgentSlot> =
        scenario.agents.iter().filter(|a| a.entity.is_none()).collect();
    if unbound.len() > 1 {
        return Err(ScoreError::MultipleUnboundSlots {
            scenario: scenario.id.clone(),
            slots: unbound.iter().map(|a| a.slot.clone()).collect(),
        });
    }

    // Candidate bindings with stable indices for stream derivation.
    let candidates: Vec<(usize, String, BTreeMap<String, String>)> = match unbound.first() {
        None => {
            let label = scenario
                .agents
                .iter()
                .filter_map(|a| a.entity.clone())
                .collect::<Vec<_>>()
                .join("+");
            vec![(0, label, BTreeMap::new())]
        }
        Some(slot) => kb
            .entities_of_type(&slot.agent_type, ontology)?
            .into_iter()
            .enumerate()
            .map(|(idx, entity)| {
                let mut binding = BTreeMap::new();
                binding.insert(slot.slot.clone(), entity.clone());
                (idx, entity, binding)
            })
            .collect(),
    };

    let base = RandomStream::new(seed);
    let mut per_entity: BTreeMap<String, f64> = BTreeMap::new();
    let mut per_attr: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut skipped = 0usize;
    for (idx, label, binding) in candidates {
        if let Some(slot) = unbound.first() {
            let timeline = kb.timeline(&label)?;
            if !slot.filters.iter().all(|f| f.passes(&timeline)) {
                continue;
            }
        }
        let sim = match Sim::new(scenario, ontology, worldview, kb, &binding) {
            Ok(sim) => sim,
            Err(SimulationError::MissingInitialValue { .. }) => continue,
            Err(other) => return Err(other.into()),
        };
        if sim.initialize().is_err() {
            continue;
        }
        let timelines: BTreeMap<String, &Timeline> = scenario
            .agents
            .iter()
            .filter_map(|a| sim.timeline(&a.slot).map(|t| (a.slot.clone(), t)))
            .collect();

        let entity_stream = base.split(idx as u64);
        let runs: Vec<ScoreRun> = (0..n_runs)
            .into_par_iter()
            .map(|r| {
                let trajectory = sim.run_with_stream(params, entity_stream.split(r as u64))?;
                score_run(&trajectory, &timelines, scenario, ontology, tau)
            })
            .collect::<Result<_, ScoreError>>()?;

        // Comparability is binding-dependent but rng-independent: either all
        // runs have comparable points or none do.
        if runs.iter().all(|r| r.score.is_none()) {
            continue;
        }
        let mean: f64 =
            runs.iter().filter_map(|r| r.score).sum::<f64>() / n_runs as f64;
        per_entity.insert(label, mean);
        skipped = runs[0].skipped;
        for run in &runs {
            for (attr, score) in &run.per_attribute {
                let entry = per_attr.entry(attr.clone()).or_insert((0.0, 0));
                entry.0 += score;
                entry.1 += 1;
            }
        }
    }

    if per_entity.is_empty() {
        return Err(ScoreError::NoEligibleEntity(scenario.id.clone()));
    }
    let model_score = per_entity.values().sum::<f64>() / per_entity.len() as f64;
    Ok(ScoreReport {
        scenario: scenario.id.clone(),
        worldview: worldview.id.clone(),
        model_score,
        per_entity,
        per_attribute: per_attr.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
        n_runs,
        seed,
        skipped_observations: skipped,
    })
}

/// Outcome of evaluating a candidate rule across models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImprovementReport {
    /// Mean over models of (score with rule) - (score without rule);
    /// positive means the rule improves the worldview.
    pub delta: f64,
    pub per_model: Vec<ModelDelta>,
    /// Posterior-mode values of the candidate's parameters after fitting.
    pub fitted_modes: ParameterAssignment,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDelta {
    pub scenario: String,
    pub with_rule: f64,
    pub without_rule: f64,
}

/// Fit a candidate rule's parameters on all models, then measure the mean
/// score change from adding it to the worldview (at posterior-mode values).
pub fn rule_improvement(
    worldview: &WorldView,
    candidate: &RuleSpec,
    models: &[Scenario],
    ontology: &Ontology,
    kb: &KnowledgeBase,
    budget: &crate::inference::FitConfig,
    seed: u64,
) -> Result<ImprovementReport, InferenceError> {
    let rule = Rule::parse(candidate, ontology).map_err(WorldViewError::from)?;
    let param_names: Vec<String> =
        rule.free_parameters().iter().map(|p| p.name.clone()).collect();
    let mut with_rule = worldview.fork(&format!("{}+candidate", worldview.id));
    with_rule.add_rule(rule)?;

    let base = RandomStream::new(seed);
    let fitted_modes: ParameterAssignment = if param_names.is_empty() {
        ParameterAssignment::new()
    } else {
        let fit = crate::inference::fit_across_models(
            &param_names,
            models,
            ontology,
            &with_rule,
            kb,
            budget,
            base.split(0).as_seed(),
        )?;
        fit.overall
            .iter()
            .map(|(name, posterior)| (name.clone(), posterior.mode()))
            .collect()
    };

    let params_without = worldview.posterior_modes()?;
    let mut params_with = params_without.clone();
    for (name, value) in &fitted_modes {
        params_with.insert(name.clone(), *value);
    }

    let mut per_model = Vec::new();
    let mut total = 0.0;
    for (idx, scenario) in models.iter().enumerate() {
        let seed_m = base.split(1).split(idx as u64).as_seed();
        let with = score_model(
            scenario,
            ontology,
            &with_rule,
            kb,
            &params_with,
            budget.n_runs_per_sample,
            seed_m,
            budget.tau,
        )?
        .model_score;
        let without = score_model(
            scenario,
            ontology,
            worldview,
            kb,
            &params_without,
            budget.n_runs_per_sample,
            seed_m,
            budget.tau,
        )?
        .model_score;
        total += with - without;
        per_model.push(ModelDelta { scenario: scenario.id.clone(), with_rule: with, without_rule: without });
    }
    Ok(ImprovementReport {
        delta: total / models.len() as f64,
        per_model,
        fitted_modes,
    })
}

//! Timestepped Monte Carlo simulation of scenarios.
//!
//! A scenario declares agent slots (each of some agent type, optionally bound
//! to a knowledge-base entity), fixed relations between slots, a timestep
//! size and count, and the attributes compared against observations during
//! scoring.
//!
//! Updates are synchronous: all rule conditions and right-hand sides evaluate
//! against the start-of-step snapshot, and writes land in the next state.
//! Rule order therefore only matters for write-write conflicts, which resolve
//! last-writer-wins (with a logged warning). Certain rules consume no
//! randomness, so fully-certain worldviews produce seed-independent
//! trajectories.

use crate::inference::Posterior;
use crate::knowledge::{KnowledgeBase, KnowledgeError, Timeline};
use crate::ontology::{AttributeKind, Ontology, OntologyError};
use crate::rng::RandomStream;
use crate::rules::{AttrPath, EvalContext, EvalError, ParameterAssignment, Rule};
use crate::value::Value;
use crate::worldview::WorldView;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid scenario `{scenario}`: {message}")]
    InvalidScenario { scenario: String, message: String },
    #[error("slot `{0}` is not bound to an entity")]
    UnboundSlot(String),
    #[error("no initial observation for attribute [{attribute}] of slot `{slot}`")]
    MissingInitialValue { slot: String, attribute: String },
    #[error("no posterior provided for parameter `{0}`")]
    MissingPosterior(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

/// Comparison operator of a slot filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
}

/// Restricts which entities are eligible for an unbound slot, judged against
/// the entity's earliest observed value of the attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub attribute: String,
    pub op: FilterOp,
    pub value: Value,
}

impl Filter {
    /// Judge an entity by its earliest observed value of the attribute.
    pub fn passes(&self, timeline: &Timeline) -> bool {
        let Some(actual) = timeline.earliest(&self.attribute) else {
            return false;
        };
        match self.op {
            FilterOp::Eq => actual == &self.value,
            FilterOp::Ne => actual != &self.value,
            FilterOp::Gt | FilterOp::Lt | FilterOp::Ge | FilterOp::Le => {
                let (Some(a), Some(b)) = (actual.as_real(), self.value.as_real()) else {
                    return false;
                };
                match self.op {
                    FilterOp::Gt => a > b,
                    FilterOp::Lt => a < b,
                    FilterOp::Ge => a >= b,
                    FilterOp::Le => a <= b,
                    _ => unreachable!(),
                }
            }
        }
    }
}

/// One agent slot of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSlot {
    pub slot: String,
    pub agent_type: String,
    /// Bound entity; absent slots are enumerated by the scorer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filters: Vec<Filter>,
}

/// A fixed relation edge between two slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationBinding {
    pub source: String,
    pub relation: String,
    pub target: String,
}

/// One attribute compared against observations during scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedAttr {
    pub slot: String,
    pub attribute: String,
}

/// Scenario configuration; the on-disk schema of scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub agents: Vec<AgentSlot>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relations: Vec<RelationBinding>,
    /// Timestep size in scenario time units.
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observed: Vec<ObservedAttr>,
}

impl Scenario {
    /// Scenario time of step `s` (step 0 is the initial state).
    pub fn step_time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    /// Map an observation time onto a step index, if it falls on the grid.
    pub fn step_of_time(&self, time: f64) -> Option<usize> {
        if time < -TIME_EPS {
            return None;
        }
        let step = (time / self.dt).round();
        if step < 0.0 || step > self.n_steps as f64 {
            return None;
        }
        let step = step as usize;
        let eps = TIME_EPS * self.step_time(step).abs().max(1.0);
        ((self.step_time(step) - time).abs() <= eps).then_some(step)
    }

    pub fn slot(&self, name: &str) -> Option<&AgentSlot> {
        self.agents.iter().find(|a| a.slot == name)
    }

    /// Structural validation against the ontology.
    pub fn validate(&self, ontology: &Ontology) -> Result<(), SimulationError> {
        let fail = |message: String| SimulationError::InvalidScenario {
            scenario: self.id.clone(),
            message,
        };
        if self.agents.is_empty() {
            return Err(fail("scenario declares no agents".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(fail(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps < 1 {
            return Err(fail("n_steps must be at least 1".into()));
        }
        let mut seen = BTreeSet::new();
        for agent in &self.agents {
            if !seen.insert(&agent.slot) {
                return Err(fail(format!("duplicate slot `{}`", agent.slot)));
            }
            ontology.get(&agent.agent_type)?;
            for filter in &agent.filters {
                let def = ontology
                    .attribute(&agent.agent_type, &filter.attribute)?
                    .ok_or_else(|| {
                        fail(format!(
                            "filter on unknown attribute [{}] of slot `{}`",
                            filter.attribute, agent.slot
                        ))
                    })?;
                let ordered = matches!(
                    filter.op,
                    FilterOp::Gt | FilterOp::Lt | FilterOp::Ge | FilterOp::Le
                );
                if ordered && def.kind != AttributeKind::Continuous {
                    return Err(fail(format!(
                        "ordering filter on non-continuous attribute [{}]",
                        filter.attribute
                    )));
                }
            }
        }
        let mut edges = BTreeSet::new();
        for rel in &self.relations {
            let source = self
                .slot(&rel.source)
                .ok_or_else(|| fail(format!("relation source slot `{}` not declared", rel.source)))?;
            let target = self
                .slot(&rel.target)
                .ok_or_else(|| fail(format!("relation target slot `{}` not declared", rel.target)))?;
            let def = ontology
                .relation(&source.agent_type, &rel.relation)?
                .ok_or_else(|| {
                    fail(format!(
                        "agent type `{}` has no relation [{}]",
                        source.agent_type, rel.relation
                    ))
                })?;
            if !ontology.subtype_of(&target.agent_type, &def.target_type)? {
                return Err(fail(format!(
                    "relation [{}] expects target type `{}`, slot `{}` has `{}`",
                    rel.relation, def.target_type, rel.target, target.agent_type
                )));
            }
            if !edges.insert((rel.source.clone(), rel.relation.clone())) {
                return Err(fail(format!(
                    "ambiguous relation [{}] from slot `{}`",
                    rel.relation, rel.source
                )));
            }
        }
        for obs in &self.observed {
            let slot = self
                .slot(&obs.slot)
                .ok_or_else(|| fail(format!("observed slot `{}` not declared", obs.slot)))?;
            ontology.attribute(&slot.agent_type, &obs.attribute)?.ok_or_else(|| {
                fail(format!(
                    "observed attribute [{}] unknown on slot `{}`",
                    obs.attribute, obs.slot
                ))
            })?;
        }
        Ok(())
    }
}

const TIME_EPS: f64 = 1e-9;

/// Per-slot attribute valuation at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationState {
    pub step: usize,
    pub values: BTreeMap<String, BTreeMap<String, Value>>,
}

impl SimulationState {
    pub fn get(&self, slot: &str, attribute: &str) -> Option<&Value> {
        self.values.get(slot).and_then(|m| m.get(attribute))
    }
}

/// Snapshot sequence of a full run; `states[0]` is the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<SimulationState>,
}

impl Trajectory {
    pub fn value_at(&self, step: usize, slot: &str, attribute: &str) -> Option<&Value> {
        self.states.get(step).and_then(|s| s.get(slot, attribute))
    }
}

/// A scenario compiled against one worldview and one slot->entity binding:
/// per-slot rule lists, the relation index, cached timelines and the set of
/// attributes that must be seeded from observations.
pub struct Sim<'a> {
    pub scenario: &'a Scenario,
    slots: Vec<SlotPlan<'a>>,
    relations: BTreeMap<(String, String), String>,
    /// (slot, attribute) pairs read by rules or listed as observed.
    init_required: BTreeSet<(String, String)>,
    timelines: BTreeMap<String, Timeline>,
}

struct SlotPlan<'a> {
    name: String,
    rules: Vec<&'a Rule>,
}

impl<'a> Sim<'a> {
    /// Compile `scenario` under `worldview`. `binding` supplies entities for
    /// unbound slots; bound slots use their declared entity.
    pub fn new(
        scenario: &'a Scenario,
        ontology: &Ontology,
        worldview: &'a WorldView,
        kb: &KnowledgeBase,
        binding: &BTreeMap<String, String>,
    ) -> Result<Self, SimulationError> {
        let mut slots = Vec::new();
        let mut relations = BTreeMap::new();
        for rel in &scenario.relations {
            relations.insert((rel.source.clone(), rel.relation.clone()), rel.target.clone());
        }

        let mut resolved_binding: BTreeMap<String, String> = BTreeMap::new();
        for agent in &scenario.agents {
            let entity = agent
                .entity
                .clone()
                .or_else(|| binding.get(&agent.slot).cloned())
                .ok_or_else(|| SimulationError::UnboundSlot(agent.slot.clone()))?;
            resolved_binding.insert(agent.slot.clone(), entity);
            let rules = ontology.effective_rules(&agent.agent_type, worldview)?;
            slots.push(SlotPlan { name: agent.slot.clone(), rules });
        }

        let mut init_required: BTreeSet<(String, String)> = BTreeSet::new();
        for (agent, plan) in scenario.agents.iter().zip(&slots) {
            for rule in &plan.rules {
                for path in rule.read_paths() {
                    let target = resolve_slot(&relations, &agent.slot, path)?;
                    init_required.insert((target, path.attribute.clone()));
                }
            }
        }
        for obs in &scenario.observed {
            init_required.insert((obs.slot.clone(), obs.attribute.clone()));
        }

        let mut timelines = BTreeMap::new();
        for (slot, entity) in &resolved_binding {
            timelines.insert(slot.clone(), kb.timeline(entity)?);
        }

        Ok(Self { scenario, slots, relations, init_required, timelines })
    }

    /// The (slot, attribute) pairs that must be seeded from observations.
    pub fn required_attributes(&self) -> &BTreeSet<(String, String)> {
        &self.init_required
    }

    pub fn timeline(&self, slot: &str) -> Option<&Timeline> {
        self.timelines.get(slot)
    }

    /// State at step 0: the earliest observed value of every required
    /// attribute.
    pub fn initialize(&self) -> Result<SimulationState, SimulationError> {
        let mut values: BTreeMap<String, BTreeMap<String, Value>> = BTreeMap::new();
        for agent in &self.scenario.agents {
            values.insert(agent.slot.clone(), BTreeMap::new());
        }
        for (slot, attribute) in &self.init_required {
            let timeline = self.timelines.get(slot).ok_or_else(|| {
                SimulationError::UnboundSlot(slot.clone())
            })?;
            let value = timeline.earliest(attribute).ok_or_else(|| {
                SimulationError::MissingInitialValue {
                    slot: slot.clone(),
                    attribute: attribute.clone(),
                }
            })?;
            values.get_mut(slot).expect("slot map present").insert(attribute.clone(), value.clone());
        }
        Ok(SimulationState { step: 0, values })
    }

    /// Advance one step synchronously: every rule reads the `state` snapshot,
    /// writes land in the returned state.
    pub fn step(
        &self,
        state: &SimulationState,
        params: &ParameterAssignment,
        rng: &mut RandomStream,
    ) -> Result<SimulationState, SimulationError> {
        let mut next = state.clone();
        next.step = state.step + 1;
        let mut written: BTreeSet<(String, String)> = BTreeSet::new();
        for plan in &self.slots {
            let ctx = StepContext { sim: self, state, slot: &plan.name };
            for rule in &plan.rules {
                if let Some(write) = rule.apply_effect(&ctx, params, rng)? {
                    if !written.insert((plan.name.clone(), write.attribute.clone())) {
                        log::warn!(
                            "step {}: rules write [{}] on slot `{}` more than once; keeping the last write",
                            next.step,
                            write.attribute,
                            plan.name
                        );
                    }
                    next.values
                        .get_mut(&plan.name)
                        .expect("slot map present")
                        .insert(write.attribute, write.value);
                }
            }
        }
        Ok(next)
    }

    /// Run the full trajectory with an explicit stream.
    pub fn run_with_stream(
        &self,
        params: &ParameterAssignment,
        mut rng: RandomStream,
    ) -> Result<Trajectory, SimulationError> {
        let mut states = Vec::with_capacity(self.scenario.n_steps + 1);
        states.push(self.initialize()?);
        for _ in 0..self.scenario.n_steps {
            let next = self.step(states.last().expect("non-empty"), params, &mut rng)?;
            states.push(next);
        }
        Ok(Trajectory { states })
    }
}

fn resolve_slot(
    relations: &BTreeMap<(String, String), String>,
    start: &str,
    path: &AttrPath,
) -> Result<String, SimulationError> {
    let mut cur = start.to_owned();
    for rel in &path.relations {
        match relations.get(&(cur.clone(), rel.clone())) {
            Some(target) => cur = target.clone(),
            None => {
                return Err(EvalError::UnresolvedPath {
                    path: path.to_string(),
                    reason: format!("slot `{cur}` has no bound relation [{rel}]"),
                }
                .into())
            }
        }
    }
    Ok(cur)
}

struct StepContext<'a, 'b> {
    sim: &'b Sim<'a>,
    state: &'b SimulationState,
    slot: &'b str,
}

impl EvalContext for StepContext<'_, '_> {
    fn resolve(&self, path: &AttrPath) -> Result<Value, EvalError> {
        let mut cur = self.slot.to_owned();
        for rel in &path.relations {
            match self.sim.relations.get(&(cur.clone(), rel.clone())) {
                Some(target) => cur = target.clone(),
                None => {
                    return Err(EvalError::UnresolvedPath {
                        path: path.to_string(),
                        reason: format!("slot `{cur}` has no bound relation [{rel}]"),
                    })
                }
            }
        }
        self.state.get(&cur, &path.attribute).cloned().ok_or_else(|| EvalError::UnresolvedPath {
            path: path.to_string(),
            reason: format!("attribute [{}] has no value on slot `{cur}`", path.attribute),
        })
    }
}

/// Initialize a fully-bound scenario (or one with `binding` filling the
/// gaps): earliest observed value per required attribute.
pub fn initialize(
    scenario: &Scenario,
    ontology: &Ontology,
    worldview: &WorldView,
    kb: &KnowledgeBase,
    binding: &BTreeMap<String, String>,
) -> Result<SimulationState, SimulationError> {
    Sim::new(scenario, ontology, worldview, kb, binding)?.initialize()
}

/// Deterministic run of a fully-bound scenario.
pub fn run(
    scenario: &Scenario,
    ontology: &Ontology,
    worldview: &WorldView,
    kb: &KnowledgeBase,
    params: &ParameterAssignment,
    seed: u64,
) -> Result<Trajectory, SimulationError> {
    scenario.validate(ontology)?;
    let sim = Sim::new(scenario, ontology, worldview, kb, &BTreeMap::new())?;
    sim.run_with_stream(params, RandomStream::new(seed))
}

/// Per-(slot, attribute, step) outcome summary of a Monte Carlo prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictEntry {
    pub slot: String,
    pub attribute: String,
    pub step: usize,
    pub stats: PredictStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PredictStats {
    Continuous {
        mean: f64,
        /// 5%, 25%, 50%, 75% and 95% quantiles of the outcome distribution.
        quantiles: [f64; 5],
        /// Outcome histogram over the attribute's declared range.
        histogram: Vec<u64>,
        lo: f64,
        hi: f64,
    },
    Discrete {
        counts: BTreeMap<String, u64>,
    },
}

pub const PREDICT_QUANTILES: [f64; 5] = [0.05, 0.25, 0.50, 0.75, 0.95];
const PREDICT_HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReport {
    pub scenario: String,
    pub worldview: String,
    pub seed: u64,
    pub n_runs: usize,
    pub entries: Vec<PredictEntry>,
}

impl PredictReport {
    /// Quantile rows for continuous attributes as CSV
    /// (`slot,attribute,step,q05,q25,q50,q75,q95`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slot,attribute,step,q05,q25,q50,q75,q95\n");
        for entry in &self.entries {
            if let PredictStats::Continuous { quantiles, .. } = &entry.stats {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    entry.slot,
                    entry.attribute,
                    entry.step,
                    quantiles[0],
                    quantiles[1],
                    quantiles[2],
                    quantiles[3],
                    quantiles[4]
                ));
            }
        }
        out
    }
}

/// Monte Carlo prediction: each run samples one value per parameter from its
/// posterior (bin-center resolution), runs the scenario, and the per-step
/// outcome distributions are aggregated per (slot, attribute).
pub fn predict(
    scenario: &Scenario,
    ontology: &Ontology,
    worldview: &WorldView,
    kb: &KnowledgeBase,
    posteriors: &BTreeMap<String, Posterior>,
    n_runs: usize,
    seed: u64,
) -> Result<PredictReport, SimulationError> {
    scenario.validate(ontology)?;
    let sim = Sim::new(scenario, ontology, worldview, kb, &BTreeMap::new())?;

    let mut needed: BTreeSet<String> = BTreeSet::new();
    for plan_slot in &scenario.agents {
        for rule in ontology.effective_rules(&plan_slot.agent_type, worldview)? {
            for p in rule.free_parameters() {
                needed.insert(p.name.clone());
            }
        }
    }
    for name in &needed {
        if !posteriors.contains_key(name) {
            return Err(SimulationError::MissingPosterior(name.clone()));
        }
    }

    let base = RandomStream::new(seed);
    let trajectories: Vec<Trajectory> = (0..n_runs)
        .into_par_iter()
        .map(|r| {
            let run_base = base.split(r as u64);
            let mut param_stream = run_base.split(0);
            let mut params = ParameterAssignment::new();
            for name in &needed {
                params.insert(name.clone(), posteriors[name].sample(&mut param_stream));
            }
            sim.run_with_stream(&params, run_base.split(1))
        })
        .collect::<Result<_, _>>()?;

    let keys = sim.required_attributes().clone();
    let mut entries = Vec::new();
    for (slot, attribute) in keys {
        let slot_type = &scenario.slot(&slot).expect("validated").agent_type;
        let def = ontology
            .attribute(slot_type, &attribute)?
            .expect("required attributes resolve");
        for step in 0..=scenario.n_steps {
            let stats = if def.kind == AttributeKind::Continuous {
                let mut values: Vec<f64> = trajectories
                    .iter()
                    .map(|t| {
                        t.value_at(step, &slot, &attribute)
                            .and_then(Value::as_real)
                            .expect("initialized attribute present")
                    })
                    .collect();
                values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let quantiles = PREDICT_QUANTILES.map(|p| percentile(&values, p));
                let (lo, hi) = def.range.expect("continuous attrs carry a range");
                let mut histogram = vec![0u64; PREDICT_HISTOGRAM_BINS];
                for v in &values {
                    let idx = (((v - lo) / (hi - lo)) * PREDICT_HISTOGRAM_BINS as f64)
                        .floor()
                        .clamp(0.0, (PREDICT_HISTOGRAM_BINS - 1) as f64)
                        as usize;
                    histogram[idx] += 1;
                }
                PredictStats::Continuous { mean, quantiles, histogram, lo, hi }
            } else {
                let mut counts: BTreeMap<String, u64> = BTreeMap::new();
                for t in &trajectories {
                    let v = t
                        .value_at(step, &slot, &attribute)
                        .expect("initialized attribute present");
                    *counts.entry(v.to_string()).or_default() += 1;
                }
                PredictStats::Discrete { counts }
            };
            entries.push(PredictEntry { slot: slot.clone(), attribute: attribute.clone(), step, stats });
        }
    }
    Ok(PredictReport {
        scenario: scenario.id.clone(),
        worldview: worldview.id.clone(),
        seed,
        n_runs,
        entries,
    })
}

/// Linear-interpolation quantile of pre-sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

//! Versioned sets of behaviour rules with learned posteriors and an overall
//! reality-match score.
//!
//! A world view maps agent types to ordered rule lists. Forking produces an
//! independent deep copy that remembers its origin. Every rule mutation
//! clears the stored score and drops posteriors for the affected parameters;
//! staleness is detected structurally via a content hash of the rule set, so
//! a stored score always corresponds to the rule set it was computed on.

use crate::inference::Posterior;
use crate::knowledge::KnowledgeBase;
use crate::ontology::Ontology;
use crate::rules::{ParameterAssignment, Rule, RuleSpec, UnknownParameter};
use crate::scoring::{self, ScoreError};
use crate::simulation::Scenario;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldViewError {
    #[error("unknown world view `{0}`")]
    UnknownWorldView(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("rule `{0}` is already attached")]
    DuplicateRule(String),
    #[error("parameter `{name}` is declared with conflicting ranges across rules")]
    ParameterRangeConflict { name: String },
    #[error("probability parameter `{0}` is used by more than one rule; name it explicitly")]
    DuplicateProbabilityParameter(String),
    #[error("parameters without fitted posteriors: {}", .0.join(", "))]
    UnfittedParameters(Vec<String>),
    #[error("invalid world-view document: {0}")]
    InvalidDocument(String),
    #[error(transparent)]
    Rule(#[from] crate::rules::RuleError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// A score recorded on a world view, tied to the rule set it was computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredScore {
    pub value: f64,
    /// Scenario ids the score averaged over.
    pub scenarios: Vec<String>,
    /// Rule-set hash at scoring time.
    pub rules_hash: String,
}

/// A complete set of behaviour rules for all agent types, plus learned
/// posteriors. Edits invalidate derived state; scoring re-derives it.
#[derive(Debug, Clone)]
pub struct WorldView {
    pub id: String,
    /// Fork origin, if any.
    pub parent: Option<String>,
    rules: BTreeMap<String, Vec<Rule>>,
    posteriors: BTreeMap<String, Posterior>,
    score: Option<StoredScore>,
}

impl WorldView {
    pub fn new(id: &str) -> Self {
        Self {
            id: id.to_owned(),
            parent: None,
            rules: BTreeMap::new(),
            posteriors: BTreeMap::new(),
            score: None,
        }
    }

    /// Deep copy with `parent` set to this view and the score cleared.
    pub fn fork(&self, new_id: &str) -> Self {
        Self {
            id: new_id.to_owned(),
            parent: Some(self.id.clone()),
            rules: self.rules.clone(),
            posteriors: self.posteriors.clone(),
            score: None,
        }
    }

    /// Rules attached directly to `agent_type`, in attachment order.
    pub fn rules_for(&self, agent_type: &str) -> &[Rule] {
        self.rules.get(agent_type).map_or(&[], Vec::as_slice)
    }

    pub fn all_rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.values().flatten()
    }

    pub fn find_rule(&self, rule_id: &str) -> Option<&Rule> {
        self.all_rules().find(|r| r.id == rule_id)
    }

    /// Every unknown parameter appearing in any rule, keyed by name.
    pub fn parameters(&self) -> BTreeMap<String, UnknownParameter> {
        let mut out = BTreeMap::new();
        for rule in self.all_rules() {
            for p in rule.free_parameters() {
                out.entry(p.name.clone()).or_insert_with(|| p.clone());
            }
        }
        out
    }

    /// Attach a parsed rule. Parameters shared with existing rules must agree
    /// on range; probability parameters must be unique per rule.
    pub fn add_rule(&mut self, rule: Rule) -> Result<String, WorldViewError> {
        self.check_parameter_compatibility(&rule, None)?;
        if self.find_rule(&rule.id).is_some() {
            return Err(WorldViewError::DuplicateRule(rule.id));
        }
        let id = rule.id.clone();
        self.invalidate(&rule);
        self.rules.entry(rule.agent_type.clone()).or_default().push(rule);
        Ok(id)
    }

    /// Swap the rule `rule_id` for `new_rule`, keeping its position when the
    /// agent type is unchanged. Posteriors of both rules' parameters are
    /// dropped even if the replacement is textually identical.
    pub fn replace_rule(&mut self, rule_id: &str, new_rule: Rule) -> Result<String, WorldViewError> {
        self.check_parameter_compatibility(&new_rule, Some(rule_id))?;
        let (agent_type, idx) = self
            .locate(rule_id)
            .ok_or_else(|| WorldViewError::UnknownRule(rule_id.to_owned()))?;
        let old = self.rules.get_mut(&agent_type).expect("located").remove(idx);
        self.invalidate(&old);
        self.invalidate(&new_rule);
        let id = new_rule.id.clone();
        if new_rule.agent_type == agent_type {
            self.rules.get_mut(&agent_type).expect("located").insert(idx, new_rule);
        } else {
            self.rules.entry(new_rule.agent_type.clone()).or_default().push(new_rule);
        }
        Ok(id)
    }

    pub fn remove_rule(&mut self, rule_id: &str) -> Result<Rule, WorldViewError> {
        let (agent_type, idx) = self
            .locate(rule_id)
            .ok_or_else(|| WorldViewError::UnknownRule(rule_id.to_owned()))?;
        let rule = self.rules.get_mut(&agent_type).expect("located").remove(idx);
        if self.rules.get(&agent_type).is_some_and(Vec::is_empty) {
            self.rules.remove(&agent_type);
        }
        self.invalidate(&rule);
        Ok(rule)
    }

    fn locate(&self, rule_id: &str) -> Option<(String, usize)> {
        for (agent_type, rules) in &self.rules {
            if let Some(idx) = rules.iter().position(|r| r.id == rule_id) {
                return Some((agent_type.clone(), idx));
            }
        }
        None
    }

    fn check_parameter_compatibility(
        &self,
        rule: &Rule,
        ignoring: Option<&str>,
    ) -> Result<(), WorldViewError> {
        for other in self.all_rules().filter(|r| Some(r.id.as_str()) != ignoring) {
            for p in rule.free_parameters() {
                if let Some(existing) =
                    other.free_parameters().into_iter().find(|e| e.name == p.name)
                {
                    if p.is_probability || existing.is_probability {
                        return Err(WorldViewError::DuplicateProbabilityParameter(p.name.clone()));
                    }
                    if existing.lo != p.lo || existing.hi != p.hi {
                        return Err(WorldViewError::ParameterRangeConflict { name: p.name.clone() });
                    }
                }
            }
        }
        Ok(())
    }

    /// Clear derived state affected by a rule mutation.
    fn invalidate(&mut self, rule: &Rule) {
        self.score = None;
        for p in rule.free_parameters() {
            self.posteriors.remove(&p.name);
        }
    }

    pub fn posteriors(&self) -> &BTreeMap<String, Posterior> {
        &self.posteriors
    }

    /// Record a fitted posterior. Unknown parameter names are rejected so the
    /// posterior map always refers to parameters of some rule.
    pub fn set_posterior(&mut self, posterior: Posterior) -> Result<(), WorldViewError> {
        if !self.parameters().contains_key(&posterior.parameter) {
            return Err(WorldViewError::InvalidDocument(format!(
                "posterior for `{}` does not match any rule parameter",
                posterior.parameter
            )));
        }
        self.posteriors.insert(posterior.parameter.clone(), posterior);
        Ok(())
    }

    /// Most likely value per parameter (bin-center of the posterior mode).
    /// Every free parameter must have a fitted posterior.
    pub fn posterior_modes(&self) -> Result<ParameterAssignment, WorldViewError> {
        self.modes_for(self.parameters().keys().cloned())
    }

    /// Posterior modes for a subset of parameters.
    pub fn modes_for(
        &self,
        names: impl IntoIterator<Item = String>,
    ) -> Result<ParameterAssignment, WorldViewError> {
        let mut assignment = ParameterAssignment::new();
        let mut missing = Vec::new();
        for name in names {
            match self.posteriors.get(&name) {
                Some(p) => {
                    assignment.insert(name, p.mode());
                }
                None => missing.push(name),
            }
        }
        if missing.is_empty() {
            Ok(assignment)
        } else {
            Err(WorldViewError::UnfittedParameters(missing))
        }
    }

    /// The stored score, provided it still matches the current rule set.
    pub fn score(&self) -> Option<&StoredScore> {
        self.score.as_ref().filter(|s| s.rules_hash == self.rules_hash())
    }

    /// Content hash of the rule set (texts plus metadata).
    pub fn rules_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (agent_type, rules) in &self.rules {
            hasher.update(agent_type.as_bytes());
            hasher.update([0xfe]);
            for rule in rules {
                hasher.update(rule.id.as_bytes());
                hasher.update([0xff]);
            }
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        let file = WorldViewFile {
            id: self.id.clone(),
            parent: self.parent.clone(),
            rules: self
                .rules
                .values()
                .flatten()
                .map(|r| StoredRule { id: r.id.clone(), spec: r.to_spec() })
                .collect(),
            posteriors: self.posteriors.clone(),
            score: self.score.clone(),
        };
        serde_json::to_string_pretty(&file).expect("world view serializes")
    }

    pub fn from_json(json: &str, ontology: &Ontology) -> Result<Self, WorldViewError> {
        let file: WorldViewFile =
            serde_json::from_str(json).map_err(|e| WorldViewError::InvalidDocument(e.to_string()))?;
        let mut wv = WorldView::new(&file.id);
        wv.parent = file.parent;
        for stored in file.rules {
            let rule = Rule::parse(&stored.spec, ontology)?;
            wv.add_rule(rule)?;
        }
        for (_, posterior) in file.posteriors {
            wv.set_posterior(posterior)?;
        }
        // A score that no longer matches the rule set is silently dropped.
        wv.score = file.score.filter(|s| s.rules_hash == wv.rules_hash());
        Ok(wv)
    }
}

/// Mean score of a world view over a set of registered scenarios, computed at
/// the posterior-mode parameter values and stored on the view together with
/// the scenario list.
pub fn score_worldview(
    worldview: &mut WorldView,
    scenarios: &[Scenario],
    ontology: &Ontology,
    kb: &KnowledgeBase,
    n_runs: usize,
    tau: f64,
    seed: u64,
) -> Result<f64, WorldViewError> {
    let params = worldview.posterior_modes()?;
    let base = crate::rng::RandomStream::new(seed);
    let mut total = 0.0;
    for (idx, scenario) in scenarios.iter().enumerate() {
        let report = scoring::score_model(
            scenario,
            ontology,
            worldview,
            kb,
            &params,
            n_runs,
            base.split(idx as u64).as_seed(),
            tau,
        )?;
        total += report.model_score;
    }
    let value = total / scenarios.len() as f64;
    worldview.score = Some(StoredScore {
        value,
        scenarios: scenarios.iter().map(|s| s.id.clone()).collect(),
        rules_hash: worldview.rules_hash(),
    });
    Ok(value)
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredRule {
    id: String,
    #[serde(flatten)]
    spec: RuleSpec,
}

#[derive(Debug, Serialize, Deserialize)]
struct WorldViewFile {
    id: String,
    #[serde(default)]
    parent: Option<String>,
    #[serde(default)]
    rules: Vec<StoredRule>,
    #[serde(default)]
    posteriors: BTreeMap<String, Posterior>,
    #[serde(default)]
    score: Option<StoredScore>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::{AttributeDef, ROOT_ID};

    fn fixture() -> (Ontology, WorldView) {
        let mut o = Ontology::new();
        o.add_agent_type(
            "Human",
            ROOT_ID,
            vec![
                AttributeDef::continuous("Hunger", 0.0, 10.0),
                AttributeDef::continuous("Happiness", 0.0, 10.0),
            ],
            vec![],
        )
        .unwrap();
        let mut wv = WorldView::new("base");
        let rule = Rule::parse(
            &RuleSpec::certain("human", "IF [Hunger] > 4 THEN [Happiness] = [Happiness] - X")
                .with_param("X", -10.0, 10.0),
            &o,
        )
        .unwrap();
        wv.add_rule(rule).unwrap();
        (o, wv)
    }

    #[test]
    fn fork_is_a_deep_copy_with_cleared_score() {
        let (o, mut base) = fixture();
        base.score = Some(StoredScore {
            value: 0.9,
            scenarios: vec!["s".into()],
            rules_hash: base.rules_hash(),
        });
        let fork = base.fork("v2");
        assert_eq!(fork.parent.as_deref(), Some("base"));
        assert!(fork.score().is_none());
        assert_eq!(fork.rules_for("human").len(), base.rules_for("human").len());
        assert_eq!(fork.rules_hash(), base.rules_hash());

        // Mutating the fork leaves the base untouched.
        let mut fork = fork;
        let extra = Rule::parse(&RuleSpec::certain("human", "[Hunger] = [Hunger] + 1"), &o).unwrap();
        fork.add_rule(extra).unwrap();
        assert_eq!(fork.rules_for("human").len(), 2);
        assert_eq!(base.rules_for("human").len(), 1);
        assert!(base.score().is_some());
    }

    #[test]
    fn fork_chain_preserves_lineage() {
        let (_, base) = fixture();
        let a = base.fork("a");
        let b = a.fork("b");
        let c = b.fork("c");
        assert_eq!(c.parent.as_deref(), Some("b"));
        assert_eq!(b.parent.as_deref(), Some("a"));
        assert_eq!(a.parent.as_deref(), Some("base"));
    }

    #[test]
    fn effective_rules_flow_through_inheritance() {
        let (mut o, wv) = fixture();
        let politician = o.add_agent_type("Politician", "human", vec![], vec![]).unwrap();
        let rules = o.effective_rules(&politician, &wv).unwrap();
        assert_eq!(rules.len(), 1);
        // A type with no rules anywhere on its chain sees none.
        let country = o.add_agent_type("Country", ROOT_ID, vec![], vec![]).unwrap();
        assert!(o.effective_rules(&country, &wv).unwrap().is_empty());
    }

    #[test]
    fn child_rules_come_after_parent_rules() {
        let (mut o, mut wv) = fixture();
        let politician = o.add_agent_type("Politician", "human", vec![], vec![]).unwrap();
        let r = Rule::parse(
            &RuleSpec::certain(&politician, "[Happiness] = [Happiness] + 1"),
            &o,
        )
        .unwrap();
        wv.add_rule(r).unwrap();
        let rules = o.effective_rules(&politician, &wv).unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].agent_type, "human");
        assert_eq!(rules[1].agent_type, politician);
    }

    #[test]
    fn mutations_invalidate_score_and_posteriors() {
        let (o, mut wv) = fixture();
        wv.set_posterior(Posterior::uniform("X", -10.0, 10.0, 10)).unwrap();
        wv.score = Some(StoredScore {
            value: 0.5,
            scenarios: vec![],
            rules_hash: wv.rules_hash(),
        });
        let rule_id = wv.rules_for("human")[0].id.clone();

        // Replacement with identical text still invalidates.
        let same = Rule::parse(
            &RuleSpec::certain("human", "IF [Hunger] > 4 THEN [Happiness] = [Happiness] - X")
                .with_param("X", -10.0, 10.0),
            &o,
        )
        .unwrap();
        wv.replace_rule(&rule_id, same).unwrap();
        assert!(wv.score().is_none());
        assert!(wv.posteriors().is_empty());
    }

    #[test]
    fn remove_rule_removes_it_from_effective_sets() {
        let (o, mut wv) = fixture();
        let rule_id = wv.rules_for("human")[0].id.clone();
        wv.remove_rule(&rule_id).unwrap();
        assert!(o.effective_rules("human", &wv).unwrap().is_empty());
        assert!(matches!(wv.remove_rule(&rule_id), Err(WorldViewError::UnknownRule(_))));
    }

    #[test]
    fn stale_scores_are_hidden_by_hash_mismatch() {
        let (o, mut wv) = fixture();
        wv.score = Some(StoredScore {
            value: 0.7,
            scenarios: vec![],
            rules_hash: wv.rules_hash(),
        });
        assert!(wv.score().is_some());
        let extra = Rule::parse(&RuleSpec::certain("human", "[Hunger] = [Hunger] + 1"), &o).unwrap();
        wv.add_rule(extra).unwrap();
        assert!(wv.score().is_none());
    }

    #[test]
    fn shared_parameters_must_agree_on_range() {
        let (o, mut wv) = fixture();
        let conflicting = Rule::parse(
            &RuleSpec::certain("human", "[Hunger] = [Hunger] - X").with_param("X", 0.0, 1.0),
            &o,
        )
        .unwrap();
        assert!(matches!(
            wv.add_rule(conflicting),
            Err(WorldViewError::ParameterRangeConflict { .. })
        ));
        let agreeing = Rule::parse(
            &RuleSpec::certain("human", "[Hunger] = [Hunger] - X").with_param("X", -10.0, 10.0),
            &o,
        )
        .unwrap();
        assert!(wv.add_rule(agreeing).is_ok());
    }

    #[test]
    fn probability_parameters_are_exclusive_per_rule() {
        let (o, mut wv) = fixture();
        let p1 = Rule::parse(
            &RuleSpec::certain("human", "[Hunger] = [Hunger] + 1").probabilistic(),
            &o,
        )
        .unwrap();
        wv.add_rule(p1).unwrap();
        let p2 = Rule::parse(
            &RuleSpec::certain("human", "[Happiness] = [Happiness] + 1").probabilistic(),
            &o,
        )
        .unwrap();
        assert!(matches!(
            wv.add_rule(p2),
            Err(WorldViewError::DuplicateProbabilityParameter(_))
        ));
    }

    #[test]
    fn json_round_trip_preserves_rules_and_posteriors() {
        let (o, mut wv) = fixture();
        wv.set_posterior(Posterior::uniform("X", -10.0, 10.0, 100)).unwrap();
        let json = wv.to_json();
        let back = WorldView::from_json(&json, &o).unwrap();
        assert_eq!(back.id, wv.id);
        assert_eq!(back.rules_hash(), wv.rules_hash());
        assert_eq!(back.posteriors().len(), 1);
    }

    #[test]
    fn posterior_modes_require_fits() {
        let (_, wv) = fixture();
        assert!(matches!(
            wv.posterior_modes(),
            Err(WorldViewError::UnfittedParameters(names)) if names == vec!["X".to_owned()]
        ));
    }
}

//! Behaviour rules: grammar, parser, type checker and evaluator.
//!
//! A rule has an optional `IF` condition, exactly one effect assignment, an
//! optional execution probability, and any number of unknown parameters:
//!
//! ```text
//! IF [Thirst] > 4 THEN [Energy] = [Energy] - X
//! ```
//!
//! Attribute and relation names are bracketed and may contain spaces, digits
//! and parentheses. Reads may traverse up to three relations
//! (`[employer].[headquarters].[Tax rate]`); writes always target one of the
//! agent's own attributes. Bare identifiers are unknown parameters whose
//! ranges live in rule metadata, not in the text. Whether a rule is
//! probabilistic is likewise metadata; the execution probability itself is an
//! unknown parameter (default name `p_rule`) learned like any other.

mod ast;
mod eval;
mod lexer;
mod parser;
mod typecheck;

pub use ast::{AttrPath, BinOp, Expr, UnaryOp};
pub use eval::{EvalContext, EvalError};

use crate::ontology::{AttributeDef, AttributeKind, Ontology};
use crate::rng::RandomStream;
use crate::value::Value;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;
use typecheck::Checker;

/// Default range for parameters that appear in a rule text without a
/// declared range.
pub const DEFAULT_PARAM_RANGE: (f64, f64) = (-10.0, 10.0);

/// Default name for the execution-probability parameter of a probabilistic
/// rule. Worldviews reject two rules sharing a probability parameter name,
/// so multi-rule worldviews name them explicitly in metadata.
pub const DEFAULT_PROBABILITY_NAME: &str = "p_rule";

/// Values chosen for unknown parameters, keyed by parameter name.
pub type ParameterAssignment = BTreeMap<String, f64>;

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("syntax error at byte {pos}: expected {expected}, found {found}")]
    Syntax { pos: usize, expected: String, found: String },
    #[error("unknown attribute [{name}] on agent type `{agent_type}`")]
    UnknownAttribute { name: String, agent_type: String },
    #[error("unknown relation [{name}] on agent type `{agent_type}`")]
    UnknownRelation { name: String, agent_type: String },
    #[error("path {path} traverses {depth} relations (at most {max} allowed)", max = AttrPath::MAX_DEPTH)]
    PathTooDeep { path: String, depth: usize },
    #[error("type mismatch in {context}: expected {expected}, found {found}")]
    TypeMismatch { context: String, expected: String, found: String },
    #[error("declared parameter `{0}` does not appear in the rule text")]
    UnusedParameter(String),
    #[error("parameter `{0}` declared twice")]
    DuplicateParameter(String),
    #[error("invalid range [{lo}, {hi}] for parameter `{name}`")]
    InvalidRange { name: String, lo: f64, hi: f64 },
    #[error("probability_param given but the rule is not probabilistic")]
    NotProbabilistic,
    #[error(transparent)]
    Ontology(#[from] crate::ontology::OntologyError),
}

/// Declared range of one unknown parameter in rule metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

/// Source form of a rule: the DSL text plus metadata. This is the on-disk
/// schema for rule files and for rules embedded in worldview files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSpec {
    /// Agent type the rule attaches to.
    pub agent_type: String,
    pub text: String,
    #[serde(default)]
    pub probabilistic: bool,
    /// Ranges for the parameters appearing in `text`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parameters: Vec<ParamRange>,
    /// Name/range of the execution-probability parameter; probabilistic
    /// rules only. Defaults to `p_rule` over [0, 1].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability_param: Option<ParamRange>,
}

impl RuleSpec {
    pub fn certain(agent_type: &str, text: &str) -> Self {
        Self {
            agent_type: agent_type.to_owned(),
            text: text.to_owned(),
            probabilistic: false,
            parameters: Vec::new(),
            probability_param: None,
        }
    }

    pub fn with_param(mut self, name: &str, lo: f64, hi: f64) -> Self {
        self.parameters.push(ParamRange { name: name.to_owned(), lo, hi });
        self
    }

    pub fn probabilistic(mut self) -> Self {
        self.probabilistic = true;
        self
    }
}

/// An unknown parameter of a rule, with its uniform prior range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnknownParameter {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    /// Execution probabilities are constrained to [0, 1].
    pub is_probability: bool,
}

impl UnknownParameter {
    fn validate(&self) -> Result<(), RuleError> {
        let bad = || RuleError::InvalidRange { name: self.name.clone(), lo: self.lo, hi: self.hi };
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(bad());
        }
        if self.is_probability && !(self.lo >= 0.0 && self.hi <= 1.0) {
            return Err(bad());
        }
        Ok(())
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// The effect of one rule application.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeWrite {
    pub attribute: String,
    pub value: Value,
}

/// A parsed, type-checked behaviour rule. Immutable after construction and
/// safe to share across concurrent simulation runs; evaluation takes all
/// mutable state through context/rng arguments.
#[derive(Debug, Clone)]
pub struct Rule {
    /// Content hash of text + metadata; stable across processes.
    pub id: String,
    pub agent_type: String,
    pub condition: Option<Expr>,
    pub target: AttrPath,
    pub effect: Expr,
    pub probabilistic: bool,
    pub probability_param: Option<UnknownParameter>,
    /// Parameters appearing in the rule text, in first-appearance order
    /// (condition first, then effect).
    pub parameters: Vec<UnknownParameter>,
    pub source_text: String,
    /// Definition of the target attribute, for range clamping.
    target_def: AttributeDef,
}

impl Rule {
    /// Parse, resolve and type-check a rule against the ontology.
    pub fn parse(spec: &RuleSpec, ontology: &Ontology) -> Result<Rule, RuleError> {
        ontology.get(&spec.agent_type)?;
        let raw = parser::parse_text(&spec.text)?;
        let checker = Checker { ontology, agent_type: &spec.agent_type };
        checker.check_rule(raw.condition.as_ref(), &raw.target, &raw.value)?;
        let target_def = checker.resolve_path(&raw.target)?.clone();

        let mut declared: BTreeMap<&str, &ParamRange> = BTreeMap::new();
        for p in &spec.parameters {
            if declared.insert(p.name.as_str(), p).is_some() {
                return Err(RuleError::DuplicateParameter(p.name.clone()));
            }
        }

        let mut used: Vec<&str> = Vec::new();
        if let Some(cond) = &raw.condition {
            used.extend(cond.params());
        }
        for name in raw.value.params() {
            if !used.contains(&name) {
                used.push(name);
            }
        }
        let parameters: Vec<UnknownParameter> = used
            .iter()
            .map(|name| {
                let (lo, hi) = declared
                    .remove(name)
                    .map_or(DEFAULT_PARAM_RANGE, |p| (p.lo, p.hi));
                UnknownParameter { name: (*name).to_owned(), lo, hi, is_probability: false }
            })
            .collect();
        if let Some(unused) = declared.keys().next() {
            return Err(RuleError::UnusedParameter((*unused).to_owned()));
        }
        for p in &parameters {
            p.validate()?;
        }

        let probability_param = match (&spec.probability_param, spec.probabilistic) {
            (Some(_), false) => return Err(RuleError::NotProbabilistic),
            (None, false) => None,
            (given, true) => {
                let (name, lo, hi) = given.as_ref().map_or_else(
                    || (DEFAULT_PROBABILITY_NAME.to_owned(), 0.0, 1.0),
                    |p| (p.name.clone(), p.lo, p.hi),
                );
                if parameters.iter().any(|p| p.name == name) {
                    return Err(RuleError::DuplicateParameter(name));
                }
                let param = UnknownParameter { name, lo, hi, is_probability: true };
                param.validate()?;
                Some(param)
            }
        };

        let id = rule_id(spec);
        Ok(Rule {
            id,
            agent_type: spec.agent_type.clone(),
            condition: raw.condition,
            target: raw.target,
            effect: raw.value,
            probabilistic: spec.probabilistic,
            probability_param,
            parameters,
            source_text: spec.text.clone(),
            target_def,
        })
    }

    /// The rule's source form (text plus metadata), suitable for persisting.
    pub fn to_spec(&self) -> RuleSpec {
        RuleSpec {
            agent_type: self.agent_type.clone(),
            text: self.source_text.clone(),
            probabilistic: self.probabilistic,
            parameters: self
                .parameters
                .iter()
                .map(|p| ParamRange { name: p.name.clone(), lo: p.lo, hi: p.hi })
                .collect(),
            probability_param: self.probability_param.as_ref().map(|p| ParamRange {
                name: p.name.clone(),
                lo: p.lo,
                hi: p.hi,
            }),
        }
    }

    /// Canonical rendering of the rule body. Re-parsing it yields a
    /// structurally identical rule.
    pub fn canonical_text(&self) -> String {
        match &self.condition {
            Some(cond) => format!("IF {cond} THEN {} = {}", self.target, self.effect),
            None => format!("{} = {}", self.target, self.effect),
        }
    }

    /// All unknown parameters: expression parameters in appearance order,
    /// then the probability parameter if the rule is probabilistic.
    pub fn free_parameters(&self) -> Vec<&UnknownParameter> {
        self.parameters.iter().chain(self.probability_param.iter()).collect()
    }

    /// Attribute paths read by the condition and the effect value.
    pub fn read_paths(&self) -> Vec<&AttrPath> {
        let mut out = Vec::new();
        if let Some(cond) = &self.condition {
            out.extend(cond.paths());
        }
        out.extend(self.effect.paths());
        out
    }

    /// Evaluate the condition; rules without one are always applicable.
    pub fn condition_holds(
        &self,
        ctx: &dyn EvalContext,
        params: &ParameterAssignment,
    ) -> Result<bool, EvalError> {
        match &self.condition {
            None => Ok(true),
            Some(cond) => match eval::eval(cond, ctx, params)? {
                Value::Bool(b) => Ok(b),
                other => Err(EvalError::TypeError(format!(
                    "condition evaluated to {}, expected boolean",
                    other.kind_name()
                ))),
            },
        }
    }

    /// Apply the rule once. Returns `None` when the condition is false or a
    /// probabilistic rule decides not to execute (one rng draw, taken only
    /// after the condition holds). Continuous results are clamped to the
    /// target attribute's declared range.
    pub fn apply_effect(
        &self,
        ctx: &dyn EvalContext,
        params: &ParameterAssignment,
        rng: &mut RandomStream,
    ) -> Result<Option<AttributeWrite>, EvalError> {
        for p in self.free_parameters() {
            let value = *params
                .get(&p.name)
                .ok_or_else(|| EvalError::MissingParameter(p.name.clone()))?;
            if !p.contains(value) {
                return Err(EvalError::ParameterOutOfRange {
                    name: p.name.clone(),
                    value,
                    lo: p.lo,
                    hi: p.hi,
                });
            }
        }
        if !self.condition_holds(ctx, params)? {
            return Ok(None);
        }
        if let Some(prob) = &self.probability_param {
            let p = params[&prob.name];
            if !(rng.next_f64() < p) {
                return Ok(None);
            }
        }
        let raw = eval::eval(&self.effect, ctx, params)?;
        let value = match (raw, self.target_def.kind) {
            (Value::Real(x), AttributeKind::Continuous) => {
                if x.is_nan() {
                    return Err(EvalError::NonFinite { attribute: self.target.attribute.clone() });
                }
                let (lo, hi) = self.target_def.range.expect("continuous attrs carry a range");
                Value::Real(x.min(hi).max(lo))
            }
            (v, _) => v,
        };
        Ok(Some(AttributeWrite { attribute: self.target.attribute.clone(), value }))
    }
}

/// Stable identifier derived from the rule's source form.
fn rule_id(spec: &RuleSpec) -> String {
    let mut hasher = Sha256::new();
    hasher.update(spec.agent_type.as_bytes());
    hasher.update([0]);
    hasher.update(spec.text.as_bytes());
    hasher.update([spec.probabilistic as u8]);
    for p in &spec.parameters {
        hasher.update(p.name.as_bytes());
        hasher.update(p.lo.to_bits().to_le_bytes());
        hasher.update(p.hi.to_bits().to_le_bytes());
    }
    if let Some(p) = &spec.probability_param {
        hasher.update([1]);
        hasher.update(p.name.as_bytes());
        hasher.update(p.lo.to_bits().to_le_bytes());
        hasher.update(p.hi.to_bits().to_le_bytes());
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

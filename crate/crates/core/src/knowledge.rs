//! Observation store: ingests CSV datasets and serves per-entity timelines.
//!
//! Entity identity is the literal `entity_id` string; no entity resolution is
//! attempted. Times are scenario-relative reals. The store keeps raw
//! observations; duplicate `(entity, attribute, time)` points are either
//! rejected at ingest (`MergePolicy::Error`) or averaged when the timeline is
//! built (`MergePolicy::Mean`), which makes re-ingesting the same file a
//! no-op for timeline values.

use crate::ontology::{AttributeDef, AttributeKind, Ontology};
use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("value out of range at line {line}: {detail}")]
    ValueOutOfRange { line: usize, detail: String },
    #[error("duplicate observation ({entity}, {attribute}, t={time})")]
    DuplicateObservation { entity: String, attribute: String, time: f64 },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error(transparent)]
    Ontology(#[from] crate::ontology::OntologyError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid knowledge-base document: {0}")]
    InvalidDocument(String),
}

/// How duplicate `(entity, attribute, time)` points are handled at ingest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergePolicy {
    /// Reject the ingest on the first duplicate.
    Error,
    /// Keep all points; continuous duplicates are averaged in timelines.
    Mean,
}

/// One observed fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub entity_id: String,
    pub agent_type: String,
    pub attribute: String,
    pub time: f64,
    pub value: Value,
}

/// Per-entity, per-attribute time-indexed observations, duplicate-resolved
/// and sorted by strictly increasing time.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub entity_id: String,
    pub attributes: BTreeMap<String, Vec<(f64, Value)>>,
}

impl Timeline {
    /// Earliest observed value of `attribute`, if any.
    pub fn earliest(&self, attribute: &str) -> Option<&Value> {
        self.attributes.get(attribute).and_then(|seq| seq.first()).map(|(_, v)| v)
    }

    /// Value observed at `time` (within `eps`), if any.
    pub fn at(&self, attribute: &str, time: f64, eps: f64) -> Option<&Value> {
        self.attributes
            .get(attribute)?
            .iter()
            .find(|(t, _)| (t - time).abs() <= eps)
            .map(|(_, v)| v)
    }
}

const EXPECTED_HEADER: [&str; 5] = ["entity_id", "agent_type", "attribute", "time", "value"];

/// In-memory store of all ingested observations, loaded from and saved to a
/// single JSON document.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct KnowledgeBase {
    /// Entity id -> agent type id.
    entities: BTreeMap<String, String>,
    observations: Vec<Observation>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn entity_type(&self, entity: &str) -> Option<&str> {
        self.entities.get(entity).map(String::as_str)
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Ingest a CSV file with header `entity_id,agent_type,attribute,time,value`.
    /// Returns the number of observations added. The ingest is transactional:
    /// on any error the store is unchanged.
    pub fn ingest_csv(
        &mut self,
        path: &Path,
        ontology: &Ontology,
        policy: MergePolicy,
    ) -> Result<usize, KnowledgeError> {
        let file = std::fs::File::open(path)?;
        self.ingest_reader(file, ontology, policy)
    }

    pub fn ingest_reader<R: Read>(
        &mut self,
        reader: R,
        ontology: &Ontology,
        policy: MergePolicy,
    ) -> Result<usize, KnowledgeError> {
        let mut csv_reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = csv_reader.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != EXPECTED_HEADER {
            return Err(KnowledgeError::Schema {
                line: 1,
                message: format!(
                    "expected header `{}`, found `{}`",
                    EXPECTED_HEADER.join(","),
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }

        let mut staged: Vec<Observation> = Vec::new();
        let mut staged_types: BTreeMap<String, String> = BTreeMap::new();
        for (idx, record) in csv_reader.records().enumerate() {
            let line = idx + 2;
            let record = record?;
            if record.len() != 5 {
                return Err(KnowledgeError::Schema {
                    line,
                    message: format!("expected 5 fields, found {}", record.len()),
                });
            }
            let entity_id = record[0].to_owned();
            let agent_type = record[1].to_owned();
            let attribute = record[2].to_owned();
            let time: f64 = record[3].parse().map_err(|_| KnowledgeError::Schema {
                line,
                message: format!("time `{}` is not a number", &record[3]),
            })?;
            if !time.is_finite() {
                return Err(KnowledgeError::Schema { line, message: "time must be finite".into() });
            }
            if !ontology.contains(&agent_type) {
                return Err(KnowledgeError::Schema {
                    line,
                    message: format!("unknown agent type `{agent_type}`"),
                });
            }
            let def = ontology.attribute(&agent_type, &attribute)?.ok_or_else(|| {
                KnowledgeError::Schema {
                    line,
                    message: format!("agent type `{agent_type}` has no attribute `{attribute}`"),
                }
            })?;
            let declared = self
                .entities
                .get(&entity_id)
                .or_else(|| staged_types.get(&entity_id));
            match declared {
                Some(t) if *t != agent_type => {
                    return Err(KnowledgeError::Schema {
                        line,
                        message: format!(
                            "entity `{entity_id}` already registered with agent type `{t}`"
                        ),
                    })
                }
                Some(_) => {}
                None => {
                    staged_types.insert(entity_id.clone(), agent_type.clone());
                }
            }
            let value = parse_value(&record[4], def, line)?;
            staged.push(Observation { entity_id, agent_type, attribute, time, value });
        }

        self.check_duplicates(&staged, policy)?;
        for (entity, ty) in staged_types {
            self.entities.insert(entity, ty);
        }
        let count = staged.len();
        self.observations.extend(staged);
        Ok(count)
    }

    /// Insert observations directly (used by data generators and tests).
    pub fn insert(
        &mut self,
        observations: Vec<Observation>,
        ontology: &Ontology,
        policy: MergePolicy,
    ) -> Result<usize, KnowledgeError> {
        for (i, obs) in observations.iter().enumerate() {
            let def = ontology.attribute(&obs.agent_type, &obs.attribute)?.ok_or_else(|| {
                KnowledgeError::Schema {
                    line: i,
                    message: format!(
                        "agent type `{}` has no attribute `{}`",
                        obs.agent_type, obs.attribute
                    ),
                }
            })?;
            check_conforms(&obs.value, def, i)?;
        }
        self.check_duplicates(&observations, policy)?;
        for obs in &observations {
            self.entities.entry(obs.entity_id.clone()).or_insert_with(|| obs.agent_type.clone());
        }
        let count = observations.len();
        self.observations.extend(observations);
        Ok(count)
    }

    fn check_duplicates(
        &self,
        staged: &[Observation],
        policy: MergePolicy,
    ) -> Result<(), KnowledgeError> {
        let mut keys: HashSet<(String, String, u64)> = self
            .observations
            .iter()
            .map(|o| (o.entity_id.clone(), o.attribute.clone(), o.time.to_bits()))
            .collect();
        for obs in staged {
            let key = (obs.entity_id.clone(), obs.attribute.clone(), obs.time.to_bits());
            let dup = !keys.insert(key);
            if !dup {
                continue;
            }
            match policy {
                MergePolicy::Error => {
                    return Err(KnowledgeError::DuplicateObservation {
                        entity: obs.entity_id.clone(),
                        attribute: obs.attribute.clone(),
                        time: obs.time,
                    })
                }
                MergePolicy::Mean => {
                    // Only continuous values can be averaged; any conflicting
                    // non-continuous duplicate is a hard error.
                    if !matches!(obs.value, Value::Real(_)) {
                        let conflicting = self
                            .observations
                            .iter()
                            .chain(staged.iter())
                            .filter(|o| {
                                o.entity_id == obs.entity_id
                                    && o.attribute == obs.attribute
                                    && o.time.to_bits() == obs.time.to_bits()
                            })
                            .any(|o| o.value != obs.value);
                        if conflicting {
                            return Err(KnowledgeError::DuplicateObservation {
                                entity: obs.entity_id.clone(),
                                attribute: obs.attribute.clone(),
                                time: obs.time,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// The complete merged timeline of one entity.
    pub fn timeline(&self, entity: &str) -> Result<Timeline, KnowledgeError> {
        if !self.entities.contains_key(entity) {
            return Err(KnowledgeError::UnknownEntity(entity.to_owned()));
        }
        let mut grouped: BTreeMap<String, BTreeMap<u64, Vec<&Value>>> = BTreeMap::new();
        for obs in self.observations.iter().filter(|o| o.entity_id == entity) {
            grouped
                .entry(obs.attribute.clone())
                .or_default()
                .entry(obs.time.to_bits())
                .or_default()
                .push(&obs.value);
        }
        let mut attributes = BTreeMap::new();
        for (attr, by_time) in grouped {
            let mut seq: Vec<(f64, Value)> = by_time
                .into_iter()
                .map(|(bits, values)| (f64::from_bits(bits), resolve_duplicates(&values)))
                .collect();
            seq.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
            attributes.insert(attr, seq);
        }
        Ok(Timeline { entity_id: entity.to_owned(), attributes })
    }

    /// All entities whose agent type is `type_id` or a subtype of it,
    /// in id order.
    pub fn entities_of_type(
        &self,
        type_id: &str,
        ontology: &Ontology,
    ) -> Result<Vec<String>, KnowledgeError> {
        ontology.get(type_id)?;
        let mut out = Vec::new();
        for (entity, ty) in &self.entities {
            if ontology.subtype_of(ty, type_id)? {
                out.push(entity.clone());
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("knowledge base serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, KnowledgeError> {
        serde_json::from_str(json).map_err(|e| KnowledgeError::InvalidDocument(e.to_string()))
    }

    /// Content fingerprint of the store, used as a snapshot id in evidence
    /// records.
    pub fn snapshot_id(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for obs in &self.observations {
            hasher.update(obs.entity_id.as_bytes());
            hasher.update([0]);
            hasher.update(obs.attribute.as_bytes());
            hasher.update(obs.time.to_bits().to_le_bytes());
            hasher.update(format!("{:?}", obs.value).as_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn resolve_duplicates(values: &[&Value]) -> Value {
    if values.len() == 1 {
        return values[0].clone();
    }
    match values[0] {
        Value::Real(_) => {
            let sum: f64 = values.iter().filter_map(|v| v.as_real()).sum();
            Value::Real(sum / values.len() as f64)
        }
        // Non-continuous duplicates are guaranteed equal by ingest checks.
        other => other.clone(),
    }
}

fn parse_value(raw: &str, def: &AttributeDef, line: usize) -> Result<Value, KnowledgeError> {
    match def.kind {
        AttributeKind::Continuous => {
            let x: f64 = raw.parse().map_err(|_| KnowledgeError::Schema {
                line,
                message: format!("value `{raw}` is not a number for continuous [{}]", def.name),
            })?;
            let value = Value::Real(x);
            check_conforms(&value, def, line)?;
            Ok(value)
        }
        AttributeKind::Boolean => match raw {
            "True" => Ok(Value::Bool(true)),
            "False" => Ok(Value::Bool(false)),
            _ => Err(KnowledgeError::Schema {
                line,
                message: format!("boolean [{}] must be True or False, found `{raw}`", def.name),
            }),
        },
        AttributeKind::Categorical | AttributeKind::Text => {
            let value = Value::Text(raw.to_owned());
            check_conforms(&value, def, line)?;
            Ok(value)
        }
    }
}

fn check_conforms(value: &Value, def: &AttributeDef, line: usize) -> Result<(), KnowledgeError> {
    let fail = |detail: String| KnowledgeError::ValueOutOfRange { line, detail };
    match (def.kind, value) {
        (AttributeKind::Continuous, Value::Real(x)) => {
            let (lo, hi) = def.range.expect("continuous attrs carry a range");
            if !x.is_finite() || *x < lo || *x > hi {
                Err(fail(format!("[{}] = {x} outside [{lo}, {hi}]", def.name)))
            } else {
                Ok(())
            }
        }
        (AttributeKind::Boolean, Value::Bool(_)) => Ok(()),
        (AttributeKind::Categorical, Value::Text(s)) => {
            if def.categories.iter().any(|c| c == s) {
                Ok(())
            } else {
                Err(fail(format!("[{}] = `{s}` not among {:?}", def.name, def.categories)))
            }
        }
        (AttributeKind::Text, Value::Text(_)) => Ok(()),
        (kind, v) => Err(fail(format!(
            "[{}] expects {kind:?} value, found {}",
            def.name,
            v.kind_name()
        ))),
    }
}

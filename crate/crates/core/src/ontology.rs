//! Taxonomic tree of agent types with inherited attributes, relations and
//! behaviour rules.
//!
//! Every ontology is anchored by an implicit root type `thing` that carries
//! no attributes. Each other type has exactly one parent, and its *effective*
//! attribute/relation/rule sets are the union of its own definitions with
//! those of all ancestors, in root-first order. Name shadowing is rejected:
//! a type may not redefine an inherited attribute or relation.

use crate::rules::Rule;
use crate::worldview::WorldView;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Identifier of the implicit root type.
pub const ROOT_ID: &str = "thing";

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("unknown agent type `{0}`")]
    UnknownType(String),
    #[error("unknown parent type `{0}`")]
    UnknownParent(String),
    #[error("attribute `{name}` already defined on `{type_id}` or one of its ancestors")]
    DuplicateAttributeName { type_id: String, name: String },
    #[error("relation `{name}` already defined on `{type_id}` or one of its ancestors")]
    DuplicateRelationName { type_id: String, name: String },
    #[error("relation `{relation}` targets unknown agent type `{target}`")]
    UnknownRelationTarget { relation: String, target: String },
    #[error("invalid attribute `{name}`: {reason}")]
    InvalidAttribute { name: String, reason: String },
    #[error("invalid ontology document: {0}")]
    InvalidDocument(String),
}

/// Kind of an attribute, fixing which values and operations are admissible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Continuous,
    Boolean,
    Categorical,
    Text,
}

/// Definition of one attribute on an agent type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub kind: AttributeKind,
    /// Declared `[lo, hi]` bounds; continuous attributes only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
    /// Admissible values; categorical attributes only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

impl AttributeDef {
    pub fn continuous(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_owned(),
            kind: AttributeKind::Continuous,
            range: Some((lo, hi)),
            categories: Vec::new(),
            units: None,
        }
    }

    pub fn boolean(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            kind: AttributeKind::Boolean,
            range: None,
            categories: Vec::new(),
            units: None,
        }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        Self {
            name: name.to_owned(),
            kind: AttributeKind::Categorical,
            range: None,
            categories: categories.iter().map(|c| (*c).to_owned()).collect(),
            units: None,
        }
    }

    pub fn text(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            kind: AttributeKind::Text,
            range: None,
            categories: Vec::new(),
            units: None,
        }
    }

    fn validate(&self) -> Result<(), OntologyError> {
        let err = |reason: &str| OntologyError::InvalidAttribute {
            name: self.name.clone(),
            reason: reason.to_owned(),
        };
        if self.name.is_empty() {
            return Err(err("empty name"));
        }
        match self.kind {
            AttributeKind::Continuous => match self.range {
                Some((lo, hi)) if lo < hi && lo.is_finite() && hi.is_finite() => Ok(()),
                Some(_) => Err(err("range must satisfy lo < hi with finite bounds")),
                None => Err(err("continuous attribute requires a range")),
            },
            AttributeKind::Categorical => {
                if self.categories.is_empty() {
                    Err(err("categorical attribute requires at least one category"))
                } else {
                    Ok(())
                }
            }
            _ => {
                if self.range.is_some() || !self.categories.is_empty() {
                    Err(err("range/categories only apply to continuous/categorical kinds"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Definition of one relation on an agent type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationDef {
    pub name: String,
    /// Agent type id the relation points at.
    pub target_type: String,
}

impl RelationDef {
    pub fn new(name: &str, target_type: &str) -> Self {
        Self { name: name.to_owned(), target_type: target_type.to_owned() }
    }
}

/// One node of the ontology tree. `attributes`/`relations` hold only the
/// type's own definitions; inherited ones come from the ancestor chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentType {
    pub id: String,
    pub name: String,
    /// Absent only for the root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default)]
    pub attributes: Vec<AttributeDef>,
    #[serde(default)]
    pub relations: Vec<RelationDef>,
}

/// The agent-type tree. Reads are cheap and may run concurrently; mutations
/// go through `&mut self` and are serialized by the borrow checker.
#[derive(Debug, Clone)]
pub struct Ontology {
    types: Vec<AgentType>,
    index: BTreeMap<String, usize>,
}

impl Default for Ontology {
    fn default() -> Self {
        Self::new()
    }
}

impl Ontology {
    /// Ontology containing only the implicit root type.
    pub fn new() -> Self {
        let root = AgentType {
            id: ROOT_ID.to_owned(),
            name: "Thing".to_owned(),
            parent: None,
            attributes: Vec::new(),
            relations: Vec::new(),
        };
        let mut index = BTreeMap::new();
        index.insert(root.id.clone(), 0);
        Self { types: vec![root], index }
    }

    pub fn root(&self) -> &AgentType {
        &self.types[0]
    }

    pub fn get(&self, id: &str) -> Result<&AgentType, OntologyError> {
        self.index
            .get(id)
            .map(|&i| &self.types[i])
            .ok_or_else(|| OntologyError::UnknownType(id.to_owned()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// All types in insertion order (root first).
    pub fn types(&self) -> &[AgentType] {
        &self.types
    }

    /// Insert a new leaf type under `parent`. The id is a slug of the name,
    /// suffixed if taken; existing types keep their effective sets unchanged.
    pub fn add_agent_type(
        &mut self,
        name: &str,
        parent: &str,
        attributes: Vec<AttributeDef>,
        relations: Vec<RelationDef>,
    ) -> Result<String, OntologyError> {
        if !self.contains(parent) {
            return Err(OntologyError::UnknownParent(parent.to_owned()));
        }
        let id = self.fresh_id(name);

        let inherited_attrs: Vec<String> =
            self.effective_attributes(parent)?.iter().map(|a| a.name.clone()).collect();
        let mut seen = inherited_attrs;
        for attr in &attributes {
            attr.validate()?;
            if seen.iter().any(|n| n == &attr.name) {
                return Err(OntologyError::DuplicateAttributeName {
                    type_id: id,
                    name: attr.name.clone(),
                });
            }
            seen.push(attr.name.clone());
        }

        let mut seen_rels: Vec<String> =
            self.effective_relations(parent)?.iter().map(|r| r.name.clone()).collect();
        for rel in &relations {
            if seen_rels.iter().any(|n| n == &rel.name) {
                return Err(OntologyError::DuplicateRelationName {
                    type_id: id,
                    name: rel.name.clone(),
                });
            }
            if !self.contains(&rel.target_type) && rel.target_type != id {
                return Err(OntologyError::UnknownRelationTarget {
                    relation: rel.name.clone(),
                    target: rel.target_type.clone(),
                });
            }
            seen_rels.push(rel.name.clone());
        }

        let node = AgentType {
            id: id.clone(),
            name: name.to_owned(),
            parent: Some(parent.to_owned()),
            attributes,
            relations,
        };
        self.index.insert(id.clone(), self.types.len());
        self.types.push(node);
        Ok(id)
    }

    /// Chain from the root down to `id`, inclusive.
    pub fn path_to_root(&self, id: &str) -> Result<Vec<&AgentType>, OntologyError> {
        let mut chain = Vec::new();
        let mut cur = self.get(id)?;
        loop {
            chain.push(cur);
            match &cur.parent {
                Some(p) => cur = self.get(p)?,
                None => break,
            }
        }
        chain.reverse();
        Ok(chain)
    }

    /// Union of own attributes along the root path, root-first.
    pub fn effective_attributes(&self, id: &str) -> Result<Vec<&AttributeDef>, OntologyError> {
        Ok(self.path_to_root(id)?.iter().flat_map(|t| t.attributes.iter()).collect())
    }

    /// Union of own relations along the root path, root-first.
    pub fn effective_relations(&self, id: &str) -> Result<Vec<&RelationDef>, OntologyError> {
        Ok(self.path_to_root(id)?.iter().flat_map(|t| t.relations.iter()).collect())
    }

    /// Attribute definition visible on `id` (own or inherited).
    pub fn attribute(&self, id: &str, attr: &str) -> Result<Option<&AttributeDef>, OntologyError> {
        Ok(self.effective_attributes(id)?.into_iter().find(|a| a.name == attr))
    }

    /// Relation definition visible on `id` (own or inherited).
    pub fn relation(&self, id: &str, rel: &str) -> Result<Option<&RelationDef>, OntologyError> {
        Ok(self.effective_relations(id)?.into_iter().find(|r| r.name == rel))
    }

    /// Rules attached (in `worldview`) to each type on the root path of `id`,
    /// root-first, each type's rules in attachment order.
    pub fn effective_rules<'w>(
        &self,
        id: &str,
        worldview: &'w WorldView,
    ) -> Result<Vec<&'w Rule>, OntologyError> {
        Ok(self
            .path_to_root(id)?
            .iter()
            .flat_map(|t| worldview.rules_for(&t.id))
            .collect())
    }

    /// True iff `b` lies on the root path of `a` (reflexive).
    pub fn subtype_of(&self, a: &str, b: &str) -> Result<bool, OntologyError> {
        self.get(b)?;
        Ok(self.path_to_root(a)?.iter().any(|t| t.id == b))
    }

    /// Serialize as a JSON array of agent-type records.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.types).expect("ontology serializes")
    }

    /// Parse and validate a JSON array of agent-type records.
    pub fn from_json(json: &str) -> Result<Self, OntologyError> {
        let types: Vec<AgentType> =
            serde_json::from_str(json).map_err(|e| OntologyError::InvalidDocument(e.to_string()))?;
        Self::from_records(types)
    }

    fn from_records(types: Vec<AgentType>) -> Result<Self, OntologyError> {
        let mut ontology = Ontology::new();
        let mut roots = 0;
        for record in &types {
            if record.parent.is_none() {
                roots += 1;
                if record.id != ROOT_ID {
                    return Err(OntologyError::InvalidDocument(format!(
                        "unexpected root type `{}`",
                        record.id
                    )));
                }
            }
        }
        if roots != 1 {
            return Err(OntologyError::InvalidDocument(format!(
                "expected exactly one root, found {roots}"
            )));
        }
        // Re-insert children; input order must be parent-before-child, which
        // holds for every document this library writes.
        for record in types.into_iter().filter(|t| t.parent.is_some()) {
            let parent = record.parent.clone().expect("filtered");
            if !ontology.contains(&parent) {
                return Err(OntologyError::InvalidDocument(format!(
                    "type `{}` references parent `{parent}` before its definition",
                    record.id
                )));
            }
            if ontology.contains(&record.id) {
                return Err(OntologyError::InvalidDocument(format!(
                    "duplicate type id `{}`",
                    record.id
                )));
            }
            for attr in &record.attributes {
                attr.validate()?;
            }
            ontology.index.insert(record.id.clone(), ontology.types.len());
            ontology.types.push(record);
        }
        Ok(ontology)
    }

    fn fresh_id(&self, name: &str) -> String {
        let base = slugify(name);
        if !self.contains(&base) {
            return base;
        }
        let mut n = 2;
        loop {
            let candidate = format!("{base}-{n}");
            if !self.contains(&candidate) {
                return candidate;
            }
            n += 1;
        }
    }
}

/// Lowercase, alphanumeric-and-dash form of a display name.
pub fn slugify(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut dash = false;
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
            dash = false;
        } else if !dash && !out.is_empty() {
            out.push('-');
            dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        out.push_str("type");
    }
    out
}

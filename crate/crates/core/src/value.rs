//! Runtime values carried by attributes, observations and simulation state.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A single attribute value.
///
/// Categorical values are carried as [`Value::Text`]; the owning
/// `AttributeDef` decides which strings are admissible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Real(f64),
    Text(String),
}

impl Value {
    /// Short kind label used in error messages.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "boolean",
            Value::Real(_) => "real",
            Value::Text(_) => "text",
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Booleans render as the DSL / CSV literals.
            Value::Bool(true) => write!(f, "True"),
            Value::Bool(false) => write!(f, "False"),
            Value::Real(x) => write!(f, "{x}"),
            Value::Text(s) => write!(f, "{s}"),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Real(x)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_untagged() {
        let vals = vec![Value::Real(3.5), Value::Bool(true), Value::Text("LKA".into())];
        let json = serde_json::to_string(&vals).unwrap();
        assert_eq!(json, r#"[3.5,true,"LKA"]"#);
        let back: Vec<Value> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vals);
    }

    #[test]
    fn display_uses_dsl_literals() {
        assert_eq!(Value::Bool(true).to_string(), "True");
        assert_eq!(Value::Real(4.0).to_string(), "4");
        assert_eq!(Value::Real(3.281).to_string(), "3.281");
    }
}

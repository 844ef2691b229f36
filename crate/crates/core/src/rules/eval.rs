//! Expression evaluation against a resolution context.

use super::ast::{AttrPath, BinOp, Expr, UnaryOp};
use crate::rules::ParameterAssignment;
use crate::value::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot resolve path {path}: {reason}")]
    UnresolvedPath { path: String, reason: String },
    #[error("no value assigned to parameter `{0}`")]
    MissingParameter(String),
    #[error("parameter `{name}` = {value} outside its declared range [{lo}, {hi}]")]
    ParameterOutOfRange { name: String, value: f64, lo: f64, hi: f64 },
    #[error("effect on [{attribute}] produced a non-finite value")]
    NonFinite { attribute: String },
    #[error("type error at runtime: {0}")]
    TypeError(String),
}

/// Supplies attribute values during rule evaluation. The simulation engine
/// implements this over its per-step state snapshot; tests use simple maps.
pub trait EvalContext {
    fn resolve(&self, path: &AttrPath) -> Result<Value, EvalError>;
}

pub fn eval(
    expr: &Expr,
    ctx: &dyn EvalContext,
    params: &ParameterAssignment,
) -> Result<Value, EvalError> {
    match expr {
        Expr::Real(x) => Ok(Value::Real(*x)),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::Text(s) => Ok(Value::Text(s.clone())),
        Expr::Attr(path) => ctx.resolve(path),
        Expr::Param(name) => params
            .get(name)
            .map(|x| Value::Real(*x))
            .ok_or_else(|| EvalError::MissingParameter(name.clone())),
        Expr::Unary(UnaryOp::Neg, inner) => {
            let x = real(eval(inner, ctx, params)?, "negation")?;
            Ok(Value::Real(-x))
        }
        Expr::Unary(UnaryOp::Not, inner) => {
            let b = boolean(eval(inner, ctx, params)?, "NOT")?;
            Ok(Value::Bool(!b))
        }
        Expr::Binary(op, lhs, rhs) => {
            // Strict evaluation on both sides: resolution errors surface
            // regardless of the other operand's value.
            let l = eval(lhs, ctx, params)?;
            let r = eval(rhs, ctx, params)?;
            apply_binary(*op, l, r)
        }
    }
}

fn apply_binary(op: BinOp, l: Value, r: Value) -> Result<Value, EvalError> {
    match op {
        BinOp::Add => Ok(Value::Real(real(l, "+")? + real(r, "+")?)),
        BinOp::Sub => Ok(Value::Real(real(l, "-")? - real(r, "-")?)),
        BinOp::Mul => Ok(Value::Real(real(l, "*")? * real(r, "*")?)),
        BinOp::Div => Ok(Value::Real(real(l, "/")? / real(r, "/")?)),
        BinOp::Gt => Ok(Value::Bool(real(l, ">")? > real(r, ">")?)),
        BinOp::Lt => Ok(Value::Bool(real(l, "<")? < real(r, "<")?)),
        BinOp::Ge => Ok(Value::Bool(real(l, ">=")? >= real(r, ">=")?)),
        BinOp::Le => Ok(Value::Bool(real(l, "<=")? <= real(r, "<=")?)),
        BinOp::Eq => Ok(Value::Bool(l == r)),
        BinOp::Ne => Ok(Value::Bool(l != r)),
        BinOp::And => Ok(Value::Bool(boolean(l, "AND")? && boolean(r, "AND")?)),
        BinOp::Or => Ok(Value::Bool(boolean(l, "OR")? || boolean(r, "OR")?)),
    }
}

fn real(v: Value, context: &str) -> Result<f64, EvalError> {
    v.as_real()
        .ok_or_else(|| EvalError::TypeError(format!("`{context}` needs a real, got {}", v.kind_name())))
}

fn boolean(v: Value, context: &str) -> Result<bool, EvalError> {
    v.as_bool()
        .ok_or_else(|| EvalError::TypeError(format!("`{context}` needs a boolean, got {}", v.kind_name())))
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use std::collections::BTreeMap;

    /// Map-backed context keyed by `rel.rel.attr`.
    pub struct MapContext(pub BTreeMap<String, Value>);

    impl MapContext {
        pub fn key(path: &AttrPath) -> String {
            let mut parts = path.relations.clone();
            parts.push(path.attribute.clone());
            parts.join(".")
        }
    }

    impl EvalContext for MapContext {
        fn resolve(&self, path: &AttrPath) -> Result<Value, EvalError> {
            self.0.get(&Self::key(path)).cloned().ok_or_else(|| EvalError::UnresolvedPath {
                path: path.to_string(),
                reason: "not present in context".into(),
            })
        }
    }
}

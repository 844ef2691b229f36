//! Name resolution and type checking of rule expressions against an agent
//! type's effective attributes and relations.
//!
//! Typing discipline: continuous attributes participate in arithmetic and in
//! all comparisons; boolean, categorical and text attributes participate in
//! equality only. Unknown parameters are real-valued. Conditions must be
//! boolean. Effect values must match the target attribute's kind, and for
//! non-continuous targets only literal assignment is supported.

use super::ast::{AttrPath, BinOp, Expr, UnaryOp};
use super::RuleError;
use crate::ontology::{AttributeDef, AttributeKind, Ontology};

/// Static type of an expression node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExprType {
    Real,
    Bool,
    /// Text and categorical values share one static type.
    Str,
}

impl ExprType {
    fn of_kind(kind: AttributeKind) -> Self {
        match kind {
            AttributeKind::Continuous => ExprType::Real,
            AttributeKind::Boolean => ExprType::Bool,
            AttributeKind::Categorical | AttributeKind::Text => ExprType::Str,
        }
    }

    fn describe(self) -> &'static str {
        match self {
            ExprType::Real => "continuous",
            ExprType::Bool => "boolean",
            ExprType::Str => "text/categorical",
        }
    }
}

pub struct Checker<'a> {
    pub ontology: &'a Ontology,
    pub agent_type: &'a str,
}

impl<'a> Checker<'a> {
    /// Resolve a path from the rule's agent type, walking declared relation
    /// targets, and return the terminal attribute definition.
    pub fn resolve_path(&self, path: &AttrPath) -> Result<&'a AttributeDef, RuleError> {
        if path.depth() > AttrPath::MAX_DEPTH {
            return Err(RuleError::PathTooDeep { path: path.to_string(), depth: path.depth() });
        }
        let mut cur = self.agent_type.to_owned();
        for rel in &path.relations {
            let def = self
                .ontology
                .relation(&cur, rel)?
                .ok_or_else(|| RuleError::UnknownRelation {
                    name: rel.clone(),
                    agent_type: cur.clone(),
                })?;
            cur = def.target_type.clone();
        }
        self.ontology
            .attribute(&cur, &path.attribute)?
            .ok_or_else(|| RuleError::UnknownAttribute {
                name: path.attribute.clone(),
                agent_type: cur,
            })
    }

    pub fn infer(&self, expr: &Expr) -> Result<ExprType, RuleError> {
        match expr {
            Expr::Real(_) => Ok(ExprType::Real),
            Expr::Bool(_) => Ok(ExprType::Bool),
            Expr::Text(_) => Ok(ExprType::Str),
            Expr::Param(_) => Ok(ExprType::Real),
            Expr::Attr(path) => Ok(ExprType::of_kind(self.resolve_path(path)?.kind)),
            Expr::Unary(UnaryOp::Neg, inner) => {
                self.expect(inner, ExprType::Real, "arithmetic negation")?;
                Ok(ExprType::Real)
            }
            Expr::Unary(UnaryOp::Not, inner) => {
                self.expect(inner, ExprType::Bool, "NOT")?;
                Ok(ExprType::Bool)
            }
            Expr::Binary(op, lhs, rhs) => self.infer_binary(*op, lhs, rhs),
        }
    }

    fn infer_binary(&self, op: BinOp, lhs: &Expr, rhs: &Expr) -> Result<ExprType, RuleError> {
        match op {
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => {
                self.expect(lhs, ExprType::Real, op.symbol())?;
                self.expect(rhs, ExprType::Real, op.symbol())?;
                Ok(ExprType::Real)
            }
            BinOp::Gt | BinOp::Lt | BinOp::Ge | BinOp::Le => {
                self.expect(lhs, ExprType::Real, op.symbol())?;
                self.expect(rhs, ExprType::Real, op.symbol())?;
                Ok(ExprType::Bool)
            }
            BinOp::Eq | BinOp::Ne => {
                let lt = self.infer(lhs)?;
                let rt = self.infer(rhs)?;
                if lt != rt {
                    return Err(RuleError::TypeMismatch {
                        context: format!("`{}` comparison", op.symbol()),
                        expected: lt.describe().to_owned(),
                        found: rt.describe().to_owned(),
                    });
                }
                Ok(ExprType::Bool)
            }
            BinOp::And | BinOp::Or => {
                self.expect(lhs, ExprType::Bool, op.symbol())?;
                self.expect(rhs, ExprType::Bool, op.symbol())?;
                Ok(ExprType::Bool)
            }
        }
    }

    fn expect(&self, expr: &Expr, want: ExprType, context: &str) -> Result<(), RuleError> {
        let got = self.infer(expr)?;
        if got != want {
            return Err(RuleError::TypeMismatch {
                context: context.to_owned(),
                expected: want.describe().to_owned(),
                found: got.describe().to_owned(),
            });
        }
        Ok(())
    }

    /// Check the whole rule body: condition boolean, target an own attribute,
    /// and the effect value compatible with the target's kind.
    pub fn check_rule(
        &self,
        condition: Option<&Expr>,
        target: &AttrPath,
        value: &Expr,
    ) -> Result<(), RuleError> {
        if let Some(cond) = condition {
            self.expect(cond, ExprType::Bool, "IF condition")?;
        }
        if target.depth() != 0 {
            return Err(RuleError::TypeMismatch {
                context: "effect target".to_owned(),
                expected: "an own attribute (no relation path)".to_owned(),
                found: target.to_string(),
            });
        }
        let def = self.resolve_path(target)?;
        match def.kind {
            AttributeKind::Continuous => {
                self.expect(value, ExprType::Real, "effect value")?;
            }
            AttributeKind::Boolean => match value {
                Expr::Bool(_) => {}
                _ => {
                    return Err(RuleError::TypeMismatch {
                        context: format!("assignment to boolean attribute [{}]", def.name),
                        expected: "True or False literal".to_owned(),
                        found: value.to_string(),
                    })
                }
            },
            AttributeKind::Categorical => match value {
                Expr::Text(s) if def.categories.iter().any(|c| c == s) => {}
                Expr::Text(s) => {
                    return Err(RuleError::TypeMismatch {
                        context: format!("assignment to categorical attribute [{}]", def.name),
                        expected: format!("one of {:?}", def.categories),
                        found: format!("\"{s}\""),
                    })
                }
                _ => {
                    return Err(RuleError::TypeMismatch {
                        context: format!("assignment to categorical attribute [{}]", def.name),
                        expected: "a string literal".to_owned(),
                        found: value.to_string(),
                    })
                }
            },
            AttributeKind::Text => match value {
                Expr::Text(_) => {}
                _ => {
                    return Err(RuleError::TypeMismatch {
                        context: format!("assignment to text attribute [{}]", def.name),
                        expected: "a string literal".to_owned(),
                        found: value.to_string(),
                    })
                }
            },
        }
        Ok(())
    }
}

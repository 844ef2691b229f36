//! Expression trees for the rule DSL and their canonical printer.

use std::fmt;

/// Reference to an attribute, optionally reached through a chain of
/// relations (at most [`AttrPath::MAX_DEPTH`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrPath {
    pub relations: Vec<String>,
    pub attribute: String,
}

impl AttrPath {
    pub const MAX_DEPTH: usize = 3;

    /// Path to one of the agent's own attributes.
    pub fn own(attribute: &str) -> Self {
        Self { relations: Vec::new(), attribute: attribute.to_owned() }
    }

    pub fn depth(&self) -> usize {
        self.relations.len()
    }
}

impl fmt::Display for AttrPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rel in &self.relations {
            write!(f, "[{rel}].")?;
        }
        write!(f, "[{}]", self.attribute)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Gt,
    Lt,
    Ge,
    Le,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Gt => ">",
            BinOp::Lt => "<",
            BinOp::Ge => ">=",
            BinOp::Le => "<=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "AND",
            BinOp::Or => "OR",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Gt | BinOp::Lt | BinOp::Ge | BinOp::Le | BinOp::Eq | BinOp::Ne => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }

    pub fn is_arithmetic(self) -> bool {
        self.precedence() >= 5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    /// Arithmetic negation.
    Neg,
    /// Boolean NOT.
    Not,
}

/// One node of a parsed expression. Boolean and arithmetic expressions share
/// this tree; the type checker keeps them apart.
///
/// Parentheses are not represented: the printer re-inserts exactly the
/// parentheses the structure requires, so `parse(print(e)) == e`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Real(f64),
    Bool(bool),
    Text(String),
    Attr(AttrPath),
    /// Free (unknown) parameter symbol.
    Param(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Unary(UnaryOp::Not, _) => 3,
            Expr::Unary(UnaryOp::Neg, _) => 7,
            _ => 8,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parent: u8, tight: bool) -> fmt::Result {
        // `tight` forces parens at equal precedence (right operands of
        // left-associative operators, comparison operands).
        let needs = self.precedence() < parent || (tight && self.precedence() == parent);
        if needs {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }

    /// All attribute paths referenced anywhere in this expression.
    pub fn paths(&self) -> Vec<&AttrPath> {
        let mut out = Vec::new();
        self.collect_paths(&mut out);
        out
    }

    fn collect_paths<'a>(&'a self, out: &mut Vec<&'a AttrPath>) {
        match self {
            Expr::Attr(p) => out.push(p),
            Expr::Unary(_, e) => e.collect_paths(out),
            Expr::Binary(_, l, r) => {
                l.collect_paths(out);
                r.collect_paths(out);
            }
            _ => {}
        }
    }

    /// Free parameter symbols in first-appearance order.
    pub fn params(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Param(name) => {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
            Expr::Unary(_, e) => e.collect_params(out),
            Expr::Binary(_, l, r) => {
                l.collect_params(out);
                r.collect_params(out);
            }
            _ => {}
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Real(x) => write!(f, "{x}"),
            Expr::Bool(true) => write!(f, "True"),
            Expr::Bool(false) => write!(f, "False"),
            Expr::Text(s) => write!(f, "\"{s}\""),
            Expr::Attr(p) => write!(f, "{p}"),
            Expr::Param(name) => write!(f, "{name}"),
            Expr::Unary(UnaryOp::Neg, e) => {
                write!(f, "-")?;
                e.fmt_child(f, 7, true)
            }
            Expr::Unary(UnaryOp::Not, e) => {
                write!(f, "NOT ")?;
                e.fmt_child(f, 3, false)
            }
            Expr::Binary(op, l, r) => {
                // Comparisons are non-associative: a comparison child always
                // needs parentheses to re-parse into the same tree.
                let tight_left = op.is_comparison();
                l.fmt_child(f, op.precedence(), tight_left)?;
                write!(f, " {} ", op.symbol())?;
                r.fmt_child(f, op.precedence(), true)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr(name: &str) -> Expr {
        Expr::Attr(AttrPath::own(name))
    }

    #[test]
    fn printer_spaces_binary_operators() {
        let e = Expr::Binary(BinOp::Sub, Box::new(attr("Happiness")), Box::new(Expr::Param("X".into())));
        assert_eq!(e.to_string(), "[Happiness] - X");
    }

    #[test]
    fn printer_parenthesizes_lower_precedence_children() {
        let sum = Expr::Binary(BinOp::Add, Box::new(attr("A")), Box::new(attr("B")));
        let e = Expr::Binary(BinOp::Mul, Box::new(sum), Box::new(Expr::Real(2.0)));
        assert_eq!(e.to_string(), "([A] + [B]) * 2");
    }

    #[test]
    fn right_nested_subtraction_keeps_parens() {
        let inner = Expr::Binary(BinOp::Sub, Box::new(attr("B")), Box::new(attr("C")));
        let e = Expr::Binary(BinOp::Sub, Box::new(attr("A")), Box::new(inner));
        assert_eq!(e.to_string(), "[A] - ([B] - [C])");
    }

    #[test]
    fn relation_paths_print_with_dots() {
        let p = AttrPath {
            relations: vec!["lives in household".into()],
            attribute: "Is in dept".into(),
        };
        assert_eq!(p.to_string(), "[lives in household].[Is in dept]");
    }

    #[test]
    fn params_are_deduplicated_in_order() {
        let e = Expr::Binary(
            BinOp::Add,
            Box::new(Expr::Binary(BinOp::Mul, Box::new(Expr::Param("Y".into())), Box::new(Expr::Param("X".into())))),
            Box::new(Expr::Param("Y".into())),
        );
        assert_eq!(e.params(), vec!["Y", "X"]);
    }
}

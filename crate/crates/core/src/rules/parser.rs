//! Recursive-descent parser for the rule grammar:
//!
//! ```text
//! rule    := [ "IF" expr "THEN" ] attrpath "=" expr
//! expr    := and { "OR" and }
//! and     := not { "AND" not }
//! not     := "NOT" not | rel
//! rel     := add [ cmpop add ]
//! add     := mul { ("+"|"-") mul }
//! mul     := unary { ("*"|"/") unary }
//! unary   := "-" unary | primary
//! primary := number | string | "True" | "False" | attrpath | ident | "(" expr ")"
//! attrpath:= "[" name "]" { "." "[" name "]" }
//! ```
//!
//! The parser is purely syntactic; name resolution and typing happen in
//! [`super::typecheck`].

use super::ast::{AttrPath, BinOp, Expr, UnaryOp};
use super::lexer::{tokenize, Spanned, Token};
use super::RuleError;

/// Syntactic form of a rule before name resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRule {
    pub condition: Option<Expr>,
    pub target: AttrPath,
    pub value: Expr,
}

pub fn parse_text(src: &str) -> Result<RawRule, RuleError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0, len: src.len() };
    let rule = p.rule()?;
    p.expect_end()?;
    Ok(rule)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|s| &s.token)
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.len, |s| s.pos)
    }

    fn found(&self) -> String {
        self.tokens
            .get(self.pos)
            .map_or_else(|| "end of input".to_owned(), |s| s.token.describe())
    }

    fn error(&self, expected: &str) -> RuleError {
        RuleError::Syntax { pos: self.here(), expected: expected.to_owned(), found: self.found() }
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|s| s.token.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, want: &Token, expected: &str) -> Result<(), RuleError> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn expect_end(&self) -> Result<(), RuleError> {
        if self.pos == self.tokens.len() {
            Ok(())
        } else {
            Err(self.error("end of rule"))
        }
    }

    fn rule(&mut self) -> Result<RawRule, RuleError> {
        let condition = if self.peek() == Some(&Token::If) {
            self.pos += 1;
            let cond = self.expr()?;
            self.eat(&Token::Then, "THEN")?;
            Some(cond)
        } else {
            None
        };
        let target = self.attr_path()?;
        self.eat(&Token::Assign, "`=`")?;
        let value = self.expr()?;
        Ok(RawRule { condition, target, value })
    }

    fn attr_path(&mut self) -> Result<AttrPath, RuleError> {
        let mut names = Vec::new();
        loop {
            match self.peek() {
                Some(Token::Name(_)) => {
                    if let Some(Token::Name(n)) = self.advance() {
                        names.push(n);
                    }
                }
                _ => return Err(self.error("[name]")),
            }
            if self.peek() == Some(&Token::Dot) {
                self.pos += 1;
            } else {
                break;
            }
        }
        let attribute = names.pop().expect("at least one name");
        Ok(AttrPath { relations: names, attribute })
    }

    fn expr(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.and_expr()?;
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            let rhs = self.and_expr()?;
            lhs = Expr::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.not_expr()?;
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            let rhs = self.not_expr()?;
            lhs = Expr::Binary(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, RuleError> {
        if self.peek() == Some(&Token::Not) {
            self.pos += 1;
            let inner = self.not_expr()?;
            Ok(Expr::Unary(UnaryOp::Not, Box::new(inner)))
        } else {
            self.rel_expr()
        }
    }

    fn rel_expr(&mut self) -> Result<Expr, RuleError> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Some(Token::Gt) => Some(BinOp::Gt),
            Some(Token::Lt) => Some(BinOp::Lt),
            Some(Token::Ge) => Some(BinOp::Ge),
            Some(Token::Le) => Some(BinOp::Le),
            Some(Token::EqEq) => Some(BinOp::Eq),
            Some(Token::Ne) => Some(BinOp::Ne),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let rhs = self.add_expr()?;
            Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
        } else {
            Ok(lhs)
        }
    }

    fn add_expr(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => BinOp::Add,
                Some(Token::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.mul_expr()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => BinOp::Mul,
                Some(Token::Slash) => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, RuleError> {
        if self.peek() == Some(&Token::Minus) {
            self.pos += 1;
            let inner = self.unary()?;
            Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Expr, RuleError> {
        match self.peek() {
            Some(Token::Number(_)) => {
                if let Some(Token::Number(x)) = self.advance() {
                    Ok(Expr::Real(x))
                } else {
                    unreachable!()
                }
            }
            Some(Token::Str(_)) => {
                if let Some(Token::Str(s)) = self.advance() {
                    Ok(Expr::Text(s))
                } else {
                    unreachable!()
                }
            }
            Some(Token::True) => {
                self.pos += 1;
                Ok(Expr::Bool(true))
            }
            Some(Token::False) => {
                self.pos += 1;
                Ok(Expr::Bool(false))
            }
            Some(Token::Name(_)) => Ok(Expr::Attr(self.attr_path()?)),
            Some(Token::Ident(_)) => {
                if let Some(Token::Ident(name)) = self.advance() {
                    Ok(Expr::Param(name))
                } else {
                    unreachable!()
                }
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.eat(&Token::RParen, "`)`")?;
                Ok(inner)
            }
            _ => Err(self.error("a value, [attribute], parameter or `(`")),
        }
    }
}

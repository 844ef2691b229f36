//! Tokenizer for the rule DSL.
//!
//! Bracketed names `[...]` may contain spaces, digits and parentheses —
//! anything except `]`. Bare identifiers outside brackets are unknown
//! parameters, except for the case-sensitive keywords
//! `IF THEN AND OR NOT True False`.

use super::RuleError;

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    /// `[name]` — attribute or relation name.
    Name(String),
    /// Bare identifier (an unknown-parameter symbol).
    Ident(String),
    Number(f64),
    /// `"..."` string literal (no escape sequences).
    Str(String),
    If,
    Then,
    And,
    Or,
    Not,
    True,
    False,
    Plus,
    Minus,
    Star,
    Slash,
    Assign,
    EqEq,
    Ne,
    Ge,
    Le,
    Gt,
    Lt,
    Dot,
    LParen,
    RParen,
}

impl Token {
    /// How the token reads in an error message.
    pub fn describe(&self) -> String {
        match self {
            Token::Name(n) => format!("[{n}]"),
            Token::Ident(s) => format!("`{s}`"),
            Token::Number(x) => format!("number {x}"),
            Token::Str(s) => format!("\"{s}\""),
            Token::If => "IF".into(),
            Token::Then => "THEN".into(),
            Token::And => "AND".into(),
            Token::Or => "OR".into(),
            Token::Not => "NOT".into(),
            Token::True => "True".into(),
            Token::False => "False".into(),
            Token::Plus => "+".into(),
            Token::Minus => "-".into(),
            Token::Star => "*".into(),
            Token::Slash => "/".into(),
            Token::Assign => "=".into(),
            Token::EqEq => "==".into(),
            Token::Ne => "!=".into(),
            Token::Ge => ">=".into(),
            Token::Le => "<=".into(),
            Token::Gt => ">".into(),
            Token::Lt => "<".into(),
            Token::Dot => ".".into(),
            Token::LParen => "(".into(),
            Token::RParen => ")".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Spanned {
    pub token: Token,
    /// Byte offset of the token start in the source text.
    pub pos: usize,
}

fn syntax_error(pos: usize, expected: &str, found: &str) -> RuleError {
    RuleError::Syntax { pos, expected: expected.to_owned(), found: found.to_owned() }
}

pub fn tokenize(src: &str) -> Result<Vec<Spanned>, RuleError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\r' | '\n' => i += 1,
            '[' => {
                let start = i;
                let end = src[i + 1..]
                    .find(']')
                    .map(|o| i + 1 + o)
                    .ok_or_else(|| syntax_error(start, "closing `]`", "end of input"))?;
                let name = src[i + 1..end].trim();
                if name.is_empty() {
                    return Err(syntax_error(start, "attribute or relation name", "empty brackets"));
                }
                out.push(Spanned { token: Token::Name(name.to_owned()), pos: start });
                i = end + 1;
            }
            '"' => {
                let start = i;
                let end = src[i + 1..]
                    .find('"')
                    .map(|o| i + 1 + o)
                    .ok_or_else(|| syntax_error(start, "closing `\"`", "end of input"))?;
                out.push(Spanned { token: Token::Str(src[i + 1..end].to_owned()), pos: start });
                i = end + 1;
            }
            '(' => {
                out.push(Spanned { token: Token::LParen, pos: i });
                i += 1;
            }
            ')' => {
                out.push(Spanned { token: Token::RParen, pos: i });
                i += 1;
            }
            '.' => {
                out.push(Spanned { token: Token::Dot, pos: i });
                i += 1;
            }
            '+' => {
                out.push(Spanned { token: Token::Plus, pos: i });
                i += 1;
            }
            '-' => {
                out.push(Spanned { token: Token::Minus, pos: i });
                i += 1;
            }
            '*' => {
                out.push(Spanned { token: Token::Star, pos: i });
                i += 1;
            }
            '/' => {
                out.push(Spanned { token: Token::Slash, pos: i });
                i += 1;
            }
            '=' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Spanned { token: Token::EqEq, pos: i });
                    i += 2;
                } else {
                    out.push(Spanned { token: Token::Assign, pos: i });
                    i += 1;
                }
            }
            '!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Spanned { token: Token::Ne, pos: i });
                    i += 2;
                } else {
                    return Err(syntax_error(i, "`!=`", "`!`"));
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Spanned { token: Token::Ge, pos: i });
                    i += 2;
                } else {
                    out.push(Spanned { token: Token::Gt, pos: i });
                    i += 1;
                }
            }
            '<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Spanned { token: Token::Le, pos: i });
                    i += 2;
                } else {
                    out.push(Spanned { token: Token::Lt, pos: i });
                    i += 1;
                }
            }
            _ if c.is_ascii_digit() => {
                let start = i;
                i = scan_number(src, i);
                let text = &src[start..i];
                let value: f64 = text
                    .parse()
                    .map_err(|_| syntax_error(start, "numeric literal", text))?;
                out.push(Spanned { token: Token::Number(value), pos: start });
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() {
                    let c = bytes[i] as char;
                    if c.is_ascii_alphanumeric() || c == '_' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let word = &src[start..i];
                let token = match word {
                    "IF" => Token::If,
                    "THEN" => Token::Then,
                    "AND" => Token::And,
                    "OR" => Token::Or,
                    "NOT" => Token::Not,
                    "True" => Token::True,
                    "False" => Token::False,
                    _ => Token::Ident(word.to_owned()),
                };
                out.push(Spanned { token, pos: start });
            }
            _ => return Err(syntax_error(i, "a token", &c.to_string())),
        }
    }
    Ok(out)
}

/// Advance past `digits [ '.' digits ] [ ('e'|'E') ['+'|'-'] digits ]`.
fn scan_number(src: &str, mut i: usize) -> usize {
    let bytes = src.as_bytes();
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Token> {
        tokenize(src).unwrap().into_iter().map(|s| s.token).collect()
    }

    #[test]
    fn tokenizes_condition_rule() {
        let toks = kinds("IF [Hunger] > 4 THEN [Happiness] = [Happiness] - X");
        assert_eq!(
            toks,
            vec![
                Token::If,
                Token::Name("Hunger".into()),
                Token::Gt,
                Token::Number(4.0),
                Token::Then,
                Token::Name("Happiness".into()),
                Token::Assign,
                Token::Name("Happiness".into()),
                Token::Minus,
                Token::Ident("X".into()),
            ]
        );
    }

    #[test]
    fn bracketed_names_keep_spaces_and_parens() {
        let toks = kinds("[Height (meters)] = 3.281 * [Height (feet)]");
        assert_eq!(toks[0], Token::Name("Height (meters)".into()));
        assert_eq!(toks[2], Token::Number(3.281));
        assert_eq!(toks[4], Token::Name("Height (feet)".into()));
    }

    #[test]
    fn relation_path_uses_dot() {
        let toks = kinds("[lives in household].[Is in dept] == True");
        assert_eq!(
            toks,
            vec![
                Token::Name("lives in household".into()),
                Token::Dot,
                Token::Name("Is in dept".into()),
                Token::EqEq,
                Token::True,
            ]
        );
    }

    #[test]
    fn keywords_are_case_sensitive() {
        // Lowercase `if` is just an identifier (parameter symbol).
        assert_eq!(kinds("if")[0], Token::Ident("if".into()));
        assert_eq!(kinds("IF")[0], Token::If);
    }

    #[test]
    fn unterminated_bracket_reports_position() {
        let err = tokenize("[Hunger > 4").unwrap_err();
        match err {
            RuleError::Syntax { pos, .. } => assert_eq!(pos, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scientific_notation_is_a_single_number() {
        assert_eq!(kinds("1e3"), vec![Token::Number(1000.0)]);
        assert_eq!(kinds("2.5E-2"), vec![Token::Number(0.025)]);
    }
}

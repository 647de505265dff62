//! Recursive-descent parser.
//!
//! ```text
//! comparison := additive (cmp_op additive)*
//! additive   := term (("+" | "-") term)*
//! term       := unary (("*" | "/") unary)*
//! unary      := "-" unary | power
//! power      := primary ("^" unary)?
//! primary    := number | string | call | "(" comparison ")"
//! call       := ident "(" [comparison ("," comparison)*] ")"
//! ```

use thiserror::Error;

use super::ast::{AggFn, BinOp, CmpOp, Expr, UnaryFn};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function {name:?} at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("function {name} expects {expected} argument(s), got {got} (offset {offset})")]
    Arity {
        name: String,
        expected: String,
        got: usize,
        offset: usize,
    },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownFunction { offset, .. }
            | ParseError::Arity { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Str(String),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn syntax(offset: usize, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            offset,
            message: message.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut out = Vec::new();
        loop {
            let (tok, at) = self.next_token()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn next_token(&mut self) -> Result<(Tok, usize), ParseError> {
        while let Some(c) = self.peek_char() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        let start = self.pos;
        let Some(c) = self.peek_char() else {
            return Ok((Tok::End, start));
        };
        let rest = &self.src[start..];
        let two = |s: &str| rest.starts_with(s);
        let tok = if c.is_ascii_digit()
            || (c == '.' && rest[1..].starts_with(|d: char| d.is_ascii_digit()))
        {
            return self.number(start);
        } else if c.is_ascii_alphabetic() || c == '_' {
            let len = rest
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                .unwrap_or(rest.len());
            self.pos += len;
            return Ok((Tok::Ident(rest[..len].to_string()), start));
        } else if c == '"' || c == '\'' {
            return self.string(start, c);
        } else if two("<=") {
            Tok::Op("<=")
        } else if two(">=") {
            Tok::Op(">=")
        } else if two("==") {
            Tok::Op("==")
        } else if two("!=") {
            Tok::Op("!=")
        } else {
            match c {
                '+' => Tok::Op("+"),
                '-' => Tok::Op("-"),
                '*' => Tok::Op("*"),
                '/' => Tok::Op("/"),
                '^' => Tok::Op("^"),
                '<' => Tok::Op("<"),
                '>' => Tok::Op(">"),
                '=' => Tok::Op("="),
                '≤' => Tok::Op("<="),
                '≥' => Tok::Op(">="),
                '≠' => Tok::Op("!="),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                other => {
                    return Err(Self::syntax(
                        start,
                        format!("unexpected character {other:?}"),
                    ))
                }
            }
        };
        let ascii_pair = ["<=", ">=", "==", "!="].iter().any(|p| two(p));
        self.pos += if ascii_pair { 2 } else { c.len_utf8() };
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ParseError> {
        let bytes = self.src.as_bytes();
        let mut i = start;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = &self.src[start..i];
        let value: f64 = text
            .parse()
            .map_err(|_| Self::syntax(start, format!("malformed number {text:?}")))?;
        self.pos = i;
        Ok((Tok::Num(value), start))
    }

    fn string(&mut self, start: usize, quote: char) -> Result<(Tok, usize), ParseError> {
        let mut out = String::new();
        let mut chars = self.src[start + 1..].char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                c if c == quote => {
                    self.pos = start + 1 + i + 1;
                    return Ok((Tok::Str(out), start));
                }
                '\\' => match chars.next() {
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    Some((_, other)) => out.push(other),
                    None => break,
                },
                c => out.push(c),
            }
        }
        Err(Self::syntax(self.src.len(), "unterminated string literal"))
    }
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
}

/// Parses an expression. Error offsets are byte offsets into `text`.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let tokens = Lexer { src: text, pos: 0 }.tokens()?;
    let mut p = Parser { tokens, pos: 0 };
    let expr = p.comparison()?;
    match p.peek() {
        Tok::End => Ok(expr),
        other => Err(p.error(format!("unexpected {}", describe(other)))),
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number {v}"),
        Tok::Str(s) => format!("string {s:?}"),
        Tok::Ident(s) => format!("identifier {s:?}"),
        Tok::Op(s) => format!("operator {s:?}"),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Comma => "','".into(),
        Tok::End => "end of input".into(),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn advance(&mut self) -> Tok {
        let tok = self.tokens[self.pos].0.clone();
        if tok != Tok::End {
            self.pos += 1;
        }
        tok
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn eat_op(&mut self, ops: &[&'static str]) -> Option<&'static str> {
        match self.peek() {
            Tok::Op(op) if ops.contains(op) => {
                let op = *op;
                self.advance();
                Some(op)
            }
            _ => None,
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            Err(self.error(format!(
                "expected {}, found {}",
                describe(&tok),
                describe(self.peek())
            )))
        }
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.additive()?;
        while let Some(op) = self.eat_op(&["<", "<=", ">", ">=", "=", "==", "!="]) {
            let cmp = match op {
                "<" => CmpOp::Lt,
                "<=" => CmpOp::Le,
                ">" => CmpOp::Gt,
                ">=" => CmpOp::Ge,
                "=" | "==" => CmpOp::Eq,
                _ => CmpOp::Ne,
            };
            let rhs = self.additive()?;
            lhs = Expr::compare(cmp, lhs, rhs);
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&["+", "-"]) {
            let rhs = self.term()?;
            let op = if op == "+" { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&["*", "/"]) {
            let rhs = self.unary()?;
            let op = if op == "*" { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op(&["-"]).is_some() {
            let operand = self.unary()?;
            // A minus applied directly to a literal is the negative literal.
            return Ok(match operand {
                Expr::Num(v) => Expr::Num(-v),
                other => Expr::unary(UnaryFn::Neg, other),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.eat_op(&["^"]).is_some() {
            let exponent = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.advance() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Str(s) => Ok(Expr::Str(s)),
            Tok::LParen => {
                let inner = self.comparison()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => self.call(name, at),
            Tok::End => Err(ParseError::Syntax {
                offset: at,
                message: "expected expression, found end of input".into(),
            }),
            other => Err(ParseError::Syntax {
                offset: at,
                message: format!("expected expression, found {}", describe(&other)),
            }),
        }
    }

    fn call(&mut self, name: String, at: usize) -> Result<Expr, ParseError> {
        let known = name == "col"
            || UnaryFn::from_name(&name).is_some()
            || AggFn::from_name(&name).is_some();
        if !known {
            return Err(ParseError::UnknownFunction { name, offset: at });
        }
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.comparison()?);
                if *self.peek() == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;

        let arity = |expected: &str| ParseError::Arity {
            name: name.clone(),
            expected: expected.to_string(),
            got: args.len(),
            offset: at,
        };
        if name == "col" {
            return match args.as_slice() {
                [Expr::Str(col)] => Ok(Expr::Col(col.clone())),
                [_] => Err(ParseError::Syntax {
                    offset: at,
                    message: "col() takes a quoted column name".into(),
                }),
                _ => Err(arity("1")),
            };
        }
        if let Some(func) = UnaryFn::from_name(&name) {
            if args.len() != 1 {
                return Err(arity("1"));
            }
            return Ok(Expr::unary(func, args.pop().expect("one arg")));
        }
        let func = AggFn::from_name(&name).expect("checked above");
        if args.is_empty() {
            return Err(arity("at least 1"));
        }
        Ok(Expr::Aggregate(func, args))
    }
}

//! Lexer and recursive-descent parser for the rule language.
//!
//! ```text
//! rule       := or_expr EOF
//! or_expr    := and_expr { "or" and_expr }
//! and_expr   := bool_atom { "and" bool_atom }
//! bool_atom  := "not" bool_atom | "(" or_expr ")" | comparison
//! comparison := scalar cmp_op scalar
//! scalar     := term { ("+" | "-") term }
//! term       := factor { "*" factor }
//! factor     := number | aggregate | "-" factor | "(" scalar ")"
//! aggregate  := ("max" | "min" | "tmax" | "tmin") "(" point "," window ")"
//!             | "count" "(" point cmp_op point "," window ")"
//!             | "pctl" "(" point "," number "," window ")"
//!             | "tq" "(" point ["," number] "," window ")"
//! point      := pterm { ("+" | "-") pterm }
//! pterm      := pfactor { "*" pfactor }
//! pfactor    := number | INDEX | "-" pfactor | "(" point ")"
//! window     := signed_int "," signed_int
//! ```
//!
//! `#` starts a comment running to end of line. A `(` after `not`,
//! `and`, or `or` may open either a boolean group or a parenthesized
//! scalar; the parser resolves this by trying the comparison reading
//! first and falling back, reporting whichever failure got furthest.

use std::fmt;

use crate::index::IndexKind;
use crate::rules::ast::{AggExpr, BoolExpr, CmpOp, PointExpr, PointPred, ScalarExpr, Window};

/// Why a rule failed to parse, with the 1-based source position and
/// the token alternatives that would have been accepted there.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub found: String,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "parse error at line {}, column {}: found {}, expected {}",
            self.line,
            self.col,
            self.found,
            self.expected.join(" or ")
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Number(n) => format!("number {n}"),
            Tok::Ident(s) => format!("'{s}'"),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Lt => "'<'".into(),
            Tok::Le => "'<='".into(),
            Tok::Gt => "'>'".into(),
            Tok::Ge => "'>='".into(),
            Tok::EqEq => "'=='".into(),
            Tok::Ne => "'!='".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        let tok_line = line;
        let tok_col = col;
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        };
        if c.is_whitespace() {
            bump(&mut chars);
            continue;
        }
        if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                bump(&mut chars);
            }
            continue;
        }
        let tok = match c {
            '(' => {
                bump(&mut chars);
                Tok::LParen
            }
            ')' => {
                bump(&mut chars);
                Tok::RParen
            }
            ',' => {
                bump(&mut chars);
                Tok::Comma
            }
            '+' => {
                bump(&mut chars);
                Tok::Plus
            }
            '-' => {
                bump(&mut chars);
                Tok::Minus
            }
            '*' => {
                bump(&mut chars);
                Tok::Star
            }
            '<' => {
                bump(&mut chars);
                if chars.peek() == Some(&'=') {
                    bump(&mut chars);
                    Tok::Le
                } else {
                    Tok::Lt
                }
            }
            '>' => {
                bump(&mut chars);
                if chars.peek() == Some(&'=') {
                    bump(&mut chars);
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            '=' => {
                bump(&mut chars);
                if chars.peek() == Some(&'=') {
                    bump(&mut chars);
                    Tok::EqEq
                } else {
                    return Err(ParseError {
                        line: tok_line,
                        col: tok_col,
                        found: "'='".into(),
                        expected: vec!["'=='".into()],
                    });
                }
            }
            '!' => {
                bump(&mut chars);
                if chars.peek() == Some(&'=') {
                    bump(&mut chars);
                    Tok::Ne
                } else {
                    return Err(ParseError {
                        line: tok_line,
                        col: tok_col,
                        found: "'!'".into(),
                        expected: vec!["'!='".into()],
                    });
                }
            }
            c if c.is_ascii_digit() => {
                let mut text = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() || c == '.' {
                        text.push(bump(&mut chars));
                    } else {
                        break;
                    }
                }
                match text.parse::<f64>() {
                    Ok(n) => Tok::Number(n),
                    Err(_) => {
                        return Err(ParseError {
                            line: tok_line,
                            col: tok_col,
                            found: format!("'{text}'"),
                            expected: vec!["a number".into()],
                        })
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut text = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        text.push(bump(&mut chars));
                    } else {
                        break;
                    }
                }
                Tok::Ident(text)
            }
            other => {
                return Err(ParseError {
                    line: tok_line,
                    col: tok_col,
                    found: format!("'{other}'"),
                    expected: vec!["a token".into()],
                })
            }
        };
        out.push(Spanned {
            tok,
            line: tok_line,
            col: tok_col,
        });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    /// Furthest failure seen, kept so backtracking reports the most
    /// specific error.
    furthest: Option<ParseError>,
}

type PResult<T> = Result<T, ()>;

impl Parser {
    fn new(toks: Vec<Spanned>) -> Parser {
        Parser {
            toks,
            pos: 0,
            furthest: None,
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&mut self, expected: &[&str]) -> PResult<T> {
        let here = &self.toks[self.pos];
        let err = ParseError {
            line: here.line,
            col: here.col,
            found: here.tok.describe(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        };
        match &mut self.furthest {
            Some(best) if (best.line, best.col) > (err.line, err.col) => {}
            Some(best) if (best.line, best.col) == (err.line, err.col) => {
                for e in err.expected {
                    if !best.expected.contains(&e) {
                        best.expected.push(e);
                    }
                }
            }
            _ => self.furthest = Some(err),
        }
        Err(())
    }

    fn expect(&mut self, tok: Tok, describe: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            self.fail(&[describe])
        }
    }

    fn cmp_op(&mut self) -> PResult<CmpOp> {
        let op = match self.peek() {
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            Tok::EqEq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            _ => return self.fail(&["a comparison operator"]),
        };
        self.advance();
        Ok(op)
    }

    fn number(&mut self) -> PResult<f64> {
        let negative = if *self.peek() == Tok::Minus {
            self.advance();
            true
        } else {
            false
        };
        match self.peek() {
            Tok::Number(n) => {
                let n = *n;
                self.advance();
                Ok(if negative { -n } else { n })
            }
            _ => self.fail(&["a number"]),
        }
    }

    fn window_tail(&mut self) -> PResult<Window> {
        let lo = self.number()?;
        self.expect(Tok::Comma, "','")?;
        let hi = self.number()?;
        self.expect(Tok::RParen, "')'")?;
        if lo.fract() != 0.0 || hi.fract() != 0.0 {
            return self.fail(&["integer window bounds"]);
        }
        Ok(Window {
            lo: lo as i32,
            hi: hi as i32,
        })
    }

    fn point_factor(&mut self) -> PResult<PointExpr> {
        match self.peek().clone() {
            Tok::Number(n) => {
                self.advance();
                Ok(PointExpr::Number(n))
            }
            Tok::Minus => {
                self.advance();
                Ok(PointExpr::Neg(Box::new(self.point_factor()?)))
            }
            Tok::LParen => {
                self.advance();
                let inner = self.point_expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(name) => match IndexKind::from_name(&name) {
                Some(kind) => {
                    self.advance();
                    Ok(PointExpr::Index(kind))
                }
                None => self.fail(&["an index name"]),
            },
            _ => self.fail(&["a number", "an index name", "'('", "'-'"]),
        }
    }

    fn point_term(&mut self) -> PResult<PointExpr> {
        let mut lhs = self.point_factor()?;
        while *self.peek() == Tok::Star {
            self.advance();
            let rhs = self.point_factor()?;
            lhs = PointExpr::Mul(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn point_expr(&mut self) -> PResult<PointExpr> {
        let mut lhs = self.point_term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.advance();
                    let rhs = self.point_term()?;
                    lhs = PointExpr::Add(Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.advance();
                    let rhs = self.point_term()?;
                    lhs = PointExpr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn aggregate(&mut self, name: &str) -> PResult<AggExpr> {
        self.advance();
        self.expect(Tok::LParen, "'('")?;
        match name {
            "max" | "min" | "tmax" | "tmin" => {
                let arg = self.point_expr()?;
                self.expect(Tok::Comma, "','")?;
                let window = self.window_tail()?;
                Ok(match name {
                    "max" => AggExpr::Max { arg, window },
                    "min" => AggExpr::Min { arg, window },
                    "tmax" => AggExpr::TMax { arg, window },
                    _ => AggExpr::TMin { arg, window },
                })
            }
            "count" => {
                let lhs = self.point_expr()?;
                let op = self.cmp_op()?;
                let rhs = self.point_expr()?;
                self.expect(Tok::Comma, "','")?;
                let window = self.window_tail()?;
                Ok(AggExpr::Count {
                    pred: PointPred { lhs, op, rhs },
                    window,
                })
            }
            "pctl" => {
                let arg = self.point_expr()?;
                self.expect(Tok::Comma, "','")?;
                let p = self.number()?;
                self.expect(Tok::Comma, "','")?;
                let window = self.window_tail()?;
                Ok(AggExpr::Pctl { arg, p, window })
            }
            "tq" => {
                let arg = self.point_expr()?;
                self.expect(Tok::Comma, "','")?;
                // Three remaining numbers mean an explicit percentile;
                // two mean the default of 75.
                let first = self.number()?;
                self.expect(Tok::Comma, "','")?;
                let second = self.number()?;
                if *self.peek() == Tok::Comma {
                    self.advance();
                    let third = self.number()?;
                    self.expect(Tok::RParen, "')'")?;
                    if second.fract() != 0.0 || third.fract() != 0.0 {
                        return self.fail(&["integer window bounds"]);
                    }
                    Ok(AggExpr::Tq {
                        arg,
                        p: first,
                        window: Window {
                            lo: second as i32,
                            hi: third as i32,
                        },
                    })
                } else {
                    self.expect(Tok::RParen, "')'")?;
                    if first.fract() != 0.0 || second.fract() != 0.0 {
                        return self.fail(&["integer window bounds"]);
                    }
                    Ok(AggExpr::Tq {
                        arg,
                        p: 75.0,
                        window: Window {
                            lo: first as i32,
                            hi: second as i32,
                        },
                    })
                }
            }
            _ => unreachable!("caller checked the aggregate name"),
        }
    }

    fn scalar_factor(&mut self) -> PResult<ScalarExpr> {
        match self.peek().clone() {
            Tok::Number(n) => {
                self.advance();
                Ok(ScalarExpr::Number(n))
            }
            Tok::Minus => {
                self.advance();
                Ok(ScalarExpr::Neg(Box::new(self.scalar_factor()?)))
            }
            Tok::LParen => {
                self.advance();
                let inner = self.scalar_expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if matches!(
                    name.as_str(),
                    "max" | "min" | "count" | "pctl" | "tmax" | "tmin" | "tq"
                ) {
                    Ok(ScalarExpr::Agg(self.aggregate(&name)?))
                } else {
                    self.fail(&["an aggregate (max, min, count, pctl, tmax, tmin, tq)"])
                }
            }
            _ => self.fail(&["a number", "an aggregate", "'('", "'-'"]),
        }
    }

    fn scalar_term(&mut self) -> PResult<ScalarExpr> {
        let mut lhs = self.scalar_factor()?;
        while *self.peek() == Tok::Star {
            self.advance();
            let rhs = self.scalar_factor()?;
            lhs = ScalarExpr::Mul(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn scalar_expr(&mut self) -> PResult<ScalarExpr> {
        let mut lhs = self.scalar_term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.advance();
                    let rhs = self.scalar_term()?;
                    lhs = ScalarExpr::Add(Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.advance();
                    let rhs = self.scalar_term()?;
                    lhs = ScalarExpr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn comparison(&mut self) -> PResult<BoolExpr> {
        let lhs = self.scalar_expr()?;
        let op = self.cmp_op()?;
        let rhs = self.scalar_expr()?;
        Ok(BoolExpr::Cmp { lhs, op, rhs })
    }

    fn bool_atom(&mut self) -> PResult<BoolExpr> {
        if let Tok::Ident(name) = self.peek() {
            if name == "not" {
                self.advance();
                return Ok(BoolExpr::Not(Box::new(self.bool_atom()?)));
            }
        }
        // A leading '(' is ambiguous between a boolean group and a
        // parenthesized scalar; try the comparison reading first and
        // backtrack if it does not pan out.
        let save = self.pos;
        if let Ok(cmp) = self.comparison() {
            return Ok(cmp);
        }
        self.pos = save;
        if *self.peek() == Tok::LParen {
            self.advance();
            let inner = self.or_expr()?;
            self.expect(Tok::RParen, "')'")?;
            return Ok(inner);
        }
        self.fail(&["a comparison", "'('", "'not'"])
    }

    fn and_expr(&mut self) -> PResult<BoolExpr> {
        let mut lhs = self.bool_atom()?;
        loop {
            match self.peek() {
                Tok::Ident(name) if name == "and" => {
                    self.advance();
                    let rhs = self.bool_atom()?;
                    lhs = BoolExpr::And(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn or_expr(&mut self) -> PResult<BoolExpr> {
        let mut lhs = self.and_expr()?;
        loop {
            match self.peek() {
                Tok::Ident(name) if name == "or" => {
                    self.advance();
                    let rhs = self.and_expr()?;
                    lhs = BoolExpr::Or(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn rule(&mut self) -> PResult<BoolExpr> {
        let expr = self.or_expr()?;
        if *self.peek() != Tok::Eof {
            return self.fail(&["end of input", "'and'", "'or'"]);
        }
        Ok(expr)
    }
}

/// Parses one rule expression from source text.
pub fn parse_rule_expr(src: &str) -> Result<BoolExpr, ParseError> {
    let toks = lex(src)?;
    let mut parser = Parser::new(toks);
    match parser.rule() {
        Ok(expr) => Ok(expr),
        Err(()) => Err(parser.furthest.unwrap_or(ParseError {
            line: 1,
            col: 1,
            found: "nothing".into(),
            expected: vec!["a rule expression".into()],
        })),
    }
}

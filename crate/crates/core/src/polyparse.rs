//! Recursive-descent parser and printer for polynomial expressions.
//!
//! Grammar:
//!
//! ```text
//! expr   := ['+'|'-'] term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := number [varpow]        (implicit multiplication: "3x^2")
//!         | varpow
//!         | '(' expr ')'
//! varpow := ident ('^' uint)?
//! ```
//!
//! A multi-letter identifier that is not a declared variable is reinterpreted
//! as a product of single-letter variables when every letter is declared, so
//! `xy` means `x*y` for variables `x, y`. Exponents above 63 are rejected.

use crate::polyring::{Monomial, Polynomial};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

const MAX_EXPONENT: u64 = 63;

/// Ordered table of variable names; positions fix the exponent-vector layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableTable {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl VariableTable {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self, ParseError> {
        let mut index = BTreeMap::new();
        let mut stored = Vec::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            let name = name.as_ref();
            if !valid_name(name) {
                return Err(ParseError::InvalidVariableName(name.to_string()));
            }
            if index.insert(name.to_string(), i).is_some() {
                return Err(ParseError::DuplicateVariable(name.to_string()));
            }
            stored.push(name.to_string());
        }
        Ok(VariableTable {
            names: stored,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Appends fresh variables, mangling on collision with existing names.
    pub fn extended(&self, suffixes: &[String]) -> VariableTable {
        let mut names = self.names.clone();
        for s in suffixes {
            let mut candidate = s.clone();
            while names.iter().any(|n| n == &candidate) {
                candidate.push('_');
            }
            names.push(candidate);
        }
        VariableTable::new(&names).expect("extended names remain valid")
    }
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {position}: {message}")]
    SyntaxError { position: usize, message: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("exponent at byte {position} exceeds {MAX_EXPONENT}")]
    ExponentOverflow { position: usize },
    #[error("invalid variable name `{0}`")]
    InvalidVariableName(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next_token(&mut self) -> Result<Option<(usize, Token)>, ParseError> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Token::Plus
            }
            b'-' | 0xE2 if self.minus_like() => Token::Minus,
            b'*' => {
                self.pos += 1;
                Token::Star
            }
            b'^' => {
                self.pos += 1;
                Token::Caret
            }
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            b'0'..=b'9' | b'.' => self.lex_number(start)?,
            c if c.is_ascii_alphabetic() => {
                let mut end = self.pos + 1;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let name = std::str::from_utf8(&self.src[self.pos..end])
                    .expect("ascii slice")
                    .to_string();
                self.pos = end;
                Token::Ident(name)
            }
            _ => {
                return Err(ParseError::SyntaxError {
                    position: start,
                    message: format!("unexpected byte 0x{c:02x}"),
                })
            }
        };
        Ok(Some((start, tok)))
    }

    /// Accepts '-' and the UTF-8 minus sign U+2212.
    fn minus_like(&mut self) -> bool {
        if self.src[self.pos] == b'-' {
            self.pos += 1;
            return true;
        }
        if self.src[self.pos..].starts_with("\u{2212}".as_bytes()) {
            self.pos += "\u{2212}".len();
            return true;
        }
        false
    }

    fn lex_number(&mut self, start: usize) -> Result<Token, ParseError> {
        let mut end = self.pos;
        let bytes = self.src;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
        if end < bytes.len() && bytes[end] == b'.' {
            end += 1;
            while end < bytes.len() && bytes[end].is_ascii_digit() {
                end += 1;
            }
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut probe = end + 1;
            if probe < bytes.len() && (bytes[probe] == b'+' || bytes[probe] == b'-') {
                probe += 1;
            }
            if probe < bytes.len() && bytes[probe].is_ascii_digit() {
                end = probe;
                while end < bytes.len() && bytes[end].is_ascii_digit() {
                    end += 1;
                }
            }
        }
        let text = std::str::from_utf8(&bytes[start..end]).expect("ascii slice");
        let value: f64 = text.parse().map_err(|_| ParseError::SyntaxError {
            position: start,
            message: format!("malformed number `{text}`"),
        })?;
        self.pos = end;
        Ok(Token::Number(value))
    }
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    cursor: usize,
    vars: &'a VariableTable,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.cursor).map(|(_, t)| t)
    }

    fn peek_pos(&self) -> usize {
        self.tokens.get(self.cursor).map_or(self.end, |(p, _)| *p)
    }

    fn bump(&mut self) -> Option<(usize, Token)> {
        let t = self.tokens.get(self.cursor).cloned();
        if t.is_some() {
            self.cursor += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), ParseError> {
        match self.bump() {
            Some((_, t)) if t == want => Ok(()),
            other => Err(ParseError::SyntaxError {
                position: other.as_ref().map_or(self.end, |(p, _)| *p),
                message: format!("expected {what}"),
            }),
        }
    }

    fn expr(&mut self) -> Result<Polynomial, ParseError> {
        let n = self.vars.len().max(1);
        let mut neg = false;
        match self.peek() {
            Some(Token::Plus) => {
                self.bump();
            }
            Some(Token::Minus) => {
                self.bump();
                neg = true;
            }
            _ => {}
        }
        let mut acc = self.term()?;
        if neg {
            acc = acc.scale(-1.0);
        }
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    acc = acc.add(&self.term()?);
                }
                Some(Token::Minus) => {
                    self.bump();
                    acc = acc.sub(&self.term()?);
                }
                _ => break,
            }
        }
        debug_assert_eq!(acc.num_vars(), n);
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial, ParseError> {
        let mut acc = self.factor()?;
        while matches!(self.peek(), Some(Token::Star)) {
            self.bump();
            acc = acc.mul(&self.factor()?);
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial, ParseError> {
        let n = self.vars.len().max(1);
        match self.bump() {
            Some((_, Token::Number(v))) => {
                let coeff = Polynomial::constant(n, v);
                // "3x^2": a coefficient immediately followed by a variable power.
                if matches!(self.peek(), Some(Token::Ident(_))) {
                    let vp = self.var_power()?;
                    Ok(coeff.mul(&vp))
                } else {
                    Ok(coeff)
                }
            }
            Some((_, Token::Ident(_))) => {
                self.cursor -= 1;
                self.var_power()
            }
            Some((_, Token::LParen)) => {
                let inner = self.expr()?;
                self.expect(Token::RParen, "closing `)`")?;
                if matches!(self.peek(), Some(Token::Caret)) {
                    self.bump();
                    let epos = self.peek_pos();
                    match self.bump() {
                        Some((_, Token::Number(v))) if v.fract() == 0.0 && v >= 0.0 => {
                            if v > MAX_EXPONENT as f64 {
                                return Err(ParseError::ExponentOverflow { position: epos });
                            }
                            return Ok(inner.pow(v as u32));
                        }
                        _ => {
                            return Err(ParseError::SyntaxError {
                                position: epos,
                                message: "expected non-negative integer exponent".to_string(),
                            })
                        }
                    }
                }
                Ok(inner)
            }
            other => Err(ParseError::SyntaxError {
                position: other.as_ref().map_or(self.end, |(p, _)| *p),
                message: "expected number, variable or `(`".to_string(),
            }),
        }
    }

    /// `ident ('^' uint)?`, with single-letter splitting of unknown idents.
    fn var_power(&mut self) -> Result<Polynomial, ParseError> {
        let n = self.vars.len().max(1);
        let (_pos, name) = match self.bump() {
            Some((p, Token::Ident(s))) => (p, s),
            other => {
                return Err(ParseError::SyntaxError {
                    position: other.as_ref().map_or(self.end, |(p, _)| *p),
                    message: "expected variable".to_string(),
                })
            }
        };
        let mut exps = vec![0u32; n];
        let last_var = if let Some(i) = self.vars.position(&name) {
            exps[i] = 1;
            i
        } else {
            // `xy` as a product of declared single-letter variables.
            let mut last = None;
            for ch in name.chars() {
                match self.vars.position(&ch.to_string()) {
                    Some(i) => {
                        exps[i] += 1;
                        last = Some(i);
                    }
                    None => return Err(ParseError::UnknownVariable(name)),
                }
            }
            last.ok_or(ParseError::UnknownVariable(name))?
        };
        if matches!(self.peek(), Some(Token::Caret)) {
            self.bump();
            let epos = self.peek_pos();
            match self.bump() {
                Some((_, Token::Number(v))) if v.fract() == 0.0 && v >= 0.0 => {
                    if v > MAX_EXPONENT as f64 {
                        return Err(ParseError::ExponentOverflow { position: epos });
                    }
                    // The exponent binds to the last factor of a split product;
                    // the factor itself already contributed one power.
                    exps[last_var] = exps[last_var] + v as u32 - 1;
                }
                _ => {
                    return Err(ParseError::SyntaxError {
                        position: epos,
                        message: "expected non-negative integer exponent".to_string(),
                    })
                }
            }
        }
        Ok(Polynomial::from_terms(n, vec![(Monomial::new(exps), 1.0)]))
    }
}

/// Parses `text` into a polynomial over the variables in `vars`.
pub fn parse_polynomial(text: &str, vars: &VariableTable) -> Result<Polynomial, ParseError> {
    let mut lexer = Lexer::new(text);
    let mut tokens = Vec::new();
    while let Some(t) = lexer.next_token()? {
        tokens.push(t);
    }
    if tokens.is_empty() {
        return Err(ParseError::SyntaxError {
            position: 0,
            message: "empty input".to_string(),
        });
    }
    let mut parser = Parser {
        tokens,
        cursor: 0,
        vars,
        end: text.len(),
    };
    let p = parser.expr()?;
    if parser.cursor != parser.tokens.len() {
        return Err(ParseError::SyntaxError {
            position: parser.peek_pos(),
            message: "trailing input".to_string(),
        });
    }
    Ok(p)
}

/// Canonical printing: terms by descending degree (graded-lex within a
/// degree), `^` for powers and explicit `*` between factors. Round-trips
/// exactly through `parse_polynomial`.
pub fn format_polynomial(p: &Polynomial, vars: &VariableTable) -> String {
    assert_eq!(vars.len(), p.num_vars(), "variable table mismatch");
    if p.is_zero() {
        return "0".to_string();
    }
    let mut terms: Vec<(&Monomial, f64)> = p.terms().collect();
    terms.sort_by(|a, b| {
        b.0.degree()
            .cmp(&a.0.degree())
            .then_with(|| a.0.cmp(b.0))
    });

    let mut out = String::new();
    for (i, (m, c)) in terms.iter().enumerate() {
        let neg = *c < 0.0;
        if i == 0 {
            if neg {
                out.push('-');
            }
        } else if neg {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        let mag = c.abs();
        let is_const = m.degree() == 0;
        if mag != 1.0 || is_const {
            write!(out, "{mag}").unwrap();
            if !is_const {
                out.push('*');
            }
        }
        let mut first = true;
        for (v, &e) in m.exponents().iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                out.push('*');
            }
            first = false;
            out.push_str(vars.name(v));
            if e > 1 {
                write!(out, "^{e}").unwrap();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{motzkin, poly};

    fn xy() -> VariableTable {
        VariableTable::new(&["x", "y"]).unwrap()
    }

    #[test]
    fn parses_motzkin() {
        let p = parse_polynomial("x^4*y^2 + x^2*y^4 - 3*x^2*y^2 + 1", &xy()).unwrap();
        assert_eq!(p, motzkin());
    }

    #[test]
    fn parses_zero() {
        let v = VariableTable::new(&["x"]).unwrap();
        let p = parse_polynomial("0", &v).unwrap();
        assert!(p.is_zero());
    }

    #[test]
    fn expands_square_of_sum() {
        let p = parse_polynomial("(x+y)^2", &xy()).unwrap();
        // Oracle: expand through ring multiplication.
        let x = Polynomial::variable(2, 0);
        let y = Polynomial::variable(2, 1);
        assert_eq!(p, x.add(&y).mul(&x.add(&y)));
    }

    #[test]
    fn implicit_coefficient_multiplication() {
        let p = parse_polynomial("3x^2 - 2x + 0.5", &VariableTable::new(&["x"]).unwrap()).unwrap();
        assert_eq!(p, poly(1, &[(&[2], 3.0), (&[1], -2.0), (&[0], 0.5)]));
    }

    #[test]
    fn juxtaposed_single_letter_variables() {
        let p = parse_polynomial("xy", &xy()).unwrap();
        assert_eq!(p, poly(2, &[(&[1, 1], 1.0)]));
        let q = parse_polynomial("2xy^3", &xy()).unwrap();
        assert_eq!(q, poly(2, &[(&[1, 3], 2.0)]));
    }

    #[test]
    fn multi_letter_identifier_must_be_declared() {
        let v = VariableTable::new(&["ab", "x"]).unwrap();
        let p = parse_polynomial("ab*x", &v).unwrap();
        assert_eq!(p, poly(2, &[(&[1, 1], 1.0)]));
        let err = parse_polynomial("aq", &v).unwrap_err();
        assert_eq!(err, ParseError::UnknownVariable("aq".to_string()));
    }

    #[test]
    fn scientific_notation() {
        let v = VariableTable::new(&["x"]).unwrap();
        let p = parse_polynomial("x^2 - 1.23437e-10", &v).unwrap();
        assert_eq!(p.constant_term(), -1.23437e-10);
    }

    #[test]
    fn rejects_large_exponent() {
        let v = VariableTable::new(&["x"]).unwrap();
        assert!(parse_polynomial("x^63", &v).is_ok());
        assert!(matches!(
            parse_polynomial("x^64", &v),
            Err(ParseError::ExponentOverflow { .. })
        ));
    }

    #[test]
    fn rejects_adjacent_factors_without_star() {
        assert!(matches!(
            parse_polynomial("x y", &xy()),
            Err(ParseError::SyntaxError { .. })
        ));
        assert!(matches!(
            parse_polynomial("x^2y^2", &xy()),
            Err(ParseError::SyntaxError { .. })
        ));
    }

    #[test]
    fn syntax_error_positions() {
        match parse_polynomial("x + ", &xy()) {
            Err(ParseError::SyntaxError { position, .. }) => assert_eq!(position, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse_polynomial("(x", &xy()) {
            Err(ParseError::SyntaxError { position, .. }) => assert_eq!(position, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn formats_zero_and_signs() {
        let v = xy();
        assert_eq!(format_polynomial(&Polynomial::zero(2), &v), "0");
        let p = poly(2, &[(&[2, 0], 1.0), (&[0, 2], -1.0)]);
        assert_eq!(format_polynomial(&p, &v), "x^2 - y^2");
    }

    #[test]
    fn formats_motzkin_canonically() {
        let s = format_polynomial(&motzkin(), &xy());
        assert_eq!(s, "x^4*y^2 + x^2*y^4 - 3*x^2*y^2 + 1");
        assert_eq!(parse_polynomial(&s, &xy()).unwrap(), motzkin());
    }

    #[test]
    fn unary_minus() {
        let p = parse_polynomial("-x^2 + (-1)", &VariableTable::new(&["x"]).unwrap()).unwrap();
        assert_eq!(p, poly(1, &[(&[2], -1.0), (&[0], -1.0)]));
    }

    #[test]
    fn variable_table_validation() {
        assert!(VariableTable::new(&["x", "x"]).is_err());
        assert!(VariableTable::new(&["1x"]).is_err());
        assert!(VariableTable::new(&[""]).is_err());
        assert!(VariableTable::new(&["x_1", "Y2"]).is_ok());
    }

    mod properties {
        use super::*;
        use crate::polyring::monomials_up_to;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]
            #[test]
            fn round_trip_integer_polynomials(
                nv in 1usize..=3,
                coeffs in proptest::collection::vec(-9i32..=9, 84),
            ) {
                let names: Vec<String> = ["x", "y", "z"][..nv].iter().map(|s| s.to_string()).collect();
                let vars = VariableTable::new(&names).unwrap();
                let ms = monomials_up_to(nv, 6);
                let p = Polynomial::from_terms(
                    nv,
                    ms.iter()
                        .cloned()
                        .zip(coeffs.iter().map(|&c| c as f64))
                        .collect(),
                );
                let text = format_polynomial(&p, &vars);
                let q = parse_polynomial(&text, &vars).unwrap();
                prop_assert_eq!(p, q);
            }

            #[test]
            fn parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
                let vars = VariableTable::new(&["x", "y"]).unwrap();
                if let Ok(text) = std::str::from_utf8(&bytes) {
                    let _ = parse_polynomial(text, &vars);
                }
            }
        }
    }
}

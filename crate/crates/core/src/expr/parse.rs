use std::fmt;

use thiserror::Error;

use super::{BinOp, CmpOp, Expr, Func, Kind, LogicOp};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Slash => f.write_str("`/`"),
            Tok::Caret => f.write_str("`^`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Lt => f.write_str("`<`"),
            Tok::Le => f.write_str("`<=`"),
            Tok::Gt => f.write_str("`>`"),
            Tok::Ge => f.write_str("`>=`"),
            Tok::And => f.write_str("`and`"),
            Tok::Or => f.write_str("`or`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    EmptyInput,
    InvalidCharacter(char),
    InvalidNumber(String),
    UnexpectedToken(String),
    UnknownIdentifier(String),
    Arity {
        func: &'static str,
        expected: usize,
        found: usize,
    },
    TypeMismatch {
        expected: Kind,
        found: Kind,
    },
}

/// Parse failure at a 0-based byte offset into the source.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
    /// Tokens that would have been accepted at `offset`.
    pub expected: Vec<&'static str>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::EmptyInput => write!(f, "empty expression")?,
            ParseErrorKind::InvalidCharacter(c) => write!(f, "invalid character {c:?}")?,
            ParseErrorKind::InvalidNumber(s) => write!(f, "invalid number `{s}`")?,
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected {t}")?,
            ParseErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier `{s}`")?,
            ParseErrorKind::Arity {
                func,
                expected,
                found,
            } => write!(f, "{func} takes {expected} argument(s), found {found}")?,
            ParseErrorKind::TypeMismatch { expected, found } => {
                write!(f, "expected a {expected} operand, found a {found} one")?
            }
        }
        write!(f, " at offset {}", self.offset)?;
        if !self.expected.is_empty() {
            write!(f, " (expected one of: {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

const OPERAND: &[&str] = &["number", "identifier", "`(`", "`-`"];

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |offset, kind| ParseError {
        offset,
        kind,
        expected: Vec::new(),
    };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
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
            let text = &src[start..i];
            let v: f64 = text
                .parse()
                .map_err(|_| err(start, ParseErrorKind::InvalidNumber(text.to_string())))?;
            out.push((Tok::Num(v), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &src[start..i];
            let tok = match word {
                "and" => Tok::And,
                "or" => Tok::Or,
                _ => Tok::Ident(word.to_string()),
            };
            out.push((tok, start));
            continue;
        }
        let two = bytes.get(i + 1).copied();
        let (tok, len) = match (c, two) {
            (b'<', Some(b'=')) => (Tok::Le, 2),
            (b'>', Some(b'=')) => (Tok::Ge, 2),
            (b'&', Some(b'&')) => (Tok::And, 2),
            (b'|', Some(b'|')) => (Tok::Or, 2),
            (b'<', _) => (Tok::Lt, 1),
            (b'>', _) => (Tok::Gt, 1),
            (b'+', _) => (Tok::Plus, 1),
            (b'-', _) => (Tok::Minus, 1),
            (b'*', _) => (Tok::Star, 1),
            (b'/', _) => (Tok::Slash, 1),
            (b'^', _) => (Tok::Caret, 1),
            (b'(', _) => (Tok::LParen, 1),
            (b')', _) => (Tok::RParen, 1),
            (b',', _) => (Tok::Comma, 1),
            _ => {
                let ch = src[i..].chars().next().expect("in bounds");
                match ch {
                    '≤' => (Tok::Le, ch.len_utf8()),
                    '≥' => (Tok::Ge, ch.len_utf8()),
                    _ => return Err(err(start, ParseErrorKind::InvalidCharacter(ch))),
                }
            }
        };
        out.push((tok, start));
        i += len;
    }
    out.push((Tok::Eof, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&'static str]) -> ParseError {
        ParseError {
            offset: self.offset(),
            kind: ParseErrorKind::UnexpectedToken(self.peek().to_string()),
            expected: expected.to_vec(),
        }
    }

    fn expect_kind(e: &Expr, want: Kind, offset: usize) -> Result<(), ParseError> {
        let found = e.kind();
        if found == want {
            Ok(())
        } else {
            Err(ParseError {
                offset,
                kind: ParseErrorKind::TypeMismatch {
                    expected: want,
                    found,
                },
                expected: Vec::new(),
            })
        }
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let start = self.offset();
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::Or {
            let (_, at) = self.bump();
            Self::expect_kind(&lhs, Kind::Boolean, start)?;
            let rstart = self.offset();
            let rhs = self.and_expr()?;
            Self::expect_kind(&rhs, Kind::Boolean, rstart.max(at))?;
            lhs = Expr::Logic(LogicOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let start = self.offset();
        let mut lhs = self.cmp_expr()?;
        while *self.peek() == Tok::And {
            self.bump();
            Self::expect_kind(&lhs, Kind::Boolean, start)?;
            let rstart = self.offset();
            let rhs = self.cmp_expr()?;
            Self::expect_kind(&rhs, Kind::Boolean, rstart)?;
            lhs = Expr::Logic(LogicOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> Result<Expr, ParseError> {
        let start = self.offset();
        let lhs = self.sum()?;
        let op = match self.peek() {
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        Self::expect_kind(&lhs, Kind::Numeric, start)?;
        let rstart = self.offset();
        let rhs = self.sum()?;
        Self::expect_kind(&rhs, Kind::Numeric, rstart)?;
        Ok(Expr::Compare(op, Box::new(lhs), Box::new(rhs)))
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let start = self.offset();
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            Self::expect_kind(&lhs, Kind::Numeric, start)?;
            let rstart = self.offset();
            let rhs = self.term()?;
            Self::expect_kind(&rhs, Kind::Numeric, rstart)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let start = self.offset();
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            Self::expect_kind(&lhs, Kind::Numeric, start)?;
            let rstart = self.offset();
            let rhs = self.unary()?;
            Self::expect_kind(&rhs, Kind::Numeric, rstart)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let start = self.offset();
            let inner = self.unary()?;
            Self::expect_kind(&inner, Kind::Numeric, start)?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let start = self.offset();
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        Self::expect_kind(&base, Kind::Numeric, start)?;
        let rstart = self.offset();
        let exp = self.unary()?;
        Self::expect_kind(&exp, Kind::Numeric, rstart)?;
        Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)))
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.or_expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected(&["`)`"]));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                if name == "true" || name == "false" {
                    return Ok(Expr::Bool(name == "true"));
                }
                if let Some(func) = Func::from_name(&name) {
                    return self.call(func, offset);
                }
                if let Some(index) = variable_index(&name) {
                    return Ok(Expr::Var(index));
                }
                Err(ParseError {
                    offset,
                    kind: ParseErrorKind::UnknownIdentifier(name),
                    expected: Vec::new(),
                })
            }
            _ => Err(self.unexpected(OPERAND)),
        }
    }

    fn call(&mut self, func: Func, offset: usize) -> Result<Expr, ParseError> {
        if *self.peek() != Tok::LParen {
            return Err(self.unexpected(&["`(`"]));
        }
        self.bump();
        let mut args = Vec::new();
        loop {
            let astart = self.offset();
            let arg = self.or_expr()?;
            Self::expect_kind(&arg, Kind::Numeric, astart)?;
            args.push(arg);
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RParen => {
                    self.bump();
                    break;
                }
                _ => return Err(self.unexpected(&["`,`", "`)`"])),
            }
        }
        if args.len() != func.arity() {
            return Err(ParseError {
                offset,
                kind: ParseErrorKind::Arity {
                    func: func.name(),
                    expected: func.arity(),
                    found: args.len(),
                },
                expected: Vec::new(),
            });
        }
        Ok(Expr::Call(func, args))
    }
}

fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0')
    {
        return None;
    }
    digits.parse::<usize>().ok().map(|n| n - 1)
}

/// Parses an expression of either kind.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    if source.trim().is_empty() {
        return Err(ParseError {
            offset: 0,
            kind: ParseErrorKind::EmptyInput,
            expected: OPERAND.to_vec(),
        });
    }
    let toks = lex(source)?;
    let mut parser = Parser { toks, pos: 0 };
    let expr = parser.or_expr()?;
    if *parser.peek() != Tok::Eof {
        return Err(parser.unexpected(&["operator", "end of input"]));
    }
    Ok(expr)
}

fn parse_kind(source: &str, want: Kind) -> Result<Expr, ParseError> {
    let e = parse(source)?;
    let found = e.kind();
    if found != want {
        return Err(ParseError {
            offset: 0,
            kind: ParseErrorKind::TypeMismatch {
                expected: want,
                found,
            },
            expected: Vec::new(),
        });
    }
    Ok(e)
}

/// Parses an expression that must be numeric.
pub fn parse_numeric(source: &str) -> Result<Expr, ParseError> {
    parse_kind(source, Kind::Numeric)
}

/// Parses an expression that must be a predicate.
pub fn parse_predicate(source: &str) -> Result<Expr, ParseError> {
    parse_kind(source, Kind::Boolean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_product() {
        assert_eq!(
            parse("0.5*x1").unwrap(),
            Expr::Binary(BinOp::Mul, Box::new(Expr::Num(0.5)), Box::new(Expr::Var(0)))
        );
    }

    #[test]
    fn example_three_probability_tree() {
        let sixth = Expr::Binary(BinOp::Div, Box::new(Expr::Num(1.0)), Box::new(Expr::Num(6.0)));
        let sin_sq = Expr::Binary(
            BinOp::Pow,
            Box::new(Expr::Call(Func::Sin, vec![Expr::Var(0)])),
            Box::new(Expr::Num(2.0)),
        );
        let frac = Expr::Binary(BinOp::Div, Box::new(Expr::Num(17.0)), Box::new(Expr::Num(24.0)));
        let expected = Expr::Binary(
            BinOp::Add,
            Box::new(Expr::Binary(BinOp::Mul, Box::new(sixth), Box::new(sin_sq))),
            Box::new(frac),
        );
        assert_eq!(parse("(1/6)*sin(x1)^2 + 17/24").unwrap(), expected);
    }

    #[test]
    fn unbalanced_call_reports_offset_four() {
        let err = parse("sin(").unwrap_err();
        assert_eq!(err.offset, 4);
        assert!(err.expected.contains(&"number"));
        assert!(err.to_string().contains("offset 4"));
    }

    #[test]
    fn error_kinds() {
        assert_eq!(parse("").unwrap_err().kind, ParseErrorKind::EmptyInput);
        let e = parse("2 * y").unwrap_err();
        assert_eq!(e.offset, 4);
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("y".into()));
        assert_eq!(
            parse("x0").unwrap_err().kind,
            ParseErrorKind::UnknownIdentifier("x0".into())
        );
        let e = parse("max(1)").unwrap_err();
        assert_eq!(
            e.kind,
            ParseErrorKind::Arity {
                func: "max",
                expected: 2,
                found: 1
            }
        );
        assert_eq!(e.offset, 0);
        assert!(matches!(
            parse("sin(1, 2)").unwrap_err().kind,
            ParseErrorKind::Arity { .. }
        ));
        assert!(matches!(
            parse("1 + (x1 < 2)").unwrap_err().kind,
            ParseErrorKind::TypeMismatch { .. }
        ));
        assert!(matches!(
            parse("x1 and true").unwrap_err().kind,
            ParseErrorKind::TypeMismatch { .. }
        ));
        assert_eq!(parse("1 2").unwrap_err().offset, 2);
        assert_eq!(
            parse("1 # 2").unwrap_err().kind,
            ParseErrorKind::InvalidCharacter('#')
        );
        assert!(parse_numeric("x1 < 1").is_err());
        assert!(parse_predicate("x1").is_err());
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(parse("1e-3").unwrap(), Expr::Num(1e-3));
        assert_eq!(parse("2.5E+2").unwrap(), Expr::Num(250.0));
        assert!(matches!(
            parse("1.2.3").unwrap_err().kind,
            ParseErrorKind::InvalidNumber(_)
        ));
    }

    fn arb_numeric() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..1e6).prop_map(Expr::Num),
            (0usize..3).prop_map(Expr::Var),
        ];
        leaf.prop_recursive(5, 48, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Expr::Binary(op, Box::new(a), Box::new(b))),
                (
                    prop_oneof![Just(Func::Sin), Just(Func::Log), Just(Func::Abs)],
                    inner.clone()
                )
                    .prop_map(|(f, a)| Expr::Call(f, vec![a])),
                (inner.clone(), inner).prop_map(|(a, b)| Expr::Call(Func::Max, vec![a, b])),
            ]
        })
    }

    fn arb_predicate() -> impl Strategy<Value = Expr> {
        let cmp = (
            prop_oneof![Just(CmpOp::Lt), Just(CmpOp::Le), Just(CmpOp::Gt), Just(CmpOp::Ge)],
            arb_numeric(),
            arb_numeric(),
        )
            .prop_map(|(op, a, b)| Expr::Compare(op, Box::new(a), Box::new(b)));
        cmp.prop_recursive(3, 12, 2, |inner| {
            (prop_oneof![Just(LogicOp::And), Just(LogicOp::Or)], inner.clone(), inner)
                .prop_map(|(op, a, b)| Expr::Logic(op, Box::new(a), Box::new(b)))
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(e in arb_numeric()) {
            let printed = e.to_string();
            prop_assert_eq!(parse(&printed).unwrap(), e);
        }

        #[test]
        fn predicate_print_then_parse_is_identity(e in arb_predicate()) {
            prop_assert_eq!(parse(&e.to_string()).unwrap(), e);
        }

        #[test]
        fn numeric_eval_is_finite_or_error(e in arb_numeric(), x in -10.0f64..10.0) {
            if let Ok(v) = e.eval(&[x, x, x]) {
                prop_assert!(v.is_finite());
            }
        }
    }
}

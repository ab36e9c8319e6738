//! A small closed expression language for maps, probabilities and region
//! predicates.
//!
//! Numeric expressions range over literals, coordinates `x1..xd`, the
//! operators `+ - * / ^`, unary minus and the functions `sin cos exp log abs
//! min max`. Predicates add the comparisons `< <= > >=` (also `≤ ≥`), the
//! connectives `and`/`or` (also `&&`/`||`) and the literals `true`/`false`.
//! The full grammar lives in `grammar.ebnf` next to this crate's manifest.

mod parse;

use std::fmt;

use thiserror::Error;

pub use parse::{parse, parse_numeric, parse_predicate, ParseError, ParseErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogicOp {
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Min,
    Max,
}

impl Func {
    pub(crate) fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Whether an expression yields a number or a truth value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Numeric,
    Boolean,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Numeric => "numeric",
            Kind::Boolean => "boolean",
        })
    }
}

/// Abstract syntax tree. Variables are stored 0-based (`x1` is `Var(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Bool(bool),
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    Logic(LogicOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("non-finite result")]
    NonFinite,
    #[error("expression uses x{needed} but the point has dimension {got}")]
    DimensionMismatch { needed: usize, got: usize },
    #[error("expected a {expected} expression")]
    KindMismatch { expected: Kind },
}

/// Result of evaluating an expression of either kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Number(f64),
    Bool(bool),
}

impl Expr {
    pub fn kind(&self) -> Kind {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Neg(_) | Expr::Binary(..) | Expr::Call(..) => {
                Kind::Numeric
            }
            Expr::Bool(_) | Expr::Compare(..) | Expr::Logic(..) => Kind::Boolean,
        }
    }

    /// Number of coordinates the expression needs (highest variable index).
    pub fn required_dimension(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Bool(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) => a.required_dimension(),
            Expr::Binary(_, a, b) | Expr::Compare(_, a, b) | Expr::Logic(_, a, b) => {
                a.required_dimension().max(b.required_dimension())
            }
            Expr::Call(_, args) => args.iter().map(Expr::required_dimension).max().unwrap_or(0),
        }
    }

    /// True when the expression references no coordinate.
    pub fn is_constant(&self) -> bool {
        self.required_dimension() == 0
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<Value, EvalError> {
        match self.kind() {
            Kind::Numeric => self.eval(point).map(Value::Number),
            Kind::Boolean => self.eval_bool(point).map(Value::Bool),
        }
    }

    /// Evaluates a numeric expression. Every intermediate result is finite or
    /// the evaluation fails.
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => match point.get(*i) {
                Some(v) => *v,
                None => {
                    return Err(EvalError::DimensionMismatch {
                        needed: i + 1,
                        got: point.len(),
                    })
                }
            },
            Expr::Neg(a) => -a.eval(point)?,
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(point)?, b.eval(point)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if b == 2.0 {
                            a * a
                        } else {
                            a.powf(b)
                        }
                    }
                }
            }
            Expr::Call(func, args) => {
                let a = args[0].eval(point)?;
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(EvalError::LogDomain(a));
                        }
                        a.ln()
                    }
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(point)?),
                    Func::Max => a.max(args[1].eval(point)?),
                }
            }
            Expr::Bool(_) | Expr::Compare(..) | Expr::Logic(..) => {
                return Err(EvalError::KindMismatch {
                    expected: Kind::Numeric,
                })
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Evaluates a predicate.
    pub fn eval_bool(&self, point: &[f64]) -> Result<bool, EvalError> {
        match self {
            Expr::Bool(b) => Ok(*b),
            Expr::Compare(op, a, b) => {
                let (a, b) = (a.eval(point)?, b.eval(point)?);
                Ok(match op {
                    CmpOp::Lt => a < b,
                    CmpOp::Le => a <= b,
                    CmpOp::Gt => a > b,
                    CmpOp::Ge => a >= b,
                })
            }
            Expr::Logic(LogicOp::And, a, b) => Ok(a.eval_bool(point)? && b.eval_bool(point)?),
            Expr::Logic(LogicOp::Or, a, b) => Ok(a.eval_bool(point)? || b.eval_bool(point)?),
            _ => Err(EvalError::KindMismatch {
                expected: Kind::Boolean,
            }),
        }
    }
}

/// Fully parenthesized rendering; `parse(&e.to_string())` reproduces `e`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Binary(op, a, b) => {
                let op = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {op} {b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Compare(op, a, b) => {
                let op = match op {
                    CmpOp::Lt => "<",
                    CmpOp::Le => "<=",
                    CmpOp::Gt => ">",
                    CmpOp::Ge => ">=",
                };
                write!(f, "({a} {op} {b})")
            }
            Expr::Logic(op, a, b) => {
                let op = match op {
                    LogicOp::And => "and",
                    LogicOp::Or => "or",
                };
                write!(f, "({a} {op} {b})")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num(src: &str, p: &[f64]) -> Result<f64, EvalError> {
        parse(src).unwrap().eval(p)
    }

    #[test]
    fn identity() {
        assert_eq!(num("x1", &[0.25]).unwrap(), 0.25);
    }

    #[test]
    fn example_three_probability_at_zero() {
        let v = num("(1/6)*sin(x1)^2 + 17/24", &[0.0]).unwrap();
        assert_eq!(v, 17.0 / 24.0);
        assert!((v - 0.708_333_3).abs() < 1e-7);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(num("log(x1)", &[0.0]), Err(EvalError::LogDomain(_))));
        assert!(matches!(num("log(x1)", &[-1.0]), Err(EvalError::LogDomain(_))));
        assert_eq!(num("1/x1", &[0.0]), Err(EvalError::DivisionByZero));
        assert_eq!(num("(-8)^(1/3)", &[]), Err(EvalError::NonFinite));
        assert_eq!(num("exp(1000)", &[]), Err(EvalError::NonFinite));
    }

    #[test]
    fn dimension_mismatch() {
        assert_eq!(
            num("x1 + x3", &[1.0, 2.0]),
            Err(EvalError::DimensionMismatch { needed: 3, got: 2 })
        );
        assert_eq!(parse("x1 + x3").unwrap().required_dimension(), 3);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(num("-2^2", &[]).unwrap(), -4.0);
        assert_eq!(num("2^-1", &[]).unwrap(), 0.5);
        assert_eq!(num("2^3^2", &[]).unwrap(), 512.0);
        assert_eq!(num("8/4/2", &[]).unwrap(), 1.0);
        assert_eq!(num("1-2-3", &[]).unwrap(), -4.0);
        assert_eq!(num("1+2*3", &[]).unwrap(), 7.0);
        assert_eq!(num("-x1*2", &[3.0]).unwrap(), -6.0);
        assert_eq!(num("min(x1, 2) + max(-1, abs(-3))", &[5.0]).unwrap(), 5.0);
    }

    #[test]
    fn predicates() {
        let p = parse("x1 >= 0 and x1 < 0.5 or x2 ≥ 3").unwrap();
        assert_eq!(p.kind(), Kind::Boolean);
        assert!(p.eval_bool(&[0.25, 0.0]).unwrap());
        assert!(!p.eval_bool(&[0.75, 0.0]).unwrap());
        assert!(p.eval_bool(&[0.75, 3.0]).unwrap());
        assert!(parse("true").unwrap().eval_bool(&[]).unwrap());
        assert!(parse("x1 > 0 && x1 <= 1").unwrap().eval_bool(&[1.0]).unwrap());
    }

    #[test]
    fn kind_misuse_is_an_error() {
        let p = parse("x1 < 1").unwrap();
        assert_eq!(
            p.eval(&[0.0]),
            Err(EvalError::KindMismatch {
                expected: Kind::Numeric
            })
        );
        assert!(parse("x1").unwrap().eval_bool(&[0.0]).is_err());
    }

    #[test]
    fn display_round_trip() {
        for src in [
            "(1/6)*sin(x1)^2 + 17/24",
            "-x1^2 - -3",
            "x1/10 + 3/10",
            "min(x1, x2) * 1e-10",
            "x1 >= 0 and (x1 < 1 or false)",
        ] {
            let e = parse(src).unwrap();
            let again = parse(&e.to_string()).unwrap();
            assert_eq!(e, again, "{src} -> {e}");
        }
    }

    #[test]
    fn eval_is_bit_deterministic() {
        let e = parse("exp(sin(x1)) / (1 + x1^2)").unwrap();
        let a = e.eval(&[0.3]).unwrap();
        let b = e.eval(&[0.3]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

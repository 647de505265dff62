use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryFn {
    Log,
    Log1p,
    Exp,
    Sqrt,
    Abs,
    Tanh,
    Neg,
}

impl UnaryFn {
    pub const ALL: [UnaryFn; 7] = [
        UnaryFn::Log,
        UnaryFn::Log1p,
        UnaryFn::Exp,
        UnaryFn::Sqrt,
        UnaryFn::Abs,
        UnaryFn::Tanh,
        UnaryFn::Neg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Log => "log",
            UnaryFn::Log1p => "log1p",
            UnaryFn::Exp => "exp",
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Abs => "abs",
            UnaryFn::Tanh => "tanh",
            UnaryFn::Neg => "neg",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryFn::Log => x.ln(),
            UnaryFn::Log1p => x.ln_1p(),
            UnaryFn::Exp => x.exp(),
            UnaryFn::Sqrt => x.sqrt(),
            UnaryFn::Abs => x.abs(),
            UnaryFn::Tanh => x.tanh(),
            UnaryFn::Neg => -x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFn {
    Mean,
    Min,
    Max,
    Sum,
}

impl AggFn {
    pub const ALL: [AggFn; 4] = [AggFn::Mean, AggFn::Min, AggFn::Max, AggFn::Sum];

    pub fn name(self) -> &'static str {
        match self {
            AggFn::Mean => "mean",
            AggFn::Min => "min",
            AggFn::Max => "max",
            AggFn::Sum => "sum",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            AggFn::Sum => values.iter().sum(),
            AggFn::Mean => values.iter().sum::<f64>() / values.len() as f64,
            // NaN-propagating, unlike f64::min/max
            AggFn::Min => values.iter().copied().fold(f64::INFINITY, |a, b| {
                if a.is_nan() || b < a || b.is_nan() {
                    b
                } else {
                    a
                }
            }),
            AggFn::Max => values.iter().copied().fold(f64::NEG_INFINITY, |a, b| {
                if a.is_nan() || b > a || b.is_nan() {
                    b
                } else {
                    a
                }
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => a.powf(b),
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => PREC_ADD,
            BinOp::Mul | BinOp::Div => PREC_MUL,
            BinOp::Pow => PREC_POW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
        }
    }

    pub fn is_equality(self) -> bool {
        matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    pub fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

/// Expression tree. `Str` is only meaningful as the operand of an equality
/// comparison against a categorical column; validation enforces this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Col(String),
    Num(f64),
    Str(String),
    Unary(UnaryFn, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    Aggregate(AggFn, Vec<Expr>),
}

const PREC_CMP: u8 = 1;
const PREC_ADD: u8 = 2;
const PREC_MUL: u8 = 3;
const PREC_UNARY: u8 = 4;
const PREC_POW: u8 = 5;
const PREC_ATOM: u8 = 6;

impl Expr {
    pub fn col(name: impl Into<String>) -> Self {
        Expr::Col(name.into())
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn compare(op: CmpOp, a: Expr, b: Expr) -> Self {
        Expr::Compare(op, Box::new(a), Box::new(b))
    }

    pub fn unary(f: UnaryFn, a: Expr) -> Self {
        Expr::Unary(f, Box::new(a))
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Col(_) | Expr::Num(_) | Expr::Str(_) => {}
            Expr::Unary(_, a) => a.visit(f),
            Expr::Binary(_, a, b) | Expr::Compare(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Aggregate(_, args) => args.iter().for_each(|a| a.visit(f)),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Col(_) | Expr::Num(_) | Expr::Str(_) => 1,
            Expr::Unary(_, a) => 1 + a.depth(),
            Expr::Binary(_, a, b) | Expr::Compare(_, a, b) => 1 + a.depth().max(b.depth()),
            Expr::Aggregate(_, args) => 1 + args.iter().map(Expr::depth).max().unwrap_or(0),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(v) if v.is_sign_negative() => PREC_UNARY,
            Expr::Col(_) | Expr::Num(_) | Expr::Str(_) | Expr::Aggregate(..) => PREC_ATOM,
            // neg(literal) prints in call form
            Expr::Unary(UnaryFn::Neg, a) if matches!(**a, Expr::Num(_)) => PREC_ATOM,
            Expr::Unary(UnaryFn::Neg, _) => PREC_UNARY,
            Expr::Unary(..) => PREC_ATOM,
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Compare(..) => PREC_CMP,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

fn write_string_literal(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

/// Canonical rendering with the minimal parentheses needed to reparse to the
/// same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Col(name) => {
                f.write_str("col(")?;
                write_string_literal(f, name)?;
                f.write_str(")")
            }
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Str(s) => write_string_literal(f, s),
            Expr::Unary(UnaryFn::Neg, a) if matches!(**a, Expr::Num(_)) => write!(f, "neg({a})"),
            Expr::Unary(UnaryFn::Neg, a) => {
                f.write_str("-")?;
                a.fmt_child(f, a.precedence() < PREC_UNARY)
            }
            Expr::Unary(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Binary(BinOp::Pow, a, b) => {
                a.fmt_child(f, a.precedence() <= PREC_POW)?;
                f.write_str(" ^ ")?;
                b.fmt_child(f, b.precedence() < PREC_UNARY)
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                a.fmt_child(f, a.precedence() < p)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_child(f, b.precedence() <= p)
            }
            Expr::Compare(op, a, b) => {
                a.fmt_child(f, a.precedence() < PREC_CMP)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_child(f, b.precedence() <= PREC_CMP)
            }
            Expr::Aggregate(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

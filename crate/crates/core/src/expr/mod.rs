//! Limit-state expressions: parsing, evaluation and exact gradients.
//!
//! Grammar (EBNF):
//!
//! ```text
//! expr    = term , { ( "+" | "-" ) , term } ;
//! term    = unary , { ( "*" | "/" ) , unary } ;
//! unary   = "-" , unary | primary ;
//! primary = number | ident | call | "(" , expr , ")" ;
//! call    = ( "min" | "ln" | "exp" ) , "(" , expr , { "," , expr } , ")" ;
//! ident   = ( letter | "_" ) , { letter | digit | "_" } ;
//! number  = digits , [ "." , digits ] , [ ( "e" | "E" ) , [ "+" | "-" ] , digits ] ;
//! ```
//!
//! `ln` and `exp` take one argument, `min` one or more.

mod parser;
mod tape;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use tape::Tape;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Ln,
    Exp,
}

/// Abstract syntax tree of a limit-state expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// A value together with its partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct DualValue {
    pub value: f64,
    pub partials: BTreeMap<String, f64>,
}

impl DualValue {
    pub fn partial(&self, name: &str) -> f64 {
        self.partials.get(name).copied().unwrap_or(0.0)
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Self> {
        parser::parse(text)
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// True when the expression contains no `min`.
    pub fn is_smooth(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(_) => true,
            Expr::Neg(e) => e.is_smooth(),
            Expr::Bin(_, a, b) => a.is_smooth() && b.is_smooth(),
            Expr::Call(Func::Min, _) => false,
            Expr::Call(_, args) => args.iter().all(Expr::is_smooth),
        }
    }

    /// Rename free variables.
    pub fn rename(&self, map: &dyn Fn(&str) -> Option<String>) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(v) => Expr::Var(map(v).unwrap_or_else(|| v.clone())),
            Expr::Neg(e) => Expr::Neg(Box::new(e.rename(map))),
            Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.rename(map)), Box::new(b.rename(map))),
            Expr::Call(f, args) => Expr::Call(*f, args.iter().map(|a| a.rename(map)).collect()),
        }
    }

    pub fn eval(&self, binding: &HashMap<String, f64>) -> Result<f64> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(name) => binding
                .get(name)
                .copied()
                .ok_or_else(|| Error::Eval(format!("no value bound for `{name}`"))),
            Expr::Neg(e) => Ok(-e.eval(binding)?),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval(binding)?, b.eval(binding)?);
                match op {
                    BinOp::Add => Ok(x + y),
                    BinOp::Sub => Ok(x - y),
                    BinOp::Mul => Ok(x * y),
                    BinOp::Div => {
                        if y == 0.0 {
                            Err(Error::Eval("division by zero".into()))
                        } else {
                            Ok(x / y)
                        }
                    }
                }
            }
            Expr::Call(Func::Min, args) => {
                let mut best = f64::INFINITY;
                for a in args {
                    let v = a.eval(binding)?;
                    if v < best {
                        best = v;
                    }
                }
                Ok(best)
            }
            Expr::Call(Func::Ln, args) => {
                let v = args[0].eval(binding)?;
                if v <= 0.0 {
                    Err(Error::Eval(format!("ln of non-positive value {v}")))
                } else {
                    Ok(v.ln())
                }
            }
            Expr::Call(Func::Exp, args) => Ok(args[0].eval(binding)?.exp()),
        }
    }

    /// Value and gradient with respect to every free variable. At `min` ties the
    /// first minimal argument carries the derivative.
    pub fn eval_with_gradient(&self, binding: &HashMap<String, f64>) -> Result<DualValue> {
        let names: Vec<String> = self.free_vars().into_iter().collect();
        let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let tape = Tape::compile(self, &|n| index.get(n).copied())?;
        let mut x = Vec::with_capacity(names.len());
        for n in &names {
            x.push(
                *binding
                    .get(n)
                    .ok_or_else(|| Error::Eval(format!("no value bound for `{n}`")))?,
            );
        }
        let mut grad = vec![0.0; names.len()];
        let value = tape.eval_grad(&x, &mut grad)?;
        Ok(DualValue {
            value,
            partials: names.into_iter().zip(grad).collect(),
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let paren = |f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool| {
            if wrap {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                paren(f, e, e.precedence() < 3)
            }
            Expr::Bin(op, a, b) => {
                let p = self.precedence();
                paren(f, a, a.precedence() < p)?;
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, " {sym} ")?;
                paren(f, b, b.precedence() <= p)
            }
            Expr::Call(func, args) => {
                let name = match func {
                    Func::Min => "min",
                    Func::Ln => "ln",
                    Func::Exp => "exp",
                };
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

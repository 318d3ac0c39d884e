use super::{BinOp, Expr, Func};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Ln(usize),
    Exp(usize),
    Min(Vec<usize>),
}

/// An expression flattened to a topologically ordered tape with variables
/// resolved to slot indices. Evaluates value and gradient by reverse
/// accumulation without touching string keys.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    n_vars: usize,
}

impl Tape {
    /// `slot` maps a free variable name to its index in the input vector.
    pub fn compile(expr: &Expr, slot: &dyn Fn(&str) -> Option<usize>) -> Result<Self> {
        let mut ops = Vec::new();
        let mut n_vars = 0;
        emit(expr, slot, &mut ops, &mut n_vars)?;
        Ok(Self { ops, n_vars })
    }

    /// Highest variable slot referenced plus one.
    pub fn arity(&self) -> usize {
        self.n_vars
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut vals = vec![0.0; self.ops.len()];
        self.forward(x, &mut vals)?;
        Ok(*vals.last().unwrap())
    }

    /// Value, with `grad` (length ≥ arity) overwritten by ∂/∂x.
    pub fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let n = self.ops.len();
        let mut vals = vec![0.0; n];
        self.forward(x, &mut vals)?;
        let mut adj = vec![0.0; n];
        adj[n - 1] = 1.0;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in (0..n).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            match &self.ops[i] {
                Op::Const(_) => {}
                Op::Var(k) => grad[*k] += a,
                Op::Neg(p) => adj[*p] -= a,
                Op::Add(p, q) => {
                    adj[*p] += a;
                    adj[*q] += a;
                }
                Op::Sub(p, q) => {
                    adj[*p] += a;
                    adj[*q] -= a;
                }
                Op::Mul(p, q) => {
                    adj[*p] += a * vals[*q];
                    adj[*q] += a * vals[*p];
                }
                Op::Div(p, q) => {
                    let y = vals[*q];
                    adj[*p] += a / y;
                    adj[*q] -= a * vals[*p] / (y * y);
                }
                Op::Ln(p) => adj[*p] += a / vals[*p],
                Op::Exp(p) => adj[*p] += a * vals[i],
                Op::Min(args) => {
                    // first argument attaining the minimum carries the derivative
                    let best = args.iter().copied().find(|&k| vals[k] == vals[i]).unwrap();
                    adj[best] += a;
                }
            }
        }
        Ok(vals[n - 1])
    }

    fn forward(&self, x: &[f64], vals: &mut [f64]) -> Result<()> {
        for (i, op) in self.ops.iter().enumerate() {
            vals[i] = match op {
                Op::Const(c) => *c,
                Op::Var(k) => x[*k],
                Op::Neg(p) => -vals[*p],
                Op::Add(p, q) => vals[*p] + vals[*q],
                Op::Sub(p, q) => vals[*p] - vals[*q],
                Op::Mul(p, q) => vals[*p] * vals[*q],
                Op::Div(p, q) => {
                    if vals[*q] == 0.0 {
                        return Err(Error::Eval("division by zero".into()));
                    }
                    vals[*p] / vals[*q]
                }
                Op::Ln(p) => {
                    if vals[*p] <= 0.0 {
                        return Err(Error::Eval(format!("ln of non-positive value {}", vals[*p])));
                    }
                    vals[*p].ln()
                }
                Op::Exp(p) => vals[*p].exp(),
                Op::Min(args) => args.iter().map(|&k| vals[k]).fold(f64::INFINITY, f64::min),
            };
        }
        Ok(())
    }
}

fn emit(e: &Expr, slot: &dyn Fn(&str) -> Option<usize>, ops: &mut Vec<Op>, n_vars: &mut usize) -> Result<usize> {
    let op = match e {
        Expr::Num(v) => Op::Const(*v),
        Expr::Var(name) => {
            let k = slot(name).ok_or_else(|| Error::Eval(format!("unbound variable `{name}`")))?;
            *n_vars = (*n_vars).max(k + 1);
            Op::Var(k)
        }
        Expr::Neg(a) => Op::Neg(emit(a, slot, ops, n_vars)?),
        Expr::Bin(op, a, b) => {
            let p = emit(a, slot, ops, n_vars)?;
            let q = emit(b, slot, ops, n_vars)?;
            match op {
                BinOp::Add => Op::Add(p, q),
                BinOp::Sub => Op::Sub(p, q),
                BinOp::Mul => Op::Mul(p, q),
                BinOp::Div => Op::Div(p, q),
            }
        }
        Expr::Call(Func::Ln, args) => Op::Ln(emit(&args[0], slot, ops, n_vars)?),
        Expr::Call(Func::Exp, args) => Op::Exp(emit(&args[0], slot, ops, n_vars)?),
        Expr::Call(Func::Min, args) => {
            let mut idx = Vec::with_capacity(args.len());
            for a in args {
                idx.push(emit(a, slot, ops, n_vars)?);
            }
            Op::Min(idx)
        }
    };
    ops.push(op);
    Ok(ops.len() - 1)
}

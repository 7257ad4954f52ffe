//! Straight-line compiled form of one or more expressions.
//!
//! Expressions are lowered to SSA instructions with structural hash-consing,
//! so subterms shared between outputs (typical for the components of a
//! gradient) are evaluated once.

use std::collections::HashMap;

use super::{CmpOp, Expr, Layout};
use super::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Op {
    Const(u64),
    Input(u32),
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Powi(u32, i32),
    Exp(u32),
    Sin(u32),
    Cos(u32),
    Flat(u32, u32),
    Select {
        op: CmpOp,
        lhs: u32,
        rhs: u32,
        then: u32,
        other: u32,
    },
}

#[derive(Debug, Clone)]
pub struct Program {
    ops: Vec<Op>,
    outputs: Vec<u32>,
    inputs: usize,
}

struct Builder<'a> {
    ops: Vec<Op>,
    index: HashMap<Op, u32>,
    layout: &'a Layout,
}

impl Builder<'_> {
    fn push(&mut self, op: Op) -> u32 {
        if let Some(&i) = self.index.get(&op) {
            return i;
        }
        let i = self.ops.len() as u32;
        self.ops.push(op);
        self.index.insert(op, i);
        i
    }

    fn lower(&mut self, e: &Expr) -> u32 {
        match e {
            Expr::Const(c) => self.push(Op::Const(c.to_bits())),
            Expr::Var(v) => {
                let slot = self.layout.slot(*v).expect("variable outside layout") as u32;
                self.push(Op::Input(slot))
            }
            Expr::Neg(a) => {
                let a = self.lower(a);
                self.push(Op::Neg(a))
            }
            Expr::Add(a, b) => {
                let (a, b) = (self.lower(a), self.lower(b));
                self.push(Op::Add(a, b))
            }
            Expr::Sub(a, b) => {
                let (a, b) = (self.lower(a), self.lower(b));
                self.push(Op::Sub(a, b))
            }
            Expr::Mul(a, b) => {
                let (a, b) = (self.lower(a), self.lower(b));
                self.push(Op::Mul(a, b))
            }
            Expr::Div(a, b) => {
                let (a, b) = (self.lower(a), self.lower(b));
                self.push(Op::Div(a, b))
            }
            Expr::Pow(a, k) => {
                let a = self.lower(a);
                self.push(Op::Powi(a, *k))
            }
            Expr::Exp(a) => {
                let a = self.lower(a);
                self.push(Op::Exp(a))
            }
            Expr::Sin(a) => {
                let a = self.lower(a);
                self.push(Op::Sin(a))
            }
            Expr::Cos(a) => {
                let a = self.lower(a);
                self.push(Op::Cos(a))
            }
            Expr::Flat(a, k) => {
                let a = self.lower(a);
                self.push(Op::Flat(a, *k))
            }
            Expr::Piecewise(c, a, b) => {
                let lhs = self.lower(&c.lhs);
                let rhs = self.lower(&c.rhs);
                let then = self.lower(a);
                let other = self.lower(b);
                self.push(Op::Select {
                    op: c.op,
                    lhs,
                    rhs,
                    then,
                    other,
                })
            }
        }
    }
}

impl Program {
    pub fn compile(exprs: &[Expr], layout: &Layout) -> Program {
        let mut b = Builder {
            ops: Vec::new(),
            index: HashMap::new(),
            layout,
        };
        let outputs = exprs.iter().map(|e| b.lower(e)).collect();
        Program {
            ops: b.ops,
            outputs,
            inputs: layout.dim(),
        }
    }

    pub fn outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Evaluates all outputs at `x`. `scratch` is resized as needed and can be
    /// reused across calls.
    pub fn eval_into<S: Scalar>(&self, x: &[S], out: &mut [S], scratch: &mut Vec<S>) {
        debug_assert_eq!(x.len(), self.inputs);
        debug_assert_eq!(out.len(), self.outputs.len());
        scratch.clear();
        scratch.reserve(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Const(bits) => S::cst(f64::from_bits(bits)),
                Op::Input(i) => x[i as usize],
                Op::Neg(a) => -scratch[a as usize],
                Op::Add(a, b) => scratch[a as usize] + scratch[b as usize],
                Op::Sub(a, b) => scratch[a as usize] - scratch[b as usize],
                Op::Mul(a, b) => scratch[a as usize] * scratch[b as usize],
                Op::Div(a, b) => scratch[a as usize] / scratch[b as usize],
                Op::Powi(a, k) => scratch[a as usize].powi(k),
                Op::Exp(a) => scratch[a as usize].exp(),
                Op::Sin(a) => scratch[a as usize].sin(),
                Op::Cos(a) => scratch[a as usize].cos(),
                Op::Flat(a, k) => scratch[a as usize].flat(k),
                Op::Select {
                    op,
                    lhs,
                    rhs,
                    then,
                    other,
                } => {
                    if op.holds(scratch[lhs as usize].re(), scratch[rhs as usize].re()) {
                        scratch[then as usize]
                    } else {
                        scratch[other as usize]
                    }
                }
            };
            scratch.push(v);
        }
        for (o, &i) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[i as usize];
        }
    }

    pub fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let mut out = vec![S::cst(0.0); self.outputs.len()];
        let mut scratch = Vec::new();
        self.eval_into(x, &mut out, &mut scratch);
        out
    }
}

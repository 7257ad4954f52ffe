//! Hamiltonian expressions: parsing, printing, symbolic differentiation and
//! compiled evaluation.
//!
//! Phase-space coordinates are ordered as pairs. The `m` action-angle pairs
//! `(p_i, q_i)` come first, then the fiber pairs `(x_j, y_j)`:
//! `(p1, q1, ..., pm, qm, x1, y1, ..., xk, yk)`. Within every pair the first
//! entry plays the role of `x` in the global sign convention (see
//! [`crate::symplectic_linear::SymplecticSpace`]).

mod parser;
mod program;
pub mod scalar;

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

pub use parser::parse;
pub use program::Program;
pub use scalar::{Dual, Scalar};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    P,
    Q,
    X,
    Y,
}

/// A named coordinate, 1-based (`x1` is `Var { kind: X, index: 1 }`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub kind: VarKind,
    pub index: u32,
}

impl Var {
    pub const fn x(index: u32) -> Var {
        Var { kind: VarKind::X, index }
    }
    pub const fn y(index: u32) -> Var {
        Var { kind: VarKind::Y, index }
    }
    pub const fn p(index: u32) -> Var {
        Var { kind: VarKind::P, index }
    }
    pub const fn q(index: u32) -> Var {
        Var { kind: VarKind::Q, index }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.kind {
            VarKind::P => 'p',
            VarKind::Q => 'q',
            VarKind::X => 'x',
            VarKind::Y => 'y',
        };
        write!(f, "{c}{}", self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    #[inline]
    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cond {
    pub lhs: Expr,
    pub op: CmpOp,
    pub rhs: Expr,
}

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    /// `u^(-k) exp(-1/u^2)` extended by 0 at `u = 0`; `k = 0` is `flat_exp`.
    Flat(Box<Expr>, u32),
    Piecewise(Box<Cond>, Box<Expr>, Box<Expr>),
}

// Simplifying constructors. They only fold identities that hold for every
// finite input, so evaluation results are unchanged.
impl Expr {
    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            a => Expr::Neg(Box::new(a)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => match b {
                Expr::Neg(nb) => Expr::Sub(Box::new(a), nb),
                b => Expr::Add(Box::new(a), Box::new(b)),
            },
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(x), _) if x == 0.0 => Expr::Const(0.0),
            (_, Some(y)) if y == 0.0 => Expr::Const(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            (None, Some(_)) => Expr::Mul(Box::new(b), Box::new(a)),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
            (Some(x), _) if x == 0.0 => Expr::Const(0.0),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn powi(a: Expr, k: i32) -> Expr {
        match (k, a.as_const()) {
            (0, _) => Expr::Const(1.0),
            (1, _) => a,
            (_, Some(c)) => Expr::Const(c.powi(k)),
            _ => Expr::Pow(Box::new(a), k),
        }
    }

    pub fn exp(a: Expr) -> Expr {
        Expr::Exp(Box::new(a))
    }

    pub fn sin(a: Expr) -> Expr {
        Expr::Sin(Box::new(a))
    }

    pub fn cos(a: Expr) -> Expr {
        Expr::Cos(Box::new(a))
    }

    pub fn flat(a: Expr, k: u32) -> Expr {
        match a.as_const() {
            Some(c) => Expr::Const(scalar::flat_value(c, k)),
            None => Expr::Flat(Box::new(a), k),
        }
    }

    pub fn piecewise(lhs: Expr, op: CmpOp, rhs: Expr, then: Expr, other: Expr) -> Expr {
        if then == other {
            return then;
        }
        if let (Some(a), Some(b)) = (lhs.as_const(), rhs.as_const()) {
            return if op.holds(a, b) { then } else { other };
        }
        Expr::Piecewise(Box::new(Cond { lhs, op, rhs }), Box::new(then), Box::new(other))
    }

    /// Sum of a list, left-associated; empty sums are 0.
    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        terms
            .into_iter()
            .fold(Expr::Const(0.0), Expr::add)
    }

    /// Symbolic partial derivative.
    pub fn diff(&self, v: Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::c(0.0),
            Expr::Var(w) => Expr::c(if *w == v { 1.0 } else { 0.0 }),
            Expr::Neg(a) => Expr::neg(a.diff(v)),
            Expr::Add(a, b) => Expr::add(a.diff(v), b.diff(v)),
            Expr::Sub(a, b) => Expr::sub(a.diff(v), b.diff(v)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(v), (**b).clone()),
                Expr::mul((**a).clone(), b.diff(v)),
            ),
            Expr::Div(a, b) => {
                let da = a.diff(v);
                let db = b.diff(v);
                if db.is_zero() {
                    Expr::div(da, (**b).clone())
                } else {
                    Expr::div(
                        Expr::sub(
                            Expr::mul(da, (**b).clone()),
                            Expr::mul((**a).clone(), db),
                        ),
                        Expr::powi((**b).clone(), 2),
                    )
                }
            }
            Expr::Pow(a, k) => Expr::mul(
                Expr::mul(Expr::c(*k as f64), Expr::powi((**a).clone(), k - 1)),
                a.diff(v),
            ),
            Expr::Exp(a) => Expr::mul(self.clone(), a.diff(v)),
            Expr::Sin(a) => Expr::mul(Expr::cos((**a).clone()), a.diff(v)),
            Expr::Cos(a) => Expr::neg(Expr::mul(Expr::sin((**a).clone()), a.diff(v))),
            Expr::Flat(a, k) => {
                let da = a.diff(v);
                if da.is_zero() {
                    return Expr::c(0.0);
                }
                let inner = (**a).clone();
                let outer = Expr::add(
                    Expr::mul(Expr::c(-(*k as f64)), Expr::flat(inner.clone(), k + 1)),
                    Expr::mul(Expr::c(2.0), Expr::flat(inner, k + 3)),
                );
                Expr::mul(outer, da)
            }
            Expr::Piecewise(c, a, b) => Expr::piecewise(
                c.lhs.clone(),
                c.op,
                c.rhs.clone(),
                a.diff(v),
                b.diff(v),
            ),
        }
    }

    /// Replaces variables by expressions.
    pub fn substitute(&self, f: &dyn Fn(Var) -> Option<Expr>) -> Expr {
        let s = |e: &Expr| e.substitute(f);
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) => f(*v).unwrap_or(Expr::Var(*v)),
            Expr::Neg(a) => Expr::neg(s(a)),
            Expr::Add(a, b) => Expr::add(s(a), s(b)),
            Expr::Sub(a, b) => Expr::sub(s(a), s(b)),
            Expr::Mul(a, b) => Expr::mul(s(a), s(b)),
            Expr::Div(a, b) => Expr::div(s(a), s(b)),
            Expr::Pow(a, k) => Expr::powi(s(a), *k),
            Expr::Exp(a) => Expr::exp(s(a)),
            Expr::Sin(a) => Expr::sin(s(a)),
            Expr::Cos(a) => Expr::cos(s(a)),
            Expr::Flat(a, k) => Expr::flat(s(a), *k),
            Expr::Piecewise(c, a, b) => {
                Expr::piecewise(s(&c.lhs), c.op, s(&c.rhs), s(a), s(b))
            }
        }
    }

    /// Calls `f` on every variable occurring in the tree.
    pub fn visit_vars(&self, f: &mut dyn FnMut(Var)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Neg(a)
            | Expr::Pow(a, _)
            | Expr::Exp(a)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::Flat(a, _) => a.visit_vars(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            Expr::Piecewise(c, a, b) => {
                c.lhs.visit_vars(f);
                c.rhs.visit_vars(f);
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    /// Canonical printer; `parse(e.to_string())` reproduces `e`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if c.is_finite() {
                    write!(f, "{c:?}")
                } else {
                    write!(f, "({c})")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.write_child(f, 4)
            }
            Expr::Add(a, b) => {
                a.write_child(f, 1)?;
                write!(f, " + ")?;
                b.write_child(f, 2)
            }
            Expr::Sub(a, b) => {
                a.write_child(f, 1)?;
                write!(f, " - ")?;
                b.write_child(f, 2)
            }
            Expr::Mul(a, b) => {
                a.write_child(f, 2)?;
                write!(f, "*")?;
                b.write_child(f, 4)
            }
            Expr::Div(a, b) => {
                a.write_child(f, 2)?;
                write!(f, "/")?;
                b.write_child(f, 4)
            }
            Expr::Pow(a, k) => {
                a.write_child(f, 5)?;
                write!(f, "^{k}")
            }
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Flat(a, 0) => write!(f, "flat_exp({a})"),
            Expr::Flat(a, k) => write!(f, "flat_exp({a}, {k})"),
            Expr::Piecewise(c, a, b) => write!(
                f,
                "piecewise({} {} {}, {a}, {b})",
                c.lhs,
                c.op.symbol(),
                c.rhs
            ),
        }
    }
}

/// Arrangement of coordinates: `action_pairs` `(p, q)` pairs followed by
/// `fiber_pairs` `(x, y)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Layout {
    pub action_pairs: usize,
    pub fiber_pairs: usize,
}

impl Layout {
    pub const fn fiber(k: usize) -> Layout {
        Layout {
            action_pairs: 0,
            fiber_pairs: k,
        }
    }

    pub const fn new(action_pairs: usize, fiber_pairs: usize) -> Layout {
        Layout {
            action_pairs,
            fiber_pairs,
        }
    }

    /// Degrees of freedom.
    pub const fn dof(&self) -> usize {
        self.action_pairs + self.fiber_pairs
    }

    pub const fn dim(&self) -> usize {
        2 * self.dof()
    }

    pub fn slot(&self, v: Var) -> Option<usize> {
        let i = v.index as usize;
        if i == 0 {
            return None;
        }
        match v.kind {
            VarKind::P if i <= self.action_pairs => Some(2 * (i - 1)),
            VarKind::Q if i <= self.action_pairs => Some(2 * (i - 1) + 1),
            VarKind::X if i <= self.fiber_pairs => Some(2 * (self.action_pairs + i - 1)),
            VarKind::Y if i <= self.fiber_pairs => Some(2 * (self.action_pairs + i - 1) + 1),
            _ => None,
        }
    }

    /// The coordinate variable stored in `slot`.
    pub fn var_at(&self, slot: usize) -> Var {
        let pair = slot / 2;
        let second = slot % 2 == 1;
        if pair < self.action_pairs {
            let i = pair as u32 + 1;
            if second {
                Var::q(i)
            } else {
                Var::p(i)
            }
        } else {
            let i = (pair - self.action_pairs) as u32 + 1;
            if second {
                Var::y(i)
            } else {
                Var::x(i)
            }
        }
    }

    /// Smallest layout containing every variable of `e`.
    pub fn infer(e: &Expr) -> Layout {
        let mut m = 0usize;
        let mut k = 0usize;
        e.visit_vars(&mut |v| match v.kind {
            VarKind::P | VarKind::Q => m = m.max(v.index as usize),
            VarKind::X | VarKind::Y => k = k.max(v.index as usize),
        });
        Layout::new(m, k)
    }

    pub fn contains(&self, other: &Layout) -> bool {
        self.action_pairs >= other.action_pairs && self.fiber_pairs >= other.fiber_pairs
    }
}

#[derive(Debug, Default)]
struct Compiled {
    value: OnceLock<Program>,
    gradient: OnceLock<Program>,
    field: OnceLock<Program>,
}

/// A scalar function on phase space, together with the coordinate layout
/// it lives on.
#[derive(Debug, Clone)]
pub struct HamiltonianExpr {
    expr: Expr,
    layout: Layout,
    compiled: Arc<Compiled>,
}

impl PartialEq for HamiltonianExpr {
    fn eq(&self, other: &Self) -> bool {
        self.expr == other.expr && self.layout == other.layout
    }
}

impl HamiltonianExpr {
    /// Parses `text` with the smallest layout containing its variables.
    pub fn parse(text: &str) -> Result<HamiltonianExpr> {
        let expr = parse(text)?;
        let layout = Layout::infer(&expr);
        Ok(HamiltonianExpr::from_expr(expr, layout))
    }

    /// Parses `text` on a prescribed layout.
    pub fn parse_on(text: &str, layout: Layout) -> Result<HamiltonianExpr> {
        HamiltonianExpr::parse(text)?.with_layout(layout)
    }

    /// Wraps an expression; `layout` must contain all its variables.
    pub fn new(expr: Expr, layout: Layout) -> Result<HamiltonianExpr> {
        let need = Layout::infer(&expr);
        if !layout.contains(&need) {
            let mut bad = None;
            expr.visit_vars(&mut |v| {
                if layout.slot(v).is_none() && bad.is_none() {
                    bad = Some(v);
                }
            });
            return Err(Error::UnknownIdentifier(
                bad.map(|v| v.to_string()).unwrap_or_default(),
            ));
        }
        Ok(HamiltonianExpr::from_expr(expr, layout))
    }

    fn from_expr(expr: Expr, layout: Layout) -> HamiltonianExpr {
        HamiltonianExpr {
            expr,
            layout,
            compiled: Arc::new(Compiled::default()),
        }
    }

    pub fn with_layout(self, layout: Layout) -> Result<HamiltonianExpr> {
        HamiltonianExpr::new(self.expr, layout)
    }

    pub fn zero(layout: Layout) -> HamiltonianExpr {
        HamiltonianExpr::from_expr(Expr::c(0.0), layout)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn value_program(&self) -> &Program {
        self.compiled
            .value
            .get_or_init(|| Program::compile(std::slice::from_ref(&self.expr), &self.layout))
    }

    fn gradient_program(&self) -> &Program {
        self.compiled
            .gradient
            .get_or_init(|| Program::compile(&self.gradient_exprs(), &self.layout))
    }

    /// Compiled Hamiltonian vector field `J ∇H`.
    pub fn field_program(&self) -> &Program {
        self.compiled
            .field
            .get_or_init(|| Program::compile(&self.field_exprs(), &self.layout))
    }

    pub fn eval<S: Scalar>(&self, z: &[S]) -> S {
        self.value_program().eval(z)[0]
    }

    /// Gradient by forward-mode differentiation (one dual pass per
    /// coordinate).
    pub fn gradient_forward(&self, z: &[f64]) -> Vec<f64> {
        let prog = self.value_program();
        let mut buf: Vec<Dual> = z.iter().map(|&v| Dual::constant(v)).collect();
        let mut out = [Dual::default()];
        let mut scratch = Vec::new();
        (0..z.len())
            .map(|i| {
                buf[i].du = 1.0;
                prog.eval_into(&buf, &mut out, &mut scratch);
                buf[i].du = 0.0;
                out[0].du
            })
            .collect()
    }

    /// Gradient from the symbolic partial derivatives.
    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.gradient_program().eval(z)
    }

    pub fn partial(&self, v: Var) -> Expr {
        self.expr.diff(v)
    }

    pub fn gradient_exprs(&self) -> Vec<Expr> {
        (0..self.dim())
            .map(|s| self.expr.diff(self.layout.var_at(s)))
            .collect()
    }

    /// Components of the Hamiltonian vector field: for each pair `(a, b)`,
    /// `ȧ = ∂H/∂b` and `ḃ = -∂H/∂a`.
    pub fn field_exprs(&self) -> Vec<Expr> {
        let grad = self.gradient_exprs();
        let mut out = Vec::with_capacity(grad.len());
        for pair in grad.chunks(2) {
            out.push(pair[1].clone());
            out.push(Expr::neg(pair[0].clone()));
        }
        out
    }

    /// Symbolic Poisson bracket `{self, other} = Σ (∂a f ∂b g - ∂b f ∂a g)`.
    pub fn bracket(&self, other: &HamiltonianExpr) -> Result<HamiltonianExpr> {
        let layout = self.common_layout(other)?;
        let mut terms = Vec::new();
        for pair in 0..layout.dof() {
            let a = layout.var_at(2 * pair);
            let b = layout.var_at(2 * pair + 1);
            terms.push(Expr::sub(
                Expr::mul(self.expr.diff(a), other.expr.diff(b)),
                Expr::mul(self.expr.diff(b), other.expr.diff(a)),
            ));
        }
        Ok(HamiltonianExpr::from_expr(Expr::sum(terms), layout))
    }

    fn common_layout(&self, other: &HamiltonianExpr) -> Result<Layout> {
        Ok(Layout::new(
            self.layout.action_pairs.max(other.layout.action_pairs),
            self.layout.fiber_pairs.max(other.layout.fiber_pairs),
        ))
    }

    pub fn add(&self, other: &HamiltonianExpr) -> Result<HamiltonianExpr> {
        let layout = self.common_layout(other)?;
        Ok(HamiltonianExpr::from_expr(
            Expr::add(self.expr.clone(), other.expr.clone()),
            layout,
        ))
    }

    pub fn scale(&self, c: f64) -> HamiltonianExpr {
        HamiltonianExpr::from_expr(Expr::mul(Expr::c(c), self.expr.clone()), self.layout)
    }

    /// Composition with a linear map given by its matrix `m` (row-major,
    /// `dim × dim`): returns `z ↦ H(M z)`.
    pub fn compose_linear(&self, m: &[Vec<f64>]) -> HamiltonianExpr {
        let layout = self.layout;
        let rows: Vec<Expr> = m
            .iter()
            .map(|row| {
                Expr::sum(row.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(j, c)| {
                    Expr::mul(Expr::c(*c), Expr::var(layout.var_at(j)))
                }))
            })
            .collect();
        let e = self
            .expr
            .substitute(&|v| layout.slot(v).map(|s| rows[s].clone()));
        HamiltonianExpr::from_expr(e, layout)
    }
}

impl fmt::Display for HamiltonianExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr)
    }
}

/// Evaluates several expressions sharing one layout as a single program.
#[derive(Debug, Clone)]
pub struct ExprBundle {
    program: Arc<Program>,
    layout: Layout,
}

impl ExprBundle {
    pub fn new(exprs: &[HamiltonianExpr], layout: Layout) -> Result<ExprBundle> {
        for e in exprs {
            if !layout.contains(&Layout::infer(&e.expr)) {
                return Err(Error::Dimension {
                    expected: layout.dim(),
                    found: e.dim(),
                });
            }
        }
        let raw: Vec<Expr> = exprs.iter().map(|e| e.expr.clone()).collect();
        Ok(ExprBundle {
            program: Arc::new(Program::compile(&raw, &layout)),
            layout,
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.program.outputs()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eval<S: Scalar>(&self, z: &[S]) -> Vec<S> {
        self.program.eval(z)
    }
}

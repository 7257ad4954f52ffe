//! Scalar types the compiled expressions and integrators are generic over.
//!
//! `f64` is the plain value path. [`Dual`] carries one directional
//! derivative alongside the value, which is how Jacobians are obtained by
//! forward-mode differentiation through expressions and whole flow pipelines.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    'static
    + Copy
    + Send
    + Sync
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;
    fn re(self) -> f64;
    fn exp(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn powi(self, k: i32) -> Self;
    /// `u^(-order) * exp(-1/u^2)`, extended by zero at `u = 0`.
    fn flat(self, order: u32) -> Self;

    #[inline]
    fn scale(self, s: f64) -> Self {
        self * Self::cst(s)
    }
}

/// Value of `u^(-k) e^(-1/u^2)` with the removable singularity at 0 filled
/// by 0. Evaluated in log space so that `u^(-k)` never overflows.
#[inline]
pub fn flat_value(u: f64, k: u32) -> f64 {
    if u == 0.0 || !u.is_finite() {
        return if u.is_infinite() && k == 0 { 1.0 } else { 0.0 };
    }
    let a = 1.0 / (u * u);
    let log_mag = -a - (k as f64) * u.abs().ln();
    if log_mag < -745.0 {
        return 0.0;
    }
    let mag = log_mag.exp();
    if k % 2 == 1 && u < 0.0 {
        -mag
    } else {
        mag
    }
}

/// Derivative of [`flat_value`] in `u`.
#[inline]
pub fn flat_derivative(u: f64, k: u32) -> f64 {
    -(k as f64) * flat_value(u, k + 1) + 2.0 * flat_value(u, k + 3)
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn powi(self, k: i32) -> Self {
        f64::powi(self, k)
    }
    #[inline]
    fn flat(self, order: u32) -> Self {
        flat_value(self, order)
    }
}

/// First-order dual number `re + du·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Dual {
    #[inline]
    pub const fn new(re: f64, du: f64) -> Self {
        Dual { re, du }
    }

    #[inline]
    pub const fn constant(re: f64) -> Self {
        Dual { re, du: 0.0 }
    }

    #[inline]
    pub const fn variable(re: f64) -> Self {
        Dual { re, du: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.du + o.du)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.du - o.du)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.du * o.re + self.re * o.du)
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.re;
        Dual::new(self.re * inv, (self.du * o.re - self.re * o.du) * inv * inv)
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.du)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Dual) {
        self.re += o.re;
        self.du += o.du;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, o: Dual) {
        self.re -= o.re;
        self.du -= o.du;
    }
}

impl MulAssign for Dual {
    #[inline]
    fn mul_assign(&mut self, o: Dual) {
        *self = *self * o;
    }
}

impl Scalar for Dual {
    #[inline]
    fn cst(v: f64) -> Self {
        Dual::constant(v)
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.du)
    }
    #[inline]
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.re.cos() * self.du)
    }
    #[inline]
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -self.re.sin() * self.du)
    }
    #[inline]
    fn powi(self, k: i32) -> Self {
        match k {
            0 => Dual::constant(1.0),
            1 => self,
            _ => Dual::new(
                self.re.powi(k),
                (k as f64) * self.re.powi(k - 1) * self.du,
            ),
        }
    }
    #[inline]
    fn flat(self, order: u32) -> Self {
        let d = if self.du == 0.0 {
            0.0
        } else {
            flat_derivative(self.re, order) * self.du
        };
        Dual::new(flat_value(self.re, order), d)
    }
    #[inline]
    fn scale(self, s: f64) -> Self {
        Dual::new(self.re * s, self.du * s)
    }
}

//! A small closed expression grammar for form coefficients: polynomials in
//! z_j and conj(z_j), exp, sin, cos, and integer powers. Expressions carry
//! exact Wirtinger derivatives (z and conj(z) treated as independent), which
//! lets operator identities be tested at 1e-10 instead of finite-difference
//! accuracy, and they serialize to JSON so CLI configs can specify test
//! forms bit-exactly.

use crate::C64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum Expr {
    /// Complex constant.
    Const(C64),
    /// Coordinate z_j (0-based).
    Z(usize),
    /// Conjugate coordinate conj(z_j).
    Zbar(usize),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Neg(Arc<Expr>),
    /// Integer power, negative exponents allowed (poles off the domain).
    Pow(Arc<Expr>, i32),
    Exp(Arc<Expr>),
    Sin(Arc<Expr>),
    Cos(Arc<Expr>),
}

impl Expr {
    pub fn c(v: C64) -> Expr {
        Expr::Const(v)
    }

    pub fn cr(v: f64) -> Expr {
        Expr::Const(C64::new(v, 0.0))
    }

    pub fn zero() -> Expr {
        Expr::cr(0.0)
    }

    pub fn one() -> Expr {
        Expr::cr(1.0)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if c.re == 0.0 && c.im == 0.0)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        if a.is_zero() {
            return b;
        }
        if b.is_zero() {
            return a;
        }
        if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
            return Expr::Const(x + y);
        }
        Expr::Add(Arc::new(a), Arc::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        if b.is_zero() {
            return a;
        }
        if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
            return Expr::Const(x - y);
        }
        Expr::Sub(Arc::new(a), Arc::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        if a.is_zero() || b.is_zero() {
            return Expr::zero();
        }
        if let Expr::Const(x) = &a {
            if x.re == 1.0 && x.im == 0.0 {
                return b;
            }
            if let Expr::Const(y) = &b {
                return Expr::Const(x * y);
            }
        }
        if let Expr::Const(y) = &b {
            if y.re == 1.0 && y.im == 0.0 {
                return a;
            }
        }
        Expr::Mul(Arc::new(a), Arc::new(b))
    }

    pub fn neg(a: Expr) -> Expr {
        if let Expr::Const(x) = &a {
            return Expr::Const(-x);
        }
        Expr::Neg(Arc::new(a))
    }

    pub fn pow(a: Expr, k: i32) -> Expr {
        match k {
            0 => Expr::one(),
            1 => a,
            _ => Expr::Pow(Arc::new(a), k),
        }
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Z(j) => z[*j],
            Expr::Zbar(j) => z[*j].conj(),
            Expr::Add(a, b) => a.eval(z) + b.eval(z),
            Expr::Sub(a, b) => a.eval(z) - b.eval(z),
            Expr::Mul(a, b) => a.eval(z) * b.eval(z),
            Expr::Neg(a) => -a.eval(z),
            Expr::Pow(a, k) => a.eval(z).powi(*k),
            Expr::Exp(a) => a.eval(z).exp(),
            Expr::Sin(a) => a.eval(z).sin(),
            Expr::Cos(a) => a.eval(z).cos(),
        }
    }

    /// Wirtinger derivative d/dz_j.
    pub fn d_dz(&self, j: usize) -> Expr {
        self.diff(j, false)
    }

    /// Wirtinger derivative d/d(conj z_j).
    pub fn d_dzbar(&self, j: usize) -> Expr {
        self.diff(j, true)
    }

    fn diff(&self, j: usize, bar: bool) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Z(k) => {
                if *k == j && !bar {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Zbar(k) => {
                if *k == j && bar {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Add(a, b) => Expr::add(a.diff(j, bar), b.diff(j, bar)),
            Expr::Sub(a, b) => Expr::sub(a.diff(j, bar), b.diff(j, bar)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(j, bar), (**b).clone()),
                Expr::mul((**a).clone(), b.diff(j, bar)),
            ),
            Expr::Neg(a) => Expr::neg(a.diff(j, bar)),
            Expr::Pow(a, k) => Expr::mul(
                Expr::mul(Expr::cr(f64::from(*k)), Expr::pow((**a).clone(), k - 1)),
                a.diff(j, bar),
            ),
            Expr::Exp(a) => Expr::mul(Expr::Exp(a.clone()), a.diff(j, bar)),
            Expr::Sin(a) => Expr::mul(Expr::Cos(a.clone()), a.diff(j, bar)),
            Expr::Cos(a) => Expr::neg(Expr::mul(Expr::Sin(a.clone()), a.diff(j, bar))),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "({}+{}i)", c.re, c.im),
            Expr::Z(j) => write!(f, "z{}", j + 1),
            Expr::Zbar(j) => write!(f, "zbar{}", j + 1),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Pow(a, k) => write!(f, "({a})^{k}"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
        }
    }
}

/// A coefficient function on a tube region: either a closed-form expression
/// (exact derivatives) or an opaque evaluator (integral-operator outputs),
/// differentiated by central differences with the attached step.
#[derive(Clone)]
pub enum Coeff {
    Sym(Expr),
    Fun(Arc<dyn Fn(&[C64]) -> C64 + Send + Sync>, f64),
}

impl Coeff {
    pub fn zero() -> Coeff {
        Coeff::Sym(Expr::zero())
    }

    pub fn is_sym_zero(&self) -> bool {
        matches!(self, Coeff::Sym(e) if e.is_zero())
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        match self {
            Coeff::Sym(e) => e.eval(z),
            Coeff::Fun(f, _) => f(z),
        }
    }

    pub fn fd_step(&self) -> Option<f64> {
        match self {
            Coeff::Sym(_) => None,
            Coeff::Fun(_, h) => Some(*h),
        }
    }

    /// d/dz_j, exact for symbolic coefficients, central differences otherwise
    /// via d/dz = (d/dx - i d/dy)/2.
    pub fn d_dz(&self, j: usize) -> Coeff {
        match self {
            Coeff::Sym(e) => Coeff::Sym(e.d_dz(j)),
            Coeff::Fun(f, h) => {
                let f = f.clone();
                let h = *h;
                Coeff::Fun(
                    Arc::new(move |z: &[C64]| {
                        let (dx, dy) = central_xy(&*f, z, j, h);
                        (dx - crate::I * dy) * 0.5
                    }),
                    h,
                )
            }
        }
    }

    /// d/d(conj z_j) = (d/dx + i d/dy)/2.
    pub fn d_dzbar(&self, j: usize) -> Coeff {
        match self {
            Coeff::Sym(e) => Coeff::Sym(e.d_dzbar(j)),
            Coeff::Fun(f, h) => {
                let f = f.clone();
                let h = *h;
                Coeff::Fun(
                    Arc::new(move |z: &[C64]| {
                        let (dx, dy) = central_xy(&*f, z, j, h);
                        (dx + crate::I * dy) * 0.5
                    }),
                    h,
                )
            }
        }
    }

    pub fn scale(&self, c: C64) -> Coeff {
        match self {
            Coeff::Sym(e) => Coeff::Sym(Expr::mul(Expr::c(c), e.clone())),
            Coeff::Fun(f, h) => {
                let f = f.clone();
                Coeff::Fun(Arc::new(move |z: &[C64]| c * f(z)), *h)
            }
        }
    }

    pub fn add(&self, other: &Coeff) -> Coeff {
        match (self, other) {
            (Coeff::Sym(a), Coeff::Sym(b)) => Coeff::Sym(Expr::add(a.clone(), b.clone())),
            _ => {
                let a = self.clone();
                let b = other.clone();
                let h = self.fd_step().or(other.fd_step()).unwrap_or(1e-5);
                Coeff::Fun(Arc::new(move |z: &[C64]| a.eval(z) + b.eval(z)), h)
            }
        }
    }
}

impl fmt::Debug for Coeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coeff::Sym(e) => write!(f, "Sym({e})"),
            Coeff::Fun(_, h) => write!(f, "Fun(h={h})"),
        }
    }
}

fn central_xy(f: &(dyn Fn(&[C64]) -> C64 + Send + Sync), z: &[C64], j: usize, h: f64) -> (C64, C64) {
    let mut zp = z.to_vec();
    zp[j] = z[j] + C64::new(h, 0.0);
    let fxp = f(&zp);
    zp[j] = z[j] - C64::new(h, 0.0);
    let fxm = f(&zp);
    zp[j] = z[j] + C64::new(0.0, h);
    let fyp = f(&zp);
    zp[j] = z[j] - C64::new(0.0, h);
    let fym = f(&zp);
    ((fxp - fxm) / (2.0 * h), (fyp - fym) / (2.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wirtinger_derivatives() {
        // f = |z|^2 = z zbar: df/dz = zbar, df/dzbar = z
        let f = Expr::mul(Expr::Z(0), Expr::Zbar(0));
        let z = [C64::new(0.7, -0.3)];
        assert_abs_diff_eq!(f.d_dz(0).eval(&z).re, z[0].conj().re, epsilon = 1e-15);
        assert_abs_diff_eq!(f.d_dzbar(0).eval(&z).im, z[0].im, epsilon = 1e-15);
        // holomorphic exp(z): dbar = 0
        let g = Expr::Exp(Arc::new(Expr::Z(0)));
        assert!(g.d_dzbar(0).eval(&z).norm() < 1e-15);
    }

    #[test]
    fn numeric_coeff_derivative_matches_symbolic() {
        let e = Expr::mul(Expr::Sin(Arc::new(Expr::Z(0))), Expr::Zbar(0));
        let exact = e.d_dzbar(0);
        let f = {
            let e = e.clone();
            Coeff::Fun(Arc::new(move |z: &[C64]| e.eval(z)), 1e-5)
        };
        let fd = f.d_dzbar(0);
        let z = [C64::new(0.4, 0.2)];
        let a = exact.eval(&z);
        let b = fd.eval(&z);
        assert!((a - b).norm() < 1e-9, "fd {b} vs exact {a}");
    }

    #[test]
    fn serde_roundtrip() {
        let e = Expr::mul(Expr::pow(Expr::Z(1), -2), Expr::Exp(Arc::new(Expr::Zbar(0))));
        let s = serde_json::to_string(&e).unwrap();
        let back: Expr = serde_json::from_str(&s).unwrap();
        let z = [C64::new(0.3, 0.1), C64::new(1.1, -0.2)];
        assert_eq!(e.eval(&z), back.eval(&z));
    }
}

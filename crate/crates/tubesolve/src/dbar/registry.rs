//! The built-in registry of dbar-closed test forms per manifold, each with
//! its provenance: an explicit potential g (u = dbar g) where available,
//! used by the v - g holomorphy checks.

use crate::expr::{Coeff, Expr};
use crate::forms::FormField;
use crate::geometry::Manifold;
use std::sync::Arc;

#[derive(Clone)]
pub struct RegistryForm {
    pub name: &'static str,
    pub u: FormField,
    /// A form g with dbar g = u, when known in closed form.
    pub potential: Option<FormField>,
}

pub fn form_registry(manifold: &Manifold) -> Vec<RegistryForm> {
    match manifold {
        Manifold::CircleInC | Manifold::GraphPerturbation { .. } => {
            let mut out = Vec::new();
            // u = dzbar, potential zbar (the closed-form comparison
            // v* = zbar - 1/z differs from it by a holomorphic term)
            out.push(entry1(
                "dzbar",
                Expr::one(),
                Some(Expr::Zbar(0)),
            ));
            // u = dbar(z zbar) = z dzbar
            out.push(entry1("z_dzbar", Expr::Z(0), Some(Expr::mul(Expr::Z(0), Expr::Zbar(0)))));
            // u = dbar(zbar^2) = 2 zbar dzbar
            out.push(entry1(
                "2zbar_dzbar",
                Expr::mul(Expr::cr(2.0), Expr::Zbar(0)),
                Some(Expr::pow(Expr::Zbar(0), 2)),
            ));
            // u = dbar(zbar e^z) = e^z dzbar
            out.push(entry1(
                "exp_dzbar",
                Expr::Exp(Arc::new(Expr::Z(0))),
                Some(Expr::mul(Expr::Zbar(0), Expr::Exp(Arc::new(Expr::Z(0))))),
            ));
            // u = dbar(sin zbar) = cos(zbar) dzbar
            out.push(entry1(
                "cos_dzbar",
                Expr::Cos(Arc::new(Expr::Zbar(0))),
                Some(Expr::Sin(Arc::new(Expr::Zbar(0)))),
            ));
            out
        }
        Manifold::TorusInC2 => {
            let mut out = Vec::new();
            // u = dzbar_1, potential zbar_1
            {
                let mut u = FormField::zero(2, 0, 1);
                u.set(&[], &[0], Coeff::Sym(Expr::one()));
                let mut g = FormField::zero(2, 0, 0);
                g.set(&[], &[], Coeff::Sym(Expr::Zbar(0)));
                out.push(RegistryForm { name: "dzbar1", u, potential: Some(g) });
            }
            // u = dbar(z_2 zbar_1) = z_2 dzbar_1
            {
                let mut u = FormField::zero(2, 0, 1);
                u.set(&[], &[0], Coeff::Sym(Expr::Z(1)));
                let mut g = FormField::zero(2, 0, 0);
                g.set(&[], &[], Coeff::Sym(Expr::mul(Expr::Z(1), Expr::Zbar(0))));
                out.push(RegistryForm { name: "z2_dzbar1", u, potential: Some(g) });
            }
            // u = dbar(zbar_1 zbar_2) = zbar_2 dzbar_1 + zbar_1 dzbar_2
            {
                let mut u = FormField::zero(2, 0, 1);
                u.set(&[], &[0], Coeff::Sym(Expr::Zbar(1)));
                u.set(&[], &[1], Coeff::Sym(Expr::Zbar(0)));
                let mut g = FormField::zero(2, 0, 0);
                g.set(&[], &[], Coeff::Sym(Expr::mul(Expr::Zbar(0), Expr::Zbar(1))));
                out.push(RegistryForm { name: "sym_dzbar", u, potential: Some(g) });
            }
            // (0,2): u = z_1 dzbar_1 ^ dzbar_2 = dbar(z_1 zbar_1 dzbar_2)
            {
                let mut u = FormField::zero(2, 0, 2);
                u.set(&[], &[0, 1], Coeff::Sym(Expr::Z(0)));
                let mut g = FormField::zero(2, 0, 1);
                g.set(&[], &[1], Coeff::Sym(Expr::mul(Expr::Z(0), Expr::Zbar(0))));
                out.push(RegistryForm { name: "form02", u, potential: Some(g) });
            }
            // (1,1): u = -dz_1 ^ dzbar_2 = dbar(zbar_2 dz_1)
            {
                let mut u = FormField::zero(2, 1, 1);
                u.set(&[0], &[1], Coeff::Sym(Expr::cr(-1.0)));
                let mut g = FormField::zero(2, 1, 0);
                g.set(&[0], &[], Coeff::Sym(Expr::Zbar(1)));
                out.push(RegistryForm { name: "form11", u, potential: Some(g) });
            }
            out
        }
        Manifold::FlatRmInCn { n, .. } => {
            let mut out = Vec::new();
            let mut u = FormField::zero(*n, 0, 1);
            u.set(&[], &[0], Coeff::Sym(Expr::one()));
            let mut g = FormField::zero(*n, 0, 0);
            g.set(&[], &[], Coeff::Sym(Expr::Zbar(0)));
            out.push(RegistryForm { name: "dzbar1", u, potential: Some(g) });
            let mut u2 = FormField::zero(*n, 0, 1);
            u2.set(&[], &[0], Coeff::Sym(Expr::Z(0)));
            let mut g2 = FormField::zero(*n, 0, 0);
            g2.set(&[], &[], Coeff::Sym(Expr::mul(Expr::Z(0), Expr::Zbar(0))));
            out.push(RegistryForm { name: "z_dzbar1", u: u2, potential: Some(g2) });
            out
        }
    }
}

fn entry1(name: &'static str, coeff: Expr, potential: Option<Expr>) -> RegistryForm {
    let mut u = FormField::zero(1, 0, 1);
    u.set(&[], &[0], Coeff::Sym(coeff));
    let potential = potential.map(|p| {
        let mut g = FormField::zero(1, 0, 0);
        g.set(&[], &[], Coeff::Sym(p));
        g
    });
    RegistryForm { name, u, potential }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::split_d;
    use crate::C64;

    #[test]
    fn registry_potentials_are_consistent() {
        for m in [
            Manifold::CircleInC,
            Manifold::TorusInC2,
            Manifold::FlatRmInCn { m: 1, n: 2, window: (0.0, 1.0), guard: 0.3 },
        ] {
            let n = m.ambient_n();
            let pts: Vec<Vec<C64>> = (0..12)
                .map(|k| {
                    (0..n)
                        .map(|j| C64::from_polar(1.0 + 0.03 * ((k + j) as f64).sin(), 0.4 * k as f64 + j as f64))
                        .collect()
                })
                .collect();
            for rf in form_registry(&m) {
                // dbar u = 0
                if rf.u.bidegree.degree() < 2 * n {
                    let (_, dbar_u) = split_d(&rf.u).unwrap();
                    for z in &pts {
                        assert!(dbar_u.component_sum(z) < 1e-12, "{} not closed", rf.name);
                    }
                }
                // dbar g = u
                if let Some(g) = &rf.potential {
                    let (_, dbar_g) = split_d(g).unwrap();
                    for z in &pts {
                        let mut diff = 0.0;
                        for (k, c) in &rf.u.coeffs {
                            let gv = dbar_g
                                .coeff(k.0, k.1)
                                .map(|x| x.eval(z))
                                .unwrap_or(C64::new(0.0, 0.0));
                            diff += (c.eval(z) - gv).norm();
                        }
                        assert!(diff < 1e-12, "{}: dbar g != u ({diff})", rf.name);
                    }
                }
            }
        }
    }
}

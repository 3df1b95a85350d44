//! Norm and modulus-of-continuity reports for forms sampled over tube
//! lattices. Holder seminorms are sampled lower bounds (all close pairs
//! within |h| <= delta plus seeded random far pairs); C^r norms use the
//! coefficients' exact or finite-difference derivatives.

use super::FormField;
use crate::C64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct NormReport {
    /// Sum over components of the sampled sup norm.
    pub sup: f64,
    /// Sampled Holder seminorms, one entry per requested s.
    pub holder: Vec<(f64, f64)>,
    /// C^r norms for the requested orders r (sum over components and
    /// derivative directions up to order r).
    pub ck: Vec<(usize, f64)>,
    /// Sampled modulus of continuity table (t, omega(t)).
    pub modulus: Vec<(f64, f64)>,
    /// Set when the lattice was too small to say anything.
    pub degenerate: bool,
}

/// Compute a norm report for `u` over the lattice. `delta` scales the pair
/// search radius and the modulus table.
pub fn norms(
    u: &FormField,
    lattice: &[Vec<C64>],
    delta: f64,
    s_list: &[f64],
    r_list: &[usize],
    seed: u64,
) -> NormReport {
    if lattice.len() < 2 {
        return NormReport {
            sup: 0.0,
            holder: s_list.iter().map(|&s| (s, 0.0)).collect(),
            ck: r_list.iter().map(|&r| (r, 0.0)).collect(),
            modulus: Vec::new(),
            degenerate: true,
        };
    }
    // per-component samples
    let comps: Vec<Vec<C64>> = lattice.iter().map(|z| u.coeffs.values().map(|c| c.eval(z)).collect()).collect();
    let ncomp = u.coeffs.len().max(1);
    let mut sup_per = vec![0.0f64; ncomp];
    for row in &comps {
        for (k, v) in row.iter().enumerate() {
            sup_per[k] = sup_per[k].max(v.norm());
        }
    }
    let sup = sup_per.iter().sum();

    // pair scan: all pairs with |h| <= delta among a capped subset, plus
    // random far pairs
    let mut rng = StdRng::seed_from_u64(seed);
    let cap = lattice.len().min(400);
    let stride = lattice.len().div_ceil(cap);
    let idx: Vec<usize> = (0..lattice.len()).step_by(stride).collect();
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (a, &i) in idx.iter().enumerate() {
        for &j in idx.iter().skip(a + 1) {
            let h = dist(&lattice[i], &lattice[j]);
            if h > 0.0 && h <= delta {
                pairs.push((i, j, h));
            }
        }
    }
    for _ in 0..512 {
        let i = rng.random_range(0..lattice.len());
        let j = rng.random_range(0..lattice.len());
        if i == j {
            continue;
        }
        let h = dist(&lattice[i], &lattice[j]);
        if h > 0.0 {
            pairs.push((i, j, h));
        }
    }

    let holder: Vec<(f64, f64)> = s_list
        .iter()
        .map(|&s| {
            let mut best: f64 = 0.0;
            for &(i, j, h) in &pairs {
                let diff: f64 = comps[i]
                    .iter()
                    .zip(&comps[j])
                    .map(|(a, b)| (a - b).norm())
                    .sum();
                best = best.max(diff / h.powf(s));
            }
            (s, best)
        })
        .collect();

    // modulus of continuity on a lattice of t values (cumulative max makes
    // it non-decreasing by construction)
    let mut modulus = Vec::new();
    let tmax = 2.0 * delta;
    let nt = 16;
    let mut run: f64 = 0.0;
    for k in 1..=nt {
        let t = tmax * k as f64 / nt as f64;
        let mut m: f64 = 0.0;
        for &(i, j, h) in &pairs {
            if h <= t {
                let diff: f64 = comps[i]
                    .iter()
                    .zip(&comps[j])
                    .map(|(a, b)| (a - b).norm())
                    .sum();
                m = m.max(diff);
            }
        }
        run = run.max(m);
        modulus.push((t, run));
    }

    // C^r via derivative sums
    let ck = r_list
        .iter()
        .map(|&r| {
            let mut total = sup;
            if r >= 1 {
                total += derivative_sup(u, lattice, 1);
            }
            if r >= 2 {
                total += derivative_sup(u, lattice, 2);
            }
            (r, total)
        })
        .collect();

    NormReport { sup, holder, ck, modulus, degenerate: false }
}

/// Sup over the lattice of the sum of all order-`r` Wirtinger derivatives
/// of all components (r in {1, 2}).
fn derivative_sup(u: &FormField, lattice: &[Vec<C64>], r: usize) -> f64 {
    let n = u.n;
    let mut best: f64 = 0.0;
    for z in lattice {
        let mut s = 0.0;
        for c in u.coeffs.values() {
            for j in 0..n {
                let dz = c.d_dz(j);
                let dzb = c.d_dzbar(j);
                if r == 1 {
                    s += dz.eval(z).norm() + dzb.eval(z).norm();
                } else {
                    for k in 0..n {
                        s += dz.d_dz(k).eval(z).norm()
                            + dz.d_dzbar(k).eval(z).norm()
                            + dzb.d_dzbar(k).eval(z).norm();
                    }
                }
            }
        }
        best = best.max(s);
    }
    best
}

fn dist(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Sampled modulus of continuity of a scalar function over given points.
pub fn modulus_of_continuity<F: Fn(&[C64]) -> f64>(
    f: F,
    lattice: &[Vec<C64>],
    ts: &[f64],
) -> Vec<(f64, f64)> {
    let vals: Vec<f64> = lattice.iter().map(|z| f(z)).collect();
    let mut out = Vec::new();
    let mut run: f64 = 0.0;
    for &t in ts {
        let mut m: f64 = 0.0;
        for i in 0..lattice.len() {
            for j in i + 1..lattice.len() {
                if dist(&lattice[i], &lattice[j]) <= t {
                    m = m.max((vals[i] - vals[j]).abs());
                }
            }
        }
        run = run.max(m);
        out.push((t, run));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Coeff, Expr};
    use crate::forms::FormField;

    #[test]
    fn constant_form_has_zero_seminorms() {
        let mut u = FormField::zero(1, 0, 1);
        u.set(&[], &[0], Coeff::Sym(Expr::c(C64::new(2.0, -1.0))));
        let lattice: Vec<Vec<C64>> = (0..50)
            .map(|k| vec![C64::new(0.1 * k as f64, 0.01 * k as f64)])
            .collect();
        let rep = norms(&u, &lattice, 0.3, &[0.5], &[0, 1], 7);
        assert!((rep.sup - (5.0f64).sqrt()).abs() < 1e-12);
        assert!(rep.holder[0].1 < 1e-12);
    }

    #[test]
    fn linear_function_norms() {
        // u = y on a strip lattice: sup = delta at the edge rows, Holder
        // seminorm |u|_s realized at small h
        let delta = 0.1;
        let mut u = FormField::zero(1, 0, 0);
        // y = (z - zbar) / 2i
        u.set(
            &[],
            &[],
            Coeff::Sym(Expr::mul(
                Expr::c(C64::new(0.0, -0.5)),
                Expr::sub(Expr::Z(0), Expr::Zbar(0)),
            )),
        );
        let mut lattice = Vec::new();
        for i in 0..20 {
            for j in 0..9 {
                lattice.push(vec![C64::new(
                    i as f64 / 19.0,
                    -delta + 2.0 * delta * j as f64 / 8.0,
                )]);
            }
        }
        let rep = norms(&u, &lattice, delta, &[0.5], &[0], 7);
        assert!((rep.sup - delta).abs() < 1e-12, "sup {}", rep.sup);
        // lattice lower bound: realized at the smallest vertical spacing h0
        let h0 = 2.0 * delta / 8.0;
        let expect = h0 / h0.powf(0.5);
        assert!(rep.holder[0].1 >= expect - 1e-9, "holder {} vs {}", rep.holder[0].1, expect);
    }

    #[test]
    fn modulus_nondecreasing_and_subadditive_for_lipschitz() {
        let lattice: Vec<Vec<C64>> = (0..60).map(|k| vec![C64::new(k as f64 / 59.0, 0.0)]).collect();
        let ts: Vec<f64> = (1..=10).map(|k| 0.05 * k as f64).collect();
        let om = modulus_of_continuity(|z| z[0].re, &lattice, &ts);
        for w in om.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-14);
        }
        // omega(t) <= t for a 1-Lipschitz function
        for &(t, v) in &om {
            assert!(v <= t + 1e-12);
        }
        // sampled subadditivity on the lattice of t values
        for i in 0..om.len() {
            for j in 0..om.len() {
                if let Some(k) = om.iter().position(|&(t, _)| (t - (om[i].0 + om[j].0)).abs() < 1e-12) {
                    let h = 2.0 / 59.0;
                    assert!(om[k].1 <= om[i].1 + om[j].1 + h, "subadditivity violated");
                }
            }
        }
    }
}

//! The homotopy operator along the tube retraction: for a closed p-form u
//! on the tube, v = int_0^1 i_t^*(d/dt . F^* u) dt satisfies
//! dv = u - pi^* u, where F is the fiber-scaling retraction and pi = F(0, .).
//! The t-integral uses fixed Gauss-Legendre nodes.

use super::{exterior_d_mixed, pullback, CVector, FormField, MapRecord, MixedForm};
use crate::expr::Coeff;
use crate::geometry::{Manifold, TubeSpec};
use crate::linalg::gauss_legendre_ab;
use crate::{C64, Error, Result};
use std::sync::Arc;

pub struct HomotopyOutput {
    /// The potential v with dv = u - pi^* u.
    pub v: MixedForm,
    /// pi^* u, the fiber-projected part.
    pub pi_star_u: MixedForm,
}

/// Solve dv = u - pi^*u by the retraction homotopy. The input must be
/// closed: the finite-difference d-residual is checked on a few tube
/// samples against `tol` before integrating.
pub fn homotopy_solve(
    manifold: &Manifold,
    spec: &TubeSpec,
    u: &MixedForm,
    t_nodes: usize,
    tol: f64,
) -> Result<HomotopyOutput> {
    let degree = u.degree;
    if degree == 0 {
        return Err(Error::DegreeUnderflow);
    }
    // closedness spot check (top-degree forms are closed trivially)
    if degree < 2 * manifold.ambient_n() {
        let du = exterior_d_mixed(u)?;
        let samples = crate::geometry::eval_lattice(manifold, spec, (4, 2), 0.2);
        let mut res: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for z in &samples {
            res = res.max(du.component_sum(z));
            scale = scale.max(u.component_sum(z));
        }
        if res > 10.0 * tol * (1.0 + scale) {
            return Err(Error::NotClosed { residual: res, tol });
        }
    }

    let n = manifold.ambient_n();
    let (ts, ws) = gauss_legendre_ab(t_nodes, 0.0, 1.0);
    let mani = manifold.clone();
    let u_arc = Arc::new(u.clone());

    let mut v = MixedForm::zero(n, degree - 1);
    for p_out in 0..=(degree - 1) {
        let q_out = degree - 1 - p_out;
        if p_out > n || q_out > n {
            continue;
        }
        let mut part = FormField::zero(n, p_out, q_out);
        for mi in 0u32..(1 << n) {
            if mi.count_ones() as usize != p_out {
                continue;
            }
            for mj in 0u32..(1 << n) {
                if mj.count_ones() as usize != q_out {
                    continue;
                }
                let mani = mani.clone();
                let ts = ts.clone();
                let ws = ws.clone();
                let u_arc = u_arc.clone();
                part.coeffs.insert(
                    (mi, mj),
                    Coeff::Fun(
                        Arc::new(move |z: &[C64]| {
                            homotopy_component(&mani, &u_arc, z, mi, mj, &ts, &ws)
                        }),
                        1e-4 * spec.delta,
                    ),
                );
            }
        }
        v.push(part);
    }

    // pi^* u via the t = 0 retraction jet
    let mani2 = manifold.clone();
    let pi_map = MapRecord {
        n_in: n,
        n_out: n,
        f: Arc::new(move |z: &[C64]| mani2.retraction(0.0, z).unwrap_or_else(|_| z.to_vec())),
        jac: {
            let mani3 = manifold.clone();
            Arc::new(move |z: &[C64]| {
                let (jh, ja, _) = mani3
                    .retraction_jet(0.0, z)
                    .unwrap_or_else(|_| panic!("retraction jet failed"));
                (jh, ja)
            })
        },
    };
    let pi_star_u = pullback(&pi_map, u, 1e-4 * spec.delta);
    Ok(HomotopyOutput { v, pi_star_u })
}

fn homotopy_component(
    manifold: &Manifold,
    u: &MixedForm,
    z: &[C64],
    mi: u32,
    mj: u32,
    ts: &[f64],
    ws: &[f64],
) -> C64 {
    let n = manifold.ambient_n();
    let mut acc = C64::new(0.0, 0.0);
    for (t, w) in ts.iter().zip(ws) {
        let fz = match manifold.retraction(*t, z) {
            Ok(p) => p,
            Err(_) => return C64::new(f64::NAN, 0.0),
        };
        let (jh, ja, dt) = match manifold.retraction_jet(*t, z) {
            Ok(j) => j,
            Err(_) => return C64::new(f64::NAN, 0.0),
        };
        let mut vectors = Vec::with_capacity(1 + (mi.count_ones() + mj.count_ones()) as usize);
        vectors.push(CVector::real(&dt));
        for i in super::mask_to_indices(mi) {
            vectors.push(CVector::dual_dz(n, i).pushforward(&jh, &ja));
        }
        for j in super::mask_to_indices(mj) {
            vectors.push(CVector::dual_dzbar(n, j).pushforward(&jh, &ja));
        }
        acc += *w * u.eval_on_vectors(&fz, &vectors);
    }
    acc
}

/// Measured residual of the homotopy identity d v = u - pi^* u on the given
/// sample points (finite differences on v).
pub fn homotopy_residual(
    out: &HomotopyOutput,
    u: &MixedForm,
    samples: &[Vec<C64>],
) -> Result<f64> {
    let dv = exterior_d_mixed(&out.v)?;
    let mut worst: f64 = 0.0;
    for z in samples {
        let mut pointwise = 0.0;
        let dv_at = eval_mixed(&dv, z);
        let u_at = eval_mixed(u, z);
        let pu_at = eval_mixed(&out.pi_star_u, z);
        let mut keys: std::collections::BTreeSet<(u32, u32)> = Default::default();
        keys.extend(dv_at.keys());
        keys.extend(u_at.keys());
        keys.extend(pu_at.keys());
        for k in keys {
            let a = dv_at.get(&k).copied().unwrap_or(C64::new(0.0, 0.0));
            let b = u_at.get(&k).copied().unwrap_or(C64::new(0.0, 0.0));
            let c = pu_at.get(&k).copied().unwrap_or(C64::new(0.0, 0.0));
            pointwise += (a - (b - c)).norm();
        }
        worst = worst.max(pointwise);
    }
    Ok(worst)
}

fn eval_mixed(u: &MixedForm, z: &[C64]) -> std::collections::BTreeMap<(u32, u32), C64> {
    let mut out = std::collections::BTreeMap::new();
    for f in &u.parts {
        for (&k, c) in &f.coeffs {
            *out.entry(k).or_insert(C64::new(0.0, 0.0)) += c.eval(z);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Coeff, Expr};
    use crate::forms::{FormField, MixedForm};
    use crate::geometry::{Manifold, TubeSpec};

    /// Oracle: on R in C with u = dy, the homotopy integral gives v = y and
    /// pi^* u = 0 (symbolic integration in the flat chart).
    #[test]
    fn flat_dy_gives_y() {
        let m = Manifold::FlatRmInCn { m: 1, n: 1, window: (0.0, 1.0), guard: 0.2 };
        let spec = TubeSpec::with_defaults(0.2, &m).unwrap();
        // dy = (dz - dzbar) / 2i
        let mut u = MixedForm::zero(1, 1);
        let mut hol = FormField::zero(1, 1, 0);
        hol.set(&[0], &[], Coeff::Sym(Expr::c(C64::new(0.0, -0.5))));
        let mut anti = FormField::zero(1, 0, 1);
        anti.set(&[], &[0], Coeff::Sym(Expr::c(C64::new(0.0, 0.5))));
        u.push(hol);
        u.push(anti);
        let out = homotopy_solve(&m, &spec, &u, 16, 1e-9).unwrap();
        for (x, y) in [(0.3, 0.1), (0.7, -0.15), (0.5, 0.02)] {
            let z = [C64::new(x, y)];
            let v = out.v.component_sum(&z);
            assert!((v - y.abs()).abs() < 1e-10, "v = {v} expected |y| = {}", y.abs());
            let pv: f64 = out.pi_star_u.component_sum(&z);
            assert!(pv < 1e-10, "pi^* dy should vanish, got {pv}");
        }
    }

    /// Fiber-constant pullbacks have vanishing normal contraction: u = pi^* w
    /// gives v = 0.
    #[test]
    fn fiber_constant_input_gives_zero() {
        let m = Manifold::FlatRmInCn { m: 1, n: 1, window: (0.0, 1.0), guard: 0.2 };
        let spec = TubeSpec::with_defaults(0.2, &m).unwrap();
        // u = dx = (dz + dzbar)/2 is pi^* of the chart form on M
        let mut u = MixedForm::zero(1, 1);
        let mut hol = FormField::zero(1, 1, 0);
        hol.set(&[0], &[], Coeff::Sym(Expr::cr(0.5)));
        let mut anti = FormField::zero(1, 0, 1);
        anti.set(&[], &[0], Coeff::Sym(Expr::cr(0.5)));
        u.push(hol);
        u.push(anti);
        let out = homotopy_solve(&m, &spec, &u, 16, 1e-9).unwrap();
        let z = [C64::new(0.4, 0.12)];
        assert!(out.v.component_sum(&z) < 1e-12);
    }

    /// dv = u - pi^*u residual on the circle for the area form dx ^ dy,
    /// plus the sup-norm gain ||v|| <= C delta ||u||.
    #[test]
    fn circle_area_form_residual_and_gain() {
        let m = Manifold::CircleInC;
        for delta in [0.2, 0.1] {
            let spec = TubeSpec::with_defaults(delta, &m).unwrap();
            // dx ^ dy = (i/2) dz ^ dzbar
            let mut u = MixedForm::zero(1, 2);
            let mut f = FormField::zero(1, 1, 1);
            f.set(&[0], &[0], Coeff::Sym(Expr::c(C64::new(0.0, 0.5))));
            u.push(f);
            let out = homotopy_solve(&m, &spec, &u, 16, 1e-9).unwrap();
            let samples = crate::geometry::eval_lattice(&m, &spec, (8, 3), 0.2);
            let res = homotopy_residual(&out, &u, &samples).unwrap();
            assert!(res < 5e-6, "residual {res} at delta {delta}");
            let sup: f64 = samples
                .iter()
                .map(|z| out.v.component_sum(z))
                .fold(0.0, f64::max);
            assert!(sup <= 3.0 * delta, "sup {sup} vs delta {delta}");
        }
    }
}

//! Deterministic fixed-step RK4 integration of time-dependent holomorphic
//! vector fields, together with the variational equation for the complex
//! Jacobian of the flow map, and the Richardson step-halving guard.

use crate::linalg::CMat;
use crate::{C64, Error, Result};

/// One integrated trajectory.
pub struct Trajectory {
    pub endpoint: Vec<C64>,
    /// Complex Jacobian of the flow map at the endpoint.
    pub jacobian: CMat,
    /// Smallest containment margin seen along the trajectory.
    pub min_margin: f64,
}

/// Integrate dz/dt = Z(t, z) from t0 to t1 with `steps` RK4 steps,
/// carrying dM/dt = dZ(t, z) M. The field returns the value and the
/// holomorphic Jacobian; `margin` is sampled after every step and its
/// minimum recorded (non-positive margins abort with FlowEscape).
pub fn integrate_flow<F, G>(
    field: &F,
    margin: &G,
    z0: &[C64],
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<Trajectory>
where
    F: Fn(f64, &[C64]) -> Result<(Vec<C64>, CMat)>,
    G: Fn(&[C64]) -> f64,
{
    let n = z0.len();
    let mut z = z0.to_vec();
    let mut m = CMat::eye(n);
    let h = (t1 - t0) / steps as f64;
    let mut min_margin = margin(&z);
    if min_margin <= 0.0 {
        return Err(Error::FlowEscape { margin: min_margin });
    }
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let (k1, a1) = field(t, &z)?;
        let z2: Vec<C64> = z.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
        let (k2, a2) = field(t + 0.5 * h, &z2)?;
        let z3: Vec<C64> = z.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
        let (k3, a3) = field(t + 0.5 * h, &z3)?;
        let z4: Vec<C64> = z.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
        let (k4, a4) = field(t + h, &z4)?;
        for j in 0..n {
            z[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        // variational RK4 with the same stage structure
        let m1 = a1.matmul(&m);
        let m2 = a2.matmul(&m.add(&m1.scale(C64::new(0.5 * h, 0.0))));
        let m3 = a3.matmul(&m.add(&m2.scale(C64::new(0.5 * h, 0.0))));
        let m4 = a4.matmul(&m.add(&m3.scale(C64::new(h, 0.0))));
        let incr = m1
            .add(&m2.scale(C64::new(2.0, 0.0)))
            .add(&m3.scale(C64::new(2.0, 0.0)))
            .add(&m4)
            .scale(C64::new(h / 6.0, 0.0));
        m = m.add(&incr);
        let mg = margin(&z);
        min_margin = min_margin.min(mg);
        if mg <= 0.0 {
            return Err(Error::FlowEscape { margin: mg });
        }
    }
    Ok(Trajectory { endpoint: z, jacobian: m, min_margin })
}

/// Richardson guard: the 2x-step endpoint must agree to `tol`.
pub fn richardson_check<F, G>(
    field: &F,
    margin: &G,
    z0: &[C64],
    t0: f64,
    t1: f64,
    steps: usize,
    tol: f64,
) -> Result<f64>
where
    F: Fn(f64, &[C64]) -> Result<(Vec<C64>, CMat)>,
    G: Fn(&[C64]) -> f64,
{
    let a = integrate_flow(field, margin, z0, t0, t1, steps)?;
    let b = integrate_flow(field, margin, z0, t0, t1, 2 * steps)?;
    let diff: f64 = a
        .endpoint
        .iter()
        .zip(&b.endpoint)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if diff > tol {
        return Err(Error::QuadratureDivergence { coarse: diff, fine: tol });
    }
    Ok(diff)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_rotation_flow_exact() {
        // z' = i a z: flow is rotation by a t, Jacobian e^{i a t}
        let a = 0.7;
        let field = |_t: f64, z: &[C64]| -> Result<(Vec<C64>, CMat)> {
            let mut j = CMat::zeros(1, 1);
            j[(0, 0)] = crate::I * a;
            Ok((vec![crate::I * a * z[0]], j))
        };
        let margin = |_z: &[C64]| 1.0;
        let tr = integrate_flow(&field, &margin, &[C64::new(1.0, 0.0)], 0.0, 1.0, 64).unwrap();
        let want = C64::from_polar(1.0, a);
        assert!((tr.endpoint[0] - want).norm() < 1e-10);
        assert!((tr.jacobian[(0, 0)] - want).norm() < 1e-10);
        richardson_check(&field, &margin, &[C64::new(1.0, 0.0)], 0.0, 1.0, 64, 1e-8).unwrap();
    }

    #[test]
    fn group_property_on_samples() {
        // G_{0->t} o G_{t->1} = G_{0->1} within RK4 tolerance
        let field = |t: f64, z: &[C64]| -> Result<(Vec<C64>, CMat)> {
            let mut j = CMat::zeros(1, 1);
            j[(0, 0)] = C64::new(0.2 * t, 0.1);
            Ok((vec![C64::new(0.2 * t, 0.1) * z[0] + C64::new(0.01, 0.0)], j))
        };
        let margin = |_z: &[C64]| 1.0;
        let z0 = [C64::new(0.5, -0.3)];
        let full = integrate_flow(&field, &margin, &z0, 0.0, 1.0, 64).unwrap();
        let half = integrate_flow(&field, &margin, &z0, 0.0, 0.5, 32).unwrap();
        let rest = integrate_flow(&field, &margin, &half.endpoint, 0.5, 1.0, 32).unwrap();
        assert!((full.endpoint[0] - rest.endpoint[0]).norm() < 1e-10);
    }

    #[test]
    fn escape_detected() {
        let field = |_t: f64, z: &[C64]| -> Result<(Vec<C64>, CMat)> {
            Ok((vec![z[0] * 3.0], CMat::eye(1).scale(C64::new(3.0, 0.0))))
        };
        let margin = |z: &[C64]| 1.0 - z[0].norm();
        let out = integrate_flow(&field, &margin, &[C64::new(0.5, 0.0)], 0.0, 1.0, 64);
        assert!(matches!(out, Err(Error::FlowEscape { .. })));
    }
}

//! The scenario registry of diffeomorphisms and flows used by the map
//! approximation pipelines: a circle rotation-type diffeomorphism, a
//! unimodular torus shear, and a unimodular torus rotation flow. Each
//! entry supplies its chart map, the complexified tangent extension L, and
//! analytic inverses for the error reports.

use crate::linalg::CMat;
use crate::{C64, I};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub enum DiffeoFamily {
    /// Circle diffeomorphism f(theta) = theta + a sin theta (|a| < 1).
    CircleRotation { a: f64 },
    /// Torus angle shear f = (t1 + psi, t2 - psi), psi = eps sin(t1 + t2);
    /// its complexified tangent map has determinant one exactly.
    TorusShear { eps: f64 },
    /// Unimodular torus rotation flow f_t = (e^{i a t} z1, e^{-i a t} z2).
    TorusRotationFlow { a: f64 },
}

impl DiffeoFamily {
    pub fn name(&self) -> &'static str {
        match self {
            DiffeoFamily::CircleRotation { .. } => "circle_rotation",
            DiffeoFamily::TorusShear { .. } => "torus_shear",
            DiffeoFamily::TorusRotationFlow { .. } => "torus_rotation_flow",
        }
    }

    pub fn ambient_n(&self) -> usize {
        match self {
            DiffeoFamily::CircleRotation { .. } => 1,
            _ => 2,
        }
    }

    /// Angle map on the parameter torus.
    pub fn angle_map(&self, s: &[f64]) -> Vec<f64> {
        match self {
            DiffeoFamily::CircleRotation { a } => vec![s[0] + a * s[0].sin()],
            DiffeoFamily::TorusShear { eps } => {
                let psi = eps * (s[0] + s[1]).sin();
                vec![s[0] + psi, s[1] - psi]
            }
            DiffeoFamily::TorusRotationFlow { .. } => s.to_vec(),
        }
    }

    /// Jacobian of the angle map.
    pub fn angle_jac(&self, s: &[f64]) -> Vec<Vec<f64>> {
        match self {
            DiffeoFamily::CircleRotation { a } => vec![vec![1.0 + a * s[0].cos()]],
            DiffeoFamily::TorusShear { eps } => {
                let dp = eps * (s[0] + s[1]).cos();
                vec![vec![1.0 + dp, dp], vec![-dp, 1.0 - dp]]
            }
            DiffeoFamily::TorusRotationFlow { .. } => {
                vec![vec![1.0, 0.0], vec![0.0, 1.0]]
            }
        }
    }

    /// Inverse angle map by Newton (analytic reference for the error
    /// reports).
    pub fn angle_inverse(&self, target: &[f64]) -> Vec<f64> {
        let mut s = target.to_vec();
        for _ in 0..60 {
            let f = self.angle_map(&s);
            let mut r: Vec<f64> = f.iter().zip(target).map(|(a, b)| a - b).collect();
            // wrap residuals into (-pi, pi]
            for v in r.iter_mut() {
                while *v > std::f64::consts::PI {
                    *v -= std::f64::consts::TAU;
                }
                while *v < -std::f64::consts::PI {
                    *v += std::f64::consts::TAU;
                }
            }
            let j = self.angle_jac(&s);
            match r.len() {
                1 => s[0] -= r[0] / j[0][0],
                2 => {
                    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                    s[0] -= (j[1][1] * r[0] - j[0][1] * r[1]) / det;
                    s[1] -= (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
                }
                _ => unreachable!(),
            }
            if r.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-14 {
                break;
            }
        }
        s
    }

    /// Ambient image of a manifold point.
    pub fn map_point(&self, s: &[f64]) -> Vec<C64> {
        self.angle_map(s).iter().map(|&t| C64::from_polar(1.0, t)).collect()
    }

    /// The complexified tangent extension L(s) in the complex coordinate
    /// frame: L e_k = (d f-hat_j / d theta_k) e^{i (f-hat_j - theta_k)}.
    /// For the maximal-dimension kinds here L is forced by df, and the
    /// registry families are chosen so that det L = 1 where required.
    pub fn l_matrix(&self, s: &[f64]) -> CMat {
        let fh = self.angle_map(s);
        let j = self.angle_jac(s);
        let n = fh.len();
        let mut l = CMat::zeros(n, n);
        for row in 0..n {
            for col in 0..n {
                l[(row, col)] =
                    j[row][col] * C64::from_polar(1.0, fh[row] - s[col]);
            }
        }
        l
    }

    /// Hessian of the angle map: hess[i][k][l] = d^2 fhat_i / ds_k ds_l.
    pub fn angle_hess(&self, s: &[f64]) -> Vec<Vec<Vec<f64>>> {
        match self {
            DiffeoFamily::CircleRotation { a } => vec![vec![vec![-a * s[0].sin()]]],
            DiffeoFamily::TorusShear { eps } => {
                let pp = -eps * (s[0] + s[1]).sin();
                vec![
                    vec![vec![pp, pp], vec![pp, pp]],
                    vec![vec![-pp, -pp], vec![-pp, -pp]],
                ]
            }
            DiffeoFamily::TorusRotationFlow { .. } => {
                vec![vec![vec![0.0; 2]; 2]; 2]
            }
        }
    }

    /// Analytic derivative of L with respect to the angle parameters:
    /// dL_ik/ds_l = H[i][k][l] e^{i(fhat_i - s_k)}
    ///            + J[i][k] i (J[i][l] - delta_{kl}) e^{i(fhat_i - s_k)}.
    pub fn l_matrix_deriv(&self, s: &[f64]) -> Vec<CMat> {
        let n = self.ambient_n();
        let fh = self.angle_map(s);
        let j = self.angle_jac(s);
        let h = self.angle_hess(s);
        (0..n)
            .map(|l| {
                let mut out = CMat::zeros(n, n);
                for i in 0..n {
                    for k in 0..n {
                        let phase = C64::from_polar(1.0, fh[i] - s[k]);
                        let kron = if k == l { 1.0 } else { 0.0 };
                        out[(i, k)] =
                            (h[i][k][l] + I * j[i][k] * (j[i][l] - kron)) * phase;
                    }
                }
                out
            })
            .collect()
    }

    /// Time-dependent version for flows: the map at time t.
    pub fn flow_point(&self, t: f64, z: &[C64]) -> Vec<C64> {
        match self {
            DiffeoFamily::TorusRotationFlow { a } => {
                vec![
                    z[0] * C64::from_polar(1.0, a * t),
                    z[1] * C64::from_polar(1.0, -a * t),
                ]
            }
            _ => panic!("flow_point is defined for flow families"),
        }
    }

    /// Infinitesimal generator X_t along the flow (ambient holomorphic for
    /// the rotation family).
    pub fn flow_generator(&self, _t: f64, z: &[C64]) -> Vec<C64> {
        match self {
            DiffeoFamily::TorusRotationFlow { a } => {
                vec![I * *a * z[0], -I * *a * z[1]]
            }
            _ => panic!("flow_generator is defined for flow families"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shear_is_unimodular() {
        let f = DiffeoFamily::TorusShear { eps: 0.07 };
        for k in 0..25 {
            let s = [0.37 * k as f64, 1.1 * k as f64];
            let l = f.l_matrix(&s);
            let det = l.det();
            assert!(
                (det - C64::new(1.0, 0.0)).norm() < 1e-12,
                "det L = {det} at {s:?}"
            );
        }
    }

    #[test]
    fn rotation_l_is_tangent_map() {
        let f = DiffeoFamily::CircleRotation { a: 0.3 };
        for k in 0..10 {
            let s = [0.61 * k as f64];
            let l = f.l_matrix(&s);
            // L applied to the tangent vector i e^{i s} equals d/ds f(phi(s))
            let tangent = I * C64::from_polar(1.0, s[0]);
            let image = l[(0, 0)] * tangent;
            let h = 1e-6;
            let fp = f.map_point(&[s[0] + h])[0];
            let fm = f.map_point(&[s[0] - h])[0];
            let want = (fp - fm) / (2.0 * h);
            assert!((image - want).norm() < 1e-8, "{image} vs {want}");
        }
    }

    #[test]
    fn angle_inverse_roundtrip() {
        for fam in [
            DiffeoFamily::CircleRotation { a: 0.3 },
            DiffeoFamily::TorusShear { eps: 0.08 },
        ] {
            let n = fam.ambient_n();
            for k in 0..10 {
                let s: Vec<f64> = (0..n).map(|j| 0.7 * k as f64 + 0.3 * j as f64).collect();
                let t = fam.angle_map(&s);
                let back = fam.angle_inverse(&t);
                for j in 0..n {
                    let mut d = (back[j] - s[j]).abs();
                    d = d.min((d - std::f64::consts::TAU).abs());
                    assert!(d < 1e-10, "{back:?} vs {s:?}");
                }
            }
        }
    }

    #[test]
    fn rotation_flow_preserves_volume_form() {
        let f = DiffeoFamily::TorusRotationFlow { a: 0.4 };
        let z = [C64::new(1.02, 0.1), C64::new(0.95, -0.2)];
        for t in [0.0, 0.3, 1.0] {
            // the flow map is linear diag(e^{iat}, e^{-iat}): det = 1
            let w = f.flow_point(t, &z);
            assert!(((w[0] / z[0]) * (w[1] / z[1]) - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }
}

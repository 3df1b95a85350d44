//! Support functions, patched Leray maps, and the Koppelman kernel family.
//!
//! The construction follows the thin-tube recipe: a support function Phi
//! holomorphic in z with Re Phi controlled from below by the squared
//! distance gain, patched against conj(zeta - z) by a delta-scaled cutoff
//! so the kernel coincides with the Bochner-Martinelli kernel near the
//! diagonal and is generated by a z-holomorphic Leray map near the tube
//! boundary.

mod bm;
mod compiled;
mod exterior;
mod koppelman;

pub use bm::{bm_boundary_integral, bm_constant, bochner_martinelli};
pub use compiled::CompiledKernel;
pub use exterior::{pairing_table, volume_factor, MultiVector, PairEntry};
pub use koppelman::{koppelman_kernels, KernelPoint, KernelValue};

use crate::geometry::{smoothstep5, Manifold, TubeSpec};
use crate::{C64, Error, Result, I};
use serde::Serialize;

/// Which support-function construction backs the kernel set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SupportConstruction {
    /// Levi polynomial of rho, used globally (valid for the flat windows
    /// and the circle, where its far zeros fall outside the pair domain).
    LeviGlobal,
    /// Sum of per-factor annulus support functions in logarithmic
    /// coordinates (the torus; the plain Levi polynomial has genuine far
    /// zeros there).
    PerFactorLog,
}

/// The data defining the delta-dependent kernels: the holomorphic pair
/// (P, Phi), the patching cutoffs, and the recorded collar constants.
#[derive(Clone, Debug)]
pub struct LerayKernelSet {
    pub manifold: Manifold,
    pub spec: TubeSpec,
    pub construction: SupportConstruction,
    /// Collar radius R; effectively infinite when the support function is
    /// sign-good globally (phi == 1 and Phi = A everywhere).
    pub r_collar: f64,
    /// Recorded Levi constant: sampled min of
    /// (Re A - rho(zeta) + rho(z)) / |zeta - z|^2 over near pairs.
    pub c_levi: f64,
    /// Recorded far lower bound for |Phi| over sampled far pairs.
    pub c_far: f64,
    /// Recorded min of Re Phi-tilde / |zeta - z|^2 over sampled admissible
    /// pairs.
    pub c_support: f64,
    /// Calibrated Bochner-Martinelli constant for this ambient dimension.
    pub cn: C64,
}

/// Serializable kernel configuration echo for run manifests.
#[derive(Clone, Debug, Serialize)]
pub struct KernelConfig {
    pub construction: SupportConstruction,
    pub r_collar: f64,
    pub c: f64,
    pub c_prime: f64,
    pub c_levi: f64,
    pub c_far: f64,
    pub c_support: f64,
    pub cn_re: f64,
    pub cn_im: f64,
}

impl LerayKernelSet {
    pub fn config(&self) -> KernelConfig {
        KernelConfig {
            construction: self.construction,
            r_collar: self.r_collar,
            c: self.spec.c,
            c_prime: self.spec.c_prime,
            c_levi: self.c_levi,
            c_far: self.c_far,
            c_support: self.c_support,
            cn_re: self.cn.re,
            cn_im: self.cn.im,
        }
    }

    /// The holomorphic-in-z support pair (P, Phi) with Phi = <P, zeta - z>.
    pub fn support(&self, zeta: &[C64], z: &[C64]) -> Result<(Vec<C64>, C64)> {
        let n = self.manifold.ambient_n();
        match self.construction {
            SupportConstruction::LeviGlobal => {
                let jet = self.manifold.rho_jet(zeta)?;
                let mut p = vec![C64::new(0.0, 0.0); n];
                for j in 0..n {
                    let mut v = 2.0 * jet.dz[j];
                    for l in 0..n {
                        v -= jet.dzz[(j, l)] * (zeta[l] - z[l]);
                    }
                    p[j] = v;
                }
                let phi: C64 = (0..n).map(|j| p[j] * (zeta[j] - z[j])).sum();
                Ok((p, phi))
            }
            SupportConstruction::PerFactorLog => {
                let mut p = vec![C64::new(0.0, 0.0); n];
                let mut phi = C64::new(0.0, 0.0);
                for j in 0..n {
                    let (pj, aj) = log_factor_support(zeta[j], z[j]);
                    p[j] = pj;
                    phi += aj;
                }
                Ok((p, phi))
            }
        }
    }

    /// dbar_zeta derivatives of P (P is holomorphic in z) and the
    /// holomorphic zeta/z derivatives of Phi needed for the conj(Phi)
    /// patch: returns (dP[j][k] = dP_j/dzetabar_k, dPhi_dzeta, dPhi_dz).
    fn support_derivatives(
        &self,
        zeta: &[C64],
        z: &[C64],
    ) -> Result<(Vec<Vec<C64>>, Vec<C64>, Vec<C64>)> {
        let n = self.manifold.ambient_n();
        match self.construction {
            SupportConstruction::LeviGlobal => {
                let jet = self.manifold.rho_jet(zeta)?;
                let mut dp = vec![vec![C64::new(0.0, 0.0); n]; n];
                for j in 0..n {
                    for k in 0..n {
                        let mut v = 2.0 * jet.dzzbar[(j, k)];
                        for l in 0..n {
                            v -= jet.dzzzbar[k][(j, l)] * (zeta[l] - z[l]);
                        }
                        dp[j][k] = v;
                    }
                }
                let mut dphi_dzeta = vec![C64::new(0.0, 0.0); n];
                let mut dphi_dz = vec![C64::new(0.0, 0.0); n];
                for k in 0..n {
                    let mut v = 2.0 * jet.dz[k];
                    for j in 0..n {
                        v += 2.0 * jet.dzz[(j, k)] * (zeta[j] - z[j]);
                    }
                    for j in 0..n {
                        for l in 0..n {
                            v -= jet.dzzz[k][(j, l)] * (zeta[j] - z[j]) * (zeta[l] - z[l]);
                        }
                    }
                    for l in 0..n {
                        v -= 2.0 * jet.dzz[(k, l)] * (zeta[l] - z[l]);
                    }
                    dphi_dzeta[k] = v;
                    let mut w = -2.0 * jet.dz[k];
                    for l in 0..n {
                        w += 2.0 * jet.dzz[(k, l)] * (zeta[l] - z[l]);
                    }
                    dphi_dz[k] = w;
                }
                Ok((dp, dphi_dzeta, dphi_dz))
            }
            SupportConstruction::PerFactorLog => {
                let mut dp = vec![vec![C64::new(0.0, 0.0); n]; n];
                let mut dphi_dzeta = vec![C64::new(0.0, 0.0); n];
                let mut dphi_dz = vec![C64::new(0.0, 0.0); n];
                for j in 0..n {
                    let (dpj, da_dzeta, da_dz) = log_factor_derivatives(zeta[j], z[j]);
                    dp[j][j] = dpj;
                    dphi_dzeta[j] = da_dzeta;
                    dphi_dz[j] = da_dz;
                }
                Ok((dp, dphi_dzeta, dphi_dz))
            }
        }
    }

    /// Cutoff lambda_delta(zeta) (with the flat-window cap factor) and its
    /// dbar_zeta gradient. The transition runs from rho = (c' delta)^2 to
    /// rho = (0.9 delta)^2 so that lambda vanishes identically on a collar
    /// strictly inside the tube boundary.
    pub fn lambda(&self, zeta: &[C64]) -> Result<(f64, Vec<C64>)> {
        let mut grad = [C64::new(0.0, 0.0); 2];
        let lam = self.lambda_into(zeta, &mut grad);
        Ok((lam, grad[..self.manifold.ambient_n()].to_vec()))
    }

    fn lambda_into(&self, zeta: &[C64], grad: &mut [C64; 2]) -> f64 {
        let spec = &self.spec;
        let mut rho_dz = [C64::new(0.0, 0.0); 2];
        let rho = self.manifold.rho_grad(zeta, &mut rho_dz);
        let cp2 = spec.c_prime * spec.c_prime;
        let cout2 = 0.81;
        let arg = (rho / (spec.delta * spec.delta) - cp2) / (cout2 - cp2);
        let (s, ds) = smoothstep5(arg);
        let mut lam = 1.0 - s;
        let dlam_drho = -ds / (spec.delta * spec.delta * (cout2 - cp2));
        // d rho / d zetabar_k = conj(d rho / d zeta_k)
        grad[0] = dlam_drho * rho_dz[0].conj();
        grad[1] = dlam_drho * rho_dz[1].conj();
        if let Manifold::FlatRmInCn { m, window, guard, .. } = &self.manifold {
            let (cap, dcap) = window_cap(zeta, *m, *window, *guard);
            grad[0] *= cap;
            grad[1] *= cap;
            for k in 0..*m {
                grad[k] += lam * dcap[k] * 0.5;
            }
            lam *= cap;
        }
        lam
    }

    /// The patched Leray data at a pair: P-tilde, its full dbar in (zeta, z),
    /// and Phi-tilde. Allocation-free.
    pub fn patched(&self, zeta: &[C64], z: &[C64]) -> Result<KernelPoint> {
        let n = self.manifold.ambient_n();
        let mut dist2 = 0.0;
        for j in 0..n {
            dist2 += (zeta[j] - z[j]).norm_sqr();
        }
        let dist = dist2.sqrt();
        if dist < 1e-14 {
            return Err(Error::DiagonalSingularity { dist });
        }
        let mut dlam = [C64::new(0.0, 0.0); 2];
        let lam = self.lambda_into(zeta, &mut dlam);

        // support pair and its derivatives, written into fixed buffers
        let mut p = [C64::new(0.0, 0.0); 2];
        let mut dp = [[C64::new(0.0, 0.0); 2]; 2];
        let mut dphi_dzeta = [C64::new(0.0, 0.0); 2];
        let mut dphi_dz = [C64::new(0.0, 0.0); 2];
        let phi = match self.construction {
            SupportConstruction::LeviGlobal => {
                let jet = self.manifold.rho_jet_fixed(zeta)?;
                let mut phi = C64::new(0.0, 0.0);
                for j in 0..n {
                    let mut v = 2.0 * jet.dz[j];
                    for l in 0..n {
                        v -= jet.dzz[j][l] * (zeta[l] - z[l]);
                    }
                    p[j] = v;
                    phi += v * (zeta[j] - z[j]);
                }
                for j in 0..n {
                    for k in 0..n {
                        let mut v = 2.0 * jet.dzzbar[j][k];
                        for l in 0..n {
                            v -= jet.dzzzbar[k][j][l] * (zeta[l] - z[l]);
                        }
                        dp[j][k] = v;
                    }
                }
                for k in 0..n {
                    let mut v = 2.0 * jet.dz[k];
                    for j in 0..n {
                        v += 2.0 * jet.dzz[j][k] * (zeta[j] - z[j]);
                    }
                    for j in 0..n {
                        for l in 0..n {
                            v -= jet.dzzz[k][j][l] * (zeta[j] - z[j]) * (zeta[l] - z[l]);
                        }
                    }
                    for l in 0..n {
                        v -= 2.0 * jet.dzz[k][l] * (zeta[l] - z[l]);
                    }
                    dphi_dzeta[k] = v;
                    let mut w = -2.0 * jet.dz[k];
                    for l in 0..n {
                        w += 2.0 * jet.dzz[k][l] * (zeta[l] - z[l]);
                    }
                    dphi_dz[k] = w;
                }
                phi
            }
            SupportConstruction::PerFactorLog => {
                let mut phi = C64::new(0.0, 0.0);
                for j in 0..n {
                    let (pj, aj) = log_factor_support(zeta[j], z[j]);
                    p[j] = pj;
                    phi += aj;
                    let (dpj, da_dzeta, da_dz) = log_factor_derivatives(zeta[j], z[j]);
                    dp[j][j] = dpj;
                    dphi_dzeta[j] = da_dzeta;
                    dphi_dz[j] = da_dz;
                }
                phi
            }
        };

        // phi-cutoff factor: psi B^{-1} + (1 - psi) conj(Phi), with B == 1.
        let (psi, dpsi) = self.psi(dist);
        let phibar = phi.conj();
        let fac = C64::new(psi, 0.0) + (1.0 - psi) * phibar;

        let mut out = KernelPoint { n, ..KernelPoint::default() };
        for j in 0..n {
            let wbar = (zeta[j] - z[j]).conj();
            out.p_tilde[j] = (1.0 - lam) * fac * p[j] + lam * wbar;
            for k in 0..n {
                let ds_dzetabar = (zeta[k] - z[k]) / (2.0 * dist);
                let dfac_zetabar = dpsi * ds_dzetabar * (C64::new(1.0, 0.0) - phibar)
                    + (1.0 - psi) * dphi_dzeta[k].conj();
                let dfac_zbar = -dpsi * ds_dzetabar * (C64::new(1.0, 0.0) - phibar)
                    + (1.0 - psi) * dphi_dz[k].conj();
                // d/dzetabar_k
                let mut v = -dlam[k] * fac * p[j]
                    + (1.0 - lam) * (dfac_zetabar * p[j] + fac * dp[j][k])
                    + dlam[k] * wbar;
                if j == k {
                    v += C64::new(lam, 0.0);
                }
                out.dbar_p[j][k] = v;
                // d/dzbar_k
                let mut w = (1.0 - lam) * dfac_zbar * p[j];
                if j == k {
                    w -= C64::new(lam, 0.0);
                }
                out.dbar_p[j][n + k] = w;
            }
        }
        out.phi_tilde = (1.0 - lam) * fac * phi + lam * dist2;
        out.singular_scale = dist;
        Ok(out)
    }

    fn psi(&self, dist: f64) -> (f64, f64) {
        if self.r_collar > 1e5 {
            return (1.0, 0.0);
        }
        let lo = 0.5 * self.r_collar;
        let hi = 2.0 * self.r_collar / 3.0;
        let (s, ds) = smoothstep5((dist - lo) / (hi - lo));
        (1.0 - s, -ds / (hi - lo))
    }
}

/// Per-factor annulus support function in log coordinates:
/// with v = -ln|zeta|, S = (zeta/z - z/zeta)/(2i), Q = 2 - zeta/z - z/zeta,
/// A = -2 i v S + Q/2 = P (zeta - z), all single-valued and rational in
/// (zeta, z) except for the real factor v(zeta).
fn log_factor_support(zeta: C64, z: C64) -> (C64, C64) {
    let v = -zeta.norm().ln();
    let p = -(v * (zeta + z) + 0.5 * (zeta - z)) / (zeta * z);
    let a = p * (zeta - z);
    (p, a)
}

/// (dP/dzetabar, dA/dzeta, dA/dz) for the per-factor log support function.
fn log_factor_derivatives(zeta: C64, z: C64) -> (C64, C64, C64) {
    let v = -zeta.norm().ln();
    // dv/dzeta = -1/(2 zeta), dv/dzetabar = -1/(2 zetabar)
    let dv_dzeta = -0.5 / zeta;
    let dv_dzetabar = -0.5 / zeta.conj();
    let s = (zeta / z - z / zeta) / (2.0 * I);
    let ds_dzeta = (1.0 / z + z / (zeta * zeta)) / (2.0 * I);
    let dq_dzeta = -1.0 / z + z / (zeta * zeta);
    let ds_dz = (-zeta / (z * z) - 1.0 / zeta) / (2.0 * I);
    let dq_dz = zeta / (z * z) - 1.0 / zeta;
    let dp = -(dv_dzetabar * (zeta + z)) / (zeta * z);
    let da_dzeta = -2.0 * I * (dv_dzeta * s + v * ds_dzeta) + 0.5 * dq_dzeta;
    let da_dz = -2.0 * I * v * ds_dz + 0.5 * dq_dz;
    (dp, da_dzeta, da_dz)
}

/// Flat-window cap: 1 over the inner window, falling to 0 across the guard
/// band; returns the product and the per-axis d/dx derivatives times the
/// remaining product.
fn window_cap(zeta: &[C64], m: usize, window: (f64, f64), guard: f64) -> (f64, Vec<f64>) {
    let mut vals = vec![1.0; m];
    let mut ders = vec![0.0; m];
    for k in 0..m {
        let x = zeta[k].re;
        if x > window.1 {
            let (s, ds) = smoothstep5((x - window.1 - 0.3 * guard) / (0.6 * guard));
            vals[k] = 1.0 - s;
            ders[k] = -ds / (0.6 * guard);
        } else if x < window.0 {
            let (s, ds) = smoothstep5((window.0 - 0.3 * guard - x) / (0.6 * guard));
            vals[k] = 1.0 - s;
            ders[k] = ds / (0.6 * guard);
        }
    }
    let total: f64 = vals.iter().product();
    let grads = (0..m)
        .map(|k| {
            let others: f64 = vals.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, v)| v).product();
            ders[k] * others
        })
        .collect();
    (total, grads)
}

/// The approximate Levi polynomial A(zeta, z) with exact Hessian
/// coefficients, valid for |zeta - z| <= R.
pub fn levi_polynomial(manifold: &Manifold, zeta: &[C64], z: &[C64], r_max: f64) -> Result<C64> {
    let dist: f64 = zeta
        .iter()
        .zip(z)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if dist > r_max {
        return Err(Error::OutOfRange(format!(
            "levi polynomial evaluated at |zeta - z| = {dist:.3} > R = {r_max:.3}"
        )));
    }
    let jet = manifold.rho_jet(zeta)?;
    let n = manifold.ambient_n();
    let mut a = C64::new(0.0, 0.0);
    for j in 0..n {
        a += 2.0 * jet.dz[j] * (zeta[j] - z[j]);
        for k in 0..n {
            a -= jet.dzz[(j, k)] * (zeta[j] - z[j]) * (zeta[k] - z[k]);
        }
    }
    Ok(a)
}

/// Build the kernel set for a manifold and tube, with the collar and
/// support-positivity conditions verified on sampled pairs.
pub fn henkin_support(manifold: &Manifold, spec: &TubeSpec) -> Result<LerayKernelSet> {
    let n = manifold.ambient_n();
    if !manifold.has_analytic_rho() {
        return Err(Error::UnsupportedManifold(format!(
            "kernel construction needs analytic rho; `{}` has none",
            manifold.kind_name()
        )));
    }
    let (construction, r_collar) = match manifold {
        Manifold::CircleInC => (SupportConstruction::LeviGlobal, 0.35),
        Manifold::TorusInC2 => (SupportConstruction::PerFactorLog, 1e6),
        Manifold::FlatRmInCn { .. } => (SupportConstruction::LeviGlobal, 1e6),
        Manifold::GraphPerturbation { .. } => unreachable!(),
    };
    let mut set = LerayKernelSet {
        manifold: manifold.clone(),
        spec: *spec,
        construction,
        r_collar,
        c_levi: f64::INFINITY,
        c_far: f64::INFINITY,
        c_support: f64::INFINITY,
        cn: bm_constant(n)?,
    };

    // sampled collar checks
    let zeta_grid = crate::geometry::tube_grid(manifold, spec, (14, 4))?;
    let z_grid = crate::geometry::eval_lattice(manifold, spec, (9, 3), 0.05);
    let mut c_levi = f64::INFINITY;
    let mut c_far = f64::INFINITY;
    let mut c_support = f64::INFINITY;
    for node in zeta_grid.nodes.iter() {
        for z in z_grid.iter() {
            let dist2: f64 = node.z.iter().zip(z).map(|(a, b)| (a - b).norm_sqr()).sum();
            if dist2 < 1e-20 {
                continue;
            }
            let dist = dist2.sqrt();
            let (_, phi) = set.support(&node.z, z)?;
            let rho_gap = manifold.rho(&node.z) - manifold.rho(z);
            if dist <= set.r_collar.min(1e3) && rho_gap > 0.0 {
                let margin = (phi.re - rho_gap) / dist2;
                c_levi = c_levi.min(margin);
            }
            if set.r_collar < 1e5 && dist >= 0.5 * set.r_collar {
                c_far = c_far.min(phi.norm());
            }
            // support positivity where the patch weight is active
            if rho_gap > 0.0 {
                let kp = set.patched(&node.z, z)?;
                let ratio = kp.phi_tilde.re / dist2;
                c_support = c_support.min(ratio);
                if kp.phi_tilde.re <= 0.0 {
                    return Err(Error::SupportViolation { value: kp.phi_tilde.re });
                }
            }
        }
    }
    if c_levi <= 0.0 {
        return Err(Error::CollarViolation { margin: c_levi });
    }
    if set.r_collar < 1e5 && c_far <= 0.0 {
        return Err(Error::CollarViolation { margin: c_far });
    }
    set.c_levi = c_levi;
    set.c_far = if c_far.is_finite() { c_far } else { 0.0 };
    set.c_support = c_support;
    Ok(set)
}

/// The patched Leray pair (P-tilde, Phi-tilde) at a point pair, as named in
/// the construction.
pub fn patched_leray(set: &LerayKernelSet, zeta: &[C64], z: &[C64]) -> Result<(Vec<C64>, C64)> {
    let kp = set.patched(zeta, z)?;
    Ok((kp.p_tilde[..kp.n].to_vec(), kp.phi_tilde))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Manifold, TubeSpec};

    fn flat1() -> Manifold {
        Manifold::FlatRmInCn { m: 1, n: 1, window: (0.0, 1.0), guard: 0.3 }
    }

    #[test]
    fn levi_polynomial_flat_exact_margin() {
        // For rho = y^2 the gap Re A - (rho(zeta) - rho(z)) is exactly
        // |zeta - z|^2 / 2.
        let m = flat1();
        let zeta = [C64::new(0.3, 0.08)];
        let z = [C64::new(0.5, -0.03)];
        let a = levi_polynomial(&m, &zeta, &z, 10.0).unwrap();
        let gap = m.rho(&zeta) - m.rho(&z);
        let d2 = (zeta[0] - z[0]).norm_sqr();
        assert!((a.re - gap - 0.5 * d2).abs() < 1e-13);
        // zeta = z gives A = 0
        let a0 = levi_polynomial(&m, &zeta, &zeta, 10.0).unwrap();
        assert!(a0.norm() < 1e-15);
    }

    #[test]
    fn levi_polynomial_conjugate_point() {
        // z = conj(zeta) for zeta = i y on R in C: A = 2 y^2
        let m = flat1();
        let y = 0.21;
        let zeta = [C64::new(0.0, y)];
        let z = [C64::new(0.0, -y)];
        let a = levi_polynomial(&m, &zeta, &z, 10.0).unwrap();
        assert!((a - C64::new(2.0 * y * y, 0.0)).norm() < 1e-13, "{a}");
    }

    #[test]
    fn flat_support_is_levi_with_unit_b() {
        let m = flat1();
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let set = henkin_support(&m, &spec).unwrap();
        let zeta = [C64::new(0.4, 0.05)];
        let z = [C64::new(0.6, -0.02)];
        let (p, phi) = set.support(&zeta, &z).unwrap();
        let a = levi_polynomial(&m, &zeta, &z, 10.0).unwrap();
        assert!((phi - a).norm() < 1e-13);
        // P_j = -2i y_j(zeta) + (zeta_j - z_j)/2
        let expect = -2.0 * I * zeta[0].im + 0.5 * (zeta[0] - z[0]);
        assert!((p[0] - expect).norm() < 1e-13, "{} vs {}", p[0], expect);
        // division identity
        let dot = p[0] * (zeta[0] - z[0]);
        assert!((dot - phi).norm() < 1e-12);
    }

    #[test]
    fn torus_support_identity_and_positivity() {
        let m = Manifold::TorusInC2;
        let spec = TubeSpec::with_defaults(0.15, &m).unwrap();
        let set = henkin_support(&m, &spec).unwrap();
        assert!(set.c_support > 0.0, "sampled support constant {}", set.c_support);
        // <P, zeta - z> = Phi to machine precision at random-ish pairs
        for k in 0..40 {
            let t = k as f64 * 0.37;
            let zeta = [
                C64::from_polar(1.0 + 0.1 * (t * 1.3).sin(), t),
                C64::from_polar(1.0 - 0.08 * (t * 0.7).cos(), 2.1 * t),
            ];
            let z = [
                C64::from_polar(1.0 + 0.03 * (t * 0.9).cos(), -0.5 * t),
                C64::from_polar(1.0 + 0.02 * t.sin(), 1.7 * t + 1.0),
            ];
            let (p, phi) = set.support(&zeta, &z).unwrap();
            let dot: C64 = (0..2).map(|j| p[j] * (zeta[j] - z[j])).sum();
            assert!((dot - phi).norm() < 1e-12 * (1.0 + phi.norm()));
        }
    }

    #[test]
    fn levi_polynomial_fails_far_on_torus() {
        // The raw Levi polynomial vanishes at the antipodal pair
        // zeta = (1, 1), z = (i, -i); the log-based support does not.
        let m = Manifold::TorusInC2;
        let zeta = [C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        let z = [C64::new(0.0, 1.0), C64::new(0.0, -1.0)];
        let a = levi_polynomial(&m, &zeta, &z, 10.0).unwrap();
        assert!(a.norm() < 1e-12, "Levi polynomial should vanish here, got {a}");
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let set = henkin_support(&m, &spec).unwrap();
        let (_, phi) = set.support(&zeta, &z).unwrap();
        assert!(phi.re > 0.5, "log support function should be sign-good, got {phi}");
    }

    #[test]
    fn patched_leray_regions() {
        let m = Manifold::CircleInC;
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let set = henkin_support(&m, &spec).unwrap();
        // lambda = 1 region: P-tilde = conj(zeta - z), Phi-tilde = |zeta-z|^2
        let zeta = [C64::from_polar(1.02, 0.3)];
        let z = [C64::from_polar(0.99, 0.28)];
        let (pt, phit) = patched_leray(&set, &zeta, &z).unwrap();
        let w = zeta[0] - z[0];
        assert!((pt[0] - w.conj()).norm() < 1e-13);
        assert!((phit - C64::new(w.norm_sqr(), 0.0)).norm() < 1e-13);
        // near-boundary zeta at close range: psi = 1, so P-tilde = P there
        // and is holomorphic in z; check the dbar_z slots of the kernel point
        let zeta_b = [C64::from_polar(1.0 + 0.098, 0.3)];
        let z_in = [C64::from_polar(1.0 + 0.03, 0.31)];
        let kp = set.patched(&zeta_b, &z_in).unwrap();
        let (lam, _) = set.lambda(&zeta_b).unwrap();
        assert!(lam < 0.05, "lambda should be nearly 0 at the boundary, got {lam}");
        for j in 0..1 {
            let dzbar = kp.dbar_p[j][1]; // z-antiholomorphic slot
            assert!(dzbar.norm() < 1e-8, "dbar_z P-tilde = {dzbar}");
        }
    }

    #[test]
    fn support_positivity_sampled() {
        for (m, delta) in [
            (Manifold::CircleInC, 0.1),
            (flat1(), 0.1),
            (Manifold::TorusInC2, 0.1),
        ] {
            let spec = TubeSpec::with_defaults(delta, &m).unwrap();
            let set = henkin_support(&m, &spec).unwrap();
            assert!(
                set.c_support > 0.0,
                "{}: support constant {}",
                m.kind_name(),
                set.c_support
            );
        }
    }
}
#[cfg(test)]
mod derivative_check {
    use super::*;
    use crate::geometry::{Manifold, TubeSpec};

    fn fd_wirtinger(
        f: &dyn Fn(&[C64]) -> C64,
        z: &[C64],
        k: usize,
        h: f64,
    ) -> (C64, C64) {
        let mut zp = z.to_vec();
        zp[k] = z[k] + C64::new(h, 0.0);
        let fxp = f(&zp);
        zp[k] = z[k] - C64::new(h, 0.0);
        let fxm = f(&zp);
        zp[k] = z[k] + C64::new(0.0, h);
        let fyp = f(&zp);
        zp[k] = z[k] - C64::new(0.0, h);
        let fym = f(&zp);
        let dx = (fxp - fxm) / (2.0 * h);
        let dy = (fyp - fym) / (2.0 * h);
        ((dx - crate::I * dy) * 0.5, (dx + crate::I * dy) * 0.5)
    }

    #[test]
    fn patched_dbar_matches_fd() {
        for (m, name) in [
            (Manifold::TorusInC2, "torus"),
            (Manifold::CircleInC, "circle"),
        ] {
            let n = m.ambient_n();
            let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
            let set = henkin_support(&m, &spec).unwrap();
            // a pair in the blend region (lambda in (0,1)) for the torus
            let zeta: Vec<C64> = if n == 2 {
                vec![C64::from_polar(1.085, 0.9), C64::from_polar(1.0, 2.2)]
            } else {
                vec![C64::from_polar(1.085, 0.9)]
            };
            let z: Vec<C64> = if n == 2 {
                vec![C64::from_polar(1.01, 0.7), C64::from_polar(0.99, 2.0)]
            } else {
                vec![C64::from_polar(1.01, 0.7)]
            };
            let (lam, _) = set.lambda(&zeta).unwrap();
            println!("{name} lambda = {lam}");
            let kp = set.patched(&zeta, &z).unwrap();
            let h = 1e-6;
            for j in 0..n {
                for k in 0..n {
                    // dbar_zeta_k of P~_j
                    let setc = set.clone();
                    let zc = z.clone();
                    let f = move |w: &[C64]| setc.patched(w, &zc).unwrap().p_tilde[j];
                    let (_, dzb) = fd_wirtinger(&f, &zeta, k, h);
                    let diff = (kp.dbar_p[j][k] - dzb).norm();
                    println!("{name} dP{j}/dzetabar{k}: analytic {} fd {} diff {diff:.2e}", kp.dbar_p[j][k], dzb);
                    // dbar_z_k
                    let setc = set.clone();
                    let zec = zeta.clone();
                    let g = move |w: &[C64]| setc.patched(&zec, w).unwrap().p_tilde[j];
                    let (_, dzb2) = fd_wirtinger(&g, &z, k, h);
                    let diff2 = (kp.dbar_p[j][n + k] - dzb2).norm();
                    println!("{name} dP{j}/dzbar{k}:    analytic {} fd {} diff {diff2:.2e}", kp.dbar_p[j][n + k], dzb2);
                }
            }
        }
    }
}

//! Assembly of the Koppelman kernel
//! K = c_n Phi-tilde^{-n} sum_j (-1)^{j-1} P~_j dbar P~[j] ^ d(zeta - z)
//! from a patched Leray point, its bidegree decomposition K_{p,q}, and the
//! pairing table used by the solution operator.

use super::exterior::{pairing_table, MultiVector, PairEntry};
use super::LerayKernelSet;
use crate::forms::Mask;
use crate::{C64, Error, Result};
use std::collections::BTreeMap;

/// The patched Leray data at one (zeta, z) pair: values of P-tilde, its
/// dbar in both variables (`dbar_p[j][k]` is d P~_j / d zetabar_k for
/// k < n and d P~_j / d zbar_{k-n} for k >= n), and Phi-tilde.
#[derive(Clone, Debug)]
pub struct KernelPoint {
    pub n: usize,
    pub p_tilde: [C64; 2],
    pub dbar_p: [[C64; 4]; 2],
    pub phi_tilde: C64,
    pub singular_scale: f64,
}

impl Default for KernelPoint {
    fn default() -> Self {
        KernelPoint {
            n: 0,
            p_tilde: [C64::new(0.0, 0.0); 2],
            dbar_p: [[C64::new(0.0, 0.0); 4]; 2],
            phi_tilde: C64::new(0.0, 0.0),
            singular_scale: 0.0,
        }
    }
}

impl KernelPoint {
    /// The regularized Bochner-Martinelli point: P-tilde = conj(w),
    /// Phi-tilde = t^2 + |w|^2 (t = 0 gives the exact kernel).
    pub fn bochner_martinelli(w: &[C64], t_reg: f64) -> KernelPoint {
        let n = w.len();
        let mut out = KernelPoint { n, ..Default::default() };
        Self::bochner_martinelli_into(w, t_reg, &mut out);
        out
    }

    pub fn bochner_martinelli_into(w: &[C64], t_reg: f64, out: &mut KernelPoint) {
        let n = w.len();
        out.n = n;
        let mut dist2 = 0.0;
        for j in 0..n {
            out.p_tilde[j] = w[j].conj();
            for g in 0..4 {
                out.dbar_p[j][g] = C64::new(0.0, 0.0);
            }
            out.dbar_p[j][j] = C64::new(1.0, 0.0);
            out.dbar_p[j][n + j] = C64::new(-1.0, 0.0);
            dist2 += w[j].norm_sqr();
        }
        out.phi_tilde = C64::new(t_reg * t_reg + dist2, 0.0);
        out.singular_scale = dist2.sqrt();
    }

    /// Full kernel monomials over the doubled generator set.
    pub fn monomials(&self, cn: C64) -> Vec<(u64, C64)> {
        let n = self.n;
        let prefactor = cn * self.phi_tilde.powi(-(n as i32));
        // d(zeta - z) = prod_k (dzeta_k - dz_k)
        let mut dz_part = MultiVector::scalar(C64::new(1.0, 0.0));
        for k in 0..n {
            let f = MultiVector::one_form(&[(k, C64::new(1.0, 0.0)), (n + k, C64::new(-1.0, 0.0))]);
            dz_part = dz_part.wedge(&f);
        }
        let mut total = MultiVector::default();
        for j in 0..n {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let mut term = MultiVector::scalar(self.p_tilde[j] * sign);
            for i in 0..n {
                if i == j {
                    continue;
                }
                // antiholomorphic generators sit above the 2n holomorphic
                // ones: zeta-anti at 2n + k, z-anti at 3n + (k - n)
                let comps: Vec<(usize, C64)> =
                    (0..2 * n).map(|k| (2 * n + k, self.dbar_p[i][k])).collect();
                term = term.wedge(&MultiVector::one_form(&comps));
            }
            total = total.add(&term.wedge(&dz_part));
        }
        total.terms.iter().map(|&(m, c)| (m, c * prefactor)).collect()
    }

    pub fn pairing(&self, cn: C64, out: &mut Vec<PairEntry>) {
        let mono = self.monomials(cn);
        pairing_table(self.n, &mono, out);
    }

    /// Bidegree decomposition: blocks[(p, q)] maps
    /// ((I, J) in z, (A, B) in zeta) to the coefficient of
    /// dzeta^A ^ dzetabar^B (x) dz^I ^ dzbar^J.
    pub fn kernel_value(&self, cn: C64) -> KernelValue {
        let mono = self.monomials(cn);
        let mut blocks: BTreeMap<(usize, usize), BTreeMap<((Mask, Mask), (Mask, Mask)), C64>> =
            BTreeMap::new();
        for (mask, coeff) in mono {
            let (a, iz, b, jz) = super::exterior::split_mask(mask, self.n);
            let s1 = if (iz.count_ones() * b.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
            let p = iz.count_ones() as usize;
            let q = jz.count_ones() as usize;
            *blocks
                .entry((p, q))
                .or_default()
                .entry(((iz, jz), (a, b)))
                .or_insert(C64::new(0.0, 0.0)) += coeff * s1;
        }
        KernelValue { n: self.n, blocks, singular_scale: self.singular_scale }
    }
}

/// The kernel at one point pair, split by bidegree in z.
#[derive(Clone, Debug)]
pub struct KernelValue {
    pub n: usize,
    pub blocks: BTreeMap<(usize, usize), BTreeMap<((Mask, Mask), (Mask, Mask)), C64>>,
    pub singular_scale: f64,
}

impl KernelValue {
    /// Largest coefficient magnitude in a block (0 when absent).
    pub fn block_max(&self, p: usize, q: usize) -> f64 {
        self.blocks
            .get(&(p, q))
            .map(|b| b.values().map(|c| c.norm()).fold(0.0, f64::max))
            .unwrap_or(0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .values()
            .flat_map(|b| b.values())
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }
}

/// The patched Koppelman kernel at a pair of tube points.
pub fn koppelman_kernels(set: &LerayKernelSet, zeta: &[C64], z: &[C64]) -> Result<KernelValue> {
    let kp = set.patched(zeta, z)?;
    if kp.singular_scale < 1e-14 {
        return Err(Error::DiagonalSingularity { dist: kp.singular_scale });
    }
    Ok(kp.kernel_value(set.cn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Manifold, TubeSpec};
    use crate::kernels::{bm_constant, henkin_support};

    #[test]
    fn bm_reduction_in_lambda_one_region() {
        // Inside T_{c' delta} the patched kernel equals the BM kernel.
        let m = Manifold::CircleInC;
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let set = henkin_support(&m, &spec).unwrap();
        let zeta = [C64::from_polar(1.01, 0.50)];
        let z = [C64::from_polar(0.98, 0.52)];
        let kv = koppelman_kernels(&set, &zeta, &z).unwrap();
        let w = [zeta[0] - z[0]];
        let bm = KernelPoint::bochner_martinelli(&w, 0.0).kernel_value(set.cn);
        for (key, blk) in &bm.blocks {
            let other = &kv.blocks[key];
            for (k, v) in blk {
                let o = other.get(k).copied().unwrap_or(C64::new(0.0, 0.0));
                assert!((v - o).norm() < 1e-8 * (1.0 + v.norm()), "block {key:?} {k:?}");
            }
        }
    }

    #[test]
    fn n1_kernel_is_cauchy() {
        // K = (1/2 pi i) dzeta / (zeta - z) in the lambda = 1 region
        let cn = bm_constant(1).unwrap();
        let w = [C64::new(0.03, -0.02)];
        let kv = KernelPoint::bochner_martinelli(&w, 0.0).kernel_value(cn);
        let coeff = kv.blocks[&(0, 0)][&((0, 0), (1, 0))];
        let expect = cn / w[0];
        assert!((coeff - expect).norm() < 1e-12 * expect.norm());
    }

    #[test]
    fn boundary_collar_kills_q_blocks() {
        // For zeta near the tube boundary and z in T_{c' delta}, every
        // K_{p,q} block with q > 0 vanishes.
        let m = Manifold::TorusInC2;
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let set = henkin_support(&m, &spec).unwrap();
        let zeta = [C64::from_polar(1.0 + 0.0995, 0.4), C64::from_polar(1.0, 1.1)];
        let z = [C64::from_polar(1.0 + 0.02, 0.41), C64::from_polar(1.0 - 0.01, 1.08)];
        let kv = koppelman_kernels(&set, &zeta, &z).unwrap();
        for q in 1..2 {
            for p in 0..2 {
                let v = kv.block_max(p, q);
                assert!(v < 1e-12, "K_({p},{q}) = {v} should vanish near the boundary");
            }
        }
    }

    #[test]
    fn bm_homogeneity_degree() {
        // |B| at |w| = 2 r equals 2^{1-2n} x |B| at |w| = r for a fixed
        // direction.
        for n in [1usize, 2] {
            let cn = bm_constant(n).unwrap();
            let dir: Vec<C64> = (0..n).map(|j| C64::new(0.6, -0.3 * (j as f64 + 1.0))).collect();
            let norm: f64 = dir.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let w1: Vec<C64> = dir.iter().map(|c| c / norm * 0.01).collect();
            let w2: Vec<C64> = dir.iter().map(|c| c / norm * 0.02).collect();
            let k1 = KernelPoint::bochner_martinelli(&w1, 0.0).kernel_value(cn);
            let k2 = KernelPoint::bochner_martinelli(&w2, 0.0).kernel_value(cn);
            let ratio = k2.max_abs() / k1.max_abs();
            let expect = 2.0f64.powi(1 - 2 * n as i32);
            assert!((ratio - expect).abs() < 1e-10, "n = {n}: ratio {ratio} vs {expect}");
        }
    }

    #[test]
    fn bm_coefficient_decay_bound() {
        // coefficient magnitudes are bounded by |c_n| |w|^{1-2n}
        for n in [1usize, 2] {
            let cn = bm_constant(n).unwrap();
            let w: Vec<C64> = (0..n).map(|j| C64::new(0.05 + 0.01 * j as f64, -0.02)).collect();
            let dist: f64 = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let kv = KernelPoint::bochner_martinelli(&w, 0.0).kernel_value(cn);
            let bound = cn.norm() * dist.powi(1 - 2 * n as i32) * 1.0001;
            assert!(kv.max_abs() <= bound, "n = {n}: {} vs {bound}", kv.max_abs());
        }
    }
}

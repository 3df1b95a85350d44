//! Allocation-free kernel pairing for the hot solver loop. The monomial
//! masks and reordering signs of the Koppelman kernel are independent of
//! the evaluation point, so they are compiled once per ambient dimension by
//! driving the generic pairing machinery with indicator coefficients; the
//! per-point work is then a flat array contraction.
//!
//! Per point, the kernel form is
//!   c_n Phi~^{-n} sum_g A_g (antihol gen g) ^ prod_k (dzeta_k - dz_k)
//! for n = 2 (with A_g = P~_0 dbarP_1[g] - P~_1 dbarP_0[g]), and
//!   c_1 Phi~^{-1} P~_0 (dzeta_0 - dz_0)
//! for n = 1.

use super::exterior::{pairing_table, PairEntry};
use super::koppelman::KernelPoint;
use crate::forms::Mask;
use crate::C64;

/// One compiled contraction: take the point-dependent factor slot, apply
/// the static weight, pair u-component `u_idx` into output `out_idx`.
#[derive(Clone, Debug)]
struct CompiledEntry {
    /// Index into the per-point factor array: for n = 2 this is
    /// g * 4 + h (antihol generator g, hol combo h); for n = 1 it is h.
    factor: usize,
    u_idx: usize,
    out_idx: usize,
    weight: C64,
}

#[derive(Clone, Debug)]
pub struct CompiledKernel {
    n: usize,
    entries: Vec<CompiledEntry>,
    pub u_keys: Vec<(Mask, Mask)>,
    pub out_keys: Vec<(Mask, Mask)>,
}

impl CompiledKernel {
    /// Build the template for the given input components. Output components
    /// are discovered from the pairing of the full monomial basis.
    pub fn build(n: usize, u_keys: &[(Mask, Mask)]) -> CompiledKernel {
        assert!(n <= 2, "compiled kernels cover n <= 2");
        let mut entries = Vec::new();
        let mut out_keys: Vec<(Mask, Mask)> = Vec::new();
        let mut table: Vec<PairEntry> = Vec::new();

        let factor_masks: Vec<(usize, u64, f64)> = if n == 1 {
            // factors: h in {dzeta_0 (+1), dz_0 (-1)}
            vec![(0, 1u64, 1.0), (1, 1u64 << 1, -1.0)]
        } else {
            // g in 0..4 (antihol generators 4..8), h in 0..4 over
            // (dzeta_0|dz_0) x (dzeta_1|dz_1) with sign (-1)^{#dz}
            let mut v = Vec::new();
            for g in 0..4usize {
                for h in 0..4usize {
                    let m0 = if h & 1 == 0 { 1u64 } else { 1u64 << 2 };
                    let m1 = if h & 2 == 0 { 1u64 << 1 } else { 1u64 << 3 };
                    let gen = 1u64 << (4 + g);
                    let sign = if (h & 1 != 0) != (h & 2 != 0) { -1.0 } else { 1.0 };
                    // wedge order: gen ^ m0 ^ m1 with merge signs
                    let s1 = super::exterior::merge_sign64(gen, m0);
                    let s2 = super::exterior::merge_sign64(gen | m0, m1);
                    if s1 == 0 || s2 == 0 {
                        continue;
                    }
                    v.push((g * 4 + h, gen | m0 | m1, sign * f64::from(s1 * s2)));
                }
            }
            v
        };
        for (factor, mask, sign) in factor_masks {
            table.clear();
            pairing_table(n, &[(mask, C64::new(sign, 0.0))], &mut table);
            for e in &table {
                let Some(u_idx) = u_keys.iter().position(|&k| k == (e.in_i, e.in_j)) else {
                    continue;
                };
                let out_key = (e.out_i, e.out_j);
                let out_idx = match out_keys.iter().position(|&k| k == out_key) {
                    Some(i) => i,
                    None => {
                        out_keys.push(out_key);
                        out_keys.len() - 1
                    }
                };
                entries.push(CompiledEntry { factor, u_idx, out_idx, weight: e.weight });
            }
        }
        CompiledKernel { n, entries, u_keys: u_keys.to_vec(), out_keys }
    }

    /// Accumulate the contraction at one point:
    /// acc[out] += total_weight * kernel_pair(u_vals).
    pub fn accumulate(
        &self,
        kp: &KernelPoint,
        cn: C64,
        u_vals: &[C64],
        node_weight: f64,
        acc: &mut [C64],
    ) {
        let pref = cn * kp.phi_tilde.powi(-(self.n as i32)) * node_weight;
        if self.n == 1 {
            // factors: [P~_0 (dzeta), P~_0 (dz, sign folded in template)]
            let f0 = kp.p_tilde[0];
            for e in &self.entries {
                let fac = f0; // both factor slots carry P~_0
                let u = u_vals[e.u_idx];
                if u == C64::new(0.0, 0.0) {
                    continue;
                }
                acc[e.out_idx] += pref * e.weight * fac * u;
            }
        } else {
            // A_g = P~_0 dbarP_1[g] - P~_1 dbarP_0[g]
            let mut a = [C64::new(0.0, 0.0); 4];
            for (g, slot) in a.iter_mut().enumerate() {
                *slot = kp.p_tilde[0] * kp.dbar_p[1][g] - kp.p_tilde[1] * kp.dbar_p[0][g];
            }
            for e in &self.entries {
                let u = u_vals[e.u_idx];
                if u == C64::new(0.0, 0.0) {
                    continue;
                }
                acc[e.out_idx] += pref * e.weight * a[e.factor / 4] * u;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::bm_constant;

    /// The compiled contraction must agree with the generic pairing path.
    #[test]
    fn compiled_matches_generic() {
        for n in [1usize, 2] {
            let cn = bm_constant(n).unwrap();
            // u components: all (p, q) with q = 1 masks, plus a (1,1) for n=2
            let mut u_keys: Vec<(Mask, Mask)> = Vec::new();
            for mi in 0u32..(1 << n) {
                for mj in 0u32..(1 << n) {
                    if mj.count_ones() == 1 && mi.count_ones() <= 1 {
                        u_keys.push((mi, mj));
                    }
                }
            }
            let ck = CompiledKernel::build(n, &u_keys);
            // a few synthetic kernel points
            for trial in 0..5 {
                let t = trial as f64;
                let w: Vec<C64> = (0..n)
                    .map(|j| C64::new(0.02 + 0.01 * t + 0.005 * j as f64, -0.015 + 0.002 * t))
                    .collect();
                let mut kp = KernelPoint::bochner_martinelli(&w, 0.0);
                // perturb to a generic (non-BM) point
                for j in 0..n {
                    kp.p_tilde[j] += C64::new(0.003 * t, 0.001 * (j as f64 + 1.0));
                    for g in 0..2 * n {
                        kp.dbar_p[j][g] += C64::new(0.01 * (g as f64 - t), 0.005 * t);
                    }
                }
                let u_vals: Vec<C64> = (0..u_keys.len())
                    .map(|i| C64::new(0.4 - 0.1 * i as f64, 0.2 * i as f64 + 0.1 * t))
                    .collect();
                // generic path
                let mut table = Vec::new();
                kp.pairing(cn, &mut table);
                let mut want: std::collections::BTreeMap<(Mask, Mask), C64> = Default::default();
                for e in &table {
                    if let Some(i) = u_keys.iter().position(|&k| k == (e.in_i, e.in_j)) {
                        *want.entry((e.out_i, e.out_j)).or_insert(C64::new(0.0, 0.0)) +=
                            e.weight * u_vals[i] * 0.37;
                    }
                }
                // compiled path
                let mut acc = vec![C64::new(0.0, 0.0); ck.out_keys.len()];
                ck.accumulate(&kp, cn, &u_vals, 0.37, &mut acc);
                for (i, key) in ck.out_keys.iter().enumerate() {
                    let w = want.get(key).copied().unwrap_or(C64::new(0.0, 0.0));
                    assert!(
                        (acc[i] - w).norm() <= 1e-12 * (1.0 + w.norm()),
                        "n={n} key {key:?}: {} vs {}",
                        acc[i],
                        w
                    );
                }
                for (key, w) in &want {
                    if !ck.out_keys.contains(key) {
                        assert!(w.norm() < 1e-14, "missing output {key:?} with weight {w}");
                    }
                }
            }
        }
    }
}

//! Exterior algebra over the doubled generator set
//! (dzeta_j, dz_j, dzetabar_j, dzbar_j) used to assemble Koppelman kernels
//! and to extract their bidegree blocks. Generators are bit positions in a
//! u64 mask: [0, n) holomorphic zeta, [n, 2n) holomorphic z, [2n, 3n)
//! antiholomorphic zeta, [3n, 4n) antiholomorphic z.

use crate::forms::Mask;
use crate::C64;

/// Sign of merging two disjoint ascending generator masks (0 on overlap).
pub fn merge_sign64(a: u64, b: u64) -> i32 {
    if a & b != 0 {
        return 0;
    }
    let mut inv = 0u32;
    let mut bb = b;
    while bb != 0 {
        let j = bb.trailing_zeros();
        bb &= bb - 1;
        inv += (a >> (j + 1)).count_ones();
    }
    if inv % 2 == 0 {
        1
    } else {
        -1
    }
}

/// A multivector: sorted monomial list.
#[derive(Clone, Debug, Default)]
pub struct MultiVector {
    pub terms: Vec<(u64, C64)>,
}

impl MultiVector {
    pub fn scalar(c: C64) -> Self {
        MultiVector { terms: vec![(0, c)] }
    }

    pub fn one_form(components: &[(usize, C64)]) -> Self {
        MultiVector {
            terms: components
                .iter()
                .filter(|(_, c)| c.norm_sqr() != 0.0)
                .map(|&(g, c)| (1u64 << g, c))
                .collect(),
        }
    }

    pub fn wedge(&self, other: &MultiVector) -> MultiVector {
        let mut out: Vec<(u64, C64)> = Vec::with_capacity(self.terms.len() * other.terms.len());
        for &(ma, ca) in &self.terms {
            for &(mb, cb) in &other.terms {
                let s = merge_sign64(ma, mb);
                if s == 0 {
                    continue;
                }
                out.push((ma | mb, ca * cb * f64::from(s)));
            }
        }
        MultiVector { terms: combine(out) }
    }

    pub fn add(&self, other: &MultiVector) -> MultiVector {
        let mut out = self.terms.clone();
        out.extend_from_slice(&other.terms);
        MultiVector { terms: combine(out) }
    }

    pub fn scale(&self, c: C64) -> MultiVector {
        MultiVector { terms: self.terms.iter().map(|&(m, v)| (m, v * c)).collect() }
    }
}

fn combine(mut terms: Vec<(u64, C64)>) -> Vec<(u64, C64)> {
    terms.sort_by_key(|&(m, _)| m);
    let mut out: Vec<(u64, C64)> = Vec::with_capacity(terms.len());
    for (m, c) in terms {
        match out.last_mut() {
            Some((lm, lc)) if *lm == m => *lc += c,
            _ => out.push((m, c)),
        }
    }
    out.retain(|&(_, c)| c.norm_sqr() > 0.0);
    out
}

/// Split a global monomial mask into the four index blocks
/// (zeta-hol, z-hol, zeta-anti, z-anti) over 0..n each.
pub fn split_mask(mask: u64, n: usize) -> (Mask, Mask, Mask, Mask) {
    let ones = (1u64 << n) - 1;
    (
        (mask & ones) as Mask,
        ((mask >> n) & ones) as Mask,
        ((mask >> (2 * n)) & ones) as Mask,
        ((mask >> (3 * n)) & ones) as Mask,
    )
}

/// One entry of the integration pairing: the kernel monomials contract an
/// input component (in_i, in_j) of u at zeta into the output component
/// (out_i, out_j) of v at z, with all reordering signs, the top-form to
/// volume-density conversion, and the (-1)^{p+q} convention folded into the
/// weight. v_{out} += weight * u_in(zeta) * node_weight.
#[derive(Clone, Copy, Debug)]
pub struct PairEntry {
    pub out_i: Mask,
    pub out_j: Mask,
    pub in_i: Mask,
    pub in_j: Mask,
    pub weight: C64,
}

/// Volume conversion for dzeta^{1..n} wedge dzetabar^{1..n} in terms of the
/// standard volume density: (-1)^{n(n-1)/2} (-2i)^n.
pub fn volume_factor(n: usize) -> C64 {
    let mut f = C64::new(1.0, 0.0);
    for _ in 0..n {
        f *= C64::new(0.0, -2.0);
    }
    if (n * (n - 1) / 2) % 2 == 1 {
        f = -f;
    }
    f
}

/// Extract the pairing table from the full kernel monomials.
pub fn pairing_table(n: usize, monomials: &[(u64, C64)], out: &mut Vec<PairEntry>) {
    out.clear();
    let full: Mask = ((1u64 << n) - 1) as Mask;
    let volf = volume_factor(n);
    for &(mask, coeff) in monomials {
        let (a, iz, b, jz) = split_mask(mask, n);
        // sign to regroup the interleaved global order into
        // (zeta-hol, zeta-anti, z-hol, z-anti): move the z-hol block past
        // the zeta-anti block
        let s1 = if (iz.count_ones() * b.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
        let in_i = full & !a;
        let in_j = full & !b;
        // sign of u wedge k: (dz^{in_i} dzbar^{in_j}) (dz^A dzbar^B)
        let si = crate::forms::wedge_sign(in_i, a);
        let sj = crate::forms::wedge_sign(in_j, b);
        if si == 0 || sj == 0 {
            continue;
        }
        let s2 = f64::from(si * sj)
            * if (a.count_ones() * in_j.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
        let spq = if ((in_i.count_ones() + in_j.count_ones()) % 2) == 0 { 1.0 } else { -1.0 };
        let weight = coeff * s1 * s2 * spq * volf;
        out.push(PairEntry { out_i: iz, out_j: jz, in_i, in_j, weight });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_signs() {
        // e0 ^ e1 vs e1 ^ e0
        assert_eq!(merge_sign64(0b01, 0b10), 1);
        assert_eq!(merge_sign64(0b10, 0b01), -1);
        assert_eq!(merge_sign64(0b01, 0b01), 0);
        // e0e2 ^ e1: one inversion (2 > 1)
        assert_eq!(merge_sign64(0b101, 0b010), -1);
    }

    #[test]
    fn wedge_is_antisymmetric_on_one_forms() {
        let a = MultiVector::one_form(&[(0, C64::new(1.0, 0.0)), (2, C64::new(0.0, 1.0))]);
        let b = MultiVector::one_form(&[(1, C64::new(2.0, 0.0))]);
        let ab = a.wedge(&b);
        let ba = b.wedge(&a);
        for (&(m1, c1), &(m2, c2)) in ab.terms.iter().zip(&ba.terms) {
            assert_eq!(m1, m2);
            assert!((c1 + c2).norm() < 1e-15);
        }
    }

    #[test]
    fn volume_factor_small_n() {
        // n = 1: dzeta ^ dzetabar = -2i dV
        assert_eq!(volume_factor(1), C64::new(0.0, -2.0));
        // n = 2: one block transposition gives +4 dV
        assert_eq!(volume_factor(2), C64::new(4.0, 0.0));
    }
}

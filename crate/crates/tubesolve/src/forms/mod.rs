//! Differential (p,q)-forms on tube regions. Multiindices are stored as
//! bitmasks over 0..n (increasing by construction), coefficients are either
//! closed-form expressions or opaque evaluators (see [`crate::expr::Coeff`]).
//! Pullbacks under non-holomorphic maps mix bidegrees, so alongside the
//! strict [`FormField`] there is a graded [`MixedForm`].

mod homotopy;
mod norms;

pub use homotopy::{homotopy_residual, homotopy_solve, HomotopyOutput};
pub use norms::{modulus_of_continuity, norms, NormReport};

use crate::expr::{Coeff, Expr};
use crate::linalg::CMat;
use crate::{C64, Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

pub type Mask = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bidegree {
    pub p: usize,
    pub q: usize,
}

impl Bidegree {
    pub fn new(p: usize, q: usize) -> Self {
        Bidegree { p, q }
    }

    pub fn degree(&self) -> usize {
        self.p + self.q
    }
}

/// Sign of sorting the concatenation of two disjoint ascending masks;
/// zero if they overlap.
pub fn wedge_sign(a: Mask, b: Mask) -> i32 {
    if a & b != 0 {
        return 0;
    }
    let mut inversions = 0u32;
    let mut bb = b;
    while bb != 0 {
        let j = bb.trailing_zeros();
        bb &= bb - 1;
        inversions += (a >> (j + 1)).count_ones();
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Sign of inserting a single index into an ascending mask (must not be
/// present).
fn insert_sign(j: usize, mask: Mask) -> i32 {
    let below = mask & ((1u32 << j) - 1);
    if below.count_ones() % 2 == 0 {
        1
    } else {
        -1
    }
}

pub fn mask_to_indices(mask: Mask) -> Vec<usize> {
    let mut out = Vec::new();
    let mut m = mask;
    while m != 0 {
        out.push(m.trailing_zeros() as usize);
        m &= m - 1;
    }
    out
}

pub fn indices_to_mask(ix: &[usize]) -> Mask {
    ix.iter().fold(0u32, |m, &i| m | (1u32 << i))
}

/// A differential form of pure bidegree (p, q) on a tube region.
#[derive(Clone, Debug)]
pub struct FormField {
    pub n: usize,
    pub bidegree: Bidegree,
    pub coeffs: BTreeMap<(Mask, Mask), Coeff>,
}

impl FormField {
    pub fn zero(n: usize, p: usize, q: usize) -> Self {
        FormField { n, bidegree: Bidegree::new(p, q), coeffs: BTreeMap::new() }
    }

    /// A scalar function as a (0,0)-form.
    pub fn function(n: usize, c: Coeff) -> Self {
        let mut f = FormField::zero(n, 0, 0);
        f.coeffs.insert((0, 0), c);
        f
    }

    pub fn set(&mut self, i: &[usize], j: &[usize], c: Coeff) {
        assert_eq!(i.len(), self.bidegree.p);
        assert_eq!(j.len(), self.bidegree.q);
        self.coeffs.insert((indices_to_mask(i), indices_to_mask(j)), c);
    }

    pub fn coeff(&self, i: Mask, j: Mask) -> Option<&Coeff> {
        self.coeffs.get(&(i, j))
    }

    pub fn eval(&self, z: &[C64]) -> BTreeMap<(Mask, Mask), C64> {
        self.coeffs.iter().map(|(&k, c)| (k, c.eval(z))).collect()
    }

    /// Pointwise sum of component magnitudes.
    pub fn component_sum(&self, z: &[C64]) -> f64 {
        self.coeffs.values().map(|c| c.eval(z).norm()).sum()
    }

    pub fn scale(&self, factor: C64) -> FormField {
        FormField {
            n: self.n,
            bidegree: self.bidegree,
            coeffs: self.coeffs.iter().map(|(&k, c)| (k, c.scale(factor))).collect(),
        }
    }

    pub fn add(&self, other: &FormField) -> FormField {
        assert_eq!(self.bidegree, other.bidegree);
        let mut out = self.clone();
        for (&k, c) in &other.coeffs {
            match out.coeffs.get(&k) {
                Some(prev) => {
                    let s = prev.add(c);
                    out.coeffs.insert(k, s);
                }
                None => {
                    out.coeffs.insert(k, c.clone());
                }
            }
        }
        out
    }

    /// Evaluate the form on complexified tangent vectors. A vector carries
    /// its pairings with dz and dzbar separately.
    pub fn eval_on_vectors(&self, z: &[C64], vectors: &[CVector]) -> C64 {
        let deg = self.bidegree.degree();
        assert_eq!(vectors.len(), deg);
        if deg == 0 {
            return self.coeffs.get(&(0, 0)).map(|c| c.eval(z)).unwrap_or(C64::new(0.0, 0.0));
        }
        let mut total = C64::new(0.0, 0.0);
        for (&(mi, mj), c) in &self.coeffs {
            let cv = c.eval(z);
            if cv == C64::new(0.0, 0.0) {
                continue;
            }
            let mut rows = CMat::zeros(deg, deg);
            let mut r = 0;
            for i in mask_to_indices(mi) {
                for (col, v) in vectors.iter().enumerate() {
                    rows[(r, col)] = v.hol[i];
                }
                r += 1;
            }
            for j in mask_to_indices(mj) {
                for (col, v) in vectors.iter().enumerate() {
                    rows[(r, col)] = v.anti[j];
                }
                r += 1;
            }
            total += cv * rows.det();
        }
        total
    }

    /// Serializable descriptor; only symbolic coefficients are allowed.
    pub fn to_descriptor(&self) -> Result<FormDescriptor> {
        let mut terms = Vec::new();
        for (&(mi, mj), c) in &self.coeffs {
            match c {
                Coeff::Sym(e) => terms.push(FormTerm {
                    i: mask_to_indices(mi),
                    j: mask_to_indices(mj),
                    coeff: e.clone(),
                }),
                Coeff::Fun(..) => {
                    return Err(Error::Config(
                        "cannot serialize a form with opaque numeric coefficients".into(),
                    ))
                }
            }
        }
        Ok(FormDescriptor { n: self.n, p: self.bidegree.p, q: self.bidegree.q, terms })
    }

    pub fn from_descriptor(d: &FormDescriptor) -> FormField {
        let mut f = FormField::zero(d.n, d.p, d.q);
        for t in &d.terms {
            f.set(&t.i, &t.j, Coeff::Sym(t.coeff.clone()));
        }
        f
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FormTerm {
    pub i: Vec<usize>,
    pub j: Vec<usize>,
    pub coeff: Expr,
}

/// JSON-serializable description of a symbolic form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FormDescriptor {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub terms: Vec<FormTerm>,
}

/// A complexified tangent vector: pairings with dz_k and dzbar_k. For a
/// real vector the anti part is the conjugate of the hol part.
#[derive(Clone, Debug)]
pub struct CVector {
    pub hol: Vec<C64>,
    pub anti: Vec<C64>,
}

impl CVector {
    pub fn real(v: &[C64]) -> Self {
        CVector { hol: v.to_vec(), anti: v.iter().map(|c| c.conj()).collect() }
    }

    pub fn dual_dz(n: usize, i: usize) -> Self {
        let mut hol = vec![C64::new(0.0, 0.0); n];
        hol[i] = C64::new(1.0, 0.0);
        CVector { hol, anti: vec![C64::new(0.0, 0.0); n] }
    }

    pub fn dual_dzbar(n: usize, j: usize) -> Self {
        let mut anti = vec![C64::new(0.0, 0.0); n];
        anti[j] = C64::new(1.0, 0.0);
        CVector { hol: vec![C64::new(0.0, 0.0); n], anti }
    }

    /// Pushforward under a map with Wirtinger Jacobians (holomorphic and
    /// antiholomorphic blocks).
    pub fn pushforward(&self, jh: &CMat, ja: &CMat) -> CVector {
        let n_out = jh.n;
        let mut hol = vec![C64::new(0.0, 0.0); n_out];
        let mut anti = vec![C64::new(0.0, 0.0); n_out];
        for jj in 0..n_out {
            let mut h = C64::new(0.0, 0.0);
            let mut a = C64::new(0.0, 0.0);
            for k in 0..jh.m {
                h += jh[(jj, k)] * self.hol[k] + ja[(jj, k)] * self.anti[k];
                a += ja[(jj, k)].conj() * self.hol[k] + jh[(jj, k)].conj() * self.anti[k];
            }
            hol[jj] = h;
            anti[jj] = a;
        }
        CVector { hol, anti }
    }
}

/// A form with components of several bidegrees (fixed total degree).
#[derive(Clone, Debug)]
pub struct MixedForm {
    pub n: usize,
    pub degree: usize,
    pub parts: Vec<FormField>,
}

impl MixedForm {
    pub fn zero(n: usize, degree: usize) -> Self {
        MixedForm { n, degree, parts: Vec::new() }
    }

    pub fn from_pure(f: FormField) -> Self {
        let n = f.n;
        let degree = f.bidegree.degree();
        MixedForm { n, degree, parts: vec![f] }
    }

    pub fn part(&self, p: usize, q: usize) -> Option<&FormField> {
        self.parts.iter().find(|f| f.bidegree.p == p && f.bidegree.q == q)
    }

    pub fn push(&mut self, f: FormField) {
        assert_eq!(f.bidegree.degree(), self.degree);
        if let Some(existing) = self
            .parts
            .iter_mut()
            .find(|g| g.bidegree == f.bidegree)
        {
            *existing = existing.add(&f);
        } else {
            self.parts.push(f);
            self.parts.sort_by_key(|f| (f.bidegree.q, f.bidegree.p));
        }
    }

    pub fn add(&self, other: &MixedForm) -> MixedForm {
        let mut out = self.clone();
        for f in &other.parts {
            out.push(f.clone());
        }
        out
    }

    pub fn scale(&self, factor: C64) -> MixedForm {
        MixedForm {
            n: self.n,
            degree: self.degree,
            parts: self.parts.iter().map(|f| f.scale(factor)).collect(),
        }
    }

    /// Largest antiholomorphic degree with a nonzero part.
    pub fn q_top(&self) -> usize {
        self.parts
            .iter()
            .filter(|f| !f.coeffs.values().all(|c| c.is_sym_zero()))
            .map(|f| f.bidegree.q)
            .max()
            .unwrap_or(0)
    }

    pub fn component_sum(&self, z: &[C64]) -> f64 {
        self.parts.iter().map(|f| f.component_sum(z)).sum()
    }

    pub fn eval_on_vectors(&self, z: &[C64], vectors: &[CVector]) -> C64 {
        self.parts.iter().map(|f| f.eval_on_vectors(z, vectors)).sum()
    }
}

/// Exterior derivative split d = del + dbar of a pure-bidegree form.
pub fn split_d(u: &FormField) -> Result<(FormField, FormField)> {
    let n = u.n;
    let Bidegree { p, q } = u.bidegree;
    if p + q >= 2 * n {
        return Err(Error::DegreeOverflow { max: 2 * n });
    }
    let mut del = FormField::zero(n, p + 1, q);
    let mut dbar = FormField::zero(n, p, q + 1);
    for (&(mi, mj), c) in &u.coeffs {
        for j in 0..n {
            // del: dz_j wedge dz^I requires j not in I
            if mi & (1 << j) == 0 {
                let s = insert_sign(j, mi);
                let dc = c.d_dz(j).scale(C64::new(f64::from(s), 0.0));
                let key = (mi | (1 << j), mj);
                upsert(&mut del.coeffs, key, dc);
            }
            if mj & (1 << j) == 0 {
                // dbar: dzbar_j passes the p dz factors, then inserts into J
                let s = insert_sign(j, mj) * if p % 2 == 0 { 1 } else { -1 };
                let dc = c.d_dzbar(j).scale(C64::new(f64::from(s), 0.0));
                let key = (mi, mj | (1 << j));
                upsert(&mut dbar.coeffs, key, dc);
            }
        }
    }
    Ok((del, dbar))
}

fn upsert(map: &mut BTreeMap<(Mask, Mask), Coeff>, key: (Mask, Mask), c: Coeff) {
    if c.is_sym_zero() {
        return;
    }
    match map.get(&key) {
        Some(prev) => {
            let s = prev.add(&c);
            map.insert(key, s);
        }
        None => {
            map.insert(key, c);
        }
    }
}

/// Full exterior derivative of a pure form, as a mixed form.
pub fn exterior_d(u: &FormField) -> Result<MixedForm> {
    let (del, dbar) = split_d(u)?;
    let mut out = MixedForm::zero(u.n, u.bidegree.degree() + 1);
    out.push(del);
    out.push(dbar);
    Ok(out)
}

/// Exterior derivative of a mixed form.
pub fn exterior_d_mixed(u: &MixedForm) -> Result<MixedForm> {
    let mut out = MixedForm::zero(u.n, u.degree + 1);
    for f in &u.parts {
        let (del, dbar) = split_d(f)?;
        out.push(del);
        out.push(dbar);
    }
    Ok(out)
}

/// Wedge product of pure forms.
pub fn wedge(u: &FormField, w: &FormField) -> FormField {
    assert_eq!(u.n, w.n);
    let p = u.bidegree.p + w.bidegree.p;
    let q = u.bidegree.q + w.bidegree.q;
    let mut out = FormField::zero(u.n, p, q);
    let block_sign = if (w.bidegree.p * u.bidegree.q) % 2 == 0 { 1.0 } else { -1.0 };
    for (&(i1, j1), c1) in &u.coeffs {
        for (&(i2, j2), c2) in &w.coeffs {
            let si = wedge_sign(i1, i2);
            let sj = wedge_sign(j1, j2);
            if si == 0 || sj == 0 {
                continue;
            }
            let s = block_sign * f64::from(si * sj);
            let prod = match (c1, c2) {
                (Coeff::Sym(a), Coeff::Sym(b)) => Coeff::Sym(Expr::mul(
                    Expr::mul(Expr::cr(s), a.clone()),
                    b.clone(),
                )),
                _ => {
                    let a = c1.clone();
                    let b = c2.clone();
                    let h = a.fd_step().or(b.fd_step()).unwrap_or(1e-5);
                    Coeff::Fun(Arc::new(move |z: &[C64]| s * a.eval(z) * b.eval(z)), h)
                }
            };
            upsert(&mut out.coeffs, (i1 | i2, j1 | j2), prod);
        }
    }
    out
}

/// A vector field: a (1,0)-field with the given components, or (with
/// `real_field`) the real field X = Z + conj(Z).
#[derive(Clone, Debug)]
pub struct VectorField {
    pub n: usize,
    pub components: Vec<Coeff>,
    pub real_field: bool,
}

impl VectorField {
    pub fn holomorphic_frame(n: usize, j: usize) -> Self {
        let mut components = vec![Coeff::zero(); n];
        components[j] = Coeff::Sym(Expr::one());
        VectorField { n, components, real_field: false }
    }
}

/// Contraction X . u with the alternating signs of an antiderivation.
pub fn contract(x: &VectorField, u: &FormField) -> Result<FormField> {
    let Bidegree { p, q } = u.bidegree;
    if p + q == 0 {
        return Err(Error::DegreeUnderflow);
    }
    let n = u.n;
    // Z part lowers p; for real fields the conjugate part lowers q.
    let mut out_p = FormField::zero(n, p.saturating_sub(1), q);
    let mut out_q = FormField::zero(n, p, q.saturating_sub(1));
    for (&(mi, mj), c) in &u.coeffs {
        for j in mask_to_indices(mi) {
            let pos = (mi & ((1 << j) - 1)).count_ones();
            let s = if pos % 2 == 0 { 1.0 } else { -1.0 };
            let a = x.components[j].clone();
            let c2 = c.clone();
            let coeff = match (&a, &c2) {
                (Coeff::Sym(ae), Coeff::Sym(ce)) => {
                    Coeff::Sym(Expr::mul(Expr::mul(Expr::cr(s), ae.clone()), ce.clone()))
                }
                _ => {
                    let h = a.fd_step().or(c2.fd_step()).unwrap_or(1e-5);
                    Coeff::Fun(Arc::new(move |z: &[C64]| s * a.eval(z) * c2.eval(z)), h)
                }
            };
            upsert(&mut out_p.coeffs, (mi & !(1 << j), mj), coeff);
        }
        if x.real_field {
            for j in mask_to_indices(mj) {
                let pos = (mj & ((1 << j) - 1)).count_ones() + p as u32;
                let s = if pos % 2 == 0 { 1.0 } else { -1.0 };
                let a = x.components[j].clone();
                let c2 = c.clone();
                let h = a.fd_step().or(c2.fd_step()).unwrap_or(1e-5);
                let coeff = Coeff::Fun(
                    Arc::new(move |z: &[C64]| s * a.eval(z).conj() * c2.eval(z)),
                    h,
                );
                upsert(&mut out_q.coeffs, (mi, mj & !(1 << j)), coeff);
            }
        }
    }
    match (out_p.coeffs.is_empty(), out_q.coeffs.is_empty()) {
        (false, true) | (true, true) => Ok(out_p),
        (true, false) => Ok(out_q),
        (false, false) => Err(Error::RegionMismatch(
            "contraction of a real field with a mixed-type form has components of two bidegrees"
                .into(),
        )),
    }
}

/// A smooth map record with Wirtinger derivative callbacks.
#[derive(Clone)]
pub struct MapRecord {
    pub n_in: usize,
    pub n_out: usize,
    pub f: Arc<dyn Fn(&[C64]) -> Vec<C64> + Send + Sync>,
    /// Returns (holomorphic, antiholomorphic) Jacobian blocks at z.
    pub jac: Arc<dyn Fn(&[C64]) -> (CMat, CMat) + Send + Sync>,
}

impl MapRecord {
    pub fn identity(n: usize) -> Self {
        MapRecord {
            n_in: n,
            n_out: n,
            f: Arc::new(|z: &[C64]| z.to_vec()),
            jac: Arc::new(move |_z: &[C64]| (CMat::eye(n), CMat::zeros(n, n))),
        }
    }

    pub fn compose(outer: &MapRecord, inner: &MapRecord) -> MapRecord {
        assert_eq!(outer.n_in, inner.n_out);
        let of = outer.f.clone();
        let inf = inner.f.clone();
        let oj = outer.jac.clone();
        let ij = inner.jac.clone();
        let inf2 = inner.f.clone();
        MapRecord {
            n_in: inner.n_in,
            n_out: outer.n_out,
            f: Arc::new(move |z: &[C64]| of(&inf(z))),
            jac: Arc::new(move |z: &[C64]| {
                let w = inf2(z);
                let (jh_o, ja_o) = oj(&w);
                let (jh_i, ja_i) = ij(z);
                // chain rule for Wirtinger blocks
                let jh = jh_o.matmul(&jh_i).add(&ja_o.matmul(&conj_mat(&ja_i)));
                let ja = jh_o.matmul(&ja_i).add(&ja_o.matmul(&conj_mat(&jh_i)));
                (jh, ja)
            }),
        }
    }
}

pub fn conj_mat(m: &CMat) -> CMat {
    CMat { n: m.n, m: m.m, a: m.a.iter().map(|c| c.conj()).collect() }
}

/// Pointwise pullback of a mixed form under a map record.
pub fn pullback_eval(map: &MapRecord, u: &MixedForm, z: &[C64]) -> BTreeMap<(Mask, Mask), C64> {
    let w = (map.f)(z);
    let (jh, ja) = (map.jac)(z);
    let deg = u.degree;
    let n = map.n_in;
    let mut out = BTreeMap::new();
    if deg == 0 {
        let v = u.component_sum_value(&w);
        out.insert((0u32, 0u32), v);
        return out;
    }
    // enumerate output components (I, J) with |I| + |J| = deg
    for mi in 0u32..(1 << n) {
        if (mi.count_ones() as usize) > deg {
            continue;
        }
        for mj in 0u32..(1 << n) {
            if mi.count_ones() as usize + mj.count_ones() as usize != deg {
                continue;
            }
            let mut vectors = Vec::with_capacity(deg);
            for i in mask_to_indices(mi) {
                vectors.push(CVector::dual_dz(n, i).pushforward(&jh, &ja));
            }
            for j in mask_to_indices(mj) {
                vectors.push(CVector::dual_dzbar(n, j).pushforward(&jh, &ja));
            }
            let v = u.eval_on_vectors(&w, &vectors);
            if v.norm() > 0.0 {
                out.insert((mi, mj), v);
            }
        }
    }
    out
}

impl MixedForm {
    fn component_sum_value(&self, z: &[C64]) -> C64 {
        self.parts
            .iter()
            .filter_map(|f| f.coeffs.get(&(0, 0)).map(|c| c.eval(z)))
            .sum()
    }
}

/// Pullback as a mixed form with opaque coefficients.
pub fn pullback(map: &MapRecord, u: &MixedForm, fd_step: f64) -> MixedForm {
    let deg = u.degree;
    let n = map.n_in;
    let mut out = MixedForm::zero(n, deg);
    // one closure per (p', q') block; each evaluation recomputes the full
    // pointwise pullback and picks its component
    for p in 0..=deg {
        let q = deg - p;
        if p > n || q > n {
            continue;
        }
        let mut part = FormField::zero(n, p, q);
        for mi in 0u32..(1 << n) {
            if mi.count_ones() as usize != p {
                continue;
            }
            for mj in 0u32..(1 << n) {
                if mj.count_ones() as usize != q {
                    continue;
                }
                let map2 = map.clone();
                let u2 = u.clone();
                part.coeffs.insert(
                    (mi, mj),
                    Coeff::Fun(
                        Arc::new(move |z: &[C64]| {
                            pullback_eval(&map2, &u2, z)
                                .get(&(mi, mj))
                                .copied()
                                .unwrap_or(C64::new(0.0, 0.0))
                        }),
                        fd_step,
                    ),
                );
            }
        }
        out.push(part);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    fn c1() -> C64 {
        C64::new(1.0, 0.0)
    }

    #[test]
    fn dbar_of_zbar_function() {
        // u = zbar_1 (n = 1): dbar u = dzbar_1, del u = 0
        let mut u = FormField::zero(1, 0, 0);
        u.set(&[], &[], Coeff::Sym(Expr::Zbar(0)));
        let (del, dbar) = split_d(&u).unwrap();
        assert!(del.coeffs.is_empty());
        let z = [C64::new(0.5, 0.25)];
        assert_eq!(dbar.coeff(0, 1).unwrap().eval(&z), c1());
    }

    #[test]
    fn d_of_z1_dz2() {
        // u = z_1 dz_2 (n = 2): du = dz_1 ^ dz_2, dbar u = 0
        let mut u = FormField::zero(2, 1, 0);
        u.set(&[1], &[], Coeff::Sym(Expr::Z(0)));
        let (del, dbar) = split_d(&u).unwrap();
        let z = [C64::new(0.3, 0.1), C64::new(-0.2, 0.4)];
        assert_eq!(del.coeff(0b11, 0).unwrap().eval(&z), c1());
        assert!(dbar.coeffs.values().all(|c| c.eval(&z).norm() < 1e-15));
    }

    #[test]
    fn product_rule_on_abs_square() {
        // u = |z|^2: del u = zbar dz, dbar u = z dzbar
        let mut u = FormField::zero(1, 0, 0);
        u.set(&[], &[], Coeff::Sym(Expr::mul(Expr::Z(0), Expr::Zbar(0))));
        let (del, dbar) = split_d(&u).unwrap();
        let z = [C64::new(0.7, -0.2)];
        assert!((del.coeff(1, 0).unwrap().eval(&z) - z[0].conj()).norm() < 1e-15);
        assert!((dbar.coeff(0, 1).unwrap().eval(&z) - z[0]).norm() < 1e-15);
    }

    #[test]
    fn d_squared_vanishes_symbolically() {
        let mut u = FormField::zero(2, 0, 0);
        u.set(
            &[],
            &[],
            Coeff::Sym(Expr::mul(
                Expr::Exp(std::sync::Arc::new(Expr::Z(0))),
                Expr::mul(Expr::Zbar(1), Expr::Zbar(0)),
            )),
        );
        let du = exterior_d(&u).unwrap();
        let ddu = exterior_d_mixed(&du).unwrap();
        let z = [C64::new(0.3, 0.2), C64::new(-0.1, 0.15)];
        assert!(ddu.component_sum(&z) < 1e-10, "d^2 = {}", ddu.component_sum(&z));
    }

    #[test]
    fn contraction_signs() {
        // X = d/dz_1, u = dz_1 ^ dz_2 -> dz_2;  X = d/dz_2 -> -dz_1
        let mut u = FormField::zero(2, 2, 0);
        u.set(&[0, 1], &[], Coeff::Sym(Expr::one()));
        let z = [C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
        let x1 = VectorField::holomorphic_frame(2, 0);
        let r1 = contract(&x1, &u).unwrap();
        assert_eq!(r1.coeff(0b10, 0).unwrap().eval(&z), c1());
        let x2 = VectorField::holomorphic_frame(2, 1);
        let r2 = contract(&x2, &u).unwrap();
        assert_eq!(r2.coeff(0b01, 0).unwrap().eval(&z), -c1());
        // X = d/dz_1 on dz_2 -> 0
        let mut w = FormField::zero(2, 1, 0);
        w.set(&[1], &[], Coeff::Sym(Expr::one()));
        let r3 = contract(&x1, &w).unwrap();
        assert!(r3.coeffs.values().all(|c| c.eval(&z).norm() == 0.0));
        // 0-forms are rejected
        let f = FormField::function(2, Coeff::Sym(Expr::one()));
        assert!(contract(&x1, &f).is_err());
    }

    #[test]
    fn contract_is_antiderivation_on_samples() {
        // X . (u ^ w) = (X . u) ^ w + (-1)^deg u ^ (X . w)
        let mut u = FormField::zero(2, 1, 0);
        u.set(&[0], &[], Coeff::Sym(Expr::Z(1)));
        let mut w = FormField::zero(2, 1, 0);
        w.set(&[1], &[], Coeff::Sym(Expr::Exp(std::sync::Arc::new(Expr::Z(0)))));
        let x = VectorField::holomorphic_frame(2, 0);
        let lhs = contract(&x, &wedge(&u, &w)).unwrap();
        let a = wedge(&contract(&x, &u).unwrap(), &w);
        let b = wedge(&u, &contract(&x, &w).unwrap()).scale(C64::new(-1.0, 0.0));
        let rhs = a.add(&b);
        let z = [C64::new(0.4, -0.3), C64::new(0.2, 0.6)];
        for (k, c) in &lhs.coeffs {
            let rv = rhs.coeff(k.0, k.1).map(|c| c.eval(&z)).unwrap_or(C64::new(0.0, 0.0));
            assert!((c.eval(&z) - rv).norm() < 1e-12);
        }
    }

    #[test]
    fn pullback_scaling_and_swap() {
        // F(z) = 2z on C: F* dz = 2 dz
        let map = MapRecord {
            n_in: 1,
            n_out: 1,
            f: Arc::new(|z: &[C64]| vec![2.0 * z[0]]),
            jac: Arc::new(|_z: &[C64]| {
                let mut jh = CMat::zeros(1, 1);
                jh[(0, 0)] = C64::new(2.0, 0.0);
                (jh, CMat::zeros(1, 1))
            }),
        };
        let mut u = FormField::zero(1, 1, 0);
        u.set(&[0], &[], Coeff::Sym(Expr::one()));
        let pb = pullback_eval(&map, &MixedForm::from_pure(u), &[C64::new(0.3, 0.1)]);
        assert!((pb[&(1, 0)] - C64::new(2.0, 0.0)).norm() < 1e-14);

        // swap (z1, z2) -> (z2, z1): dz1 ^ dz2 -> -dz1 ^ dz2
        let swap = MapRecord {
            n_in: 2,
            n_out: 2,
            f: Arc::new(|z: &[C64]| vec![z[1], z[0]]),
            jac: Arc::new(|_z: &[C64]| {
                let mut jh = CMat::zeros(2, 2);
                jh[(0, 1)] = C64::new(1.0, 0.0);
                jh[(1, 0)] = C64::new(1.0, 0.0);
                (jh, CMat::zeros(2, 2))
            }),
        };
        let mut v = FormField::zero(2, 2, 0);
        v.set(&[0, 1], &[], Coeff::Sym(Expr::one()));
        let pb = pullback_eval(&swap, &MixedForm::from_pure(v), &[C64::new(0.0, 0.0); 2]);
        assert!((pb[&(0b11, 0)] + C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn pullback_functorial_on_samples() {
        // G(z) = z + 0.1 zbar, F(w) = w^2 (n = 1): (F o G)* u = G* (F* u)
        let g = MapRecord {
            n_in: 1,
            n_out: 1,
            f: Arc::new(|z: &[C64]| vec![z[0] + 0.1 * z[0].conj()]),
            jac: Arc::new(|_z: &[C64]| {
                let mut jh = CMat::zeros(1, 1);
                jh[(0, 0)] = C64::new(1.0, 0.0);
                let mut ja = CMat::zeros(1, 1);
                ja[(0, 0)] = C64::new(0.1, 0.0);
                (jh, ja)
            }),
        };
        let f = MapRecord {
            n_in: 1,
            n_out: 1,
            f: Arc::new(|z: &[C64]| vec![z[0] * z[0]]),
            jac: Arc::new(|z: &[C64]| {
                let mut jh = CMat::zeros(1, 1);
                jh[(0, 0)] = 2.0 * z[0];
                (jh, CMat::zeros(1, 1))
            }),
        };
        let mut u = FormField::zero(1, 1, 0);
        u.set(&[0], &[], Coeff::Sym(Expr::Zbar(0)));
        let u = MixedForm::from_pure(u);
        let fg = MapRecord::compose(&f, &g);
        let z = [C64::new(0.4, 0.2)];
        let direct = pullback_eval(&fg, &u, &z);
        let fu = pullback(&f, &u, 1e-5);
        let nested = pullback_eval(&g, &fu, &z);
        for key in [(1u32, 0u32), (0u32, 1u32)] {
            let a = direct.get(&key).copied().unwrap_or(C64::new(0.0, 0.0));
            let b = nested.get(&key).copied().unwrap_or(C64::new(0.0, 0.0));
            assert!((a - b).norm() < 1e-10, "{key:?}: {a} vs {b}");
        }
    }
}

//! The map-approximation pipelines: dbar-flat extensions of
//! diffeomorphisms with prescribed tangent data, holomorphic approximation
//! through the dbar solver, Newton inverse error reports, the Moser
//! correction producing form-preserving maps, and the time-sampled
//! omega-flow lift.
//!
//! Tube radii are nested stage by stage: each solver stage is trusted on a
//! ball around M strictly inside its data tube, and the next stage's data
//! tube (and the spectral interpolation boxes, whose corners must stay in
//! the trusted ball) are sized from it. Flows run closest to M, where the
//! approximation theorems live.

mod flow;
mod flowlift;
mod interp;
mod registry;

pub use flow::{integrate_flow, richardson_check, Trajectory};
pub use flowlift::{omega_flow_lift, FlowLiftReport, FlowSampleReport, JetField};
pub use interp::TubeInterpolant;
pub use registry::DiffeoFamily;

use crate::dbar::{DbarCore, QuadScale};
use crate::dholo::{pullback_to_tube, restrict_to_manifold, solve_d_on_manifold};
use crate::expr::Coeff;
use crate::forms::{homotopy_solve, FormField, MixedForm};
use crate::geometry::{eval_lattice, Manifold, TubeSpec};
use crate::kernels::henkin_support;
use crate::linalg::CMat;
use crate::{C64, Error, Result, I};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// Fraction of the data radius on which a dbar-solve output is trusted
/// (the target tube is T_{c delta}; the solver stays valid slightly
/// beyond, but the near-zone ball must not leave the data tube).
pub(crate) fn trusted_fraction(c: f64) -> f64 {
    (1.0 - 0.93 * (1.0 - c)).min(c + 0.1)
}

/// A dbar-flat extension of a registry diffeomorphism:
/// f~(z) = F(s(z)) + L(s(z)) (z - phi(s(z))) in the angle chart, which
/// agrees with f on M, has df~ = L there, and has dbar f~ = O(d_M).
#[derive(Clone)]
pub struct ExtensionRecord {
    pub manifold: Manifold,
    pub family: DiffeoFamily,
    pub order: usize,
    /// Measured decay exponent of |dbar f~| along a normal ray (None when
    /// the extension is exactly holomorphic, e.g. linear rotations).
    pub dbar_decay_fit: Option<(f64, f64, f64)>,
}

impl ExtensionRecord {
    pub fn n(&self) -> usize {
        self.manifold.ambient_n()
    }

    fn foot_angles(&self, z: &[C64]) -> Vec<f64> {
        z.iter().map(|c| c.arg()).collect()
    }

    pub fn eval(&self, z: &[C64]) -> Vec<C64> {
        let s = self.foot_angles(z);
        let f = self.family.map_point(&s);
        let l = self.family.l_matrix(&s);
        let phi = self.manifold.phi(&s);
        let off: Vec<C64> = z.iter().zip(&phi).map(|(a, b)| a - b).collect();
        let corr = l.matvec(&off);
        f.iter().zip(&corr).map(|(a, b)| a + b).collect()
    }

    /// Wirtinger Jacobians (holomorphic, antiholomorphic blocks) of f~.
    pub fn jacobians(&self, z: &[C64]) -> (CMat, CMat) {
        let n = self.n();
        let s = self.foot_angles(z);
        let fh = self.family.angle_map(&s);
        let ja = self.family.angle_jac(&s);
        let l = self.family.l_matrix(&s);
        let dl = self.family.l_matrix_deriv(&s);
        let phi = self.manifold.phi(&s);
        let off: Vec<C64> = z.iter().zip(&phi).map(|(a, b)| a - b).collect();
        let mut jh = CMat::zeros(n, n);
        let mut jaa = CMat::zeros(n, n);
        for k in 0..n {
            // bracket_i = dF_i/ds_k + (dL/ds_k off)_i - (L dphi/ds_k)_i
            let dphi_k = I * C64::from_polar(1.0, s[k]);
            let dl_off = dl[k].matvec(&off);
            let mut bracket = vec![C64::new(0.0, 0.0); n];
            for i in 0..n {
                let df = I * ja[i][k] * C64::from_polar(1.0, fh[i]);
                bracket[i] = df + dl_off[i] - l[(i, k)] * dphi_k;
            }
            let dth_dz = -I / (2.0 * z[k]);
            let dth_dzbar = I / (2.0 * z[k].conj());
            for i in 0..n {
                jh[(i, k)] = bracket[i] * dth_dz + l[(i, k)];
                jaa[(i, k)] = bracket[i] * dth_dzbar;
            }
        }
        (jh, jaa)
    }

    /// The (0,1)-form dbar f~_i for one component, with analytic
    /// coefficients.
    pub fn dbar_component(&self, i: usize, fd_step: f64) -> FormField {
        let n = self.n();
        let mut u = FormField::zero(n, 0, 1);
        for k in 0..n {
            let me = self.clone();
            u.coeffs.insert(
                (0, 1 << k),
                Coeff::Fun(
                    Arc::new(move |z: &[C64]| {
                        let (_, ja) = me.jacobians(z);
                        ja[(i, k)]
                    }),
                    fd_step,
                ),
            );
        }
        u
    }
}

/// Build the extension and measure its dbar decay along a normal ray.
pub fn extend_dbar_flat(
    manifold: &Manifold,
    family: DiffeoFamily,
    order: usize,
) -> Result<ExtensionRecord> {
    let (lo, hi) = manifold.param_domain();
    for k in 0..24 {
        let s: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(&a, &b)| a + (b - a) * (k as f64 / 24.0))
            .collect();
        let det = family.l_matrix(&s).det().norm();
        if det < 1e-8 {
            return Err(Error::FrameDegenerate { det });
        }
    }
    let mut rec = ExtensionRecord {
        manifold: manifold.clone(),
        family,
        order,
        dbar_decay_fit: None,
    };
    let n = manifold.ambient_n();
    let mut points = Vec::new();
    for k in 1..=6 {
        let d = 0.02 * k as f64 / 6.0;
        let z: Vec<C64> = (0..n)
            .map(|j| C64::from_polar(1.0 + d / (n as f64).sqrt(), 0.6 + 0.5 * j as f64))
            .collect();
        let (_, ja) = rec.jacobians(&z);
        let v = ja.norm_fro();
        if v > 1e-13 {
            points.push((d, v));
        }
    }
    rec.dbar_decay_fit = if points.len() >= 3 {
        crate::cli::fit_slope(&points).ok()
    } else {
        None
    };
    Ok(rec)
}

/// The holomorphic approximation F' = f~ - v with v the componentwise
/// dbar solution carried on spectral interpolants. Trusted on the ball
/// |s(z)| <= `trusted_radius`.
#[derive(Clone)]
pub struct ApproxMap {
    pub ext: ExtensionRecord,
    pub spec: TubeSpec,
    v: Arc<TubeInterpolant>,
    pub trusted_radius: f64,
    /// sup over the measurement lattice of |v| (the forward correction).
    pub v_sup: f64,
    /// min over lattice pairs of |F'(z1)-F'(z2)| / |z1-z2|.
    pub injectivity_ratio: f64,
}

impl ApproxMap {
    pub fn eval(&self, z: &[C64]) -> Vec<C64> {
        let f = self.ext.eval(z);
        let vv = self.v.eval_channels(z);
        f.iter().zip(&vv).map(|(a, vi)| a - vi).collect()
    }

    /// Holomorphic Jacobian of F' (the antiholomorphic defect is the
    /// solver residual and is dropped from the Jacobian).
    pub fn jacobian(&self, z: &[C64]) -> CMat {
        let n = self.ext.n();
        let (jh, _) = self.ext.jacobians(z);
        let mut out = jh;
        for i in 0..n {
            let (_, dz, _) = self.v.eval_with_derivs_ch(z, i);
            for k in 0..n {
                out[(i, k)] -= dz[k];
            }
        }
        out
    }

    /// Antiholomorphic defect |dbar F'| at z (diagnostic).
    pub fn dbar_defect(&self, z: &[C64]) -> f64 {
        let n = self.ext.n();
        let (_, ja) = self.ext.jacobians(z);
        let mut total = 0.0;
        for i in 0..n {
            let (_, _, dzbar) = self.v.eval_with_derivs_ch(z, i);
            for k in 0..n {
                total += (ja[(i, k)] - dzbar[k]).norm();
            }
        }
        total
    }
}

pub(crate) fn interp_sizes(manifold: &Manifold, scale: f64) -> (usize, usize) {
    match manifold {
        Manifold::TorusInC2 => (((12.0 * scale) as usize).max(8), ((6.0 * scale) as usize).max(4)),
        _ => (((24.0 * scale) as usize).max(12), ((8.0 * scale) as usize).max(5)),
    }
}

fn lattice_counts(manifold: &Manifold) -> (usize, usize) {
    match manifold {
        Manifold::TorusInC2 => (6, 2),
        _ => (24, 4),
    }
}

/// Solve dbar v_i = dbar f~_i componentwise and assemble F' = f~ - v,
/// with the correction carried on spectral interpolants.
pub fn holo_approx_diffeo(
    ext: &ExtensionRecord,
    spec: &TubeSpec,
    scale: QuadScale,
    interp_scale: f64,
) -> Result<ApproxMap> {
    let manifold = &ext.manifold;
    let n = manifold.ambient_n();
    let set = henkin_support(manifold, spec)?;
    let valid = trusted_fraction(spec.c) * spec.delta;
    let b = 0.98 * valid / (n as f64).sqrt();
    let (nf, nc) = interp_sizes(manifold, interp_scale);
    // componentwise solves: the antiholomorphic row of the extension's
    // Jacobian is analytic (one Jacobian call per quadrature node yields
    // the whole row)
    let cores: Vec<Arc<DbarCore>> = (0..n)
        .map(|i| {
            let e2 = ext.clone();
            let u_keys: Vec<(u32, u32)> = (0..n).map(|k| (0u32, 1u32 << k)).collect();
            let u_fn = Arc::new(move |z: &[C64]| -> Vec<C64> {
                let (_, ja) = e2.jacobians(z);
                (0..n).map(|k| ja[(i, k)]).collect()
            });
            DbarCore::new_vector(set.clone(), 0, u_keys, u_fn, scale)
        })
        .collect();
    let v = Arc::new(TubeInterpolant::build_vec(manifold, b, nf, nc, n, |z: &[C64]| {
        cores
            .iter()
            .map(|core| core.eval(z).get(&(0, 0)).copied().unwrap_or(C64::new(0.0, 0.0)))
            .collect()
    }));
    let mut approx = ApproxMap {
        ext: ext.clone(),
        spec: *spec,
        v,
        trusted_radius: b,
        v_sup: 0.0,
        injectivity_ratio: 0.0,
    };
    // measurement lattice inside the trusted ball
    let meas_spec = TubeSpec::new(b / spec.c, spec.c, spec.c_prime, manifold.delta0())?;
    let lattice = eval_lattice(manifold, &meas_spec, lattice_counts(manifold), 0.05);
    let mut v_sup: f64 = 0.0;
    for z in &lattice {
        let s: f64 = approx.v.eval_channels(z).iter().map(|c| c.norm()).sum();
        v_sup = v_sup.max(s);
    }
    approx.v_sup = v_sup;
    let vals: Vec<Vec<C64>> = lattice.iter().map(|z| approx.eval(z)).collect();
    let mut ratio = f64::INFINITY;
    for i in 0..lattice.len() {
        for j in (i + 1)..lattice.len() {
            let dz: f64 = lattice[i]
                .iter()
                .zip(&lattice[j])
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if dz < 1e-12 {
                continue;
            }
            let dw: f64 = vals[i]
                .iter()
                .zip(&vals[j])
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            ratio = ratio.min(dw / dz);
        }
    }
    if ratio <= 0.0 {
        return Err(Error::NotInjectiveOnLattice { ratio });
    }
    approx.injectivity_ratio = ratio;
    Ok(approx)
}

/// Forward errors of a map G against the reference family on M:
/// (C^0, C^1) norms of G|_M - f over a dense angle sample.
pub fn forward_errors_on_m<FM>(manifold: &Manifold, family: &DiffeoFamily, g: FM) -> (f64, f64)
where
    FM: Fn(&[C64]) -> Vec<C64> + Sync,
{
    let m = manifold.real_dim();
    let count = if m == 1 { 160 } else { 24 };
    let idx: Vec<Vec<usize>> = if m == 1 {
        (0..count).map(|k| vec![k]).collect()
    } else {
        (0..count * count).map(|k| vec![k % count, k / count]).collect()
    };
    let h = 1e-5;
    let errs: Vec<(f64, f64)> = idx
        .par_iter()
        .map(|ix| {
            let s: Vec<f64> = ix
                .iter()
                .map(|&k| k as f64 * std::f64::consts::TAU / count as f64)
                .collect();
            let diff_at = |s: &[f64]| -> Vec<C64> {
                let z = manifold.phi(s);
                let gv = g(&z);
                let fv = family.map_point(s);
                gv.iter().zip(&fv).map(|(a, b)| a - b).collect()
            };
            let d0: f64 = diff_at(&s).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let mut d1: f64 = 0.0;
            for ax in 0..m {
                let mut sp = s.clone();
                sp[ax] += h;
                let fp = diff_at(&sp);
                sp[ax] -= 2.0 * h;
                let fm = diff_at(&sp);
                d1 += fp
                    .iter()
                    .zip(&fm)
                    .map(|(a, b)| ((a - b) / (2.0 * h)).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
            }
            (d0, d1)
        })
        .collect();
    errs.iter()
        .fold((0.0f64, 0.0f64), |acc, &(a, b)| (acc.0.max(a), acc.1.max(b)))
}

#[derive(Clone, Debug, Serialize)]
pub struct InverseReport {
    pub sup_c0: f64,
    pub sup_c1: f64,
    pub targets: usize,
}

/// Inverse error report: damped Newton inversion of F seeded at the
/// reference inverse, on a lattice of targets in the tube of radius
/// a_frac * delta around the image manifold (including its s = 0 rows).
pub fn inverse_error<FM, JM>(
    f_map: FM,
    f_jac: JM,
    ext: &ExtensionRecord,
    spec: &TubeSpec,
    a_frac: f64,
) -> Result<InverseReport>
where
    FM: Fn(&[C64]) -> Vec<C64> + Sync,
    JM: Fn(&[C64]) -> CMat + Sync,
{
    let manifold = &ext.manifold;
    let n = manifold.ambient_n();
    let a_spec = TubeSpec::new(a_frac * spec.delta / 0.99, 0.99, 0.995, manifold.delta0())?;
    let targets = eval_lattice(manifold, &a_spec, lattice_counts(manifold), 0.0);
    let results: Vec<Result<(f64, f64)>> = targets
        .par_iter()
        .map(|w| {
            let seed_angles =
                ext.family.angle_inverse(&w.iter().map(|c| c.arg()).collect::<Vec<_>>());
            let seed: Vec<C64> = (0..n)
                .map(|j| C64::from_polar(w[j].norm(), seed_angles[j]))
                .collect();
            let f_ref = newton_invert(
                &|z: &[C64]| ext.eval(z),
                &|z: &[C64]| ext.jacobians(z).0,
                w,
                &mut seed.clone(),
            )?;
            let z_f = newton_invert(&f_map, &f_jac, w, &mut seed.clone())?;
            let c0: f64 = z_f
                .iter()
                .zip(&f_ref)
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let a_mat = ext.jacobians(&f_ref).0;
            let b_mat = f_jac(&z_f);
            let ai = a_mat.inverse()?;
            let bi = b_mat.inverse()?;
            let dev = ai.matmul(&b_mat.sub(&a_mat)).matmul(&bi).norm_fro();
            Ok((c0, dev))
        })
        .collect();
    let mut sup_c0: f64 = 0.0;
    let mut sup_c1: f64 = 0.0;
    for r in results {
        let (c0, c1) = r?;
        sup_c0 = sup_c0.max(c0);
        sup_c1 = sup_c1.max(c1);
    }
    Ok(InverseReport { sup_c0, sup_c1, targets: targets.len() })
}

/// Damped Newton with Armijo backtracking on |F(z) - w|^2.
pub fn newton_invert<FM, JM>(f: &FM, jac: &JM, w: &[C64], z: &mut Vec<C64>) -> Result<Vec<C64>>
where
    FM: Fn(&[C64]) -> Vec<C64>,
    JM: Fn(&[C64]) -> CMat,
{
    let mut res: Vec<C64> = f(z).iter().zip(w).map(|(a, b)| a - b).collect();
    let mut r2: f64 = res.iter().map(|c| c.norm_sqr()).sum();
    for _ in 0..60 {
        if r2 < 1e-26 {
            return Ok(z.clone());
        }
        let j = jac(z);
        let step = j.solve(&res)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<C64> = z.iter().zip(&step).map(|(a, b)| a - t * b).collect();
            let cres: Vec<C64> = f(&cand).iter().zip(w).map(|(a, b)| a - b).collect();
            let c2: f64 = cres.iter().map(|c| c.norm_sqr()).sum();
            if c2 < r2 * (1.0 - 0.25 * t) {
                *z = cand;
                res = cres;
                r2 = c2;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r2 < 1e-18 {
        Ok(z.clone())
    } else {
        Err(Error::NewtonDiverged { iters: 60 })
    }
}

/// The form being preserved and its primitive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OmegaKind {
    Volume,
    Symplectic,
}

#[derive(Clone)]
pub struct OmegaData {
    pub kind: OmegaKind,
    pub n: usize,
    pub omega: FormField,
    pub beta: FormField,
}

pub fn omega_data(kind: OmegaKind, n: usize) -> Result<OmegaData> {
    use crate::expr::Expr;
    match kind {
        OmegaKind::Volume => {
            let mut omega = FormField::zero(n, n, 0);
            omega.set(&(0..n).collect::<Vec<_>>(), &[], Coeff::Sym(Expr::one()));
            let mut beta = FormField::zero(n, n - 1, 0);
            for j in 0..n {
                let others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                beta.set(
                    &others,
                    &[],
                    Coeff::Sym(Expr::mul(Expr::cr(sign / n as f64), Expr::Z(j))),
                );
            }
            Ok(OmegaData { kind, n, omega, beta })
        }
        OmegaKind::Symplectic => {
            if n % 2 != 0 {
                return Err(Error::ParameterOutOfRange(
                    "symplectic form needs even complex dimension".into(),
                ));
            }
            let mut omega = FormField::zero(n, 2, 0);
            let mut beta = FormField::zero(n, 1, 0);
            for j in 0..n / 2 {
                omega.set(&[2 * j, 2 * j + 1], &[], Coeff::Sym(Expr::one()));
                beta.set(&[2 * j + 1], &[], Coeff::Sym(Expr::Z(2 * j)));
            }
            Ok(OmegaData { kind, n, omega, beta })
        }
    }
}

/// Solve Z . omega_t = -v pointwise; `omega_t_coeff` returns the (p,0)
/// coefficient for a holomorphic index mask, `v` holds the (p-1,0)
/// coefficients for `v_keys`.
pub fn contraction_solve(
    kind: OmegaKind,
    n: usize,
    omega_t_coeff: &dyn Fn(u32) -> C64,
    v: &[C64],
    v_keys: &[u32],
) -> Result<Vec<C64>> {
    match kind {
        OmegaKind::Volume => {
            let full: u32 = (1u32 << n) - 1;
            let g = omega_t_coeff(full);
            if g.norm() < 1e-8 {
                return Err(Error::DegenerateOmegaT { cond: 1.0 / g.norm().max(1e-300) });
            }
            let mut z = vec![C64::new(0.0, 0.0); n];
            for j in 0..n {
                let key = full & !(1 << j);
                let vj = v_keys
                    .iter()
                    .position(|&k| k == key)
                    .map(|i| v[i])
                    .unwrap_or(C64::new(0.0, 0.0));
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                z[j] = -vj / (sign * g);
            }
            Ok(z)
        }
        OmegaKind::Symplectic => {
            let mut a = CMat::zeros(n, n);
            for j in 0..n {
                for k in 0..n {
                    if j == k {
                        continue;
                    }
                    let (lo, hi) = (j.min(k), j.max(k));
                    let w = omega_t_coeff((1 << lo) | (1 << hi));
                    a[(k, j)] = if j < k { w } else { -w };
                }
            }
            let rhs: Vec<C64> = (0..n)
                .map(|k| {
                    -v_keys
                        .iter()
                        .position(|&key| key == (1u32 << k))
                        .map(|i| v[i])
                        .unwrap_or(C64::new(0.0, 0.0))
                })
                .collect();
            let cond = a.norm_1() * a.inverse().map(|i| i.norm_1()).unwrap_or(f64::INFINITY);
            if cond > 1e8 {
                return Err(Error::DegenerateOmegaT { cond });
            }
            let z = a.solve(&rhs).map_err(|_| Error::DegenerateOmegaT { cond })?;
            Ok(z)
        }
    }
}

/// A holomorphic (p-1)-form carried on interpolants (one per component),
/// the output format of the in-pipeline d-solves.
pub struct InterpolatedForm {
    pub keys: Vec<u32>,
    pub comps: Vec<Arc<TubeInterpolant>>,
}

impl InterpolatedForm {
    pub fn eval(&self, z: &[C64]) -> Vec<C64> {
        self.comps.iter().map(|c| c.eval(z)).collect()
    }
}

/// Staged d-solve used by the flow pipelines: dv = u for a closed
/// holomorphic p-form u given by closures, with every stage interpolated
/// before feeding the next. Returns the (p-1,0)-form v on the trusted ball
/// of radius `out_radius`, plus the strip residual report.
#[allow(clippy::too_many_arguments)]
#[allow(clippy::type_complexity)]
pub(crate) fn staged_d_solve(
    manifold: &Manifold,
    data_radius: f64,
    u: &MixedForm,
    scale: QuadScale,
    interp_scale: f64,
    period_tol: f64,
    closed_tol: f64,
) -> Result<(InterpolatedForm, f64, Vec<f64>, Vec<C64>)> {
    let n = manifold.ambient_n();
    let p = u.degree;
    let m = manifold.real_dim();
    let spec = TubeSpec::new(data_radius, 0.5, 0.75, manifold.delta0())?;
    let homotopy = homotopy_solve(manifold, &spec, u, 16, closed_tol)?;
    let mut periods = Vec::new();
    let v1 = if p > m {
        homotopy.v
    } else {
        let alpha = restrict_to_manifold(manifold, u);
        let sol = solve_d_on_manifold(manifold, &alpha, p, period_tol)?;
        periods = sol.periods.clone();
        let pi_v0 = pullback_to_tube(manifold, &sol.v0);
        homotopy.v.add(&pi_v0)
    };
    // interpolate v1's components over the strip data region 0.9 * radius
    let (nf, nc) = interp_sizes(manifold, interp_scale);
    let b1 = 0.95 * 0.92 * data_radius / (n as f64).sqrt();
    let mut keys: Vec<(u32, u32)> = Vec::new();
    for part in &v1.parts {
        keys.extend(part.coeffs.keys().copied());
    }
    keys.sort_unstable();
    keys.dedup();
    let v1_arc = Arc::new(v1);
    let keys2 = keys.clone();
    let v1c = v1_arc.clone();
    let v1_interp = Arc::new(TubeInterpolant::build_vec(
        manifold,
        b1,
        nf,
        nc,
        keys.len(),
        move |z: &[C64]| {
            keys2
                .iter()
                .map(|key| {
                    let mut acc = C64::new(0.0, 0.0);
                    for part in &v1c.parts {
                        if let Some(c) = part.coeffs.get(key) {
                            acc += c.eval(z);
                        }
                    }
                    acc
                })
                .collect()
        },
    ));
    let interped: Vec<((u32, u32), usize)> = keys.iter().copied().zip(0..).collect();
    // strip: remove antiholomorphic components (at most one step needed for
    // p <= 2 in C^2 after the homotopy; skip parts below the noise floor)
    let sample = eval_lattice(manifold, &spec, (4, 2), 0.3);
    let mut u_scale: f64 = 1e-300;
    for z in &sample {
        u_scale = u_scale.max(u.component_sum(z));
    }
    let mut strip_residuals = Vec::new();
    let mut hol_parts: Vec<(u32, usize)> = Vec::new();
    let mut anti_parts: Vec<((u32, u32), usize)> = Vec::new();
    for (key, ch) in &interped {
        if key.1 == 0 {
            hol_parts.push((key.0, *ch));
        } else {
            anti_parts.push((*key, *ch));
        }
    }
    // measure the antiholomorphic magnitude
    let mut anti_sup: f64 = 0.0;
    for z in &sample {
        let all = v1_interp.eval_channels(z);
        for (_, ch) in &anti_parts {
            anti_sup = anti_sup.max(all[*ch].norm());
        }
    }
    let out_radius;
    let mut out: Vec<(u32, Arc<TubeInterpolant>)> = Vec::new();
    if anti_parts.is_empty() || anti_sup < 1e-10 * u_scale.max(1.0) {
        // nothing to strip
        out_radius = b1;
        for (mi, ch) in &hol_parts {
            let it = v1_interp.clone();
            let ch = *ch;
            let mi = *mi;
            let single = TubeInterpolant::build(manifold, b1 * 0.999, nf, nc, move |z: &[C64]| {
                it.eval_channels(z)[ch]
            });
            out.push((mi, Arc::new(single)));
        }
        strip_residuals.push(anti_sup);
    } else {
        // one dbar-solve on the sub-ladder: dbar w = v_(q0) with q0 = 1
        let sub_data = 0.9 * data_radius;
        let sub_c = 0.55;
        let sub_spec = TubeSpec::new(sub_data, sub_c, 0.8, manifold.delta0())?;
        let set = henkin_support(manifold, &sub_spec)?;
        let _ = p;
        let vq_keys: Vec<(u32, u32)> = anti_parts.iter().map(|(k, _)| *k).collect();
        let chs: Vec<usize> = anti_parts.iter().map(|(_, ch)| *ch).collect();
        let v1i = v1_interp.clone();
        let u_fn = Arc::new(move |z: &[C64]| -> Vec<C64> {
            let all = v1i.eval_channels(z);
            chs.iter().map(|&ch| all[ch]).collect()
        });
        let u_p = vq_keys.first().map(|k| k.0.count_ones() as usize).unwrap_or(0);
        let core = DbarCore::new_vector(set, u_p, vq_keys, u_fn, scale);
        // sampled dbar residual of the strip solve
        let pts = eval_lattice(manifold, &sub_spec, (3, 2), 0.2);
        let mut res: f64 = 0.0;
        for z in pts.iter().take(3) {
            res = res.max(core.residual_at(z, 3e-3 * sub_data));
        }
        strip_residuals.push(res);
        // interpolate w on the final trusted ball, then subtract del w and
        // the antiholomorphic part
        let valid = trusted_fraction(sub_c) * sub_data;
        let bw = 0.95 * valid / (n as f64).sqrt();
        out_radius = bw;
        // w components: (p-2, 0) masks
        let w_keys: Vec<(u32, u32)> = core.compiled_out_keys();
        let mut w_interp: Vec<((u32, u32), Arc<TubeInterpolant>)> = Vec::new();
        for &key in &w_keys {
            let core = core.clone();
            let it = TubeInterpolant::build(manifold, bw, nf, nc, move |z: &[C64]| {
                core.eval(z).get(&key).copied().unwrap_or(C64::new(0.0, 0.0))
            });
            w_interp.push((key, Arc::new(it)));
        }
        // v = hol_parts - del w
        for (mi, ch) in &hol_parts {
            let base = v1_interp.clone();
            let ch = *ch;
            let w_for_deriv = w_interp.clone();
            let mi = *mi;
            let combined = TubeInterpolant::build(manifold, bw, nf, nc, move |z: &[C64]| {
                let mut val = base.eval_channels(z)[ch];
                // del w component into dz^{mi}: sum over j in mi of
                // sign * d w_{mi \ j} / dz_j
                for j in 0..n {
                    if mi & (1 << j) == 0 {
                        continue;
                    }
                    let sub = mi & !(1 << j);
                    let sgn = insert_sign(j, sub);
                    for ((wi, wj), wit) in &w_for_deriv {
                        if *wi == sub && *wj == 0 {
                            let (_, dz, _) = wit.eval_with_derivs(z);
                            val -= f64::from(sgn) * dz[j];
                        }
                    }
                }
                val
            });
            out.push((mi, Arc::new(combined)));
        }
    }
    let form = InterpolatedForm {
        keys: out.iter().map(|(k, _)| *k).collect(),
        comps: out.into_iter().map(|(_, it)| it).collect(),
    };
    Ok((form, out_radius, strip_residuals, periods))
}

fn insert_sign(j: usize, mask: u32) -> i32 {
    let below = mask & ((1u32 << j) - 1);
    if below.count_ones() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Outcome of the Moser correction.
pub struct MoserOutcome {
    pub omega_residual: f64,
    pub containment_margin: f64,
    pub correction_sup: f64,
    pub v_sup: f64,
    pub strip_residuals: Vec<f64>,
    pub flow_lattice: Vec<Vec<C64>>,
    /// Corrected map and its complex Jacobian at the flow-lattice points.
    pub corrected: Vec<(Vec<C64>, CMat)>,
}

/// Moser correction in C^2: given the holomorphic approximation F' with
/// (F')^* omega close to omega, build F = F' o G_1 with F^* omega = omega
/// up to the d-solve residual.
pub fn moser_correct(
    approx: &ApproxMap,
    omega: &OmegaData,
    scale: QuadScale,
    interp_scale: f64,
) -> Result<MoserOutcome> {
    let manifold = approx.ext.manifold.clone();
    let n = manifold.ambient_n();
    if n != 2 {
        return Err(Error::ParameterOutOfRange(
            "the moser correction scenarios run in C^2".into(),
        ));
    }
    // u = omega_1 - omega = (det dF' - 1) dz_1 ^ dz_2 for both kinds in C^2
    let full: u32 = 0b11;
    let approx2 = approx.clone();
    let mut u = FormField::zero(n, 2, 0);
    u.coeffs.insert(
        (full, 0),
        Coeff::Fun(
            Arc::new(move |z: &[C64]| approx2.jacobian(z).det() - C64::new(1.0, 0.0)),
            1e-4,
        ),
    );
    let u = MixedForm::from_pure(u);
    // d-stage data radius: inside the trusted ball of F'
    let d_radius = 0.9 * approx.trusted_radius;
    let (vform, v_radius, strip_residuals, _periods) =
        staged_d_solve(&manifold, d_radius, &u, scale, interp_scale, 1e-4, 0.05)?;
    let mut v_sup: f64 = 0.0;
    {
        let probe = eval_lattice(
            &manifold,
            &TubeSpec::new(v_radius, 0.9, 0.95, manifold.delta0())?,
            (5, 2),
            0.1,
        );
        for z in &probe {
            v_sup = v_sup.max(vform.eval(z).iter().map(|c| c.norm()).sum());
        }
    }
    // flow from T_{a delta}: a delta = 0.55 * v_radius keeps trajectories
    // inside the interpolated ball with margin
    let flow_radius = 0.55 * v_radius;
    let flow_spec = TubeSpec::new(flow_radius / 0.9, 0.9, 0.95, manifold.delta0())?;
    let flow_lattice = eval_lattice(&manifold, &flow_spec, (6, 2), 0.05);
    let kind = omega.kind;
    let approx3 = approx.clone();
    let vkeys = vform.keys.clone();
    let field = move |t: f64, z: &[C64]| -> Result<(Vec<C64>, CMat)> {
        // omega_t coefficient: 1 + t (J - 1) on dz_1 ^ dz_2 (volume / C^2
        // symplectic agree)
        let j = approx3.jacobian(z).det();
        let mt = C64::new(1.0, 0.0) + t * (j - C64::new(1.0, 0.0));
        let v = vform.eval(z);
        let zt = contraction_solve(
            kind,
            2,
            &|key: u32| if key == 0b11 { mt } else { C64::new(0.0, 0.0) },
            &v,
            &vkeys,
        )?;
        // holomorphic Jacobian of Z by interpolant derivatives:
        // dZ = d(-v/mt-pattern); assemble via finite differences of the
        // closed-form solve using interpolant derivatives of v and J
        let h = 1e-6;
        let mut jac = CMat::zeros(2, 2);
        for k in 0..2 {
            let mut zp = z.to_vec();
            zp[k] += C64::new(h, 0.0);
            let vp = vform.eval(&zp);
            let jp = approx3.jacobian(&zp).det();
            let mtp = C64::new(1.0, 0.0) + t * (jp - C64::new(1.0, 0.0));
            let zp1 = contraction_solve(
                kind,
                2,
                &|key: u32| if key == 0b11 { mtp } else { C64::new(0.0, 0.0) },
                &vp,
                &vkeys,
            )?;
            zp[k] = z[k] - C64::new(h, 0.0);
            let vm = vform.eval(&zp);
            let jm = approx3.jacobian(&zp).det();
            let mtm = C64::new(1.0, 0.0) + t * (jm - C64::new(1.0, 0.0));
            let zm1 = contraction_solve(
                kind,
                2,
                &|key: u32| if key == 0b11 { mtm } else { C64::new(0.0, 0.0) },
                &vm,
                &vkeys,
            )?;
            for i in 0..2 {
                jac[(i, k)] = (zp1[i] - zm1[i]) / (2.0 * h);
            }
        }
        Ok((zt, jac))
    };
    let vr = v_radius;
    let margin = move |z: &[C64]| -> f64 {
        let s1 = z[0].norm() - 1.0;
        let s2 = z[1].norm() - 1.0;
        vr * 0.98 - (s1 * s1 + s2 * s2).sqrt()
    };
    // Richardson guard on one trajectory
    if let Some(z0) = flow_lattice.first() {
        richardson_check(&field, &margin, z0, 0.0, 1.0, 64, 1e-8)?;
    }
    let results: Vec<Result<Trajectory>> = flow_lattice
        .par_iter()
        .map(|z0| integrate_flow(&field, &margin, z0, 0.0, 1.0, 64))
        .collect();
    let mut omega_residual: f64 = 0.0;
    let mut containment: f64 = f64::INFINITY;
    let mut correction_sup: f64 = 0.0;
    let mut corrected = Vec::with_capacity(flow_lattice.len());
    for (z0, tr) in flow_lattice.iter().zip(results) {
        let tr = tr?;
        containment = containment.min(tr.min_margin);
        let fz = approx.eval(&tr.endpoint);
        let f_prime_jac = approx.jacobian(&tr.endpoint);
        let total_jac = f_prime_jac.matmul(&tr.jacobian);
        // omega residual: volume and C^2 symplectic both reduce to the
        // Jacobian determinant
        let det = total_jac.det();
        omega_residual = omega_residual.max((det - C64::new(1.0, 0.0)).norm());
        let f0 = approx.eval(z0);
        let diff: f64 = fz
            .iter()
            .zip(&f0)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        correction_sup = correction_sup.max(diff);
        corrected.push((fz, total_jac));
    }
    Ok(MoserOutcome {
        omega_residual,
        containment_margin: containment,
        correction_sup,
        v_sup,
        strip_residuals,
        flow_lattice,
        corrected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_rotation_pipeline_smoke() {
        let m = Manifold::CircleInC;
        let fam = DiffeoFamily::CircleRotation { a: 0.3 };
        let ext = extend_dbar_flat(&m, fam, 1).unwrap();
        // order-1 extension decays linearly
        let fit = ext.dbar_decay_fit.expect("decay fit");
        assert!(fit.0 > 0.8 && fit.0 < 1.3, "decay exponent {}", fit.0);
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let approx = holo_approx_diffeo(&ext, &spec, QuadScale(1.0), 1.0).unwrap();
        assert!(approx.injectivity_ratio > 0.1, "ratio {}", approx.injectivity_ratio);
        // F' is holomorphic: dbar defect small on a probe
        let z = [C64::from_polar(1.01, 0.7)];
        assert!(approx.dbar_defect(&z) < 1e-3, "defect {}", approx.dbar_defect(&z));
        let (c0, c1) = forward_errors_on_m(&m, &fam, |z: &[C64]| approx.eval(z));
        // errors shrink with delta^2-ish; at delta = 0.1 expect small
        assert!(c0 < 0.02, "c0 {c0}");
        assert!(c1 < 0.3, "c1 {c1}");
        let inv = inverse_error(
            |z: &[C64]| approx.eval(z),
            |z: &[C64]| approx.jacobian(z),
            &ext,
            &spec,
            0.25,
        )
        .unwrap();
        assert!(inv.sup_c0 < 0.05, "inverse c0 {}", inv.sup_c0);
    }

    #[test]
    fn identity_family_maps_to_identity() {
        // the rotation flow at t = 0 is the identity; its extension is the
        // identity map and the dbar solve returns zero
        let m = Manifold::TorusInC2;
        let fam = DiffeoFamily::TorusRotationFlow { a: 0.0 };
        let ext = extend_dbar_flat(&m, fam, 2).unwrap();
        let z = [C64::from_polar(1.02, 0.4), C64::from_polar(0.97, 1.9)];
        let v = ext.eval(&z);
        assert!((v[0] - z[0]).norm() + (v[1] - z[1]).norm() < 1e-13);
        let (_, ja) = ext.jacobians(&z);
        assert!(ja.norm_fro() < 1e-9, "antiholomorphic part {}", ja.norm_fro());
        assert!(ext.dbar_decay_fit.is_none());
    }

    #[test]
    fn contraction_solve_constant_case() {
        // omega_t = dz1 ^ dz2, v = dz2 -> Z = -d/dz1
        let omega_c = |key: u32| if key == 0b11 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        let z = contraction_solve(
            OmegaKind::Volume,
            2,
            &omega_c,
            &[C64::new(1.0, 0.0)],
            &[0b10],
        )
        .unwrap();
        assert!((z[0] + C64::new(1.0, 0.0)).norm() < 1e-14, "Z1 = {}", z[0]);
        assert!(z[1].norm() < 1e-14);
        // symplectic route gives the same field for the same data in C^2
        let zs = contraction_solve(
            OmegaKind::Symplectic,
            2,
            &omega_c,
            &[C64::new(1.0, 0.0)],
            &[0b10],
        )
        .unwrap();
        assert!((zs[0] - z[0]).norm() < 1e-14 && (zs[1] - z[1]).norm() < 1e-14);
    }
}

#[cfg(test)]
mod moser_smoke {
    use super::*;
    use std::time::Instant;

    #[test]
    fn torus_shear_moser_correction() {
        let m = Manifold::TorusInC2;
        let fam = DiffeoFamily::TorusShear { eps: 0.05 };
        let ext = extend_dbar_flat(&m, fam, 1).unwrap();
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let t0 = Instant::now();
        let approx = holo_approx_diffeo(&ext, &spec, QuadScale(0.5), 1.0).unwrap();
        println!("approx stage: {:?}, v_sup {:.3e}", t0.elapsed(), approx.v_sup);
        let omega = omega_data(OmegaKind::Volume, 2).unwrap();
        let t1 = Instant::now();
        let out = moser_correct(&approx, &omega, QuadScale(1.0), 1.0).unwrap();
        println!(
            "moser stage: {:?} omega_residual {:.3e} containment {:.3e} correction {:.3e} v_sup {:.3e} strips {:?}",
            t1.elapsed(),
            out.omega_residual,
            out.containment_margin,
            out.correction_sup,
            out.v_sup,
            out.strip_residuals
        );
        assert!(out.containment_margin > 0.0);
        assert!(out.omega_residual < 1e-5, "omega residual {}", out.omega_residual);
    }
}

#[cfg(test)]
mod stage_timing {
    use super::*;
    use std::time::Instant;

    #[test]
    fn approx_stage_pieces() {
        let m = Manifold::TorusInC2;
        let fam = DiffeoFamily::TorusShear { eps: 0.05 };
        let ext = extend_dbar_flat(&m, fam, 1).unwrap();
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let t0 = Instant::now();
        let set = henkin_support(&m, &spec).unwrap();
        println!("henkin: {:?}", t0.elapsed());
        let (nf, nc) = interp_sizes(&m, 1.0);
        let big_b = 1.02 * spec.delta;
        let e2 = ext.clone();
        let t1 = Instant::now();
        let dbar_all = Arc::new(TubeInterpolant::build_vec(
            &m,
            big_b,
            nf + 4,
            nc + 2,
            4,
            move |z: &[C64]| {
                let (_, ja) = e2.jacobians(z);
                vec![ja[(0, 0)], ja[(0, 1)], ja[(1, 0)], ja[(1, 1)]]
            },
        ));
        println!("dbar rows interp: {:?}", t1.elapsed());
        let z0 = [C64::from_polar(1.02, 0.8), C64::from_polar(0.99, 2.0)];
        let t2 = Instant::now();
        for _ in 0..100 {
            let _ = dbar_all.eval_channels(&z0);
        }
        println!("100 interp evals: {:?}", t2.elapsed());
        let rows = dbar_all.clone();
        let u_keys: Vec<(u32, u32)> = vec![(0, 1), (0, 2)];
        let u_fn = Arc::new(move |z: &[C64]| -> Vec<C64> {
            let all = rows.eval_channels(z);
            vec![all[0], all[1]]
        });
        let core = DbarCore::new_vector(set, 0, u_keys, u_fn, QuadScale(1.0));
        let t3 = Instant::now();
        for _ in 0..5 {
            let _ = core.eval(&z0);
        }
        println!("5 solver evals: {:?}", t3.elapsed());
    }
}

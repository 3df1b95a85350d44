//! The time-sampled omega-flow lift: per time sample the generator
//! contraction alpha_t = X_t . omega is extended dbar-flatly off the
//! manifold by truncated exponential jets per Fourier mode, holomorphized
//! through the dbar solver, corrected to a closed form through the d-solve,
//! and converted back to a holomorphic field Y_t; the flow of the linearly
//! interpolated family is stitched across the sample intervals.

use super::{
    integrate_flow, interp_sizes, staged_d_solve, DiffeoFamily, OmegaData, OmegaKind,
    TubeInterpolant, Trajectory,
};
use crate::dbar::{DbarCore, QuadScale};
use crate::expr::Coeff;
use crate::forms::{FormField, MixedForm};
use crate::geometry::{eval_lattice, Manifold, TubeSpec};
use crate::kernels::henkin_support;
use crate::linalg::CMat;
use crate::{C64, Error, Result, I};
use serde::Serialize;
use std::f64::consts::TAU;
use std::sync::Arc;

/// A dbar-flat extension of a scalar function on the torus (or circle):
/// per Fourier mode m the extension of e^{i m theta} is
/// e^{i m theta} prod_k T_J(-m_k v_k) with v_k = -ln|z_k| and T_J the
/// truncated exponential, so that dbar vanishes to order J on M and every
/// Wirtinger derivative has a closed form.
#[derive(Clone)]
pub struct JetField {
    pub m: usize,
    pub order: usize,
    pub modes: Vec<(i64, i64, C64)>,
}

impl JetField {
    /// Build from samples of g on the angle grid (spectrally exact for
    /// trigonometric data).
    pub fn build<F>(manifold: &Manifold, order: usize, g: F) -> JetField
    where
        F: Fn(&[f64]) -> C64,
    {
        let m = manifold.real_dim();
        let nn = 32usize;
        let mut modes = Vec::new();
        match m {
            1 => {
                let vals: Vec<C64> = (0..nn).map(|k| g(&[k as f64 * TAU / nn as f64])).collect();
                for k in 0..nn {
                    let mut acc = C64::new(0.0, 0.0);
                    for (j, v) in vals.iter().enumerate() {
                        acc += v * C64::from_polar(1.0, -TAU * ((k * j) % nn) as f64 / nn as f64);
                    }
                    acc /= nn as f64;
                    if acc.norm() > 1e-13 {
                        modes.push((signed(k, nn), 0, acc));
                    }
                }
            }
            2 => {
                let mut vals = vec![C64::new(0.0, 0.0); nn * nn];
                for k1 in 0..nn {
                    for k2 in 0..nn {
                        vals[k1 * nn + k2] =
                            g(&[k1 as f64 * TAU / nn as f64, k2 as f64 * TAU / nn as f64]);
                    }
                }
                for k1 in 0..nn {
                    for k2 in 0..nn {
                        let mut acc = C64::new(0.0, 0.0);
                        for j1 in 0..nn {
                            for j2 in 0..nn {
                                let ph = -TAU * ((k1 * j1 + k2 * j2) % nn) as f64 / nn as f64;
                                acc += vals[j1 * nn + j2] * C64::from_polar(1.0, ph);
                            }
                        }
                        acc /= (nn * nn) as f64;
                        if acc.norm() > 1e-13 {
                            modes.push((signed(k1, nn), signed(k2, nn), acc));
                        }
                    }
                }
            }
            _ => panic!("jet fields for m <= 2"),
        }
        JetField { m, order, modes }
    }

    fn factor(&self, mk: i64, z: C64) -> (C64, C64, C64) {
        // returns (value, d/dz, d/dzbar) of e^{i mk theta} T_J(-mk v)
        let theta = z.arg();
        let v = -z.norm().ln();
        let x = -(mk as f64) * v;
        let mut t = C64::new(1.0, 0.0);
        let mut term = C64::new(1.0, 0.0);
        for j in 1..=self.order {
            term *= x / j as f64;
            t += term;
        }
        // top term x^J / J!
        let mut top = C64::new(1.0, 0.0);
        let mut fact = 1.0;
        for j in 1..=self.order {
            top *= x;
            fact *= j as f64;
        }
        top /= fact;
        let e = C64::from_polar(1.0, mk as f64 * theta);
        let val = e * t;
        // d/dzbar = e (mk/(2 zbar)) (T_{J-1} - T_J) = -e (mk/(2 zbar)) top
        let dzbar = -e * (mk as f64 / (2.0 * z.conj())) * top;
        // d/dz = e (mk/(2 z)) (T_J + T_{J-1}) = e (mk/(2z)) (2 T_J - top)
        let dz = e * (mk as f64 / (2.0 * z)) * (2.0 * t - top);
        (val, dz, dzbar)
    }

    /// Value and full Wirtinger gradient.
    pub fn eval_grad(&self, z: &[C64]) -> (C64, Vec<C64>, Vec<C64>) {
        let m = self.m;
        let mut val = C64::new(0.0, 0.0);
        let mut dz = vec![C64::new(0.0, 0.0); m];
        let mut dzbar = vec![C64::new(0.0, 0.0); m];
        for &(m1, m2, c) in &self.modes {
            let ms = [m1, m2];
            let mut fv = [C64::new(1.0, 0.0); 2];
            let mut fdz = [C64::new(0.0, 0.0); 2];
            let mut fdzb = [C64::new(0.0, 0.0); 2];
            for k in 0..m {
                let (v, d, db) = self.factor(ms[k], z[k]);
                fv[k] = v;
                fdz[k] = d;
                fdzb[k] = db;
            }
            if m == 1 {
                val += c * fv[0];
                dz[0] += c * fdz[0];
                dzbar[0] += c * fdzb[0];
            } else {
                val += c * fv[0] * fv[1];
                dz[0] += c * fdz[0] * fv[1];
                dz[1] += c * fv[0] * fdz[1];
                dzbar[0] += c * fdzb[0] * fv[1];
                dzbar[1] += c * fv[0] * fdzb[1];
            }
        }
        (val, dz, dzbar)
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        self.eval_grad(z).0
    }
}

fn signed(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowSampleReport {
    pub t: f64,
    /// sup |F_t - f_t| over the manifold sample.
    pub endpoint_c0: f64,
    /// sup |det dF_t - 1| over the flow lattice.
    pub omega_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowLiftReport {
    pub samples: Vec<FlowSampleReport>,
    pub containment: f64,
    /// Composition gap of the time-reversed lift: sup |F_rev(F(z)) - z|.
    pub time_reversal_gap: f64,
    /// Largest du residual of the corrected closed forms.
    pub du_residual: f64,
}

/// One lifted time sample: the holomorphic field Y with u = Y . omega.
struct LiftedField {
    u_hol: Arc<TubeInterpolant>,
    jets: Vec<Arc<JetField>>,
    /// which (1,0) component each channel/jet feeds (mask index)
    comp_masks: Vec<u32>,
    vprime: Option<Arc<super::InterpolatedForm>>,
    vprime_keys: Vec<u32>,
}

impl LiftedField {
    /// Y(z) and its holomorphic Jacobian for the volume form in C^2:
    /// u = Y . omega means Y_1 = u_{dz2}, Y_2 = -u_{dz1}.
    fn field(&self, z: &[C64]) -> (Vec<C64>, CMat) {
        let n = 2usize;
        let mut u = vec![C64::new(0.0, 0.0); n];
        let mut du = CMat::zeros(n, n); // du[(i,k)] = d u_i / d z_k
        for (slot, jet) in self.jets.iter().enumerate() {
            let (val, dz, _) = jet.eval_grad(z);
            let idx = mask_slot(self.comp_masks[slot]);
            u[idx] += val;
            for k in 0..n {
                du[(idx, k)] += dz[k];
            }
        }
        // subtract the dbar correction (interpolated)
        for ch in 0..self.u_hol.channel_count() {
            let (val, dz, _) = self.u_hol.eval_with_derivs_ch(z, ch);
            let idx = mask_slot(self.comp_masks[ch]);
            u[idx] -= val;
            for k in 0..n {
                du[(idx, k)] -= dz[k];
            }
        }
        if let Some(vp) = &self.vprime {
            for (i, it) in vp.comps.iter().enumerate() {
                let (val, dz, _) = it.eval_with_derivs(z);
                let idx = mask_slot(self.vprime_keys[i]);
                u[idx] -= val;
                for k in 0..n {
                    du[(idx, k)] -= dz[k];
                }
            }
        }
        // volume contraction: Y1 = u_{dz2}, Y2 = -u_{dz1}
        let y = vec![u[1], -u[0]];
        let mut jy = CMat::zeros(n, n);
        for k in 0..n {
            jy[(0, k)] = du[(1, k)];
            jy[(1, k)] = -du[(0, k)];
        }
        (y, jy)
    }
}

fn mask_slot(mask: u32) -> usize {
    // dz1 -> 0, dz2 -> 1
    if mask & 1 != 0 {
        0
    } else {
        1
    }
}

/// Lift the registry flow family to a holomorphic omega-flow on the tube.
/// `n_samples` time samples, quadrature `scale` for the component solves.
#[allow(clippy::too_many_arguments)]
pub fn omega_flow_lift(
    manifold: &Manifold,
    family: &DiffeoFamily,
    omega: &OmegaData,
    spec: &TubeSpec,
    n_samples: usize,
    scale: QuadScale,
    interp_scale: f64,
    reversed: bool,
) -> Result<(FlowLiftReport, Vec<(Vec<C64>, Vec<C64>)>)> {
    if omega.kind != OmegaKind::Volume || manifold.ambient_n() != 2 {
        return Err(Error::ParameterOutOfRange(
            "the flow lift scenario runs with the volume form in C^2".into(),
        ));
    }
    // omega-flow check: pullback drift of f_t^* omega over the samples
    let mut drift: f64 = 0.0;
    for j in 0..n_samples {
        let t = j as f64 / (n_samples - 1) as f64;
        let t_eff = if reversed { 1.0 - t } else { t };
        // the complexified tangent determinant of the flow map must be
        // t-independent for an omega-flow of the volume form
        let z = [C64::from_polar(1.0, 0.7), C64::from_polar(1.0, 1.9)];
        let w = family.flow_point(t_eff, &z);
        let det = (w[0] / z[0]) * (w[1] / z[1]);
        drift = drift.max((det - C64::new(1.0, 0.0)).norm());
    }
    if drift > 1e-8 {
        return Err(Error::NotOmegaFlow { drift, tol: 1e-8 });
    }

    let (nf, nc) = interp_sizes(manifold, interp_scale);
    let set = henkin_support(manifold, spec)?;
    let valid = super::trusted_fraction(spec.c) * spec.delta;
    let b_u = 0.95 * valid / 2f64.sqrt();
    // lift every time sample
    let times: Vec<f64> = (0..n_samples)
        .map(|j| j as f64 / (n_samples - 1) as f64)
        .collect();
    let mut fields: Vec<LiftedField> = Vec::with_capacity(n_samples);
    let mut du_residual: f64 = 0.0;
    for &t in &times {
        let t_eff = if reversed { 1.0 - t } else { t };
        let sgn = if reversed { -1.0 } else { 1.0 };
        // alpha = X . omega on M_t = M; components on dz1, dz2
        let comp_masks = vec![0b01u32, 0b10u32];
        let mut jets = Vec::new();
        for mask in &comp_masks {
            let fam = *family;
            let mani = manifold.clone();
            let mk = *mask;
            let jet = JetField::build(manifold, 3, move |s: &[f64]| {
                let z = mani.phi(s);
                let x = fam.flow_generator(t_eff, &z);
                // X . (dz1 ^ dz2) = X_1 dz2 - X_2 dz1
                let v = if mk == 0b10 { x[0] } else { -x[1] };
                sgn * v
            });
            jets.push(Arc::new(jet));
        }
        // componentwise dbar solves of the jet extensions
        let cores: Vec<Arc<DbarCore>> = jets
            .iter()
            .map(|jet| {
                let jet = jet.clone();
                let u_keys: Vec<(u32, u32)> = vec![(0, 0b01), (0, 0b10)];
                let u_fn = Arc::new(move |z: &[C64]| -> Vec<C64> {
                    let (_, _, dzbar) = jet.eval_grad(z);
                    vec![dzbar[0], dzbar[1]]
                });
                DbarCore::new_vector(set.clone(), 0, u_keys, u_fn, scale)
            })
            .collect();
        let u_hol = Arc::new(TubeInterpolant::build_vec(
            manifold,
            b_u,
            nf,
            nc,
            2,
            |z: &[C64]| {
                cores
                    .iter()
                    .map(|c| c.eval(z).get(&(0, 0)).copied().unwrap_or(C64::new(0.0, 0.0)))
                    .collect()
            },
        ));
        // d-correction: v' with dv' = du' where u' = alpha-hat - v
        let jets2 = jets.clone();
        let uh2 = u_hol.clone();
        let cm2 = comp_masks.clone();
        let mut du_form = FormField::zero(2, 2, 0);
        du_form.coeffs.insert(
            (0b11, 0),
            Coeff::Fun(
                Arc::new(move |z: &[C64]| {
                    // (du')_{dz1^dz2} = d u'_2/dz_1 - d u'_1/dz_2
                    let mut du = [[C64::new(0.0, 0.0); 2]; 2];
                    for (slot, jet) in jets2.iter().enumerate() {
                        let (_, dz, _) = jet.eval_grad(z);
                        let idx = mask_slot(cm2[slot]);
                        du[idx][0] += dz[0];
                        du[idx][1] += dz[1];
                    }
                    for ch in 0..2 {
                        let (_, dz, _) = uh2.eval_with_derivs_ch(z, ch);
                        let idx = mask_slot(cm2[ch]);
                        du[idx][0] -= dz[0];
                        du[idx][1] -= dz[1];
                    }
                    du[1][0] - du[0][1]
                }),
                1e-4,
            ),
        );
        let du_mixed = MixedForm::from_pure(du_form);
        let d_radius = 0.85 * b_u;
        let (vprime, _vr, strips, _periods) =
            staged_d_solve(manifold, d_radius, &du_mixed, scale, interp_scale, 1e-3, 1e-2)?;
        du_residual = du_residual.max(strips.iter().copied().fold(0.0, f64::max));
        fields.push(LiftedField {
            u_hol,
            jets,
            comp_masks,
            vprime: Some(Arc::new(vprime)),
            vprime_keys: vec![0b01, 0b10],
        });
    }

    // stitched flow with linear interpolation of Y between samples
    let flow_radius = 0.4 * b_u;
    let flow_spec = TubeSpec::new(flow_radius / 0.9, 0.9, 0.95, manifold.delta0())?;
    let lattice = eval_lattice(manifold, &flow_spec, (5, 2), 0.05);
    let br = 0.95 * b_u;
    let margin = move |z: &[C64]| -> f64 {
        let s1 = z[0].norm() - 1.0;
        let s2 = z[1].norm() - 1.0;
        br - (s1 * s1 + s2 * s2).sqrt()
    };
    let dt = 1.0 / (n_samples - 1) as f64;
    let mut samples_report = Vec::new();
    let mut containment: f64 = f64::INFINITY;
    // integrate every lattice point through all intervals, recording the
    // state at each sample time
    let mut states: Vec<Vec<C64>> = lattice.clone();
    let mut jacs: Vec<CMat> = lattice.iter().map(|_| CMat::eye(2)).collect();
    let mut endpoints: Vec<(Vec<C64>, Vec<C64>)> =
        lattice.iter().map(|z| (z.clone(), z.clone())).collect();
    for j in 0..n_samples {
        let t = times[j];
        // measure at this sample
        let t_eff = if reversed { 1.0 - t } else { t };
        let mut omega_res: f64 = 0.0;
        for jac in &jacs {
            omega_res = omega_res.max((jac.det() - C64::new(1.0, 0.0)).norm());
        }
        // endpoint error on the manifold-side lattice rows (all rows serve)
        let mut c0: f64 = 0.0;
        for (z0, zt) in lattice.iter().zip(&states) {
            let want = if reversed {
                // reversed flow runs from f_1 backwards: compare against
                // f_{1-t} o f_1^{-1} applied to z0; for the rotation family
                // this is the rotation by -a t applied to z0
                family.flow_point(-t, z0)
            } else {
                family.flow_point(t, z0)
            };
            let d: f64 = zt
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            c0 = c0.max(d);
        }
        let _ = t_eff;
        samples_report.push(FlowSampleReport { t, endpoint_c0: c0, omega_residual: omega_res });
        if j + 1 == n_samples {
            break;
        }
        // advance through [t_j, t_{j+1}]
        let fa = &fields[j];
        let fb = &fields[j + 1];
        let field = |tt: f64, z: &[C64]| -> Result<(Vec<C64>, CMat)> {
            let lam = ((tt - t) / dt).clamp(0.0, 1.0);
            let (ya, ja) = fa.field(z);
            let (yb, jb) = fb.field(z);
            let y = ya
                .iter()
                .zip(&yb)
                .map(|(a, b)| (1.0 - lam) * a + lam * b)
                .collect();
            let jm = ja.scale(C64::new(1.0 - lam, 0.0)).add(&jb.scale(C64::new(lam, 0.0)));
            Ok((y, jm))
        };
        for (idx, st) in states.iter_mut().enumerate() {
            let tr: Trajectory = integrate_flow(&field, &margin, st, t, t + dt, 8)?;
            containment = containment.min(tr.min_margin);
            *st = tr.endpoint;
            jacs[idx] = tr.jacobian.matmul(&jacs[idx]);
        }
    }
    for (e, st) in endpoints.iter_mut().zip(&states) {
        e.1 = st.clone();
    }
    let report = FlowLiftReport {
        samples: samples_report,
        containment,
        time_reversal_gap: 0.0,
        du_residual,
    };
    Ok((report, endpoints))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_field_extends_and_is_dbar_flat() {
        let m = Manifold::TorusInC2;
        // g = e^{i theta_1}: the order-3 jet of z_1 around |z| = 1
        let jet = JetField::build(&m, 3, |s: &[f64]| C64::from_polar(1.0, s[0]));
        // on M the value matches and dbar vanishes
        let zm = [C64::from_polar(1.0, 0.8), C64::from_polar(1.0, 2.1)];
        let (v, _, dzbar) = jet.eval_grad(&zm);
        assert!((v - zm[0]).norm() < 1e-12);
        assert!(dzbar[0].norm() < 1e-12 && dzbar[1].norm() < 1e-12);
        // off M: dbar = O(d^3)
        let mut pts = Vec::new();
        for k in 1..=5 {
            let d = 0.01 * k as f64;
            let z = [C64::from_polar(1.0 + d, 0.8), C64::from_polar(1.0, 2.1)];
            let (_, _, db) = jet.eval_grad(&z);
            pts.push((d, db[0].norm() + db[1].norm()));
        }
        let (slope, _, _) = crate::cli::fit_slope(&pts).unwrap();
        assert!(slope > 2.7, "jet decay slope {slope}");
        // Wirtinger derivative cross-check against finite differences
        let z = [C64::from_polar(1.03, 0.5), C64::from_polar(0.98, 1.3)];
        let h = 1e-6;
        let at = |re: f64, im: f64| {
            let mut zp = z.to_vec();
            zp[0] = z[0] + C64::new(re, im);
            jet.eval(&zp)
        };
        let fx = (at(h, 0.0) - at(-h, 0.0)) / (2.0 * h);
        let fy = (at(0.0, h) - at(0.0, -h)) / (2.0 * h);
        let dz_fd = (fx - I * fy) * 0.5;
        let (_, dz, _) = jet.eval_grad(&z);
        assert!((dz[0] - dz_fd).norm() < 1e-7, "{} vs {dz_fd}", dz[0]);
    }
}

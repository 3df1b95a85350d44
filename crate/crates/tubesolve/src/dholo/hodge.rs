//! Exact d-solves on the built-in manifolds, standing in for the Green
//! operator: angular antiderivative with mean-zero normalization on the
//! circle, separable Fourier (discrete Hodge) solves on the torus.
//! Exactness is certified by period integrals over the generating cycles.

use crate::forms::{CVector, FormField, MixedForm};
use crate::geometry::Manifold;
use crate::{C64, Error, Result, I};
use std::f64::consts::TAU;
use std::sync::Arc;

/// A form on the manifold in chart (angle) coordinates, sampled spectrally.
#[derive(Clone)]
pub enum ChartForm {
    /// Scalar function on the circle or torus.
    Scalar(Arc<dyn Fn(&[f64]) -> C64 + Send + Sync>),
    /// One-form sum_j b_j dtheta_j.
    OneForm(Vec<Arc<dyn Fn(&[f64]) -> C64 + Send + Sync>>),
}

pub struct ManifoldSolution {
    pub v0: ChartForm,
    pub sup: f64,
    pub holder_half: f64,
    pub periods: Vec<C64>,
}

/// Restrict a tube (p, q)-form to the manifold in chart coordinates:
/// evaluates the form on the chart tangent frame.
pub fn restrict_to_manifold(
    manifold: &Manifold,
    u: &MixedForm,
) -> Vec<Arc<dyn Fn(&[f64]) -> C64 + Send + Sync>> {
    let m = manifold.real_dim();
    let deg = u.degree;
    let mani = manifold.clone();
    let u = Arc::new(u.clone());
    match deg {
        1 => (0..m)
            .map(|i| {
                let mani = mani.clone();
                let u = u.clone();
                let f: Arc<dyn Fn(&[f64]) -> C64 + Send + Sync> = Arc::new(move |s: &[f64]| {
                    let z = mani.phi(s);
                    let dp = mani.dphi(s);
                    u.eval_on_vectors(&z, &[CVector::real(&dp[i])])
                });
                f
            })
            .collect(),
        2 => {
            assert_eq!(m, 2, "2-form restriction needs a 2-manifold");
            let f: Arc<dyn Fn(&[f64]) -> C64 + Send + Sync> = Arc::new(move |s: &[f64]| {
                let z = mani.phi(s);
                let dp = mani.dphi(s);
                u.eval_on_vectors(&z, &[CVector::real(&dp[0]), CVector::real(&dp[1])])
            });
            vec![f]
        }
        _ => panic!("restriction implemented for degrees 1 and 2"),
    }
}

/// Solve d v0 = alpha on the manifold. `alpha` is given by its chart
/// coefficients (degree 1: one per angle; degree 2 on the torus: one).
/// Exactness requires the periods over the generating cycles to vanish to
/// `tol` relative to the coefficient scale.
pub fn solve_d_on_manifold(
    manifold: &Manifold,
    alpha: &[Arc<dyn Fn(&[f64]) -> C64 + Send + Sync>],
    degree: usize,
    tol: f64,
) -> Result<ManifoldSolution> {
    match manifold {
        Manifold::CircleInC => {
            assert_eq!(degree, 1);
            let nsamp = 256usize;
            let vals: Vec<C64> = (0..nsamp)
                .map(|k| alpha[0](&[k as f64 * TAU / nsamp as f64]))
                .collect();
            let scale: f64 = vals.iter().map(|v| v.norm()).fold(1e-30, f64::max);
            // period = trapezoid integral over the circle
            let period: C64 = vals.iter().sum::<C64>() * (TAU / nsamp as f64);
            if period.norm() > tol * scale.max(1.0) * TAU {
                return Err(Error::NonzeroPeriod(vec![period]));
            }
            // Fourier antiderivative with mean-zero normalization
            let coeffs = dft(&vals);
            let mut anti = vec![C64::new(0.0, 0.0); nsamp];
            for (k, c) in coeffs.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let kk = signed_mode(k, nsamp);
                anti[k] = c / (I * kk as f64);
            }
            let v0 = move |s: &[f64]| -> C64 { idft_eval(&anti, s[0]) };
            let sup = sample_sup_1d(&v0);
            let hol = sample_holder_1d(&v0, 0.5);
            Ok(ManifoldSolution {
                v0: ChartForm::Scalar(Arc::new(v0)),
                sup,
                holder_half: hol,
                periods: vec![period],
            })
        }
        Manifold::TorusInC2 => {
            let nsamp = 48usize;
            match degree {
                1 => {
                    let a1 = grid_samples(&alpha[0], nsamp);
                    let a2 = grid_samples(&alpha[1], nsamp);
                    let scale: f64 = a1
                        .iter()
                        .chain(a2.iter())
                        .map(|v| v.norm())
                        .fold(1e-30, f64::max);
                    let p1: C64 = mean(&a1) * TAU;
                    let p2: C64 = mean(&a2) * TAU;
                    if p1.norm().max(p2.norm()) > tol * scale.max(1.0) * TAU {
                        return Err(Error::NonzeroPeriod(vec![p1, p2]));
                    }
                    let f1 = dft2(&a1, nsamp);
                    let f2 = dft2(&a2, nsamp);
                    let mut g = vec![C64::new(0.0, 0.0); nsamp * nsamp];
                    for k1 in 0..nsamp {
                        for k2 in 0..nsamp {
                            if k1 == 0 && k2 == 0 {
                                continue;
                            }
                            let m1 = signed_mode(k1, nsamp) as f64;
                            let m2 = signed_mode(k2, nsamp) as f64;
                            let kk = m1 * m1 + m2 * m2;
                            let idx = k1 * nsamp + k2;
                            g[idx] = -I * (m1 * f1[idx] + m2 * f2[idx]) / kk;
                        }
                    }
                    let v0 = move |s: &[f64]| -> C64 { idft2_eval(&g, nsamp, s) };
                    let sup = sample_sup_2d(&v0);
                    let hol = sample_holder_2d(&v0, 0.5);
                    Ok(ManifoldSolution {
                        v0: ChartForm::Scalar(Arc::new(v0)),
                        sup,
                        holder_half: hol,
                        periods: vec![p1, p2],
                    })
                }
                2 => {
                    let a = grid_samples(&alpha[0], nsamp);
                    let scale: f64 = a.iter().map(|v| v.norm()).fold(1e-30, f64::max);
                    let p: C64 = mean(&a) * TAU * TAU;
                    if p.norm() > tol * scale.max(1.0) * TAU * TAU {
                        return Err(Error::NonzeroPeriod(vec![p]));
                    }
                    let f = dft2(&a, nsamp);
                    let mut b1 = vec![C64::new(0.0, 0.0); nsamp * nsamp];
                    let mut b2 = vec![C64::new(0.0, 0.0); nsamp * nsamp];
                    for k1 in 0..nsamp {
                        for k2 in 0..nsamp {
                            if k1 == 0 && k2 == 0 {
                                continue;
                            }
                            let m1 = signed_mode(k1, nsamp) as f64;
                            let m2 = signed_mode(k2, nsamp) as f64;
                            let kk = m1 * m1 + m2 * m2;
                            let idx = k1 * nsamp + k2;
                            b1[idx] = I * m2 * f[idx] / kk;
                            b2[idx] = -I * m1 * f[idx] / kk;
                        }
                    }
                    let c1 = move |s: &[f64]| -> C64 { idft2_eval(&b1, nsamp, s) };
                    let c2 = move |s: &[f64]| -> C64 { idft2_eval(&b2, nsamp, s) };
                    let sup = sample_sup_2d(&c1) + sample_sup_2d(&c2);
                    let hol = sample_holder_2d(&c1, 0.5) + sample_holder_2d(&c2, 0.5);
                    Ok(ManifoldSolution {
                        v0: ChartForm::OneForm(vec![Arc::new(c1), Arc::new(c2)]),
                        sup,
                        holder_half: hol,
                        periods: vec![p],
                    })
                }
                _ => Err(Error::ParameterOutOfRange("torus solves support degrees 1, 2".into())),
            }
        }
        _ => Err(Error::UnsupportedManifold(format!(
            "manifold d-solve is built in for the circle and torus, not `{}`",
            manifold.kind_name()
        ))),
    }
}

/// The pullback pi^* v0 as an ambient mixed form, using that the fiber
/// projection preserves the angle coordinates: d(theta_j o pi) =
/// (dz_j / z_j - dzbar_j / zbar_j) / (2 i).
pub fn pullback_to_tube(manifold: &Manifold, v0: &ChartForm) -> MixedForm {
    let n = manifold.ambient_n();
    let mani = manifold.clone();
    match v0 {
        ChartForm::Scalar(f) => {
            let f = f.clone();
            let mut part = FormField::zero(n, 0, 0);
            part.coeffs.insert(
                (0, 0),
                crate::expr::Coeff::Fun(
                    Arc::new(move |z: &[C64]| {
                        let s: Vec<f64> = z.iter().map(|c| c.arg()).collect();
                        let _ = &mani;
                        f(&s)
                    }),
                    1e-5,
                ),
            );
            MixedForm::from_pure(part)
        }
        ChartForm::OneForm(bs) => {
            let mut out = MixedForm::zero(n, 1);
            let mut hol = FormField::zero(n, 1, 0);
            let mut anti = FormField::zero(n, 0, 1);
            for (j, b) in bs.iter().enumerate() {
                let bj = b.clone();
                hol.coeffs.insert(
                    (1 << j, 0),
                    crate::expr::Coeff::Fun(
                        Arc::new(move |z: &[C64]| {
                            let s: Vec<f64> = z.iter().map(|c| c.arg()).collect();
                            bj(&s) / (2.0 * I * z[j])
                        }),
                        1e-5,
                    ),
                );
                let bj2 = b.clone();
                anti.coeffs.insert(
                    (0, 1 << j),
                    crate::expr::Coeff::Fun(
                        Arc::new(move |z: &[C64]| {
                            let s: Vec<f64> = z.iter().map(|c| c.arg()).collect();
                            -bj2(&s) / (2.0 * I * z[j].conj())
                        }),
                        1e-5,
                    ),
                );
            }
            out.push(hol);
            out.push(anti);
            out
        }
    }
}

fn signed_mode(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

fn dft(vals: &[C64]) -> Vec<C64> {
    let n = vals.len();
    (0..n)
        .map(|k| {
            let mut acc = C64::new(0.0, 0.0);
            for (j, v) in vals.iter().enumerate() {
                let ph = -TAU * (k * j % n) as f64 / n as f64;
                acc += v * C64::from_polar(1.0, ph);
            }
            acc / n as f64
        })
        .collect()
}

fn idft_eval(coeffs: &[C64], theta: f64) -> C64 {
    let n = coeffs.len();
    let mut acc = C64::new(0.0, 0.0);
    for (k, c) in coeffs.iter().enumerate() {
        let m = signed_mode(k, n) as f64;
        acc += c * C64::from_polar(1.0, m * theta);
    }
    acc
}

fn grid_samples(f: &Arc<dyn Fn(&[f64]) -> C64 + Send + Sync>, n: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(n * n);
    for k1 in 0..n {
        for k2 in 0..n {
            out.push(f(&[k1 as f64 * TAU / n as f64, k2 as f64 * TAU / n as f64]));
        }
    }
    out
}

fn mean(vals: &[C64]) -> C64 {
    vals.iter().sum::<C64>() / vals.len() as f64
}

/// Separable 2D DFT (row-major samples).
fn dft2(vals: &[C64], n: usize) -> Vec<C64> {
    // transform along axis 2, then axis 1
    let mut tmp = vec![C64::new(0.0, 0.0); n * n];
    for r in 0..n {
        let row = dft(&vals[r * n..(r + 1) * n]);
        tmp[r * n..(r + 1) * n].copy_from_slice(&row);
    }
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    let mut col = vec![C64::new(0.0, 0.0); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = tmp[r * n + c];
        }
        let t = dft(&col);
        for r in 0..n {
            out[r * n + c] = t[r];
        }
    }
    out
}

fn idft2_eval(coeffs: &[C64], n: usize, s: &[f64]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for k1 in 0..n {
        let m1 = signed_mode(k1, n) as f64;
        for k2 in 0..n {
            let m2 = signed_mode(k2, n) as f64;
            let c = coeffs[k1 * n + k2];
            if c.norm_sqr() < 1e-28 {
                continue;
            }
            acc += c * C64::from_polar(1.0, m1 * s[0] + m2 * s[1]);
        }
    }
    acc
}

fn sample_sup_1d(f: &dyn Fn(&[f64]) -> C64) -> f64 {
    (0..128)
        .map(|k| f(&[k as f64 * TAU / 128.0]).norm())
        .fold(0.0, f64::max)
}

fn sample_holder_1d(f: &dyn Fn(&[f64]) -> C64, s: f64) -> f64 {
    let mut best: f64 = 0.0;
    for k in 0..64 {
        let t = k as f64 * TAU / 64.0;
        for h in [0.02, 0.1, 0.5] {
            let d = (f(&[t + h]) - f(&[t])).norm() / h.powf(s);
            best = best.max(d);
        }
    }
    best
}

fn sample_sup_2d(f: &dyn Fn(&[f64]) -> C64) -> f64 {
    let mut best: f64 = 0.0;
    for k1 in 0..24 {
        for k2 in 0..24 {
            best = best.max(f(&[k1 as f64 * TAU / 24.0, k2 as f64 * TAU / 24.0]).norm());
        }
    }
    best
}

fn sample_holder_2d(f: &dyn Fn(&[f64]) -> C64, s: f64) -> f64 {
    let mut best: f64 = 0.0;
    for k1 in 0..12 {
        for k2 in 0..12 {
            let t = [k1 as f64 * TAU / 12.0, k2 as f64 * TAU / 12.0];
            for h in [0.05, 0.3] {
                let d = (f(&[t[0] + h, t[1]]) - f(&t)).norm() / h.powf(s);
                best = best.max(d);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(f: impl Fn(&[f64]) -> C64 + Send + Sync + 'static) -> Arc<dyn Fn(&[f64]) -> C64 + Send + Sync> {
        Arc::new(f)
    }

    #[test]
    fn circle_angle_form_rejected() {
        // alpha = dtheta has period 2 pi
        let m = Manifold::CircleInC;
        let alpha = vec![one(|_s: &[f64]| C64::new(1.0, 0.0))];
        match solve_d_on_manifold(&m, &alpha, 1, 1e-8) {
            Err(Error::NonzeroPeriod(p)) => {
                assert!((p[0].re - TAU).abs() < 1e-10, "period {}", p[0]);
            }
            other => panic!("expected NonzeroPeriod, got {other:?}", other = other.map(|_| ())),
        }
    }

    #[test]
    fn circle_cos_antiderivative() {
        // alpha = cos(theta) dtheta -> v0 = sin(theta), mean zero
        let m = Manifold::CircleInC;
        let alpha = vec![one(|s: &[f64]| C64::new(s[0].cos(), 0.0))];
        let sol = solve_d_on_manifold(&m, &alpha, 1, 1e-8).unwrap();
        let ChartForm::Scalar(g) = &sol.v0 else { panic!() };
        for k in 0..16 {
            let t = k as f64 * TAU / 16.0;
            assert!((g(&[t]).re - t.sin()).abs() < 1e-10);
            assert!(g(&[t]).im.abs() < 1e-12);
        }
        // mean-zero normalization (orthogonal to constants)
        let mean: C64 = (0..64).map(|k| g(&[k as f64 * TAU / 64.0])).sum::<C64>() / 64.0;
        assert!(mean.norm() < 1e-12);
    }

    #[test]
    fn torus_separable_mode_matches_antiderivative() {
        // alpha = cos(theta_1) dtheta_1 -> v0 = sin(theta_1)
        let m = Manifold::TorusInC2;
        let alpha = vec![
            one(|s: &[f64]| C64::new(s[0].cos(), 0.0)),
            one(|_s: &[f64]| C64::new(0.0, 0.0)),
        ];
        let sol = solve_d_on_manifold(&m, &alpha, 1, 1e-8).unwrap();
        let ChartForm::Scalar(g) = &sol.v0 else { panic!() };
        for k in 0..10 {
            let s = [k as f64 * TAU / 10.0, 0.7 * k as f64];
            assert!((g(&s).re - s[0].sin()).abs() < 1e-10, "at {s:?}");
        }
    }

    #[test]
    fn torus_two_form_solve() {
        // alpha = cos(theta_1) dtheta_1 ^ dtheta_2: d(beta) = alpha
        let m = Manifold::TorusInC2;
        let alpha = vec![one(|s: &[f64]| C64::new(s[0].cos(), 0.0))];
        let sol = solve_d_on_manifold(&m, &alpha, 2, 1e-8).unwrap();
        let ChartForm::OneForm(bs) = &sol.v0 else { panic!() };
        // check curl b = alpha by finite differences
        let h = 1e-5;
        for k in 0..8 {
            let s = [0.3 + 0.7 * k as f64, 1.1 * k as f64];
            let d1b2 = (bs[1](&[s[0] + h, s[1]]) - bs[1](&[s[0] - h, s[1]])) / (2.0 * h);
            let d2b1 = (bs[0](&[s[0], s[1] + h]) - bs[0](&[s[0], s[1] - h])) / (2.0 * h);
            let curl = d1b2 - d2b1;
            assert!((curl.re - s[0].cos()).abs() < 1e-8, "curl {curl} at {s:?}");
        }
        // nonexact 2-form rejected
        let bad = vec![one(|_s: &[f64]| C64::new(1.0, 0.0))];
        assert!(matches!(
            solve_d_on_manifold(&m, &bad, 2, 1e-8),
            Err(Error::NonzeroPeriod(_))
        ));
    }
}

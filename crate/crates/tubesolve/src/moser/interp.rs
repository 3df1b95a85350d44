//! Spectral interpolants on tube regions: trigonometric in the angle
//! coordinates, Chebyshev in the normal coordinates. Solver outputs are
//! expensive per-point quadratures; the flow pipelines evaluate them on
//! these interpolants (values and Wirtinger derivatives) instead. Multiple
//! channels share one sampling pass and one basis construction per
//! evaluation, and only the significant spectral modes are kept.

use crate::geometry::Manifold;
use crate::{C64, I};
use rayon::prelude::*;
use std::f64::consts::TAU;

/// Tensor-product interpolant: `m` periodic angle axes (nf points each)
/// times `m` normal axes (nc Chebyshev points each on [-b, b]).
/// Coordinates per kind: circle (theta; s), torus (theta1, theta2; s1, s2).
pub struct TubeInterpolant {
    m: usize,
    nf: usize,
    nc: usize,
    b: f64,
    /// Significant modes per channel: (angle-mode mixed index, cheb mixed
    /// index, coefficient).
    channels: Vec<Vec<(u32, u32, C64)>>,
}

impl TubeInterpolant {
    /// Sample `f` on the spectral grid (in parallel) and transform.
    pub fn build<F>(manifold: &Manifold, b: f64, nf: usize, nc: usize, f: F) -> Self
    where
        F: Fn(&[C64]) -> C64 + Sync,
    {
        Self::build_vec(manifold, b, nf, nc, 1, |z| vec![f(z)])
    }

    /// Multi-channel build: one sampling pass, shared basis at evaluation.
    pub fn build_vec<F>(
        manifold: &Manifold,
        b: f64,
        nf: usize,
        nc: usize,
        nch: usize,
        f: F,
    ) -> Self
    where
        F: Fn(&[C64]) -> Vec<C64> + Sync,
    {
        let m = manifold.real_dim();
        assert_eq!(m, manifold.ambient_n(), "interpolant needs full-dimension kinds");
        let total = nf.pow(m as u32) * nc.pow(m as u32);
        let samples: Vec<Vec<C64>> = (0..total)
            .into_par_iter()
            .map(|idx| {
                let (angles, ss) = Self::grid_point(idx, m, nf, nc, b);
                let z: Vec<C64> = (0..m)
                    .map(|j| C64::from_polar(1.0 + ss[j], angles[j]))
                    .collect();
                f(&z)
            })
            .collect();
        let ncm = nc.pow(m as u32);
        let mut channels = Vec::with_capacity(nch);
        for ch in 0..nch {
            let flat: Vec<C64> = samples.iter().map(|row| row[ch]).collect();
            let coeffs = transform(&flat, m, nf, nc);
            let maxc = coeffs.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
            let mut sparse = Vec::new();
            for (idx, c) in coeffs.iter().enumerate() {
                if c.norm() > 1e-13 * maxc {
                    sparse.push(((idx / ncm) as u32, (idx % ncm) as u32, *c));
                }
            }
            channels.push(sparse);
        }
        TubeInterpolant { m, nf, nc, b, channels }
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    fn grid_point(idx: usize, m: usize, nf: usize, nc: usize, b: f64) -> (Vec<f64>, Vec<f64>) {
        let mut rest = idx;
        let mut angles = vec![0.0; m];
        let mut ss = vec![0.0; m];
        for a in angles.iter_mut() {
            *a = (rest % nf) as f64 * TAU / nf as f64;
            rest /= nf;
        }
        for s in ss.iter_mut() {
            let l = rest % nc;
            rest /= nc;
            *s = b * (std::f64::consts::PI * (l as f64 + 0.5) / nc as f64).cos();
        }
        (angles, ss)
    }

    fn fourier_table(&self, angles: &[f64]) -> Vec<Vec<C64>> {
        let m = self.m;
        let mut four = Vec::with_capacity(m);
        for j in 0..m {
            let base = C64::from_polar(1.0, angles[j]);
            let mut row = vec![C64::new(0.0, 0.0); self.nf];
            let mut cur = C64::new(1.0, 0.0);
            for (k, slot) in row.iter_mut().enumerate() {
                let kk = signed_mode(k, self.nf);
                if kk >= 0 {
                    *slot = cur;
                    cur *= base;
                }
            }
            for k in 0..self.nf {
                let kk = signed_mode(k, self.nf);
                if kk < 0 {
                    row[k] = row[(-kk) as usize].conj();
                }
            }
            four.push(row);
        }
        four
    }

    fn cheb_table(&self, ss: &[f64]) -> Vec<Vec<(f64, f64)>> {
        let m = self.m;
        let mut cheb = Vec::with_capacity(m);
        for j in 0..m {
            let x = (ss[j] / self.b).clamp(-1.0, 1.0);
            let mut row = Vec::with_capacity(self.nc);
            let mut t0 = 1.0;
            let mut t1 = x;
            let mut d0 = 0.0;
            let mut d1 = 1.0;
            for p in 0..self.nc {
                let (t, d) = match p {
                    0 => (1.0, 0.0),
                    1 => (x, 1.0),
                    _ => {
                        let t = 2.0 * x * t1 - t0;
                        let d = 2.0 * t1 + 2.0 * x * d1 - d0;
                        t0 = t1;
                        t1 = t;
                        d0 = d1;
                        d1 = d;
                        (t, d)
                    }
                };
                row.push((t, d / self.b));
            }
            cheb.push(row);
        }
        cheb
    }

    /// Value at a tube point (channel 0).
    pub fn eval(&self, z: &[C64]) -> C64 {
        self.eval_channels(z)[0]
    }

    /// Values of all channels, sharing one basis construction.
    pub fn eval_channels(&self, z: &[C64]) -> Vec<C64> {
        let m = self.m;
        let angles: Vec<f64> = z.iter().map(|c| c.arg()).collect();
        let ss: Vec<f64> = z.iter().map(|c| c.norm() - 1.0).collect();
        let four = self.fourier_table(&angles);
        let cheb = self.cheb_table(&ss);
        let mut out = Vec::with_capacity(self.channels.len());
        for sparse in &self.channels {
            let mut value = C64::new(0.0, 0.0);
            for &(fi, ci, c) in sparse {
                let mut fidx = fi as usize;
                let mut fvals = C64::new(1.0, 0.0);
                for f in four.iter().take(m) {
                    fvals *= f[fidx % self.nf];
                    fidx /= self.nf;
                }
                let mut cidx = ci as usize;
                let mut cvals = 1.0;
                for ch in cheb.iter().take(m) {
                    cvals *= ch[cidx % self.nc].0;
                    cidx /= self.nc;
                }
                value += c * fvals * cvals;
            }
            out.push(value);
        }
        out
    }

    /// Value plus Wirtinger derivatives (d/dz_j, d/dzbar_j per axis) of
    /// channel 0.
    pub fn eval_with_derivs(&self, z: &[C64]) -> (C64, Vec<C64>, Vec<C64>) {
        self.eval_with_derivs_ch(z, 0)
    }

    /// Value plus Wirtinger derivatives of one channel.
    pub fn eval_with_derivs_ch(&self, z: &[C64], ch: usize) -> (C64, Vec<C64>, Vec<C64>) {
        let m = self.m;
        let angles: Vec<f64> = z.iter().map(|c| c.arg()).collect();
        let ss: Vec<f64> = z.iter().map(|c| c.norm() - 1.0).collect();
        let four = self.fourier_table(&angles);
        let cheb = self.cheb_table(&ss);
        let mut value = C64::new(0.0, 0.0);
        let mut d_theta = vec![C64::new(0.0, 0.0); m];
        let mut d_s = vec![C64::new(0.0, 0.0); m];
        for &(fi, ci, c) in &self.channels[ch] {
            let mut fidx = fi as usize;
            let mut fvals = C64::new(1.0, 0.0);
            let mut fmode = [0i64; 2];
            for (j, f) in four.iter().enumerate().take(m) {
                let k = fidx % self.nf;
                fidx /= self.nf;
                fvals *= f[k];
                fmode[j] = signed_mode(k, self.nf);
            }
            let mut cidx = ci as usize;
            let mut cvals = 1.0;
            let mut cders = [1.0f64; 2];
            for (j, chb) in cheb.iter().enumerate().take(m) {
                let p = cidx % self.nc;
                cidx /= self.nc;
                let (t, d) = chb[p];
                cvals *= t;
                for (jj, cd) in cders.iter_mut().enumerate().take(m) {
                    *cd *= if jj == j { d } else { t };
                }
            }
            value += c * fvals * cvals;
            for j in 0..m {
                d_theta[j] += c * fvals * (I * fmode[j] as f64) * cvals;
                d_s[j] += c * fvals * cders[j];
            }
        }
        // Wirtinger chain rule: theta = arg z, s = |z| - 1
        let mut dz = vec![C64::new(0.0, 0.0); m];
        let mut dzbar = vec![C64::new(0.0, 0.0); m];
        for j in 0..m {
            let w = z[j];
            let r = w.norm();
            let dtheta_dz = -I / (2.0 * w);
            let dtheta_dzbar = I / (2.0 * w.conj());
            let ds_dz = w.conj() / (2.0 * r);
            let ds_dzbar = w / (2.0 * r);
            dz[j] = d_theta[j] * dtheta_dz + d_s[j] * ds_dz;
            dzbar[j] = d_theta[j] * dtheta_dzbar + d_s[j] * ds_dzbar;
        }
        (value, dz, dzbar)
    }
}

fn signed_mode(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Forward transform: DFT per angle axis, then DCT-based Chebyshev
/// coefficients per normal axis, returned in the
/// [angle modes][cheb degrees] layout used by evaluation.
fn transform(samples: &[C64], m: usize, nf: usize, nc: usize) -> Vec<C64> {
    let mut data = samples.to_vec();
    let total = data.len();
    let mut stride = 1usize;
    for _axis in 0..m {
        dft_axis(&mut data, total, stride, nf);
        stride *= nf;
    }
    for _axis in 0..m {
        dct_axis(&mut data, total, stride, nc);
        stride *= nc;
    }
    let nfm = nf.pow(m as u32);
    let ncm = nc.pow(m as u32);
    let mut out = vec![C64::new(0.0, 0.0); total];
    for fi in 0..nfm {
        for ci in 0..ncm {
            out[fi * ncm + ci] = data[fi + ci * nfm];
        }
    }
    out
}

fn dft_axis(data: &mut [C64], total: usize, stride: usize, n: usize) {
    let block = stride * n;
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for base in 0..total / block {
        for off in 0..stride {
            let start = base * block + off;
            for (k, b) in buf.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..n {
                    let ph = -TAU * ((k * j) % n) as f64 / n as f64;
                    acc += data[start + j * stride] * C64::from_polar(1.0, ph);
                }
                *b = acc / n as f64;
            }
            for (k, b) in buf.iter().enumerate() {
                data[start + k * stride] = *b;
            }
        }
    }
}

fn dct_axis(data: &mut [C64], total: usize, stride: usize, n: usize) {
    let block = stride * n;
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for base in 0..total / block {
        for off in 0..stride {
            let start = base * block + off;
            for (p, b) in buf.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for l in 0..n {
                    let ang = std::f64::consts::PI * (l as f64 + 0.5) / n as f64;
                    acc += data[start + l * stride] * (p as f64 * ang).cos();
                }
                *b = acc * if p == 0 { 1.0 / n as f64 } else { 2.0 / n as f64 };
            }
            for (p, b) in buf.iter().enumerate() {
                data[start + p * stride] = *b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_holomorphic_function_on_annulus() {
        let m = Manifold::CircleInC;
        let f = |z: &[C64]| z[0] * z[0] + 1.0 / z[0];
        let it = TubeInterpolant::build(&m, 0.05, 16, 8, f);
        for k in 0..20 {
            let z = [C64::from_polar(1.0 + 0.04 * ((k as f64).sin()), 0.37 * k as f64)];
            let (v, dz, dzbar) = it.eval_with_derivs(&z);
            let want = f(&z);
            assert!((v - want).norm() < 1e-9, "value {v} vs {want}");
            let dwant = 2.0 * z[0] - 1.0 / (z[0] * z[0]);
            assert!((dz[0] - dwant).norm() < 1e-6, "deriv {} vs {dwant}", dz[0]);
            assert!(dzbar[0].norm() < 1e-6, "dzbar {}", dzbar[0]);
        }
    }

    #[test]
    fn interpolates_mixed_function_on_torus_tube() {
        let m = Manifold::TorusInC2;
        let f = |z: &[C64]| z[0] * z[1].conj() + 0.3 * z[1];
        let it = TubeInterpolant::build(&m, 0.04, 10, 6, f);
        for k in 0..12 {
            let z = [
                C64::from_polar(1.0 + 0.03 * ((k as f64) * 0.7).cos(), 0.9 * k as f64),
                C64::from_polar(1.0 - 0.02 * ((k as f64) * 0.4).sin(), 1.7 * k as f64),
            ];
            let (v, dz, dzbar) = it.eval_with_derivs(&z);
            let want = f(&z);
            assert!((v - want).norm() < 1e-8, "value {v} vs {want}");
            assert!((dz[0] - z[1].conj()).norm() < 1e-5);
            assert!((dzbar[1] - z[0]).norm() < 1e-5, "dzbar1 {}", dzbar[1]);
        }
    }

    #[test]
    fn channels_share_basis() {
        let m = Manifold::CircleInC;
        let it = TubeInterpolant::build_vec(&m, 0.05, 12, 6, 2, |z: &[C64]| {
            vec![z[0], z[0].conj() * z[0]]
        });
        assert_eq!(it.channel_count(), 2);
        let z = [C64::from_polar(1.03, 1.1)];
        let vals = it.eval_channels(&z);
        assert!((vals[0] - z[0]).norm() < 1e-9);
        assert!((vals[1] - z[0].conj() * z[0]).norm() < 1e-9);
    }
}

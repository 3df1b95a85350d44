//! Quadrature grids covering tubes {rho < delta^2}, with per-node distance
//! and foot-point metadata, plus evaluation lattices strictly inside the
//! shrunken tube and a flat binary cache format.

use super::{Manifold, TubeSpec};
use crate::linalg::gauss_legendre_ab;
use crate::{C64, Error, Result};
use std::f64::consts::TAU;
use std::io::{Read, Write};

#[derive(Clone, Debug)]
pub struct GridNode {
    pub z: Vec<C64>,
    pub w: f64,
    pub d_m: f64,
    pub foot: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TubeGrid {
    pub n: usize,
    pub m: usize,
    pub nodes: Vec<GridNode>,
}

impl TubeGrid {
    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.w).sum()
    }

    /// FNV-1a hash over the raw node data, for run manifests.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bits: u64| {
            for b in bits.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.n as u64);
        eat(self.m as u64);
        eat(self.nodes.len() as u64);
        for node in &self.nodes {
            for z in &node.z {
                eat(z.re.to_bits());
                eat(z.im.to_bits());
            }
            eat(node.w.to_bits());
            eat(node.d_m.to_bits());
            for f in &node.foot {
                eat(f.to_bits());
            }
        }
        h
    }

    /// Flat binary record: header (magic, n, m, count) then per node the
    /// complex coordinates, weight, distance, and foot parameters.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"TUBEGRD1")?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.m as u64).to_le_bytes())?;
        w.write_all(&(self.nodes.len() as u64).to_le_bytes())?;
        for node in &self.nodes {
            for z in &node.z {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
            w.write_all(&node.w.to_le_bytes())?;
            w.write_all(&node.d_m.to_le_bytes())?;
            for f in &node.foot {
                w.write_all(&f.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<TubeGrid> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"TUBEGRD1" {
            return Err(Error::Config("bad tube grid magic".into()));
        }
        let mut u = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut u)?;
            Ok(u64::from_le_bytes(u))
        };
        let n = read_u64(&mut r)? as usize;
        let m = read_u64(&mut r)? as usize;
        let count = read_u64(&mut r)? as usize;
        let mut f = [0u8; 8];
        let mut read_f64 = |r: &mut R| -> Result<f64> {
            r.read_exact(&mut f)?;
            Ok(f64::from_le_bytes(f))
        };
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let mut z = Vec::with_capacity(n);
            for _ in 0..n {
                let re = read_f64(&mut r)?;
                let im = read_f64(&mut r)?;
                z.push(C64::new(re, im));
            }
            let w = read_f64(&mut r)?;
            let d_m = read_f64(&mut r)?;
            let mut foot = Vec::with_capacity(m);
            for _ in 0..m {
                foot.push(read_f64(&mut r)?);
            }
            nodes.push(GridNode { z, w, d_m, foot });
        }
        Ok(TubeGrid { n, m, nodes })
    }
}

/// Build a quadrature grid covering {rho < delta^2}. `res` is (tangential
/// count per chart axis, normal count).
pub fn tube_grid(manifold: &Manifold, spec: &TubeSpec, res: (usize, usize)) -> Result<TubeGrid> {
    if res.1 < 4 {
        return Err(Error::ResolutionTooCoarse { min: 4, got: res.1 });
    }
    if res.0 < 4 {
        return Err(Error::ResolutionTooCoarse { min: 4, got: res.0 });
    }
    let delta = spec.delta;
    let n = manifold.ambient_n();
    let m = manifold.real_dim();
    let mut nodes = Vec::new();
    match manifold {
        Manifold::CircleInC => {
            let nt = res.0;
            let (ss, ws) = gauss_legendre_ab(res.1, -delta, delta);
            let dth = TAU / nt as f64;
            for it in 0..nt {
                let th = it as f64 * dth;
                for (s, w) in ss.iter().zip(&ws) {
                    let r = 1.0 + s;
                    nodes.push(GridNode {
                        z: vec![C64::from_polar(r, th)],
                        w: r * dth * w,
                        d_m: s.abs(),
                        foot: vec![th],
                    });
                }
            }
        }
        Manifold::TorusInC2 => {
            let nt = res.0;
            let dth = TAU / nt as f64;
            let (rs, rw) = gauss_legendre_ab(res.1, 0.0, delta);
            let na = (2 * res.1).max(8);
            let dph = TAU / na as f64;
            for i1 in 0..nt {
                let t1 = i1 as f64 * dth;
                for i2 in 0..nt {
                    let t2 = i2 as f64 * dth;
                    for (r, wr) in rs.iter().zip(&rw) {
                        for ia in 0..na {
                            let ph = ia as f64 * dph;
                            let s1 = r * ph.cos();
                            let s2 = r * ph.sin();
                            let w = (1.0 + s1) * (1.0 + s2) * dth * dth * r * wr * dph;
                            nodes.push(GridNode {
                                z: vec![
                                    C64::from_polar(1.0 + s1, t1),
                                    C64::from_polar(1.0 + s2, t2),
                                ],
                                w,
                                d_m: r.abs(),
                                foot: vec![t1, t2],
                            });
                        }
                    }
                }
            }
        }
        Manifold::FlatRmInCn { m: mm, n: nn, .. } => {
            let (lo, hi) = manifold.param_domain();
            // tangential product rule
            let mut tang: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
            for ax in 0..*mm {
                let (xs, ws) = gauss_legendre_ab(res.0, lo[ax], hi[ax]);
                let mut next = Vec::with_capacity(tang.len() * xs.len());
                for (base, bw) in &tang {
                    for (x, w) in xs.iter().zip(&ws) {
                        let mut v = base.clone();
                        v.push(*x);
                        next.push((v, bw * w));
                    }
                }
                tang = next;
            }
            // normal rule over the (2n - m)-ball of radius delta
            let normal = ball_rule(2 * nn - mm, delta, res.1);
            for (x, wt) in &tang {
                for (y, wn) in &normal {
                    let mut z = vec![C64::new(0.0, 0.0); *nn];
                    for j in 0..*mm {
                        z[j] = C64::new(x[j], if j == 0 { y[0] } else { y[j] });
                    }
                    // normal coords: first mm entries are the y_j of the flat
                    // directions, the rest fill the extra complex axes.
                    let mut idx = *mm;
                    for j in *mm..*nn {
                        z[j] = C64::new(y[idx], y[idx + 1]);
                        idx += 2;
                    }
                    let d2: f64 = y.iter().map(|v| v * v).sum();
                    nodes.push(GridNode {
                        z,
                        w: wt * wn,
                        d_m: d2.sqrt(),
                        foot: x.clone(),
                    });
                }
            }
        }
        Manifold::GraphPerturbation { .. } => {
            let (lo, hi) = manifold.param_domain();
            let nt = res.0;
            let span = hi[0] - lo[0];
            let dth = span / nt as f64;
            let (ss, ws) = gauss_legendre_ab(res.1, -delta, delta);
            for it in 0..nt {
                let s0 = lo[0] + (it as f64 + 0.5) * dth;
                let p = manifold.phi(&[s0]);
                let t = &manifold.dphi(&[s0])[0];
                let tn: f64 = t.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                // unit normal: i * unit tangent (n = 1 graph kinds)
                let nu: Vec<C64> = t.iter().map(|c| crate::I * c / tn).collect();
                for (s, w) in ss.iter().zip(&ws) {
                    let z: Vec<C64> = p.iter().zip(&nu).map(|(pi, ni)| pi + ni * *s).collect();
                    let (d_m, foot) = manifold.distance(&z)?;
                    nodes.push(GridNode { z, w: tn * dth * w, d_m, foot });
                }
            }
        }
    }
    Ok(TubeGrid { n, m, nodes })
}

/// Product-polar quadrature for the d-ball of radius `r` (d <= 4 needed).
fn ball_rule(dim: usize, r: f64, res: usize) -> Vec<(Vec<f64>, f64)> {
    let mut out = Vec::new();
    match dim {
        1 => {
            let (xs, ws) = gauss_legendre_ab(res, -r, r);
            for (x, w) in xs.iter().zip(&ws) {
                out.push((vec![*x], *w));
            }
        }
        2 => {
            let (rs, rw) = gauss_legendre_ab(res, 0.0, r);
            let na = (2 * res).max(8);
            let dph = TAU / na as f64;
            for (rr, wr) in rs.iter().zip(&rw) {
                for ia in 0..na {
                    let ph = ia as f64 * dph;
                    out.push((vec![rr * ph.cos(), rr * ph.sin()], rr * wr * dph));
                }
            }
        }
        3 => {
            let (rs, rw) = gauss_legendre_ab(res, 0.0, r);
            let (cs, cw) = gauss_legendre_ab(res.max(6), -1.0, 1.0);
            let na = (2 * res).max(8);
            let dph = TAU / na as f64;
            for (rr, wr) in rs.iter().zip(&rw) {
                for (c, wc) in cs.iter().zip(&cw) {
                    let st = (1.0 - c * c).max(0.0).sqrt();
                    for ia in 0..na {
                        let ph = ia as f64 * dph;
                        out.push((
                            vec![rr * st * ph.cos(), rr * st * ph.sin(), rr * c],
                            rr * rr * wr * wc * dph,
                        ));
                    }
                }
            }
        }
        4 => {
            // r in [0, R], alpha in [0, pi/2], two angles; dV = r^3 cos sin
            let (rs, rw) = gauss_legendre_ab(res, 0.0, r);
            let (als, alw) = gauss_legendre_ab(res.max(6), 0.0, std::f64::consts::FRAC_PI_2);
            let na = (2 * res).max(8);
            let dph = TAU / na as f64;
            for (rr, wr) in rs.iter().zip(&rw) {
                for (al, wa) in als.iter().zip(&alw) {
                    let (sa, ca) = al.sin_cos();
                    for i1 in 0..na {
                        let b = i1 as f64 * dph;
                        for i2 in 0..na {
                            let g = i2 as f64 * dph;
                            out.push((
                                vec![rr * ca * b.cos(), rr * ca * b.sin(), rr * sa * g.cos(), rr * sa * g.sin()],
                                rr.powi(3) * ca * sa * wr * wa * dph * dph,
                            ));
                        }
                    }
                }
            }
        }
        _ => panic!("ball_rule supports dim <= 4"),
    }
    out
}

/// Evaluation lattice strictly inside T_{c delta}: points with
/// d_M <= c*delta*(1 - margin), spread over the inner parameter window.
pub fn eval_lattice(
    manifold: &Manifold,
    spec: &TubeSpec,
    counts: (usize, usize),
    margin: f64,
) -> Vec<Vec<C64>> {
    let cd = spec.c * spec.delta * (1.0 - margin);
    let mut out = Vec::new();
    match manifold {
        Manifold::CircleInC => {
            let nt = counts.0;
            for it in 0..nt {
                let th = it as f64 * TAU / nt as f64 + 0.1 / nt as f64;
                for is in 0..counts.1 {
                    let s = -cd + 2.0 * cd * (is as f64 + 0.5) / counts.1 as f64;
                    out.push(vec![C64::from_polar(1.0 + s, th)]);
                }
            }
        }
        Manifold::TorusInC2 => {
            let nt = counts.0;
            for i1 in 0..nt {
                let t1 = i1 as f64 * TAU / nt as f64 + 0.05;
                for i2 in 0..nt {
                    let t2 = i2 as f64 * TAU / nt as f64 + 0.11;
                    for is in 0..counts.1 {
                        let r = cd * (is as f64 + 0.5) / counts.1 as f64;
                        let ph = 2.399963 * (is as f64 + i1 as f64 + i2 as f64);
                        let s1 = r * ph.cos();
                        let s2 = r * ph.sin();
                        out.push(vec![
                            C64::from_polar(1.0 + s1, t1),
                            C64::from_polar(1.0 + s2, t2),
                        ]);
                    }
                }
            }
        }
        Manifold::FlatRmInCn { m, n, .. } => {
            let (lo, hi) = manifold.inner_domain();
            let nt = counts.0;
            for it in 0..nt {
                let frac = (it as f64 + 0.5) / nt as f64;
                let x: Vec<f64> = (0..*m).map(|ax| lo[ax] + (hi[ax] - lo[ax]) * frac).collect();
                for is in 0..counts.1 {
                    let s = -cd + 2.0 * cd * (is as f64 + 0.5) / counts.1 as f64;
                    let mut z = vec![C64::new(0.0, 0.0); *n];
                    for j in 0..*m {
                        z[j] = C64::new(x[j], if j == 0 { s } else { 0.35 * s });
                    }
                    for j in *m..*n {
                        z[j] = C64::new(0.3 * s, -0.2 * s);
                    }
                    // rescale so the distance is exactly |s|
                    let d2: f64 = z
                        .iter()
                        .enumerate()
                        .map(|(j, c)| if j < *m { c.im * c.im } else { c.norm_sqr() })
                        .sum();
                    let scale = if d2 > 0.0 { s.abs() / d2.sqrt() } else { 0.0 };
                    for (j, c) in z.iter_mut().enumerate() {
                        if j < *m {
                            *c = C64::new(c.re, c.im * scale);
                        } else {
                            *c *= scale;
                        }
                    }
                    out.push(z);
                }
            }
        }
        Manifold::GraphPerturbation { .. } => {
            let (lo, hi) = manifold.param_domain();
            let nt = counts.0;
            for it in 0..nt {
                let s0 = lo[0] + (hi[0] - lo[0]) * (it as f64 + 0.5) / nt as f64;
                let p = manifold.phi(&[s0]);
                let t = &manifold.dphi(&[s0])[0];
                let tn: f64 = t.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                let nu: Vec<C64> = t.iter().map(|c| crate::I * c / tn).collect();
                for is in 0..counts.1 {
                    let s = -cd + 2.0 * cd * (is as f64 + 0.5) / counts.1 as f64;
                    out.push(p.iter().zip(&nu).map(|(pi, ni)| pi + ni * s).collect());
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Manifold;

    #[test]
    fn circle_grid_weight_matches_annulus_area() {
        let m = Manifold::CircleInC;
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let g = tube_grid(&m, &spec, (64, 8)).unwrap();
        let area = 4.0 * std::f64::consts::PI * 0.1;
        let rel = (g.total_weight() - area).abs() / area;
        assert!(rel < 0.02, "relative area error {rel}");
    }

    #[test]
    fn flat_segment_grid_weight() {
        let m = Manifold::FlatRmInCn { m: 1, n: 1, window: (0.0, 1.0), guard: 0.0 };
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let g = tube_grid(&m, &spec, (16, 8)).unwrap();
        let area = 0.2;
        assert!((g.total_weight() - area).abs() / area < 0.02);
    }

    #[test]
    fn torus_grid_weight() {
        let m = Manifold::TorusInC2;
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let g = tube_grid(&m, &spec, (12, 4)).unwrap();
        let vol = TAU * TAU * std::f64::consts::PI * 0.1 * 0.1;
        let rel = (g.total_weight() - vol).abs() / vol;
        assert!(rel < 0.05, "relative volume error {rel}");
    }

    #[test]
    fn too_coarse_rejected() {
        let m = Manifold::CircleInC;
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        assert!(matches!(
            tube_grid(&m, &spec, (64, 3)),
            Err(Error::ResolutionTooCoarse { .. })
        ));
    }

    #[test]
    fn binary_roundtrip() {
        let m = Manifold::CircleInC;
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let g = tube_grid(&m, &spec, (8, 4)).unwrap();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        let back = TubeGrid::read_binary(&buf[..]).unwrap();
        assert_eq!(back.nodes.len(), g.nodes.len());
        assert_eq!(back.content_hash(), g.content_hash());
    }

    #[test]
    fn eval_lattice_inside_shrunken_tube() {
        let m = Manifold::TorusInC2;
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        for z in eval_lattice(&m, &spec, (6, 3), 0.1) {
            let d = m.rho(&z).sqrt();
            assert!(d <= spec.c * spec.delta + 1e-12);
        }
    }
}

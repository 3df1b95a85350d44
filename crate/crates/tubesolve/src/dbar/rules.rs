//! Quadrature rules for the singular kernel integrals, all centered at the
//! evaluation target so that every delta-scale radial feature (the kernel
//! singularity, the chi_delta split, the mid/outer blend) is resolved by
//! radial panels:
//!
//! - near zone |w| <= c0 delta: polar rule, regularized convolution kernel,
//!   weighted by chi_delta;
//! - mid zone up to 4 delta: ray-polar rule in tube coordinates with rays
//!   clipped exactly at the tube boundary, weighted by
//!   (1 - chi_delta) * B_mid;
//! - outer zone: graded tangential shells times coarse normal rules,
//!   weighted by 1 - B_mid.
//!
//! Cell sizes track the kernel's self-similar decay, so the per-target cost
//! is independent of delta.

use crate::geometry::{smoothstep5, Manifold, TubeSpec};
use crate::linalg::{gauss_legendre_ab, gl_sweep};
use crate::C64;
use std::f64::consts::{PI, TAU};

/// One quadrature node: an absolute tube point and its weight (far/mid
/// rules) or a centered offset (the near rule).
#[derive(Clone, Debug)]
pub struct QNode {
    /// Absolute point (first `n` entries used).
    pub zeta: [C64; 2],
    pub w: f64,
}

const CZERO: C64 = C64::new(0.0, 0.0);

/// Resolution knob: 1.0 is the default; the refinement study doubles it.
#[derive(Clone, Copy, Debug)]
pub struct QuadScale(pub f64);

impl QuadScale {
    fn count(&self, base: usize) -> usize {
        ((base as f64) * self.0).round().max(2.0) as usize
    }
}

/// The chi_delta cutoff of the near/far split: 1 for |w| <= c0 delta / 2,
/// 0 for |w| >= c0 delta.
pub fn chi_split(dist: f64, spec: &TubeSpec) -> f64 {
    let r = spec.c0() * spec.delta;
    let (s, _) = smoothstep5((dist - 0.5 * r) / (0.5 * r));
    1.0 - s
}

/// Tangential/normal offsets of a tube point relative to the target, in
/// the target's tube coordinates (wrap-aware angles for periodic kinds).
pub fn local_offsets(manifold: &Manifold, z: &[C64], zeta: &[C64]) -> (f64, f64) {
    fn wrap(a: f64) -> f64 {
        let mut x = a % TAU;
        if x > PI {
            x -= TAU;
        }
        if x < -PI {
            x += TAU;
        }
        x
    }
    match manifold {
        Manifold::CircleInC => {
            let dt = wrap(zeta[0].arg() - z[0].arg());
            let dn = zeta[0].norm() - z[0].norm();
            (dt.abs(), dn.abs())
        }
        Manifold::TorusInC2 => {
            let d1 = wrap(zeta[0].arg() - z[0].arg());
            let d2 = wrap(zeta[1].arg() - z[1].arg());
            let n1 = zeta[0].norm() - z[0].norm();
            let n2 = zeta[1].norm() - z[1].norm();
            ((d1 * d1 + d2 * d2).sqrt(), (n1 * n1 + n2 * n2).sqrt())
        }
        Manifold::FlatRmInCn { m, n, .. } => {
            let mut t2 = 0.0;
            let mut n2 = 0.0;
            for j in 0..*n {
                if j < *m {
                    let d = zeta[j].re - z[j].re;
                    t2 += d * d;
                    let dn = zeta[j].im - z[j].im;
                    n2 += dn * dn;
                } else {
                    n2 += (zeta[j] - z[j]).norm_sqr();
                }
            }
            (t2.sqrt(), n2.sqrt())
        }
        Manifold::GraphPerturbation { .. } => panic!("no local offsets for graph kinds"),
    }
}

/// Near-zone weight: a tensor fade in the tangential and normal offsets,
/// each falling from 1 to 0 across [0.4 g, 0.6 g] where g = (1 - c) delta
/// is the margin between the evaluation tube and the data tube, so that
/// the near ball always stays strictly inside the tube and both factors
/// are aligned with the cylindrical rule coordinates. (At the default
/// c = 1/2 this is the band [0.2 delta, 0.3 delta].)
pub fn near_weight(rho_t: f64, t_n: f64, spec: &TubeSpec) -> f64 {
    let g = (1.0 - spec.c) * spec.delta;
    let (sa, _) = smoothstep5((rho_t / g - 0.40) / 0.20);
    let (sb, _) = smoothstep5((t_n / g - 0.40) / 0.20);
    (1.0 - sa) * (1.0 - sb)
}

/// Tangential-only handoff between the mid and outer zones: 1 below
/// 1.8 delta, 0 above 2.4 delta.
pub fn tangential_handoff(rho_t: f64, delta: f64) -> f64 {
    let (s, _) = smoothstep5((rho_t / delta - 1.8) / 0.6);
    1.0 - s
}

/// Local tube frame at the target: maps local offsets
/// (tangential angles/coordinates, normal components) to absolute points
/// with the exact volume Jacobian.
struct TubeFrame<'a> {
    manifold: &'a Manifold,
    /// target foot parameters and normal components
    foot: Vec<f64>,
    normal: Vec<f64>,
}

impl<'a> TubeFrame<'a> {
    fn at(manifold: &'a Manifold, z: &[C64]) -> Self {
        match manifold {
            Manifold::CircleInC => TubeFrame {
                manifold,
                foot: vec![z[0].arg()],
                normal: vec![z[0].norm() - 1.0],
            },
            Manifold::TorusInC2 => TubeFrame {
                manifold,
                foot: vec![z[0].arg(), z[1].arg()],
                normal: vec![z[0].norm() - 1.0, z[1].norm() - 1.0],
            },
            Manifold::FlatRmInCn { m, n, .. } => {
                let mut foot = Vec::new();
                let mut normal = Vec::new();
                for j in 0..*m {
                    foot.push(z[j].re);
                    normal.push(z[j].im);
                }
                for j in *m..*n {
                    normal.push(z[j].re);
                    normal.push(z[j].im);
                }
                TubeFrame { manifold, foot, normal }
            }
            Manifold::GraphPerturbation { .. } => panic!("no tube frame for graph kinds"),
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.foot.len(), self.normal.len())
    }

    /// Absolute point and volume Jacobian for a local offset
    /// (d_tangential..., d_normal...).
    fn point(&self, off: &[f64]) -> ([C64; 2], f64) {
        let (mt, _) = self.dims();
        match self.manifold {
            Manifold::CircleInC => {
                let r = 1.0 + self.normal[0] + off[1];
                ([C64::from_polar(r, self.foot[0] + off[0]), CZERO], r)
            }
            Manifold::TorusInC2 => {
                let r1 = 1.0 + self.normal[0] + off[2];
                let r2 = 1.0 + self.normal[1] + off[3];
                (
                    [
                        C64::from_polar(r1, self.foot[0] + off[0]),
                        C64::from_polar(r2, self.foot[1] + off[1]),
                    ],
                    r1 * r2,
                )
            }
            Manifold::FlatRmInCn { m, n, .. } => {
                let mut z = [CZERO; 2];
                let _ = n;
                for j in 0..*m {
                    z[j] = C64::new(self.foot[j] + off[j], self.normal[j] + off[mt + j]);
                }
                let mut idx = *m;
                for j in *m..*n {
                    z[j] = C64::new(
                        self.normal[idx] + off[mt + idx],
                        self.normal[idx + 1] + off[mt + idx + 1],
                    );
                    idx += 2;
                }
                (z, 1.0)
            }
            Manifold::GraphPerturbation { .. } => unreachable!(),
        }
    }

    /// Ray parameters where |normal + rho dir_n| = radius (both roots,
    /// ascending), when the ray meets that normal shell.
    fn normal_crossings_dir(&self, dir: &[f64], radius: f64) -> Option<(f64, f64)> {
        self.normal_crossings(dir, radius)
    }

    fn normal_crossings(&self, dir: &[f64], radius: f64) -> Option<(f64, f64)> {
        let (mt, mn) = self.dims();
        let s0: f64 = self.normal.iter().map(|v| v * v).sum();
        let cross: f64 = self.normal.iter().zip(&dir[mt..]).map(|(s, d)| s * d).sum();
        let dd: f64 = dir[mt..mt + mn].iter().map(|v| v * v).sum();
        if dd <= 1e-14 {
            return None;
        }
        let disc = cross * cross - dd * (s0 - radius * radius);
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        Some(((-cross - s) / dd, (-cross + s) / dd))
    }
}


/// Near-zone rule: ambient polar ball of radius 0.45 delta around the
/// target (always strictly inside the tube), with radial panels aligned to
/// the chi ring, the tensor fade, and the (linearized) lambda band
/// crossings per direction. Weights carry the ambient polar measure; nodes
/// are absolute points.
pub fn near_rule(manifold: &Manifold, spec: &TubeSpec, z: &[C64], scale: QuadScale) -> Vec<QNode> {
    let n = manifold.ambient_n();
    let delta = spec.delta;
    let g = (1.0 - spec.c) * delta;
    let r_ball = 0.93 * g;
    let ring = spec.c0() * delta;
    let frame = TubeFrame::at(manifold, z);
    let (mt, mn) = frame.dims();
    let mut out = Vec::new();
    for (dir, wdir) in directions(2 * n, scale) {
        // linearized normal components of the ambient direction
        let mut ndir = vec![0.0; mt + mn];
        match manifold {
            Manifold::CircleInC => {
                let e = C64::from_polar(1.0, frame.foot[0]);
                ndir[mt] = dir[0] * e.re + dir[1] * e.im;
            }
            Manifold::TorusInC2 => {
                let e1 = C64::from_polar(1.0, frame.foot[0]);
                let e2 = C64::from_polar(1.0, frame.foot[1]);
                ndir[mt] = dir[0] * e1.re + dir[1] * e1.im;
                ndir[mt + 1] = dir[2] * e2.re + dir[3] * e2.im;
            }
            Manifold::FlatRmInCn { m, .. } => {
                for j in 0..*m {
                    ndir[mt + j] = dir[2 * j + 1];
                }
                let mut idx = mt + *m;
                for j in *m..n {
                    ndir[idx] = dir[2 * j];
                    ndir[idx + 1] = dir[2 * j + 1];
                    idx += 2;
                }
            }
            Manifold::GraphPerturbation { .. } => panic!("no near rule for graph kinds"),
        }
        let mut edges = vec![0.0, 0.4 * ring, 1.15 * ring];
        for band in [spec.c_prime * delta, 0.9 * delta] {
            if let Some((r1, r2)) = frame.normal_crossings(&ndir, band) {
                for r in [r1, r2] {
                    if r > 0.0 && r < r_ball {
                        edges.push(r);
                    }
                }
            }
        }
        // tensor-fade crossings: rho |sigma_t| and rho |sigma_n| pass the
        // fade radii 0.4 g and 0.6 g
        let sn: f64 = ndir.iter().map(|v| v * v).sum::<f64>().sqrt().min(1.0);
        let st = (1.0 - sn * sn).max(0.0).sqrt();
        for comp in [st, sn] {
            if comp > 1e-6 {
                for r in [0.4 * g / comp, 0.6 * g / comp] {
                    if r < r_ball {
                        edges.push(r);
                    }
                }
            }
        }
        edges.push(r_ball);
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        edges.dedup_by(|a, b| (*a - *b).abs() < 5e-3 * delta);
        for win in edges.windows(2) {
            let (plo, phi) = (win[0], win[1]);
            if phi <= plo {
                continue;
            }
            let gln = if phi <= 1.2 * ring { scale.count(6) } else { scale.count(3) };
            gl_sweep(gln, plo, phi, |rho, wr| {
                let mut zeta = [CZERO; 2];
                for j in 0..n {
                    zeta[j] = z[j] + C64::new(rho * dir[2 * j], rho * dir[2 * j + 1]);
                }
                out.push(QNode { zeta, w: rho.powi(2 * n as i32 - 1) * wr * wdir });
            });
        }
    }
    out
}

/// Unit directions and surface weights on S^{d-1} (d = local dimension).
fn directions(d: usize, scale: QuadScale) -> Vec<(Vec<f64>, f64)> {
    let mut out = Vec::new();
    match d {
        2 => {
            let na = scale.count(20);
            let dph = TAU / na as f64;
            for ia in 0..na {
                let ph = (ia as f64 + 0.5) * dph;
                out.push((vec![ph.cos(), ph.sin()], dph));
            }
        }
        4 => {
            let (als, alw) = gauss_legendre_ab(scale.count(5), 0.0, PI / 2.0);
            let na = scale.count(8);
            let dph = TAU / na as f64;
            for (al, wa) in als.iter().zip(&alw) {
                let (sa, ca) = al.sin_cos();
                for i1 in 0..na {
                    let b = (i1 as f64 + 0.5) * dph;
                    for i2 in 0..na {
                        let g = (i2 as f64 + 0.5) * dph;
                        out.push((
                            vec![ca * b.cos(), ca * b.sin(), sa * g.cos(), sa * g.sin()],
                            ca * sa * wa * dph * dph,
                        ));
                    }
                }
            }
        }
        _ => panic!("directions for local dims 2 and 4"),
    }
    out
}

/// Mid-zone rule: cylindrical in tube coordinates — tangential polar shells
/// around the target's foot, times the full normal block integrated with
/// panels graded toward the target's normal position and aligned with the
/// lambda cutoff band. All panel boundaries vary smoothly with the target
/// (the normal block is centered strictly inside the tube disc), so the
/// discretized operator stays smooth in z.
pub fn mid_rule(manifold: &Manifold, spec: &TubeSpec, z: &[C64], scale: QuadScale) -> Vec<QNode> {
    let delta = spec.delta;
    let frame = TubeFrame::at(manifold, z);
    let (mt, _) = frame.dims();
    let r_mid = 2.5 * delta;
    let mut out = Vec::new();
    // tangential radial breakpoints, aligned with the tensor fade and the
    // outer handoff
    let g = (1.0 - spec.c) * delta;
    let mut tbreaks = vec![0.0, 0.4 * g, 0.6 * g];
    {
        let mut r = 0.6 * g;
        while r < r_mid {
            r = (r * 1.5).min(r_mid);
            tbreaks.push(r);
        }
    }
    for b in [1.8 * delta, 2.4 * delta] {
        if b < r_mid {
            tbreaks.push(b);
        }
    }
    tbreaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    tbreaks.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * delta);
    for win in tbreaks.windows(2) {
        let (tlo, thi) = (win[0], win[1]);
        let dense = thi <= 1.2 * delta;
        let gln = scale.count(if dense { 4 } else { 3 });
        match mt {
            1 => {
                gl_sweep(gln, tlo, thi, |t, wt| {
                    for side in [-1.0, 1.0] {
                        normal_block(&frame, spec, &[side * t], wt, dense, scale, &mut out);
                    }
                });
            }
            2 => {
                let na = scale.count(if dense { 12 } else { 14 });
                let dph = TAU / na as f64;
                gl_sweep(gln, tlo, thi, |t, wt| {
                    for ia in 0..na {
                        let ph = (ia as f64 + 0.5) * dph;
                        normal_block(
                            &frame,
                            spec,
                            &[t * ph.cos(), t * ph.sin()],
                            t * wt * dph,
                            dense,
                            scale,
                            &mut out,
                        );
                    }
                });
            }
            _ => panic!("mid rule for m <= 2"),
        }
    }
    out
}

/// Integrate the full normal block at a fixed tangential offset: polar
/// around the target's normal position, radially panelized toward zero and
/// aligned with the lambda band crossings; ray caps at the tube disc are
/// smooth because the center is strictly inside.
fn normal_block(
    frame: &TubeFrame,
    spec: &TubeSpec,
    tang: &[f64],
    wt: f64,
    dense: bool,
    scale: QuadScale,
    out: &mut Vec<QNode>,
) {
    let delta = spec.delta;
    let (mt, mn) = frame.dims();
    let mut off = vec![0.0; mt + mn];
    off[..mt].copy_from_slice(tang);
    match mn {
        1 => {
            let s0 = frame.normal[0];
            let mut edges = vec![-delta - s0, delta - s0];
            for band in [spec.c_prime * delta, 0.9 * delta] {
                for sgn in [-1.0, 1.0] {
                    let t = sgn * band - s0;
                    if t > -delta - s0 && t < delta - s0 {
                        edges.push(t);
                    }
                }
            }
            // graded refinement toward the target's normal position,
            // aligned with the tensor fade
            let g = (1.0 - spec.c) * delta;
            for step in [0.4 * g, 0.6 * g, 0.55 * delta] {
                for sgn in [-1.0, 1.0] {
                    let t = sgn * step;
                    if t > -delta - s0 && t < delta - s0 {
                        edges.push(t);
                    }
                }
            }
            edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
            edges.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * delta);
            let gln = scale.count(if dense { 3 } else { 2 });
            for win in edges.windows(2) {
                if win[1] <= win[0] {
                    continue;
                }
                gl_sweep(gln, win[0], win[1], |s, ws| {
                    off[mt] = s;
                    let (zeta, jac) = frame.point(&off);
                    out.push(QNode { zeta, w: wt * ws * jac });
                });
            }
        }
        2 | 3 => {
            // polar around the normal position; cap and band crossings per
            // normal ray are smooth quadratic roots
            let rays = if dense { scale.count(9) } else { scale.count(5) };
            let dirsets: Vec<(Vec<f64>, f64)> = if mn == 2 {
                (0..rays)
                    .map(|k| {
                        let ph = (k as f64 + 0.5) * TAU / rays as f64;
                        (vec![ph.cos(), ph.sin()], TAU / rays as f64)
                    })
                    .collect()
            } else {
                // 3-sphere of normal directions: polar angle x azimuth
                let (cs, cw) = gauss_legendre_ab(scale.count(4), -1.0, 1.0);
                let na = rays;
                let dph = TAU / na as f64;
                let mut v = Vec::new();
                for (c, wc) in cs.iter().zip(&cw) {
                    let st = (1.0 - c * c).max(0.0).sqrt();
                    for ia in 0..na {
                        let ph = (ia as f64 + 0.5) * dph;
                        v.push((vec![st * ph.cos(), st * ph.sin(), *c], wc * dph));
                    }
                }
                v
            };
            for (ndir, wdir) in dirsets {
                let mut full = vec![0.0; mt + mn];
                full[..mt].copy_from_slice(tang);
                full[mt..].copy_from_slice(&ndir);
                // cap where |normal + t ndir| = 0.999 delta
                let cap = match frame.normal_crossings(&full, 0.999 * delta) {
                    Some((_, hi)) => hi.max(0.0),
                    None => 0.0,
                };
                if cap <= 0.0 {
                    continue;
                }
                let mut edges = vec![0.0];
                for band in [spec.c_prime * delta, 0.9 * delta] {
                    if let Some((r1, r2)) = frame.normal_crossings(&full, band) {
                        for r in [r1, r2] {
                            if r > 0.0 && r < cap {
                                edges.push(r);
                            }
                        }
                    }
                }
                // fade alignment only matters while the tangential offset
                // is inside the fade support
                let g = (1.0 - spec.c) * delta;
                let rho_t: f64 = tang.iter().map(|v| v * v).sum::<f64>().sqrt();
                if rho_t <= 0.61 * g {
                    for step in [0.4 * g, 0.6 * g] {
                        let t = step;
                        if t < cap {
                            edges.push(t);
                        }
                    }
                }
                let peak = (0.5 * rho_t).clamp(0.15 * delta, 0.6 * delta);
                let mut t = peak;
                while t < cap {
                    edges.push(t);
                    t *= 2.1;
                }
                edges.push(cap);
                edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
                edges.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * delta);
                let gln = scale.count(5);
                for win in edges.windows(2) {
                    if win[1] <= win[0] {
                        continue;
                    }
                    gl_sweep(gln, win[0], win[1], |r, wr| {
                        for (k, o) in off.iter_mut().enumerate().skip(mt) {
                            *o = r * ndir[k - mt];
                        }
                        let (zeta, jac) = frame.point(&off);
                        out.push(QNode {
                            zeta,
                            w: wt * wdir * r.powi(mn as i32 - 1) * wr * jac,
                        });
                    });
                }
            }
        }
        _ => panic!("normal block for <= 3 normal dimensions"),
    }
}

/// Geometrically graded breakpoints from `first` to `stop`.
fn graded_breaks(first: f64, stop: f64, ratio: f64) -> Vec<f64> {
    let mut b = vec![first];
    let mut r = first;
    while r < stop {
        r = (r * ratio).min(stop);
        b.push(r);
        if b.len() > 200 {
            break;
        }
    }
    b
}

/// Outer-zone rule: graded tangential shells (starting at 2 delta, where
/// the mid blend takes over) times coarse normal rules, in absolute
/// coordinates. Weighted by 1 - B_mid at solve time.
pub fn outer_rule(manifold: &Manifold, spec: &TubeSpec, z: &[C64], scale: QuadScale) -> Vec<QNode> {
    let delta = spec.delta;
    let start = 1.8 * delta;
    match manifold {
        Manifold::CircleInC => {
            let th0 = z[0].arg();
            let mut out = Vec::new();
            if start >= PI {
                return out;
            }
            // tangential grading with the psi collar band kept on panel
            // boundaries (R = 0.35 for the circle)
            let mut breaks = graded_breaks(start, PI, 1.4);
            for b in [0.175, 0.2333, 2.4 * delta] {
                if b > start && b < PI {
                    breaks.push(b);
                }
            }
            breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
            breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-4);
            let spanels = normal_panels(delta, spec.c_prime);
            for win in breaks.windows(2) {
                let (a, b) = (win[0], win[1]);
                let (ts, tw) = gauss_legendre_ab(scale.count(3), a, b);
                for side in [-1.0, 1.0] {
                    for (t, wt) in ts.iter().zip(&tw) {
                        for &(slo, shi) in &spanels {
                            let (ss, sw) = gauss_legendre_ab(scale.count(3), slo, shi);
                            for (s, ws) in ss.iter().zip(&sw) {
                                let r = 1.0 + s;
                                out.push(QNode {
                                    zeta: [C64::from_polar(r, th0 + side * t), CZERO],
                                    w: r * wt * ws,
                                });
                            }
                        }
                    }
                }
            }
            out
        }
        Manifold::TorusInC2 => {
            let th = [z[0].arg(), z[1].arg()];
            let mut out = Vec::new();
            // polar tangential shells blended against frame rectangles
            let mut tb = graded_breaks(start, 0.85 * PI, 1.35);
            if 2.4 * delta < 0.85 * PI {
                tb.push(2.4 * delta);
            }
            tb.sort_by(|a, b| a.partial_cmp(b).unwrap());
            tb.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * delta);
            for win in tb.windows(2) {
                let (a, b) = (win[0], win[1]);
                let (rs, rw) = gauss_legendre_ab(scale.count(2), a, b);
                let na = scale.count(12);
                let dph = TAU / na as f64;
                for (r, wr) in rs.iter().zip(&rw) {
                    let blend = tangential_blend(*r);
                    if blend <= 0.0 {
                        continue;
                    }
                    for ia in 0..na {
                        let ph = ia as f64 * dph + 0.5 * dph;
                        let dth = [r * ph.cos(), r * ph.sin()];
                        push_torus_normal(&mut out, th, dth, delta, spec.c_prime, r * wr * dph * blend, scale);
                    }
                }
            }
            let bfr = 0.42 * PI;
            let rects = [
                (-PI, PI, bfr, PI),
                (-PI, PI, -PI, -bfr),
                (-PI, -bfr, -bfr, bfr),
                (bfr, PI, -bfr, bfr),
            ];
            for (x0, x1, y0, y1) in rects {
                let nx = scale.count((((x1 - x0) / PI) * 8.0).ceil() as usize).max(3);
                let ny = scale.count((((y1 - y0) / PI) * 8.0).ceil() as usize).max(3);
                let (xs, xw) = gauss_legendre_ab(nx, x0, x1);
                let (ys, yw) = gauss_legendre_ab(ny, y0, y1);
                for (x, wx) in xs.iter().zip(&xw) {
                    for (y, wy) in ys.iter().zip(&yw) {
                        let r = (x * x + y * y).sqrt();
                        let blend = 1.0 - tangential_blend(r);
                        if blend <= 0.0 {
                            continue;
                        }
                        push_torus_normal_n(&mut out, th, [*x, *y], delta, spec.c_prime, wx * wy * blend, scale, true);
                    }
                }
            }
            out
        }
        Manifold::FlatRmInCn { m: 1, n, .. } => {
            let (lo, hi) = manifold.param_domain();
            let x0 = z[0].re;
            let mut out = Vec::new();
            let mut segments: Vec<(f64, f64)> = Vec::new();
            for (room, sgn) in [(hi[0] - x0, 1.0f64), (x0 - lo[0], -1.0f64)] {
                if room <= start {
                    continue;
                }
                let mut tb = graded_breaks(start, room, 1.4);
                if 2.4 * delta < room {
                    tb.push(2.4 * delta);
                }
                tb.sort_by(|a, b| a.partial_cmp(b).unwrap());
                tb.dedup_by(|a, b| (*a - *b).abs() < 1e-3 * delta);
                for win in tb.windows(2) {
                    let (a, b) = (x0 + sgn * win[0], x0 + sgn * win[1]);
                    segments.push((a.min(b), a.max(b)));
                }
            }
            for (a, b) in segments {
                if b <= a {
                    continue;
                }
                let (xs, xw) = gauss_legendre_ab(scale.count(3), a, b);
                for (x, wx) in xs.iter().zip(&xw) {
                    push_flat_normal(&mut out, *n, *x, delta, spec.c_prime, *wx, scale);
                }
            }
            out
        }
        _ => panic!("outer rule not implemented for this manifold kind"),
    }
}

fn tangential_blend(r: f64) -> f64 {
    let (s, _) = smoothstep5((r - 0.6 * PI) / (0.25 * PI));
    1.0 - s
}

/// Radial panels over [0, delta] aligned with the lambda cutoff band
/// [c' delta, 0.9 delta].
fn radial_panels(delta: f64, c_prime: f64) -> [(f64, f64); 3] {
    [
        (0.0, c_prime * delta),
        (c_prime * delta, 0.9 * delta),
        (0.9 * delta, delta),
    ]
}

/// Two-sided panels over [-delta, delta] aligned with the lambda band.
fn normal_panels(delta: f64, c_prime: f64) -> [(f64, f64); 5] {
    [
        (-delta, -0.9 * delta),
        (-0.9 * delta, -c_prime * delta),
        (-c_prime * delta, c_prime * delta),
        (c_prime * delta, 0.9 * delta),
        (0.9 * delta, delta),
    ]
}

fn push_torus_normal(
    out: &mut Vec<QNode>,
    th: [f64; 2],
    dth: [f64; 2],
    delta: f64,
    c_prime: f64,
    wt: f64,
    scale: QuadScale,
) {
    push_torus_normal_n(out, th, dth, delta, c_prime, wt, scale, false)
}

#[allow(clippy::too_many_arguments)]
fn push_torus_normal_n(
    out: &mut Vec<QNode>,
    th: [f64; 2],
    dth: [f64; 2],
    delta: f64,
    c_prime: f64,
    wt: f64,
    scale: QuadScale,
    coarse: bool,
) {
    let na = scale.count(if coarse { 4 } else { 6 });
    let dph = TAU / na as f64;
    for (plo, phi) in radial_panels(delta, c_prime) {
        let (rs, rw) = gauss_legendre_ab(scale.count(if coarse { 2 } else { 3 }), plo, phi);
        for (r, wr) in rs.iter().zip(&rw) {
            for ia in 0..na {
                let ph = ia as f64 * dph;
                let s1 = r * ph.cos();
                let s2 = r * ph.sin();
                out.push(QNode {
                    zeta: [
                    C64::from_polar(1.0 + s1, th[0] + dth[0]),
                    C64::from_polar(1.0 + s2, th[1] + dth[1]),
                ],
                    w: (1.0 + s1) * (1.0 + s2) * wt * r * wr * dph,
                });
            }
        }
    }
}

fn push_flat_normal(
    out: &mut Vec<QNode>,
    n: usize,
    x: f64,
    delta: f64,
    c_prime: f64,
    wt: f64,
    scale: QuadScale,
) {
    match n {
        1 => {
            for (slo, shi) in normal_panels(delta, c_prime) {
                let (ys, yw) = gauss_legendre_ab(scale.count(3), slo, shi);
                for (y, wy) in ys.iter().zip(&yw) {
                    out.push(QNode { zeta: [C64::new(x, *y), CZERO], w: wt * wy });
                }
            }
        }
        2 => {
            let (nc, na) = (scale.count(4), scale.count(6));
            let (cs, cw) = gauss_legendre_ab(nc, -1.0, 1.0);
            let dph = TAU / na as f64;
            for (plo, phi) in radial_panels(delta, c_prime) {
                let (rs, rw) = gauss_legendre_ab(scale.count(2), plo, phi);
                for (r, wr) in rs.iter().zip(&rw) {
                    for (c, wc) in cs.iter().zip(&cw) {
                        let st = (1.0 - c * c).max(0.0).sqrt();
                        for ia in 0..na {
                            let ph = ia as f64 * dph;
                            out.push(QNode {
                                zeta: [C64::new(x, r * c), C64::from_polar(r * st, ph)],
                                w: wt * r * r * wr * wc * dph,
                            });
                        }
                    }
                }
            }
        }
        _ => panic!("flat far rule for n <= 2"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The three zones together must tile the tube: the tensor-faded rule
    /// masses must sum to the tube volume.
    fn coverage(manifold: &Manifold, spec: &TubeSpec, z: &[C64]) -> f64 {
        let delta = spec.delta;
        let mut total = 0.0;
        for node in near_rule(manifold, spec, z, QuadScale(1.0)) {
            let (rho_t, t_n) = local_offsets(manifold, z, &node.zeta);
            total += near_weight(rho_t, t_n, spec) * node.w;
        }
        for node in mid_rule(manifold, spec, z, QuadScale(1.0)) {
            let (rho_t, t_n) = local_offsets(manifold, z, &node.zeta);
            total +=
                (1.0 - near_weight(rho_t, t_n, spec)) * tangential_handoff(rho_t, delta) * node.w;
        }
        for node in outer_rule(manifold, spec, z, QuadScale(1.0)) {
            let (rho_t, _) = local_offsets(manifold, z, &node.zeta);
            total += (1.0 - tangential_handoff(rho_t, delta)) * node.w;
        }
        total
    }

    #[test]
    fn circle_zones_tile_annulus() {
        let m = Manifold::CircleInC;
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let z = [C64::from_polar(1.02, 0.7)];
        let total = coverage(&m, &spec, &z);
        let area = 4.0 * PI * 0.1;
        assert!((total - area).abs() / area < 5e-3, "covered {total} of {area}");
    }

    #[test]
    fn torus_zones_tile_tube() {
        let m = Manifold::TorusInC2;
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let z = [C64::from_polar(1.01, 0.4), C64::from_polar(0.99, -1.2)];
        let total = coverage(&m, &spec, &z);
        let vol = TAU * TAU * PI * 0.1 * 0.1;
        assert!((total - vol).abs() / vol < 0.01, "covered {total} of {vol}");
    }

    #[test]
    fn flat2_zones_tile_tube() {
        let m = Manifold::FlatRmInCn { m: 1, n: 2, window: (0.0, 1.0), guard: 0.3 };
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let z = [C64::new(0.5, 0.01), C64::new(0.0, 0.0)];
        let total = coverage(&m, &spec, &z);
        let vol = 1.6 * 4.0 / 3.0 * PI * 0.1f64.powi(3);
        assert!((total - vol).abs() / vol < 0.01, "covered {total} of {vol}");
    }
}

//! Totally real submanifolds of C^n as analytic parametrized families, the
//! tubes around them, and the distance/retraction machinery the integral
//! kernels are built on. Tubes are realized as sublevel sets {rho < delta^2}
//! of the squared-distance function, which for the built-in kinds is known
//! in closed form together with its Wirtinger derivatives up to order three.

mod bump;
mod grid;
mod riesz;

pub use bump::{dbar_flat_bump, BumpFunction};
pub use grid::{eval_lattice, tube_grid, GridNode, TubeGrid};
pub use riesz::riesz_projector;

use crate::linalg::CMat;
use crate::{C64, Error, Result, I};
use serde::{Deserialize, Serialize};

/// A point of C^n stored with bidirectional complex/real views.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    z: Vec<C64>,
}

impl Point {
    pub fn new(z: Vec<C64>) -> Self {
        assert!(!z.is_empty());
        Point { z }
    }

    pub fn from_re_im(re: &[f64], im: &[f64]) -> Self {
        assert_eq!(re.len(), im.len());
        assert!(!re.is_empty());
        Point { z: re.iter().zip(im).map(|(&x, &y)| C64::new(x, y)).collect() }
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn coords(&self) -> &[C64] {
        &self.z
    }

    pub fn re_vec(&self) -> Vec<f64> {
        self.z.iter().map(|c| c.re).collect()
    }

    pub fn im_vec(&self) -> Vec<f64> {
        self.z.iter().map(|c| c.im).collect()
    }
}

/// Tube parameters: radius delta, shrink factor c, patch radius factor
/// c' (c < c' < 1), and the per-manifold admissible maximum delta0.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TubeSpec {
    pub delta: f64,
    pub c: f64,
    pub c_prime: f64,
    pub delta0: f64,
}

impl TubeSpec {
    pub fn new(delta: f64, c: f64, c_prime: f64, delta0: f64) -> Result<Self> {
        if !(0.0 < c && c < c_prime && c_prime < 1.0) {
            return Err(Error::ParameterOutOfRange(format!(
                "need 0 < c < c' < 1, got c = {c}, c' = {c_prime}"
            )));
        }
        if !(delta > 0.0 && delta <= delta0) {
            return Err(Error::ParameterOutOfRange(format!(
                "need 0 < delta <= delta0, got delta = {delta}, delta0 = {delta0}"
            )));
        }
        Ok(TubeSpec { delta, c, c_prime, delta0 })
    }

    pub fn with_defaults(delta: f64, manifold: &Manifold) -> Result<Self> {
        Self::new(delta, 0.5, 0.75, manifold.delta0())
    }

    /// Near/far split constant c0 = c' - c.
    pub fn c0(&self) -> f64 {
        self.c_prime - self.c
    }
}

/// Base kinds available for graph perturbations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseKind {
    Circle,
    FlatLine,
}

/// Built-in totally real submanifolds. All are analytic parametrized
/// families; the flat kind is a compact window in R^m x {0} subset C^n and
/// follows the compact-subset variant of the estimates (data live on the
/// guard-extended window, outputs on the inner window).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Manifold {
    /// Unit circle in C (m = n = 1).
    CircleInC,
    /// Product torus |z_1| = |z_2| = 1 in C^2 (m = n = 2).
    TorusInC2,
    /// Window of R^m x {0} in C^n, 1 <= m <= n. `window` is the inner
    /// window per axis; `guard` widens it for the data region.
    FlatRmInCn { m: usize, n: usize, window: (f64, f64), guard: f64 },
    /// Radial graph perturbation of a base kind with a fixed analytic
    /// perturbation profile of the given magnitude and angular mode.
    GraphPerturbation { base: BaseKind, magnitude: f64, mode: u32 },
}

/// Wirtinger derivatives of rho up to order three at a point. Third-order
/// tensors are stored per last index: `dzzz[l][(j,k)]` is
/// d^3 rho / dz_j dz_k dz_l and `dzzzbar[l][(j,k)]` is
/// d^3 rho / dz_j dz_k dzbar_l.
#[derive(Clone, Debug)]
pub struct RhoJet {
    pub v: f64,
    pub dz: Vec<C64>,
    pub dzz: CMat,
    pub dzzbar: CMat,
    pub dzzz: Vec<CMat>,
    pub dzzzbar: Vec<CMat>,
}

/// Fixed-size Wirtinger jet for the kernel hot path (n <= 2).
#[derive(Clone, Copy, Debug, Default)]
pub struct RhoJetF {
    pub v: f64,
    pub dz: [C64; 2],
    pub dzz: [[C64; 2]; 2],
    pub dzzbar: [[C64; 2]; 2],
    /// dzzz[l][j][k] = d^3 rho / dz_j dz_k dz_l
    pub dzzz: [[[C64; 2]; 2]; 2],
    pub dzzzbar: [[[C64; 2]; 2]; 2],
}

/// Per-factor jet of (|w| - 1)^2 on the punctured plane.
fn radial_rho_jet(w: C64) -> (f64, C64, C64, C64, C64, C64) {
    let r = w.norm();
    let wb = w.conj();
    let v = (r - 1.0) * (r - 1.0);
    let dz = wb * (1.0 - 1.0 / r);
    let dzz = wb * wb / (2.0 * r * r * r);
    let dzzbar = C64::new(1.0 - 1.0 / (2.0 * r), 0.0);
    let dzzz = -0.75 * wb * wb * wb / r.powi(5);
    let dzzzbar = wb / (4.0 * r * r * r);
    (v, dz, dzz, dzzbar, dzzz, dzzzbar)
}

impl Manifold {
    pub fn ambient_n(&self) -> usize {
        match self {
            Manifold::CircleInC => 1,
            Manifold::TorusInC2 => 2,
            Manifold::FlatRmInCn { n, .. } => *n,
            Manifold::GraphPerturbation { base, .. } => match base {
                BaseKind::Circle => 1,
                BaseKind::FlatLine => 1,
            },
        }
    }

    pub fn real_dim(&self) -> usize {
        match self {
            Manifold::CircleInC => 1,
            Manifold::TorusInC2 => 2,
            Manifold::FlatRmInCn { m, .. } => *m,
            Manifold::GraphPerturbation { .. } => 1,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Manifold::CircleInC => "circle",
            Manifold::TorusInC2 => "torus",
            Manifold::FlatRmInCn { .. } => "flat",
            Manifold::GraphPerturbation { .. } => "graph",
        }
    }

    /// Largest tube radius free of self-intersection and collar violations,
    /// fixed analytically per kind.
    pub fn delta0(&self) -> f64 {
        match self {
            Manifold::CircleInC => 0.5,
            Manifold::TorusInC2 => 0.45,
            Manifold::FlatRmInCn { .. } => 1.0,
            Manifold::GraphPerturbation { magnitude, .. } => 0.3 * (1.0 - 2.0 * magnitude).max(0.1),
        }
    }

    /// True when rho and its jets are available in closed form (the kinds
    /// the kernel construction supports).
    pub fn has_analytic_rho(&self) -> bool {
        !matches!(self, Manifold::GraphPerturbation { .. })
    }

    /// Whether parameters are periodic per axis.
    pub fn periodic(&self) -> Vec<bool> {
        match self {
            Manifold::CircleInC => vec![true],
            Manifold::TorusInC2 => vec![true, true],
            Manifold::FlatRmInCn { m, .. } => vec![false; *m],
            Manifold::GraphPerturbation { base, .. } => vec![matches!(base, BaseKind::Circle)],
        }
    }

    /// Canonical parameter domain (per axis lo/hi). For flat kinds this is
    /// the guard-extended data window.
    pub fn param_domain(&self) -> (Vec<f64>, Vec<f64>) {
        use std::f64::consts::TAU;
        match self {
            Manifold::CircleInC => (vec![0.0], vec![TAU]),
            Manifold::TorusInC2 => (vec![0.0, 0.0], vec![TAU, TAU]),
            Manifold::FlatRmInCn { m, window, guard, .. } => (
                vec![window.0 - guard; *m],
                vec![window.1 + guard; *m],
            ),
            Manifold::GraphPerturbation { base, .. } => match base {
                BaseKind::Circle => (vec![0.0], vec![TAU]),
                BaseKind::FlatLine => (vec![-0.2], vec![1.2]),
            },
        }
    }

    /// Inner parameter window (estimates are measured over tubes around it).
    pub fn inner_domain(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Manifold::FlatRmInCn { m, window, .. } => (vec![window.0; *m], vec![window.1; *m]),
            Manifold::GraphPerturbation { base: BaseKind::FlatLine, .. } => (vec![0.0], vec![1.0]),
            _ => self.param_domain(),
        }
    }

    /// Chart map into C^n.
    pub fn phi(&self, s: &[f64]) -> Vec<C64> {
        match self {
            Manifold::CircleInC => vec![C64::from_polar(1.0, s[0])],
            Manifold::TorusInC2 => {
                vec![C64::from_polar(1.0, s[0]), C64::from_polar(1.0, s[1])]
            }
            Manifold::FlatRmInCn { m, n, .. } => {
                let mut z = vec![C64::new(0.0, 0.0); *n];
                for j in 0..*m {
                    z[j] = C64::new(s[j], 0.0);
                }
                z
            }
            Manifold::GraphPerturbation { base, magnitude, mode } => {
                let eps = *magnitude;
                let k = f64::from(*mode);
                match base {
                    BaseKind::Circle => {
                        let r = 1.0 + eps * (k * s[0]).cos();
                        vec![C64::from_polar(r, s[0])]
                    }
                    BaseKind::FlatLine => {
                        vec![C64::new(s[0], eps * (k * s[0]).sin())]
                    }
                }
            }
        }
    }

    /// Tangent vectors d phi / d s_i.
    pub fn dphi(&self, s: &[f64]) -> Vec<Vec<C64>> {
        match self {
            Manifold::CircleInC => vec![vec![I * C64::from_polar(1.0, s[0])]],
            Manifold::TorusInC2 => vec![
                vec![I * C64::from_polar(1.0, s[0]), C64::new(0.0, 0.0)],
                vec![C64::new(0.0, 0.0), I * C64::from_polar(1.0, s[1])],
            ],
            Manifold::FlatRmInCn { m, n, .. } => {
                let mut out = Vec::with_capacity(*m);
                for i in 0..*m {
                    let mut v = vec![C64::new(0.0, 0.0); *n];
                    v[i] = C64::new(1.0, 0.0);
                    out.push(v);
                }
                out
            }
            Manifold::GraphPerturbation { base, magnitude, mode } => {
                let eps = *magnitude;
                let k = f64::from(*mode);
                match base {
                    BaseKind::Circle => {
                        let r = 1.0 + eps * (k * s[0]).cos();
                        let dr = -eps * k * (k * s[0]).sin();
                        let e = C64::from_polar(1.0, s[0]);
                        vec![vec![(C64::new(dr, 0.0) + I * r) * e]]
                    }
                    BaseKind::FlatLine => {
                        vec![vec![C64::new(1.0, eps * k * (k * s[0]).cos())]]
                    }
                }
            }
        }
    }

    /// Squared distance to the manifold in closed form where available,
    /// else via Newton-refined distance.
    pub fn rho(&self, z: &[C64]) -> f64 {
        match self {
            Manifold::CircleInC => {
                let d = z[0].norm() - 1.0;
                d * d
            }
            Manifold::TorusInC2 => {
                let d1 = z[0].norm() - 1.0;
                let d2 = z[1].norm() - 1.0;
                d1 * d1 + d2 * d2
            }
            Manifold::FlatRmInCn { m, n, .. } => {
                let mut s = 0.0;
                for j in 0..*n {
                    if j < *m {
                        s += z[j].im * z[j].im;
                    } else {
                        s += z[j].norm_sqr();
                    }
                }
                s
            }
            Manifold::GraphPerturbation { .. } => {
                let (d, _) = self.distance(z).map(|x| x).unwrap_or((f64::NAN, vec![]));
                d * d
            }
        }
    }

    /// Allocation-free gradient of rho: writes d rho / d z_j into `out`
    /// and returns the value.
    pub fn rho_grad(&self, z: &[C64], out: &mut [C64; 2]) -> f64 {
        out[0] = C64::new(0.0, 0.0);
        out[1] = C64::new(0.0, 0.0);
        match self {
            Manifold::CircleInC | Manifold::TorusInC2 => {
                let mut v = 0.0;
                for (j, w) in z.iter().enumerate() {
                    let r = w.norm();
                    v += (r - 1.0) * (r - 1.0);
                    out[j] = w.conj() * (1.0 - 1.0 / r);
                }
                v
            }
            Manifold::FlatRmInCn { m, n, .. } => {
                let mut v = 0.0;
                for j in 0..*n {
                    if j < *m {
                        let y = z[j].im;
                        v += y * y;
                        out[j] = C64::new(0.0, -y);
                    } else {
                        v += z[j].norm_sqr();
                        out[j] = z[j].conj();
                    }
                }
                v
            }
            Manifold::GraphPerturbation { .. } => f64::NAN,
        }
    }

    /// Fixed-size Wirtinger jet of rho for the kernel hot path.
    pub fn rho_jet_fixed(&self, z: &[C64]) -> Result<RhoJetF> {
        let n = self.ambient_n();
        let mut jet = RhoJetF::default();
        match self {
            Manifold::CircleInC | Manifold::TorusInC2 => {
                for j in 0..n {
                    let (v, dz, dzz, dzzbar, dzzz, dzzzbar) = radial_rho_jet(z[j]);
                    jet.v += v;
                    jet.dz[j] = dz;
                    jet.dzz[j][j] = dzz;
                    jet.dzzbar[j][j] = dzzbar;
                    jet.dzzz[j][j][j] = dzzz;
                    jet.dzzzbar[j][j][j] = dzzzbar;
                }
                Ok(jet)
            }
            Manifold::FlatRmInCn { m, .. } => {
                for j in 0..n {
                    if j < *m {
                        let y = z[j].im;
                        jet.v += y * y;
                        jet.dz[j] = C64::new(0.0, -y);
                        jet.dzz[j][j] = C64::new(-0.5, 0.0);
                        jet.dzzbar[j][j] = C64::new(0.5, 0.0);
                    } else {
                        jet.v += z[j].norm_sqr();
                        jet.dz[j] = z[j].conj();
                        jet.dzzbar[j][j] = C64::new(1.0, 0.0);
                    }
                }
                Ok(jet)
            }
            Manifold::GraphPerturbation { .. } => Err(Error::UnsupportedManifold(
                "graph perturbations have no analytic rho jet".into(),
            )),
        }
    }

    /// Closed-form Wirtinger jet of rho (analytic kinds only).
    pub fn rho_jet(&self, z: &[C64]) -> Result<RhoJet> {
        let n = self.ambient_n();
        let mut jet = RhoJet {
            v: 0.0,
            dz: vec![C64::new(0.0, 0.0); n],
            dzz: CMat::zeros(n, n),
            dzzbar: CMat::zeros(n, n),
            dzzz: (0..n).map(|_| CMat::zeros(n, n)).collect(),
            dzzzbar: (0..n).map(|_| CMat::zeros(n, n)).collect(),
        };
        match self {
            Manifold::CircleInC | Manifold::TorusInC2 => {
                for j in 0..n {
                    let (v, dz, dzz, dzzbar, dzzz, dzzzbar) = radial_rho_jet(z[j]);
                    jet.v += v;
                    jet.dz[j] = dz;
                    jet.dzz[(j, j)] = dzz;
                    jet.dzzbar[(j, j)] = dzzbar;
                    jet.dzzz[j][(j, j)] = dzzz;
                    jet.dzzzbar[j][(j, j)] = dzzzbar;
                }
                Ok(jet)
            }
            Manifold::FlatRmInCn { m, .. } => {
                for j in 0..n {
                    if j < *m {
                        // rho_j = y_j^2
                        let y = z[j].im;
                        jet.v += y * y;
                        jet.dz[j] = C64::new(0.0, -y);
                        jet.dzz[(j, j)] = C64::new(-0.5, 0.0);
                        jet.dzzbar[(j, j)] = C64::new(0.5, 0.0);
                    } else {
                        // rho_j = |z_j|^2
                        jet.v += z[j].norm_sqr();
                        jet.dz[j] = z[j].conj();
                        jet.dzzbar[(j, j)] = C64::new(1.0, 0.0);
                    }
                }
                Ok(jet)
            }
            Manifold::GraphPerturbation { .. } => {
                Err(Error::UnsupportedManifold("graph perturbations have no analytic rho jet".into()))
            }
        }
    }

    /// Euclidean distance to M and the foot parameter. Closed form for the
    /// analytic kinds; coarse sampling plus Newton refinement otherwise.
    pub fn distance(&self, z: &[C64]) -> Result<(f64, Vec<f64>)> {
        match self {
            Manifold::CircleInC => {
                let r = z[0].norm();
                Ok(((r - 1.0).abs(), vec![wrap_angle(z[0].arg())]))
            }
            Manifold::TorusInC2 => {
                let d1 = z[0].norm() - 1.0;
                let d2 = z[1].norm() - 1.0;
                Ok(((d1 * d1 + d2 * d2).sqrt(), vec![wrap_angle(z[0].arg()), wrap_angle(z[1].arg())]))
            }
            Manifold::FlatRmInCn { m, n, .. } => {
                let mut s = 0.0;
                for j in 0..*n {
                    if j < *m {
                        s += z[j].im * z[j].im;
                    } else {
                        s += z[j].norm_sqr();
                    }
                }
                Ok((s.sqrt(), (0..*m).map(|j| z[j].re).collect()))
            }
            Manifold::GraphPerturbation { .. } => self.distance_newton(z),
        }
    }

    /// Generic distance: best of 256 coarse samples per axis-block, refined
    /// by Newton on the stationarity equation of |phi(s) - z|^2.
    pub fn distance_newton(&self, z: &[C64]) -> Result<(f64, Vec<f64>)> {
        let m = self.real_dim();
        let (lo, hi) = self.param_domain();
        let coarse = 256usize;
        let mut best_s = vec![0.0; m];
        let mut best_d2 = f64::INFINITY;
        // coarse scan (product grid for m = 2 uses 16 x 16)
        let per_axis = if m == 1 { coarse } else { 16 };
        let mut idx = vec![0usize; m];
        loop {
            let s: Vec<f64> = (0..m)
                .map(|i| lo[i] + (hi[i] - lo[i]) * (idx[i] as f64 + 0.5) / per_axis as f64)
                .collect();
            let p = self.phi(&s);
            let d2: f64 = p.iter().zip(z).map(|(a, b)| (a - b).norm_sqr()).sum();
            if d2 < best_d2 {
                best_d2 = d2;
                best_s = s;
            }
            let mut k = 0;
            while k < m {
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == m {
                break;
            }
        }
        // Newton on grad_s |phi(s) - z|^2 = 0
        let mut s = best_s;
        let h = 1e-6;
        for _ in 0..50 {
            let grad = |s: &[f64]| -> Vec<f64> {
                let p = self.phi(s);
                let dp = self.dphi(s);
                (0..m)
                    .map(|i| {
                        2.0 * p
                            .iter()
                            .zip(z)
                            .zip(&dp[i])
                            .map(|((a, b), t)| {
                                let diff = a - b;
                                diff.re * t.re + diff.im * t.im
                            })
                            .sum::<f64>()
                    })
                    .collect()
            };
            let g = grad(&s);
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn < 1e-12 {
                break;
            }
            // numeric Hessian of the squared distance
            let mut hess = vec![vec![0.0; m]; m];
            for i in 0..m {
                let mut sp = s.clone();
                sp[i] += h;
                let gp = grad(&sp);
                sp[i] -= 2.0 * h;
                let gm = grad(&sp);
                for j in 0..m {
                    hess[j][i] = (gp[j] - gm[j]) / (2.0 * h);
                }
            }
            let step = solve_real(&hess, &g);
            match step {
                Some(st) => {
                    for i in 0..m {
                        s[i] -= st[i];
                    }
                }
                None => {
                    for i in 0..m {
                        s[i] -= 0.1 * g[i];
                    }
                }
            }
        }
        let p = self.phi(&s);
        let d2: f64 = p.iter().zip(z).map(|(a, b)| (a - b).norm_sqr()).sum();
        // stationarity residual check
        let dp = self.dphi(&s);
        let res: f64 = (0..m)
            .map(|i| {
                2.0 * p
                    .iter()
                    .zip(z)
                    .zip(&dp[i])
                    .map(|((a, b), t)| {
                        let diff = a - b;
                        diff.re * t.re + diff.im * t.im
                    })
                    .sum::<f64>()
                    .abs()
            })
            .sum();
        if res > 1e-7 * (1.0 + d2) {
            return Err(Error::NoConvergence { residual: res });
        }
        Ok((d2.sqrt(), s))
    }

    /// Fiber-scaling retraction: t = 1 is the identity, t = 0 lands on M.
    pub fn retraction(&self, t: f64, z: &[C64]) -> Result<Vec<C64>> {
        self.check_in_tube(z)?;
        match self {
            Manifold::CircleInC => Ok(vec![circle_retract(t, z[0])]),
            Manifold::TorusInC2 => Ok(vec![circle_retract(t, z[0]), circle_retract(t, z[1])]),
            Manifold::FlatRmInCn { m, .. } => {
                let mut out = z.to_vec();
                for (j, w) in out.iter_mut().enumerate() {
                    if j < *m {
                        *w = C64::new(w.re, t * w.im);
                    } else {
                        *w *= t;
                    }
                }
                Ok(out)
            }
            Manifold::GraphPerturbation { .. } => {
                let (_, s) = self.distance(z)?;
                let p = self.phi(&s);
                Ok(z.iter().zip(&p).map(|(zi, pi)| pi + (zi - pi) * t).collect())
            }
        }
    }

    /// Holomorphic/antiholomorphic Wirtinger Jacobians of z -> F(t, z) and
    /// the time derivative dF/dt, for the homotopy operator.
    pub fn retraction_jet(&self, t: f64, z: &[C64]) -> Result<(CMat, CMat, Vec<C64>)> {
        let n = self.ambient_n();
        match self {
            Manifold::CircleInC | Manifold::TorusInC2 => {
                let mut jh = CMat::zeros(n, n);
                let mut ja = CMat::zeros(n, n);
                let mut dt = vec![C64::new(0.0, 0.0); n];
                for j in 0..n {
                    let w = z[j];
                    let r = w.norm();
                    jh[(j, j)] = C64::new(t + (1.0 - t) / (2.0 * r), 0.0);
                    ja[(j, j)] = -w * w * (1.0 - t) / (2.0 * r * r * r);
                    dt[j] = w * (r - 1.0) / r;
                }
                Ok((jh, ja, dt))
            }
            Manifold::FlatRmInCn { m, .. } => {
                let mut jh = CMat::zeros(n, n);
                let mut ja = CMat::zeros(n, n);
                let mut dt = vec![C64::new(0.0, 0.0); n];
                for j in 0..n {
                    if j < *m {
                        jh[(j, j)] = C64::new((1.0 + t) / 2.0, 0.0);
                        ja[(j, j)] = C64::new((1.0 - t) / 2.0, 0.0);
                        dt[j] = C64::new(0.0, z[j].im);
                    } else {
                        jh[(j, j)] = C64::new(t, 0.0);
                        dt[j] = z[j];
                    }
                }
                Ok((jh, ja, dt))
            }
            Manifold::GraphPerturbation { .. } => {
                // finite differences on the retraction
                let h = 1e-6;
                let mut jh = CMat::zeros(n, n);
                let mut ja = CMat::zeros(n, n);
                let base = self.retraction(t, z)?;
                for k in 0..n {
                    let mut zp = z.to_vec();
                    zp[k] = z[k] + C64::new(h, 0.0);
                    let fxp = self.retraction(t, &zp)?;
                    zp[k] = z[k] - C64::new(h, 0.0);
                    let fxm = self.retraction(t, &zp)?;
                    zp[k] = z[k] + C64::new(0.0, h);
                    let fyp = self.retraction(t, &zp)?;
                    zp[k] = z[k] - C64::new(0.0, h);
                    let fym = self.retraction(t, &zp)?;
                    for i in 0..n {
                        let dx = (fxp[i] - fxm[i]) / (2.0 * h);
                        let dy = (fyp[i] - fym[i]) / (2.0 * h);
                        jh[(i, k)] = (dx - I * dy) * 0.5;
                        ja[(i, k)] = (dx + I * dy) * 0.5;
                    }
                }
                let ht = 1e-6;
                let fp = self.retraction((t + ht).min(1.0), z)?;
                let fm = self.retraction((t - ht).max(0.0), z)?;
                let span = (t + ht).min(1.0) - (t - ht).max(0.0);
                let dt = fp.iter().zip(&fm).map(|(a, b)| (a - b) / span).collect();
                let _ = base;
                Ok((jh, ja, dt))
            }
        }
    }

    fn check_in_tube(&self, z: &[C64]) -> Result<()> {
        let d = self.rho(z).sqrt();
        let lim = self.delta0();
        if d > lim {
            return Err(Error::OutOfTube { d, limit: lim });
        }
        Ok(())
    }

    /// Orthogonal complex normal frame at parameter s: n - m vectors
    /// spanning a complement of the complexified tangent space.
    pub fn normal_frame(&self, s: &[f64]) -> Vec<Vec<C64>> {
        let n = self.ambient_n();
        let m = self.real_dim();
        if n == m {
            return Vec::new();
        }
        match self {
            Manifold::FlatRmInCn { .. } => {
                let mut out = Vec::new();
                for j in m..n {
                    let mut v = vec![C64::new(0.0, 0.0); n];
                    v[j] = C64::new(1.0, 0.0);
                    out.push(v);
                }
                out
            }
            _ => {
                // Gram-Schmidt complement of the complexified tangent frame.
                let dp = self.dphi(s);
                let mut basis: Vec<Vec<C64>> = dp;
                let mut out = Vec::new();
                'cand: for j in 0..n {
                    let mut v = vec![C64::new(0.0, 0.0); n];
                    v[j] = C64::new(1.0, 0.0);
                    for b in basis.iter().chain(out.iter()) {
                        let bn: f64 = b.iter().map(|x| x.norm_sqr()).sum();
                        let ip: C64 = b.iter().zip(&v).map(|(a, c)| a.conj() * c).sum();
                        for (vi, bi) in v.iter_mut().zip(b) {
                            *vi -= ip / bn * bi;
                        }
                    }
                    let nv: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                    if nv < 1e-8 {
                        continue 'cand;
                    }
                    for vi in v.iter_mut() {
                        *vi /= nv;
                    }
                    out.push(v);
                    if out.len() == n - m {
                        break;
                    }
                }
                basis.clear();
                out
            }
        }
    }

    /// Totally real test at a parameter: smallest singular value of the
    /// complexified tangent frame matrix (columns d phi / d s_i in C^n).
    pub fn totally_real_margin(&self, s: &[f64]) -> f64 {
        let dp = self.dphi(s);
        let n = self.ambient_n();
        let m = self.real_dim();
        let mut mat = CMat::zeros(n, m);
        for (i, col) in dp.iter().enumerate() {
            for (j, v) in col.iter().enumerate() {
                mat[(j, i)] = *v;
            }
        }
        mat.smallest_singular_value()
    }

    /// An in-tube path from z0 to z1 (parameter interpolation with shortest
    /// angular wrap plus linear normal interpolation); returns its length.
    pub fn in_tube_path_length(&self, z0: &[C64], z1: &[C64], steps: usize) -> Result<f64> {
        let (_, s0) = self.distance(z0)?;
        let (_, s1) = self.distance(z1)?;
        let periodic = self.periodic();
        let m = self.real_dim();
        let mut ds = vec![0.0; m];
        for i in 0..m {
            let mut d = s1[i] - s0[i];
            if periodic[i] {
                d = wrap_angle(d + std::f64::consts::PI) - std::f64::consts::PI;
                if d <= -std::f64::consts::PI {
                    d += std::f64::consts::TAU;
                }
            }
            ds[i] = d;
        }
        // normal offsets at the ends
        let p0 = self.phi(&s0);
        let p1 = self.phi(&s1);
        let off0: Vec<C64> = z0.iter().zip(&p0).map(|(a, b)| a - b).collect();
        let off1: Vec<C64> = z1.iter().zip(&p1).map(|(a, b)| a - b).collect();
        let mut len = 0.0;
        let mut prev: Option<Vec<C64>> = None;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let s: Vec<f64> = (0..m).map(|i| s0[i] + t * ds[i]).collect();
            let p = self.phi(&s);
            // transport the normal offset by the local rotation for circle factors
            let pt: Vec<C64> = match self {
                Manifold::CircleInC | Manifold::TorusInC2 => p
                    .iter()
                    .enumerate()
                    .map(|(j, pj)| {
                        let r0 = off0[j].norm() * pj.norm();
                        let _ = r0;
                        let rad0 = z0[j].norm() - 1.0;
                        let rad1 = z1[j].norm() - 1.0;
                        let rad = rad0 + t * (rad1 - rad0);
                        pj * (1.0 + rad)
                    })
                    .collect(),
                _ => p
                    .iter()
                    .enumerate()
                    .map(|(j, pj)| pj + off0[j] + (off1[j] - off0[j]) * t)
                    .collect(),
            };
            if let Some(q) = prev {
                len += q.iter().zip(&pt).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            }
            prev = Some(pt);
        }
        Ok(len)
    }
}

fn circle_retract(t: f64, w: C64) -> C64 {
    let r = w.norm();
    w * ((t * r + (1.0 - t)) / r)
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut x = a % std::f64::consts::TAU;
    if x < 0.0 {
        x += std::f64::consts::TAU;
    }
    x
}

fn solve_real(h: &[Vec<f64>], g: &[f64]) -> Option<Vec<f64>> {
    let m = g.len();
    let mut a = CMat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            a[(i, j)] = C64::new(h[i][j], 0.0);
        }
    }
    let b: Vec<C64> = g.iter().map(|&v| C64::new(v, 0.0)).collect();
    a.solve(&b).ok().map(|x| x.iter().map(|c| c.re).collect())
}

/// Quintic smoothstep: 0 for x <= 0, 1 for x >= 1, two continuous
/// derivatives. Returns (value, derivative).
pub fn smoothstep5(x: f64) -> (f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0)
    } else {
        let x2 = x * x;
        let x3 = x2 * x;
        (
            x3 * (10.0 - 15.0 * x + 6.0 * x2),
            30.0 * x2 * (1.0 - 2.0 * x + x2),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn point_views_roundtrip() {
        let p = Point::from_re_im(&[1.0, -0.5], &[0.25, 2.0]);
        let q = Point::from_re_im(&p.re_vec(), &p.im_vec());
        assert_eq!(p, q);
    }

    #[test]
    fn circle_distance_and_rho() {
        let m = Manifold::CircleInC;
        let (d, foot) = m.distance(&[C64::new(1.5, 0.0)]).unwrap();
        assert_abs_diff_eq!(d, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(foot[0], 0.0, epsilon = 1e-14);
        let delta = 0.125;
        assert_abs_diff_eq!(m.rho(&[C64::new(1.0 + delta, 0.0)]), delta * delta, epsilon = 1e-14);
    }

    #[test]
    fn flat_distance_is_transverse() {
        let m = Manifold::FlatRmInCn { m: 1, n: 1, window: (0.0, 1.0), guard: 0.2 };
        let (d, foot) = m.distance(&[C64::new(0.3, -0.2)]).unwrap();
        assert_abs_diff_eq!(d, 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(foot[0], 0.3, epsilon = 1e-14);
    }

    #[test]
    fn torus_distance_per_factor() {
        let m = Manifold::TorusInC2;
        let z = [
            C64::new(1.1, 0.0),
            C64::from_polar(0.95, std::f64::consts::FRAC_PI_4),
        ];
        let (d, _) = m.distance(&z).unwrap();
        assert_abs_diff_eq!(d, (0.1f64 * 0.1 + 0.05 * 0.05).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn distance_newton_matches_closed_form_on_circle() {
        let m = Manifold::CircleInC;
        let z = [C64::new(0.8, 0.7)];
        let (dc, fc) = m.distance(&z).unwrap();
        let (dn, fn_) = m.distance_newton(&z).unwrap();
        assert_abs_diff_eq!(dc, dn, epsilon = 1e-10);
        let diff = (fc[0] - fn_[0]).abs();
        let diff = diff.min((diff - std::f64::consts::TAU).abs());
        assert!(diff < 1e-8, "foot mismatch {diff}");
    }

    #[test]
    fn retraction_endpoints() {
        let m = Manifold::CircleInC;
        let z = [C64::new(1.2, 0.0)];
        let r1 = m.retraction(1.0, &z).unwrap();
        assert_abs_diff_eq!((r1[0] - z[0]).norm(), 0.0, epsilon = 1e-15);
        let r0 = m.retraction(0.0, &z).unwrap();
        assert_abs_diff_eq!(r0[0].re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r0[0].im, 0.0, epsilon = 1e-14);
        // idempotency of the t = 0 projection
        let rr = m.retraction(0.0, &r0).unwrap();
        assert_abs_diff_eq!((rr[0] - r0[0]).norm(), 0.0, epsilon = 1e-14);

        let mf = Manifold::FlatRmInCn { m: 1, n: 1, window: (0.0, 1.0), guard: 0.2 };
        let rf = mf.retraction(0.5, &[C64::new(0.4, 0.3)]).unwrap();
        assert_abs_diff_eq!(rf[0].re, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(rf[0].im, 0.15, epsilon = 1e-15);
    }

    #[test]
    fn rho_jet_matches_finite_differences_on_circle() {
        let m = Manifold::CircleInC;
        let z = [C64::new(1.07, 0.21)];
        let jet = m.rho_jet(&z).unwrap();
        let h = 1e-5;
        let f = |w: C64| {
            let d = w.norm() - 1.0;
            d * d
        };
        let fx = (f(z[0] + h) - f(z[0] - h)) / (2.0 * h);
        let fy = (f(z[0] + C64::new(0.0, h)) - f(z[0] - C64::new(0.0, h))) / (2.0 * h);
        let dz = C64::new(fx, -fy) * 0.5;
        assert_abs_diff_eq!(jet.dz[0].re, dz.re, epsilon = 1e-8);
        assert_abs_diff_eq!(jet.dz[0].im, dz.im, epsilon = 1e-8);
        // Levi form of the flat kind is 1/2 on the diagonal
        let mf = Manifold::FlatRmInCn { m: 1, n: 2, window: (0.0, 1.0), guard: 0.2 };
        let jf = mf.rho_jet(&[C64::new(0.3, 0.05), C64::new(0.01, -0.02)]).unwrap();
        assert_abs_diff_eq!(jf.dzzbar[(0, 0)].re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(jf.dzzbar[(1, 1)].re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn totally_real_margin_positive() {
        for m in [
            Manifold::CircleInC,
            Manifold::TorusInC2,
            Manifold::FlatRmInCn { m: 1, n: 2, window: (0.0, 1.0), guard: 0.2 },
            Manifold::GraphPerturbation { base: BaseKind::Circle, magnitude: 0.05, mode: 3 },
        ] {
            let (lo, hi) = m.param_domain();
            for k in 0..40 {
                let s: Vec<f64> = lo
                    .iter()
                    .zip(&hi)
                    .map(|(&a, &b)| a + (b - a) * ((k * 37 % 101) as f64 / 101.0))
                    .collect();
                assert!(m.totally_real_margin(&s) > 1e-3, "{} at {s:?}", m.kind_name());
            }
        }
    }

    #[test]
    fn path_property_bounded() {
        let m = Manifold::CircleInC;
        let z0 = [C64::from_polar(1.05, 0.3)];
        let z1 = [C64::from_polar(0.97, 2.4)];
        let len = m.in_tube_path_length(&z0, &z1, 200).unwrap();
        let chord = (z0[0] - z1[0]).norm();
        assert!(len <= 2.0 * chord, "len {len} vs chord {chord}");
    }
}

//! dbar-flat partitions of unity subordinate to a chart cover: partition
//! bumps on the manifold extended into the tube by Taylor jets in the
//! flattening coordinates, so that every dbar-derivative up to the jet
//! order vanishes on M. Because jets are linear and the on-manifold bumps
//! sum to one, the extended family sums to one exactly on a neighborhood.

use super::{Manifold, TubeSpec};
use crate::{C64, Error, Result};
use std::f64::consts::TAU;

/// One member of the partition: evaluates on tube points.
#[derive(Clone)]
pub struct BumpFunction {
    manifold: Manifold,
    /// Arc center and half-widths (full support / plateau) in the angle or
    /// chart coordinate.
    center: f64,
    plateau: f64,
    support: f64,
    /// Jet order of the dbar-flat extension.
    pub order: usize,
    /// Trivial member (identically one).
    pub trivial: bool,
}

impl BumpFunction {
    pub fn eval(&self, z: &[C64]) -> f64 {
        if self.trivial {
            return 1.0;
        }
        // jet of b along the flattening coordinate w = -i log z (circle) or
        // w = z (flat line): B = sum_j b^(j)(u) (i v)^j / j!
        let (u, v) = self.flatten(z);
        let mut acc = C64::new(0.0, 0.0);
        let iv = C64::new(0.0, v);
        let mut pw = C64::new(1.0, 0.0);
        let mut fact = 1.0;
        for j in 0..=self.order {
            if j > 0 {
                pw *= iv;
                fact *= j as f64;
            }
            acc += self.bump_deriv(u, j) * pw / fact;
        }
        acc.re
    }

    /// |dbar of the extension| at z (the imaginary part of the jet defect).
    pub fn dbar_norm(&self, z: &[C64]) -> f64 {
        if self.trivial {
            return 0.0;
        }
        let (u, v) = self.flatten(z);
        // dbar_w B = (1/2) b^(J+1)(u) (iv)^J / J!  and |dw/dz| = O(1)
        let mut fact = 1.0;
        for j in 1..=self.order {
            fact *= j as f64;
        }
        let lead = self.bump_deriv(u, self.order + 1).abs() * v.abs().powi(self.order as i32)
            / (2.0 * fact);
        match self.manifold {
            Manifold::CircleInC => lead / z[0].norm(),
            _ => lead,
        }
    }

    fn flatten(&self, z: &[C64]) -> (f64, f64) {
        match &self.manifold {
            Manifold::CircleInC => (z[0].arg(), -z[0].norm().ln()),
            Manifold::FlatRmInCn { .. } => (z[0].re, z[0].im),
            _ => (z[0].arg(), -z[0].norm().ln()),
        }
    }

    /// j-th derivative of the on-manifold bump profile at u.
    fn bump_deriv(&self, u: f64, j: usize) -> f64 {
        // periodic distance to the arc center
        let mut d = u - self.center;
        if matches!(self.manifold, Manifold::CircleInC) {
            while d > std::f64::consts::PI {
                d -= TAU;
            }
            while d < -std::f64::consts::PI {
                d += TAU;
            }
        }
        let x = d.abs();
        if x <= self.plateau {
            return if j == 0 { 1.0 } else { 0.0 };
        }
        if x >= self.support {
            return 0.0;
        }
        let t = (x - self.plateau) / (self.support - self.plateau);
        let sgn = if d >= 0.0 { 1.0 } else { -1.0 };
        let scale = 1.0 / (self.support - self.plateau);
        let (v, d1, d2, d3) = smoothstep7(t);
        match j {
            0 => 1.0 - v,
            1 => -d1 * scale * sgn,
            2 => -d2 * scale * scale,
            3 => -d3 * scale * scale * scale * sgn,
            _ => 0.0,
        }
    }
}

/// Order-7 smoothstep with three vanishing derivatives at both ends.
/// Returns (value, first, second, third derivative).
fn smoothstep7(x: f64) -> (f64, f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0, 0.0, 0.0);
    }
    let x2 = x * x;
    let x3 = x2 * x;
    let x4 = x3 * x;
    let x5 = x4 * x;
    let x6 = x5 * x;
    let x7 = x6 * x;
    let v = 35.0 * x4 - 84.0 * x5 + 70.0 * x6 - 20.0 * x7;
    let d1 = 140.0 * x3 - 420.0 * x4 + 420.0 * x5 - 140.0 * x6;
    let d2 = 420.0 * x2 - 1680.0 * x3 + 2100.0 * x4 - 840.0 * x5;
    let d3 = 840.0 * x - 5040.0 * x2 + 8400.0 * x3 - 4200.0 * x4;
    (v, d1, d2, d3)
}

/// Build a dbar-flat partition of unity for the standard chart cover of the
/// manifold: two overlapping arcs for the circle, one trivial chart for the
/// other built-ins. The jet order defaults to the smoothness order k.
pub fn dbar_flat_bump(
    manifold: &Manifold,
    spec: &TubeSpec,
    order: usize,
) -> Result<Vec<BumpFunction>> {
    match manifold {
        Manifold::CircleInC => {
            let plateau = 0.4 * std::f64::consts::PI;
            let support = 0.6 * std::f64::consts::PI;
            let b1 = BumpFunction {
                manifold: manifold.clone(),
                center: 0.0,
                plateau,
                support,
                order,
                trivial: false,
            };
            let b2 = BumpFunction {
                manifold: manifold.clone(),
                center: std::f64::consts::PI,
                plateau,
                support,
                order,
                trivial: false,
            };
            // cover check on tube samples: supports must reach every node
            let grid = super::tube_grid(manifold, spec, (64, 4))?;
            for node in &grid.nodes {
                let s = b1.eval(&node.z) + b2.eval(&node.z);
                if s < 1e-6 {
                    return Err(Error::CoverGap { d: node.d_m });
                }
            }
            Ok(vec![b1, b2])
        }
        _ => Ok(vec![BumpFunction {
            manifold: manifold.clone(),
            center: 0.0,
            plateau: 0.0,
            support: 0.0,
            order,
            trivial: true,
        }]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{tube_grid, Manifold, TubeSpec};

    #[test]
    fn partition_sums_to_one_on_tube() {
        let m = Manifold::CircleInC;
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let bumps = dbar_flat_bump(&m, &spec, 2).unwrap();
        let grid = tube_grid(&m, &spec, (80, 6)).unwrap();
        for node in &grid.nodes {
            let s: f64 = bumps.iter().map(|b| b.eval(&node.z)).sum();
            assert!((s - 1.0).abs() < 1e-12, "sum {s} at {:?}", node.z);
        }
    }

    #[test]
    fn overlap_midpoint_sums_to_one() {
        let m = Manifold::CircleInC;
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let bumps = dbar_flat_bump(&m, &spec, 2).unwrap();
        let z = [C64::from_polar(1.0, std::f64::consts::FRAC_PI_2)];
        let v1 = bumps[0].eval(&z);
        let v2 = bumps[1].eval(&z);
        assert!((v1 + v2 - 1.0).abs() < 1e-12);
        assert!(v1 > 0.0 && v2 > 0.0);
    }

    #[test]
    fn dbar_decay_exponent_along_normal_ray() {
        let m = Manifold::CircleInC;
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let bumps = dbar_flat_bump(&m, &spec, 2).unwrap();
        // along a ray inside the transition zone of bump 0
        let th = 0.45 * std::f64::consts::PI;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 1..=6 {
            let d = 0.002 * k as f64;
            let z = [C64::from_polar(1.0 + d, th)];
            let v = bumps[0].dbar_norm(&z);
            if v > 0.0 {
                xs.push(d.ln());
                ys.push(v.ln());
            }
        }
        assert!(xs.len() >= 4);
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(slope >= 1.8, "decay exponent {slope}");
    }

    #[test]
    fn trivial_chart_is_identity() {
        let m = Manifold::FlatRmInCn { m: 1, n: 1, window: (0.0, 1.0), guard: 0.2 };
        let spec = TubeSpec::with_defaults(0.1, &m).unwrap();
        let bumps = dbar_flat_bump(&m, &spec, 2).unwrap();
        assert_eq!(bumps.len(), 1);
        assert_eq!(bumps[0].eval(&[C64::new(0.5, 0.05)]), 1.0);
        assert_eq!(bumps[0].dbar_norm(&[C64::new(0.5, 0.05)]), 0.0);
    }
}

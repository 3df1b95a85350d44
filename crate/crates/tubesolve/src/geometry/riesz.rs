//! Riesz projector: the contour-integral spectral projection
//! P(L) = (1/2 pi i) \oint_C (w I - L)^{-1} dw over the circle
//! |w - 1| = 1/2, used to smooth perturbed frame projections while keeping
//! the rank fixed.

use crate::linalg::CMat;
use crate::{C64, Error, Result};
use std::f64::consts::TAU;

/// Trapezoidal contour quadrature with a doubling convergence guard: if the
/// 64-node and 128-node results disagree by more than 1e-10 (or a resolvent
/// blows up) an eigenvalue sits too close to the contour.
pub fn riesz_projector(l: &CMat) -> Result<CMat> {
    let p64 = contour_projection(l, 64)?;
    let p128 = contour_projection(l, 128)?;
    let diff = p64.sub(&p128).norm_fro();
    if diff > 1e-10 {
        return Err(Error::EigenvalueOnContour { dist: diff });
    }
    // an eigenvalue on or near the contour shows up as a principal-value
    // artifact: the quadrature converges but not to a projection
    let defect = p128.matmul(&p128).sub(&p128).norm_fro();
    if defect > 1e-9 {
        return Err(Error::EigenvalueOnContour { dist: defect });
    }
    Ok(p128)
}

fn contour_projection(l: &CMat, nodes: usize) -> Result<CMat> {
    let n = l.n;
    let mut acc = CMat::zeros(n, n);
    for k in 0..nodes {
        let th = TAU * (k as f64 + 0.5) / nodes as f64;
        let w = C64::new(1.0, 0.0) + 0.5 * C64::from_polar(1.0, th);
        let dw = 0.5 * crate::I * C64::from_polar(1.0, th) * (TAU / nodes as f64);
        let mut m = l.scale(C64::new(-1.0, 0.0));
        for i in 0..n {
            m[(i, i)] += w;
        }
        let inv = m.inverse().map_err(|_| Error::EigenvalueOnContour { dist: 0.0 })?;
        if inv.norm_1() > 1e8 {
            return Err(Error::EigenvalueOnContour { dist: 1.0 / inv.norm_1() });
        }
        let term = inv.scale(dw / (TAU * crate::I));
        acc = acc.add(&term);
    }
    Ok(acc)
}

/// Rank of a numerical projection, read off the trace.
pub fn projection_rank(p: &CMat) -> usize {
    p.trace().re.round().max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn projection_is_fixed_point() {
        // L = diag(1, 0) is already the projection
        let l = CMat::from_rows(&[vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0)]]);
        let p = riesz_projector(&l).unwrap();
        assert!(p.sub(&l).norm_fro() < 1e-12);
    }

    #[test]
    fn idempotent_matrix_is_reproduced() {
        // L = [[1, 0.3], [0, 0]] satisfies L^2 = L, so P(L) = L
        let l = CMat::from_rows(&[vec![c(1.0, 0.0), c(0.3, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0)]]);
        let p = riesz_projector(&l).unwrap();
        assert!(p.sub(&l).norm_fro() < 1e-10, "{:?}", p);
    }

    #[test]
    fn zero_matrix_projects_to_zero() {
        let l = CMat::zeros(3, 3);
        let p = riesz_projector(&l).unwrap();
        assert!(p.norm_fro() < 1e-12);
    }

    #[test]
    fn perturbed_projection_keeps_rank_and_idempotency() {
        let l0 = CMat::from_rows(&[
            vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        ]);
        let mut l = l0.clone();
        l[(0, 2)] = c(0.05, 0.02);
        l[(2, 1)] = c(-0.03, 0.04);
        l[(1, 1)] = c(0.97, 0.01);
        let p = riesz_projector(&l).unwrap();
        let p2 = p.matmul(&p);
        assert!(p2.sub(&p).norm_fro() < 1e-9, "idempotency defect {}", p2.sub(&p).norm_fro());
        assert_eq!(projection_rank(&p), 2);
    }

    #[test]
    fn eigenvalue_on_contour_rejected() {
        // eigenvalue exactly at 0.5 sits on |w - 1| = 1/2
        let l = CMat::from_rows(&[vec![c(0.5, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0)]]);
        assert!(riesz_projector(&l).is_err());
    }
}

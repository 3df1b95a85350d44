//! Dense complex linear algebra for the small systems that appear in the
//! solvers: Riesz contour resolvents, per-point contraction solves, frame
//! determinants. Everything is O(n^3) with partial pivoting, which is all
//! these n <= 8 systems need.

use crate::{C64, Error, Result};

/// Column-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    pub n: usize,
    pub m: usize,
    pub a: Vec<C64>,
}

impl CMat {
    pub fn zeros(n: usize, m: usize) -> Self {
        CMat { n, m, a: vec![C64::new(0.0, 0.0); n * m] }
    }

    pub fn eye(n: usize) -> Self {
        let mut s = Self::zeros(n, n);
        for i in 0..n {
            s[(i, i)] = C64::new(1.0, 0.0);
        }
        s
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let n = rows.len();
        let m = if n == 0 { 0 } else { rows[0].len() };
        let mut s = Self::zeros(n, m);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), m);
            for j in 0..m {
                s[(i, j)] = r[j];
            }
        }
        s
    }

    pub fn scale(&self, c: C64) -> CMat {
        CMat { n: self.n, m: self.m, a: self.a.iter().map(|x| x * c).collect() }
    }

    pub fn add(&self, other: &CMat) -> CMat {
        assert_eq!((self.n, self.m), (other.n, other.m));
        CMat {
            n: self.n,
            m: self.m,
            a: self.a.iter().zip(&other.a).map(|(x, y)| x + y).collect(),
        }
    }

    pub fn sub(&self, other: &CMat) -> CMat {
        assert_eq!((self.n, self.m), (other.n, other.m));
        CMat {
            n: self.n,
            m: self.m,
            a: self.a.iter().zip(&other.a).map(|(x, y)| x - y).collect(),
        }
    }

    pub fn matmul(&self, other: &CMat) -> CMat {
        assert_eq!(self.m, other.n);
        let mut out = CMat::zeros(self.n, other.m);
        for j in 0..other.m {
            for k in 0..self.m {
                let b = other[(k, j)];
                if b == C64::new(0.0, 0.0) {
                    continue;
                }
                for i in 0..self.n {
                    let v = self[(i, k)] * b;
                    out[(i, j)] += v;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.m, x.len());
        let mut y = vec![C64::new(0.0, 0.0); self.n];
        for j in 0..self.m {
            for i in 0..self.n {
                y[i] += self[(i, j)] * x[j];
            }
        }
        y
    }

    pub fn trace(&self) -> C64 {
        (0..self.n.min(self.m)).map(|i| self[(i, i)]).sum()
    }

    /// Max absolute column sum; cheap norm for conditioning guards.
    pub fn norm_1(&self) -> f64 {
        (0..self.m)
            .map(|j| (0..self.n).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> f64 {
        self.a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    /// LU factorization with partial pivoting; returns (lu, perm, sign-swaps).
    fn lu(&self) -> Result<(CMat, Vec<usize>, usize)> {
        assert_eq!(self.n, self.m);
        let n = self.n;
        let mut lu = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0usize;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].norm();
            for i in k + 1..n {
                let v = lu[(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::OutOfRange("singular matrix in LU solve".into()));
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                swaps += 1;
            }
            let piv = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / piv;
                lu[(i, k)] = f;
                for j in k + 1..n {
                    let v = lu[(k, j)] * f;
                    lu[(i, j)] -= v;
                }
            }
        }
        Ok((lu, perm, swaps))
    }

    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        let n = self.n;
        let (lu, perm, _) = self.lu()?;
        let mut x: Vec<C64> = perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            for j in 0..i {
                let v = lu[(i, j)] * x[j];
                x[i] -= v;
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= lu[(i, j)] * x[j];
            }
            x[i] = s / lu[(i, i)];
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<CMat> {
        let n = self.n;
        let mut out = CMat::zeros(n, n);
        let mut e = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            e[j] = C64::new(1.0, 0.0);
            let col = self.solve(&e)?;
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        Ok(out)
    }

    pub fn det(&self) -> C64 {
        match self.lu() {
            Err(_) => C64::new(0.0, 0.0),
            Ok((lu, _, swaps)) => {
                let mut d = if swaps % 2 == 0 { C64::new(1.0, 0.0) } else { C64::new(-1.0, 0.0) };
                for i in 0..self.n {
                    d *= lu[(i, i)];
                }
                d
            }
        }
    }

    /// A^H A smallest eigenvalue^(1/2); m <= 2 closed forms only.
    pub fn smallest_singular_value(&self) -> f64 {
        let m = self.m;
        let mut g = CMat::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..self.n {
                    s += self[(k, i)].conj() * self[(k, j)];
                }
                g[(i, j)] = s;
            }
        }
        match m {
            0 => 0.0,
            1 => g[(0, 0)].re.max(0.0).sqrt(),
            2 => {
                let tr = g[(0, 0)].re + g[(1, 1)].re;
                let det = (g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)]).re;
                let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
                (tr / 2.0 - disc).max(0.0).sqrt()
            }
            _ => {
                // inverse power iteration on the Gram matrix
                let mut x = vec![C64::new(1.0, 0.0); m];
                let mut lam = 0.0f64;
                for _ in 0..60 {
                    let y = match g.solve(&x) {
                        Ok(y) => y,
                        Err(_) => return 0.0,
                    };
                    let nrm = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                    if nrm == 0.0 {
                        return 0.0;
                    }
                    x = y.iter().map(|v| v / nrm).collect();
                    lam = 1.0 / nrm;
                }
                lam.max(0.0).sqrt()
            }
        }
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.a[i + j * self.n]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.a[i + j * self.n]
    }
}

/// Eigenvalues of a Hermitian 2x2 matrix (ascending).
pub fn herm2_eigenvalues(a00: f64, a01: C64, a11: f64) -> (f64, f64) {
    let tr = a00 + a11;
    let det = a00 * a11 - a01.norm_sqr();
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    (tr / 2.0 - disc, tr / 2.0 + disc)
}

/// Gauss-Legendre nodes and weights on [-1, 1], cached per order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    use std::sync::OnceLock;
    static CACHE: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (1..=64).map(gauss_legendre_uncached).collect());
    if n >= 1 && n <= 64 {
        return cache[n - 1].clone();
    }
    gauss_legendre_uncached(n)
}

fn gauss_legendre_uncached(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_pd(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        ws[i] = w;
        xs[n - 1 - i] = x;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

fn legendre_pd(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_legendre_ab(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        xs.iter().map(|x| mid + half * x).collect(),
        ws.iter().map(|w| w * half).collect(),
    )
}

/// Allocation-free Gauss-Legendre sweep over [a, b].
pub fn gl_sweep(n: usize, a: f64, b: f64, mut f: impl FnMut(f64, f64)) {
    use std::sync::OnceLock;
    static CACHE: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (1..=64).map(gauss_legendre_uncached).collect());
    let (xs, ws) = if (1..=64).contains(&n) {
        let r = &cache[n - 1];
        (&r.0, &r.1)
    } else {
        panic!("gl_sweep supports orders 1..=64")
    };
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    for (x, w) in xs.iter().zip(ws) {
        f(mid + half * x, w * half);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn solve_and_det_2x2() {
        let a = CMat::from_rows(&[vec![c(1.0, 1.0), c(2.0, 0.0)], vec![c(0.0, -1.0), c(3.0, 0.5)]]);
        let x = vec![c(1.0, 0.0), c(0.0, 2.0)];
        let b = a.matvec(&x);
        let xs = a.solve(&b).unwrap();
        for (u, v) in xs.iter().zip(&x) {
            assert_abs_diff_eq!(u.re, v.re, epsilon = 1e-12);
            assert_abs_diff_eq!(u.im, v.im, epsilon = 1e-12);
        }
        let det = a.det();
        let expect = c(1.0, 1.0) * c(3.0, 0.5) - c(2.0, 0.0) * c(0.0, -1.0);
        assert_abs_diff_eq!(det.re, expect.re, epsilon = 1e-12);
        assert_abs_diff_eq!(det.im, expect.im, epsilon = 1e-12);
    }

    #[test]
    fn inverse_roundtrip() {
        let a = CMat::from_rows(&[
            vec![c(2.0, 0.0), c(0.3, 0.1), c(0.0, 0.0)],
            vec![c(0.0, 0.2), c(1.5, 0.0), c(0.1, 0.0)],
            vec![c(0.0, 0.0), c(0.4, -0.2), c(1.0, 0.3)],
        ]);
        let inv = a.inverse().unwrap();
        let id = a.matmul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(id[(i, j)].re, want, epsilon = 1e-12);
                assert_abs_diff_eq!(id[(i, j)].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (xs, ws) = gauss_legendre_ab(8, 0.0, 1.0);
        let int: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(7)).sum();
        assert_abs_diff_eq!(int, 1.0 / 8.0, epsilon = 1e-14);
        let int3: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x * x * x).sum();
        assert_abs_diff_eq!(int3, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn smallest_singular_value_2x2() {
        let a = CMat::from_rows(&[vec![c(3.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.5, 0.0)]]);
        assert_abs_diff_eq!(a.smallest_singular_value(), 0.5, epsilon = 1e-12);
    }
}

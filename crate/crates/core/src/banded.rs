//! Banded LU factorization with partial pivoting.
//!
//! Row `r` stores columns `r - kl ..= r + ku + kl`; the extra `kl`
//! superdiagonals hold fill-in produced by row interchanges.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("singular banded system: zero pivot in column {column}")]
pub struct SingularMatrix {
    pub column: usize,
}

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let off = c as isize - r as isize + self.kl as isize;
        (off >= 0 && (off as usize) < self.width).then(|| r * self.width + off as usize)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.slot(r, c).map_or(0.0, |s| self.data[s])
    }

    /// Adds `v` to entry `(r, c)`; panics outside the declared band.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            c + self.kl >= r && c <= r + self.ku,
            "entry ({r}, {c}) outside band (kl={}, ku={})",
            self.kl,
            self.ku
        );
        let s = self.slot(r, c).expect("inside band");
        self.data[s] += v;
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.kl);
                let hi = (r + self.ku + self.kl).min(self.n - 1);
                (lo..=hi).map(|c| self.get(r, c) * x[c]).sum()
            })
            .collect()
    }

    pub fn factor(mut self) -> Result<BandedLu, SingularMatrix> {
        let n = self.n;
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE) * n as f64 * 1e-3;
        let mut piv = vec![0; n];
        let reach = self.kl + self.ku;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for r in k + 1..=last_row {
                let v = self.get(r, k).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > tiny) {
                return Err(SingularMatrix { column: k });
            }
            piv[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    let (a, b) = (self.slot(k, c).unwrap(), self.slot(p, c).unwrap());
                    self.data.swap(a, b);
                }
            }
            let pivot = self.get(k, k);
            for r in k + 1..=last_row {
                let sr = self.slot(r, k).unwrap();
                let factor = self.data[sr] / pivot;
                self.data[sr] = factor;
                if factor == 0.0 {
                    continue;
                }
                for c in k + 1..=last_col {
                    let kc = self.data[self.slot(k, c).unwrap()];
                    let rc = self.slot(r, c).unwrap();
                    self.data[rc] -= factor * kc;
                }
            }
        }
        Ok(BandedLu { m: self, piv })
    }
}

/// Factors produced by [`BandedMatrix::factor`].
#[derive(Debug, Clone)]
pub struct BandedLu {
    m: BandedMatrix,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = &self.m;
        let n = m.n;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let last_row = (k + m.kl).min(n - 1);
            for r in k + 1..=last_row {
                x[r] -= m.get(r, k) * x[k];
            }
        }
        let reach = m.kl + m.ku;
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut s = x[k];
            for c in k + 1..=last_col {
                s -= m.get(k, c) * x[c];
            }
            x[k] = s / m.get(k, k);
        }
        x
    }
}

/// Solves `A x = b`, with one step of iterative refinement when the first
/// residual exceeds `rel_tol · ‖b‖∞`. Returns the solution and its relative residual.
pub fn solve_banded(a: &BandedMatrix, b: &[f64], rel_tol: f64) -> Result<(Vec<f64>, f64), SingularMatrix> {
    let lu = a.clone().factor()?;
    let mut x = lu.solve(b);
    let norm_b = b.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let residual = |x: &[f64]| -> Vec<f64> { a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect() };
    let mut r = residual(&x);
    let mut rel = r.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / norm_b;
    if rel > rel_tol {
        let dx = lu.solve(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
        r = residual(&x);
        rel = r.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / norm_b;
    }
    Ok((x, rel))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        // Gaussian elimination with partial pivoting on a dense copy.
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
            m.swap(k, p);
            x.swap(k, p);
            for r in k + 1..n {
                let f = m[r][k] / m[k][k];
                for c in k..n {
                    m[r][c] -= f * m[k][c];
                }
                x[r] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|c| m[k][c] * x[c]).sum();
            x[k] = (x[k] - s) / m[k][k];
        }
        x
    }

    #[test]
    fn matches_dense_elimination_with_pivoting() {
        let n = 11;
        let (kl, ku) = (2, 2);
        let mut band = BandedMatrix::zeros(n, kl, ku);
        let mut dense = vec![vec![0.0; n]; n];
        let mut seed = 7_u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for r in 0..n {
            for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                // small diagonal forces pivoting
                let v = if r == c { 0.01 * next() } else { next() };
                band.add(r, c, v);
                dense[r][c] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (x, rel) = solve_banded(&band, &b, 1e-12).unwrap();
        let xd = dense_solve(&dense, &b);
        for (u, v) in x.iter().zip(&xd) {
            assert!((u - v).abs() < 1e-9 * (1.0 + v.abs()), "{u} vs {v}");
        }
        assert!(rel < 1e-12);
    }

    #[test]
    fn singular_is_reported() {
        let mut a = BandedMatrix::zeros(3, 1, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 1.0);
        a.add(2, 2, 1.0);
        assert!(a.factor().is_err());
    }
}

//! Banded LU with partial pivoting (the `gbtrf`/`gbtrs` pair), used for the
//! block recursion of the OWNS-P filter.
//!
//! Storage follows LAPACK: element `(i, j)` lives in column `j` at offset
//! `kl + ku + i - j`, with `kl` extra rows reserved for pivoting fill-in.

use faer::c64;

use crate::linalg::LinalgError;

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<c64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![c64::new(0.0, 0.0); ldab * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i <= j + self.kl && j <= i + self.ku
    }

    /// Adds `v` at `(i, j)`; panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: c64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band kl={} ku={}", self.kl, self.ku);
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        if self.in_band(i, j) {
            self.ab[self.idx(i, j)]
        } else {
            c64::new(0.0, 0.0)
        }
    }

    pub fn matvec(&self, x: &[c64]) -> Vec<c64> {
        let mut y = vec![c64::new(0.0, 0.0); self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for (i, yi) in y.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *yi += self.ab[self.idx(i, j)] * x[j];
            }
        }
        y
    }

    pub fn factor(mut self) -> Result<BandLu, LinalgError> {
        let n = self.n;
        let kl = self.kl;
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        let mut growth_min = f64::INFINITY;
        let mut growth_max = 0.0f64;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0usize;
            let mut best = -1.0f64;
            for p in 0..=km {
                let v = self.ab[self.idx(j + p, j)].norm();
                if v > best {
                    best = v;
                    jp = p;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(LinalgError::Singular { cond: f64::INFINITY });
            }
            growth_min = growth_min.min(best);
            growth_max = growth_max.max(best);
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            if km > 0 {
                let inv = c64::new(1.0, 0.0) / self.ab[self.idx(j, j)];
                for r in j + 1..=j + km {
                    let k = self.idx(r, j);
                    self.ab[k] *= inv;
                }
                for c in j + 1..=ju {
                    let ajc = self.ab[self.idx(j, c)];
                    if ajc == c64::new(0.0, 0.0) {
                        continue;
                    }
                    let base_l = self.idx(j + 1, j);
                    let base_c = self.idx(j + 1, c);
                    for r in 0..km {
                        let l = self.ab[base_l + r];
                        self.ab[base_c + r] -= l * ajc;
                    }
                }
            }
        }
        Ok(BandLu {
            m: self,
            ipiv,
            pivot_ratio: if growth_min > 0.0 { growth_max / growth_min } else { f64::INFINITY },
        })
    }
}

/// Factored band matrix; reusable for any number of right-hand sides.
#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    ipiv: Vec<usize>,
    pivot_ratio: f64,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.m.n
    }

    /// Ratio of largest to smallest pivot magnitude; a cheap conditioning hint.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn solve_in_place(&self, b: &mut [c64]) {
        let n = self.m.n;
        let kl = self.m.kl;
        let kv = self.m.kl + self.m.ku;
        assert_eq!(b.len(), n);
        for j in 0..n {
            let jp = self.ipiv[j];
            if jp != j {
                b.swap(j, jp);
            }
            let bj = b[j];
            if bj == c64::new(0.0, 0.0) {
                continue;
            }
            let lm = kl.min(n - 1 - j);
            if lm > 0 {
                let base = self.m.idx(j + 1, j);
                for r in 0..lm {
                    b[j + 1 + r] -= self.m.ab[base + r] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.m.ab[self.m.idx(j, j)];
            let bj = b[j];
            if bj == c64::new(0.0, 0.0) {
                continue;
            }
            let lo = j.saturating_sub(kv);
            for r in lo..j {
                b[r] -= self.m.ab[self.m.idx(r, j)] * bj;
            }
        }
    }

    pub fn solve(&self, b: &[c64]) -> Vec<c64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

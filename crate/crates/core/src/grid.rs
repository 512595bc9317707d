//! Transverse finite-difference grids and their difference matrices.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::system::SystemError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Central2,
    Central4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Boundary {
    Periodic,
    /// Ghost values outside the grid are zero.
    ZeroDirichlet,
    /// Node on the wall with one-sided stencils; listed characteristic
    /// variables (indices into the sorted characteristic vector) are held at zero.
    WallReflective { zero_chars: Vec<usize> },
}

/// One transverse direction discretized on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1d {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    pub scheme: Scheme,
    pub bc_lo: Boundary,
    pub bc_hi: Boundary,
}

impl Grid1d {
    pub fn validate(&self) -> Result<(), SystemError> {
        if self.nodes < 2 {
            return Err(SystemError::Dimension("grid needs at least 2 nodes".into()));
        }
        if !(self.hi > self.lo) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(SystemError::Dimension("grid bounds must satisfy lo < hi".into()));
        }
        let periodic = (self.bc_lo == Boundary::Periodic) as u8 + (self.bc_hi == Boundary::Periodic) as u8;
        if periodic == 1 {
            return Err(SystemError::Dimension("periodic boundaries must be paired".into()));
        }
        let min_nodes = match self.scheme {
            Scheme::Central2 => 3,
            Scheme::Central4 => 5,
        };
        if self.nodes < min_nodes {
            return Err(SystemError::Dimension(format!("scheme needs at least {min_nodes} nodes")));
        }
        Ok(())
    }

    pub fn is_periodic(&self) -> bool {
        self.bc_lo == Boundary::Periodic
    }

    /// Node coordinates. Periodic grids omit the duplicated endpoint; zero-Dirichlet
    /// ends sit one cell inside the boundary; wall ends sit on it.
    pub fn coords(&self) -> Vec<f64> {
        let n = self.nodes;
        let wall_lo = matches!(self.bc_lo, Boundary::WallReflective { .. });
        let wall_hi = matches!(self.bc_hi, Boundary::WallReflective { .. });
        if self.is_periodic() {
            let h = (self.hi - self.lo) / n as f64;
            return (0..n).map(|i| self.lo + i as f64 * h).collect();
        }
        // Number of intervals between the domain ends.
        let gaps = (n - 1) + (!wall_lo) as usize + (!wall_hi) as usize;
        let h = (self.hi - self.lo) / gaps as f64;
        let start = if wall_lo { self.lo } else { self.lo + h };
        (0..n).map(|i| start + i as f64 * h).collect()
    }

    pub fn spacing(&self) -> f64 {
        let c = self.coords();
        c[1] - c[0]
    }

    /// First-derivative matrix.
    pub fn derivative(&self) -> Mat<f64> {
        let n = self.nodes;
        let h = self.spacing();
        let mut d = Mat::<f64>::zeros(n, n);
        let interior: &[(isize, f64)] = match self.scheme {
            Scheme::Central2 => &[(-1, -0.5), (1, 0.5)],
            Scheme::Central4 => &[(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)],
        };
        let periodic = self.is_periodic();
        for i in 0..n {
            for &(off, w) in interior {
                let j = i as isize + off;
                if periodic {
                    let jj = j.rem_euclid(n as isize) as usize;
                    d[(i, jj)] += w / h;
                } else if j >= 0 && (j as usize) < n {
                    d[(i, j as usize)] += w / h;
                }
            }
        }
        if !periodic {
            // One-sided closures at wall nodes, mirrored at the upper wall.
            let (edge, near): (&[f64], &[f64]) = match self.scheme {
                Scheme::Central2 => (&[-1.5, 2.0, -0.5], &[]),
                Scheme::Central4 => (
                    &[-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25],
                    &[-0.25, -5.0 / 6.0, 1.5, -0.5, 1.0 / 12.0],
                ),
            };
            let mut close = |row: usize, lower: bool| {
                for j in 0..n {
                    d[(row, j)] = 0.0;
                }
                let stencil = if row == 0 || row == n - 1 { edge } else { near };
                let base = if lower { 0isize } else { n as isize - 1 };
                for (k, &w) in stencil.iter().enumerate() {
                    if lower {
                        d[(row, (base + k as isize) as usize)] = w / h;
                    } else {
                        d[(row, (base - k as isize) as usize)] = -w / h;
                    }
                }
            };
            if matches!(self.bc_lo, Boundary::WallReflective { .. }) {
                close(0, true);
                if self.scheme == Scheme::Central4 {
                    close(1, true);
                }
            }
            if matches!(self.bc_hi, Boundary::WallReflective { .. }) {
                close(n - 1, false);
                if self.scheme == Scheme::Central4 {
                    close(n - 2, false);
                }
            }
        }
        d
    }
}

/// Per-direction treatment: either Fourier-transformed with wavenumber `omega`
/// supplied at assembly, or finite differenced on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Direction {
    Fourier,
    Grid(Grid1d),
}

/// Tensor-product transverse discretization; nodes ordered with the first
/// gridded direction varying slowest.
#[derive(Debug, Clone)]
pub struct TransverseDiscretization {
    pub directions: Vec<Direction>,
    /// One matrix per direction; `None` for Fourier directions.
    pub d: Vec<Option<Mat<f64>>>,
    pub node_count: usize,
    /// Per node, the wall-tagged characteristic indices to hold at zero.
    pub wall_zero: Vec<Vec<usize>>,
}

impl TransverseDiscretization {
    pub fn new(directions: Vec<Direction>) -> Result<Self, SystemError> {
        let mut dims = Vec::new();
        for dir in &directions {
            if let Direction::Grid(g) = dir {
                g.validate()?;
                dims.push(g.nodes);
            }
        }
        let node_count: usize = dims.iter().product();
        let mut d = Vec::with_capacity(directions.len());
        let mut gi = 0usize;
        for dir in &directions {
            match dir {
                Direction::Fourier => d.push(None),
                Direction::Grid(g) => {
                    let d1 = g.derivative();
                    let before: usize = dims[..gi].iter().product();
                    let after: usize = dims[gi + 1..].iter().product();
                    d.push(Some(kron_identity(before, &d1, after)));
                    gi += 1;
                }
            }
        }
        let mut wall_zero = vec![Vec::new(); node_count];
        let mut gi = 0usize;
        for dir in &directions {
            if let Direction::Grid(g) = dir {
                let stride: usize = dims[gi + 1..].iter().product();
                for (b, at) in [(&g.bc_lo, 0usize), (&g.bc_hi, g.nodes - 1)] {
                    if let Boundary::WallReflective { zero_chars } = b {
                        for node in 0..node_count {
                            if (node / stride) % g.nodes == at {
                                for &k in zero_chars {
                                    if !wall_zero[node].contains(&k) {
                                        wall_zero[node].push(k);
                                    }
                                }
                            }
                        }
                    }
                }
                gi += 1;
            }
        }
        for w in wall_zero.iter_mut() {
            w.sort_unstable();
        }
        Ok(Self { directions, d, node_count, wall_zero })
    }

    /// No transverse grid at all (a single node).
    pub fn single_node(n_transverse: usize) -> Self {
        Self::new(vec![Direction::Fourier; n_transverse]).expect("fourier-only discretization")
    }
}

fn kron_identity(before: usize, d1: &Mat<f64>, after: usize) -> Mat<f64> {
    let m = d1.nrows();
    let n = before * m * after;
    let mut out = Mat::<f64>::zeros(n, n);
    for b in 0..before {
        for i in 0..m {
            for j in 0..m {
                let v = d1[(i, j)];
                if v == 0.0 {
                    continue;
                }
                for a in 0..after {
                    out[((b * m + i) * after + a, (b * m + j) * after + a)] = v;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, scheme: Scheme, lo: Boundary, hi: Boundary) -> Grid1d {
        Grid1d { lo: 0.0, hi: 1.0, nodes: n, scheme, bc_lo: lo, bc_hi: hi }
    }

    fn apply(d: &Mat<f64>, f: impl Fn(f64) -> f64, y: &[f64]) -> Vec<f64> {
        (0..y.len()).map(|i| (0..y.len()).map(|j| d[(i, j)] * f(y[j])).sum()).collect()
    }

    #[test]
    fn periodic_rows_sum_to_zero_and_differentiate_sine() {
        for scheme in [Scheme::Central2, Scheme::Central4] {
            let g = grid(32, scheme, Boundary::Periodic, Boundary::Periodic);
            let d = g.derivative();
            for i in 0..32 {
                let s: f64 = (0..32).map(|j| d[(i, j)]).sum();
                assert!(s.abs() < 1e-12);
            }
            let y = g.coords();
            let k = 2.0 * std::f64::consts::PI;
            let got = apply(&d, |t| (k * t).sin(), &y);
            let tol = if scheme == Scheme::Central2 { 0.05 } else { 2e-3 };
            for (i, &yi) in y.iter().enumerate() {
                assert!((got[i] / k - (k * yi).cos()).abs() < tol);
            }
        }
    }

    #[test]
    fn wall_closure_is_exact_on_quadratics() {
        let wall = Boundary::WallReflective { zero_chars: vec![] };
        let g = grid(9, Scheme::Central2, wall.clone(), wall);
        let d = g.derivative();
        let y = g.coords();
        assert_eq!(y[0], 0.0);
        assert!((y[8] - 1.0).abs() < 1e-15);
        let got = apply(&d, |t| t * t, &y);
        for (i, &yi) in y.iter().enumerate() {
            assert!((got[i] - 2.0 * yi).abs() < 1e-12, "row {i}");
        }
    }

    #[test]
    fn fourth_order_wall_closure_is_exact_on_quartics() {
        let wall = Boundary::WallReflective { zero_chars: vec![] };
        let g = grid(11, Scheme::Central4, wall.clone(), wall);
        let d = g.derivative();
        let y = g.coords();
        let got = apply(&d, |t| t.powi(4), &y);
        for i in [0, 1, 9, 10] {
            assert!((got[i] - 4.0 * y[i].powi(3)).abs() < 1e-9, "row {i}");
        }
    }

    #[test]
    fn dirichlet_nodes_are_strictly_interior() {
        let g = grid(4, Scheme::Central2, Boundary::ZeroDirichlet, Boundary::ZeroDirichlet);
        let y = g.coords();
        assert!((y[0] - 0.2).abs() < 1e-15 && (y[3] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn tensor_product_and_wall_tags() {
        let wall = Boundary::WallReflective { zero_chars: vec![2] };
        let dirs = vec![
            Direction::Grid(grid(3, Scheme::Central2, wall, Boundary::ZeroDirichlet)),
            Direction::Fourier,
            Direction::Grid(grid(4, Scheme::Central2, Boundary::Periodic, Boundary::Periodic)),
        ];
        let t = TransverseDiscretization::new(dirs).unwrap();
        assert_eq!(t.node_count, 12);
        assert!(t.d[1].is_none());
        let d2 = t.d[2].as_ref().unwrap();
        for i in 0..12 {
            let s: f64 = (0..12).map(|j| d2[(i, j)]).sum();
            assert!(s.abs() < 1e-12);
        }
        let tagged: Vec<usize> = (0..12).filter(|&p| !t.wall_zero[p].is_empty()).collect();
        assert_eq!(tagged, vec![0, 1, 2, 3]);
    }

    #[test]
    fn unpaired_periodic_rejected() {
        let g = grid(5, Scheme::Central2, Boundary::Periodic, Boundary::ZeroDirichlet);
        assert!(g.validate().is_err());
    }
}

//! Built-in desk-scale testbeds: linearized Euler about uniform flow and about
//! a parallel shear layer.
//!
//! Primitive variables are `(ρ, u, v[, w], p)`. The base state has unit density
//! and uniform sound speed `a`, so `p̄ = a²/γ`.

use serde::{Deserialize, Serialize};

use crate::grid::{Boundary, Direction, Grid1d, Scheme, TransverseDiscretization};
use crate::operator::SemiDiscreteSystem;
use crate::system::{HyperbolicSystem, SystemError};

pub const GAMMA: f64 = 1.4;

/// Flux matrices of the linearized Euler equations about `(ρ̄, ū, v̄=0, w̄=0, p̄)`,
/// with a transverse shear `dū/dy` entering through `C`.
pub fn euler(dim: usize, u: f64, a: f64, dudy: f64) -> Result<HyperbolicSystem, SystemError> {
    if !(dim == 2 || dim == 3) {
        return Err(SystemError::Dimension("Euler testbed is 2D or 3D".into()));
    }
    let rho = 1.0;
    let gp = rho * a * a; // γ p̄
    let n = dim + 2;
    let ip = n - 1;
    let z = || vec![vec![0.0; n]; n];
    let mut am = z();
    for (i, row) in am.iter_mut().enumerate() {
        row[i] = u;
    }
    am[0][1] = rho;
    am[1][ip] = 1.0 / rho;
    am[ip][1] = gp;
    let mut b = Vec::new();
    for k in 0..dim - 1 {
        let vel = 2 + k;
        let mut bm = z();
        bm[0][vel] = rho;
        bm[vel][ip] = 1.0 / rho;
        bm[ip][vel] = gp;
        b.push(bm);
    }
    let mut c = z();
    c[1][2] = dudy;
    HyperbolicSystem::new(am, b, c, dim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformEuler {
    pub dim: usize,
    pub u: f64,
    pub a: f64,
    /// Transverse nodes in `y`; 0 means no grid (Fourier in `y`).
    pub ny: usize,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_bc")]
    pub bc: BcKind,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcKind {
    Periodic,
    ZeroDirichlet,
}

fn default_width() -> f64 {
    2.0 * std::f64::consts::PI
}
fn default_bc() -> BcKind {
    BcKind::Periodic
}
fn default_scheme() -> Scheme {
    Scheme::Central2
}

fn boundary(k: BcKind) -> Boundary {
    match k {
        BcKind::Periodic => Boundary::Periodic,
        BcKind::ZeroDirichlet => Boundary::ZeroDirichlet,
    }
}

impl UniformEuler {
    pub fn build(&self) -> Result<SemiDiscreteSystem, SystemError> {
        let sys = euler(self.dim, self.u, self.a, 0.0)?;
        let mut dirs = Vec::new();
        if self.ny > 0 {
            dirs.push(Direction::Grid(Grid1d {
                lo: 0.0,
                hi: self.width,
                nodes: self.ny,
                scheme: self.scheme,
                bc_lo: boundary(self.bc),
                bc_hi: boundary(self.bc),
            }));
        } else {
            dirs.push(Direction::Fourier);
        }
        if self.dim == 3 {
            dirs.push(Direction::Fourier);
        }
        SemiDiscreteSystem::uniform(&sys, TransverseDiscretization::new(dirs)?)
    }
}

/// 2D Euler about `ū(y) = u_mid + du·tanh(y/δ)` on `y ∈ [-half_width, half_width]`
/// with zero ghost values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShearLayer {
    pub ny: usize,
    pub half_width: f64,
    pub u_mid: f64,
    pub du: f64,
    pub delta: f64,
    pub a: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
}

impl Default for ShearLayer {
    fn default() -> Self {
        Self { ny: 16, half_width: 4.0, u_mid: 0.5, du: 0.3, delta: 1.0, a: 1.0, scheme: Scheme::Central2 }
    }
}

impl ShearLayer {
    pub fn grid(&self) -> Grid1d {
        Grid1d {
            lo: -self.half_width,
            hi: self.half_width,
            nodes: self.ny,
            scheme: self.scheme,
            bc_lo: Boundary::ZeroDirichlet,
            bc_hi: Boundary::ZeroDirichlet,
        }
    }

    pub fn velocity(&self, y: f64) -> (f64, f64) {
        let t = (y / self.delta).tanh();
        (self.u_mid + self.du * t, self.du * (1.0 - t * t) / self.delta)
    }

    pub fn build(&self) -> Result<SemiDiscreteSystem, SystemError> {
        let g = self.grid();
        g.validate()?;
        let systems = g
            .coords()
            .into_iter()
            .map(|y| {
                let (u, du) = self.velocity(y);
                euler(2, u, self.a, du)
            })
            .collect::<Result<Vec<_>, _>>()?;
        SemiDiscreteSystem::nodal(&systems, TransverseDiscretization::new(vec![Direction::Grid(g)])?)
    }
}

/// Uniform flow towards `-x` on a periodic grid: `N₊ < N₋`.
pub fn reversed_flow(ny: usize) -> Result<SemiDiscreteSystem, SystemError> {
    UniformEuler {
        dim: 2,
        u: -0.3,
        a: 1.0,
        ny,
        width: default_width(),
        bc: BcKind::Periodic,
        scheme: Scheme::Central2,
    }
    .build()
}

/// Shear layer whose thickness grows linearly along `x`:
/// `δ(x) = δ₀(1 + spread·x/length)` on `n_stations` uniform stations.
pub fn spreading_shear(
    base: &ShearLayer,
    n_stations: usize,
    length: f64,
    spread: f64,
) -> Result<(Vec<f64>, Vec<SemiDiscreteSystem>), SystemError> {
    let x: Vec<f64> = (0..n_stations).map(|i| length * i as f64 / (n_stations - 1).max(1) as f64).collect();
    let systems = x
        .iter()
        .map(|&xi| ShearLayer { delta: base.delta * (1.0 + spread * xi / length), ..base.clone() }.build())
        .collect::<Result<Vec<_>, _>>()?;
    Ok((x, systems))
}

/// Uniform 2D flow whose speed ramps linearly from `u0` to `u1` over the
/// stations; with `u0 < a < u1` the upstream acoustic family disappears
/// once, between the two stations straddling `u = a`.
pub fn sonic_ramp(ny: usize, u0: f64, u1: f64, n_stations: usize) -> Result<(Vec<f64>, Vec<SemiDiscreteSystem>), SystemError> {
    let x: Vec<f64> = (0..n_stations).map(|i| i as f64 / (n_stations - 1).max(1) as f64).collect();
    let systems = x
        .iter()
        .map(|&t| {
            UniformEuler {
                dim: 2,
                u: u0 + (u1 - u0) * t,
                a: 1.0,
                ny,
                width: default_width(),
                bc: BcKind::Periodic,
                scheme: Scheme::Central2,
            }
            .build()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((x, systems))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::characteristic_form;

    #[test]
    fn euler_speeds() {
        let f = characteristic_form(&euler(3, 0.5, 1.0, 0.0).unwrap()).unwrap();
        let mut want: Vec<f64> = vec![1.5, 0.5, 0.5, 0.5, -0.5];
        want.sort_by(|a, b| b.total_cmp(a));
        for (g, w) in f.a_tilde.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
        assert_eq!((f.n_plus, f.n_minus), (4, 1));
    }

    #[test]
    fn shear_counts() {
        let sd = ShearLayer::default().build().unwrap();
        assert_eq!(sd.counts(), (48, 16, 0));
    }
}

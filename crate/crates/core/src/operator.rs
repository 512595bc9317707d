//! Assembly of the semi-discrete marching operator.
//!
//! The frequency-domain equations are written as `dφ/dx = M φ + ĝ` with
//! `M v = iα v`, so a mode behaves as `exp(iαx)`. Starting from
//! `Ã φ_x = -L φ + f̃` with `L = sI + Σ iω_j B̃_j + Σ B̃_j D_j + C̃`, this gives
//! `M = -Ã⁻¹ L` and `ĝ = Ã⁻¹ f̃`.
//!
//! Global unknowns are ordered variable-major within a node, nodes by grid
//! index; within a node the characteristic variables follow the sorted
//! (+, -, 0) order of the node's [`CharacteristicForm`].

use faer::{c64, Mat};
use std::sync::Arc;

use crate::grid::TransverseDiscretization;
use crate::linalg::{cond2, cx, select, CMat, DenseLu};
use crate::system::{characteristic_form, CharacteristicForm, HyperbolicSystem, SystemError};

/// Condition number of `L00` above which elimination is refused.
pub const SINGULAR_BLOCK_COND: f64 = 1e12;

/// Per-node characteristic forms plus the transverse discretization.
#[derive(Debug, Clone)]
pub struct SemiDiscreteSystem {
    pub forms: Vec<Arc<CharacteristicForm>>,
    pub disc: Arc<TransverseDiscretization>,
}

impl SemiDiscreteSystem {
    /// Same system at every node.
    pub fn uniform(system: &HyperbolicSystem, disc: TransverseDiscretization) -> Result<Self, SystemError> {
        let form = Arc::new(characteristic_form(system)?);
        Self::check_dims(system.spatial_dim, &disc)?;
        Ok(Self { forms: vec![form; disc.node_count], disc: Arc::new(disc) })
    }

    /// One system per node (e.g. a parallel shear flow).
    pub fn nodal(systems: &[HyperbolicSystem], disc: TransverseDiscretization) -> Result<Self, SystemError> {
        if systems.len() != disc.node_count {
            return Err(SystemError::Dimension(format!(
                "{} nodal systems for {} nodes",
                systems.len(),
                disc.node_count
            )));
        }
        let n = systems[0].n_vars;
        let mut forms = Vec::with_capacity(systems.len());
        for s in systems {
            if s.n_vars != n || s.spatial_dim != systems[0].spatial_dim {
                return Err(SystemError::Dimension("nodal systems differ in shape".into()));
            }
            forms.push(Arc::new(characteristic_form(s)?));
        }
        Self::check_dims(systems[0].spatial_dim, &disc)?;
        Ok(Self { forms, disc: Arc::new(disc) })
    }

    fn check_dims(spatial_dim: usize, disc: &TransverseDiscretization) -> Result<(), SystemError> {
        if disc.directions.len() != spatial_dim - 1 {
            return Err(SystemError::Dimension(format!(
                "discretization has {} directions, system has {}",
                disc.directions.len(),
                spatial_dim - 1
            )));
        }
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        self.forms[0].n_vars()
    }

    pub fn node_count(&self) -> usize {
        self.disc.node_count
    }

    /// Characteristic signs of the global state after wall tagging.
    pub fn global_signs(&self) -> Vec<i8> {
        let n = self.n_vars();
        let mut out = Vec::with_capacity(n * self.node_count());
        for (p, f) in self.forms.iter().enumerate() {
            let s = f.signs();
            for (k, &sk) in s.iter().enumerate() {
                out.push(if self.disc.wall_zero[p].contains(&k) { 0 } else { sk });
            }
            debug_assert_eq!(out.len(), (p + 1) * n);
        }
        out
    }

    /// `(N+, N-, N0)` summed over nodes.
    pub fn counts(&self) -> (usize, usize, usize) {
        let s = self.global_signs();
        let p = s.iter().filter(|&&v| v > 0).count();
        let m = s.iter().filter(|&&v| v < 0).count();
        (p, m, s.len() - p - m)
    }

    pub fn assemble(&self, s: c64, omega_t: &[f64], forcing: Option<&[c64]>) -> Result<OperatorM, SystemError> {
        let parts = self.global_parts(s, omega_t, forcing)?;
        if parts.zero.is_empty() {
            Ok(self.regular(s, omega_t, parts))
        } else {
            self.eliminate(s, omega_t, parts).map(|(m, _)| m)
        }
    }

    pub fn reduce_singular(
        &self,
        s: c64,
        omega_t: &[f64],
        forcing: Option<&[c64]>,
    ) -> Result<(OperatorM, SingularReduction), SystemError> {
        let parts = self.global_parts(s, omega_t, forcing)?;
        if parts.zero.is_empty() {
            return Err(SystemError::NotSingular);
        }
        self.eliminate(s, omega_t, parts)
    }

    fn global_parts(&self, s: c64, omega_t: &[f64], forcing: Option<&[c64]>) -> Result<GlobalParts, SystemError> {
        if s.re < 0.0 || !s.re.is_finite() || !s.im.is_finite() {
            return Err(SystemError::BadLaplace(s.re));
        }
        let ndir = self.disc.directions.len();
        if omega_t.len() != ndir {
            return Err(SystemError::Dimension(format!(
                "expected {ndir} transverse wavenumbers, got {}",
                omega_t.len()
            )));
        }
        let n = self.n_vars();
        let np = self.node_count();
        let dim = n * np;
        if let Some(f) = forcing {
            if f.len() != dim {
                return Err(SystemError::Dimension(format!("forcing has length {}, expected {dim}", f.len())));
            }
        }
        let mut l = Mat::<c64>::zeros(dim, dim);
        for (p, form) in self.forms.iter().enumerate() {
            for k in 0..n {
                for m in 0..n {
                    let mut v = cx(form.c_tilde[(k, m)], 0.0);
                    for (j, d) in self.disc.d.iter().enumerate() {
                        if d.is_none() && omega_t[j] != 0.0 {
                            v += cx(0.0, omega_t[j] * form.b_tilde[j][(k, m)]);
                        }
                    }
                    if k == m {
                        v += s;
                    }
                    l[(p * n + k, p * n + m)] += v;
                }
            }
        }
        for (j, d) in self.disc.d.iter().enumerate() {
            let Some(d) = d else { continue };
            for p in 0..np {
                for r in 0..np {
                    let w = d[(p, r)];
                    if w == 0.0 {
                        continue;
                    }
                    // T_p B_{j,p} T_r⁻¹: couples characteristic variables across nodes.
                    let blk = &self.forms[p].tb[j] * &self.forms[r].t_inv;
                    for k in 0..n {
                        for m in 0..n {
                            l[(p * n + k, r * n + m)] += cx(w * blk[(k, m)], 0.0);
                        }
                    }
                }
            }
        }
        let mut a = Vec::with_capacity(dim);
        for form in &self.forms {
            a.extend_from_slice(&form.a_tilde);
        }
        let mut f = vec![cx(0.0, 0.0); dim];
        if let Some(fq) = forcing {
            for (p, form) in self.forms.iter().enumerate() {
                for k in 0..n {
                    let mut acc = cx(0.0, 0.0);
                    for m in 0..n {
                        acc += fq[p * n + m] * form.t[(k, m)];
                    }
                    f[p * n + k] = acc;
                }
            }
        }
        for (p, tags) in self.disc.wall_zero.iter().enumerate() {
            for &k in tags {
                if k >= n {
                    return Err(SystemError::Dimension(format!("wall tag {k} exceeds {n} variables")));
                }
                let row = p * n + k;
                a[row] = 0.0;
                f[row] = cx(0.0, 0.0);
                for c in 0..dim {
                    l[(row, c)] = cx(if c == row { 1.0 } else { 0.0 }, 0.0);
                }
            }
        }
        let active: Vec<usize> = (0..dim).filter(|&i| a[i] != 0.0).collect();
        let zero: Vec<usize> = (0..dim).filter(|&i| a[i] == 0.0).collect();
        Ok(GlobalParts { l, a, f, active, zero })
    }

    fn regular(&self, s: c64, omega_t: &[f64], parts: GlobalParts) -> OperatorM {
        let GlobalParts { l, a, f, active, .. } = parts;
        let dim = a.len();
        let m = Mat::from_fn(dim, dim, |i, j| -l[(i, j)] / a[i]);
        let g_hat: Vec<c64> = (0..dim).map(|i| f[i] / a[i]).collect();
        OperatorM {
            m,
            s,
            omega_t: omega_t.to_vec(),
            g_hat,
            row_signs: a.iter().map(|&v| if v > 0.0 { 1 } else { -1 }).collect(),
            active,
            n_vars: self.n_vars(),
            node_count: self.node_count(),
            t_inv: self.forms.iter().map(|f| f.t_inv.clone()).collect(),
            reduction: None,
            station: None,
        }
    }

    fn eliminate(
        &self,
        s: c64,
        omega_t: &[f64],
        parts: GlobalParts,
    ) -> Result<(OperatorM, SingularReduction), SystemError> {
        let GlobalParts { l, a, f, active, zero } = parts;
        let l_pp = select(l.as_ref(), &active, &active);
        let l_p0 = select(l.as_ref(), &active, &zero);
        let l_0p = select(l.as_ref(), &zero, &active);
        let l_00 = select(l.as_ref(), &zero, &zero);
        let cond = cond2(l_00.as_ref())?;
        if !(cond <= SINGULAR_BLOCK_COND) {
            return Err(SystemError::SingularBlock { cond });
        }
        let lu = DenseLu::new(l_00.as_ref()).map_err(|_| SystemError::SingularBlock { cond })?;
        let l00_inv_l0p = lu.solve_mat(l_0p.as_ref());
        let f0: Vec<c64> = zero.iter().map(|&i| f[i]).collect();
        let l00_inv_f0 = lu.solve_vec(&f0);
        let na = active.len();
        let schur = &l_pp - &l_p0 * &l00_inv_l0p;
        let a_pm: Vec<f64> = active.iter().map(|&i| a[i]).collect();
        let m = Mat::from_fn(na, na, |i, j| -schur[(i, j)] / a_pm[i]);
        let coupling = crate::linalg::matvec(l_p0.as_ref(), &l00_inv_f0);
        let g_hat: Vec<c64> = (0..na).map(|i| (f[active[i]] - coupling[i]) / a_pm[i]).collect();
        let red = SingularReduction {
            active: active.clone(),
            zero,
            l_pp,
            l_p0,
            l_0p,
            l_00,
            a_tilde_pm: a_pm.clone(),
            f0,
            l00_inv_l0p,
            l00_inv_f0,
            cond_l00: cond,
        };
        let op = OperatorM {
            m,
            s,
            omega_t: omega_t.to_vec(),
            g_hat,
            row_signs: a_pm.iter().map(|&v| if v > 0.0 { 1 } else { -1 }).collect(),
            active,
            n_vars: self.n_vars(),
            node_count: self.node_count(),
            t_inv: self.forms.iter().map(|f| f.t_inv.clone()).collect(),
            reduction: Some(red.clone()),
            station: None,
        };
        Ok((op, red))
    }
}

struct GlobalParts {
    l: CMat,
    a: Vec<f64>,
    f: Vec<c64>,
    active: Vec<usize>,
    zero: Vec<usize>,
}

/// Elimination data for zero characteristic speeds.
#[derive(Debug, Clone)]
pub struct SingularReduction {
    pub active: Vec<usize>,
    pub zero: Vec<usize>,
    pub l_pp: CMat,
    pub l_p0: CMat,
    pub l_0p: CMat,
    pub l_00: CMat,
    pub a_tilde_pm: Vec<f64>,
    pub f0: Vec<c64>,
    l00_inv_l0p: CMat,
    l00_inv_f0: Vec<c64>,
    pub cond_l00: f64,
}

impl SingularReduction {
    /// `φ₀ = L00⁻¹ (f₀ - L0± φ±)`.
    pub fn recover_zero(&self, phi_pm: &[c64]) -> Vec<c64> {
        let t = crate::linalg::matvec(self.l00_inv_l0p.as_ref(), phi_pm);
        self.l00_inv_f0.iter().zip(&t).map(|(a, b)| a - b).collect()
    }

    /// Residual of the algebraic rows `L0± φ± + L00 φ₀ - f₀`, relative.
    pub fn algebraic_residual(&self, phi_pm: &[c64], phi0: &[c64]) -> f64 {
        let a = crate::linalg::matvec(self.l_0p.as_ref(), phi_pm);
        let b = crate::linalg::matvec(self.l_00.as_ref(), phi0);
        let r: Vec<c64> = (0..a.len()).map(|i| a[i] + b[i] - self.f0[i]).collect();
        let scale = crate::linalg::vnorm(&a) + crate::linalg::vnorm(&b) + crate::linalg::vnorm(&self.f0);
        crate::linalg::vnorm(&r) / scale.max(f64::MIN_POSITIVE)
    }
}

/// `dφ/dx = M φ + ĝ` at one station and one Laplace/Fourier parameter set.
#[derive(Debug, Clone)]
pub struct OperatorM {
    pub m: CMat,
    pub s: c64,
    pub omega_t: Vec<f64>,
    pub g_hat: Vec<c64>,
    /// Sign of `Ã` on each retained row; partitions eigenvector rows.
    pub row_signs: Vec<i8>,
    /// Global indices of the retained rows.
    pub active: Vec<usize>,
    pub n_vars: usize,
    pub node_count: usize,
    pub t_inv: Vec<Mat<f64>>,
    pub reduction: Option<SingularReduction>,
    pub station: Option<usize>,
}

impl OperatorM {
    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_plus(&self) -> usize {
        self.row_signs.iter().filter(|&&v| v > 0).count()
    }

    pub fn n_minus(&self) -> usize {
        self.row_signs.iter().filter(|&&v| v < 0).count()
    }

    pub fn plus_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.row_signs[i] > 0).collect()
    }

    pub fn minus_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.row_signs[i] < 0).collect()
    }

    /// Full characteristic vector including eliminated components.
    pub fn full_characteristic(&self, phi: &[c64]) -> Vec<c64> {
        let dim = self.n_vars * self.node_count;
        let mut out = vec![cx(0.0, 0.0); dim];
        for (i, &g) in self.active.iter().enumerate() {
            out[g] = phi[i];
        }
        if let Some(r) = &self.reduction {
            for (v, &g) in r.recover_zero(phi).into_iter().zip(&r.zero) {
                out[g] = v;
            }
        }
        out
    }

    /// Primitive variables `q = T⁻¹ φ` node by node.
    pub fn to_primitive(&self, phi: &[c64]) -> Vec<c64> {
        let full = self.full_characteristic(phi);
        let n = self.n_vars;
        let mut q = vec![cx(0.0, 0.0); full.len()];
        for p in 0..self.node_count {
            let ti = &self.t_inv[p];
            for i in 0..n {
                let mut acc = cx(0.0, 0.0);
                for k in 0..n {
                    acc += full[p * n + k] * ti[(i, k)];
                }
                q[p * n + i] = acc;
            }
        }
        q
    }
}

/// Uniform-system convenience wrapper.
pub fn assemble_operator(
    form: &CharacteristicForm,
    disc: &TransverseDiscretization,
    s: c64,
    omega_t: &[f64],
    forcing: Option<&[c64]>,
) -> Result<OperatorM, SystemError> {
    let sys = SemiDiscreteSystem {
        forms: vec![Arc::new(form.clone()); disc.node_count],
        disc: Arc::new(disc.clone()),
    };
    sys.assemble(s, omega_t, forcing)
}

pub fn reduce_singular(
    form: &CharacteristicForm,
    disc: &TransverseDiscretization,
    s: c64,
    omega_t: &[f64],
    forcing: Option<&[c64]>,
) -> Result<(OperatorM, SingularReduction), SystemError> {
    let sys = SemiDiscreteSystem {
        forms: vec![Arc::new(form.clone()); disc.node_count],
        disc: Arc::new(disc.clone()),
    };
    sys.reduce_singular(s, omega_t, forcing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TransverseDiscretization;

    fn scalar(a: f64) -> HyperbolicSystem {
        HyperbolicSystem::new(vec![vec![a]], vec![], vec![vec![0.0]], 1).unwrap()
    }

    #[test]
    fn scalar_generator() {
        let sys = SemiDiscreteSystem::uniform(&scalar(2.0), TransverseDiscretization::single_node(0)).unwrap();
        let op = sys.assemble(cx(0.0, 3.0), &[], None).unwrap();
        assert_eq!(op.n(), 1);
        assert!((op.m[(0, 0)] - cx(0.0, -1.5)).norm() < 1e-15);
    }

    #[test]
    fn negative_real_laplace_rejected() {
        let sys = SemiDiscreteSystem::uniform(&scalar(1.0), TransverseDiscretization::single_node(0)).unwrap();
        assert!(matches!(sys.assemble(cx(-1.0, 0.0), &[], None), Err(SystemError::BadLaplace(_))));
    }

    #[test]
    fn regular_system_is_not_singular() {
        let sys = SemiDiscreteSystem::uniform(&scalar(1.0), TransverseDiscretization::single_node(0)).unwrap();
        assert!(matches!(sys.reduce_singular(cx(0.0, 1.0), &[], None), Err(SystemError::NotSingular)));
    }

    #[test]
    fn hand_reduction_recovers_half() {
        // Ã = diag(1, -1, 0); L00 = 2 and L0± = (1, 0) once s = 2 and C couples row 2 to var 0.
        let a = vec![vec![1.0, 0.0, 0.0], vec![0.0, -1.0, 0.0], vec![0.0, 0.0, 0.0]];
        let c = vec![vec![0.0; 3], vec![0.0; 3], vec![1.0, 0.0, 0.0]];
        let sys = HyperbolicSystem::new(a, vec![], c, 1).unwrap();
        let sd = SemiDiscreteSystem::uniform(&sys, TransverseDiscretization::single_node(0)).unwrap();
        let (op, red) = sd.reduce_singular(cx(2.0, 0.0), &[], None).unwrap();
        assert_eq!(op.n(), 2);
        let phi0 = red.recover_zero(&[cx(3.0, 1.0), cx(7.0, 0.0)]);
        assert!((phi0[0] - cx(-1.5, -0.5)).norm() < 1e-15);
    }
}

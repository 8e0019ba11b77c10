//! Truncated Fock representation of one or more bosonic modes, either as a
//! pure state vector or as a density matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::ops;
use crate::ancilla::AncillaMoments;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum FockRepr {
    Pure(DVector<C64>),
    Mixed(DMatrix<C64>),
}

/// State of `dims.len()` modes with per-mode Fock cutoffs `dims`.
#[derive(Debug, Clone)]
pub struct FockDensity {
    pub dims: Vec<usize>,
    pub repr: FockRepr,
}

impl FockDensity {
    pub fn pure(dims: Vec<usize>, v: DVector<C64>) -> Self {
        assert_eq!(v.len(), dims.iter().product::<usize>());
        FockDensity {
            dims,
            repr: FockRepr::Pure(v),
        }
    }

    pub fn mixed(dims: Vec<usize>, rho: DMatrix<C64>) -> Self {
        let d: usize = dims.iter().product();
        assert_eq!(rho.nrows(), d);
        assert_eq!(rho.ncols(), d);
        FockDensity {
            dims,
            repr: FockRepr::Mixed(rho),
        }
    }

    pub fn vacuum(modes: usize, cutoff: usize) -> Self {
        let mut v = DVector::zeros(cutoff.pow(modes as u32));
        v[0] = C64::from(1.0);
        FockDensity::pure(vec![cutoff; modes], v)
    }

    pub fn n_modes(&self) -> usize {
        self.dims.len()
    }

    pub fn cutoff(&self) -> usize {
        self.dims[0]
    }

    pub fn trace(&self) -> f64 {
        match &self.repr {
            FockRepr::Pure(v) => v.iter().map(|z| z.norm_sqr()).sum(),
            FockRepr::Mixed(r) => r.diagonal().iter().map(|z| z.re).sum(),
        }
    }

    pub fn trace_deficit(&self) -> f64 {
        1.0 - self.trace()
    }

    pub fn normalize(&mut self) {
        let t = self.trace();
        if t <= 0.0 {
            return;
        }
        match &mut self.repr {
            FockRepr::Pure(v) => *v /= C64::from(t.sqrt()),
            FockRepr::Mixed(r) => *r /= C64::from(t),
        }
    }

    pub fn purity(&self) -> f64 {
        match &self.repr {
            FockRepr::Pure(v) => {
                let n: f64 = v.iter().map(|z| z.norm_sqr()).sum();
                n * n
            }
            FockRepr::Mixed(r) => (r * r).diagonal().iter().map(|z| z.re).sum(),
        }
    }

    /// Population found in the top `layers` Fock levels of mode `mode`,
    /// normalized by the trace.
    pub fn tail_mass(&self, mode: usize, layers: usize) -> f64 {
        let d = self.dims[mode];
        let lo = d.saturating_sub(layers);
        let stride: usize = self.dims[mode + 1..].iter().product();
        let outer: usize = self.dims[..mode].iter().product();
        let mut mass = 0.0;
        match &self.repr {
            FockRepr::Pure(v) => {
                for o in 0..outer {
                    for k in lo..d {
                        for s in 0..stride {
                            mass += v[(o * d + k) * stride + s].norm_sqr();
                        }
                    }
                }
            }
            FockRepr::Mixed(r) => {
                for o in 0..outer {
                    for k in lo..d {
                        for s in 0..stride {
                            let idx = (o * d + k) * stride + s;
                            mass += r[(idx, idx)].re;
                        }
                    }
                }
            }
        }
        mass / self.trace()
    }

    pub fn check_tail(&self, layers: usize, tol: f64) -> Result<()> {
        for mode in 0..self.n_modes() {
            let tail = self.tail_mass(mode, layers);
            if tail > tol {
                return Err(Error::TruncationTail {
                    tail,
                    tol,
                    cutoff: self.dims[mode],
                });
            }
        }
        Ok(())
    }

    /// Hermiticity and positive semidefiniteness within `tol` (mixed states).
    pub fn is_physical(&self, tol: f64) -> bool {
        match &self.repr {
            FockRepr::Pure(_) => true,
            FockRepr::Mixed(r) => {
                let herm = (r - r.adjoint())
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                if herm > tol {
                    return false;
                }
                let eig = nalgebra::SymmetricEigen::new(r.clone());
                eig.eigenvalues.iter().all(|&l| l > -tol)
            }
        }
    }

    /// Expectation value of a single-mode operator; the state must have one
    /// mode and the operator may be larger than the cutoff (state is padded).
    pub fn expect(&self, op: &DMatrix<C64>) -> f64 {
        assert_eq!(self.n_modes(), 1);
        let d = self.dims[0];
        let dop = op.nrows();
        assert!(dop >= d);
        match &self.repr {
            FockRepr::Pure(v) => {
                let mut acc = C64::default();
                for i in 0..d {
                    for j in 0..d {
                        acc += v[i].conj() * op[(i, j)] * v[j];
                    }
                }
                acc.re
            }
            FockRepr::Mixed(r) => {
                let mut acc = C64::default();
                for i in 0..d {
                    for j in 0..d {
                        acc += op[(i, j)] * r[(j, i)];
                    }
                }
                acc.re
            }
        }
    }

    /// Overlap `<psi| rho |psi>` with a pure single-mode state.
    pub fn fidelity_pure(&self, psi: &DVector<C64>) -> f64 {
        assert_eq!(self.n_modes(), 1);
        let d = self.dims[0].min(psi.len());
        match &self.repr {
            FockRepr::Pure(v) => {
                let mut ov = C64::default();
                for i in 0..d {
                    ov += psi[i].conj() * v[i];
                }
                ov.norm_sqr()
            }
            FockRepr::Mixed(r) => {
                let mut acc = C64::default();
                for i in 0..d {
                    for j in 0..d {
                        acc += psi[i].conj() * r[(i, j)] * psi[j];
                    }
                }
                acc.re
            }
        }
    }

    /// Weyl-symmetric moment summary of a single-mode state, through fourth
    /// order in x and second in p.
    pub fn moments(&self) -> Result<AncillaMoments> {
        assert_eq!(self.n_modes(), 1, "moment summary is single-mode");
        let t = self.trace();
        if (t - 1.0).abs() > 1e-6 {
            return Err(Error::NotNormalized(t));
        }
        // operators built with headroom so truncated products stay faithful
        let d = self.dims[0] + 4;
        let x = ops::x_op(d).map(C64::from);
        let p = ops::p_op(d);
        let x2 = &x * &x;
        let x3 = &x2 * &x;
        let x4 = &x2 * &x2;
        let sym_xp = (&x * &p + &p * &x) * C64::from(0.5);
        let sym_x2p = (&x2 * &p + &p * &x2) * C64::from(0.5);
        let ex = self.expect(&x);
        let ep = self.expect(&p);
        let ex2 = self.expect(&x2);
        let ep2 = self.expect(&(&p * &p));
        let ex3 = self.expect(&x3);
        let ex4 = self.expect(&x4);
        let exp_sym = self.expect(&sym_xp);
        let ex2p_sym = self.expect(&sym_x2p);
        Ok(AncillaMoments {
            mean_x: ex,
            mean_p: ep,
            var_x: ex2 - ex * ex,
            var_p: ep2 - ep * ep,
            cov_xp: exp_sym - ex * ep,
            ex2,
            var_x2: ex4 - ex2 * ex2,
            cov_x2_p: ex2p_sym - ex2 * ep,
            cov_x_x2: ex3 - ex * ex2,
        })
    }

    /// Density-matrix form (single- and two-mode states only).
    pub fn to_mixed(&self) -> FockDensity {
        match &self.repr {
            FockRepr::Mixed(_) => self.clone(),
            FockRepr::Pure(v) => {
                assert!(
                    self.dims.iter().product::<usize>() <= 4096,
                    "density matrix would be too large"
                );
                let rho = v * v.adjoint();
                FockDensity::mixed(self.dims.clone(), rho)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fock_vector(amps: &[(usize, C64)], dim: usize) -> DVector<C64> {
        let mut v = DVector::zeros(dim);
        for &(n, a) in amps {
            v[n] = a;
        }
        v
    }

    #[test]
    fn vacuum_moments() {
        let st = FockDensity::vacuum(1, 12);
        let m = st.moments().unwrap();
        assert!((m.var_x - 0.5).abs() < 1e-12);
        assert!((m.var_p - 0.5).abs() < 1e-12);
        assert!((m.var_x2 - 0.5).abs() < 1e-12);
        assert!(m.cov_x2_p.abs() < 1e-12);
        assert!(m.cov_xp.abs() < 1e-12);
        assert!(m.cov_x_x2.abs() < 1e-12);
        assert!((m.ex2 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_photon_moments() {
        let v = fock_vector(&[(1, C64::from(1.0))], 12);
        let st = FockDensity::pure(vec![12], v);
        let m = st.moments().unwrap();
        assert!((m.var_x - 1.5).abs() < 1e-12);
        assert!((m.var_p - 1.5).abs() < 1e-12);
        assert!((m.ex2 - 1.5).abs() < 1e-12);
        // <x^4> on |1> is 15/4, so var(x^2) = 15/4 - 9/4 = 3/2
        assert!((m.var_x2 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn tail_and_purity() {
        let v = fock_vector(&[(0, C64::from(0.6)), (9, C64::from(0.8))], 10);
        let st = FockDensity::pure(vec![10], v);
        assert!((st.tail_mass(0, 2) - 0.64).abs() < 1e-12);
        assert!(st.check_tail(2, 1e-8).is_err());
        assert!((st.purity() - 1.0).abs() < 1e-12);
        let mixed = st.to_mixed();
        assert!((mixed.purity() - 1.0).abs() < 1e-12);
        assert!(mixed.is_physical(1e-10));
    }
}

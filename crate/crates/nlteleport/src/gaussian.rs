//! Two-mode Gaussian states: symplectic transformations and construction of
//! the general cluster state from squeezed thermal inputs.
//!
//! Conventions used across the whole crate:
//! * quadrature ordering `(x_A, p_A, x_B, p_B)`,
//! * commutator `[x, p] = i`, vacuum variance `1/2`,
//! * a squeezing parameter `r` changes a quadrature variance by the factor
//!   `exp(r)`, so "s dB of squeezing" means a variance ratio of `10^(s/10)`.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Generation parameters of the two-mode cluster state: two squeezers,
/// a single-mode rotation, a beam splitter, two output rotations, x-quadrature
/// displacements and the thermal noise of the inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub r1: f64,
    pub r2: f64,
    pub phi: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub t_c: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub n: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            r1: 0.0,
            r2: 0.0,
            phi: 0.0,
            phi1: 0.0,
            phi2: 0.0,
            t_c: 1.0,
            alpha1: 0.0,
            alpha2: 0.0,
            n: 0.0,
        }
    }
}

impl ClusterParams {
    /// Symmetric two-mode squeezed vacuum with `db` decibel of squeezing in
    /// both squeezers, mixed on a balanced beam splitter.
    pub fn two_mode_squeezed(db: f64) -> Self {
        let r = db_to_r(db);
        ClusterParams {
            r1: r,
            r2: r,
            t_c: std::f64::consts::FRAC_1_SQRT_2,
            ..ClusterParams::default()
        }
    }

    pub fn validate(&self, s_max_db: f64) -> Result<()> {
        for r in [self.r1, self.r2] {
            let db = squeezing_db(r).abs();
            if db > s_max_db + 1e-12 {
                return Err(Error::SqueezeBound {
                    value_db: db,
                    bound_db: s_max_db,
                });
            }
        }
        if !(0.0..=1.0).contains(&self.t_c) {
            return Err(Error::OutOfRange {
                name: "t_c",
                value: self.t_c,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if self.n < 0.0 {
            return Err(Error::OutOfRange {
                name: "n",
                value: self.n,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        Ok(())
    }
}

/// 4×4 covariance matrix and mean vector of a two-mode Gaussian state in the
/// `(x_A, p_A, x_B, p_B)` ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    pub gamma: Matrix4<f64>,
    pub mean: Vector4<f64>,
}

impl CovarianceState {
    pub fn vacuum() -> Self {
        CovarianceState {
            gamma: Matrix4::identity() * 0.5,
            mean: Vector4::zeros(),
        }
    }

    pub fn var_x_a(&self) -> f64 {
        self.gamma[(0, 0)]
    }
    pub fn var_p_a(&self) -> f64 {
        self.gamma[(1, 1)]
    }
    pub fn var_x_b(&self) -> f64 {
        self.gamma[(2, 2)]
    }
    pub fn var_p_b(&self) -> f64 {
        self.gamma[(3, 3)]
    }
    pub fn cov_x_a_x_b(&self) -> f64 {
        self.gamma[(0, 2)]
    }
    pub fn cov_p_a_p_b(&self) -> f64 {
        self.gamma[(1, 3)]
    }

    /// Smallest eigenvalue of `gamma + (i/2) Omega`; non-negative (up to
    /// numerical slack) for any physical state.
    pub fn uncertainty_margin(&self) -> f64 {
        let omega = symplectic_form();
        let mut h = nalgebra::Matrix4::<C64>::zeros();
        for i in 0..4 {
            for j in 0..4 {
                h[(i, j)] = C64::new(self.gamma[(i, j)], 0.5 * omega[(i, j)]);
            }
        }
        let eig = nalgebra::SymmetricEigen::new(h);
        eig.eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Symplectic eigenvalues `(nu_minus, nu_plus)`: moduli of the eigenvalue
    /// pairs of `Omega gamma`. Both equal `1/2` for a pure state.
    pub fn symplectic_eigenvalues(&self) -> (f64, f64) {
        let m = symplectic_form() * self.gamma;
        let mut nus: Vec<f64> = m.complex_eigenvalues().iter().map(|l| l.norm()).collect();
        nus.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (0.5 * (nus[0] + nus[1]), 0.5 * (nus[2] + nus[3]))
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        let sym = (self.gamma - self.gamma.transpose()).abs().max();
        sym < tol && self.uncertainty_margin() > -tol
    }
}

/// Standard symplectic form for `(x_A, p_A, x_B, p_B)`.
pub fn symplectic_form() -> Matrix4<f64> {
    #[rustfmt::skip]
    let omega = Matrix4::new(
        0.0, 1.0, 0.0, 0.0,
        -1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, -1.0, 0.0,
    );
    omega
}

/// `true` iff `M Omega M^T = Omega` within `1e-12` elementwise.
pub fn symplectic_check(m: &Matrix4<f64>) -> bool {
    let omega = symplectic_form();
    let diff = m * omega * m.transpose() - omega;
    diff.abs().max() < 1e-12
}

/// Orthogonal squeezers: mode A squeezed in x, mode B squeezed in p,
/// `g_i = exp(r_i / 2)`.
pub fn squeezer_matrix(r1: f64, r2: f64) -> Matrix4<f64> {
    let g1 = (r1 / 2.0).exp();
    let g2 = (r2 / 2.0).exp();
    Matrix4::from_diagonal(&Vector4::new(1.0 / g1, g1, g2, 1.0 / g2))
}

/// Beam splitter with transmissivity `t`, reflectivity `sqrt(1 - t^2)`.
pub fn beam_splitter_matrix(t: f64) -> Matrix4<f64> {
    let r = (1.0 - t * t).max(0.0).sqrt();
    #[rustfmt::skip]
    let m = Matrix4::new(
        t, 0.0, r, 0.0,
        0.0, t, 0.0, r,
        -r, 0.0, t, 0.0,
        0.0, -r, 0.0, t,
    );
    m
}

fn rot2(phi: f64) -> Matrix2<f64> {
    Matrix2::new(phi.cos(), phi.sin(), -phi.sin(), phi.cos())
}

/// Rotation acting on mode A only.
pub fn rotation_single_matrix(phi: f64) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&rot2(phi));
    m
}

/// Independent rotations on both modes.
pub fn rotation_pair_matrix(phi1: f64, phi2: f64) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&rot2(phi1));
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&rot2(phi2));
    m
}

/// Covariance matrix and mean of the cluster state: squeezed thermal inputs,
/// a rotation on mode A, a beam splitter and output rotations, followed by
/// x displacements. The squeezers are checked against the `s_max_db` bound.
pub fn build_cluster(params: &ClusterParams, s_max_db: f64) -> Result<CovarianceState> {
    params.validate(s_max_db)?;
    let gamma_in = Matrix4::identity() * (0.5 * (1.0 + params.n));
    // squeeze first, then rotate mode A, mix, rotate the outputs
    let s = rotation_single_matrix(params.phi) * squeezer_matrix(params.r1, params.r2);
    let s = beam_splitter_matrix(params.t_c) * s;
    let s = rotation_pair_matrix(params.phi1, params.phi2) * s;
    let gamma = s * gamma_in * s.transpose();
    let mean = Vector4::new(params.alpha1, 0.0, params.alpha2, 0.0);
    Ok(CovarianceState { gamma, mean })
}

/// Variance change of a squeezer with parameter `r`, in dB.
pub fn squeezing_db(r: f64) -> f64 {
    10.0 * r.exp().log10()
}

/// Squeezing parameter whose variance factor is `10^(db/10)`.
pub fn db_to_r(db: f64) -> f64 {
    db / 10.0 * std::f64::consts::LN_10
}

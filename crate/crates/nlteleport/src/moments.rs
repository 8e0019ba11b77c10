//! Analytic backend: the output variance `var(p_out + z x_out^2)` of the
//! three schemes, evaluated by Gaussian moment reduction on the cluster
//! covariance plus the auxiliary state's moment summary.
//!
//! The quantum variance of the Hermitian combination only ever needs
//! Weyl-symmetric mixed moments, which for a Gaussian state coincide with
//! classical moments of its covariance matrix; Stein's lemma reduces the
//! fourth-order pieces to covariance entries. The auxiliary mode enters as an
//! independent, x-symmetric state (`<x_Q> = 0`, `cov(x_Q, p_Q) = 0`,
//! `cov(x_Q, x_Q^2) = 0`), which removes every mixed term except the ones
//! carried by `<x_Q^2>`, `var(x_Q^2)` and `cov(x_Q^2, p_Q)`.
//!
//! The measured p quadrature of the nonlinear scheme is rotated by
//! `phi(m_x) = -atan(sqrt(2) chi m_x)`; its exact tangent makes the
//! feedforward term `-sqrt(2) chi (t x_A + r x_Q)(r x_A - t x_Q)` and leaves
//! a fluctuating `cos(phi)` prefactor that this backend linearizes to the
//! constant `alpha_lin` (the exact reference is the Fock backend).

use crate::ancilla::AncillaMoments;
use crate::error::{Error, Result};
use crate::gaussian::CovarianceState;
use crate::metrics::{self, NativeCubicity, ScanOpts};

/// Which measurement-and-feedforward scheme runs on the cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Beam splitter, dual homodyne, linear displacement feedforward.
    Canonical,
    /// Same optics with the measurement-dependent basis rotation.
    Nonlinear,
    /// Projection onto displaced ideal cubic states on mode A.
    IdealCubic,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Canonical => "canonical",
            Scheme::Nonlinear => "nonlinear",
            Scheme::IdealCubic => "ideal-cubic",
        }
    }
}

/// Gains and strengths of one scheme instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Transmissivity of the homodyne-stage beam splitter.
    pub t: f64,
    /// x-feedforward gain.
    pub d_f: f64,
    /// p-feedforward gain.
    pub g_f: f64,
    /// p gain of the ideal-cubic scheme.
    pub g_p: f64,
    /// Feedforward / cubic strength.
    pub chi: f64,
    /// Stand-in constant for the fluctuating cos of the rotation angle.
    pub alpha_lin: f64,
}

pub const GAIN_BOUND: f64 = 2.0;
pub const CHI_BOUND: f64 = 2.0;

impl SchemeConfig {
    pub fn canonical(t: f64, d_f: f64, g_f: f64) -> Self {
        SchemeConfig {
            scheme: Scheme::Canonical,
            t,
            d_f,
            g_f,
            g_p: 0.0,
            chi: 0.0,
            alpha_lin: 1.0,
        }
    }

    pub fn nonlinear(t: f64, d_f: f64, g_f: f64, chi: f64) -> Self {
        SchemeConfig {
            scheme: Scheme::Nonlinear,
            t,
            d_f,
            g_f,
            g_p: 0.0,
            chi,
            alpha_lin: 1.0,
        }
    }

    pub fn ideal_cubic(g_p: f64, chi: f64) -> Self {
        SchemeConfig {
            scheme: Scheme::IdealCubic,
            t: 1.0,
            d_f: 0.0,
            g_f: 0.0,
            g_p,
            chi,
            alpha_lin: 1.0,
        }
    }

    /// Balanced beam splitter with gains chosen so the output reproduces the
    /// input exactly in the infinite-squeezing limit
    /// (`x_out = x_Q + x_B - x_A`, `p_out = p_Q + p_A + p_B`).
    pub fn unity_gain(scheme: Scheme, chi: f64) -> Self {
        let s2 = 2f64.sqrt();
        let chi = if scheme == Scheme::Canonical {
            0.0
        } else {
            chi
        };
        SchemeConfig {
            scheme,
            t: std::f64::consts::FRAC_1_SQRT_2,
            d_f: s2,
            g_f: s2,
            g_p: 1.0,
            chi,
            alpha_lin: 1.0,
        }
    }

    pub fn reflectivity(&self) -> f64 {
        (1.0 - self.t * self.t).max(0.0).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.t) {
            return Err(Error::OutOfRange {
                name: "t",
                value: self.t,
                lo: 0.0,
                hi: 1.0,
            });
        }
        for (name, v) in [("d_F", self.d_f), ("g_F", self.g_f), ("g_p", self.g_p)] {
            if v.abs() > GAIN_BOUND + 1e-12 {
                return Err(Error::OutOfRange {
                    name,
                    value: v,
                    lo: -GAIN_BOUND,
                    hi: GAIN_BOUND,
                });
            }
        }
        if self.chi.abs() > CHI_BOUND + 1e-12 {
            return Err(Error::OutOfRange {
                name: "chi",
                value: self.chi,
                lo: -CHI_BOUND,
                hi: CHI_BOUND,
            });
        }
        if self.scheme == Scheme::Canonical && self.chi != 0.0 {
            return Err(Error::Invalid(
                "canonical teleportation requires chi = 0".into(),
            ));
        }
        Ok(())
    }
}

/// Second moments of the output mode plus the nonlinear combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputMoments {
    pub var_x_out: f64,
    pub var_p_out: f64,
    /// `var(p_out + z x_out^2)`.
    pub numerator: f64,
    pub mean_x_out: f64,
}

/// Cluster quadratures, indexing the covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quad {
    XA = 0,
    PA = 1,
    XB = 2,
    PB = 3,
}

impl Quad {
    fn i(self) -> usize {
        self as usize
    }
    fn is_x(self) -> bool {
        matches!(self, Quad::XA | Quad::XB)
    }
    fn is_p(self) -> bool {
        !self.is_x()
    }
}

/// The Weyl-symmetric moment shapes of cluster quadratures that the variance
/// expansions need. Anything else is rejected; there is no generic path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentShape {
    /// `cov(q1, q2)` straight from the covariance matrix.
    Cov(Quad, Quad),
    /// `cov(p, x^2) = 2 <x> cov(x, p)`.
    CovPXsq { p: Quad, x: Quad },
    /// `cov(p, x_A x_B) = <x_A> cov(x_B, p) + <x_B> cov(x_A, p)`.
    CovPXaXb { p: Quad },
    /// `var(x^2) = 4 var(x) <x>^2 + 2 var(x)^2`.
    VarXsq { x: Quad },
    /// `cov(x_A^2, x_B^2) = 4 cov <x_A><x_B> + 2 cov^2`.
    CovXsqXsq,
    /// `cov(x_i^2, x_A x_B)`; `x` names the squared quadrature.
    CovXsqXaXb { x: Quad },
    /// `var(x_A x_B)`.
    VarXaXb,
}

/// Numeric value of a reduced moment on a Gaussian state.
pub fn stein_reduce(shape: MomentShape, st: &CovarianceState) -> Result<f64> {
    let g = &st.gamma;
    let m = &st.mean;
    let cov = |a: Quad, b: Quad| g[(a.i(), b.i())];
    let mean = |a: Quad| m[a.i()];
    match shape {
        MomentShape::Cov(a, b) => Ok(cov(a, b)),
        MomentShape::CovPXsq { p, x } => {
            if !p.is_p() || !x.is_x() {
                return Err(Error::UnknownMomentShape(format!("{shape:?}")));
            }
            Ok(2.0 * mean(x) * cov(x, p))
        }
        MomentShape::CovPXaXb { p } => {
            if !p.is_p() {
                return Err(Error::UnknownMomentShape(format!("{shape:?}")));
            }
            Ok(mean(Quad::XA) * cov(Quad::XB, p) + mean(Quad::XB) * cov(Quad::XA, p))
        }
        MomentShape::VarXsq { x } => {
            if !x.is_x() {
                return Err(Error::UnknownMomentShape(format!("{shape:?}")));
            }
            let v = cov(x, x);
            Ok(4.0 * v * mean(x) * mean(x) + 2.0 * v * v)
        }
        MomentShape::CovXsqXsq => {
            let c = cov(Quad::XA, Quad::XB);
            Ok(4.0 * c * mean(Quad::XA) * mean(Quad::XB) + 2.0 * c * c)
        }
        MomentShape::CovXsqXaXb { x } => {
            if !x.is_x() {
                return Err(Error::UnknownMomentShape(format!("{shape:?}")));
            }
            let other = if x == Quad::XA { Quad::XB } else { Quad::XA };
            let c = cov(Quad::XA, Quad::XB);
            let v = cov(x, x);
            Ok(2.0 * mean(x) * mean(x) * c + 2.0 * mean(other) * mean(x) * v + 2.0 * v * c)
        }
        MomentShape::VarXaXb => {
            let (va, vb) = (cov(Quad::XA, Quad::XA), cov(Quad::XB, Quad::XB));
            let c = cov(Quad::XA, Quad::XB);
            let (ma, mb) = (mean(Quad::XA), mean(Quad::XB));
            Ok(va * mb * mb + 2.0 * c * ma * mb + vb * ma * ma + c * c + va * vb)
        }
    }
}

/// `var(p_B + g_p p_A + g_p chi x_A^2 + z x_B^2)` for the ideal cubic
/// measurement scheme.
pub fn variance_ideal_cubic(
    cluster: &CovarianceState,
    cfg: &SchemeConfig,
    z: f64,
) -> Result<OutputMoments> {
    if cfg.scheme != Scheme::IdealCubic {
        return Err(Error::Invalid("scheme is not ideal-cubic".into()));
    }
    cfg.validate()?;
    let g = cfg.g_p;
    let chi = cfg.chi;
    let red = |s: MomentShape| stein_reduce(s, cluster);

    let numerator_at = |z: f64| -> Result<f64> {
        let mut n = red(MomentShape::Cov(Quad::PB, Quad::PB))?
            + g * g * red(MomentShape::Cov(Quad::PA, Quad::PA))?
            + 2.0 * g * red(MomentShape::Cov(Quad::PA, Quad::PB))?;
        n += 2.0
            * (g * chi
                * red(MomentShape::CovPXsq {
                    p: Quad::PB,
                    x: Quad::XA,
                })?
                + z * red(MomentShape::CovPXsq {
                    p: Quad::PB,
                    x: Quad::XB,
                })?
                + g * g
                    * chi
                    * red(MomentShape::CovPXsq {
                        p: Quad::PA,
                        x: Quad::XA,
                    })?
                + g * z
                    * red(MomentShape::CovPXsq {
                        p: Quad::PA,
                        x: Quad::XB,
                    })?);
        n += g * g * chi * chi * red(MomentShape::VarXsq { x: Quad::XA })?
            + 2.0 * g * chi * z * red(MomentShape::CovXsqXsq)?
            + z * z * red(MomentShape::VarXsq { x: Quad::XB })?;
        Ok(n)
    };

    Ok(OutputMoments {
        var_x_out: cluster.var_x_b(),
        var_p_out: numerator_at(0.0)?,
        numerator: numerator_at(z)?,
        mean_x_out: cluster.mean[Quad::XB.i()],
    })
}

/// `var(p_out + z x_out^2)` for canonical and nonlinear teleportation with
/// generalized gains, with
/// `x_out = x_B + d_F (t x_Q - r x_A)` and
/// `p_out = p_B + g_F a [(t p_A + r p_Q) - sqrt(2) chi (t x_A + r x_Q)(r x_A - t x_Q)]`,
/// `a = alpha_lin` standing in for the cos of the measurement-dependent angle.
pub fn variance_teleportation(
    cluster: &CovarianceState,
    anc: &AncillaMoments,
    cfg: &SchemeConfig,
    z: f64,
) -> Result<OutputMoments> {
    if cfg.scheme == Scheme::IdealCubic {
        return Err(Error::Invalid(
            "ideal-cubic scheme has no teleportation stage".into(),
        ));
    }
    cfg.validate()?;
    anc.check_teleport_assumptions(1e-9)?;
    let (t, r) = (cfg.t, cfg.reflectivity());
    let d = cfg.d_f;
    let ga = cfg.g_f * cfg.alpha_lin;
    let k = 2f64.sqrt() * cfg.chi * ga;
    let red = |s: MomentShape| stein_reduce(s, cluster);

    let mean_a = cluster.mean[Quad::XA.i()];
    let mean_b = cluster.mean[Quad::XB.i()];
    let exq2 = anc.ex2;

    let numerator_at = |z: f64| -> Result<f64> {
        // coefficients of the quadratic monomials in
        // z x_out^2 - g_F a sqrt(2) chi (t x_A + r x_Q)(r x_A - t x_Q)
        let ca_xb2 = z;
        let cb_xqxb = 2.0 * d * t * z;
        let cc_xaxb = -2.0 * d * r * z;
        let cd_xaxq = -2.0 * d * d * t * r * z - k * (r * r - t * t);
        let ce_xa2 = d * d * r * r * z - k * t * r;
        let cf_xq2 = d * d * t * t * z + k * t * r;

        // linear p part
        let mut n = red(MomentShape::Cov(Quad::PB, Quad::PB))?
            + ga * ga * t * t * red(MomentShape::Cov(Quad::PA, Quad::PA))?
            + ga * ga * r * r * anc.var_p
            + 2.0 * ga * t * red(MomentShape::Cov(Quad::PA, Quad::PB))?;

        // symmetrized cross covariances of the p part with the quadratic part
        n += 2.0
            * (ca_xb2
                * red(MomentShape::CovPXsq {
                    p: Quad::PB,
                    x: Quad::XB,
                })?
                + cc_xaxb * red(MomentShape::CovPXaXb { p: Quad::PB })?
                + ce_xa2
                    * red(MomentShape::CovPXsq {
                        p: Quad::PB,
                        x: Quad::XA,
                    })?
                + ga * t
                    * (ca_xb2
                        * red(MomentShape::CovPXsq {
                            p: Quad::PA,
                            x: Quad::XB,
                        })?
                        + cc_xaxb * red(MomentShape::CovPXaXb { p: Quad::PA })?
                        + ce_xa2
                            * red(MomentShape::CovPXsq {
                                p: Quad::PA,
                                x: Quad::XA,
                            })?)
                + ga * r * cf_xq2 * anc.cov_x2_p);

        // variance of the quadratic part; mixed cluster/ancilla moments
        // factor because mode Q is independent of (A, B)
        n += ca_xb2 * ca_xb2 * red(MomentShape::VarXsq { x: Quad::XB })?
            + 2.0 * ca_xb2 * cc_xaxb * red(MomentShape::CovXsqXaXb { x: Quad::XB })?
            + 2.0 * ca_xb2 * ce_xa2 * red(MomentShape::CovXsqXsq)?
            + cb_xqxb
                * cb_xqxb
                * exq2
                * (red(MomentShape::Cov(Quad::XB, Quad::XB))? + mean_b * mean_b)
            + 2.0
                * cb_xqxb
                * cd_xaxq
                * exq2
                * (red(MomentShape::Cov(Quad::XA, Quad::XB))? + mean_a * mean_b)
            + cc_xaxb * cc_xaxb * red(MomentShape::VarXaXb)?
            + 2.0 * cc_xaxb * ce_xa2 * red(MomentShape::CovXsqXaXb { x: Quad::XA })?
            + cd_xaxq
                * cd_xaxq
                * exq2
                * (red(MomentShape::Cov(Quad::XA, Quad::XA))? + mean_a * mean_a)
            + ce_xa2 * ce_xa2 * red(MomentShape::VarXsq { x: Quad::XA })?
            + cf_xq2 * cf_xq2 * anc.var_x2;
        Ok(n)
    };

    let var_x_out =
        cluster.var_x_b() + d * d * t * t * anc.var_x + d * d * r * r * cluster.var_x_a()
            - 2.0 * d * r * cluster.cov_x_a_x_b();

    Ok(OutputMoments {
        var_x_out,
        var_p_out: numerator_at(0.0)?,
        numerator: numerator_at(z)?,
        mean_x_out: mean_b - d * r * mean_a,
    })
}

/// Output numerator for whichever scheme the config names.
pub fn output_numerator(
    cluster: &CovarianceState,
    anc: &AncillaMoments,
    cfg: &SchemeConfig,
    z: f64,
) -> Result<f64> {
    let out = match cfg.scheme {
        Scheme::IdealCubic => variance_ideal_cubic(cluster, cfg, z)?,
        _ => variance_teleportation(cluster, anc, cfg, z)?,
    };
    Ok(out.numerator)
}

/// The numerator is a quadratic polynomial in `z`; coefficients recovered by
/// exact interpolation at `z = 0, 1, -1`.
pub fn numerator_poly(
    cluster: &CovarianceState,
    anc: &AncillaMoments,
    cfg: &SchemeConfig,
) -> Result<[f64; 3]> {
    let n0 = output_numerator(cluster, anc, cfg, 0.0)?;
    let np = output_numerator(cluster, anc, cfg, 1.0)?;
    let nm = output_numerator(cluster, anc, cfg, -1.0)?;
    Ok([n0, 0.5 * (np - nm), 0.5 * (np + nm) - n0])
}

/// Native nonlinear squeezing of the output: the `z` minimizing
/// numerator / Gaussian bound over the bracket.
pub fn native_output_xi(poly: [f64; 3], opts: ScanOpts) -> NativeCubicity {
    metrics::native_cubicity(
        |z| (poly[0] + poly[1] * z + poly[2] * z * z) / metrics::gaussian_min_variance(z),
        opts,
    )
}

/// Closed-form minimization of `(c0 + c1 z + c2 z^2) / (K |z|^(2/3))` over
/// `[z_min, z_max]`: the stationary condition is the quadratic
/// `4 c2 z^2 + c1 z - 2 c0 = 0`, one root per sign of `z`. Ties resolve
/// toward `z <= 0`. Used by the optimizer where the scan would dominate the
/// objective cost; agrees with [`native_output_xi`] to scan precision.
pub fn native_output_xi_closed(poly: [f64; 3], z_min: f64, z_max: f64) -> NativeCubicity {
    let [c0, c1, c2] = poly;
    let xi_at = |z: f64| (c0 + c1 * z + c2 * z * z) / metrics::gaussian_min_variance(z);
    let mut candidates: Vec<f64> = vec![z_min, z_max];
    if c2 > 1e-300 {
        let disc = c1 * c1 + 32.0 * c2 * c0;
        if disc >= 0.0 {
            let s = disc.sqrt();
            candidates.push((-c1 + s) / (8.0 * c2));
            candidates.push((-c1 - s) / (8.0 * c2));
        }
    }
    let mut best = (f64::INFINITY, 0.0f64);
    for mut z in candidates {
        z = z.clamp(z_min, z_max);
        if z.abs() < 1e-9 {
            continue;
        }
        let v = xi_at(z);
        if v < best.0 - 1e-15 || ((v - best.0).abs() <= 1e-15 && z < best.1) {
            best = (v, z);
        }
    }
    if best.0 >= 1.0 - 1e-9 {
        NativeCubicity::Absent {
            z_best: best.1,
            xi: best.0,
        }
    } else {
        NativeCubicity::Found {
            z_n: best.1,
            xi: best.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ancilla::{moments_two_component, AncillaMoments};
    use crate::gaussian::{build_cluster, ClusterParams};

    fn zero_mean_cluster(db: f64) -> CovarianceState {
        build_cluster(&ClusterParams::two_mode_squeezed(db), db).unwrap()
    }

    #[test]
    fn bare_mode_variance_without_feedforward() {
        let vac = CovarianceState::vacuum();
        let cfg = SchemeConfig::ideal_cubic(0.0, 0.0);
        let out = variance_ideal_cubic(&vac, &cfg, 0.0).unwrap();
        assert!((out.numerator - 0.5).abs() < 1e-14);
        assert!((out.var_p_out - 0.5).abs() < 1e-14);
    }

    #[test]
    fn zero_mean_ideal_cubic_reduces_to_six_terms() {
        let cl = zero_mean_cluster(7.0);
        let cfg = SchemeConfig::ideal_cubic(0.9, -0.4);
        let z = 0.3;
        let out = variance_ideal_cubic(&cl, &cfg, z).unwrap();
        let (g, chi) = (cfg.g_p, cfg.chi);
        let (vpa, vpb) = (cl.var_p_a(), cl.var_p_b());
        let cpp = cl.cov_p_a_p_b();
        let (vxa, vxb) = (cl.var_x_a(), cl.var_x_b());
        let cxx = cl.cov_x_a_x_b();
        let want = vpb
            + 2.0 * g * cpp
            + g * g * vpa
            + g * g * chi * chi * 2.0 * vxa * vxa
            + 2.0 * g * chi * z * 2.0 * cxx * cxx
            + z * z * 2.0 * vxb * vxb;
        assert!((out.numerator - want).abs() < 1e-12);
    }

    #[test]
    fn epr_limit_is_an_identity_channel() {
        // numerically infinite squeezing: variance factor 1e6
        let db = 60.0;
        let cl = zero_mean_cluster(db);
        let anc = moments_two_component(0.79).unwrap();
        let cfg = SchemeConfig::unity_gain(Scheme::Canonical, 0.0);
        for z in [0.2, 0.49, 1.1] {
            let out = variance_teleportation(&cl, &anc, &cfg, z).unwrap();
            let own = metrics::nonlinear_variance(&anc, z);
            assert!(
                ((out.numerator - own) / own).abs() < 1e-3,
                "z = {z}: {} vs {own}",
                out.numerator
            );
        }
    }

    #[test]
    fn vacuum_cluster_adds_one_unit_of_x_noise() {
        let vac = CovarianceState::vacuum();
        let anc = moments_two_component(0.6).unwrap();
        let cfg = SchemeConfig::unity_gain(Scheme::Canonical, 0.0);
        let out = variance_teleportation(&vac, &anc, &cfg, 0.3).unwrap();
        assert!((out.var_x_out - (anc.var_x + 1.0)).abs() < 1e-12);
        assert!((out.var_p_out - (anc.var_p + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn canonical_equals_nonlinear_at_zero_chi() {
        let cl = build_cluster(
            &ClusterParams {
                r1: 0.8,
                r2: 0.5,
                phi: 0.2,
                phi1: -0.6,
                phi2: 0.9,
                t_c: 0.7,
                alpha1: 0.4,
                alpha2: -0.2,
                n: 0.05,
            },
            8.0,
        )
        .unwrap();
        let anc = moments_two_component(0.7).unwrap();
        let can = SchemeConfig::canonical(0.6, 1.1, 0.9);
        let nl = SchemeConfig::nonlinear(0.6, 1.1, 0.9, 0.0);
        for z in [-0.7, 0.4, 1.3] {
            let a = variance_teleportation(&cl, &anc, &can, z).unwrap();
            let b = variance_teleportation(&cl, &anc, &nl, z).unwrap();
            assert_eq!(a.numerator, b.numerator);
        }
    }

    #[test]
    fn numerator_is_quadratic_in_z_with_positive_leading_coefficient() {
        let cl = zero_mean_cluster(6.0);
        let anc = moments_two_component(0.79).unwrap();
        let cfg = SchemeConfig::unity_gain(Scheme::Nonlinear, -0.2);
        let poly = numerator_poly(&cl, &anc, &cfg).unwrap();
        assert!(poly[2] > 0.0);
        for z in [-1.7, -0.3, 0.8, 2.4] {
            let direct = output_numerator(&cl, &anc, &cfg, z).unwrap();
            let poly_val = poly[0] + poly[1] * z + poly[2] * z * z;
            assert!((direct - poly_val).abs() < 1e-10 * direct.abs().max(1.0));
        }
        // engine's z minimum matches a direct scan and the closed form
        let native = native_output_xi(poly, ScanOpts::default());
        let mut best = (f64::INFINITY, 0.0);
        let mut z: f64 = -3.0;
        while z <= 3.0 {
            if z.abs() > 1e-6 {
                let xi =
                    (poly[0] + poly[1] * z + poly[2] * z * z) / metrics::gaussian_min_variance(z);
                if xi < best.0 {
                    best = (xi, z);
                }
            }
            z += 1e-3;
        }
        assert!((native.z_best() - best.1).abs() < 2e-3);
        let closed = native_output_xi_closed(poly, -3.0, 3.0);
        assert!((closed.z_best() - native.z_best()).abs() < 1e-5);
        assert!((closed.xi_best() - native.xi_best()).abs() < 1e-9);
    }

    #[test]
    fn exchange_symmetry_in_means_and_strengths() {
        let mut cl = build_cluster(
            &ClusterParams {
                r1: 0.7,
                r2: 0.3,
                phi: 0.4,
                phi1: 0.1,
                phi2: -0.9,
                t_c: 0.75,
                alpha1: 1.3,
                alpha2: -0.8,
                n: 0.0,
            },
            8.0,
        )
        .unwrap();
        let anc = moments_two_component(0.7).unwrap();
        let cfg = SchemeConfig::nonlinear(0.65, 1.2, 1.0, 0.31);
        let z = 0.52;
        let a = variance_teleportation(&cl, &anc, &cfg, z).unwrap();
        // parity flip: cluster x means change sign, the auxiliary state maps
        // to its mirror (c_n -> (-1)^n c_n), and (chi, z) -> (-chi, -z)
        cl.mean = -cl.mean;
        let mut anc_m = anc.clone();
        anc_m.cov_x2_p = -anc.cov_x2_p;
        anc_m.mean_p = -anc.mean_p;
        let cfg_m = SchemeConfig::nonlinear(0.65, 1.2, 1.0, -0.31);
        let b = variance_teleportation(&cl, &anc_m, &cfg_m, -z).unwrap();
        assert!((a.numerator - b.numerator).abs() < 1e-12);
    }

    #[test]
    fn assumption_violations_are_rejected() {
        let cl = zero_mean_cluster(6.0);
        let mut anc = moments_two_component(0.7).unwrap();
        anc.mean_x = 0.2;
        let cfg = SchemeConfig::unity_gain(Scheme::Canonical, 0.0);
        assert!(variance_teleportation(&cl, &anc, &cfg, 0.3).is_err());
        let anc = AncillaMoments::from_gaussian(0.5, 0.5, 0.3, 0.0, 0.0);
        assert!(variance_teleportation(&cl, &anc, &cfg, 0.3).is_err());
    }

    #[test]
    fn unknown_moment_shapes_error_out() {
        let cl = zero_mean_cluster(4.0);
        assert!(stein_reduce(
            MomentShape::CovPXsq {
                p: Quad::XA,
                x: Quad::XB
            },
            &cl
        )
        .is_err());
        assert!(stein_reduce(MomentShape::VarXsq { x: Quad::PB }, &cl).is_err());
    }

    #[test]
    fn table_identities_at_zero_mean() {
        let cl = zero_mean_cluster(5.0);
        // cov(p_B, x_B^2) = 2 <x_B> cov(x_B, p_B) = 0 at zero mean
        assert_eq!(
            stein_reduce(
                MomentShape::CovPXsq {
                    p: Quad::PB,
                    x: Quad::XB
                },
                &cl
            )
            .unwrap(),
            0.0
        );
        // var(x_A^2) = 2 var(x_A)^2 at zero mean
        let v = cl.var_x_a();
        assert!(
            (stein_reduce(MomentShape::VarXsq { x: Quad::XA }, &cl).unwrap() - 2.0 * v * v).abs()
                < 1e-14
        );
    }
}

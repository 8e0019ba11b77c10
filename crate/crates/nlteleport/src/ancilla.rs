//! Teleported/auxiliary states: the two- and three-component Fock
//! superpositions and the finitely squeezed cubic state, together with the
//! moment summaries the analytic engine consumes.

use nalgebra::DVector;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::ops;
use crate::fock::state::FockDensity;
use crate::gaussian::{db_to_r, squeezing_db};
use crate::metrics::{self, ScanOpts};

pub const TAIL_TOL: f64 = 1e-8;

/// Which auxiliary state feeds the scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AncillaSpec {
    /// `u |0> + i sqrt(1 - u^2) |1>` with `0 < u < 1`.
    TwoComponent { u: f64 },
    /// `c0 |0> + i c1 |1> + c2 |2>` with real, normalized coefficients.
    ThreeComponent { c0: f64, c1: f64, c2: f64 },
    /// Cubic gate applied to squeezed vacuum; `r` sets the x-variance factor
    /// `exp(r)` and is subject to the global squeezing bound.
    CubicFinite { chi: f64, r: f64 },
}

impl AncillaSpec {
    pub fn validate(&self, s_max_db: Option<f64>) -> Result<()> {
        match *self {
            AncillaSpec::TwoComponent { u } => {
                if !(0.0 < u && u < 1.0) {
                    return Err(Error::OutOfRange {
                        name: "u",
                        value: u,
                        lo: 0.0,
                        hi: 1.0,
                    });
                }
            }
            AncillaSpec::ThreeComponent { c0, c1, c2 } => {
                let norm = c0 * c0 + c1 * c1 + c2 * c2;
                if (norm - 1.0).abs() > 1e-12 {
                    return Err(Error::Invalid(format!(
                        "three-component coefficients have norm {norm}, expected 1"
                    )));
                }
            }
            AncillaSpec::CubicFinite { r, .. } => {
                if let Some(bound) = s_max_db {
                    let db = squeezing_db(r).abs();
                    if db > bound + 1e-12 {
                        return Err(Error::SqueezeBound {
                            value_db: db,
                            bound_db: bound,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Weyl-symmetric single-mode moment summary through the orders the analytic
/// engine needs: second moments of (x, p) plus var(x^2), cov(x^2, p),
/// cov(x, x^2) and <x^2>.
#[derive(Debug, Clone, PartialEq)]
pub struct AncillaMoments {
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
    pub ex2: f64,
    pub var_x2: f64,
    pub cov_x2_p: f64,
    pub cov_x_x2: f64,
}

impl AncillaMoments {
    /// Moment summary of a Gaussian state; the fourth-order entries follow
    /// from Isserlis' theorem with the mean terms included.
    pub fn from_gaussian(var_x: f64, var_p: f64, cov_xp: f64, mean_x: f64, mean_p: f64) -> Self {
        AncillaMoments {
            mean_x,
            mean_p,
            var_x,
            var_p,
            cov_xp,
            ex2: var_x + mean_x * mean_x,
            var_x2: 2.0 * var_x * var_x + 4.0 * var_x * mean_x * mean_x,
            cov_x2_p: 2.0 * mean_x * cov_xp,
            cov_x_x2: 2.0 * mean_x * var_x,
        }
    }

    pub fn vacuum() -> Self {
        AncillaMoments::from_gaussian(0.5, 0.5, 0.0, 0.0, 0.0)
    }

    /// The teleportation variance expansion assumes an x-symmetric auxiliary
    /// state: `<x> = 0`, `cov(x, p) = 0` and `cov(x, x^2) = 0`.
    pub fn check_teleport_assumptions(&self, tol: f64) -> Result<()> {
        if self.mean_x.abs() > tol || self.cov_xp.abs() > tol || self.cov_x_x2.abs() > tol {
            return Err(Error::BadMoments(format!(
                "auxiliary state breaks the x-symmetry assumptions: \
                 <x> = {:.3e}, cov(x,p) = {:.3e}, cov(x,x^2) = {:.3e}",
                self.mean_x, self.cov_xp, self.cov_x_x2
            )));
        }
        Ok(())
    }

    /// Moments of the state displaced by `dx` in x and `dp` in p. Exact
    /// polynomial shifts; used for feedforward corrections.
    pub fn displaced(&self, dx: f64, dp: f64) -> Self {
        AncillaMoments {
            mean_x: self.mean_x + dx,
            mean_p: self.mean_p + dp,
            var_x: self.var_x,
            var_p: self.var_p,
            cov_xp: self.cov_xp,
            ex2: self.ex2 + 2.0 * dx * self.mean_x + dx * dx,
            var_x2: self.var_x2 + 4.0 * dx * self.cov_x_x2 + 4.0 * dx * dx * self.var_x,
            cov_x2_p: self.cov_x2_p + 2.0 * dx * self.cov_xp,
            cov_x_x2: self.cov_x_x2 + 2.0 * dx * self.var_x,
        }
    }
}

/// Closed-form moments of the two-component superposition.
pub fn moments_two_component(u: f64) -> Result<AncillaMoments> {
    AncillaSpec::TwoComponent { u }.validate(None)?;
    let u2 = u * u;
    let u4 = u2 * u2;
    let v = (1.0 - u2).sqrt();
    Ok(AncillaMoments {
        mean_x: 0.0,
        mean_p: 2f64.sqrt() * u * v,
        var_x: 1.5 - u2,
        var_p: 2.0 * u4 - 3.0 * u2 + 1.5,
        cov_xp: 0.0,
        ex2: 1.5 - u2,
        var_x2: 1.5 - u4,
        cov_x2_p: (2.0 * (1.0 - u2)).sqrt() * u * (u2 - 1.0),
        cov_x_x2: 0.0,
    })
}

/// Closed-form moments of the finitely squeezed cubic state
/// `C(chi) S(r) |0>`; `V = exp(r)/2` is the x variance of the squeezed input.
pub fn moments_cubic_finite(chi: f64, r: f64) -> AncillaMoments {
    let v = 0.5 * r.exp();
    AncillaMoments {
        mean_x: 0.0,
        mean_p: -chi * v,
        var_x: v,
        var_p: 0.25 / v + 2.0 * chi * chi * v * v,
        cov_xp: 0.0,
        ex2: v,
        var_x2: 2.0 * v * v,
        cov_x2_p: -2.0 * chi * v * v,
        cov_x_x2: 0.0,
    }
}

/// Moments of `c0 |0> + i c1 |1> + c2 |2>` by direct ladder algebra on the
/// (compact, exactly representable) amplitude vector. Allocation-free so the
/// optimizer can call it in its inner loop.
pub fn moments_three_component(c0: f64, c1: f64, c2: f64) -> Result<AncillaMoments> {
    AncillaSpec::ThreeComponent { c0, c1, c2 }.validate(None)?;
    const D: usize = 10;
    let psi: [C64; D] = {
        let mut v = [C64::new(0.0, 0.0); D];
        v[0] = C64::from(c0);
        v[1] = C64::new(0.0, c1);
        v[2] = C64::from(c2);
        v
    };
    let apply_x = |v: &[C64; D]| -> [C64; D] {
        let mut out = [C64::new(0.0, 0.0); D];
        for n in 0..D {
            let mut acc = C64::new(0.0, 0.0);
            if n > 0 {
                acc += C64::from((n as f64).sqrt()) * v[n - 1];
            }
            if n + 1 < D {
                acc += C64::from(((n + 1) as f64).sqrt()) * v[n + 1];
            }
            out[n] = acc / C64::from(2f64.sqrt());
        }
        out
    };
    let apply_p = |v: &[C64; D]| -> [C64; D] {
        let mut out = [C64::new(0.0, 0.0); D];
        for n in 0..D {
            let mut acc = C64::new(0.0, 0.0);
            if n > 0 {
                acc += C64::from((n as f64).sqrt()) * v[n - 1];
            }
            if n + 1 < D {
                acc -= C64::from(((n + 1) as f64).sqrt()) * v[n + 1];
            }
            out[n] = C64::new(0.0, 1.0) * acc / C64::from(2f64.sqrt());
        }
        out
    };
    let dot = |a: &[C64; D], b: &[C64; D]| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for n in 0..D {
            acc += a[n].conj() * b[n];
        }
        acc
    };
    let xp = apply_x(&psi);
    let x2p = apply_x(&xp);
    let pp = apply_p(&psi);
    let ex = dot(&psi, &xp).re;
    let ep = dot(&psi, &pp).re;
    let ex2 = dot(&xp, &xp).re;
    let ep2 = dot(&pp, &pp).re;
    let ex3 = dot(&xp, &x2p).re;
    let ex4 = dot(&x2p, &x2p).re;
    let exp_sym = dot(&xp, &pp).re;
    let ex2p_sym = dot(&x2p, &pp).re;
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

/// Moment summary for any ancilla kind.
pub fn ancilla_moments(spec: &AncillaSpec) -> Result<AncillaMoments> {
    spec.validate(None)?;
    match *spec {
        AncillaSpec::TwoComponent { u } => moments_two_component(u),
        AncillaSpec::CubicFinite { chi, r } => Ok(moments_cubic_finite(chi, r)),
        AncillaSpec::ThreeComponent { c0, c1, c2 } => moments_three_component(c0, c1, c2),
    }
}

/// Fock-space construction of the ancilla as a pure, normalized vector.
/// For the cubic state the gate is exponentiated on an enlarged space
/// (the cubic generator couples distant Fock layers) and the result is
/// truncated back to `cutoff` under a tail check.
pub fn build_fock(spec: &AncillaSpec, cutoff: usize) -> Result<FockDensity> {
    spec.validate(None)?;
    match *spec {
        AncillaSpec::TwoComponent { u } => {
            if cutoff < 2 {
                return Err(Error::Invalid("cutoff below 2".into()));
            }
            let mut v = DVector::zeros(cutoff);
            v[0] = C64::from(u);
            v[1] = C64::new(0.0, (1.0 - u * u).sqrt());
            Ok(FockDensity::pure(vec![cutoff], v))
        }
        AncillaSpec::ThreeComponent { c0, c1, c2 } => {
            if cutoff < 3 {
                return Err(Error::Invalid("cutoff below 3".into()));
            }
            let mut v = DVector::zeros(cutoff);
            v[0] = C64::from(c0);
            v[1] = C64::new(0.0, c1);
            v[2] = C64::from(c2);
            Ok(FockDensity::pure(vec![cutoff], v))
        }
        AncillaSpec::CubicFinite { chi, r } => {
            let sq_dim = squeezed_support(r).max(cutoff);
            let ext = (3 * sq_dim).max(cutoff + 8);
            let sq = ops::squeezed_vacuum(-r / 2.0, ext);
            let v = ops::cubic_gate(chi, ext) * sq;
            let tail: f64 = (cutoff..ext).map(|n| v[n].norm_sqr()).sum();
            if tail > TAIL_TOL {
                return Err(Error::TruncationTail {
                    tail,
                    tol: TAIL_TOL,
                    cutoff,
                });
            }
            let mut out = DVector::zeros(cutoff);
            for n in 0..cutoff {
                out[n] = v[n];
            }
            let mut st = FockDensity::pure(vec![cutoff], out);
            st.normalize();
            Ok(st)
        }
    }
}

/// Fock levels needed to hold a squeezed vacuum with x-variance factor
/// `exp(r)` below the tail tolerance.
fn squeezed_support(r: f64) -> usize {
    let s = r.abs() / 2.0;
    let lam = s.tanh();
    if lam < 1e-12 {
        return 4;
    }
    let n = (TAIL_TOL.ln() / (2.0 * lam.ln())).ceil() as usize;
    (2 * n + 4).max(8)
}

/// Moment summary from a Fock-space state (operator expectation values).
pub fn moments_from_fock(state: &FockDensity) -> Result<AncillaMoments> {
    let t = state.trace();
    if (t - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized(t));
    }
    state.check_tail(2, TAIL_TOL)?;
    state.moments()
}

/// Best nonlinear squeezing reachable on the lowest Fock subspace of
/// dimension `dim` (2 or 3) at cubicity `z`. Returns the real coefficient
/// vector (the odd component carries an implicit factor i) and the attained
/// xi.
pub fn optimal_subspace_state(z: f64, dim: usize) -> Result<(Vec<f64>, f64)> {
    if z == 0.0 {
        return Err(Error::Invalid("cubicity z must be nonzero".into()));
    }
    match dim {
        2 => {
            let xi_of = |u: f64| -> f64 {
                match moments_two_component(u) {
                    Ok(m) => metrics::xi_from_moments(&m, z)
                        .map(|r| r.xi)
                        .unwrap_or(f64::MAX),
                    Err(_) => f64::MAX,
                }
            };
            // coarse scan, then golden refinement in the bracketing interval
            let n = 200;
            let mut best = (f64::MAX, 0.5);
            for i in 1..n {
                let u = i as f64 / n as f64;
                let v = xi_of(u);
                if v < best.0 {
                    best = (v, u);
                }
            }
            let w = 1.0 / n as f64;
            let (u, xi) = metrics::golden_min(
                &xi_of,
                (best.1 - w).max(1e-6),
                (best.1 + w).min(1.0 - 1e-6),
                1e-10,
            );
            Ok((vec![u, (1.0 - u * u).sqrt()], xi))
        }
        3 => {
            let xi_of = |t1: f64, t2: f64| -> f64 {
                let (c0, c1, c2) = (t1.cos(), t1.sin() * t2.cos(), t1.sin() * t2.sin());
                let m = match moments_three_component(c0, c1, c2) {
                    Ok(m) => m,
                    Err(_) => return f64::MAX,
                };
                metrics::xi_from_moments(&m, z)
                    .map(|r| r.xi)
                    .unwrap_or(f64::MAX)
            };
            // grid over the coefficient sphere, then cyclic golden refinement
            use std::f64::consts::PI;
            let (n1, n2) = (40, 80);
            let mut best = (f64::MAX, 0.0, 0.0);
            for i in 0..=n1 {
                let t1 = PI * i as f64 / n1 as f64;
                for j in 0..n2 {
                    let t2 = -PI + 2.0 * PI * j as f64 / n2 as f64;
                    let v = xi_of(t1, t2);
                    if v < best.0 {
                        best = (v, t1, t2);
                    }
                }
            }
            let (w1, w2) = (PI / n1 as f64, 2.0 * PI / n2 as f64);
            let (mut t1, mut t2) = (best.1, best.2);
            for _ in 0..30 {
                (t1, _) = metrics::golden_min(&|t| xi_of(t, t2), t1 - w1, t1 + w1, 1e-10);
                (t2, _) = metrics::golden_min(&|t| xi_of(t1, t), t2 - w2, t2 + w2, 1e-10);
            }
            let xi = xi_of(t1, t2);
            Ok((vec![t1.cos(), t1.sin() * t2.cos(), t1.sin() * t2.sin()], xi))
        }
        _ => Err(Error::Invalid(format!(
            "subspace dimension {dim} not supported (2 or 3)"
        ))),
    }
}

/// Native cubicity scan helper used by the presets: operates directly on a
/// moment summary with the default bracket.
pub fn native_cubicity_of(spec: &AncillaSpec) -> Result<metrics::NativeCubicity> {
    let m = ancilla_moments(spec)?;
    metrics::native_cubicity_of_moments(&m, ScanOpts::default())
}

/// Squeezing bound in dB applied to the cubic-state squeezer.
pub fn cubic_r_bound(s_max_db: f64) -> f64 {
    db_to_r(s_max_db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_component_limits() {
        // u -> 1 approaches the vacuum
        let m = moments_two_component(1.0 - 1e-9).unwrap();
        assert!((m.var_p - 0.5).abs() < 1e-6);
        assert!((m.ex2 - 0.5).abs() < 1e-6);
        assert!(m.cov_x2_p.abs() < 1e-4);
        let m = moments_two_component(0.79).unwrap();
        let u: f64 = 0.79;
        assert!((m.var_p - (2.0 * u.powi(4) - 3.0 * u * u + 1.5)).abs() < 1e-15);
    }

    #[test]
    fn two_component_build_matches_reference_amplitudes() {
        let st = build_fock(&AncillaSpec::TwoComponent { u: 0.79 }, 8).unwrap();
        match &st.repr {
            crate::fock::state::FockRepr::Pure(v) => {
                assert!((v[0].re - 0.79).abs() < 1e-12);
                assert!((v[1].im - 0.6131).abs() < 1e-4);
            }
            _ => panic!("pure state expected"),
        }
    }

    #[test]
    fn closed_form_moments_match_fock_oracle_on_u_grid() {
        for i in 1..50 {
            let u = i as f64 / 50.0;
            let closed = moments_two_component(u).unwrap();
            let st = build_fock(&AncillaSpec::TwoComponent { u }, 10).unwrap();
            let fock = moments_from_fock(&st).unwrap();
            for (a, b, name) in [
                (closed.var_p, fock.var_p, "var_p"),
                (closed.var_x2, fock.var_x2, "var_x2"),
                (closed.cov_x2_p, fock.cov_x2_p, "cov_x2_p"),
                (closed.ex2, fock.ex2, "ex2"),
                (closed.mean_p, fock.mean_p, "mean_p"),
                (closed.mean_x, fock.mean_x, "mean_x"),
                (closed.cov_xp, fock.cov_xp, "cov_xp"),
                (closed.cov_x_x2, fock.cov_x_x2, "cov_x_x2"),
            ] {
                assert!((a - b).abs() < 1e-10, "u = {u}: {name} {a} vs {b}");
            }
        }
    }

    #[test]
    fn cubic_state_moments_match_fock_oracle() {
        // stronger antisqueezing makes the cubic state's Fock tail decay only
        // polynomially; these parameters stay representable at cutoff 110
        for (chi, r) in [(0.3, 0.6), (-0.4, 0.5), (0.8, -0.4)] {
            let closed = moments_cubic_finite(chi, r);
            let st = build_fock(&AncillaSpec::CubicFinite { chi, r }, 110).unwrap();
            let fock = moments_from_fock(&st).unwrap();
            assert!((closed.var_p - fock.var_p).abs() < 1e-6, "var_p");
            assert!((closed.cov_x2_p - fock.cov_x2_p).abs() < 1e-6, "cov_x2_p");
            assert!((closed.var_x2 - fock.var_x2).abs() < 1e-6, "var_x2");
            assert!((closed.ex2 - fock.ex2).abs() < 1e-7, "ex2");
            assert!((closed.mean_p - fock.mean_p).abs() < 1e-7, "mean_p");
            assert!(fock.mean_x.abs() < 1e-8);
            assert!(fock.cov_xp.abs() < 1e-6);
            assert!(fock.cov_x_x2.abs() < 1e-6);
        }
    }

    #[test]
    fn cubic_identity_gate_gives_vacuum() {
        let st = build_fock(&AncillaSpec::CubicFinite { chi: 0.0, r: 0.0 }, 20).unwrap();
        let m = moments_from_fock(&st).unwrap();
        let vac = AncillaMoments::vacuum();
        assert!((m.var_x - vac.var_x).abs() < 1e-12);
        assert!((m.var_p - vac.var_p).abs() < 1e-12);
        assert!((m.var_x2 - vac.var_x2).abs() < 1e-12);
    }

    #[test]
    fn cubic_native_cubicity_approaches_gate_strength() {
        // with strong squeezing the state is nonlinearly squeezed exactly at
        // the gate's own cubicity
        let chi = 0.5;
        let m = moments_cubic_finite(chi, db_to_r(14.0));
        let nc = metrics::native_cubicity_of_moments(&m, ScanOpts::default()).unwrap();
        let (z_n, xi) = nc.found().expect("cubic state is nonlinearly squeezed");
        assert!((z_n - chi).abs() < 0.02, "z_n = {z_n}");
        assert!(xi < 1.0);
    }

    #[test]
    fn three_component_keeps_x_symmetry() {
        let spec = AncillaSpec::ThreeComponent {
            c0: 0.8,
            c1: 0.5,
            c2: (1.0f64 - 0.64 - 0.25).sqrt(),
        };
        let m = ancilla_moments(&spec).unwrap();
        assert!(m.mean_x.abs() < 1e-12);
        assert!(m.cov_xp.abs() < 1e-12);
        assert!(m.cov_x_x2.abs() < 1e-12);
    }

    #[test]
    fn three_component_ladder_algebra_matches_fock_route() {
        let (c0, c1) = (0.7, -0.4);
        let c2 = (1.0f64 - c0 * c0 - c1 * c1).sqrt();
        let direct = moments_three_component(c0, c1, c2).unwrap();
        let st = build_fock(&AncillaSpec::ThreeComponent { c0, c1, c2 }, 12).unwrap();
        let fock = moments_from_fock(&st).unwrap();
        for (a, b) in [
            (direct.mean_p, fock.mean_p),
            (direct.var_x, fock.var_x),
            (direct.var_p, fock.var_p),
            (direct.ex2, fock.ex2),
            (direct.var_x2, fock.var_x2),
            (direct.cov_x2_p, fock.cov_x2_p),
            (direct.cov_x_x2, fock.cov_x_x2),
        ] {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn optimal_two_dimensional_state_has_the_reference_weight() {
        // joint scan over z: the best two-component state
        let mut best = (f64::MAX, 0.0, 0.0);
        let mut z = 0.05;
        while z <= 1.5 {
            let (c, xi) = optimal_subspace_state(z, 2).unwrap();
            if xi < best.0 {
                best = (xi, c[0], z);
            }
            z += 0.005;
        }
        let (xi, u, _z) = best;
        assert!((u - 0.79).abs() < 0.01, "optimal u = {u}");
        assert!(xi < 1.0);
    }

    #[test]
    fn small_z_limit_minimizes_p_variance() {
        // as z -> 0 the ratio is dominated by var(p); the two-component
        // family attains its smallest var(p) = 3/8 at u = sqrt(3)/2
        let (c, xi) = optimal_subspace_state(1e-4, 2).unwrap();
        assert!((c[0] - 0.75f64.sqrt()).abs() < 1e-3, "u = {}", c[0]);
        assert!(xi > 1.0, "no nonlinear squeezing exists at vanishing z");
    }

    #[test]
    fn three_dimensional_subspace_beats_two() {
        for z in [0.3, 0.5, 0.8] {
            let (_, xi2) = optimal_subspace_state(z, 2).unwrap();
            let (_, xi3) = optimal_subspace_state(z, 3).unwrap();
            assert!(
                xi3 <= xi2 + 1e-9,
                "z = {z}: dim-3 xi {xi3} worse than dim-2 xi {xi2}"
            );
        }
    }

    #[test]
    fn displaced_moments_match_fock_displacement() {
        let st = build_fock(&AncillaSpec::TwoComponent { u: 0.6 }, 40).unwrap();
        let m = moments_from_fock(&st).unwrap();
        let (dx, dp) = (0.7, -0.4);
        let shifted = m.displaced(dx, dp);
        // displace the actual state and re-measure
        let d = ops::displacement_gate(dx, dp, 40);
        let v = match &st.repr {
            crate::fock::state::FockRepr::Pure(v) => v.clone(),
            _ => unreachable!(),
        };
        let moved = FockDensity::pure(vec![40], &d * v);
        let direct = moved.moments().unwrap();
        assert!((shifted.mean_x - direct.mean_x).abs() < 1e-9);
        assert!((shifted.mean_p - direct.mean_p).abs() < 1e-9);
        assert!((shifted.ex2 - direct.ex2).abs() < 1e-9);
        assert!((shifted.var_x2 - direct.var_x2).abs() < 1e-8);
        assert!((shifted.cov_x2_p - direct.cov_x2_p).abs() < 1e-8);
        assert!((shifted.cov_x_x2 - direct.cov_x_x2).abs() < 1e-9);
    }
}

//! Nonlinear squeezing: variance of `p + z x^2` relative to the best value
//! any Gaussian state can reach, its dB form, and the native cubicity of a
//! state (the `z` at which the ratio is smallest).

use crate::ancilla::AncillaMoments;
use crate::error::{Error, Result};

/// Ratio of `var(p + z x^2)` to the Gaussian minimum, evaluated at one `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezingReport {
    pub z: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub xi: f64,
    pub xi_db: f64,
    /// Filled by a native-cubicity scan; NaN when only a single `z` was asked.
    pub z_native: f64,
}

/// Minimum of `var(p + z x^2)` over all Gaussian states (any covariance, any
/// mean). The closed form is `3 * 2^(-5/3) * |z|^(2/3)`; at `z = 0` the
/// infimum is 0, approached by infinite p squeezing.
pub fn gaussian_min_variance(z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    3.0 * 2f64.powf(-5.0 / 3.0) * z.abs().powf(2.0 / 3.0)
}

/// `var(p + z x^2)` assembled from single-mode moments. The moments are the
/// state's own central moments, so displaced states are handled exactly.
pub fn nonlinear_variance(m: &AncillaMoments, z: f64) -> f64 {
    m.var_p + 2.0 * z * m.cov_x2_p + z * z * m.var_x2
}

/// Nonlinear squeezing of a state given by its moment summary.
pub fn xi_from_moments(m: &AncillaMoments, z: f64) -> Result<SqueezingReport> {
    m.check_consistent()?;
    let numerator = nonlinear_variance(m, z);
    let denominator = gaussian_min_variance(z);
    let xi = if denominator == 0.0 {
        if numerator == 0.0 {
            f64::NAN
        } else {
            f64::INFINITY
        }
    } else {
        numerator / denominator
    };
    Ok(SqueezingReport {
        z,
        numerator,
        denominator,
        xi,
        xi_db: 10.0 * xi.log10(),
        z_native: f64::NAN,
    })
}

/// Result of a native-cubicity scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NativeCubicity {
    Found {
        z_n: f64,
        xi: f64,
    },
    /// `xi >= 1` over the whole bracket: the state has no nonlinear squeezing
    /// and no native cubicity is attained.
    Absent {
        z_best: f64,
        xi: f64,
    },
}

impl NativeCubicity {
    pub fn found(&self) -> Option<(f64, f64)> {
        match *self {
            NativeCubicity::Found { z_n, xi } => Some((z_n, xi)),
            NativeCubicity::Absent { .. } => None,
        }
    }

    /// Minimizing `z` regardless of whether the state is squeezed there.
    pub fn z_best(&self) -> f64 {
        match *self {
            NativeCubicity::Found { z_n, .. } => z_n,
            NativeCubicity::Absent { z_best, .. } => z_best,
        }
    }

    pub fn xi_best(&self) -> f64 {
        match *self {
            NativeCubicity::Found { xi, .. } | NativeCubicity::Absent { xi, .. } => xi,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOpts {
    pub z_min: f64,
    pub z_max: f64,
    pub points: usize,
    pub tol: f64,
}

impl Default for ScanOpts {
    fn default() -> Self {
        ScanOpts {
            z_min: -3.0,
            z_max: 3.0,
            points: 400,
            tol: 1e-6,
        }
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of `f` on `[a, b]` down to `|b - a| < tol`.
pub fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2);
        }
    }
    let xm = 0.5 * (a + b);
    (xm, f(xm))
}

/// Coarse scan over the bracket refined by golden section. `xi` is evaluated
/// through the provided closure so any state representation can feed it.
/// Exactly symmetric landscapes resolve toward `z <= 0`.
pub fn native_cubicity<F>(xi: F, opts: ScanOpts) -> NativeCubicity
where
    F: Fn(f64) -> f64,
{
    let n = opts.points.max(8);
    let step = (opts.z_max - opts.z_min) / n as f64;
    let mut best = (f64::INFINITY, 0.0f64);
    let mut values = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let z = opts.z_min + step * i as f64;
        let v = if z.abs() < 1e-9 { f64::INFINITY } else { xi(z) };
        values.push((z, v));
        if v < best.0 || (v - best.0).abs() < 1e-12 && z < best.1 {
            best = (v, z);
        }
    }
    let idx = values
        .iter()
        .position(|&(z, _)| z == best.1)
        .expect("scan minimum present");
    let lo = values[idx.saturating_sub(1)].0;
    let hi = values[(idx + 1).min(n)].0;
    let guarded = |z: f64| if z.abs() < 1e-9 { f64::INFINITY } else { xi(z) };
    let (z_n, xi_n) = golden_min(&guarded, lo, hi, opts.tol);
    if xi_n >= 1.0 - 1e-9 {
        NativeCubicity::Absent {
            z_best: z_n,
            xi: xi_n,
        }
    } else {
        NativeCubicity::Found { z_n, xi: xi_n }
    }
}

/// Native cubicity straight from a moment summary.
pub fn native_cubicity_of_moments(m: &AncillaMoments, opts: ScanOpts) -> Result<NativeCubicity> {
    m.check_consistent()?;
    let nm = m.clone();
    Ok(native_cubicity(
        move |z| nonlinear_variance(&nm, z) / gaussian_min_variance(z),
        opts,
    ))
}

impl AncillaMoments {
    pub(crate) fn check_consistent(&self) -> Result<()> {
        if self.var_x < 0.0 || self.var_p < 0.0 || self.var_x2 < 0.0 {
            return Err(Error::BadMoments(format!(
                "negative variance: var_x={}, var_p={}, var_x2={}",
                self.var_x, self.var_p, self.var_x2
            )));
        }
        Ok(())
    }
}

//! Experiment drivers shared by the CLI and the acceptance suite: parameter
//! vectors and bounds for full-scheme optimization, the deterministic sweep
//! objective (analytic backend) and its runner.

use crate::ancilla::{ancilla_moments, AncillaMoments, AncillaSpec};
use crate::error::{Error, Result};
use crate::gaussian::{build_cluster, db_to_r, ClusterParams, CovarianceState};
use crate::metrics::{self, NativeCubicity, ScanOpts};
use crate::moments::{self, Scheme, SchemeConfig};
use crate::optimize::{optimize, NmOptions, OptimizationOutcome, OptimizationProblem};

use std::f64::consts::PI;

/// Ancilla family optimized within a sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AncillaKind {
    TwoComponent,
    ThreeComponent,
    CubicFinite,
}

impl AncillaKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AncillaKind::TwoComponent => "two-component",
            AncillaKind::ThreeComponent => "three-component",
            AncillaKind::CubicFinite => "cubic-finite",
        }
    }
}

/// Optimization bounds: squeezers within the dB budget,
/// x means within ±10, gains and cubicities within ±2, angles free over 2pi.
pub const MEAN_BOUND: f64 = 10.0;

/// What the output nonlinear squeezing is minimized over: the query
/// cubicity itself (native value) or a fixed externally chosen one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZMode {
    Native,
    Fixed(f64),
}

/// One deterministic sweep point: scheme, ancilla family, squeezing budget
/// and input thermal noise.
#[derive(Debug, Clone, Copy)]
pub struct DeterministicSetup {
    pub scheme: Scheme,
    pub ancilla: AncillaKind,
    pub s_max_db: f64,
    pub n: f64,
}

/// Decoded optimization point.
#[derive(Debug, Clone)]
pub struct DecodedPoint {
    pub cluster: ClusterParams,
    pub ancilla: Option<AncillaSpec>,
    pub scheme: SchemeConfig,
}

impl DeterministicSetup {
    fn uses_ancilla(&self) -> bool {
        self.scheme != Scheme::IdealCubic
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        let mut names = vec!["r1", "r2", "phi", "phi1", "phi2", "t_c", "alpha1", "alpha2"];
        match self.scheme {
            Scheme::IdealCubic => names.extend(["g_p", "chi"]),
            Scheme::Canonical => names.extend(["t", "d_F", "g_F"]),
            Scheme::Nonlinear => names.extend(["t", "d_F", "g_F", "chi"]),
        }
        if self.uses_ancilla() {
            match self.ancilla {
                AncillaKind::TwoComponent => names.push("u"),
                AncillaKind::ThreeComponent => names.extend(["theta1", "theta2"]),
                AncillaKind::CubicFinite => names.extend(["chi_state", "r_state"]),
            }
        }
        names
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let r_max = db_to_r(self.s_max_db);
        let mut b = vec![
            (-r_max, r_max),
            (-r_max, r_max),
            (-PI, PI),
            (-PI, PI),
            (-PI, PI),
            (0.0, 1.0),
            (-MEAN_BOUND, MEAN_BOUND),
            (-MEAN_BOUND, MEAN_BOUND),
        ];
        match self.scheme {
            Scheme::IdealCubic => {
                b.push((-2.0, 2.0));
                b.push((-2.0, 2.0));
            }
            Scheme::Canonical => {
                b.push((0.0, 1.0));
                b.push((-2.0, 2.0));
                b.push((-2.0, 2.0));
            }
            Scheme::Nonlinear => {
                b.push((0.0, 1.0));
                b.push((-2.0, 2.0));
                b.push((-2.0, 2.0));
                b.push((-2.0, 2.0));
            }
        }
        if self.uses_ancilla() {
            match self.ancilla {
                AncillaKind::TwoComponent => b.push((1e-3, 1.0 - 1e-3)),
                AncillaKind::ThreeComponent => {
                    b.push((-PI, PI));
                    b.push((-PI, PI));
                }
                AncillaKind::CubicFinite => {
                    b.push((-2.0, 2.0));
                    b.push((-r_max, r_max));
                }
            }
        }
        b
    }

    pub fn decode(&self, x: &[f64]) -> Result<DecodedPoint> {
        let names = self.param_names();
        if x.len() != names.len() {
            return Err(Error::Invalid(format!(
                "expected {} parameters, got {}",
                names.len(),
                x.len()
            )));
        }
        let cluster = ClusterParams {
            r1: x[0],
            r2: x[1],
            phi: x[2],
            phi1: x[3],
            phi2: x[4],
            t_c: x[5],
            alpha1: x[6],
            alpha2: x[7],
            n: self.n,
        };
        let mut k = 8;
        let scheme = match self.scheme {
            Scheme::IdealCubic => {
                let cfg = SchemeConfig::ideal_cubic(x[k], x[k + 1]);
                k += 2;
                cfg
            }
            Scheme::Canonical => {
                let cfg = SchemeConfig::canonical(x[k], x[k + 1], x[k + 2]);
                k += 3;
                cfg
            }
            Scheme::Nonlinear => {
                let cfg = SchemeConfig::nonlinear(x[k], x[k + 1], x[k + 2], x[k + 3]);
                k += 4;
                cfg
            }
        };
        let ancilla = if self.uses_ancilla() {
            Some(match self.ancilla {
                AncillaKind::TwoComponent => AncillaSpec::TwoComponent { u: x[k] },
                AncillaKind::ThreeComponent => {
                    let (t1, t2) = (x[k], x[k + 1]);
                    AncillaSpec::ThreeComponent {
                        c0: t1.cos(),
                        c1: t1.sin() * t2.cos(),
                        c2: t1.sin() * t2.sin(),
                    }
                }
                AncillaKind::CubicFinite => AncillaSpec::CubicFinite {
                    chi: x[k],
                    r: x[k + 1],
                },
            })
        } else {
            None
        };
        Ok(DecodedPoint {
            cluster,
            ancilla,
            scheme,
        })
    }

    /// Output nonlinear squeezing at a parameter vector; the query cubicity
    /// is itself minimized over the bounded range. NaN on any constraint
    /// violation so the optimizer logs the restart as failed.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_value_at(x, ZMode::Native)
    }

    /// Same objective with the query-cubicity mode chosen explicitly.
    pub fn objective_value_at(&self, x: &[f64], z_mode: ZMode) -> f64 {
        let Ok(point) = self.decode(x) else {
            return f64::NAN;
        };
        let Ok(cluster) = build_cluster(&point.cluster, self.s_max_db) else {
            return f64::NAN;
        };
        let anc = match &point.ancilla {
            Some(spec) => match ancilla_moments(spec) {
                Ok(m) => m,
                Err(_) => return f64::NAN,
            },
            None => AncillaMoments::vacuum(),
        };
        let Ok(poly) = moments::numerator_poly(&cluster, &anc, &point.scheme) else {
            return f64::NAN;
        };
        match z_mode {
            ZMode::Native => moments::native_output_xi_closed(poly, -2.0, 2.0).xi_best(),
            ZMode::Fixed(z) => {
                (poly[0] + poly[1] * z + poly[2] * z * z) / metrics::gaussian_min_variance(z)
            }
        }
    }
}

/// Optimized sweep point with the decoded best parameters and diagnostics.
#[derive(Debug, Clone)]
pub struct DeterministicResult {
    pub setup: DeterministicSetup,
    pub best: DecodedPoint,
    pub best_vector: Vec<f64>,
    pub xi: f64,
    pub xi_db: f64,
    /// Query cubicity the optimum is evaluated at.
    pub z_out: f64,
    /// Native nonlinear squeezing of the optimized input ancilla, in dB
    /// (NaN for the ideal measurement scheme, which consumes no ancilla).
    pub initial_xi_db: f64,
    /// Output-mode moments at the query cubicity.
    pub output: moments::OutputMoments,
    pub outcome: OptimizationOutcome,
}

pub fn optimize_deterministic(
    setup: &DeterministicSetup,
    restarts: usize,
    seed: u64,
) -> Result<DeterministicResult> {
    let objective = |x: &[f64]| setup.objective_value(x);
    let problem = OptimizationProblem {
        objective: &objective,
        bounds: setup.bounds(),
        restarts,
        seed,
        nm: NmOptions::default(),
    };
    let outcome = optimize(&problem);
    let best = setup.decode(&outcome.best_x)?;
    let cluster = build_cluster(&best.cluster, self_bound(setup))?;
    let anc = match &best.ancilla {
        Some(spec) => ancilla_moments(spec)?,
        None => AncillaMoments::vacuum(),
    };
    let poly = moments::numerator_poly(&cluster, &anc, &best.scheme)?;
    let native = moments::native_output_xi_closed(poly, -2.0, 2.0);
    let output = match best.scheme.scheme {
        Scheme::IdealCubic => {
            moments::variance_ideal_cubic(&cluster, &best.scheme, native.z_best())?
        }
        _ => moments::variance_teleportation(&cluster, &anc, &best.scheme, native.z_best())?,
    };
    let initial_xi_db = match &best.ancilla {
        Some(spec) => {
            let m = ancilla_moments(spec)?;
            match metrics::native_cubicity_of_moments(&m, ScanOpts::default())? {
                NativeCubicity::Found { xi, .. } => 10.0 * xi.log10(),
                NativeCubicity::Absent { xi, .. } => 10.0 * xi.log10(),
            }
        }
        None => f64::NAN,
    };
    Ok(DeterministicResult {
        setup: *setup,
        best,
        best_vector: outcome.best_x.clone(),
        xi: native.xi_best(),
        xi_db: 10.0 * native.xi_best().log10(),
        z_out: native.z_best(),
        initial_xi_db,
        output,
        outcome,
    })
}

fn self_bound(setup: &DeterministicSetup) -> f64 {
    setup.s_max_db
}

/// Deterministic cluster state for the unity-gain probabilistic presets.
pub fn tmsv_cluster(db: f64) -> CovarianceState {
    build_cluster(&ClusterParams::two_mode_squeezed(db), db).expect("preset within bounds")
}

use crate::fock::sim::{
    self, build_grid, cluster_fock_ensemble, loss_channel, postselect, AggregationMode, Ensemble,
    GridSpec, JointState, MeasurementGrid, PostSelection, SelectionCurve,
};
use crate::fock::state::FockDensity;

/// Cluster Fock ensemble with the cutoff raised until the truncation tail
/// passes; starts from the spec default of 30 levels per mode.
pub fn auto_cluster_ensemble(
    params: &ClusterParams,
    s_max_db: f64,
    start_cutoff: usize,
) -> Result<Ensemble> {
    // displaced clusters slide their Fock support up by about
    // alpha^2/2 + a few alpha levels per mode
    let a = params.alpha1.abs().max(params.alpha2.abs());
    let disp_need = (0.5 * a * a + 6.0 * a).ceil() as usize;
    let mut cutoff = start_cutoff.max(disp_need + 12);
    let cap = cutoff + 120;
    loop {
        match cluster_fock_ensemble(params, s_max_db, cutoff) {
            Ok(ens) => return Ok(ens),
            Err(Error::TruncationTail { .. }) if cutoff < cap => cutoff += 12,
            Err(e) => return Err(e),
        }
    }
}

/// Reference feedforward strengths for the unity-gain runs: (6 dB, 8 dB)
/// clusters, without and with 25% auxiliary loss.
pub fn reference_chi_preset(cluster_db: f64, eta: Option<f64>) -> Option<f64> {
    match (cluster_db as i64, eta.is_some()) {
        (6, false) => Some(-0.219),
        (8, false) => Some(-0.130),
        (6, true) => Some(-0.250),
        (8, true) => Some(-0.151),
        _ => None,
    }
}

/// Unity-gain probabilistic run: two-component input through a symmetric
/// two-mode squeezed cluster, optional auxiliary loss before the scheme.
#[derive(Debug, Clone, Copy)]
pub struct ProbabilisticPreset {
    pub cluster_db: f64,
    pub u: f64,
    pub chi: f64,
    /// Transmission of the loss on the auxiliary state (None = lossless).
    pub eta: Option<f64>,
    pub cutoff: usize,
}

impl ProbabilisticPreset {
    pub fn new(cluster_db: f64, u: f64, chi: f64, eta: Option<f64>, cutoff: usize) -> Self {
        ProbabilisticPreset {
            cluster_db,
            u,
            chi,
            eta,
            cutoff,
        }
    }

    /// The query cubicity: native cubicity of the nominal (pre-loss) input.
    pub fn z_query(&self) -> Result<f64> {
        let m = crate::ancilla::moments_two_component(self.u)?;
        Ok(metrics::native_cubicity_of_moments(&m, ScanOpts::default())?.z_best())
    }

    pub fn input_state(&self) -> Result<FockDensity> {
        let pure = crate::ancilla::build_fock(&AncillaSpec::TwoComponent { u: self.u }, 6)?;
        match self.eta {
            Some(eta) => loss_channel(&pure, eta),
            None => Ok(pure),
        }
    }

    pub fn joint(&self, scheme: Scheme) -> Result<JointState> {
        let cluster = auto_cluster_ensemble(
            &ClusterParams::two_mode_squeezed(self.cluster_db),
            self.cluster_db,
            self.cutoff,
        )?;
        let anc = self.input_state()?;
        let chi = if scheme == Scheme::Canonical {
            0.0
        } else {
            self.chi
        };
        JointState::build(&cluster, &anc, &SchemeConfig::unity_gain(scheme, chi))
    }

    pub fn grid(&self, scheme: Scheme, spec: &GridSpec) -> Result<MeasurementGrid> {
        build_grid(&self.joint(scheme)?, spec)
    }

    pub fn curve(
        &self,
        scheme: Scheme,
        mode: AggregationMode,
        spec: &GridSpec,
    ) -> Result<SelectionCurve> {
        let grid = self.grid(scheme, spec)?;
        let z = self.z_query()?;
        postselect(&grid, &PostSelection { mode, z_query: z })
    }
}

/// Single-parameter optimization of the feedforward strength in the
/// unity-gain setting: minimizes the full-acceptance averaged nonlinear
/// squeezing (the probability-weighted mean of per-cell xi) over `chi`.
pub fn optimize_unity_chi(
    cluster_db: f64,
    u: f64,
    eta: Option<f64>,
    cutoff: usize,
    bracket: (f64, f64),
) -> Result<(f64, f64)> {
    let cluster = auto_cluster_ensemble(
        &ClusterParams::two_mode_squeezed(cluster_db),
        cluster_db,
        cutoff,
    )?;
    let pure = crate::ancilla::build_fock(&AncillaSpec::TwoComponent { u }, 6)?;
    let anc = match eta {
        Some(e) => loss_channel(&pure, e)?,
        None => pure,
    };
    let m = crate::ancilla::moments_two_component(u)?;
    let z = metrics::native_cubicity_of_moments(&m, ScanOpts::default())?.z_best();
    let spec = GridSpec::default();
    let objective = |chi: f64| -> f64 {
        let cfg = SchemeConfig::unity_gain(Scheme::Nonlinear, chi);
        let joint = match JointState::build(&cluster, &anc, &cfg) {
            Ok(j) => j,
            Err(_) => return f64::MAX,
        };
        let grid = match build_grid(&joint, &spec) {
            Ok(g) => g,
            Err(_) => return f64::MAX,
        };
        match postselect(
            &grid,
            &PostSelection {
                mode: AggregationMode::Xi,
                z_query: z,
            },
        ) {
            Ok(curve) => curve.full_acceptance().xi,
            Err(_) => f64::MAX,
        }
    };
    // coarse bracket scan, then golden refinement around the best point
    let n = 14;
    let (lo, hi) = bracket;
    let step = (hi - lo) / n as f64;
    let mut best = (f64::MAX, lo);
    for i in 0..=n {
        let chi = lo + step * i as f64;
        let v = objective(chi);
        if v < best.0 {
            best = (v, chi);
        }
    }
    let (chi, xi) = metrics::golden_min(
        &objective,
        (best.1 - step).max(lo),
        (best.1 + step).min(hi),
        2e-4,
    );
    Ok((chi, xi))
}

/// Replays stored (optimized) parameters through the exact backend and
/// returns the full-acceptance mixture xi at the query cubicity.
pub fn replay_through_fock(
    cluster: &ClusterParams,
    s_max_db: f64,
    ancilla: &AncillaSpec,
    scheme: &SchemeConfig,
    cutoff: usize,
    z_query: f64,
) -> Result<(f64, SelectionCurve)> {
    let ens = auto_cluster_ensemble(cluster, s_max_db, cutoff)?;
    let anc_dim = match ancilla {
        AncillaSpec::TwoComponent { .. } => 6,
        AncillaSpec::ThreeComponent { .. } => 7,
        AncillaSpec::CubicFinite { .. } => cutoff.max(40),
    };
    let anc = crate::ancilla::build_fock(ancilla, anc_dim)?;
    let joint = JointState::build(&ens, &anc, scheme)?;
    let grid = sim::build_grid(&joint, &GridSpec::default())?;
    let curve = postselect(
        &grid,
        &PostSelection {
            mode: AggregationMode::States,
            z_query,
        },
    )?;
    Ok((curve.full_acceptance().xi, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_and_names_align() {
        for scheme in [Scheme::Canonical, Scheme::Nonlinear, Scheme::IdealCubic] {
            for ancilla in [
                AncillaKind::TwoComponent,
                AncillaKind::ThreeComponent,
                AncillaKind::CubicFinite,
            ] {
                let setup = DeterministicSetup {
                    scheme,
                    ancilla,
                    s_max_db: 8.0,
                    n: 0.0,
                };
                assert_eq!(setup.bounds().len(), setup.param_names().len());
            }
        }
    }

    #[test]
    fn objective_rejects_out_of_bounds_gracefully() {
        let setup = DeterministicSetup {
            scheme: Scheme::Nonlinear,
            ancilla: AncillaKind::TwoComponent,
            s_max_db: 6.0,
            n: 0.0,
        };
        let dim = setup.bounds().len();
        let mut x = vec![0.0; dim];
        x[5] = 0.7; // t_c
        x[8] = 0.7; // t
        x[dim - 1] = 0.8; // u
        assert!(setup.objective_value(&x).is_finite());
        x[0] = 100.0; // r1 far beyond the squeezing budget
        assert!(setup.objective_value(&x).is_nan());
    }

    #[test]
    fn zero_budget_transfers_no_nonlinear_squeezing() {
        // vacuum cluster (no squeezing anywhere): no scheme reaches xi < 1
        for scheme in [Scheme::Canonical, Scheme::Nonlinear, Scheme::IdealCubic] {
            let res = optimize_deterministic(
                &DeterministicSetup {
                    scheme,
                    ancilla: AncillaKind::CubicFinite,
                    s_max_db: 0.0,
                    n: 0.0,
                },
                60,
                5,
            )
            .unwrap();
            assert!(res.xi >= 1.0 - 1e-9, "{}: xi = {}", scheme.as_str(), res.xi);
        }
    }

    #[test]
    fn fixed_z_objective_upper_bounds_the_native_one() {
        let setup = DeterministicSetup {
            scheme: Scheme::Nonlinear,
            ancilla: AncillaKind::TwoComponent,
            s_max_db: 6.0,
            n: 0.0,
        };
        let dim = setup.bounds().len();
        let mut x = vec![0.2; dim];
        x[5] = 0.7;
        x[8] = 0.7;
        x[dim - 1] = 0.8;
        let native = setup.objective_value_at(&x, ZMode::Native);
        for z in [0.3, 0.5, 0.9] {
            let fixed = setup.objective_value_at(&x, ZMode::Fixed(z));
            assert!(fixed >= native - 1e-12);
        }
    }

    #[test]
    fn small_restart_ideal_cubic_beats_canonical_attempts() {
        // coarse sanity: the ideal projection transfers more squeezing than
        // the canonical scheme given the same budget
        let ideal = optimize_deterministic(
            &DeterministicSetup {
                scheme: Scheme::IdealCubic,
                ancilla: AncillaKind::CubicFinite,
                s_max_db: 6.0,
                n: 0.0,
            },
            40,
            1234,
        )
        .unwrap();
        let canonical = optimize_deterministic(
            &DeterministicSetup {
                scheme: Scheme::Canonical,
                ancilla: AncillaKind::CubicFinite,
                s_max_db: 6.0,
                n: 0.0,
            },
            40,
            1234,
        )
        .unwrap();
        assert!(ideal.xi < 1.0);
        assert!(ideal.xi < canonical.xi);
    }
}

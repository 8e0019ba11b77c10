//! Numerical invariant suite: symplectic structure, the Gaussian bound,
//! density-matrix health, probability mass and curve monotonicity. Any
//! failure exits with the numerical-validation code.

use rand::{Rng, SeedableRng};

use nlteleport::ancilla::{build_fock, moments_two_component, AncillaSpec};
use nlteleport::error::{Error, Result};
use nlteleport::experiments::ProbabilisticPreset;
use nlteleport::fock::sim::{build_grid, postselect, AggregationMode, GridSpec, PostSelection};
use nlteleport::gaussian::{
    beam_splitter_matrix, build_cluster, rotation_pair_matrix, rotation_single_matrix,
    squeezer_matrix, symplectic_check, ClusterParams,
};
use nlteleport::metrics::{gaussian_min_variance, xi_from_moments};
use nlteleport::moments::{numerator_poly, Scheme, SchemeConfig};

fn check(name: &str, ok: bool, detail: String) -> Result<()> {
    if ok {
        println!("ok    {name}");
        Ok(())
    } else {
        println!("FAIL  {name}: {detail}");
        Err(Error::Invalid(format!(
            "validation failed: {name} ({detail})"
        )))
    }
}

pub fn run(cutoff: Option<usize>) -> Result<()> {
    let cutoff = cutoff.unwrap_or(24);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);

    // symplectic constructors
    let mut all = true;
    for _ in 0..200 {
        let m = squeezer_matrix(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
            * rotation_single_matrix(rng.gen_range(-3.2..3.2))
            * beam_splitter_matrix(rng.gen_range(0.0..1.0))
            * rotation_pair_matrix(rng.gen_range(-3.2..3.2), rng.gen_range(-3.2..3.2));
        all &= symplectic_check(&m);
    }
    check("symplectic constructors", all, String::new())?;

    // random pure clusters: physicality and purity
    let mut all = true;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = ClusterParams {
            r1: rng.gen_range(-1.8..1.8),
            r2: rng.gen_range(-1.8..1.8),
            phi: rng.gen_range(-3.1..3.1),
            phi1: rng.gen_range(-3.1..3.1),
            phi2: rng.gen_range(-3.1..3.1),
            t_c: rng.gen_range(0.0..1.0),
            alpha1: rng.gen_range(-3.0..3.0),
            alpha2: rng.gen_range(-3.0..3.0),
            n: 0.0,
        };
        let st = build_cluster(&p, 8.0).map_err(|e| Error::Invalid(e.to_string()))?;
        all &= st.is_physical(1e-9);
        worst = worst.max((st.gamma.determinant() * 16.0 - 1.0).abs());
    }
    check(
        "pure cluster physicality and purity",
        all && worst < 1e-9,
        format!("worst purity deviation {worst:.2e}"),
    )?;

    // the Gaussian bound at the vacuum anchor
    let vac =
        moments_two_component(1.0 - 1e-12).unwrap_or(nlteleport::ancilla::AncillaMoments::vacuum());
    let _ = vac;
    let anchor = xi_from_moments(
        &nlteleport::ancilla::AncillaMoments::vacuum(),
        std::f64::consts::FRAC_1_SQRT_2,
    )?;
    check(
        "vacuum anchor xi(1/sqrt2) = 1",
        (anchor.xi - 1.0).abs() < 1e-9,
        format!("xi = {}", anchor.xi),
    )?;

    // cross-backend at zero feedforward strength
    let preset = ProbabilisticPreset::new(5.0, 0.79, 0.0, None, cutoff);
    let z = preset.z_query()?;
    let joint = preset.joint(Scheme::Canonical)?;
    let grid = build_grid(&joint, &GridSpec::default())?;
    check(
        "grid probability mass",
        grid.mass >= 0.999 && grid.mass <= 1.0 + 1e-6,
        format!("mass = {}", grid.mass),
    )?;
    let curve = postselect(
        &grid,
        &PostSelection {
            mode: AggregationMode::States,
            z_query: z,
        },
    )?;
    let cl = build_cluster(&ClusterParams::two_mode_squeezed(5.0), 5.0)?;
    let m = moments_two_component(0.79)?;
    let cfg = SchemeConfig::unity_gain(Scheme::Canonical, 0.0);
    let poly = numerator_poly(&cl, &m, &cfg)?;
    let engine = (poly[0] + poly[1] * z + poly[2] * z * z) / gaussian_min_variance(z);
    let fock = curve.full_acceptance().xi;
    check(
        "cross-backend mixture xi at zero chi",
        ((fock - engine) / engine).abs() < 1e-3,
        format!("fock {fock:.6} vs engine {engine:.6}"),
    )?;

    // conditional density matrices on a sample of cells
    let mut all = true;
    for cell in grid.cells.iter().step_by((grid.cells.len() / 9).max(1)) {
        if cell.probability < 1e-12 {
            continue;
        }
        let cond = nlteleport::fock::sim::condition(&joint, cell.m_x, cell.m_p)?;
        let rho = cond.density_matrix()?;
        all &= rho.is_physical(1e-8) && (rho.trace() - 1.0).abs() < 1e-8;
    }
    check(
        "conditional states are density matrices",
        all,
        String::new(),
    )?;

    // curve monotonicity in both aggregation modes
    let xi_curve = postselect(
        &grid,
        &PostSelection {
            mode: AggregationMode::Xi,
            z_query: z,
        },
    )?;
    check(
        "aggregated-xi curve is monotone",
        xi_curve.is_monotone(1e-12),
        format!("max decrement {:.2e}", xi_curve.max_decrement),
    )?;
    check(
        "mixture curve is monotone within slack",
        curve.is_monotone(1e-3),
        format!("max decrement {:.2e}", curve.max_decrement),
    )?;

    // auxiliary state construction honors the truncation-tail contract
    let built = build_fock(&AncillaSpec::CubicFinite { chi: 0.3, r: 0.5 }, 80)?;
    check(
        "auxiliary state tail",
        built.check_tail(2, 1e-8).is_ok(),
        String::new(),
    )?;

    println!("all invariants hold");
    Ok(())
}

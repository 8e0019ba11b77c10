//! Analytic sweep over (scheme, ancilla, squeezing budget, thermal noise):
//! every point is optimized from random restarts and emitted as one CSV row.

use std::path::Path;

use rayon::prelude::*;

use nlteleport::error::{Error, Result};
use nlteleport::experiments::{optimize_deterministic, AncillaKind, DeterministicSetup};
use nlteleport::moments::Scheme;

use crate::common::{fmt, load_config, CsvOut};

const KEYS: [&str; 6] = ["schemes", "ancillas", "s_max_db", "n", "restarts", "seed"];

fn parse_scheme(s: &str) -> Result<Scheme> {
    match s {
        "canonical" => Ok(Scheme::Canonical),
        "nonlinear" => Ok(Scheme::Nonlinear),
        "ideal-cubic" => Ok(Scheme::IdealCubic),
        other => Err(Error::Config(format!("unknown scheme `{other}`"))),
    }
}

fn parse_ancilla(s: &str) -> Result<AncillaKind> {
    match s {
        "two-component" => Ok(AncillaKind::TwoComponent),
        "three-component" => Ok(AncillaKind::ThreeComponent),
        "cubic-finite" => Ok(AncillaKind::CubicFinite),
        other => Err(Error::Config(format!("unknown ancilla kind `{other}`"))),
    }
}

pub fn run(config: &Path, out: &Path, seed_override: Option<u64>) -> Result<()> {
    let rec = load_config(config)?;
    rec.check_known_keys(&KEYS)?;
    let schemes: Vec<Scheme> = rec
        .str_list("schemes")?
        .iter()
        .map(|s| parse_scheme(s))
        .collect::<Result<_>>()?;
    let ancillas: Vec<AncillaKind> = rec
        .str_list("ancillas")?
        .iter()
        .map(|s| parse_ancilla(s))
        .collect::<Result<_>>()?;
    let budgets = rec.f64_list("s_max_db")?;
    let noises = rec.f64_list("n")?;
    let restarts = rec.usize_or("restarts", 430)?;
    let seed = seed_override.unwrap_or(rec.u64_or("seed", 1)?);

    let mut points = Vec::new();
    for &scheme in &schemes {
        for &ancilla in &ancillas {
            for &s_max_db in &budgets {
                for &n in &noises {
                    points.push(DeterministicSetup {
                        scheme,
                        ancilla,
                        s_max_db,
                        n,
                    });
                }
            }
        }
    }

    let results: Result<Vec<_>> = points
        .par_iter()
        .map(|setup| optimize_deterministic(setup, restarts, seed))
        .collect();
    let mut results = results?;
    results.sort_by(|a, b| {
        (a.setup.scheme.as_str(), a.setup.ancilla.as_str())
            .cmp(&(b.setup.scheme.as_str(), b.setup.ancilla.as_str()))
            .then(a.setup.s_max_db.partial_cmp(&b.setup.s_max_db).unwrap())
            .then(a.setup.n.partial_cmp(&b.setup.n).unwrap())
    });

    let mut csv = CsvOut::new(
        rec.hash(),
        seed,
        &[
            "scheme",
            "ancilla",
            "s_max_db",
            "n",
            "xi",
            "xi_db",
            "initial_xi_db",
            "z_out",
            "var_x_out",
            "var_p_out",
            "numerator",
            "restarts",
        ],
    );
    for r in &results {
        csv.row(&[
            r.setup.scheme.as_str().into(),
            r.setup.ancilla.as_str().into(),
            fmt(r.setup.s_max_db),
            fmt(r.setup.n),
            fmt(r.xi),
            fmt(r.xi_db),
            fmt(r.initial_xi_db),
            fmt(r.z_out),
            fmt(r.output.var_x_out),
            fmt(r.output.var_p_out),
            fmt(r.output.numerator),
            restarts.to_string(),
        ]);
    }
    csv.write(out)
}

//! Post-selection curves from the exact Fock backend, either from the
//! unity-gain presets (reference feedforward strengths) or by replaying a
//! stored optimizer record.

use std::path::Path;

use nlteleport::config::{ancilla_from_record, cluster_from_record, scheme_from_record, Record};
use nlteleport::error::{Error, Result};
use nlteleport::experiments::{reference_chi_preset, replay_through_fock, ProbabilisticPreset};
use nlteleport::fock::sim::{AggregationMode, GridSpec, PostSelection};
use nlteleport::metrics::gaussian_min_variance;
use nlteleport::moments::Scheme;

use crate::common::{fmt, load_config, CsvOut};

const KEYS: [&str; 9] = [
    "cluster_db",
    "u",
    "etas",
    "chi",
    "p_points",
    "cutoff",
    "seed",
    "stored",
    "cells_out",
];

pub fn run(
    config: &Path,
    out: &Path,
    seed_override: Option<u64>,
    cutoff_override: Option<usize>,
) -> Result<()> {
    let rec = load_config(config)?;
    rec.check_known_keys(&KEYS)?;
    let seed = seed_override.unwrap_or(rec.u64_or("seed", 1)?);

    if let Some(stored) = rec.get("stored") {
        return replay_stored(Path::new(stored), &rec, out, seed, cutoff_override);
    }

    let dbs = rec.f64_list("cluster_db")?;
    let u = rec.f64_or("u", 0.79)?;
    let etas: Vec<f64> = match rec.get("etas") {
        Some(_) => rec.f64_list("etas")?,
        None => vec![1.0],
    };
    let p_points = rec.usize_or("p_points", 40)?;
    let cutoff = cutoff_override.unwrap_or(rec.usize_or("cutoff", 30)?);

    let mut csv = CsvOut::new(
        rec.hash(),
        seed,
        &[
            "cluster_db",
            "scheme",
            "mode",
            "lossy",
            "eta",
            "chi",
            "z_query",
            "p",
            "xi",
            "xi_db",
        ],
    );
    let mut cells_csv = rec.get("cells_out").map(|_| {
        CsvOut::new(
            rec.hash(),
            seed,
            &[
                "cluster_db",
                "scheme",
                "eta",
                "m_x",
                "m_p",
                "probability",
                "xi_cell",
            ],
        )
    });

    for &db in &dbs {
        for &eta in &etas {
            let loss = if eta >= 1.0 { None } else { Some(eta) };
            let chi = match rec.get("chi") {
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::Config("key `chi` is not a number".into()))?,
                None => reference_chi_preset(db, loss).ok_or_else(|| {
                    Error::Config(format!(
                        "no preset feedforward strength for {db} dB / eta {eta}; \
                         set `chi` explicitly or store an optimizer result"
                    ))
                })?,
            };
            let preset = ProbabilisticPreset::new(db, u, chi, loss, cutoff);
            let z = preset.z_query()?;
            for scheme in [Scheme::Canonical, Scheme::Nonlinear] {
                let grid = preset.grid(scheme, &GridSpec::default())?;
                if let Some(cells) = cells_csv.as_mut() {
                    for cell in &grid.cells {
                        let xi_cell = (cell.moments.var_p
                            + 2.0 * z * cell.moments.cov_x2_p
                            + z * z * cell.moments.var_x2)
                            / gaussian_min_variance(z);
                        cells.row(&[
                            fmt(db),
                            scheme.as_str().into(),
                            fmt(eta),
                            fmt(cell.m_x),
                            fmt(cell.m_p),
                            fmt(cell.probability),
                            fmt(xi_cell),
                        ]);
                    }
                }
                for mode in [AggregationMode::States, AggregationMode::Xi] {
                    let curve = nlteleport::fock::sim::postselect(
                        &grid,
                        &PostSelection { mode, z_query: z },
                    )?;
                    for k in 1..=p_points {
                        let p = k as f64 * grid.mass / p_points as f64;
                        let pt = curve.at_probability(p);
                        csv.row(&[
                            fmt(db),
                            scheme.as_str().into(),
                            mode.as_str().into(),
                            (if loss.is_some() { "1" } else { "0" }).into(),
                            fmt(eta),
                            fmt(if scheme == Scheme::Canonical {
                                0.0
                            } else {
                                chi
                            }),
                            fmt(z),
                            fmt(pt.probability),
                            fmt(pt.xi),
                            fmt(10.0 * pt.xi.log10()),
                        ]);
                    }
                }
            }
        }
    }
    if let Some(cells) = &cells_csv {
        cells.write(Path::new(rec.require("cells_out")?))?;
    }
    csv.write(out)
}

fn replay_stored(
    stored: &Path,
    rec: &Record,
    out: &Path,
    seed: u64,
    cutoff_override: Option<usize>,
) -> Result<()> {
    if !stored.exists() {
        return Err(Error::Config(format!(
            "stored parameter record {} not found; run `nlteleport optimize` first \
             and point `stored` at the saved record",
            stored.display()
        )));
    }
    let stored_rec = load_config(stored)?;
    let cluster = cluster_from_record(&stored_rec)?;
    let scheme = scheme_from_record(&stored_rec)?;
    let ancilla = ancilla_from_record(&stored_rec)?;
    let s_max_db = stored_rec.f64("s_max_db")?;
    let z_query = stored_rec.f64("z_out")?;
    let cutoff = cutoff_override.unwrap_or(rec.usize_or("cutoff", 30)?);
    let (xi_full, curve) =
        replay_through_fock(&cluster, s_max_db, &ancilla, &scheme, cutoff, z_query)?;
    let mut csv = CsvOut::new(
        rec.hash(),
        seed,
        &["scheme", "mode", "z_query", "p", "xi", "xi_db"],
    );
    for pt in curve
        .points
        .iter()
        .step_by((curve.points.len() / 64).max(1))
        .chain(std::iter::once(&curve.full_acceptance()))
    {
        csv.row(&[
            scheme.scheme.as_str().into(),
            AggregationMode::States.as_str().into(),
            fmt(z_query),
            fmt(pt.probability),
            fmt(pt.xi),
            fmt(10.0 * pt.xi.log10()),
        ]);
    }
    eprintln!(
        "replayed {} through the Fock backend: full-acceptance xi = {xi_full:.6} \
         (stored analytic xi = {})",
        stored.display(),
        stored_rec.get("xi").unwrap_or("?")
    );
    csv.write(out)
}

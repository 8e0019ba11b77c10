//! Full-parameter optimization with persistence: writes a replayable flat
//! parameter record (keyed by the config hash) and the restart log.

use std::fs;
use std::path::Path;

use nlteleport::config::{ancilla_to_record, cluster_to_record, scheme_to_record, Record};
use nlteleport::error::{Error, Result};
use nlteleport::experiments::{optimize_deterministic, AncillaKind, DeterministicSetup};
use nlteleport::moments::Scheme;

use crate::common::{fmt, load_config, CsvOut};

const KEYS: [&str; 6] = ["scheme", "ancilla", "s_max_db", "n", "restarts", "seed"];

pub fn run(config: &Path, out_dir: &Path, seed_override: Option<u64>) -> Result<()> {
    let rec = load_config(config)?;
    rec.check_known_keys(&KEYS)?;
    let scheme = match rec.require("scheme")? {
        "canonical" => Scheme::Canonical,
        "nonlinear" => Scheme::Nonlinear,
        "ideal-cubic" => Scheme::IdealCubic,
        other => return Err(Error::Config(format!("unknown scheme `{other}`"))),
    };
    let ancilla = match rec.require("ancilla")? {
        "two-component" => AncillaKind::TwoComponent,
        "three-component" => AncillaKind::ThreeComponent,
        "cubic-finite" => AncillaKind::CubicFinite,
        other => return Err(Error::Config(format!("unknown ancilla kind `{other}`"))),
    };
    let setup = DeterministicSetup {
        scheme,
        ancilla,
        s_max_db: rec.f64("s_max_db")?,
        n: rec.f64_or("n", 0.0)?,
    };
    let restarts = rec.usize_or("restarts", 430)?;
    let seed = seed_override.unwrap_or(rec.u64_or("seed", 1)?);
    let hash = rec.hash();

    let result = optimize_deterministic(&setup, restarts, seed)?;

    fs::create_dir_all(out_dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut stored = Record::new();
    stored.set("config_hash", format!("{hash:016x}"));
    stored.set("seed", seed);
    stored.set("restarts", restarts);
    stored.set("s_max_db", setup.s_max_db);
    cluster_to_record(&result.best.cluster, &mut stored);
    scheme_to_record(&result.best.scheme, &mut stored);
    if let Some(spec) = &result.best.ancilla {
        ancilla_to_record(spec, &mut stored);
    }
    stored.set("xi", result.xi);
    stored.set("xi_db", result.xi_db);
    stored.set("z_out", result.z_out);
    stored.set("initial_xi_db", result.initial_xi_db);
    let record_path = out_dir.join(format!("optimum-{hash:016x}.conf"));
    fs::write(&record_path, stored.to_canonical_string())
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", record_path.display())))?;

    let names = setup.param_names();
    let mut columns = vec![
        "index".to_string(),
        "value".to_string(),
        "failed".to_string(),
    ];
    columns.extend(names.iter().map(|n| format!("start_{n}")));
    columns.extend(names.iter().map(|n| format!("end_{n}")));
    let column_refs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
    let mut log = CsvOut::new(hash, seed, &column_refs);
    for r in &result.outcome.restarts {
        let mut row = vec![
            r.index.to_string(),
            fmt(r.value),
            (r.failed as u8).to_string(),
        ];
        row.extend(r.start.iter().map(|v| fmt(*v)));
        row.extend(r.end.iter().map(|v| fmt(*v)));
        log.row(&row);
    }
    log.write(&out_dir.join(format!("restarts-{hash:016x}.csv")))?;

    println!(
        "optimum: xi = {:.6} ({:+.4} dB) at z = {:+.5}; record: {}",
        result.xi,
        result.xi_db,
        result.z_out,
        record_path.display()
    );
    Ok(())
}

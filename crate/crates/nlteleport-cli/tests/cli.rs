//! End-to-end runs of the binary: config handling, exit codes, output
//! reproducibility and the optimize/replay round trip.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlteleport"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nlt-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn validate_passes() {
    let out = bin().args(["validate", "--cutoff", "20"]).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn unknown_config_key_exits_with_code_one() {
    let cfg = tmp("bad.conf");
    fs::write(&cfg, "bogus = 1\n").unwrap();
    let out = bin()
        .args(["deterministic-sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp("bad.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus"), "stderr must name the key: {err}");
}

#[test]
fn missing_stored_record_points_at_the_optimizer() {
    let cfg = tmp("replay-missing.conf");
    fs::write(&cfg, "stored = /nonexistent/record.conf\n").unwrap();
    let out = bin()
        .args(["probabilistic-sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp("replay-missing.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("optimize"));
}

#[test]
fn deterministic_sweep_is_reproducible() {
    let cfg = tmp("det.conf");
    fs::write(
        &cfg,
        "schemes = ideal-cubic\nancillas = cubic-finite\ns_max_db = 6\nn = 0\nrestarts = 12\nseed = 3\n",
    )
    .unwrap();
    let out1 = tmp("det1.csv");
    let out2 = tmp("det2.csv");
    for out in [&out1, &out2] {
        let st = bin()
            .args(["deterministic-sweep", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(st.success());
    }
    let a = fs::read(&out1).unwrap();
    let b = fs::read(&out2).unwrap();
    assert_eq!(a, b, "identical configs must produce byte-identical output");
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# config_hash = "));
    assert!(text.lines().count() >= 3);
}

#[test]
fn optimize_then_replay_round_trip() {
    let cfg = tmp("opt.conf");
    fs::write(
        &cfg,
        "scheme = canonical\nancilla = two-component\ns_max_db = 5\nn = 0\nrestarts = 30\nseed = 2\n",
    )
    .unwrap();
    let dir = tmp("optdir");
    let st = bin()
        .args(["optimize", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(st.success());
    let record = fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| {
            p.file_name()
                .unwrap()
                .to_string_lossy()
                .starts_with("optimum-")
        })
        .expect("parameter record written");
    let stored_text = fs::read_to_string(&record).unwrap();
    let stored_xi: f64 = stored_text
        .lines()
        .find_map(|l| l.strip_prefix("xi = "))
        .unwrap()
        .parse()
        .unwrap();

    let replay_cfg = tmp("replay.conf");
    fs::write(
        &replay_cfg,
        format!("stored = {}\ncutoff = 24\n", record.display()),
    )
    .unwrap();
    let replay_out = tmp("replay.csv");
    let out = bin()
        .args(["probabilistic-sweep", "--config"])
        .arg(&replay_cfg)
        .arg("--out")
        .arg(&replay_out)
        .output()
        .unwrap();
    assert!(out.status.success());
    // the canonical (chi = 0) replay matches the analytic optimum closely
    let text = fs::read_to_string(&replay_out).unwrap();
    let last = text.lines().last().unwrap();
    let xi_replayed: f64 = last.split(',').nth(4).unwrap().parse().unwrap();
    assert!(
        ((xi_replayed - stored_xi) / stored_xi).abs() < 0.02,
        "replayed {xi_replayed} vs stored {stored_xi}"
    );
}

//! Flat key-value configuration records: one experiment per file, canonical
//! serialization for reproducible output headers, and round-trips for the
//! shared parameter types.

use std::collections::BTreeMap;

use crate::ancilla::AncillaSpec;
use crate::error::{Error, Result};
use crate::gaussian::ClusterParams;
use crate::metrics::SqueezingReport;
use crate::moments::{Scheme, SchemeConfig};

/// Ordered key-value record. Keys are unique; writing is canonical (sorted
/// keys, `key = value` lines), so equal records serialize byte-identically.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record {
    entries: BTreeMap<String, String>,
}

impl Record {
    pub fn new() -> Self {
        Record::default()
    }

    pub fn parse(text: &str) -> Result<Record> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        Ok(Record { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.require(key)?
            .parse()
            .map_err(|_| Error::Config(format!("key `{key}` is not a number")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key `{key}` is not a number"))),
            None => Ok(default),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key `{key}` is not an integer"))),
            None => Ok(default),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key `{key}` is not an integer"))),
            None => Ok(default),
        }
    }

    /// List values: comma-separated numbers.
    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.require(key)?
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("key `{key}` has a non-numeric entry")))
            })
            .collect()
    }

    pub fn str_list(&self, key: &str) -> Result<Vec<String>> {
        Ok(self
            .require(key)?
            .split(',')
            .map(|v| v.trim().to_string())
            .collect())
    }

    /// Rejects keys outside the allowed set, naming the offender.
    pub fn check_known_keys(&self, allowed: &[&str]) -> Result<()> {
        for key in self.keys() {
            if !allowed.contains(&key) {
                return Err(Error::Config(format!(
                    "unknown config key `{key}` (allowed: {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// FNV-1a hash of the canonical serialization.
    pub fn hash(&self) -> u64 {
        fnv1a(self.to_canonical_string().as_bytes())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub const CLUSTER_KEYS: [&str; 9] = [
    "r1", "r2", "phi", "phi1", "phi2", "t_c", "alpha1", "alpha2", "n",
];

pub fn cluster_to_record(p: &ClusterParams, rec: &mut Record) {
    rec.set("r1", p.r1);
    rec.set("r2", p.r2);
    rec.set("phi", p.phi);
    rec.set("phi1", p.phi1);
    rec.set("phi2", p.phi2);
    rec.set("t_c", p.t_c);
    rec.set("alpha1", p.alpha1);
    rec.set("alpha2", p.alpha2);
    rec.set("n", p.n);
}

pub fn cluster_from_record(rec: &Record) -> Result<ClusterParams> {
    Ok(ClusterParams {
        r1: rec.f64("r1")?,
        r2: rec.f64("r2")?,
        phi: rec.f64("phi")?,
        phi1: rec.f64("phi1")?,
        phi2: rec.f64("phi2")?,
        t_c: rec.f64("t_c")?,
        alpha1: rec.f64("alpha1")?,
        alpha2: rec.f64("alpha2")?,
        n: rec.f64("n")?,
    })
}

pub fn ancilla_to_record(spec: &AncillaSpec, rec: &mut Record) {
    match *spec {
        AncillaSpec::TwoComponent { u } => {
            rec.set("kind", "two-component");
            rec.set("u", u);
        }
        AncillaSpec::ThreeComponent { c0, c1, c2 } => {
            rec.set("kind", "three-component");
            rec.set("c0", c0);
            rec.set("c1", c1);
            rec.set("c2", c2);
        }
        AncillaSpec::CubicFinite { chi, r } => {
            rec.set("kind", "cubic-finite");
            rec.set("chi_state", chi);
            rec.set("r_state", r);
        }
    }
}

pub fn ancilla_from_record(rec: &Record) -> Result<AncillaSpec> {
    let spec = match rec.require("kind")? {
        "two-component" => AncillaSpec::TwoComponent { u: rec.f64("u")? },
        "three-component" => AncillaSpec::ThreeComponent {
            c0: rec.f64("c0")?,
            c1: rec.f64("c1")?,
            c2: rec.f64("c2")?,
        },
        "cubic-finite" => AncillaSpec::CubicFinite {
            chi: rec.f64("chi_state")?,
            r: rec.f64("r_state")?,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown ancilla kind `{other}` \
                 (two-component, three-component, cubic-finite)"
            )))
        }
    };
    spec.validate(None)?;
    Ok(spec)
}

pub fn scheme_to_record(cfg: &SchemeConfig, rec: &mut Record) {
    rec.set("scheme", cfg.scheme.as_str());
    rec.set("t", cfg.t);
    rec.set("d_F", cfg.d_f);
    rec.set("g_F", cfg.g_f);
    rec.set("g_p", cfg.g_p);
    rec.set("chi", cfg.chi);
    rec.set("alpha_lin", cfg.alpha_lin);
}

pub fn scheme_from_record(rec: &Record) -> Result<SchemeConfig> {
    let scheme = match rec.require("scheme")? {
        "canonical" => Scheme::Canonical,
        "nonlinear" => Scheme::Nonlinear,
        "ideal-cubic" => Scheme::IdealCubic,
        other => {
            return Err(Error::Config(format!(
                "unknown scheme `{other}` (canonical, nonlinear, ideal-cubic)"
            )))
        }
    };
    let cfg = SchemeConfig {
        scheme,
        t: rec.f64_or("t", std::f64::consts::FRAC_1_SQRT_2)?,
        d_f: rec.f64_or("d_F", 2f64.sqrt())?,
        g_f: rec.f64_or("g_F", 2f64.sqrt())?,
        g_p: rec.f64_or("g_p", 1.0)?,
        chi: rec.f64_or("chi", 0.0)?,
        alpha_lin: rec.f64_or("alpha_lin", 1.0)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn report_to_record(r: &SqueezingReport, rec: &mut Record) {
    rec.set("z", r.z);
    rec.set("numerator", r.numerator);
    rec.set("denominator", r.denominator);
    rec.set("xi", r.xi);
    rec.set("xi_db", r.xi_db);
    rec.set("z_native", r.z_native);
}

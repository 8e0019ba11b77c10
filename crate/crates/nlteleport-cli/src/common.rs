use std::fs;
use std::path::Path;

use nlteleport::config::Record;
use nlteleport::error::{Error, Result};

pub fn load_config(path: &Path) -> Result<Record> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Record::parse(&text)
}

/// CSV writer with the reproducibility header: identical configs and seeds
/// produce byte-identical files.
pub struct CsvOut {
    buf: String,
}

impl CsvOut {
    pub fn new(config_hash: u64, seed: u64, columns: &[&str]) -> Self {
        let mut buf = String::new();
        buf.push_str(&format!(
            "# config_hash = {config_hash:016x} seed = {seed}\n"
        ));
        buf.push_str(&columns.join(","));
        buf.push('\n');
        CsvOut { buf }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| {
                    Error::Config(format!("cannot create {}: {e}", parent.display()))
                })?;
            }
        }
        fs::write(path, &self.buf)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
    }
}

pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.9e}")
    }
}

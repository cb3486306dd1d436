//! CSV and JSON result files. Nothing time-dependent is written, so equal
//! settings give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use crown_core::experiments::{Outcome, Settings};
use serde::Serialize;

use crate::Format;

#[derive(Serialize)]
struct Document<'a> {
    command: &'a str,
    version: &'a str,
    all_passed: bool,
    settings: &'a Settings,
    outcomes: &'a [Outcome],
}

pub fn write(dir: &Path, command: &str, settings: &Settings, outcomes: &[Outcome], format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    if matches!(format, Format::Csv | Format::Both) {
        let path = dir.join(format!("{command}.csv"));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("opening {}", path.display()))?;
        for o in outcomes {
            for r in &o.rows {
                w.serialize(r)?;
            }
        }
        w.flush()?;
        written.push(path);
        let cfg = dir.join(format!("{command}.toml"));
        fs::write(&cfg, toml::to_string(settings)?).with_context(|| format!("writing {}", cfg.display()))?;
        written.push(cfg);
    }
    if matches!(format, Format::Json | Format::Both) {
        let path = dir.join(format!("{command}.json"));
        let doc = Document {
            command,
            version: env!("CARGO_PKG_VERSION"),
            all_passed: outcomes.iter().all(|o| o.verdict.passed()),
            settings,
            outcomes,
        };
        fs::write(&path, serde_json::to_string_pretty(&doc)?).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

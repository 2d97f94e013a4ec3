//! Run directory: tables plus a manifest, written atomically.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Config, Job};
use crate::table::Table;

pub const MANIFEST: &str = "manifest.toml";

#[derive(Serialize)]
struct Manifest<'a> {
    job: &'a str,
    seed: u64,
    config_sha256: String,
    versions: Versions,
    files: Vec<FileEntry>,
    parameters: &'a Config,
}

#[derive(Serialize)]
struct Versions {
    slogit: &'static str,
    #[serde(rename = "slogit-core")]
    slogit_core: &'static str,
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    rows: usize,
    sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes all tables and the manifest into a fresh directory next to `out`,
/// then renames it into place. Nothing is left behind on failure.
pub fn write_run(
    out: &Path,
    job: Job,
    config_text: &str,
    config: &Config,
    seed: u64,
    tables: &[Table],
) -> Result<()> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => ".".into(),
    };
    fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
    if out.exists() {
        let reusable =
            out.is_dir() && (out.join(MANIFEST).is_file() || fs::read_dir(out)?.next().is_none());
        if !reusable {
            bail!(
                "{} exists and is not an earlier run directory",
                out.display()
            );
        }
    }
    let tmp = tempfile::Builder::new()
        .prefix(".slogit-run-")
        .tempdir_in(&parent)
        .with_context(|| format!("creating a temporary directory in {}", parent.display()))?;
    let mut files = Vec::with_capacity(tables.len());
    for t in tables {
        let bytes = t.render(job.name())?;
        let name = t.file_name();
        fs::write(tmp.path().join(&name), &bytes).with_context(|| format!("writing {name}"))?;
        files.push(FileEntry {
            name,
            rows: t.rows.len(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        job: job.name(),
        seed,
        config_sha256: sha256_hex(config_text.as_bytes()),
        versions: Versions {
            slogit: env!("CARGO_PKG_VERSION"),
            slogit_core: slogit_core::VERSION,
        },
        files,
        parameters: config,
    };
    let text = toml::to_string(&manifest).context("serializing the manifest")?;
    fs::write(tmp.path().join(MANIFEST), text)?;
    if out.exists() {
        fs::remove_dir_all(out).with_context(|| format!("replacing {}", out.display()))?;
    }
    let staged = tmp.keep();
    if let Err(e) = fs::rename(&staged, out) {
        let _ = fs::remove_dir_all(&staged);
        return Err(e).with_context(|| format!("moving results into {}", out.display()));
    }
    Ok(())
}

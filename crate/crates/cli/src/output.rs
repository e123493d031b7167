use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "EXCON_OUT_ROOT";
pub const MANIFEST: &str = "manifest.tsv";
pub const CONFIG: &str = "config.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `out` when given, else `<root>/<subcommand>_seed<seed>` with the root
/// from [`OUT_ROOT_ENV`] or `excon-runs`.
pub fn resolve_out(out: Option<&Path>, subcommand: &str, seed: u64) -> PathBuf {
    match out {
        Some(p) => p.to_path_buf(),
        None => {
            let root = std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| "excon-runs".into());
            root.join(format!("{subcommand}_seed{seed}"))
        }
    }
}

/// Writes `bytes` to a sibling temp file, syncs it and renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// One run directory. Every artifact goes through [`RunDir::write`]; the
/// manifest is written last by [`RunDir::finish`].
#[derive(Debug)]
pub struct RunDir {
    dir: PathBuf,
    entries: Vec<(String, String, usize)>,
}

impl RunDir {
    pub fn create(dir: &Path) -> io::Result<RunDir> {
        fs::create_dir_all(dir)?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.entries.retain(|(n, _, _)| n != name);
        self.entries.push((name.to_string(), sha256_hex(bytes), bytes.len()));
        Ok(())
    }

    /// Writes the effective configuration and the manifest
    /// (`path<TAB>sha256<TAB>bytes` per artifact).
    pub fn finish(mut self, config: &serde_json::Value) -> io::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(config).expect("config serializes");
        text.push('\n');
        self.write(CONFIG, text.as_bytes())?;
        let manifest: String = self
            .entries
            .iter()
            .map(|(name, sha, bytes)| format!("{name}\t{sha}\t{bytes}\n"))
            .collect();
        let path = self.dir.join(MANIFEST);
        write_atomic(&path, manifest.as_bytes())?;
        Ok(path)
    }
}

//! Output directories, atomic artifact writes and the run manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage {
    pub command: String,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub parameters: serde_json::Value,
    pub threads: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub stages: BTreeMap<String, Stage>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            stages: BTreeMap::new(),
        }
    }
}

impl Manifest {
    pub fn load(dir: &Path) -> CliResult<Option<Manifest>> {
        let path = dir.join(MANIFEST_NAME);
        match File::open(&path) {
            Ok(f) => {
                let m = serde_json::from_reader(BufReader::new(f))
                    .map_err(|e| CliError::Integrity(format!("{}: {e}", path.display())))?;
                Ok(Some(m))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Checksum recorded for a file name by any stage.
    pub fn recorded(&self, name: &str) -> Option<&FileRecord> {
        self.stages.values().flat_map(|s| &s.outputs).find(|r| r.path == name)
    }
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
    bytes: u64,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

pub fn hash_file(path: &Path) -> io::Result<(String, u64)> {
    let mut f = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), bytes))
}

/// Fails with the missing-input error unless `path` is an existing file.
pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

/// Hashes an input and, when its directory holds a manifest that lists it,
/// checks the hash against the recorded one.
pub fn verify_input(path: &Path) -> CliResult<FileRecord> {
    require_file(path)?;
    let (sha256, bytes) = hash_file(path)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    if let Some(m) = Manifest::load(dir)? {
        if let Some(rec) = m.recorded(&name) {
            if rec.sha256 != sha256 || rec.bytes != bytes {
                return Err(CliError::Integrity(format!(
                    "{} does not match the checksum in {}",
                    path.display(),
                    dir.join(MANIFEST_NAME).display()
                )));
            }
        }
    }
    Ok(FileRecord { path: path.display().to_string(), sha256, bytes })
}

/// One stage run writing into an output directory.
pub struct StageRun {
    dir: PathBuf,
    name: String,
    command: String,
    parameters: serde_json::Value,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    warnings: Vec<String>,
    started: u64,
}

impl StageRun {
    pub fn begin(
        dir: &Path,
        name: &str,
        command: &str,
        parameters: serde_json::Value,
    ) -> CliResult<StageRun> {
        fs::create_dir_all(dir)?;
        Ok(StageRun {
            dir: dir.to_path_buf(),
            name: name.to_string(),
            command: command.to_string(),
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            started: unix_now(),
        })
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let rec = verify_input(path)?;
        self.inputs.push(rec);
        Ok(())
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    /// Writes `name` through a temp file in the output directory and renames
    /// it into place once `fill` succeeds.
    pub fn write<F>(&mut self, name: &str, fill: F) -> CliResult<()>
    where
        F: FnOnce(&mut dyn Write) -> CliResult<()>,
    {
        let tmp = NamedTempFile::new_in(&self.dir)?;
        let mut w = HashingWriter { inner: BufWriter::new(tmp), hasher: Sha256::new(), bytes: 0 };
        fill(&mut w)?;
        w.flush()?;
        let HashingWriter { inner, hasher, bytes } = w;
        let tmp = inner.into_inner().map_err(|e| e.into_error())?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.dir.join(name)).map_err(|e| e.error)?;
        self.outputs.retain(|r| r.path != name);
        self.outputs.push(FileRecord {
            path: name.to_string(),
            sha256: hex::encode(hasher.finalize()),
            bytes,
        });
        Ok(())
    }

    /// Records the stage in the directory manifest, replacing an earlier run
    /// of the same stage.
    pub fn finish(self) -> CliResult<Manifest> {
        let mut manifest = Manifest::load(&self.dir)?.unwrap_or_default();
        manifest.tool = env!("CARGO_PKG_NAME").to_string();
        manifest.version = env!("CARGO_PKG_VERSION").to_string();
        manifest.stages.insert(
            self.name,
            Stage {
                command: self.command,
                inputs: self.inputs,
                outputs: self.outputs,
                parameters: self.parameters,
                threads: rayon::current_num_threads(),
                started_unix: self.started,
                finished_unix: unix_now(),
                warnings: self.warnings,
            },
        );
        let tmp = NamedTempFile::new_in(&self.dir)?;
        let mut w = BufWriter::new(tmp);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        let tmp = w.into_inner().map_err(|e| e.into_error())?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.dir.join(MANIFEST_NAME)).map_err(|e| e.error)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sha256_of_known_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("abc");
        fs::write(&path, b"abc").unwrap();
        let (h, n) = hash_file(&path).unwrap();
        assert_eq!(n, 3);
        assert_eq!(h, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn stage_records_outputs_and_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = StageRun::begin(dir.path(), "s", "test", json!({"x": 1})).unwrap();
        run.write("a.txt", |w| Ok(w.write_all(b"abc")?)).unwrap();
        let m = run.finish().unwrap();
        let rec = m.recorded("a.txt").unwrap();
        assert_eq!(rec.bytes, 3);
        assert_eq!(hash_file(&dir.path().join("a.txt")).unwrap().0, rec.sha256);

        assert!(verify_input(&dir.path().join("a.txt")).is_ok());
        fs::write(dir.path().join("a.txt"), b"abd").unwrap();
        assert!(matches!(verify_input(&dir.path().join("a.txt")), Err(CliError::Integrity(_))));
    }

    #[test]
    fn failed_write_leaves_no_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = StageRun::begin(dir.path(), "s", "test", json!({})).unwrap();
        let err = run.write("half.csv", |w| {
            w.write_all(b"partial")?;
            Err(crate::error::param("boom"))
        });
        assert!(err.is_err());
        assert!(!dir.path().join("half.csv").exists());
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn missing_input_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let err = verify_input(&dir.path().join("nope.bin")).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::code::MISSING_INPUT);
    }
}

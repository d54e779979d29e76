//! Write-then-rename helpers so a crashed writer never leaves a partial
//! artifact under its final name.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

static COUNTER: AtomicU64 = AtomicU64::new(0);

fn staging_path(target: &Path) -> io::Result<PathBuf> {
    let name = target
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "target has no file name"))?
        .to_string_lossy();
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let staged = format!(".{name}.tmp-{}-{n}", std::process::id());
    Ok(match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.join(staged),
        _ => PathBuf::from(staged),
    })
}

fn ensure_parent(target: &Path) -> io::Result<()> {
    match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p),
        _ => Ok(()),
    }
}

/// Writes a file through `fill`, then renames it over `target`.
pub fn write_file<F>(target: &Path, fill: F) -> io::Result<()>
where
    F: FnOnce(&mut io::BufWriter<fs::File>) -> io::Result<()>,
{
    ensure_parent(target)?;
    let tmp = staging_path(target)?;
    let result = (|| {
        let mut w = io::BufWriter::new(fs::File::create(&tmp)?);
        fill(&mut w)?;
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, target)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn write_bytes(target: &Path, bytes: &[u8]) -> io::Result<()> {
    write_file(target, |w| w.write_all(bytes))
}

/// Populates a staging directory through `fill`, then moves it to `target`,
/// replacing any existing directory.
pub fn write_dir<F>(target: &Path, fill: F) -> io::Result<()>
where
    F: FnOnce(&Path) -> io::Result<()>,
{
    ensure_parent(target)?;
    let tmp = staging_path(target)?;
    fs::create_dir_all(&tmp)?;
    let result = fill(&tmp).and_then(|_| {
        if target.exists() {
            fs::remove_dir_all(target)?;
        }
        fs::rename(&tmp, target)
    });
    if result.is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
    result
}

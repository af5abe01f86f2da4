//! Small filesystem helpers: atomic writes, appends, tree copies, digests.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use skillforge_core::digest::{sha256_hex, Digester};
use walkdir::WalkDir;

/// An IO error with the path it happened on.
#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct FsError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

pub type FsResult<T> = Result<T, FsError>;

pub fn at<P: AsRef<Path>>(path: P) -> impl FnOnce(io::Error) -> FsError {
    let path = path.as_ref().to_path_buf();
    move |source| FsError { path, source }
}

pub fn create_dir_all(path: &Path) -> FsResult<()> {
    fs::create_dir_all(path).map_err(at(path))
}

/// Writes through a sibling temp file, syncs, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> FsResult<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{}.tmp", name));
    {
        let mut f = File::create(&tmp).map_err(at(&tmp))?;
        f.write_all(bytes).map_err(at(&tmp))?;
        f.sync_all().map_err(at(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(at(path))?;
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

/// Appends complete lines and syncs before returning.
pub fn append_lines(path: &Path, lines: &[String]) -> FsResult<()> {
    if lines.is_empty() {
        return Ok(());
    }
    if let Some(dir) = path.parent() {
        create_dir_all(dir)?;
    }
    let mut buf = String::new();
    for l in lines {
        buf.push_str(l);
        buf.push('\n');
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(at(path))?;
    f.write_all(buf.as_bytes()).map_err(at(path))?;
    f.sync_data().map_err(at(path))
}

pub fn read_to_string(path: &Path) -> FsResult<String> {
    fs::read_to_string(path).map_err(at(path))
}

pub fn remove_dir_if_exists(path: &Path) -> FsResult<()> {
    match fs::remove_dir_all(path) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => Err(FsError {
            path: path.to_path_buf(),
            source: e,
        }),
        _ => Ok(()),
    }
}

pub fn is_executable(path: &Path) -> bool {
    fs::metadata(path)
        .map(|m| m.permissions().mode() & 0o111 != 0)
        .unwrap_or(false)
}

pub fn set_executable(path: &Path, executable: bool) -> FsResult<()> {
    let mode = if executable { 0o755 } else { 0o644 };
    fs::set_permissions(path, fs::Permissions::from_mode(mode)).map_err(at(path))
}

pub fn set_readonly(path: &Path) -> FsResult<()> {
    let mut perms = fs::metadata(path).map_err(at(path))?.permissions();
    perms.set_mode(perms.mode() & !0o222);
    fs::set_permissions(path, perms).map_err(at(path))
}

/// Regular files under `root`, as sorted `/`-joined relative paths.
pub fn list_files(root: &Path) -> Vec<String> {
    if !root.exists() {
        return Vec::new();
    }
    let mut out: Vec<String> = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter_map(|e| {
            e.path()
                .strip_prefix(root)
                .ok()
                .map(|p| p.to_string_lossy().replace('\\', "/"))
        })
        .collect();
    out.sort();
    out
}

/// Relative path to content digest (with an executable marker) for every file.
pub fn manifest(root: &Path) -> FsResult<BTreeMap<String, String>> {
    list_files(root)
        .into_iter()
        .map(|rel| {
            let p = root.join(&rel);
            let bytes = fs::read(&p).map_err(at(&p))?;
            let exec = if is_executable(&p) { "x" } else { "-" };
            Ok((rel, format!("{}{}", exec, sha256_hex(&bytes))))
        })
        .collect()
}

/// Digest over relative paths, contents and executable bits of every file
/// under `root` that passes `keep`.
pub fn dir_digest(root: &Path, keep: impl Fn(&str) -> bool) -> FsResult<String> {
    let mut d = Digester::new();
    for (rel, digest) in manifest(root)? {
        if keep(&rel) {
            d.entry(&rel, digest.as_bytes());
        }
    }
    Ok(d.finish_hex())
}

/// Copies every file under `src` into `dst`, keeping permissions.
pub fn copy_tree(src: &Path, dst: &Path) -> FsResult<()> {
    for rel in list_files(src) {
        copy_file(&src.join(&rel), &dst.join(&rel))?;
    }
    Ok(())
}

pub fn copy_file(src: &Path, dst: &Path) -> FsResult<()> {
    if let Some(dir) = dst.parent() {
        create_dir_all(dir)?;
    }
    if dst.exists() {
        // A read-only destination would make the copy fail.
        set_executable(dst, is_executable(dst))?;
    }
    fs::copy(src, dst).map_err(at(src))?;
    Ok(())
}

/// Moves a directory, falling back to copy and delete across devices.
pub fn move_dir(src: &Path, dst: &Path) -> FsResult<()> {
    if let Some(dir) = dst.parent() {
        create_dir_all(dir)?;
    }
    remove_dir_if_exists(dst)?;
    if fs::rename(src, dst).is_ok() {
        return Ok(());
    }
    copy_tree(src, dst)?;
    remove_dir_if_exists(src)
}

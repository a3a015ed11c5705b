//! One-object-per-line JSON files.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Parse { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("{path}: {source}")]
    Encode { path: PathBuf, source: serde_json::Error },
}

impl JsonlError {
    pub fn is_not_found(&self) -> bool {
        matches!(self, JsonlError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> JsonlError + '_ {
    move |source| JsonlError::Io { path: path.to_path_buf(), source }
}

/// Reads every non-blank line of `path`.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|source| JsonlError::Parse { path: path.to_path_buf(), line: i + 1, source })?;
        out.push(item);
    }
    Ok(out)
}

/// Like [`read_jsonl`] but a missing file reads as empty and a truncated
/// final line (an interrupted append) is ignored.
pub fn read_jsonl_lenient<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let lines: Vec<&str> = text.lines().collect();
    let complete = text.ends_with('\n');
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(item) => out.push(item),
            Err(_) if i + 1 == lines.len() && !complete => break,
            Err(source) => return Err(JsonlError::Parse { path: path.to_path_buf(), line: i + 1, source }),
        }
    }
    Ok(out)
}

/// Writes all items, replacing `path` atomically.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), JsonlError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
        for item in items {
            serde_json::to_writer(&mut w, item)
                .map_err(|source| JsonlError::Encode { path: path.to_path_buf(), source })?;
            w.write_all(b"\n").map_err(io_err(&tmp))?;
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Appends one line and flushes it.
pub fn append_jsonl<T: Serialize>(path: &Path, item: &T) -> Result<(), JsonlError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut line =
        serde_json::to_vec(item).map_err(|source| JsonlError::Encode { path: path.to_path_buf(), source })?;
    line.push(b'\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    f.write_all(&line).map_err(io_err(path))?;
    f.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Item {
        id: String,
        v: f64,
    }

    fn scratch(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("geouq-jsonl-{}-{name}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir.join("items.jsonl")
    }

    #[test]
    fn write_then_read() {
        let path = scratch("rw");
        let items = vec![Item { id: "a".into(), v: 1.5 }, Item { id: "b".into(), v: -0.25 }];
        write_jsonl(&path, &items).unwrap();
        assert_eq!(read_jsonl::<Item>(&path).unwrap(), items);
    }

    #[test]
    fn lenient_read_skips_torn_tail() {
        let path = scratch("torn");
        append_jsonl(&path, &Item { id: "a".into(), v: 1.0 }).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"id\":\"b\",").unwrap();
        assert_eq!(read_jsonl_lenient::<Item>(&path).unwrap().len(), 1);
        assert!(matches!(read_jsonl::<Item>(&path), Err(JsonlError::Parse { line: 2, .. })));
    }

    #[test]
    fn missing_file() {
        let path = scratch("missing");
        assert!(read_jsonl::<Item>(&path).unwrap_err().is_not_found());
        assert!(read_jsonl_lenient::<Item>(&path).unwrap().is_empty());
    }
}

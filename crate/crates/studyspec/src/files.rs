//! Reading inputs and writing outputs.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;
use studyspec_core::latin::LatinPool;
use studyspec_core::provenance::{parse_jsonl, ProvenanceEvent};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Pretty JSON with keys sorted at every level and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| anyhow!("replacing {}: {}", path.display(), e.error))?;
    Ok(())
}

pub fn load_pool(path: &Path) -> Result<LatinPool> {
    let text = read_text(path)?;
    let pool: LatinPool = serde_json::from_str(&text).with_context(|| format!("parsing pool {}", path.display()))?;
    Ok(pool)
}

pub fn save_pool(path: &Path, pool: &LatinPool) -> Result<()> {
    write_atomic(path, to_json(pool)?.as_bytes())
}

pub fn load_log(path: &Path) -> Result<Vec<ProvenanceEvent>> {
    parse_jsonl(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Numbers from the first column of a CSV file. A non-numeric first row is
/// taken as a header.
pub fn read_number_column(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let Some(cell) = rec.get(0).map(str::trim) else { continue };
        if cell.is_empty() {
            continue;
        }
        match cell.parse::<f64>() {
            Ok(x) => out.push(x),
            Err(_) if i == 0 => {}
            Err(_) => return Err(anyhow!("{}: row {}: `{cell}` is not a number", path.display(), i + 1)),
        }
    }
    Ok(out)
}

/// File stem with a `.trials` suffix removed.
pub fn participant_from_path(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    stem.trim_end_matches(".trials").to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn number_column_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "dwell\n1.5\n2\n\n3\n").unwrap();
        assert_eq!(read_number_column(&p).unwrap(), [1.5, 2.0, 3.0]);
        fs::write(&p, "1\nx\n").unwrap();
        assert!(read_number_column(&p).is_err());
    }

    #[test]
    fn sorted_json() {
        let v = serde_json::json!({"b": 1, "a": {"d": 2, "c": 3}});
        assert_eq!(to_json(&v).unwrap(), "{\n  \"a\": {\n    \"c\": 3,\n    \"d\": 2\n  },\n  \"b\": 1\n}\n");
    }
}

//! File formats: ASCII PLY clouds, float32 prediction blobs with JSON
//! sidecars, PNG depth/colour images and versioned JSON documents.

pub mod blob;
pub mod ply;
pub mod png;

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Version stamped into every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    // tempfile creates 0600; outputs should be as readable as a plain create.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Serialises `body` as a JSON object with a `schema_version` key added.
/// Object keys come out sorted, so equal documents are byte-identical.
pub fn to_versioned_json<T: Serialize>(body: &T) -> Result<String> {
    let value = serde_json::to_value(body)?;
    let serde_json::Value::Object(fields) = value else {
        return Err(Error::input("versioned documents must serialise to a JSON object"));
    };
    let mut doc = serde_json::Map::new();
    doc.insert("schema_version".into(), SCHEMA_VERSION.into());
    for (k, v) in fields {
        if k != "schema_version" {
            doc.insert(k, v);
        }
    }
    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(doc))?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: &Path, body: &T) -> Result<()> {
    write_atomic(path, to_versioned_json(body)?.as_bytes())
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    }
}

/// Parses a versioned document, checking and stripping `schema_version`.
pub fn parse_versioned_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| json_error(path, e))?;
    let parse_err = |message: String| Error::Parse {
        path: path.display().to_string(),
        location: "top level".into(),
        message,
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| parse_err("expected a JSON object".into()))?;
    match obj.remove("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(v) => return Err(parse_err(format!("unsupported schema_version {v}"))),
        None => return Err(parse_err("missing schema_version".into())),
    }
    serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse_versioned_json(path, &text)
}

/// Parses an unversioned JSON input (such as camera intrinsics).
pub fn read_plain_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| json_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Doc {
        value: f64,
    }

    #[test]
    fn versioned_round_trip() {
        let text = to_versioned_json(&Doc { value: 0.25 }).unwrap();
        assert!(text.contains("\n  \"schema_version\": 1,"));
        let back: Doc = parse_versioned_json(Path::new("x.json"), &text).unwrap();
        assert_eq!(back, Doc { value: 0.25 });
    }

    #[test]
    fn version_required() {
        let err = parse_versioned_json::<Doc>(Path::new("x.json"), "{\"value\": 1}").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let err = parse_versioned_json::<Doc>(Path::new("x.json"), "{\n\"value\": }").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

//! Raw little-endian float32 arrays with a JSON sidecar.
//!
//! The data file holds `num_points * channels.len()` values, point-major:
//! all channels of point 0, then point 1, and so on. The sidecar names the
//! channels so readers can check the layout.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::PerPointPrediction;

pub const DTYPE: &str = "float32_le";

/// Channels of a segmentation prediction blob; `fg_prob` is optional.
pub const PREDICTION_CHANNELS: [&str; 4] = ["semantic", "offset_x", "offset_y", "offset_z"];
pub const FG_CHANNEL: &str = "fg_prob";
pub const NPCS_CHANNELS: [&str; 3] = ["npcs_x", "npcs_y", "npcs_z"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobMeta {
    pub num_points: usize,
    pub dtype: String,
    pub channels: Vec<String>,
}

/// `pred.bin` -> `pred.json`.
pub fn sidecar_path(data: &Path) -> PathBuf {
    data.with_extension("json")
}

/// Values in point-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub meta: BlobMeta,
    pub values: Vec<f32>,
}

impl Blob {
    fn channel(&self, name: &str) -> Option<usize> {
        self.meta.channels.iter().position(|c| c == name)
    }

    fn get(&self, point: usize, channel: usize) -> f64 {
        f64::from(self.values[point * self.meta.channels.len() + channel])
    }

    fn require(&self, names: &[&str]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.channel(n)
                    .ok_or_else(|| Error::input(format!("blob has no '{n}' channel")))
            })
            .collect()
    }
}

pub fn read_blob(data: &Path, meta: &Path) -> Result<Blob> {
    let meta_doc: BlobMeta = super::read_json(meta)?;
    if meta_doc.dtype != DTYPE {
        return Err(Error::Parse {
            path: meta.display().to_string(),
            location: "dtype".into(),
            message: format!("unsupported dtype '{}', expected '{DTYPE}'", meta_doc.dtype),
        });
    }
    let bytes = std::fs::read(data)?;
    let expected = meta_doc.num_points * meta_doc.channels.len() * 4;
    if bytes.len() != expected {
        return Err(Error::Parse {
            path: data.display().to_string(),
            location: format!("byte {}", bytes.len().min(expected)),
            message: format!("file has {} bytes, sidecar implies {expected}", bytes.len()),
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Parse {
            path: data.display().to_string(),
            location: format!("byte {}", 4 * k),
            message: "non-finite value".into(),
        });
    }
    Ok(Blob { meta: meta_doc, values })
}

/// Writes the data file and its sidecar, both atomically.
pub fn write_blob(data: &Path, meta: &Path, channels: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut bytes = Vec::with_capacity(rows.len() * channels.len() * 4);
    for row in rows {
        if row.len() != channels.len() {
            return Err(Error::input("blob row width does not match the channel list"));
        }
        for &v in row {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let doc = BlobMeta {
        num_points: rows.len(),
        dtype: DTYPE.into(),
        channels: channels.iter().map(|c| c.to_string()).collect(),
    };
    super::write_atomic(data, &bytes)?;
    super::write_json(meta, &doc)
}

pub fn prediction_from_blob(blob: &Blob) -> Result<PerPointPrediction> {
    let c = blob.require(&PREDICTION_CHANNELS)?;
    let fg = blob.channel(FG_CHANNEL);
    let n = blob.meta.num_points;
    let mut semantic = Vec::with_capacity(n);
    for i in 0..n {
        let s = blob.get(i, c[0]);
        if s.fract() != 0.0 || !(0.0..=9.0).contains(&s) {
            return Err(Error::input(format!("point {i}: semantic value {s} is not a label in 0..=9")));
        }
        semantic.push(s as u8);
    }
    let pred = PerPointPrediction {
        semantic,
        offsets: (0..n)
            .map(|i| Vector3::new(blob.get(i, c[1]), blob.get(i, c[2]), blob.get(i, c[3])))
            .collect(),
        fg_prob: fg.map(|k| (0..n).map(|i| blob.get(i, k)).collect()),
    };
    pred.validate(n)?;
    Ok(pred)
}

pub fn npcs_from_blob(blob: &Blob) -> Result<Vec<Vector3<f64>>> {
    let c = blob.require(&NPCS_CHANNELS)?;
    Ok((0..blob.meta.num_points)
        .map(|i| Vector3::new(blob.get(i, c[0]), blob.get(i, c[1]), blob.get(i, c[2])))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("pred.bin");
        let meta = sidecar_path(&data);
        let mut channels = PREDICTION_CHANNELS.to_vec();
        channels.push(FG_CHANNEL);
        let rows = vec![vec![3.0, 0.5, -0.25, 0.0, 0.75], vec![0.0, 0.0, 0.0, 0.125, 0.1]];
        write_blob(&data, &meta, &channels, &rows).unwrap();
        assert_eq!(std::fs::metadata(&data).unwrap().len(), 40);
        let pred = prediction_from_blob(&read_blob(&data, &meta).unwrap()).unwrap();
        assert_eq!(pred.semantic, vec![3, 0]);
        assert_eq!(pred.offsets[0], Vector3::new(0.5, -0.25, 0.0));
        assert_eq!(pred.fg_prob.unwrap()[0], 0.75);
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("npcs.bin");
        let meta = sidecar_path(&data);
        write_blob(&data, &meta, &NPCS_CHANNELS, &[vec![0.1, 0.2, 0.3]]).unwrap();
        std::fs::write(&data, [0u8; 10]).unwrap();
        let e = read_blob(&data, &meta).unwrap_err();
        assert!(matches!(e, Error::Parse { .. }));
    }

    #[test]
    fn fractional_label_rejected() {
        let blob = Blob {
            meta: BlobMeta {
                num_points: 1,
                dtype: DTYPE.into(),
                channels: PREDICTION_CHANNELS.iter().map(|c| c.to_string()).collect(),
            },
            values: vec![1.5, 0.0, 0.0, 0.0],
        };
        assert!(prediction_from_blob(&blob).is_err());
    }
}

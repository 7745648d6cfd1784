//! ASCII PLY point clouds.
//!
//! Written files have `double x y z`, then optional `uchar red green blue`,
//! `int semantic_label` and `int instance_label`. The reader accepts any
//! scalar property types, ignores unknown properties and reads colours
//! stored as integers in `0..=255` or as floats in `[0, 1]`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::types::PointCloud;

pub fn to_ply_string(cloud: &PointCloud) -> Result<String> {
    cloud.validate()?;
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    if cloud.semantic_labels.is_some() {
        s.push_str("property int semantic_label\n");
    }
    if cloud.instance_labels.is_some() {
        s.push_str("property int instance_label\n");
    }
    s.push_str("end_header\n");
    for (i, p) in cloud.positions.iter().enumerate() {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if let Some(c) = &cloud.colors {
            let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            let _ = write!(s, " {} {} {}", q(c[i][0]), q(c[i][1]), q(c[i][2]));
        }
        if let Some(l) = &cloud.semantic_labels {
            let _ = write!(s, " {}", l[i]);
        }
        if let Some(l) = &cloud.instance_labels {
            let _ = write!(s, " {}", l[i]);
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    super::write_atomic(path, to_ply_string(cloud)?.as_bytes())
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path)?;
    parse_ply(path, &text)
}

#[derive(Clone, Copy, PartialEq)]
enum Scalar {
    Int,
    Float,
}

fn scalar_kind(name: &str) -> Option<Scalar> {
    match name {
        "char" | "uchar" | "short" | "ushort" | "int" | "uint" | "int8" | "uint8" | "int16" | "uint16" | "int32"
        | "uint32" => Some(Scalar::Int),
        "float" | "double" | "float32" | "float64" => Some(Scalar::Float),
        _ => None,
    }
}

pub fn parse_ply(path: &Path, text: &str) -> Result<PointCloud> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        location: format!("line {line}"),
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(err(1, "missing 'ply' magic".into())),
    }

    let mut count: Option<usize> = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut header_done = false;
    for (n, line) in lines.by_ref() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", "1.0"] => {}
            ["format", other, ..] => return Err(err(n, format!("unsupported format '{other}', only ascii is read"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", c] => {
                if count.is_some() {
                    return Err(err(n, "duplicate vertex element".into()));
                }
                count = Some(c.parse().map_err(|_| err(n, format!("bad vertex count '{c}'")))?);
            }
            ["element", name, ..] => return Err(err(n, format!("unsupported element '{name}'"))),
            ["property", "list", ..] => return Err(err(n, "list properties are not supported".into())),
            ["property", ty, name] => {
                let kind = scalar_kind(ty).ok_or_else(|| err(n, format!("unknown property type '{ty}'")))?;
                if count.is_none() {
                    return Err(err(n, "property before element".into()));
                }
                props.push((name.to_string(), kind));
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => return Err(err(n, format!("unrecognised header line '{line}'"))),
        }
    }
    if !header_done {
        return Err(err(text.lines().count(), "missing end_header".into()));
    }
    let count = count.ok_or_else(|| err(1, "no vertex element".into()))?;
    let col = |name: &str| props.iter().position(|(p, _)| p == name);
    let (Some(ix), Some(iy), Some(iz)) = (col("x"), col("y"), col("z")) else {
        return Err(err(1, "vertex element needs x, y and z".into()));
    };
    let rgb = match (col("red"), col("green"), col("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        (None, None, None) => None,
        _ => return Err(err(1, "colour needs all of red, green and blue".into())),
    };
    let sem = col("semantic_label");
    let inst = col("instance_label");

    let mut cloud = PointCloud {
        positions: Vec::with_capacity(count),
        colors: rgb.map(|_| Vec::with_capacity(count)),
        semantic_labels: sem.map(|_| Vec::with_capacity(count)),
        instance_labels: inst.map(|_| Vec::with_capacity(count)),
    };
    let mut seen = 0;
    for (n, line) in lines {
        if seen == count {
            if line.trim().is_empty() {
                continue;
            }
            return Err(err(n, "data after the last vertex".into()));
        }
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != props.len() {
            return Err(err(n, format!("expected {} values, found {}", props.len(), vals.len())));
        }
        let num = |k: usize| -> Result<f64> {
            let v: f64 = vals[k]
                .parse()
                .map_err(|_| err(n, format!("'{}' is not a number", vals[k])))?;
            if !v.is_finite() {
                return Err(err(n, format!("non-finite value '{}'", vals[k])));
            }
            Ok(v)
        };
        let int = |k: usize| -> Result<i64> {
            vals[k]
                .parse()
                .map_err(|_| err(n, format!("'{}' is not an integer", vals[k])))
        };
        cloud.positions.push(Point3::new(num(ix)?, num(iy)?, num(iz)?));
        if let (Some(cols), Some(out)) = (rgb, cloud.colors.as_mut()) {
            let mut c = [0.0; 3];
            for (ch, &k) in c.iter_mut().zip(&cols) {
                *ch = match props[k].1 {
                    Scalar::Int => int(k)? as f64 / 255.0,
                    Scalar::Float => num(k)?,
                };
            }
            out.push(c);
        }
        if let (Some(k), Some(out)) = (sem, cloud.semantic_labels.as_mut()) {
            let v = int(k)?;
            out.push(u8::try_from(v).map_err(|_| err(n, format!("semantic label {v} out of range")))?);
        }
        if let (Some(k), Some(out)) = (inst, cloud.instance_labels.as_mut()) {
            let v = int(k)?;
            out.push(i32::try_from(v).map_err(|_| err(n, format!("instance label {v} out of range")))?);
        }
        seen += 1;
    }
    if seen != count {
        return Err(err(text.lines().count(), format!("expected {count} vertices, found {seen}")));
    }
    cloud.validate()?;
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PointCloud {
        PointCloud {
            positions: vec![Point3::new(0.1, -2.5, 1e-7), Point3::new(1.0 / 3.0, 0.0, 7.0)],
            colors: Some(vec![[1.0, 0.0, 0.2], [0.5, 1.0, 0.0]]),
            semantic_labels: Some(vec![0, 9]),
            instance_labels: Some(vec![-1, 4]),
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let text = to_ply_string(&c).unwrap();
        let back = parse_ply(Path::new("t.ply"), &text).unwrap();
        assert_eq!(back.positions, c.positions);
        assert_eq!(back.semantic_labels, c.semantic_labels);
        assert_eq!(back.instance_labels, c.instance_labels);
        let colors = back.colors.unwrap();
        assert_eq!(colors[0], [1.0, 0.0, 51.0 / 255.0]);
        assert_eq!(colors[1][0], 128.0 / 255.0);
    }

    #[test]
    fn positions_only() {
        let c = PointCloud::from_positions(vec![Point3::new(1.0, 2.0, 3.0)]).unwrap();
        let back = parse_ply(Path::new("t.ply"), &to_ply_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 2\n";
        let e = parse_ply(Path::new("bad.ply"), text).unwrap_err().to_string();
        assert!(e.contains("line 9"), "{e}");
        let text = "ply\nformat binary_little_endian 1.0\n";
        let e = parse_ply(Path::new("bad.ply"), text).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 nan 0\n";
        assert!(parse_ply(Path::new("bad.ply"), text).is_err());
    }
}

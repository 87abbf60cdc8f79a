//! ASCII PLY export of labeled point clouds.
//!
//! Vertices carry `x y z` as doubles and the instance ID as an `int`
//! property. Coordinates are written in shortest round-trip form, so reading
//! a file back yields bit-identical values.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{LabeledPoint, LabeledPointCloud};

pub fn write_ply<W: Write>(out: &mut W, cloud: &LabeledPointCloud) -> std::io::Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", cloud.len())?;
    writeln!(out, "property double x")?;
    writeln!(out, "property double y")?;
    writeln!(out, "property double z")?;
    writeln!(out, "property int instance")?;
    writeln!(out, "end_header")?;
    for p in cloud.points() {
        writeln!(out, "{} {} {} {}", p.position.x, p.position.y, p.position.z, p.label)?;
    }
    Ok(())
}

pub fn export_cloud(cloud: &LabeledPointCloud, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_ply(&mut out, cloud)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Parses the files [`write_ply`] produces. Other vertex properties or
/// binary encodings are rejected. `mask_index` is set to the instance ID.
pub fn parse_ply(text: &str) -> std::result::Result<LabeledPointCloud, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing 'ply' signature".into());
    }
    let mut count: Option<usize> = None;
    let mut properties = Vec::new();
    loop {
        let line = lines.next().ok_or("header never ends")?.trim();
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", "1.0"] | ["comment", ..] | [] => {}
            ["format", other, ..] => return Err(format!("unsupported format {other}")),
            ["element", "vertex", n] => {
                count = Some(n.parse().map_err(|_| format!("bad vertex count {n:?}"))?);
            }
            ["element", other, ..] => return Err(format!("unexpected element {other}")),
            ["property", ty, name] => properties.push((ty.to_string(), name.to_string())),
            _ => return Err(format!("unexpected header line {line:?}")),
        }
    }
    let expected: Vec<(String, String)> = [("double", "x"), ("double", "y"), ("double", "z"), ("int", "instance")]
        .iter()
        .map(|(t, n)| (t.to_string(), n.to_string()))
        .collect();
    if properties != expected {
        return Err(format!("unexpected vertex properties {properties:?}"));
    }
    let count = count.ok_or("no vertex element")?;
    let mut points = Vec::with_capacity(count);
    for i in 0..count {
        let line = lines.next().ok_or_else(|| format!("expected {count} vertices, found {i}"))?;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 4 {
            return Err(format!("vertex {i}: expected 4 values"));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| format!("vertex {i}: bad number {s:?}"));
        let label: u32 = t[3].parse().map_err(|_| format!("vertex {i}: bad instance {:?}", t[3]))?;
        points.push(LabeledPoint::new(f(t[0])?, f(t[1])?, f(t[2])?, label, label));
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err("trailing data after vertices".into());
    }
    Ok(LabeledPointCloud::from_points(points))
}

pub fn read_ply(path: &Path) -> Result<LabeledPointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text).map_err(|m| Error::format(path, m))
}

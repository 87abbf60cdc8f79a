//! On-disk scene bundle: a directory of small text files and flat binary
//! maps.
//!
//! ```text
//! intrinsics.txt            fx fy cx cy width height
//! classes.txt               optional, line k names class k
//! pose_0000.txt             4×4 camera-to-world, row-major
//! depth_0000.bin            f32 meters
//! instance_0000.bin         u16 label IDs
//! rendered_0000.bin         optional, u16 rendered IDs
//! semantic_0000.bin         optional, u16 class IDs (0 = no class)
//! gt_instance_0000.bin      optional, u16 ground-truth instance IDs
//! gt_semantic_0000.bin      optional, u16 ground-truth class IDs
//! ```
//!
//! Every `.bin` file starts with a 16-byte little-endian header: magic
//! `CU3D`, version `1`, height, width. The payload follows row by row.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::image::{DepthMap, Image, InstanceMap, SemanticMap};
use crate::semantics::read_class_names;

pub const MAGIC: [u8; 4] = *b"CU3D";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

/// One view of a bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleView {
    pub pose: Pose,
    pub depth: DepthMap,
    /// Crisp label map with per-view IDs.
    pub instance: InstanceMap,
    pub rendered: Option<InstanceMap>,
    pub semantic: Option<SemanticMap>,
    pub gt_instance: Option<InstanceMap>,
    pub gt_semantic: Option<SemanticMap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneBundle {
    pub intrinsics: CameraIntrinsics,
    pub views: Vec<BundleView>,
    pub class_names: Option<Vec<String>>,
}

impl SceneBundle {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.views.is_empty() {
            return Err(Error::InvalidInput("bundle has no views".into()));
        }
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        let reference = Image::filled(w, h, 0u8);
        let first = &self.views[0];
        let layout = |v: &BundleView| {
            [
                v.rendered.is_some(),
                v.semantic.is_some(),
                v.gt_instance.is_some(),
                v.gt_semantic.is_some(),
            ]
        };
        for v in &self.views {
            reference.check_shape(&v.depth, "bundle depth map")?;
            reference.check_shape(&v.instance, "bundle instance map")?;
            for m in [&v.rendered, &v.semantic, &v.gt_instance, &v.gt_semantic].into_iter().flatten() {
                reference.check_shape(m, "bundle optional map")?;
            }
            if layout(v) != layout(first) {
                return Err(Error::Consistency(
                    "optional maps must be present in every view or in none".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn has_rendered(&self) -> bool {
        self.views.iter().all(|v| v.rendered.is_some())
    }

    pub fn has_semantic(&self) -> bool {
        self.views.iter().all(|v| v.semantic.is_some())
    }

    pub fn has_gt_instance(&self) -> bool {
        self.views.iter().all(|v| v.gt_instance.is_some())
    }

    pub fn has_gt_semantic(&self) -> bool {
        self.views.iter().all(|v| v.gt_semantic.is_some())
    }

    /// Number of classes: the class-names file if present, else the largest
    /// class ID in any class map.
    pub fn num_classes(&self) -> usize {
        if let Some(names) = &self.class_names {
            return names.len();
        }
        self.views
            .iter()
            .flat_map(|v| [&v.semantic, &v.gt_semantic])
            .flatten()
            .map(|m| m.max_id() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let intrinsics = read_intrinsics(&dir.join("intrinsics.txt"))?;
        let count = count_views(dir)?;
        let views = (0..count)
            .into_par_iter()
            .map(|n| load_view(dir, n, &intrinsics))
            .collect::<Result<Vec<_>>>()?;
        let classes = dir.join("classes.txt");
        let class_names = if classes.exists() {
            Some(read_class_names(&classes)?)
        } else {
            None
        };
        let bundle = SceneBundle {
            intrinsics,
            views,
            class_names,
        };
        bundle.validate().map_err(|e| Error::format(dir, e.to_string()))?;
        Ok(bundle)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let i = &self.intrinsics;
        write_text(
            &dir.join("intrinsics.txt"),
            &format!("{} {} {} {} {} {}\n", i.fx, i.fy, i.cx, i.cy, i.width, i.height),
        )?;
        if let Some(names) = &self.class_names {
            let mut text = names.join("\n");
            text.push('\n');
            write_text(&dir.join("classes.txt"), &text)?;
        }
        self.views
            .par_iter()
            .enumerate()
            .try_for_each(|(n, view)| save_view(dir, n, view))
    }
}

fn view_file(dir: &Path, stem: &str, n: usize, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_{n:04}.{ext}"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_numbers(path: &Path, text: &str, expected: usize) -> Result<Vec<f64>> {
    let values = text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::format(path, format!("not a number: {tok:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::format(
            path,
            format!("expected {expected} numbers, found {}", values.len()),
        ));
    }
    Ok(values)
}

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    let v = parse_numbers(path, &read_text(path)?, 6)?;
    let dim = |x: f64| {
        if x >= 1.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
            Ok(x as usize)
        } else {
            Err(Error::format(path, format!("image size {x} is not a positive integer")))
        }
    };
    CameraIntrinsics::new(v[0], v[1], v[2], v[3], dim(v[4])?, dim(v[5])?)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_pose(path: &Path) -> Result<Pose> {
    let v = parse_numbers(path, &read_text(path)?, 16)?;
    let arr: [f64; 16] = v.try_into().expect("sixteen values");
    Pose::from_row_major(&arr).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_pose(path: &Path, pose: &Pose) -> Result<()> {
    let m = pose.to_row_major();
    let text: String = m
        .chunks(4)
        .map(|row| {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            cells.join(" ") + "\n"
        })
        .collect();
    write_text(path, &text)
}

/// Fixed-width little-endian pixel encoding.
trait Pixel: Copy + Default + Send + Sync {
    const SIZE: usize;
    fn decode(bytes: &[u8]) -> Self;
    fn encode(self, out: &mut Vec<u8>);
}

impl Pixel for f32 {
    const SIZE: usize = 4;
    fn decode(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("four bytes"))
    }
    fn encode(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

impl Pixel for u16 {
    const SIZE: usize = 2;
    fn decode(bytes: &[u8]) -> Self {
        u16::from_le_bytes(bytes.try_into().expect("two bytes"))
    }
    fn encode(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

fn decode_map<T: Pixel>(path: &Path, bytes: &[u8]) -> Result<Image<T>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "file shorter than the 16-byte header"));
    }
    if bytes[0..4] != MAGIC {
        return Err(Error::format(path, format!("bad magic {:?}", &bytes[0..4])));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("four bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let (h, w) = (word(8) as usize, word(12) as usize);
    let payload = &bytes[HEADER_LEN..];
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(T::SIZE))
        .ok_or_else(|| Error::format(path, "image size overflows"))?;
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!("expected {expected} payload bytes for {h}×{w}, found {}", payload.len()),
        ));
    }
    let data = payload.chunks_exact(T::SIZE).map(T::decode).collect();
    Image::from_vec(w, h, data)
}

fn encode_map<T: Pixel>(image: &Image<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + image.len() * T::SIZE);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(image.height() as u32).to_le_bytes());
    out.extend_from_slice(&(image.width() as u32).to_le_bytes());
    for &px in image.as_slice() {
        px.encode(&mut out);
    }
    out
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_map(path, &bytes)
}

pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    fs::write(path, encode_map(depth)).map_err(|e| Error::io(path, e))
}

/// Reads a u16 ID map (instance, rendered, semantic).
pub fn read_id_map(path: &Path) -> Result<InstanceMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let raw: Image<u16> = decode_map(path, &bytes)?;
    Ok(raw.map(|&x| u32::from(x)))
}

pub fn write_id_map(path: &Path, map: &InstanceMap) -> Result<()> {
    let max = map.max_id();
    if max > u32::from(u16::MAX) {
        return Err(Error::InvalidInput(format!(
            "{}: ID {max} does not fit in 16 bits",
            path.display()
        )));
    }
    let narrow = map.map(|&x| x as u16);
    fs::write(path, encode_map(&narrow)).map_err(|e| Error::io(path, e))
}

/// Views are numbered `0..n` by their pose files; gaps are an error.
fn count_views(dir: &Path) -> Result<usize> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut indices = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(num) = name.strip_prefix("pose_").and_then(|s| s.strip_suffix(".txt")) {
            let n: usize = num
                .parse()
                .map_err(|_| Error::format(entry.path(), "pose file index is not a number"))?;
            indices.push(n);
        }
    }
    indices.sort_unstable();
    if indices.is_empty() {
        return Err(Error::format(dir, "no pose_NNNN.txt files"));
    }
    for (expected, &n) in indices.iter().enumerate() {
        if n != expected {
            return Err(Error::format(
                view_file(dir, "pose", expected, "txt"),
                "missing: views must be numbered contiguously from 0",
            ));
        }
    }
    Ok(indices.len())
}

fn optional_map(dir: &Path, stem: &str, n: usize) -> Result<Option<InstanceMap>> {
    let path = view_file(dir, stem, n, "bin");
    if path.exists() {
        read_id_map(&path).map(Some)
    } else {
        Ok(None)
    }
}

fn load_view(dir: &Path, n: usize, intr: &CameraIntrinsics) -> Result<BundleView> {
    let pose = read_pose(&view_file(dir, "pose", n, "txt"))?;
    let depth_path = view_file(dir, "depth", n, "bin");
    let depth = read_depth(&depth_path)?;
    let instance_path = view_file(dir, "instance", n, "bin");
    let instance = read_id_map(&instance_path)?;
    let view = BundleView {
        pose,
        depth,
        instance,
        rendered: optional_map(dir, "rendered", n)?,
        semantic: optional_map(dir, "semantic", n)?,
        gt_instance: optional_map(dir, "gt_instance", n)?,
        gt_semantic: optional_map(dir, "gt_semantic", n)?,
    };
    if view.depth.width() != intr.width || view.depth.height() != intr.height {
        return Err(Error::format(
            depth_path,
            format!(
                "map is {}×{} but intrinsics say {}×{}",
                view.depth.width(),
                view.depth.height(),
                intr.width,
                intr.height
            ),
        ));
    }
    Ok(view)
}

fn save_view(dir: &Path, n: usize, view: &BundleView) -> Result<()> {
    write_pose(&view_file(dir, "pose", n, "txt"), &view.pose)?;
    write_depth(&view_file(dir, "depth", n, "bin"), &view.depth)?;
    write_id_map(&view_file(dir, "instance", n, "bin"), &view.instance)?;
    for (stem, map) in [
        ("rendered", &view.rendered),
        ("semantic", &view.semantic),
        ("gt_instance", &view.gt_instance),
        ("gt_semantic", &view.gt_semantic),
    ] {
        if let Some(map) = map {
            write_id_map(&view_file(dir, stem, n, "bin"), map)?;
        }
    }
    Ok(())
}

//! File formats: flat float32 maps with a JSON sidecar, CSV, and PLY point
//! clouds. Every writer goes through [`write_atomic`].

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Vector3;
use ply_rs::parser::Parser;
use ply_rs::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyDef, PropertyType,
    ScalarType,
};
use ply_rs::writer::Writer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::raster::ChannelMap;
use crate::score::ColorPointCloud;
use crate::warping::{OcclusionMask, WarpField};

/// Write `bytes` to a temporary file next to `path` and rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("`{}` has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Header stored next to a flat binary map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSidecar {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub pose_id: Option<String>,
}

/// Row-major float32 little-endian values with channels interleaved.
/// Uncovered pixels are written as NaN.
pub fn map_to_f32_bytes(map: &ChannelMap) -> Vec<u8> {
    let c = map.channels();
    let mut out = Vec::with_capacity(map.values().len() * 4);
    for idx in 0..map.pixel_count() {
        for &v in map.at(idx) {
            let v = if map.coverage()[idx] { v as f32 } else { f32::NAN };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    debug_assert_eq!(out.len(), map.pixel_count() * c * 4);
    out
}

/// Inverse of [`map_to_f32_bytes`]: a pixel is covered when none of its
/// channels is NaN.
pub fn map_from_f32_bytes(bytes: &[u8], sidecar: &MapSidecar) -> Result<ChannelMap> {
    let n = sidecar.height * sidecar.width * sidecar.channels;
    if bytes.len() != n * 4 {
        return Err(Error::Format(format!(
            "expected {} bytes for a {}x{}x{} map, found {}",
            n * 4,
            sidecar.height,
            sidecar.width,
            sidecar.channels,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let c = sidecar.channels;
    let coverage = values.chunks(c.max(1)).map(|px| px.iter().all(|v| !v.is_nan())).collect();
    let values = values.into_iter().map(|v| if v.is_nan() { 0.0 } else { v }).collect();
    ChannelMap::from_values(sidecar.width, sidecar.height, c, values)?.with_coverage(coverage)
}

fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Write `<stem>.bin` and its `<stem>.json` sidecar; returns both paths.
pub fn write_map(
    bin: &Path,
    map: &ChannelMap,
    seed: Option<u64>,
    pose_id: Option<&str>,
) -> Result<(PathBuf, PathBuf)> {
    let sidecar = MapSidecar {
        height: map.height(),
        width: map.width(),
        channels: map.channels(),
        seed,
        pose_id: pose_id.map(str::to_owned),
    };
    write_atomic(bin, &map_to_f32_bytes(map))?;
    let json = sidecar_path(bin);
    write_atomic(&json, to_json(&sidecar)?.as_bytes())?;
    Ok((bin.to_path_buf(), json))
}

pub fn read_map(bin: &Path) -> Result<(ChannelMap, MapSidecar)> {
    let sidecar: MapSidecar = serde_json::from_slice(&fs::read(sidecar_path(bin))?)
        .map_err(|e| Error::Format(e.to_string()))?;
    let map = map_from_f32_bytes(&fs::read(bin)?, &sidecar)?;
    Ok((map, sidecar))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// `y,x,c0,c1,...` with one row per covered pixel.
pub fn map_to_csv(map: &ChannelMap) -> String {
    let mut out = String::from("y,x");
    for c in 0..map.channels() {
        out.push_str(&format!(",c{c}"));
    }
    out.push('\n');
    for idx in 0..map.pixel_count() {
        if !map.coverage()[idx] {
            continue;
        }
        out.push_str(&format!("{},{}", idx / map.width(), idx % map.width()));
        for v in map.at(idx) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Warp targets as a two-channel map (x, y in source pixels), uncovered
/// where the warp is invalid.
pub fn warp_to_map(warp: &WarpField) -> ChannelMap {
    let mut map = ChannelMap::zeros(warp.width(), warp.height(), 2);
    for idx in 0..warp.pixel_count() {
        if let Some(t) = warp.target(idx) {
            map.at_mut(idx).copy_from_slice(&[t.x, t.y]);
            map.coverage_mut()[idx] = true;
        }
    }
    map
}

/// Mask as a fully covered one-channel map of zeros and ones.
pub fn mask_to_map(mask: &OcclusionMask) -> ChannelMap {
    let values = mask.weights().iter().map(|&w| if w { 1.0 } else { 0.0 }).collect();
    ChannelMap::from_values(mask.width(), mask.height(), 1, values).expect("sizes agree")
}

/// Square matrix as a one-channel `dim x dim` map.
pub fn matrix_to_map(dim: usize, values: &[f64]) -> Result<ChannelMap> {
    ChannelMap::from_values(dim, dim, 1, values.to_vec())
}

fn scalar(p: &Property) -> Option<f64> {
    Some(match *p {
        Property::Char(v) => v as f64,
        Property::UChar(v) => v as f64,
        Property::Short(v) => v as f64,
        Property::UShort(v) => v as f64,
        Property::Int(v) => v as f64,
        Property::UInt(v) => v as f64,
        Property::Float(v) => v as f64,
        Property::Double(v) => v,
        _ => return None,
    })
}

fn read_ply_vertices(path: &Path) -> Result<Vec<DefaultElement>> {
    let file = fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let ply = Parser::<DefaultElement>::new()
        .read_ply(&mut reader)
        .map_err(|e| Error::Ply(e.to_string()))?;
    ply.payload
        .get("vertex")
        .cloned()
        .ok_or_else(|| Error::Ply("no `vertex` element".into()))
}

fn coordinate(v: &DefaultElement, key: &str, index: usize) -> Result<f64> {
    v.get(key)
        .and_then(scalar)
        .ok_or_else(|| Error::Ply(format!("vertex {index} lacks a scalar `{key}` property")))
}

/// Read `x, y, z` of every vertex from an ASCII or binary PLY file; all
/// other properties are ignored.
pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let vertices = read_ply_vertices(path)?;
    let positions = vertices
        .iter()
        .enumerate()
        .map(|(i, v)| {
            Ok(Vector3::new(
                coordinate(v, "x", i)?,
                coordinate(v, "y", i)?,
                coordinate(v, "z", i)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    PointCloud::new(positions)
}

/// Read a colored cloud. Integer colors are scaled from `0..=255`; float
/// colors are taken as is. Missing colors default to mid gray and missing
/// opacity to 1.
pub fn read_color_cloud(path: &Path) -> Result<ColorPointCloud> {
    let vertices = read_ply_vertices(path)?;
    let mut positions = Vec::with_capacity(vertices.len());
    let mut colors = Vec::with_capacity(vertices.len());
    let mut opacity = Vec::with_capacity(vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        positions.push(Vector3::new(
            coordinate(v, "x", i)?,
            coordinate(v, "y", i)?,
            coordinate(v, "z", i)?,
        ));
        let channel = |key: &str| match v.get(key) {
            Some(p @ (Property::Float(_) | Property::Double(_))) => scalar(p),
            Some(p) => scalar(p).map(|x| x / 255.0),
            None => Some(0.5),
        };
        let c = Vector3::new(
            channel("red").unwrap_or(0.5),
            channel("green").unwrap_or(0.5),
            channel("blue").unwrap_or(0.5),
        );
        colors.push(c);
        opacity.push(v.get("opacity").and_then(scalar).unwrap_or(1.0));
    }
    ColorPointCloud::new(Arc::new(PointCloud::new(positions)?), colors, opacity)
}

fn ply_bytes(names: &[&str], rows: Vec<Vec<f64>>) -> Result<Vec<u8>> {
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = Encoding::BinaryLittleEndian;
    let mut element = ElementDef::new("vertex".to_string());
    for name in names {
        element.properties.add(PropertyDef::new(
            name.to_string(),
            PropertyType::Scalar(ScalarType::Double),
        ));
    }
    ply.header.elements.add(element);
    let payload = rows
        .into_iter()
        .map(|row| {
            let mut e = DefaultElement::new();
            for (name, v) in names.iter().zip(row) {
                e.insert(name.to_string(), Property::Double(v));
            }
            e
        })
        .collect();
    ply.payload.insert("vertex".to_string(), payload);
    ply.make_consistent().map_err(|e| Error::Ply(format!("{e:?}")))?;
    let mut buf = Vec::new();
    Writer::new()
        .write_ply(&mut buf, &mut ply)
        .map_err(|e| Error::Ply(e.to_string()))?;
    Ok(buf)
}

/// Binary PLY with double `x y z`.
pub fn write_point_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let rows = cloud.positions().iter().map(|p| vec![p.x, p.y, p.z]).collect();
    write_atomic(path, &ply_bytes(&["x", "y", "z"], rows)?)
}

/// Binary PLY with double `x y z red green blue opacity`; colors are
/// stored unscaled so a checkpoint reads back exactly.
pub fn write_color_cloud(path: &Path, rep: &ColorPointCloud) -> Result<()> {
    let rows = rep
        .cloud()
        .positions()
        .iter()
        .zip(rep.colors())
        .zip(rep.opacity())
        .map(|((p, c), &o)| vec![p.x, p.y, p.z, c.x, c.y, c.z, o])
        .collect();
    write_atomic(
        path,
        &ply_bytes(&["x", "y", "z", "red", "green", "blue", "opacity"], rows)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_round_trips_through_f32_with_coverage() {
        let dir = tempfile::tempdir().unwrap();
        let mut map = ChannelMap::from_values(3, 2, 2, (0..12).map(|v| v as f64 * 0.5).collect()).unwrap();
        map.coverage_mut()[4] = false;
        let bin = dir.path().join("n.bin");
        write_map(&bin, &map, Some(7), Some("view_0")).unwrap();
        let (back, side) = read_map(&bin).unwrap();
        assert_eq!(side, MapSidecar { height: 2, width: 3, channels: 2, seed: Some(7), pose_id: Some("view_0".into()) });
        assert_eq!(back.coverage(), map.coverage());
        for idx in 0..6 {
            if map.coverage()[idx] {
                assert_eq!(back.at(idx), map.at(idx));
            }
        }
        assert_eq!(fs::metadata(&bin).unwrap().len(), 48);
    }

    #[test]
    fn truncated_map_is_rejected() {
        let side = MapSidecar { height: 2, width: 2, channels: 1, seed: None, pose_id: None };
        assert!(matches!(map_from_f32_bytes(&[0; 12], &side), Err(Error::Format(_))));
    }

    #[test]
    fn csv_lists_covered_pixels() {
        let mut map = ChannelMap::from_values(2, 1, 1, vec![1.5, -2.0]).unwrap();
        map.coverage_mut()[0] = false;
        assert_eq!(map_to_csv(&map), "y,x,c0\n0,1,-2\n");
    }

    #[test]
    fn ascii_ply_with_extra_properties() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n\
             property float z\nproperty uchar red\nproperty int label\nend_header\n\
             0 1 2 255 3\n-1.5 0.25 4 0 9\n",
        )
        .unwrap();
        let cloud = read_point_cloud(&path).unwrap();
        assert_eq!(cloud.positions()[1], Vector3::new(-1.5, 0.25, 4.0));
        let colored = read_color_cloud(&path).unwrap();
        assert_eq!(colored.colors()[0].x, 1.0);
        assert_eq!(colored.colors()[0].y, 0.5);
    }

    #[test]
    fn ply_without_coordinates_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n0 1\n",
        )
        .unwrap();
        assert!(matches!(read_point_cloud(&path), Err(Error::Ply(_))));
        fs::write(&path, "not a ply").unwrap();
        assert!(matches!(read_point_cloud(&path), Err(Error::Ply(_))));
    }

    #[test]
    fn color_cloud_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rep.ply");
        let cloud = Arc::new(PointCloud::new(vec![Vector3::new(0.1, 0.2, 0.3), Vector3::new(-1.0, 2.0, 1e-9)]).unwrap());
        let rep = ColorPointCloud::new(
            cloud,
            vec![Vector3::new(0.123456789, 0.5, 1.25), Vector3::new(-0.1, 0.0, 1.0 / 3.0)],
            vec![1.0, 0.25],
        )
        .unwrap();
        write_color_cloud(&path, &rep).unwrap();
        assert_eq!(read_color_cloud(&path).unwrap(), rep);
        write_point_cloud(&path, rep.cloud()).unwrap();
        assert_eq!(&read_point_cloud(&path).unwrap(), rep.cloud().as_ref());
    }
}

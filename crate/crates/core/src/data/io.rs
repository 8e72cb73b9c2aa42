//! `.vid` container and dataset manifest.
//!
//! Layout: magic `FLV1`, then `T, H, W, C` as little-endian `u32`, then
//! `T·H·W·C` little-endian `f32` values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::VideoClip;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CLIP_MAGIC: &[u8; 4] = b"FLV1";

pub fn write_clip(clip: &VideoClip, mut w: impl Write) -> Result<()> {
    w.write_all(CLIP_MAGIC)?;
    for d in clip.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(clip.frames().len() * 4);
    for &v in clip.frames().data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::parse("clip", format!("truncated while reading {}", what)),
        _ => Error::Io(e),
    })
}

/// Parses a clip; `id` and `label` are not stored in the container.
pub fn read_clip(mut r: impl Read, id: &str, label: Option<usize>) -> Result<VideoClip> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != CLIP_MAGIC {
        return Err(Error::parse("clip", format!("bad magic {:?}", magic)));
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        let mut b = [0u8; 4];
        read_exact(&mut r, &mut b, "dims")?;
        *d = u32::from_le_bytes(b) as usize;
    }
    if dims.contains(&0) {
        return Err(Error::parse("clip", format!("zero dimension in {:?}", dims)));
    }
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= (1 << 31))
        .ok_or_else(|| Error::parse("clip", format!("implausible dims {:?}", dims)))?;
    let mut raw = vec![0u8; n * 4];
    read_exact(&mut r, &mut raw, "frame data")?;
    let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    VideoClip::new(id, Tensor::new(dims, data)?, label)
}

pub fn save_clip(clip: &VideoClip, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_clip(clip, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Loads a clip, taking its id from the file stem.
pub fn load_clip(path: impl AsRef<Path>) -> Result<VideoClip> {
    let path = path.as_ref();
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_clip(BufReader::new(File::open(path)?), &id, None)
}

/// One line of `manifest.csv`: `clip_id,path,label,n_frames`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub clip_id: String,
    pub path: String,
    pub label: Option<usize>,
    pub n_frames: usize,
}

pub fn save_manifest(rows: &[ManifestRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["clip_id", "path", "label", "n_frames"])?;
    for r in rows {
        let label = r.label.map(|l| l.to_string()).unwrap_or_default();
        w.write_record([r.clip_id.as_str(), r.path.as_str(), label.as_str(), &r.n_frames.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::parse("manifest", format!("expected 4 fields, got {}", rec.len())));
        }
        let num = |s: &str, what| s.parse::<usize>().map_err(|_| Error::parse("manifest", format!("bad {} {:?}", what, s)));
        rows.push(ManifestRow {
            clip_id: rec[0].to_string(),
            path: rec[1].to_string(),
            label: if rec[2].is_empty() { None } else { Some(num(&rec[2], "label")?) },
            n_frames: num(&rec[3], "n_frames")?,
        });
    }
    Ok(rows)
}

//! Mask stores on disk.
//!
//! A store is a directory holding one file per frame, named by the
//! zero-padded frame index (`00000.png`, `00001.png`, ...). Two encodings are
//! supported: 8-bit indexed (or grayscale) PNG / binary PGM label maps, and
//! per-frame RLE JSON documents of the form
//! `{"h": H, "w": W, "objects": {"<id>": {"h": H, "w": W, "runs": [...]}}}`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{encode_rle, LabelMap, Rle};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoreKind {
    Png,
    Rle,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameFile {
    pub frame: usize,
    pub path: PathBuf,
}

/// Lists the per-frame files of a store directory in frame order.
///
/// Files whose stem is not a decimal frame index are ignored, so sidecars
/// such as `motion.json` may live next to the masks.
pub fn list_frames(dir: &Path) -> Result<(StoreKind, Vec<FrameFile>)> {
    if !dir.is_dir() {
        return Err(Error::Missing(dir.to_path_buf()));
    }
    let mut png = Vec::new();
    let mut rle = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        if stem.is_empty() || !stem.bytes().all(|b| b.is_ascii_digit()) {
            continue;
        }
        let Ok(frame) = stem.parse::<usize>() else {
            continue;
        };
        match ext {
            "png" | "pgm" => png.push(FrameFile { frame, path }),
            "json" => rle.push(FrameFile { frame, path }),
            _ => {}
        }
    }
    let (kind, mut files) = match (png.is_empty(), rle.is_empty()) {
        (false, true) => (StoreKind::Png, png),
        (true, false) => (StoreKind::Rle, rle),
        (true, true) => return Err(Error::schema(dir, "no frame files found")),
        (false, false) => return Err(Error::schema(dir, "mixes PNG and RLE frame files")),
    };
    files.sort_by_key(|f| f.frame);
    if let Some(w) = files.windows(2).find(|w| w[0].frame == w[1].frame) {
        return Err(Error::schema(dir, format!("frame {} stored twice", w[0].frame)));
    }
    Ok((kind, files))
}

/// Reads a label map from an indexed/grayscale PNG or a binary PGM.
pub fn read_label_map(path: &Path) -> Result<LabelMap> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => read_pgm(path),
        _ => read_png(path),
    }
}

fn read_png(path: &Path) -> Result<LabelMap> {
    let file = fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Missing(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let bad = |message: String| Error::Image {
        path: path.to_path_buf(),
        message,
    };
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| bad(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| bad("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    match info.color_type {
        png::ColorType::Indexed | png::ColorType::Grayscale => {}
        other => return Err(bad(format!("expected indexed or grayscale PNG, got {other:?}"))),
    }
    let bits = match info.bit_depth {
        png::BitDepth::One => 1,
        png::BitDepth::Two => 2,
        png::BitDepth::Four => 4,
        png::BitDepth::Eight => 8,
        png::BitDepth::Sixteen => return Err(bad("16-bit label maps are not supported".into())),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut labels = Vec::with_capacity(w * h);
    for line in buf.chunks(info.line_size).take(h) {
        if bits == 8 {
            labels.extend_from_slice(&line[..w]);
        } else {
            let per_byte = 8 / bits;
            let mask = (1u8 << bits) - 1;
            labels.extend((0..w).map(|c| {
                let byte = line[c / per_byte];
                let shift = 8 - bits * (c % per_byte + 1);
                (byte >> shift) & mask
            }));
        }
    }
    LabelMap::from_raw(h, w, labels)
}

fn read_pgm(path: &Path) -> Result<LabelMap> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: &str| Error::Image {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
            if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(std::str::from_utf8(&data[start..pos]).map_err(|_| bad("bad PGM header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("only binary (P5) PGM is supported"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad PGM header field"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval > 255 {
        return Err(bad("16-bit PGM is not supported"));
    }
    pos += 1;
    let body = data.get(pos..pos + w * h).ok_or_else(|| bad("truncated PGM body"))?;
    LabelMap::from_raw(h, w, body.to_vec())
}

/// Colour table for indexed output: the usual VOC/DAVIS bit-interleaved palette.
fn palette() -> Vec<u8> {
    let mut out = Vec::with_capacity(256 * 3);
    for i in 0..256u32 {
        let (mut r, mut g, mut b) = (0u8, 0u8, 0u8);
        let mut c = i;
        for j in 0..8 {
            r |= ((c & 1) as u8) << (7 - j);
            g |= (((c >> 1) & 1) as u8) << (7 - j);
            b |= (((c >> 2) & 1) as u8) << (7 - j);
            c >>= 3;
        }
        out.extend_from_slice(&[r, g, b]);
    }
    out
}

pub fn write_label_png(path: &Path, map: &LabelMap) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let bad = |e: png::EncodingError| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut encoder = png::Encoder::new(BufWriter::new(file), map.width() as u32, map.height() as u32);
    encoder.set_color(png::ColorType::Indexed);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_palette(palette());
    let mut writer = encoder.write_header().map_err(bad)?;
    writer.write_image_data(map.labels()).map_err(bad)?;
    writer.finish().map_err(bad)
}

/// An in-memory copy of a mask store: label maps keyed by frame index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskStore {
    pub frames: Vec<usize>,
    pub maps: Vec<LabelMap>,
}

impl MaskStore {
    /// Loads a store, detecting its encoding from the file extensions.
    pub fn load(dir: &Path) -> Result<(StoreKind, MaskStore)> {
        let (kind, files) = list_frames(dir)?;
        let store = match kind {
            StoreKind::Png => load_png_files(&files)?,
            StoreKind::Rle => load_rle_files(&files)?,
        };
        store.check_dims()?;
        Ok((kind, store))
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.maps.first().map(LabelMap::dims)
    }

    fn check_dims(&self) -> Result<()> {
        if let Some(d) = self.dims() {
            if let Some(m) = self.maps.iter().find(|m| m.dims() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: m.dims(),
                });
            }
        }
        Ok(())
    }
}

fn frame_name(frame: usize, ext: &str) -> String {
    format!("{frame:05}.{ext}")
}

pub fn read_png_store(dir: &Path) -> Result<MaskStore> {
    let (kind, files) = list_frames(dir)?;
    if kind != StoreKind::Png {
        return Err(Error::schema(dir, "expected a PNG mask store"));
    }
    let store = load_png_files(&files)?;
    store.check_dims()?;
    Ok(store)
}

fn load_png_files(files: &[FrameFile]) -> Result<MaskStore> {
    let maps = files
        .iter()
        .map(|f| read_label_map(&f.path))
        .collect::<Result<Vec<_>>>()?;
    Ok(MaskStore {
        frames: files.iter().map(|f| f.frame).collect(),
        maps,
    })
}

pub fn write_png_store(dir: &Path, store: &MaskStore) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (&frame, map) in store.frames.iter().zip(&store.maps) {
        write_label_png(&dir.join(frame_name(frame, "png")), map)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct RleFrame {
    h: usize,
    w: usize,
    objects: BTreeMap<u8, Rle>,
}

pub fn read_rle_store(dir: &Path) -> Result<MaskStore> {
    let (kind, files) = list_frames(dir)?;
    if kind != StoreKind::Rle {
        return Err(Error::schema(dir, "expected an RLE mask store"));
    }
    let store = load_rle_files(&files)?;
    store.check_dims()?;
    Ok(store)
}

fn load_rle_files(files: &[FrameFile]) -> Result<MaskStore> {
    let mut maps = Vec::with_capacity(files.len());
    for f in files {
        let text = fs::read_to_string(&f.path).map_err(|e| Error::io(&f.path, e))?;
        let frame: RleFrame = serde_json::from_str(&text).map_err(|e| Error::schema(&f.path, e.to_string()))?;
        let mut masks = Vec::with_capacity(frame.objects.len());
        for (&id, rle) in &frame.objects {
            if (rle.h, rle.w) != (frame.h, frame.w) {
                return Err(Error::DimensionMismatch {
                    expected: (frame.h, frame.w),
                    actual: (rle.h, rle.w),
                });
            }
            masks.push((id, rle.decode()?));
        }
        let map = LabelMap::compose(frame.h, frame.w, masks.iter().map(|(id, m)| (*id, m))).map_err(|e| match e {
            Error::InvalidMask(m) | Error::InvalidInput(m) => Error::schema(&f.path, m),
            other => other,
        })?;
        maps.push(map);
    }
    Ok(MaskStore {
        frames: files.iter().map(|f| f.frame).collect(),
        maps,
    })
}

pub fn write_rle_store(dir: &Path, store: &MaskStore) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (&frame, map) in store.frames.iter().zip(&store.maps) {
        let doc = RleFrame {
            h: map.height(),
            w: map.width(),
            objects: map.extract_all().iter().map(|(&id, m)| (id, encode_rle(m))).collect(),
        };
        let path = dir.join(frame_name(frame, "json"));
        let text = serde_json::to_string(&doc)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_map() -> LabelMap {
        let labels: Vec<u8> = (0..6 * 7).map(|i| [0u8, 1, 2, 0, 7][i % 5]).collect();
        LabelMap::from_raw(6, 7, labels).unwrap()
    }

    #[test]
    fn png_round_trip_keeps_indices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("00000.png");
        let map = sample_map();
        write_label_png(&path, &map).unwrap();
        assert_eq!(read_label_map(&path).unwrap(), map);
    }

    #[test]
    fn pgm_is_readable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("00003.pgm");
        let mut bytes = b"P5\n# comment\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 1, 2, 3, 0, 1]);
        fs::write(&path, bytes).unwrap();
        let map = read_label_map(&path).unwrap();
        assert_eq!(map.dims(), (2, 3));
        assert_eq!(map.labels(), &[0, 1, 2, 3, 0, 1]);
        let (kind, files) = list_frames(dir.path()).unwrap();
        assert_eq!(kind, StoreKind::Png);
        assert_eq!(files[0].frame, 3);
    }

    #[test]
    fn stores_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = MaskStore {
            frames: vec![0, 1, 5],
            maps: vec![sample_map(), LabelMap::new(6, 7).unwrap(), sample_map()],
        };
        write_png_store(&dir.path().join("png"), &store).unwrap();
        write_rle_store(&dir.path().join("rle"), &store).unwrap();
        // Sidecars are ignored.
        fs::write(dir.path().join("png/motion.json"), "{}").unwrap();
        assert_eq!(read_png_store(&dir.path().join("png")).unwrap(), store);
        assert_eq!(read_rle_store(&dir.path().join("rle")).unwrap(), store);
        let (kind, loaded) = MaskStore::load(&dir.path().join("rle")).unwrap();
        assert_eq!(kind, StoreKind::Rle);
        assert_eq!(loaded, store);
    }

    #[test]
    fn missing_and_empty_dirs() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(list_frames(&dir.path().join("nope")), Err(Error::Missing(_))));
        assert!(matches!(list_frames(dir.path()), Err(Error::Schema { .. })));
    }
}

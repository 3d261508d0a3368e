//! Dataset directory: `images/NNNNNN.ppm` (P6, 16-bit), `masks/NNNNNN.pgm`
//! (P5, 8-bit class ids) and `labels.csv` (`index,grade,corrupted`).

use std::fs;
use std::path::{Path, PathBuf};

use super::Sample;
use crate::error::{Error, Result};

const LABELS_HEADER: &str = "index,grade,corrupted";

fn image_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("images").join(format!("{index:06}.ppm"))
}

fn mask_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("masks").join(format!("{index:06}.pgm"))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Encodes a planar `[0,1]` RGB image as a 16-bit binary PPM.
pub(crate) fn encode_ppm16(image: &[f32], side: usize) -> Vec<u8> {
    let plane = side * side;
    let mut out = format!("P6\n{side} {side}\n65535\n").into_bytes();
    out.reserve(plane * 6);
    for p in 0..plane {
        for c in 0..3 {
            let v = (f64::from(image[c * plane + p]).clamp(0.0, 1.0) * 65535.0).round() as u16;
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    out
}

/// Encodes a class-id map as an 8-bit binary PGM.
pub fn encode_pgm8(mask: &[u8], side: usize) -> Vec<u8> {
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.extend_from_slice(mask);
    out
}

pub fn save_dataset(samples: &[Sample], dir: &Path) -> Result<()> {
    create_dir(&dir.join("images"))?;
    create_dir(&dir.join("masks"))?;
    let mut labels = String::from(LABELS_HEADER);
    labels.push('\n');
    for s in samples {
        write(&image_path(dir, s.index), &encode_ppm16(&s.image, s.side))?;
        write(&mask_path(dir, s.index), &encode_pgm8(&s.mask, s.side))?;
        labels.push_str(&format!("{},{},{}\n", s.index, s.grade, u8::from(s.corrupted)));
    }
    write(&dir.join("labels.csv"), labels.as_bytes())
}

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    raster: usize,
}

/// Parses a binary PNM header, tracking byte offsets for diagnostics.
fn parse_header(bytes: &[u8], path: &Path, magic: &[u8; 2]) -> Result<Header> {
    let err = |offset: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg,
    };
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(err(0, format!("expected magic {}", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(err(pos, "expected a header integer".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(start, "header integer out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(err(pos, "expected whitespace before raster".into()));
    }
    let [width, height, maxval] = fields;
    Ok(Header {
        width,
        height,
        maxval,
        raster: pos + 1,
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingData(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

fn raster<'a>(bytes: &'a [u8], h: &Header, bytes_per_px: usize, path: &Path) -> Result<&'a [u8]> {
    let want = h.width * h.height * bytes_per_px;
    let have = bytes.len().saturating_sub(h.raster);
    if have < want {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: bytes.len() as u64,
            msg: format!("truncated raster: expected {want} bytes, found {have}"),
        });
    }
    Ok(&bytes[h.raster..h.raster + want])
}

fn load_image(path: &Path) -> Result<(usize, Vec<f32>)> {
    let bytes = read(path)?;
    let h = parse_header(&bytes, path, b"P6")?;
    if h.width != h.height || h.maxval != 65535 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            msg: format!("expected a square 16-bit image, got {}x{} maxval {}", h.width, h.height, h.maxval),
        });
    }
    let data = raster(&bytes, &h, 6, path)?;
    let plane = h.width * h.height;
    let mut image = vec![0f32; 3 * plane];
    for (i, px) in data.chunks_exact(2).enumerate() {
        let v = u16::from_be_bytes([px[0], px[1]]);
        image[(i % 3) * plane + i / 3] = (f64::from(v) / 65535.0) as f32;
    }
    Ok((h.width, image))
}

fn load_mask(path: &Path) -> Result<(usize, Vec<u8>)> {
    let bytes = read(path)?;
    let h = parse_header(&bytes, path, b"P5")?;
    if h.width != h.height || h.maxval > 255 || h.maxval == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            msg: format!("expected a square 8-bit mask, got {}x{} maxval {}", h.width, h.height, h.maxval),
        });
    }
    Ok((h.width, raster(&bytes, &h, 1, path)?.to_vec()))
}

/// `(index, grade, corrupted)` rows of a labels file.
fn parse_labels(text: &str, path: &Path) -> Result<Vec<(usize, u8, bool)>> {
    let mut rows = Vec::new();
    let mut offset = 0;
    for (n, line) in text.split_inclusive('\n').enumerate() {
        let here = offset;
        offset += line.len();
        let line = line.trim_end();
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            offset: here as u64,
            msg,
        };
        if n == 0 {
            if line != LABELS_HEADER {
                return Err(err(format!("expected header {LABELS_HEADER:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [index, grade, corrupted] = fields[..] else {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        };
        let index = index.parse().map_err(|_| err(format!("bad index {index:?}")))?;
        let grade = grade.parse().map_err(|_| err(format!("bad grade {grade:?}")))?;
        let corrupted = match corrupted {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("bad corrupted flag {other:?}"))),
        };
        rows.push((index, grade, corrupted));
    }
    if offset == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            msg: "empty labels file".into(),
        });
    }
    Ok(rows)
}

pub fn load_dataset(dir: &Path) -> Result<Vec<Sample>> {
    if !dir.is_dir() {
        return Err(Error::MissingData(dir.to_path_buf()));
    }
    let labels_path = dir.join("labels.csv");
    let text = String::from_utf8(read(&labels_path)?).map_err(|e| Error::Parse {
        path: labels_path.clone(),
        offset: e.utf8_error().valid_up_to() as u64,
        msg: "labels file is not UTF-8".into(),
    })?;
    parse_labels(&text, &labels_path)?
        .into_iter()
        .map(|(index, grade, corrupted)| {
            let (side, image) = load_image(&image_path(dir, index))?;
            let mpath = mask_path(dir, index);
            let (mside, mask) = load_mask(&mpath)?;
            if mside != side {
                return Err(Error::Parse {
                    path: mpath,
                    offset: 0,
                    msg: format!("mask side {mside} differs from image side {side}"),
                });
            }
            Ok(Sample {
                index,
                side,
                image,
                mask,
                grade,
                corrupted,
            })
        })
        .collect()
}

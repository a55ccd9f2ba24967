//! Binary PGM (P5) ingestion and corpus assembly.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::dictlearn::TrainingSet;
use crate::error::{Error, Result};

/// A decoded grayscale image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.width + c]
    }
}

fn pgm_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Pgm {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(pgm_err(path, "not a PNM file"));
    }
    match bytes[1] {
        b'5' => {}
        b'6' | b'3' => return Err(pgm_err(path, "colour image; only grayscale P5 is supported")),
        b'2' => return Err(pgm_err(path, "ASCII P2 is not supported; convert to binary P5")),
        other => return Err(pgm_err(path, format!("unsupported magic P{}", other as char))),
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(pgm_err(path, "truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(pgm_err(path, "malformed header: expected a number"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap();
        *field = text.parse().map_err(|_| pgm_err(path, format!("header value {text} out of range")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(pgm_err(path, "malformed header: missing separator before pixel data")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(pgm_err(path, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(pgm_err(path, format!("maxval {maxval} outside 1..=65535")));
    }
    Ok(Header {
        width,
        height,
        maxval,
        data_start: pos,
    })
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let h = parse_header(bytes, path)?;
    let count = h.width * h.height;
    let wide = h.maxval > 255;
    let need = count * if wide { 2 } else { 1 };
    let data = &bytes[h.data_start..];
    if data.len() < need {
        return Err(pgm_err(path, format!("truncated pixel data: {} of {need} bytes", data.len())));
    }
    let scale = h.maxval as f64;
    let pixels = if wide {
        data[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    } else {
        data[..need].iter().map(|&b| b as f64 / scale).collect()
    };
    Ok(GrayImage {
        width: h.width,
        height: h.height,
        pixels,
    })
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

/// Encodes `[0, 1]` values (clamped) at the given `maxval`.
pub fn encode_pgm(img: &GrayImage, maxval: u16) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    let scale = maxval as f64;
    for &v in &img.pixels {
        let q = (v.clamp(0.0, 1.0) * scale).round() as u16;
        if maxval > 255 {
            out.extend_from_slice(&q.to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    out
}

pub fn write_pgm(path: &Path, img: &GrayImage, maxval: u16) -> Result<()> {
    std::fs::write(path, encode_pgm(img, maxval)).map_err(|e| Error::io(path, e))
}

/// Overlap weights of a length-`from` axis averaged down (or spread up) to
/// `to` cells of equal width.
fn box_weights(from: usize, to: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = from as f64 / to as f64;
    (0..to)
        .map(|o| {
            let lo = o as f64 * ratio;
            let hi = (o + 1) as f64 * ratio;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(from);
            (first..last)
                .filter_map(|i| {
                    let w = (hi.min((i + 1) as f64) - lo.max(i as f64)) / ratio;
                    (w > 0.0).then_some((i, w))
                })
                .collect()
        })
        .collect()
}

/// Area-averaging resample to `side x side`, returned column-major
/// (pixel `(r, c)` at `c * side + r`).
pub fn resample_column_major(img: &GrayImage, side: usize) -> Vec<f64> {
    let wr = box_weights(img.height, side);
    let wc = box_weights(img.width, side);
    // rows first: height x side
    let mut tmp = vec![0.0; img.height * side];
    for r in 0..img.height {
        for (c, ws) in wc.iter().enumerate() {
            tmp[r * side + c] = ws.iter().map(|&(i, w)| w * img.at(r, i)).sum();
        }
    }
    let mut out = vec![0.0; side * side];
    for c in 0..side {
        for (r, ws) in wr.iter().enumerate() {
            out[c * side + r] = ws.iter().map(|&(i, w)| w * tmp[i * side + c]).sum();
        }
    }
    out
}

/// Inverse of the column-major flattening, for writing images back out.
pub fn column_major_to_image(values: &[f64], side: usize) -> GrayImage {
    let mut pixels = vec![0.0; side * side];
    for c in 0..side {
        for r in 0..side {
            pixels[r * side + c] = values[c * side + r];
        }
    }
    GrayImage {
        width: side,
        height: side,
        pixels,
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub set: TrainingSet,
    /// File names in column order.
    pub names: Vec<String>,
    pub side: usize,
}

/// Sorted `.pgm` files in `dir`.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_pgm = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
        if is_pgm && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every `.pgm` in `dir` (sorted by name), rescales to
/// `side x side`, flattens column-major and centers.
pub fn load_corpus(dir: &Path, side: usize) -> Result<Corpus> {
    if side == 0 || !side.is_power_of_two() {
        return Err(Error::arg(format!("target side {side} is not a power of two")));
    }
    let files = corpus_files(dir)?;
    if files.is_empty() {
        return Err(Error::arg(format!("no .pgm files in {}", dir.display())));
    }
    let mut data = Vec::with_capacity(files.len() * side * side);
    let mut names = Vec::with_capacity(files.len());
    for f in &files {
        let img = read_pgm(f)?;
        data.extend(resample_column_major(&img, side));
        names.push(f.file_name().unwrap().to_string_lossy().into_owned());
    }
    let raw = DMatrix::from_vec(side * side, files.len(), data);
    Ok(Corpus {
        set: TrainingSet::from_columns(raw)?,
        names,
        side,
    })
}

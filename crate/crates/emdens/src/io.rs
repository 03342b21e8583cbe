//! Matrix files, sidecar headers, netpbm images and atomic writes.
//!
//! A matrix lives in two files: the values (`name.csv` or `name.f32`) and a
//! JSON header `name.meta` with `height`, `width`, `channels` and optional
//! `channel_names`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use emdens_core::data::MultiplexImage;
use emdens_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    /// One pixel per line, comma separated, no header row.
    Csv,
    /// Little-endian `f32`, pixel-major with channels interleaved.
    RawF32,
}

impl MatrixFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Ok(MatrixFormat::Csv),
            Some(e) if e.eq_ignore_ascii_case("f32") => Ok(MatrixFormat::RawF32),
            _ => Err(Error::Usage(format!(
                "{}: unknown matrix format, expected a .csv or .f32 extension",
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_names: Option<Vec<String>>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

pub fn read_meta(path: &Path) -> Result<Meta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, format!("bad header: {e}")))
}

/// Loads a matrix and its sidecar header, format chosen by extension.
pub fn load_matrix(path: &Path) -> Result<MultiplexImage> {
    let format = MatrixFormat::from_path(path)?;
    let meta = read_meta(&meta_path(path))?;
    let data = match format {
        MatrixFormat::Csv => read_csv_values(path, meta.channels)?,
        MatrixFormat::RawF32 => read_f32_values(path, &meta)?,
    };
    let n = meta.height * meta.width;
    if data.len() != n * meta.channels {
        return Err(emdens_core::Error::DimensionMismatch {
            what: "pixel rows (height * width)",
            expected: n,
            found: data.len() / meta.channels.max(1),
        }
        .into());
    }
    let img = MultiplexImage::new(meta.height, meta.width, Matrix::from_vec(n, meta.channels, data)?)?;
    match meta.channel_names {
        Some(names) => Ok(img.with_channel_names(names)?),
        None => Ok(img),
    }
}

fn read_csv_values(path: &Path, channels: usize) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != channels {
            return Err(emdens_core::Error::DimensionMismatch {
                what: "columns in csv row",
                expected: channels,
                found: record.len(),
            }
            .into());
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::format(path, format!("row {row}, column {col}: cannot parse {field:?}")))?;
            if !v.is_finite() {
                return Err(emdens_core::Error::NonFinite { row, col }.into());
            }
            values.push(v);
        }
    }
    Ok(values)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

fn read_f32_values(path: &Path, meta: &Meta) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(path, format!("{} bytes is not a whole number of f32 values", bytes.len())));
    }
    let expected = meta.height * meta.width * meta.channels;
    if bytes.len() / 4 != expected {
        return Err(emdens_core::Error::DimensionMismatch {
            what: "f32 values (height * width * channels)",
            expected,
            found: bytes.len() / 4,
        }
        .into());
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect())
}

/// Writes `img` in the format given by the extension of `path`, plus its header.
///
/// CSV keeps every `f64` exactly; the raw format rounds to `f32`.
pub fn write_matrix(path: &Path, img: &MultiplexImage) -> Result<()> {
    let bytes = match MatrixFormat::from_path(path)? {
        MatrixFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            for row in img.data().rows() {
                w.write_record(row.iter().map(|v| v.to_string()))
                    .map_err(|e| csv_error(path, e))?;
            }
            w.into_inner().map_err(|e| Error::io(path, e.into_error()))?
        }
        MatrixFormat::RawF32 => img
            .data()
            .as_slice()
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect(),
    };
    let meta = Meta {
        height: img.height(),
        width: img.width(),
        channels: img.channels(),
        channel_names: img.channel_names().map(<[String]>::to_vec),
    };
    let mut header = serde_json::to_string_pretty(&meta).expect("header serializes");
    header.push('\n');
    write_atomic(path, &bytes)?;
    write_atomic(&meta_path(path), header.as_bytes())
}

/// Replaces `path` with `bytes` via a temporary file in the same directory,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    encode_pnm(b"P6", width, height, 3, rgb)
}

pub fn encode_pgm(width: usize, height: usize, gray: &[u8]) -> Result<Vec<u8>> {
    encode_pnm(b"P5", width, height, 1, gray)
}

fn encode_pnm(magic: &[u8], width: usize, height: usize, samples: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height * samples {
        return Err(emdens_core::Error::DimensionMismatch {
            what: "image bytes",
            expected: width * height * samples,
            found: pixels.len(),
        }
        .into());
    }
    let mut out = Vec::with_capacity(pixels.len() + 20);
    out.extend_from_slice(magic);
    out.extend_from_slice(format!("\n{width} {height}\n255\n").as_bytes());
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    write_atomic(path, &encode_ppm(width, height, rgb)?)
}

pub fn write_pgm(path: &Path, width: usize, height: usize, gray: &[u8]) -> Result<()> {
    write_atomic(path, &encode_pgm(width, height, gray)?)
}

/// A decoded binary greyscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Parses a binary (P5) PGM with maxval 255. Header comments are skipped.
pub fn decode_pgm(bytes: &[u8]) -> Option<Pgm> {
    let rest = bytes.strip_prefix(b"P5")?;
    let mut pos = 0;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match rest.get(pos)? {
                b if b.is_ascii_whitespace() => pos += 1,
                b'#' => {
                    while *rest.get(pos)? != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while rest.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&rest[start..pos]).ok()?.parse().ok()?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 || !rest.get(pos)?.is_ascii_whitespace() {
        return None;
    }
    let pixels = &rest[pos + 1..];
    (pixels.len() == width * height).then(|| Pgm {
        width,
        height,
        pixels: pixels.to_vec(),
    })
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).ok_or_else(|| Error::format(path, "not a binary 8-bit PGM"))
}

/// One label per line.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 2);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::format(path, format!("line {}: not a label: {l:?}", i + 1)))
        })
        .collect()
}

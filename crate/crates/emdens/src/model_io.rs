//! Single-file model format.
//!
//! ```text
//! emdens-model 1
//! channels 19
//! layers 15 10 3
//! hyper 0 0.0001 100.0 0.5 10000
//! hyper 1 ...
//! params 1234
//! data
//! <params little-endian f64 values>
//! ```
//!
//! The block holds, for each stage, encoder weights, encoder biases, decoder
//! weights and decoder biases, followed by the normalization minima and maxima.

use std::fmt::Write as _;
use std::path::Path;

use emdens_core::autoencoder::{AePair, DsaModel, SparseAeHyper};
use emdens_core::data::NormalizationSpec;

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const MAGIC: &str = "emdens-model";
pub const VERSION: u32 = 1;
const DATA_MARKER: &[u8] = b"data\n";

pub fn model_to_bytes(model: &DsaModel) -> Vec<u8> {
    let mut header = format!("{MAGIC} {VERSION}\nchannels {}\nlayers", model.input_dim());
    for s in model.layer_sizes() {
        let _ = write!(header, " {s}");
    }
    header.push('\n');
    for (i, h) in model.hypers().iter().enumerate() {
        let _ = writeln!(header, "hyper {i} {:?} {:?} {:?} {}", h.alpha, h.beta, h.gamma, h.max_epochs);
    }
    let mut params: Vec<f64> = model.stages().iter().flat_map(AePair::to_params).collect();
    let norm = model.normalization();
    params.extend_from_slice(&norm.min);
    params.extend_from_slice(&norm.max);
    let _ = writeln!(header, "params {}", params.len());

    let mut out = header.into_bytes();
    out.extend_from_slice(DATA_MARKER);
    out.reserve(params.len() * 8);
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn save_model(path: &Path, model: &DsaModel) -> Result<()> {
    write_atomic(path, &model_to_bytes(model))
}

pub fn load_model(path: &Path) -> Result<DsaModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes).map_err(|message| Error::format(path, message))
}

pub fn model_from_bytes(bytes: &[u8]) -> std::result::Result<DsaModel, String> {
    let split = bytes
        .windows(DATA_MARKER.len())
        .position(|w| w == DATA_MARKER)
        .ok_or("missing data marker")?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| "header is not UTF-8")?;
    let block = &bytes[split + DATA_MARKER.len()..];

    let mut lines = header.lines();
    let mut first = lines.next().unwrap_or_default().split_whitespace();
    if first.next() != Some(MAGIC) {
        return Err("not a model file".into());
    }
    let version: u32 = parse(first.next(), "version")?;
    if version != VERSION {
        return Err(format!("unsupported model version {version}, expected {VERSION}"));
    }

    let mut channels = None;
    let mut layers: Option<Vec<usize>> = None;
    let mut hypers: Vec<SparseAeHyper> = Vec::new();
    let mut count = None;
    for line in lines {
        let mut f = line.split_whitespace();
        match f.next() {
            Some("channels") => channels = Some(parse(f.next(), "channels")?),
            Some("layers") => layers = Some(f.map(|s| parse(Some(s), "layer size")).collect::<Result<_, _>>()?),
            Some("hyper") => {
                let stage: usize = parse(f.next(), "hyper stage")?;
                if stage != hypers.len() {
                    return Err(format!("hyper lines out of order at stage {stage}"));
                }
                hypers.push(SparseAeHyper {
                    alpha: parse(f.next(), "alpha")?,
                    beta: parse(f.next(), "beta")?,
                    gamma: parse(f.next(), "gamma")?,
                    max_epochs: parse(f.next(), "max_epochs")?,
                });
            }
            Some("params") => count = Some(parse::<usize>(f.next(), "params")?),
            Some(other) => return Err(format!("unknown header key {other:?}")),
            None => {}
        }
    }
    let channels: usize = channels.ok_or("missing channels")?;
    let layers = layers.ok_or("missing layers")?;
    let count = count.ok_or("missing params")?;
    if layers.is_empty() || hypers.len() != layers.len() {
        return Err(format!("{} layers but {} hyper lines", layers.len(), hypers.len()));
    }

    let mut widths = vec![channels];
    widths.extend_from_slice(&layers);
    let stage_sizes: Vec<usize> = widths.windows(2).map(|w| 2 * w[0] * w[1] + w[0] + w[1]).collect();
    let expected = stage_sizes.iter().sum::<usize>() + 2 * channels;
    if count != expected {
        return Err(format!("params {count} does not match layer shapes ({expected})"));
    }
    if block.len() != count * 8 {
        return Err(format!("parameter block has {} bytes, expected {}", block.len(), count * 8));
    }
    let params: Vec<f64> = block
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();

    let mut offset = 0;
    let mut stages = Vec::with_capacity(layers.len());
    for (w, &size) in widths.windows(2).zip(&stage_sizes) {
        stages.push(AePair::from_params(w[0], w[1], &params[offset..offset + size]).map_err(|e| e.to_string())?);
        offset += size;
    }
    let normalization = NormalizationSpec {
        min: params[offset..offset + channels].to_vec(),
        max: params[offset + channels..].to_vec(),
    };
    DsaModel::new(stages, hypers, normalization).map_err(|e| e.to_string())
}

fn parse<T: std::str::FromStr>(field: Option<&str>, what: &str) -> std::result::Result<T, String> {
    let s = field.ok_or_else(|| format!("missing {what}"))?;
    s.parse().map_err(|_| format!("bad {what}: {s:?}"))
}

//! Images and statistics derived from an embedding and its clustering:
//! pseudo-RGB renderings, cluster maps and cluster/channel correlation.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::MultiplexImage;
use crate::{Error, Matrix, Result};

/// Quantizes `[0, 1]` to a byte, rounding halves up.
#[inline]
pub fn to_byte(v: f64) -> u8 {
    libm::floor(v.clamp(0.0, 1.0) * 255.0 + 0.5) as u8
}

/// Renders a three-dimensional embedding as an RGB image, one pixel per row.
pub fn pseudo_rgb(z: &Matrix, height: usize, width: usize) -> Result<Vec<u8>> {
    if z.nrows() != height * width {
        return Err(Error::DimensionMismatch {
            what: "embedding rows (height * width)",
            expected: height * width,
            found: z.nrows(),
        });
    }
    if z.ncols() != 3 {
        return Err(Error::DimensionMismatch {
            what: "embedding dimensions",
            expected: 3,
            found: z.ncols(),
        });
    }
    let mut out = Vec::with_capacity(height * width * 3);
    for (row, p) in z.rows().enumerate().take(z.nrows()) {
        for (dim, &v) in p.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutsideUnitCube { row, dim, value: v });
            }
            out.push(to_byte(v));
        }
    }
    Ok(out)
}

/// `k` colors with evenly spaced hues at full saturation and value, starting at red.
pub fn palette(k: usize) -> Vec<[u8; 3]> {
    (0..k)
        .map(|i| hsv_to_rgb(i as f64 / k as f64))
        .collect()
}

fn hsv_to_rgb(hue: f64) -> [u8; 3] {
    let h = hue * 6.0;
    let sector = libm::floor(h) as u32 % 6;
    let f = h - libm::floor(h);
    let (up, down) = (f, 1.0 - f);
    let (r, g, b) = match sector {
        0 => (1.0, up, 0.0),
        1 => (down, 1.0, 0.0),
        2 => (0.0, 1.0, up),
        3 => (0.0, down, 1.0),
        4 => (up, 0.0, 1.0),
        _ => (1.0, 0.0, down),
    };
    [to_byte(r), to_byte(g), to_byte(b)]
}

/// Cluster labels rendered as a colour image and as an 8-bit label image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterMap {
    pub height: usize,
    pub width: usize,
    pub rgb: Vec<u8>,
    pub labels: Vec<u8>,
}

pub fn cluster_map(labels: &[usize], k: usize, height: usize, width: usize) -> Result<ClusterMap> {
    if labels.len() != height * width {
        return Err(Error::DimensionMismatch {
            what: "labels (height * width)",
            expected: height * width,
            found: labels.len(),
        });
    }
    if k > 255 {
        return Err(Error::TooManyLabels(k));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidParameter(alloc::format!("label {bad} is not below k = {k}")));
    }
    let colors = palette(k);
    let mut rgb = Vec::with_capacity(labels.len() * 3);
    for &l in labels {
        rgb.extend_from_slice(&colors[l]);
    }
    Ok(ClusterMap {
        height,
        width,
        rgb,
        labels: labels.iter().map(|&l| l as u8).collect(),
    })
}

/// Phi coefficients between cluster membership masks and binarized channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub clusters: usize,
    pub channels: usize,
    /// Row-major `clusters x channels`; `None` where either mask is constant.
    pub entries: Vec<Option<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, cluster: usize, channel: usize) -> Option<f64> {
        self.entries[cluster * self.channels + channel]
    }
}

/// Pearson correlation of two binary masks, computed from the 2x2 table.
pub fn phi_coefficient(a: &[bool], b: &[bool]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let mut t = [[0u64; 2]; 2];
    for (&x, &y) in a.iter().zip(b) {
        t[x as usize][y as usize] += 1;
    }
    phi_from_table(&t)
}

fn phi_from_table(t: &[[u64; 2]; 2]) -> Option<f64> {
    let a1 = (t[1][0] + t[1][1]) as f64;
    let a0 = (t[0][0] + t[0][1]) as f64;
    let b1 = (t[0][1] + t[1][1]) as f64;
    let b0 = (t[0][0] + t[1][0]) as f64;
    let denom = a1 * a0 * b1 * b0;
    if denom == 0.0 {
        return None;
    }
    let num = t[1][1] as f64 * t[0][0] as f64 - t[1][0] as f64 * t[0][1] as f64;
    Some((num / libm::sqrt(denom)).clamp(-1.0, 1.0))
}

/// Correlates every cluster mask `label == c` with every channel mask
/// `value > threshold` (a threshold of 0 treats any signal as present).
pub fn correlate_maps(labels: &[usize], k: usize, img: &MultiplexImage, threshold: f64) -> Result<CorrelationMatrix> {
    if labels.len() != img.pixels() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: img.pixels(),
            found: labels.len(),
        });
    }
    let d = img.channels();
    // tables[c][j] = 2x2 counts of (in cluster c, channel j on)
    let mut tables = vec![[[0u64; 2]; 2]; k * d];
    for (row, &l) in img.data().rows().zip(labels) {
        for (j, &v) in row.iter().enumerate() {
            let on = (v > threshold) as usize;
            for c in 0..k {
                tables[c * d + j][(l == c) as usize][on] += 1;
            }
        }
    }
    Ok(CorrelationMatrix {
        clusters: k,
        channels: d,
        entries: tables.iter().map(phi_from_table).collect(),
    })
}

//! On-disk formats: 16-bit grayscale PNG for depth and labels, CSV for
//! samples, JSON for documents.

use std::fmt::Write as _;
use std::io::Cursor;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::edgeloss::EdgeMap;
use crate::error::{Error, Result};
use crate::types::{DepthMap, LabelMap, Sample, SparseSamples};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A decoded single-channel image widened to 16 bits.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
    pub bit_depth: u8,
}

pub fn decode_gray_png(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let size = reader.output_buffer_size().ok_or("image too large")?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(format!("expected single-channel grayscale, found {:?}", info.color_type));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data: Vec<u16> = match info.bit_depth {
        png::BitDepth::Sixteen => (0..h)
            .flat_map(|y| {
                let row = &buf[y * info.line_size..y * info.line_size + 2 * w];
                row.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]))
            })
            .collect(),
        png::BitDepth::Eight => (0..h)
            .flat_map(|y| buf[y * info.line_size..y * info.line_size + w].iter().map(|&b| b as u16))
            .collect(),
        other => return Err(format!("unsupported bit depth {other:?}")),
    };
    Ok(GrayImage {
        width: w,
        height: h,
        data,
        bit_depth: if info.bit_depth == png::BitDepth::Sixteen { 16 } else { 8 },
    })
}

fn encode_png(width: usize, height: usize, depth: png::BitDepth, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(depth);
        let mut writer = enc.write_header().expect("in-memory PNG header");
        writer.write_image_data(data).expect("in-memory PNG data");
        writer.finish().expect("in-memory PNG finish");
    }
    out
}

pub fn encode_gray16_png(width: usize, height: usize, data: &[u16]) -> Vec<u8> {
    assert_eq!(data.len(), width * height);
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_be_bytes()).collect();
    encode_png(width, height, png::BitDepth::Sixteen, &bytes)
}

pub fn encode_gray8_png(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    assert_eq!(data.len(), width * height);
    encode_png(width, height, png::BitDepth::Eight, data)
}

/// Stored units to meters; `0` is invalid.
pub fn depth_from_units(width: usize, height: usize, units: &[u16], scale: f64) -> Result<DepthMap> {
    let values: Vec<f64> = units.iter().map(|&u| u as f64 * scale).collect();
    let valid: Vec<bool> = units.iter().map(|&u| u != 0).collect();
    DepthMap::new(width, height, values, valid)
}

/// Meters to stored units, rounding to nearest. Valid depths are clamped
/// into `1..=65535`; the second value counts clamped pixels.
pub fn depth_to_units(map: &DepthMap, scale: f64) -> (Vec<u16>, usize) {
    let mut clamped = 0;
    let units = map
        .values()
        .iter()
        .zip(map.validity())
        .map(|(&d, &ok)| {
            if !ok {
                return 0;
            }
            let q = (d / scale).round();
            if q < 1.0 || q > u16::MAX as f64 {
                clamped += 1;
            }
            q.clamp(1.0, u16::MAX as f64) as u16
        })
        .collect();
    (units, clamped)
}

pub fn decode_depth_png(bytes: &[u8], scale: f64, path: &Path) -> Result<DepthMap> {
    let img = decode_gray_png(bytes).map_err(|m| Error::format(path, m))?;
    if img.bit_depth != 16 {
        return Err(Error::format(path, "depth maps must be 16-bit grayscale"));
    }
    depth_from_units(img.width, img.height, &img.data, scale)
}

pub fn read_depth_png(path: &Path, scale: f64) -> Result<DepthMap> {
    decode_depth_png(&read_bytes(path)?, scale, path)
}

/// PNG bytes and the number of clamped pixels.
pub fn encode_depth_png(map: &DepthMap, scale: f64) -> (Vec<u8>, usize) {
    let (units, clamped) = depth_to_units(map, scale);
    (encode_gray16_png(map.width(), map.height(), &units), clamped)
}

pub fn write_depth_png(path: &Path, map: &DepthMap, scale: f64) -> Result<usize> {
    let (bytes, clamped) = encode_depth_png(map, scale);
    write_bytes(path, &bytes)?;
    Ok(clamped)
}

/// Labels from an 8- or 16-bit grayscale PNG.
pub fn decode_label_png(bytes: &[u8], path: &Path) -> Result<LabelMap> {
    let img = decode_gray_png(bytes).map_err(|m| Error::format(path, m))?;
    LabelMap::new(img.width, img.height, img.data.into_iter().map(u32::from).collect())
}

pub fn read_label_png(path: &Path) -> Result<LabelMap> {
    decode_label_png(&read_bytes(path)?, path)
}

pub fn encode_label_png(labels: &LabelMap) -> Result<Vec<u8>> {
    let data = labels
        .labels()
        .iter()
        .map(|&l| u16::try_from(l).map_err(|_| Error::InvalidData(format!("label {l} does not fit 16 bits"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(encode_gray16_png(labels.width(), labels.height(), &data))
}

pub fn write_label_png(path: &Path, labels: &LabelMap) -> Result<()> {
    write_bytes(path, &encode_label_png(labels)?)
}

/// Edge pixels as 255, others 0, 8-bit.
pub fn encode_edge_png(edges: &EdgeMap) -> Vec<u8> {
    let data: Vec<u8> = edges.as_slice().iter().map(|&e| if e { 255 } else { 0 }).collect();
    encode_gray8_png(edges.width(), edges.height(), &data)
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    u: u32,
    v: u32,
    depth_m: f64,
}

pub const SAMPLES_HEADER: &str = "u,v,depth_m";

pub fn parse_samples_csv(text: &str, width: usize, height: usize, path: &Path) -> Result<SparseSamples> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != SAMPLES_HEADER {
        return Err(Error::format(path, format!("expected header {SAMPLES_HEADER:?}, found {header:?}")));
    }
    let mut samples = Vec::new();
    for (i, rec) in reader.deserialize::<SampleRow>().enumerate() {
        let r = rec.map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
        samples.push(Sample {
            u: r.u,
            v: r.v,
            depth: r.depth_m,
        });
    }
    SparseSamples::new(samples, width, height).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_samples_csv(path: &Path, width: usize, height: usize) -> Result<SparseSamples> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_samples_csv(&text, width, height, path)
}

/// Depths use the shortest representation that parses back exactly.
pub fn samples_csv_string(samples: &SparseSamples) -> String {
    let mut s = String::with_capacity(16 * samples.len() + 16);
    s.push_str(SAMPLES_HEADER);
    s.push('\n');
    for x in samples.iter() {
        let _ = writeln!(s, "{},{},{:?}", x.u, x.v, x.depth);
    }
    s
}

pub fn write_samples_csv(path: &Path, samples: &SparseSamples) -> Result<()> {
    write_bytes(path, samples_csv_string(samples).as_bytes())
}

/// Pretty JSON with a trailing newline.
pub fn json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, json_string(value).as_bytes())
}

//! 16-bit grayscale PNG depth maps with the `depth_m = value / 256`
//! convention; zero values mark invalid pixels.

use super::IoError;
use crate::grid::DepthMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

/// Writes a depth map as 16-bit grayscale PNG. Valid depths are quantized to
/// `round(depth * 256)` clamped to `[1, 65535]`; invalid pixels become 0.
pub fn write_png16_depth(path: &Path, depth: &DepthMap) -> Result<(), IoError> {
    let file = BufWriter::new(File::create(path)?);
    let mut encoder = png::Encoder::new(file, depth.width() as u32, depth.height() as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder
        .write_header()
        .map_err(|e| IoError::Png(e.to_string()))?;
    let mut bytes = Vec::with_capacity(depth.len() * 2);
    for (i, &d) in depth.raw_data().iter().enumerate() {
        let value = if depth.validity()[i] {
            ((d * 256.0).round() as i64).clamp(1, 65535) as u16
        } else {
            0
        };
        bytes.extend_from_slice(&value.to_be_bytes());
    }
    writer
        .write_image_data(&bytes)
        .map_err(|e| IoError::Png(e.to_string()))?;
    Ok(())
}

/// Reads a 16-bit grayscale PNG depth map.
pub fn read_png16_depth(path: &Path) -> Result<DepthMap, IoError> {
    let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    let mut reader = decoder
        .read_info()
        .map_err(|e| IoError::Png(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(IoError::UnsupportedFormat(format!(
            "expected 16-bit grayscale png, got {:?} {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| IoError::Png("output buffer size overflow".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| IoError::Png(e.to_string()))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mut data = vec![0.0f64; w * h];
    for (i, chunk) in buf[..frame.buffer_size()].chunks_exact(2).enumerate() {
        let value = u16::from_be_bytes([chunk[0], chunk[1]]);
        data[i] = value as f64 / 256.0;
    }
    Ok(DepthMap::from_data(w, h, data)?)
}

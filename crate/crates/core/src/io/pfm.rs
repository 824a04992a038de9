//! Grayscale PFM ("Pf") maps: text header `Pf`, `width height`, scale (sign
//! gives endianness, negative = little-endian), then f32 rows stored
//! bottom-up. Depth maps mark nonpositive values invalid; images are plain
//! scalar grids.

use super::IoError;
use crate::grid::{DepthMap, Image};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

fn write_pfm_raw(path: &Path, width: usize, height: usize, data: &[f64]) -> Result<(), IoError> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "Pf\n{width} {height}\n-1.0\n")?;
    // bottom-up row order
    for y in (0..height).rev() {
        for x in 0..width {
            out.write_all(&(data[y * width + x] as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_pfm_raw(path: &Path) -> Result<(usize, usize, Vec<f64>), IoError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = Vec::new();
    // three whitespace-delimited tokens: magic, width+height, scale
    let mut tokens = Vec::new();
    let mut byte = [0u8; 1];
    while tokens.len() < 4 {
        let mut token = Vec::new();
        loop {
            if reader.read(&mut byte)? == 0 {
                return Err(IoError::TruncatedFile);
            }
            if byte[0].is_ascii_whitespace() {
                if token.is_empty() {
                    continue;
                }
                break;
            }
            token.push(byte[0]);
        }
        tokens.push(String::from_utf8_lossy(&token).to_string());
        header.push(());
    }
    if tokens[0] != "Pf" {
        if tokens[0] == "PF" {
            return Err(IoError::UnsupportedFormat(
                "color PFM (PF) is not supported, expected grayscale Pf".into(),
            ));
        }
        return Err(IoError::BadMagic {
            expected: "Pf".into(),
            found: tokens[0].clone(),
        });
    }
    let width: usize = tokens[1].parse().map_err(|_| IoError::Parse {
        line: 2,
        message: format!("bad width {:?}", tokens[1]),
    })?;
    let height: usize = tokens[2].parse().map_err(|_| IoError::Parse {
        line: 2,
        message: format!("bad height {:?}", tokens[2]),
    })?;
    let scale: f64 = tokens[3].parse().map_err(|_| IoError::Parse {
        line: 3,
        message: format!("bad scale {:?}", tokens[3]),
    })?;
    if width == 0 || height == 0 {
        return Err(IoError::UnsupportedFormat(format!(
            "pfm dimensions {width}x{height}"
        )));
    }
    let little_endian = scale < 0.0;
    let mut buf = vec![0u8; width * height * 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| IoError::TruncatedFile)?;
    let mut data = vec![0.0f64; width * height];
    for (i, chunk) in buf.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().expect("4-byte chunk");
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        // rows are stored bottom-up
        let y = height - 1 - i / width;
        let x = i % width;
        data[y * width + x] = v as f64;
    }
    Ok((width, height, data))
}

/// Writes a depth map; invalid pixels are stored as 0.
pub fn write_pfm_depth(path: &Path, depth: &DepthMap) -> Result<(), IoError> {
    let data: Vec<f64> = depth
        .raw_data()
        .iter()
        .zip(depth.validity())
        .map(|(&d, &v)| if v { d } else { 0.0 })
        .collect();
    write_pfm_raw(path, depth.width(), depth.height(), &data)
}

/// Reads a depth map; nonpositive or nonfinite values become invalid pixels.
pub fn read_pfm_depth(path: &Path) -> Result<DepthMap, IoError> {
    let (w, h, data) = read_pfm_raw(path)?;
    Ok(DepthMap::from_data(w, h, data)?)
}

/// Writes a single-channel image.
pub fn write_pfm_image(path: &Path, image: &Image) -> Result<(), IoError> {
    if image.channels() != 1 {
        return Err(IoError::UnsupportedFormat(
            "pfm images are single-channel".into(),
        ));
    }
    write_pfm_raw(path, image.width(), image.height(), image.plane(0))
}

/// Reads a single-channel image.
pub fn read_pfm_image(path: &Path) -> Result<Image, IoError> {
    let (w, h, data) = read_pfm_raw(path)?;
    Ok(Image::from_planes(w, h, 1, data)?)
}

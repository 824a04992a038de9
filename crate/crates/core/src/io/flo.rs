//! Middlebury .flo flow interchange: a 202021.25 f32 magic, i32 width and
//! height, then row-major interleaved (u, v) f32 samples, all little-endian.

use super::IoError;
use crate::grid::FlowField;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const FLO_MAGIC: f32 = 202021.25;

pub fn write_flow(path: &Path, flow: &FlowField) -> Result<(), IoError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&FLO_MAGIC.to_le_bytes())?;
    out.write_all(&(flow.width() as i32).to_le_bytes())?;
    out.write_all(&(flow.height() as i32).to_le_bytes())?;
    for v in flow.data() {
        out.write_all(&(v[0] as f32).to_le_bytes())?;
        out.write_all(&(v[1] as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_flow(path: &Path) -> Result<FlowField, IoError> {
    let mut reader = BufReader::new(File::open(path)?);
    let magic = read_f32(&mut reader)?;
    if magic != FLO_MAGIC {
        return Err(IoError::BadMagic {
            expected: FLO_MAGIC.to_string(),
            found: magic.to_string(),
        });
    }
    let width = read_i32(&mut reader)?;
    let height = read_i32(&mut reader)?;
    if width <= 0 || height <= 0 {
        return Err(IoError::UnsupportedFormat(format!(
            "flow dimensions {width}x{height}"
        )));
    }
    let (width, height) = (width as usize, height as usize);
    let mut data = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let u = read_f32(&mut reader)? as f64;
        let v = read_f32(&mut reader)? as f64;
        data.push([u, v]);
    }
    Ok(FlowField::from_data(width, height, data)?)
}

fn read_f32(reader: &mut impl Read) -> Result<f32, IoError> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| IoError::TruncatedFile)?;
    Ok(f32::from_le_bytes(buf))
}

fn read_i32(reader: &mut impl Read) -> Result<i32, IoError> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| IoError::TruncatedFile)?;
    Ok(i32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;
    use std::fs;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("flowvo-flo-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = DetRng::new(1, "flo");
        // values drawn on the f32 grid so widening is lossless
        let data: Vec<[f64; 2]> = (0..12 * 7)
            .map(|_| {
                [
                    rng.range_f64(-40.0, 40.0) as f32 as f64,
                    rng.range_f64(-40.0, 40.0) as f32 as f64,
                ]
            })
            .collect();
        let flow = FlowField::from_data(12, 7, data).unwrap();
        let path = tmp("roundtrip.flo");
        write_flow(&path, &flow).unwrap();
        let back = read_flow(&path).unwrap();
        assert_eq!(flow, back);
        // byte-level stability of a second write
        let path2 = tmp("roundtrip2.flo");
        write_flow(&path2, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn magic_bytes_decode_to_constant() {
        let flow = FlowField::zeros(3, 2);
        let path = tmp("magic.flo");
        write_flow(&path, &flow).unwrap();
        let bytes = fs::read(&path).unwrap();
        let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
        assert_eq!(magic, 202021.25);
        let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
        assert_eq!((w, h), (3, 2));
        assert_eq!(bytes.len(), 12 + 3 * 2 * 8);
    }

    #[test]
    fn wrong_magic_rejected() {
        let path = tmp("bad.flo");
        fs::write(&path, 1.0f32.to_le_bytes()).unwrap();
        assert!(matches!(read_flow(&path), Err(IoError::BadMagic { .. })));
    }

    #[test]
    fn truncation_detected() {
        let flow = FlowField::zeros(4, 4);
        let path = tmp("trunc.flo");
        write_flow(&path, &flow).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 5);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_flow(&path), Err(IoError::TruncatedFile)));
    }
}

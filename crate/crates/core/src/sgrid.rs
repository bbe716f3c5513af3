//! `SGRID v1`: a one-line text header followed by a raw little-endian
//! float32 row-major payload.
//!
//! ```text
//! SGRID v1 width=64 height=48 spacing_x_mm=0.75 spacing_y_mm=0.75 dtype=float32 order=le\n
//! <width * height * 4 bytes>
//! ```
//!
//! Values are widened to f64 on read, so a file read and written again is
//! byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Dims, ScalarGrid, Spacing};

pub const MAGIC: &str = "SGRID v1";

pub fn encode(grid: &ScalarGrid) -> Vec<u8> {
    let s = grid.spacing();
    let header = format!(
        "{MAGIC} width={} height={} spacing_x_mm={} spacing_y_mm={} dtype=float32 order=le\n",
        grid.width(),
        grid.height(),
        s.x,
        s.y
    );
    let mut out = Vec::with_capacity(header.len() + grid.values().len() * 4);
    out.extend_from_slice(header.as_bytes());
    for &v in grid.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ScalarGrid> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header terminator".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let rest = header
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Format(format!("bad magic in header {header:?}")))?;

    let mut width = None;
    let mut height = None;
    let mut sx = None;
    let mut sy = None;
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("header field {field:?} is not key=value")))?;
        let bad = || Error::Format(format!("bad value for {key}: {value:?}"));
        match key {
            "width" => width = Some(value.parse::<usize>().map_err(|_| bad())?),
            "height" => height = Some(value.parse::<usize>().map_err(|_| bad())?),
            "spacing_x_mm" => sx = Some(value.parse::<f64>().map_err(|_| bad())?),
            "spacing_y_mm" => sy = Some(value.parse::<f64>().map_err(|_| bad())?),
            "dtype" if value == "float32" => {}
            "order" if value == "le" => {}
            "dtype" | "order" => {
                return Err(Error::Format(format!("unsupported {key}={value}")));
            }
            _ => return Err(Error::Format(format!("unknown header field {key:?}"))),
        }
    }
    let missing = |name: &str| Error::Format(format!("header lacks {name}"));
    let dims = Dims::new(
        width.ok_or_else(|| missing("width"))?,
        height.ok_or_else(|| missing("height"))?,
    );
    let spacing = Spacing::new(
        sx.ok_or_else(|| missing("spacing_x_mm"))?,
        sy.ok_or_else(|| missing("spacing_y_mm"))?,
    )?;

    let payload = &bytes[nl + 1..];
    if payload.len() != dims.len() * 4 {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {}",
            payload.len(),
            dims.len() * 4
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    ScalarGrid::new(dims, spacing, values)
}

pub fn read(path: impl AsRef<Path>) -> Result<ScalarGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| e.context(path.display().to_string()))
}

pub fn write(path: impl AsRef<Path>, grid: &ScalarGrid) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(grid)).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    BinaryMask::from_grid(&read(path)?).map_err(|e| e.context(path.display().to_string()))
}

pub fn write_mask(path: impl AsRef<Path>, mask: &BinaryMask, spacing: Spacing) -> Result<()> {
    write(path, &mask.to_grid(spacing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let g = ScalarGrid::filled(Dims::new(3, 2), Spacing::new(0.75, 1.5).unwrap(), 0.25).unwrap();
        let bytes = encode(&g);
        let expected = b"SGRID v1 width=3 height=2 spacing_x_mm=0.75 spacing_y_mm=1.5 dtype=float32 order=le\n";
        assert_eq!(&bytes[..expected.len()], expected);
        assert_eq!(bytes.len(), expected.len() + 24);
        assert_eq!(&bytes[expected.len()..expected.len() + 4], &0.25f32.to_le_bytes());
    }

    #[test]
    fn rejects_malformed() {
        assert!(decode(b"nope").is_err());
        assert!(decode(b"GRID v1 width=1 height=1\n\0\0\0\0").is_err());
        assert!(
            decode(b"SGRID v1 width=1 height=1 spacing_x_mm=1 spacing_y_mm=1 dtype=float32 order=le\n\0\0").is_err()
        );
        assert!(
            decode(b"SGRID v1 width=1 height=1 spacing_x_mm=1 spacing_y_mm=1 dtype=float64 order=le\n\0\0\0\0")
                .is_err()
        );
        assert!(decode(b"SGRID v1 width=1 spacing_x_mm=1 spacing_y_mm=1\n\0\0\0\0").is_err());
    }

    #[test]
    fn mask_round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.sgrid");
        let m = BinaryMask::from_pixels(Dims::new(4, 4), &[(0, 0), (3, 2)]);
        write_mask(&p, &m, Spacing::default()).unwrap();
        assert_eq!(read_mask(&p).unwrap(), m);
    }

    proptest! {
        #[test]
        fn encode_decode_is_bit_exact(
            w in 1usize..6, h in 1usize..6,
            sx in 0.01f64..10.0, sy in 0.01f64..10.0,
            seed in proptest::collection::vec(-1e6f32..1e6, 36),
        ) {
            let vals: Vec<f64> = seed[..w * h].iter().map(|&v| v as f64).collect();
            let g = ScalarGrid::new(Dims::new(w, h), Spacing::new(sx, sy).unwrap(), vals).unwrap();
            let bytes = encode(&g);
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(encode(&back), bytes);
        }
    }
}

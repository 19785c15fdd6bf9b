//! PCB1 clip files.
//!
//! Layout, all little-endian:
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 4            | magic `PCB1`                              |
//! | 4 × u32      | T, W, H, C                                |
//! | f64          | fps                                       |
//! | T·W·H·C f32  | pixels, frame-major then W, H, C          |
//! | T f32        | ground-truth pulse                        |

use std::fs;
use std::path::Path;

use pulse_core::model::{Clip, ClipDims};
use pulse_core::signal::BvpSignal;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PCB1";
pub const HEADER_LEN: usize = 4 + 4 * 4 + 8;

/// Payload length in `f32` values for the given dims.
pub fn payload_floats(dims: ClipDims) -> usize {
    dims.numel() + dims.frames
}

pub fn encode(clip: &Clip, truth: &BvpSignal) -> Result<Vec<u8>> {
    let d = clip.dims();
    if truth.len() != d.frames {
        return Err(pulse_core::Error::LengthMismatch {
            left: truth.len(),
            right: d.frames,
        }
        .into());
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * payload_floats(d));
    out.extend_from_slice(MAGIC);
    for n in [d.frames, d.width, d.height, d.channels] {
        let n = u32::try_from(n).map_err(|_| Error::Config(format!("dimension {n} exceeds u32")))?;
        out.extend_from_slice(&n.to_le_bytes());
    }
    out.extend_from_slice(&clip.fps().to_le_bytes());
    for &v in clip.data().iter().chain(truth.samples()) {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Parses a clip file; `id` names the returned clip.
pub fn decode(bytes: &[u8], id: &str, path: &Path) -> Result<(Clip, BvpSignal)> {
    let corrupt = |reason: String| Error::CorruptFile {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 4 {
        return Err(corrupt(format!("{} bytes, shorter than the magic", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        if &bytes[..3] == b"PCB" {
            return Err(Error::VersionMismatch {
                path: path.to_path_buf(),
                found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
            });
        }
        return Err(corrupt("bad magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(corrupt(format!("{} bytes, shorter than the header", bytes.len())));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let dims = ClipDims {
        frames: u32_at(4),
        width: u32_at(8),
        height: u32_at(12),
        channels: u32_at(16),
    };
    let fps = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let want = dims
        .frames
        .checked_mul(dims.width)
        .and_then(|n| n.checked_mul(dims.height))
        .and_then(|n| n.checked_mul(dims.channels))
        .and_then(|n| n.checked_add(dims.frames))
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| corrupt("header dimensions overflow".into()))?;
    if bytes.len() != want {
        return Err(corrupt(format!("expected {want} bytes, found {}", bytes.len())));
    }
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let data: Vec<f64> = floats.by_ref().take(dims.numel()).collect();
    let truth: Vec<f64> = floats.collect();
    let clip = Clip::new(id, dims, fps, data).map_err(|e| corrupt(e.to_string()))?;
    let truth = BvpSignal::new(truth, fps).map_err(|e| corrupt(e.to_string()))?;
    Ok((clip, truth))
}

pub fn write_clip(path: &Path, clip: &Clip, truth: &BvpSignal) -> Result<()> {
    let bytes = encode(clip, truth)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a clip file, naming the clip after the file stem.
pub fn read_clip(path: &Path) -> Result<(Clip, BvpSignal)> {
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("clip").to_string();
    read_clip_as(path, &id)
}

pub fn read_clip_as(path: &Path, id: &str) -> Result<(Clip, BvpSignal)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, id, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Clip, BvpSignal) {
        let dims = ClipDims {
            frames: 4,
            width: 2,
            height: 1,
            channels: 3,
        };
        let data = (0..dims.numel()).map(|i| i as f64 / 29.0).collect();
        let clip = Clip::new("s", dims, 30.0, data).unwrap();
        let truth = BvpSignal::new(vec![0.1, -0.2, 0.3, 0.0], 30.0).unwrap();
        (clip, truth)
    }

    #[test]
    fn header_layout() {
        let (clip, truth) = sample();
        let b = encode(&clip, &truth).unwrap();
        assert_eq!(&b[..4], b"PCB1");
        assert_eq!(&b[4..20], &[4, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&b[20..28], &30.0f64.to_le_bytes());
        assert_eq!(b.len(), HEADER_LEN + 4 * (24 + 4));
    }

    #[test]
    fn default_dims_payload() {
        let dims = ClipDims {
            frames: 300,
            width: 8,
            height: 8,
            channels: 3,
        };
        assert_eq!(payload_floats(dims), 300 * 8 * 8 * 3 + 300);
    }

    #[test]
    fn round_trip_and_errors() {
        let (clip, truth) = sample();
        let b = encode(&clip, &truth).unwrap();
        let p = Path::new("x.pcb");
        let (c2, t2) = decode(&b, "s", p).unwrap();
        for (a, b) in clip.data().iter().zip(c2.data()).chain(truth.samples().iter().zip(t2.samples())) {
            assert!((a - b).abs() <= 1e-7);
        }
        assert!(matches!(decode(&b[..b.len() - 1], "s", p), Err(Error::CorruptFile { .. })));
        assert!(matches!(decode(&b[..10], "s", p), Err(Error::CorruptFile { .. })));
        let mut v2 = b.clone();
        v2[3] = b'2';
        assert!(matches!(decode(&v2, "s", p), Err(Error::VersionMismatch { .. })));
        v2[0] = b'X';
        assert!(matches!(decode(&v2, "s", p), Err(Error::CorruptFile { .. })));
    }
}

//! Frame file codecs.
//!
//! Two formats are accepted:
//!
//! * 8-bit binary or ASCII PGM/PPM (grayscale or RGB). Samples are divided
//!   by 255.
//! * `CFR1` raw float frames: the 4-byte magic `CFR1`, then channels, height
//!   and width as little-endian `u32`, then `channels * height * width`
//!   little-endian `f32` values in channel-major order.

use std::io::Cursor;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader, Limits};

use super::{Frame, FrameShape};
use crate::{Error, Result};

const CFR_MAGIC: &[u8; 4] = b"CFR1";
const CFR_HEADER_LEN: usize = 16;
const MAX_SIDE: u32 = 8192;

/// On-disk frame encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrameFormat {
    /// Raw little-endian floats with a 16-byte header. Lossless.
    #[default]
    Cfr,
    /// Binary PGM (1 channel) or PPM (3 channels). Quantized to 8 bits.
    Pnm,
}

impl FrameFormat {
    pub fn extension(self, channels: usize) -> &'static str {
        match self {
            FrameFormat::Cfr => "cfr",
            FrameFormat::Pnm if channels == 3 => "ppm",
            FrameFormat::Pnm => "pgm",
        }
    }
}

impl std::str::FromStr for FrameFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cfr" => Ok(FrameFormat::Cfr),
            "pnm" | "pgm" | "ppm" => Ok(FrameFormat::Pnm),
            other => Err(Error::InvalidArgument(format!(
                "unknown frame format {other:?} (expected cfr or pnm)"
            ))),
        }
    }
}

/// Decodes a frame, detecting the format from its leading bytes.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame> {
    if bytes.starts_with(CFR_MAGIC) {
        decode_cfr(bytes)
    } else if bytes.first() == Some(&b'P') {
        decode_pnm(bytes)
    } else {
        Err(Error::malformed("frame", "unrecognized frame file signature"))
    }
}

fn decode_cfr(bytes: &[u8]) -> Result<Frame> {
    if bytes.len() < CFR_HEADER_LEN {
        return Err(Error::malformed("CFR1 frame", "truncated header"));
    }
    let dim = |i: usize| {
        let start = 4 + 4 * i;
        u32::from_le_bytes(bytes[start..start + 4].try_into().unwrap()) as usize
    };
    let shape = FrameShape::new(dim(0), dim(1), dim(2));
    let expected = shape
        .channels
        .checked_mul(shape.height)
        .and_then(|n| n.checked_mul(shape.width))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::malformed("CFR1 frame", "dimensions overflow"))?;
    let body = &bytes[CFR_HEADER_LEN..];
    if expected == 0 || body.len() != expected {
        return Err(Error::malformed(
            "CFR1 frame",
            format!(
                "header {shape} needs {expected} payload bytes, found {}",
                body.len()
            ),
        ));
    }
    let pixels = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Frame::new(shape, pixels)
}

fn decode_pnm(bytes: &[u8]) -> Result<Frame> {
    let mut limits = Limits::default();
    limits.max_image_width = Some(MAX_SIDE);
    limits.max_image_height = Some(MAX_SIDE);
    limits.max_alloc = Some(1 << 28);

    let mut reader = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Pnm);
    reader.limits(limits);
    let image = reader
        .decode()
        .map_err(|e| Error::malformed("PNM frame", e.to_string()))?;

    let (width, height) = (image.width() as usize, image.height() as usize);
    let (channels, raw) = match image {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        other => {
            return Err(Error::malformed(
                "PNM frame",
                format!("unsupported sample layout {:?}", other.color()),
            ))
        }
    };
    let shape = FrameShape::new(channels, height, width);
    let plane = height * width;
    let mut pixels = vec![0f32; shape.len()];
    // Interleaved HWC to planar CHW.
    for (i, px) in raw.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            pixels[c * plane + i] = f32::from(v) / 255.0;
        }
    }
    Frame::new(shape, pixels)
}

/// Encodes a frame as `CFR1`.
pub fn encode_cfr(frame: &Frame) -> Vec<u8> {
    let shape = frame.shape();
    let mut out = Vec::with_capacity(CFR_HEADER_LEN + 4 * shape.len());
    out.extend_from_slice(CFR_MAGIC);
    for d in [shape.channels, shape.height, shape.width] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in frame.pixels() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Encodes a 1- or 3-channel frame as binary PGM/PPM, rounding to 8 bits.
pub fn encode_pnm(frame: &Frame) -> Result<Vec<u8>> {
    let shape = frame.shape();
    let (subtype, color) = match shape.channels {
        1 => (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8),
        3 => (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8),
        c => {
            return Err(Error::InvalidArgument(format!(
                "PNM frames need 1 or 3 channels, got {c}"
            )))
        }
    };
    let plane = shape.height * shape.width;
    let mut interleaved = vec![0u8; shape.len()];
    for c in 0..shape.channels {
        for i in 0..plane {
            let v = frame.pixels()[c * plane + i];
            interleaved[i * shape.channels + c] = (v * 255.0).round() as u8;
        }
    }
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(subtype)
        .write_image(&interleaved, shape.width as u32, shape.height as u32, color)
        .map_err(|e| Error::malformed("PNM frame", e.to_string()))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: FrameShape) -> Frame {
        let n = shape.len();
        Frame::new(shape, (0..n).map(|i| i as f32 / n as f32).collect()).unwrap()
    }

    #[test]
    fn cfr_header_layout() {
        let frame = ramp(FrameShape::new(2, 3, 4));
        let bytes = encode_cfr(&frame);
        assert_eq!(&bytes[..4], b"CFR1");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &4u32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 24 * 4);
        assert_eq!(decode_frame(&bytes).unwrap(), frame);
    }

    #[test]
    fn cfr_rejects_truncated_and_oversized_headers() {
        let mut bytes = encode_cfr(&ramp(FrameShape::new(1, 2, 2)));
        bytes.pop();
        assert!(decode_frame(&bytes).is_err());
        let mut huge = b"CFR1".to_vec();
        for _ in 0..3 {
            huge.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(decode_frame(&huge).is_err());
    }

    #[test]
    fn pgm_values_are_scaled_by_255() {
        let bytes = b"P5\n2 1\n255\n\x00\xff";
        let frame = decode_frame(bytes).unwrap();
        assert_eq!(frame.shape(), FrameShape::new(1, 1, 2));
        assert_eq!(frame.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn ppm_is_converted_to_planar() {
        // two pixels: (255,0,0) and (0,0,255)
        let bytes = b"P6\n2 1\n255\n\xff\x00\x00\x00\x00\xff";
        let frame = decode_frame(bytes).unwrap();
        assert_eq!(frame.shape(), FrameShape::new(3, 1, 2));
        assert_eq!(frame.pixels(), &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn pnm_roundtrip_is_quantized() {
        let frame = ramp(FrameShape::new(3, 2, 2));
        let back = decode_frame(&encode_pnm(&frame).unwrap()).unwrap();
        assert_eq!(back.shape(), frame.shape());
        for (a, b) in frame.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn unknown_signature_rejected() {
        assert!(decode_frame(b"GIF89a").is_err());
        assert!(decode_frame(b"").is_err());
    }
}

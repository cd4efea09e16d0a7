//! Base64 image transport used by the remote protocols.
//!
//! Layout before base64: ASCII `RIMG`, then height, width and channels as
//! little-endian `u32`, then every sample as a little-endian `f64` in
//! row-major `(row, col, channel)` order.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::error::{Error, Result};
use crate::model::Image;

const MAGIC: &[u8; 4] = b"RIMG";

pub fn encode_image(image: &Image) -> String {
    let mut buf = Vec::with_capacity(16 + image.data().len() * 8);
    buf.extend_from_slice(MAGIC);
    for d in [image.height(), image.width(), image.channels()] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in image.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(buf)
}

pub fn decode_image(b64: &str) -> Result<Image> {
    let bytes = STANDARD
        .decode(b64.trim())
        .map_err(|e| Error::Protocol(format!("image payload is not base64: {e}")))?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Protocol("image payload lacks RIMG header".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let body = &bytes[16..];
    if body.len() != h * w * c * 8 {
        return Err(Error::Protocol(format!(
            "image payload has {} bytes, expected {}",
            body.len(),
            h * w * c * 8
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()))
        .collect();
    Image::new(h, w, c, data).map_err(|e| Error::Protocol(e.to_string()))
}

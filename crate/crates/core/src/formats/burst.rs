//! Base/offset burst compression for read-only pointer tiles.
//!
//! A burst is sixteen 32-bit words (64 bytes). The encoded form is a header
//! byte followed by the base and sixteen offsets, little-endian:
//!
//! ```text
//! [ base_width << 4 | offset_width ][ base: base_width bytes ][ 16 x offset_width bytes ]
//! ```
//!
//! Widths are drawn from {0, 1, 2, 4} bytes. Word `i` decodes to
//! `base.wrapping_add(offset[i])`.

use serde::{Deserialize, Serialize};

use super::FormatError;

pub const BURST_WORDS: usize = 16;

const WIDTHS: [u8; 4] = [0, 1, 2, 4];

/// The encoder always stores a full 32-bit base.
const ENCODER_BASE_WIDTH: u8 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressedBurst {
    pub base_width: u8,
    pub offset_width: u8,
    pub base: u32,
    pub offsets: [u32; BURST_WORDS],
}

impl CompressedBurst {
    pub fn header(&self) -> u8 {
        (self.base_width << 4) | self.offset_width
    }

    /// Encoded size in bytes.
    pub fn encoded_len(&self) -> usize {
        1 + self.base_width as usize + BURST_WORDS * self.offset_width as usize
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.header());
        out.extend_from_slice(&self.base.to_le_bytes()[..self.base_width as usize]);
        for o in &self.offsets {
            out.extend_from_slice(&o.to_le_bytes()[..self.offset_width as usize]);
        }
        out
    }

    /// Parses one burst from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize), FormatError> {
        let &header = bytes.first().ok_or(FormatError::Truncated {
            needed: 1,
            available: 0,
        })?;
        let base_width = header >> 4;
        let offset_width = header & 0x0F;
        if !WIDTHS.contains(&base_width) || !WIDTHS.contains(&offset_width) {
            return Err(FormatError::BadHeader(header));
        }
        let needed = 1 + base_width as usize + BURST_WORDS * offset_width as usize;
        if bytes.len() < needed {
            return Err(FormatError::Truncated {
                needed,
                available: bytes.len(),
            });
        }
        let read = |at: usize, width: u8| {
            let mut le = [0u8; 4];
            le[..width as usize].copy_from_slice(&bytes[at..at + width as usize]);
            u32::from_le_bytes(le)
        };
        let base = read(1, base_width);
        let mut offsets = [0u32; BURST_WORDS];
        let first = 1 + base_width as usize;
        for (i, o) in offsets.iter_mut().enumerate() {
            *o = read(first + i * offset_width as usize, offset_width);
        }
        Ok((
            Self {
                base_width,
                offset_width,
                base,
                offsets,
            },
            needed,
        ))
    }

    pub fn words(&self) -> [u32; BURST_WORDS] {
        self.offsets.map(|o| self.base.wrapping_add(o))
    }
}

fn width_for(spread: u32) -> u8 {
    match spread {
        0 => 0,
        1..=0xFF => 1,
        0x100..=0xFFFF => 2,
        _ => 4,
    }
}

/// Encodes a burst with base = min(words) and the narrowest offset width
/// that covers max − min.
pub fn compress_burst(words: &[u32; BURST_WORDS]) -> CompressedBurst {
    let base = *words.iter().min().unwrap();
    let max = *words.iter().max().unwrap();
    CompressedBurst {
        base_width: ENCODER_BASE_WIDTH,
        offset_width: width_for(max - base),
        base,
        offsets: words.map(|w| w - base),
    }
}

pub fn decompress_burst(bytes: &[u8]) -> Result<[u32; BURST_WORDS], FormatError> {
    CompressedBurst::from_bytes(bytes).map(|(b, _)| b.words())
}

/// Compresses a tile of words (padded with zeros to a whole burst) into a
/// concatenated byte stream.
pub fn compress_stream(words: &[u32]) -> Vec<u8> {
    let mut out = Vec::new();
    for chunk in words.chunks(BURST_WORDS) {
        let mut burst = [0u32; BURST_WORDS];
        burst[..chunk.len()].copy_from_slice(chunk);
        out.extend(compress_burst(&burst).to_bytes());
    }
    out
}

/// Decodes a concatenated stream of self-describing bursts.
pub fn decompress_stream(mut bytes: &[u8]) -> Result<Vec<u32>, FormatError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (burst, used) = CompressedBurst::from_bytes(bytes)?;
        out.extend(burst.words());
        bytes = &bytes[used..];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_burst_is_five_bytes() {
        let b = compress_burst(&[0x1000; 16]);
        assert_eq!(b.offset_width, 0);
        assert_eq!(b.to_bytes().len(), 5);
        assert_eq!(decompress_burst(&b.to_bytes()).unwrap(), [0x1000; 16]);
    }

    #[test]
    fn small_spread_uses_byte_offsets() {
        let words: [u32; 16] = std::array::from_fn(|i| i as u32);
        let bytes = compress_burst(&words).to_bytes();
        assert_eq!(bytes.len(), 21);
        assert_eq!(bytes[0], 0x41);
        assert_eq!(decompress_burst(&bytes).unwrap(), words);
    }

    #[test]
    fn wide_spread_is_incompressible() {
        let mut words = [7u32; 16];
        words[3] = 7 + 0x1_0000;
        let bytes = compress_burst(&words).to_bytes();
        assert_eq!(bytes.len(), 69);
        assert_eq!(decompress_burst(&bytes).unwrap(), words);
    }

    #[test]
    fn bad_header_is_rejected() {
        assert_eq!(decompress_burst(&[0x43]), Err(FormatError::BadHeader(0x43)));
        assert_eq!(decompress_burst(&[0x30]), Err(FormatError::BadHeader(0x30)));
        assert!(matches!(decompress_burst(&[0x41, 0, 0]), Err(FormatError::Truncated { .. })));
    }

    #[test]
    fn narrow_base_headers_decode() {
        // a hand-built burst with a one-byte base and no offsets
        assert_eq!(decompress_burst(&[0x10, 9]).unwrap(), [9; 16]);
    }

    #[test]
    fn stream_pads_last_burst() {
        let words: Vec<u32> = (0..20).collect();
        let out = decompress_stream(&compress_stream(&words)).unwrap();
        assert_eq!(&out[..20], &words[..]);
        assert_eq!(out.len(), 32);
    }
}

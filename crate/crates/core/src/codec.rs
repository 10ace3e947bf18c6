//! Raw RFC 1951 DEFLATE streams (no zlib or gzip framing).

use thiserror::Error;

/// Compression level used by the compressor ANF.
pub const DEFAULT_LEVEL: u8 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("CORRUPT_STREAM: {0}")]
pub struct CorruptStream(pub String);

pub fn deflate(data: &[u8]) -> Vec<u8> {
    miniz_oxide::deflate::compress_to_vec(data, DEFAULT_LEVEL)
}

pub fn inflate(stream: &[u8]) -> Result<Vec<u8>, CorruptStream> {
    miniz_oxide::inflate::decompress_to_vec(stream).map_err(|e| CorruptStream(format!("{:?}", e.status)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unhex(s: &str) -> Vec<u8> {
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
            .collect()
    }

    #[test]
    fn empty_round_trip() {
        assert_eq!(inflate(&deflate(b"")).unwrap(), b"");
        assert_eq!(inflate(&unhex("0300")).unwrap(), b"");
    }

    #[test]
    fn repetitive_input_compresses_hard() {
        // zlib (level 6) produces 28 bytes for this input; any sane encoder
        // stays far below 200.
        let out = deflate(&[0x61; 10_000]);
        assert!(out.len() < 200, "{}", out.len());
        assert_eq!(inflate(&out).unwrap(), vec![0x61; 10_000]);
    }

    #[test]
    fn reserved_block_type_is_corrupt() {
        // 0xFF: BFINAL=1, BTYPE=11 (reserved). zlib: "invalid block type".
        assert!(inflate(&[0xff, 0xff, 0xff]).is_err());
    }

    #[test]
    fn truncated_stream_is_corrupt() {
        let s = deflate(b"The quick brown fox jumps over the lazy dog, twice: the quick brown fox");
        assert!(inflate(&s[..s.len() / 2]).is_err());
    }
}

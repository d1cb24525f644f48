//! `CMX1` block layout, all integers big-endian:
//!
//! ```text
//! 0..4    magic "CMX1"
//! 4..12   original_length (u64)
//! 12..    tokens, 5 bytes each: offset (u16) | length (u16) | literal (u8)
//! ```

use super::{CodecError, Token, TokenStream};

pub const MAGIC: [u8; 4] = *b"CMX1";
pub const HEADER_LEN: usize = 12;
pub const TOKEN_LEN: usize = 5;

pub fn serialize_tokens(stream: &TokenStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + TOKEN_LEN * stream.tokens.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&stream.original_length.to_be_bytes());
    for token in &stream.tokens {
        out.extend_from_slice(&token.offset.to_be_bytes());
        out.extend_from_slice(&token.length.to_be_bytes());
        out.push(token.literal);
    }
    out
}

pub fn deserialize_tokens(bytes: &[u8]) -> Result<TokenStream, CodecError> {
    if bytes.len() >= MAGIC.len() && bytes[..4] != MAGIC {
        return Err(CodecError::BadMagic { found: bytes[..4].to_vec() });
    }
    if bytes.len() < HEADER_LEN || !(bytes.len() - HEADER_LEN).is_multiple_of(TOKEN_LEN) {
        if bytes.len() < MAGIC.len() && !MAGIC.starts_with(bytes) {
            return Err(CodecError::BadMagic { found: bytes.to_vec() });
        }
        return Err(CodecError::Truncated { len: bytes.len() });
    }
    let original_length = u64::from_be_bytes(bytes[4..12].try_into().expect("8-byte slice"));
    let tokens = bytes[HEADER_LEN..]
        .chunks_exact(TOKEN_LEN)
        .enumerate()
        .map(|(index, c)| {
            let token = Token {
                offset: u16::from_be_bytes([c[0], c[1]]),
                length: u16::from_be_bytes([c[2], c[3]]),
                literal: c[4],
            };
            if token.is_well_formed() {
                Ok(token)
            } else {
                Err(CodecError::TokenInvariant { index, offset: token.offset, length: token.length })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TokenStream { original_length, tokens })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{compress, CodecParams};
    use proptest::prelude::*;

    #[test]
    fn empty_stream_is_header_only() {
        let bytes = serialize_tokens(&TokenStream::empty());
        assert_eq!(bytes, b"CMX1\0\0\0\0\0\0\0\0");
        assert_eq!(deserialize_tokens(&bytes).unwrap(), TokenStream::empty());
    }

    #[test]
    fn single_literal_layout() {
        let stream = TokenStream { original_length: 1, tokens: vec![Token::literal(b'A')] };
        assert_eq!(
            serialize_tokens(&stream),
            [0x43, 0x4D, 0x58, 0x31, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0x41]
        );
    }

    #[test]
    fn bad_magic() {
        let mut bytes = serialize_tokens(&TokenStream::empty());
        bytes[..4].copy_from_slice(b"XMC1");
        assert!(matches!(deserialize_tokens(&bytes), Err(CodecError::BadMagic { .. })));
        assert!(matches!(deserialize_tokens(b"XM"), Err(CodecError::BadMagic { .. })));
    }

    #[test]
    fn truncation() {
        let stream = compress(b"hello hello hello", &CodecParams::default()).unwrap();
        let bytes = serialize_tokens(&stream);
        assert!(matches!(deserialize_tokens(&bytes[..bytes.len() - 2]), Err(CodecError::Truncated { .. })));
        assert!(matches!(deserialize_tokens(&bytes[..7]), Err(CodecError::Truncated { len: 7 })));
        assert!(matches!(deserialize_tokens(b"CM"), Err(CodecError::Truncated { len: 2 })));
        assert!(matches!(deserialize_tokens(b""), Err(CodecError::Truncated { len: 0 })));
    }

    #[test]
    fn rejects_half_reference() {
        let mut bytes = serialize_tokens(&TokenStream { original_length: 1, tokens: vec![Token::literal(b'a')] });
        bytes[15] = 3; // length 3 with offset 0
        assert_eq!(
            deserialize_tokens(&bytes),
            Err(CodecError::TokenInvariant { index: 0, offset: 0, length: 3 })
        );
    }

    fn token() -> impl Strategy<Value = Token> {
        prop_oneof![
            any::<u8>().prop_map(Token::literal),
            (1u16.., 1u16.., any::<u8>()).prop_map(|(o, l, b)| Token::reference(o, l, b)),
        ]
    }

    proptest! {
        #[test]
        fn wire_round_trip(tokens in proptest::collection::vec(token(), 0..200)) {
            let stream = TokenStream { original_length: tokens.iter().map(Token::span).sum(), tokens };
            let bytes = serialize_tokens(&stream);
            prop_assert_eq!(bytes.len(), HEADER_LEN + TOKEN_LEN * stream.tokens.len());
            prop_assert_eq!(deserialize_tokens(&bytes).unwrap(), stream);
        }
    }
}

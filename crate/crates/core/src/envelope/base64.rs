//! Standard-alphabet, padded base64 for carrying binary blocks in XML.

use base64::engine::general_purpose::STANDARD;
use base64::{DecodeError, Engine as _};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Base64Error {
    #[error("invalid base64 character {byte:#04x} at index {index}")]
    InvalidCharacter { index: usize, byte: u8 },
    #[error("bad base64 padding")]
    BadPadding,
}

pub fn encode_base64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn decode_base64(text: &str) -> Result<Vec<u8>, Base64Error> {
    STANDARD.decode(text).map_err(|e| match e {
        DecodeError::InvalidByte(_, b'=') => Base64Error::BadPadding,
        DecodeError::InvalidByte(index, byte) => Base64Error::InvalidCharacter { index, byte },
        DecodeError::InvalidLength(_) | DecodeError::InvalidLastSymbol(_, _) | DecodeError::InvalidPadding => {
            Base64Error::BadPadding
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encodes_reference_vectors() {
        // RFC 4648 section 10
        for (plain, encoded) in [
            ("", ""),
            ("f", "Zg=="),
            ("fo", "Zm8="),
            ("foo", "Zm9v"),
            ("foob", "Zm9vYg=="),
            ("fooba", "Zm9vYmE="),
            ("foobar", "Zm9vYmFy"),
            ("abc", "YWJj"),
        ] {
            assert_eq!(encode_base64(plain.as_bytes()), encoded);
            assert_eq!(decode_base64(encoded).unwrap(), plain.as_bytes());
        }
    }

    #[test]
    fn invalid_character() {
        assert_eq!(decode_base64("Y!Jj"), Err(Base64Error::InvalidCharacter { index: 1, byte: b'!' }));
    }

    #[test]
    fn bad_padding() {
        assert_eq!(decode_base64("Zg="), Err(Base64Error::BadPadding));
        assert_eq!(decode_base64("Zg"), Err(Base64Error::BadPadding));
        assert_eq!(decode_base64("Z==="), Err(Base64Error::BadPadding));
        assert_eq!(decode_base64("Zm9v="), Err(Base64Error::BadPadding));
    }

    proptest! {
        #[test]
        fn round_trip(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
            prop_assert_eq!(decode_base64(&encode_base64(&bytes)).unwrap(), bytes);
        }
    }
}

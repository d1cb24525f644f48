//! Sliding-window dictionary codec.
//!
//! Messages are tokenized into `(offset, length, literal)` triples: `length`
//! bytes copied from `offset` bytes back in the already reconstructed output,
//! followed by one literal byte. Back-references may overlap the bytes they
//! produce, so a run of `n` identical bytes costs one literal plus a handful
//! of tokens.
//!
//! The compressed form travels as a `CMX1` block (see [`serialize_tokens`]).

mod buffer;
mod lz77;
mod wire;

pub use buffer::{BufferError, GrowableBuffer};
pub use lz77::{compare_buffer, compress, compress_reader, decompress, read_buffer, search_buffer};
pub use wire::{deserialize_tokens, serialize_tokens, MAGIC, HEADER_LEN, TOKEN_LEN};

use thiserror::Error;

/// Buffer dimensions for the compressor and decompressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecParams {
    /// Bytes of history searched for back-references.
    pub window_size: usize,
    /// Bytes of pending input considered per token; one of them is always
    /// reserved for the literal, so matches are at most `lookahead_size - 1`.
    pub lookahead_size: usize,
    /// Shortest match the encoder emits as a back-reference.
    pub min_match_len: usize,
    /// Starting capacity of the read and output buffers.
    pub initial_read_capacity: usize,
}

impl Default for CodecParams {
    fn default() -> Self {
        Self {
            window_size: 4096,
            lookahead_size: 16,
            min_match_len: 3,
            initial_read_capacity: 8192,
        }
    }
}

impl CodecParams {
    /// Largest window that still fits the 2-byte offset field on the wire.
    pub const MAX_WINDOW: usize = u16::MAX as usize;
    pub const MAX_LOOKAHEAD: usize = u16::MAX as usize;

    pub fn validate(&self) -> Result<(), CodecError> {
        let fail = |msg: String| Err(CodecError::InvalidParams(msg));
        if self.window_size == 0 || self.window_size > Self::MAX_WINDOW {
            return fail(format!("window_size must be in 1..={}, got {}", Self::MAX_WINDOW, self.window_size));
        }
        if self.lookahead_size == 0 || self.lookahead_size > Self::MAX_LOOKAHEAD {
            return fail(format!(
                "lookahead_size must be in 1..={}, got {}",
                Self::MAX_LOOKAHEAD,
                self.lookahead_size
            ));
        }
        if self.min_match_len < 2 || self.min_match_len > self.lookahead_size {
            return fail(format!(
                "min_match_len must be in 2..=lookahead_size ({}), got {}",
                self.lookahead_size, self.min_match_len
            ));
        }
        if self.initial_read_capacity == 0 {
            return fail("initial_read_capacity must be at least 1".into());
        }
        Ok(())
    }

    /// Longest back-reference the encoder may produce.
    pub fn max_match_len(&self) -> usize {
        self.lookahead_size - 1
    }
}

/// One encoded unit: copy `length` bytes from `offset` back, then emit `literal`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Token {
    pub offset: u16,
    pub length: u16,
    pub literal: u8,
}

impl Token {
    pub const fn literal(byte: u8) -> Self {
        Self { offset: 0, length: 0, literal: byte }
    }

    pub const fn reference(offset: u16, length: u16, literal: u8) -> Self {
        Self { offset, length, literal }
    }

    /// `offset == 0` exactly when `length == 0`.
    pub fn is_well_formed(&self) -> bool {
        (self.offset == 0) == (self.length == 0)
    }

    /// Bytes of output this token produces.
    pub fn span(&self) -> u64 {
        u64::from(self.length) + 1
    }

    /// Whether the encoder could have produced this token under `params`.
    pub fn fits(&self, params: &CodecParams) -> bool {
        self.is_well_formed()
            && usize::from(self.offset) <= params.window_size
            && usize::from(self.length) <= params.max_match_len()
    }
}

/// A compressed message: its original length and the tokens that rebuild it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream {
    pub original_length: u64,
    pub tokens: Vec<Token>,
}

impl TokenStream {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Sum of token spans; equals `original_length` for any encoder output.
    pub fn decoded_length(&self) -> u64 {
        self.tokens.iter().map(Token::span).sum()
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("invalid codec parameters: {0}")]
    InvalidParams(String),
    #[error("malformed stream: token {index} references {offset} bytes back but only {available} are reconstructed")]
    MalformedStream { index: usize, offset: u16, available: u64 },
    #[error("malformed stream: token {index} has offset {offset} with length {length}")]
    TokenInvariant { index: usize, offset: u16, length: u16 },
    #[error("length mismatch: header says {expected} bytes, tokens rebuild {actual}")]
    LengthMismatch { expected: u64, actual: u64 },
    #[error("bad magic: expected CMX1, found {found:02x?}")]
    BadMagic { found: Vec<u8> },
    #[error("truncated stream: {len} bytes is not a header plus whole tokens")]
    Truncated { len: usize },
    #[error("buffer: {0}")]
    Buffer(#[from] BufferError),
    #[error("input error: {0}")]
    Input(String),
}

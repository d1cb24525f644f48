use std::io::{ErrorKind, Read};

use super::{CodecError, CodecParams, GrowableBuffer, Token, TokenStream};

const HASH_BITS: u32 = 15;
const NIL: u32 = u32::MAX;

/// Finds the longest prefix of `lookahead` that also starts somewhere in
/// `window`, scanning every offset.
///
/// The match may run past the end of `window` into `lookahead` itself
/// (offset smaller than length). Ties go to the smallest offset. The last
/// lookahead byte is never matched, it is left for the token literal.
/// Returns `(0, 0)` when nothing of at least `min_match_len` is found.
pub fn search_buffer(window: &[u8], lookahead: &[u8], params: &CodecParams) -> (usize, usize) {
    let window = &window[window.len().saturating_sub(params.window_size)..];
    let lookahead = &lookahead[..lookahead.len().min(params.lookahead_size)];
    if lookahead.is_empty() {
        return (0, 0);
    }
    let max_len = (lookahead.len() - 1).min(params.max_match_len());
    let wlen = window.len();
    let byte_at = |i: usize| if i < wlen { window[i] } else { lookahead[i - wlen] };

    let mut best = (0, 0);
    for offset in 1..=wlen {
        let start = wlen - offset;
        let len = (0..max_len).take_while(|&j| byte_at(start + j) == lookahead[j]).count();
        if len > best.1 {
            best = (offset, len);
            if len == max_len {
                break;
            }
        }
    }
    if best.1 < params.min_match_len {
        (0, 0)
    } else {
        best
    }
}

/// Checks that `token` can be applied after `reconstructed_fill` bytes of
/// output: it must be well formed and must not reach before the start.
pub fn compare_buffer(reconstructed_fill: u64, token: &Token) -> bool {
    token.is_well_formed() && u64::from(token.offset) <= reconstructed_fill
}

/// Refills `lookahead` from `source` until it holds `lookahead_size` bytes
/// or the source is exhausted. Returns the number of bytes read.
pub fn read_buffer<R: Read + ?Sized>(
    source: &mut R,
    lookahead: &mut GrowableBuffer,
    params: &CodecParams,
) -> Result<usize, CodecError> {
    let mut chunk = [0u8; 256];
    let mut total = 0;
    while lookahead.fill() < params.lookahead_size {
        let want = (params.lookahead_size - lookahead.fill()).min(chunk.len());
        match source.read(&mut chunk[..want]) {
            Ok(0) => break,
            Ok(n) => {
                lookahead.append_buffer(&chunk[..n])?;
                total += n;
            }
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => return Err(CodecError::Input(e.to_string())),
        }
    }
    Ok(total)
}

/// Greedy left-to-right tokenization of `data`.
///
/// At every position the longest back-reference (smallest offset on ties)
/// is taken, followed by the next byte as literal. A match never swallows
/// the final input byte, so the stream always ends on a literal.
///
/// Produces exactly the tokens a full scan with [`search_buffer`] at every
/// position would, using hash chains over the first bytes of each position
/// to skip offsets that cannot match.
pub fn compress(data: &[u8], params: &CodecParams) -> Result<TokenStream, CodecError> {
    params.validate()?;
    let n = data.len();
    let mut tokens = Vec::with_capacity(n / 4 + 1);
    let mut chains = HashChains::new(n, params.min_match_len.min(3));

    let mut pos = 0;
    while pos < n {
        let remaining = n - pos;
        let max_len = (remaining - 1).min(params.max_match_len());
        let (offset, length) = if max_len >= params.min_match_len {
            chains.longest_match(data, pos, max_len, params)
        } else {
            (0, 0)
        };
        let literal = data[pos + length];
        tokens.push(Token { offset: offset as u16, length: length as u16, literal });
        let next = pos + length + 1;
        for p in pos..next {
            chains.insert(data, p);
        }
        pos = next;
    }

    Ok(TokenStream { original_length: n as u64, tokens })
}

/// Reads `source` to the end through the look-ahead buffer and compresses it.
pub fn compress_reader<R: Read + ?Sized>(source: &mut R, params: &CodecParams) -> Result<TokenStream, CodecError> {
    params.validate()?;
    let mut message = GrowableBuffer::with_capacity(params.initial_read_capacity)?;
    let mut lookahead = GrowableBuffer::with_capacity(params.lookahead_size)?;
    loop {
        if read_buffer(source, &mut lookahead, params)? == 0 {
            break;
        }
        message.append_buffer(lookahead.as_slice())?;
        lookahead.clear();
    }
    compress(message.as_slice(), params)
}

/// Rebuilds the original bytes from `stream`.
pub fn decompress(stream: &TokenStream, params: &CodecParams) -> Result<Vec<u8>, CodecError> {
    params.validate()?;
    let mut out = GrowableBuffer::with_capacity(params.initial_read_capacity)?;
    for (index, token) in stream.tokens.iter().enumerate() {
        let fill = out.fill() as u64;
        if !token.is_well_formed() {
            return Err(CodecError::TokenInvariant { index, offset: token.offset, length: token.length });
        }
        if !compare_buffer(fill, token) {
            return Err(CodecError::MalformedStream { index, offset: token.offset, available: fill });
        }
        if fill + token.span() > stream.original_length {
            return Err(CodecError::LengthMismatch {
                expected: stream.original_length,
                actual: stream.decoded_length(),
            });
        }
        if token.length > 0 {
            out.copy_back(usize::from(token.offset), usize::from(token.length))?;
        }
        out.push(token.literal)?;
    }
    let actual = out.fill() as u64;
    if actual != stream.original_length {
        return Err(CodecError::LengthMismatch { expected: stream.original_length, actual });
    }
    Ok(out.into_vec())
}

struct HashChains {
    key_len: usize,
    head: Vec<u32>,
    prev: Vec<u32>,
}

impl HashChains {
    fn new(n: usize, key_len: usize) -> Self {
        Self { key_len, head: vec![NIL; 1 << HASH_BITS], prev: vec![NIL; n] }
    }

    fn hash(&self, data: &[u8], pos: usize) -> usize {
        let mut h: u32 = 0;
        for &b in &data[pos..pos + self.key_len] {
            h = h.wrapping_mul(0x9E37_79B1).wrapping_add(u32::from(b) + 1);
        }
        (h.wrapping_mul(0x9E37_79B1) >> (32 - HASH_BITS)) as usize
    }

    fn insert(&mut self, data: &[u8], pos: usize) {
        if pos + self.key_len > data.len() {
            return;
        }
        let h = self.hash(data, pos);
        self.prev[pos] = self.head[h];
        self.head[h] = pos as u32;
    }

    /// Walks candidates newest first, i.e. in increasing offset order.
    fn longest_match(&self, data: &[u8], pos: usize, max_len: usize, params: &CodecParams) -> (usize, usize) {
        let mut best = (0, 0);
        let mut cand = self.head[self.hash(data, pos)];
        while cand != NIL {
            let c = cand as usize;
            let offset = pos - c;
            if offset > params.window_size {
                break;
            }
            let len = data[c..c + max_len]
                .iter()
                .zip(&data[pos..pos + max_len])
                .take_while(|(a, b)| a == b)
                .count();
            if len > best.1 {
                best = (offset, len);
                if len == max_len {
                    break;
                }
            }
            cand = self.prev[c];
        }
        if best.1 < params.min_match_len {
            (0, 0)
        } else {
            best
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> CodecParams {
        CodecParams::default()
    }

    #[test]
    fn search_empty_window() {
        assert_eq!(search_buffer(b"", b"a", &p()), (0, 0));
    }

    #[test]
    fn search_prefers_smallest_offset() {
        let params = CodecParams { min_match_len: 2, ..p() };
        // "ab" sits 2 and 5 bytes back.
        assert_eq!(search_buffer(b"abcab", b"abx", &params), (2, 2));
    }

    #[test]
    fn search_overlapping_run() {
        assert_eq!(search_buffer(b"a", b"aaaa", &p()), (1, 3));
    }

    #[test]
    fn search_below_min_match() {
        assert_eq!(search_buffer(b"abz", b"abq", &p()), (0, 0));
    }

    #[test]
    fn search_respects_window_size() {
        let params = CodecParams { window_size: 3, ..p() };
        // "xyz" is 6 back, outside a 3-byte window.
        assert_eq!(search_buffer(b"xyz123", b"xyz!", &params), (0, 0));
    }

    #[test]
    fn compress_empty() {
        assert_eq!(compress(b"", &p()).unwrap(), TokenStream { original_length: 0, tokens: vec![] });
    }

    #[test]
    fn compress_single_byte() {
        assert_eq!(compress(b"A", &p()).unwrap().tokens, vec![Token::literal(b'A')]);
    }

    #[test]
    fn compress_run_reserves_final_literal() {
        let stream = compress(b"AAAAAAAA", &p()).unwrap();
        assert_eq!(stream.tokens, vec![Token::literal(b'A'), Token::reference(1, 6, b'A')]);
        assert_eq!(stream.original_length, 8);
    }

    #[test]
    fn compress_long_run_caps_length() {
        let stream = compress(&[9u8; 40], &p()).unwrap();
        assert!(stream.tokens.iter().all(|t| usize::from(t.length) <= 15));
        assert_eq!(stream.decoded_length(), 40);
    }

    #[test]
    fn compress_rejects_bad_params() {
        let bad = CodecParams { min_match_len: 1, ..p() };
        assert!(matches!(compress(b"abc", &bad), Err(CodecError::InvalidParams(_))));
    }

    #[test]
    fn compare_buffer_cases() {
        assert!(compare_buffer(0, &Token::literal(b'a')));
        assert!(!compare_buffer(3, &Token::reference(4, 2, b'b')));
        assert!(compare_buffer(3, &Token::reference(3, 10, b'b')));
        assert!(!compare_buffer(10, &Token::reference(0, 3, b'b')));
    }

    #[test]
    fn decompress_empty() {
        assert_eq!(decompress(&TokenStream::empty(), &p()).unwrap(), b"");
    }

    #[test]
    fn decompress_run() {
        let stream = TokenStream {
            original_length: 8,
            tokens: vec![Token::literal(b'A'), Token::reference(1, 6, b'A')],
        };
        assert_eq!(decompress(&stream, &p()).unwrap(), b"AAAAAAAA");
    }

    #[test]
    fn decompress_overlap_beyond_fill() {
        // (3, 10) after three bytes repeats them cyclically.
        let stream = TokenStream {
            original_length: 14,
            tokens: vec![Token::literal(b'x'), Token::literal(b'y'), Token::literal(b'z'), Token::reference(3, 10, b'b')],
        };
        assert_eq!(decompress(&stream, &p()).unwrap(), b"xyzxyzxyzxyzxb");
    }

    #[test]
    fn decompress_reference_before_start() {
        let stream = TokenStream { original_length: 3, tokens: vec![Token::reference(5, 2, b'x')] };
        assert_eq!(
            decompress(&stream, &p()),
            Err(CodecError::MalformedStream { index: 0, offset: 5, available: 0 })
        );
    }

    #[test]
    fn decompress_length_mismatch() {
        let short = TokenStream { original_length: 5, tokens: vec![Token::literal(b'a')] };
        assert_eq!(decompress(&short, &p()), Err(CodecError::LengthMismatch { expected: 5, actual: 1 }));
        let long = TokenStream { original_length: 1, tokens: vec![Token::literal(b'a'), Token::literal(b'b')] };
        assert!(matches!(decompress(&long, &p()), Err(CodecError::LengthMismatch { expected: 1, .. })));
    }

    #[test]
    fn decompress_small_initial_capacity_grows() {
        let params = CodecParams { initial_read_capacity: 1, ..p() };
        let data = b"the quick brown fox jumps over the quick brown dog".repeat(20);
        let stream = compress(&data, &params).unwrap();
        assert_eq!(decompress(&stream, &params).unwrap(), data);
    }

    #[test]
    fn read_buffer_fills_to_lookahead() {
        let params = CodecParams { lookahead_size: 4, min_match_len: 2, ..p() };
        let mut src: &[u8] = b"abcdef";
        let mut la = GrowableBuffer::with_capacity(4).unwrap();
        assert_eq!(read_buffer(&mut src, &mut la, &params).unwrap(), 4);
        assert_eq!(la.as_slice(), b"abcd");
    }

    #[test]
    fn read_buffer_at_eof_is_noop() {
        let mut src: &[u8] = b"";
        let mut la = GrowableBuffer::with_capacity(16).unwrap();
        la.append_buffer(b"xy").unwrap();
        assert_eq!(read_buffer(&mut src, &mut la, &p()).unwrap(), 0);
        assert_eq!(la.as_slice(), b"xy");
    }

    #[test]
    fn read_buffer_short_source() {
        let mut src: &[u8] = b"abc";
        let mut la = GrowableBuffer::with_capacity(16).unwrap();
        read_buffer(&mut src, &mut la, &p()).unwrap();
        assert_eq!(la.as_slice(), b"abc");
        assert_eq!(la.fill(), 3);
    }

    #[test]
    fn read_buffer_propagates_errors() {
        struct Broken;
        impl Read for Broken {
            fn read(&mut self, _: &mut [u8]) -> std::io::Result<usize> {
                Err(std::io::Error::other("disk on fire"))
            }
        }
        let mut la = GrowableBuffer::with_capacity(16).unwrap();
        assert!(matches!(read_buffer(&mut Broken, &mut la, &p()), Err(CodecError::Input(_))));
    }

    #[test]
    fn compress_reader_matches_compress() {
        let data = b"<rec a=\"1\"/><rec a=\"2\"/><rec a=\"3\"/>".repeat(50);
        let params = CodecParams { initial_read_capacity: 16, ..p() };
        let mut src: &[u8] = &data;
        assert_eq!(compress_reader(&mut src, &params).unwrap(), compress(&data, &params).unwrap());
    }
}

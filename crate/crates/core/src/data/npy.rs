//! Minimal reader and writer for the `.npy` array format (versions 1.0 and 2.0).

use crate::error::{Error, NpyError, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NpyData {
    U8(Vec<u8>),
    I64(Vec<i64>),
    U64(Vec<u64>),
}

impl NpyData {
    fn descr(&self) -> &'static str {
        match self {
            NpyData::U8(_) => "|u1",
            NpyData::I64(_) => "<i8",
            NpyData::U64(_) => "<u8",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            NpyData::U8(v) => v.len(),
            NpyData::I64(v) => v.len(),
            NpyData::U64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    /// Values as non-negative class indices.
    pub fn to_labels(&self) -> Result<Vec<usize>> {
        let bad = |v: i128| Error::Dataset(format!("negative or oversized label {v}"));
        match &self.data {
            NpyData::U8(v) => Ok(v.iter().map(|&x| usize::from(x)).collect()),
            NpyData::I64(v) => v.iter().map(|&x| usize::try_from(x).map_err(|_| bad(x.into()))).collect(),
            NpyData::U64(v) => v.iter().map(|&x| usize::try_from(x).map_err(|_| bad(x.into()))).collect(),
        }
    }
}

struct Header {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

/// Parses a `.npy` byte buffer. Supports dtypes `|u1`, `<i8` and `<u8` in C order.
pub fn read_npy(bytes: &[u8]) -> Result<NpyArray, NpyError> {
    if bytes.len() < 8 || &bytes[..6] != MAGIC {
        return Err(NpyError::BadMagic);
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, header_start) = match major {
        1 => {
            let raw = bytes.get(8..10).ok_or(NpyError::Truncated { expected: 10, found: bytes.len() })?;
            (usize::from(u16::from_le_bytes([raw[0], raw[1]])), 10)
        }
        2 => {
            let raw = bytes.get(8..12).ok_or(NpyError::Truncated { expected: 12, found: bytes.len() })?;
            (u32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]) as usize, 12)
        }
        _ => return Err(NpyError::UnsupportedVersion { major, minor }),
    };
    let data_start = header_start + header_len;
    let header_bytes = bytes
        .get(header_start..data_start)
        .ok_or(NpyError::Truncated { expected: data_start, found: bytes.len() })?;
    let text = std::str::from_utf8(header_bytes).map_err(|_| NpyError::BadHeader("header is not UTF-8".into()))?;
    let header = parse_header(text)?;
    if header.fortran_order {
        return Err(NpyError::UnsupportedLayout);
    }
    let count: usize = header.shape.iter().product();
    let payload = &bytes[data_start..];
    let item = match header.descr.as_str() {
        "|u1" | "<u1" => 1,
        "<i8" | "<u8" => 8,
        other => return Err(NpyError::UnsupportedDtype(other.to_string())),
    };
    let expected = count * item;
    if payload.len() < expected {
        return Err(NpyError::Truncated { expected, found: payload.len() });
    }
    let payload = &payload[..expected];
    let data = match header.descr.as_str() {
        "<i8" => NpyData::I64(payload.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect()),
        "<u8" => NpyData::U64(payload.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect()),
        _ => NpyData::U8(payload.to_vec()),
    };
    Ok(NpyArray { shape: header.shape, data })
}

/// Serializes an array as a version 1.0 `.npy` file.
pub fn write_npy(array: &NpyArray) -> Vec<u8> {
    assert_eq!(array.shape.iter().product::<usize>(), array.data.len(), "shape does not match data");
    let shape = match array.shape.as_slice() {
        [n] => format!("({n},)"),
        dims => format!("({})", dims.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")),
    };
    let mut header = format!("{{'descr': '{}', 'fortran_order': False, 'shape': {shape}, }}", array.data.descr());
    // pad so the payload starts on a 64-byte boundary; the header ends in '\n'
    let unpadded = MAGIC.len() + 4 + header.len() + 1;
    header.push_str(&" ".repeat(unpadded.next_multiple_of(64) - unpadded));
    header.push('\n');

    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len() + array.data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match &array.data {
        NpyData::U8(v) => out.extend_from_slice(v),
        NpyData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NpyData::U64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

/// Tokenizer over the Python dict literal that forms the header.
struct Cursor<'a> {
    rest: &'a str,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start();
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if let Some(r) = self.rest.strip_prefix(c) {
            self.rest = r;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), NpyError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(NpyError::BadHeader(format!("expected {c:?} at {:?}", truncate(self.rest))))
        }
    }

    fn string(&mut self) -> Result<&'a str, NpyError> {
        self.skip_ws();
        let quote = self.rest.chars().next().filter(|c| *c == '\'' || *c == '"');
        let quote = quote.ok_or_else(|| NpyError::BadHeader(format!("expected string at {:?}", truncate(self.rest))))?;
        let body = &self.rest[1..];
        let end = body.find(quote).ok_or_else(|| NpyError::BadHeader("unterminated string".into()))?;
        self.rest = &body[end + 1..];
        Ok(&body[..end])
    }

    fn word(&mut self) -> &'a str {
        self.skip_ws();
        let end = self.rest.find(|c: char| !c.is_ascii_alphanumeric()).unwrap_or(self.rest.len());
        let (w, r) = self.rest.split_at(end);
        self.rest = r;
        w
    }

    fn shape(&mut self) -> Result<Vec<usize>, NpyError> {
        self.expect('(')?;
        let mut dims = Vec::new();
        loop {
            if self.eat(')') {
                return Ok(dims);
            }
            let w = self.word();
            let d = w.trim_end_matches('L').parse().map_err(|_| NpyError::BadHeader(format!("bad dimension {w:?}")))?;
            dims.push(d);
            if !self.eat(',') {
                self.expect(')')?;
                return Ok(dims);
            }
        }
    }
}

fn truncate(s: &str) -> &str {
    &s[..s.char_indices().nth(20).map_or(s.len(), |(i, _)| i)]
}

fn parse_header(text: &str) -> Result<Header, NpyError> {
    let mut cur = Cursor { rest: text };
    let (mut descr, mut fortran, mut shape) = (None, None, None);
    cur.expect('{')?;
    while !cur.eat('}') {
        let key = cur.string()?;
        cur.expect(':')?;
        match key {
            "descr" => descr = Some(cur.string()?.to_string()),
            "fortran_order" => {
                fortran = Some(match cur.word() {
                    "True" => true,
                    "False" => false,
                    w => return Err(NpyError::BadHeader(format!("fortran_order = {w:?}"))),
                })
            }
            "shape" => shape = Some(cur.shape()?),
            other => return Err(NpyError::BadHeader(format!("unexpected key {other:?}"))),
        }
        if !cur.eat(',') {
            cur.expect('}')?;
            break;
        }
    }
    let missing = |k: &str| NpyError::BadHeader(format!("missing key {k:?}"));
    Ok(Header {
        descr: descr.ok_or_else(|| missing("descr"))?,
        fortran_order: fortran.ok_or_else(|| missing("fortran_order"))?,
        shape: shape.ok_or_else(|| missing("shape"))?,
    })
}

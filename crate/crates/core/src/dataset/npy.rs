//! Reader and writer for the NPY container (version 1.0 on write).
//!
//! Only little-endian `f32`/`f64` payloads in C order are supported. One- and
//! two-dimensional arrays are read; a 1-D array of length `n` becomes `n x 1`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::matrix::Matrix;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum NpyError {
    #[error("file does not start with the NPY magic bytes")]
    BadMagic,
    #[error("unsupported dtype {0:?} (only '<f4' and '<f8' are accepted)")]
    UnsupportedDtype(String),
    #[error("fortran-ordered arrays are not supported")]
    FortranOrderUnsupported,
    #[error("malformed NPY header: {0}")]
    HeaderParseError(String),
    #[error("payload holds {got} bytes, shape requires {expected}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error("matrix contains values not representable as finite {0:?}")]
    NonFinite(Dtype),
    #[error(transparent)]
    IoError(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// A decoded tensor: shape, stored dtype, and the values widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: (usize, usize),
    pub dtype: Dtype,
    pub matrix: Matrix,
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, NpyError> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor, NpyError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(NpyError::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(NpyError::HeaderParseError("missing version bytes".into()));
    }
    let major = bytes[6];
    let (header_len, header_start) = match major {
        1 => {
            let b = bytes.get(8..10).ok_or_else(|| NpyError::HeaderParseError("missing header length".into()))?;
            (u16::from_le_bytes([b[0], b[1]]) as usize, 10)
        }
        2 | 3 => {
            let b = bytes.get(8..12).ok_or_else(|| NpyError::HeaderParseError("missing header length".into()))?;
            (u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize, 12)
        }
        v => return Err(NpyError::HeaderParseError(format!("unknown format version {v}"))),
    };
    let header_end = header_start + header_len;
    let header = bytes
        .get(header_start..header_end)
        .ok_or_else(|| NpyError::HeaderParseError("header extends past end of file".into()))?;
    let header = std::str::from_utf8(header).map_err(|_| NpyError::HeaderParseError("header is not valid text".into()))?;
    let parsed = parse_header(header)?;

    let (rows, cols) = parsed.shape;
    let expected = rows * cols * parsed.dtype.size();
    let payload = &bytes[header_end..];
    if payload.len() < expected {
        return Err(NpyError::TruncatedPayload { expected, got: payload.len() });
    }
    let data: Vec<f64> = match parsed.dtype {
        Dtype::F32 => payload[..expected]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Dtype::F64 => payload[..expected]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect(),
    };
    let matrix = Matrix::from_vec(rows, cols, data).expect("length checked above");
    Ok(Tensor { shape: (rows, cols), dtype: parsed.dtype, matrix })
}

struct Header {
    dtype: Dtype,
    shape: (usize, usize),
}

/// Parses the Python dict literal, e.g.
/// `{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }`.
fn parse_header(text: &str) -> Result<Header, NpyError> {
    let bad = |m: &str| NpyError::HeaderParseError(m.to_string());
    let body = text.trim().strip_prefix('{').and_then(|s| s.strip_suffix('}')).ok_or_else(|| bad("header is not a dict literal"))?;

    let value_after = |key: &str| -> Result<&str, NpyError> {
        let needle_sq = format!("'{key}'");
        let needle_dq = format!("\"{key}\"");
        let pos = body.find(&needle_sq).or_else(|| body.find(&needle_dq)).ok_or_else(|| bad(&format!("missing key {key}")))?;
        let rest = &body[pos + needle_sq.len()..];
        let rest = rest.trim_start().strip_prefix(':').ok_or_else(|| bad(&format!("missing ':' after {key}")))?;
        Ok(rest.trim_start())
    };

    let descr_raw = value_after("descr")?;
    let quote = descr_raw.chars().next().ok_or_else(|| bad("empty descr"))?;
    if quote != '\'' && quote != '"' {
        return Err(bad("descr is not a string"));
    }
    let descr_end = descr_raw[1..].find(quote).ok_or_else(|| bad("unterminated descr"))?;
    let descr = &descr_raw[1..1 + descr_end];
    let dtype = match descr {
        "<f4" => Dtype::F32,
        "<f8" => Dtype::F64,
        other => return Err(NpyError::UnsupportedDtype(other.to_string())),
    };

    let fortran = value_after("fortran_order")?;
    if fortran.starts_with("True") {
        return Err(NpyError::FortranOrderUnsupported);
    } else if !fortran.starts_with("False") {
        return Err(bad("fortran_order is not a boolean"));
    }

    let shape_raw = value_after("shape")?;
    let shape_raw = shape_raw.strip_prefix('(').ok_or_else(|| bad("shape is not a tuple"))?;
    let close = shape_raw.find(')').ok_or_else(|| bad("unterminated shape tuple"))?;
    let dims: Vec<usize> = shape_raw[..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| bad(&format!("bad shape entry {s:?}"))))
        .collect::<Result<_, _>>()?;
    let shape = match dims.as_slice() {
        [n] => (*n, 1),
        [r, c] => (*r, *c),
        _ => return Err(bad(&format!("expected a 1-D or 2-D array, got {} dimensions", dims.len()))),
    };
    Ok(Header { dtype, shape })
}

/// NPY v1.0 preamble and header block for an array of the given shape.
/// The block length is a multiple of 64 and ends with a newline.
pub fn encode_header(rows: usize, cols: usize, dtype: Dtype) -> Result<Vec<u8>, NpyError> {
    let dict = format!("{{'descr': '{}', 'fortran_order': False, 'shape': ({}, {}), }}", dtype.descr(), rows, cols);
    // magic(6) + version(2) + header_len(2) + dict + padding + '\n'
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    let header_len = dict.len() + pad + 1;
    let header_len_u16 = u16::try_from(header_len).map_err(|_| NpyError::HeaderParseError("header too long for version 1.0".into()))?;

    let mut out = Vec::with_capacity(unpadded + pad);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&header_len_u16.to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', pad));
    out.push(b'\n');
    Ok(out)
}

/// Serializes `matrix` as an NPY v1.0 byte stream.
pub fn encode(matrix: &Matrix, dtype: Dtype) -> Result<Vec<u8>, NpyError> {
    if !matrix.is_finite() {
        return Err(NpyError::NonFinite(dtype));
    }
    let (rows, cols) = matrix.shape();
    let mut out = encode_header(rows, cols, dtype)?;
    out.reserve(rows * cols * dtype.size());
    match dtype {
        Dtype::F32 => {
            for &v in matrix.as_slice() {
                let f = v as f32;
                if !f.is_finite() {
                    return Err(NpyError::NonFinite(dtype));
                }
                out.extend_from_slice(&f.to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in matrix.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn write_tensor(matrix: &Matrix, path: impl AsRef<Path>, dtype: Dtype) -> Result<(), NpyError> {
    let bytes = encode(matrix, dtype)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

//! VHT1 matrix container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content                                         |
//! |-------|-------------------------------------------------|
//! | 4     | magic `VHT1`                                    |
//! | 4     | version, u32 = 1                                |
//! | 1     | dtype, u8: 0 = real f64, 1 = complex128         |
//! | 4     | rows, u32                                       |
//! | 4     | cols, u32                                       |
//! | ...   | row-major payload (complex: re, im interleaved) |
//! | 4     | metadata length, u32                            |
//! | ...   | UTF-8 JSON metadata                             |

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde_json::Value;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"VHT1";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 4;

#[derive(Debug, Error)]
pub enum VhtError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u32),
    #[error("unknown dtype {0}")]
    BadDtype(u8),
    #[error("truncated file: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("{0} trailing bytes after metadata")]
    TrailingBytes(usize),
    #[error("metadata is not valid JSON: {0}")]
    Metadata(String),
    #[error("dimension {0} does not fit in u32")]
    TooLarge(usize),
    #[error("expected {expected} data, found {found}")]
    Dtype { expected: &'static str, found: &'static str },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl VhtError {
    /// Stable numeric code, used as the CLI exit status.
    pub fn code(&self) -> u8 {
        match self {
            VhtError::BadMagic(_) => 10,
            VhtError::BadVersion(_) => 11,
            VhtError::BadDtype(_) => 12,
            VhtError::Truncated { .. } => 13,
            VhtError::TrailingBytes(_) => 14,
            VhtError::Metadata(_) => 15,
            VhtError::TooLarge(_) => 16,
            VhtError::Dtype { .. } => 17,
            VhtError::Io(_) => 18,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VhtData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl VhtData {
    fn dtype(&self) -> u8 {
        match self {
            VhtData::Real(_) => 0,
            VhtData::Complex(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            VhtData::Real(_) => "real",
            VhtData::Complex(_) => "complex",
        }
    }

    fn len(&self) -> usize {
        match self {
            VhtData::Real(v) => v.len(),
            VhtData::Complex(v) => v.len(),
        }
    }
}

/// A row-major matrix with a JSON metadata blob.
#[derive(Clone, Debug, PartialEq)]
pub struct VhtMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: VhtData,
    pub metadata: Value,
}

impl VhtMatrix {
    pub fn real(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "payload length must equal rows*cols");
        Self { rows, cols, data: VhtData::Real(data), metadata: Value::Object(Default::default()) }
    }

    pub fn complex(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(rows * cols, data.len(), "payload length must equal rows*cols");
        Self { rows, cols, data: VhtData::Complex(data), metadata: Value::Object(Default::default()) }
    }

    pub fn with_metadata(mut self, metadata: Value) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn from_real_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self::real(m.nrows(), m.ncols(), data)
    }

    pub fn from_complex_matrix(m: &DMatrix<Complex64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self::complex(m.nrows(), m.ncols(), data)
    }

    pub fn to_real_matrix(&self) -> Result<DMatrix<f64>, VhtError> {
        match &self.data {
            VhtData::Real(v) => Ok(DMatrix::from_row_slice(self.rows, self.cols, v)),
            other => Err(VhtError::Dtype { expected: "real", found: other.kind() }),
        }
    }

    pub fn to_complex_matrix(&self) -> Result<DMatrix<Complex64>, VhtError> {
        match &self.data {
            VhtData::Complex(v) => Ok(DMatrix::from_row_slice(self.rows, self.cols, v)),
            other => Err(VhtError::Dtype { expected: "complex", found: other.kind() }),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, VhtError> {
        let rows = u32::try_from(self.rows).map_err(|_| VhtError::TooLarge(self.rows))?;
        let cols = u32::try_from(self.cols).map_err(|_| VhtError::TooLarge(self.cols))?;
        let meta = serde_json::to_vec(&self.metadata).map_err(|e| VhtError::Metadata(e.to_string()))?;
        let meta_len = u32::try_from(meta.len()).map_err(|_| VhtError::TooLarge(meta.len()))?;
        let width = if self.data.dtype() == 0 { 8 } else { 16 };
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * width + 4 + meta.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.data.dtype());
        out.extend_from_slice(&rows.to_le_bytes());
        out.extend_from_slice(&cols.to_le_bytes());
        match &self.data {
            VhtData::Real(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            VhtData::Complex(v) => v.iter().for_each(|z| {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }),
        }
        out.extend_from_slice(&meta_len.to_le_bytes());
        out.extend_from_slice(&meta);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, VhtError> {
        let need = |needed: usize| {
            if bytes.len() < needed {
                Err(VhtError::Truncated { needed, found: bytes.len() })
            } else {
                Ok(())
            }
        };
        need(4)?;
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if &magic != MAGIC {
            return Err(VhtError::BadMagic(magic));
        }
        need(HEADER_LEN)?;
        let version = read_u32(&bytes[4..8]);
        if version != VERSION {
            return Err(VhtError::BadVersion(version));
        }
        let dtype = bytes[8];
        let width = match dtype {
            0 => 8,
            1 => 16,
            d => return Err(VhtError::BadDtype(d)),
        };
        let rows = read_u32(&bytes[9..13]) as usize;
        let cols = read_u32(&bytes[13..17]) as usize;
        let count = rows.checked_mul(cols).ok_or(VhtError::TooLarge(usize::MAX))?;
        let payload_end = HEADER_LEN + count * width;
        need(payload_end + 4)?;
        let payload = &bytes[HEADER_LEN..payload_end];
        let data = if dtype == 0 {
            VhtData::Real(payload.chunks_exact(8).map(read_f64).collect())
        } else {
            VhtData::Complex(payload.chunks_exact(16).map(|c| Complex64::new(read_f64(&c[..8]), read_f64(&c[8..]))).collect())
        };
        let meta_len = read_u32(&bytes[payload_end..payload_end + 4]) as usize;
        let meta_end = payload_end + 4 + meta_len;
        need(meta_end)?;
        if bytes.len() > meta_end {
            return Err(VhtError::TrailingBytes(bytes.len() - meta_end));
        }
        let metadata = if meta_len == 0 {
            Value::Null
        } else {
            serde_json::from_slice(&bytes[payload_end + 4..meta_end]).map_err(|e| VhtError::Metadata(e.to_string()))?
        };
        Ok(Self { rows, cols, data, metadata })
    }
}

fn read_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b[..4].try_into().unwrap())
}

fn read_f64(b: &[u8]) -> f64 {
    f64::from_le_bytes(b[..8].try_into().unwrap())
}

pub fn write(path: impl AsRef<Path>, m: &VhtMatrix) -> Result<(), VhtError> {
    fs::write(path, m.encode()?)?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<VhtMatrix, VhtError> {
    VhtMatrix::decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn empty_matrix_round_trips() {
        let m = VhtMatrix::real(0, 0, vec![]);
        let back = VhtMatrix::decode(&m.encode().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn header_is_bit_exact() {
        let m = VhtMatrix::real(1, 2, vec![1.0, -2.0]).with_metadata(json!({"a": 1}));
        let b = m.encode().unwrap();
        assert_eq!(&b[0..4], b"VHT1");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(b[8], 0);
        assert_eq!(&b[9..13], &[1, 0, 0, 0]);
        assert_eq!(&b[13..17], &[2, 0, 0, 0]);
        assert_eq!(&b[17..25], &1.0f64.to_le_bytes());
        assert_eq!(&b[25..33], &(-2.0f64).to_le_bytes());
        assert_eq!(&b[33..37], &7u32.to_le_bytes());
        assert_eq!(&b[37..], br#"{"a":1}"#);
    }

    #[test]
    fn distinct_errors() {
        let good = VhtMatrix::complex(2, 1, vec![Complex64::new(1.0, 2.0); 2]).encode().unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(VhtMatrix::decode(&bad_magic), Err(VhtError::BadMagic(_))));

        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(VhtMatrix::decode(&bad_version), Err(VhtError::BadVersion(2))));

        let mut bad_dtype = good.clone();
        bad_dtype[8] = 7;
        assert!(matches!(VhtMatrix::decode(&bad_dtype), Err(VhtError::BadDtype(7))));

        for cut in [3, 10, 20, good.len() - 1] {
            let err = VhtMatrix::decode(&good[..cut]).unwrap_err();
            assert!(matches!(err, VhtError::Truncated { .. }), "cut {cut}: {err:?}");
        }

        let codes: Vec<u8> =
            [VhtError::BadMagic(*b"XXXX"), VhtError::BadVersion(2), VhtError::BadDtype(3), VhtError::Truncated { needed: 1, found: 0 }]
                .iter()
                .map(VhtError::code)
                .collect();
        let mut dedup = codes.clone();
        dedup.dedup();
        assert_eq!(codes, dedup);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.vht");
        let m = DMatrix::from_fn(3, 4, |r, c| (r * 10 + c) as f64);
        write(&path, &VhtMatrix::from_real_matrix(&m)).unwrap();
        assert_eq!(read(&path).unwrap().to_real_matrix().unwrap(), m);
    }

    proptest! {
        #[test]
        fn real_and_complex_round_trip(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let n = rows * cols;
            let vals: Vec<f64> = (0..n).map(|i| ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64)) % 10007) as f64 / 7.0 - 700.0).collect();
            let real = VhtMatrix::real(rows, cols, vals.clone()).with_metadata(json!({"seed": seed.to_string()}));
            prop_assert_eq!(&VhtMatrix::decode(&real.encode().unwrap()).unwrap(), &real);
            let cplx = VhtMatrix::complex(rows, cols, vals.iter().map(|&v| Complex64::new(v, -v * 0.5)).collect());
            prop_assert_eq!(&VhtMatrix::decode(&cplx.encode().unwrap()).unwrap(), &cplx);
        }
    }
}

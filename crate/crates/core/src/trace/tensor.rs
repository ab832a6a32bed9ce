//! Binary tensor blobs.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size      field
//! 0       4         magic "LMCT"
//! 4       4         version: u32 (currently 1)
//! 8       1         dtype code: u8 (0 = f32)
//! 9       1         ndim: u8
//! 10      8*ndim    dims: u64 each
//! ...     4*numel   payload: f32, row-major
//! ```

use std::fs;
use std::path::Path;

use super::TraceError;

pub const MAGIC: [u8; 4] = *b"LMCT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 0,
}

impl DType {
    fn from_code(code: u8) -> Result<Self, TraceError> {
        match code {
            0 => Ok(DType::F32),
            other => Err(TraceError::UnsupportedDtype(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorBlob {
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Shape and dtype without the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorHeader {
    pub version: u32,
    pub dtype: DType,
    pub shape: Vec<usize>,
}

impl TensorHeader {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    fn encoded_len(&self) -> usize {
        10 + 8 * self.shape.len()
    }
}

impl TensorBlob {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TraceError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TraceError::ShapeMismatch {
                expected: numel,
                actual: data.len(),
            });
        }
        if shape.len() > u8::MAX as usize {
            return Err(TraceError::TooManyDims(shape.len()));
        }
        Ok(TensorBlob {
            dtype: DType::F32,
            shape,
            data,
        })
    }

    /// Builds a `[rows, cols]` blob from row slices.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, TraceError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(TraceError::ShapeMismatch {
                expected: cols,
                actual: bad.len(),
            });
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 8 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.dtype as u8);
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TraceError> {
        let header = parse_header(bytes)?;
        let start = header.encoded_len();
        let numel = header.numel();
        let need = numel
            .checked_mul(4)
            .and_then(|n| n.checked_add(start))
            .ok_or(TraceError::Truncated {
                needed: usize::MAX,
                available: bytes.len(),
            })?;
        if bytes.len() < need {
            return Err(TraceError::Truncated {
                needed: need,
                available: bytes.len(),
            });
        }
        if bytes.len() > need {
            return Err(TraceError::ShapeMismatch {
                expected: numel,
                actual: (bytes.len() - start) / 4,
            });
        }
        let data = bytes[start..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(TensorBlob {
            dtype: header.dtype,
            shape: header.shape,
            data,
        })
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<TensorHeader, TraceError> {
    if bytes.len() < 4 {
        return Err(TraceError::Truncated {
            needed: 4,
            available: bytes.len(),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(TraceError::BadMagic([bytes[0], bytes[1], bytes[2], bytes[3]]));
    }
    if bytes.len() < 10 {
        return Err(TraceError::Truncated {
            needed: 10,
            available: bytes.len(),
        });
    }
    let version = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    if version != FORMAT_VERSION {
        return Err(TraceError::UnsupportedVersion(version));
    }
    let dtype = DType::from_code(bytes[8])?;
    let ndim = bytes[9] as usize;
    let need = 10 + 8 * ndim;
    if bytes.len() < need {
        return Err(TraceError::Truncated {
            needed: need,
            available: bytes.len(),
        });
    }
    let shape = bytes[10..need]
        .chunks_exact(8)
        .map(|c| {
            let d = u64::from_le_bytes(c.try_into().expect("8-byte chunk"));
            usize::try_from(d).map_err(|_| TraceError::DimensionOverflow(d))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TensorHeader { version, dtype, shape })
}

pub fn write_tensor(blob: &TensorBlob, path: &Path) -> Result<(), TraceError> {
    fs::write(path, blob.to_bytes()).map_err(|e| TraceError::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<TensorBlob, TraceError> {
    let bytes = fs::read(path).map_err(|e| TraceError::io(path, e))?;
    TensorBlob::from_bytes(&bytes)
}

/// Reads only the fixed header plus dims; the payload size is checked
/// against the file length without loading it.
pub fn read_tensor_header(path: &Path) -> Result<TensorHeader, TraceError> {
    use std::io::Read;
    let mut file = fs::File::open(path).map_err(|e| TraceError::io(path, e))?;
    let file_len = file.metadata().map_err(|e| TraceError::io(path, e))?.len() as usize;
    let mut fixed = [0u8; 10];
    let got = file.read(&mut fixed).map_err(|e| TraceError::io(path, e))?;
    if got < 10 {
        // Let the byte parser produce the precise error.
        return parse_header(&fixed[..got]);
    }
    let ndim = fixed[9] as usize;
    let mut buf = fixed.to_vec();
    buf.resize(10 + 8 * ndim, 0);
    let dims_read = file.read(&mut buf[10..]).map_err(|e| TraceError::io(path, e))?;
    buf.truncate(10 + dims_read);
    let header = parse_header(&buf)?;
    let need = header.encoded_len() + 4 * header.numel();
    if file_len < need {
        return Err(TraceError::Truncated {
            needed: need,
            available: file_len,
        });
    }
    if file_len > need {
        return Err(TraceError::ShapeMismatch {
            expected: header.numel(),
            actual: (file_len - header.encoded_len()) / 4,
        });
    }
    Ok(header)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_matrix_round_trips_bit_exactly() {
        let blob = TensorBlob::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let back = TensorBlob::from_bytes(&blob.to_bytes()).unwrap();
        assert_eq!(back, blob);
    }

    #[test]
    fn empty_tensor_is_valid() {
        let blob = TensorBlob::new(vec![0], vec![]).unwrap();
        let bytes = blob.to_bytes();
        assert_eq!(bytes.len(), 18);
        assert_eq!(TensorBlob::from_bytes(&bytes).unwrap(), blob);
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = TensorBlob::new(vec![1], vec![1.0]).unwrap().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(TensorBlob::from_bytes(&bytes), Err(TraceError::BadMagic(_))));
    }

    #[test]
    fn truncated_payload() {
        let bytes = TensorBlob::new(vec![4], vec![1.0; 4]).unwrap().to_bytes();
        assert!(matches!(
            TensorBlob::from_bytes(&bytes[..bytes.len() - 2]),
            Err(TraceError::Truncated { .. })
        ));
        assert!(matches!(
            TensorBlob::from_bytes(&bytes[..12]),
            Err(TraceError::Truncated { .. })
        ));
    }

    #[test]
    fn trailing_payload_is_a_shape_mismatch() {
        let mut bytes = TensorBlob::new(vec![1], vec![1.0]).unwrap().to_bytes();
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        assert!(matches!(
            TensorBlob::from_bytes(&bytes),
            Err(TraceError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn shape_data_mismatch_on_construction() {
        assert!(matches!(
            TensorBlob::new(vec![2, 2], vec![1.0]),
            Err(TraceError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn unknown_dtype_and_version() {
        let mut bytes = TensorBlob::new(vec![1], vec![1.0]).unwrap().to_bytes();
        bytes[8] = 7;
        assert_eq!(
            TensorBlob::from_bytes(&bytes).unwrap_err(),
            TraceError::UnsupportedDtype(7)
        );
        bytes[8] = 0;
        bytes[4] = 9;
        assert_eq!(
            TensorBlob::from_bytes(&bytes).unwrap_err(),
            TraceError::UnsupportedVersion(9)
        );
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = TensorBlob::new(vec![2, 1], vec![0.5, -1.0]).unwrap().to_bytes();
        assert_eq!(&bytes[..4], b"LMCT");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(bytes[8], 0);
        assert_eq!(bytes[9], 2);
        assert_eq!(&bytes[10..18], &2u64.to_le_bytes());
        assert_eq!(&bytes[26..30], &0.5f32.to_le_bytes());
    }
}

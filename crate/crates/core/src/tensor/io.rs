//! Binary tensor format.
//!
//! Layout (little-endian):
//! - magic `XMF1`
//! - dtype code: u8 (0 = f32, 1 = f64)
//! - rank: u8
//! - dims: rank × u64
//! - payload: row-major IEEE-754 values

use std::io::{Read, Write};

use super::{DType, Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"XMF1";

pub fn tensor_to_bytes<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 8 * t.rank() + T::DTYPE.size() * t.numel());
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE.code());
    out.push(t.rank() as u8);
    for d in t.shape() {
        out.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    for v in t.data() {
        v.extend_le(&mut out);
    }
    out
}

/// Decode one tensor occupying exactly `bytes`.
pub fn tensor_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let mut cursor = bytes;
    let t = read_tensor(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(Error::Corrupt(format!("{} trailing bytes after tensor", cursor.len())));
    }
    Ok(t)
}

pub fn write_tensor<T: Scalar, W: Write + ?Sized>(w: &mut W, t: &Tensor<T>) -> std::io::Result<()> {
    w.write_all(&tensor_to_bytes(t))
}

fn read_exact<R: Read + ?Sized>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Corrupt(format!("truncated tensor {what}: {e}")))
}

pub fn read_tensor<T: Scalar, R: Read + ?Sized>(r: &mut R) -> Result<Tensor<T>> {
    let mut head = [0u8; 6];
    read_exact(r, &mut head, "header")?;
    if &head[..4] != MAGIC {
        return Err(Error::Corrupt(format!("bad tensor magic {:?}", &head[..4])));
    }
    let dtype = DType::from_code(head[4]).ok_or_else(|| Error::Corrupt(format!("unknown dtype code {}", head[4])))?;
    if dtype != T::DTYPE {
        return Err(Error::Dtype {
            expected: T::DTYPE.name(),
            found: dtype.name(),
        });
    }
    let rank = head[5] as usize;
    let mut dims = Vec::with_capacity(rank);
    let mut buf = [0u8; 8];
    for _ in 0..rank {
        read_exact(r, &mut buf, "dims")?;
        dims.push(u64::from_le_bytes(buf) as usize);
    }
    let numel = dims
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .ok_or_else(|| Error::Corrupt(format!("tensor dims {dims:?} overflow")))?;
    let size = dtype.size();
    let mut payload = vec![0u8; numel.checked_mul(size).ok_or_else(|| Error::Corrupt("tensor too large".into()))?];
    read_exact(r, &mut payload, "payload")?;
    let data = payload.chunks_exact(size).map(T::from_le).collect();
    Tensor::new(dims, data)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::<f32>::new(vec![2], vec![1.0, -0.0]).unwrap();
        let b = tensor_to_bytes(&t);
        assert_eq!(&b[..4], b"XMF1");
        assert_eq!(b[4], 0);
        assert_eq!(b[5], 1);
        assert_eq!(&b[6..14], &2u64.to_le_bytes());
        assert_eq!(&b[14..18], &1.0f32.to_le_bytes());
        assert_eq!(&b[18..22], &(-0.0f32).to_le_bytes());
        assert_eq!(b.len(), 22);
    }

    #[test]
    fn rejects_corruption() {
        let t = Tensor::<f64>::ones(vec![2, 2]);
        let mut b = tensor_to_bytes(&t);
        assert!(matches!(tensor_from_bytes::<f32>(&b), Err(Error::Dtype { .. })));
        assert!(matches!(tensor_from_bytes::<f64>(&b[..b.len() - 1]), Err(Error::Corrupt(_))));
        b[0] = b'Y';
        assert!(matches!(tensor_from_bytes::<f64>(&b), Err(Error::Corrupt(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            dims in prop::collection::vec(0usize..4, 0..4),
            seed in any::<u64>(),
        ) {
            let n: usize = dims.iter().product();
            let data: Vec<f64> = (0..n as u64)
                .map(|i| f64::from_bits(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i)))
                .collect();
            let t = Tensor::new(dims, data).unwrap();
            let back = tensor_from_bytes::<f64>(&tensor_to_bytes(&t)).unwrap();
            prop_assert!(back.bit_eq(&t));
            prop_assert_eq!(tensor_to_bytes(&back), tensor_to_bytes(&t));
        }
    }
}

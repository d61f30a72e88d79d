//! `HYPL` named-tensor container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      4 bytes  "HYPL"
//! version    u32
//! count      u32
//! count x {
//!     name_len u16, name UTF-8 bytes
//!     rank     u8
//!     dims     rank x u64
//!     payload  prod(dims) x f32, row-major
//! }
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HYPL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!("tensor {name}: dims {dims:?} but {} values", data.len())));
        }
        if name.len() > u16::MAX as usize || dims.len() > u8::MAX as usize {
            return Err(Error::Shape(format!("tensor {name}: name or rank too large")));
        }
        Ok(Self { name, dims, data })
    }

    pub fn from_f64(name: impl Into<String>, dims: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(name, dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor; names must be unique.
    pub fn push(&mut self, tensor: Tensor) -> Result<()> {
        if self.get(&tensor.name).is_some() {
            return Err(Error::Contract(format!("duplicate tensor name {}", tensor.name)));
        }
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            w.write_all(&(t.name.len() as u16).to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&[t.dims.len() as u8])?;
            for &d in &t.dims {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            let mut payload = Vec::with_capacity(t.data.len() * 4);
            for v in &t.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&payload)?;
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = bytes;
        Self::read_from(&mut r)
    }

    fn read_from<R: Read>(r: &mut R) -> std::result::Result<Self, String> {
        fn take<const N: usize, R: Read>(r: &mut R) -> std::result::Result<[u8; N], String> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf).map_err(|e| format!("truncated: {e}"))?;
            Ok(buf)
        }
        if &take::<4, _>(r)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = u32::from_le_bytes(take(r)?);
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let count = u32::from_le_bytes(take(r)?);
        let mut ckpt = Checkpoint::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(take(r)?) as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(|e| format!("truncated name: {e}"))?;
            let name = String::from_utf8(name).map_err(|e| format!("tensor name is not UTF-8: {e}"))?;
            let rank = take::<1, _>(r)?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(u64::from_le_bytes(take(r)?) as usize);
            }
            let numel = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or("dims overflow")?;
            let mut payload = vec![0u8; numel.checked_mul(4).ok_or("payload overflow")?];
            r.read_exact(&mut payload).map_err(|e| format!("truncated payload of {name}: {e}"))?;
            let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            ckpt.push(Tensor { name, dims, data }).map_err(|e| e.to_string())?;
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| e.to_string())? != 0 {
            return Err("trailing bytes after last tensor".into());
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Checkpoint { path: path.to_path_buf(), reason })
    }

    /// Fetches a tensor and checks its shape.
    pub fn expect(&self, name: &str, dims: &[usize]) -> Result<&Tensor> {
        let t = self.get(name).ok_or_else(|| Error::Data(format!("checkpoint lacks tensor {name}")))?;
        if t.dims != dims {
            return Err(Error::Shape(format!("tensor {name}: expected {dims:?}, found {:?}", t.dims)));
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_layout() {
        let mut c = Checkpoint::new();
        c.push(Tensor::new("ab", vec![2], vec![1.0, -2.5]).unwrap()).unwrap();
        let b = c.to_bytes();
        let mut expect = b"HYPL".to_vec();
        expect.extend(1u32.to_le_bytes());
        expect.extend(1u32.to_le_bytes());
        expect.extend(2u16.to_le_bytes());
        expect.extend(b"ab");
        expect.push(1);
        expect.extend(2u64.to_le_bytes());
        expect.extend(1.0f32.to_le_bytes());
        expect.extend((-2.5f32).to_le_bytes());
        assert_eq!(b, expect);
    }

    #[test]
    fn rejects_corruption() {
        let mut c = Checkpoint::new();
        c.push(Tensor::new("w", vec![1, 2], vec![0.5, 0.25]).unwrap()).unwrap();
        let b = c.to_bytes();
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        assert!(c.push(Tensor::new("w", vec![0], vec![]).unwrap()).is_err());
        assert!(Tensor::new("x", vec![3], vec![0.0]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(tensors in prop::collection::vec(
            ("[a-z.0-9]{1,12}", prop::collection::vec(0usize..4, 0..3)), 0..5)
        ) {
            let mut c = Checkpoint::new();
            for (i, (name, dims)) in tensors.into_iter().enumerate() {
                let n: usize = dims.iter().product();
                let data = (0..n).map(|j| (i * 31 + j) as f32 * 0.5 - 3.0).collect();
                let _ = c.push(Tensor::new(format!("{i}.{name}"), dims, data).unwrap());
            }
            let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}

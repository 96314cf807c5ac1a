use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::numerics::store::{Param, ParameterStore};
use crate::numerics::tensor::Tensor;
use crate::{Error, Result};

/// Checkpoint container format version.
pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"FUMPCKPT";

/// Section tags used by the trainer.
pub const SECTION_PARAMS: [u8; 4] = *b"PARM";
pub const SECTION_MEMORY: [u8; 4] = *b"MEMQ";
pub const SECTION_RNG: [u8; 4] = *b"RNGS";
pub const SECTION_META: [u8; 4] = *b"META";
pub const SECTION_CONFIG: [u8; 4] = *b"CFGJ";

/// A versioned container of named binary sections with a config hash in the
/// header. Parameter values are stored as raw 64-bit little-endian floats.
#[derive(Debug, Clone)]
pub struct CheckpointFile {
    pub config_hash: u64,
    pub sections: Vec<([u8; 4], Vec<u8>)>,
}

impl CheckpointFile {
    pub fn new(config_hash: u64) -> Self {
        CheckpointFile {
            config_hash,
            sections: Vec::new(),
        }
    }

    pub fn push_section(&mut self, tag: [u8; 4], bytes: Vec<u8>) {
        self.sections.push((tag, bytes));
    }

    pub fn section(&self, tag: [u8; 4]) -> Option<&[u8]> {
        self.sections
            .iter()
            .find(|(t, _)| *t == tag)
            .map(|(_, b)| b.as_slice())
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let ctx = || format!("writing checkpoint {}", path.display());
        let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
        let mut w = BufWriter::new(file);
        let mut emit = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(ctx(), e));
        emit(MAGIC)?;
        emit(&FORMAT_VERSION.to_le_bytes())?;
        emit(&self.config_hash.to_le_bytes())?;
        emit(&(self.sections.len() as u32).to_le_bytes())?;
        for (tag, bytes) in &self.sections {
            emit(tag)?;
            emit(&(bytes.len() as u64).to_le_bytes())?;
            emit(bytes)?;
        }
        w.flush().map_err(|e| Error::io(ctx(), e))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let ctx = || format!("reading checkpoint {}", path.display());
        let file = File::open(path).map_err(|e| Error::io(ctx(), e))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| Error::io(ctx(), e))?;
        if &magic != MAGIC {
            return Err(Error::invalid(format!(
                "{} is not a checkpoint file (bad magic)",
                path.display()
            )));
        }
        let version = read_u32(&mut r, &ctx)?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let config_hash = read_u64(&mut r, &ctx)?;
        let count = read_u32(&mut r, &ctx)? as usize;
        let mut sections = Vec::with_capacity(count);
        for _ in 0..count {
            let mut tag = [0u8; 4];
            r.read_exact(&mut tag).map_err(|e| Error::io(ctx(), e))?;
            let len = read_u64(&mut r, &ctx)? as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes).map_err(|e| Error::io(ctx(), e))?;
            sections.push((tag, bytes));
        }
        Ok(CheckpointFile {
            config_hash,
            sections,
        })
    }
}

fn read_u32(r: &mut impl Read, ctx: &impl Fn() -> String) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| Error::io(ctx(), e))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read, ctx: &impl Fn() -> String) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|e| Error::io(ctx(), e))?;
    Ok(u64::from_le_bytes(buf))
}

/// Little-endian encoders shared by the section writers.
pub mod wire {
    pub fn put_u32(out: &mut Vec<u8>, v: u32) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    pub fn put_u64(out: &mut Vec<u8>, v: u64) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    pub fn put_u128(out: &mut Vec<u8>, v: u128) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    pub fn put_f64(out: &mut Vec<u8>, v: f64) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    pub fn put_str(out: &mut Vec<u8>, s: &str) {
        put_u32(out, s.len() as u32);
        out.extend_from_slice(s.as_bytes());
    }

    pub struct Cursor<'a> {
        bytes: &'a [u8],
        pos: usize,
    }

    impl<'a> Cursor<'a> {
        pub fn new(bytes: &'a [u8]) -> Self {
            Cursor { bytes, pos: 0 }
        }
        fn take(&mut self, n: usize) -> crate::Result<&'a [u8]> {
            if self.pos + n > self.bytes.len() {
                return Err(crate::Error::invalid("truncated checkpoint section"));
            }
            let s = &self.bytes[self.pos..self.pos + n];
            self.pos += n;
            Ok(s)
        }
        pub fn u32(&mut self) -> crate::Result<u32> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
        }
        pub fn u64(&mut self) -> crate::Result<u64> {
            Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }
        pub fn u128(&mut self) -> crate::Result<u128> {
            Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
        }
        pub fn f64(&mut self) -> crate::Result<f64> {
            Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }
        pub fn str(&mut self) -> crate::Result<String> {
            let len = self.u32()? as usize;
            let bytes = self.take(len)?;
            String::from_utf8(bytes.to_vec())
                .map_err(|_| crate::Error::invalid("non-utf8 string in checkpoint"))
        }
        pub fn f64s(&mut self, n: usize) -> crate::Result<Vec<f64>> {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(self.f64()?);
            }
            Ok(v)
        }
        pub fn done(&self) -> bool {
            self.pos == self.bytes.len()
        }
    }
}

/// Serialize a parameter store (values plus Adam state) into section bytes.
pub fn store_to_bytes(store: &ParameterStore) -> Vec<u8> {
    let mut out = Vec::new();
    wire::put_u64(&mut out, store.adam_steps());
    wire::put_u64(&mut out, store.len() as u64);
    for (name, param) in store.iter() {
        wire::put_str(&mut out, name);
        wire::put_u32(&mut out, param.value.shape().len() as u32);
        for &d in param.value.shape() {
            wire::put_u64(&mut out, d as u64);
        }
        for &v in param.value.data() {
            wire::put_f64(&mut out, v);
        }
        for &v in param.moment1.data() {
            wire::put_f64(&mut out, v);
        }
        for &v in param.moment2.data() {
            wire::put_f64(&mut out, v);
        }
    }
    out
}

pub fn store_from_bytes(bytes: &[u8]) -> Result<ParameterStore> {
    let mut cur = wire::Cursor::new(bytes);
    let mut store = ParameterStore::new();
    let steps = cur.u64()?;
    store.set_adam_steps(steps);
    let count = cur.u64()? as usize;
    for _ in 0..count {
        let name = cur.str()?;
        let ndim = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let value = Tensor::from_vec(shape.clone(), cur.f64s(numel)?)?;
        let moment1 = Tensor::from_vec(shape.clone(), cur.f64s(numel)?)?;
        let moment2 = Tensor::from_vec(shape.clone(), cur.f64s(numel)?)?;
        store.insert_raw(
            name,
            Param {
                grad: Tensor::zeros(&shape),
                value,
                moment1,
                moment2,
            },
        );
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_section_round_trips_bitwise() {
        let mut store = ParameterStore::new();
        store
            .register(
                "a.w",
                Tensor::from_vec(vec![2, 2], vec![1.5, -2.25, 1e-300, 3.7]).unwrap(),
            )
            .unwrap();
        store
            .register("z.b", Tensor::from_vec(vec![1, 1], vec![0.1 + 0.2]).unwrap())
            .unwrap();
        store.accumulate_grad("a.w", &Tensor::full(&[2, 2], 1.0)).unwrap();
        store.adam_step(1e-3, (0.9, 0.999), 1e-8);
        let bytes = store_to_bytes(&store);
        let restored = store_from_bytes(&bytes).unwrap();
        assert_eq!(restored.adam_steps(), store.adam_steps());
        for (name, p) in store.iter() {
            let r = restored.get(name).unwrap();
            assert_eq!(r.data(), p.value.data());
        }
    }

    #[test]
    fn container_round_trip_and_version_checks() {
        let dir = std::env::temp_dir().join("fump_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("test.ckpt");
        let mut ckpt = CheckpointFile::new(0xDEADBEEF);
        ckpt.push_section(SECTION_META, vec![1, 2, 3]);
        ckpt.write_to(&path).unwrap();
        let back = CheckpointFile::read_from(&path).unwrap();
        assert_eq!(back.config_hash, 0xDEADBEEF);
        assert_eq!(back.section(SECTION_META), Some(&[1u8, 2, 3][..]));

        // Corrupt the version field and expect a version mismatch.
        let mut raw = std::fs::read(&path).unwrap();
        raw[8] = 99;
        std::fs::write(&path, &raw).unwrap();
        assert!(matches!(
            CheckpointFile::read_from(&path),
            Err(Error::VersionMismatch { found: 99, .. })
        ));
        std::fs::remove_file(&path).ok();
    }
}

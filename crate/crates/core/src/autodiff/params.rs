//! Named parameter blocks with optional connectivity masks, a stable
//! flattening order, and a versioned binary checkpoint format.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub value: DMatrix<f64>,
    /// 1.0 where the entry is trainable, 0.0 where it is pinned at zero.
    pub mask: Option<DMatrix<f64>>,
    /// Biases are excluded from weight penalties.
    pub is_bias: bool,
}

/// Parameters in insertion order. Each block flattens column-major, so the
/// flattened vector is the concatenation of the blocks' storage slices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    blocks: Vec<ParamBlock>,
}

const MAGIC: &[u8; 8] = b"CINNPRM\0";
const FORMAT_VERSION: u32 = 1;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        value: DMatrix<f64>,
        mask: Option<DMatrix<f64>>,
        is_bias: bool,
    ) -> ParamId {
        let mut block = ParamBlock {
            name: name.into(),
            value,
            mask,
            is_bias,
        };
        if let Some(m) = &block.mask {
            assert_eq!(m.shape(), block.value.shape(), "mask shape for {}", block.name);
            block.value.component_mul_assign(m);
        }
        self.blocks.push(block);
        ParamId(self.blocks.len() - 1)
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn get(&self, id: ParamId) -> &DMatrix<f64> {
        &self.blocks[id.0].value
    }

    pub fn block(&self, id: ParamId) -> &ParamBlock {
        &self.blocks[id.0]
    }

    /// Overwrite one block, re-applying its mask.
    pub fn set(&mut self, id: ParamId, value: DMatrix<f64>) -> Result<()> {
        let block = &mut self.blocks[id.0];
        if value.shape() != block.value.shape() {
            return Err(Error::Shape(format!(
                "block {} expects {:?}, got {:?}",
                block.name,
                block.value.shape(),
                value.shape()
            )));
        }
        block.value = value;
        if let Some(m) = &block.mask {
            block.value.component_mul_assign(m);
        }
        Ok(())
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.blocks.iter().position(|b| b.name == name).map(ParamId)
    }

    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(|b| b.value.len()).sum()
    }

    /// Count of entries not pinned by a mask.
    pub fn n_trainable(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| match &b.mask {
                Some(m) => m.iter().filter(|&&x| x != 0.0).count(),
                None => b.value.len(),
            })
            .sum()
    }

    /// Start offset of each block in the flattened vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut acc = 0;
        for b in &self.blocks {
            out.push(acc);
            acc += b.value.len();
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for b in &self.blocks {
            out.extend_from_slice(b.value.as_slice());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "flat vector has {} entries, store has {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut at = 0;
        for b in &mut self.blocks {
            let n = b.value.len();
            b.value.as_mut_slice().copy_from_slice(&flat[at..at + n]);
            if let Some(m) = &b.mask {
                b.value.component_mul_assign(m);
            }
            at += n;
        }
        Ok(())
    }

    /// Zero the entries of a flattened gradient that masks pin.
    pub fn mask_flat(&self, flat: &mut [f64]) {
        let mut at = 0;
        for b in &self.blocks {
            let n = b.value.len();
            if let Some(m) = &b.mask {
                for (g, &k) in flat[at..at + n].iter_mut().zip(m.as_slice()) {
                    *g *= k;
                }
            }
            at += n;
        }
    }

    /// Glorot-uniform weights (bounds ±sqrt(6 / (fan_in + fan_out))) and zero
    /// biases. Weight blocks are stored as fan_in x fan_out.
    pub fn init_glorot<R: Rng>(&mut self, rng: &mut R) {
        for b in &mut self.blocks {
            if b.is_bias {
                b.value.fill(0.0);
                continue;
            }
            let (fan_in, fan_out) = b.value.shape();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for x in b.value.iter_mut() {
                *x = rng.random_range(-limit..=limit);
            }
            if let Some(m) = &b.mask {
                b.value.component_mul_assign(m);
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for b in &mut self.blocks {
            b.value.fill(0.0);
        }
    }

    /// One line per block: name, shape, kind and trainable count.
    pub fn manifest(&self) -> String {
        let mut s = format!("version {FORMAT_VERSION}\n");
        for (b, off) in self.blocks.iter().zip(self.offsets()) {
            let trainable = match &b.mask {
                Some(m) => m.iter().filter(|&&x| x != 0.0).count(),
                None => b.value.len(),
            };
            s.push_str(&format!(
                "{} {}x{} {} offset={} trainable={}\n",
                b.name,
                b.value.nrows(),
                b.value.ncols(),
                if b.is_bias { "bias" } else { "weight" },
                off,
                trainable
            ));
        }
        s
    }

    /// Binary layout: magic, u32 version, u32 block count, then per block a
    /// u32 name length, UTF-8 name, u8 flags (bit 0 bias, bit 1 masked),
    /// u64 rows, u64 cols, values (f64 little-endian, column-major) and the
    /// mask in the same layout when present.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
            out.extend_from_slice(b.name.as_bytes());
            let flags = u8::from(b.is_bias) | (u8::from(b.mask.is_some()) << 1);
            out.push(flags);
            out.extend_from_slice(&(b.value.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(b.value.ncols() as u64).to_le_bytes());
            for x in b.value.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
            if let Some(m) = &b.mask {
                for x in m.iter() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Data("not a parameter checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Data(format!("unsupported checkpoint version {version}")));
        }
        let n_blocks = r.u32()? as usize;
        let mut store = ParamStore::new();
        for _ in 0..n_blocks {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Data("checkpoint block name is not UTF-8".into()))?;
            let flags = r.take(1)?[0];
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let value = r.matrix(rows, cols)?;
            let mask = if flags & 2 != 0 {
                Some(r.matrix(rows, cols)?)
            } else {
                None
            };
            store.blocks.push(ParamBlock {
                name,
                value,
                mask,
                is_bias: flags & 1 != 0,
            });
        }
        if r.at != bytes.len() {
            return Err(Error::Data("trailing bytes after checkpoint".into()));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let manifest = path.with_extension("manifest");
        std::fs::write(&manifest, self.manifest()).map_err(|e| Error::io(&manifest, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// True when both stores hold blocks of identical names and shapes.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Data("truncated checkpoint".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some())
            .ok_or_else(|| Error::Data("checkpoint block too large".into()))?;
        let raw = self.take(n * 8)?;
        let vals = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        Ok(DMatrix::from_iterator(rows, cols, vals))
    }
}

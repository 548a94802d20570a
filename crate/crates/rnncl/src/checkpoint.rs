//! Versioned binary container for parameters and method state: a header,
//! then named sections each carrying a shaped little-endian f64 payload.
//! Writing is deterministic (sections in insertion order), so identical
//! state produces identical bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::params::ParamVector;

const MAGIC: &[u8; 4] = b"RCLC";
const VERSION: u32 = 1;

/// An ordered set of named, shaped f64 sections.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    names: Vec<String>,
    sections: BTreeMap<String, Mat>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, m: Mat) -> Result<()> {
        if name.is_empty() || name.len() > u32::MAX as usize {
            return Err(Error::Checkpoint("bad section name".into()));
        }
        if self.sections.insert(name.to_string(), m).is_some() {
            return Err(Error::Checkpoint(format!("duplicate section {:?}", name)));
        }
        self.names.push(name.to_string());
        Ok(())
    }

    /// Store a flat vector as a 1 x len section.
    pub fn insert_vec(&mut self, name: &str, v: &[f64]) -> Result<()> {
        self.insert(name, Mat::from_vec(1, v.len(), v.to_vec())?)
    }

    pub fn get(&self, name: &str) -> Result<&Mat> {
        self.sections
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing section {:?}", name)))
    }

    pub fn get_vec(&self, name: &str) -> Result<Vec<f64>> {
        let m = self.get(name)?;
        if m.rows != 1 {
            return Err(Error::Checkpoint(format!("section {:?} is not a vector", name)));
        }
        Ok(m.data.clone())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// One section per view, named by the layout. Shared and head views
    /// round-trip with their true shapes.
    pub fn insert_params(&mut self, prefix: &str, params: &ParamVector) -> Result<()> {
        for idx in 0..params.layout.num_views() {
            let spec = params.layout.spec(idx);
            self.insert(&format!("{}{}", prefix, spec.name), params.view_mat(idx))?;
        }
        Ok(())
    }

    /// Inverse of [`insert_params`]: the checkpoint must hold every view of
    /// `params.layout` under `prefix`, each with its recorded shape.
    pub fn extract_params(&self, prefix: &str, params: &mut ParamVector) -> Result<()> {
        for idx in 0..params.layout.num_views() {
            let spec = params.layout.spec(idx).clone();
            let m = self.get(&format!("{}{}", prefix, spec.name))?;
            if m.shape() != (spec.rows, spec.cols) {
                return Err(Error::Checkpoint(format!(
                    "section {:?} has shape {:?}, layout wants ({}, {})",
                    spec.name,
                    m.shape(),
                    spec.rows,
                    spec.cols
                )));
            }
            params.set_view(idx, m)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.names.len() as u32).to_le_bytes());
        for name in &self.names {
            let m = &self.sections[name];
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols as u32).to_le_bytes());
            for &v in &m.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::Checkpoint("truncated checkpoint".into()));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        let magic = take(4)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", version)));
        }
        let n_sections = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut ck = Checkpoint::new();
        for _ in 0..n_sections {
            let name_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(take(name_len)?)
                .map_err(|_| Error::Checkpoint("section name is not utf-8".into()))?
                .to_string();
            let rows = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let cols = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Checkpoint("section size overflows".into()))?;
            let payload = take(n * 8)?;
            let data: Vec<f64> = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            ck.insert(&name, Mat::from_vec(rows, cols, data)?)?;
        }
        if !cur.is_empty() {
            return Err(Error::Checkpoint("trailing bytes after last section".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RnnArch, RnnKind};
    use crate::rng::substream;

    #[test]
    fn roundtrip_preserves_sections_bitwise() {
        let mut ck = Checkpoint::new();
        ck.insert("a", Mat::from_fn(3, 2, |i, j| (i * 2 + j) as f64 * 0.1 - 0.25)).unwrap();
        ck.insert_vec("b", &[1.0, f64::MIN_POSITIVE, -0.0, 1e300]).unwrap();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.names(), ck.names());
        for name in ck.names() {
            let (x, y) = (ck.get(name).unwrap(), back.get(name).unwrap());
            assert_eq!(x.shape(), y.shape());
            for (a, b) in x.data.iter().zip(y.data.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        // Deterministic encoding: re-serializing gives identical bytes.
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn params_roundtrip_through_file() {
        let arch = RnnArch { kind: RnnKind::Lstm, n_in: 5, n_h: 7, f_out: 4, n_heads: 3, n_z: 2 };
        let mut rng = substream(1, "init", 0);
        let params = arch.init_params(true, &mut rng).unwrap();
        let mut ck = Checkpoint::new();
        ck.insert_params("model/", &params).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.rclc");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        let mut restored = ParamVector::zeros(params.layout.clone());
        back.extract_params("model/", &mut restored).unwrap();
        assert_eq!(restored.data, params.data);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut ck = Checkpoint::new();
        ck.insert_vec("v", &[1.0, 2.0]).unwrap();
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong_magic).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(Checkpoint::from_bytes(&wrong_version).is_err());
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(Checkpoint::from_bytes(&trailing).is_err());
        assert!(ck.insert_vec("v", &[3.0]).is_err());
    }

    #[test]
    fn mismatched_layout_is_rejected_on_extract() {
        let arch = RnnArch { kind: RnnKind::Vanilla, n_in: 3, n_h: 4, f_out: 2, n_heads: 1, n_z: 0 };
        let mut rng = substream(2, "init", 0);
        let params = arch.init_params(false, &mut rng).unwrap();
        let mut ck = Checkpoint::new();
        ck.insert_params("m/", &params).unwrap();
        let bigger = RnnArch { n_h: 5, ..arch };
        let mut other = ParamVector::zeros(bigger.layout());
        assert!(ck.extract_params("m/", &mut other).is_err());
    }
}

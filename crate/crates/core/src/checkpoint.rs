//! Binary checkpoint container.
//!
//! A checkpoint holds everything needed to rebuild a trained
//! [`HybridField`] and its [`ParamStore`]: the model recipe, an arbitrary
//! JSON blob from the caller (the CLI stores its resolved run config
//! there), the frozen geometry (centers, shapes, frequencies, residual
//! ladder) and every trainable segment.
//!
//! Byte layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size  content
//! 0       4     magic "NRBF"
//! 4       4     u32 format version (currently 1)
//! 8       4     u32 length L of the config JSON
//! 12      L     config JSON, UTF-8: {"model": <recipe>, "run": <blob>}
//! 12+L    4     u32 segment count
//! ```
//!
//! then per segment, in file order:
//!
//! ```text
//! 4             u32 name length n
//! n             segment name, UTF-8
//! 4             u32 rank r
//! 8r            u64 dims[r]
//! 8*prod(dims)  f64 values
//! ```
//!
//! Geometry segments come first (`rbf.centers`, `rbf.inv_shapes`,
//! `rbf.freqs` when the model has a basis, then `dec.m0`), followed by the
//! trainable segments in store order. Writing is fully deterministic:
//! identical inputs produce identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{HybridField, ModelSpec, RbfParts};
use crate::params::ParamStore;
use crate::symmat::tri_len;

pub const MAGIC: [u8; 4] = *b"NRBF";
pub const VERSION: u32 = 1;

// Caps that keep a corrupted header from driving huge allocations.
const MAX_NAME: u32 = 4096;
const MAX_RANK: u32 = 8;
const MAX_JSON: u32 = 1 << 26;
const MAX_VALUES: u64 = 1 << 32;

/// One named array with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ConfigBlob {
    model: ModelSpec,
    run: serde_json::Value,
}

/// In-memory form of a checkpoint file.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelSpec,
    /// Caller-defined JSON, `Null` if none was provided.
    pub run: serde_json::Value,
    pub segments: Vec<Segment>,
}

/// Expected shape of a named segment under a given recipe, or `None` for a
/// name that does not belong to the format.
fn expected_shape(model: &ModelSpec, field: &HybridField, name: &str) -> Option<Vec<usize>> {
    let dec = &field.dec;
    if let Some(rbf) = &model.rbf {
        let s = match name {
            "rbf.centers" => vec![rbf.count, model.dim],
            "rbf.inv_shapes" => vec![rbf.count, tri_len(model.dim)],
            "rbf.freqs" => vec![rbf.feat_dim],
            "rbf.features" => vec![rbf.count, rbf.feat_dim],
            "rbf.phase" => vec![rbf.feat_dim],
            _ => vec![],
        };
        if !s.is_empty() {
            return Some(s);
        }
    }
    match name {
        "dec.m0" => Some(vec![dec.width]),
        "grid.tables" => Some(vec![field.grid.table_len()]),
        "dec.fc1.w" => Some(vec![dec.width, dec.in_dim]),
        "dec.fc1.b" => Some(vec![dec.width]),
        "dec.fc2.w" => Some(vec![dec.width, dec.width]),
        "dec.fc2.b" => Some(vec![dec.width]),
        "dec.fc3.w" => Some(vec![dec.out_dim, dec.width]),
        "dec.fc3.b" => Some(vec![dec.out_dim]),
        _ => None,
    }
}

impl Checkpoint {
    /// Snapshots a field and its parameters. The `run` blob is stored
    /// verbatim and plays no role in rebuilding.
    pub fn capture(
        model: &ModelSpec,
        run: serde_json::Value,
        field: &HybridField,
        store: &ParamStore,
    ) -> Result<Checkpoint> {
        field.validate()?;
        let mut segments = Vec::new();
        let mut push = |name: &str, values: Vec<f64>| -> Result<()> {
            let shape = expected_shape(model, field, name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown segment `{name}`")))?;
            if shape.iter().product::<usize>() != values.len() {
                return Err(Error::Checkpoint(format!(
                    "segment `{name}` has {} values, shape needs {}",
                    values.len(),
                    shape.iter().product::<usize>()
                )));
            }
            segments.push(Segment {
                name: name.to_string(),
                shape,
                values,
            });
            Ok(())
        };
        if let Some(rbf) = &field.rbf {
            push("rbf.centers", rbf.centers.clone())?;
            push("rbf.inv_shapes", rbf.inv_shapes.clone())?;
            push("rbf.freqs", rbf.freqs.clone())?;
        }
        push("dec.m0", field.dec.m0.clone())?;
        for id in store.segment_ids() {
            let name = store.segment(id).name.clone();
            push(&name, store.values(id).to_vec())?;
        }
        Ok(Checkpoint {
            model: model.clone(),
            run,
            segments,
        })
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    /// Reconstructs the field and parameter store. Every segment the recipe
    /// calls for must be present with the right shape; stray segments are
    /// rejected.
    pub fn rebuild(&self) -> Result<(HybridField, ParamStore)> {
        let need = |name: &str| -> Result<&Segment> {
            self.segment(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing segment `{name}`")))
        };
        let rbf_parts = match &self.model.rbf {
            Some(_) => Some(RbfParts {
                centers: need("rbf.centers")?.values.clone(),
                inv_shapes: need("rbf.inv_shapes")?.values.clone(),
                freqs: need("rbf.freqs")?.values.clone(),
            }),
            None => None,
        };
        let m0 = need("dec.m0")?.values.clone();
        let field = HybridField::from_parts(&self.model, rbf_parts, Some(m0))?;
        let mut store = field.empty_store(self.model.mlp_lr_scale);
        // Shape-check everything, including the geometry read above, and
        // reject names outside the format. The fixed total count plus the
        // per-name lookups below rule out duplicates.
        let expected = store.segments().len() + 1 + if self.model.rbf.is_some() { 3 } else { 0 };
        if self.segments.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {} segments, found {}",
                expected,
                self.segments.len()
            )));
        }
        for seg in &self.segments {
            match expected_shape(&self.model, &field, &seg.name) {
                Some(shape) if shape == seg.shape => {}
                Some(shape) => {
                    return Err(Error::Checkpoint(format!(
                        "segment `{}` has shape {:?}, expected {:?}",
                        seg.name, seg.shape, shape
                    )));
                }
                None => {
                    return Err(Error::Checkpoint(format!(
                        "segment `{}` does not belong to this model",
                        seg.name
                    )));
                }
            }
        }
        let names: Vec<String> = store.segments().iter().map(|s| s.name.clone()).collect();
        for name in names {
            let seg = need(&name)?;
            let id = store.segment_by_name(&name).expect("own segment");
            store.values_mut(id).copy_from_slice(&seg.values);
        }
        Ok((field, store))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let blob = ConfigBlob {
            model: self.model.clone(),
            run: self.run.clone(),
        };
        let json = serde_json::to_vec(&blob)?;
        if json.len() as u64 > MAX_JSON as u64 {
            return Err(Error::Checkpoint("config JSON too large".into()));
        }
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        w.write_all(&(self.segments.len() as u32).to_le_bytes())?;
        for seg in &self.segments {
            let name = seg.name.as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&(seg.shape.len() as u32).to_le_bytes())?;
            for &d in &seg.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in &seg.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Checkpoint> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic {:02x?}, expected {:02x?}",
                magic, MAGIC
            )));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}"
            )));
        }
        let json_len = read_u32(r)?;
        if json_len > MAX_JSON {
            return Err(Error::Checkpoint("config JSON too large".into()));
        }
        let mut json = vec![0u8; json_len as usize];
        r.read_exact(&mut json)?;
        let blob: ConfigBlob = serde_json::from_slice(&json)?;
        let n_segments = read_u32(r)?;
        let mut segments = Vec::new();
        for _ in 0..n_segments {
            let name_len = read_u32(r)?;
            if name_len > MAX_NAME {
                return Err(Error::Checkpoint("segment name too long".into()));
            }
            let mut name = vec![0u8; name_len as usize];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Checkpoint("segment name is not UTF-8".into()))?;
            let rank = read_u32(r)?;
            if rank > MAX_RANK {
                return Err(Error::Checkpoint(format!("segment `{name}` rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank as usize);
            let mut count = 1u64;
            for _ in 0..rank {
                let d = read_u64(r)?;
                count = count
                    .checked_mul(d)
                    .filter(|&c| c <= MAX_VALUES)
                    .ok_or_else(|| Error::Checkpoint(format!("segment `{name}` too large")))?;
                shape.push(d as usize);
            }
            let mut values = vec![0.0f64; count as usize];
            let mut buf = [0u8; 8];
            for v in &mut values {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            segments.push(Segment {
                name,
                shape,
                values,
            });
        }
        Ok(Checkpoint {
            model: blob.model,
            run: blob.run,
            segments,
        })
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut r = BufReader::new(File::open(path)?);
        let cp = Self::read_from(&mut r)?;
        // Trailing garbage means the file is not what we wrote.
        let mut probe = [0u8; 1];
        match r.read(&mut probe)? {
            0 => Ok(cp),
            _ => Err(Error::Checkpoint("trailing bytes after checkpoint".into())),
        }
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

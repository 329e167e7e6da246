//! Named parameter sets, initialization, and the checkpoint container.
//!
//! Checkpoint layout (version 1): magic `SAANCKP1`, u32-LE tensor count,
//! then per tensor: u32-LE name length, UTF-8 name, u32-LE ndim, u32-LE
//! dims, f32-LE data. A JSON sidecar at `<path>.json` carries architecture
//! hyperparameters. Trainable flags are a runtime protocol and are not
//! stored.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::IxDyn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::{NnError, Tensor};

/// A parameter tensor with its trainable flag; frozen parameters accumulate
/// no gradient and are never updated.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub trainable: bool,
}

/// Deterministically ordered collection of named parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    map: BTreeMap<String, Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) {
        self.map.insert(name.into(), Param { value, trainable });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.map.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor, NnError> {
        self.map
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.map.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    /// Set the trainable flag on every parameter whose name starts with
    /// `prefix`. Returns how many parameters were touched.
    pub fn set_trainable_prefix(&mut self, prefix: &str, trainable: bool) -> usize {
        let mut n = 0;
        for (name, p) in self.map.iter_mut() {
            if name.starts_with(prefix) {
                p.trainable = trainable;
                n += 1;
            }
        }
        n
    }

    /// Copy values in from another set for every name both sets share.
    /// Returns the copied names.
    pub fn adopt_values(&mut self, other: &ParamSet, rename: impl Fn(&str) -> Option<String>) -> Vec<String> {
        let mut copied = Vec::new();
        for (name, p) in other.iter() {
            if let Some(target) = rename(name) {
                if let Some(slot) = self.map.get_mut(&target) {
                    assert_eq!(
                        slot.value.shape(),
                        p.value.shape(),
                        "adopting '{name}' into '{target}': shape mismatch"
                    );
                    slot.value = p.value.clone();
                    copied.push(target);
                }
            }
        }
        copied
    }

    /// FNV-1a hash over names, shapes, and value bit patterns for every
    /// parameter under `prefix`. Detects any bit-level drift.
    pub fn content_hash(&self, prefix: &str) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for (name, p) in &self.map {
            if !name.starts_with(prefix) {
                continue;
            }
            feed(name.as_bytes());
            for &d in p.value.shape() {
                feed(&(d as u64).to_le_bytes());
            }
            for &v in p.value.iter() {
                feed(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Insert every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &Tape) -> BoundParams {
        let vars = self
            .map
            .iter()
            .map(|(name, p)| (name.clone(), tape.leaf(p.value.clone())))
            .collect();
        BoundParams { vars }
    }

    /// Write the checkpoint and its JSON sidecar.
    pub fn save(&self, path: &Path, sidecar: &serde_json::Value) -> Result<(), NnError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(b"SAANCKP1")?;
        f.write_all(&(self.map.len() as u32).to_le_bytes())?;
        for (name, p) in &self.map {
            f.write_all(&(name.len() as u32).to_le_bytes())?;
            f.write_all(name.as_bytes())?;
            f.write_all(&(p.value.ndim() as u32).to_le_bytes())?;
            for &d in p.value.shape() {
                f.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in p.value.iter() {
                f.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        let sidecar_path = sidecar_path_for(path);
        std::fs::write(
            sidecar_path,
            serde_json::to_string_pretty(sidecar).expect("sidecar serializes"),
        )?;
        Ok(())
    }

    /// Read a checkpoint written by [`ParamSet::save`]; every parameter
    /// loads as trainable. The sidecar is returned when present.
    pub fn load(path: &Path) -> Result<(Self, Option<serde_json::Value>), NnError> {
        let mut f = std::fs::File::open(path)?;
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != b"SAANCKP1" {
            return Err(NnError::Checkpoint(format!(
                "{}: bad magic {:?}",
                path.display(),
                magic
            )));
        }
        let mut u32buf = [0u8; 4];
        f.read_exact(&mut u32buf)?;
        let count = u32::from_le_bytes(u32buf) as usize;
        let mut set = ParamSet::new();
        for _ in 0..count {
            f.read_exact(&mut u32buf)?;
            let name_len = u32::from_le_bytes(u32buf) as usize;
            let mut name_bytes = vec![0u8; name_len];
            f.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|e| NnError::Checkpoint(format!("bad name: {e}")))?;
            f.read_exact(&mut u32buf)?;
            let ndim = u32::from_le_bytes(u32buf) as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                f.read_exact(&mut u32buf)?;
                shape.push(u32::from_le_bytes(u32buf) as usize);
            }
            let numel: usize = shape.iter().product();
            let mut bytes = vec![0u8; numel * 4];
            f.read_exact(&mut bytes)?;
            let data: Vec<f64> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let value = Tensor::from_shape_vec(IxDyn(&shape), data)
                .map_err(|e| NnError::Checkpoint(format!("bad tensor '{name}': {e}")))?;
            set.insert(name, value, true);
        }
        let sidecar_path = sidecar_path_for(path);
        let sidecar = match std::fs::read_to_string(&sidecar_path) {
            Ok(text) => Some(
                serde_json::from_str(&text)
                    .map_err(|e| NnError::Checkpoint(format!("bad sidecar: {e}")))?,
            ),
            Err(_) => None,
        };
        Ok((set, sidecar))
    }
}

fn sidecar_path_for(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

/// Parameter name -> tape var mapping for one forward pass.
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var, NnError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

/// He-style normal initialization scaled by the incoming fan.
pub fn he_fan_in(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            // Box-Muller keeps this independent of distribution crates'
            // sampling order; only determinism matters here.
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random::<f64>();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos() * std
        })
        .collect();
    Tensor::from_shape_vec(IxDyn(shape), data).expect("shape matches length")
}

pub fn zeros(shape: &[usize]) -> Tensor {
    Tensor::zeros(IxDyn(shape))
}

//! Named tensor store and the CPRW1 weight file.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::spec::{LayerKind, NetworkSpec};
use crate::binio::{read_file, Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8] = b"CPRW1";

/// Batch-norm epsilon used when a layer has no `bn.eps` tensor.
pub const DEFAULT_BN_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Format(format!(
                "tensor of shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }
}

/// Tensors by name. Conv unit `i` (counting only conv layers, repeats
/// expanded) owns `conv{i}.weight` `[out, in, k_time, k_freq]`,
/// `conv{i}.bias`, and `conv{i}.bn.{weight,bias,running_mean,running_var}`
/// all `[out]`, plus an optional scalar `conv{i}.bn.eps`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<String, Tensor>,
}

pub(crate) const BN_PARTS: [&str; 4] = ["bn.weight", "bn.bias", "bn.running_mean", "bn.running_var"];

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.tensors.keys().map(String::as_str)
    }

    pub(crate) fn require(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::MissingTensor(format!("no tensor named {name:?}")))?;
        if t.shape != shape {
            return Err(Error::shape(name, format!("{shape:?}"), format!("{:?}", t.shape)));
        }
        Ok(t)
    }

    /// Checks every tensor `spec` needs before any inference runs.
    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        let shapes = spec.unit_shapes()?;
        let mut conv = 0;
        for (unit, input) in spec.units().zip(&shapes) {
            if unit.kind != LayerKind::ConvBnRelu {
                continue;
            }
            let p = format!("conv{conv}");
            self.require(
                &format!("{p}.weight"),
                &[unit.filters, input.channels, unit.kernel.0, unit.kernel.1],
            )?;
            self.require(&format!("{p}.bias"), &[unit.filters])?;
            for part in BN_PARTS {
                self.require(&format!("{p}.{part}"), &[unit.filters])?;
            }
            let var = &self.tensors[&format!("{p}.bn.running_var")];
            if let Some(v) = var.data.iter().find(|v| !(**v >= 0.0)) {
                return Err(Error::Config(format!("{p}.bn.running_var holds {v}")));
            }
            if let Some(eps) = self.tensors.get(&format!("{p}.bn.eps")) {
                if eps.data.len() != 1 || !(eps.data[0] > 0.0) {
                    return Err(Error::shape(
                        format!("{p}.bn.eps"),
                        "one positive value",
                        format!("{:?}", eps.data),
                    ));
                }
            }
            conv += 1;
        }
        Ok(())
    }

    /// He-initialized weights with randomized batch-norm statistics.
    pub fn random(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.unit_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = WeightStore::new();
        let mut conv = 0;
        for (unit, input) in spec.units().zip(&shapes) {
            if unit.kind != LayerKind::ConvBnRelu {
                continue;
            }
            let p = format!("conv{conv}");
            let fan_in = input.channels * unit.kernel.0 * unit.kernel.1;
            let he = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt()).unwrap();
            let small = Normal::new(0.0f32, 0.05).unwrap();
            let n = unit.filters;
            let shape = vec![n, input.channels, unit.kernel.0, unit.kernel.1];
            let count: usize = shape.iter().product();
            let w = (0..count).map(|_| he.sample(&mut rng)).collect();
            store.insert(format!("{p}.weight"), Tensor { shape, data: w });
            let mut vec_of = |f: &mut dyn FnMut(&mut ChaCha8Rng) -> f32| Tensor {
                shape: vec![n],
                data: (0..n).map(|_| f(&mut rng)).collect(),
            };
            let bias = vec_of(&mut |r| small.sample(r));
            let gamma = vec_of(&mut |r| r.random_range(0.8..1.2));
            let beta = vec_of(&mut |r| small.sample(r));
            let mean = vec_of(&mut |r| small.sample(r));
            let var = vec_of(&mut |r| r.random_range(0.5..1.5));
            store.insert(format!("{p}.bias"), bias);
            store.insert(format!("{p}.bn.weight"), gamma);
            store.insert(format!("{p}.bn.bias"), beta);
            store.insert(format!("{p}.bn.running_mean"), mean);
            store.insert(format!("{p}.bn.running_var"), var);
            conv += 1;
        }
        Ok(store)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(MAGIC);
        w.u32(self.tensors.len() as u32);
        for (name, t) in &self.tensors {
            w.str16(name)?;
            let rank = u8::try_from(t.shape.len())
                .map_err(|_| Error::Format(format!("{name}: rank {} too large", t.shape.len())))?;
            w.u8(rank);
            for &d in &t.shape {
                let d = u32::try_from(d).map_err(|_| Error::Format(format!("{name}: dimension {d} too large")))?;
                w.u32(d);
            }
            w.f32s(&t.data);
        }
        Ok(w.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, MAGIC)?;
        let count = r.u32("tensor count")?;
        let mut store = WeightStore::new();
        for i in 0..count {
            let name = r.str16(&format!("name of tensor {i}"))?;
            let rank = r.u8(&format!("rank of {name}"))? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32(&format!("shape of {name}"))? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("{name}: shape {shape:?} overflows")))?;
            let data = r.f32s(n, &name).map_err(|_| Error::TruncatedTensor(name.clone()))?;
            if store.tensors.insert(name.clone(), Tensor { shape, data }).is_some() {
                return Err(Error::Format(format!("duplicate tensor {name:?}")));
            }
        }
        r.finish("CPRW1")?;
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

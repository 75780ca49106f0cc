use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Named parameter tensors, iterated in name order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<S: Scalar> {
    map: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { map: BTreeMap::new() }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.map
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<S>) {
        self.map.insert(name.into(), t);
    }

    /// Replaces an existing tensor, keeping its shape.
    pub fn set(&mut self, name: &str, t: Tensor<S>) -> Result<()> {
        let old = self.get(name)?;
        if old.shape() != t.shape() {
            return Err(Error::ShapeMismatch {
                op: "param set",
                lhs: old.shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
        self.map.insert(name.to_string(), t);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<S>)> {
        self.map.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.map.values().map(|t| t.numel()).sum()
    }

    /// Same values with gradient tracking switched off.
    pub fn frozen(&self) -> Self {
        Self {
            map: self.map.iter().map(|(k, v)| (k.clone(), v.detach())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.map.values().all(|t| t.data().iter().all(|v| v.is_finite()))
    }
}

/// Seeded parameter initialization helpers.
pub(crate) struct Init<'a, S: Scalar> {
    pub store: &'a mut ParamStore<S>,
    pub rng: &'a mut ChaCha8Rng,
}

impl<S: Scalar> Init<'_, S> {
    fn uniform(&mut self, n: usize, bound: f64) -> Vec<S> {
        (0..n).map(|_| S::lit(self.rng.gen_range(-bound..bound))).collect()
    }

    fn put(&mut self, name: String, data: Vec<S>, shape: &[usize]) -> Result<()> {
        self.store.insert(name, Tensor::param(data, shape)?);
        Ok(())
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], v: f64) -> Result<()> {
        let n = shape.iter().product();
        self.put(name.to_string(), vec![S::lit(v); n], shape)
    }

    /// `[fin, fout]` weight plus `[fout]` bias, uniform in `±1/√fin`.
    pub fn linear(&mut self, name: &str, fin: usize, fout: usize, bias: bool) -> Result<()> {
        let b = 1.0 / (fin as f64).sqrt();
        let w = self.uniform(fin * fout, b);
        self.put(format!("{name}.w"), w, &[fin, fout])?;
        if bias {
            let bb = self.uniform(fout, b);
            self.put(format!("{name}.b"), bb, &[fout])?;
        }
        Ok(())
    }

    pub fn conv1d(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Result<()> {
        let b = 1.0 / ((cin * k) as f64).sqrt();
        let w = self.uniform(cout * cin * k, b);
        self.put(format!("{name}.w"), w, &[cout, cin, k])?;
        let bb = self.uniform(cout, b);
        self.put(format!("{name}.b"), bb, &[cout])
    }

    pub fn conv2d(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Result<()> {
        let b = 1.0 / ((cin * k * k) as f64).sqrt();
        let w = self.uniform(cout * cin * k * k, b);
        self.put(format!("{name}.w"), w, &[cout, cin, k, k])?;
        let bb = self.uniform(cout, b);
        self.put(format!("{name}.b"), bb, &[cout])
    }

    pub fn embedding(&mut self, name: &str, vocab: usize, dim: usize) -> Result<()> {
        let sd = 1.0 / (dim as f64).sqrt();
        let w = (0..vocab * dim)
            .map(|_| S::lit(sd * self.rng.sample::<f64, _>(StandardNormal)))
            .collect();
        self.put(name.to_string(), w, &[vocab, dim])
    }

    pub fn norm(&mut self, name: &str, dim: usize) -> Result<()> {
        self.constant(&format!("{name}.g"), &[dim], 1.0)?;
        self.constant(&format!("{name}.b"), &[dim], 0.0)
    }
}

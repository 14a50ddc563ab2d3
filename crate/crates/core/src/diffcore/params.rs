use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Seeded generator used for every stochastic choice in the crate.
pub type SeededRng = SplitMix64;

/// Derives an independent stream from a run seed, so that e.g. weight
/// initialisation and batch shuffling never share a sequence.
pub fn rng_for(seed: u64, stream: u64) -> SeededRng {
    let mut mix = SplitMix64::seed_from_u64(stream);
    SplitMix64::seed_from_u64(seed ^ mix.random::<u64>())
}

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub gradient: Tensor,
    pub frozen: bool,
}

/// Named, ordered collection of trainable tensors.
///
/// Insertion order is stable and is the order used by checkpoints and by the
/// optimizer, which keeps runs deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.params.len());
        let gradient = Tensor::zeros(value.shape());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            value,
            gradient,
            frozen: false,
        });
        Ok(id)
    }

    /// Adds a parameter drawn uniformly from `[-s, s]` with `s = 1/sqrt(fan_in)`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut SeededRng,
    ) -> Result<ParamId> {
        let scale = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
        self.add(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// Freezes (or unfreezes) every parameter whose name starts with `prefix`.
    pub fn set_frozen_prefix(&mut self, prefix: &str, frozen: bool) -> usize {
        let mut n = 0;
        for p in self
            .params
            .iter_mut()
            .filter(|p| p.name.starts_with(prefix))
        {
            p.frozen = frozen;
            n += 1;
        }
        n
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.gradient.data_mut().fill(0.0);
        }
    }

    /// Adds `grad` into the stored gradient of `id`; frozen parameters ignore it.
    pub fn accumulate(&mut self, id: ParamId, grad: &[f64]) {
        let p = &mut self.params[id.0];
        if p.frozen {
            return;
        }
        for (g, d) in p.gradient.data_mut().iter_mut().zip(grad) {
            *g += d;
        }
    }

    /// Replaces the value of an existing parameter, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::Dimension {
                op: "set_value",
                left: p.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }

    /// Copies values by name from `other`; every parameter of `self` whose
    /// name starts with `prefix` must be present there with the same shape.
    pub fn load_from(&mut self, other: &ParamStore, prefix: &str) -> Result<usize> {
        let mut n = 0;
        for i in 0..self.params.len() {
            if !self.params[i].name.starts_with(prefix) {
                continue;
            }
            let name = self.params[i].name.clone();
            let src = other
                .find(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {name}")))?;
            self.set_value(ParamId(i), other.value(src).clone())?;
            n += 1;
        }
        Ok(n)
    }

    /// A new store holding clones of the parameters whose names start with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        let mut out = ParamStore::new();
        for p in self.params.iter().filter(|p| p.name.starts_with(prefix)) {
            out.add(p.name.clone(), p.value.clone())
                .expect("names are unique in the source store");
        }
        out
    }
}

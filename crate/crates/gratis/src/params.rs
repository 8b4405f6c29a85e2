//! Named parameter registry shared by every learnable module.
//!
//! Parameters live outside any tape as plain tensors with a persistent
//! gradient buffer. A [`Bound`] map ties registry entries to tape leaves for
//! one forward pass; after `backward`, [`Bound::accumulate`] folds the tape
//! gradients back into the registry.

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("duplicate parameter name '{0}'")]
    Duplicate(String),
    #[error("unknown parameter '{0}'")]
    Unknown(String),
    #[error("parameter '{name}' has shape {actual:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
}

struct Entry {
    value: Tensor,
    grad: Vec<f64>,
}

/// Registry of uniquely named learnable tensors.
#[derive(Default)]
pub struct Params {
    entries: IndexMap<String, Entry>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<(), ParamError> {
        if self.entries.contains_key(name) {
            return Err(ParamError::Duplicate(name.to_string()));
        }
        let n = value.numel();
        self.entries.insert(
            name.to_string(),
            Entry {
                value,
                grad: vec![0.0; n],
            },
        );
        Ok(())
    }

    /// Insert with Glorot-style uniform init.
    pub fn insert_init(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), ParamError> {
        let fan: usize = shape.iter().sum();
        let bound = (6.0 / fan.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert(name, Tensor::new(shape, data).expect("consistent init shape"))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, ParamError> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| ParamError::Unknown(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, ParamError> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.value)
            .ok_or_else(|| ParamError::Unknown(name.to_string()))
    }

    pub fn grad(&self, name: &str) -> Result<&[f64], ParamError> {
        self.entries
            .get(name)
            .map(|e| e.grad.as_slice())
            .ok_or_else(|| ParamError::Unknown(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn add_grad(&mut self, name: &str, g: &[f64]) -> Result<(), ParamError> {
        let e = self
            .entries
            .get_mut(name)
            .ok_or_else(|| ParamError::Unknown(name.to_string()))?;
        for (a, b) in e.grad.iter_mut().zip(g) {
            *a += b;
        }
        Ok(())
    }
}

/// Tape leaves bound to registry entries for one forward pass.
#[derive(Default)]
pub struct Bound {
    map: IndexMap<String, Var>,
}

impl Bound {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fetch (or create) the tape leaf for a registry entry.
    pub fn var(
        &mut self,
        tape: &mut Tape,
        params: &Params,
        name: &str,
    ) -> Result<Var, ParamError> {
        if let Some(&v) = self.map.get(name) {
            return Ok(v);
        }
        let t = params.get(name)?.clone().with_grad();
        let v = tape.leaf(t);
        self.map.insert(name.to_string(), v);
        Ok(v)
    }

    /// Fold tape gradients into the registry (accumulating).
    pub fn accumulate(&self, tape: &Tape, params: &mut Params) -> Result<(), ParamError> {
        for (name, &v) in &self.map {
            if let Some(g) = tape.grad(v) {
                params.add_grad(name, g)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn names_are_unique() {
        let mut p = Params::new();
        p.insert("w", Tensor::zeros(vec![2, 2])).unwrap();
        assert!(matches!(
            p.insert("w", Tensor::zeros(vec![2, 2])),
            Err(ParamError::Duplicate(_))
        ));
    }

    #[test]
    fn bound_accumulates_grads() {
        let mut p = Params::new();
        p.insert("x", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let mut bound = Bound::new();
        let x = bound.var(&mut tape, &p, "x").unwrap();
        let y = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(y);
        tape.backward(loss).unwrap();
        bound.accumulate(&tape, &mut p).unwrap();
        assert_eq!(p.grad("x").unwrap(), &[2.0, 4.0]);
        // second pass accumulates on top
        bound.accumulate(&tape, &mut p).unwrap();
        assert_eq!(p.grad("x").unwrap(), &[4.0, 8.0]);
        p.zero_grad();
        assert_eq!(p.grad("x").unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let mut a = Params::new();
        let mut b = Params::new();
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        a.insert_init("w", vec![3, 4], &mut r1).unwrap();
        b.insert_init("w", vec![3, 4], &mut r2).unwrap();
        assert_eq!(a.get("w").unwrap().data, b.get("w").unwrap().data);
    }
}

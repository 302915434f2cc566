use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::error::{GmemError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor, trainable: bool) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
            trainable,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
    }
}

/// An ordered, named collection of parameters. Order is insertion order and
/// is part of every serialized format.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

/// Tape handles for every parameter of a store, in store order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn push(&mut self, param: Parameter) -> ParamId {
        self.params.push(param);
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.params.iter_mut().for_each(|p| p.trainable = trainable);
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Puts every parameter on the tape: trainable ones as differentiable
    /// leaves, frozen ones as constants.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                let v = if p.trainable {
                    tape.leaf(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                };
                tape.label(v, p.name.clone());
                v
            })
            .collect();
        Bound { vars }
    }

    /// Adds `scale · ∂loss/∂θ` into each trainable parameter's `grad`.
    pub fn accumulate_grads(&mut self, bound: &Bound, grads: &Gradients, scale: f64) -> Result<()> {
        for (p, &v) in self.params.iter_mut().zip(&bound.vars) {
            if !p.trainable {
                continue;
            }
            if let Some(g) = grads.get(v) {
                p.grad.add_assign(&g.scale(scale))?;
            }
        }
        Ok(())
    }

    /// Copies values from `other` by name; shapes must agree.
    pub fn load_values(&mut self, other: &[(String, Tensor)]) -> Result<()> {
        for p in self.params.iter_mut() {
            let Some((_, t)) = other.iter().find(|(n, _)| *n == p.name) else {
                return Err(GmemError::Format(format!("missing tensor {}", p.name)));
            };
            if t.shape() != p.value.shape() {
                return Err(GmemError::Format(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.clone();
        }
        Ok(())
    }
}

/// I.i.d. normal entries with the given standard deviation.
pub fn normal_tensor(rng: &mut impl Rng, shape: &[usize], std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("std must be finite and non-negative");
    let n = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape/data agree")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frozen_parameters_are_bound_as_constants() {
        let mut store = ParamStore::new();
        let w = store.push(Parameter::new("w", Tensor::eye(2), false));
        let b = store.push(Parameter::new("b", Tensor::zeros(&[1, 2]), true));
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(Tensor::full(&[1, 2], 2.0));
        let y = tape.affine(x, bound.var(w), bound.var(b)).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        store.accumulate_grads(&bound, &grads, 1.0).unwrap();
        assert_eq!(store.get(w).grad, Tensor::zeros(&[2, 2]));
        assert_eq!(store.get(b).grad.data(), &[1.0, 1.0]);
    }

    #[test]
    fn normal_tensor_is_seed_deterministic() {
        let a = normal_tensor(&mut ChaCha8Rng::seed_from_u64(7), &[3, 4], 0.02);
        let b = normal_tensor(&mut ChaCha8Rng::seed_from_u64(7), &[3, 4], 0.02);
        assert_eq!(a, b);
    }
}

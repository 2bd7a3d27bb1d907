use rand::Rng;

use super::{numel, DiffTensor, Scalar, Shape, Tape, Var};
use crate::{Error, Result};

/// Named learnable array.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Shape,
    pub values: Vec<T>,
}

/// Ordered collection of parameters. Order is insertion order and is part of
/// the checkpoint format.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

/// Per-parameter gradients, aligned with [`ParamStore`] order. `None` marks a
/// parameter the loss did not reach.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Shape, values: Vec<T>) -> Result<usize> {
        let name = name.into();
        if values.len() != numel(&shape) {
            return Err(Error::Shape(format!(
                "parameter {name}: {} values for shape {shape:?}",
                values.len()
            )));
        }
        if self.index_of(&name).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate parameter {name}")));
        }
        self.params.push(Param { name, shape, values });
        Ok(self.params.len() - 1)
    }

    /// Uniform in `[-b, b]` with `b = sqrt(6 / fan_in)`, scaled by `gain`.
    pub fn push_he_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: Shape,
        fan_in: usize,
        gain: f64,
        rng: &mut R,
    ) -> Result<usize> {
        let bound = gain * (6.0 / fan_in.max(1) as f64).sqrt();
        let values = (0..numel(&shape))
            .map(|_| T::of(rng.random_range(-bound..=bound)))
            .collect();
        self.push(name, shape, values)
    }

    pub fn push_zeros(&mut self, name: impl Into<String>, shape: Shape) -> Result<usize> {
        self.push(name, shape, vec![T::zero(); numel(&shape)])
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalars.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn get(&self, i: usize) -> &Param<T> {
        &self.params[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Copies every parameter onto `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.bind_with(tape, true)
    }

    /// Like [`ParamStore::bind`]; frozen parameters skip weight gradients.
    pub fn bind_with(&self, tape: &mut Tape<T>, requires_grad: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                tape.leaf(DiffTensor {
                    shape: p.shape,
                    values: p.values.clone(),
                    grad: None,
                    requires_grad,
                })
            })
            .collect()
    }

    /// Reads the gradients of vars returned by [`ParamStore::bind`].
    pub fn gradients(&self, tape: &Tape<T>, vars: &[Var]) -> Result<Gradients<T>> {
        if vars.len() != self.params.len() {
            return Err(Error::Graph(format!(
                "{} bound variables for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        Ok(Gradients {
            grads: vars.iter().map(|&v| tape.grad(v).map(<[T]>::to_vec)).collect(),
        })
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape,
                    values: p.values.iter().map(|v| U::of(v.f64())).collect(),
                })
                .collect(),
        }
    }
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Gradients {
            grads: store
                .params()
                .iter()
                .map(|p| Some(vec![T::zero(); p.values.len()]))
                .collect(),
        }
    }

    /// Adds `other` elementwise. A missing entry on either side stays missing
    /// only when both are missing.
    pub fn accumulate(&mut self, other: &Gradients<T>) -> Result<()> {
        if self.grads.len() != other.grads.len() {
            return Err(Error::Shape("gradient sets have different lengths".into()));
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            match (a.as_mut(), b) {
                (_, None) => {}
                (None, Some(b)) => *a = Some(b.clone()),
                (Some(a), Some(b)) => {
                    if a.len() != b.len() {
                        return Err(Error::Shape("gradient lengths differ".into()));
                    }
                    a.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
                }
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for g in self.grads.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }
}

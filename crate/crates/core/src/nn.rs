//! Named parameters and the small dense layers shared by the model modules.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Result, TassError};
use crate::numcore::{Tape, Tensor, Var};

/// Ordered, named parameter tensors. Order is insertion order and defines the
/// layout of gradient and optimizer-state vectors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Rebuilds a store with the same names from replacement tensors.
    pub fn with_tensors(&self, tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != self.len() {
            return Err(TassError::Contract("parameter count mismatch".into()));
        }
        let mut out = ParamStore::new();
        for ((name, old), new) in self.iter().zip(tensors) {
            if old.shape() != new.shape() {
                return Err(TassError::Dimension {
                    op: "with_tensors",
                    lhs: old.shape().to_vec(),
                    rhs: new.shape().to_vec(),
                });
            }
            out.insert(name, new);
        }
        Ok(out)
    }

    /// Records every parameter on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        self.bind_where(tape, |_| true)
    }

    /// Records only the parameters whose name satisfies `keep`.
    pub fn bind_where(&self, tape: &mut Tape, keep: impl Fn(&str) -> bool) -> Bound {
        let vars = self
            .iter()
            .map(|(name, t)| keep(name).then(|| tape.param(t.clone())))
            .collect();
        Bound {
            vars,
            index: self.index.clone(),
        }
    }

    /// Names already-recorded vars, one per parameter in store order.
    pub fn attach(&self, vars: &[Var]) -> Result<Bound> {
        if vars.len() != self.len() {
            return Err(TassError::Contract(format!(
                "{} vars supplied for {} parameters",
                vars.len(),
                self.len()
            )));
        }
        Ok(Bound {
            vars: vars.iter().copied().map(Some).collect(),
            index: self.index.clone(),
        })
    }

    /// Adds a `Linear` layer `prefix.weight` (`d_in×d_out`) and `prefix.bias`
    /// (`1×d_out`), uniform in `±1/√d_in`.
    pub fn add_linear<R: Rng + ?Sized>(&mut self, prefix: &str, d_in: usize, d_out: usize, rng: &mut R) {
        let bound = 1.0 / (d_in as f64).sqrt();
        self.insert(format!("{prefix}.weight"), Tensor::uniform(&[d_in, d_out], bound, rng));
        self.insert(format!("{prefix}.bias"), Tensor::uniform(&[1, d_out], bound, rng));
    }

    /// Adds a bias-free projection `prefix` (`d_in×d_out`).
    pub fn add_matrix<R: Rng + ?Sized>(&mut self, name: &str, d_in: usize, d_out: usize, rng: &mut R) {
        let bound = 1.0 / (d_in as f64).sqrt();
        self.insert(name, Tensor::uniform(&[d_in, d_out], bound, rng));
    }
}

/// Parameters recorded on one tape.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Option<Var>>,
    index: HashMap<String, usize>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .and_then(|&i| self.vars[i])
            .ok_or_else(|| TassError::Contract(format!("parameter {name} is not bound")))
    }

    /// Gradient of every parameter, in store order; unbound or unreached
    /// parameters get zeros.
    pub fn grads(&self, tape: &Tape, store: &ParamStore) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(store.tensors())
            .map(|(v, t)| {
                v.and_then(|v| tape.grad(v).cloned())
                    .unwrap_or_else(|| Tensor::zeros(t.shape()))
            })
            .collect()
    }
}

/// `x · W + b` for a `1×d_in` row.
pub fn linear(tape: &mut Tape, params: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let w = params.var(&format!("{prefix}.weight"))?;
    let b = params.var(&format!("{prefix}.bias"))?;
    let xw = tape.matmul(x, w)?;
    tape.add(xw, b)
}

/// Two linear layers with a tanh in between.
pub fn mlp(tape: &mut Tape, params: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let hidden = linear(tape, params, &format!("{prefix}.hidden"), x)?;
    let hidden = tape.tanh(hidden)?;
    linear(tape, params, &format!("{prefix}.out"), hidden)
}

pub fn add_mlp<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, d_in: usize, d_hidden: usize, d_out: usize, rng: &mut R) {
    store.add_linear(&format!("{prefix}.hidden"), d_in, d_hidden, rng);
    store.add_linear(&format!("{prefix}.out"), d_hidden, d_out, rng);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_init_bounds_and_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        store.add_linear("fc", 16, 3, &mut rng);
        assert_eq!(store.names(), &["fc.weight".to_string(), "fc.bias".to_string()]);
        assert!(store.tensors().iter().all(|t| t.data().iter().all(|v| v.abs() <= 0.25)));
        assert_eq!(store.count(), 16 * 3 + 3);
    }

    #[test]
    fn unbound_parameters_get_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        store.add_linear("a", 2, 2, &mut rng);
        store.add_linear("b", 2, 2, &mut rng);
        let mut tape = Tape::new();
        let bound = store.bind_where(&mut tape, |n| n.starts_with("a."));
        assert!(bound.var("b.weight").is_err());
        let x = tape.leaf(Tensor::row(vec![1.0, 2.0]));
        let y = linear(&mut tape, &bound, "a", x).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        let grads = bound.grads(&tape, &store);
        assert_eq!(grads[1].data(), &[1.0, 1.0]);
        assert!(grads[2].data().iter().all(|&g| g == 0.0));
    }
}

use std::collections::BTreeMap;

use crate::autodiff::tape::{NodeId, Tape};
use crate::autodiff::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

use super::adam::AdamState;

/// All trainable tensors of a model plus the optimizer state, keyed by name.
/// Name order is sorted and stable, which keeps updates and checkpoints
/// deterministic.
#[derive(Clone, Debug)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
    pub adam: AdamState,
}

impl ParamStore {
    pub fn new(adam: AdamState) -> Self {
        Self {
            tensors: BTreeMap::new(),
            adam,
        }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        assert!(
            self.tensors.insert(name.to_string(), tensor).is_none(),
            "duplicate parameter `{name}`"
        );
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn coord_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }
}

/// Parameters bound onto a tape as gradient-accumulating leaves.
pub struct BoundParams {
    nodes: BTreeMap<String, NodeId>,
}

impl BoundParams {
    /// Bind every parameter of `store` onto `tape`.
    pub fn bind(tape: &mut Tape, store: &ParamStore) -> Self {
        let mut nodes = BTreeMap::new();
        for (name, tensor) in store.iter() {
            nodes.insert(name.to_string(), tape.leaf(tensor.clone()));
        }
        Self { nodes }
    }

    pub fn node(&self, name: &str) -> NodeId {
        *self
            .nodes
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` not bound"))
    }

    /// Gradients accumulated on the bound leaves after a backward pass.
    /// Parameters untouched by the loss get zero gradients.
    pub fn collect_grads(&self, tape: &Tape, store: &ParamStore) -> BTreeMap<String, Tensor> {
        let mut grads = BTreeMap::new();
        for (name, &id) in &self.nodes {
            let g = match tape.grad(id) {
                Some(g) => g.clone(),
                None => {
                    let t = store.get(name);
                    Tensor::zeros(t.rows(), t.cols())
                }
            };
            grads.insert(name.clone(), g);
        }
        grads
    }
}

/// Scale gradients in place so their global norm does not exceed `max_norm`.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: Scalar) -> Scalar {
    let total: Scalar = grads
        .values()
        .map(|g| g.data().iter().map(|v| v * v).sum::<Scalar>())
        .sum::<Scalar>()
        .sqrt();
    if total > max_norm && total > 0.0 {
        let scale = max_norm / total;
        for g in grads.values_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    total
}

/// Check that every gradient is finite; names the offender otherwise.
pub fn check_finite_grads(grads: &BTreeMap<String, Tensor>) -> Result<()> {
    for (name, g) in grads {
        if !g.is_finite() {
            return Err(Error::NanGradient(name.clone()));
        }
    }
    Ok(())
}

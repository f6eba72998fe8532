//! Named trainable parameters and their binding onto a graph.

use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::graph::{Graph, NodeId};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a parameter; stable across the life of the set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Vec<T>,
}

/// Ordered collection of named trainable tensors. Iteration follows insertion
/// order, which keeps optimizer updates and checkpoints deterministic.
pub struct ParameterSet<T> {
    entries: Vec<Param<T>>,
    by_name: HashMap<String, usize>,
    grads_ready: bool,
}

impl<T: Scalar> Default for ParameterSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            by_name: HashMap::new(),
            grads_ready: false,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(TensorError::Usage(format!("duplicate parameter '{}'", name)));
        }
        let id = ParamId(self.entries.len());
        self.by_name.insert(name.clone(), id.0);
        let grad = vec![T::zero(); value.numel()];
        self.entries.push(Param { name, value, grad });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.entries[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.entries[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param<T>)> {
        self.entries
            .iter_mut()
            .enumerate()
            .map(|(i, p)| (ParamId(i), p))
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.entries {
            p.grad.fill(T::zero());
        }
        self.grads_ready = false;
    }

    /// Whether a backward sweep has populated gradients since the last
    /// `zero_grad`.
    pub fn grads_ready(&self) -> bool {
        self.grads_ready
    }

    /// Mark gradients as populated. `harvest` does this automatically; call
    /// directly only when filling the gradient buffers by hand.
    pub fn mark_grads_ready(&mut self) {
        self.grads_ready = true;
    }

    /// Record all parameters as gradient-carrying leaves on a fresh graph.
    pub fn bind(&self, graph: &mut Graph<T>) -> GraphBinding {
        let nodes = self
            .entries
            .iter()
            .map(|p| graph.leaf_grad(p.value.clone()))
            .collect();
        GraphBinding { nodes }
    }

    /// Pull gradients off a graph after `backward`, adding them to the
    /// parameter gradient buffers.
    pub fn harvest(&mut self, graph: &Graph<T>, binding: &GraphBinding) {
        for (i, p) in self.entries.iter_mut().enumerate() {
            if let Some(g) = graph.grad(binding.nodes[i]) {
                for (dst, &src) in p.grad.iter_mut().zip(g) {
                    *dst = *dst + src;
                }
            }
        }
        self.grads_ready = true;
    }

    /// Convert the whole set element-by-element (f32 ↔ f64).
    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        let mut out = ParameterSet::new();
        for p in &self.entries {
            out.add(p.name.clone(), p.value.cast()).expect("names unique");
        }
        out
    }
}

/// Parameter-to-node mapping for one graph.
pub struct GraphBinding {
    nodes: Vec<NodeId>,
}

impl GraphBinding {
    pub fn node(&self, id: ParamId) -> NodeId {
        self.nodes[id.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut ps = ParameterSet::<f32>::new();
        ps.add("w", Tensor::zeros(&[2])).unwrap();
        assert!(ps.add("w", Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn insertion_order_is_stable() {
        let mut ps = ParameterSet::<f32>::new();
        for name in ["c", "a", "b"] {
            ps.add(name, Tensor::zeros(&[1])).unwrap();
        }
        let names: Vec<_> = ps.iter().map(|(_, p)| p.name.as_str()).collect();
        assert_eq!(names, ["c", "a", "b"]);
    }

    #[test]
    fn harvest_accumulates_from_graph() {
        let mut ps = ParameterSet::<f64>::new();
        let w = ps.add("w", Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let mut g = Graph::new();
        let bind = ps.bind(&mut g);
        let s = g.sum_all(bind.node(w)).unwrap();
        g.backward(s).unwrap();
        ps.harvest(&g, &bind);
        assert!(ps.grads_ready());
        assert_eq!(ps.get(w).grad, vec![1.0, 1.0, 1.0]);
    }
}

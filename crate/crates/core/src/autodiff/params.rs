use std::collections::HashMap;

use super::{AutodiffError, Gradients, NodeId, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named parameter tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers (or replaces) a parameter.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        if let Some(&id) = self.index.get(&name) {
            self.tensors[id.0] = value;
            return id;
        }
        let id = ParamId(self.names.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(value);
        id
    }

    pub fn id(&self, name: &str) -> Result<ParamId, AutodiffError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|id| &self.tensors[id.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Total scalar count of parameters whose name starts with `prefix`.
    pub fn count_with_prefix(&self, prefix: &str) -> usize {
        self.iter()
            .filter(|(_, n, _)| n.starts_with(prefix))
            .map(|(_, _, t)| t.len())
            .sum()
    }

    pub fn total_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Lazily places parameters on a tape; parameters never bound receive no
/// gradient.
pub struct Binding<'p> {
    params: &'p ParamSet,
    nodes: Vec<Option<NodeId>>,
    trainable: bool,
}

impl<'p> Binding<'p> {
    /// With `trainable = false` parameters enter the tape as constants.
    pub fn new(params: &'p ParamSet, trainable: bool) -> Self {
        Binding {
            params,
            nodes: vec![None; params.len()],
            trainable,
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn node(&mut self, tape: &mut Tape, id: ParamId) -> NodeId {
        if let Some(n) = self.nodes[id.0] {
            return n;
        }
        let value = self.params.get(id).clone();
        let n = if self.trainable {
            tape.param(value)
        } else {
            tape.constant(value)
        };
        self.nodes[id.0] = Some(n);
        n
    }

    pub fn named(&mut self, tape: &mut Tape, name: &str) -> Result<NodeId, AutodiffError> {
        let id = self.params.id(name)?;
        Ok(self.node(tape, id))
    }

    /// Per-parameter gradients; `None` for parameters that were never bound.
    pub fn collect(&self, grads: &mut Gradients) -> Vec<Option<Tensor>> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                n.map(|node| {
                    grads
                        .take(node)
                        .unwrap_or_else(|| Tensor::zeros(self.params.get(ParamId(i)).shape()))
                })
            })
            .collect()
    }
}

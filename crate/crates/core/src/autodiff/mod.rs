//! Minimal reverse-mode automatic differentiation over a static graph.
//!
//! The three networks in this project have fixed topology, so the engine
//! keeps things simple: a [`Graph`] is an append-only list of nodes whose
//! inputs always precede them, [`Graph::forward`] evaluates into a [`Tape`]
//! of retained activations, and [`Graph::backward`] walks the tape in
//! reverse. Parameters live outside the graph in a [`NetworkParams`] store
//! keyed by name, so the same graph can be evaluated under different
//! parameter values (which is what the meta-learning inner step needs).

mod adam;
mod gradcheck;
mod ops;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use ops::Op;
pub use tensor::Tensor;

use crate::error::{Error, Result};
use crate::rng::Rng;
use std::collections::BTreeMap;

/// Index of a node within its graph.
pub type NodeId = usize;

/// Named parameter store. BTreeMap keeps iteration order deterministic.
pub type NetworkParams = BTreeMap<String, Tensor>;

/// Gradients keyed the same way as the parameter store.
pub type Gradients = BTreeMap<String, Tensor>;

/// Total number of scalars across all parameters.
pub fn param_count(params: &NetworkParams) -> usize {
    params.values().map(|t| t.len()).sum()
}

#[derive(Debug, Clone)]
enum Node {
    /// Leaf bound at forward time.
    Input { name: String, shape: Vec<usize> },
    /// Leaf read from the parameter store.
    Param { name: String, shape: Vec<usize> },
    /// Interior operation; operand ids precede this node.
    Op(Op),
}

/// Static computation graph.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    shapes: Vec<Vec<usize>>,
    param_names: Vec<String>,
    input_names: Vec<String>,
}

/// Retained activations from one forward pass.
pub struct Tape {
    values: Vec<Tensor>,
}

impl Tape {
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id]
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.shapes[id]
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    /// Declare an input leaf with a fixed shape.
    pub fn input(&mut self, name: &str, shape: &[usize]) -> NodeId {
        self.input_names.push(name.to_string());
        self.push(Node::Input { name: name.to_string(), shape: shape.to_vec() }, shape.to_vec())
    }

    /// Declare a parameter leaf with a fixed shape.
    pub fn param(&mut self, name: &str, shape: &[usize]) -> NodeId {
        self.param_names.push(name.to_string());
        self.push(Node::Param { name: name.to_string(), shape: shape.to_vec() }, shape.to_vec())
    }

    /// Append an operation node; the output shape is inferred at build time
    /// so malformed graphs fail at construction, not at run time.
    pub fn op(&mut self, op: Op) -> Result<NodeId> {
        for &input in op.inputs().iter() {
            if input >= self.nodes.len() {
                return Err(Error::shape(format!(
                    "op references node {input} before it exists"
                )));
            }
        }
        let shape = op.infer_shape(&self.shapes)?;
        Ok(self.push(Node::Op(op), shape))
    }

    fn push(&mut self, node: Node, shape: Vec<usize>) -> NodeId {
        self.nodes.push(node);
        self.shapes.push(shape);
        self.nodes.len() - 1
    }

    /// Evaluate every node given parameter values and input bindings.
    /// Fails on unbound inputs, missing parameters, or shape mismatches.
    pub fn forward(
        &self,
        params: &NetworkParams,
        inputs: &BTreeMap<String, Tensor>,
    ) -> Result<Tape> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let value = match node {
                Node::Input { name, shape } => {
                    let bound = inputs
                        .get(name)
                        .ok_or_else(|| Error::Param(format!("unbound input '{name}'")))?;
                    if bound.shape() != shape.as_slice() {
                        return Err(Error::shape(format!(
                            "input '{name}' has shape {:?}, graph expects {:?}",
                            bound.shape(),
                            shape
                        )));
                    }
                    bound.clone()
                }
                Node::Param { name, shape } => {
                    let bound = params
                        .get(name)
                        .ok_or_else(|| Error::Param(format!("missing parameter '{name}'")))?;
                    if bound.shape() != shape.as_slice() {
                        return Err(Error::shape(format!(
                            "parameter '{name}' has shape {:?}, graph expects {:?}",
                            bound.shape(),
                            shape
                        )));
                    }
                    bound.clone()
                }
                Node::Op(op) => op.forward(&values, &self.shapes[id])?,
            };
            values.push(value);
        }
        Ok(Tape { values })
    }

    /// Reverse sweep from a scalar loss node. Returns the gradient of the
    /// loss with respect to every parameter; input gradients are retrievable
    /// from the returned per-node buffer via [`BackwardResult::input_grad`].
    pub fn backward(&self, tape: &Tape, loss: NodeId) -> Result<BackwardResult> {
        if tape.values.len() != self.nodes.len() {
            return Err(Error::Param("backward called before forward".into()));
        }
        if tape.values[loss].len() != 1 {
            return Err(Error::shape(format!(
                "loss node must be scalar, has shape {:?}",
                self.shapes[loss]
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Tensor::from_vec(vec![1], vec![1.0])?);

        for id in (0..=loss).rev() {
            let upstream = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            if let Node::Op(op) = &self.nodes[id] {
                op.backward(&tape.values, &upstream, |input_id, contribution| {
                    match &mut grads[input_id] {
                        Some(existing) => existing.add_assign(&contribution),
                        slot @ None => *slot = Some(contribution),
                    }
                })?;
            }
            grads[id] = Some(upstream);
        }

        let mut by_param = Gradients::new();
        let mut by_input = BTreeMap::new();
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Param { name, shape } => {
                    let g = match grads[id].take() {
                        Some(g) => g,
                        None => Tensor::zeros(shape),
                    };
                    by_param.insert(name.clone(), g);
                }
                Node::Input { name, shape } => {
                    let g = match grads[id].take() {
                        Some(g) => g,
                        None => Tensor::zeros(shape),
                    };
                    by_input.insert(name.clone(), g);
                }
                Node::Op(_) => {}
            }
        }
        Ok(BackwardResult { by_param, by_input })
    }
}

/// Gradients from one backward sweep.
pub struct BackwardResult {
    pub by_param: Gradients,
    by_input: BTreeMap<String, Tensor>,
}

impl BackwardResult {
    /// Gradient of the loss with respect to a named input.
    pub fn input_grad(&self, name: &str) -> Option<&Tensor> {
        self.by_input.get(name)
    }
}

/// Kaiming-uniform initialization scaled by fan-in, with the leaky-ReLU gain
/// for slope 0.2. Biases and tensors named `*final*` start at zero so
/// residual networks begin as the identity.
pub fn init_params(shapes: &[(String, Vec<usize>, usize)], rng: &mut Rng) -> NetworkParams {
    let mut params = NetworkParams::new();
    for (name, shape, fan_in) in shapes {
        let len: usize = shape.iter().product();
        let mut data = vec![0.0; len];
        if *fan_in > 0 {
            let gain = (2.0 / (1.0 + 0.2f64 * 0.2)).sqrt();
            let bound = gain * (3.0 / *fan_in as f64).sqrt();
            for v in &mut data {
                *v = rng.range(-bound, bound);
            }
        }
        params.insert(name.clone(), Tensor::from_vec(shape.clone(), data).expect("finite init"));
    }
    params
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bind(pairs: &[(&str, Tensor)]) -> BTreeMap<String, Tensor> {
        pairs.iter().map(|(n, t)| (n.to_string(), t.clone())).collect()
    }

    #[test]
    fn identity_graph_returns_input() {
        let mut g = Graph::new();
        let x = g.input("x", &[2, 2, 2]);
        let mut rng = Rng::new(1);
        let t = Tensor::randn(&[2, 2, 2], &mut rng);
        let tape = g.forward(&NetworkParams::new(), &bind(&[("x", t.clone())])).unwrap();
        assert_eq!(tape.value(x).data(), t.data());
    }

    #[test]
    fn zero_weight_network_outputs_bias() {
        // y = x * w + b with w = 0: output equals b for any x.
        let mut g = Graph::new();
        let x = g.input("x", &[3]);
        let w = g.param("w", &[3, 3]);
        let b = g.param("b", &[3]);
        let y = g.op(Op::Dense { input: x, weight: w, bias: b }).unwrap();

        let mut params = NetworkParams::new();
        params.insert("w".into(), Tensor::zeros(&[3, 3]));
        params.insert("b".into(), Tensor::from_vec(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
        let mut rng = Rng::new(2);
        for _ in 0..3 {
            let t = Tensor::randn(&[3], &mut rng);
            let tape = g.forward(&params, &bind(&[("x", t)])).unwrap();
            assert_eq!(tape.value(y).data(), &[1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn unbound_input_is_an_error() {
        let mut g = Graph::new();
        g.input("x", &[2]);
        assert!(g.forward(&NetworkParams::new(), &BTreeMap::new()).is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut g = Graph::new();
        g.input("x", &[2]);
        let bad = Tensor::zeros(&[3]);
        assert!(g.forward(&NetworkParams::new(), &bind(&[("x", bad)])).is_err());
    }

    #[test]
    fn backward_of_square_is_two_x() {
        // loss = mean((x - 0)^2) over a single element = x^2.
        let mut g = Graph::new();
        let x = g.input("x", &[1]);
        let target = g.input("t", &[1]);
        let loss = g.op(Op::MseLoss { pred: x, target }).unwrap();
        let tape = g
            .forward(
                &NetworkParams::new(),
                &bind(&[
                    ("x", Tensor::from_vec(vec![1], vec![3.0]).unwrap()),
                    ("t", Tensor::zeros(&[1])),
                ]),
            )
            .unwrap();
        assert_eq!(tape.value(loss).data()[0], 9.0);
        let back = g.backward(&tape, loss).unwrap();
        assert_relative_eq!(back.input_grad("x").unwrap().data()[0], 6.0);
    }

    #[test]
    fn unused_parameter_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.input("x", &[4]);
        let _unused = g.param("unused", &[2]);
        let t = g.input("t", &[4]);
        let loss = g.op(Op::MaeLoss { pred: x, target: t }).unwrap();
        let mut params = NetworkParams::new();
        params.insert("unused".into(), Tensor::zeros(&[2]));
        let mut rng = Rng::new(3);
        let tape = g
            .forward(
                &params,
                &bind(&[("x", Tensor::randn(&[4], &mut rng)), ("t", Tensor::randn(&[4], &mut rng))]),
            )
            .unwrap();
        let back = g.backward(&tape, loss).unwrap();
        assert!(back.by_param["unused"].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_referentially_transparent() {
        let mut g = Graph::new();
        let x = g.input("x", &[2, 4, 4]);
        let w = g.param("w", &[3, 2, 3, 3]);
        let b = g.param("b", &[3]);
        let c = g.op(Op::Conv2d { input: x, weight: w, bias: b }).unwrap();
        let y = g.op(Op::LeakyRelu { input: c, slope: 0.2 }).unwrap();

        let mut rng = Rng::new(4);
        let mut params = NetworkParams::new();
        params.insert("w".into(), Tensor::randn(&[3, 2, 3, 3], &mut rng));
        params.insert("b".into(), Tensor::randn(&[3], &mut rng));
        let t = Tensor::randn(&[2, 4, 4], &mut rng);
        let a = g.forward(&params, &bind(&[("x", t.clone())])).unwrap();
        let bpass = g.forward(&params, &bind(&[("x", t)])).unwrap();
        let lhs: Vec<u64> = a.value(y).data().iter().map(|v| v.to_bits()).collect();
        let rhs: Vec<u64> = bpass.value(y).data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn param_count_is_stable() {
        let mut rng = Rng::new(5);
        let shapes = vec![
            ("a".to_string(), vec![4, 3, 3, 3], 27),
            ("b".to_string(), vec![4], 0),
        ];
        let p1 = init_params(&shapes, &mut rng);
        let mut rng2 = Rng::new(5);
        let p2 = init_params(&shapes, &mut rng2);
        assert_eq!(param_count(&p1), 4 * 27 + 4);
        assert_eq!(p1, p2);
    }
}

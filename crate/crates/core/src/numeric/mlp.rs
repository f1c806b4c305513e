//! Dense multilayer perceptrons with leaky-relu hidden layers.

use serde::{Deserialize, Serialize};

use super::graph::{leaky_relu, sigmoid, DiffGraph, NodeId};
use super::{Matrix, SeededRng};
use crate::{Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Activation applied after the last layer. Hidden layers are always leaky-relu.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputActivation {
    Identity,
    LeakyRelu,
    Sigmoid,
}

/// One dense layer: `y = x·weight + bias`, weight stored `in × out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Layer>,
    slope: f64,
    output: OutputActivation,
}

/// Ordered access to the trainable tensors of a model.
pub trait Parameters {
    fn tensors(&self) -> Vec<&Matrix>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;
}

impl MlpParams {
    /// Layer sizes `dims = [in, h1, ..., out]`, uniform initialisation in
    /// `±1/sqrt(fan_in)` for weights and biases.
    pub fn new(dims: &[usize], output: OutputActivation, slope: f64, rng: &mut SeededRng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least an input and output size");
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let weight = (0..w[0] * w[1]).map(|_| rng.uniform_range(-bound, bound)).collect();
                let bias = (0..w[1]).map(|_| rng.uniform_range(-bound, bound)).collect();
                Layer {
                    weight: Matrix::from_vec(w[0], w[1], weight).expect("sized"),
                    bias: Matrix::from_vec(1, w[1], bias).expect("sized"),
                }
            })
            .collect();
        Self {
            layers,
            slope,
            output,
        }
    }

    pub fn from_layers(layers: Vec<Layer>, output: OutputActivation, slope: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("an MLP needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != (1, l.out_dim()) {
                return Err(Error::Shape(format!(
                    "layer {i}: bias {:?} does not match {} outputs",
                    l.bias.shape(),
                    l.out_dim()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {} emits {} values but layer {} expects {}",
                    i,
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self {
            layers,
            slope,
            output,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// `[in, h1, ..., out]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.in_dim()];
        d.extend(self.layers.iter().map(Layer::out_dim));
        d
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Same architecture with the given tensors (ordered as [`Parameters::tensors`]).
    pub fn with_tensors(&self, tensors: Vec<Matrix>) -> Result<Self> {
        if tensors.len() != 2 * self.layers.len() {
            return Err(Error::Shape(format!(
                "{} tensors for a {}-layer network",
                tensors.len(),
                self.layers.len()
            )));
        }
        let mut it = tensors.into_iter();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let weight = it.next().expect("counted");
            let bias = it.next().expect("counted");
            if weight.shape() != l.weight.shape() || bias.shape() != l.bias.shape() {
                return Err(Error::Shape(format!("layer {i}: tensor shapes differ")));
            }
            layers.push(Layer { weight, bias });
        }
        Ok(Self {
            layers,
            slope: self.slope,
            output: self.output,
        })
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.in_dim() {
            return Err(Error::Shape(format!(
                "layer 0 expects {} inputs, got {cols}",
                self.in_dim()
            )));
        }
        Ok(())
    }

    fn activate(&self, index: usize, m: &Matrix) -> Matrix {
        let last = index + 1 == self.layers.len();
        match (last, self.output) {
            (false, _) | (true, OutputActivation::LeakyRelu) => m.map(|v| leaky_relu(v, self.slope)),
            (true, OutputActivation::Identity) => m.clone(),
            (true, OutputActivation::Sigmoid) => m.map(sigmoid),
        }
    }

    /// Unrecorded forward pass.
    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input.cols())?;
        let mut h: Option<Matrix> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let x = h.as_ref().unwrap_or(input);
            let z = x
                .matmul(&layer.weight)
                .and_then(|xw| xw.add_row(&layer.bias))
                .map_err(|e| Error::Shape(format!("layer {i}: {e}")))?;
            h = Some(self.activate(i, &z));
        }
        Ok(h.expect("at least one layer"))
    }

    /// Registers every tensor as a leaf of `graph`.
    pub fn bind(&self, graph: &mut DiffGraph) -> BoundMlp {
        let mut nodes = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            nodes.push(graph.leaf(l.weight.clone()));
            nodes.push(graph.leaf(l.bias.clone()));
        }
        BoundMlp {
            nodes,
            dims: self.dims(),
            slope: self.slope,
            output: self.output,
        }
    }

    /// Sum of all parameter values, for cheap change detection in tests.
    pub fn checksum(&self) -> f64 {
        self.tensors().iter().map(|t| t.sum()).sum()
    }
}

impl Parameters for MlpParams {
    fn tensors(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

/// An [`MlpParams`] whose tensors live as leaves in a [`DiffGraph`].
#[derive(Clone, Debug)]
pub struct BoundMlp {
    nodes: Vec<NodeId>,
    dims: Vec<usize>,
    slope: f64,
    output: OutputActivation,
}

impl BoundMlp {
    /// Leaf nodes ordered `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn forward(&self, graph: &mut DiffGraph, input: NodeId) -> Result<NodeId> {
        let cols = graph.shape(input).1;
        if cols != self.dims[0] {
            return Err(Error::Shape(format!(
                "layer 0 expects {} inputs, got {cols}",
                self.dims[0]
            )));
        }
        let n_layers = self.nodes.len() / 2;
        let mut h = input;
        for i in 0..n_layers {
            let z = graph
                .affine(h, self.nodes[2 * i], self.nodes[2 * i + 1])
                .map_err(|e| Error::Shape(format!("layer {i}: {e}")))?;
            let last = i + 1 == n_layers;
            h = match (last, self.output) {
                (false, _) | (true, OutputActivation::LeakyRelu) => graph.leaky_relu(z, self.slope)?,
                (true, OutputActivation::Identity) => z,
                (true, OutputActivation::Sigmoid) => graph.sigmoid(z)?,
            };
        }
        Ok(h)
    }
}

/// A forward pass recorded into its own graph.
#[derive(Clone, Debug)]
pub struct RecordedForward {
    pub graph: DiffGraph,
    pub input: NodeId,
    pub output: NodeId,
    pub params: BoundMlp,
}

pub fn forward_mlp(
    params: &MlpParams,
    input: &Matrix,
    record: bool,
) -> Result<(Matrix, Option<RecordedForward>)> {
    if !record {
        return Ok((params.forward(input)?, None));
    }
    params.check_input(input.cols())?;
    let mut graph = DiffGraph::new();
    let bound = params.bind(&mut graph);
    let x = graph.leaf(input.clone());
    let out = bound.forward(&mut graph, x)?;
    let value = graph.value(out).clone();
    Ok((
        value,
        Some(RecordedForward {
            graph,
            input: x,
            output: out,
            params: bound,
        }),
    ))
}

/// Gradient of a scalar loss with respect to the tensors of each bound network,
/// ordered like [`Parameters::tensors`].
pub fn grad_wrt_params(
    graph: &mut DiffGraph,
    loss: NodeId,
    nets: &[&BoundMlp],
) -> Result<Vec<Vec<Matrix>>> {
    let wrt: Vec<NodeId> = nets.iter().flat_map(|n| n.params().iter().copied()).collect();
    let grads = graph.grad(loss, &wrt)?;
    let mut it = grads.into_iter();
    let out = nets
        .iter()
        .map(|n| {
            n.params()
                .iter()
                .map(|_| graph.value(it.next().expect("one gradient per parameter")).clone())
                .collect()
        })
        .collect::<Vec<Vec<Matrix>>>();
    if out.iter().flatten().any(|m| !m.is_finite()) {
        return Err(Error::Divergence {
            stage: "backward".into(),
            step: 0,
            detail: "non-finite parameter gradient".into(),
            trace: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_applies_leaky_relu() {
        let layer = Layer {
            weight: Matrix::identity(2),
            bias: Matrix::zeros(1, 2),
        };
        let p = MlpParams::from_layers(vec![layer], OutputActivation::LeakyRelu, 0.01).unwrap();
        let out = p.forward(&Matrix::row_vector(&[1.0, -1.0])).unwrap();
        assert_eq!(out.as_slice(), &[1.0, -0.01]);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut rng = SeededRng::new(0);
        let p = MlpParams::new(&[2, 4, 1], OutputActivation::Identity, 0.01, &mut rng);
        let zeros: Vec<Matrix> = p.tensors().iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect();
        let p = p.with_tensors(zeros).unwrap();
        let out = p.forward(&Matrix::from_rows(&[vec![3.0, -7.0], vec![0.2, 0.1]]).unwrap()).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_error_names_layer() {
        let mut rng = SeededRng::new(0);
        let p = MlpParams::new(&[3, 4, 1], OutputActivation::Identity, 0.01, &mut rng);
        let err = p.forward(&Matrix::zeros(2, 2)).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
        let bad = vec![
            Layer { weight: Matrix::zeros(2, 3), bias: Matrix::zeros(1, 3) },
            Layer { weight: Matrix::zeros(4, 1), bias: Matrix::zeros(1, 1) },
        ];
        let err = MlpParams::from_layers(bad, OutputActivation::Identity, 0.01).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
    }

    #[test]
    fn recorded_forward_matches_plain_bit_exactly() {
        let mut rng = SeededRng::new(5);
        let p = MlpParams::new(&[3, 16, 16, 2], OutputActivation::Sigmoid, 0.01, &mut rng);
        let x = Matrix::from_vec(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let (plain, none) = forward_mlp(&p, &x, false).unwrap();
        assert!(none.is_none());
        let (rec, graph) = forward_mlp(&p, &x, true).unwrap();
        let mut graph = graph.unwrap();
        assert_eq!(plain, rec);
        graph.graph.replay().unwrap();
        assert_eq!(graph.graph.value(graph.output), &plain);
    }
}

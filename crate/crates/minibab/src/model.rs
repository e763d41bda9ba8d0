//! Feed-forward ReLU networks: representation, loading, and evaluation.
//!
//! A network is a sequence of fully-connected layers, each applying an affine
//! transformation followed by either a ReLU or the identity. Networks are
//! immutable after construction and safe to share across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation applied after a layer's affine transformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// One fully-connected layer. `weights` is row-major: row count is the layer
/// output width, each row's length is the layer input width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn output_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.first().map_or(0, |row| row.len())
    }
}

/// Identifies a ReLU neuron: `layer` is the 1-based index of the layer in the
/// network, `neuron` the 1-based index within that layer. Only layers with
/// ReLU activation house phase variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: usize,
    pub neuron: usize,
}

impl NeuronId {
    pub fn new(layer: usize, neuron: usize) -> Self {
        NeuronId { layer, neuron }
    }
}

impl std::fmt::Display for NeuronId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.layer, self.neuron)
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    layers: Vec<Layer>,
}

/// A validated feed-forward network. Layer dimensions chain, all entries are
/// finite, and the ordered list of ReLU neuron ids is precomputed.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    relu_ids: Vec<NeuronId>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Network {
    /// Builds a network from layers, checking the chaining and finiteness
    /// invariants.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Parse("network has no layers".into()));
        }
        let mut prev_out = None;
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.is_empty() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {} has no rows",
                    i + 1
                )));
            }
            let in_dim = layer.weights[0].len();
            if in_dim == 0 {
                return Err(Error::DimensionMismatch(format!(
                    "layer {} has empty rows",
                    i + 1
                )));
            }
            for row in &layer.weights {
                if row.len() != in_dim {
                    return Err(Error::DimensionMismatch(format!(
                        "layer {} has ragged weight rows",
                        i + 1
                    )));
                }
                for &w in row {
                    if !w.is_finite() {
                        return Err(Error::NonFinite(format!("weight in layer {}", i + 1)));
                    }
                }
            }
            if layer.bias.len() != layer.weights.len() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {}: {} bias entries for {} rows",
                    i + 1,
                    layer.bias.len(),
                    layer.weights.len()
                )));
            }
            for &b in &layer.bias {
                if !b.is_finite() {
                    return Err(Error::NonFinite(format!("bias in layer {}", i + 1)));
                }
            }
            if let Some(prev) = prev_out {
                if in_dim != prev {
                    return Err(Error::DimensionMismatch(format!(
                        "layer {} expects {} inputs after a layer with {} outputs",
                        i + 1,
                        in_dim,
                        prev
                    )));
                }
            }
            prev_out = Some(layer.output_dim());
        }
        let mut relu_ids = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            if layer.activation == Activation::Relu {
                for j in 0..layer.output_dim() {
                    relu_ids.push(NeuronId::new(i + 1, j + 1));
                }
            }
        }
        Ok(Network { layers, relu_ids })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .last()
            .expect("networks have at least one layer")
            .output_dim()
    }

    /// Ordered lexicographic (layer, neuron) enumeration of all ReLU neurons.
    pub fn relu_neurons(&self) -> &[NeuronId] {
        &self.relu_ids
    }

    pub fn relu_count(&self) -> usize {
        self.relu_ids.len()
    }

    /// Position of a ReLU neuron in the `relu_neurons` order.
    pub fn relu_position(&self, id: NeuronId) -> Option<usize> {
        self.relu_ids.binary_search(&id).ok()
    }

    pub fn relu_id(&self, position: usize) -> NeuronId {
        self.relu_ids[position]
    }

    /// Computes f(x) layer by layer.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut next = Vec::with_capacity(layer.output_dim());
            for (row, &b) in layer.weights.iter().zip(&layer.bias) {
                let mut z = b;
                for (w, v) in row.iter().zip(&cur) {
                    z += w * v;
                }
                next.push(match layer.activation {
                    Activation::Relu => z.max(0.0),
                    Activation::Linear => z,
                });
            }
            cur = next;
        }
        Ok(cur)
    }

    pub fn to_json(&self) -> String {
        let doc = NetworkDoc {
            layers: self.layers.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("network serialization cannot fail")
    }
}

/// Parses a network document (see the JSON schema in the guide) and validates
/// it.
pub fn load_network(text: &str) -> Result<Network> {
    let doc: NetworkDoc =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("network document: {e}")))?;
    Network::new(doc.layers)
}

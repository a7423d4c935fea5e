//! Feed-forward Q-network evaluator for externally trained weights.
//!
//! Weights file (JSON):
//! ```json
//! { "layer_sizes": [2, 128, 4],
//!   "weights": [[...128×2 row-major...], [...4×128...]],
//!   "biases": [[...128...], [...4...]],
//!   "activation": "relu" }
//! ```
//! Hidden layers use the activation; the output layer is linear and the
//! action is its argmax.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::grid::Action;
use crate::error::{Error, Result};
use crate::policy::{greedy_action, GridPolicy};
use crate::state::{Cell, StateVector};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpPolicyWeights {
    pub layer_sizes: Vec<usize>,
    /// Per layer, an `out × in` matrix in row-major order.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpPolicyWeights {
    /// All-zero network with the given layer sizes.
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        let weights = layer_sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        MlpPolicyWeights { layer_sizes: layer_sizes.to_vec(), weights, biases, activation: Activation::Relu }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = &self.layer_sizes;
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::ShapeMismatch(format!("layer sizes {sizes:?} need at least two positive entries")));
        }
        let layers = sizes.len() - 1;
        if self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::ShapeMismatch(format!(
                "{layers} layers but {} weight and {} bias arrays",
                self.weights.len(),
                self.biases.len()
            )));
        }
        for k in 0..layers {
            if self.weights[k].len() != sizes[k] * sizes[k + 1] {
                return Err(Error::ShapeMismatch(format!(
                    "layer {k} weights have {} entries, expected {}×{}",
                    self.weights[k].len(),
                    sizes[k + 1],
                    sizes[k]
                )));
            }
            if self.biases[k].len() != sizes[k + 1] {
                return Err(Error::ShapeMismatch(format!(
                    "layer {k} biases have {} entries, expected {}",
                    self.biases[k].len(),
                    sizes[k + 1]
                )));
            }
        }
        let finite = self.weights.iter().chain(&self.biases).flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("network parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: MlpPolicyWeights = serde_json::from_str(text)?;
        w.validate()?;
        Ok(w)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MlpPolicyWeights::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize")
    }

    /// Output-layer values for one input.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let layers = self.layer_sizes.len() - 1;
        let mut x = input.to_vec();
        for k in 0..layers {
            let (n_in, n_out) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
            let w = &self.weights[k];
            let mut y: Vec<f64> = (0..n_out)
                .map(|i| self.biases[k][i] + (0..n_in).map(|j| w[i * n_in + j] * x[j]).sum::<f64>())
                .collect();
            if k + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            x = y;
        }
        Ok(x)
    }
}

/// Greedy action index of the network at `s`.
pub fn evaluate_mlp(weights: &MlpPolicyWeights, s: &StateVector) -> Result<usize> {
    Ok(greedy_action(&weights.forward(s.coords())?))
}

/// A grid policy backed by a Q-network with four outputs, fed the raw
/// `(row, col)` of the cell.
#[derive(Clone, Debug)]
pub struct MlpGridPolicy {
    weights: MlpPolicyWeights,
}

impl MlpGridPolicy {
    pub fn new(weights: MlpPolicyWeights) -> Result<Self> {
        weights.validate()?;
        if weights.input_dim() != 2 || weights.output_dim() != Action::ALL.len() {
            return Err(Error::ShapeMismatch(format!(
                "grid policies need a 2-input, 4-output network, got {:?}",
                weights.layer_sizes
            )));
        }
        Ok(MlpGridPolicy { weights })
    }
}

impl GridPolicy for MlpGridPolicy {
    fn action(&self, cell: Cell) -> Action {
        let i = evaluate_mlp(&self.weights, &StateVector::from_cell(cell)).expect("validated shape");
        Action::from_index(i).expect("four outputs")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_picks_action_zero() {
        let w = MlpPolicyWeights::zeros(&[2, 128, 256, 128, 4]);
        w.validate().unwrap();
        assert_eq!(evaluate_mlp(&w, &StateVector::new(&[3.0, -1.0])).unwrap(), 0);
    }

    #[test]
    fn identity_layer_selects_largest_coordinate() {
        let w = MlpPolicyWeights {
            layer_sizes: vec![3, 3],
            weights: vec![vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]],
            biases: vec![vec![0.0; 3]],
            activation: Activation::Relu,
        };
        assert_eq!(evaluate_mlp(&w, &StateVector::new(&[0.1, 0.7, -2.0])).unwrap(), 1);
        assert_eq!(evaluate_mlp(&w, &StateVector::new(&[-1.0, -3.0, -2.0])).unwrap(), 0);
    }

    #[test]
    fn two_layer_net_matches_hand_arithmetic() {
        // Hidden: h = relu(A x + a); out = B h + b.
        let a = [[1.0, -1.0], [0.5, 2.0], [-1.0, 0.25]];
        let a0 = [0.0, -0.5, 1.0];
        let b = [[1.0, 0.0, -1.0], [0.0, 1.0, 1.0]];
        let b0 = [0.1, -0.1];
        let w = MlpPolicyWeights {
            layer_sizes: vec![2, 3, 2],
            weights: vec![a.iter().flatten().copied().collect(), b.iter().flatten().copied().collect()],
            biases: vec![a0.to_vec(), b0.to_vec()],
            activation: Activation::Relu,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let h: Vec<f64> = (0..3).map(|i| (a[i][0] * x[0] + a[i][1] * x[1] + a0[i]).max(0.0)).collect();
            let o: Vec<f64> = (0..2).map(|i| b[i][0] * h[0] + b[i][1] * h[1] + b[i][2] * h[2] + b0[i]).collect();
            let expect = if o[1] > o[0] { 1 } else { 0 };
            assert_eq!(evaluate_mlp(&w, &StateVector::new(&x)).unwrap(), expect);
        }
    }

    #[test]
    fn shape_errors() {
        let w = MlpPolicyWeights::zeros(&[2, 4]);
        assert!(matches!(evaluate_mlp(&w, &StateVector::new(&[1.0])), Err(Error::ShapeMismatch(_))));
        let mut bad = MlpPolicyWeights::zeros(&[2, 3, 4]);
        bad.weights[1].pop();
        assert!(matches!(bad.validate(), Err(Error::ShapeMismatch(_))));
        assert!(MlpPolicyWeights::from_json(r#"{"layer_sizes":[2],"weights":[],"biases":[]}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let w = MlpPolicyWeights::zeros(&[2, 5, 4]);
        assert_eq!(MlpPolicyWeights::from_json(&w.to_json()).unwrap(), w);
    }
}

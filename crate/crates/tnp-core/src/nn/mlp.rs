//! Fully connected networks with ReLU hidden activations and identity output.
//!
//! The activation policy is fixed: every layer but the last applies ReLU, the
//! final layer is linear. Networks bind their parameters onto a [`Tape`] so a
//! single forward implementation serves training and prediction alike.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::array::RealArray;
use super::tape::{Tape, Var};
use super::NnError;

/// One affine layer: weights are `in x out`, the bias is a `1 x out` row.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: RealArray,
    pub b: RealArray,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.cols()
    }
}

/// A multilayer perceptron. ReLU on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    seed: u64,
}

/// Tape handles for one network's parameters, in layer order.
pub struct MlpVars {
    pub layers: Vec<(Var, Var)>,
}

impl Mlp {
    /// Xavier-uniform initialization: weights drawn from
    /// `U[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, biases zero.
    /// `dims` lists the input width followed by every layer width; the same
    /// seed always reproduces the same network bit for bit.
    pub fn xavier(dims: &[usize], seed: u64) -> Self {
        assert!(dims.len() >= 2, "an MLP needs an input and an output width");
        assert!(dims.iter().all(|&d| d > 0), "layer widths must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            layers.push(Layer {
                w: RealArray::new(fan_in, fan_out, data),
                b: RealArray::zeros(1, fan_out),
            });
        }
        Self { layers, seed }
    }

    /// An all-zero network with the given widths.
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "an MLP needs an input and an output width");
        let layers = dims
            .windows(2)
            .map(|pair| Layer {
                w: RealArray::zeros(pair[0], pair[1]),
                b: RealArray::zeros(1, pair[1]),
            })
            .collect();
        Self { layers, seed: 0 }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Seed the parameters were initialized from (zero for hand-built nets).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Total number of scalar parameters.
    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Registers all parameters as tape leaves, in layer order (weights before
    /// bias within a layer).
    pub fn bind(&self, tape: &mut Tape) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .map(|l| (tape.leaf(l.w.clone()), tape.leaf(l.b.clone())))
            .collect();
        MlpVars { layers }
    }

    /// Forward pass for a batch `x` of shape `n x input_dim` already on the
    /// tape. Panics on width mismatch; use [`mlp_forward`] for a checked entry
    /// point.
    pub fn forward(&self, tape: &mut Tape, vars: &MlpVars, x: Var) -> Var {
        assert_eq!(
            tape.value(x).cols(),
            self.input_dim(),
            "forward: input width {} does not match network input {}",
            tape.value(x).cols(),
            self.input_dim()
        );
        let mut h = x;
        let last = vars.layers.len() - 1;
        for (i, &(w, b)) in vars.layers.iter().enumerate() {
            let z = tape.matmul(h, w);
            let z = tape.add_row(z, b);
            h = if i < last { tape.relu(z) } else { z };
        }
        h
    }

    /// Appends all parameters to `out` in canonical order.
    pub fn append_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.w.data());
            out.extend_from_slice(l.b.data());
        }
    }

    /// Reads parameters back from a flat slice; returns the number consumed.
    pub fn read_flat(&mut self, flat: &[f64]) -> usize {
        let mut offset = 0;
        for l in &mut self.layers {
            let wlen = l.w.len();
            l.w.data_mut().copy_from_slice(&flat[offset..offset + wlen]);
            offset += wlen;
            let blen = l.b.len();
            l.b.data_mut().copy_from_slice(&flat[offset..offset + blen]);
            offset += blen;
        }
        offset
    }
}

/// Checked batched forward pass: validates the input width, records the
/// network on `tape`, and returns the output handle together with the
/// parameter bindings.
pub fn mlp_forward(net: &Mlp, x: &RealArray, tape: &mut Tape) -> Result<(Var, MlpVars), NnError> {
    if x.cols() != net.input_dim() {
        return Err(NnError::ShapeMismatch {
            op: "mlp_forward",
            expected: format!("n x {}", net.input_dim()),
            got: format!("{} x {}", x.rows(), x.cols()),
        });
    }
    let vars = net.bind(tape);
    let input = tape.leaf(x.clone());
    let out = net.forward(tape, &vars, input);
    Ok((out, vars))
}

/// Convenience evaluation returning the output value for a batch of inputs.
pub fn mlp_eval(net: &Mlp, x: &RealArray) -> Result<RealArray, NnError> {
    let mut tape = Tape::new();
    let (out, _) = mlp_forward(net, x, &mut tape)?;
    Ok(tape.value(out).clone())
}

/// Portable JSON image of an [`Mlp`]: layer weights row-major, plus the
/// originating seed.
#[derive(Debug, Serialize, Deserialize)]
pub struct MlpDoc {
    pub layers: Vec<LayerDoc>,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LayerDoc {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(rename = "in")]
    pub in_dim: usize,
    pub out: usize,
}

impl From<&Mlp> for MlpDoc {
    fn from(net: &Mlp) -> Self {
        MlpDoc {
            layers: net
                .layers
                .iter()
                .map(|l| LayerDoc {
                    w: l.w.data().to_vec(),
                    b: l.b.data().to_vec(),
                    in_dim: l.input_dim(),
                    out: l.output_dim(),
                })
                .collect(),
            seed: net.seed,
        }
    }
}

impl TryFrom<MlpDoc> for Mlp {
    type Error = NnError;

    fn try_from(doc: MlpDoc) -> Result<Self, NnError> {
        if doc.layers.is_empty() {
            return Err(NnError::InvalidCheckpoint("network has no layers".into()));
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        let mut prev_out: Option<usize> = None;
        for (i, l) in doc.layers.into_iter().enumerate() {
            if l.w.len() != l.in_dim * l.out || l.b.len() != l.out || l.in_dim == 0 || l.out == 0 {
                return Err(NnError::InvalidCheckpoint(format!(
                    "layer {i} has inconsistent dimensions"
                )));
            }
            if let Some(prev) = prev_out {
                if prev != l.in_dim {
                    return Err(NnError::InvalidCheckpoint(format!(
                        "layer {i} input {} does not match previous output {prev}",
                        l.in_dim
                    )));
                }
            }
            prev_out = Some(l.out);
            layers.push(Layer {
                w: RealArray::new(l.in_dim, l.out, l.w),
                b: RealArray::new(1, l.out, l.b),
            });
        }
        Ok(Mlp {
            layers,
            seed: doc.seed,
        })
    }
}
